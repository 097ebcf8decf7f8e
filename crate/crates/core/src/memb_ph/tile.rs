//! Per-bucket cascade of tile filters.
//!
//! Level `i` permutes the bucket universe `[v]` with its own stored permutation, splits the
//! permuted range into `m_i` equal tiles and keeps one slot per tile. A slot is an occupied flag
//! plus the within-tile index of the single value it holds, so `(level, tile, index)` determines
//! the stored value exactly.

use crate::bits::{mask, PackedArray};
use crate::error::{Error, Result};
use crate::perm::StoredPerm;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileFilterBucket {
    v_bits: u32,
    /// `lg m_i` per level.
    tile_bits: Vec<u32>,
    /// Per level: `m_i` cells of `(index << 1) | occupied`.
    slots: Vec<PackedArray>,
}

impl TileFilterBucket {
    pub fn new(v_bits: u32, tile_bits: &[u32]) -> Self {
        let slots = tile_bits
            .iter()
            .map(|&tb| {
                debug_assert!(tb <= v_bits);
                PackedArray::new(1 << tb, 1 + v_bits - tb)
            })
            .collect();
        Self {
            v_bits,
            tile_bits: tile_bits.to_vec(),
            slots,
        }
    }

    pub fn levels(&self) -> usize {
        self.tile_bits.len()
    }

    pub fn tiles_at(&self, level: usize) -> u64 {
        1 << self.tile_bits[level]
    }

    /// Distinct codes this bucket can issue: the sum of the tile counts.
    pub fn code_count(&self) -> u64 {
        (0..self.levels()).map(|i| self.tiles_at(i)).sum()
    }

    /// Bucket-local code of a slot.
    pub fn local_code(&self, level: usize, tile: u64) -> u64 {
        (0..level).map(|i| self.tiles_at(i)).sum::<u64>() + tile
    }

    #[inline]
    fn locate(&self, level: usize, q: u64, perm: &StoredPerm) -> (u64, u64) {
        let idx_bits = self.v_bits - self.tile_bits[level];
        let p = perm.apply(q);
        (p >> idx_bits, p & mask(idx_bits))
    }

    fn check(&self, q: u64) -> Result<()> {
        if q > mask(self.v_bits) {
            return Err(Error::OutOfDomain {
                value: q,
                bits: self.v_bits,
            });
        }
        Ok(())
    }

    /// `(level, tile)` holding `q`, if stored.
    pub fn query(&self, q: u64, perms: &[StoredPerm]) -> Option<(usize, u64)> {
        if q > mask(self.v_bits) {
            return None;
        }
        (0..self.levels()).find_map(|i| {
            let (tile, idx) = self.locate(i, q, &perms[i]);
            (self.slots[i].get(tile as usize) == (idx << 1) | 1).then_some((i, tile))
        })
    }

    /// Stores `q` at the first level whose tile is empty; `None` when every level conflicts.
    pub fn insert(&mut self, q: u64, perms: &[StoredPerm]) -> Result<Option<(usize, u64)>> {
        self.check(q)?;
        if self.query(q, perms).is_some() {
            return Err(Error::Duplicate(q));
        }
        for (i, perm) in perms.iter().enumerate().take(self.levels()) {
            let (tile, idx) = self.locate(i, q, perm);
            if self.slots[i].get(tile as usize) & 1 == 0 {
                self.slots[i].set(tile as usize, (idx << 1) | 1);
                return Ok(Some((i, tile)));
            }
        }
        Ok(None)
    }

    pub fn delete(&mut self, q: u64, perms: &[StoredPerm]) -> Result<(usize, u64)> {
        let (level, tile) = self.query(q, perms).ok_or(Error::NotResident(q))?;
        self.slots[level].set(tile as usize, 0);
        Ok((level, tile))
    }

    /// Stored values with their slots.
    pub fn entries<'a>(
        &'a self,
        perms: &'a [StoredPerm],
    ) -> impl Iterator<Item = (u64, usize, u64)> + 'a {
        (0..self.levels()).flat_map(move |i| {
            let idx_bits = self.v_bits - self.tile_bits[i];
            self.slots[i]
                .iter()
                .enumerate()
                .filter(|(_, c)| c & 1 == 1)
                .map(move |(tile, c)| {
                    let p = ((tile as u64) << idx_bits) | (c >> 1);
                    (perms[i].invert(p), i, tile as u64)
                })
        })
    }

    pub fn len(&self) -> usize {
        self.slots
            .iter()
            .map(|s| s.iter().filter(|c| c & 1 == 1).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot_bits(&self) -> u64 {
        self.slots.iter().map(PackedArray::bits).sum()
    }

    pub fn slot_arrays(&self) -> &[PackedArray] {
        &self.slots
    }
}
