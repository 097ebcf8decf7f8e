//! Fixed-capacity exact dictionary on fixed-width keys and values, and a hashcode allocator.
//!
//! [`BaseDict`] is a two-table bucketized cuckoo table (buckets of [`SLOTS`] slots) with a
//! [`STASH`]-entry stash, sized so the tables are at most half full. Lookups probe both candidate
//! buckets and the stash. Inserts search for a displacement path breadth-first over at most
//! [`MAX_BFS_NODES`] slots; if none exists and the stash is full, the table either rehashes with
//! fresh seeds ([`Policy::Rebuild`]) or reports failure without changing anything
//! ([`Policy::NoRebuild`]).

use std::collections::VecDeque;

use rand::RngCore;

use crate::bits::{ceil_log2, keyed_mix, mask, reduce_range, PackedArray};
use crate::error::{Error, Result};
use crate::seed::split;
use crate::space::{FlatWriter, SpaceLedger, SpaceUsage};

pub const SLOTS: usize = 4;
pub const STASH: usize = 4;
pub const MAX_BFS_NODES: usize = 256;
pub const MAX_REBUILD_ATTEMPTS: u32 = 64;
/// Seeds, occupancy and rebuild count.
pub const HEADER_BITS: u64 = 4 * 64;
/// Upper bound on the slots inspected by [`BaseDict::get`].
pub const LOOKUP_PROBES: usize = 2 * SLOTS + STASH;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Rebuild,
    NoRebuild,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Replaced,
    /// The table was rehashed before the key could be placed.
    Rebuilt,
}

#[derive(Clone, Debug)]
pub struct BaseDict {
    key_bits: u32,
    value_bits: u32,
    capacity: u64,
    buckets: usize,
    policy: Policy,
    seeds: [u64; 2],
    len: u64,
    rebuild_count: u64,
    keys: PackedArray,
    values: PackedArray,
    occupied: PackedArray,
}

/// Number of buckets per table for `capacity` keys.
pub fn buckets_for(capacity: u64) -> usize {
    capacity.div_ceil(SLOTS as u64).max(1) as usize
}

/// Total slots (both tables and stash) for `capacity` keys.
pub fn slots_for(capacity: u64) -> usize {
    2 * SLOTS * buckets_for(capacity) + STASH
}

impl BaseDict {
    pub fn new<R: RngCore + ?Sized>(
        key_bits: u32,
        value_bits: u32,
        capacity: u64,
        policy: Policy,
        rng: &mut R,
    ) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParams(
                "dictionary capacity must be >= 1".into(),
            ));
        }
        if key_bits > 64 || value_bits > 64 {
            return Err(Error::InvalidParams(format!(
                "key/value widths {key_bits}/{value_bits} exceed 64"
            )));
        }
        let buckets = buckets_for(capacity);
        let slots = slots_for(capacity);
        Ok(Self {
            key_bits,
            value_bits,
            capacity,
            buckets,
            policy,
            seeds: [rng.next_u64(), rng.next_u64()],
            len: 0,
            rebuild_count: 0,
            keys: PackedArray::new(slots, key_bits),
            values: PackedArray::new(slots, value_bits),
            occupied: PackedArray::new(slots, 1),
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn key_bits(&self) -> u32 {
        self.key_bits
    }

    pub fn value_bits(&self) -> u32 {
        self.value_bits
    }

    pub fn rebuild_count(&self) -> u64 {
        self.rebuild_count
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    #[inline]
    fn bucket_of(&self, table: usize, key: u64) -> usize {
        let h = keyed_mix(key, self.seeds[table], table as u64 + 1);
        reduce_range(h, self.buckets as u64) as usize
    }

    #[inline]
    fn slot_range(&self, table: usize, bucket: usize) -> std::ops::Range<usize> {
        let start = (table * self.buckets + bucket) * SLOTS;
        start..start + SLOTS
    }

    fn stash_range(&self) -> std::ops::Range<usize> {
        let start = 2 * self.buckets * SLOTS;
        start..start + STASH
    }

    #[inline]
    fn is_free(&self, slot: usize) -> bool {
        self.occupied.get(slot) == 0
    }

    /// Table of a non-stash slot.
    #[inline]
    fn table_of(&self, slot: usize) -> usize {
        slot / (self.buckets * SLOTS)
    }

    fn candidate_slots(&self, key: u64) -> impl Iterator<Item = usize> {
        let a = self.slot_range(0, self.bucket_of(0, key));
        let b = self.slot_range(1, self.bucket_of(1, key));
        a.chain(b).chain(self.stash_range())
    }

    fn find(&self, key: u64) -> Option<usize> {
        self.candidate_slots(key)
            .find(|&s| !self.is_free(s) && self.keys.get(s) == key)
    }

    fn check_key(&self, key: u64) -> Result<()> {
        if key > mask(self.key_bits) {
            return Err(Error::OutOfDomain {
                value: key,
                bits: self.key_bits,
            });
        }
        Ok(())
    }

    pub fn get(&self, key: u64) -> Option<u64> {
        if key > mask(self.key_bits) {
            return None;
        }
        self.find(key).map(|s| self.values.get(s))
    }

    pub fn contains(&self, key: u64) -> bool {
        self.get(key).is_some()
    }

    fn put(&mut self, slot: usize, key: u64, value: u64) {
        self.keys.set(slot, key);
        self.values.set(slot, value);
        self.occupied.set(slot, 1);
    }

    fn clear_slot(&mut self, slot: usize) {
        self.keys.set(slot, 0);
        self.values.set(slot, 0);
        self.occupied.set(slot, 0);
    }

    pub fn insert(&mut self, key: u64, value: u64) -> Result<InsertOutcome> {
        self.check_key(key)?;
        if value > mask(self.value_bits) {
            return Err(Error::PayloadTooWide {
                payload: value,
                width: self.value_bits,
            });
        }
        if let Some(s) = self.find(key) {
            self.values.set(s, value);
            return Ok(InsertOutcome::Replaced);
        }
        if self.len >= self.capacity {
            return Err(Error::CapacityExceeded(self.capacity));
        }
        if self.place(key, value) {
            self.len += 1;
            return Ok(InsertOutcome::Inserted);
        }
        match self.policy {
            Policy::NoRebuild => Err(Error::InsertFailed(key)),
            Policy::Rebuild => {
                self.rebuild_with(key, value)?;
                self.len += 1;
                Ok(InsertOutcome::Rebuilt)
            }
        }
    }

    /// Places a key known to be absent; leaves the table untouched on failure.
    fn place(&mut self, key: u64, value: u64) -> bool {
        let roots: Vec<usize> = (0..2)
            .flat_map(|t| self.slot_range(t, self.bucket_of(t, key)))
            .collect();
        if let Some(&s) = roots.iter().find(|&&s| self.is_free(s)) {
            self.put(s, key, value);
            return true;
        }
        if let Some(path) = self.displacement_path(&roots) {
            // path[0] is a root slot, the last entry a free slot; shift keys toward the end.
            for w in path.windows(2).rev() {
                let (from, to) = (w[0], w[1]);
                let (k, v) = (self.keys.get(from), self.values.get(from));
                self.put(to, k, v);
            }
            self.put(path[0], key, value);
            return true;
        }
        if let Some(s) = self.stash_range().find(|&s| self.is_free(s)) {
            self.put(s, key, value);
            return true;
        }
        false
    }

    fn displacement_path(&self, roots: &[usize]) -> Option<Vec<usize>> {
        // (slot, parent node index)
        let mut nodes: Vec<(usize, usize)> = Vec::with_capacity(MAX_BFS_NODES);
        let mut queue = VecDeque::new();
        for &r in roots {
            nodes.push((r, usize::MAX));
            queue.push_back(nodes.len() - 1);
        }
        while let Some(i) = queue.pop_front() {
            let slot = nodes[i].0;
            let key = self.keys.get(slot);
            let other = 1 - self.table_of(slot);
            let alt = self.slot_range(other, self.bucket_of(other, key));
            if let Some(free) = alt.clone().find(|&s| self.is_free(s)) {
                let mut path = vec![free, slot];
                let mut j = nodes[i].1;
                while j != usize::MAX {
                    path.push(nodes[j].0);
                    j = nodes[j].1;
                }
                path.reverse();
                return Some(path);
            }
            for s in alt {
                if nodes.len() >= MAX_BFS_NODES {
                    return None;
                }
                if nodes.iter().any(|&(n, _)| n == s) {
                    continue;
                }
                nodes.push((s, i));
                queue.push_back(nodes.len() - 1);
            }
        }
        None
    }

    fn rebuild_with(&mut self, key: u64, value: u64) -> Result<()> {
        let mut entries: Vec<(u64, u64)> = self.iter().collect();
        entries.push((key, value));
        for _ in 0..MAX_REBUILD_ATTEMPTS {
            self.rebuild_count += 1;
            let base = self.seeds[0] ^ self.seeds[1].rotate_left(32);
            self.seeds = [
                split(base, 2 * self.rebuild_count),
                split(base, 2 * self.rebuild_count + 1),
            ];
            self.occupied.fill(0);
            self.keys.fill(0);
            self.values.fill(0);
            if entries.iter().all(|&(k, v)| self.place(k, v)) {
                return Ok(());
            }
        }
        Err(Error::RebuildFailed(MAX_REBUILD_ATTEMPTS))
    }

    /// Removes `key`, returning its value.
    pub fn remove(&mut self, key: u64) -> Option<u64> {
        if key > mask(self.key_bits) {
            return None;
        }
        let slot = self.find(key)?;
        let value = self.values.get(slot);
        self.clear_slot(slot);
        self.len -= 1;
        self.drain_stash();
        Some(value)
    }

    /// Moves stash entries back into the tables where a candidate bucket has room.
    fn drain_stash(&mut self) {
        for s in self.stash_range() {
            if self.is_free(s) {
                continue;
            }
            let key = self.keys.get(s);
            let target = (0..2)
                .flat_map(|t| self.slot_range(t, self.bucket_of(t, key)))
                .find(|&t| self.is_free(t));
            if let Some(t) = target {
                let v = self.values.get(s);
                self.clear_slot(s);
                self.put(t, key, v);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.occupied.len())
            .filter(|&s| !self.is_free(s))
            .map(|s| (self.keys.get(s), self.values.get(s)))
    }

    /// Entries currently in the stash.
    pub fn stash_len(&self) -> usize {
        self.stash_range().filter(|&s| !self.is_free(s)).count()
    }
}

impl SpaceUsage for BaseDict {
    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.add("header", HEADER_BITS);
        l.add("keys", self.keys.bits());
        l.add("values", self.values.bits());
        l.add("occupied", self.occupied.bits());
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        w.fields([
            (self.seeds[0], 64),
            (self.seeds[1], 64),
            (self.len, 64),
            (self.rebuild_count, 64),
        ]);
        w.packed(&self.keys);
        w.packed(&self.values);
        w.packed(&self.occupied);
    }
}

/// Free list of hashcodes in `[0, m)`: last freed first, then least never used.
#[derive(Clone, Debug)]
pub struct CodeAllocator {
    range: u64,
    next_unused: u64,
    stack_len: u64,
    stack: PackedArray,
    allocated: PackedArray,
}

/// `next_unused` and the stack length.
pub const ALLOCATOR_HEADER_BITS: u64 = 2 * 64;

impl CodeAllocator {
    pub fn new(range: u64) -> Self {
        Self {
            range,
            next_unused: 0,
            stack_len: 0,
            stack: PackedArray::new(range as usize, ceil_log2(range)),
            allocated: PackedArray::new(range as usize, 1),
        }
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    pub fn allocated(&self) -> u64 {
        self.next_unused - self.stack_len
    }

    pub fn free_count(&self) -> u64 {
        self.range - self.allocated()
    }

    pub fn is_allocated(&self, code: u64) -> bool {
        code < self.range && self.allocated.get(code as usize) == 1
    }

    pub fn alloc(&mut self) -> Result<u64> {
        let code = if self.stack_len > 0 {
            self.stack_len -= 1;
            self.stack.get(self.stack_len as usize)
        } else if self.next_unused < self.range {
            self.next_unused += 1;
            self.next_unused - 1
        } else {
            return Err(Error::Exhausted(self.range));
        };
        self.allocated.set(code as usize, 1);
        Ok(code)
    }

    pub fn free(&mut self, code: u64) -> Result<()> {
        if !self.is_allocated(code) {
            return Err(Error::NotAllocated(code));
        }
        self.allocated.set(code as usize, 0);
        self.stack.set(self.stack_len as usize, code);
        self.stack_len += 1;
        Ok(())
    }

    /// Returns every code to the allocator.
    pub fn reset(&mut self) {
        self.next_unused = 0;
        self.stack_len = 0;
        self.allocated.fill(0);
    }
}

impl SpaceUsage for CodeAllocator {
    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.add("header", ALLOCATOR_HEADER_BITS);
        l.add("free_stack", self.stack.bits());
        l.add("allocated", self.allocated.bits());
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        w.fields([(self.next_unused, 64), (self.stack_len, 64)]);
        w.packed(&self.stack);
        w.packed(&self.allocated);
    }
}
