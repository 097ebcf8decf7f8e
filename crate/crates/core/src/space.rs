//! Space accounting.
//!
//! Two views of memory are provided. [`SpaceLedger`] is the primary measurement: an exact bit
//! count per named component. [`ArenaModel`] models memory as an unbounded array of 64-bit
//! cells whose footprint is the shortest prefix holding every nonblank cell; structures can
//! serialize their flat layout into it through [`FlatWriter`] so that the ledger can be checked
//! against what is actually laid out.

use std::collections::BTreeMap;

use crate::bits::PackedArray;
use crate::error::{Error, Result};

pub const WORD_BITS: u64 = 64;

/// Named component bit counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpaceLedger {
    entries: BTreeMap<String, u64>,
    total: u64,
}

impl SpaceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, component: &str, bits: u64) {
        *self.entries.entry(component.to_owned()).or_insert(0) += bits;
        self.total += bits;
    }

    pub fn subtract(&mut self, component: &str, bits: u64) -> Result<()> {
        let entry = self
            .entries
            .get_mut(component)
            .filter(|e| **e >= bits)
            .ok_or_else(|| Error::LedgerUnderflow {
                component: component.to_owned(),
            })?;
        *entry -= bits;
        self.total -= bits;
        Ok(())
    }

    /// Merges `other` into `self`, prefixing its component names with `prefix.`.
    pub fn absorb(&mut self, prefix: &str, other: &SpaceLedger) {
        for (name, &bits) in &other.entries {
            self.add(&format!("{prefix}.{name}"), bits);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, component: &str) -> u64 {
        self.entries.get(component).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Sparse model of an infinite array of words; the all-zero word is blank.
#[derive(Clone, Debug, Default)]
pub struct ArenaModel {
    cells: BTreeMap<u64, u64>,
}

impl ArenaModel {
    pub const BLANK: u64 = 0;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, addr: u64, word: u64) {
        if word == Self::BLANK {
            self.cells.remove(&addr);
        } else {
            self.cells.insert(addr, word);
        }
    }

    pub fn blank(&mut self, addr: u64) {
        self.cells.remove(&addr);
    }

    pub fn read(&self, addr: u64) -> u64 {
        self.cells.get(&addr).copied().unwrap_or(Self::BLANK)
    }

    /// Length of the shortest prefix containing every nonblank cell.
    pub fn space_words(&self) -> u64 {
        self.cells.keys().next_back().map_or(0, |&a| a + 1)
    }

    pub fn nonblank_addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.cells.keys().copied()
    }
}

/// Sequential writer laying a structure out as consecutive words of an [`ArenaModel`].
///
/// Each call writes one *segment*; a segment's word count is its bit count rounded up to a whole
/// word, so a ledger and a flat layout may differ by less than one word per segment.
pub struct FlatWriter<'a> {
    arena: &'a mut ArenaModel,
    cursor: u64,
    segments: u64,
}

impl<'a> FlatWriter<'a> {
    pub fn new(arena: &'a mut ArenaModel, base: u64) -> Self {
        Self {
            arena,
            cursor: base,
            segments: 0,
        }
    }

    /// Packs `(value, width)` fields back to back.
    pub fn fields<I: IntoIterator<Item = (u64, u32)>>(&mut self, fields: I) {
        let mut acc: u128 = 0;
        let mut filled = 0u32;
        for (value, width) in fields {
            if width == 0 {
                continue;
            }
            debug_assert!(width == 64 || value >> width == 0);
            acc |= (value as u128) << filled;
            filled += width;
            if filled >= 64 {
                self.put(acc as u64);
                acc >>= 64;
                filled -= 64;
            }
        }
        if filled > 0 {
            self.put(acc as u64);
        }
        self.segments += 1;
    }

    pub fn packed(&mut self, array: &PackedArray) {
        for &w in array.words() {
            self.put(w);
        }
        self.segments += 1;
    }

    fn put(&mut self, word: u64) {
        self.arena.write(self.cursor, word);
        self.cursor += 1;
    }

    /// Next free address.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn segments(&self) -> u64 {
        self.segments
    }

    /// Writes an all-ones terminator so the layout ends on a nonblank cell.
    pub fn terminate(&mut self) {
        self.put(u64::MAX);
    }
}

/// Structures that report their footprint.
pub trait SpaceUsage {
    fn space(&self) -> SpaceLedger;

    fn write_flat(&self, w: &mut FlatWriter<'_>);

    fn space_bits(&self) -> u64 {
        self.space().total()
    }
}

/// Result of laying a structure out in a fresh arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutCheck {
    pub ledger_bits: u64,
    pub layout_words: u64,
    pub segments: u64,
    pub arena_words: u64,
}

impl LayoutCheck {
    /// True when the flat layout and the ledger agree to within one word per segment and the
    /// arena footprint equals the layout plus its terminator.
    pub fn is_honest(&self) -> bool {
        let layout_bits = self.layout_words * WORD_BITS;
        layout_bits >= self.ledger_bits
            && layout_bits - self.ledger_bits < WORD_BITS * self.segments.max(1)
            && self.arena_words == self.layout_words + 1
    }
}

pub fn check_layout<S: SpaceUsage + ?Sized>(s: &S) -> LayoutCheck {
    let mut arena = ArenaModel::new();
    let (layout_words, segments) = {
        let mut w = FlatWriter::new(&mut arena, 0);
        s.write_flat(&mut w);
        let out = (w.cursor(), w.segments());
        w.terminate();
        out
    };
    LayoutCheck {
        ledger_bits: s.space_bits(),
        layout_words,
        segments,
        arena_words: arena.space_words(),
    }
}
