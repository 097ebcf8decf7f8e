//! `r`-bit payloads stored at stable hashcodes.

use rand::RngCore;

use crate::bits::{mask, PackedArray};
use crate::error::{Error, Result};
use crate::memb_ph::MembPhDict;
use crate::ph_only::PhOnlyDict;
use crate::space::{FlatWriter, SpaceLedger, SpaceUsage};

/// A dynamic dictionary issuing stable codes in `[0, range)`.
pub trait PerfectHashing: SpaceUsage {
    fn insert(&mut self, x: u64) -> Result<u64>;

    /// Removes `x`, returning the code it held.
    fn delete(&mut self, x: u64) -> Result<u64>;

    /// Code of `x`. Engines without membership may return a code for a non-resident key.
    fn code_of(&self, x: u64) -> Result<u64>;

    fn range(&self) -> u64;

    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn capacity(&self) -> u64;

    /// Whether [`code_of`](Self::code_of) rejects every non-resident key.
    fn has_membership(&self) -> bool;
}

impl PerfectHashing for MembPhDict {
    fn insert(&mut self, x: u64) -> Result<u64> {
        MembPhDict::insert(self, x)
    }

    fn delete(&mut self, x: u64) -> Result<u64> {
        MembPhDict::delete(self, x)
    }

    fn code_of(&self, x: u64) -> Result<u64> {
        self.hashcode(x)
    }

    fn range(&self) -> u64 {
        MembPhDict::range(self)
    }

    fn len(&self) -> u64 {
        MembPhDict::len(self)
    }

    fn capacity(&self) -> u64 {
        MembPhDict::capacity(self)
    }

    fn has_membership(&self) -> bool {
        true
    }
}

impl PerfectHashing for PhOnlyDict {
    fn insert(&mut self, x: u64) -> Result<u64> {
        PhOnlyDict::insert(self, x)
    }

    fn delete(&mut self, x: u64) -> Result<u64> {
        PhOnlyDict::delete(self, x)
    }

    fn code_of(&self, x: u64) -> Result<u64> {
        self.hashcode(x).ok_or(Error::NotResident(x))
    }

    fn range(&self) -> u64 {
        PhOnlyDict::range(self)
    }

    fn len(&self) -> u64 {
        PhOnlyDict::len(self)
    }

    fn capacity(&self) -> u64 {
        PhOnlyDict::capacity(self)
    }

    fn has_membership(&self) -> bool {
        false
    }
}

/// `range` cells of `r` bits each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayloadStore {
    cells: PackedArray,
}

impl PayloadStore {
    pub fn new(range: u64, r: u32) -> Result<Self> {
        if r > 64 {
            return Err(Error::InvalidParams(format!(
                "payload width {r} exceeds 64"
            )));
        }
        Ok(Self {
            cells: PackedArray::new(range as usize, r),
        })
    }

    pub fn width(&self) -> u32 {
        self.cells.width()
    }

    pub fn get(&self, slot: u64) -> u64 {
        self.cells.get(slot as usize)
    }

    pub fn set(&mut self, slot: u64, payload: u64) -> Result<()> {
        self.check(payload)?;
        self.cells.set(slot as usize, payload);
        Ok(())
    }

    fn check(&self, payload: u64) -> Result<()> {
        if payload > mask(self.width()) {
            return Err(Error::PayloadTooWide {
                payload,
                width: self.width(),
            });
        }
        Ok(())
    }

    pub fn bits(&self) -> u64 {
        self.cells.bits()
    }
}

#[derive(Clone, Debug)]
pub struct RetrievalDict<E> {
    engine: E,
    store: PayloadStore,
}

impl<E: PerfectHashing> RetrievalDict<E> {
    pub fn new(engine: E, r: u32) -> Result<Self> {
        let store = PayloadStore::new(engine.range(), r)?;
        Ok(Self { engine, store })
    }

    pub fn engine(&self) -> &E {
        &self.engine
    }

    pub fn width(&self) -> u32 {
        self.store.width()
    }

    pub fn len(&self) -> u64 {
        self.engine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.engine.is_empty()
    }

    /// Inserts `x` with `payload`, returning its code.
    pub fn insert(&mut self, x: u64, payload: u64) -> Result<u64> {
        self.store.check(payload)?;
        let code = self.engine.insert(x)?;
        self.store.set(code, payload)?;
        Ok(code)
    }

    pub fn retrieve(&self, x: u64) -> Result<u64> {
        self.engine.code_of(x).map(|c| self.store.get(c))
    }

    /// Overwrites the payload in place, returning the unchanged code.
    pub fn update(&mut self, x: u64, payload: u64) -> Result<u64> {
        self.store.check(payload)?;
        let code = self.engine.code_of(x)?;
        self.store.set(code, payload)?;
        Ok(code)
    }

    /// Removes `x`; its cell keeps stale contents until the code is reused.
    pub fn delete(&mut self, x: u64) -> Result<u64> {
        self.engine.delete(x)
    }

    pub fn code_of(&self, x: u64) -> Result<u64> {
        self.engine.code_of(x)
    }
}

impl RetrievalDict<PhOnlyDict> {
    /// Rebuilds the engine after a collision-budget overflow and rewrites every payload.
    /// `entries` must be exactly the resident keys with their payloads.
    pub fn rebuild<R: RngCore + ?Sized>(
        &mut self,
        entries: &[(u64, u64)],
        rng: &mut R,
    ) -> Result<()> {
        let keys: Vec<u64> = entries.iter().map(|&(k, _)| k).collect();
        self.engine.rebuild(&keys, rng)?;
        for &(k, p) in entries {
            let code = self.engine.code_of(k)?;
            self.store.set(code, p)?;
        }
        Ok(())
    }
}

impl<E: PerfectHashing> SpaceUsage for RetrievalDict<E> {
    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.absorb("engine", &self.engine.space());
        l.add("payloads", self.store.bits());
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        self.engine.write_flat(w);
        w.packed(&self.store.cells);
    }
}
