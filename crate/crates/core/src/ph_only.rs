//! Stable perfect hashing into `[n + t]` without membership.
//!
//! A quotient hash function maps keys into `b ~ c n^2 / (t+1)` buckets. The set of occupied
//! buckets is kept in a [`MembPhDict`] over `[b]` (`first`); the code of a key that arrived in an
//! empty bucket is the bucket's code. Keys arriving in an occupied bucket are kept whole in a
//! second, small [`MembPhDict`] whose codes are offset past those of `first`.
//!
//! For tiny slack the structure is built with slack `n` and its codes are relabeled into `[n]`
//! through an explicit table.

use rand::RngCore;

use crate::base_dict::CodeAllocator;
use crate::bits::{ceil_log2, floor_pow2, lg, PackedArray};
use crate::error::{Error, Result};
use crate::memb_ph::{MembPhDict, MembPhParams, Tunables};
use crate::qhf::{QhfParams, QuotientHashFn};
use crate::seed::{child_stream, StreamRng};
use crate::space::{FlatWriter, SpaceLedger, SpaceUsage};

pub const DEFAULT_C: f64 = 8.0;
pub const MAX_REBUILD_ATTEMPTS: u32 = 16;
/// Counters and seeds.
pub const HEADER_BITS: u64 = 6 * 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhOnlyParams {
    pub n: u64,
    pub t: u64,
    pub u_bits: u32,
    /// Bucket scale `c >= 1` in `b = c n^2 / (t+1)`.
    pub c: f64,
    pub tunables: Tunables,
}

impl PhOnlyParams {
    pub fn new(n: u64, t: u64, u_bits: u32) -> Self {
        Self {
            n,
            t,
            u_bits,
            c: DEFAULT_C,
            tunables: Tunables::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        MembPhParams {
            n: self.n,
            t: self.t,
            u_bits: self.u_bits,
            tunables: self.tunables,
        }
        .validate()?;
        if !(self.c >= 1.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("c = {} must be >= 1", self.c)));
        }
        Ok(())
    }

    pub fn range(&self) -> u64 {
        self.n + self.t
    }

    /// Slack at or below which codes are relabeled: `2^ceil(lg sqrt n)`.
    pub fn relabel_threshold(&self) -> u64 {
        1 << ceil_log2(self.n).div_ceil(2)
    }

    pub fn is_relabel(&self) -> bool {
        self.t <= self.relabel_threshold()
    }

    /// Slack used by the composed layout:
    /// `min(t, max(floor_pow2(n / lg(u/n)), 2 * relabel_threshold))`.
    pub fn t_internal(&self) -> u64 {
        let u_over_n = 2f64.powi(self.u_bits as i32) / self.n as f64;
        let cap =
            floor_pow2((self.n as f64 / lg(u_over_n)) as u64).max(2 * self.relabel_threshold());
        self.t.min(cap)
    }

    /// `lg b` for slack `t_int`: the next power of two `>= c n^2 / (t_int + 1)`, at most `u`.
    pub fn bucket_bits(&self, t_int: u64) -> u32 {
        let n = self.n as f64;
        let b = (self.c * n * n / (t_int as f64 + 1.0)).ceil();
        let bits = if b <= 1.0 { 0 } else { b.log2().ceil() as u32 };
        bits.min(self.u_bits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Composed,
    Relabel,
}

#[derive(Clone, Debug)]
struct Composed {
    t_int: u64,
    qhf: QuotientHashFn,
    first: MembPhDict,
    second: Option<MembPhDict>,
    /// First code of `second`.
    offset: u64,
}

impl Composed {
    fn sample(p: &PhOnlyParams, t: u64, rng: &mut StreamRng) -> Result<Self> {
        let q = PhOnlyParams { t, ..*p };
        let t_int = q.t_internal();
        let b_bits = q.bucket_bits(t_int);
        let qhf = QuotientHashFn::sample(QhfParams::new(p.u_bits, b_bits, p.n), rng)?;
        let half = t_int / 2;
        let first = MembPhDict::new(
            MembPhParams {
                n: p.n,
                t: half,
                u_bits: b_bits,
                tunables: p.tunables,
            },
            rng,
        )?;
        let second = if half == 0 {
            None
        } else {
            Some(MembPhDict::new(
                MembPhParams {
                    n: half,
                    t: 0,
                    u_bits: p.u_bits,
                    tunables: p.tunables,
                },
                rng,
            )?)
        };
        Ok(Self {
            t_int,
            qhf,
            first,
            second,
            offset: p.n + half,
        })
    }

    fn range(&self) -> u64 {
        self.offset + self.second.as_ref().map_or(0, MembPhDict::capacity)
    }

    /// Inserts `x`; `Ok(None)` if it must go to a full (or absent) second structure.
    fn insert(&mut self, x: u64) -> Result<Option<(u64, bool)>> {
        if let Some(s) = &self.second {
            if s.member(x) {
                return Err(Error::Duplicate(x));
            }
        }
        let (b, _) = self.qhf.eval(x)?;
        if !self.first.member(b) {
            return self.first.insert(b).map(|c| Some((c, false)));
        }
        match &mut self.second {
            Some(s) if s.len() < s.capacity() => s.insert(x).map(|c| Some((self.offset + c, true))),
            _ => Ok(None),
        }
    }

    fn hashcode(&self, x: u64) -> Option<u64> {
        if let Some(c) = self.second.as_ref().and_then(|s| s.hashcode(x).ok()) {
            return Some(self.offset + c);
        }
        let (b, _) = self.qhf.eval(x).ok()?;
        self.first.hashcode(b).ok()
    }

    fn delete(&mut self, x: u64) -> Result<u64> {
        if let Some(s) = &mut self.second {
            if s.member(x) {
                return s.delete(x).map(|c| self.offset + c);
            }
        }
        let (b, _) = self.qhf.eval(x)?;
        self.first.delete(b).map_err(|_| Error::NotResident(x))
    }

    fn second_len(&self) -> u64 {
        self.second.as_ref().map_or(0, MembPhDict::len)
    }

    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.absorb("qhf", &self.qhf.space());
        l.absorb("first", &self.first.space());
        if let Some(s) = &self.second {
            l.absorb("second", &s.space());
        }
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        self.qhf.write_flat(w);
        self.first.write_flat(w);
        if let Some(s) = &self.second {
            s.write_flat(w);
        }
    }
}

#[derive(Clone, Debug)]
struct Relabel {
    inner: Composed,
    /// Inner code -> external code in `[n]`.
    table: PackedArray,
    alloc: CodeAllocator,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum Body {
    Composed(Composed),
    Relabel(Box<Relabel>),
}

#[derive(Clone, Debug)]
pub struct PhOnlyDict {
    params: PhOnlyParams,
    root: u64,
    generation: u64,
    live: u64,
    routed: u64,
    overflow_rebuilds: u64,
    body: Body,
}

impl PhOnlyDict {
    pub fn new<R: RngCore + ?Sized>(params: PhOnlyParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let root = rng.next_u64();
        let body = Self::sample_body(&params, &mut child_stream(root, 0))?;
        Ok(Self {
            params,
            root,
            generation: 0,
            live: 0,
            routed: 0,
            overflow_rebuilds: 0,
            body,
        })
    }

    fn sample_body(p: &PhOnlyParams, rng: &mut StreamRng) -> Result<Body> {
        if !p.is_relabel() {
            return Ok(Body::Composed(Composed::sample(p, p.t, rng)?));
        }
        let inner = Composed::sample(p, p.n, rng)?;
        Ok(Body::Relabel(Box::new(Relabel {
            table: PackedArray::new(inner.range() as usize, ceil_log2(p.n)),
            alloc: CodeAllocator::new(p.n),
            inner,
        })))
    }

    pub fn params(&self) -> &PhOnlyParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        match self.body {
            Body::Composed(_) => Mode::Composed,
            Body::Relabel(_) => Mode::Relabel,
        }
    }

    pub fn range(&self) -> u64 {
        self.params.range()
    }

    pub fn len(&self) -> u64 {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn capacity(&self) -> u64 {
        self.params.n
    }

    fn composed(&self) -> &Composed {
        match &self.body {
            Body::Composed(c) => c,
            Body::Relabel(r) => &r.inner,
        }
    }

    /// Bucket count `b` of the quotient hash function.
    pub fn buckets(&self) -> u128 {
        self.composed().qhf.params().buckets()
    }

    /// Slack used by the composed layout.
    pub fn t_internal(&self) -> u64 {
        self.composed().t_int
    }

    /// Keys currently held whole in the second structure.
    pub fn second_len(&self) -> u64 {
        self.composed().second_len()
    }

    /// Capacity of the second structure.
    pub fn second_capacity(&self) -> u64 {
        self.composed()
            .second
            .as_ref()
            .map_or(0, MembPhDict::capacity)
    }

    /// Insertions routed to the second structure since construction or the last rebuild.
    pub fn routed_to_second(&self) -> u64 {
        self.routed
    }

    pub fn overflow_rebuilds(&self) -> u64 {
        self.overflow_rebuilds
    }

    /// Stable code of `x`; `Err(CollisionBudget)` leaves the structure unchanged and asks the
    /// caller for a [`rebuild`](Self::rebuild).
    pub fn insert(&mut self, x: u64) -> Result<u64> {
        if self.live >= self.params.n {
            return Err(Error::CapacityExceeded(self.params.n));
        }
        let code = match &mut self.body {
            Body::Composed(c) => c.insert(x)?.map(|(code, routed)| {
                self.routed += routed as u64;
                code
            }),
            Body::Relabel(r) => match r.inner.insert(x)? {
                None => None,
                Some((inner, routed)) => {
                    self.routed += routed as u64;
                    let ext = r.alloc.alloc()?;
                    r.table.set(inner as usize, ext);
                    Some(ext)
                }
            },
        };
        let code = code.ok_or(Error::CollisionBudget(x))?;
        self.live += 1;
        Ok(code)
    }

    /// Code of a resident `x`. For other keys the answer is unspecified: `None` when no
    /// substructure matches, otherwise some code in range.
    pub fn hashcode(&self, x: u64) -> Option<u64> {
        match &self.body {
            Body::Composed(c) => c.hashcode(x),
            Body::Relabel(r) => r.inner.hashcode(x).map(|i| r.table.get(i as usize)),
        }
    }

    /// Removes `x`, returning its code. For a non-resident `x` whose bucket is occupied this
    /// removes the bucket's owner instead; callers must only delete residents.
    pub fn delete(&mut self, x: u64) -> Result<u64> {
        let code = match &mut self.body {
            Body::Composed(c) => c.delete(x)?,
            Body::Relabel(r) => {
                let inner = r.inner.delete(x)?;
                let ext = r.table.get(inner as usize);
                r.alloc.free(ext)?;
                ext
            }
        };
        self.live -= 1;
        Ok(code)
    }

    /// Resamples every component and reinserts `keys`, which must be exactly the residents.
    /// Codes may change.
    pub fn rebuild<R: RngCore + ?Sized>(&mut self, keys: &[u64], rng: &mut R) -> Result<()> {
        if keys.len() as u64 > self.params.n {
            return Err(Error::CapacityExceeded(self.params.n));
        }
        for _ in 0..MAX_REBUILD_ATTEMPTS {
            self.overflow_rebuilds += 1;
            self.generation += 1;
            self.root = rng.next_u64();
            let mut fresh = Self {
                params: self.params,
                root: self.root,
                generation: self.generation,
                live: 0,
                routed: 0,
                overflow_rebuilds: self.overflow_rebuilds,
                body: Self::sample_body(&self.params, &mut child_stream(self.root, 0))?,
            };
            let ok = keys.iter().try_for_each(|&k| fresh.insert(k).map(|_| ()));
            match ok {
                Ok(()) => {
                    *self = fresh;
                    return Ok(());
                }
                Err(Error::CollisionBudget(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::RebuildFailed(MAX_REBUILD_ATTEMPTS))
    }
}

impl SpaceUsage for PhOnlyDict {
    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.add("header", HEADER_BITS);
        match &self.body {
            Body::Composed(c) => l.absorb("composed", &c.space()),
            Body::Relabel(r) => {
                l.absorb("inner", &r.inner.space());
                l.add("relabel.table", r.table.bits());
                l.absorb("relabel.alloc", &r.alloc.space());
            }
        }
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        w.fields([
            (self.root, 64),
            (self.generation, 64),
            (self.live, 64),
            (self.routed, 64),
            (self.overflow_rebuilds, 64),
            (self.mode() as u64, 64),
        ]);
        match &self.body {
            Body::Composed(c) => c.write_flat(w),
            Body::Relabel(r) => {
                r.inner.write_flat(w);
                w.packed(&r.table);
                r.alloc.write_flat(w);
            }
        }
    }
}
