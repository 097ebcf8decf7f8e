//! Quotient hash functions: representable bijections `[u] -> [b] x [u/b]`.
//!
//! The first output is a bucket, the second a quotient which, together with the bucket,
//! identifies the key. Evaluation runs a key through up to four stages:
//!
//! 1. a random affine permutation of `[u]`, after which only the top `R` bits ("reduced" value)
//!    take part in bucketing and the remaining `u_bits - R` low bits go straight to the quotient;
//! 2. the reduced value is read as a grid of `C` columns (its top bits) by `2^R / C` rows (its low
//!    bits), and every row is circularly shifted by a keyed function of the row index;
//! 3. inside each column the row index goes through that column's own affine permutation;
//! 4. when `C < b < n`, the top bits of the permuted row (the *first-order bucket*) go through a
//!    stored random permutation shared by a group of columns.
//!
//! The bucket is the top `b_bits` of the final `R`-bit value and the quotient is its remaining bits
//! followed by the low bits set aside in stage 1. With every stage replaced by the identity this is
//! exactly `bucket = x / (u/b)`, `quotient = x mod (u/b)`.
//!
//! Fractional powers of `n` are rounded up to powers of two: `C = 2^ceil(3/4 lg n)`, first-order
//! buckets per column `2^ceil(1/2 lg n)`, groups `2^ceil(1/4 lg n)`. Sets smaller than
//! [`GRID_MIN_N`] (or universes too narrow for the grid) use stage 1 alone.

use std::collections::HashMap;

use rand::RngCore;

use crate::bits::{ceil_log2, mask, shl, shr};
use crate::error::{Error, Result};
use crate::perm::{AffinePerm, ShiftFamily, StoredPerm};
use crate::space::{FlatWriter, SpaceLedger, SpaceUsage};

/// Smallest set-size bound for which the column grid is built.
pub const GRID_MIN_N: u64 = 256;

/// Exponent `c` in the `c lg n` reduced bits kept by stage 1.
pub const REDUCTION_FACTOR: u32 = 6;

pub const DEFAULT_ALPHA: f64 = 0.95;
pub const DEFAULT_DELTA: f64 = 0.5;

/// Parameter words stored with every function: universe and bucket widths, `n`, flags.
pub const PARAM_BITS: u64 = 4 * 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QhfParams {
    /// `u = 2^u_bits`, at most 64.
    pub u_bits: u32,
    /// `b = 2^b_bits <= u`.
    pub b_bits: u32,
    /// Upper bound on the size of the sets hashed.
    pub n: u64,
    pub alpha: f64,
    pub delta: f64,
    /// Replace every randomized stage by the identity.
    pub debug_identity: bool,
}

/// Whether buckets outnumber keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BucketRegime {
    /// `b >= n`: collisions are compared with 2-independent hashing.
    Sparse,
    /// `b < n`: overfull buckets are compared with a Chernoff tail.
    Dense,
}

impl QhfParams {
    pub fn new(u_bits: u32, b_bits: u32, n: u64) -> Self {
        Self {
            u_bits,
            b_bits,
            n,
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
            debug_identity: false,
        }
    }

    pub fn identity(u_bits: u32, b_bits: u32, n: u64) -> Self {
        Self {
            debug_identity: true,
            ..Self::new(u_bits, b_bits, n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.u_bits > 64 {
            return bad(format!("universe 2^{} exceeds 2^64", self.u_bits));
        }
        if self.b_bits > self.u_bits {
            return bad(format!(
                "b = 2^{} exceeds u = 2^{}",
                self.b_bits, self.u_bits
            ));
        }
        if self.n == 0 || (self.n as u128) > (1u128 << self.u_bits) {
            return bad(format!("n = {} must be in [1, u]", self.n));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        Ok(())
    }

    pub fn regime(&self) -> BucketRegime {
        if (1u128 << self.b_bits) >= self.n as u128 {
            BucketRegime::Sparse
        } else {
            BucketRegime::Dense
        }
    }

    pub fn buckets(&self) -> u128 {
        1u128 << self.b_bits
    }

    /// `2 n^2 / b + n^alpha`: bound on `#C(S, 2)` when `b >= n`.
    pub fn sparse_bound(&self) -> f64 {
        let n = self.n as f64;
        2.0 * n * n / self.buckets() as f64 + n.powf(self.alpha)
    }

    /// Overflow threshold `ceil((1 + delta) n / b + 1)` for the `b < n` bound.
    pub fn dense_threshold(&self) -> u64 {
        ((1.0 + self.delta) * self.n as f64 / self.buckets() as f64 + 1.0).ceil() as u64
    }

    /// `2 n e^(-delta^2 n / (3b)) + n^alpha`: bound on `#C(S, dense_threshold)` when `b < n`.
    pub fn dense_bound(&self) -> f64 {
        let n = self.n as f64;
        let b = self.buckets() as f64;
        2.0 * n * (-self.delta * self.delta * n / (3.0 * b)).exp() + n.powf(self.alpha)
    }
}

#[derive(Clone, Debug)]
struct Groups {
    /// `lg` of the group count.
    group_bits: u32,
    /// `lg` of the first-order buckets per column.
    first_order_bits: u32,
    perms: Vec<StoredPerm>,
}

#[derive(Clone, Debug)]
struct Grid {
    reduce: AffinePerm,
    /// `R`: width of the reduced value.
    reduced_bits: u32,
    column_bits: u32,
    row_bits: u32,
    shifts: ShiftFamily,
    col_perms: Vec<AffinePerm>,
    groups: Option<Groups>,
}

#[derive(Clone, Debug)]
enum Stages {
    Identity,
    Single(AffinePerm),
    Grid(Box<Grid>),
}

/// A sampled quotient hash function. Immutable once sampled.
#[derive(Clone, Debug)]
pub struct QuotientHashFn {
    params: QhfParams,
    stages: Stages,
}

impl QuotientHashFn {
    pub fn sample<R: RngCore + ?Sized>(params: QhfParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let u_bits = params.u_bits;
        let stages = if params.debug_identity || u_bits == 0 {
            Stages::Identity
        } else {
            match GridShape::for_params(&params) {
                None => Stages::Single(AffinePerm::sample(u_bits, rng)),
                Some(shape) => Stages::Grid(Box::new(shape.sample(rng))),
            }
        };
        Ok(Self { params, stages })
    }

    pub fn params(&self) -> &QhfParams {
        &self.params
    }

    pub fn u_bits(&self) -> u32 {
        self.params.u_bits
    }

    pub fn b_bits(&self) -> u32 {
        self.params.b_bits
    }

    /// Width of the quotient: `lg(u/b)`.
    pub fn quotient_bits(&self) -> u32 {
        self.params.u_bits - self.params.b_bits
    }

    /// Number of grid columns, or `None` below the grid threshold.
    pub fn columns(&self) -> Option<u64> {
        match &self.stages {
            Stages::Grid(g) => Some(1 << g.column_bits),
            _ => None,
        }
    }

    /// Number of column groups carrying stored permutations, if any.
    pub fn group_count(&self) -> Option<u64> {
        match &self.stages {
            Stages::Grid(g) => g.groups.as_ref().map(|gr| 1 << gr.group_bits),
            _ => None,
        }
    }

    fn check_key(&self, x: u64) -> Result<()> {
        if x > mask(self.params.u_bits) {
            return Err(Error::OutOfDomain {
                value: x,
                bits: self.params.u_bits,
            });
        }
        Ok(())
    }

    /// `(bucket, quotient)` of `x`.
    pub fn eval(&self, x: u64) -> Result<(u64, u64)> {
        self.check_key(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Bucket of `x`, the first output of [`eval`](Self::eval).
    #[inline]
    pub fn bucket(&self, x: u64) -> Result<u64> {
        self.eval(x).map(|(b, _)| b)
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: u64) -> (u64, u64) {
        let u_bits = self.params.u_bits;
        let b_bits = self.params.b_bits;
        match &self.stages {
            Stages::Identity => split(x, u_bits, b_bits),
            Stages::Single(p) => split(p.apply(x), u_bits, b_bits),
            Stages::Grid(g) => {
                let y = g.reduce.apply(x);
                let low_bits = u_bits - g.reduced_bits;
                let r = shr(y, low_bits);
                let excess = y & mask(low_bits);
                let r2 = g.forward(r);
                let (bucket, rest) = split(r2, g.reduced_bits, b_bits);
                (bucket, shl(rest, low_bits) | excess)
            }
        }
    }

    /// The unique key mapped to `(bucket, quotient)`.
    pub fn invert(&self, bucket: u64, quotient: u64) -> Result<u64> {
        let b_bits = self.params.b_bits;
        if bucket > mask(b_bits) {
            return Err(Error::OutOfDomain {
                value: bucket,
                bits: b_bits,
            });
        }
        let q_bits = self.quotient_bits();
        if quotient > mask(q_bits) {
            return Err(Error::OutOfDomain {
                value: quotient,
                bits: q_bits,
            });
        }
        Ok(self.invert_unchecked(bucket, quotient))
    }

    #[inline]
    pub(crate) fn invert_unchecked(&self, bucket: u64, quotient: u64) -> u64 {
        let u_bits = self.params.u_bits;
        let b_bits = self.params.b_bits;
        match &self.stages {
            Stages::Identity => join(bucket, quotient, u_bits, b_bits),
            Stages::Single(p) => p.invert(join(bucket, quotient, u_bits, b_bits)),
            Stages::Grid(g) => {
                let low_bits = u_bits - g.reduced_bits;
                let excess = quotient & mask(low_bits);
                let r2 = join(bucket, shr(quotient, low_bits), g.reduced_bits, b_bits);
                let r = g.backward(r2);
                g.reduce.invert(shl(r, low_bits) | excess)
            }
        }
    }

    /// Exact bits of every stored table, seed and parameter.
    pub fn describe_space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.add("params", PARAM_BITS);
        match &self.stages {
            Stages::Identity => {}
            Stages::Single(p) => l.add("reduce", p.space_bits()),
            Stages::Grid(g) => {
                l.add("reduce", g.reduce.space_bits());
                l.add("shifts", g.shifts.space_bits());
                l.add(
                    "col_perms",
                    g.col_perms.iter().map(AffinePerm::space_bits).sum(),
                );
                if let Some(gr) = &g.groups {
                    l.add(
                        "group_perms",
                        gr.perms.iter().map(StoredPerm::space_bits).sum(),
                    );
                }
            }
        }
        l
    }

    /// Stored permutations of stage 4, if present.
    pub fn group_perms(&self) -> &[StoredPerm] {
        match &self.stages {
            Stages::Grid(g) => g.groups.as_ref().map_or(&[], |gr| &gr.perms),
            _ => &[],
        }
    }

    /// Per-column permutations of stage 3, if present.
    pub fn column_perms(&self) -> &[AffinePerm] {
        match &self.stages {
            Stages::Grid(g) => &g.col_perms,
            _ => &[],
        }
    }

    /// The stage-1 permutation, if any.
    pub fn reduction(&self) -> Option<&AffinePerm> {
        match &self.stages {
            Stages::Identity => None,
            Stages::Single(p) => Some(p),
            Stages::Grid(g) => Some(&g.reduce),
        }
    }
}

impl SpaceUsage for QuotientHashFn {
    fn space(&self) -> SpaceLedger {
        self.describe_space()
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        let p = &self.params;
        w.fields([
            (p.u_bits as u64, 64),
            (p.b_bits as u64, 64),
            (p.n, 64),
            (p.debug_identity as u64, 64),
        ]);
        match &self.stages {
            Stages::Identity => {}
            Stages::Single(r) => w.fields(r.fields()),
            Stages::Grid(g) => {
                w.fields(g.reduce.fields());
                w.fields(g.shifts.fields());
                w.fields(g.col_perms.iter().flat_map(AffinePerm::fields));
                if let Some(gr) = &g.groups {
                    w.fields(gr.perms.iter().flat_map(StoredPerm::fields));
                }
            }
        }
    }
}

#[inline]
fn split(v: u64, width: u32, b_bits: u32) -> (u64, u64) {
    let q_bits = width - b_bits;
    (shr(v, q_bits), v & mask(q_bits))
}

#[inline]
fn join(bucket: u64, quotient: u64, width: u32, b_bits: u32) -> u64 {
    shl(bucket, width - b_bits) | quotient
}

struct GridShape {
    u_bits: u32,
    reduced_bits: u32,
    column_bits: u32,
    first_order_bits: u32,
    group_bits: u32,
    with_groups: bool,
}

impl GridShape {
    fn for_params(p: &QhfParams) -> Option<Self> {
        if p.n < GRID_MIN_N {
            return None;
        }
        let lg_n = ceil_log2(p.n);
        let column_bits = (3 * lg_n).div_ceil(4);
        let first_order_bits = lg_n.div_ceil(2);
        let group_bits = lg_n.div_ceil(4);
        let reduced_bits = p.u_bits.min((REDUCTION_FACTOR * lg_n).max(p.b_bits));
        if reduced_bits < column_bits + first_order_bits {
            return None;
        }
        let with_groups = p.regime() == BucketRegime::Dense && p.b_bits > column_bits;
        Some(Self {
            u_bits: p.u_bits,
            reduced_bits,
            column_bits,
            first_order_bits,
            group_bits,
            with_groups,
        })
    }

    fn sample<R: RngCore + ?Sized>(self, rng: &mut R) -> Grid {
        let reduce = AffinePerm::sample(self.u_bits, rng);
        let row_bits = self.reduced_bits - self.column_bits;
        let columns = 1u64 << self.column_bits;
        let shifts = ShiftFamily::sample(columns, row_bits, rng);
        let col_perms = (0..columns)
            .map(|_| AffinePerm::sample(row_bits, rng))
            .collect();
        let groups = self.with_groups.then(|| Groups {
            group_bits: self.group_bits,
            first_order_bits: self.first_order_bits,
            perms: (0..1u64 << self.group_bits)
                .map(|_| StoredPerm::sample(1 << self.first_order_bits, rng))
                .collect(),
        });
        Grid {
            reduce,
            reduced_bits: self.reduced_bits,
            column_bits: self.column_bits,
            row_bits,
            shifts,
            col_perms,
            groups,
        }
    }
}

impl Grid {
    /// Stages 2-4 on the reduced value.
    #[inline]
    fn forward(&self, r: u64) -> u64 {
        let col = r >> self.row_bits;
        let row = r & mask(self.row_bits);
        let col_mask = mask(self.column_bits);
        let col = (col + self.shifts.shift_of_row(row)) & col_mask;
        let mut row = self.col_perms[col as usize].apply(row);
        if let Some(g) = &self.groups {
            let low = self.row_bits - g.first_order_bits;
            let group = col >> (self.column_bits - g.group_bits);
            let first = g.perms[group as usize].apply(row >> low);
            row = (first << low) | (row & mask(low));
        }
        (col << self.row_bits) | row
    }

    #[inline]
    fn backward(&self, r: u64) -> u64 {
        let col = r >> self.row_bits;
        let mut row = r & mask(self.row_bits);
        if let Some(g) = &self.groups {
            let low = self.row_bits - g.first_order_bits;
            let group = col >> (self.column_bits - g.group_bits);
            let first = g.perms[group as usize].invert(row >> low);
            row = (first << low) | (row & mask(low));
        }
        let row = self.col_perms[col as usize].invert(row);
        let col = col.wrapping_sub(self.shifts.shift_of_row(row)) & mask(self.column_bits);
        (col << self.row_bits) | row
    }
}

/// Elements of a set lying in buckets that hold at least `threshold` of its elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollisionCensus {
    pub threshold: u64,
    pub count: u64,
    /// `load -> number of buckets with that load`, over nonempty buckets.
    pub bucket_loads: Vec<(u64, u64)>,
}

/// Counts the keys of `set` whose bucket receives `>= threshold` keys of `set`.
pub fn collision_census(
    h: &QuotientHashFn,
    set: &[u64],
    threshold: u64,
) -> Result<CollisionCensus> {
    let mut loads: HashMap<u64, u64> = HashMap::with_capacity(set.len());
    for &x in set {
        *loads.entry(h.bucket(x)?).or_insert(0) += 1;
    }
    let mut histogram: HashMap<u64, u64> = HashMap::new();
    let mut count = 0;
    for &load in loads.values() {
        *histogram.entry(load).or_insert(0) += 1;
        if load >= threshold {
            count += load;
        }
    }
    let mut bucket_loads: Vec<(u64, u64)> = histogram.into_iter().collect();
    bucket_loads.sort_unstable();
    Ok(CollisionCensus {
        threshold,
        count,
        bucket_loads,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkloadOp {
    Insert(u64),
    Delete(u64),
}

/// Overflow accounting of a replayed workload.
///
/// An insertion *overflows* when its bucket, counting the new key, holds at least `threshold`
/// live keys.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OverflowTrace {
    pub threshold: u64,
    /// Insertions that overflowed, over the whole workload.
    pub overflow_insertions: u64,
    /// Live keys that overflowed when they were inserted, at the end of the workload.
    pub live_overflow_final: u64,
    /// Maximum over time of the live keys that overflowed when inserted.
    pub live_overflow_peak: u64,
    pub peak_live: u64,
}

/// Replays `workload`, maintaining live bucket loads.
pub fn insertion_overflow_trace(
    h: &QuotientHashFn,
    workload: &[WorkloadOp],
    threshold: u64,
) -> Result<OverflowTrace> {
    let mut loads: HashMap<u64, u64> = HashMap::new();
    // live key -> (bucket, overflowed at insertion)
    let mut live: HashMap<u64, (u64, bool)> = HashMap::new();
    let mut trace = OverflowTrace {
        threshold,
        ..OverflowTrace::default()
    };
    for (step, op) in workload.iter().enumerate() {
        match *op {
            WorkloadOp::Insert(x) => {
                let bucket = h.bucket(x)?;
                if live.contains_key(&x) {
                    return Err(Error::MalformedWorkload(format!(
                        "step {step}: insert of live key {x}"
                    )));
                }
                let load = loads.entry(bucket).or_insert(0);
                *load += 1;
                let overflowed = *load >= threshold;
                live.insert(x, (bucket, overflowed));
                if overflowed {
                    trace.overflow_insertions += 1;
                    trace.live_overflow_final += 1;
                    trace.live_overflow_peak =
                        trace.live_overflow_peak.max(trace.live_overflow_final);
                }
                trace.peak_live = trace.peak_live.max(live.len() as u64);
            }
            WorkloadOp::Delete(x) => {
                let (bucket, overflowed) = live.remove(&x).ok_or_else(|| {
                    Error::MalformedWorkload(format!("step {step}: delete of absent key {x}"))
                })?;
                *loads.get_mut(&bucket).expect("live bucket has a load") -= 1;
                if overflowed {
                    trace.live_overflow_final -= 1;
                }
            }
        }
    }
    Ok(trace)
}
