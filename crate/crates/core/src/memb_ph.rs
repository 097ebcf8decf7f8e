//! Dynamic dictionary with membership and stable perfect hashing into `[n + t]`.
//!
//! Large universes (`u >= n^1.5`) and tiny slack use one [`BaseDict`] from keys to codes in
//! `[n]`. Otherwise keys go to the first of three levels that accepts them:
//!
//! * level 1 hashes into `b1` buckets of expected load `mu`; each bucket keeps quotients in a
//!   small dictionary with local codes, so a code is `bucket * k1 + local`;
//! * level 2 (when the slack is large) hashes into `b2` buckets of [`TileFilterBucket`]s whose
//!   slots are the codes;
//! * level 3 is a plain dictionary from keys to codes.
//!
//! Code ranges are disjoint: level 1 issues `[0, n + T1)`, level 2 the next `T2` codes and level
//! 3 the next `T3`, with `T1 + T2 + T3 <= t`. If level 3 fills up, the whole structure is
//! resampled and every key reinserted; this is the only event that changes resident codes and
//! is counted by [`MembPhDict::rebuild_count`].

pub mod tile;

use rand::RngCore;

use crate::base_dict::{BaseDict, CodeAllocator, Policy};
use crate::bits::{ceil_log2, floor_pow2, next_pow2};
use crate::error::{Error, Result};
use crate::perm::StoredPerm;
use crate::qhf::{QhfParams, QuotientHashFn};
use crate::seed::{child_stream, split, StreamRng};
use crate::space::{FlatWriter, SpaceLedger, SpaceUsage};

pub use tile::TileFilterBucket;

/// Largest level-2 bucket universe; above it the brute-force layout is used.
pub const MAX_TILE_UNIVERSE_BITS: u32 = 20;
pub const MAX_STRUCTURE_REBUILDS: u32 = 16;
/// Sizes, counters and the root seed.
pub const HEADER_BITS: u64 = 8 * 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tunables {
    /// Level-2 bucket density, in `(0, 1/3]`.
    pub c1: f64,
    /// Level-1 load scale: `mu = c2 (n/t)^3`.
    pub c2: f64,
    /// Level-2 tile scale: `m_i = c4 (lg n)^(1/4) / 2^i`.
    pub c4: f64,
    /// Accepted for configuration compatibility; the construction does not consult it.
    pub c5: f64,
    /// Overrides the number of tile-filter levels.
    pub levels: Option<u32>,
}

impl Default for Tunables {
    fn default() -> Self {
        Self {
            c1: 0.25,
            c2: 8.0,
            c4: 4.0,
            c5: 2.0,
            levels: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembPhParams {
    pub n: u64,
    pub t: u64,
    /// `u = 2^u_bits`.
    pub u_bits: u32,
    pub tunables: Tunables,
}

impl MembPhParams {
    pub fn new(n: u64, t: u64, u_bits: u32) -> Self {
        Self {
            n,
            t,
            u_bits,
            tunables: Tunables::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.u_bits > 64 {
            return bad(format!("universe 2^{} exceeds 2^64", self.u_bits));
        }
        if self.n == 0 || self.n as u128 > 1u128 << self.u_bits {
            return bad(format!("n = {} must be in [1, u]", self.n));
        }
        if self.n.checked_add(self.t).is_none() {
            return bad("n + t overflows 64 bits".into());
        }
        let c = &self.tunables;
        if !(c.c1 > 0.0 && c.c1 <= 1.0 / 3.0) {
            return bad(format!("c1 = {} must lie in (0, 1/3]", c.c1));
        }
        if !(c.c2 > 0.0 && c.c4 > 0.0 && c.c5 > 0.0) {
            return bad("c2, c4, c5 must be positive".into());
        }
        if c.levels == Some(0) {
            return bad("tile-filter level count must be >= 1".into());
        }
        Ok(())
    }

    /// Slack used for sizing: `min(t, max(1, n^2 / u))`.
    pub fn t_eff(&self) -> u64 {
        let n2u = ((self.n as u128 * self.n as u128) >> self.u_bits) as u64;
        self.t.min(n2u.max(1))
    }

    /// Hashcode range `n + t`.
    pub fn range(&self) -> u64 {
        self.n + self.t
    }

    pub fn is_brute_force(&self) -> bool {
        let n = self.n as f64;
        2.0 * self.u_bits as f64 >= 3.0 * n.log2()
            || self.t_eff() <= 1 << ceil_log2(self.n).div_ceil(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    BruteForce,
    Layered,
}

/// Derived sizes of the layered mode.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredShape {
    pub t_eff: u64,
    /// Code budgets of the three levels beyond `n`.
    pub budgets: [u64; 3],
    pub mu: u64,
    pub b1_bits: u32,
    /// Codes per level-1 bucket.
    pub k1: u64,
    pub level2: Option<Level2Shape>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level2Shape {
    pub b2_bits: u32,
    /// `lg v`, the bucket-universe width.
    pub v_bits: u32,
    /// `lg m_i` per tile level.
    pub tile_bits: Vec<u32>,
    pub pools: u64,
}

impl Level2Shape {
    pub fn codes_per_bucket(&self) -> u64 {
        self.tile_bits.iter().map(|&b| 1u64 << b).sum()
    }
}

impl LayeredShape {
    /// Sizes for `p`, or `None` when the brute-force layout is used.
    pub fn for_params(p: &MembPhParams) -> Option<Self> {
        if p.is_brute_force() {
            return None;
        }
        let n = p.n;
        let t_eff = p.t_eff();
        let c = &p.tunables;
        let budgets = [t_eff / 3, t_eff / 3, t_eff.div_ceil(3)];

        let ratio = n as f64 / t_eff as f64;
        let mu_raw = (c.c2 * ratio.powi(3)).max(8.0).min(next_pow2(n) as f64);
        let mu = next_pow2(mu_raw.ceil() as u64).min(next_pow2(n));
        let b1 = (next_pow2(n) / mu).max(1);
        let slack = ((mu as f64).powf(2.0 / 3.0).ceil() as u64).min(budgets[0] / b1);
        let k1 = (mu + slack).min((n + budgets[0]) / b1);

        let lg_n = (n as f64).log2();
        let level2 = if c.c1 * t_eff as f64 > n as f64 / lg_n {
            let h = c
                .levels
                .unwrap_or_else(|| ((lg_n.log2() / 8.0).floor() as u32).max(1));
            let quarter = lg_n.powf(0.25);
            let m: Vec<u64> = (0..h)
                .map(|i| next_pow2((c.c4 * quarter / 2f64.powi(i as i32)).ceil() as u64))
                .collect();
            let sum_m: u64 = m.iter().sum();
            let want = next_pow2((c.c1 * t_eff as f64 / quarter).ceil() as u64);
            let b2 = want.min(floor_pow2(budgets[1] / sum_m));
            if b2 == 0 {
                None
            } else {
                let b2_bits = ceil_log2(b2).min(p.u_bits);
                let v_bits = p.u_bits - b2_bits;
                if v_bits > MAX_TILE_UNIVERSE_BITS {
                    // Stored permutations on [v] would be too large.
                    return None;
                }
                let tile_bits = m.iter().map(|&mi| ceil_log2(mi).min(v_bits)).collect();
                let pools = next_pow2((n as f64).powf(2.0 / 3.0).ceil() as u64).min(1 << b2_bits);
                Some(Level2Shape {
                    b2_bits,
                    v_bits,
                    tile_bits,
                    pools,
                })
            }
        } else {
            None
        };
        Some(Self {
            t_eff,
            budgets,
            mu,
            b1_bits: ceil_log2(b1),
            k1,
            level2,
        })
    }
}

#[derive(Clone, Debug)]
struct Level1 {
    qhf: QuotientHashFn,
    dicts: Vec<BaseDict>,
    allocs: Vec<CodeAllocator>,
    k1: u64,
}

#[derive(Clone, Debug)]
struct Level2 {
    qhf: QuotientHashFn,
    pools: Vec<Vec<StoredPerm>>,
    buckets: Vec<TileFilterBucket>,
    codes_per_bucket: u64,
}

impl Level2 {
    fn perms(&self, bucket: u64) -> &[StoredPerm] {
        &self.pools[(bucket % self.pools.len() as u64) as usize]
    }
}

#[derive(Clone, Debug)]
struct Flat {
    dict: BaseDict,
    alloc: CodeAllocator,
}

impl Flat {
    fn new(key_bits: u32, codes: u64, rng: &mut StreamRng) -> Result<Self> {
        Ok(Self {
            dict: BaseDict::new(key_bits, ceil_log2(codes), codes, Policy::Rebuild, rng)?,
            alloc: CodeAllocator::new(codes),
        })
    }
}

#[derive(Clone, Debug)]
struct Layers {
    l1: Level1,
    l2: Option<Level2>,
    l3: Flat,
    /// First code of levels 2 and 3.
    bases: [u64; 2],
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum Body {
    Brute(Flat),
    Layered(Box<Layers>),
}

/// Which level stores a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Brute,
    One,
    Two,
    Three,
}

#[derive(Clone, Debug)]
pub struct MembPhDict {
    params: MembPhParams,
    shape: Option<LayeredShape>,
    root: u64,
    generation: u64,
    rebuilds: u64,
    live: u64,
    body: Body,
}

enum Placed {
    Code(u64),
    /// Level 3 could not take the key.
    Full,
}

impl MembPhDict {
    pub fn new<R: RngCore + ?Sized>(params: MembPhParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let shape = LayeredShape::for_params(&params);
        let root = rng.next_u64();
        let body = Self::sample_body(&params, shape.as_ref(), &mut child_stream(root, 0))?;
        Ok(Self {
            params,
            shape,
            root,
            generation: 0,
            rebuilds: 0,
            live: 0,
            body,
        })
    }

    fn sample_body(
        p: &MembPhParams,
        shape: Option<&LayeredShape>,
        rng: &mut StreamRng,
    ) -> Result<Body> {
        let Some(s) = shape else {
            return Ok(Body::Brute(Flat::new(p.u_bits, p.n, rng)?));
        };
        let l1 = {
            let qhf = QuotientHashFn::sample(QhfParams::new(p.u_bits, s.b1_bits, p.n), rng)?;
            let q_bits = p.u_bits - s.b1_bits;
            let b1 = 1usize << s.b1_bits;
            let dicts = (0..b1)
                .map(|_| BaseDict::new(q_bits, ceil_log2(s.k1), s.k1, Policy::NoRebuild, rng))
                .collect::<Result<_>>()?;
            Level1 {
                qhf,
                dicts,
                allocs: (0..b1).map(|_| CodeAllocator::new(s.k1)).collect(),
                k1: s.k1,
            }
        };
        let l2 = match &s.level2 {
            None => None,
            Some(l2) => {
                let qhf = QuotientHashFn::sample(QhfParams::new(p.u_bits, l2.b2_bits, p.n), rng)?;
                let v = 1u64 << l2.v_bits;
                let pools = (0..l2.pools)
                    .map(|_| {
                        (0..l2.tile_bits.len())
                            .map(|_| StoredPerm::sample(v, rng))
                            .collect()
                    })
                    .collect();
                let buckets = (0..1u64 << l2.b2_bits)
                    .map(|_| TileFilterBucket::new(l2.v_bits, &l2.tile_bits))
                    .collect();
                Some(Level2 {
                    qhf,
                    pools,
                    buckets,
                    codes_per_bucket: l2.codes_per_bucket(),
                })
            }
        };
        let l3 = Flat::new(p.u_bits, s.budgets[2], rng)?;
        let bases = [p.n + s.budgets[0], p.n + s.budgets[0] + s.budgets[1]];
        Ok(Body::Layered(Box::new(Layers { l1, l2, l3, bases })))
    }

    pub fn params(&self) -> &MembPhParams {
        &self.params
    }

    pub fn shape(&self) -> Option<&LayeredShape> {
        self.shape.as_ref()
    }

    pub fn mode(&self) -> Mode {
        match self.body {
            Body::Brute(_) => Mode::BruteForce,
            Body::Layered(_) => Mode::Layered,
        }
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

    /// Hashcodes lie in `[0, range)`.
    pub fn range(&self) -> u64 {
        self.params.range()
    }

    /// Full-structure rebuilds; each may have changed resident codes.
    pub fn rebuild_count(&self) -> u64 {
        self.rebuilds
    }

    /// Rehashes performed by the level-1 bucket dictionaries.
    pub fn level1_rebuild_count(&self) -> u64 {
        match &self.body {
            Body::Layered(l) => l.l1.dicts.iter().map(BaseDict::rebuild_count).sum(),
            Body::Brute(_) => 0,
        }
    }

    fn check_key(&self, x: u64) -> Result<()> {
        if self.params.u_bits < 64 && x >> self.params.u_bits != 0 {
            return Err(Error::OutOfDomain {
                value: x,
                bits: self.params.u_bits,
            });
        }
        Ok(())
    }

    pub fn member(&self, x: u64) -> bool {
        self.locate(x).is_some()
    }

    pub fn hashcode(&self, x: u64) -> Result<u64> {
        self.locate(x).map(|(_, c)| c).ok_or(Error::NotResident(x))
    }

    /// Level storing `x`.
    pub fn level_of(&self, x: u64) -> Option<Level> {
        self.locate(x).map(|(l, _)| l)
    }

    fn locate(&self, x: u64) -> Option<(Level, u64)> {
        if self.check_key(x).is_err() {
            return None;
        }
        match &self.body {
            Body::Brute(f) => f.dict.get(x).map(|c| (Level::Brute, c)),
            Body::Layered(l) => {
                let (b, q) = l.l1.qhf.eval_unchecked(x);
                if let Some(local) = l.l1.dicts[b as usize].get(q) {
                    return Some((Level::One, b * l.l1.k1 + local));
                }
                if let Some(l2) = &l.l2 {
                    let (b, q) = l2.qhf.eval_unchecked(x);
                    let bucket = &l2.buckets[b as usize];
                    if let Some((level, tile)) = bucket.query(q, l2.perms(b)) {
                        let code =
                            l.bases[0] + b * l2.codes_per_bucket + bucket.local_code(level, tile);
                        return Some((Level::Two, code));
                    }
                }
                l.l3.dict.get(x).map(|c| (Level::Three, l.bases[1] + c))
            }
        }
    }

    pub fn insert(&mut self, x: u64) -> Result<u64> {
        self.check_key(x)?;
        if self.member(x) {
            return Err(Error::Duplicate(x));
        }
        if self.live >= self.params.n {
            return Err(Error::CapacityExceeded(self.params.n));
        }
        match Self::place(&mut self.body, x)? {
            Placed::Code(c) => {
                self.live += 1;
                Ok(c)
            }
            Placed::Full => {
                self.rebuild_with(x)?;
                self.live += 1;
                self.hashcode(x)
            }
        }
    }

    fn place(body: &mut Body, x: u64) -> Result<Placed> {
        match body {
            Body::Brute(f) => {
                let code = f.alloc.alloc()?;
                f.dict.insert(x, code)?;
                Ok(Placed::Code(code))
            }
            Body::Layered(l) => {
                let (b, q) = l.l1.qhf.eval_unchecked(x);
                let (dict, alloc) = (&mut l.l1.dicts[b as usize], &mut l.l1.allocs[b as usize]);
                if dict.len() < dict.capacity() {
                    let local = alloc.alloc()?;
                    match dict.insert(q, local) {
                        Ok(_) => return Ok(Placed::Code(b * l.l1.k1 + local)),
                        Err(Error::InsertFailed(_)) => alloc.free(local)?,
                        Err(e) => return Err(e),
                    }
                }
                if let Some(l2) = &mut l.l2 {
                    let (b, q) = l2.qhf.eval_unchecked(x);
                    let perms = &l2.pools[(b % l2.pools.len() as u64) as usize];
                    let bucket = &mut l2.buckets[b as usize];
                    if let Some((level, tile)) = bucket.insert(q, perms)? {
                        let code =
                            l.bases[0] + b * l2.codes_per_bucket + bucket.local_code(level, tile);
                        return Ok(Placed::Code(code));
                    }
                }
                let Ok(code) = l.l3.alloc.alloc() else {
                    return Ok(Placed::Full);
                };
                match l.l3.dict.insert(x, code) {
                    Ok(_) => Ok(Placed::Code(l.bases[1] + code)),
                    Err(Error::RebuildFailed(_)) => {
                        l.l3.alloc.free(code)?;
                        Ok(Placed::Full)
                    }
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Resamples every component and reinserts all residents plus `extra`.
    fn rebuild_with(&mut self, extra: u64) -> Result<()> {
        let mut keys = self.keys();
        keys.push(extra);
        for _ in 0..MAX_STRUCTURE_REBUILDS {
            self.generation += 1;
            self.rebuilds += 1;
            let mut rng = child_stream(split(self.root, self.generation), 0);
            let mut body = Self::sample_body(&self.params, self.shape.as_ref(), &mut rng)?;
            let mut ok = true;
            for &k in &keys {
                if !matches!(Self::place(&mut body, k)?, Placed::Code(_)) {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.body = body;
                return Ok(());
            }
        }
        Err(Error::RebuildFailed(MAX_STRUCTURE_REBUILDS))
    }

    /// Removes `x`, returning the code it held.
    pub fn delete(&mut self, x: u64) -> Result<u64> {
        let (level, code) = self.locate(x).ok_or(Error::NotResident(x))?;
        match (&mut self.body, level) {
            (Body::Brute(f), _) => {
                f.dict.remove(x);
                f.alloc.free(code)?;
            }
            (Body::Layered(l), Level::One) => {
                let (b, q) = l.l1.qhf.eval_unchecked(x);
                let local = l.l1.dicts[b as usize]
                    .remove(q)
                    .expect("located at level 1");
                l.l1.allocs[b as usize].free(local)?;
            }
            (Body::Layered(l), Level::Two) => {
                let l2 = l.l2.as_mut().expect("located at level 2");
                let (b, q) = l2.qhf.eval_unchecked(x);
                let perms = &l2.pools[(b % l2.pools.len() as u64) as usize];
                l2.buckets[b as usize].delete(q, perms)?;
            }
            (Body::Layered(l), _) => {
                let local = l.l3.dict.remove(x).expect("located at level 3");
                l.l3.alloc.free(local)?;
            }
        }
        self.live -= 1;
        Ok(code)
    }

    /// All resident keys, recovered from the stored quotients.
    pub fn keys(&self) -> Vec<u64> {
        match &self.body {
            Body::Brute(f) => f.dict.iter().map(|(k, _)| k).collect(),
            Body::Layered(l) => {
                let mut out = Vec::with_capacity(self.live as usize);
                for (b, d) in l.l1.dicts.iter().enumerate() {
                    out.extend(
                        d.iter()
                            .map(|(q, _)| l.l1.qhf.invert_unchecked(b as u64, q)),
                    );
                }
                if let Some(l2) = &l.l2 {
                    for (b, bucket) in l2.buckets.iter().enumerate() {
                        let b = b as u64;
                        out.extend(
                            bucket
                                .entries(l2.perms(b))
                                .map(|(q, _, _)| l2.qhf.invert_unchecked(b, q)),
                        );
                    }
                }
                out.extend(l.l3.dict.iter().map(|(k, _)| k));
                out
            }
        }
    }

    /// Residents per level: brute-force or level 1, level 2, level 3.
    pub fn level_counts(&self) -> [u64; 3] {
        match &self.body {
            Body::Brute(f) => [f.dict.len(), 0, 0],
            Body::Layered(l) => [
                l.l1.dicts.iter().map(BaseDict::len).sum(),
                l.l2.as_ref()
                    .map_or(0, |l2| l2.buckets.iter().map(|b| b.len() as u64).sum()),
                l.l3.dict.len(),
            ],
        }
    }
}

impl SpaceUsage for MembPhDict {
    fn space(&self) -> SpaceLedger {
        let mut l = SpaceLedger::new();
        l.add("header", HEADER_BITS);
        match &self.body {
            Body::Brute(f) => {
                l.absorb("brute.dict", &f.dict.space());
                l.absorb("brute.alloc", &f.alloc.space());
            }
            Body::Layered(ly) => {
                l.absorb("level1.qhf", &ly.l1.qhf.space());
                for d in &ly.l1.dicts {
                    l.absorb("level1.dict", &d.space());
                }
                for a in &ly.l1.allocs {
                    l.absorb("level1.alloc", &a.space());
                }
                if let Some(l2) = &ly.l2 {
                    l.absorb("level2.qhf", &l2.qhf.space());
                    l.add(
                        "level2.pools",
                        l2.pools.iter().flatten().map(StoredPerm::space_bits).sum(),
                    );
                    l.add(
                        "level2.tiles",
                        l2.buckets.iter().map(TileFilterBucket::slot_bits).sum(),
                    );
                }
                l.absorb("level3.dict", &ly.l3.dict.space());
                l.absorb("level3.alloc", &ly.l3.alloc.space());
            }
        }
        l
    }

    fn write_flat(&self, w: &mut FlatWriter<'_>) {
        w.fields([
            (self.params.n, 64),
            (self.params.t, 64),
            (self.params.u_bits as u64, 64),
            (self.root, 64),
            (self.generation, 64),
            (self.rebuilds, 64),
            (self.live, 64),
            (self.mode() as u64, 64),
        ]);
        match &self.body {
            Body::Brute(f) => {
                f.dict.write_flat(w);
                f.alloc.write_flat(w);
            }
            Body::Layered(ly) => {
                ly.l1.qhf.write_flat(w);
                for d in &ly.l1.dicts {
                    d.write_flat(w);
                }
                for a in &ly.l1.allocs {
                    a.write_flat(w);
                }
                if let Some(l2) = &ly.l2 {
                    l2.qhf.write_flat(w);
                    w.fields(l2.pools.iter().flatten().flat_map(StoredPerm::fields));
                    w.fields(
                        l2.buckets
                            .iter()
                            .flat_map(|b| b.slot_arrays())
                            .flat_map(|a| {
                                let width = a.width();
                                a.iter().map(move |c| (c, width))
                            }),
                    );
                }
                ly.l3.dict.write_flat(w);
                ly.l3.alloc.write_flat(w);
            }
        }
    }
}
