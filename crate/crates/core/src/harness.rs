//! Random workloads checked against a shadow model.
//!
//! The shadow records every resident key with the code (and payload) it received at insertion.
//! Each step compares the structure with it: membership, code range, distinctness of live codes,
//! stability of each key's code, and payload values.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::bits::mask;
use crate::error::{Error, Result};
use crate::memb_ph::{MembPhDict, MembPhParams, Tunables};
use crate::ph_only::{PhOnlyDict, PhOnlyParams, DEFAULT_C};
use crate::qhf::{QhfParams, QuotientHashFn};
use crate::retrieval::RetrievalDict;
use crate::seed::{below, child_stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    MembPh,
    PhOnly,
    RetrievalMemb,
    RetrievalPh,
    Qhf,
}

impl Kind {
    pub const ALL: [Kind; 5] = [
        Kind::MembPh,
        Kind::PhOnly,
        Kind::RetrievalMemb,
        Kind::RetrievalPh,
        Kind::Qhf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::MembPh => "memb-ph",
            Kind::PhOnly => "ph-only",
            Kind::RetrievalMemb => "retrieval-memb",
            Kind::RetrievalPh => "retrieval-ph",
            Kind::Qhf => "qhf",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Kind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown structure kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub kind: Kind,
    pub n: u64,
    pub t: u64,
    pub u_bits: u32,
    pub ops: u64,
    pub seed: u64,
    /// Payload width for the retrieval kinds.
    pub r: u32,
    pub c: f64,
    pub tunables: Tunables,
    /// Corrupts the shadow's record of one resident code at this step, to prove detection works.
    pub fault_at: Option<u64>,
}

impl VerifyConfig {
    pub fn new(kind: Kind, n: u64, t: u64, u_bits: u32, ops: u64, seed: u64) -> Self {
        Self {
            kind,
            n,
            t,
            u_bits,
            ops,
            seed,
            r: 16,
            c: DEFAULT_C,
            tunables: Tunables::default(),
            fault_at: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub ops: u64,
    pub inserts: u64,
    pub deletes: u64,
    pub queries: u64,
    pub peak_live: u64,
    /// Structure rebuilds, each of which may reassign codes.
    pub rebuilds: u64,
    pub discrepancies: u64,
    pub first_discrepancy: Option<String>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.discrepancies == 0
    }

    fn flag(&mut self, step: u64, what: String) {
        self.discrepancies += 1;
        if self.first_discrepancy.is_none() {
            self.first_discrepancy = Some(format!("step {step}: {what}"));
        }
    }
}

enum Engine {
    Memb(MembPhDict),
    Ph(PhOnlyDict),
    RMemb(RetrievalDict<MembPhDict>),
    RPh(RetrievalDict<PhOnlyDict>),
}

impl Engine {
    fn build(cfg: &VerifyConfig, rng: &mut StreamRng) -> Result<Self> {
        let memb = MembPhParams {
            n: cfg.n,
            t: cfg.t,
            u_bits: cfg.u_bits,
            tunables: cfg.tunables,
        };
        let ph = PhOnlyParams {
            n: cfg.n,
            t: cfg.t,
            u_bits: cfg.u_bits,
            c: cfg.c,
            tunables: cfg.tunables,
        };
        Ok(match cfg.kind {
            Kind::MembPh => Engine::Memb(MembPhDict::new(memb, rng)?),
            Kind::PhOnly => Engine::Ph(PhOnlyDict::new(ph, rng)?),
            Kind::RetrievalMemb => {
                Engine::RMemb(RetrievalDict::new(MembPhDict::new(memb, rng)?, cfg.r)?)
            }
            Kind::RetrievalPh => Engine::RPh(RetrievalDict::new(PhOnlyDict::new(ph, rng)?, cfg.r)?),
            Kind::Qhf => unreachable!("qhf is verified separately"),
        })
    }

    fn insert(&mut self, x: u64, payload: u64) -> Result<u64> {
        match self {
            Engine::Memb(d) => d.insert(x),
            Engine::Ph(d) => d.insert(x),
            Engine::RMemb(d) => d.insert(x, payload),
            Engine::RPh(d) => d.insert(x, payload),
        }
    }

    fn delete(&mut self, x: u64) -> Result<u64> {
        match self {
            Engine::Memb(d) => d.delete(x),
            Engine::Ph(d) => d.delete(x),
            Engine::RMemb(d) => d.delete(x),
            Engine::RPh(d) => d.delete(x),
        }
    }

    fn code(&self, x: u64) -> Option<u64> {
        match self {
            Engine::Memb(d) => d.hashcode(x).ok(),
            Engine::Ph(d) => d.hashcode(x),
            Engine::RMemb(d) => d.code_of(x).ok(),
            Engine::RPh(d) => d.code_of(x).ok(),
        }
    }

    fn member(&self, x: u64) -> Option<bool> {
        match self {
            Engine::Memb(d) => Some(d.member(x)),
            Engine::RMemb(d) => Some(d.engine().member(x)),
            _ => None,
        }
    }

    fn payload(&self, x: u64) -> Option<u64> {
        match self {
            Engine::RMemb(d) => d.retrieve(x).ok(),
            Engine::RPh(d) => d.retrieve(x).ok(),
            _ => None,
        }
    }

    fn update(&mut self, x: u64, payload: u64) -> Option<Result<u64>> {
        match self {
            Engine::RMemb(d) => Some(d.update(x, payload)),
            Engine::RPh(d) => Some(d.update(x, payload)),
            _ => None,
        }
    }

    fn has_payloads(&self) -> bool {
        matches!(self, Engine::RMemb(_) | Engine::RPh(_))
    }

    fn len(&self) -> u64 {
        match self {
            Engine::Memb(d) => d.len(),
            Engine::Ph(d) => d.len(),
            Engine::RMemb(d) => d.len(),
            Engine::RPh(d) => d.len(),
        }
    }

    fn rebuilds(&self) -> u64 {
        match self {
            Engine::Memb(d) => d.rebuild_count(),
            Engine::Ph(d) => d.overflow_rebuilds(),
            Engine::RMemb(d) => d.engine().rebuild_count(),
            Engine::RPh(d) => d.engine().overflow_rebuilds(),
        }
    }

    /// Rebuilds a ph-only engine after a collision-budget overflow.
    fn rebuild(&mut self, entries: &[(u64, u64)], rng: &mut StreamRng) -> Result<()> {
        match self {
            Engine::Ph(d) => {
                let keys: Vec<u64> = entries.iter().map(|&(k, _)| k).collect();
                d.rebuild(&keys, rng)
            }
            Engine::RPh(d) => d.rebuild(entries, rng),
            _ => Err(Error::InvalidParams(
                "engine has no caller-driven rebuild".into(),
            )),
        }
    }
}

#[derive(Default)]
struct Shadow {
    /// key -> (code, payload)
    by_key: HashMap<u64, (u64, u64)>,
    by_code: HashMap<u64, u64>,
    keys: Vec<u64>,
    position: HashMap<u64, usize>,
    recently_deleted: Vec<u64>,
}

impl Shadow {
    fn add(&mut self, x: u64, code: u64, payload: u64) {
        self.by_key.insert(x, (code, payload));
        self.by_code.insert(code, x);
        self.position.insert(x, self.keys.len());
        self.keys.push(x);
    }

    fn remove(&mut self, x: u64) -> (u64, u64) {
        let (code, payload) = self.by_key.remove(&x).expect("resident");
        if self.by_code.get(&code) == Some(&x) {
            self.by_code.remove(&code);
        }
        let i = self.position.remove(&x).expect("resident");
        self.keys.swap_remove(i);
        if let Some(&moved) = self.keys.get(i) {
            self.position.insert(moved, i);
        }
        if self.recently_deleted.len() >= 64 {
            self.recently_deleted.remove(0);
        }
        self.recently_deleted.push(x);
        (code, payload)
    }

    fn pick<R: RngCore>(&self, rng: &mut R) -> u64 {
        self.keys[below(rng, self.keys.len() as u64) as usize]
    }

    fn resync(&mut self, engine: &Engine) {
        self.by_code.clear();
        for (&x, entry) in self.by_key.iter_mut() {
            if let Some(c) = engine.code(x) {
                entry.0 = c;
                self.by_code.insert(c, x);
            }
        }
    }
}

fn draw_key<R: RngCore>(rng: &mut R, u_bits: u32) -> u64 {
    if u_bits == 0 {
        0
    } else {
        rng.next_u64() >> (64 - u_bits)
    }
}

/// Runs `cfg.ops` random operations and compares the structure with the shadow model.
pub fn verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.kind == Kind::Qhf {
        return verify_qhf(cfg);
    }
    let mut build_rng = child_stream(cfg.seed, 0);
    let mut ops_rng = child_stream(cfg.seed, 1);
    let mut rebuild_rng = child_stream(cfg.seed, 2);
    let mut engine = Engine::build(cfg, &mut build_rng)?;
    let range = cfg.n + cfg.t;
    let r_mask = if engine.has_payloads() {
        mask(cfg.r)
    } else {
        0
    };
    let mut sh = Shadow::default();
    let mut rep = VerifyReport::default();

    for step in 0..cfg.ops {
        rep.ops += 1;
        if cfg.fault_at == Some(step) && !sh.keys.is_empty() {
            let x = sh.pick(&mut ops_rng);
            if let Some(e) = sh.by_key.get_mut(&x) {
                e.0 ^= 1;
            }
        }
        let live = sh.keys.len() as u64;
        let roll = below(&mut ops_rng, 100);
        if roll < 45 && live < cfg.n {
            let x = if roll < 5 && !sh.recently_deleted.is_empty() {
                sh.recently_deleted[below(&mut ops_rng, sh.recently_deleted.len() as u64) as usize]
            } else {
                draw_key(&mut ops_rng, cfg.u_bits)
            };
            if sh.by_key.contains_key(&x) {
                continue;
            }
            let payload = ops_rng.next_u64() & r_mask;
            if engine.member(x) == Some(true) {
                rep.flag(step, format!("key {x} reported resident before insertion"));
            }
            let before = engine.rebuilds();
            let code = match engine.insert(x, payload) {
                Ok(c) => c,
                Err(Error::CollisionBudget(_)) => {
                    let mut entries: Vec<(u64, u64)> =
                        sh.keys.iter().map(|k| (*k, sh.by_key[k].1)).collect();
                    entries.push((x, payload));
                    engine.rebuild(&entries, &mut rebuild_rng)?;
                    engine.code(x).ok_or(Error::NotResident(x))?
                }
                Err(e) => {
                    rep.flag(step, format!("insert of {x} failed: {e}"));
                    continue;
                }
            };
            rep.inserts += 1;
            if engine.rebuilds() != before {
                rep.rebuilds += engine.rebuilds() - before;
                sh.resync(&engine);
            }
            if code >= range {
                rep.flag(step, format!("code {code} of {x} outside [0, {range})"));
            }
            if let Some(&other) = sh.by_code.get(&code) {
                rep.flag(step, format!("code {code} of {x} already held by {other}"));
            }
            sh.add(x, code, payload);
            rep.peak_live = rep.peak_live.max(sh.keys.len() as u64);
        } else if roll < 75 && live > 0 {
            let x = sh.pick(&mut ops_rng);
            let (code, _) = sh.remove(x);
            rep.deletes += 1;
            match engine.delete(x) {
                Ok(c) if c == code => {}
                Ok(c) => rep.flag(
                    step,
                    format!("delete of {x} freed code {c}, recorded {code}"),
                ),
                Err(e) => rep.flag(step, format!("delete of {x} failed: {e}")),
            }
            if engine.member(x) == Some(true) {
                rep.flag(step, format!("key {x} still resident after deletion"));
            }
        } else if roll < 90 && live > 0 {
            rep.queries += 1;
            let x = sh.pick(&mut ops_rng);
            let (code, payload) = sh.by_key[&x];
            check_resident(&engine, &mut rep, step, x, code, payload);
            if roll >= 85 && engine.has_payloads() {
                let fresh = ops_rng.next_u64() & r_mask;
                match engine.update(x, fresh) {
                    Some(Ok(c)) if c == code => sh.by_key.get_mut(&x).unwrap().1 = fresh,
                    other => rep.flag(step, format!("update of {x} returned {other:?}")),
                }
            }
        } else {
            rep.queries += 1;
            let x = draw_key(&mut ops_rng, cfg.u_bits);
            let resident = sh.by_key.contains_key(&x);
            match engine.member(x) {
                Some(m) if m != resident => rep.flag(
                    step,
                    format!("membership of {x} is {m}, expected {resident}"),
                ),
                _ => {}
            }
            if let Some(&(code, payload)) = sh.by_key.get(&x) {
                check_resident(&engine, &mut rep, step, x, code, payload);
            } else if let Some(c) = engine.code(x) {
                if engine.member(x).is_some() {
                    rep.flag(step, format!("code {c} reported for non-resident {x}"));
                } else if c >= range {
                    rep.flag(
                        step,
                        format!("non-resident probe {x} gave code {c} out of range"),
                    );
                }
            }
        }
        if engine.len() != sh.keys.len() as u64 {
            rep.flag(
                step,
                format!("size {} != shadow {}", engine.len(), sh.keys.len()),
            );
        }
    }
    let mut codes: HashMap<u64, u64> = HashMap::new();
    for (&x, &(code, payload)) in &sh.by_key {
        check_resident(&engine, &mut rep, cfg.ops, x, code, payload);
        if let Some(c) = engine.code(x) {
            if let Some(other) = codes.insert(c, x) {
                rep.flag(cfg.ops, format!("live keys {x} and {other} share code {c}"));
            }
        }
    }
    Ok(rep)
}

/// A structure filled to capacity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filled {
    pub bits: u64,
    pub len: u64,
    pub rebuilds: u64,
}

/// Builds the structure described by `cfg` and inserts `n` distinct random keys. For
/// [`Kind::Qhf`] nothing is inserted and `bits` covers a function with `n` buckets.
pub fn fill(cfg: &VerifyConfig) -> Result<Filled> {
    use crate::space::SpaceUsage;
    if cfg.kind == Kind::Qhf {
        let b_bits = crate::bits::ceil_log2(cfg.n).min(cfg.u_bits);
        let h = QuotientHashFn::sample(
            QhfParams::new(cfg.u_bits, b_bits, cfg.n),
            &mut child_stream(cfg.seed, 0),
        )?;
        return Ok(Filled {
            bits: h.space_bits(),
            len: 0,
            rebuilds: 0,
        });
    }
    let mut engine = Engine::build(cfg, &mut child_stream(cfg.seed, 0))?;
    let mut rng = child_stream(cfg.seed, 1);
    let mut rebuild_rng = child_stream(cfg.seed, 2);
    let r_mask = if engine.has_payloads() {
        mask(cfg.r)
    } else {
        0
    };
    let mut entries: Vec<(u64, u64)> = Vec::with_capacity(cfg.n as usize);
    let mut seen = std::collections::HashSet::with_capacity(cfg.n as usize);
    while (entries.len() as u64) < cfg.n {
        let x = draw_key(&mut rng, cfg.u_bits);
        if !seen.insert(x) {
            continue;
        }
        let p = rng.next_u64() & r_mask;
        match engine.insert(x, p) {
            Ok(_) => {}
            Err(Error::CollisionBudget(_)) => {
                let mut all = entries.clone();
                all.push((x, p));
                engine.rebuild(&all, &mut rebuild_rng)?;
            }
            Err(e) => return Err(e),
        }
        entries.push((x, p));
    }
    let bits = match &engine {
        Engine::Memb(d) => d.space_bits(),
        Engine::Ph(d) => d.space_bits(),
        Engine::RMemb(d) => d.space_bits(),
        Engine::RPh(d) => d.space_bits(),
    };
    Ok(Filled {
        bits,
        len: engine.len(),
        rebuilds: engine.rebuilds(),
    })
}

fn check_resident(
    engine: &Engine,
    rep: &mut VerifyReport,
    step: u64,
    x: u64,
    code: u64,
    payload: u64,
) {
    if engine.member(x) == Some(false) {
        rep.flag(step, format!("resident {x} reported absent"));
    }
    match engine.code(x) {
        Some(c) if c == code => {}
        got => rep.flag(step, format!("code of {x} is {got:?}, recorded {code}")),
    }
    if engine.has_payloads() {
        match engine.payload(x) {
            Some(p) if p == payload => {}
            got => rep.flag(
                step,
                format!("payload of {x} is {got:?}, recorded {payload}"),
            ),
        }
    }
}

/// Round trips `ops` random keys through a sampled quotient hash function.
fn verify_qhf(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let b_bits = crate::bits::ceil_log2(cfg.n).min(cfg.u_bits);
    let h = QuotientHashFn::sample(
        QhfParams::new(cfg.u_bits, b_bits, cfg.n),
        &mut child_stream(cfg.seed, 0),
    )?;
    let mut rng = child_stream(cfg.seed, 1);
    let mut rep = VerifyReport::default();
    for step in 0..cfg.ops {
        rep.ops += 1;
        rep.queries += 1;
        let x = draw_key(&mut rng, cfg.u_bits);
        let (b, q) = h.eval(x)?;
        if b > mask(b_bits) || q > mask(cfg.u_bits - b_bits) {
            rep.flag(step, format!("eval({x}) = ({b}, {q}) out of range"));
        }
        let mut back = h.invert(b, q)?;
        if cfg.fault_at == Some(step) {
            back ^= 1;
        }
        if back != x {
            rep.flag(step, format!("invert(eval({x})) = {back}"));
        }
    }
    Ok(rep)
}
