//! Acceptance criteria, each at its stated tolerance. Prints one PASS/FAIL line per criterion
//! and fails if any criterion fails.
//!
//! Runs without the libtest harness: criteria execute in order on the main thread, so the timing
//! criterion is not disturbed by sibling tests and the report is never captured.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use qdict::cli::{self, RunArgs, RunConfig};
use qdict::harness::{fill, verify, Kind, VerifyConfig};
use qdict::par::map_trials;
use qdict::qhf::{collision_census, insertion_overflow_trace, WorkloadOp};
use qdict::seed::{below, child_stream};
use qdict::{MembPhDict, MembPhParams, PhOnlyDict, PhOnlyParams, QhfParams, QuotientHashFn};
use rand::RngCore;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_set(n: u64, u_bits: u32, seed: u64) -> Vec<u64> {
    let mut rng = child_stream(seed, 1);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while (out.len() as u64) < n {
        let x = below(&mut rng, 1 << u_bits);
        if seen.insert(x) {
            out.push(x);
        }
    }
    out
}

/// `2 n^2 / b + n^alpha`, computed here rather than taken from the library.
fn pair_bound(n: f64, b: f64) -> f64 {
    2.0 * n * n / b + n.powf(0.95)
}

fn c1_bijectivity() -> Outcome {
    let start = Instant::now();
    let mut configs = Vec::new();
    for b_bits in 4..=12u32 {
        for n in [1u64 << 6, 1 << 10] {
            for s in 0..20u64 {
                configs.push((b_bits, n, s));
            }
        }
    }
    let violations: u64 = map_trials(1, configs.len() as u64, |i, seed| {
        let (b_bits, n, _) = configs[i as usize];
        let h = QuotientHashFn::sample(QhfParams::new(16, b_bits, n), &mut child_stream(seed, 0))
            .expect("valid params");
        let mut seen = vec![false; 1 << 16];
        let mut bad = 0u64;
        for x in 0..1u64 << 16 {
            let (b, q) = h.eval(x).unwrap();
            let image = ((b << (16 - b_bits)) | q) as usize;
            if seen[image] || h.invert(b, q).unwrap() != x {
                bad += 1;
            }
            seen[image] = true;
        }
        bad
    })
    .into_iter()
    .sum();
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && elapsed <= Duration::from_secs(60),
        format!(
            "{} functions, {violations} violations, {:.1}s",
            configs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn census_trials(n: u64, u_bits: u32, b_bits: u32, tau: u64, trials: u64, root: u64) -> Vec<u64> {
    map_trials(root, trials, |_, seed| {
        let mut p = QhfParams::new(u_bits, b_bits, n);
        p.delta = 0.5;
        let h = QuotientHashFn::sample(p, &mut child_stream(seed, 0)).unwrap();
        collision_census(&h, &random_set(n, u_bits, seed), tau)
            .unwrap()
            .count
    })
}

fn c2_sparse_concentration() -> Outcome {
    let start = Instant::now();
    let (n, b) = (1024f64, 4096f64);
    let bound = pair_bound(n, b);
    let counts = census_trials(1 << 10, 20, 12, 2, 200, 2);
    let within = counts.iter().filter(|&&c| c as f64 <= bound).count();
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    let elapsed = start.elapsed();
    outcome(
        within >= 198 && mean <= 512.0 && elapsed <= Duration::from_secs(60),
        format!(
            "bound {bound:.1}: {within}/200 within, mean {mean:.1} (<= 512), max {}, {:.1}s",
            counts.iter().max().unwrap(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_dense_concentration() -> Outcome {
    let start = Instant::now();
    let (n, b, delta) = (4096f64, 64f64, 0.5f64);
    let tau = ((1.0 + delta) * n / b + 1.0).ceil() as u64;
    let bound = 2.0 * n * (-delta * delta * n / (3.0 * b)).exp() + n.powf(0.95);
    let counts = census_trials(1 << 12, 20, 6, tau, 200, 3);
    let within = counts.iter().filter(|&&c| c as f64 <= bound).count();
    let elapsed = start.elapsed();
    outcome(
        tau == 97 && within >= 198 && elapsed <= Duration::from_secs(120),
        format!(
            "tau {tau}, bound {bound:.1}: {within}/200 within, max {}, {:.1}s",
            counts.iter().max().unwrap(),
            elapsed.as_secs_f64()
        ),
    )
}

/// `ops` operations keeping at most `cap` live keys: inserts of fresh keys while below `cap`
/// with probability 1/2, deletions of a random live key otherwise.
fn workload(cap: u64, u_bits: u32, ops: u64, seed: u64) -> Vec<WorkloadOp> {
    let mut rng = child_stream(seed, 1);
    let mut live: Vec<u64> = Vec::new();
    let mut resident = HashSet::new();
    let mut out = Vec::with_capacity(ops as usize);
    while (out.len() as u64) < ops {
        let insert = live.is_empty() || ((live.len() as u64) < cap && rng.next_u64() & 1 == 0);
        if insert {
            let x = below(&mut rng, 1 << u_bits);
            if resident.insert(x) {
                live.push(x);
                out.push(WorkloadOp::Insert(x));
            }
        } else {
            let x = live.swap_remove(below(&mut rng, live.len() as u64) as usize);
            resident.remove(&x);
            out.push(WorkloadOp::Delete(x));
        }
    }
    out
}

fn c4_dynamic_overflow() -> Outcome {
    let bound = pair_bound(1024.0, 4096.0);
    let peaks = map_trials(4, 100, |_, seed| {
        let h = QuotientHashFn::sample(QhfParams::new(20, 12, 1 << 10), &mut child_stream(seed, 0))
            .unwrap();
        let t = insertion_overflow_trace(&h, &workload(1 << 10, 20, 100_000, seed), 2).unwrap();
        (t.live_overflow_peak, t.peak_live)
    });
    let within = peaks.iter().filter(|&&(p, _)| p as f64 <= bound).count();
    let live_ok = peaks.iter().all(|&(_, l)| l <= 1024);
    outcome(
        within >= 99 && live_ok,
        format!(
            "bound {bound:.1}: {within}/100 within, max live overflow {}, max live {}",
            peaks.iter().map(|p| p.0).max().unwrap(),
            peaks.iter().map(|p| p.1).max().unwrap()
        ),
    )
}

fn c5_contracts() -> Outcome {
    let start = Instant::now();
    let kinds = [
        Kind::MembPh,
        Kind::PhOnly,
        Kind::RetrievalMemb,
        Kind::RetrievalPh,
    ];
    let points = [
        (1u64 << 10, 1u64 << 10, 20u32),
        (1 << 12, 1 << 6, 32),
        (1 << 12, 0, 32),
    ];
    let runs: Vec<(Kind, (u64, u64, u32))> = kinds
        .iter()
        .flat_map(|&k| points.iter().map(move |&p| (k, p)))
        .collect();
    let reports = map_trials(5, runs.len() as u64, |i, seed| {
        let (kind, (n, t, u)) = runs[i as usize];
        verify(&VerifyConfig::new(kind, n, t, u, 1_000_000, seed))
    });
    let mut bad = Vec::new();
    let mut discrepancies = 0;
    for ((kind, (n, t, u)), rep) in runs.iter().zip(&reports) {
        match rep {
            Ok(r) if r.is_clean() => {}
            Ok(r) => {
                discrepancies += r.discrepancies;
                bad.push(format!("{kind} ({n},{t},2^{u}): {:?}", r.first_discrepancy));
            }
            Err(e) => bad.push(format!("{kind} ({n},{t},2^{u}): {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        bad.is_empty() && elapsed <= Duration::from_secs(300),
        format!(
            "{} runs x 10^6 ops, {discrepancies} discrepancies, {:.1}s{}",
            runs.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join("; "))
            }
        ),
    )
}

fn c6_collision_path() -> Outcome {
    let (n, t) = (1u64 << 12, 1u64 << 10);
    let budget = t as f64 / 4.0 + (n as f64).powf(0.95);
    let fills = map_trials(6, 100, |_, seed| {
        let mut p = PhOnlyParams::new(n, t, 32);
        p.c = 8.0;
        let mut d = PhOnlyDict::new(p, &mut child_stream(seed, 0)).unwrap();
        let mut keys = Vec::with_capacity(n as usize);
        let mut rebuild_rng = child_stream(seed, 2);
        for x in random_set(n, 32, seed) {
            keys.push(x);
            if let Err(qdict::Error::CollisionBudget(_)) = d.insert(x) {
                d.rebuild(&keys, &mut rebuild_rng).unwrap();
            }
        }
        (d.routed_to_second(), d.overflow_rebuilds())
    });
    let within = fills.iter().filter(|&&(r, _)| r as f64 <= budget).count();
    let rebuilds: u64 = fills.iter().map(|f| f.1).sum();
    outcome(
        within >= 99 && rebuilds == 0,
        format!(
            "budget {budget:.1}: {within}/100 within, max routed {}, total overflow rebuilds {rebuilds}",
            fills.iter().map(|f| f.0).max().unwrap()
        ),
    )
}

fn bits_per_key(kind: Kind, n: u64, t: u64, u_bits: u32, seed: u64) -> f64 {
    let f = fill(&VerifyConfig::new(kind, n, t, u_bits, 0, seed)).unwrap();
    assert_eq!(f.len, n);
    f.bits as f64 / n as f64
}

const U_GRID: [u32; 4] = [16, 24, 32, 48];

fn c7_membership_scaling() -> Outcome {
    let n = 1u64 << 12;
    let pts: Vec<(f64, f64)> = U_GRID
        .iter()
        .map(|&u| ((u - 12) as f64, bits_per_key(Kind::MembPh, n, n, u, 7)))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    let shown: Vec<String> = pts.iter().map(|(x, y)| format!("({x}, {y:.2})")).collect();
    outcome(
        r2 >= 0.95 && slope > 0.0 && slope <= 8.0,
        format!("slope {slope:.3}, r^2 {r2:.4}; points {}", shown.join(" ")),
    )
}

fn c8_ph_only_scaling() -> Outcome {
    let n = 1u64 << 12;
    let lo = bits_per_key(Kind::PhOnly, n, n, 16, 8);
    let hi = bits_per_key(Kind::PhOnly, n, n, 48, 8);
    let space_ratio = hi / lo;
    let log_ratio = (36.0f64) / 4.0;
    outcome(
        space_ratio <= log_ratio / 2.0,
        format!(
            "bits/key {lo:.2} -> {hi:.2}, ratio {space_ratio:.3} vs limit {:.3}",
            log_ratio / 2.0
        ),
    )
}

fn c9_t_tradeoff() -> Outcome {
    let n = 1u64 << 12;
    let ts = [1u64 << 12, 1 << 6, 0];
    let b: Vec<f64> = ts
        .iter()
        .map(|&t| bits_per_key(Kind::PhOnly, n, t, 32, 9))
        .collect();
    let monotone = b[0] <= b[1] && b[1] <= b[2];
    let gap = b[2] - b[0];
    let need = 12.0 / 4.0;
    outcome(
        monotone && gap >= need,
        format!(
            "bits/key t=2^12 {:.2}, t=2^6 {:.2}, t=0 {:.2}; gap {gap:.2} (>= {need})",
            b[0], b[1], b[2]
        ),
    )
}

fn c10_insert_tail() -> Outcome {
    let (n, t, u) = (1u64 << 16, 1u64 << 14, 20u32);
    let mut times: Vec<u64> = Vec::with_capacity(20 * n as usize);
    let mut l1_rebuilds = 0;
    let mut rebuilds = 0;
    for run in 0..20u64 {
        let mut d = MembPhDict::new(MembPhParams::new(n, t, u), &mut child_stream(run, 0)).unwrap();
        let keys = random_set(n, u, run);
        for &x in &keys {
            let start = Instant::now();
            d.insert(x).unwrap();
            times.push(start.elapsed().as_nanos() as u64);
        }
        assert_eq!(d.len(), n);
        l1_rebuilds += d.level1_rebuild_count();
        rebuilds += d.rebuild_count();
    }
    times.sort_unstable();
    let at = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
    let (median, p999) = (at(0.5), at(0.999));
    outcome(
        p999 <= 50 * median.max(1) && l1_rebuilds == 0,
        format!(
            "median {median} ns, p99.9 {p999} ns ({:.1}x), level-1 rebuilds {l1_rebuilds}, structure rebuilds {rebuilds}",
            p999 as f64 / median.max(1) as f64
        ),
    )
}

fn cli_args(extra: &[&str]) -> RunArgs {
    use clap::Parser;
    let mut argv = vec!["qdict"];
    argv.extend_from_slice(extra);
    match cli::Cli::try_parse_from(argv).unwrap().command {
        cli::Command::Verify(a) | cli::Command::Collisions(a) | cli::Command::Space(a) => a,
    }
}

fn c11_cli_determinism() -> Outcome {
    let coll = [
        "collisions",
        "--n",
        "2^10",
        "--u",
        "2^20",
        "--b",
        "2^12",
        "--trials",
        "50",
        "--seed",
        "11",
    ];
    let space = [
        "space",
        "--kind",
        "ph-only",
        "--n",
        "2^10",
        "--t",
        "0,2^5,2^10",
        "--u",
        "2^16,2^32",
        "--seed",
        "11",
    ];
    let csv = |argv: &[&str]| {
        let cfg = RunConfig::from_args(argv[0], &cli_args(argv)).unwrap();
        if argv[0] == "collisions" {
            cli::collisions_csv(&cfg).unwrap()
        } else {
            cli::space_csv(&cfg).unwrap()
        }
    };
    let same_coll = csv(&coll) == csv(&coll);
    let same_space = csv(&space) == csv(&space);
    let bin = |argv: &[&str]| {
        std::process::Command::new(env!("CARGO_BIN_EXE_qdict"))
            .args(argv)
            .env_remove("QDICT_OUT_DIR")
            .output()
            .unwrap()
            .stdout
    };
    let same_bin = bin(&coll) == bin(&coll) && bin(&space) == bin(&space);
    let matches_lib = bin(&coll) == csv(&coll).into_bytes();
    outcome(
        same_coll && same_space && same_bin && matches_lib,
        format!(
            "collisions {same_coll}, space {same_space}, across processes {same_bin}, process = library {matches_lib}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("bijectivity, exhaustive at u=2^16", c1_bijectivity),
        ("concentration, b >= n", c2_sparse_concentration),
        ("concentration, b < n", c3_dense_concentration),
        ("dynamic overflow accounting", c4_dynamic_overflow),
        ("contract equivalence vs shadow model", c5_contracts),
        ("collision-path budget", c6_collision_path),
        ("space scaling, membership", c7_membership_scaling),
        ("space scaling, perfect hashing only", c8_ph_only_scaling),
        ("slack tradeoff", c9_t_tradeoff),
        ("insert-time tail", c10_insert_tail),
        ("CLI determinism", c11_cli_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
