//! The `qdict` command line: `verify`, `collisions` and `space`.
//!
//! Exit status is 0 on success, 1 when a run finds a discrepancy or a structure fails, and 2 for
//! configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bits::{ceil_log2, lg, mask, next_pow2};
use crate::error::{Error, Result};
use crate::harness::{fill, verify, Kind, VerifyConfig};
use crate::memb_ph::Tunables;
use crate::par::map_trials;
use crate::ph_only::DEFAULT_C;
use crate::qhf::{collision_census, QhfParams, QuotientHashFn, DEFAULT_ALPHA, DEFAULT_DELTA};
use crate::seed::child_stream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DISCREPANCY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const COLLISIONS_HEADER: &str = "trial,seed,n,u,b,tau,count,bound";
pub const SPACE_HEADER: &str =
    "kind,n,t,u,r,bits,bits_per_key,lg_u_over_n,lglg_u_over_n,lg_n_over_t1";

#[derive(Parser, Debug)]
#[command(
    name = "qdict",
    version,
    about = "Dynamic perfect-hashing dictionaries: checks and measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run random operations against a shadow model.
    Verify(RunArgs),
    /// Bucket-overflow census of sampled quotient hash functions, one CSV row per threshold.
    Collisions(RunArgs),
    /// Space of filled structures over a grid of universes and slacks, as CSV.
    Space(RunArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Capacity, as an integer or `2^k`.
    #[arg(long, default_value = "2^10")]
    pub n: String,
    /// Slack; `space` accepts a comma-separated list.
    #[arg(long, default_value = "2^10")]
    pub t: String,
    /// Universe size, a power of two up to `2^64`; `space` accepts a comma-separated list.
    #[arg(long, default_value = "2^20")]
    pub u: String,
    /// Bucket count for `collisions` (default `4n` rounded up to a power of two).
    #[arg(long)]
    pub b: Option<String>,
    /// memb-ph, ph-only, retrieval-memb, retrieval-ph or qhf.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub trials: u64,
    #[arg(long, default_value_t = 100_000)]
    pub ops: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; overrides `--out-dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory receiving `<command>.csv` when `--out` is absent.
    #[arg(long, env = "QDICT_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Tunable override `key=value`; keys: c, c1, c2, c4, c5, alpha, delta, h, r, identity,
    /// adversarial, fault.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Overrides {
    pub c: f64,
    pub tunables: Tunables,
    pub alpha: f64,
    pub delta: f64,
    pub r: u32,
    pub identity: bool,
    pub adversarial: bool,
    pub fault: Option<u64>,
}

impl Default for Overrides {
    fn default() -> Self {
        Self {
            c: DEFAULT_C,
            tunables: Tunables::default(),
            alpha: DEFAULT_ALPHA,
            delta: DEFAULT_DELTA,
            r: 16,
            identity: false,
            adversarial: false,
            fault: None,
        }
    }
}

/// Validated configuration of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: Kind,
    pub n: u64,
    pub ts: Vec<u64>,
    /// `lg u` per grid point.
    pub us: Vec<u32>,
    pub b_bits: Option<u32>,
    pub trials: u64,
    pub ops: u64,
    pub seed: u64,
    pub overrides: Overrides,
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

/// Parses an integer or `2^k`.
pub fn parse_count(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix("2^") {
        let k: u32 = k
            .parse()
            .map_err(|_| config_err(format!("bad exponent in `{s}`")))?;
        if k > 63 {
            return Err(config_err(format!("`{s}` does not fit in 64 bits")));
        }
        return Ok(1 << k);
    }
    s.parse()
        .map_err(|_| config_err(format!("`{s}` is not a count")))
}

/// Parses a power of two up to `2^64` into its exponent.
pub fn parse_pow2_bits(s: &str) -> Result<u32> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix("2^") {
        let k: u32 = k
            .parse()
            .map_err(|_| config_err(format!("bad exponent in `{s}`")))?;
        if k > 64 {
            return Err(config_err(format!("`{s}` exceeds 2^64")));
        }
        return Ok(k);
    }
    let v: u128 = s
        .parse()
        .map_err(|_| config_err(format!("`{s}` is not a power of two")))?;
    if v == 0 || !v.is_power_of_two() || v > 1u128 << 64 {
        return Err(config_err(format!(
            "`{s}` is not a power of two in [1, 2^64]"
        )));
    }
    Ok(v.trailing_zeros())
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(f).collect()
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| config_err(format!("--set {key}: `{v}` is not a number")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!("--set {key}: `{v}` is not a boolean"))),
    }
}

pub fn parse_overrides(sets: &[String]) -> Result<Overrides> {
    let mut o = Overrides::default();
    for item in sets {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| config_err(format!("--set expects key=value, got `{item}`")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "c" => o.c = parse_f64(k, v)?,
            "c1" => o.tunables.c1 = parse_f64(k, v)?,
            "c2" => o.tunables.c2 = parse_f64(k, v)?,
            "c4" => o.tunables.c4 = parse_f64(k, v)?,
            "c5" => o.tunables.c5 = parse_f64(k, v)?,
            "alpha" => o.alpha = parse_f64(k, v)?,
            "delta" => o.delta = parse_f64(k, v)?,
            "h" => {
                let h = parse_count(v)?;
                o.tunables.levels = Some(u32::try_from(h).map_err(|_| config_err("h too large"))?)
            }
            "r" => {
                let r = parse_count(v)?;
                if r > 64 {
                    return Err(config_err(format!("--set r={r}: payload width exceeds 64")));
                }
                o.r = r as u32;
            }
            "identity" => o.identity = parse_bool(k, v)?,
            "adversarial" => o.adversarial = parse_bool(k, v)?,
            "fault" => o.fault = Some(parse_count(v)?),
            _ => return Err(config_err(format!("unknown tunable `{k}`"))),
        }
    }
    Ok(o)
}

impl RunConfig {
    pub fn from_args(cmd: &str, a: &RunArgs) -> Result<Self> {
        let list_ok = cmd == "space";
        let n = parse_count(&a.n)?;
        let ts = parse_list(&a.t, parse_count)?;
        let us = parse_list(&a.u, parse_pow2_bits)?;
        if !list_ok && (ts.len() != 1 || us.len() != 1) {
            return Err(config_err(format!("{cmd} takes a single --t and --u")));
        }
        let kind = match (&a.kind, cmd) {
            (None, "collisions") => Kind::Qhf,
            (None, _) => Kind::MembPh,
            (Some(k), _) => k.parse()?,
        };
        if cmd == "collisions" && kind != Kind::Qhf {
            return Err(config_err("collisions requires --kind qhf"));
        }
        if n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        for &u in &us {
            if n as u128 > 1u128 << u {
                return Err(config_err(format!("n = {n} exceeds u = 2^{u}")));
            }
        }
        for &t in &ts {
            if n.checked_add(t).is_none() {
                return Err(config_err("n + t overflows 64 bits"));
            }
        }
        let b_bits = a.b.as_deref().map(parse_pow2_bits).transpose()?;
        if let Some(b) = b_bits {
            if us.iter().any(|&u| b > u) {
                return Err(config_err("b exceeds u"));
            }
        }
        let overrides = parse_overrides(&a.set)?;
        if !(overrides.alpha > 0.0 && overrides.alpha < 1.0) {
            return Err(config_err("alpha must lie in (0, 1)"));
        }
        if !(overrides.delta > 0.0 && overrides.delta < 1.0) {
            return Err(config_err("delta must lie in (0, 1)"));
        }
        if overrides.c < 1.0 {
            return Err(config_err("c must be >= 1"));
        }
        let out = a
            .out
            .clone()
            .or_else(|| a.out_dir.as_ref().map(|d| d.join(format!("{cmd}.csv"))));
        let cfg = Self {
            kind,
            n,
            ts,
            us,
            b_bits,
            trials: a.trials,
            ops: a.ops,
            seed: a.seed,
            overrides,
            out,
        };
        if kind != Kind::Qhf {
            for (t, u) in cfg.grid() {
                crate::memb_ph::MembPhParams {
                    n,
                    t,
                    u_bits: u,
                    tunables: cfg.overrides.tunables,
                }
                .validate()?;
            }
        }
        Ok(cfg)
    }

    /// `(t, lg u)` grid points, universes outermost.
    pub fn grid(&self) -> Vec<(u64, u32)> {
        self.us
            .iter()
            .flat_map(|&u| self.ts.iter().map(move |&t| (t, u)))
            .collect()
    }

    fn verify_config(&self, t: u64, u_bits: u32, seed: u64) -> VerifyConfig {
        VerifyConfig {
            kind: self.kind,
            n: self.n,
            t,
            u_bits,
            ops: self.ops,
            seed,
            r: self.overrides.r,
            c: self.overrides.c,
            tunables: self.overrides.tunables,
            fault_at: self.overrides.fault,
        }
    }

    /// Bucket bits for `collisions`.
    pub fn collision_b_bits(&self) -> u32 {
        let u = self.us[0];
        self.b_bits
            .unwrap_or_else(|| ceil_log2(next_pow2(self.n).saturating_mul(4)).min(u))
    }
}

fn u_string(u_bits: u32) -> String {
    (1u128 << u_bits).to_string()
}

/// CSV of the `collisions` command.
pub fn collisions_csv(cfg: &RunConfig) -> Result<String> {
    let u_bits = cfg.us[0];
    let b_bits = cfg.collision_b_bits();
    let mut params = if cfg.overrides.identity {
        QhfParams::identity(u_bits, b_bits, cfg.n)
    } else {
        QhfParams::new(u_bits, b_bits, cfg.n)
    };
    params.alpha = cfg.overrides.alpha;
    params.delta = cfg.overrides.delta;
    params.validate()?;
    let thresholds = [
        (2, params.sparse_bound()),
        (params.dense_threshold(), params.dense_bound()),
    ];
    let rows = map_trials(cfg.seed, cfg.trials, |trial, seed| -> Result<String> {
        let h = QuotientHashFn::sample(params, &mut child_stream(seed, 0))?;
        let set = if cfg.overrides.adversarial {
            (0..cfg.n).collect()
        } else {
            random_set(cfg.n, u_bits, seed)
        };
        let mut out = String::new();
        for (tau, bound) in thresholds {
            let c = collision_census(&h, &set, tau)?;
            writeln!(
                out,
                "{trial},{seed},{},{},{},{tau},{},{bound:.6}",
                cfg.n,
                u_string(u_bits),
                1u128 << b_bits,
                c.count
            )
            .expect("write to string");
        }
        Ok(out)
    });
    let mut csv = format!("{COLLISIONS_HEADER}\n");
    for r in rows {
        csv.push_str(&r?);
    }
    Ok(csv)
}

/// `n` distinct keys of `[2^u_bits]` drawn from the trial's stream.
pub fn random_set(n: u64, u_bits: u32, seed: u64) -> Vec<u64> {
    use rand::RngCore;
    let mut rng = child_stream(seed, 1);
    let mut seen = std::collections::HashSet::with_capacity(n as usize);
    let mut out = Vec::with_capacity(n as usize);
    while (out.len() as u64) < n {
        let x = rng.next_u64() & mask(u_bits);
        if seen.insert(x) {
            out.push(x);
        }
    }
    out
}

/// CSV of the `space` command.
pub fn space_csv(cfg: &RunConfig) -> Result<String> {
    let grid = cfg.grid();
    let rows = map_trials(cfg.seed, grid.len() as u64, |i, seed| -> Result<String> {
        let (t, u_bits) = grid[i as usize];
        let filled = fill(&cfg.verify_config(t, u_bits, seed))?;
        let n = cfg.n as f64;
        let u_over_n = 2f64.powi(u_bits as i32) / n;
        let r = match cfg.kind {
            Kind::RetrievalMemb | Kind::RetrievalPh => cfg.overrides.r,
            _ => 0,
        };
        Ok(format!(
            "{},{},{t},{},{r},{},{:.6},{:.6},{:.6},{:.6}\n",
            cfg.kind,
            cfg.n,
            u_string(u_bits),
            filled.bits,
            filled.bits as f64 / n,
            lg(u_over_n),
            lg(lg(u_over_n)),
            lg(n / (t as f64 + 1.0)),
        ))
    });
    let mut csv = format!("{SPACE_HEADER}\n");
    for r in rows {
        csv.push_str(&r?);
    }
    Ok(csv)
}

/// One-line summary of a `verify` run, and whether it was clean.
pub fn verify_summary(cfg: &RunConfig) -> Result<(String, bool)> {
    let (t, u_bits) = (cfg.ts[0], cfg.us[0]);
    let rep = verify(&cfg.verify_config(t, u_bits, cfg.seed))?;
    let status = if rep.is_clean() { "ok" } else { "FAIL" };
    let mut line = format!(
        "verify kind={} n={} t={t} u=2^{u_bits} ops={} seed={} inserts={} deletes={} queries={} peak_live={} rebuilds={} discrepancies={} status={status}",
        cfg.kind, cfg.n, rep.ops, cfg.seed, rep.inserts, rep.deletes, rep.queries, rep.peak_live, rep.rebuilds, rep.discrepancies
    );
    if let Some(first) = &rep.first_discrepancy {
        write!(line, " first=\"{first}\"").expect("write to string");
    }
    Ok((line, rep.is_clean()))
}

fn emit(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| config_err(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| config_err(format!("cannot write output: {e}")))
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::OutOfDomain { .. } => EXIT_CONFIG,
        _ => EXIT_DISCREPANCY,
    }
}

/// Parses `args` (including the program name) and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, args) = match &cli.command {
        Command::Verify(a) => ("verify", a),
        Command::Collisions(a) => ("collisions", a),
        Command::Space(a) => ("space", a),
    };
    let cfg = match RunConfig::from_args(name, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qdict: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match name {
        "verify" => verify_summary(&cfg).and_then(|(line, clean)| {
            if !clean {
                eprintln!("qdict: discrepancy found");
            }
            emit(&cfg, &format!("{line}\n")).map(|_| clean)
        }),
        "collisions" => collisions_csv(&cfg)
            .and_then(|csv| emit(&cfg, &csv))
            .map(|_| true),
        _ => space_csv(&cfg)
            .and_then(|csv| emit(&cfg, &csv))
            .map(|_| true),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_DISCREPANCY,
        Err(e) => {
            eprintln!("qdict: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(cmd: &str, extra: &[&str]) -> RunArgs {
        let mut v = vec!["qdict", cmd];
        v.extend_from_slice(extra);
        match Cli::try_parse_from(v).unwrap().command {
            Command::Verify(a) | Command::Collisions(a) | Command::Space(a) => a,
        }
    }

    #[test]
    fn counts_and_powers() {
        assert_eq!(parse_count("2^10").unwrap(), 1024);
        assert_eq!(parse_count("37").unwrap(), 37);
        assert!(parse_count("2^64").is_err());
        assert!(parse_count("x").is_err());
        assert_eq!(parse_pow2_bits("2^64").unwrap(), 64);
        assert_eq!(parse_pow2_bits("1048576").unwrap(), 20);
        assert_eq!(parse_pow2_bits("18446744073709551616").unwrap(), 64);
        assert!(parse_pow2_bits("1000").is_err());
        assert!(parse_pow2_bits("2^65").is_err());
    }

    #[test]
    fn overrides() {
        let o = parse_overrides(&[
            "c=4".into(),
            "c1=0.2".into(),
            "h=2".into(),
            "identity=1".into(),
        ])
        .unwrap();
        assert_eq!(o.c, 4.0);
        assert_eq!(o.tunables.c1, 0.2);
        assert_eq!(o.tunables.levels, Some(2));
        assert!(o.identity);
        assert!(parse_overrides(&["bogus=1".into()]).is_err());
        assert!(parse_overrides(&["c".into()]).is_err());
        assert!(parse_overrides(&["r=65".into()]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(
            RunConfig::from_args("verify", &args("verify", &["--n", "2^21", "--u", "2^20"]))
                .is_err()
        );
        assert!(RunConfig::from_args("verify", &args("verify", &["--u", "2^16,2^20"])).is_err());
        assert!(
            RunConfig::from_args("collisions", &args("collisions", &["--kind", "memb-ph"]))
                .is_err()
        );
        assert!(RunConfig::from_args("verify", &args("verify", &["--kind", "nope"])).is_err());
        let c = RunConfig::from_args(
            "space",
            &args("space", &["--u", "2^16,2^24", "--t", "0,2^10"]),
        )
        .unwrap();
        assert_eq!(c.grid(), vec![(0, 16), (1024, 16), (0, 24), (1024, 24)]);
    }

    #[test]
    fn collisions_schema_and_bounds() {
        let cfg = RunConfig::from_args(
            "collisions",
            &args(
                "collisions",
                &[
                    "--n", "2^10", "--u", "2^20", "--b", "2^12", "--trials", "3", "--seed", "5",
                ],
            ),
        )
        .unwrap();
        let csv = collisions_csv(&cfg).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(COLLISIONS_HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 8);
            assert_eq!(row[4], "4096");
            assert_eq!(row[5], "2");
            if i % 2 == 0 {
                let bound: f64 = row[7].parse().unwrap();
                let want = 2.0 * 1024.0 * 1024.0 / 4096.0 + 1024f64.powf(0.95);
                assert!((bound - want).abs() < 1e-5);
            }
        }
        assert_eq!(csv, collisions_csv(&cfg).unwrap());
    }

    #[test]
    fn adversarial_identity_census() {
        let cfg = RunConfig::from_args(
            "collisions",
            &args(
                "collisions",
                &[
                    "--n",
                    "64",
                    "--u",
                    "2^20",
                    "--b",
                    "2^6",
                    "--trials",
                    "1",
                    "--set",
                    "identity=1",
                    "--set",
                    "adversarial=1",
                ],
            ),
        )
        .unwrap();
        let csv = collisions_csv(&cfg).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5], "2");
        assert_eq!(row[6], "64");
    }

    #[test]
    fn space_rows() {
        let cfg = RunConfig::from_args(
            "space",
            &args(
                "space",
                &[
                    "--kind",
                    "memb-ph",
                    "--n",
                    "2^8",
                    "--u",
                    "2^12,2^20",
                    "--t",
                    "2^8",
                ],
            ),
        )
        .unwrap();
        let csv = space_csv(&cfg).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SPACE_HEADER);
        assert_eq!(lines.len(), 3);
        for l in &lines[1..] {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 10);
            let bits: f64 = f[5].parse().unwrap();
            let per_key: f64 = f[6].parse().unwrap();
            assert!((bits / 256.0 - per_key).abs() < 1e-5);
        }
    }
}
