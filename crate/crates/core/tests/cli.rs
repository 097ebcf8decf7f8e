use std::process::{Command, Output};

fn qdict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdict"))
        .args(args)
        .env_remove("QDICT_OUT_DIR")
        .output()
        .expect("spawn qdict")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn verify_exit_codes() {
    let ok = qdict(&[
        "verify", "--kind", "memb-ph", "--n", "2^10", "--t", "2^10", "--u", "2^20", "--ops",
        "100000", "--seed", "7",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(stdout(&ok).contains("status=ok"));

    let zero = qdict(&["verify", "--ops", "0"]);
    assert_eq!(zero.status.code(), Some(0));
    let line = stdout(&zero);
    assert!(
        line.contains("ops=0") && line.contains("inserts=0") && line.contains("discrepancies=0"),
        "{line}"
    );

    let fault = qdict(&[
        "verify",
        "--kind",
        "ph-only",
        "--ops",
        "10000",
        "--set",
        "fault=500",
    ]);
    assert_eq!(fault.status.code(), Some(1));
    assert!(stdout(&fault).contains("status=FAIL"));
}

#[test]
fn config_errors_exit_2() {
    for args in [
        &["verify", "--n", "2^21", "--u", "2^20"][..],
        &["verify", "--u", "1000"],
        &["verify", "--kind", "bogus"],
        &["verify", "--set", "nope=1"],
        &["verify", "--ops", "-3"],
        &["collisions", "--kind", "memb-ph"],
        &["frobnicate"],
    ] {
        assert_eq!(qdict(args).status.code(), Some(2), "{args:?}");
    }
    assert_eq!(qdict(&["--help"]).status.code(), Some(0));
}

#[test]
fn collisions_csv_is_byte_identical_and_bounds_recompute() {
    let args = [
        "collisions",
        "--n",
        "2^10",
        "--u",
        "2^20",
        "--b",
        "2^12",
        "--trials",
        "8",
        "--seed",
        "11",
    ];
    let a = qdict(&args);
    let b = qdict(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,seed,n,u,b,tau,count,bound"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse::<f64>().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 16);
    for (i, r) in rows.iter().enumerate() {
        let (n, b, tau) = (r[2], r[4], r[5]);
        assert_eq!(r[0] as usize, i / 2);
        let want = if i % 2 == 0 {
            assert_eq!(tau, 2.0);
            2.0 * n * n / b + n.powf(0.95)
        } else {
            assert_eq!(tau, (1.5 * n / b + 1.0).ceil());
            2.0 * n * (-0.25 * n / (3.0 * b)).exp() + n.powf(0.95)
        };
        assert!((r[7] - want).abs() < 1e-5, "row {i}: {} vs {want}", r[7]);
    }
}

#[test]
fn adversarial_identity_reports_whole_set() {
    let o = qdict(&[
        "collisions",
        "--n",
        "2^8",
        "--u",
        "2^20",
        "--b",
        "2^10",
        "--trials",
        "2",
        "--set",
        "identity=1",
        "--set",
        "adversarial=1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    for l in stdout(&o).lines().skip(1).step_by(2) {
        assert_eq!(l.split(',').nth(6), Some("256"), "{l}");
    }
}

#[test]
fn space_output_and_out_dir() {
    let dir = std::env::temp_dir().join(format!("qdict-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let args = [
        "space",
        "--kind",
        "ph-only",
        "--n",
        "2^10",
        "--t",
        "0,2^10",
        "--u",
        "2^20,2^32",
        "--seed",
        "3",
    ];
    let run = |tag: &str| {
        let d = dir.join(tag);
        std::fs::create_dir_all(&d).unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_qdict"))
            .args(args)
            .env("QDICT_OUT_DIR", &d)
            .output()
            .unwrap();
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(o.stdout.is_empty());
        std::fs::read(d.join("space.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("kind,n,t,u,r,bits,bits_per_key,lg_u_over_n,lglg_u_over_n,lg_n_over_t1")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[0], "ph-only");
        let nums: Vec<f64> = f[1..].iter().map(|x| x.parse().unwrap()).collect();
        assert!((nums[4] / nums[0] - nums[5]).abs() < 1e-5);
        assert!((nums[6] - (2.0 + nums[2] / nums[0]).log2()).abs() < 1e-5);
    }
    std::fs::remove_dir_all(&dir).ok();
}
