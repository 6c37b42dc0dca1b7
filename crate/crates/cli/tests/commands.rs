use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uwofdm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwofdm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = uwofdm(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn optimize_certify_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-channels", "--count", "8", "--seed", "11", "-o", "ch.txt"], d);
    let ch = fs::read_to_string(d.join("ch.txt")).unwrap();
    assert!(ch.starts_with("# uwofdm-channels v1"));

    ok(&["optimize-matrix", "--init", "random:4", "--max-iters", "3", "-o", "raw.txt"], d);
    let trace = fs::read_to_string(d.join("raw.txt.trace")).unwrap();
    assert!(trace.starts_with("# uwofdm-jtrace v1"));
    let costs: Vec<f64> = trace
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(costs.len(), 4);
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));

    // three iterations from a random start are far from optimal
    let report = ok(&["certify", "raw.txt"], d);
    assert!(report.contains("optimal               false"), "{report}");
    assert!(!uwofdm(&["certify", "raw.txt", "--require"], d).status.success());

    ok(&["optimize-matrix", "--max-iters", "2", "--polish", "-o", "g1.txt", "--trace", "j.txt"], d);
    assert!(d.join("j.txt").exists());
    let report = ok(&["certify", "g1.txt", "--require"], d);
    assert!(report.contains("kind                  OptLmmse"));

    fs::write(
        d.join("s.toml"),
        r#"version = 1
label = "g1"
system = "uw-g1"
generator = "g1.txt"
estimator = "blue"
es_n0_db = [4.0, 8.0]
channel = "ch.txt"
max_bits = 20000
"#,
    )
    .unwrap();
    ok(&["simulate-ber", "s.toml", "-o", "r.csv"], d);
    ok(&["simulate-ber", "s.toml", "-o", "r.csv", "--plot-dir", "plots"], d);
    let results = fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(results.starts_with("# uwofdm-ber v1\n"));
    let rows: Vec<&str> = results.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    // identical seeds reproduce identical rows
    assert_eq!(rows[0], rows[2]);
    let curve = fs::read_to_string(d.join("plots/g1.dat")).unwrap();
    assert!(curve.starts_with("# uwofdm-curve v1"));
    assert_eq!(curve.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn psd_curves() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cp = ok(&["psd", "--system", "cp-ofdm", "--n-symbols", "100", "-o", "cp.txt"], d);
    let uw = ok(&["psd", "--system", "uw-g", "--n-symbols", "100", "-o", "uw.txt"], d);
    let oob = |s: &str| -> f64 { s.split_whitespace().nth(1).unwrap().parse().unwrap() };
    assert!(oob(&uw) < oob(&cp) - 12.0, "{cp} {uw}");
    let text = fs::read_to_string(d.join("uw.txt")).unwrap();
    assert!(text.starts_with("# uwofdm-psd v1"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1024);
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("g.txt"), "not a generator\n").unwrap();
    let out = uwofdm(&["certify", "g.txt"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // optimized systems need a generator file
    let out = uwofdm(&["psd", "--system", "uw-g2", "-o", "p.txt"], d);
    assert!(!out.status.success());

    let out = uwofdm(&["optimize-matrix", "--init", "zeros", "-o", "x.txt"], d);
    assert!(!out.status.success());

    fs::write(
        d.join("s.toml"),
        "version = 2\nlabel = \"x\"\nsystem = \"uw-g\"\nestimator = \"lmmse\"\nes_n0_db = [1.0]\nchannel = \"awgn\"\nmax_bits = 10\n",
    )
    .unwrap();
    let out = uwofdm(&["simulate-ber", "s.toml", "-o", "r.csv"], d);
    assert!(!out.status.success());
    assert!(!d.join("r.csv").exists());
}
