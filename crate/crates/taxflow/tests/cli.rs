//! End-to-end tests of the `taxflow` binary: exit codes, report files, and
//! byte-level determinism of seeded runs.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taxflow"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("taxflow-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn ledger_fixture_reports_expected_taxes() {
    let dir = temp_dir("ledger");
    let out = bin()
        .args(["ledger", "--fixture", "figure2", "--alpha", "0.25"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(
        stdout(&out).contains("[0.0, 0.0, 0.0, 1.0, 0.75]"),
        "{}",
        stdout(&out)
    );
    let ledger = fs::read_to_string(dir.join("ledger.csv")).unwrap();
    assert_eq!(
        ledger.lines().next().unwrap(),
        "purchase_index,size,basis,book_profit"
    );
    // final position: 9 shares from t=0 plus 1 wash-rebased share at t=4
    assert_eq!(ledger.lines().count(), 3);
    let flow = fs::read_to_string(dir.join("taxflow.csv")).unwrap();
    assert_eq!(flow.lines().next().unwrap(), "t,S,phi,Pi_left,Pi,Pi_right");
    assert_eq!(flow.lines().count(), 6);
    assert!(dir.join("manifest.json").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_config_exits_one_with_field_path() {
    let dir = temp_dir("badcfg");
    let cfg = write_config(
        &dir,
        "experiment = \"ledger\"\nalpha = 1.5\n\n[market]\nmodel = \"fixture\"\nfixture = \"figure2\"\n",
    );
    let out = bin().arg("ledger").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("alpha"), "{err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = temp_dir("unknownkey");
    let cfg = write_config(
        &dir,
        "experiment = \"ledger\"\nalpah = 0.2\n\n[market]\nmodel = \"fixture\"\nfixture = \"figure2\"\n",
    );
    let out = bin().arg("ledger").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_exits_one() {
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_byte_deterministic() {
    let base = temp_dir("determinism");
    let cfg = write_config(
        &base,
        "experiment = \"simulate\"\nbatch = 5\n\n[market]\nmodel = \"gbm\"\nsigma = 0.3\nsteps = 50\n\n[strategy]\nkind = \"buy-hold\"\nshares = 2.0\n",
    );
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = base.join(run);
        let out = bin()
            .arg("simulate")
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", "7"])
            .arg("--out")
            .arg(&dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        outputs.push((
            fs::read(dir.join("taxflow.csv")).unwrap(),
            fs::read(dir.join("summary.json")).unwrap(),
            fs::read(dir.join("manifest.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    fs::remove_dir_all(&base).unwrap();
}

#[test]
fn compare_dividends_fixture_dominates() {
    let dir = temp_dir("compare");
    let cfg = write_config(
        &dir,
        "experiment = \"compare-dividends\"\nv0 = 10000.0\n\n[market]\nmodel = \"fixture\"\nfixture = \"figure3\"\n\n[rates]\nconstant = 0.05\n",
    );
    let out = bin()
        .arg("compare-dividends")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let summary = fs::read_to_string(dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"violations\": 0"), "{summary}");
    let table = fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert_eq!(
        table.lines().next().unwrap(),
        "t,S_D,S_0,phi_D,phi_0,Pi_D,Pi_0,V_D,V_0,gap"
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn converge_emits_both_reports_with_decreasing_error() {
    let dir = temp_dir("converge");
    let cfg = write_config(
        &dir,
        "experiment = \"converge\"\nbatch = 20\n\n[market]\nmodel = \"crr\"\nsigma = 0.2\n\n[strategy]\nkind = \"feedback\"\nrule = \"linear\"\n\n[converge]\nlevels = 3\nbase_steps = 25\n",
    );
    let out = bin()
        .arg("converge")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let closed = fs::read_to_string(dir.join("closed_form.csv")).unwrap();
    let errors: Vec<f64> = closed
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 3);
    assert!(
        errors.windows(2).all(|w| w[1] < w[0] && w[0] > 0.0),
        "median abs_error not strictly positive decreasing: {errors:?}"
    );
    let conv = fs::read_to_string(dir.join("convergence.csv")).unwrap();
    assert_eq!(
        conv.lines().next().unwrap(),
        "n,mesh,sup_distance_q50,sup_distance_q95"
    );
    assert_eq!(conv.lines().count(), 3);
    fs::remove_dir_all(&dir).unwrap();
}
