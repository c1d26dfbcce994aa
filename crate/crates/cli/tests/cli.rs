use std::path::Path;
use std::process::{Command, Output};

fn degsemi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degsemi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DEGSEMI_OUT")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

const COUNTEREXAMPLE: &str = r#"
experiment = "counterexample"
[parameters]
n_list = [8, 16, 32]

[[assertions]]
metric = "RESOLVENT_WOT"
check = "max_below"
value = 1e-14
"#;

#[test]
fn counterexample_writes_three_rows_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", COUNTEREXAMPLE);
    let out = dir.path().join("out");
    let o = degsemi(&["run", &cfg, "--out", out.to_str().unwrap(), "--plot"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("block_swap_report.csv")).unwrap();
    assert!(csv.starts_with("n,wot_residual,sot_residual,formula_value\n"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("8,") && rows[2].starts_with("32,"));
    assert!(out.join("block_swap.svg").exists());
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("experiment = \"counterexample\""));
    assert!(manifest.contains("passed = true"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn missing_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "experiment = \"equivalence\"\n[parameters]\ndim = 4\nn_list = [1, 2]\n",
    );
    let o = degsemi(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = degsemi(&["run", "does-not-exist.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constant_chain_gives_zero_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "const.toml",
        r#"
experiment = "equivalence"
[parameters]
chain = "constant"
dim = 5
n_list = [1, 2, 4]
lambda = { re = 1.0, im = 1.0 }

[[assertions]]
metric = "RESOLVENT_SOT"
check = "max_below"
value = 0.0
"#,
    );
    let out = dir.path().join("o");
    let o = degsemi(&["run", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("equivalence.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3 * 12);
    for r in rows {
        let v: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 0.0, "{r}");
    }
}

#[test]
fn failing_assertion_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fail.toml",
        r#"
experiment = "counterexample"
[parameters]
n_list = [8, 16]

[[assertions]]
metric = "RESOLVENT_SOT"
check = "final_below"
value = 1e-3
"#,
    );
    let out = dir.path().join("o");
    let o = degsemi(&["run", &cfg, "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("RESOLVENT_SOT"));
    assert!(std::fs::read_to_string(out.join("manifest.toml")).unwrap().contains("passed = false"));
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "experiment = \"counterexample\"\noutput = \"from-config\"\n[parameters]\nn_list = [8]\n",
    );
    // config value, relative to the working directory
    assert_eq!(degsemi(&["run", &cfg], dir.path()).status.code(), Some(0));
    assert!(dir.path().join("from-config/manifest.toml").exists());
    // environment beats config
    let env_dir = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_degsemi"))
        .args(["run", &cfg])
        .current_dir(dir.path())
        .env("DEGSEMI_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("manifest.toml").exists());
    // flag beats environment
    let flag_dir = dir.path().join("from-flag");
    let o = Command::new(env!("CARGO_BIN_EXE_degsemi"))
        .args(["run", &cfg, "--out", flag_dir.to_str().unwrap()])
        .current_dir(dir.path())
        .env("DEGSEMI_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("manifest.toml").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "eq.toml",
        "experiment = \"equivalence\"\n[parameters]\ndim = 6\nn_list = [1, 8]\nlambda = { re = 1.0, im = 2.0 }\n",
    );
    for d in ["a", "b"] {
        let o = degsemi(&["run", &cfg, "--out", d, "--threads", "2", "--seed", "3"], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let a = std::fs::read(dir.path().join("a/equivalence.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/equivalence.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn list_shows_all_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let o = degsemi(&["list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    for k in ["equivalence", "galerkin", "domains", "homogenize", "counterexample"] {
        assert!(s.contains(k), "{k}");
    }
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let cfg = degsemi_cli::config::ExperimentConfig::parse(&text).unwrap();
        cfg.parameters().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}
