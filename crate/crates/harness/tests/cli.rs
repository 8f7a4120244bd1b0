//! The `wdro` binary on small synthetic manifests.

use std::path::Path;
use std::process::{Command, Output};

use wdro_harness::CurveFile;

const TINY: &str = r#"
name = "tiny"

[dataset]
source = "synthetic"
kind = "two-gaussians"
n = 120
dim = 3
separation = 3.0
train = 80
seed = 1

[model]
kind = "mlp"
hidden_dims = [4]
activation = "softplus"

[trainer]
algorithms = ["erm-sgd", "spgda", "spgd-oracle"]
alpha = 0.1
iterations = 40
batch_size = 8
seed = 2
eval_every = 10

[trainer.robust]
rho = 1.0
gamma0 = 2.0
eta = 0.1
oracle_step = 0.1
oracle_eps = 1e-4
oracle_max_iters = 500

[attacks]
kinds = ["fgsm", "pgd", "wrm"]
eps = [0.0, 0.1, 0.2]
wrm_gammas = [2.0, 4.0]

[federation]
algorithms = ["drfl", "fedavg"]
num_workers = 4
rounds = 3
local_batch = 8

[federation.eval_attack]
kind = "fgsm"
eps = 0.1
"#;

fn wdro(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wdro"));
    cmd.args(args).env_remove("WDRO_OUTPUT_DIR");
    if let Some(dir) = out {
        cmd.env("WDRO_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_manifest(dir: &Path, text: &str) -> String {
    let path = dir.join("m.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_the_shipped_manifests() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let o = wdro(&["validate", path.to_str().unwrap()], None);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
    }
}

#[test]
fn validate_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = TINY
        .replace("alpha = 0.1", "alpha = -1.0")
        .replace("eps = [0.0, 0.1, 0.2]", "eps = [0.0, 0.2, 0.1]")
        .replace("batch_size = 8", "batch_size = 8\nmomentum = 0.9");
    let m = write_manifest(dir.path(), &bad);
    let o = wdro(&["validate", &m], None);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("trainer.alpha"), "{err}");
    assert!(err.contains("attacks.eps"), "{err}");
    assert!(err.contains("momentum"), "{err}");
}

#[test]
fn run_writes_all_artifacts_and_attack_eval_reuses_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = wdro(&["run", &m], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "metrics-erm-sgd.csv",
        "metrics-spgda.json",
        "checkpoint-spgd-oracle.bin",
        "curve-fgsm.csv",
        "curve-pgd.csv",
        "curve-wrm.csv",
        "federation-drfl.csv",
        "checkpoint-federation-fedavg.bin",
        "curve-federation-attacked.csv",
        "run_record.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let curve = CurveFile::from_csv_str(&std::fs::read_to_string(out.join("curve-pgd.csv")).unwrap()).unwrap();
    curve.check().unwrap();
    assert_eq!(curve.rows.len(), 3 * 3);
    let wrm = std::fs::read_to_string(out.join("curve-wrm.csv")).unwrap();
    assert!(wrm.starts_with("wrm_gamma,method,error"));

    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run_record.json")).unwrap()).unwrap();
    assert_eq!(record["name"], "tiny");
    assert_eq!(record["manifest_sha256"].as_str().unwrap().len(), 64);

    let eval_dir = dir.path().join("eval");
    let ck = out.join("checkpoint-spgda.bin");
    let o = wdro(&["attack-eval", ck.to_str().unwrap(), &m], Some(&eval_dir));
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = std::fs::read_to_string(eval_dir.join("attack-eval-pgd.csv")).unwrap();
    // the checkpoint under attack-eval scores what the run itself reported
    let run_curve = std::fs::read_to_string(out.join("curve-pgd.csv")).unwrap();
    let from_run: Vec<&str> = run_curve
        .lines()
        .filter(|l| l.contains(",spgda,"))
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    let from_eval: Vec<&str> = eval.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(from_run, from_eval);
}

#[test]
fn zero_iterations_only_writes_the_run_record() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("iterations = 40", "iterations = 0").replace("rounds = 3", "rounds = 0");
    let m = write_manifest(dir.path(), &text);
    let out = dir.path().join("out");
    let o = wdro(&["run", &m], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files, vec!["run_record.json".to_string()]);
}

#[test]
fn output_dir_defaults_next_to_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("iterations = 40", "iterations = 0").replace("rounds = 3", "rounds = 0");
    let m = write_manifest(dir.path(), &text);
    let o = wdro(&["run", &m], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("out/tiny/run_record.json").is_file());
}

#[test]
fn attack_eval_names_a_missing_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), TINY);
    let o = wdro(&["attack-eval", "/nonexistent/ck.bin", &m], Some(dir.path()));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint"));
}
