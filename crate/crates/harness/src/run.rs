//! Executes a parsed manifest and writes its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use wdro::attacks::{evaluate_under_attack, AttackKind};
use wdro::checkpoint::Checkpoint;
use wdro::data::{load_csv, load_idx, make_synthetic, subsample, Dataset, SyntheticSpec};
use wdro::models::{ModelParams, ModelSpec};
use wdro::optimizers::{train_erm, train_spgd_oracle, train_spgda, Algorithm, RunMetrics};
use wdro::federated::{run_federation, FederationConfig};

use crate::manifest::{load_manifest, DataSource, DatasetSection, RunManifest};

/// Environment variable that overrides the manifest's output directory.
pub const OUTPUT_DIR_ENV: &str = "WDRO_OUTPUT_DIR";

/// One `(x, method, value)` row of a plot-ready curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub x: f64,
    pub method: String,
    pub value: f64,
}

/// Rows grouped by method, `x` increasing within each method.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub x_name: String,
    pub value_name: String,
    pub rows: Vec<CurveRow>,
}

impl CurveFile {
    pub fn new(x_name: &str, value_name: &str) -> Self {
        CurveFile {
            x_name: x_name.into(),
            value_name: value_name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, method: &str, value: f64) {
        self.rows.push(CurveRow {
            x,
            method: method.into(),
            value,
        });
    }

    /// Checks one row per `(x, method)` with `x` strictly increasing.
    pub fn check(&self) -> Result<()> {
        for (i, pair) in self.rows.windows(2).enumerate() {
            if pair[0].method == pair[1].method && !(pair[0].x < pair[1].x) {
                bail!("curve rows {i} and {} break the increasing-x order for {}", i + 1, pair[0].method);
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!("{},method,{}\n", self.x_name, self.value_name);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.x, r.method, r.value);
        }
        out
    }

    /// Parses the CSV form back; used by tests and external tooling.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().context("empty curve file")?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() != 3 || cols[1] != "method" {
            bail!("bad curve header {header:?}");
        }
        let mut curve = CurveFile::new(cols[0], cols[2]);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                bail!("curve line {} has {} fields", i + 2, f.len());
            }
            curve.push(f[0].parse()?, f[1], f[2].parse()?);
        }
        Ok(curve)
    }
}

/// Train and test splits plus their origin.
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the dataset, shuffles (or subsamples) it with the dataset seed and
/// splits off the first `train` examples.
pub fn load_splits(section: &DatasetSection) -> Result<Splits> {
    let full = match &section.source {
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
        DataSource::Csv { path, label_column } => load_csv(path, label_column)?,
        DataSource::Synthetic { kind, n, dim, separation } => make_synthetic(&SyntheticSpec {
            kind: *kind,
            n: *n,
            dim: *dim,
            separation: *separation,
            seed: section.seed,
        })?,
    };
    let n = section.subsample.unwrap_or(full.len());
    if n > full.len() {
        bail!("dataset.subsample = {n} exceeds the {} available examples", full.len());
    }
    let drawn = subsample(&full, n, section.seed)?;
    let (train, test) = drawn.split_at(section.train)?;
    Ok(Splits { train, test })
}

#[derive(Debug, Serialize)]
struct StageTime {
    stage: String,
    ms: f64,
}

/// `run_record.json`: enough to reproduce the run.
#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    name: &'a str,
    manifest_sha256: String,
    harness_version: &'static str,
    library_version: &'static str,
    dataset_seed: u64,
    trainer_seed: u64,
    federation_seed: Option<u64>,
    dataset: Option<String>,
    train_size: Option<usize>,
    test_size: Option<usize>,
    model: Option<String>,
    outputs: Vec<String>,
    /// Wall-clock timings; the only nondeterministic content of the run.
    timings: Vec<StageTime>,
}

/// Paths written by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn metrics(&mut self, stem: &str, m: &RunMetrics) -> Result<()> {
        self.write(&format!("{stem}.csv"), m.to_csv_string())?;
        self.write(&format!("{stem}.json"), serde_json::to_string_pretty(m)?)
    }

    fn curve(&mut self, name: &str, c: &CurveFile) -> Result<()> {
        c.check()?;
        self.write(name, c.to_csv_string())
    }
}

fn output_dir(manifest: &RunManifest, over: Option<&Path>) -> PathBuf {
    over.map(Path::to_path_buf).unwrap_or_else(|| manifest.output_dir.clone())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Trained weights of one method.
pub struct Trained {
    pub method: String,
    pub theta: ModelParams,
}

/// Fills one curve per attack kind: every method at every grid point.
fn attack_curves(
    manifest: &RunManifest,
    spec: &ModelSpec,
    models: &[Trained],
    test: &Dataset,
) -> Result<Vec<(AttackKind, CurveFile)>> {
    let mut out = Vec::new();
    for &kind in &manifest.attacks.kinds {
        let x_name = if kind == AttackKind::Wrm { "wrm_gamma" } else { "eps_adv" };
        let mut curve = CurveFile::new(x_name, "error");
        for m in models {
            for (x, atk) in manifest.attacks.points(kind) {
                let err = evaluate_under_attack(spec, &m.theta, &test.items, &atk)
                    .with_context(|| format!("attack stage: {} at {x_name}={x} against {}", kind.name(), m.method))?;
                curve.push(x, &m.method, err);
            }
        }
        out.push((kind, curve));
    }
    Ok(out)
}

fn train_one(manifest: &RunManifest, spec: &ModelSpec, alg: Algorithm, s: &Splits) -> Result<(Checkpoint, ModelParams, RunMetrics)> {
    let t = &manifest.trainer;
    let cfg = t.config_for(alg);
    let (train, test) = (&s.train.items[..], &s.test.items[..]);
    Ok(match alg {
        Algorithm::ErmSgd | Algorithm::ErmAdam => {
            let (theta, m) = train_erm(spec, &t.regularizer, &cfg, train, test)?;
            (Checkpoint::new(spec, theta.clone(), None)?, theta, m)
        }
        Algorithm::Spgda => {
            let (aug, m) = train_spgda(spec, &t.regularizer, &t.robust, &cfg, train, test)?;
            (Checkpoint::from_augmented(spec, &aug)?, aug.theta, m)
        }
        Algorithm::SpgdOracle => {
            let (aug, m) = train_spgd_oracle(spec, &t.regularizer, &t.robust, &cfg, train, test)?;
            (Checkpoint::from_augmented(spec, &aug)?, aug.theta, m)
        }
    })
}

/// Runs every pipeline of the manifest at `path`. `output_override` wins
/// over the manifest's `output_dir`.
pub fn run_manifest(path: &Path, output_override: Option<&Path>) -> Result<RunOutcome> {
    let (manifest, raw) = load_manifest(path)?;
    let dir = output_dir(&manifest, output_override);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    let mut timings = Vec::new();
    let mut timed = |stage: String, start: Instant| {
        timings.push(StageTime {
            stage,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })
    };

    let algorithms: &[Algorithm] = if manifest.trainer.config.iterations > 0 {
        &manifest.trainer.algorithms
    } else {
        &[]
    };
    let fed = manifest
        .federation
        .as_ref()
        .filter(|f| f.config.rounds > 0 && !f.algorithms.is_empty());
    let needs_data = !algorithms.is_empty() || fed.is_some();

    let mut splits = None;
    let mut spec = None;
    if needs_data {
        let start = Instant::now();
        let s = load_splits(&manifest.dataset).context("data stage")?;
        let m = manifest.model.spec(s.train.feature_dim, s.train.num_classes);
        m.validate().context("model stage")?;
        timed("load data".into(), start);
        spec = Some(m);
        splits = Some(s);
    }

    let mut trained = Vec::new();
    if let (Some(s), Some(spec)) = (&splits, &spec) {
        for &alg in algorithms {
            let start = Instant::now();
            let (ckpt, theta, metrics) =
                train_one(&manifest, spec, alg, s).with_context(|| format!("training stage: {}", alg.name()))?;
            out.metrics(&format!("metrics-{}", alg.name()), &metrics)?;
            out.write(&format!("checkpoint-{}.bin", alg.name()), ckpt.to_bytes())?;
            timed(format!("train {}", alg.name()), start);
            trained.push(Trained {
                method: alg.name().to_string(),
                theta,
            });
        }
        if !trained.is_empty() {
            let start = Instant::now();
            for (kind, curve) in attack_curves(&manifest, spec, &trained, &s.test)? {
                out.curve(&format!("curve-{}.csv", kind.name()), &curve)?;
            }
            timed("attacks".into(), start);
        }
        if let Some(f) = fed {
            let mut clean = CurveFile::new("round", "held_out_error");
            let mut attacked = CurveFile::new("round", "attacked_error");
            for &alg in &f.algorithms {
                let start = Instant::now();
                let cfg = FederationConfig {
                    algorithm: alg,
                    ..f.config.clone()
                };
                let (aug, metrics) = run_federation(spec, &manifest.trainer.regularizer, &cfg, &s.train.items, &s.test.items)
                    .with_context(|| format!("federation stage: {}", alg.name()))?;
                out.metrics(&format!("federation-{}", alg.name()), &metrics)?;
                let ckpt = match alg {
                    wdro::federated::FedAlgorithm::Drfl => Checkpoint::from_augmented(spec, &aug)?,
                    wdro::federated::FedAlgorithm::Fedavg => Checkpoint::new(spec, aug.theta, None)?,
                };
                out.write(&format!("checkpoint-federation-{}.bin", alg.name()), ckpt.to_bytes())?;
                for r in &metrics.records {
                    if let Some(e) = r.held_out_error {
                        clean.push(r.iteration as f64, alg.name(), e);
                    }
                    if let Some(e) = r.attacked_error {
                        attacked.push(r.iteration as f64, alg.name(), e);
                    }
                }
                timed(format!("federation {}", alg.name()), start);
            }
            out.curve("curve-federation-clean.csv", &clean)?;
            if !attacked.rows.is_empty() {
                out.curve("curve-federation-attacked.csv", &attacked)?;
            }
        }
    }

    let record = RunRecord {
        name: &manifest.name,
        manifest_sha256: sha256_hex(&raw),
        harness_version: env!("CARGO_PKG_VERSION"),
        library_version: wdro::VERSION,
        dataset_seed: manifest.dataset.seed,
        trainer_seed: manifest.trainer.config.seed,
        federation_seed: manifest.federation.as_ref().map(|f| f.config.seed),
        dataset: splits.as_ref().map(|s| s.train.provenance.clone()),
        train_size: splits.as_ref().map(|s| s.train.len()),
        test_size: splits.as_ref().map(|s| s.test.len()),
        model: spec.as_ref().map(ModelSpec::fingerprint),
        outputs: out.files.clone(),
        timings,
    };
    out.write("run_record.json", serde_json::to_string_pretty(&record)?)?;
    Ok(RunOutcome {
        output_dir: dir,
        files: out.files,
    })
}

/// Evaluates a checkpoint against the manifest's attack grid and writes
/// `attack-eval-<kind>.csv` with the checkpoint's file stem as the method.
pub fn attack_eval(checkpoint: &Path, manifest_path: &Path, output_override: Option<&Path>) -> Result<RunOutcome> {
    let (manifest, _) = load_manifest(manifest_path)?;
    if manifest.attacks.kinds.is_empty() {
        bail!("the manifest's attack grid is empty (attacks.kinds)");
    }
    let ckpt = Checkpoint::load(checkpoint).with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let s = load_splits(&manifest.dataset).context("data stage")?;
    let spec = manifest.model.spec(s.train.feature_dim, s.train.num_classes);
    let theta = ckpt.params_for(&spec)?;
    let method = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint")
        .to_string();
    let dir = output_dir(&manifest, output_override);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    for (kind, curve) in attack_curves(&manifest, &spec, &[Trained { method, theta }], &s.test)? {
        out.curve(&format!("attack-eval-{}.csv", kind.name()), &curve)?;
    }
    Ok(RunOutcome {
        output_dir: dir,
        files: out.files,
    })
}
