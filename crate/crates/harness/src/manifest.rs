//! Run manifests: one experiment per TOML file.
//!
//! Parsing never stops at the first problem. Every structural or range
//! violation becomes a [`Diagnostic`] carrying the dotted path of the field.

use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};
use wdro::attacks::{AttackKind, AttackSpec};
use wdro::data::SyntheticKind;
use wdro::federated::{FedAlgorithm, FederationConfig, PartitionMode};
use wdro::models::{Activation, ModelKind, ModelSpec};
use wdro::optimizers::{Algorithm, TrainConfig};
use wdro::prox::{RegularizerKind, RegularizerSpec};
use wdro::robust::RobustConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Dotted field path, e.g. `trainer.alpha`. Empty for file-level problems.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf, label_column: String },
    Synthetic { kind: SyntheticKind, n: usize, dim: usize, separation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub source: DataSource,
    /// Draw this many examples (without replacement) before splitting.
    /// The full set is shuffled when absent.
    pub subsample: Option<usize>,
    /// Size of the training split; the rest is the test split.
    pub train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
}

impl ModelSection {
    /// The full spec once the data dimensions are known.
    pub fn spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        match self.kind {
            ModelKind::LinearRegression => ModelSpec::linear_regression(input_dim),
            ModelKind::Logistic => ModelSpec::logistic(input_dim, classes),
            ModelKind::Mlp => ModelSpec::mlp(input_dim, self.hidden_dims.clone(), classes, self.activation),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSection {
    pub algorithms: Vec<Algorithm>,
    /// Shared settings; `algorithm` is overwritten per run.
    pub config: TrainConfig,
    pub robust: RobustConfig,
    pub regularizer: RegularizerSpec,
}

impl TrainerSection {
    pub fn config_for(&self, algorithm: Algorithm) -> TrainConfig {
        TrainConfig { algorithm, ..self.config.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackGrid {
    pub kinds: Vec<AttackKind>,
    /// `ε_adv` values for the `ℓ∞` attacks.
    pub eps: Vec<f64>,
    /// Fixed-`γ` values for the Wasserstein attack, which has no `ℓ∞` budget.
    pub wrm_gammas: Vec<f64>,
    /// Steps, step sizes and WRM oracle settings shared by every point.
    pub template: AttackSpec,
}

impl AttackGrid {
    /// `(x, spec)` for every point of `kind`, `x` increasing.
    pub fn points(&self, kind: AttackKind) -> Vec<(f64, AttackSpec)> {
        let base = AttackSpec { kind, ..self.template.clone() };
        if kind == AttackKind::Wrm {
            self.wrm_gammas.iter().map(|&g| (g, AttackSpec { wrm_gamma: g, ..base.clone() })).collect()
        } else {
            self.eps.iter().map(|&e| (e, AttackSpec { eps_adv: e, ..base.clone() })).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationSection {
    pub algorithms: Vec<FedAlgorithm>,
    pub config: FederationConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub name: String,
    /// Resolved against the manifest's directory.
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub trainer: TrainerSection,
    pub attacks: AttackGrid,
    pub federation: Option<FederationSection>,
}

/// Collects diagnostics while walking the TOML tree.
struct Walker {
    base: PathBuf,
    diags: Vec<Diagnostic>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a float",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

impl Walker {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.err(path, message);
        }
    }

    fn unknown_keys(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(join(path, key), "unknown key");
            }
        }
    }

    fn table<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(inner)) => Some(inner),
            Some(v) => {
                self.err(join(path, key), format!("expected a table, found {}", type_name(v)));
                None
            }
        }
    }

    fn required<'t>(&mut self, t: &'t Table, path: &str, key: &str) -> Option<&'t Value> {
        let v = t.get(key);
        if v.is_none() {
            self.err(join(path, key), "missing required field");
        }
        v
    }

    fn as_f64(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(path, format!("expected a number, found {}", type_name(v)));
                None
            }
        }
    }

    fn as_u64(&mut self, v: &Value, path: &str) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Integer(i) => {
                self.err(path, format!("must be >= 0, got {i}"));
                None
            }
            _ => {
                self.err(path, format!("expected an integer, found {}", type_name(v)));
                None
            }
        }
    }

    fn as_str<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v str> {
        match v {
            Value::String(s) => Some(s),
            _ => {
                self.err(path, format!("expected a string, found {}", type_name(v)));
                None
            }
        }
    }

    fn as_array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v [Value]> {
        match v {
            Value::Array(a) => Some(a),
            _ => {
                self.err(path, format!("expected an array, found {}", type_name(v)));
                None
            }
        }
    }

    fn f64_or(&mut self, t: &Table, path: &str, key: &str, default: f64) -> f64 {
        match t.get(key) {
            Some(v) => self.as_f64(v, &join(path, key)).unwrap_or(default),
            None => default,
        }
    }

    fn f64_req(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = self.required(t, path, key)?;
        self.as_f64(v, &join(path, key))
    }

    fn f64_opt(&mut self, t: &Table, path: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        self.as_f64(v, &join(path, key))
    }

    fn u64_or(&mut self, t: &Table, path: &str, key: &str, default: u64) -> u64 {
        match t.get(key) {
            Some(v) => self.as_u64(v, &join(path, key)).unwrap_or(default),
            None => default,
        }
    }

    fn usize_or(&mut self, t: &Table, path: &str, key: &str, default: usize) -> usize {
        self.u64_or(t, path, key, default as u64) as usize
    }

    fn usize_req(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        let v = self.required(t, path, key)?;
        self.as_u64(v, &join(path, key)).map(|n| n as usize)
    }

    fn usize_opt(&mut self, t: &Table, path: &str, key: &str) -> Option<usize> {
        let v = t.get(key)?;
        self.as_u64(v, &join(path, key)).map(|n| n as usize)
    }

    fn bool_or(&mut self, t: &Table, path: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.err(join(path, key), format!("expected a boolean, found {}", type_name(v)));
                default
            }
            None => default,
        }
    }

    fn string_req(&mut self, t: &Table, path: &str, key: &str) -> Option<String> {
        let v = self.required(t, path, key)?;
        self.as_str(v, &join(path, key)).map(str::to_string)
    }

    fn choice<T: Copy>(&mut self, v: &Value, path: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.as_str(v, path)?;
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, value)) => Some(*value),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(path, format!("unknown value {s:?}; expected one of {}", names.join(", ")));
                None
            }
        }
    }

    fn choice_or<T: Copy>(&mut self, t: &Table, path: &str, key: &str, options: &[(&str, T)], default: T) -> T {
        match t.get(key) {
            Some(v) => self.choice(v, &join(path, key), options).unwrap_or(default),
            None => default,
        }
    }

    fn choice_list<T: Copy>(&mut self, t: &Table, path: &str, key: &str, options: &[(&str, T)]) -> Vec<T> {
        let p = join(path, key);
        let Some(items) = t.get(key).and_then(|v| self.as_array(v, &p)) else {
            return Vec::new();
        };
        items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| self.choice(v, &format!("{p}[{i}]"), options))
            .collect()
    }

    fn f64_list(&mut self, t: &Table, path: &str, key: &str) -> Option<Vec<f64>> {
        let p = join(path, key);
        let items = t.get(key).and_then(|v| self.as_array(v, &p))?;
        Some(
            items
                .iter()
                .enumerate()
                .filter_map(|(i, v)| self.as_f64(v, &format!("{p}[{i}]")))
                .collect(),
        )
    }

    fn usize_list(&mut self, t: &Table, path: &str, key: &str) -> Vec<usize> {
        let p = join(path, key);
        let Some(items) = t.get(key).and_then(|v| self.as_array(v, &p)) else {
            return Vec::new();
        };
        items
            .iter()
            .enumerate()
            .filter_map(|(i, v)| self.as_u64(v, &format!("{p}[{i}]")).map(|n| n as usize))
            .collect()
    }

    /// A path relative to the manifest directory that must exist.
    fn existing_file(&mut self, t: &Table, path: &str, key: &str) -> Option<PathBuf> {
        let rel = self.string_req(t, path, key)?;
        let full = self.base.join(&rel);
        if !full.is_file() {
            self.err(join(path, key), format!("file not found: {}", full.display()));
        }
        Some(full)
    }

    fn positive(&mut self, v: f64, path: &str) {
        self.check(v > 0.0 && v.is_finite(), path, format!("must be positive and finite, got {v}"));
    }

    fn non_negative(&mut self, v: f64, path: &str) {
        self.check(v >= 0.0 && v.is_finite(), path, format!("must be finite and >= 0, got {v}"));
    }

    fn at_least_one(&mut self, v: usize, path: &str) {
        self.check(v >= 1, path, "must be at least 1");
    }
}

const ALGORITHMS: &[(&str, Algorithm)] = &[
    ("spgd-oracle", Algorithm::SpgdOracle),
    ("spgda", Algorithm::Spgda),
    ("erm-sgd", Algorithm::ErmSgd),
    ("erm-adam", Algorithm::ErmAdam),
];
const ATTACKS: &[(&str, AttackKind)] = &[
    ("fgsm", AttackKind::Fgsm),
    ("ifgsm", AttackKind::Ifgsm),
    ("pgd", AttackKind::Pgd),
    ("wrm", AttackKind::Wrm),
];
const FED_ALGORITHMS: &[(&str, FedAlgorithm)] = &[("drfl", FedAlgorithm::Drfl), ("fedavg", FedAlgorithm::Fedavg)];

fn dataset(w: &mut Walker, root: &Table) -> Option<DatasetSection> {
    let path = "dataset";
    let Some(t) = w.table(root, "", path) else {
        w.err(path, "missing required section");
        return None;
    };
    let seed = w.u64_or(t, path, "seed", 0);
    let subsample = w.usize_opt(t, path, "subsample");
    let train = w.usize_req(t, path, "train");
    let source_name = w.required(t, path, "source").and_then(|v| w.as_str(v, "dataset.source")).map(str::to_string);
    let common = ["source", "seed", "subsample", "train"];
    let source = match source_name.as_deref() {
        Some("idx") => {
            w.unknown_keys(t, path, &[&common[..], &["images", "labels"]].concat());
            let images = w.existing_file(t, path, "images");
            let labels = w.existing_file(t, path, "labels");
            Some(DataSource::Idx {
                images: images?,
                labels: labels?,
            })
        }
        Some("csv") => {
            w.unknown_keys(t, path, &[&common[..], &["path", "label_column"]].concat());
            let file = w.existing_file(t, path, "path");
            let label_column = w.string_req(t, path, "label_column");
            Some(DataSource::Csv {
                path: file?,
                label_column: label_column?,
            })
        }
        Some("synthetic") => {
            w.unknown_keys(t, path, &[&common[..], &["kind", "n", "dim", "separation"]].concat());
            let kinds = [("two-gaussians", SyntheticKind::TwoGaussians), ("separable-2pt", SyntheticKind::Separable2pt)];
            let kind = w.required(t, path, "kind").and_then(|v| w.choice(v, "dataset.kind", &kinds));
            let n = w.usize_req(t, path, "n");
            let dim = w.usize_req(t, path, "dim");
            let separation = w.f64_or(t, path, "separation", 0.0);
            if let Some(n) = n {
                w.check(n >= 2, "dataset.n", "must be at least 2");
                if let (Some(train), None) = (train, subsample) {
                    w.check(train < n, "dataset.train", format!("must be below dataset.n = {n}"));
                }
            }
            if let Some(dim) = dim {
                w.at_least_one(dim, "dataset.dim");
            }
            w.check(separation.is_finite(), "dataset.separation", "must be finite");
            Some(DataSource::Synthetic {
                kind: kind?,
                n: n?,
                dim: dim?,
                separation,
            })
        }
        Some(other) => {
            w.err("dataset.source", format!("unknown value {other:?}; expected one of idx, csv, synthetic"));
            None
        }
        None => None,
    };
    if let Some(train) = train {
        w.at_least_one(train, "dataset.train");
        if let Some(n) = subsample {
            w.check(train < n, "dataset.train", format!("must be below dataset.subsample = {n}"));
        }
    }
    Some(DatasetSection {
        source: source?,
        subsample,
        train: train?,
        seed,
    })
}

fn model(w: &mut Walker, root: &Table) -> Option<ModelSection> {
    let path = "model";
    let Some(t) = w.table(root, "", path) else {
        w.err(path, "missing required section");
        return None;
    };
    w.unknown_keys(t, path, &["kind", "hidden_dims", "activation"]);
    let kinds = [
        ("linear-regression", ModelKind::LinearRegression),
        ("logistic", ModelKind::Logistic),
        ("mlp", ModelKind::Mlp),
    ];
    let kind = w.required(t, path, "kind").and_then(|v| w.choice(v, "model.kind", &kinds));
    let hidden_dims = w.usize_list(t, path, "hidden_dims");
    let activation = w.choice_or(
        t,
        path,
        "activation",
        &[("relu", Activation::Relu), ("softplus", Activation::Softplus), ("tanh", Activation::Tanh)],
        Activation::Softplus,
    );
    match kind {
        Some(ModelKind::Mlp) => {
            w.check(!hidden_dims.is_empty(), "model.hidden_dims", "an mlp needs at least one hidden layer");
            w.check(hidden_dims.iter().all(|&h| h > 0), "model.hidden_dims", "widths must be at least 1");
        }
        Some(ModelKind::LinearRegression) => {
            w.err("model.kind", "linear-regression needs real-valued targets; every harness data source is class-labelled")
        }
        Some(ModelKind::Logistic) => {
            w.check(hidden_dims.is_empty(), "model.hidden_dims", "only an mlp has hidden layers");
        }
        None => {}
    }
    Some(ModelSection {
        kind: kind?,
        hidden_dims,
        activation,
    })
}

fn robust(w: &mut Walker, t: &Table, path: &str) -> RobustConfig {
    w.unknown_keys(
        t,
        path,
        &["rho", "gamma0", "eta", "oracle_eps", "oracle_max_iters", "oracle_step", "curvature_estimate", "box_constraint"],
    );
    let d = RobustConfig::default();
    let cfg = RobustConfig {
        rho: w.f64_or(t, path, "rho", d.rho),
        gamma0: w.f64_or(t, path, "gamma0", d.gamma0),
        eta: w.f64_or(t, path, "eta", d.eta),
        oracle_eps: w.f64_or(t, path, "oracle_eps", d.oracle_eps),
        oracle_max_iters: w.usize_or(t, path, "oracle_max_iters", d.oracle_max_iters),
        curvature_estimate: w.f64_or(t, path, "curvature_estimate", d.curvature_estimate),
        oracle_step: w.f64_opt(t, path, "oracle_step"),
        box_constraint: w.bool_or(t, path, "box_constraint", d.box_constraint),
    };
    w.non_negative(cfg.rho, &join(path, "rho"));
    w.positive(cfg.gamma0, &join(path, "gamma0"));
    w.non_negative(cfg.eta, &join(path, "eta"));
    w.positive(cfg.oracle_eps, &join(path, "oracle_eps"));
    w.at_least_one(cfg.oracle_max_iters, &join(path, "oracle_max_iters"));
    w.non_negative(cfg.curvature_estimate, &join(path, "curvature_estimate"));
    if let Some(s) = cfg.oracle_step {
        w.positive(s, &join(path, "oracle_step"));
    }
    if cfg.gamma0 > 0.0 && cfg.gamma0.is_finite() && cfg.curvature_estimate.is_finite() {
        w.check(
            cfg.concavity_at(cfg.gamma0) > 0.0,
            &join(path, "gamma0"),
            format!("2·gamma0 must exceed curvature_estimate = {}", cfg.curvature_estimate),
        );
    }
    cfg
}

fn trainer(w: &mut Walker, root: &Table) -> TrainerSection {
    let path = "trainer";
    let empty = Table::new();
    let t = w.table(root, "", path).unwrap_or(&empty);
    w.unknown_keys(
        t,
        path,
        &[
            "algorithms",
            "alpha",
            "iterations",
            "batch_size",
            "seed",
            "eval_every",
            "stationarity_probe",
            "init_scale",
            "robust",
            "regularizer",
        ],
    );
    let algorithms = w.choice_list(t, path, "algorithms", ALGORITHMS);
    let iterations = w.usize_or(t, path, "iterations", 0);
    let mut config = TrainConfig::new(
        Algorithm::ErmSgd,
        w.f64_or(t, path, "alpha", 0.001),
        iterations,
        w.usize_or(t, path, "batch_size", 128),
        w.u64_or(t, path, "seed", 0),
    );
    config.eval_every = w.usize_or(t, path, "eval_every", iterations.max(1));
    config.stationarity_probe = w.usize_or(t, path, "stationarity_probe", 0);
    config.init_scale = w.f64_or(t, path, "init_scale", config.init_scale);
    w.positive(config.alpha, "trainer.alpha");
    w.at_least_one(config.batch_size, "trainer.batch_size");
    w.at_least_one(config.eval_every, "trainer.eval_every");
    w.non_negative(config.init_scale, "trainer.init_scale");
    let robust = match w.table(t, path, "robust") {
        Some(r) => robust(w, r, "trainer.robust"),
        None => RobustConfig::default(),
    };
    let regularizer = match w.table(t, path, "regularizer") {
        Some(r) => {
            let p = "trainer.regularizer";
            w.unknown_keys(r, p, &["kind", "weight"]);
            let kind = w.choice_or(
                r,
                p,
                "kind",
                &[("none", RegularizerKind::None), ("l1", RegularizerKind::L1), ("l2sq", RegularizerKind::L2sq)],
                RegularizerKind::None,
            );
            let weight = w.f64_or(r, p, "weight", 0.0);
            w.non_negative(weight, "trainer.regularizer.weight");
            RegularizerSpec { kind, weight }
        }
        None => RegularizerSpec::none(),
    };
    TrainerSection {
        algorithms,
        config,
        robust,
        regularizer,
    }
}

fn attacks(w: &mut Walker, root: &Table) -> AttackGrid {
    let path = "attacks";
    let empty = Table::new();
    let t = w.table(root, "", path).unwrap_or(&empty);
    w.unknown_keys(
        t,
        path,
        &["kinds", "eps", "steps", "step_size", "full_step_budget", "wrm_gammas", "wrm_step", "wrm_eps", "wrm_max_iters"],
    );
    let kinds = w.choice_list(t, path, "kinds", ATTACKS);
    let eps = w.f64_list(t, path, "eps").unwrap_or_default();
    let wrm_gammas = w.f64_list(t, path, "wrm_gammas").unwrap_or_else(|| vec![1.0]);
    let d = AttackSpec::new(AttackKind::Pgd, 0.0);
    let template = AttackSpec {
        steps: w.usize_or(t, path, "steps", d.steps),
        step_size: w.f64_or(t, path, "step_size", d.step_size),
        full_step_budget: w.bool_or(t, path, "full_step_budget", false),
        wrm_step: w.f64_or(t, path, "wrm_step", d.wrm_step),
        wrm_eps: w.f64_or(t, path, "wrm_eps", d.wrm_eps),
        wrm_max_iters: w.usize_or(t, path, "wrm_max_iters", d.wrm_max_iters),
        ..d
    };
    let linf = kinds.iter().any(|&k| k != AttackKind::Wrm);
    if linf {
        w.check(!eps.is_empty(), "attacks.eps", "the grid must be non-empty when an l-infinity attack is requested");
        w.at_least_one(template.steps, "attacks.steps");
        w.positive(template.step_size, "attacks.step_size");
    }
    for (i, &e) in eps.iter().enumerate() {
        w.non_negative(e, &format!("attacks.eps[{i}]"));
    }
    w.check(eps.windows(2).all(|p| p[0] < p[1]), "attacks.eps", "values must be strictly increasing");
    if kinds.contains(&AttackKind::Wrm) {
        w.check(!wrm_gammas.is_empty(), "attacks.wrm_gammas", "must be non-empty when wrm is requested");
        for (i, &g) in wrm_gammas.iter().enumerate() {
            w.positive(g, &format!("attacks.wrm_gammas[{i}]"));
        }
        w.check(
            wrm_gammas.windows(2).all(|p| p[0] < p[1]),
            "attacks.wrm_gammas",
            "values must be strictly increasing",
        );
        w.positive(template.wrm_step, "attacks.wrm_step");
        w.positive(template.wrm_eps, "attacks.wrm_eps");
        w.at_least_one(template.wrm_max_iters, "attacks.wrm_max_iters");
    }
    let mut seen = Vec::new();
    for k in &kinds {
        w.check(!seen.contains(k), "attacks.kinds", format!("{} listed twice", k.name()));
        seen.push(*k);
    }
    AttackGrid {
        kinds,
        eps,
        wrm_gammas,
        template,
    }
}

fn federation(w: &mut Walker, root: &Table, trainer: &TrainerSection) -> Option<FederationSection> {
    let path = "federation";
    let t = w.table(root, "", path)?;
    w.unknown_keys(
        t,
        path,
        &[
            "algorithms",
            "num_workers",
            "rounds",
            "local_batch",
            "partition",
            "alpha",
            "seed",
            "init_scale",
            "local_epochs",
            "local_lr",
            "server_lr",
            "eval_every",
            "eval_attack",
            "robust",
        ],
    );
    let algorithms = w.choice_list(t, path, "algorithms", FED_ALGORITHMS);
    let robust_cfg = match w.table(t, path, "robust") {
        Some(r) => robust(w, r, "federation.robust"),
        None => trainer.robust.clone(),
    };
    let mut cfg = FederationConfig::new(
        FedAlgorithm::Drfl,
        w.usize_or(t, path, "num_workers", 10),
        w.usize_or(t, path, "rounds", 0),
        w.usize_or(t, path, "local_batch", 64),
        w.f64_or(t, path, "alpha", trainer.config.alpha),
        w.u64_or(t, path, "seed", trainer.config.seed),
        robust_cfg,
    );
    cfg.partition = w.choice_or(
        t,
        path,
        "partition",
        &[("iid", PartitionMode::Iid), ("single-class", PartitionMode::SingleClass)],
        PartitionMode::Iid,
    );
    cfg.init_scale = w.f64_or(t, path, "init_scale", trainer.config.init_scale);
    cfg.local_epochs = w.usize_or(t, path, "local_epochs", 1);
    cfg.local_lr = w.f64_opt(t, path, "local_lr");
    cfg.server_lr = w.f64_or(t, path, "server_lr", 1.0);
    cfg.eval_every = w.usize_or(t, path, "eval_every", 1);
    w.at_least_one(cfg.num_workers, "federation.num_workers");
    w.at_least_one(cfg.local_batch, "federation.local_batch");
    w.positive(cfg.alpha, "federation.alpha");
    w.non_negative(cfg.init_scale, "federation.init_scale");
    w.at_least_one(cfg.local_epochs, "federation.local_epochs");
    if let Some(lr) = cfg.local_lr {
        w.positive(lr, "federation.local_lr");
    }
    w.positive(cfg.server_lr, "federation.server_lr");
    w.at_least_one(cfg.eval_every, "federation.eval_every");
    if let Some(a) = w.table(t, path, "eval_attack") {
        let p = "federation.eval_attack";
        w.unknown_keys(a, p, &["kind", "eps", "steps", "step_size"]);
        let kind = w.required(a, p, "kind").and_then(|v| w.choice(v, "federation.eval_attack.kind", ATTACKS));
        let eps = w.f64_req(a, p, "eps");
        if let (Some(kind), Some(eps)) = (kind, eps) {
            let spec = AttackSpec {
                steps: w.usize_or(a, p, "steps", 10),
                step_size: w.f64_or(a, p, "step_size", 1.0),
                ..AttackSpec::new(kind, eps)
            };
            if let Err(e) = spec.validate() {
                w.err(p, e.to_string());
            }
            cfg.eval_attack = Some(spec);
        }
    }
    Some(FederationSection { algorithms, config: cfg })
}

/// Parses manifest text. `base` is the directory relative paths resolve
/// against. Returns every problem found, or the manifest if there are none.
pub fn parse_manifest(text: &str, base: &Path) -> Result<RunManifest, Vec<Diagnostic>> {
    let root: Table = match toml::from_str(text) {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![Diagnostic {
                path: String::new(),
                message: format!("not valid TOML: {}", e.to_string().trim_end()),
            }])
        }
    };
    let mut w = Walker {
        base: base.to_path_buf(),
        diags: Vec::new(),
    };
    w.unknown_keys(&root, "", &["name", "output_dir", "dataset", "model", "trainer", "attacks", "federation"]);
    let name = w.string_req(&root, "", "name");
    if let Some(n) = &name {
        w.check(
            !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'),
            "name",
            "use letters, digits, '-' and '_' only",
        );
    }
    let output_dir = match root.get("output_dir") {
        Some(v) => w.as_str(v, "output_dir").map(|s| base.join(s)),
        None => name.as_ref().map(|n| base.join("out").join(n)),
    };
    let dataset = dataset(&mut w, &root);
    let model = model(&mut w, &root);
    let trainer = trainer(&mut w, &root);
    let attacks = attacks(&mut w, &root);
    let federation = federation(&mut w, &root, &trainer);
    if !w.diags.is_empty() {
        return Err(w.diags);
    }
    Ok(RunManifest {
        name: name.expect("checked"),
        output_dir: output_dir.expect("checked"),
        dataset: dataset.expect("checked"),
        model: model.expect("checked"),
        trainer,
        attacks,
        federation,
    })
}

fn base_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// All diagnostics for the manifest at `path`; empty means valid.
pub fn validate_manifest(path: &Path) -> std::io::Result<Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_manifest(&text, &base_dir(path)).err().unwrap_or_default())
}

/// Reads and parses; also returns the raw bytes for hashing.
pub fn load_manifest(path: &Path) -> anyhow::Result<(RunManifest, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| anyhow::anyhow!("cannot read manifest {}: {e}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| anyhow::anyhow!("manifest {} is not UTF-8", path.display()))?;
    match parse_manifest(&text, &base_dir(path)) {
        Ok(m) => Ok((m, bytes)),
        Err(diags) => {
            let list: Vec<String> = diags.iter().map(|d| format!("  {d}")).collect();
            anyhow::bail!("invalid manifest {}:\n{}", path.display(), list.join("\n"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[dataset]
source = "synthetic"
kind = "two-gaussians"
n = 40
dim = 3
separation = 2.0
train = 30
[model]
kind = "logistic"
"#;

    fn diags(text: &str) -> Vec<String> {
        parse_manifest(text, Path::new(".")).err().unwrap_or_default().iter().map(|d| d.to_string()).collect()
    }

    #[test]
    fn minimal_manifest_parses_with_defaults() {
        let m = parse_manifest(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(m.output_dir, Path::new("/base/out/tiny"));
        assert_eq!(m.trainer.config.iterations, 0);
        assert_eq!(m.trainer.config.batch_size, 128);
        assert_eq!(m.trainer.robust, RobustConfig::default());
        assert!(m.attacks.kinds.is_empty());
        assert!(m.federation.is_none());
        assert_eq!(m.model.spec(3, 2), ModelSpec::logistic(3, 2));
    }

    #[test]
    fn range_errors_name_their_fields() {
        let text = format!("{MINIMAL}\n[trainer]\nalpha = 0\n[trainer.robust]\ngamma0 = -1\n");
        let d = diags(&text);
        assert!(d.iter().any(|s| s.starts_with("trainer.alpha:")), "{d:?}");
        assert!(d.iter().any(|s| s.starts_with("trainer.robust.gamma0:")), "{d:?}");
    }

    #[test]
    fn all_problems_are_reported_at_once() {
        let text = r#"
name = "bad name"
colour = 3
[dataset]
source = "synthetic"
kind = "spiral"
n = 10
dim = 0
train = 10
[model]
kind = "mlp"
[trainer]
algorithms = ["spgda", "sgd"]
batch_size = 0
[attacks]
kinds = ["pgd"]
eps = [0.1, 0.05]
"#;
        let d = diags(text);
        for prefix in [
            "name:",
            "colour:",
            "dataset.kind:",
            "dataset.dim:",
            "dataset.train:",
            "model.hidden_dims:",
            "trainer.algorithms[1]:",
            "trainer.batch_size:",
            "attacks.eps:",
        ] {
            assert!(d.iter().any(|s| s.starts_with(prefix)), "missing {prefix} in {d:?}");
        }
    }

    #[test]
    fn missing_files_and_sections_are_reported() {
        let d = diags("name = \"x\"\n[dataset]\nsource = \"idx\"\nimages = \"nope.gz\"\ntrain = 5\n");
        assert!(d.iter().any(|s| s.starts_with("dataset.images: file not found")), "{d:?}");
        assert!(d.iter().any(|s| s.starts_with("dataset.labels: missing")), "{d:?}");
        assert!(d.iter().any(|s| s.starts_with("model: missing")), "{d:?}");
    }

    #[test]
    fn syntax_errors_are_a_single_diagnostic() {
        let d = diags("name = [");
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with("not valid TOML"));
    }

    #[test]
    fn attack_points_follow_the_grid() {
        let text = format!("{MINIMAL}\n[attacks]\nkinds = [\"pgd\", \"wrm\"]\neps = [0.0, 0.1]\nsteps = 3\nwrm_gammas = [0.5, 2.0]\n");
        let m = parse_manifest(&text, Path::new(".")).unwrap();
        let pgd = m.attacks.points(AttackKind::Pgd);
        assert_eq!(pgd.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.0, 0.1]);
        assert!(pgd.iter().all(|p| p.1.steps == 3 && p.1.kind == AttackKind::Pgd));
        let wrm = m.attacks.points(AttackKind::Wrm);
        assert_eq!(wrm.iter().map(|p| p.1.wrm_gamma).collect::<Vec<_>>(), vec![0.5, 2.0]);
    }

    #[test]
    fn federation_inherits_trainer_settings() {
        let text = format!(
            "{MINIMAL}\n[trainer]\nalpha = 0.3\nseed = 4\n[trainer.robust]\neta = 2.0\n[federation]\nalgorithms = [\"drfl\"]\nrounds = 3\n[federation.eval_attack]\nkind = \"pgd\"\neps = 0.1\n"
        );
        let m = parse_manifest(&text, Path::new(".")).unwrap();
        let f = m.federation.unwrap();
        assert_eq!(f.config.alpha, 0.3);
        assert_eq!(f.config.seed, 4);
        assert_eq!(f.config.robust.eta, 2.0);
        assert_eq!(f.config.eval_attack.unwrap().eps_adv, 0.1);
    }
}
