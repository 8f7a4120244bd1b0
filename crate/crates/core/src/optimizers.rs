//! Outer training loops.
//!
//! * `spgd-oracle`: each sample of the minibatch is perturbed by the
//!   certified oracle, then a proximal step is taken on `θ̄ = [θ, γ]`.
//! * `spgda`: the same loop with a single ascent step per sample.
//! * `erm-sgd` / `erm-adam`: non-robust baselines on the empirical loss,
//!   followed by the regularizer prox.
//!
//! Every loop is a plain state machine ([`RobustTrainer`], [`ErmTrainer`])
//! that advances one iteration per [`step`](RobustTrainer::step). The
//! `train_*` functions drive a trainer for `iterations` steps and record
//! [`RunMetrics`] every `eval_every` iterations and at the end.
//!
//! # Seeding
//!
//! Parameters are drawn uniformly in `[-init_scale, init_scale]` from
//! `SeededRng::with_stream(seed, 1)`. Minibatch indices are drawn i.i.d.
//! (with replacement) from `SeededRng::new(seed)`. The stationarity probe
//! subset is drawn from `SeededRng::with_stream(seed, 2)`. `γ` starts at
//! `2·γ0`.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_params, init_params, misclassification_rate, Datum, Model, ModelParams};
use crate::prox::{project_gamma, RegularizerSpec};
use crate::robust::{robust_batch_gradient, AugmentedParams, InnerSolver, RobustConfig};
use crate::tensor::{DenseVector, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    SpgdOracle,
    Spgda,
    ErmSgd,
    ErmAdam,
}

impl Algorithm {
    pub fn is_robust(self) -> bool {
        matches!(self, Algorithm::SpgdOracle | Algorithm::Spgda)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::SpgdOracle => "spgd-oracle",
            Algorithm::Spgda => "spgda",
            Algorithm::ErmSgd => "erm-sgd",
            Algorithm::ErmAdam => "erm-adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Outer step `α`.
    pub alpha: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Size of the fixed subset used for the gradient-mapping diagnostic.
    /// `0` disables the diagnostic.
    #[serde(default)]
    pub stationarity_probe: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    0.05
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, alpha: f64, iterations: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            algorithm,
            alpha,
            iterations,
            batch_size,
            seed,
            eval_every: iterations.max(1),
            stationarity_probe: 0,
            init_scale: default_init_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("init_scale must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One row of a training or federation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Iteration (or round) count after which the record was taken.
    pub iteration: usize,
    /// Mean minibatch objective over the steps since the previous record.
    pub train_loss: f64,
    pub held_out_error: Option<f64>,
    pub attacked_error: Option<f64>,
    pub grad_mapping_norm: Option<f64>,
    pub oracle_iters_mean: Option<f64>,
    pub gamma: Option<f64>,
    /// Milliseconds since the run started. Kept out of the CSV so that CSV
    /// files are reproducible byte for byte.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub records: Vec<MetricRecord>,
}

const CSV_HEADER: &str = "iteration,train_loss,held_out_error,attacked_error,grad_mapping_norm,oracle_iters_mean,gamma";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunMetrics {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.train_loss,
                opt(r.held_out_error),
                opt(r.attacked_error),
                opt(r.grad_mapping_norm),
                opt(r.oracle_iters_mean),
                opt(r.gamma)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }

    /// `(iteration, value)` pairs for the records where `field` is present.
    pub fn series(&self, field: impl Fn(&MetricRecord) -> Option<f64>) -> Vec<(usize, f64)> {
        self.records.iter().filter_map(|r| field(r).map(|v| (r.iteration, v))).collect()
    }
}

/// Trailing moving average: entry `i` averages `values[i + 1 - window ..= i]`.
/// The first `window − 1` entries are dropped.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Objective value and oracle effort of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub objective: f64,
    pub oracle_iters: f64,
}

pub(crate) fn sample_batch(rng: &mut SeededRng, n: usize, m: usize) -> Vec<usize> {
    (0..m).map(|_| rng.index(n)).collect()
}

fn check_finite(g: &[f64], g_gamma: f64, iteration: usize, gamma: f64) -> Result<()> {
    let bad = g.iter().filter(|v| !v.is_finite()).count() + usize::from(!g_gamma.is_finite());
    if bad == 0 {
        Ok(())
    } else {
        Err(Error::Diverged { iteration, gamma, bad })
    }
}

/// `θ̄ ← prox_{α(r + h)}(θ̄ − α g)`.
pub(crate) fn prox_update(
    aug: &mut AugmentedParams,
    d_theta: &[f64],
    d_gamma: f64,
    alpha: f64,
    reg: &RegularizerSpec,
    gamma0: f64,
) -> Result<()> {
    let mut theta: Vec<f64> = aug.theta.as_slice().iter().zip(d_theta).map(|(t, g)| t - alpha * g).collect();
    reg.prox_in_place(&mut theta, alpha);
    aug.theta = ModelParams::new(DenseVector::from_computed(theta, "prox update")?);
    aug.gamma = project_gamma(aug.gamma - alpha * d_gamma, gamma0);
    Ok(())
}

pub(crate) fn initial_augmented<M: Model + ?Sized>(
    model: &M,
    robust: &RobustConfig,
    seed: u64,
    init_scale: f64,
) -> AugmentedParams {
    AugmentedParams::new(initial_params(model, seed, init_scale), 2.0 * robust.gamma0)
}

pub(crate) fn initial_params<M: Model + ?Sized>(model: &M, seed: u64, init_scale: f64) -> ModelParams {
    init_params(model, &mut SeededRng::with_stream(seed, 1), init_scale)
}

/// `‖(θ̄ − prox(θ̄ − αg))/α‖` for a given gradient `g = (g_θ, g_γ)`.
pub fn mapping_norm(
    aug: &AugmentedParams,
    g_theta: &[f64],
    g_gamma: f64,
    reg: &RegularizerSpec,
    alpha: f64,
    gamma0: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("gradient mapping needs alpha > 0, got {alpha}")));
    }
    let mut next = aug.clone();
    prox_update(&mut next, g_theta, g_gamma, alpha, reg, gamma0)?;
    let sq: f64 = aug
        .theta
        .as_slice()
        .iter()
        .zip(next.theta.as_slice())
        .map(|(a, b)| ((a - b) / alpha).powi(2))
        .sum::<f64>()
        + ((aug.gamma - next.gamma) / alpha).powi(2);
    Ok(sq.sqrt())
}

/// Gradient-mapping norm of the robust objective at `aug`, using the
/// oracle gradient averaged over `probe`.
pub fn gradient_mapping_norm<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    robust: &RobustConfig,
    aug: &AugmentedParams,
    probe: &[Datum],
    alpha: f64,
) -> Result<f64> {
    robust.validate()?;
    check_params(model, &aug.theta)?;
    for z in probe {
        crate::models::check_datum(model, z)?;
    }
    let g = robust_batch_gradient(model, aug.theta.as_slice(), aug.gamma, robust, InnerSolver::Oracle, probe.iter())?;
    mapping_norm(aug, &g.d_theta, g.d_gamma, reg, alpha, robust.gamma0)
}

fn probe_subset(data: &[Datum], size: usize, seed: u64) -> Vec<Datum> {
    if size >= data.len() {
        return data.to_vec();
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    SeededRng::with_stream(seed, 2).shuffle(&mut idx);
    idx[..size].iter().map(|&i| data[i].clone()).collect()
}

fn check_data<M: Model + ?Sized>(model: &M, data: &[Datum]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    data.iter().try_for_each(|z| crate::models::check_datum(model, z))
}

/// Step-wise SPGD-oracle / SPGDA state machine.
pub struct RobustTrainer<'a, M: Model + ?Sized> {
    model: &'a M,
    reg: RegularizerSpec,
    robust: RobustConfig,
    alpha: f64,
    batch_size: usize,
    solver: InnerSolver,
    data: &'a [Datum],
    rng: SeededRng,
    aug: AugmentedParams,
    t: usize,
}

impl<'a, M: Model + ?Sized> RobustTrainer<'a, M> {
    pub fn new(
        model: &'a M,
        reg: &RegularizerSpec,
        robust: &RobustConfig,
        cfg: &TrainConfig,
        data: &'a [Datum],
    ) -> Result<Self> {
        let solver = match cfg.algorithm {
            Algorithm::SpgdOracle => InnerSolver::Oracle,
            Algorithm::Spgda => InnerSolver::SingleStep,
            other => {
                return Err(Error::config(format!("{} is not a robust algorithm", other.name())));
            }
        };
        cfg.validate()?;
        robust.validate()?;
        reg.validate()?;
        check_data(model, data)?;
        Ok(RobustTrainer {
            model,
            reg: *reg,
            robust: robust.clone(),
            alpha: cfg.alpha,
            batch_size: cfg.batch_size,
            solver,
            data,
            rng: SeededRng::new(cfg.seed),
            aug: initial_augmented(model, robust, cfg.seed, cfg.init_scale),
            t: 0,
        })
    }

    pub fn params(&self) -> &AugmentedParams {
        &self.aug
    }

    pub fn into_params(self) -> AugmentedParams {
        self.aug
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let t = self.t + 1;
        let batch = sample_batch(&mut self.rng, self.data.len(), self.batch_size);
        let g = robust_batch_gradient(
            self.model,
            self.aug.theta.as_slice(),
            self.aug.gamma,
            &self.robust,
            self.solver,
            batch.iter().map(|&i| &self.data[i]),
        )
        .map_err(|e| e.at_iteration(t))?;
        check_finite(&g.d_theta, g.d_gamma, t, self.aug.gamma)?;
        prox_update(&mut self.aug, &g.d_theta, g.d_gamma, self.alpha, &self.reg, self.robust.gamma0)
            .map_err(|e| e.at_iteration(t))?;
        self.t = t;
        Ok(StepStats {
            objective: g.mean_psi,
            oracle_iters: g.mean_oracle_iters,
        })
    }
}

/// Step-wise proximal SGD / Adam on the empirical loss.
pub struct ErmTrainer<'a, M: Model + ?Sized> {
    model: &'a M,
    reg: RegularizerSpec,
    alpha: f64,
    batch_size: usize,
    adam: Option<AdamState>,
    data: &'a [Datum],
    rng: SeededRng,
    theta: ModelParams,
    t: usize,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<'a, M: Model + ?Sized> ErmTrainer<'a, M> {
    pub fn new(model: &'a M, reg: &RegularizerSpec, cfg: &TrainConfig, data: &'a [Datum]) -> Result<Self> {
        let adam = match cfg.algorithm {
            Algorithm::ErmSgd => None,
            Algorithm::ErmAdam => Some(AdamState {
                m: vec![0.0; model.num_params()],
                v: vec![0.0; model.num_params()],
            }),
            other => {
                return Err(Error::config(format!("{} is not an ERM algorithm", other.name())));
            }
        };
        cfg.validate()?;
        reg.validate()?;
        check_data(model, data)?;
        Ok(ErmTrainer {
            model,
            reg: *reg,
            alpha: cfg.alpha,
            batch_size: cfg.batch_size,
            adam,
            data,
            rng: SeededRng::new(cfg.seed),
            theta: initial_params(model, cfg.seed, cfg.init_scale),
            t: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.theta
    }

    pub fn into_params(self) -> ModelParams {
        self.theta
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn step(&mut self) -> Result<StepStats> {
        let t = self.t + 1;
        let batch = sample_batch(&mut self.rng, self.data.len(), self.batch_size);
        let (g, loss) = erm_batch_gradient(self.model, self.theta.as_slice(), batch.iter().map(|&i| &self.data[i]));
        check_finite(&g, 0.0, t, f64::NAN)?;
        let mut theta = self.theta.as_slice().to_vec();
        match self.adam.as_mut() {
            None => theta.iter_mut().zip(&g).for_each(|(p, gi)| *p -= self.alpha * gi),
            Some(st) => {
                let b1t = 1.0 - ADAM_BETA1.powi(t as i32);
                let b2t = 1.0 - ADAM_BETA2.powi(t as i32);
                for i in 0..theta.len() {
                    st.m[i] = ADAM_BETA1 * st.m[i] + (1.0 - ADAM_BETA1) * g[i];
                    st.v[i] = ADAM_BETA2 * st.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let m_hat = st.m[i] / b1t;
                    let v_hat = st.v[i] / b2t;
                    theta[i] -= self.alpha * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
        self.reg.prox_in_place(&mut theta, self.alpha);
        self.theta = ModelParams::new(DenseVector::from_computed(theta, "erm step").map_err(|e| e.at_iteration(t))?);
        self.t = t;
        Ok(StepStats {
            objective: loss,
            oracle_iters: 0.0,
        })
    }
}

/// Batch-mean `∇θℓ` at the clean points, reduced in batch order. Returns the
/// gradient and the mean loss.
pub(crate) fn erm_batch_gradient<'a, M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    batch: impl ExactSizeIterator<Item = &'a Datum>,
) -> (Vec<f64>, f64) {
    let m = batch.len();
    let mut g = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    for z in batch {
        loss += model.accumulate_param_grad_raw(theta, &z.x, &z.y, 1.0, &mut g);
    }
    let inv = 1.0 / m as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    (g, loss * inv)
}

/// Collects records while a trainer runs.
struct Recorder {
    start: Instant,
    since_last: (f64, f64, usize),
    metrics: RunMetrics,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            start: Instant::now(),
            since_last: (0.0, 0.0, 0),
            metrics: RunMetrics::default(),
        }
    }

    fn observe(&mut self, s: StepStats) {
        self.since_last.0 += s.objective;
        self.since_last.1 += s.oracle_iters;
        self.since_last.2 += 1;
    }

    fn due(t: usize, cfg: &TrainConfig) -> bool {
        t.is_multiple_of(cfg.eval_every) || t == cfg.iterations
    }

    fn record(
        &mut self,
        iteration: usize,
        held_out_error: Option<f64>,
        grad_mapping_norm: Option<f64>,
        oracle: bool,
        gamma: Option<f64>,
    ) {
        let (sum, iters, n) = std::mem::take(&mut self.since_last);
        let n = n.max(1) as f64;
        self.metrics.records.push(MetricRecord {
            iteration,
            train_loss: sum / n,
            held_out_error,
            attacked_error: None,
            grad_mapping_norm,
            oracle_iters_mean: oracle.then_some(iters / n),
            gamma,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }
}

pub(crate) fn held_out_rate<M: Model + ?Sized>(model: &M, theta: &ModelParams, held_out: &[Datum]) -> Result<Option<f64>> {
    if held_out.is_empty() || model.classes().is_none() {
        return Ok(None);
    }
    misclassification_rate(model, theta, held_out).map(Some)
}

fn train_robust<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    robust: &RobustConfig,
    cfg: &TrainConfig,
    train: &[Datum],
    held_out: &[Datum],
) -> Result<(AugmentedParams, RunMetrics)> {
    let mut trainer = RobustTrainer::new(model, reg, robust, cfg, train)?;
    let probe = (cfg.stationarity_probe > 0).then(|| probe_subset(train, cfg.stationarity_probe, cfg.seed));
    let oracle = cfg.algorithm == Algorithm::SpgdOracle;
    let mut rec = Recorder::new();
    for t in 1..=cfg.iterations {
        rec.observe(trainer.step()?);
        if Recorder::due(t, cfg) {
            let aug = trainer.params();
            let gm = match &probe {
                Some(p) => Some(gradient_mapping_norm(model, reg, robust, aug, p, cfg.alpha).map_err(|e| e.at_iteration(t))?),
                None => None,
            };
            let err = held_out_rate(model, &aug.theta, held_out)?;
            rec.record(t, err, gm, oracle, Some(aug.gamma));
        }
    }
    Ok((trainer.into_params(), rec.metrics))
}

/// SPGD with the certified inner oracle. `held_out` may be empty.
pub fn train_spgd_oracle<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    robust: &RobustConfig,
    cfg: &TrainConfig,
    train: &[Datum],
    held_out: &[Datum],
) -> Result<(AugmentedParams, RunMetrics)> {
    if cfg.algorithm != Algorithm::SpgdOracle {
        return Err(Error::config("train_spgd_oracle needs algorithm = spgd-oracle"));
    }
    train_robust(model, reg, robust, cfg, train, held_out)
}

/// SPGDA: single ascent step per sample, then a proximal descent step.
pub fn train_spgda<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    robust: &RobustConfig,
    cfg: &TrainConfig,
    train: &[Datum],
    held_out: &[Datum],
) -> Result<(AugmentedParams, RunMetrics)> {
    if cfg.algorithm != Algorithm::Spgda {
        return Err(Error::config("train_spgda needs algorithm = spgda"));
    }
    train_robust(model, reg, robust, cfg, train, held_out)
}

/// Proximal SGD or Adam on the empirical loss.
///
/// The recorded gradient-mapping norm uses the empirical gradient.
pub fn train_erm<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    cfg: &TrainConfig,
    train: &[Datum],
    held_out: &[Datum],
) -> Result<(ModelParams, RunMetrics)> {
    let mut trainer = ErmTrainer::new(model, reg, cfg, train)?;
    let probe = (cfg.stationarity_probe > 0).then(|| probe_subset(train, cfg.stationarity_probe, cfg.seed));
    let mut rec = Recorder::new();
    for t in 1..=cfg.iterations {
        rec.observe(trainer.step()?);
        if Recorder::due(t, cfg) {
            let theta = trainer.params();
            let gm = match &probe {
                Some(p) => {
                    let (g, _) = erm_batch_gradient(model, theta.as_slice(), p.iter());
                    let mut next = theta.as_slice().iter().zip(&g).map(|(a, b)| a - cfg.alpha * b).collect::<Vec<_>>();
                    reg.prox_in_place(&mut next, cfg.alpha);
                    let sq: f64 = theta.as_slice().iter().zip(&next).map(|(a, b)| ((a - b) / cfg.alpha).powi(2)).sum();
                    Some(sq.sqrt())
                }
                None => None,
            };
            let err = held_out_rate(model, theta, held_out)?;
            rec.record(t, err, gm, false, None);
        }
    }
    Ok((trainer.into_params(), rec.metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearScore, ModelSpec, Target};

    fn toy() -> Vec<Datum> {
        vec![
            Datum::class(vec![0.8, 0.1], 0).unwrap(),
            Datum::class(vec![-0.7, -0.2], 1).unwrap(),
            Datum::class(vec![0.6, -0.3], 0).unwrap(),
            Datum::class(vec![-0.5, 0.4], 1).unwrap(),
        ]
    }

    fn robust() -> RobustConfig {
        RobustConfig {
            rho: 0.5,
            gamma0: 2.0,
            eta: 0.05,
            oracle_eps: 1e-8,
            oracle_max_iters: 500,
            ..RobustConfig::default()
        }
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let spec = ModelSpec::logistic(2, 2);
        let data = toy();
        let cfg = TrainConfig::new(Algorithm::Spgda, 0.1, 0, 2, 9);
        let (aug, metrics) = train_spgda(&spec, &RegularizerSpec::none(), &robust(), &cfg, &data, &[]).unwrap();
        assert_eq!(aug, initial_augmented(&spec, &robust(), 9, 0.05));
        assert!(metrics.records.is_empty());
        let cfg = TrainConfig::new(Algorithm::SpgdOracle, 0.1, 0, 2, 9);
        let (aug2, _) = train_spgd_oracle(&spec, &RegularizerSpec::none(), &robust(), &cfg, &data, &[]).unwrap();
        assert_eq!(aug, aug2);
    }

    #[test]
    fn initial_params_are_in_range_and_gamma_doubled() {
        let spec = ModelSpec::mlp(3, vec![4], 2, Default::default());
        let aug = initial_augmented(&spec, &robust(), 1, 0.05);
        assert!(aug.theta.as_slice().iter().all(|v| v.abs() <= 0.05));
        assert_eq!(aug.gamma, 4.0);
    }

    #[test]
    fn eta_zero_spgda_tracks_erm_sgd() {
        let spec = ModelSpec::logistic(2, 2);
        let data = toy();
        let rc = RobustConfig { eta: 0.0, ..robust() };
        let reg = RegularizerSpec::l2sq(0.01);
        let mut a = RobustTrainer::new(&spec, &reg, &rc, &TrainConfig::new(Algorithm::Spgda, 0.05, 0, 3, 4), &data).unwrap();
        let mut b = ErmTrainer::new(&spec, &reg, &TrainConfig::new(Algorithm::ErmSgd, 0.05, 0, 3, 4), &data).unwrap();
        for _ in 0..50 {
            let gamma = a.params().gamma;
            a.step().unwrap();
            b.step().unwrap();
            assert_eq!(a.params().theta, *b.params());
            assert_eq!(a.params().gamma, (gamma - 0.05 * rc.rho).max(rc.gamma0));
        }
    }

    #[test]
    fn zero_gradient_sgd_step_is_identity() {
        // LinearScore on ±x has zero mean gradient for any batch of both points
        let model = LinearScore { dim: 1 };
        let data = [
            Datum::new(DenseVector::new(vec![0.5]).unwrap(), Target::Value(0.0)),
            Datum::new(DenseVector::new(vec![-0.5]).unwrap(), Target::Value(0.0)),
        ];
        let (g, _) = erm_batch_gradient(&model, &[0.3], data.iter());
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn mapping_norm_cases() {
        let aug = AugmentedParams::new(ModelParams::from_vec(vec![1.0, -2.0]).unwrap(), 3.0);
        let none = RegularizerSpec::none();
        let n1 = mapping_norm(&aug, &[0.3, 0.4], 0.0, &none, 0.1, 1.0).unwrap();
        assert!((n1 - 0.5).abs() < 1e-12);
        let n2 = mapping_norm(&aug, &[0.6, 0.8], 0.0, &none, 0.1, 1.0).unwrap();
        assert!((n2 - 2.0 * n1).abs() < 1e-12);
        // γ at the floor with a positive γ-gradient: projection absorbs it
        let floor = AugmentedParams::new(aug.theta.clone(), 1.0);
        assert_eq!(mapping_norm(&floor, &[0.0, 0.0], 5.0, &none, 0.1, 1.0).unwrap(), 0.0);
        assert!(mapping_norm(&aug, &[0.0, 0.0], 0.0, &none, 0.0, 1.0).is_err());
    }

    #[test]
    fn gradient_mapping_vanishes_at_quadratic_minimizer() {
        // ℓ = θᵀx gives ψ̄ = θᵀx + ‖θ‖²/(4γ) + γρ; stationary in θ at
        // θ = −2γ·mean(x), and γ = γ0 is held by the projection when
        // ρ > ‖θ‖²/(4γ0²).
        let model = LinearScore { dim: 2 };
        let data = vec![
            Datum::new(DenseVector::new(vec![0.4, -0.2]).unwrap(), Target::Value(0.0)),
            Datum::new(DenseVector::new(vec![0.2, 0.6]).unwrap(), Target::Value(0.0)),
        ];
        let rc = RobustConfig {
            rho: 1.0,
            gamma0: 1.5,
            eta: 0.1,
            oracle_eps: 1e-16,
            oracle_max_iters: 10_000,
            ..RobustConfig::default()
        };
        let theta = vec![-2.0 * 1.5 * 0.3, -2.0 * 1.5 * 0.2];
        let aug = AugmentedParams::new(ModelParams::from_vec(theta).unwrap(), 1.5);
        let gm = gradient_mapping_norm(&model, &RegularizerSpec::none(), &rc, &aug, &data, 0.01).unwrap();
        assert!(gm < 1e-6, "{gm}");
    }

    #[test]
    fn erm_learns_separable_pair() {
        let spec = ModelSpec::logistic(2, 2);
        let data = vec![Datum::class(vec![1.0, 0.0], 0).unwrap(), Datum::class(vec![-1.0, 0.0], 1).unwrap()];
        for alg in [Algorithm::ErmSgd, Algorithm::ErmAdam] {
            let cfg = TrainConfig::new(alg, 0.1, 300, 2, 0);
            let (theta, m) = train_erm(&spec, &RegularizerSpec::none(), &cfg, &data, &data).unwrap();
            assert_eq!(misclassification_rate(&spec, &theta, &data).unwrap(), 0.0);
            assert_eq!(m.last().unwrap().held_out_error, Some(0.0));
        }
    }

    #[test]
    fn records_follow_eval_every_and_are_deterministic() {
        let spec = ModelSpec::logistic(2, 2);
        let data = toy();
        let mut cfg = TrainConfig::new(Algorithm::SpgdOracle, 0.05, 25, 2, 3);
        cfg.eval_every = 10;
        cfg.stationarity_probe = 3;
        let run = || train_spgd_oracle(&spec, &RegularizerSpec::l1(0.01), &robust(), &cfg, &data, &data).unwrap();
        let (a1, m1) = run();
        let (a2, m2) = run();
        assert_eq!(a1, a2);
        assert_eq!(m1.to_csv_string(), m2.to_csv_string());
        let its: Vec<usize> = m1.records.iter().map(|r| r.iteration).collect();
        assert_eq!(its, vec![10, 20, 25]);
        for r in &m1.records {
            assert!(r.gamma.unwrap() >= 2.0);
            assert!(r.oracle_iters_mean.is_some() && r.grad_mapping_norm.unwrap() >= 0.0);
        }
        assert!(m1.to_csv_string().starts_with(CSV_HEADER));
    }

    #[test]
    fn wrong_algorithm_is_rejected() {
        let spec = ModelSpec::logistic(2, 2);
        let data = toy();
        let cfg = TrainConfig::new(Algorithm::ErmSgd, 0.1, 1, 1, 0);
        assert!(train_spgda(&spec, &RegularizerSpec::none(), &robust(), &cfg, &data, &[]).is_err());
        let cfg = TrainConfig::new(Algorithm::Spgda, 0.1, 1, 1, 0);
        assert!(train_erm(&spec, &RegularizerSpec::none(), &cfg, &data, &[]).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::linear_regression(1);
        let data = vec![Datum::new(DenseVector::new(vec![1.0]).unwrap(), Target::Value(1e150))];
        let cfg = TrainConfig::new(Algorithm::ErmSgd, 1e10, 50, 1, 0);
        let err = train_erm(&spec, &RegularizerSpec::none(), &cfg, &data, &[]).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. } | Error::AtIteration { .. }), "{err}");
    }

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(moving_average(&[1.0], 2).is_empty());
    }
}
