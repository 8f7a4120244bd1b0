//! In-process federated simulation: robust federated learning and the
//! federated-averaging baseline.
//!
//! A round of the robust protocol (`drfl`):
//!
//! 1. the server broadcasts `θ̄ᵗ` ([`BroadcastMsg`]);
//! 2. each worker draws `local_batch` samples from its shard, perturbs every
//!    sample with one ascent step and uploads the minibatch-mean Danskin
//!    gradient ([`GradientMsg`]);
//! 3. the server averages the `K` gradients with weight `1/K`, reducing in
//!    worker-id order, and takes one proximal step of size `α`.
//!
//! `fedavg` replaces step 2 with `local_epochs` epochs of proximal SGD on
//! the plain loss ([`ParamsMsg`] uploads the local weights) and step 3 with
//! `θ ← θ + server_lr·(mean θ_k − θ)`.
//!
//! Worker `k` samples with `SeededRng::new(seed ^ k)`. With `K = 1` and an
//! i.i.d. partition the protocol therefore replays centralized SPGDA with
//! the same seed step for step.
//!
//! # Wire format
//!
//! All messages are little-endian: a 4-byte tag, a `u32` format version
//! (currently 1), then the fields below in order. Counts and ids are `u64`;
//! reals are IEEE-754 `f64`.
//!
//! | message | tag | fields |
//! |---------|-----|--------|
//! | [`BroadcastMsg`] | `WDBC` | round, n, θ[n], γ |
//! | [`GradientMsg`]  | `WDGR` | round, worker_id, batch_size_used, n, ∇θ[n], ∂γ |
//! | [`ParamsMsg`]    | `WDPA` | round, worker_id, samples, n, θ[n] |

use serde::{Deserialize, Serialize};

use crate::attacks::{evaluate_under_attack, AttackSpec};
use crate::error::{Error, Result};
use crate::models::{check_datum, Datum, Model, ModelParams};
use crate::optimizers::{erm_batch_gradient, held_out_rate, initial_augmented, prox_update, MetricRecord, RunMetrics};
use crate::prox::RegularizerSpec;
use crate::robust::{robust_batch_gradient, AugmentedParams, GradientPair, InnerSolver, RobustConfig};
use crate::tensor::{DenseVector, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionMode {
    Iid,
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FedAlgorithm {
    Drfl,
    Fedavg,
}

impl FedAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            FedAlgorithm::Drfl => "drfl",
            FedAlgorithm::Fedavg => "fedavg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub algorithm: FedAlgorithm,
    pub num_workers: usize,
    pub rounds: usize,
    pub local_batch: usize,
    pub partition: PartitionMode,
    #[serde(default = "one")]
    pub participation: f64,
    /// Server step `α` (drfl) and local SGD step (fedavg, unless
    /// `local_lr` is set).
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "one_usize")]
    pub local_epochs: usize,
    #[serde(default)]
    pub local_lr: Option<f64>,
    #[serde(default = "one")]
    pub server_lr: f64,
    /// Record metrics every this many rounds (and after the last one).
    #[serde(default = "one_usize")]
    pub eval_every: usize,
    /// Attack used for the per-round `attacked_error` column.
    #[serde(default)]
    pub eval_attack: Option<AttackSpec>,
    pub robust: RobustConfig,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_init_scale() -> f64 {
    0.05
}

impl FederationConfig {
    pub fn new(algorithm: FedAlgorithm, num_workers: usize, rounds: usize, local_batch: usize, alpha: f64, seed: u64, robust: RobustConfig) -> Self {
        FederationConfig {
            algorithm,
            num_workers,
            rounds,
            local_batch,
            partition: PartitionMode::Iid,
            participation: 1.0,
            alpha,
            seed,
            init_scale: default_init_scale(),
            local_epochs: 1,
            local_lr: None,
            server_lr: 1.0,
            eval_every: 1,
            eval_attack: None,
            robust,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 {
            return Err(Error::config("num_workers must be at least 1"));
        }
        if self.local_batch == 0 {
            return Err(Error::config("local_batch must be at least 1"));
        }
        if self.participation != 1.0 {
            return Err(Error::config("only full participation (1.0) is supported"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Some(lr) = self.local_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config("local_lr must be positive"));
            }
        }
        if !(self.server_lr > 0.0 && self.server_lr.is_finite()) {
            return Err(Error::config("server_lr must be positive"));
        }
        if self.local_epochs == 0 || self.eval_every == 0 {
            return Err(Error::config("local_epochs and eval_every must be at least 1"));
        }
        if let Some(a) = &self.eval_attack {
            a.validate()?;
        }
        self.robust.validate()
    }
}

/// Splits `data` into `k` disjoint shards that cover it.
///
/// `iid`: a seeded shuffle decides shard membership, shard sizes differ by at
/// most one, and each shard keeps the original relative order (so `k = 1`
/// returns `data` unchanged). `single-class`: needs `k ≥ classes`; class `c`
/// is split evenly over the workers `k ≡ c (mod classes)`.
pub fn partition(data: &[Datum], k: usize, mode: PartitionMode, seed: u64) -> Result<Vec<Vec<Datum>>> {
    if k == 0 {
        return Err(Error::config("cannot partition into 0 shards"));
    }
    if data.len() < k {
        return Err(Error::config(format!("{} samples cannot fill {k} shards", data.len())));
    }
    let groups: Vec<Vec<usize>> = match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            SeededRng::with_stream(seed, 3).shuffle(&mut idx);
            split_even(&idx, k)
        }
        PartitionMode::SingleClass => {
            let classes = 1 + data
                .iter()
                .map(|z| z.label().ok_or_else(|| Error::config("single-class partition needs class labels")))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            if k < classes {
                return Err(Error::config(format!(
                    "single-class partition needs at least as many workers as classes ({k} < {classes})"
                )));
            }
            let mut groups = vec![Vec::new(); k];
            for c in 0..classes {
                let members: Vec<usize> = (0..data.len()).filter(|&i| data[i].label() == Some(c)).collect();
                if members.is_empty() {
                    return Err(Error::config(format!("class {c} has no samples")));
                }
                let owners: Vec<usize> = (c..k).step_by(classes).collect();
                for (owner, part) in owners.iter().zip(split_even(&members, owners.len())) {
                    if part.is_empty() {
                        return Err(Error::config(format!("class {c} is too small for {} workers", owners.len())));
                    }
                    groups[*owner] = part;
                }
            }
            groups
        }
    };
    Ok(groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g.into_iter().map(|i| data[i].clone()).collect()
        })
        .collect())
}

fn split_even(idx: &[usize], k: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (idx.len() / k, idx.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for s in 0..k {
        let len = base + usize::from(s < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastMsg {
    pub round: u64,
    pub aug: AugmentedParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMsg {
    pub round: u64,
    pub worker_id: u64,
    pub grad: GradientPair,
    pub batch_size_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsMsg {
    pub round: u64,
    pub worker_id: u64,
    pub theta: ModelParams,
    pub samples: u64,
}

const WIRE_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new(tag: &[u8; 4]) -> Self {
        let mut w = Writer(tag.to_vec());
        w.0.extend_from_slice(&WIRE_VERSION.to_le_bytes());
        w
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], tag: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != tag {
            return Err(r.err(0, format!("expected tag {:?}", String::from_utf8_lossy(tag))));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != WIRE_VERSION {
            return Err(r.err(4, format!("unsupported version {version}")));
        }
        Ok(r)
    }
    fn err(&self, offset: usize, message: String) -> Error {
        Error::Parse {
            offset: offset as u64,
            message,
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(self.pos, format!("truncated: need {n} more bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn reals(&mut self) -> Result<DenseVector> {
        let at = self.pos;
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(self.err(at, format!("length {n} exceeds message size")));
        }
        let v = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        DenseVector::new(v).map_err(|e| self.err(at, e.to_string()))
    }
    fn finish(self) -> Result<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(self.err(self.pos, "trailing bytes".into()))
        }
    }
}

impl BroadcastMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"WDBC");
        w.u64(self.round);
        w.reals(self.aug.theta.as_slice());
        w.f64(self.aug.gamma);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, b"WDBC")?;
        let round = r.u64()?;
        let theta = ModelParams::new(r.reals()?);
        let gamma = r.f64()?;
        r.finish()?;
        Ok(BroadcastMsg {
            round,
            aug: AugmentedParams::new(theta, gamma),
        })
    }
}

impl GradientMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"WDGR");
        w.u64(self.round);
        w.u64(self.worker_id);
        w.u64(self.batch_size_used);
        w.reals(&self.grad.d_theta);
        w.f64(self.grad.d_gamma);
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, b"WDGR")?;
        let round = r.u64()?;
        let worker_id = r.u64()?;
        let batch_size_used = r.u64()?;
        let d_theta = r.reals()?;
        let d_gamma = r.f64()?;
        r.finish()?;
        Ok(GradientMsg {
            round,
            worker_id,
            grad: GradientPair { d_theta, d_gamma },
            batch_size_used,
        })
    }
}

impl ParamsMsg {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(b"WDPA");
        w.u64(self.round);
        w.u64(self.worker_id);
        w.u64(self.samples);
        w.reals(self.theta.as_slice());
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf, b"WDPA")?;
        let round = r.u64()?;
        let worker_id = r.u64()?;
        let samples = r.u64()?;
        let theta = ModelParams::new(r.reals()?);
        r.finish()?;
        Ok(ParamsMsg {
            round,
            worker_id,
            theta,
            samples,
        })
    }
}

/// A worker: its shard and its private sampler.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub worker_id: usize,
    pub shard: Vec<Datum>,
    rng: SeededRng,
    /// Last round this worker answered.
    last_round: Option<u64>,
    last_objective: f64,
}

impl WorkerState {
    pub fn new(worker_id: usize, shard: Vec<Datum>, global_seed: u64) -> Self {
        WorkerState {
            worker_id,
            shard,
            rng: SeededRng::new(global_seed ^ worker_id as u64),
            last_round: None,
            last_objective: f64::NAN,
        }
    }

    /// Mean minibatch objective of the most recent round.
    pub fn last_objective(&self) -> f64 {
        self.last_objective
    }

    fn accept(&mut self, round: u64) -> Result<()> {
        if self.shard.is_empty() {
            return Err(Error::Empty("worker shard"));
        }
        if self.last_round.is_some_and(|r| round <= r) {
            return Err(Error::Protocol(format!(
                "worker {} received stale round {round}",
                self.worker_id
            )));
        }
        self.last_round = Some(round);
        Ok(())
    }

    /// Robust local step: one ascent step per sampled datum, then the
    /// minibatch-mean Danskin gradient at `θ̄ᵗ`.
    pub fn worker_round<M: Model + ?Sized>(
        &mut self,
        model: &M,
        msg: &BroadcastMsg,
        cfg: &FederationConfig,
    ) -> Result<GradientMsg> {
        self.accept(msg.round)?;
        let batch = crate::optimizers::sample_batch(&mut self.rng, self.shard.len(), cfg.local_batch);
        let g = robust_batch_gradient(
            model,
            msg.aug.theta.as_slice(),
            msg.aug.gamma,
            &cfg.robust,
            InnerSolver::SingleStep,
            batch.iter().map(|&i| &self.shard[i]),
        )?;
        self.last_objective = g.mean_psi;
        Ok(GradientMsg {
            round: msg.round,
            worker_id: self.worker_id as u64,
            grad: GradientPair {
                d_theta: DenseVector::from_computed(g.d_theta, "worker gradient")?,
                d_gamma: g.d_gamma,
            },
            batch_size_used: cfg.local_batch as u64,
        })
    }

    /// FedAvg local update: `local_epochs` shuffled passes of proximal SGD.
    pub fn fedavg_round<M: Model + ?Sized>(
        &mut self,
        model: &M,
        reg: &RegularizerSpec,
        msg: &BroadcastMsg,
        cfg: &FederationConfig,
    ) -> Result<(ParamsMsg, f64)> {
        self.accept(msg.round)?;
        let lr = cfg.local_lr.unwrap_or(cfg.alpha);
        let mut theta = msg.aug.theta.as_slice().to_vec();
        let mut order: Vec<usize> = (0..self.shard.len()).collect();
        let (mut loss_sum, mut steps) = (0.0, 0usize);
        for _ in 0..cfg.local_epochs {
            self.rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.local_batch) {
                let (g, loss) = erm_batch_gradient(model, &theta, chunk.iter().map(|&i| &self.shard[i]));
                theta.iter_mut().zip(&g).for_each(|(t, gi)| *t -= lr * gi);
                reg.prox_in_place(&mut theta, lr);
                loss_sum += loss;
                steps += 1;
            }
        }
        Ok((
            ParamsMsg {
                round: msg.round,
                worker_id: self.worker_id as u64,
                theta: ModelParams::new(DenseVector::from_computed(theta, "fedavg local update")?),
                samples: self.shard.len() as u64,
            },
            loss_sum / steps as f64,
        ))
    }
}

/// Checks that `ids` is exactly `0..k` for the given round and returns the
/// message positions sorted by worker id.
fn check_round(round: u64, k: usize, items: impl Iterator<Item = (u64, u64)>) -> Result<Vec<usize>> {
    let mut slot: Vec<Option<usize>> = vec![None; k];
    for (pos, (r, id)) in items.enumerate() {
        if r != round {
            return Err(Error::Protocol(format!("worker {id} sent round {r}, expected {round}")));
        }
        let s = slot
            .get_mut(id as usize)
            .ok_or_else(|| Error::Protocol(format!("unknown worker {id}")))?;
        if s.replace(pos).is_some() {
            return Err(Error::Protocol(format!("duplicate message from worker {id}")));
        }
    }
    slot.iter()
        .enumerate()
        .map(|(id, s)| s.ok_or_else(|| Error::Protocol(format!("missing message from worker {id}"))))
        .collect()
}

/// Averages the `K` gradients in worker-id order and takes one proximal step.
///
/// The message order does not matter; exactly one message per worker
/// `0..K` of round `round` is required.
pub fn server_round(
    aug: &AugmentedParams,
    round: u64,
    msgs: &[GradientMsg],
    num_workers: usize,
    alpha: f64,
    reg: &RegularizerSpec,
    gamma0: f64,
) -> Result<AugmentedParams> {
    let order = check_round(round, num_workers, msgs.iter().map(|m| (m.round, m.worker_id)))?;
    let first = &msgs[order[0]].grad;
    if first.d_theta.len() != aug.theta.len() {
        return Err(Error::Dimension {
            expected: aug.theta.len(),
            found: first.d_theta.len(),
        });
    }
    let mut g_theta = first.d_theta.as_slice().to_vec();
    let mut g_gamma = first.d_gamma;
    for &pos in &order[1..] {
        let g = &msgs[pos].grad;
        if g.d_theta.len() != g_theta.len() {
            return Err(Error::Dimension {
                expected: g_theta.len(),
                found: g.d_theta.len(),
            });
        }
        g_theta.iter_mut().zip(g.d_theta.iter()).for_each(|(a, b)| *a += b);
        g_gamma += g.d_gamma;
    }
    let inv = 1.0 / num_workers as f64;
    g_theta.iter_mut().for_each(|v| *v *= inv);
    g_gamma *= inv;
    let mut next = aug.clone();
    prox_update(&mut next, &g_theta, g_gamma, alpha, reg, gamma0)?;
    Ok(next)
}

/// `θ + server_lr·(mean θ_k − θ)`, reduced in worker-id order.
pub fn fedavg_server_round(theta: &ModelParams, round: u64, msgs: &[ParamsMsg], num_workers: usize, server_lr: f64) -> Result<ModelParams> {
    let order = check_round(round, num_workers, msgs.iter().map(|m| (m.round, m.worker_id)))?;
    let mut mean = vec![0.0; theta.len()];
    for &pos in &order {
        let t = &msgs[pos].theta;
        if t.len() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                found: t.len(),
            });
        }
        mean.iter_mut().zip(t.as_slice()).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / num_workers as f64;
    let next: Vec<f64> = theta
        .as_slice()
        .iter()
        .zip(&mean)
        .map(|(t, m)| if server_lr == 1.0 { m * inv } else { t + server_lr * (m * inv - t) })
        .collect();
    Ok(ModelParams::new(DenseVector::from_computed(next, "fedavg aggregation")?))
}

/// Step-wise federation: a server state and `K` workers.
pub struct Federation<'a, M: Model + ?Sized> {
    model: &'a M,
    reg: RegularizerSpec,
    cfg: FederationConfig,
    workers: Vec<WorkerState>,
    aug: AugmentedParams,
    round: u64,
}

impl<'a, M: Model + ?Sized> Federation<'a, M> {
    pub fn new(model: &'a M, reg: &RegularizerSpec, cfg: &FederationConfig, train: &[Datum]) -> Result<Self> {
        cfg.validate()?;
        reg.validate()?;
        train.iter().try_for_each(|z| check_datum(model, z))?;
        let shards = partition(train, cfg.num_workers, cfg.partition, cfg.seed)?;
        Ok(Federation {
            model,
            reg: *reg,
            cfg: cfg.clone(),
            workers: shards
                .into_iter()
                .enumerate()
                .map(|(k, s)| WorkerState::new(k, s, cfg.seed))
                .collect(),
            aug: initial_augmented(model, &cfg.robust, cfg.seed, cfg.init_scale),
            round: 0,
        })
    }

    pub fn params(&self) -> &AugmentedParams {
        &self.aug
    }

    pub fn into_params(self) -> AugmentedParams {
        self.aug
    }

    pub fn rounds_done(&self) -> u64 {
        self.round
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    /// Runs one full round; returns the mean local objective.
    pub fn round(&mut self) -> Result<f64> {
        let next = self.round + 1;
        let msg = BroadcastMsg {
            round: next,
            aug: self.aug.clone(),
        };
        let k = self.cfg.num_workers;
        let objective = match self.cfg.algorithm {
            FedAlgorithm::Drfl => {
                let mut msgs = Vec::with_capacity(k);
                for w in &mut self.workers {
                    msgs.push(w.worker_round(self.model, &msg, &self.cfg)?);
                }
                let objective = self.workers.iter().map(|w| w.last_objective).sum::<f64>() / k as f64;
                self.aug = server_round(&self.aug, next, &msgs, k, self.cfg.alpha, &self.reg, self.cfg.robust.gamma0)
                    .map_err(|e| e.at_iteration(next as usize))?;
                objective
            }
            FedAlgorithm::Fedavg => {
                let mut msgs = Vec::with_capacity(k);
                let mut loss = 0.0;
                for w in &mut self.workers {
                    let (m, l) = w.fedavg_round(self.model, &self.reg, &msg, &self.cfg)?;
                    msgs.push(m);
                    loss += l;
                }
                self.aug.theta = fedavg_server_round(&self.aug.theta, next, &msgs, k, self.cfg.server_lr)?;
                loss / k as f64
            }
        };
        self.round = next;
        Ok(objective)
    }
}

/// Runs `cfg.rounds` rounds, recording held-out (and optionally attacked)
/// error every `eval_every` rounds.
pub fn run_federation<M: Model + ?Sized>(
    model: &M,
    reg: &RegularizerSpec,
    cfg: &FederationConfig,
    train: &[Datum],
    held_out: &[Datum],
) -> Result<(AugmentedParams, RunMetrics)> {
    let mut fed = Federation::new(model, reg, cfg, train)?;
    let start = std::time::Instant::now();
    let mut metrics = RunMetrics::default();
    let (mut obj_sum, mut obj_n) = (0.0, 0usize);
    for t in 1..=cfg.rounds {
        obj_sum += fed.round()?;
        obj_n += 1;
        if t % cfg.eval_every == 0 || t == cfg.rounds {
            let theta = &fed.params().theta;
            let attacked_error = match (&cfg.eval_attack, held_out.is_empty()) {
                (Some(atk), false) if model.classes().is_some() => Some(evaluate_under_attack(model, theta, held_out, atk)?),
                _ => None,
            };
            metrics.records.push(MetricRecord {
                iteration: t,
                train_loss: obj_sum / obj_n as f64,
                held_out_error: held_out_rate(model, theta, held_out)?,
                attacked_error,
                grad_mapping_norm: None,
                oracle_iters_mean: None,
                gamma: (cfg.algorithm == FedAlgorithm::Drfl).then_some(fed.params().gamma),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            (obj_sum, obj_n) = (0.0, 0);
        }
    }
    Ok((fed.into_params(), metrics))
}
