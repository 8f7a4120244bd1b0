//! The Wasserstein dual surrogate.
//!
//! For a datum `z = (x, y)`, parameters `θ̄ = [θ, γ]` and a candidate
//! perturbation `ζ` of the features, the perturbed loss is
//!
//! ```text
//! ψ(θ̄, ζ; z) = ℓ(θ; (ζ, y)) + γ·(ρ − c(x, ζ)),    c(x, ζ) = ‖x − ζ‖²
//! ```
//!
//! Training minimizes the empirical mean of `ψ̄(θ̄; z) = sup_ζ ψ(θ̄, ζ; z)`
//! over `θ` and `γ ≥ γ0`. With the squared cost, `ζ ↦ ψ` is
//! `λ`-strongly concave for `λ = 2γ − L_zz`, where `L_zz` bounds the input
//! curvature of the loss, so the supremum has a unique maximizer `ζ*` and
//! `ψ̄` is differentiable with
//!
//! ```text
//! ∇θ ψ̄ = ∇θ ℓ(θ; (ζ*, y)),    ∂γ ψ̄ = ρ − c(x, ζ*)
//! ```
//!
//! Two inner solvers are provided:
//!
//! * [`inner_max_oracle`]: gradient ascent from `ζ = x` until the
//!   strong-concavity certificate `‖∇ζψ‖² / (2λ̂) ≤ ε` holds, with
//!   `λ̂ = 2γ0 − L̂_zz`. Because
//!   `ψ* − ψ(ζ) ≤ ‖∇ζψ(ζ)‖² / (2λ)` for a `λ`-strongly concave function, the
//!   returned point is certified `ε`-optimal whenever `λ̂ ≤ λ`.
//! * [`inner_single_ascent`]: exactly one ascent step from `ζ = x`. The cost
//!   gradient vanishes at `ζ = x`, so this is `ζ = x + η∇xℓ(θ; z)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::models::{check_datum, check_params, Datum, Model, ModelParams};
use crate::tensor::{self, DenseVector, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Radius `ρ` of the transport-cost ball.
    pub rho: f64,
    /// Lower end `γ0` of the dual feasible set.
    pub gamma0: f64,
    /// Inner ascent step `η`.
    pub eta: f64,
    /// Oracle suboptimality target `ε`.
    pub oracle_eps: f64,
    pub oracle_max_iters: usize,
    /// Estimate `L̂_zz` of the input curvature of the loss; the certificate
    /// uses `λ̂ = 2γ − L̂_zz`.
    #[serde(default)]
    pub curvature_estimate: f64,
    /// Oracle ascent step. Falls back to `eta`.
    #[serde(default)]
    pub oracle_step: Option<f64>,
    /// Keep `ζ` inside `[-1, 1]^d` (projected ascent).
    #[serde(default)]
    pub box_constraint: bool,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            rho: 25.0,
            gamma0: 1.0,
            eta: 0.02,
            oracle_eps: 1e-3,
            oracle_max_iters: 100,
            curvature_estimate: 0.0,
            oracle_step: None,
            box_constraint: false,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho", self.rho),
            ("gamma0", self.gamma0),
            ("oracle_eps", self.oracle_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Some(s) = self.oracle_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("oracle_step must be positive, got {s}")));
            }
        }
        if self.oracle_max_iters == 0 {
            return Err(Error::config("oracle_max_iters must be at least 1"));
        }
        if !(self.curvature_estimate >= 0.0 && self.curvature_estimate.is_finite()) {
            return Err(Error::config("curvature_estimate must be finite and >= 0"));
        }
        Ok(())
    }

    /// `λ̂ = 2γ − L̂_zz`. Training uses `γ = γ0`, which lower-bounds the
    /// concavity modulus over all of `Γ`.
    pub fn concavity_at(&self, gamma: f64) -> f64 {
        2.0 * gamma - self.curvature_estimate
    }

    fn oracle_settings(&self, gamma: f64) -> Result<AscentSettings> {
        let lambda = self.concavity_at(gamma);
        if !(lambda > 0.0) {
            return Err(Error::config(format!(
                "inner problem is not certifiably concave: 2*gamma ({}) <= curvature estimate ({})",
                2.0 * gamma,
                self.curvature_estimate
            )));
        }
        Ok(AscentSettings {
            step: self.oracle_step.unwrap_or(self.eta),
            eps: self.oracle_eps,
            max_iters: self.oracle_max_iters,
            lambda,
            box_constraint: self.box_constraint,
        })
    }
}

/// `θ̄ = [θ, γ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedParams {
    pub theta: ModelParams,
    pub gamma: f64,
}

impl AugmentedParams {
    pub fn new(theta: ModelParams, gamma: f64) -> Self {
        AugmentedParams { theta, gamma }
    }

    /// `[θ..., γ]`.
    pub fn to_vector(&self) -> DenseVector {
        let mut v = self.theta.as_slice().to_vec();
        v.push(self.gamma);
        DenseVector::new(v).expect("augmented params are finite")
    }
}

/// An inner-maximization result `ζ` for the datum `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedDatum {
    pub zeta: DenseVector,
    pub base: Datum,
    pub psi_value: f64,
    /// Upper bound on `ψ(ζ*) − ψ(ζ)`; `+∞` when uncertified.
    pub certificate: f64,
    /// Ascent iterations spent (including rejected trial steps).
    pub iterations: usize,
}

impl PerturbedDatum {
    /// The perturbed example `(ζ, y)`.
    pub fn as_datum(&self) -> Datum {
        Datum::new(self.zeta.clone(), self.base.y)
    }
}

/// `(∇θ ψ, ∂γ ψ)` at a perturbed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientPair {
    pub d_theta: DenseVector,
    pub d_gamma: f64,
}

/// `c(z, ζ) = ‖z − ζ‖²`.
pub fn transport_cost(z: &DenseVector, zeta: &DenseVector) -> Result<f64> {
    check_len(z.len(), zeta.len())?;
    Ok(tensor::sq_dist(z, zeta))
}

fn check_gamma(aug: &AugmentedParams, cfg: &RobustConfig) -> Result<()> {
    if aug.gamma >= cfg.gamma0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "gamma {} lies outside [gamma0 = {}, inf)",
            aug.gamma, cfg.gamma0
        )))
    }
}

fn check_inputs<M: Model + ?Sized>(model: &M, aug: &AugmentedParams, z: &Datum, cfg: &RobustConfig) -> Result<()> {
    check_params(model, &aug.theta)?;
    check_datum(model, z)?;
    check_gamma(aug, cfg)
}

/// `ψ(θ̄, ζ; z) = ℓ(θ; (ζ, y)) + γ(ρ − c(x, ζ))`.
pub fn psi<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    zeta: &DenseVector,
    z: &Datum,
    cfg: &RobustConfig,
) -> Result<f64> {
    check_inputs(model, aug, z, cfg)?;
    check_len(z.x.len(), zeta.len())?;
    let l = model.loss_raw(aug.theta.as_slice(), zeta, &z.y);
    Ok(l + aug.gamma * (cfg.rho - tensor::sq_dist(&z.x, zeta)))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AscentSettings {
    pub step: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub lambda: f64,
    pub box_constraint: bool,
}

pub(crate) struct AscentOutcome {
    pub zeta: Vec<f64>,
    pub psi: f64,
    pub certificate: f64,
    pub iterations: usize,
}

/// `∇ζ ψ = ∇xℓ(θ; ζ) − 2γ(ζ − x)`, written into `grad`; returns `ψ(ζ)`.
fn psi_and_grad<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    gamma: f64,
    rho: f64,
    z: &Datum,
    zeta: &[f64],
    grad: &mut [f64],
) -> f64 {
    let l = model.input_grad_raw(theta, zeta, &z.y, grad);
    let mut cost = 0.0;
    for ((g, &zi), &xi) in grad.iter_mut().zip(zeta).zip(z.x.iter()) {
        let d = zi - xi;
        cost += d * d;
        *g -= 2.0 * gamma * d;
    }
    l + gamma * (rho - cost)
}

fn project_box(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
}

/// `‖∇ζψ‖² / (2λ)`; in box mode the gradient is replaced by the projected
/// gradient mapping `(P(ζ + s∇ζψ) − ζ)/s`.
fn certificate(zeta: &[f64], grad: &[f64], s: &AscentSettings) -> f64 {
    let sq = if s.box_constraint {
        zeta.iter()
            .zip(grad)
            .map(|(&z, &g)| {
                let m = ((z + s.step * g).clamp(-1.0, 1.0) - z) / s.step;
                m * m
            })
            .sum::<f64>()
    } else {
        grad.iter().map(|g| g * g).sum::<f64>()
    };
    sq / (2.0 * s.lambda)
}

const ARMIJO: f64 = 1e-4;

/// Monotone gradient ascent on `ζ ↦ ψ` starting at `ζ = x`.
///
/// A trial step without sufficient increase (Armijo, `σ = 1e-4`) is
/// rejected and the step halved, so the accepted `ψ` values never decrease.
pub(crate) fn ascend<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    gamma: f64,
    rho: f64,
    z: &Datum,
    s: &AscentSettings,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<AscentOutcome> {
    let d = z.x.len();
    let mut zeta = z.x.as_slice().to_vec();
    let mut grad = vec![0.0; d];
    let mut psi = psi_and_grad(model, theta, gamma, rho, z, &zeta, &mut grad);
    let mut cand = vec![0.0; d];
    let mut cand_grad = vec![0.0; d];
    let mut step = s.step;
    let mut iterations = 0;
    if let Some(t) = trace.as_mut() {
        t.push(psi);
    }
    loop {
        let cert = certificate(&zeta, &grad, s);
        if !cert.is_finite() || !psi.is_finite() {
            return Err(Error::NonFinite("inner ascent"));
        }
        if cert <= s.eps {
            return Ok(AscentOutcome {
                zeta,
                psi,
                certificate: cert,
                iterations,
            });
        }
        if iterations >= s.max_iters {
            return Err(Error::OracleFailure {
                certificate: cert,
                iterations,
            });
        }
        iterations += 1;
        for ((c, &zi), &g) in cand.iter_mut().zip(&zeta).zip(&grad) {
            *c = zi + step * g;
        }
        if s.box_constraint {
            project_box(&mut cand);
        }
        let cand_psi = psi_and_grad(model, theta, gamma, rho, z, &cand, &mut cand_grad);
        // sufficient increase; plain `>=` accepts the 2-cycle at step 2/L
        let predicted: f64 = cand.iter().zip(&zeta).zip(&grad).map(|((c, zi), g)| g * (c - zi)).sum();
        if cand_psi >= psi + ARMIJO * predicted {
            std::mem::swap(&mut zeta, &mut cand);
            std::mem::swap(&mut grad, &mut cand_grad);
            psi = cand_psi;
            if let Some(t) = trace.as_mut() {
                t.push(psi);
            }
        } else {
            step *= 0.5;
        }
    }
}

/// One ascent step from `ζ = x`; returns `ζ`.
pub(crate) fn single_step<M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    eta: f64,
    box_constraint: bool,
    z: &Datum,
    scratch: &mut [f64],
) -> Vec<f64> {
    model.input_grad_raw(theta, &z.x, &z.y, scratch);
    let mut zeta: Vec<f64> = z.x.iter().zip(scratch.iter()).map(|(x, g)| x + eta * g).collect();
    if box_constraint {
        project_box(&mut zeta);
    }
    zeta
}

fn finish(zeta: Vec<f64>, z: &Datum, psi_value: f64, certificate: f64, iterations: usize) -> Result<PerturbedDatum> {
    Ok(PerturbedDatum {
        zeta: DenseVector::from_computed(zeta, "inner maximization")?,
        base: z.clone(),
        psi_value,
        certificate,
        iterations,
    })
}

/// ε-accurate solution of `sup_ζ ψ(θ̄, ζ; z)`.
///
/// Fails with [`Error::OracleFailure`] if the certificate does not drop
/// below `oracle_eps` within `oracle_max_iters` ascent iterations.
pub fn inner_max_oracle<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    z: &Datum,
    cfg: &RobustConfig,
) -> Result<PerturbedDatum> {
    inner_max_oracle_impl(model, aug, z, cfg, None)
}

/// [`inner_max_oracle`] that also returns the accepted `ψ` values in order.
pub fn inner_max_oracle_traced<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    z: &Datum,
    cfg: &RobustConfig,
) -> Result<(PerturbedDatum, Vec<f64>)> {
    let mut trace = Vec::new();
    let out = inner_max_oracle_impl(model, aug, z, cfg, Some(&mut trace))?;
    Ok((out, trace))
}

fn inner_max_oracle_impl<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    z: &Datum,
    cfg: &RobustConfig,
    trace: Option<&mut Vec<f64>>,
) -> Result<PerturbedDatum> {
    cfg.validate()?;
    check_inputs(model, aug, z, cfg)?;
    let s = cfg.oracle_settings(cfg.gamma0)?;
    let out = ascend(model, aug.theta.as_slice(), aug.gamma, cfg.rho, z, &s, trace)?;
    finish(out.zeta, z, out.psi, out.certificate, out.iterations)
}

/// Oracle with `γ` pinned to an arbitrary value (not necessarily in `Γ`).
///
/// This is the Wasserstein attack's inner problem.
pub fn inner_max_fixed_gamma<M: Model + ?Sized>(
    model: &M,
    theta: &ModelParams,
    gamma: f64,
    z: &Datum,
    cfg: &RobustConfig,
) -> Result<PerturbedDatum> {
    cfg.validate()?;
    check_params(model, theta)?;
    check_datum(model, z)?;
    let s = cfg.oracle_settings(gamma)?;
    let out = ascend(model, theta.as_slice(), gamma, cfg.rho, z, &s, None)?;
    finish(out.zeta, z, out.psi, out.certificate, out.iterations)
}

/// `ζ = x + η ∇ζψ|_{ζ=x} = x + η∇xℓ(θ; z)`. Uncertified (`certificate = +∞`).
pub fn inner_single_ascent<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    z: &Datum,
    cfg: &RobustConfig,
) -> Result<PerturbedDatum> {
    cfg.validate()?;
    check_inputs(model, aug, z, cfg)?;
    let mut scratch = vec![0.0; z.x.len()];
    let zeta = single_step(model, aug.theta.as_slice(), cfg.eta, cfg.box_constraint, z, &mut scratch);
    let l = model.loss_raw(aug.theta.as_slice(), &zeta, &z.y);
    let psi = l + aug.gamma * (cfg.rho - tensor::sq_dist(&z.x, &zeta));
    finish(zeta, z, psi, f64::INFINITY, 1)
}

/// Danskin gradient: `∇θℓ(θ; (ζ, y))` and `ρ − c(x, ζ)`.
///
/// `pert` is trusted to belong to `aug`.
pub fn danskin_gradient<M: Model + ?Sized>(
    model: &M,
    aug: &AugmentedParams,
    pert: &PerturbedDatum,
    cfg: &RobustConfig,
) -> Result<GradientPair> {
    check_params(model, &aug.theta)?;
    check_datum(model, &pert.base)?;
    check_len(pert.base.x.len(), pert.zeta.len())?;
    let mut d_theta = vec![0.0; model.num_params()];
    model.accumulate_param_grad_raw(aug.theta.as_slice(), &pert.zeta, &pert.base.y, 1.0, &mut d_theta);
    Ok(GradientPair {
        d_theta: DenseVector::from_computed(d_theta, "danskin_gradient")?,
        d_gamma: cfg.rho - tensor::sq_dist(&pert.base.x, &pert.zeta),
    })
}

/// How each sample's `ζ` is produced inside a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum InnerSolver {
    Oracle,
    SingleStep,
}

pub(crate) struct BatchGradient {
    pub d_theta: Vec<f64>,
    pub d_gamma: f64,
    pub mean_psi: f64,
    pub mean_oracle_iters: f64,
}

/// Batch-mean Danskin gradient. Samples are reduced in the order given.
pub(crate) fn robust_batch_gradient<'a, M: Model + ?Sized>(
    model: &M,
    theta: &[f64],
    gamma: f64,
    cfg: &RobustConfig,
    solver: InnerSolver,
    batch: impl ExactSizeIterator<Item = &'a Datum>,
) -> Result<BatchGradient> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::Empty("batch"));
    }
    let settings = match solver {
        InnerSolver::Oracle => Some(cfg.oracle_settings(cfg.gamma0)?),
        InnerSolver::SingleStep => None,
    };
    let mut d_theta = vec![0.0; model.num_params()];
    let mut d_gamma = 0.0;
    let mut psi_sum = 0.0;
    let mut iters = 0usize;
    let mut scratch = vec![0.0; model.input_dim()];
    for z in batch {
        let zeta = match &settings {
            Some(s) => {
                let out = ascend(model, theta, gamma, cfg.rho, z, s, None)?;
                iters += out.iterations;
                out.zeta
            }
            None => single_step(model, theta, cfg.eta, cfg.box_constraint, z, &mut scratch),
        };
        let l = model.accumulate_param_grad_raw(theta, &zeta, &z.y, 1.0, &mut d_theta);
        let cost = tensor::sq_dist(&z.x, &zeta);
        d_gamma += cfg.rho - cost;
        psi_sum += l + gamma * (cfg.rho - cost);
    }
    let inv = 1.0 / m as f64;
    d_theta.iter_mut().for_each(|g| *g *= inv);
    Ok(BatchGradient {
        d_theta,
        d_gamma: d_gamma * inv,
        mean_psi: psi_sum * inv,
        mean_oracle_iters: iters as f64 * inv,
    })
}

/// Estimates `L_zz`, the Lipschitz constant of `x ↦ ∇xℓ(θ; x)`, by central
/// differences of the input gradient along random unit directions.
///
/// Returns the largest observed `‖∇ℓ(x + hu) − ∇ℓ(x − hu)‖ / 2h`.
pub fn estimate_input_curvature<M: Model + ?Sized>(
    model: &M,
    theta: &ModelParams,
    data: &[Datum],
    directions_per_point: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    check_params(model, theta)?;
    if data.is_empty() {
        return Err(Error::Empty("curvature probe set"));
    }
    let h = 1e-4;
    let d = model.input_dim();
    let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
    let mut best = 0.0_f64;
    for z in data {
        check_datum(model, z)?;
        for _ in 0..directions_per_point {
            let mut u: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let n = tensor::norm2(&u);
            if n == 0.0 {
                continue;
            }
            u.iter_mut().for_each(|v| *v /= n);
            let xp: Vec<f64> = z.x.iter().zip(&u).map(|(x, u)| x + h * u).collect();
            let xm: Vec<f64> = z.x.iter().zip(&u).map(|(x, u)| x - h * u).collect();
            model.input_grad_raw(theta.as_slice(), &xp, &z.y, &mut gp);
            model.input_grad_raw(theta.as_slice(), &xm, &z.y, &mut gm);
            best = best.max(tensor::norm2(
                &gp.iter().zip(&gm).map(|(a, b)| a - b).collect::<Vec<_>>(),
            ) / (2.0 * h));
        }
    }
    Ok(best)
}

/// Warns when `γ0` looks too small for strong concavity (`2γ0 ≤ L̂_zz`).
pub fn gamma0_warning(cfg: &RobustConfig, curvature: f64) -> Option<String> {
    (2.0 * cfg.gamma0 <= curvature).then(|| {
        format!(
            "gamma0 = {} may be too small: estimated input curvature {:.4} needs gamma0 > {:.4}",
            cfg.gamma0,
            curvature,
            curvature / 2.0
        )
    })
}

/// Right-hand side of the maximizer stability bound
/// `‖ζ*(θ̄₁) − ζ*(θ̄₂)‖ ≤ (L_zθ/λ)‖θ₁ − θ₂‖ + (L_c/λ)|γ₁ − γ₂|`.
pub fn solution_shift_bound(l_z_theta: f64, l_c: f64, lambda: f64, theta_shift: f64, gamma_shift: f64) -> f64 {
    (l_z_theta * theta_shift + l_c * gamma_shift) / lambda
}
