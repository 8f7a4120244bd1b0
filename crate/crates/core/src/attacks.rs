//! White-box test-time attacks on the input features.
//!
//! All attacks assume features in `[-1, 1]` and keep them there. The
//! sign-based attacks also keep `‖x_adv − x‖∞ ≤ ε_adv`:
//!
//! * FGSM: `Clip[-1,1]{x + ε·sign(∇xℓ)}`
//! * IFGSM: `T` FGSM steps of size `ε/T`, clipped after each step. With
//!   `full_step_budget` each step uses the full `ε` and the total drift is
//!   bounded by `T·ε` instead.
//! * PGD: `T` steps `x ← Π{x + α·sign(∇xℓ)}` where `Π` projects onto the
//!   `ℓ∞` ball of radius `ε` around the *original* input, then a final clip.
//! * WRM: the inner problem of the robust surrogate at a fixed `γ`, solved
//!   by the certified oracle in box mode. Its budget is implicit in `γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_datum, check_params, predict, Datum, Model, ModelParams, Target};
use crate::robust::{inner_max_fixed_gamma, RobustConfig};
use crate::tensor::{sign, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Fgsm,
    Ifgsm,
    Pgd,
    Wrm,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Ifgsm => "ifgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Wrm => "wrm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// `ℓ∞` budget `ε_adv`.
    pub eps_adv: f64,
    /// `T_adv` for the iterative kinds.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// PGD step `α`.
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    /// IFGSM: use `ε_adv` per step instead of `ε_adv / T_adv`.
    #[serde(default)]
    pub full_step_budget: bool,
    /// Fixed `γ` of the WRM attack.
    #[serde(default = "default_wrm_gamma")]
    pub wrm_gamma: f64,
    /// WRM oracle ascent step.
    #[serde(default = "default_wrm_step")]
    pub wrm_step: f64,
    #[serde(default = "default_wrm_eps")]
    pub wrm_eps: f64,
    #[serde(default = "default_wrm_max_iters")]
    pub wrm_max_iters: usize,
}

fn default_steps() -> usize {
    10
}
fn default_step_size() -> f64 {
    1.0
}
fn default_wrm_gamma() -> f64 {
    1.0
}
fn default_wrm_step() -> f64 {
    0.25
}
fn default_wrm_eps() -> f64 {
    1e-6
}
fn default_wrm_max_iters() -> usize {
    500
}

impl AttackSpec {
    pub fn new(kind: AttackKind, eps_adv: f64) -> Self {
        AttackSpec {
            kind,
            eps_adv,
            steps: default_steps(),
            step_size: default_step_size(),
            full_step_budget: false,
            wrm_gamma: default_wrm_gamma(),
            wrm_step: default_wrm_step(),
            wrm_eps: default_wrm_eps(),
            wrm_max_iters: default_wrm_max_iters(),
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_adv >= 0.0 && self.eps_adv.is_finite()) {
            return Err(Error::config(format!("eps_adv must be finite and >= 0, got {}", self.eps_adv)));
        }
        if matches!(self.kind, AttackKind::Ifgsm | AttackKind::Pgd) && self.steps == 0 {
            return Err(Error::config("iterative attacks need steps >= 1"));
        }
        if self.kind == AttackKind::Pgd && !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("pgd step_size must be positive"));
        }
        if self.kind == AttackKind::Wrm {
            if !(self.wrm_gamma > 0.0 && self.wrm_gamma.is_finite()) {
                return Err(Error::config("wrm_gamma must be positive"));
            }
            if !(self.wrm_step > 0.0 && self.wrm_eps > 0.0) || self.wrm_max_iters == 0 {
                return Err(Error::config("wrm oracle settings must be positive"));
            }
        }
        Ok(())
    }
}

fn input_grad<M: Model + ?Sized>(model: &M, params: &ModelParams, x: &[f64], y: &Target, out: &mut [f64]) {
    model.input_grad_raw(params.as_slice(), x, y, out);
}

fn finish(x: Vec<f64>, y: Target) -> Result<Datum> {
    Ok(Datum::new(DenseVector::from_computed(x, "attack")?, y))
}

fn checked<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum, atk: &AttackSpec) -> Result<()> {
    atk.validate()?;
    check_params(model, params)?;
    check_datum(model, z)
}

/// Sign steps of size `step`, each followed by `bound`.
fn sign_steps<M: Model + ?Sized>(
    model: &M,
    params: &ModelParams,
    z: &Datum,
    steps: usize,
    step: f64,
    bound: impl Fn(usize, f64) -> f64,
) -> Vec<f64> {
    let mut x = z.x.as_slice().to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..steps {
        input_grad(model, params, &x, &z.y, &mut g);
        for (i, (xi, gi)) in x.iter_mut().zip(&g).enumerate() {
            *xi = bound(i, *xi + step * sign(*gi));
        }
    }
    x
}

pub fn fgsm<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum, atk: &AttackSpec) -> Result<Datum> {
    checked(model, params, z, atk)?;
    let x = sign_steps(model, params, z, 1, atk.eps_adv, |_, v| v.clamp(-1.0, 1.0));
    finish(x, z.y)
}

pub fn ifgsm<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum, atk: &AttackSpec) -> Result<Datum> {
    checked(model, params, z, atk)?;
    let steps = atk.steps.max(1);
    let step = if atk.full_step_budget {
        atk.eps_adv
    } else {
        atk.eps_adv / steps as f64
    };
    let x0 = z.x.as_slice();
    // per-step clipping to the box, plus a guard against accumulated rounding
    let total = if atk.full_step_budget { atk.eps_adv * steps as f64 } else { atk.eps_adv };
    let x = sign_steps(model, params, z, steps, step, |i, v| {
        v.clamp(x0[i] - total, x0[i] + total).clamp(-1.0, 1.0)
    });
    finish(x, z.y)
}

pub fn pgd<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum, atk: &AttackSpec) -> Result<Datum> {
    checked(model, params, z, atk)?;
    let x0 = z.x.as_slice();
    let eps = atk.eps_adv;
    let mut x = sign_steps(model, params, z, atk.steps, atk.step_size, |i, v| v.clamp(x0[i] - eps, x0[i] + eps));
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    finish(x, z.y)
}

/// Wasserstein attack: `argmax_ζ ℓ(θ; (ζ, y)) − γ‖ζ − x‖²` over `[-1, 1]^d`.
///
/// `rho` only shifts the inner objective by a constant; it is accepted so
/// the attack can be stated against a specific ambiguity set.
pub fn wrm_attack<M: Model + ?Sized>(
    model: &M,
    params: &ModelParams,
    z: &Datum,
    atk: &AttackSpec,
    rho: f64,
) -> Result<Datum> {
    checked(model, params, z, atk)?;
    let cfg = RobustConfig {
        rho,
        gamma0: atk.wrm_gamma,
        eta: atk.wrm_step,
        oracle_eps: atk.wrm_eps,
        oracle_max_iters: atk.wrm_max_iters,
        curvature_estimate: 0.0,
        oracle_step: None,
        box_constraint: true,
    };
    let pert = inner_max_fixed_gamma(model, params, atk.wrm_gamma, z, &cfg)?;
    Ok(pert.as_datum())
}

/// `ρ` handed to WRM by the generic entry points.
const WRM_REFERENCE_RHO: f64 = 1.0;

/// Dispatches on `atk.kind`.
pub fn attack<M: Model + ?Sized>(model: &M, params: &ModelParams, z: &Datum, atk: &AttackSpec) -> Result<Datum> {
    match atk.kind {
        AttackKind::Fgsm => fgsm(model, params, z, atk),
        AttackKind::Ifgsm => ifgsm(model, params, z, atk),
        AttackKind::Pgd => pgd(model, params, z, atk),
        AttackKind::Wrm => wrm_attack(model, params, z, atk, WRM_REFERENCE_RHO),
    }
}

/// Attacks every datum of `data`, in order.
pub fn attack_dataset<M: Model + ?Sized>(
    model: &M,
    params: &ModelParams,
    data: &[Datum],
    atk: &AttackSpec,
) -> Result<Vec<Datum>> {
    data.iter().map(|z| attack(model, params, z, atk)).collect()
}

/// Misclassification rate on the attacked test set.
pub fn evaluate_under_attack<M: Model + ?Sized>(
    model: &M,
    params: &ModelParams,
    test: &[Datum],
    atk: &AttackSpec,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut wrong = 0usize;
    for z in test {
        let adv = attack(model, params, z, atk)?;
        let label = z.label().ok_or_else(|| Error::config("attack evaluation needs class labels"))?;
        if predict(model, params, &adv.x)? != Target::Class(label) {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}
