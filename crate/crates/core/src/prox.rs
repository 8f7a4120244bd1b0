//! Proximal operators for the regularizer on `θ` and the indicator of
//! `Γ = {γ ≥ γ0}` on the dual variable.
//!
//! For a step `α > 0` and a point `v`,
//!
//! ```text
//! prox_{αr}(v) = argmin_u  α·r(u) + ½‖u − v‖²
//! ```
//!
//! which has a closed form for every supported regularizer:
//!
//! | kind   | `r(θ)`      | prox                                  |
//! |--------|-------------|---------------------------------------|
//! | `none` | 0           | `v`                                   |
//! | `l1`   | `β‖θ‖₁`     | `sign(v)·max(|v| − αβ, 0)` elementwise |
//! | `l2sq` | `β‖θ‖₂²`    | `v / (1 + 2αβ)`                        |
//!
//! The indicator of `Γ` is zero on `Γ` and `+∞` outside, so its prox is the
//! projection `max(v_γ, γ0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::robust::AugmentedParams;
use crate::tensor::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    #[default]
    None,
    L1,
    L2sq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    #[serde(default)]
    pub weight: f64,
}

impl RegularizerSpec {
    pub fn none() -> Self {
        RegularizerSpec::default()
    }

    pub fn l1(weight: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::L1,
            weight,
        }
    }

    pub fn l2sq(weight: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::L2sq,
            weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::config(format!(
                "regularizer weight must be finite and >= 0, got {}",
                self.weight
            )));
        }
        Ok(())
    }

    /// `r(θ)`.
    pub fn value(&self, theta: &[f64]) -> f64 {
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::L1 => self.weight * theta.iter().map(|t| t.abs()).sum::<f64>(),
            RegularizerKind::L2sq => self.weight * theta.iter().map(|t| t * t).sum::<f64>(),
        }
    }

    /// Applies `prox_{αr}` to `theta` in place.
    pub fn prox_in_place(&self, theta: &mut [f64], alpha: f64) {
        match self.kind {
            RegularizerKind::None => {}
            RegularizerKind::L1 => {
                let t = alpha * self.weight;
                for v in theta.iter_mut() {
                    *v = soft_threshold(*v, t);
                }
            }
            RegularizerKind::L2sq => {
                let s = 1.0 / (1.0 + 2.0 * alpha * self.weight);
                for v in theta.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Projection onto `Γ`.
pub fn project_gamma(gamma: f64, gamma0: f64) -> f64 {
    gamma.max(gamma0)
}

/// Joint prox on `θ̄ = [θ, γ]`.
///
/// `v` is the pre-prox point laid out as `[θ..., γ]`. Returns the
/// regularizer prox on the `θ` block and the projection onto `Γ` on `γ`.
pub fn prox_step(reg: &RegularizerSpec, v: &DenseVector, alpha: f64, gamma0: f64) -> Result<AugmentedParams> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("prox step needs alpha > 0, got {alpha}")));
    }
    reg.validate()?;
    if v.len() < 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: v.len(),
        });
    }
    let (theta, gamma) = v.split_at(v.len() - 1);
    let mut theta = theta.to_vec();
    reg.prox_in_place(&mut theta, alpha);
    Ok(AugmentedParams {
        theta: ModelParams::new(DenseVector::from_computed(theta, "prox_step")?),
        gamma: project_gamma(gamma[0], gamma0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeededRng;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    /// Scalar prox objective minimized on a fine grid.
    fn grid_prox(reg: &RegularizerSpec, alpha: f64, v: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let n = 400_000;
        for i in 0..=n {
            let u = -4.0 + 8.0 * i as f64 / n as f64;
            let obj = alpha * reg.value(&[u]) + 0.5 * (u - v) * (u - v);
            if obj < best.0 {
                best = (obj, u);
            }
        }
        best.1
    }

    #[test]
    fn identity_prox() {
        let out = prox_step(&RegularizerSpec::none(), &v(&[0.3, -2.0, 5.0]), 0.1, 1.0).unwrap();
        assert_eq!(out.theta.as_slice(), &[0.3, -2.0]);
        assert_eq!(out.gamma, 5.0);
    }

    #[test]
    fn l1_soft_threshold_and_projection() {
        let reg = RegularizerSpec::l1(1.0);
        let out = prox_step(&reg, &v(&[1.2, -0.3, 0.2]), 0.5, 1.0).unwrap();
        assert!((out.theta.as_slice()[0] - 0.7).abs() < 1e-15);
        assert_eq!(out.theta.as_slice()[1], 0.0);
        assert_eq!(out.gamma, 1.0);
        assert!((grid_prox(&reg, 0.5, 1.2) - 0.7).abs() < 1e-4);
        assert!(grid_prox(&reg, 0.5, -0.3).abs() < 1e-4);
    }

    #[test]
    fn l2sq_scaling() {
        let reg = RegularizerSpec::l2sq(1.0);
        let out = prox_step(&reg, &v(&[2.0, 3.0]), 0.5, 1.0).unwrap();
        assert_eq!(out.theta.as_slice(), &[1.0]);
        assert!((grid_prox(&reg, 0.5, 2.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(matches!(
            prox_step(&RegularizerSpec::none(), &v(&[1.0, 1.0]), 0.0, 1.0),
            Err(Error::Config(_))
        ));
        assert!(prox_step(&RegularizerSpec::l1(-1.0), &v(&[1.0, 1.0]), 0.1, 1.0).is_err());
    }

    #[test]
    fn prox_beats_random_candidates() {
        let mut rng = SeededRng::new(11);
        for kind in [RegularizerKind::None, RegularizerKind::L1, RegularizerKind::L2sq] {
            let reg = RegularizerSpec { kind, weight: 0.7 };
            for _ in 0..20 {
                let vv: Vec<f64> = (0..4).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
                let mut u = vv.clone();
                reg.prox_in_place(&mut u, 0.4);
                let obj = |w: &[f64]| {
                    0.4 * reg.value(w) + 0.5 * w.iter().zip(&vv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                };
                let best = obj(&u);
                for _ in 0..1000 {
                    let cand: Vec<f64> = u.iter().map(|x| x + rng.uniform_in(-0.5, 0.5)).collect();
                    assert!(best <= obj(&cand) + 1e-12);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn gamma_never_below_floor(g in -100.0..100.0f64, g0 in 0.01..10.0f64) {
            let out = prox_step(&RegularizerSpec::l1(0.3), &v(&[0.5, g]), 0.2, g0).unwrap();
            proptest::prop_assert!(out.gamma >= g0);
        }

        #[test]
        fn nonexpansive(a in proptest::collection::vec(-5.0..5.0f64, 6), b in proptest::collection::vec(-5.0..5.0f64, 6), w in 0.0..3.0f64, alpha in 0.01..2.0f64) {
            for kind in [RegularizerKind::None, RegularizerKind::L1, RegularizerKind::L2sq] {
                let reg = RegularizerSpec { kind, weight: w };
                let (mut pa, mut pb) = (a.clone(), b.clone());
                reg.prox_in_place(&mut pa, alpha);
                reg.prox_in_place(&mut pb, alpha);
                let d_out: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                proptest::prop_assert!(d_out <= d_in + 1e-12);
            }
        }
    }
}
