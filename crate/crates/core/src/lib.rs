//! Wasserstein distributionally robust training.
//!
//! The crate trains models against the worst case over a Wasserstein ball
//! of radius `ρ` around the empirical distribution, using the dual surrogate
//!
//! ```text
//! min_{θ, γ ≥ γ0}  γρ + E_z[ sup_ζ ℓ(θ; ζ) − γ‖z − ζ‖² ]
//! ```
//!
//! Modules, bottom up:
//!
//! * [`tensor`]: dense vectors and matrices, the seeded generator
//! * [`models`]: linear regression, logistic regression and MLPs with
//!   parameter and input gradients
//! * [`robust`]: transport cost, `ψ`, the certified inner oracle, the
//!   single-step ascent and Danskin gradients
//! * [`prox`]: proximal maps for the regularizer and the `γ ≥ γ0` constraint
//! * [`optimizers`]: SPGD with the oracle, SPGDA, and ERM baselines
//! * [`attacks`]: FGSM, IFGSM, PGD and the Wasserstein attack
//! * [`federated`]: robust federated learning and federated averaging
//! * [`data`]: IDX and CSV ingestion, synthetic data
//! * [`checkpoint`]: binary parameter files
//!
//! ```
//! use wdro::{models::ModelSpec, optimizers::*, prox::RegularizerSpec, robust::RobustConfig};
//! use wdro::data::{make_synthetic, SyntheticKind, SyntheticSpec};
//!
//! let ds = make_synthetic(&SyntheticSpec {
//!     kind: SyntheticKind::TwoGaussians, n: 200, dim: 4, separation: 3.0, seed: 7,
//! })?;
//! let spec = ModelSpec::logistic(4, 2);
//! let cfg = TrainConfig::new(Algorithm::Spgda, 0.1, 200, 16, 7);
//! let robust = RobustConfig { rho: 0.5, gamma0: 2.0, ..RobustConfig::default() };
//! let (aug, metrics) = train_spgda(&spec, &RegularizerSpec::l2sq(1e-3), &robust, &cfg, &ds.items, &ds.items)?;
//! assert!(aug.gamma >= robust.gamma0);
//! assert!(metrics.last().unwrap().held_out_error.unwrap() < 0.2);
//! # Ok::<(), wdro::Error>(())
//! ```

pub mod attacks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod federated;
pub mod models;
pub mod optimizers;
pub mod prox;
pub mod robust;
pub mod tensor;

pub use error::{Error, Result};

/// Crate version, recorded in run records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// The book's Rust snippets run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/robust-objective.md")]
    struct RobustObjective;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/attacks.md")]
    struct Attacks;
    #[doc = include_str!("../../../book/src/federated.md")]
    struct Federated;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/manifests.md")]
    struct Manifests;
}
