//! Manifest-driven experiments on top of [`wdro`].
//!
//! A manifest is a TOML file describing one experiment: the data, the model,
//! the trainers, an attack grid and optionally a federation. [`run_manifest`]
//! trains, checkpoints, attacks and writes CSV/JSON artifacts under the
//! output directory; [`validate_manifest`] reports every problem at once.

pub mod manifest;
pub mod run;

pub use manifest::{load_manifest, parse_manifest, validate_manifest, Diagnostic, RunManifest};
pub use run::{attack_eval, load_splits, run_manifest, CurveFile, CurveRow, RunOutcome, OUTPUT_DIR_ENV};
