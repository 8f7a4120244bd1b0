//! Binary parameter checkpoints.
//!
//! Layout (all integers and reals little-endian):
//!
//! | offset | size | field |
//! |--------|------|-------|
//! | 0      | 8    | magic `WDROCKPT` |
//! | 8      | 4    | format version, `u32` (1) |
//! | 12     | 4    | flags, `u32`; bit 0 set when `γ` is stored |
//! | 16     | 32   | SHA-256 of [`ModelSpec::fingerprint`] |
//! | 48     | 8    | parameter count `n`, `u64` |
//! | 56     | 8·n  | parameters, `f64`, canonical layout |
//! | 56+8n  | 8    | `γ`, `f64` (only when flag bit 0 is set) |

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{check_params, ModelParams, ModelSpec};
use crate::robust::AugmentedParams;
use crate::tensor::DenseVector;

const MAGIC: &[u8; 8] = b"WDROCKPT";
const VERSION: u32 = 1;
const HEADER: usize = 56;

pub fn spec_hash(spec: &ModelSpec) -> [u8; 32] {
    Sha256::digest(spec.fingerprint().as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_hash: [u8; 32],
    pub theta: ModelParams,
    pub gamma: Option<f64>,
}

impl Checkpoint {
    pub fn new(spec: &ModelSpec, theta: ModelParams, gamma: Option<f64>) -> Result<Self> {
        spec.validate()?;
        check_params(spec, &theta)?;
        Ok(Checkpoint {
            spec_hash: spec_hash(spec),
            theta,
            gamma,
        })
    }

    pub fn from_augmented(spec: &ModelSpec, aug: &AugmentedParams) -> Result<Self> {
        Checkpoint::new(spec, aug.theta.clone(), Some(aug.gamma))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.theta.len();
        let mut out = Vec::with_capacity(HEADER + 8 * (n + 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&u32::from(self.gamma.is_some()).to_le_bytes());
        out.extend_from_slice(&self.spec_hash);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for v in self.theta.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(g) = self.gamma {
            out.extend_from_slice(&g.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Parse {
            offset: offset as u64,
            message,
        };
        if buf.len() < HEADER {
            return Err(err(buf.len(), format!("truncated header ({} of {HEADER} bytes)", buf.len())));
        }
        if &buf[..8] != MAGIC {
            return Err(err(0, "not a checkpoint (bad magic)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes"));
        let version = u32_at(8);
        if version != VERSION {
            return Err(err(8, format!("unsupported version {version}")));
        }
        let flags = u32_at(12);
        if flags & !1 != 0 {
            return Err(err(12, format!("unknown flags {flags:#x}")));
        }
        let spec_hash: [u8; 32] = buf[16..48].try_into().expect("32 bytes");
        let n = u64::from_le_bytes(buf[48..56].try_into().expect("8 bytes"));
        let tail = usize::from(flags & 1 == 1);
        let expected = (n as usize).checked_add(tail).and_then(|k| k.checked_mul(8)).and_then(|k| k.checked_add(HEADER));
        if expected != Some(buf.len()) {
            return Err(err(48, format!("parameter count {n} does not match file size {}", buf.len())));
        }
        let reals: Vec<f64> = buf[HEADER..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (theta, gamma) = if tail == 1 {
            (reals[..reals.len() - 1].to_vec(), Some(reals[reals.len() - 1]))
        } else {
            (reals, None)
        };
        let theta = DenseVector::new(theta).map_err(|e| err(HEADER, e.to_string()))?;
        Ok(Checkpoint {
            spec_hash,
            theta: ModelParams::new(theta),
            gamma,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    /// Returns the weights if they belong to `spec`.
    pub fn params_for(&self, spec: &ModelSpec) -> Result<ModelParams> {
        if self.spec_hash != spec_hash(spec) {
            return Err(Error::config("checkpoint was written for a different model spec"));
        }
        check_params(spec, &self.theta)?;
        Ok(self.theta.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let spec = ModelSpec::logistic(2, 2);
        let theta = ModelParams::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0, -0.25]).unwrap();
        let ck = Checkpoint::new(&spec, theta.clone(), Some(4.0)).unwrap();
        let bytes = ck.to_bytes();
        assert_eq!(bytes.len(), 56 + 8 * 7);
        assert_eq!(&bytes[48..56], &6u64.to_le_bytes());
        assert_eq!(&bytes[56..64], &1.0f64.to_le_bytes());
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert_eq!(ck.params_for(&spec).unwrap(), theta);
        assert!(ck.params_for(&ModelSpec::logistic(2, 3)).is_err());
        let plain = Checkpoint::new(&spec, theta, None).unwrap();
        assert_eq!(Checkpoint::from_bytes(&plain.to_bytes()).unwrap().gamma, None);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = ModelSpec::linear_regression(1);
        let bytes = Checkpoint::new(&spec, ModelParams::from_vec(vec![1.0, 2.0]).unwrap(), None).unwrap().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..30]), Err(Error::Parse { offset: 30, .. })));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Parse { offset: 48, .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Parse { offset: 0, .. })));
        let mut nan = bytes;
        nan[56..64].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(Checkpoint::from_bytes(&nan).is_err());
        assert!(Checkpoint::new(&spec, ModelParams::from_vec(vec![1.0]).unwrap(), None).is_err());
    }
}
