//! Desk-scale implementation of the Cott-ADNet detector building blocks.
//!
//! The crate provides a small dense-tensor engine with reverse-mode
//! differentiation, the NeLU activation, the NGAM / DRFSPPF / ODConv /
//! SPDConv layers, a declarative model graph with FLOPs and parameter
//! auditing, COCO-style detection metrics, a YOLO label parser, a
//! deterministic synthetic dataset generator, and a toy trainer.
//!
//! Everything runs on the CPU. Verification work is done in `f64`
//! (`verify64`); benchmarking may run the same kernels in `f32`
//! (`bench32`). Gradient checking is only defined for `f64`.

pub mod act;
pub mod autograd;
pub mod blocks;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use error::{CottadError, Result};
pub use tensor::{Element, Tensor};

/// Numeric precision mode selected via `COTTAD_PRECISION`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 64-bit floats, non-finite values rejected. The default.
    Verify64,
    /// 32-bit floats, checks off. Used by the benchmark command.
    Bench32,
}

impl Precision {
    pub const ENV_VAR: &'static str = "COTTAD_PRECISION";

    pub fn from_env() -> Result<Self> {
        match std::env::var(Self::ENV_VAR) {
            Ok(v) => v.parse(),
            Err(_) => Ok(Precision::Verify64),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = CottadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verify64" => Ok(Precision::Verify64),
            "bench32" => Ok(Precision::Bench32),
            other => Err(CottadError::Config(format!(
                "unknown precision mode '{other}' (expected verify64 or bench32)"
            ))),
        }
    }
}
