//! Block-proximal primal-dual solvers for saddle-point problems
//!
//! ```text
//!     min_x max_y  G(x) + <Kx, y> - F*(y)
//! ```
//!
//! with block-separable `G(x) = Σ_j G_j(P_j x)` and `F*(y) = Σ_l F*_l(Q_l y)`.
//! The solvers update primal and dual blocks with per-block step lengths
//! driven by scalar test variables (φ, ψ) and a coupling variable η, and
//! support deterministic, primal-randomised and doubly-stochastic block
//! selection. Imaging problem builders (TGV² denoising, TV deblurring,
//! TV undimming) and a convergence-metrics harness are included.
//!
//! The core is generic over the scalar type; `f64` is what the experiment
//! harness and the acceptance suite run on.

pub mod block;
pub mod experiment;
pub mod metrics;
pub mod ops;
pub mod problems;
pub mod sampling;
pub mod solvers;
pub mod step;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the library is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
    /// Shorthand conversion from an `f64` literal.
    fn f(v: f64) -> Self {
        Self::from_f64(v).expect("f64 -> scalar conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar -> f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Concrete aliases for the default double-precision instantiation.
pub type BlockVector64 = block::BlockVector<f64>;
pub type BlockLayout = block::BlockLayout;
pub type SaddleProblem64 = problems::SaddleProblem<f64>;
pub type StepState64 = step::StepState<f64>;
pub type KappaFamily64 = step::KappaFamily<f64>;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("nonpositive step length for {kind} block {block} at iteration {iter}: {value}")]
    NonpositiveStep {
        kind: &'static str,
        block: usize,
        iter: usize,
        value: f64,
    },
    #[error("coupling condition violated: {0}")]
    Coupling(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;
