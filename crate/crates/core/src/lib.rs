//! Constructive no-regret machinery for finite repeated games.
//!
//! The crate is organised as a chain of reductions:
//!
//! * [`simplex`]: probability simplices, grids, orthant and convex projections,
//!   and a Frank–Wolfe projector onto linear images of a simplex.
//! * [`regret`]: internal-regret matrices and the strategy that plays the
//!   invariant probability of the positive part of the average regret.
//! * [`calibration`]: a forecaster calibrated with respect to a finite grid,
//!   obtained by running the regret engine on squared-distance outcomes.
//! * [`approach`]: Blackwell's strategy for B-sets, the calibration-based
//!   strategy for convex targets, excludability witnesses and the halfspace
//!   reduction to an orthant.
//! * [`monitoring`]: partial monitoring with flags, the worst-case evaluation,
//!   the internally consistent strategy and the doubling-trick wrapper.
//!
//! The geometric and regret kernels are generic over the scalar type through
//! [`Real`]; the game-level simulations work in `f64`.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approach;
pub mod calibration;
mod linalg;
pub mod monitoring;
pub mod play;
pub mod regret;
pub mod simplex;
pub mod trace;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use linalg::Matrix;

/// Scalar type accepted by the geometric and regret kernels.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant, panicking only for types that cannot
    /// represent ordinary finite constants.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite constant must be representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for "sums to one" checks on a vector of the given length.
    fn sum_tolerance(len: usize) -> Self {
        let scaled = Self::epsilon() * Self::lit(64.0 * len.max(1) as f64);
        scaled.max(Self::lit(1e-12))
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type SimplexVector = simplex::SimplexVector<f64>;
pub type SimplexVectorF32 = simplex::SimplexVector<f32>;
pub type FiniteGrid = simplex::FiniteGrid<f64>;
pub type FiniteGridF32 = simplex::FiniteGrid<f32>;
pub type ConvexTarget = simplex::ConvexTarget<f64>;
pub type Halfspace = simplex::Halfspace<f64>;
pub type RegretState = regret::RegretState<f64>;
pub type RegretStateF32 = regret::RegretState<f32>;
pub type InvariantProbability = regret::InvariantProbability<f64>;
pub type Calibrator = calibration::Calibrator<f64>;
pub type CalibratorF32 = calibration::Calibrator<f32>;

pub use approach::{BestResponseTable, VectorPayoffGame};
pub use monitoring::{BrGrid, Flag, MonitoringState, SignalStructure};
pub use trace::{LogSchedule, MetricTrace};
