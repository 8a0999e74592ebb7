//! Forecasting calibrated with respect to a finite grid.
//!
//! Each grid point `μ(l)` is a type of the regret engine. After outcome `s`
//! the engine sees `U = (−‖s − μ(l)‖²)_l`; because averages of squared
//! distances differ from squared distances of averages by a term that does
//! not depend on the grid point, the engine's internal regret is exactly the
//! calibration score.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::regret::{RegretError, RegretState};
use crate::simplex::{distance_sq, norm, FiniteGrid, SimplexVector};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("outcome bound must be positive and finite, got {0}")]
    InvalidBound(f64),
    #[error("a forecast is pending; observe an outcome first")]
    PendingObservation,
    #[error("no pending forecast to attach the outcome to")]
    NoPendingForecast,
    #[error("outcome has {found} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("outcome norm {norm} exceeds bound {bound}")]
    OutcomeOutOfRange { norm: f64, bound: f64 },
    #[error("empty history")]
    EmptyHistory,
    #[error(transparent)]
    Regret(#[from] RegretError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrator<T> {
    grid: FiniteGrid<T>,
    engine: RegretState<T>,
    outcome_sums: Matrix<T>,
    outcome_bound: T,
    pending: Option<usize>,
}

impl<T: Real> Calibrator<T> {
    /// Fresh forecaster over `grid` for outcomes of Euclidean norm at most
    /// `outcome_bound`.
    pub fn new(grid: FiniteGrid<T>, outcome_bound: T) -> Result<Self, CalibrationError> {
        if grid.is_empty() {
            return Err(CalibrationError::EmptyGrid);
        }
        if !(outcome_bound > T::zero()) || !outcome_bound.is_finite() {
            return Err(CalibrationError::InvalidBound(outcome_bound.to_f64_lossy()));
        }
        let grid_radius = grid.points().iter().map(|p| norm(p)).fold(T::zero(), T::max);
        let reach = outcome_bound + grid_radius;
        let engine = RegretState::new(grid.len(), reach * reach * (T::one() + T::lit(1e-9)))?;
        let outcome_sums = Matrix::zeros(grid.len(), grid.dim());
        Ok(Self { grid, engine, outcome_sums, outcome_bound, pending: None })
    }

    pub fn grid(&self) -> &FiniteGrid<T> {
        &self.grid
    }

    pub fn engine(&self) -> &RegretState<T> {
        &self.engine
    }

    pub fn types(&self) -> usize {
        self.grid.len()
    }

    pub fn stage(&self) -> u64 {
        self.engine.stage()
    }

    pub fn outcome_bound(&self) -> T {
        self.outcome_bound
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    /// `|N_n(l)|` for every type.
    pub fn counts(&self) -> &[u64] {
        self.engine.counts()
    }

    /// Row `l` is the sum of outcomes observed under type `l`.
    pub fn outcome_sums(&self) -> &Matrix<T> {
        &self.outcome_sums
    }

    /// `s̄_n(l)`, or `None` if type `l` was never forecast.
    pub fn type_average(&self, l: usize) -> Option<Vec<T>> {
        let count = self.counts()[l];
        (count > 0).then(|| {
            let k = T::lit(count as f64);
            self.outcome_sums.row(l).iter().map(|&s| s / k).collect()
        })
    }

    /// The law the next forecast is drawn from.
    pub fn forecast_distribution(&self) -> SimplexVector<T> {
        self.engine.next_strategy()
    }

    pub fn forecast<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize, CalibrationError> {
        self.forecast_at_quantile(rng.gen::<f64>())
    }

    /// Forecast by inverse-CDF sampling at a given quantile in `[0, 1)`.
    pub fn forecast_at_quantile(&mut self, u: f64) -> Result<usize, CalibrationError> {
        if self.pending.is_some() {
            return Err(CalibrationError::PendingObservation);
        }
        let l = self.forecast_distribution().index_at_quantile(u);
        self.pending = Some(l);
        Ok(l)
    }

    /// Forecast type `l` without sampling, e.g. when the caller already drew
    /// from [`forecast_distribution`](Self::forecast_distribution).
    pub fn commit_forecast(&mut self, l: usize) -> Result<(), CalibrationError> {
        if self.pending.is_some() {
            return Err(CalibrationError::PendingObservation);
        }
        assert!(l < self.types(), "type index out of range");
        self.pending = Some(l);
        Ok(())
    }

    pub fn observe(&mut self, outcome: &[T]) -> Result<(), CalibrationError> {
        let Some(l) = self.pending else {
            return Err(CalibrationError::NoPendingForecast);
        };
        if outcome.len() != self.grid.dim() {
            return Err(CalibrationError::DimensionMismatch { expected: self.grid.dim(), found: outcome.len() });
        }
        let size = norm(outcome);
        if !(size <= self.outcome_bound * (T::one() + T::lit(1e-12))) {
            return Err(CalibrationError::OutcomeOutOfRange {
                norm: size.to_f64_lossy(),
                bound: self.outcome_bound.to_f64_lossy(),
            });
        }
        let u: Vec<T> = self.grid.points().iter().map(|mu| -distance_sq(outcome, mu)).collect();
        self.engine.update_values(l, &u)?;
        for (s, &o) in self.outcome_sums.row_mut(l).iter_mut().zip(outcome) {
            *s += o;
        }
        self.pending = None;
        Ok(())
    }

    /// `max_{l,k} (|N_n(l)|/n)(‖s̄_n(l) − μ(l)‖² − ‖s̄_n(l) − μ(k)‖²)`.
    pub fn calibration_score(&self) -> Result<T, CalibrationError> {
        let n = self.nonempty_stage()?;
        let mut best = T::zero();
        for l in 0..self.types() {
            let Some(avg) = self.type_average(l) else { continue };
            let own = distance_sq(&avg, self.grid.point(l));
            let nearest = self.grid.points().iter().map(|mu| distance_sq(&avg, mu)).fold(T::infinity(), T::min);
            let weight = T::lit(self.counts()[l] as f64) / n;
            best = best.max(weight * (own - nearest));
        }
        Ok(best)
    }

    /// `max_l (|N_n(l)|/n)(‖s̄_n(l) − μ(l)‖² − mesh²)` over visited types.
    pub fn epsilon_calibration_score(&self, partition_mesh: T) -> Result<T, CalibrationError> {
        let n = self.nonempty_stage()?;
        let mut best = T::neg_infinity();
        for l in 0..self.types() {
            let Some(avg) = self.type_average(l) else { continue };
            let weight = T::lit(self.counts()[l] as f64) / n;
            best = best.max(weight * (distance_sq(&avg, self.grid.point(l)) - partition_mesh * partition_mesh));
        }
        Ok(best)
    }

    fn nonempty_stage(&self) -> Result<T, CalibrationError> {
        match self.stage() {
            0 => Err(CalibrationError::EmptyHistory),
            n => Ok(T::lit(n as f64)),
        }
    }
}
