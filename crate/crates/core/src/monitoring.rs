//! Partial monitoring: flags, worst-case evaluation and internally
//! consistent play from signals alone.
//!
//! The player never sees the opponent's action or the payoff, only a signal
//! drawn from `s(i, j)`. Signals are turned into unbiased estimates of the
//! flag `(s(i, y))_i`, a calibrated forecaster runs over a grid of flags, and
//! each forecast is answered with a precomputed best response under an
//! evaluation `G(x, μ)`, by default the worst case over all opponent laws
//! compatible with the flag.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{CalibrationError, Calibrator};
use crate::linalg::{least_squares, Matrix};
use crate::play::ActionSource;
use crate::simplex::{
    distance, dot, minimize_simplex_quadratic, norm, product_grid, project_linear_image, random_simplex_point,
    simplex_grid_with_budget, FiniteGrid, SimplexError, SimplexVector, DEFAULT_GRID_BUDGET,
};
use crate::trace::{LogSchedule, MetricTrace, TraceError, TraceMetadata};

/// Feasibility tolerance on `‖s(y) − μ‖` for preimage points.
pub const PREIMAGE_TOLERANCE: f64 = 1e-6;
/// Slack allowed in the best-response spot check and regret decomposition.
pub const NUMERICAL_SLACK: f64 = 1e-6;

const PENALTY_ITERATIONS: usize = 10_000;
const MAX_ENUMERATED_OPPONENT_ACTIONS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitoringError {
    #[error("invalid signal structure: {0}")]
    InvalidStructure(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("flag row {row} is not a distribution (sum {sum})")]
    InvalidFlag { row: usize, sum: f64 },
    #[error("preimage empty: flag residual {residual}")]
    PreimageEmpty { residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Assumption 1 constants too loose: at flag {flag} the sample x = {x:?}, mu = {mu:?} scores {value}, best is {best}, tolerance {epsilon}")]
    AssumptionViolated { flag: usize, x: Vec<f64>, mu: Vec<f64>, value: f64, best: f64, epsilon: f64 },
    #[error("estimator undefined: action {action} has zero probability")]
    EstimatorUndefined { action: usize },
    #[error("estimator norm {norm} exceeds |I|/eta = {bound}")]
    EstimatorOutOfBound { norm: f64, bound: f64 },
    #[error("external regret {regret} exceeds its decomposition bound {bound}")]
    DecompositionViolated { regret: f64, bound: f64 },
    #[error("empty history")]
    EmptyHistory,
    #[error("opponent played action {action}, game has {actions}")]
    OpponentOutOfRange { action: usize, actions: usize },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl MonitoringError {
    pub fn is_budget_exceeded(&self) -> bool {
        matches!(self, Self::Simplex(SimplexError::GridBudgetExceeded { .. }))
    }
}

/// An element of `Δ(S)^I`, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Flag {
    actions: usize,
    signals: usize,
    values: Vec<f64>,
}

impl Flag {
    pub fn new(actions: usize, signals: usize, values: Vec<f64>) -> Result<Self, MonitoringError> {
        if values.len() != actions * signals {
            return Err(MonitoringError::DimensionMismatch { expected: actions * signals, found: values.len() });
        }
        for (row, chunk) in values.chunks(signals).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(MonitoringError::InvalidFlag { row, sum });
            }
        }
        Ok(Self { actions, signals, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MonitoringError> {
        let signals = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != signals) {
            return Err(MonitoringError::InvalidStructure("ragged flag rows".into()));
        }
        Self::new(rows.len(), signals, rows.concat())
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn signals(&self) -> usize {
        self.signals
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.signals..(i + 1) * self.signals]
    }
}

/// Nearest point of the range of the flag map, with opponent mixed action
/// attaining it.
#[derive(Clone, Debug)]
pub struct RangeProjection {
    pub coefficients: SimplexVector<f64>,
    pub image: Vec<f64>,
    pub gap: f64,
}

/// Scalar payoffs `ρ(i, j)` and signal laws `s(i, j) ∈ Δ(S)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalStructure {
    actions: usize,
    opponent_actions: usize,
    signals: usize,
    payoffs: Vec<f64>,
    laws: Vec<f64>,
    radius: f64,
    /// `s(δ_j)` for every opponent action, flattened.
    vertices: Vec<Vec<f64>>,
}

impl SignalStructure {
    /// `payoffs[i][j]` and `laws[i][j]` (a distribution over signals).
    pub fn new(payoffs: &[Vec<f64>], laws: &[Vec<Vec<f64>>]) -> Result<Self, MonitoringError> {
        let actions = payoffs.len();
        let opponent_actions = payoffs.first().map_or(0, Vec::len);
        let signals = laws.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if actions == 0 || opponent_actions == 0 || signals == 0 {
            return Err(MonitoringError::InvalidStructure("action and signal sets must be nonempty".into()));
        }
        if laws.len() != actions {
            return Err(MonitoringError::InvalidStructure("signal table has the wrong number of rows".into()));
        }
        let mut flat_payoffs = Vec::with_capacity(actions * opponent_actions);
        let mut flat_laws = Vec::with_capacity(actions * opponent_actions * signals);
        for i in 0..actions {
            if payoffs[i].len() != opponent_actions || laws[i].len() != opponent_actions {
                return Err(MonitoringError::InvalidStructure(format!("row {i} has the wrong length")));
            }
            for j in 0..opponent_actions {
                let p = payoffs[i][j];
                if !p.is_finite() {
                    return Err(MonitoringError::InvalidStructure(format!("payoff ({i}, {j}) is not finite")));
                }
                flat_payoffs.push(p);
                let law = &laws[i][j];
                let sum: f64 = law.iter().sum();
                if law.len() != signals || law.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                    return Err(MonitoringError::InvalidStructure(format!(
                        "signal law ({i}, {j}) is not a distribution over {signals} signals"
                    )));
                }
                flat_laws.extend_from_slice(law);
            }
        }
        let radius = flat_payoffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vertices = (0..opponent_actions)
            .map(|j| {
                (0..actions)
                    .flat_map(|i| {
                        let start = (i * opponent_actions + j) * signals;
                        flat_laws[start..start + signals].to_vec()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { actions, opponent_actions, signals, payoffs: flat_payoffs, laws: flat_laws, radius, vertices })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn opponent_actions(&self) -> usize {
        self.opponent_actions
    }

    pub fn signals(&self) -> usize {
        self.signals
    }

    /// `r = max |ρ(i, j)|`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn flag_dim(&self) -> usize {
        self.actions * self.signals
    }

    pub fn payoff(&self, i: usize, j: usize) -> f64 {
        self.payoffs[i * self.opponent_actions + j]
    }

    pub fn signal_law(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.opponent_actions + j) * self.signals;
        &self.laws[start..start + self.signals]
    }

    /// Flags of the opponent's pure actions; the range is their hull.
    pub fn flag_vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn flag_of_action(&self, j: usize) -> Flag {
        Flag { actions: self.actions, signals: self.signals, values: self.vertices[j].clone() }
    }

    /// `s(y) = (s(i, y))_i`.
    pub fn flag_of(&self, y: &SimplexVector<f64>) -> Result<Flag, MonitoringError> {
        if y.dim() != self.opponent_actions {
            return Err(MonitoringError::DimensionMismatch { expected: self.opponent_actions, found: y.dim() });
        }
        let mut values = vec![0.0; self.flag_dim()];
        for (j, &w) in y.as_slice().iter().enumerate() {
            for (v, &s) in values.iter_mut().zip(&self.vertices[j]) {
                *v += w * s;
            }
        }
        Ok(Flag { actions: self.actions, signals: self.signals, values })
    }

    /// `(ρ(i, y))_i`.
    pub fn payoffs_against(&self, y: &[f64]) -> Vec<f64> {
        (0..self.actions)
            .map(|i| y.iter().enumerate().map(|(j, &w)| w * self.payoff(i, j)).sum())
            .collect()
    }

    pub fn mixed_payoff(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.payoffs_against(y))
    }

    /// Projection of any vector of `R^{I·S}` onto the range of the flag map.
    pub fn range_projection(&self, mu: &[f64]) -> Result<RangeProjection, MonitoringError> {
        if mu.len() != self.flag_dim() {
            return Err(MonitoringError::DimensionMismatch { expected: self.flag_dim(), found: mu.len() });
        }
        let p = project_linear_image(mu, &self.vertices)?;
        Ok(RangeProjection { coefficients: p.coefficients, image: p.image, gap: p.gap })
    }

    /// Preimage vertices of `μ` itself when it is a flag, of its range
    /// projection otherwise.
    pub fn consistent_vertices(&self, mu: &[f64]) -> Result<Vec<Vec<f64>>, MonitoringError> {
        match self.preimage_vertices(mu) {
            Err(MonitoringError::PreimageEmpty { .. }) => self.preimage_vertices(&self.range_projection(mu)?.image),
            other => other,
        }
    }

    /// Vertices of `{y ∈ Δ(J) : s(y) = target}` by enumeration of basic
    /// solutions. `target` should lie in the range.
    pub fn preimage_vertices(&self, target: &[f64]) -> Result<Vec<Vec<f64>>, MonitoringError> {
        if target.len() != self.flag_dim() {
            return Err(MonitoringError::DimensionMismatch { expected: self.flag_dim(), found: target.len() });
        }
        let jn = self.opponent_actions;
        if jn > MAX_ENUMERATED_OPPONENT_ACTIONS {
            return Err(MonitoringError::InvalidParameter(format!(
                "preimage enumeration supports at most {MAX_ENUMERATED_OPPONENT_ACTIONS} opponent actions, got {jn}"
            )));
        }
        let rows = self.flag_dim() + 1;
        let mut rhs = target.to_vec();
        rhs.push(1.0);
        let scale = 1.0 + norm(&rhs);
        let mut found: Vec<Vec<f64>> = Vec::new();
        let mut best_residual = f64::INFINITY;
        for mask in 1u32..(1u32 << jn) {
            let support: Vec<usize> = (0..jn).filter(|&j| mask & (1 << j) != 0).collect();
            let k = support.len();
            if k > rows {
                continue;
            }
            let mut a = vec![0.0; rows * k];
            for (col, &j) in support.iter().enumerate() {
                for r in 0..rows - 1 {
                    a[r * k + col] = self.vertices[j][r];
                }
                a[(rows - 1) * k + col] = 1.0;
            }
            let Some(sol) = least_squares(&a, &rhs, rows, k) else { continue };
            let residual = (0..rows)
                .map(|r| {
                    let fit: f64 = (0..k).map(|c| a[r * k + c] * sol[c]).sum();
                    (fit - rhs[r]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            best_residual = best_residual.min(residual);
            if residual > 1e-7 * scale || sol.iter().any(|&v| v < -1e-9) {
                continue;
            }
            let mut y = vec![0.0; jn];
            for (&j, &v) in support.iter().zip(&sol) {
                y[j] = v.max(0.0);
            }
            let total: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= total);
            if !found.iter().any(|f| distance(f, &y) < 1e-9) {
                found.push(y);
            }
        }
        if found.is_empty() {
            return Err(MonitoringError::PreimageEmpty { residual: best_residual });
        }
        Ok(found)
    }
}

/// `G(·, μ)` for one fixed flag.
#[derive(Clone)]
pub enum Section {
    /// `x ↦ min_v ⟨x, a_v⟩`.
    Lower(Vec<Vec<f64>>),
    /// `x ↦ max_v ⟨x, a_v⟩`.
    Upper(Vec<Vec<f64>>),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lower(p) => f.debug_tuple("Lower").field(p).finish(),
            Self::Upper(p) => f.debug_tuple("Upper").field(p).finish(),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl Section {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Lower(pieces) => pieces.iter().map(|a| dot(x, a)).fold(f64::INFINITY, f64::min),
            Self::Upper(pieces) => pieces.iter().map(|a| dot(x, a)).fold(f64::NEG_INFINITY, f64::max),
            Self::Function(f) => f(x),
        }
    }

    /// Supremum over `Δ(I)`. Exact for upper envelopes and for lower
    /// envelopes of at most two pieces; otherwise the maximum over `grid`,
    /// which undershoots by at most the payoff radius times its mesh.
    pub fn sup_over(&self, grid: &FiniteGrid<f64>) -> f64 {
        match self {
            // Maxima of convex piecewise-linear functions sit at vertices.
            Self::Upper(pieces) => pieces.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Lower(pieces) if pieces.len() == 1 => pieces[0].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Self::Lower(pieces) if pieces.len() == 2 => two_piece_max(&pieces[0], &pieces[1]),
            _ => self.argmax_over(grid).1,
        }
    }

    /// First grid point attaining the largest value.
    pub fn argmax_over(&self, grid: &FiniteGrid<f64>) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (k, x) in grid.points().iter().enumerate() {
            let v = self.value(x);
            if v > best.1 {
                best = (k, v);
            }
        }
        best
    }
}

/// `max_{x ∈ Δ} min(⟨x, a⟩, ⟨x, b⟩)`: attained at a vertex or where the
/// two pieces cross on an edge.
fn two_piece_max(a: &[f64], b: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..a.len() {
        best = best.max(a[i].min(b[i]));
        let di = a[i] - b[i];
        for k in i + 1..a.len() {
            let dk = a[k] - b[k];
            if di * dk < 0.0 {
                let t = di / (di - dk);
                best = best.max((1.0 - t) * a[i] + t * a[k]);
            }
        }
    }
    best
}

type EvaluationFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// The evaluation `G(x, μ)` a player optimizes under partial monitoring.
#[derive(Clone)]
pub enum Evaluation {
    /// `W(x, μ) = min_{y ∈ s⁻¹(Π_S μ)} ρ(x, y)`.
    WorstCase,
    /// `O(x, μ) = max_{y ∈ s⁻¹(Π_S μ)} ρ(x, y)`.
    Optimistic,
    Custom { label: String, function: EvaluationFn },
}

impl fmt::Debug for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WorstCase => f.write_str("WorstCase"),
            Self::Optimistic => f.write_str("Optimistic"),
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl Evaluation {
    pub fn custom(label: impl Into<String>, function: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom { label: label.into(), function: Arc::new(function) }
    }

    pub fn section(&self, structure: &SignalStructure, mu: &[f64]) -> Result<Section, MonitoringError> {
        match self {
            Self::WorstCase | Self::Optimistic => {
                let pieces: Vec<Vec<f64>> = structure
                    .consistent_vertices(mu)?
                    .iter()
                    .map(|y| structure.payoffs_against(y))
                    .collect();
                Ok(match self {
                    Self::WorstCase => Section::Lower(pieces),
                    _ => Section::Upper(pieces),
                })
            }
            Self::Custom { function, .. } => {
                let function = Arc::clone(function);
                let mu = mu.to_vec();
                Ok(Section::Function(Arc::new(move |x| function(x, &mu))))
            }
        }
    }

    pub fn evaluate(&self, structure: &SignalStructure, x: &[f64], mu: &[f64]) -> Result<f64, MonitoringError> {
        Ok(self.section(structure, mu)?.value(x))
    }
}

/// Worst-case evaluation by penalized Frank–Wolfe, checked against the
/// exact preimage vertices when `|J| ≤ 16`.
///
/// Minimizes `ρ(x, y) + K‖s(y) − μ'‖²` over `Δ(J)`, `K = 10³·max(r, 1)`,
/// where `μ'` is the range projection of `μ`. The penalty target is shifted
/// by the running constraint residual (a multiplier update) so that the
/// minimizer becomes feasible instead of only approximately so.
pub fn worst_case_w(structure: &SignalStructure, x: &SimplexVector<f64>, mu: &[f64]) -> Result<f64, MonitoringError> {
    penalized_extremum(structure, x, mu, 1.0)
}

/// Optimistic evaluation, the maximization counterpart of [`worst_case_w`].
pub fn optimistic_o(structure: &SignalStructure, x: &SimplexVector<f64>, mu: &[f64]) -> Result<f64, MonitoringError> {
    penalized_extremum(structure, x, mu, -1.0).map(|v| -v)
}

fn penalized_extremum(structure: &SignalStructure, x: &SimplexVector<f64>, mu: &[f64], sign: f64) -> Result<f64, MonitoringError> {
    if x.dim() != structure.actions {
        return Err(MonitoringError::DimensionMismatch { expected: structure.actions, found: x.dim() });
    }
    let projected = structure.range_projection(mu)?;
    let linear: Vec<f64> = (0..structure.opponent_actions)
        .map(|j| sign * (0..structure.actions).map(|i| x.get(i) * structure.payoff(i, j)).sum::<f64>())
        .collect();
    let weight = 1e3 * structure.radius.max(1.0);
    let mut target = projected.image.clone();
    let mut coefficients: Option<Vec<f64>> = None;
    let mut used = 0;
    let mut residual = f64::INFINITY;
    while used < PENALTY_ITERATIONS {
        let budget = (PENALTY_ITERATIONS - used).min(2_000);
        let sol = minimize_simplex_quadratic(
            &structure.vertices,
            &target,
            weight,
            Some(&linear),
            coefficients.as_deref(),
            1e-13,
            budget,
        );
        used += sol.iterations.max(1);
        let miss: Vec<f64> = sol.image.iter().zip(&projected.image).map(|(a, b)| a - b).collect();
        residual = norm(&miss);
        coefficients = Some(sol.coefficients);
        if residual <= 1e-10 {
            break;
        }
        for (t, m) in target.iter_mut().zip(&miss) {
            *t -= m;
        }
    }
    let penalized = (residual <= PREIMAGE_TOLERANCE).then(|| dot(&coefficients.expect("at least one iteration ran"), &linear));
    if structure.opponent_actions > MAX_ENUMERATED_OPPONENT_ACTIONS {
        return penalized.ok_or(MonitoringError::PreimageEmpty { residual });
    }
    // A flag residual of 1e-6 can still leave y far off when the flag map is
    // badly conditioned, so small games are checked against the exact
    // preimage vertices.
    let exact = structure.consistent_vertices(mu)?.iter().map(|y| dot(y, &linear)).fold(f64::INFINITY, f64::min);
    Ok(match penalized {
        Some(v) if (v - exact).abs() <= 1e-3 * structure.radius.max(1.0) => v,
        _ => exact,
    })
}

/// How the flag grid of a [`BrGrid`] is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlagGridMode {
    /// Image of a grid of `Δ(J)`: covers the range of the flag map, which
    /// holds every true flag and every range projection.
    Range,
    /// Product of one simplex grid per own action: covers all of `Δ(S)^I`.
    Product,
}

#[derive(Clone, Debug)]
pub struct BrGridOptions {
    pub mode: FlagGridMode,
    pub seed: u64,
    /// Cap on the number of points of any intermediate grid.
    pub grid_budget: usize,
    /// Cap on the number of flag types.
    pub max_types: usize,
    pub lipschitz_samples: usize,
    pub spot_checks: usize,
    /// Replaces the default exploration rate `ε/(4 max(r, 1))`.
    pub eta: Option<f64>,
}

impl Default for BrGridOptions {
    fn default() -> Self {
        Self {
            mode: FlagGridMode::Range,
            seed: 0,
            grid_budget: DEFAULT_GRID_BUDGET,
            max_types: 4096,
            lipschitz_samples: 1000,
            spot_checks: 100,
            eta: None,
        }
    }
}

/// Flag grid with a best response for every flag.
#[derive(Clone, Debug)]
pub struct BrGrid {
    flags: FiniteGrid<f64>,
    responses: Vec<SimplexVector<f64>>,
    response_grid: FiniteGrid<f64>,
    evaluation: Evaluation,
    epsilon: f64,
    eta: f64,
    delta: f64,
    lipschitz: f64,
}

impl BrGrid {
    pub fn flags(&self) -> &FiniteGrid<f64> {
        &self.flags
    }

    pub fn responses(&self) -> &[SimplexVector<f64>] {
        &self.responses
    }

    pub fn response_grid(&self) -> &FiniteGrid<f64> {
        &self.response_grid
    }

    pub fn evaluation(&self) -> &Evaluation {
        &self.evaluation
    }

    pub fn types(&self) -> usize {
        self.responses.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Perturbation level and response-grid mesh.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Flag-grid covering radius.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Sampled Lipschitz constant of `G` in the flag.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `sup_x G(x, μ)` over the response grid.
    pub fn best_value(&self, structure: &SignalStructure, mu: &[f64]) -> Result<f64, MonitoringError> {
        Ok(self.evaluation.section(structure, mu)?.sup_over(&self.response_grid))
    }
}

/// Largest sampled ratio `|G(x, μ) − G(x, μ')| / ‖μ − μ'‖`.
pub fn estimate_flag_lipschitz(
    structure: &SignalStructure,
    evaluation: &Evaluation,
    samples: usize,
    seed: u64,
) -> Result<f64, MonitoringError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(samples);
    for k in 0..samples {
        let x = if k % 2 == 0 {
            let mut v = vec![0.0; structure.actions];
            v[rng.gen_range(0..structure.actions)] = 1.0;
            v
        } else {
            random_simplex_point(&mut rng, structure.actions)
        };
        let mu = if k % 4 < 2 {
            let y = random_simplex_point(&mut rng, structure.opponent_actions);
            structure.flag_of(&SimplexVector::new(y)?)?.values
        } else {
            random_flag(&mut rng, structure.actions, structure.signals)
        };
        let other = random_flag(&mut rng, structure.actions, structure.signals);
        let t = 0.01 + 0.09 * rng.gen::<f64>();
        let nearby: Vec<f64> = mu.iter().zip(&other).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        pairs.push((x, mu, nearby));
    }
    let ratios = pairs
        .par_iter()
        .map(|(x, mu, nearby)| {
            let gap = distance(mu, nearby);
            if gap < 1e-12 {
                return Ok(0.0);
            }
            let a = evaluation.evaluate(structure, x, mu)?;
            let b = evaluation.evaluate(structure, x, nearby)?;
            Ok((a - b).abs() / gap)
        })
        .collect::<Result<Vec<f64>, MonitoringError>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

fn random_flag<R: Rng + ?Sized>(rng: &mut R, actions: usize, signals: usize) -> Vec<f64> {
    (0..actions).flat_map(|_| random_simplex_point(rng, signals)).collect()
}

/// Flag grid of covering radius `delta` over the chosen set.
pub fn flag_grid(
    structure: &SignalStructure,
    delta: f64,
    mode: FlagGridMode,
    grid_budget: usize,
    max_types: usize,
) -> Result<FiniteGrid<f64>, MonitoringError> {
    let diameter = (2.0 * structure.actions as f64).sqrt();
    let grid = match mode {
        // one point covers everything
        _ if delta >= diameter => FiniteGrid::from_distinct(vec![structure.vertices[0].clone()], diameter),
        FlagGridMode::Product => {
            let row_mesh = delta / (structure.actions as f64).sqrt();
            let row = simplex_grid_with_budget::<f64>(structure.signals, row_mesh, grid_budget)?;
            product_grid(&vec![row; structure.actions], max_types)?
        }
        FlagGridMode::Range => {
            // Lipschitz bound of y ↦ s(y) on differences of simplex points:
            // Frobenius norm of the column-centred flag matrix.
            let jn = structure.opponent_actions as f64;
            let dim = structure.flag_dim();
            let mean: Vec<f64> =
                (0..dim).map(|r| structure.vertices.iter().map(|v| v[r]).sum::<f64>() / jn).collect();
            let spread = structure.vertices.iter().map(|v| crate::simplex::distance_sq(v, &mean)).sum::<f64>().sqrt();
            if spread <= 1e-12 {
                FiniteGrid::from_distinct(vec![structure.vertices[0].clone()], 0.0)
            } else {
                let ys = simplex_grid_with_budget::<f64>(structure.opponent_actions, delta / spread, grid_budget)?;
                let mut seen = HashSet::new();
                let mut points = Vec::new();
                for y in ys.points() {
                    let image = structure.flag_of(&SimplexVector::new(y.clone())?)?.values;
                    let key: Vec<i64> = image.iter().map(|v| (v * 1e12).round() as i64).collect();
                    if seen.insert(key) {
                        points.push(image);
                    }
                }
                FiniteGrid::from_distinct(points, spread * ys.mesh())
            }
        }
    };
    if grid.len() > max_types {
        return Err(SimplexError::GridBudgetExceeded { points: grid.len() as f64, budget: max_types }.into());
    }
    Ok(grid)
}

/// Builds the flag grid and best responses so that every `x` within `2η`
/// of `x(l)` is an `ε`-best response to every flag within `2δ` of `μ(l)`.
///
/// With `L̂` the sampled Lipschitz constant of `G` in the flag and `r` the
/// payoff radius, `δ = ε / (4 L̂)` and `η = ε / (4 max(r, 1))`; the
/// property is spot-checked on random samples before the grid is returned.
pub fn build_br_grid(
    structure: &SignalStructure,
    evaluation: Evaluation,
    epsilon: f64,
    options: &BrGridOptions,
) -> Result<BrGrid, MonitoringError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(MonitoringError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let lipschitz = estimate_flag_lipschitz(structure, &evaluation, options.lipschitz_samples, options.seed)?;
    let diameter = (2.0 * structure.actions as f64).sqrt();
    let delta = if lipschitz > 1e-12 { (epsilon / (4.0 * lipschitz)).min(diameter) } else { diameter };
    let eta = match options.eta {
        Some(eta) if eta > 0.0 && eta <= 1.0 => eta,
        Some(eta) => return Err(MonitoringError::InvalidParameter(format!("eta must lie in (0, 1], got {eta}"))),
        None => (epsilon / (4.0 * structure.radius.max(1.0))).min(1.0),
    };
    let flags = flag_grid(structure, delta, options.mode, options.grid_budget, options.max_types)?;
    let response_grid = simplex_grid_with_budget::<f64>(structure.actions, eta, options.grid_budget)?;

    let responses = flags
        .points()
        .par_iter()
        .map(|mu| {
            let section = evaluation.section(structure, mu)?;
            let (k, _) = section.argmax_over(&response_grid);
            Ok(SimplexVector::new(response_grid.point(k).to_vec())?)
        })
        .collect::<Result<Vec<_>, MonitoringError>>()?;

    let grid = BrGrid { flags, responses, response_grid, evaluation, epsilon, eta, delta, lipschitz };
    spot_check(structure, &grid, options)?;
    Ok(grid)
}

fn spot_check(structure: &SignalStructure, grid: &BrGrid, options: &BrGridOptions) -> Result<(), MonitoringError> {
    let violations: Vec<Option<MonitoringError>> = (0..grid.types())
        .into_par_iter()
        .map(|l| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(l as u64 + 1)));
            let center_x = grid.responses[l].as_slice();
            let center_mu = grid.flags.point(l);
            for _ in 0..options.spot_checks {
                let other_x = random_simplex_point(&mut rng, structure.actions);
                let x = toward(center_x, &other_x, 2.0 * grid.eta * rng.gen::<f64>());
                let other_mu = random_flag(&mut rng, structure.actions, structure.signals);
                let mu = toward(center_mu, &other_mu, 2.0 * grid.delta * rng.gen::<f64>());
                let section = match grid.evaluation.section(structure, &mu) {
                    Ok(s) => s,
                    Err(e) => return Some(e),
                };
                let value = section.value(&x);
                let best = section.sup_over(&grid.response_grid);
                if value < best - grid.epsilon - NUMERICAL_SLACK {
                    return Some(MonitoringError::AssumptionViolated { flag: l, x, mu, value, best, epsilon: grid.epsilon });
                }
            }
            None
        })
        .collect();
    match violations.into_iter().flatten().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Point on the segment from `center` toward `other` at distance at most
/// `radius` from `center`.
fn toward(center: &[f64], other: &[f64], radius: f64) -> Vec<f64> {
    let d = distance(center, other);
    let t = if d > 0.0 { (radius / d).min(1.0) } else { 0.0 };
    center.iter().zip(other).map(|(c, o)| (1.0 - t) * c + t * o).collect()
}

/// `(1 − η) x + η u` with `u` uniform.
pub fn perturb(x: &SimplexVector<f64>, eta: f64) -> Result<SimplexVector<f64>, MonitoringError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(MonitoringError::InvalidParameter(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(x.perturbed(eta))
}

/// Importance-weighted flag estimate: one-hot at `(action, signal)` scaled by
/// `1 / x_used[action]`.
pub fn estimator(signal: usize, action: usize, x_used: &SimplexVector<f64>, signals: usize) -> Result<Vec<f64>, MonitoringError> {
    let p = x_used.get(action);
    if !(p > 0.0) {
        return Err(MonitoringError::EstimatorUndefined { action });
    }
    let mut out = vec![0.0; x_used.dim() * signals];
    out[action * signals + signal] = 1.0 / p;
    Ok(out)
}

/// What the opponent does in one stage: the flag it induces and the payoff
/// each own action would receive.
#[derive(Clone, Debug)]
pub struct NatureMove {
    pub flag: Flag,
    pub payoffs: Vec<f64>,
}

impl NatureMove {
    pub fn pure(structure: &SignalStructure, j: usize) -> Self {
        Self {
            flag: structure.flag_of_action(j),
            payoffs: (0..structure.actions).map(|i| structure.payoff(i, j)).collect(),
        }
    }
}

/// One stage as seen by the simulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub forecast: usize,
    pub action: usize,
    pub signal: usize,
    pub payoff: f64,
    pub estimator_sup: f64,
}

/// State of the internally consistent strategy plus simulator-side ground
/// truth (payoffs and true flags), which the strategy never reads.
#[derive(Clone, Debug)]
pub struct MonitoringState {
    calibrator: Calibrator<f64>,
    eta: f64,
    actions: usize,
    signals: usize,
    action_sums: Matrix<f64>,
    payoff_sums: Vec<f64>,
    flag_sums: Matrix<f64>,
}

impl MonitoringState {
    pub fn new(structure: &SignalStructure, br: &BrGrid) -> Result<Self, MonitoringError> {
        let types = br.types();
        let bound = structure.actions as f64 / br.eta;
        Ok(Self {
            calibrator: Calibrator::new(br.flags.clone(), bound)?,
            eta: br.eta,
            actions: structure.actions,
            signals: structure.signals,
            action_sums: Matrix::zeros(types, structure.actions),
            payoff_sums: vec![0.0; types],
            flag_sums: Matrix::zeros(types, structure.flag_dim()),
        })
    }

    pub fn stage(&self) -> u64 {
        self.calibrator.stage()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn calibrator(&self) -> &Calibrator<f64> {
        &self.calibrator
    }

    pub fn counts(&self) -> &[u64] {
        self.calibrator.counts()
    }

    fn averaged(&self, l: usize, row: &[f64]) -> Option<Vec<f64>> {
        let c = self.counts()[l];
        (c > 0).then(|| row.iter().map(|v| v / c as f64).collect())
    }

    /// `s̃_n(l)`.
    pub fn estimator_average(&self, l: usize) -> Option<Vec<f64>> {
        self.calibrator.type_average(l)
    }

    /// `ī_n(l)`.
    pub fn action_average(&self, l: usize) -> Option<Vec<f64>> {
        self.averaged(l, self.action_sums.row(l))
    }

    /// `μ̄_n(l)`.
    pub fn flag_average(&self, l: usize) -> Option<Vec<f64>> {
        self.averaged(l, self.flag_sums.row(l))
    }

    /// `ρ̄_n(l)`.
    pub fn payoff_average(&self, l: usize) -> Option<f64> {
        let c = self.counts()[l];
        (c > 0).then(|| self.payoff_sums[l] / c as f64)
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        br: &BrGrid,
        nature: &NatureMove,
        rng: &mut R,
    ) -> Result<StepRecord, MonitoringError> {
        if nature.flag.actions != self.actions || nature.flag.signals != self.signals {
            return Err(MonitoringError::DimensionMismatch {
                expected: self.actions * self.signals,
                found: nature.flag.values.len(),
            });
        }
        let l = self.calibrator.forecast(rng)?;
        let x = br.responses[l].perturbed(self.eta);
        let i = x.sample(rng);
        let s = SimplexVector::new(nature.flag.row(i).to_vec())
            .map_err(|_| MonitoringError::InvalidFlag { row: i, sum: nature.flag.row(i).iter().sum() })?
            .sample(rng);
        let estimate = estimator(s, i, &x, self.signals)?;
        let estimator_sup = estimate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = self.actions as f64 / self.eta;
        if estimator_sup > bound * (1.0 + 1e-12) {
            return Err(MonitoringError::EstimatorOutOfBound { norm: estimator_sup, bound });
        }
        self.calibrator.observe(&estimate)?;
        self.action_sums[(l, i)] += 1.0;
        let payoff = nature.payoffs[i];
        self.payoff_sums[l] += payoff;
        for (acc, &v) in self.flag_sums.row_mut(l).iter_mut().zip(&nature.flag.values) {
            *acc += v;
        }
        Ok(StepRecord { forecast: l, action: i, signal: s, payoff, estimator_sup })
    }

    fn weights(&self) -> Result<Vec<f64>, MonitoringError> {
        let n = self.stage();
        if n == 0 {
            return Err(MonitoringError::EmptyHistory);
        }
        Ok(self.counts().iter().map(|&c| c as f64 / n as f64).collect())
    }

    /// Per type: `(|N_n(l)|/n)(sup_x G(x, m_l) − G(ī_n(l), m_l))` with `m_l`
    /// the true average flag or the range projection of the estimator
    /// average. `None` for types never forecast.
    pub fn internal_regret_report(
        &self,
        structure: &SignalStructure,
        br: &BrGrid,
        use_true_flags: bool,
    ) -> Result<Vec<Option<f64>>, MonitoringError> {
        let weights = self.weights()?;
        (0..br.types())
            .map(|l| {
                if self.counts()[l] == 0 {
                    return Ok(None);
                }
                let m = if use_true_flags {
                    self.flag_average(l).expect("visited")
                } else {
                    structure.range_projection(&self.estimator_average(l).expect("visited"))?.image
                };
                let section = br.evaluation.section(structure, &m)?;
                let played = self.action_average(l).expect("visited");
                Ok(Some(weights[l] * (section.sup_over(&br.response_grid) - section.value(&played))))
            })
            .collect()
    }

    /// Per type: `(|N_n(l)|/n)(sup_x W(x, μ̄_n(l)) − ρ̄_n(l))`.
    pub fn actual_payoff_regret_report(
        &self,
        structure: &SignalStructure,
        br: &BrGrid,
    ) -> Result<Vec<Option<f64>>, MonitoringError> {
        let weights = self.weights()?;
        (0..br.types())
            .map(|l| {
                if self.counts()[l] == 0 {
                    return Ok(None);
                }
                let best = Evaluation::WorstCase
                    .section(structure, &self.flag_average(l).expect("visited"))?
                    .sup_over(&br.response_grid);
                Ok(Some(weights[l] * (best - self.payoff_average(l).expect("visited"))))
            })
            .collect()
    }

    /// `max_x W(x, μ̄_n) − ρ̄_n` together with the bound
    /// `Σ_l (|N_n(l)|/n)(sup_x W(x, μ̄_n(l)) − ρ̄_n(l))`, which it can never
    /// exceed because `μ ↦ max_x W(x, μ)` is convex.
    pub fn external_regret_report(&self, structure: &SignalStructure, br: &BrGrid) -> Result<ExternalRegret, MonitoringError> {
        let weights = self.weights()?;
        let n = self.stage() as f64;
        let mut overall_flag = vec![0.0; structure.flag_dim()];
        for l in 0..br.types() {
            for (acc, &v) in overall_flag.iter_mut().zip(self.flag_sums.row(l)) {
                *acc += v / n;
            }
        }
        let average_payoff = self.payoff_sums.iter().sum::<f64>() / n;
        let regret =
            Evaluation::WorstCase.section(structure, &overall_flag)?.sup_over(&br.response_grid) - average_payoff;
        let bound: f64 = self.actual_payoff_regret_report(structure, br)?.into_iter().flatten().sum();
        let _ = weights;
        if regret > bound + NUMERICAL_SLACK {
            return Err(MonitoringError::DecompositionViolated { regret, bound });
        }
        Ok(ExternalRegret { regret, bound })
    }

    pub fn average_payoff(&self) -> Result<f64, MonitoringError> {
        match self.stage() {
            0 => Err(MonitoringError::EmptyHistory),
            n => Ok(self.payoff_sums.iter().sum::<f64>() / n as f64),
        }
    }

    /// `max_l ‖s̃_n(l) − μ̄_n(l)‖` over visited types.
    pub fn estimator_gap(&self) -> f64 {
        (0..self.counts().len())
            .filter_map(|l| Some(distance(&self.estimator_average(l)?, &self.flag_average(l)?)))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExternalRegret {
    pub regret: f64,
    pub bound: f64,
}

pub fn pm_step<R: Rng + ?Sized>(
    state: &mut MonitoringState,
    br: &BrGrid,
    nature: &NatureMove,
    rng: &mut R,
) -> Result<StepRecord, MonitoringError> {
    state.step(br, nature, rng)
}

fn pm_metadata(scenario: &str, seed: u64, parameters: Vec<(&str, String)>) -> TraceMetadata {
    TraceMetadata {
        scenario: scenario.to_string(),
        seed,
        parameters: parameters.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        notes: Vec::new(),
    }
}

fn opponent(structure: &SignalStructure, adversary: &mut dyn ActionSource, stage: u64) -> Result<usize, MonitoringError> {
    let j = adversary.next_action(stage);
    if j >= structure.opponent_actions {
        return Err(MonitoringError::OpponentOutOfRange { action: j, actions: structure.opponent_actions });
    }
    Ok(j)
}

/// Column names of [`run_partial_monitoring`] traces.
pub const PM_COLUMNS: [&str; 10] = [
    "max_actual_regret",
    "sum_actual_regret",
    "max_internal_true",
    "max_internal_estimated",
    "external_regret",
    "external_bound",
    "estimator_gap",
    "calibration_score",
    "average_payoff",
    "types_visited",
];

/// Plays the internally consistent strategy against a finite opponent.
pub fn run_partial_monitoring(
    structure: &SignalStructure,
    br: &BrGrid,
    adversary: &mut dyn ActionSource,
    n: u64,
    seed: u64,
    schedule: LogSchedule,
) -> Result<MetricTrace, MonitoringError> {
    if n == 0 {
        return Err(MonitoringError::InvalidParameter("stage count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = vec![
        ("steps", n.to_string()),
        ("epsilon", br.epsilon.to_string()),
        ("eta", br.eta.to_string()),
        ("delta", br.delta.to_string()),
        ("types", br.types().to_string()),
    ];
    let mut trace = MetricTrace::new(pm_metadata("partial-monitor", seed, params), PM_COLUMNS.map(String::from).to_vec());
    let mut state = MonitoringState::new(structure, br)?;
    let moves: Vec<NatureMove> = (0..structure.opponent_actions).map(|j| NatureMove::pure(structure, j)).collect();
    for stage in 1..=n {
        let j = opponent(structure, adversary, stage)?;
        let record = state.step(br, &moves[j], &mut rng)?;
        adversary.observe(record.action, j);
        if schedule.should_log(stage) {
            trace.push_row(stage, pm_row(structure, br, &state)?)?;
        }
    }
    Ok(trace)
}

fn max_of(values: &[Option<f64>]) -> f64 {
    values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn pm_row(structure: &SignalStructure, br: &BrGrid, state: &MonitoringState) -> Result<Vec<f64>, MonitoringError> {
    let actual = state.actual_payoff_regret_report(structure, br)?;
    let internal_true = state.internal_regret_report(structure, br, true)?;
    let internal_estimated = state.internal_regret_report(structure, br, false)?;
    let external = state.external_regret_report(structure, br)?;
    Ok(vec![
        max_of(&actual),
        actual.iter().flatten().sum(),
        max_of(&internal_true),
        max_of(&internal_estimated),
        external.regret,
        external.bound,
        state.estimator_gap(),
        state.calibrator().calibration_score()?,
        state.average_payoff()?,
        state.counts().iter().filter(|&&c| c > 0).count() as f64,
    ])
}

/// `ε_k = 2^{−(k+3)}` for block `k ≥ 1`.
pub fn doubling_epsilon(block: u32) -> f64 {
    0.5f64.powi(block as i32 + 3)
}

/// `N_k = N₁·4^{k−1}` for block `k ≥ 1`.
pub fn doubling_length(n1: u64, block: u32) -> u64 {
    n1.saturating_mul(4u64.saturating_pow(block - 1))
}

/// Grids for the blocks of a doubling run, built once and reusable across
/// seeds.
#[derive(Clone, Debug)]
pub struct DoublingPlan {
    pub n1: u64,
    pub n_total: u64,
    pub grids: Vec<BrGrid>,
    pub notes: Vec<String>,
}

impl DoublingPlan {
    /// Builds the grid of every block that starts before `n_total`. Block
    /// `k` uses grid seed `options.seed + k`. If a block's grids exceed the
    /// budget the plan stops after the previous block and notes why.
    pub fn build(
        structure: &SignalStructure,
        evaluation: Evaluation,
        n1: u64,
        n_total: u64,
        options: &BrGridOptions,
    ) -> Result<Self, MonitoringError> {
        if n1 == 0 || n_total == 0 {
            return Err(MonitoringError::InvalidParameter("block base and stage count must be at least 1".into()));
        }
        let mut plan = Self { n1, n_total, grids: Vec::new(), notes: Vec::new() };
        let mut stage = 0u64;
        let mut block = 1u32;
        while stage < n_total {
            let epsilon = doubling_epsilon(block);
            let length = doubling_length(n1, block).min(n_total - stage);
            let block_options = BrGridOptions { seed: options.seed.wrapping_add(block as u64), ..options.clone() };
            match build_br_grid(structure, evaluation.clone(), epsilon, &block_options) {
                Ok(br) => {
                    plan.notes.push(format!("block {block}: epsilon {epsilon}, {length} stages, {} flag types", br.types()));
                    plan.grids.push(br);
                }
                Err(e) if e.is_budget_exceeded() && block > 1 => {
                    plan.notes.push(format!("schedule truncated before block {block} (epsilon {epsilon}): {e}"));
                    break;
                }
                Err(e) => return Err(e),
            }
            stage += length;
            block += 1;
        }
        Ok(plan)
    }

    /// Stages actually covered by the built blocks.
    pub fn stages(&self) -> u64 {
        (1..=self.grids.len() as u32).map(|k| doubling_length(self.n1, k)).sum::<u64>().min(self.n_total)
    }
}

/// Restarts the `ε_k`-consistent strategy on blocks of geometrically growing
/// length with `ε_k` halving. Every trace row reports the actual-payoff
/// regret over all `(block, type)` cells so far: `cumulative_regret` is
/// `max (|N(cell)|/n)(sup_x W(x, μ̄(cell)) − ρ̄(cell))` and `cell_sum` the
/// sum of the same terms. Block ends are always logged.
pub fn doubling_wrapper(
    structure: &SignalStructure,
    evaluation: Evaluation,
    n1: u64,
    n_total: u64,
    adversary: &mut dyn ActionSource,
    seed: u64,
    options: &BrGridOptions,
    schedule: LogSchedule,
) -> Result<MetricTrace, MonitoringError> {
    let plan = DoublingPlan::build(structure, evaluation, n1, n_total, options)?;
    run_doubling(structure, &plan, adversary, seed, schedule)
}

/// Plays a prebuilt [`DoublingPlan`].
pub fn run_doubling(
    structure: &SignalStructure,
    plan: &DoublingPlan,
    adversary: &mut dyn ActionSource,
    seed: u64,
    schedule: LogSchedule,
) -> Result<MetricTrace, MonitoringError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = vec![("n1", plan.n1.to_string()), ("steps", plan.n_total.to_string())];
    let columns = ["cumulative_regret", "cell_sum", "block", "epsilon", "block_end"].map(String::from).to_vec();
    let mut trace = MetricTrace::new(pm_metadata("doubling", seed, params), columns);
    trace.metadata.notes = plan.notes.clone();
    let moves: Vec<NatureMove> = (0..structure.opponent_actions).map(|j| NatureMove::pure(structure, j)).collect();
    // N(cell)·(sup W − ρ̄) for the cells of finished blocks
    let mut closed: Vec<f64> = Vec::new();
    let mut stage = 0u64;
    for (index, br) in plan.grids.iter().enumerate() {
        let block = index as u32 + 1;
        let epsilon = br.epsilon();
        let length = doubling_length(plan.n1, block).min(plan.n_total - stage);
        let mut state = MonitoringState::new(structure, br)?;
        for local in 1..=length {
            stage += 1;
            let j = opponent(structure, adversary, stage)?;
            let record = state.step(br, &moves[j], &mut rng)?;
            adversary.observe(record.action, j);
            let end = local == length;
            if end || schedule.should_log(stage) {
                let open = block_regret_masses(structure, br, &state)?;
                let n = stage as f64;
                let cells = closed.iter().chain(&open);
                let max = cells.clone().copied().fold(f64::NEG_INFINITY, f64::max) / n;
                let sum = cells.sum::<f64>() / n;
                trace.push_row(stage, vec![max, sum, block as f64, epsilon, if end { 1.0 } else { 0.0 }])?;
                if end {
                    closed.extend(open);
                }
            }
        }
    }
    Ok(trace)
}

/// `|N(l)| (sup_x W(x, μ̄(l)) − ρ̄(l))` for the visited types of one block.
fn block_regret_masses(structure: &SignalStructure, br: &BrGrid, state: &MonitoringState) -> Result<Vec<f64>, MonitoringError> {
    let n = state.stage() as f64;
    Ok(state.actual_payoff_regret_report(structure, br)?.into_iter().flatten().map(|r| r * n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f64; 2] = [1.0, 0.0];
    const B: [f64; 2] = [0.0, 1.0];
    const C: [f64; 2] = [0.5, 0.5];

    fn label_efficient() -> SignalStructure {
        let payoffs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let laws = vec![
            vec![A.to_vec(), B.to_vec()],
            vec![C.to_vec(), C.to_vec()],
            vec![C.to_vec(), C.to_vec()],
        ];
        SignalStructure::new(&payoffs, &laws).unwrap()
    }

    fn pennies_dark() -> SignalStructure {
        let payoffs = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let laws = vec![vec![C.to_vec(), C.to_vec()], vec![C.to_vec(), C.to_vec()]];
        SignalStructure::new(&payoffs, &laws).unwrap()
    }

    fn cc() -> Vec<f64> {
        [C, C].concat()
    }

    #[test]
    fn flags_of_pure_actions() {
        let s = label_efficient();
        assert_eq!(s.flag_of_action(0).as_slice(), &[A, C, C].concat()[..]);
        assert_eq!(s.flag_of_action(1).as_slice(), &[B, C, C].concat()[..]);
        let d = pennies_dark();
        let y = SimplexVector::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(d.flag_of(&y).unwrap().as_slice(), &cc()[..]);
        assert_eq!(d.radius(), 1.0);
    }

    #[test]
    fn flag_validation() {
        assert!(Flag::from_rows(&[vec![0.5, 0.5]]).is_ok());
        assert!(matches!(Flag::from_rows(&[vec![0.5, 0.6]]), Err(MonitoringError::InvalidFlag { row: 0, .. })));
    }

    #[test]
    fn range_projection_examples() {
        let s = label_efficient();
        let mu = s.flag_of(&SimplexVector::new(vec![0.25, 0.75]).unwrap()).unwrap();
        let p = s.range_projection(mu.as_slice()).unwrap();
        assert!(distance(&p.image, mu.as_slice()) < 1e-6);
        let d = pennies_dark();
        let p = d.range_projection(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(distance(&p.image, &cc()) < 1e-12);
    }

    #[test]
    fn worst_case_examples() {
        let d = pennies_dark();
        let half = SimplexVector::uniform(2);
        assert!(worst_case_w(&d, &half, &cc()).unwrap().abs() < 1e-9);
        assert!((worst_case_w(&d, &SimplexVector::vertex(2, 0), &cc()).unwrap() + 1.0).abs() < 1e-9);
        assert!((worst_case_w(&d, &SimplexVector::vertex(2, 1), &cc()).unwrap() + 1.0).abs() < 1e-9);
        assert!((optimistic_o(&d, &SimplexVector::vertex(2, 0), &cc()).unwrap() - 1.0).abs() < 1e-9);
        assert!(optimistic_o(&d, &half, &cc()).unwrap().abs() < 1e-9);

        let s = label_efficient();
        let flag_b = s.flag_of_action(1);
        let g = SimplexVector::vertex(3, 1);
        assert!((worst_case_w(&s, &g, flag_b.as_slice()).unwrap() - 1.0).abs() < 1e-3);
        assert!((optimistic_o(&s, &g, flag_b.as_slice()).unwrap() - 1.0).abs() < 1e-3);
        let exact = Evaluation::WorstCase.evaluate(&s, g.as_slice(), flag_b.as_slice()).unwrap();
        assert!((exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_piece_sup_matches_fine_grid() {
        let grid = crate::simplex::simplex_grid::<f64>(3, 0.002).unwrap();
        let cases = [
            (vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]),
            (vec![1.0, -1.0, 0.3], vec![-1.0, 1.0, 0.2]),
            (vec![0.5, 0.5, 0.5], vec![0.1, 0.9, -0.4]),
        ];
        for (a, b) in cases {
            let section = Section::Lower(vec![a, b]);
            let exact = section.sup_over(&grid);
            let scanned = section.argmax_over(&grid).1;
            assert!(exact >= scanned - 1e-12);
            assert!(exact - scanned <= 2.0 * grid.mesh());
        }
        // pennies in the dark at the uniform flag: max_x min(x1 - x2, x2 - x1) = 0
        let dark = Section::Lower(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!(dark.sup_over(&grid).abs() < 1e-15);
    }

    #[test]
    fn preimage_of_dark_flag_is_everything() {
        let d = pennies_dark();
        let mut v = d.preimage_vertices(&cc()).unwrap();
        v.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(v, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn perturb_examples() {
        let x = perturb(&SimplexVector::vertex(2, 0), 0.5).unwrap();
        assert_eq!(x.as_slice(), &[0.75, 0.25]);
        let u = SimplexVector::<f64>::uniform(3);
        let p = perturb(&u, 0.3).unwrap();
        for (a, b) in p.as_slice().iter().zip(u.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = perturb(&SimplexVector::vertex(4, 2), 1.0).unwrap();
        assert_eq!(p.as_slice(), &[0.25; 4]);
        assert!(perturb(&u, 0.0).is_err());
    }

    #[test]
    fn estimator_examples() {
        let half = SimplexVector::uniform(2);
        assert_eq!(estimator(0, 0, &half, 2).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        let e = SimplexVector::vertex(2, 1);
        assert_eq!(estimator(1, 1, &e, 2).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(estimator(0, 0, &e, 2), Err(MonitoringError::EstimatorUndefined { action: 0 })));
    }

    #[test]
    fn dark_pennies_grid_is_one_ball() {
        let d = pennies_dark();
        let br = build_br_grid(&d, Evaluation::WorstCase, 0.1, &BrGridOptions::default()).unwrap();
        assert_eq!(br.types(), 1);
        for x in br.responses() {
            assert!((x.get(0) - 0.5).abs() <= 0.05);
        }
    }

    #[test]
    fn single_signal_gives_single_type() {
        let payoffs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let laws = vec![vec![vec![1.0], vec![1.0]], vec![vec![1.0], vec![1.0]]];
        let s = SignalStructure::new(&payoffs, &laws).unwrap();
        for mode in [FlagGridMode::Range, FlagGridMode::Product] {
            let options = BrGridOptions { mode, ..BrGridOptions::default() };
            assert_eq!(build_br_grid(&s, Evaluation::WorstCase, 0.2, &options).unwrap().types(), 1);
        }
    }

    #[test]
    fn constant_evaluation_builds() {
        let s = label_efficient();
        let br = build_br_grid(&s, Evaluation::custom("constant", |_, _| 0.5), 0.2, &BrGridOptions::default()).unwrap();
        assert_eq!(br.lipschitz(), 0.0);
        assert_eq!(br.types(), 1);
    }

    #[test]
    fn label_efficient_grid_builds() {
        let s = label_efficient();
        let br = build_br_grid(&s, Evaluation::WorstCase, 0.1, &BrGridOptions::default()).unwrap();
        assert!(br.types() > 10);
        assert!(br.delta() <= 0.1);
        // responses to the pure flags are the matching labels
        let (lg, _) = br.flags().nearest(s.flag_of_action(0).as_slice());
        assert_eq!(br.responses()[lg].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_type_steps_and_reports() {
        let d = pennies_dark();
        let br = build_br_grid(&d, Evaluation::WorstCase, 0.1, &BrGridOptions::default()).unwrap();
        let mut state = MonitoringState::new(&d, &br).unwrap();
        assert!(matches!(state.external_regret_report(&d, &br), Err(MonitoringError::EmptyHistory)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nature = NatureMove::pure(&d, 0);
        let rec = pm_step(&mut state, &br, &nature, &mut rng).unwrap();
        assert_eq!(rec.forecast, 0);
        let internal = state.internal_regret_report(&d, &br, true).unwrap();
        let section = Evaluation::WorstCase.section(&d, &cc()).unwrap();
        let played = SimplexVector::vertex(2, rec.action);
        let expected = section.sup_over(br.response_grid()) - section.value(played.as_slice());
        assert!((internal[0].unwrap() - expected).abs() < 1e-12);
        let ext = state.external_regret_report(&d, &br).unwrap();
        let actual = state.actual_payoff_regret_report(&d, &br).unwrap();
        assert!((ext.regret - actual[0].unwrap()).abs() < 1e-12);
    }

    #[test]
    fn doubling_block_schedule() {
        assert_eq!((1..=3).map(|k| doubling_length(100, k)).collect::<Vec<_>>(), vec![100, 400, 1600]);
        assert_eq!(doubling_epsilon(1), 1.0 / 16.0);
        let d = pennies_dark();
        let mut adv = |_: u64| 0usize;
        let t = doubling_wrapper(&d, Evaluation::WorstCase, 100, 50, &mut adv, 1, &BrGridOptions::default(), LogSchedule::geometric(50))
            .unwrap();
        assert_eq!(t.column("block").unwrap().iter().copied().fold(0.0, f64::max), 1.0);
        assert_eq!(t.last_value("block_end"), Some(1.0));
    }
}
