//! Approachability of convex targets by vector payoffs.
//!
//! Three strategies are provided: Blackwell's projection strategy, the
//! strategy that best-responds to calibrated forecasts of the opponent, and
//! the reduction of a polyhedral target to the negative orthant of an
//! auxiliary game.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{CalibrationError, Calibrator};
use crate::play::ActionSource;
use crate::simplex::{distance, dot, norm, simplex_grid, ConvexTarget, FiniteGrid, Halfspace, SimplexError, SimplexVector};
use crate::trace::{LogSchedule, MetricTrace, TraceError, TraceMetadata};

/// Self-play rounds of the multiplicative-weights game solver.
pub const SELF_PLAY_ROUNDS: usize = 10_000;
/// Relative tolerance of the separation certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-3;
/// Distance under which a point counts as inside the target.
pub const INSIDE_TOLERANCE: f64 = 1e-9;

const CERTIFICATE_CHECK_EVERY: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproachError {
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("separation failed: column {column} violates the certificate by {violation} (tolerance {tolerance})")]
    SeparationFailed { column: usize, violation: f64, tolerance: f64 },
    #[error("target is excludable: forecast {witness:?} keeps every response at distance {distance}")]
    Excludable { witness: Vec<f64>, forecast: usize, distance: f64 },
    #[error("best response {forecast} sits at distance {distance}, above {threshold}")]
    TableNotCertified { forecast: usize, distance: f64, threshold: f64 },
    #[error("halfspace list is empty")]
    NoHalfspaces,
    #[error("opponent played action {action}, game has {actions}")]
    OpponentOutOfRange { action: usize, actions: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Finite game with payoffs `ρ(i, j) ∈ R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorPayoffGame {
    rows: usize,
    cols: usize,
    dim: usize,
    payoffs: Vec<f64>,
    radius_sq: f64,
}

impl VectorPayoffGame {
    /// `payoffs[(i * cols + j) * dim + k]` is coordinate `k` of `ρ(i, j)`.
    pub fn new(rows: usize, cols: usize, dim: usize, payoffs: Vec<f64>) -> Result<Self, ApproachError> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(ApproachError::InvalidGame("every dimension must be positive".into()));
        }
        if payoffs.len() != rows * cols * dim {
            return Err(ApproachError::InvalidGame(format!(
                "expected {} payoff entries, got {}",
                rows * cols * dim,
                payoffs.len()
            )));
        }
        if payoffs.iter().any(|v| !v.is_finite()) {
            return Err(ApproachError::InvalidGame("payoffs must be finite".into()));
        }
        let radius_sq = payoffs.chunks(dim).map(|p| dot(p, p)).fold(0.0, f64::max);
        Ok(Self { rows, cols, dim, payoffs, radius_sq })
    }

    /// Scalar game from a matrix of payoffs indexed `[i][j]`.
    pub fn scalar(matrix: &[Vec<f64>]) -> Result<Self, ApproachError> {
        let cols = matrix.first().map_or(0, Vec::len);
        if matrix.iter().any(|r| r.len() != cols) {
            return Err(ApproachError::InvalidGame("ragged payoff matrix".into()));
        }
        Self::new(matrix.len(), cols, 1, matrix.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `B = sup ‖ρ(i, j)‖²`.
    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn payoff(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.cols + j) * self.dim;
        &self.payoffs[start..start + self.dim]
    }

    /// `ρ(x, j)` for a mixed own action against a pure opponent action.
    pub fn payoff_against(&self, x: &[f64], j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, &p) in out.iter_mut().zip(self.payoff(i, j)) {
                    *o += xi * p;
                }
            }
        }
        out
    }

    /// `ρ(i, y)` for every own action `i`.
    pub fn payoffs_given(&self, y: &[f64]) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| {
                let mut out = vec![0.0; self.dim];
                for (j, &yj) in y.iter().enumerate() {
                    for (o, &p) in out.iter_mut().zip(self.payoff(i, j)) {
                        *o += yj * p;
                    }
                }
                out
            })
            .collect()
    }

    pub fn expected_payoff(&self, x: &SimplexVector<f64>, y: &SimplexVector<f64>) -> Result<Vec<f64>, ApproachError> {
        if x.dim() != self.rows {
            return Err(ApproachError::DimensionMismatch { expected: self.rows, found: x.dim() });
        }
        if y.dim() != self.cols {
            return Err(ApproachError::DimensionMismatch { expected: self.cols, found: y.dim() });
        }
        let mut out = vec![0.0; self.dim];
        for (j, &yj) in y.as_slice().iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.payoff_against(x.as_slice(), j)) {
                *o += yj * v;
            }
        }
        Ok(out)
    }
}

/// Outcome of one Blackwell step.
#[derive(Clone, Debug)]
pub struct BlackwellStep {
    pub strategy: SimplexVector<f64>,
    pub projection: Vec<f64>,
    pub distance: f64,
    /// `max_j ⟨ρ(x, δ_j) − p, z − p⟩`; zero when `z` is in the target.
    pub certificate: f64,
    pub tolerance: f64,
    pub rounds: usize,
}

/// Mixed action keeping every expected payoff on the far side of the
/// supporting hyperplane at the projection of `z`.
///
/// The zero-sum game `g(i, j) = ⟨ρ(i, j) − p, z − p⟩` is solved by
/// multiplicative-weights self-play; the averaged row strategy is returned
/// once it certifies `max_j g(x, j) ≤ 1e-3·‖z − p‖·√B`.
pub fn blackwell_step(game: &VectorPayoffGame, target: &ConvexTarget<f64>, z: &[f64]) -> Result<BlackwellStep, ApproachError> {
    if z.len() != game.dim {
        return Err(ApproachError::DimensionMismatch { expected: game.dim, found: z.len() });
    }
    let p = target.project(z)?;
    let dist = distance(z, &p);
    if dist <= INSIDE_TOLERANCE {
        return Ok(BlackwellStep {
            strategy: SimplexVector::uniform(game.rows),
            projection: p,
            distance: dist,
            certificate: 0.0,
            tolerance: 0.0,
            rounds: 0,
        });
    }
    let normal: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
    let (rows, cols) = (game.rows, game.cols);
    let g: Vec<f64> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| {
            let r = game.payoff(i, j);
            r.iter().zip(&p).zip(&normal).map(|((ri, pi), ni)| (ri - pi) * ni).sum()
        })
        .collect();
    let tolerance = CERTIFICATE_TOLERANCE * dist * game.radius_sq.sqrt();
    let (strategy, certificate, column, rounds) = solve_row_minimizer(&g, rows, cols, tolerance);
    if certificate > tolerance {
        return Err(ApproachError::SeparationFailed { column, violation: certificate, tolerance });
    }
    Ok(BlackwellStep {
        strategy: SimplexVector::normalized(strategy)?,
        projection: p,
        distance: dist,
        certificate,
        tolerance,
        rounds,
    })
}

/// Worst column value of a row strategy: `(max_j Σ_i x_i g_ij, argmax)`.
fn worst_column(g: &[f64], x: &[f64], rows: usize, cols: usize) -> (f64, usize) {
    (0..cols)
        .map(|j| ((0..rows).map(|i| x[i] * g[i * cols + j]).sum::<f64>(), j))
        .fold((f64::NEG_INFINITY, 0), |best, cur| if cur.0 > best.0 { cur } else { best })
}

fn softmax_into(scores: &[f64], scale: f64, out: &mut [f64]) {
    let top = scores.iter().map(|s| s * scale).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s * scale - top).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Multiplicative-weights self-play on a row-minimizing matrix game.
/// Returns the averaged row strategy, its worst column value and index, and
/// the number of rounds used.
fn solve_row_minimizer(g: &[f64], rows: usize, cols: usize, tolerance: f64) -> (Vec<f64>, f64, usize, usize) {
    let uniform = vec![1.0 / rows as f64; rows];
    let (value, column) = worst_column(g, &uniform, rows, cols);
    if value <= tolerance || rows == 1 {
        return (uniform, value, column, 1);
    }
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let row_rate = (8.0 * (rows as f64).ln()).sqrt();
    let col_rate = (8.0 * (cols.max(2) as f64).ln()).sqrt();

    let mut row_loss = vec![0.0; rows];
    let mut col_gain = vec![0.0; cols];
    let mut x = uniform.clone();
    let mut y = vec![1.0 / cols as f64; cols];
    let mut x_sum = vec![0.0; rows];
    let mut best = (uniform, value, column);
    for t in 1..=SELF_PLAY_ROUNDS {
        let eta = 1.0 / (t as f64).sqrt();
        softmax_into(&row_loss, -row_rate * eta, &mut x);
        if cols > 1 {
            softmax_into(&col_gain, col_rate * eta, &mut y);
        }
        for i in 0..rows {
            x_sum[i] += x[i];
            row_loss[i] += (0..cols).map(|j| y[j] * (g[i * cols + j] - lo) / range).sum::<f64>();
        }
        for j in 0..cols {
            col_gain[j] += (0..rows).map(|i| x[i] * (g[i * cols + j] - lo) / range).sum::<f64>();
        }
        if t % CERTIFICATE_CHECK_EVERY == 0 || t == SELF_PLAY_ROUNDS {
            let avg: Vec<f64> = x_sum.iter().map(|s| s / t as f64).collect();
            let (value, column) = worst_column(g, &avg, rows, cols);
            if value < best.1 {
                best = (avg, value, column);
            }
            if best.1 <= tolerance {
                return (best.0, best.1, best.2, t);
            }
        }
    }
    (best.0, best.1, best.2, SELF_PLAY_ROUNDS)
}

fn metadata(scenario: &str, seed: u64, parameters: &[(&str, String)]) -> TraceMetadata {
    TraceMetadata {
        scenario: scenario.to_string(),
        seed,
        parameters: parameters.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        notes: Vec::new(),
    }
}

fn checked_opponent(game: &VectorPayoffGame, j: usize) -> Result<usize, ApproachError> {
    if j >= game.cols {
        return Err(ApproachError::OpponentOutOfRange { action: j, actions: game.cols });
    }
    Ok(j)
}

fn check_stages(n: u64) -> Result<(), ApproachError> {
    if n == 0 {
        return Err(ApproachError::InvalidParameter("stage count must be at least 1".into()));
    }
    Ok(())
}

/// Plays Blackwell's strategy for `n` stages and records `d(ρ̄_n, C)`.
pub fn run_blackwell(
    game: &VectorPayoffGame,
    target: &ConvexTarget<f64>,
    adversary: &mut dyn ActionSource,
    n: u64,
    seed: u64,
    schedule: LogSchedule,
) -> Result<MetricTrace, ApproachError> {
    check_stages(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = ["distance", "distance_sq", "certificate"].map(String::from).to_vec();
    let mut trace = MetricTrace::new(metadata("approach-blackwell", seed, &[("steps", n.to_string())]), columns);
    let mut sum = vec![0.0; game.dim];
    let mut average = vec![0.0; game.dim];
    for stage in 1..=n {
        let step = blackwell_step(game, target, &average)?;
        let i = step.strategy.sample(&mut rng);
        let j = checked_opponent(game, adversary.next_action(stage))?;
        adversary.observe(i, j);
        for (s, &v) in sum.iter_mut().zip(game.payoff(i, j)) {
            *s += v;
        }
        for (a, &s) in average.iter_mut().zip(&sum) {
            *a = s / stage as f64;
        }
        if schedule.should_log(stage) {
            let d = target.distance(&average)?;
            trace.push_row(stage, vec![d, d * d, step.certificate])?;
        }
    }
    Ok(trace)
}

/// Forecast grid over `Δ(J)` with a certified response for every point.
#[derive(Clone, Debug)]
pub struct BestResponseTable {
    forecasts: FiniteGrid<f64>,
    responses: Vec<SimplexVector<f64>>,
    distances: Vec<f64>,
    epsilon: f64,
    target: ConvexTarget<f64>,
}

impl BestResponseTable {
    pub fn forecasts(&self) -> &FiniteGrid<f64> {
        &self.forecasts
    }

    pub fn responses(&self) -> &[SimplexVector<f64>] {
        &self.responses
    }

    /// `d(ρ(x(l), y(l)), C)` as measured at build time.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target(&self) -> &ConvexTarget<f64> {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Recomputes every `d(ρ(x(l), y(l)), C)` and checks it against `ε/2`.
    pub fn verify(&self, game: &VectorPayoffGame) -> Result<(), ApproachError> {
        let threshold = self.epsilon / 2.0;
        for (l, x) in self.responses.iter().enumerate() {
            let y = SimplexVector::new(self.forecasts.point(l).to_vec())?;
            let d = self.target.distance(&game.expected_payoff(x, &y)?)?;
            if d > threshold + 1e-12 {
                return Err(ApproachError::TableNotCertified { forecast: l, distance: d, threshold });
            }
        }
        Ok(())
    }
}

/// For every forecast `y(l)` in a grid of `Δ(J)`, searches a grid of `Δ(I)`
/// for the response closest to the target. If some forecast leaves every
/// response farther than `ε/2`, the forecast with the largest such distance
/// is returned as an excludability witness.
pub fn build_best_response_table(
    game: &VectorPayoffGame,
    target: &ConvexTarget<f64>,
    epsilon: f64,
    forecast_mesh: f64,
    response_mesh: f64,
) -> Result<BestResponseTable, ApproachError> {
    if !(epsilon > 0.0) {
        return Err(ApproachError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let forecasts = simplex_grid::<f64>(game.cols, forecast_mesh)?;
    let responses = simplex_grid::<f64>(game.rows, response_mesh)?;
    let best: Vec<Result<(usize, f64), SimplexError>> = forecasts
        .points()
        .par_iter()
        .map(|y| {
            let per_action = game.payoffs_given(y);
            let mut best = (0, f64::INFINITY);
            for (k, x) in responses.points().iter().enumerate() {
                let mut payoff = vec![0.0; game.dim];
                for (xi, r) in x.iter().zip(&per_action) {
                    for (p, &v) in payoff.iter_mut().zip(r) {
                        *p += xi * v;
                    }
                }
                let d = target.distance(&payoff)?;
                if d < best.1 {
                    best = (k, d);
                }
            }
            Ok(best)
        })
        .collect();
    let best = best.into_iter().collect::<Result<Vec<_>, _>>()?;
    let threshold = epsilon / 2.0;
    let (worst, worst_distance) =
        best.iter().enumerate().map(|(l, b)| (l, b.1)).fold((0, f64::NEG_INFINITY), |a, c| if c.1 > a.1 { c } else { a });
    if worst_distance > threshold {
        return Err(ApproachError::Excludable {
            witness: forecasts.point(worst).to_vec(),
            forecast: worst,
            distance: worst_distance,
        });
    }
    let responses_chosen = best
        .iter()
        .map(|&(k, _)| SimplexVector::new(responses.point(k).to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BestResponseTable {
        forecasts,
        responses: responses_chosen,
        distances: best.iter().map(|b| b.1).collect(),
        epsilon,
        target: target.clone(),
    })
}

/// Forecasts the opponent with a calibrated forecaster over the table's grid
/// and plays the tabulated response.
///
/// Logged columns: `distance`, `distance_to_neighborhood` (to the closed
/// `ε`-neighbourhood of the target), `decomposition_bound`
/// (`Σ_l (|N_n(l)|/n) d(ρ̄_n(l), C)`), `calibration_score`, then `freq_l`
/// and `forecast_error_l` for every forecast `l`.
pub fn run_calibrated_approach(
    game: &VectorPayoffGame,
    table: &BestResponseTable,
    adversary: &mut dyn ActionSource,
    n: u64,
    seed: u64,
    schedule: LogSchedule,
) -> Result<MetricTrace, ApproachError> {
    check_stages(n)?;
    if table.forecasts.dim() != game.cols || table.responses.iter().any(|x| x.dim() != game.rows) {
        return Err(ApproachError::DimensionMismatch { expected: game.cols, found: table.forecasts.dim() });
    }
    let types = table.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calibrator = Calibrator::new(table.forecasts.clone(), 1.0)?;
    let mut columns: Vec<String> =
        ["distance", "distance_to_neighborhood", "decomposition_bound", "calibration_score"].map(String::from).to_vec();
    columns.extend((0..types).map(|l| format!("freq_{l}")));
    columns.extend((0..types).map(|l| format!("forecast_error_{l}")));
    let params = [
        ("steps", n.to_string()),
        ("epsilon", table.epsilon.to_string()),
        ("forecast_points", types.to_string()),
    ];
    let mut trace = MetricTrace::new(metadata("approach-calibrated", seed, &params), columns);

    let dim = game.dim;
    let mut payoff_sum = vec![0.0; dim];
    let mut type_payoff_sums = vec![vec![0.0; dim]; types];
    let mut outcome = vec![0.0; game.cols];
    for stage in 1..=n {
        let l = calibrator.forecast(&mut rng)?;
        let i = table.responses[l].sample(&mut rng);
        let j = checked_opponent(game, adversary.next_action(stage))?;
        adversary.observe(i, j);
        outcome[j] = 1.0;
        calibrator.observe(&outcome)?;
        outcome[j] = 0.0;
        let r = game.payoff(i, j);
        for k in 0..dim {
            payoff_sum[k] += r[k];
            type_payoff_sums[l][k] += r[k];
        }
        if schedule.should_log(stage) {
            let nf = stage as f64;
            let average: Vec<f64> = payoff_sum.iter().map(|s| s / nf).collect();
            let d = table.target.distance(&average)?;
            let counts = calibrator.counts();
            let mut bound = 0.0;
            let mut errors = vec![0.0; types];
            for t in 0..types {
                if counts[t] == 0 {
                    continue;
                }
                let c = counts[t] as f64;
                let type_avg: Vec<f64> = type_payoff_sums[t].iter().map(|s| s / c).collect();
                bound += c / nf * table.target.distance(&type_avg)?;
                let forecast_avg = calibrator.type_average(t).expect("visited type");
                errors[t] = distance(&forecast_avg, table.forecasts.point(t));
            }
            let mut row = vec![d, (d - table.epsilon).max(0.0), bound, calibrator.calibration_score()?];
            row.extend(counts.iter().map(|&c| c as f64 / nf));
            row.extend(errors);
            trace.push_row(stage, row)?;
        }
    }
    Ok(trace)
}

/// Auxiliary game `ρ̂(i, j) = (⟨ρ(i, j), c_l⟩ − b_l)_l`. Approaching the
/// negative orthant in it approaches `∩_l H_l` in the original game.
pub fn halfspace_reduction(game: &VectorPayoffGame, halfspaces: &[Halfspace<f64>]) -> Result<VectorPayoffGame, ApproachError> {
    if halfspaces.is_empty() {
        return Err(ApproachError::NoHalfspaces);
    }
    for h in halfspaces {
        if h.normal.len() != game.dim {
            return Err(ApproachError::DimensionMismatch { expected: game.dim, found: h.normal.len() });
        }
    }
    let mut payoffs = Vec::with_capacity(game.rows * game.cols * halfspaces.len());
    for i in 0..game.rows {
        for j in 0..game.cols {
            let r = game.payoff(i, j);
            payoffs.extend(halfspaces.iter().map(|h| dot(r, &h.normal) - h.offset));
        }
    }
    VectorPayoffGame::new(game.rows, game.cols, halfspaces.len(), payoffs)
}

/// Blackwell's strategy on the halfspace reduction, with distances measured
/// in both games: `aux_distance` to the negative orthant and `distance` to
/// `∩_l H_l` in the original payoff space.
pub fn run_halfspace_approach(
    game: &VectorPayoffGame,
    halfspaces: &[Halfspace<f64>],
    adversary: &mut dyn ActionSource,
    n: u64,
    seed: u64,
    schedule: LogSchedule,
) -> Result<MetricTrace, ApproachError> {
    check_stages(n)?;
    let aux = halfspace_reduction(game, halfspaces)?;
    let orthant = ConvexTarget::negative_orthant(aux.dim);
    let original = ConvexTarget::halfspaces(halfspaces.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = ["distance", "aux_distance", "certificate"].map(String::from).to_vec();
    let params = [("steps", n.to_string()), ("halfspaces", halfspaces.len().to_string())];
    let mut trace = MetricTrace::new(metadata("halfspace", seed, &params), columns);
    let mut aux_sum = vec![0.0; aux.dim];
    let mut aux_avg = vec![0.0; aux.dim];
    let mut sum = vec![0.0; game.dim];
    for stage in 1..=n {
        let step = blackwell_step(&aux, &orthant, &aux_avg)?;
        let i = step.strategy.sample(&mut rng);
        let j = checked_opponent(game, adversary.next_action(stage))?;
        adversary.observe(i, j);
        for (s, &v) in aux_sum.iter_mut().zip(aux.payoff(i, j)) {
            *s += v;
        }
        for (s, &v) in sum.iter_mut().zip(game.payoff(i, j)) {
            *s += v;
        }
        for (a, &s) in aux_avg.iter_mut().zip(&aux_sum) {
            *a = s / stage as f64;
        }
        if schedule.should_log(stage) {
            let average: Vec<f64> = sum.iter().map(|s| s / stage as f64).collect();
            let d = original.distance(&average)?;
            let aux_d = norm(&aux_avg.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
            trace.push_row(stage, vec![d, aux_d, step.certificate])?;
        }
    }
    Ok(trace)
}

/// Box `{w : |w_k| ≤ radius}` around a point, as `2d` halfspaces.
pub fn box_halfspaces(center: &[f64], radius: f64) -> Vec<Halfspace<f64>> {
    let d = center.len();
    let mut out = Vec::with_capacity(2 * d);
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut normal = vec![0.0; d];
            normal[k] = sign;
            out.push(Halfspace { normal, offset: sign * center[k] + radius });
        }
    }
    out
}
