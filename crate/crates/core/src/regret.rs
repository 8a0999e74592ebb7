//! Internal regret and the strategy that drives it to the negative orthant.
//!
//! The state keeps the cumulative regret matrix `Σ R(i_m, U_m)`; the next
//! mixed action is an invariant probability of its positive part.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::sync::Mutex;

use crate::linalg::{invert, solve_square, Matrix};
use crate::simplex::SimplexVector;
use crate::Real;

const POWER_ITERATIONS: usize = 10_000;
const POWER_DAMPING: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegretError {
    #[error("regret engine needs at least one action")]
    NoActions,
    #[error("outcome bound must be positive and finite, got {0}")]
    InvalidBound(f64),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix not nonnegative: entry ({row}, {col}) is {value}")]
    NotNonnegative { row: usize, col: usize, value: f64 },
    #[error("action {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("outcome has {found} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("outcome out of range: coordinate {index} is {value}, bound {bound}")]
    OutcomeOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("empty history")]
    EmptyHistory,
}

/// A vector of per-action outcomes with a sup-norm cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector<T> {
    values: Vec<T>,
    bound: T,
}

impl<T: Real> OutcomeVector<T> {
    pub fn new(values: Vec<T>, bound: T) -> Result<Self, RegretError> {
        if !(bound > T::zero()) || !bound.is_finite() {
            return Err(RegretError::InvalidBound(bound.to_f64_lossy()));
        }
        check_outcome(&values, bound)?;
        Ok(Self { values, bound })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn bound(&self) -> T {
        self.bound
    }
}

fn check_outcome<T: Real>(values: &[T], bound: T) -> Result<(), RegretError> {
    for (index, &v) in values.iter().enumerate() {
        if !(v.abs() <= bound) {
            return Err(RegretError::OutcomeOutOfRange {
                index,
                value: v.to_f64_lossy(),
                bound: bound.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

/// `R(i, U)`: row `i` holds `U^j - U^i`, every other row is zero.
pub fn instant_regret<T: Real>(i: usize, outcome: &[T]) -> Matrix<T> {
    let c = outcome.len();
    assert!(i < c, "action index out of range");
    let mut r = Matrix::zeros(c, c);
    let base = outcome[i];
    for (j, &u) in outcome.iter().enumerate() {
        r[(i, j)] = u - base;
    }
    r
}

/// A solution of `Σ_j λ_j a_ji = λ_i Σ_j a_ij` with its residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantProbability<T> {
    pub distribution: SimplexVector<T>,
    pub residual: T,
}

/// `max_i |Σ_j λ_j a_ji − λ_i Σ_j a_ij|`.
pub fn invariant_residual<T: Real>(a: &Matrix<T>, lambda: &[T]) -> T {
    let c = a.rows();
    let mut flow = vec![T::zero(); c];
    for j in 0..c {
        let row = a.row(j);
        let w = lambda[j];
        for (f, &v) in flow.iter_mut().zip(row) {
            *f += w * v;
        }
        flow[j] -= w * row.iter().copied().sum::<T>();
    }
    flow.into_iter().fold(T::zero(), |m, f| m.max(f.abs()))
}

fn residual_tolerance<T: Real>(c: usize) -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0 * c as f64))
}

/// Invariant probability of a nonnegative square matrix.
///
/// The off-diagonal mass defines a continuous-time chain. Its closed
/// communicating classes each carry a unique stationary law, found by
/// Gaussian elimination; the result mixes them with equal weights (the zero
/// matrix gives the uniform law). A power-iteration pass refines the answer
/// if elimination leaves a residual above `1e-9·‖A‖∞`.
pub fn invariant_probability<T: Real>(a: &Matrix<T>) -> Result<InvariantProbability<T>, RegretError> {
    validate_square(a)?;
    if let Some(k) = a.as_slice().iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
        let c = a.rows();
        return Err(RegretError::NotNonnegative { row: k / c, col: k % c, value: a.as_slice()[k].to_f64_lossy() });
    }
    Ok(solve_fresh(a))
}

fn validate_square<T: Real>(a: &Matrix<T>) -> Result<(), RegretError> {
    if a.rows() != a.cols() {
        return Err(RegretError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.rows() == 0 {
        return Err(RegretError::NoActions);
    }
    Ok(())
}

fn check_row<T: Real>(a: &Matrix<T>, i: usize) -> Result<(), RegretError> {
    match a.row(i).iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
        Some(j) => Err(RegretError::NotNonnegative { row: i, col: j, value: a[(i, j)].to_f64_lossy() }),
        None => Ok(()),
    }
}

fn off_diagonal_mass<T: Real>(a: &Matrix<T>, i: usize) -> T {
    a.row(i).iter().copied().sum::<T>() - a[(i, i)]
}

fn solve_fresh<T: Real>(a: &Matrix<T>) -> InvariantProbability<T> {
    let c = a.rows();
    let off_mass: Vec<T> = (0..c).map(|i| off_diagonal_mass(a, i)).collect();
    let kappa = off_mass.iter().copied().fold(T::zero(), T::max);
    if kappa == T::zero() {
        return InvariantProbability { distribution: SimplexVector::uniform(c), residual: T::zero() };
    }
    let classes = closed_classes(a);
    let locals: Vec<Vec<T>> =
        classes.iter().map(|class| class_law(a, class, &off_mass, kappa, None)).collect();
    let mut lambda = mix(c, &classes, &locals);
    let tolerance = residual_tolerance::<T>(c) * a.norm_inf();
    let mut residual = invariant_residual(a, &lambda);
    if residual > tolerance {
        let refined = power_iteration(a, kappa, &lambda);
        let refined_residual = invariant_residual(a, &refined);
        if refined_residual < residual {
            lambda = refined;
            residual = refined_residual;
        }
    }
    let distribution = SimplexVector::normalized(lambda).expect("invariant weights are nonnegative with positive sum");
    InvariantProbability { distribution, residual }
}

/// Stationary law of one closed class: the cached inverse if there is one,
/// else elimination, else power iteration.
fn class_law<T: Real>(
    a: &Matrix<T>,
    class: &[usize],
    off_mass: &[T],
    kappa: T,
    cache: Option<&ClassCache<T>>,
) -> Vec<T> {
    if class.len() == 1 {
        return vec![T::one()];
    }
    cache
        .and_then(ClassCache::solution)
        .or_else(|| class_stationary(a, class, off_mass, kappa))
        .unwrap_or_else(|| {
            let full = power_iteration(a, kappa, &uniform_on(a.rows(), class));
            class.iter().map(|&s| full[s]).collect()
        })
}

/// Equal-weight mixture of per-class laws.
fn mix<T: Real>(c: usize, classes: &[Vec<usize>], locals: &[Vec<T>]) -> Vec<T> {
    let mut lambda = vec![T::zero(); c];
    let share = T::one() / T::lit(classes.len() as f64);
    for (class, local) in classes.iter().zip(locals) {
        for (&state, &w) in class.iter().zip(local) {
            lambda[state] = share * w;
        }
    }
    normalize_in_place(&mut lambda);
    lambda
}

/// Incremental solver for [`invariant_probability`].
///
/// Remembers the last matrix, its closed classes and the inverse of each
/// class's balance system. When the next matrix differs in a few rows whose
/// sign pattern is unchanged, the classes stay the same and each changed row
/// patches one column of the inverse (Sherman–Morrison), as happens between
/// consecutive stages of the regret engine. Any answer above the residual
/// tolerance is recomputed from scratch.
#[derive(Clone, Debug)]
pub struct InvariantSolver<T> {
    last: Option<Snapshot<T>>,
}

#[derive(Clone, Debug)]
struct Snapshot<T> {
    matrix: Matrix<T>,
    off_mass: Vec<T>,
    classes: Vec<Vec<usize>>,
    /// Class index and position inside it, for states in closed classes.
    place: Vec<Option<(usize, usize)>>,
    caches: Vec<Option<ClassCache<T>>>,
    result: InvariantProbability<T>,
}

#[derive(Clone, Debug)]
struct ClassCache<T> {
    scale: T,
    /// Column-major balance system.
    columns: Vec<T>,
    inverse: Vec<T>,
    updates: usize,
}

const REFACTOR_EVERY: usize = 4096;

impl<T> Default for InvariantSolver<T> {
    fn default() -> Self {
        Self { last: None }
    }
}

impl<T: Real> ClassCache<T> {
    fn build(a: &Matrix<T>, class: &[usize], off_mass: &[T], scale: T) -> Option<Self> {
        let k = class.len();
        let columns: Vec<T> = (0..k).flat_map(|col| balance_column(a, class, off_mass, scale, col)).collect();
        let mut rows = vec![T::zero(); k * k];
        for col in 0..k {
            for r in 0..k {
                rows[r * k + col] = columns[col * k + r];
            }
        }
        let inverse = invert(rows, k, pivot_tolerance())?;
        Some(Self { scale, columns, inverse, updates: 0 })
    }

    /// Swaps in a new column; false if the patched inverse is unusable.
    fn replace_column(&mut self, col: usize, column: Vec<T>) -> bool {
        let k = column.len();
        let u: Vec<T> = column.iter().zip(&self.columns[col * k..(col + 1) * k]).map(|(&n, &o)| n - o).collect();
        if u.iter().all(|&v| v == T::zero()) {
            return true;
        }
        self.columns[col * k..(col + 1) * k].copy_from_slice(&column);
        self.updates += 1;
        self.updates <= REFACTOR_EVERY && rank_one_column_update(&mut self.inverse, k, col, &u)
    }

    fn solution(&self) -> Option<Vec<T>> {
        let k = self.columns.len().isqrt();
        let mut sol: Vec<T> = (0..k).map(|r| self.inverse[r * k + k - 1]).collect();
        if sol.iter().any(|&v| v < -T::lit(1e-9) || !v.is_finite()) {
            return None;
        }
        normalize_in_place(&mut sol);
        Some(sol)
    }
}

impl<T: Real> InvariantSolver<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &Matrix<T>) -> Result<InvariantProbability<T>, RegretError> {
        validate_square(a)?;
        let c = a.rows();
        let Some(snap) = self.last.as_ref().filter(|s| s.matrix.rows() == c) else {
            for i in 0..c {
                check_row(a, i)?;
            }
            self.rebuild(a.clone());
            return Ok(self.current().clone());
        };
        let changed: Vec<(usize, Vec<T>)> =
            (0..c).filter(|&i| a.row(i) != snap.matrix.row(i)).map(|i| (i, a.row(i).to_vec())).collect();
        self.advance(changed)
    }

    /// Like [`solve`](Self::solve) for a matrix that differs from the last
    /// one only in the given rows; `row(i)` yields the new row `i`.
    pub(crate) fn solve_rows(
        &mut self,
        size: usize,
        rows: &[usize],
        row: impl Fn(usize) -> Vec<T>,
    ) -> Result<InvariantProbability<T>, RegretError> {
        if !self.last.as_ref().is_some_and(|s| s.matrix.rows() == size) {
            let mut a = Matrix::zeros(size, size);
            for i in 0..size {
                a.row_mut(i).copy_from_slice(&row(i));
                check_row(&a, i)?;
            }
            self.rebuild(a);
            return Ok(self.current().clone());
        }
        self.advance(rows.iter().map(|&i| (i, row(i))).collect())
    }

    fn current(&self) -> &InvariantProbability<T> {
        &self.last.as_ref().expect("snapshot present").result
    }

    fn advance(&mut self, changed: Vec<(usize, Vec<T>)>) -> Result<InvariantProbability<T>, RegretError> {
        let snap = self.last.as_mut().expect("snapshot present");
        let mut structure_kept = !snap.classes.is_empty();
        let mut rows = Vec::with_capacity(changed.len());
        for (i, new) in changed {
            if let Some(j) = new.iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
                return Err(RegretError::NotNonnegative { row: i, col: j, value: new[j].to_f64_lossy() });
            }
            let old = snap.matrix.row(i);
            if new.as_slice() == old {
                continue;
            }
            let mut lost = false;
            let mut gained_safely = true;
            for (j, (&n, &o)) in new.iter().zip(old).enumerate() {
                if j == i || (n > T::zero()) == (o > T::zero()) {
                    continue;
                }
                if n > T::zero() {
                    gained_safely &= match (snap.place[i], snap.place[j]) {
                        // inside its own closed class
                        (Some((a, _)), Some((b, _))) => a == b,
                        // from a transient state to one whose standing is
                        // unchanged; an excluded isolated state would become
                        // a closed class
                        (None, None) => off_diagonal_mass(&snap.matrix, j) > T::zero(),
                        (None, Some((b, _))) => snap.classes[b].len() > 1,
                        (Some(_), None) => false,
                    };
                } else {
                    lost = true;
                }
            }
            snap.matrix.row_mut(i).copy_from_slice(&new);
            rows.push(i);
            structure_kept &= gained_safely
                && (!lost || snap.place[i].is_some_and(|(ci, _)| strongly_connected_from(&snap.matrix, &snap.classes[ci], i)));
        }
        if rows.is_empty() {
            return Ok(snap.result.clone());
        }
        let structure_kept = structure_kept || closed_classes(&snap.matrix) == snap.classes;
        if structure_kept {
            if let Some(result) = patch(snap, &rows) {
                return Ok(result);
            }
        }
        let matrix = std::mem::replace(&mut snap.matrix, Matrix::zeros(0, 0));
        self.rebuild(matrix);
        Ok(self.current().clone())
    }

    fn rebuild(&mut self, a: Matrix<T>) {
        let c = a.rows();
        let result = solve_fresh(&a);
        let off_mass: Vec<T> = (0..c).map(|i| off_diagonal_mass(&a, i)).collect();
        let kappa = off_mass.iter().copied().fold(T::zero(), T::max);
        let classes = if kappa == T::zero() { Vec::new() } else { closed_classes(&a) };
        let mut place = vec![None; c];
        for (ci, class) in classes.iter().enumerate() {
            for (pos, &s) in class.iter().enumerate() {
                place[s] = Some((ci, pos));
            }
        }
        let caches = classes
            .iter()
            .map(|class| if class.len() > 1 { ClassCache::build(&a, class, &off_mass, kappa) } else { None })
            .collect();
        self.last = Some(Snapshot { matrix: a, off_mass, classes, place, caches, result });
    }
}

/// Whether every state of `class` is reachable from `start` inside it.
/// Paths into `start` never use its own edges, so after `start` loses
/// edges this alone decides whether the class is still strongly connected.
fn strongly_connected_from<T: Real>(a: &Matrix<T>, class: &[usize], start: usize) -> bool {
    let mut member = vec![false; a.rows()];
    class.iter().for_each(|&s| member[s] = true);
    let mut seen = vec![false; a.rows()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut reached = 1;
    while let Some(v) = stack.pop() {
        for (w, &x) in a.row(v).iter().enumerate() {
            if x > T::zero() && member[w] && !seen[w] {
                seen[w] = true;
                reached += 1;
                if reached == class.len() {
                    return true;
                }
                stack.push(w);
            }
        }
    }
    reached == class.len()
}

/// Same classes as before; refresh the changed rows of the snapshot.
fn patch<T: Real>(snap: &mut Snapshot<T>, changed: &[usize]) -> Option<InvariantProbability<T>> {
    let a = &snap.matrix;
    let c = a.rows();
    for &i in changed {
        snap.off_mass[i] = off_diagonal_mass(a, i);
    }
    let kappa = snap.off_mass.iter().copied().fold(T::zero(), T::max);
    if kappa == T::zero() {
        return None;
    }
    let tolerance = residual_tolerance::<T>(c) * a.norm_inf();
    let mut touched = false;
    for &i in changed {
        let Some((ci, col)) = snap.place[i] else { continue };
        touched = true;
        let class = &snap.classes[ci];
        if class.len() == 1 {
            continue;
        }
        let ok = match &mut snap.caches[ci] {
            Some(cache) => {
                let ratio = kappa / cache.scale;
                ratio <= T::lit(4.0)
                    && ratio >= T::lit(0.25)
                    && cache.replace_column(col, balance_column(a, class, &snap.off_mass, cache.scale, col))
            }
            None => false,
        };
        if !ok {
            snap.caches[ci] = ClassCache::build(a, class, &snap.off_mass, kappa);
        }
    }
    if !touched {
        // Only rows outside closed classes changed: same law, new residual.
        let residual = invariant_residual(a, snap.result.distribution.as_slice());
        snap.result.residual = residual;
        return (residual <= tolerance).then(|| snap.result.clone());
    }
    let locals: Vec<Vec<T>> = snap
        .classes
        .iter()
        .zip(&snap.caches)
        .map(|(class, cache)| class_law(a, class, &snap.off_mass, kappa, cache.as_ref()))
        .collect();
    let lambda = mix(c, &snap.classes, &locals);
    let residual = invariant_residual(a, &lambda);
    if residual > tolerance {
        return None;
    }
    let distribution = SimplexVector::normalized(lambda).ok()?;
    snap.result = InvariantProbability { distribution, residual };
    Some(snap.result.clone())
}

/// Replaces `M⁻¹` by `(M + u e_colᵀ)⁻¹`. Returns false, leaving the inverse
/// unusable, when the update is too close to singular.
fn rank_one_column_update<T: Real>(inverse: &mut [T], k: usize, col: usize, u: &[T]) -> bool {
    let w: Vec<T> = (0..k).map(|i| inverse[i * k..(i + 1) * k].iter().zip(u).map(|(&m, &x)| m * x).sum()).collect();
    let denom = T::one() + w[col];
    let pivot: Vec<T> = inverse[col * k..(col + 1) * k].to_vec();
    // A finite w and pivot row keep the whole update finite.
    if !(denom.abs() > T::lit(1e-8)) || !w.iter().chain(&pivot).all(|v| v.is_finite()) {
        return false;
    }
    for (i, &wi) in w.iter().enumerate() {
        let f = wi / denom;
        if f == T::zero() {
            continue;
        }
        for (x, &p) in inverse[i * k..(i + 1) * k].iter_mut().zip(&pivot) {
            *x -= f * p;
        }
    }
    true
}

fn pivot_tolerance<T: Real>() -> T {
    T::lit(1e-13).max(T::epsilon() * T::lit(8.0))
}

/// Column `col` of [`balance_system`]: the coefficients of state
/// `class[col]`.
fn balance_column<T: Real>(a: &Matrix<T>, class: &[usize], off_mass: &[T], scale: T, col: usize) -> Vec<T> {
    let k = class.len();
    let j = class[col];
    let row = a.row(j);
    let inv = T::one() / scale;
    let mut column: Vec<T> = class.iter().map(|&i| row[i] * inv).collect();
    column[col] = -off_mass[j] * inv;
    column[k - 1] = T::one();
    column
}

/// Balance equations `(λQ)_i = 0` of the generator `Q = (A − diag)/scale`
/// restricted to a closed class, with the last one replaced by `Σλ = 1`.
/// Row `r` of the result is equation `r`.
fn balance_system<T: Real>(a: &Matrix<T>, class: &[usize], off_mass: &[T], scale: T) -> Vec<T> {
    let k = class.len();
    let mut system = vec![T::zero(); k * k];
    // A closed class has no mass leaving it, so off_mass is its internal
    // out-rate.
    let inv = T::one() / scale;
    for (col, &j) in class.iter().enumerate() {
        let row = a.row(j);
        for (r, &i) in class.iter().enumerate() {
            system[r * k + col] = row[i] * inv;
        }
        system[col * k + col] = -off_mass[j] * inv;
    }
    for col in 0..k {
        system[(k - 1) * k + col] = T::one();
    }
    system
}

fn uniform_on<T: Real>(c: usize, class: &[usize]) -> Vec<T> {
    let mut v = vec![T::zero(); c];
    let w = T::one() / T::lit(class.len() as f64);
    for &s in class {
        v[s] = w;
    }
    v
}

fn normalize_in_place<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    let total: T = v.iter().copied().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

/// Stationary law of the chain restricted to one closed class.
fn class_stationary<T: Real>(a: &Matrix<T>, class: &[usize], off_mass: &[T], kappa: T) -> Option<Vec<T>> {
    let k = class.len();
    if k == 1 {
        return Some(vec![T::one()]);
    }
    let system = balance_system(a, class, off_mass, kappa);
    let mut rhs = vec![T::zero(); k];
    rhs[k - 1] = T::one();
    let mut sol = solve_square(system, rhs, k, pivot_tolerance())?;
    if sol.iter().any(|&v| v < -T::lit(1e-9) || !v.is_finite()) {
        return None;
    }
    normalize_in_place(&mut sol);
    Some(sol)
}

/// Lazy power iteration `λ ← λ(d·M + (1-d)·I)` on the uniformized chain.
fn power_iteration<T: Real>(a: &Matrix<T>, kappa: T, start: &[T]) -> Vec<T> {
    let c = a.rows();
    let damping = T::lit(POWER_DAMPING);
    let mut lambda = start.to_vec();
    let mut next = vec![T::zero(); c];
    let inv = T::one() / kappa;
    // Uniformized transition matrix, lazily damped.
    let mut step = Matrix::zeros(c, c);
    for i in 0..c {
        let row = a.row(i);
        let out = (row.iter().copied().sum::<T>() - row[i]) * inv;
        for (j, s) in step.row_mut(i).iter_mut().enumerate() {
            *s = if j == i { damping * (T::one() - out) + (T::one() - damping) } else { damping * row[j] * inv };
        }
    }
    for _ in 0..POWER_ITERATIONS {
        next.iter_mut().for_each(|v| *v = T::zero());
        for (j, &w) in lambda.iter().enumerate() {
            for (n, &s) in next.iter_mut().zip(step.row(j)) {
                *n += w * s;
            }
        }
        std::mem::swap(&mut lambda, &mut next);
    }
    normalize_in_place(&mut lambda);
    lambda
}

/// Strongly connected components of the graph `i → j` iff `a_ij > 0`, `i ≠ j`,
/// keeping only those with no edge leaving them.
fn closed_classes<T: Real>(a: &Matrix<T>) -> Vec<Vec<usize>> {
    let c = a.rows();
    let mut graph = Graph { offsets: Vec::with_capacity(c + 1), targets: Vec::new() };
    graph.offsets.push(0);
    for i in 0..c {
        graph.targets.extend(a.row(i).iter().enumerate().filter(|&(j, &v)| j != i && v > T::zero()).map(|(j, _)| j));
        graph.offsets.push(graph.targets.len());
    }
    let component = tarjan(&graph);
    let count = component.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); count];
    let mut closed = vec![true; count];
    for i in 0..c {
        members[component[i]].push(i);
        if graph.successors(i).iter().any(|&j| component[j] != component[i]) {
            closed[component[i]] = false;
        }
    }
    let classes: Vec<Vec<usize>> = members.into_iter().zip(closed).filter_map(|(m, ok)| ok.then_some(m)).collect();
    // A type nobody regrets moving to and that regrets nothing carries no
    // information; giving it weight would let never-used types absorb mass.
    let mut reached = vec![false; c];
    graph.targets.iter().for_each(|&j| reached[j] = true);
    let informative: Vec<Vec<usize>> =
        classes.iter().filter(|m| m.len() > 1 || reached[m[0]]).cloned().collect();
    if informative.is_empty() {
        classes
    } else {
        informative
    }
}

struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Graph {
    fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    fn successors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

fn tarjan(graph: &Graph) -> Vec<usize> {
    struct Walk<'a> {
        graph: &'a Graph,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        component: Vec<usize>,
        next_index: usize,
        next_component: usize,
    }

    impl Walk<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next_index);
            self.low[v] = self.next_index;
            self.next_index += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            let graph = self.graph;
            for &w in graph.successors(v) {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(iw) if self.on_stack[w] => self.low[v] = self.low[v].min(iw),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                while let Some(w) = self.stack.pop() {
                    self.on_stack[w] = false;
                    self.component[w] = self.next_component;
                    if w == v {
                        break;
                    }
                }
                self.next_component += 1;
            }
        }
    }

    let n = graph.len();
    let mut walk = Walk {
        graph,
        index: vec![None; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        component: vec![0; n],
        next_index: 0,
        next_component: 0,
    };
    for v in 0..n {
        if walk.index[v].is_none() {
            walk.visit(v);
        }
    }
    walk.component
}

/// Running internal-regret bookkeeping for `c` actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretState<T> {
    actions: usize,
    stage: u64,
    bound: T,
    cumulative: Matrix<T>,
    counts: Vec<u64>,
    outcome_sums: Matrix<T>,
    #[serde(skip, default = "SolverSlot::default")]
    solver: SolverSlot<T>,
}

/// Solver cache carried by the engine, with the rows of the regret matrix
/// changed since it last ran; it never affects equality.
#[derive(Debug)]
struct SolverSlot<T>(Mutex<SolverState<T>>);

#[derive(Clone, Debug)]
struct SolverState<T> {
    solver: InvariantSolver<T>,
    dirty: Vec<usize>,
}

impl<T> Default for SolverState<T> {
    fn default() -> Self {
        Self { solver: InvariantSolver::default(), dirty: Vec::new() }
    }
}

impl<T> Default for SolverSlot<T> {
    fn default() -> Self {
        Self(Mutex::new(SolverState::default()))
    }
}

impl<T: Clone> Clone for SolverSlot<T> {
    fn clone(&self) -> Self {
        let inner = self.0.lock().map(|s| s.clone()).unwrap_or_default();
        Self(Mutex::new(inner))
    }
}

impl<T> PartialEq for SolverSlot<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<T: Real> RegretState<T> {
    pub fn new(actions: usize, bound: T) -> Result<Self, RegretError> {
        if actions == 0 {
            return Err(RegretError::NoActions);
        }
        if !(bound > T::zero()) || !bound.is_finite() {
            return Err(RegretError::InvalidBound(bound.to_f64_lossy()));
        }
        Ok(Self {
            actions,
            stage: 0,
            bound,
            cumulative: Matrix::zeros(actions, actions),
            counts: vec![0; actions],
            outcome_sums: Matrix::zeros(actions, actions),
            solver: SolverSlot::default(),
        })
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn cumulative_regret(&self) -> &Matrix<T> {
        &self.cumulative
    }

    /// Row `i` is `Σ_{m ∈ N_n(i)} U_m`.
    pub fn outcome_sums(&self) -> &Matrix<T> {
        &self.outcome_sums
    }

    pub fn average_regret(&self) -> Result<Matrix<T>, RegretError> {
        if self.stage == 0 {
            return Err(RegretError::EmptyHistory);
        }
        Ok(self.cumulative.scale(T::one() / T::lit(self.stage as f64)))
    }

    /// Invariant probability of the positive part of the average regret;
    /// uniform before the first stage.
    pub fn next_strategy(&self) -> SimplexVector<T> {
        if self.stage == 0 {
            return SimplexVector::uniform(self.actions);
        }
        // R̄⁺ and Σ R⁺ share their invariant probabilities.
        let mut slot = self.solver.0.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        let SolverState { solver, dirty } = &mut *slot;
        let positive_row = |i: usize| self.cumulative.row(i).iter().map(|&v| v.max(T::zero())).collect();
        let result = solver.solve_rows(self.actions, dirty, positive_row);
        dirty.clear();
        result.expect("positive part is nonnegative").distribution
    }

    pub fn update(&mut self, action: usize, outcome: &OutcomeVector<T>) -> Result<(), RegretError> {
        self.update_values(action, outcome.values())
    }

    /// Like [`update`](Self::update) but validates the raw values against
    /// the state's own bound.
    pub fn update_values(&mut self, action: usize, outcome: &[T]) -> Result<(), RegretError> {
        if action >= self.actions {
            return Err(RegretError::ActionOutOfRange { action, actions: self.actions });
        }
        if outcome.len() != self.actions {
            return Err(RegretError::DimensionMismatch { expected: self.actions, found: outcome.len() });
        }
        check_outcome(outcome, self.bound)?;
        let base = outcome[action];
        let cum = self.cumulative.row_mut(action);
        for (r, &u) in cum.iter_mut().zip(outcome) {
            *r += u - base;
        }
        for (s, &u) in self.outcome_sums.row_mut(action).iter_mut().zip(outcome) {
            *s += u;
        }
        self.counts[action] += 1;
        let slot = self.solver.0.get_mut().unwrap_or_else(|poisoned| poisoned.into_inner());
        if slot.dirty.len() >= self.actions {
            *slot = SolverState::default();
        } else {
            slot.dirty.push(action);
        }
        self.stage += 1;
        Ok(())
    }

    /// `max_{i,j} (R̄_n^{(i,j)})⁺`.
    pub fn max_positive_regret(&self) -> Result<T, RegretError> {
        if self.stage == 0 {
            return Err(RegretError::EmptyHistory);
        }
        Ok(self.cumulative.max_entry().max(T::zero()) / T::lit(self.stage as f64))
    }
}

pub fn engine_next<T: Real>(state: &RegretState<T>) -> SimplexVector<T> {
    state.next_strategy()
}

pub fn engine_update<T: Real>(
    state: &RegretState<T>,
    action: usize,
    outcome: &OutcomeVector<T>,
) -> Result<RegretState<T>, RegretError> {
    let mut next = state.clone();
    next.update(action, outcome)?;
    Ok(next)
}
