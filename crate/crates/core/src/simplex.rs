//! Probability simplices and convex targets.
//!
//! Everything here is a pure function of its inputs. Grids are enumerated
//! from integer compositions, convex targets are either intersections of
//! halfspaces (projected with Dykstra's cyclic scheme) or arbitrary projection
//! oracles, and linear images of a simplex are projected onto with an
//! away-step Frank–Wolfe method.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Default cap on the number of points a grid may contain.
pub const DEFAULT_GRID_BUDGET: usize = 1_000_000;

/// Frank–Wolfe stopping tolerance on the duality gap.
pub const FRANK_WOLFE_GAP: f64 = 1e-8;
pub const FRANK_WOLFE_MAX_ITERATIONS: usize = 10_000;

const DYKSTRA_MAX_CYCLES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("simplex vector must have at least one coordinate")]
    EmptyVector,
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("grid dimension must be at least 1")]
    ZeroDimension,
    #[error("grid mesh must be positive and finite, got {0}")]
    InvalidMesh(f64),
    #[error("grid budget exceeded: {points} points requested, budget is {budget}")]
    GridBudgetExceeded { points: f64, budget: usize },
    #[error("grid must contain at least one point")]
    EmptyGrid,
    #[error("grid points {first} and {second} coincide")]
    DuplicateGridPoint { first: usize, second: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("halfspace normal must be nonzero and finite")]
    DegenerateHalfspace,
    #[error("projection did not converge (residual {residual})")]
    ProjectionDidNotConverge { residual: f64 },
    #[error("no vertices given for the linear image")]
    NoVertices,
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn distance_sq<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

pub fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    distance_sq(a, b).sqrt()
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// A probability distribution over `0..dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexVector<T> {
    weights: Vec<T>,
}

impl<T: Real> SimplexVector<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, SimplexError> {
        if weights.is_empty() {
            return Err(SimplexError::EmptyVector);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < T::zero() {
                return Err(SimplexError::InvalidWeight { index, value: w.to_f64_lossy() });
            }
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::sum_tolerance(weights.len()) {
            return Err(SimplexError::NotNormalized { sum: sum.to_f64_lossy() });
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights; fails if they are all zero.
    pub fn normalized(mut weights: Vec<T>) -> Result<Self, SimplexError> {
        if weights.is_empty() {
            return Err(SimplexError::EmptyVector);
        }
        for (index, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < T::zero() {
                return Err(SimplexError::InvalidWeight { index, value: w.to_f64_lossy() });
            }
        }
        let sum: T = weights.iter().copied().sum();
        if sum <= T::zero() {
            return Err(SimplexError::NotNormalized { sum: 0.0 });
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { weights })
    }

    pub fn uniform(dim: usize) -> Self {
        assert!(dim > 0, "uniform distribution needs a positive dimension");
        let w = T::one() / T::lit(dim as f64);
        Self { weights: vec![w; dim] }
    }

    pub fn vertex(dim: usize, index: usize) -> Self {
        assert!(index < dim, "vertex index out of range");
        let mut weights = vec![T::zero(); dim];
        weights[index] = T::one();
        Self { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<T> {
        self.weights
    }

    pub fn get(&self, i: usize) -> T {
        self.weights[i]
    }

    /// Index drawn by inverse-CDF sampling at quantile `u ∈ [0, 1)`.
    ///
    /// Returns the first index whose cumulative weight exceeds `u`; rounding
    /// at the top falls back to the last index with positive weight.
    pub fn index_at_quantile(&self, u: f64) -> usize {
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, w) in self.weights.iter().enumerate() {
            let w = w.to_f64_lossy();
            if w > 0.0 {
                last_positive = i;
            }
            cumulative += w;
            if cumulative > u {
                return i;
            }
        }
        last_positive
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_at_quantile(rng.gen::<f64>())
    }

    /// `(1 - eta) * self + eta * uniform`.
    pub fn perturbed(&self, eta: T) -> Self {
        let share = eta / T::lit(self.dim() as f64);
        Self { weights: self.weights.iter().map(|&w| (T::one() - eta) * w + share).collect() }
    }
}

impl<T: Real> AsRef<[T]> for SimplexVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.weights
    }
}

/// Uniform random point of the `dim`-simplex (flat Dirichlet).
pub fn random_simplex_point<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = draws.iter().sum();
    draws.iter_mut().for_each(|d| *d /= sum);
    draws
}

/// A finite set of points together with a covering radius of the set it
/// is meant to cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteGrid<T> {
    points: Vec<Vec<T>>,
    mesh: T,
}

impl<T: Real> FiniteGrid<T> {
    /// Validated constructor: nonempty, equal dimensions, pairwise distinct.
    pub fn new(points: Vec<Vec<T>>, mesh: T) -> Result<Self, SimplexError> {
        let Some(first) = points.first() else {
            return Err(SimplexError::EmptyGrid);
        };
        if !(mesh >= T::zero()) || !mesh.is_finite() {
            return Err(SimplexError::InvalidMesh(mesh.to_f64_lossy()));
        }
        let dim = first.len();
        for p in &points {
            if p.len() != dim {
                return Err(SimplexError::DimensionMismatch { expected: dim, found: p.len() });
            }
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if points[a] == points[b] {
                    return Err(SimplexError::DuplicateGridPoint { first: a, second: b });
                }
            }
        }
        Ok(Self { points, mesh })
    }

    pub(crate) fn from_distinct(points: Vec<Vec<T>>, mesh: T) -> Self {
        debug_assert!(!points.is_empty());
        Self { points, mesh }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn mesh(&self) -> T {
        self.mesh
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn point(&self, l: usize) -> &[T] {
        &self.points[l]
    }

    /// Index of the nearest grid point and its distance (first on ties).
    pub fn nearest(&self, z: &[T]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for (l, p) in self.points.iter().enumerate() {
            let d = distance_sq(p, z);
            if d < best.1 {
                best = (l, d);
            }
        }
        (best.0, best.1.sqrt())
    }
}

fn composition_count(m: usize, d: usize) -> f64 {
    // C(m + d - 1, d - 1), computed in floating point so huge grids are
    // detected without overflow.
    let k = (d - 1).min(m);
    let n = m + d - 1;
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Certified covering radius of `{k/m : Σk = m}` in the `d`-simplex.
///
/// Largest-remainder rounding moves every coordinate by less than `1/m`,
/// giving `√d / m`; on a segment the exact value `√2 / (2m)` is used.
fn composition_covering_radius(d: usize, m: usize) -> f64 {
    match d {
        1 => 0.0,
        2 => std::f64::consts::SQRT_2 / (2.0 * m as f64),
        _ => (d as f64).sqrt() / m as f64,
    }
}

/// All points `(k₁/m, …, k_d/m)` with `Σkᵢ = m`, `m = ⌈√d / mesh⌉`, in
/// lexicographic order of `k`.
pub fn simplex_grid<T: Real>(dim: usize, mesh: f64) -> Result<FiniteGrid<T>, SimplexError> {
    simplex_grid_with_budget(dim, mesh, DEFAULT_GRID_BUDGET)
}

pub fn simplex_grid_with_budget<T: Real>(
    dim: usize,
    mesh: f64,
    budget: usize,
) -> Result<FiniteGrid<T>, SimplexError> {
    if dim == 0 {
        return Err(SimplexError::ZeroDimension);
    }
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(SimplexError::InvalidMesh(mesh));
    }
    if dim == 1 {
        return Ok(FiniteGrid::from_distinct(vec![vec![T::one()]], T::zero()));
    }
    let m_real = ((dim as f64).sqrt() / mesh).ceil();
    let points_real = if m_real > 1e15 { f64::INFINITY } else { composition_count(m_real as usize, dim) };
    if points_real > budget as f64 {
        return Err(SimplexError::GridBudgetExceeded { points: points_real, budget });
    }
    let m = (m_real as usize).max(1);
    let denom = T::lit(m as f64);
    let mut points = Vec::with_capacity(points_real as usize);
    let mut current = vec![0usize; dim];
    enumerate_compositions(m, 0, &mut current, &mut |k| {
        points.push(k.iter().map(|&ki| T::lit(ki as f64) / denom).collect());
    });
    Ok(FiniteGrid::from_distinct(points, T::lit(composition_covering_radius(dim, m))))
}

fn enumerate_compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    let last = current.len() - 1;
    if pos == last {
        current[pos] = remaining;
        emit(current);
        return;
    }
    for k in 0..=remaining {
        current[pos] = k;
        enumerate_compositions(remaining - k, pos + 1, current, emit);
    }
}

/// Cartesian product of grids. The covering radius of the product is the
/// Euclidean combination of the factors' radii.
pub fn product_grid<T: Real>(factors: &[FiniteGrid<T>], budget: usize) -> Result<FiniteGrid<T>, SimplexError> {
    if factors.is_empty() {
        return Err(SimplexError::EmptyGrid);
    }
    let count = factors.iter().fold(1.0, |acc, g| acc * g.len() as f64);
    if count > budget as f64 {
        return Err(SimplexError::GridBudgetExceeded { points: count, budget });
    }
    let mesh = factors.iter().map(|g| g.mesh() * g.mesh()).sum::<T>().sqrt();
    let mut points: Vec<Vec<T>> = vec![Vec::new()];
    for g in factors {
        let mut next = Vec::with_capacity(points.len() * g.len());
        for prefix in &points {
            for p in g.points() {
                let mut v = prefix.clone();
                v.extend_from_slice(p);
                next.push(v);
            }
        }
        points = next;
    }
    Ok(FiniteGrid::from_distinct(points, mesh))
}

/// Split of a matrix (any flattened array) into its projection onto the
/// nonpositive orthant and the remaining positive part.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthantSplit<T> {
    pub negative: Vec<T>,
    pub positive: Vec<T>,
}

pub fn project_orthant<T: Real>(a: &[T]) -> OrthantSplit<T> {
    OrthantSplit {
        negative: a.iter().map(|&v| v.min(T::zero())).collect(),
        positive: a.iter().map(|&v| v.max(T::zero())).collect(),
    }
}

/// `{ω : ⟨ω, normal⟩ ≤ offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace<T> {
    pub normal: Vec<T>,
    pub offset: T,
}

impl<T: Real> Halfspace<T> {
    pub fn new(normal: Vec<T>, offset: T) -> Result<Self, SimplexError> {
        let nn = dot(&normal, &normal);
        if !(nn > T::zero()) || !nn.is_finite() || !offset.is_finite() {
            return Err(SimplexError::DegenerateHalfspace);
        }
        Ok(Self { normal, offset })
    }

    pub fn violation(&self, z: &[T]) -> T {
        dot(&self.normal, z) - self.offset
    }

    pub fn project(&self, z: &[T]) -> Vec<T> {
        let excess = self.violation(z);
        if excess <= T::zero() {
            return z.to_vec();
        }
        let step = excess / dot(&self.normal, &self.normal);
        z.iter().zip(&self.normal).map(|(&zi, &ci)| zi - step * ci).collect()
    }
}

type ProjectionOracle<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// A closed convex set described by halfspaces or by a projection oracle.
#[derive(Clone)]
pub enum ConvexTarget<T> {
    /// Intersection of halfspaces; the empty list is the whole space.
    Halfspaces { halfspaces: Vec<Halfspace<T>>, radius: T },
    Oracle { project: ProjectionOracle<T>, radius: T, label: String },
}

impl<T: Real> fmt::Debug for ConvexTarget<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Halfspaces { halfspaces, radius } => f
                .debug_struct("Halfspaces")
                .field("count", &halfspaces.len())
                .field("radius", radius)
                .finish(),
            Self::Oracle { radius, label, .. } => {
                f.debug_struct("Oracle").field("label", label).field("radius", radius).finish()
            }
        }
    }
}

impl<T: Real> ConvexTarget<T> {
    pub fn halfspaces(halfspaces: Vec<Halfspace<T>>) -> Self {
        Self::Halfspaces { halfspaces, radius: T::infinity() }
    }

    pub fn whole_space() -> Self {
        Self::halfspaces(Vec::new())
    }

    /// The nonpositive orthant of `R^dim`, as coordinate halfspaces.
    pub fn negative_orthant(dim: usize) -> Self {
        let halfspaces = (0..dim)
            .map(|i| {
                let mut normal = vec![T::zero(); dim];
                normal[i] = T::one();
                Halfspace { normal, offset: T::zero() }
            })
            .collect();
        Self::halfspaces(halfspaces)
    }

    pub fn oracle(label: impl Into<String>, radius: T, project: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        Self::Oracle { project: Arc::new(project), radius, label: label.into() }
    }

    pub fn point(center: Vec<T>) -> Self {
        let radius = norm(&center);
        Self::oracle("point", radius, move |_| center.clone())
    }

    pub fn ball(center: Vec<T>, r: T) -> Self {
        let radius = norm(&center) + r;
        Self::oracle("ball", radius, move |z| {
            let d = distance(z, &center);
            if d <= r {
                z.to_vec()
            } else {
                center.iter().zip(z).map(|(&c, &zi)| c + (zi - c) * (r / d)).collect()
            }
        })
    }

    pub fn bounding_radius(&self) -> T {
        match self {
            Self::Halfspaces { radius, .. } | Self::Oracle { radius, .. } => *radius,
        }
    }

    pub fn project(&self, z: &[T]) -> Result<Vec<T>, SimplexError> {
        project_convex(z, self)
    }

    pub fn distance(&self, z: &[T]) -> Result<T, SimplexError> {
        Ok(distance(z, &self.project(z)?))
    }
}

fn dykstra_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(16.0))
}

/// Euclidean projection onto a convex target.
///
/// Halfspace intersections are handled by Dykstra's cyclic projections until
/// two successive cycles move the iterate by less than `1e-10`.
pub fn project_convex<T: Real>(z: &[T], target: &ConvexTarget<T>) -> Result<Vec<T>, SimplexError> {
    match target {
        ConvexTarget::Oracle { project, .. } => Ok(project(z)),
        ConvexTarget::Halfspaces { halfspaces, .. } => {
            for h in halfspaces {
                if h.normal.len() != z.len() {
                    return Err(SimplexError::DimensionMismatch { expected: h.normal.len(), found: z.len() });
                }
            }
            match halfspaces.len() {
                0 => return Ok(z.to_vec()),
                1 => return Ok(halfspaces[0].project(z)),
                _ => {}
            }
            if halfspaces.iter().all(|h| h.violation(z) <= T::zero()) {
                return Ok(z.to_vec());
            }
            let tol = dykstra_tolerance::<T>();
            let mut x = z.to_vec();
            let mut corrections = vec![vec![T::zero(); z.len()]; halfspaces.len()];
            let mut moved = T::infinity();
            for _ in 0..DYKSTRA_MAX_CYCLES {
                let start = x.clone();
                for (h, p) in halfspaces.iter().zip(corrections.iter_mut()) {
                    let y: Vec<T> = x.iter().zip(p.iter()).map(|(&a, &b)| a + b).collect();
                    x = h.project(&y);
                    for ((pi, &yi), &xi) in p.iter_mut().zip(&y).zip(&x) {
                        *pi = yi - xi;
                    }
                }
                moved = distance(&start, &x);
                if moved < tol {
                    return Ok(x);
                }
            }
            Err(SimplexError::ProjectionDidNotConverge { residual: moved.to_f64_lossy() })
        }
    }
}

/// Result of minimizing `weight·‖Σ y_j v_j − target‖² + ⟨linear, y⟩` over
/// the simplex.
#[derive(Clone, Debug)]
pub struct SimplexQuadraticSolution<T> {
    pub coefficients: Vec<T>,
    pub image: Vec<T>,
    pub gap: T,
    pub iterations: usize,
}

/// Away-step Frank–Wolfe over the simplex with exact line search.
///
/// The linear subproblem is a vertex selection; away steps keep the
/// convergence linear when the optimum lies on a face.
pub(crate) fn minimize_simplex_quadratic<T: Real>(
    vertices: &[Vec<T>],
    target: &[T],
    weight: T,
    linear: Option<&[T]>,
    start: Option<&[T]>,
    gap_tol: T,
    max_iterations: usize,
) -> SimplexQuadraticSolution<T> {
    let count = vertices.len();
    let dim = target.len();
    let two = T::lit(2.0);
    let lin = |j: usize| linear.map_or(T::zero(), |c| c[j]);

    let mut coeffs = match start {
        Some(s) => s.to_vec(),
        None => {
            let best = (0..count)
                .map(|j| (j, weight * distance_sq(&vertices[j], target) + lin(j)))
                .fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b })
                .0;
            let mut c = vec![T::zero(); count];
            c[best] = T::one();
            c
        }
    };
    let image_of = |coeffs: &[T]| {
        let mut u = vec![T::zero(); dim];
        for (j, &w) in coeffs.iter().enumerate() {
            if w != T::zero() {
                for (uk, &vk) in u.iter_mut().zip(&vertices[j]) {
                    *uk += w * vk;
                }
            }
        }
        u
    };
    let mut image = image_of(&coeffs);
    let mut gap = T::infinity();
    let mut iterations = 0;
    let mut grad = vec![T::zero(); count];
    while iterations < max_iterations {
        let residual: Vec<T> = image.iter().zip(target).map(|(&u, &t)| u - t).collect();
        for j in 0..count {
            grad[j] = two * weight * dot(&vertices[j], &residual) + lin(j);
        }
        let current: T = coeffs.iter().zip(&grad).map(|(&y, &g)| y * g).sum();
        let (fw, fw_grad) = (0..count).map(|j| (j, grad[j])).fold((0, T::infinity()), |b, c| if c.1 < b.1 { c } else { b });
        let (away, away_grad) = (0..count)
            .filter(|&j| coeffs[j] > T::zero())
            .map(|j| (j, grad[j]))
            .fold((0, T::neg_infinity()), |b, c| if c.1 > b.1 { c } else { b });
        gap = current - fw_grad;
        if gap <= gap_tol {
            break;
        }
        iterations += 1;
        let away_gap = away_grad - current;
        let (direction_image, max_step, toward) = if gap >= away_gap || coeffs[away] >= T::one() {
            let d: Vec<T> = vertices[fw].iter().zip(&image).map(|(&v, &u)| v - u).collect();
            (d, T::one(), Some(fw))
        } else {
            let d: Vec<T> = image.iter().zip(&vertices[away]).map(|(&u, &v)| u - v).collect();
            (d, coeffs[away] / (T::one() - coeffs[away]), None)
        };
        // Directional derivative of the objective along the step.
        let slope = match toward {
            Some(_) => fw_grad - current,
            None => current - away_grad,
        };
        let curvature = two * weight * dot(&direction_image, &direction_image);
        let step = if curvature > T::zero() {
            (-slope / curvature).min(max_step).max(T::zero())
        } else if slope < T::zero() {
            max_step
        } else {
            T::zero()
        };
        if step == T::zero() {
            break;
        }
        match toward {
            Some(s) => {
                coeffs.iter_mut().for_each(|c| *c *= T::one() - step);
                coeffs[s] += step;
            }
            None => {
                coeffs.iter_mut().for_each(|c| *c *= T::one() + step);
                coeffs[away] -= step;
                if step == max_step {
                    coeffs[away] = T::zero();
                }
            }
        }
        for c in coeffs.iter_mut() {
            if *c < T::zero() {
                *c = T::zero();
            }
        }
        if iterations % 64 == 0 {
            let total: T = coeffs.iter().copied().sum();
            coeffs.iter_mut().for_each(|c| *c /= total);
            image = image_of(&coeffs);
        } else {
            for (u, &d) in image.iter_mut().zip(&direction_image) {
                *u += step * d;
            }
        }
    }
    let total: T = coeffs.iter().copied().sum();
    coeffs.iter_mut().for_each(|c| *c /= total);
    let image = image_of(&coeffs);
    SimplexQuadraticSolution { coefficients: coeffs, image, gap, iterations }
}

/// Nearest point of `conv{v_j}` to `target`, with its simplex coefficients.
#[derive(Clone, Debug)]
pub struct LinearImageProjection<T> {
    pub coefficients: SimplexVector<T>,
    pub image: Vec<T>,
    /// Frank–Wolfe duality gap at the returned iterate.
    pub gap: T,
    pub iterations: usize,
}

pub fn project_linear_image<T: Real>(target: &[T], map_vertices: &[Vec<T>]) -> Result<LinearImageProjection<T>, SimplexError> {
    if map_vertices.is_empty() {
        return Err(SimplexError::NoVertices);
    }
    for v in map_vertices {
        if v.len() != target.len() {
            return Err(SimplexError::DimensionMismatch { expected: target.len(), found: v.len() });
        }
    }
    let gap_tol = T::lit(FRANK_WOLFE_GAP).max(T::epsilon() * T::lit(16.0));
    let sol = minimize_simplex_quadratic(map_vertices, target, T::one(), None, None, gap_tol, FRANK_WOLFE_MAX_ITERATIONS);
    Ok(LinearImageProjection {
        coefficients: SimplexVector { weights: sol.coefficients },
        image: sol.image,
        gap: sol.gap,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simplex_vector_validation() {
        assert!(SimplexVector::new(vec![0.5, 0.5]).is_ok());
        assert_eq!(SimplexVector::<f64>::new(vec![]), Err(SimplexError::EmptyVector));
        assert!(matches!(SimplexVector::new(vec![1.5, -0.5]), Err(SimplexError::InvalidWeight { index: 1, .. })));
        assert!(matches!(SimplexVector::new(vec![0.5, 0.6]), Err(SimplexError::NotNormalized { .. })));
        assert!(SimplexVector::<f32>::new(vec![0.1, 0.2, 0.7]).is_ok());
    }

    #[test]
    fn quantile_sampling_contract() {
        let x = SimplexVector::new(vec![0.0, 0.25, 0.75]).unwrap();
        assert_eq!(x.index_at_quantile(0.0), 1);
        assert_eq!(x.index_at_quantile(0.3), 2);
        assert_eq!(x.index_at_quantile(0.999_999_9), 2);
    }

    #[test]
    fn grid_on_segment() {
        let g = simplex_grid::<f64>(2, 0.8).unwrap();
        assert_eq!(g.points(), &[vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert!(g.mesh() <= 0.8);
    }

    #[test]
    fn grid_count_matches_binomial() {
        // m = ceil(sqrt(3)/mesh) = 2
        let g = simplex_grid::<f64>(3, 0.9).unwrap();
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn degenerate_simplex_grid() {
        let g = simplex_grid::<f64>(1, 0.01).unwrap();
        assert_eq!(g.points(), &[vec![1.0]]);
        assert_eq!(g.mesh(), 0.0);
    }

    #[test]
    fn grid_budget_is_enforced() {
        let err = simplex_grid::<f64>(10, 1e-3).unwrap_err();
        assert!(matches!(err, SimplexError::GridBudgetExceeded { .. }));
        assert!(matches!(simplex_grid_with_budget::<f64>(3, 0.1, 10), Err(SimplexError::GridBudgetExceeded { .. })));
        assert!(matches!(simplex_grid::<f64>(0, 0.1), Err(SimplexError::ZeroDimension)));
        assert!(matches!(simplex_grid::<f64>(2, 0.0), Err(SimplexError::InvalidMesh(_))));
    }

    #[test]
    fn finite_grid_validation() {
        assert_eq!(FiniteGrid::<f64>::new(vec![], 0.1), Err(SimplexError::EmptyGrid));
        assert!(matches!(
            FiniteGrid::new(vec![vec![0.0], vec![0.0]], 0.1),
            Err(SimplexError::DuplicateGridPoint { first: 0, second: 1 })
        ));
    }

    #[test]
    fn product_grid_combines_factors() {
        let seg = simplex_grid::<f64>(2, 0.8).unwrap();
        let prod = product_grid(&[seg.clone(), seg], 100).unwrap();
        assert_eq!(prod.len(), 9);
        assert_eq!(prod.dim(), 4);
        assert_eq!(prod.point(1), &[0.0, 1.0, 0.5, 0.5]);
    }

    #[test]
    fn orthant_examples() {
        let s = project_orthant(&[1.0, -2.0]);
        assert_eq!(s.negative, vec![0.0, -2.0]);
        assert_eq!(s.positive, vec![1.0, 0.0]);
        assert_eq!(dot(&s.negative, &s.positive), 0.0);
        let s = project_orthant(&[-1.0, -3.0]);
        assert_eq!(s.negative, vec![-1.0, -3.0]);
        assert_eq!(s.positive, vec![0.0, 0.0]);
        let s = project_orthant(&[0.0, 0.0]);
        assert_eq!(s.negative, vec![0.0, 0.0]);
        assert_eq!(s.positive, vec![0.0, 0.0]);
    }

    #[test]
    fn convex_projection_examples() {
        let omega = ConvexTarget::<f64>::negative_orthant(2);
        assert_eq!(omega.project(&[-1.0, -0.5]).unwrap(), vec![-1.0, -0.5]);
        assert_eq!(omega.project(&[1.0, -2.0]).unwrap(), vec![0.0, -2.0]);
        let p = omega.project(&[3.0, 4.0]).unwrap();
        assert!(norm(&p) < 1e-12);
        assert_eq!(ConvexTarget::<f64>::whole_space().project(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn dykstra_handles_oblique_halfspaces() {
        // Wedge {x + y <= 0} ∩ {x - y <= 0}; projection of (2, 0) is the apex.
        let target = ConvexTarget::<f64>::halfspaces(vec![
            Halfspace::new(vec![1.0, 1.0], 0.0).unwrap(),
            Halfspace::new(vec![1.0, -1.0], 0.0).unwrap(),
        ]);
        let p = target.project(&[2.0, 0.0]).unwrap();
        assert!(norm(&p) < 1e-9, "{p:?}");
        // (2, 1) projects onto the boundary ray of the first halfspace? no: apex again
        let p = target.project(&[1.0, 3.0]).unwrap();
        assert!((p[0] + 1.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn degenerate_halfspace_rejected() {
        assert_eq!(Halfspace::new(vec![0.0, 0.0], 1.0), Err(SimplexError::DegenerateHalfspace));
    }

    #[test]
    fn ball_and_point_oracles() {
        let ball = ConvexTarget::<f64>::ball(vec![0.0, 0.0], 1.0);
        let p = ball.project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
        let pt = ConvexTarget::point(vec![1.0]);
        assert_eq!(pt.distance(&[3.0]).unwrap(), 2.0);
    }

    #[test]
    fn linear_image_examples() {
        let v = vec![vec![0.0f64], vec![1.0]];
        let res = project_linear_image(&[1.0], &v).unwrap();
        assert_eq!(res.coefficients.as_slice(), &[0.0, 1.0]);
        assert_eq!(res.image, vec![1.0]);

        let res = project_linear_image(&[0.3], &v).unwrap();
        assert!((res.coefficients.get(0) - 0.7).abs() < 1e-9);
        assert!((res.image[0] - 0.3).abs() < 1e-9);

        let tri = vec![vec![0.0f64, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let target = [1.0, 1.0];
        let res = project_linear_image(&target, &tri).unwrap();
        assert!((res.image[0] - 0.5).abs() < 1e-6 && (res.image[1] - 0.5).abs() < 1e-6);
        let diff: Vec<f64> = target.iter().zip(&res.image).map(|(a, b)| a - b).collect();
        for v in &tri {
            let dir: Vec<f64> = v.iter().zip(&res.image).map(|(a, b)| a - b).collect();
            assert!(dot(&diff, &dir) <= 1e-6);
        }
        assert!(matches!(project_linear_image::<f64>(&[0.0], &[]), Err(SimplexError::NoVertices)));
    }

    #[test]
    fn grid_covering_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (dim, mesh) in [(2, 0.3), (3, 0.25), (4, 0.5)] {
            let g = simplex_grid::<f64>(dim, mesh).unwrap();
            assert!(g.mesh() <= mesh);
            for _ in 0..1000 {
                let p = random_simplex_point(&mut rng, dim);
                assert!(g.nearest(&p).1 <= g.mesh() + 1e-12);
            }
        }
    }

    #[test]
    fn f32_grid_and_projection() {
        let g = simplex_grid::<f32>(3, 0.5).unwrap();
        for p in g.points() {
            assert!(SimplexVector::new(p.clone()).is_ok());
        }
        let omega = ConvexTarget::<f32>::negative_orthant(3);
        assert_eq!(omega.project(&[1.0, -1.0, 2.0]).unwrap(), vec![0.0, -1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn orthant_parts_are_orthogonal(a in prop::collection::vec(-10.0f64..10.0, 1..20)) {
            let s = project_orthant(&a);
            prop_assert_eq!(dot(&s.negative, &s.positive), 0.0);
            for ((n, p), v) in s.negative.iter().zip(&s.positive).zip(&a) {
                prop_assert_eq!(n + p, *v);
            }
        }

        #[test]
        fn convex_projection_is_idempotent(z in prop::collection::vec(-5.0f64..5.0, 3)) {
            let target = ConvexTarget::halfspaces(vec![
                Halfspace::new(vec![1.0, 2.0, 0.0], 1.0).unwrap(),
                Halfspace::new(vec![0.0, -1.0, 1.0], 0.5).unwrap(),
                Halfspace::new(vec![-1.0, 0.0, -1.0], 2.0).unwrap(),
            ]);
            let p = target.project(&z).unwrap();
            let pp = target.project(&p).unwrap();
            prop_assert!(distance(&p, &pp) <= 1e-9);
            if let ConvexTarget::Halfspaces { halfspaces, .. } = &target {
                for h in halfspaces {
                    prop_assert!(h.violation(&p) <= 1e-9);
                }
            }
        }

        #[test]
        fn linear_image_beats_grid_search(
            target in prop::collection::vec(-1.0f64..2.0, 2),
            verts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 3),
        ) {
            let res = project_linear_image(&target, &verts).unwrap();
            let achieved = distance_sq(&res.image, &target);
            let grid = simplex_grid::<f64>(3, 1e-3 * 3f64.sqrt()).unwrap();
            let best = grid.points().iter().map(|y| {
                let img: Vec<f64> = (0..2).map(|k| (0..3).map(|j| y[j] * verts[j][k]).sum()).collect();
                distance_sq(&img, &target)
            }).fold(f64::INFINITY, f64::min);
            prop_assert!(achieved <= best + 1e-5, "fw {achieved} grid {best}");
        }
    }
}
