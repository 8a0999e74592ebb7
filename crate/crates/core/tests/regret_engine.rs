use approachability::regret::{instant_regret, invariant_probability, invariant_residual, InvariantSolver};
use approachability::{Matrix, RegretState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stationary law of the uniformised chain `P = I + (A − diag(row sums)) / κ`
/// by plain repeated multiplication.
fn power_oracle(a: &[Vec<f64>]) -> Vec<f64> {
    let c = a.len();
    let rows: Vec<f64> = (0..c).map(|i| (0..c).filter(|&j| j != i).map(|j| a[i][j]).sum()).collect();
    let kappa = rows.iter().cloned().fold(0.0, f64::max) * 2.0;
    let mut lambda = vec![1.0 / c as f64; c];
    for _ in 0..200_000 {
        let mut next = vec![0.0; c];
        for i in 0..c {
            next[i] += lambda[i] * (1.0 - rows[i] / kappa);
            for j in 0..c {
                if j != i {
                    next[j] += lambda[i] * a[i][j] / kappa;
                }
            }
        }
        let change: f64 = next.iter().zip(&lambda).map(|(x, y)| (x - y).abs()).sum();
        lambda = next;
        if change < 1e-15 {
            break;
        }
    }
    lambda
}

fn residual_of(a: &[Vec<f64>], lambda: &[f64]) -> f64 {
    let c = a.len();
    (0..c)
        .map(|i| {
            let inflow: f64 = (0..c).map(|j| lambda[j] * a[j][i]).sum();
            let outflow: f64 = lambda[i] * a[i].iter().sum::<f64>();
            (inflow - outflow).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn elimination_matches_power_iteration_on_positive_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let a: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.gen_range(0.01..3.0)).collect()).collect();
        let p = invariant_probability::<f64>(&Matrix::from_rows(&a)).unwrap();
        let oracle = power_oracle(&a);
        assert!(residual_of(&a, p.distribution.as_slice()) <= 1e-9);
        assert!(residual_of(&a, &oracle) <= 1e-9);
        for (x, y) in p.distribution.as_slice().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}

#[test]
fn sparse_matrices_have_small_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let a: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..5).map(|_| if rng.gen_bool(0.6) { 0.0 } else { rng.gen_range(0.0..3.0) }).collect())
            .collect();
        let scale = a.iter().map(|r| r.iter().sum::<f64>()).fold(1.0, f64::max);
        let p = invariant_probability::<f64>(&Matrix::from_rows(&a)).unwrap();
        assert!(residual_of(&a, p.distribution.as_slice()) <= 1e-9 * scale);
        assert!((p.distribution.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn two_state_chain_closed_form() {
    // λ₀ a₀₁ = λ₁ a₁₀
    let a = Matrix::from_rows(&[vec![0.0, 2.0], vec![3.0, 0.0]]);
    let p = invariant_probability::<f64>(&a).unwrap();
    assert!((p.distribution.get(0) - 0.6).abs() < 1e-12);
    assert!(invariant_residual(&a, p.distribution.as_slice()) < 1e-12);
}

#[test]
fn engine_state_matches_history_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = 4;
    let mut state = RegretState::new(c, 1.0).unwrap();
    let mut history: Vec<(usize, Vec<f64>)> = Vec::new();
    for _ in 0..500 {
        let x = state.next_strategy();
        let i = x.sample(&mut rng);
        let u: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        state.update_values(i, &u).unwrap();
        history.push((i, u));
    }
    let mut brute = vec![vec![0.0; c]; c];
    for (i, u) in &history {
        for j in 0..c {
            brute[*i][j] += u[j] - u[*i];
        }
    }
    let n = history.len() as f64;
    let mut max = 0.0f64;
    for i in 0..c {
        for j in 0..c {
            assert!((state.cumulative_regret()[(i, j)] - brute[i][j]).abs() < 1e-9);
            max = max.max(brute[i][j] / n);
        }
    }
    assert!((state.max_positive_regret().unwrap() - max).abs() < 1e-12);
    let sum: Matrix<f64> = history.iter().fold(Matrix::zeros(c, c), |acc, (i, u)| {
        let r = instant_regret(*i, u);
        Matrix::from_row_major(c, c, acc.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a + b).collect())
    });
    for (a, b) in sum.as_slice().iter().zip(state.cumulative_regret().as_slice()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn strategy_is_invariant_for_positive_regret() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = 5;
    let mut state = RegretState::new(c, 1.0).unwrap();
    for _ in 0..300 {
        let x = state.next_strategy();
        let positive = state.cumulative_regret().map(|v| v.max(0.0));
        let scale = positive.norm_inf().max(1.0);
        assert!(invariant_residual(&positive, x.as_slice()) <= 1e-9 * scale);
        let i = x.sample(&mut rng);
        let u: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        state.update_values(i, &u).unwrap();
    }
}

#[test]
fn internal_regret_vanishes_against_iid_outcomes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = 3;
    let mut state = RegretState::new(c, 1.0).unwrap();
    for _ in 0..20_000 {
        let i = state.next_strategy().sample(&mut rng);
        let u: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        state.update_values(i, &u).unwrap();
    }
    assert!(state.max_positive_regret().unwrap() < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_reuse_agrees_with_fresh_solves(seed in 0u64..1000, c in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut solver = InvariantSolver::new();
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; c]; c];
        for _ in 0..100 {
            let i = rng.gen_range(0..c);
            rows[i] = (0..c).map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect();
            let a = Matrix::from_rows(&rows);
            let reused = solver.solve(&a).unwrap();
            let fresh = invariant_probability(&a).unwrap();
            for (x, y) in reused.distribution.as_slice().iter().zip(fresh.distribution.as_slice()) {
                prop_assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn strategy_ignores_scale_of_regret(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut small = RegretState::new(3, 1.0).unwrap();
        let mut large = RegretState::new(3, 100.0).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(0..3);
            let u: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            small.update_values(i, &u).unwrap();
            large.update_values(i, &u.iter().map(|v| v * 100.0).collect::<Vec<_>>()).unwrap();
        }
        let (x, y) = (small.next_strategy(), large.next_strategy());
        for k in 0..3 {
            prop_assert!((x.get(k) - y.get(k)).abs() < 1e-8);
        }
    }
}
