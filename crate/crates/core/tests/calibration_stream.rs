use approachability::simplex::simplex_grid;
use approachability::Calibrator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Score recomputed from the raw history of (forecast, outcome) pairs.
fn score_from_history(grid: &[Vec<f64>], history: &[(usize, Vec<f64>)]) -> f64 {
    let n = history.len() as f64;
    let mut best = 0.0f64;
    for (l, mu) in grid.iter().enumerate() {
        let own: Vec<&Vec<f64>> = history.iter().filter(|(k, _)| *k == l).map(|(_, s)| s).collect();
        if own.is_empty() {
            continue;
        }
        let count = own.len() as f64;
        let avg: Vec<f64> = (0..mu.len()).map(|d| own.iter().map(|s| s[d]).sum::<f64>() / count).collect();
        for other in grid {
            best = best.max(count / n * (sq(&avg, mu) - sq(&avg, other)));
        }
    }
    best
}

#[test]
fn streaming_identity_holds_throughout() {
    let grid = simplex_grid::<f64>(2, 0.2).unwrap();
    let points = grid.points().to_vec();
    let mut calibrator = Calibrator::new(grid, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut history = Vec::new();
    for n in 1..=2000 {
        let l = calibrator.forecast(&mut rng).unwrap();
        let s = if rng.gen_bool(0.3) { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
        calibrator.observe(&s).unwrap();
        history.push((l, s));
        let score = calibrator.calibration_score().unwrap();
        let regret = calibrator.engine().max_positive_regret().unwrap();
        assert!((score - regret).abs() <= 1e-9, "stage {n}: {score} vs {regret}");
        if n % 250 == 0 {
            assert!((score - score_from_history(&points, &history)).abs() <= 1e-9);
        }
    }
}

#[test]
fn forecasts_follow_iid_frequencies() {
    let grid = simplex_grid::<f64>(2, 0.2).unwrap();
    let mut calibrator = Calibrator::new(grid, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20_000 {
        calibrator.forecast(&mut rng).unwrap();
        let s = if rng.gen_bool(0.3) { [1.0, 0.0] } else { [0.0, 1.0] };
        calibrator.observe(&s).unwrap();
    }
    assert!(calibrator.calibration_score().unwrap() < 0.01);
    // most of the mass sits on the forecast nearest to (0.3, 0.7)
    let counts = calibrator.counts();
    let nearest = calibrator.grid().nearest(&[0.3, 0.7]).0;
    let second = calibrator.grid().nearest(&[0.3 - 0.1 + 1e-9, 0.7 + 0.1 - 1e-9]).0;
    let share = (counts[nearest] + counts[second]) as f64 / 20_000.0;
    assert!(share > 0.8, "share {share}");
}

#[test]
fn outcome_sums_match_history() {
    let grid = simplex_grid::<f64>(3, 0.25).unwrap();
    let mut calibrator = Calibrator::new(grid, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut sums = vec![vec![0.0; 3]; calibrator.types()];
    for _ in 0..500 {
        let l = calibrator.forecast(&mut rng).unwrap();
        let mut s = vec![0.0; 3];
        s[rng.gen_range(0..3)] = 1.0;
        calibrator.observe(&s).unwrap();
        for d in 0..3 {
            sums[l][d] += s[d];
        }
    }
    for (l, row) in sums.iter().enumerate() {
        for d in 0..3 {
            assert!((calibrator.outcome_sums()[(l, d)] - row[d]).abs() < 1e-12);
        }
    }
}
