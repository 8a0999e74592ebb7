use approachability::approach::{
    blackwell_step, box_halfspaces, build_best_response_table, halfspace_reduction, run_blackwell, ApproachError,
};
use approachability::play::Periodic;
use approachability::{ConvexTarget, LogSchedule, SimplexVector, VectorPayoffGame};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pennies() -> VectorPayoffGame {
    VectorPayoffGame::scalar(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
}

fn random_game(rng: &mut ChaCha8Rng) -> VectorPayoffGame {
    let (rows, cols, dim) = (rng.gen_range(2..4), rng.gen_range(2..4), rng.gen_range(1..4));
    let payoffs = (0..rows * cols * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    VectorPayoffGame::new(rows, cols, dim, payoffs).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> SimplexVector {
    SimplexVector::normalized((0..dim).map(|_| rng.gen_range(0.01..1.0)).collect()).unwrap()
}

#[test]
fn expected_payoff_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let game = random_game(&mut rng);
        let x = random_point(&mut rng, game.rows());
        let y = random_point(&mut rng, game.cols());
        let exact = game.expected_payoff(&x, &y).unwrap();
        let draws = 200_000;
        let mut sum = vec![0.0; game.dim()];
        let mut sum_sq = vec![0.0; game.dim()];
        for _ in 0..draws {
            let (i, j) = (x.sample(&mut rng), y.sample(&mut rng));
            for (k, &v) in game.payoff(i, j).iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        for k in 0..game.dim() {
            let mean = sum[k] / draws as f64;
            let se = ((sum_sq[k] / draws as f64 - mean * mean) / draws as f64).sqrt();
            assert!((mean - exact[k]).abs() <= 4.0 * se + 1e-12, "{mean} vs {}", exact[k]);
        }
    }
}

#[test]
fn pennies_step_toward_zero_is_uniform() {
    let step = blackwell_step(&pennies(), &ConvexTarget::point(vec![0.0]), &[1.0]).unwrap();
    assert!((step.strategy.get(0) - 0.5).abs() < 0.02);
    assert!(step.certificate <= step.tolerance);
}

#[test]
fn blackwell_distance_shrinks() {
    let game = pennies();
    let target = ConvexTarget::point(vec![0.0]);
    let mut adversary = Periodic(vec![0, 0, 1]);
    let trace = run_blackwell(&game, &target, &mut adversary, 4000, 1, LogSchedule::every(1000, 4000)).unwrap();
    let d = trace.column("distance_sq").unwrap();
    // Theorem bound 4B/n with B = 1
    assert!(d.last().copied().unwrap() <= 4.0 / 4000.0 * 10.0);
}

#[test]
fn witness_for_unreachable_point() {
    let err = build_best_response_table(&pennies(), &ConvexTarget::point(vec![1.0]), 0.1, 0.2, 0.05).unwrap_err();
    let ApproachError::Excludable { witness, distance, .. } = err else { panic!("expected a witness") };
    assert!((witness[0] - 0.5).abs() < 1e-9);
    assert!((distance - 1.0).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduction_payoffs_are_halfspace_slacks(seed in 0u64..1000, radius in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(&mut rng);
        let center: Vec<f64> = (0..game.dim()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let halfspaces = box_halfspaces(&center, radius);
        let aux = halfspace_reduction(&game, &halfspaces).unwrap();
        for i in 0..game.rows() {
            for j in 0..game.cols() {
                let r = game.payoff(i, j);
                for (k, v) in aux.payoff(i, j).iter().enumerate() {
                    // box side k/2 with sign + for even k
                    let d = k / 2;
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let expected = sign * (r[d] - center[d]) - radius;
                    prop_assert!((v - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn certificate_bounds_every_column(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let game = random_game(&mut rng);
        let target = ConvexTarget::ball(vec![0.0; game.dim()], 0.2);
        let z: Vec<f64> = (0..game.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let step = match blackwell_step(&game, &target, &z) {
            Ok(step) => step,
            // not every random game makes the ball a B-set
            Err(ApproachError::SeparationFailed { violation, tolerance, .. }) => {
                prop_assert!(violation > tolerance);
                return Ok(());
            }
            Err(e) => panic!("{e}"),
        };
        let p = target.project(&z).unwrap();
        let gap: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
        let worst = (0..game.cols())
            .map(|j| {
                let r = game.payoff_against(step.strategy.as_slice(), j);
                r.iter().zip(&p).zip(&gap).map(|((r, p), g)| (r - p) * g).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((worst - step.certificate).abs() < 1e-9);
    }
}
