//! Dispatch from a [`Config`] to the simulation loops.

use approachability::approach::{
    box_halfspaces, build_best_response_table, run_blackwell, run_calibrated_approach, run_halfspace_approach,
    ApproachError,
};
use approachability::calibration::CalibrationError;
use approachability::monitoring::{
    build_br_grid, run_doubling, run_partial_monitoring, BrGridOptions, DoublingPlan, Evaluation, MonitoringError,
};
use approachability::play::ActionSource;
use approachability::regret::RegretError;
use approachability::simplex::{simplex_grid, SimplexError};
use approachability::trace::{TraceError, TraceMetadata};
use approachability::{Calibrator, ConvexTarget, LogSchedule, MetricTrace, RegretState, SignalStructure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{adversary_rng, Adversary, AdversaryError, AdversaryKind, Objective};
use crate::config::{Command, Config, ConfigError};
use crate::scenario::{label_efficient, matching_pennies, matching_pennies_dark, Scenario, MATCHING_PENNIES_PAYOFFS};

/// `git describe` of the build, or `unknown` outside a checkout.
pub const GIT_DESCRIBE: &str = env!("APPROACH_SIM_GIT_DESCRIBE");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Approach(#[from] ApproachError),
    #[error(transparent)]
    Monitoring(#[from] MonitoringError),
    #[error(transparent)]
    Regret(#[from] RegretError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

impl RunError {
    /// Whether the configuration itself was at fault, as opposed to the run.
    pub fn is_config_error(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Adversary(_))
    }
}

pub fn schedule(config: &Config) -> LogSchedule {
    match config.log_every {
        Some(k) => LogSchedule::every(k, config.steps),
        None => LogSchedule::geometric(config.steps),
    }
}

fn pennies_rows() -> Vec<Vec<f64>> {
    MATCHING_PENNIES_PAYOFFS.map(|r| r.to_vec()).to_vec()
}

fn signal_structure(config: &Config) -> Result<SignalStructure, RunError> {
    Ok(match config.scenario {
        Scenario::LabelEfficient => label_efficient(&config.symbols)?,
        Scenario::MatchingPenniesDark => matching_pennies_dark(&config.symbols)?,
        s => unreachable!("{} is not a partial-monitoring scenario", s.name()),
    })
}

fn structure_payoffs(structure: &SignalStructure) -> Vec<Vec<f64>> {
    (0..structure.actions()).map(|i| (0..structure.opponent_actions()).map(|j| structure.payoff(i, j)).collect()).collect()
}

fn grid_options(config: &Config) -> BrGridOptions {
    BrGridOptions { mode: config.flag_grid, seed: config.grid_seed, eta: config.eta, ..BrGridOptions::default() }
}

/// Runs one experiment. The trace metadata carries every parameter of the
/// config plus the build's `git describe`.
pub fn run_experiment(config: &Config) -> Result<MetricTrace, RunError> {
    let sched = schedule(config);
    let (n, seed) = (config.steps, config.seed);
    let mut trace = match config.command {
        Command::InternalRegret => run_internal_regret(config)?,
        Command::Calibrate => run_calibrate(config)?,
        Command::ApproachBlackwell => {
            let game = matching_pennies()?;
            let target = ConvexTarget::point(config.target.clone());
            let objective = Objective::Distance { game: game.clone(), target: target.clone() };
            let mut adversary = Adversary::new(config.adversary.clone(), game.cols(), seed, Some(objective))?;
            run_blackwell(&game, &target, &mut adversary, n, seed, sched)?
        }
        Command::ApproachCalibrated => {
            let game = matching_pennies()?;
            let target = ConvexTarget::point(config.target.clone());
            let table = build_best_response_table(&game, &target, config.epsilon, config.mesh, config.response_mesh)?;
            let objective = Objective::Distance { game: game.clone(), target };
            let mut adversary = Adversary::new(config.adversary.clone(), game.cols(), seed, Some(objective))?;
            run_calibrated_approach(&game, &table, &mut adversary, n, seed, sched)?
        }
        Command::Halfspace => {
            let game = matching_pennies()?;
            let halfspaces = box_halfspaces(&config.target, config.epsilon);
            let target = ConvexTarget::halfspaces(halfspaces.clone());
            let objective = Objective::Distance { game: game.clone(), target };
            let mut adversary = Adversary::new(config.adversary.clone(), game.cols(), seed, Some(objective))?;
            run_halfspace_approach(&game, &halfspaces, &mut adversary, n, seed, sched)?
        }
        Command::PartialMonitor => {
            let structure = signal_structure(config)?;
            let mut adversary = monitoring_adversary(config, &structure)?;
            let br = build_br_grid(&structure, Evaluation::WorstCase, config.epsilon, &grid_options(config))?;
            run_partial_monitoring(&structure, &br, &mut adversary, n, seed, sched)?
        }
        Command::Doubling => {
            let structure = signal_structure(config)?;
            let mut adversary = monitoring_adversary(config, &structure)?;
            let plan = DoublingPlan::build(&structure, Evaluation::WorstCase, config.n1, n, &grid_options(config))?;
            run_doubling(&structure, &plan, &mut adversary, seed, sched)?
        }
    };
    let mut parameters = std::mem::take(&mut trace.metadata.parameters);
    parameters.extend(config.parameters());
    parameters.insert("git-describe".to_string(), GIT_DESCRIBE.to_string());
    trace.metadata.parameters = parameters;
    trace.metadata.scenario = config.scenario.name().to_string();
    trace.metadata.seed = seed;
    Ok(trace)
}

/// Runs independent experiments in parallel, one RNG stream each.
pub fn run_many(configs: &[Config]) -> Vec<Result<MetricTrace, RunError>> {
    configs.par_iter().map(run_experiment).collect()
}

fn monitoring_adversary(config: &Config, structure: &SignalStructure) -> Result<Adversary, RunError> {
    let objective = Objective::Payoff(structure_payoffs(structure));
    Ok(Adversary::new(config.adversary.clone(), structure.opponent_actions(), config.seed, Some(objective))?)
}

fn metadata(config: &Config) -> TraceMetadata {
    TraceMetadata {
        scenario: config.scenario.name().to_string(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        ..TraceMetadata::default()
    }
}

/// Internal-regret columns: the maximal positive average regret and the
/// same scaled by `√n`.
pub const INTERNAL_REGRET_COLUMNS: [&str; 3] = ["max_positive_regret", "scaled_regret", "average_payoff"];

fn run_internal_regret(config: &Config) -> Result<MetricTrace, RunError> {
    let sched = schedule(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let columns = INTERNAL_REGRET_COLUMNS.map(String::from).to_vec();
    let mut trace = MetricTrace::new(metadata(config), columns);
    let mut payoff_sum = 0.0;

    // outcome vector of the stage, given the adversary
    #[allow(clippy::large_enum_variant)]
    enum Source {
        Uniform(ChaCha8Rng, usize),
        Game(Adversary, Vec<Vec<f64>>),
    }
    let mut source = match config.scenario {
        Scenario::UniformOutcomes => {
            if config.adversary != AdversaryKind::Uniform {
                return Err(ConfigError::Field {
                    field: "adversary".into(),
                    message: "uniform-outcomes draws its outcomes i.i.d.; only `uniform` applies".into(),
                }
                .into());
            }
            Source::Uniform(adversary_rng(config.seed), config.actions)
        }
        Scenario::MatchingPennies => {
            let payoffs = pennies_rows();
            let adversary =
                Adversary::new(config.adversary.clone(), 2, config.seed, Some(Objective::Payoff(payoffs.clone())))?;
            Source::Game(adversary, payoffs)
        }
        s => unreachable!("{} is not an internal-regret scenario", s.name()),
    };
    let actions = match &source {
        Source::Uniform(_, c) => *c,
        Source::Game(_, payoffs) => payoffs.len(),
    };
    let mut state = RegretState::new(actions, 1.0)?;
    let mut outcome = vec![0.0; actions];
    for stage in 1..=config.steps {
        let i = state.next_strategy().sample(&mut rng);
        match &mut source {
            Source::Uniform(adv_rng, _) => {
                for u in outcome.iter_mut() {
                    *u = adv_rng.gen_range(-1.0..=1.0);
                }
            }
            Source::Game(adversary, payoffs) => {
                let j = adversary.next_action(stage);
                adversary.observe(i, j);
                for (u, row) in outcome.iter_mut().zip(payoffs.iter()) {
                    *u = row[j];
                }
            }
        }
        payoff_sum += outcome[i];
        state.update_values(i, &outcome)?;
        if sched.should_log(stage) {
            let r = state.max_positive_regret()?;
            trace.push_row(stage, vec![r, r * (stage as f64).sqrt(), payoff_sum / stage as f64])?;
        }
    }
    Ok(trace)
}

/// Calibration columns. `max_identity_gap` is the largest
/// `|calibration_score − engine regret|` over every stage so far, not only
/// the logged ones.
pub const CALIBRATE_COLUMNS: [&str; 5] =
    ["calibration_score", "engine_regret", "identity_gap", "max_identity_gap", "epsilon_calibration_score"];

fn run_calibrate(config: &Config) -> Result<MetricTrace, RunError> {
    let sched = schedule(config);
    let grid = simplex_grid::<f64>(2, config.mesh)?;
    let mut calibrator = Calibrator::new(grid, 1.0)?;
    let mut adversary = Adversary::new(config.adversary.clone(), 2, config.seed, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = MetricTrace::new(metadata(config), CALIBRATE_COLUMNS.map(String::from).to_vec());
    trace.metadata.parameters.insert("forecast_points".into(), calibrator.types().to_string());
    let mut outcome = [0.0; 2];
    let mut max_gap = 0.0f64;
    for stage in 1..=config.steps {
        let l = calibrator.forecast(&mut rng)?;
        let j = adversary.next_action(stage);
        adversary.observe(l, j);
        outcome[j] = 1.0;
        calibrator.observe(&outcome)?;
        outcome[j] = 0.0;
        let score = calibrator.calibration_score()?;
        let regret = calibrator.engine().max_positive_regret()?;
        let gap = (score - regret).abs();
        max_gap = max_gap.max(gap);
        if sched.should_log(stage) {
            let eps_score = calibrator.epsilon_calibration_score(config.mesh)?;
            trace.push_row(stage, vec![score, regret, gap, max_gap, eps_score])?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn config(command: Command, pairs: &[(&str, &str)]) -> Config {
        let mut raw = RawConfig::new();
        for (k, v) in pairs {
            raw.set(k, *v);
        }
        Config::from_raw(Some(command), &raw).unwrap()
    }

    #[test]
    fn calibrate_smoke() {
        let trace = run_experiment(&config(Command::Calibrate, &[("steps", "1000"), ("seed", "7")])).unwrap();
        assert!(trace.column("calibration_score").is_some());
        assert_eq!(trace.stages().last(), Some(&1000));
        assert!(trace.last_value("max_identity_gap").unwrap() <= 1e-9);
        assert_eq!(trace.metadata.parameters["seed"], "7");
        assert_eq!(trace.metadata.parameters["git-describe"], GIT_DESCRIBE);
    }

    #[test]
    fn geometric_schedule_logs_powers_and_percentiles() {
        let trace = run_experiment(&config(Command::InternalRegret, &[("steps", "1000")])).unwrap();
        let stages = trace.stages();
        for n in [1, 2, 4, 8, 512, 10, 20, 990, 1000] {
            assert!(stages.contains(&n), "{n}");
        }
        assert!(!stages.contains(&3));
    }

    #[test]
    fn every_command_runs() {
        for command in Command::ALL {
            let steps = if command == Command::Doubling { "600" } else { "200" };
            let mut pairs = vec![("steps", steps)];
            if command == Command::Doubling {
                pairs.push(("n1", "100"));
            }
            let trace = run_experiment(&config(command, &pairs)).unwrap_or_else(|e| panic!("{command}: {e}"));
            assert!(!trace.is_empty(), "{command}");
            assert_eq!(trace.metadata.parameters["command"], command.name());
        }
    }

    #[test]
    fn greedy_is_rejected_without_objective() {
        let err = run_experiment(&config(Command::Calibrate, &[("adversary", "greedy")])).unwrap_err();
        assert!(err.is_config_error());
        let err = run_experiment(&config(Command::InternalRegret, &[("adversary", "const:0")])).unwrap_err();
        assert!(err.is_config_error());
    }

    #[test]
    fn witness_is_a_runtime_failure() {
        let err = run_experiment(&config(Command::ApproachCalibrated, &[("target", "1"), ("mesh", "0.2")])).unwrap_err();
        assert!(matches!(err, RunError::Approach(ApproachError::Excludable { .. })));
        assert!(!err.is_config_error());
    }

    #[test]
    fn parallel_runs_match_serial_runs() {
        let configs: Vec<Config> =
            (0..4).map(|s| config(Command::InternalRegret, &[("steps", "300"), ("seed", &s.to_string())])).collect();
        let parallel = run_many(&configs);
        for (c, p) in configs.iter().zip(parallel) {
            assert_eq!(run_experiment(c).unwrap(), p.unwrap());
        }
    }
}
