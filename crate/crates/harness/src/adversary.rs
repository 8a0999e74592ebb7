//! Opponents for the simulation loops.

use std::fmt;
use std::str::FromStr;

use approachability::play::ActionSource;
use approachability::{ConvexTarget, SimplexVector, VectorPayoffGame};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("cannot parse adversary `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
    #[error("adversary `{spec}` does not fit {actions} opponent actions: {reason}")]
    Invalid { spec: String, actions: usize, reason: String },
    #[error("the greedy adversary needs a payoff objective, which this scenario lacks")]
    NoObjective,
}

/// Parsed form of `const:1`, `iid:0.3,0.7`, `periodic:0,1,1`, `uniform` or
/// `greedy`.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversaryKind {
    Constant(usize),
    Iid(Vec<f64>),
    Periodic(Vec<usize>),
    Uniform,
    Greedy,
}

impl FromStr for AdversaryKind {
    type Err = AdversaryError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| AdversaryError::Parse { spec: spec.to_string(), reason: reason.to_string() };
        let (kind, args) = match spec.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a)),
            None => (spec.trim(), None),
        };
        let list = || -> Result<Vec<&str>, AdversaryError> {
            let args = args.ok_or_else(|| err("missing arguments after `:`"))?;
            let items: Vec<&str> = args.split(',').map(str::trim).collect();
            if items.iter().any(|s| s.is_empty()) {
                return Err(err("empty list entry"));
            }
            Ok(items)
        };
        let index = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("`{s}` is not an action index")));
        match kind {
            "const" => {
                let items = list()?;
                if items.len() != 1 {
                    return Err(err("const takes exactly one action"));
                }
                Ok(Self::Constant(index(items[0])?))
            }
            "iid" => {
                let p = list()?
                    .into_iter()
                    .map(|s| s.parse::<f64>().map_err(|_| err(&format!("`{s}` is not a probability"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Self::Iid(p))
            }
            "periodic" => Ok(Self::Periodic(list()?.into_iter().map(index).collect::<Result<_, _>>()?)),
            "uniform" | "greedy" if args.is_some() => Err(err("takes no arguments")),
            "uniform" => Ok(Self::Uniform),
            "greedy" => Ok(Self::Greedy),
            _ => Err(err("expected one of const, iid, periodic, uniform, greedy")),
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(",");
        match self {
            Self::Constant(j) => write!(f, "const:{j}"),
            Self::Iid(p) => write!(f, "iid:{}", join(p.iter().map(|v| v.to_string()).collect())),
            Self::Periodic(s) => write!(f, "periodic:{}", join(s.iter().map(|v| v.to_string()).collect())),
            Self::Uniform => write!(f, "uniform"),
            Self::Greedy => write!(f, "greedy"),
        }
    }
}

/// What the greedy adversary works against.
#[derive(Clone, Debug)]
pub enum Objective {
    /// Minimises the player's scalar payoff `payoffs[i][j]` against the
    /// player's empirical action frequencies.
    Payoff(Vec<Vec<f64>>),
    /// Pushes the next average vector payoff as far from the target as
    /// possible, assuming the player repeats its empirical frequencies.
    Distance { game: VectorPayoffGame, target: ConvexTarget },
}

/// A seeded opponent. Every adversary owns its RNG stream, separate from
/// the player's.
#[derive(Clone, Debug)]
pub struct Adversary {
    kind: AdversaryKind,
    actions: usize,
    rng: ChaCha8Rng,
    law: Option<SimplexVector>,
    objective: Option<Objective>,
    own_counts: Vec<u64>,
    payoff_sum: Vec<f64>,
    stages: u64,
}

/// Stream index of the opponent's RNG; the player uses stream 0.
pub const ADVERSARY_STREAM: u64 = 1;

pub fn adversary_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ADVERSARY_STREAM);
    rng
}

impl Adversary {
    pub fn new(kind: AdversaryKind, actions: usize, seed: u64, objective: Option<Objective>) -> Result<Self, AdversaryError> {
        let invalid = |reason: String| AdversaryError::Invalid { spec: kind.to_string(), actions, reason };
        let law = match &kind {
            AdversaryKind::Constant(j) if *j >= actions => return Err(invalid(format!("action {j} is out of range"))),
            AdversaryKind::Periodic(s) if s.is_empty() => return Err(invalid("empty sequence".into())),
            AdversaryKind::Periodic(s) if s.iter().any(|&j| j >= actions) => {
                return Err(invalid("sequence has an out-of-range action".into()))
            }
            AdversaryKind::Iid(p) if p.len() != actions => {
                return Err(invalid(format!("{} probabilities given", p.len())))
            }
            AdversaryKind::Iid(p) => Some(SimplexVector::new(p.clone()).map_err(|e| invalid(e.to_string()))?),
            AdversaryKind::Uniform => Some(SimplexVector::uniform(actions)),
            AdversaryKind::Greedy => {
                let player_actions = match &objective {
                    Some(Objective::Payoff(table)) => table.len(),
                    Some(Objective::Distance { game, .. }) => game.rows(),
                    None => return Err(AdversaryError::NoObjective),
                };
                let dim = match &objective {
                    Some(Objective::Distance { game, .. }) => game.dim(),
                    _ => 0,
                };
                return Ok(Self {
                    kind,
                    actions,
                    rng: adversary_rng(seed),
                    law: None,
                    objective,
                    own_counts: vec![0; player_actions],
                    payoff_sum: vec![0.0; dim],
                    stages: 0,
                });
            }
            _ => None,
        };
        Ok(Self {
            kind,
            actions,
            rng: adversary_rng(seed),
            law,
            objective: None,
            own_counts: Vec::new(),
            payoff_sum: Vec::new(),
            stages: 0,
        })
    }

    pub fn kind(&self) -> &AdversaryKind {
        &self.kind
    }

    fn greedy_action(&self) -> usize {
        let total: u64 = self.own_counts.iter().sum();
        if total == 0 {
            return 0;
        }
        let freq: Vec<f64> = self.own_counts.iter().map(|&c| c as f64 / total as f64).collect();
        let score = |j: usize| -> f64 {
            match self.objective.as_ref().expect("greedy adversaries carry an objective") {
                Objective::Payoff(table) => -table.iter().zip(&freq).map(|(row, f)| f * row[j]).sum::<f64>(),
                Objective::Distance { game, target } => {
                    let expected = game.payoff_against(&freq, j);
                    let n = (self.stages + 1) as f64;
                    let next: Vec<f64> = self.payoff_sum.iter().zip(&expected).map(|(s, e)| (s + e) / n).collect();
                    target.distance(&next).unwrap_or(f64::NEG_INFINITY)
                }
            }
        };
        // first index wins ties
        (0..self.actions).fold((0, f64::NEG_INFINITY), |best, j| {
            let s = score(j);
            if s > best.1 { (j, s) } else { best }
        })
        .0
    }
}

impl ActionSource for Adversary {
    fn next_action(&mut self, stage: u64) -> usize {
        match &self.kind {
            AdversaryKind::Constant(j) => *j,
            AdversaryKind::Periodic(s) => s[((stage - 1) % s.len() as u64) as usize],
            AdversaryKind::Iid(_) | AdversaryKind::Uniform => {
                self.law.as_ref().expect("random adversaries carry a law").sample(&mut self.rng)
            }
            AdversaryKind::Greedy => self.greedy_action(),
        }
    }

    fn observe(&mut self, own: usize, other: usize) {
        if let Some(objective) = &self.objective {
            if let Some(c) = self.own_counts.get_mut(own) {
                *c += 1;
            }
            if let Objective::Distance { game, .. } = objective {
                for (s, v) in self.payoff_sum.iter_mut().zip(game.payoff(own, other)) {
                    *s += v;
                }
            }
        }
        self.stages += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_documented_forms() {
        assert_eq!("const:1".parse(), Ok(AdversaryKind::Constant(1)));
        assert_eq!("iid:0.3,0.7".parse(), Ok(AdversaryKind::Iid(vec![0.3, 0.7])));
        assert_eq!("periodic:0,1,1".parse(), Ok(AdversaryKind::Periodic(vec![0, 1, 1])));
        assert_eq!("uniform".parse(), Ok(AdversaryKind::Uniform));
        assert_eq!("greedy".parse(), Ok(AdversaryKind::Greedy));
        for bad in ["const", "const:a", "iid:", "iid:0.5,,0.5", "periodic", "zigzag:1", "uniform:2"] {
            assert!(bad.parse::<AdversaryKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_parses_back() {
        for spec in ["const:1", "iid:0.3,0.7", "periodic:0,1,1", "uniform", "greedy"] {
            let kind: AdversaryKind = spec.parse().unwrap();
            assert_eq!(kind.to_string(), spec);
        }
    }

    #[test]
    fn rejects_actions_out_of_range() {
        assert!(Adversary::new(AdversaryKind::Constant(2), 2, 0, None).is_err());
        assert!(Adversary::new(AdversaryKind::Periodic(vec![0, 3]), 2, 0, None).is_err());
        assert!(Adversary::new(AdversaryKind::Iid(vec![0.5, 0.6]), 2, 0, None).is_err());
        assert!(Adversary::new(AdversaryKind::Iid(vec![1.0]), 2, 0, None).is_err());
        assert_eq!(Adversary::new(AdversaryKind::Greedy, 2, 0, None).unwrap_err(), AdversaryError::NoObjective);
    }

    #[test]
    fn periodic_cycles_from_stage_one() {
        let mut a = Adversary::new(AdversaryKind::Periodic(vec![0, 1, 1]), 2, 0, None).unwrap();
        let seq: Vec<usize> = (1..=6).map(|n| a.next_action(n)).collect();
        assert_eq!(seq, vec![0, 1, 1, 0, 1, 1]);
    }

    #[test]
    fn iid_frequencies_match_the_law() {
        let mut a = Adversary::new(AdversaryKind::Iid(vec![0.3, 0.7]), 2, 5, None).unwrap();
        let n = 100_000;
        let ones = (1..=n).filter(|&k| a.next_action(k) == 1).count() as f64;
        // four standard errors
        assert!((ones / n as f64 - 0.7).abs() < 4.0 * (0.21f64 / n as f64).sqrt());
    }

    #[test]
    fn same_seed_same_stream() {
        let draw = |seed| {
            let mut a = Adversary::new(AdversaryKind::Uniform, 3, seed, None).unwrap();
            (1..=50).map(|n| a.next_action(n)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn greedy_punishes_the_empirical_mix() {
        let table = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let mut a = Adversary::new(AdversaryKind::Greedy, 2, 0, Some(Objective::Payoff(table))).unwrap();
        assert_eq!(a.next_action(1), 0);
        a.observe(0, 0);
        // the player has only played row 0, so column 1 pays it −1
        assert_eq!(a.next_action(2), 1);
        a.observe(1, 1);
        a.observe(1, 1);
        assert_eq!(a.next_action(4), 0);
    }

    #[test]
    fn greedy_distance_moves_away_from_target() {
        let game = VectorPayoffGame::scalar(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let objective = Objective::Distance { game, target: ConvexTarget::point(vec![0.0]) };
        let mut a = Adversary::new(AdversaryKind::Greedy, 2, 0, Some(objective)).unwrap();
        a.observe(0, 0);
        // average payoff is 1; playing 0 against row 0 keeps it there
        assert_eq!(a.next_action(2), 0);
    }
}
