//! Built-in games.

use approachability::approach::ApproachError;
use approachability::monitoring::MonitoringError;
use approachability::{SignalStructure, VectorPayoffGame};

/// Rows o, g, b (observe, guess good, guess bad) against columns G, B.
pub const LABEL_EFFICIENT_PAYOFFS: [[f64; 2]; 3] = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
pub const MATCHING_PENNIES_PAYOFFS: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Outcome vectors drawn i.i.d. uniform on `[−1, 1]^I`.
    UniformOutcomes,
    /// Forecasting a two-point outcome set.
    BinaryForecast,
    /// `±1` scalar game with full monitoring.
    MatchingPennies,
    LabelEfficient,
    MatchingPenniesDark,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::UniformOutcomes,
        Scenario::BinaryForecast,
        Scenario::MatchingPennies,
        Scenario::LabelEfficient,
        Scenario::MatchingPenniesDark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::UniformOutcomes => "uniform-outcomes",
            Scenario::BinaryForecast => "binary-forecast",
            Scenario::MatchingPennies => "matching-pennies",
            Scenario::LabelEfficient => "label-efficient",
            Scenario::MatchingPenniesDark => "matching-pennies-dark",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Distributions over `S = {s₁, s₂}` standing for the symbols a, b, c.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSymbols {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Default for SignalSymbols {
    fn default() -> Self {
        Self { a: vec![1.0, 0.0], b: vec![0.0, 1.0], c: vec![0.5, 0.5] }
    }
}

pub fn matching_pennies() -> Result<VectorPayoffGame, ApproachError> {
    VectorPayoffGame::scalar(&MATCHING_PENNIES_PAYOFFS.map(|r| r.to_vec()))
}

/// The player observes the outcome only by playing o, and then sees a for
/// G and b for B. Guessing reveals nothing.
pub fn label_efficient(symbols: &SignalSymbols) -> Result<SignalStructure, MonitoringError> {
    let SignalSymbols { a, b, c } = symbols;
    let laws = vec![vec![a.clone(), b.clone()], vec![c.clone(), c.clone()], vec![c.clone(), c.clone()]];
    SignalStructure::new(&LABEL_EFFICIENT_PAYOFFS.map(|r| r.to_vec()), &laws)
}

/// Matching pennies where every signal is c.
pub fn matching_pennies_dark(symbols: &SignalSymbols) -> Result<SignalStructure, MonitoringError> {
    let c = &symbols.c;
    let laws = vec![vec![c.clone(), c.clone()], vec![c.clone(), c.clone()]];
    SignalStructure::new(&MATCHING_PENNIES_PAYOFFS.map(|r| r.to_vec()), &laws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_efficient_matches_table() {
        let s = label_efficient(&SignalSymbols::default()).unwrap();
        let expected = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(s.payoff(i, j), v);
            }
        }
        assert_eq!(s.signal_law(0, 0), &[1.0, 0.0]);
        assert_eq!(s.signal_law(0, 1), &[0.0, 1.0]);
        for i in 1..3 {
            for j in 0..2 {
                assert_eq!(s.signal_law(i, j), &[0.5, 0.5]);
            }
        }
    }

    #[test]
    fn pennies_dark_matches_table() {
        let s = matching_pennies_dark(&SignalSymbols::default()).unwrap();
        let expected = [[1.0, -1.0], [-1.0, 1.0]];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(s.payoff(i, j), v);
                assert_eq!(s.signal_law(i, j), &[0.5, 0.5]);
            }
        }
    }

    #[test]
    fn pennies_is_scalar() {
        let g = matching_pennies().unwrap();
        assert_eq!((g.rows(), g.cols(), g.dim()), (2, 2, 1));
        assert_eq!(g.payoff(0, 1), &[-1.0]);
        assert_eq!(g.payoff(1, 1), &[1.0]);
    }

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_name(s.name()), Some(s));
        }
        assert_eq!(Scenario::from_name("pennies"), None);
    }
}
