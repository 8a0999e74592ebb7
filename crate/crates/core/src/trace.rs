//! Per-stage metric time series.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("row has {found} values but the trace has {expected} metric columns")]
    ColumnMismatch { expected: usize, found: usize },
    #[error("stage {n} does not follow stage {previous}")]
    NonIncreasingStage { n: u64, previous: u64 },
    #[error("metric {column} is not finite at stage {n}")]
    NonFinite { column: String, n: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub scenario: String,
    pub seed: u64,
    /// Every parameter needed to reproduce the run, as printed strings.
    pub parameters: BTreeMap<String, String>,
    pub version: String,
    /// Free-form remarks, e.g. a truncated schedule.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub n: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    pub metadata: TraceMetadata,
    columns: Vec<String>,
    rows: Vec<TraceRow>,
}

impl MetricTrace {
    pub fn new(metadata: TraceMetadata, columns: Vec<String>) -> Self {
        Self { metadata, columns, rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, n: u64, values: Vec<f64>) -> Result<(), TraceError> {
        if values.len() != self.columns.len() {
            return Err(TraceError::ColumnMismatch { expected: self.columns.len(), found: values.len() });
        }
        if let Some(last) = self.rows.last() {
            if n <= last.n {
                return Err(TraceError::NonIncreasingStage { n, previous: last.n });
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(TraceError::NonFinite { column: self.columns[k].clone(), n });
        }
        self.rows.push(TraceRow { n, values });
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn stages(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.n).collect()
    }

    pub fn last_value(&self, name: &str) -> Option<f64> {
        let k = self.column_index(name)?;
        self.rows.last().map(|r| r.values[k])
    }

    /// Value of `name` at stage `n`, if that stage was logged.
    pub fn value_at(&self, n: u64, name: &str) -> Option<f64> {
        let k = self.column_index(name)?;
        let row = self.rows.binary_search_by_key(&n, |r| r.n).ok()?;
        Some(self.rows[row].values[k])
    }
}

/// Which stages get a trace row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogSchedule {
    /// Powers of two, multiples of `total / 100`, and the last stage.
    Geometric { total: u64 },
    /// Every `k`-th stage and the last one.
    Every { every: u64, total: u64 },
}

impl LogSchedule {
    pub fn geometric(total: u64) -> Self {
        Self::Geometric { total }
    }

    pub fn every(every: u64, total: u64) -> Self {
        Self::Every { every: every.max(1), total }
    }

    pub fn should_log(&self, n: u64) -> bool {
        match *self {
            Self::Geometric { total } => {
                let step = (total / 100).max(1);
                n.is_power_of_two() || n % step == 0 || n == total
            }
            Self::Every { every, total } => n % every == 0 || n == total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_must_increase() {
        let mut t = MetricTrace::new(TraceMetadata::default(), vec!["a".into()]);
        t.push_row(1, vec![0.5]).unwrap();
        assert_eq!(t.push_row(1, vec![0.5]), Err(TraceError::NonIncreasingStage { n: 1, previous: 1 }));
        assert!(matches!(t.push_row(2, vec![]), Err(TraceError::ColumnMismatch { .. })));
        assert!(matches!(t.push_row(2, vec![f64::NAN]), Err(TraceError::NonFinite { .. })));
        t.push_row(4, vec![0.25]).unwrap();
        assert_eq!(t.column("a").unwrap(), vec![0.5, 0.25]);
        assert_eq!(t.value_at(4, "a"), Some(0.25));
        assert_eq!(t.value_at(3, "a"), None);
    }

    #[test]
    fn geometric_schedule() {
        let s = LogSchedule::geometric(1000);
        let logged: Vec<u64> = (1..=1000).filter(|&n| s.should_log(n)).collect();
        assert_eq!(&logged[..6], &[1, 2, 4, 8, 10, 16]);
        assert_eq!(*logged.last().unwrap(), 1000);
        assert_eq!(logged.len(), 100 + 10);
        let e = LogSchedule::every(7, 20);
        assert_eq!((1..=20).filter(|&n| e.should_log(n)).collect::<Vec<_>>(), vec![7, 14, 20]);
    }
}
