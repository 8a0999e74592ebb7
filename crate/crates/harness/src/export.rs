//! CSV and JSONL persistence of traces.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use approachability::trace::{TraceError, TraceMetadata};
use approachability::MetricTrace;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::Format;

#[derive(Debug, Error)]
pub enum ImportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

pub fn export(trace: &MetricTrace, path: &Path, format: Format) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut out, format)?;
    out.flush()
}

pub fn write_trace<W: Write>(trace: &MetricTrace, out: W, format: Format) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(trace, out),
        Format::Jsonl => write_jsonl(trace, out),
    }
}

/// Header `n,<metric>,...` and one record per logged stage.
pub fn write_csv<W: Write>(trace: &MetricTrace, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header = std::iter::once("n").chain(trace.columns().iter().map(String::as_str));
    w.write_record(header)?;
    for row in trace.rows() {
        let record = std::iter::once(row.n.to_string()).chain(row.values.iter().map(|v| format!("{v:?}")));
        w.write_record(record)?;
    }
    w.flush()
}

/// A metadata object `{"metadata": …, "columns": […]}` followed by one
/// `{"n": …, "<metric>": …}` object per logged stage, keys in column order.
pub fn write_jsonl<W: Write>(trace: &MetricTrace, mut out: W) -> io::Result<()> {
    let head = json!({ "metadata": trace.metadata, "columns": trace.columns() });
    writeln!(out, "{head}")?;
    let keys: Vec<String> = trace.columns().iter().map(|c| Value::from(c.as_str()).to_string()).collect();
    for row in trace.rows() {
        let mut line = format!("{{\"n\":{}", row.n);
        for (key, v) in keys.iter().zip(&row.values) {
            line.push(',');
            line.push_str(key);
            line.push(':');
            line.push_str(&Value::from(*v).to_string());
        }
        line.push('}');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn import_jsonl(path: &Path) -> Result<MetricTrace, ImportError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<MetricTrace, ImportError> {
    let malformed = |line: usize, message: String| ImportError::Malformed { line, message };
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty input".into()))?;
    let head: Value = serde_json::from_str(&first?).map_err(|e| malformed(1, e.to_string()))?;
    let metadata: TraceMetadata =
        serde_json::from_value(head["metadata"].clone()).map_err(|e| malformed(1, format!("metadata: {e}")))?;
    let columns: Vec<String> =
        serde_json::from_value(head["columns"].clone()).map_err(|e| malformed(1, format!("columns: {e}")))?;
    let mut trace = MetricTrace::new(metadata, columns.clone());
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Value = serde_json::from_str(&line).map_err(|e| malformed(k + 1, e.to_string()))?;
        let n = row["n"].as_u64().ok_or_else(|| malformed(k + 1, "missing stage `n`".into()))?;
        let values = columns
            .iter()
            .map(|c| row[c].as_f64().ok_or_else(|| malformed(k + 1, format!("missing metric `{c}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        trace.push_row(n, values)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricTrace {
        let mut meta = TraceMetadata { scenario: "s".into(), seed: 3, version: "v".into(), ..Default::default() };
        meta.parameters.insert("steps".into(), "8".into());
        meta.notes.push("a note".into());
        let mut t = MetricTrace::new(meta, vec!["a".into(), "b \"quoted\"".into()]);
        t.push_row(1, vec![0.1, -2.5e-17]).unwrap();
        t.push_row(8, vec![1.0 / 3.0, 1e300]).unwrap();
        t
    }

    #[test]
    fn empty_trace_gives_header_only_csv() {
        let t = MetricTrace::new(TraceMetadata::default(), vec!["x".into(), "y".into()]);
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,x,y\n");
    }

    #[test]
    fn csv_has_one_more_column_than_metrics() {
        let t = sample();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(reader.headers().unwrap().len(), t.columns().len() + 1);
        let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert_eq!(records.len(), 2);
        for r in &records {
            assert_eq!(r.len(), t.columns().len() + 1);
        }
        assert_eq!(records[1][1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn jsonl_round_trips() {
        let t = sample();
        let mut buf = Vec::new();
        write_jsonl(&t, &mut buf).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn jsonl_rows_are_objects_after_metadata() {
        let mut buf = Vec::new();
        write_jsonl(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let head: Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(head["metadata"]["seed"], 3);
        let row: Value = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(row["n"], 8);
        assert_eq!(row["a"].as_f64(), Some(1.0 / 3.0));
    }

    #[test]
    fn missing_metric_is_reported_with_its_line() {
        let text = "{\"metadata\":{\"scenario\":\"s\",\"seed\":0,\"parameters\":{},\"version\":\"v\"},\"columns\":[\"a\"]}\n{\"n\":1}\n";
        match read_jsonl(text.as_bytes()).unwrap_err() {
            ImportError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }
}
