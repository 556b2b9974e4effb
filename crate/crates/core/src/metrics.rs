//! The shared metrics CSV schema written by every training driver.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,samples,loss_estimate,duality_gap,eta,tau,epsilon,wallclock_ms";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub samples: u64,
    pub loss_estimate: Option<f64>,
    pub duality_gap: Option<f64>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub wallclock_ms: Option<u64>,
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.samples,
            opt(&self.loss_estimate),
            opt(&self.duality_gap),
            opt(&self.eta),
            opt(&self.tau),
            opt(&self.epsilon),
            opt(&self.wallclock_ms)
        );
        s
    }
}

/// Receives metrics rows as training progresses.
pub trait MetricsSink {
    fn record(&mut self, row: &MetricsRow) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRow> {
    fn record(&mut self, row: &MetricsRow) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &MetricsRow) -> Result<()> {
        Ok(())
    }
}

/// Streams rows as CSV, header first.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(CsvSink { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv_line())?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

/// Parses a metrics CSV, checking the header, field count and numeric
/// fields. Errors carry 1-based line numbers.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{METRICS_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let bad = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.parse::<u64>()
                .map_err(|_| bad(format!("{name} must be a nonnegative integer")))
        };
        let real = |s: &str, name: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| bad(format!("{name} must be a number or empty")))
        };
        rows.push(MetricsRow {
            step: int(fields[0], "step")?,
            samples: int(fields[1], "samples")?,
            loss_estimate: real(fields[2], "loss_estimate")?,
            duality_gap: real(fields[3], "duality_gap")?,
            eta: real(fields[4], "eta")?,
            tau: real(fields[5], "tau")?,
            epsilon: real(fields[6], "epsilon")?,
            wallclock_ms: if fields[7].is_empty() {
                None
            } else {
                Some(int(fields[7], "wallclock_ms")?)
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let rows = vec![
            MetricsRow {
                step: 0,
                samples: 0,
                duality_gap: Some(0.5),
                eta: Some(1e-4),
                tau: Some(0.05),
                epsilon: Some(0.8),
                ..Default::default()
            },
            MetricsRow {
                step: 250,
                samples: 25000,
                loss_estimate: Some(-0.0123),
                wallclock_ms: Some(17),
                ..Default::default()
            },
        ];
        let text = to_csv(&rows);
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn reports_offending_line() {
        let text = format!("{METRICS_HEADER}\n1,100,0.1,,,,,\n2,x,0.1,,,,,\n");
        match parse_csv(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv("step,samples\n").is_err());
    }
}
