//! CSV persistence. Every file opens with `#` comment lines describing the
//! run; the body is plain CSV. Floats use Rust's shortest round-trip `{:e}`
//! form, so re-reading a file reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rowspace_core::riemannian::TrialStats;
use rowspace_core::TraceRecord;

use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: [&str; 5] = ["iter", "residual", "dist_theta_star", "gamma", "rho"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Opens `path` for writing and emits the comment block.
pub fn create(path: &Path, comments: &[String]) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(|e| HarnessError::io(path, e))?;
        }
    }
    Ok(csv::Writer::from_writer(out))
}

pub fn write_trace<W: Write>(w: &mut csv::Writer<W>, records: &[TraceRecord]) -> Result<()> {
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.iter.to_string(),
            fmt_f64(r.residual),
            fmt_f64(r.dist_theta_star),
            fmt_opt(r.gamma),
            fmt_opt(r.rho),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("<csv>", e))?;
    Ok(())
}

pub fn write_trace_file(path: &Path, comments: &[String], records: &[TraceRecord]) -> Result<()> {
    write_trace(&mut create(path, comments)?, records)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).unwrap_or_default();
    raw.parse().map_err(|_| HarnessError::Parse {
        path: "<trace>".into(),
        line,
        msg: format!("bad value {raw:?} in column {}", TRACE_HEADER[i]),
    })
}

fn parse_opt(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => parse_field(rec, i, line).map(Some),
    }
}

/// Reads a trace file body back into records (snapshots are not stored).
pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(HarnessError::Parse {
            path: "<trace>".into(),
            line: 1,
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push(TraceRecord {
            iter: parse_field(&rec, 0, line)?,
            residual: parse_field(&rec, 1, line)?,
            dist_theta_star: parse_field(&rec, 2, line)?,
            gamma: parse_opt(&rec, 3, line)?,
            rho: parse_opt(&rec, 4, line)?,
            snapshot: None,
        });
    }
    Ok(out)
}

/// Long-format `method,metric,value` rows.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Summary {
    rows: Vec<(String, String, String)>,
}

impl Summary {
    pub fn push(&mut self, method: &str, metric: &str, value: f64) {
        self.rows.push((method.into(), metric.into(), fmt_f64(value)));
    }

    pub fn push_text(&mut self, method: &str, metric: &str, value: impl ToString) {
        self.rows.push((method.into(), metric.into(), value.to_string()));
    }

    pub fn get(&self, method: &str, metric: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|(m, k, _)| m == method && k == metric)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut w = create(path, comments)?;
        w.write_record(["method", "metric", "value"])?;
        for (m, k, v) in &self.rows {
            w.write_record([m, k, v])?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push((rec[0].to_string(), rec[1].to_string(), rec[2].to_string()));
        }
        Ok(Self { rows })
    }
}

pub fn write_histogram(path: &Path, comments: &[String], stats: &TrialStats) -> Result<()> {
    let mut w = create(path, comments)?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    let h = &stats.histogram;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]), c.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub const PERCENTILES_HEADER: [&str; 8] = [
    "h",
    "trials",
    "p25",
    "p50",
    "p75",
    "variance",
    "diverged",
    "within_1e-3",
];

pub fn write_percentiles<'a>(
    path: &Path,
    comments: &[String],
    stats: impl IntoIterator<Item = (&'a usize, &'a TrialStats)>,
) -> Result<()> {
    let mut w = create(path, comments)?;
    w.write_record(PERCENTILES_HEADER)?;
    for (h, s) in stats {
        w.write_record([
            h.to_string(),
            s.distances.len().to_string(),
            fmt_f64(s.percentiles.p25),
            fmt_f64(s.percentiles.p50),
            fmt_f64(s.percentiles.p75),
            fmt_f64(s.variance),
            s.diverged.to_string(),
            fmt_f64(s.fraction_within(1e-3)),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Rows of `percentiles.csv` as `(h, p50)` pairs.
pub fn read_medians<R: Read>(r: R) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: &str| HarnessError::Parse {
            path: "<percentiles>".into(),
            line,
            msg: msg.into(),
        };
        let h = rec[0].parse().map_err(|_| bad("bad depth"))?;
        let p50 = rec[3].parse().map_err(|_| bad("bad median"))?;
        out.push((h, p50));
    }
    Ok(out)
}
