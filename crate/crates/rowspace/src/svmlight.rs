//! Reader for the svmlight / libsvm text format: one sample per line,
//! `<label> <index>:<value> ...` with 1-based feature indices. Labels become
//! `b` and features the rows of `A`.

use std::fs;
use std::path::Path;

use rowspace_core::{Matrix, ProblemInstance, Vector};

use crate::error::{HarnessError, Result};

/// Compressed sparse rows as read from disk, before any preprocessing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsrMatrix {
    pub labels: Vec<f64>,
    pub indptr: Vec<usize>,
    /// Zero-based column indices, strictly increasing within a row.
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
    pub ncols: usize,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.labels.len()
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.data[range].iter().copied())
    }

    /// Drops every column without a nonzero entry, keeping the order of the rest.
    pub fn remove_zero_columns(&mut self) {
        let mut used = vec![false; self.ncols];
        for (&j, &v) in self.indices.iter().zip(&self.data) {
            if v != 0.0 {
                used[j] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.ncols];
        let mut next = 0;
        for (j, u) in used.iter().enumerate() {
            if *u {
                remap[j] = next;
                next += 1;
            }
        }
        let mut indptr = vec![0];
        let (mut indices, mut data) = (Vec::new(), Vec::new());
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    indices.push(remap[j]);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.data = data;
        self.ncols = next;
    }

    pub fn to_dense(&self) -> (Matrix, Vector) {
        let mut a = Matrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        (a, Vector::from_column_slice(&self.labels))
    }
}

/// Parses svmlight text. Blank lines and `#` comments are skipped; a trailing
/// `qid:` token is ignored.
pub fn parse_svmlight(text: &str, path: &Path) -> Result<CsrMatrix> {
    let err = |line: usize, msg: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut m = CsrMatrix {
        indptr: vec![0],
        ..Default::default()
    };
    for (lineno, raw) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap_or_default();
        let label: f64 = label.parse().map_err(|_| err(lineno, format!("bad label {label:?}")))?;
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("expected index:value, got {tok:?}")))?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx
                .parse()
                .map_err(|_| err(lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err(lineno, "feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(lineno, format!("feature index {idx} is not increasing")));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(lineno, format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(lineno, format!("non-finite feature value {val}")));
            }
            prev = idx;
            m.indices.push(idx - 1);
            m.data.push(val);
            m.ncols = m.ncols.max(idx);
        }
        m.labels.push(label);
        m.indptr.push(m.indices.len());
    }
    if m.labels.is_empty() {
        return Err(HarnessError::EmptyFile(path.to_path_buf()));
    }
    Ok(m)
}

/// Loads a problem, removing all-zero columns and dividing `A` and `b` by
/// `scale` when given.
pub fn load_svmlight(path: &Path, scale: Option<f64>) -> Result<ProblemInstance> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut csr = parse_svmlight(&text, path)?;
    csr.remove_zero_columns();
    let (mut a, mut b) = csr.to_dense();
    if let Some(s) = scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(HarnessError::Config(format!("scale must be positive, got {s}")));
        }
        a /= s;
        b /= s;
    }
    Ok(ProblemInstance::new(a, b)?)
}
