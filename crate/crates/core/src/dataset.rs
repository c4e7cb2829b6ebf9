//! Design matrices, text loaders and preprocessing.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose sample standard deviation falls below this are dropped.
pub const CONSTANT_COLUMN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    BinaryClassification,
}

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Dimension("columns of unequal length".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data: columns.into_iter().flatten().collect(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("rows of unequal length".into()));
        }
        let mut data = vec![0.0; n_rows * n_cols];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * n_rows + i] = v;
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n_rows + i]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_rows.max(1)).take(self.n_cols)
    }

    /// `out = X b + b0`, skipping zero coefficients.
    pub fn margins_into(&self, b: &[f64], b0: f64, out: &mut [f64]) {
        out.fill(b0);
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                for (o, &x) in out.iter_mut().zip(self.column(j)) {
                    *o += bj * x;
                }
            }
        }
    }

    pub fn margins(&self, b: &[f64], b0: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.margins_into(b, b0, &mut out);
        out
    }

    /// `out_j = sum_i v_i x_ij`.
    pub fn transpose_mul_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(self.columns()) {
            *o = dot(col, v);
        }
    }

    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        self.transpose_mul_into(v, &mut out);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DesignMatrix,
    y: Vec<f64>,
    feature_names: Option<Vec<String>>,
    task: Task,
}

impl Dataset {
    pub fn new(
        x: DesignMatrix,
        y: Vec<f64>,
        feature_names: Option<Vec<String>>,
        task: Task,
    ) -> Result<Self> {
        if y.len() != x.n_rows() {
            return Err(Error::Dimension(format!(
                "{} responses for {} rows",
                y.len(),
                x.n_rows()
            )));
        }
        if x.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.n_rows() < 2 {
            return Err(Error::Parameter("need at least two instances".into()));
        }
        if x.n_cols() == 0 {
            return Err(Error::Parameter("need at least one feature".into()));
        }
        if let Some(names) = &feature_names {
            if names.len() != x.n_cols() {
                return Err(Error::Dimension(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    x.n_cols()
                )));
            }
        }
        if x.data.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite entry".into()));
        }
        if task == Task::BinaryClassification {
            if let Some(&bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidLabel { label: bad });
            }
            if y.iter().all(|&v| v == y[0]) {
                return Err(Error::SingleClass);
            }
        }
        Ok(Self {
            x,
            y,
            feature_names,
            task,
        })
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn d(&self) -> usize {
        self.x.n_cols()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Copy of this dataset with `j`-th column replaced.
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n() || j >= self.d() {
            return Err(Error::Dimension("replacement column".into()));
        }
        let mut x = self.x.clone();
        let n = self.n();
        x.data[j * n..(j + 1) * n].copy_from_slice(&values);
        Self::new(x, self.y.clone(), self.feature_names.clone(), self.task)
    }
}

/// Maps raw labels onto {-1, +1} (smaller value to -1) for binary tasks.
fn map_binary_labels(y: &mut [f64]) -> Result<()> {
    let mut distinct: Vec<f64> = y.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    match distinct.len() {
        0 => Err(Error::EmptyDataset),
        1 => Err(Error::SingleClass),
        2 => {
            let lo = distinct[0];
            for v in y.iter_mut() {
                *v = if *v == lo { -1.0 } else { 1.0 };
            }
            Ok(())
        }
        k => Err(Error::TooManyClasses(k)),
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{token}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{token}'"),
        });
    }
    Ok(v)
}

/// Parses LIBSVM text (`label idx:val ...`, 1-based increasing indices).
///
/// Absent entries are zero; `d` is the largest index seen. Blank lines and
/// `#` comments are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, task: Task) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = parse_number(tokens.next().unwrap_or_default(), lineno)?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected idx:val, got '{tok}'"),
            })?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad feature index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("index {idx} not strictly increasing"),
                });
            }
            last = idx;
            row.push((idx - 1, parse_number(val, lineno)?));
        }
        d = d.max(last);
        labels.push(label);
        entries.push(row);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if d == 0 {
        return Err(Error::Parameter("no features present".into()));
    }
    let n = labels.len();
    let mut columns = vec![vec![0.0; n]; d];
    for (i, row) in entries.into_iter().enumerate() {
        for (j, v) in row {
            columns[j][i] = v;
        }
    }
    if task == Task::BinaryClassification {
        map_binary_labels(&mut labels)?;
    }
    Dataset::new(DesignMatrix::from_columns(columns)?, labels, None, task)
}

/// Writes LIBSVM text. The last feature is always written so that `d`
/// survives a round trip even when the final column is sparse.
pub fn write_libsvm(dataset: &Dataset) -> String {
    let mut out = String::new();
    let d = dataset.d();
    for i in 0..dataset.n() {
        let _ = write!(out, "{}", dataset.y()[i]);
        for j in 0..d {
            let v = dataset.x().get(i, j);
            if v != 0.0 || j + 1 == d {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "?" | "null" | "none"
    )
}

/// Parses a comma-separated numeric table. A first row containing any
/// non-numeric cell is taken as the header.
pub fn parse_csv<R: std::io::Read>(reader: R, label: &LabelColumn, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (k, record) in rdr.records().enumerate() {
        let lineno = k + 1;
        let record = record.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {w} cells, found {}", record.len()),
            });
        }
        if k == 0
            && record
                .iter()
                .any(|c| !is_missing(c) && c.parse::<f64>().is_err())
        {
            header = Some(record.iter().map(str::to_owned).collect());
            continue;
        }
        let mut row = Vec::with_capacity(w);
        for (c, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::MissingValue {
                    line: lineno,
                    column: c + 1,
                });
            }
            row.push(parse_number(cell, lineno)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = width.unwrap_or(0);
    let label_idx = match label {
        LabelColumn::Index(i) if *i < w => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Parameter(format!(
                "label column {i} missing (table has {w} columns)"
            )))
        }
        LabelColumn::Name(name) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::Parameter(format!("label column '{name}' not found")))?,
    };
    let mut y: Vec<f64> = rows.iter().map(|r| r[label_idx]).collect();
    let columns: Vec<Vec<f64>> = (0..w)
        .filter(|&c| c != label_idx)
        .map(|c| rows.iter().map(|r| r[c]).collect())
        .collect();
    let names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|&(c, _)| c != label_idx)
            .map(|(_, s)| s)
            .collect()
    });
    if task == Task::BinaryClassification {
        map_binary_labels(&mut y)?;
    }
    Dataset::new(DesignMatrix::from_columns(columns)?, y, names, task)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport {
    /// Means of the retained columns.
    pub means: Vec<f64>,
    /// Sample (n - 1) standard deviations of the retained columns.
    pub stds: Vec<f64>,
    /// Original indices of the retained columns.
    pub kept: Vec<usize>,
    /// Original indices of dropped constant columns.
    pub dropped_constant: Vec<usize>,
}

/// Centers each feature to mean 0 and scales it to sample standard deviation 1.
/// Constant columns are dropped; the response is left untouched.
pub fn standardize(dataset: &Dataset) -> Result<(Dataset, StandardizationReport)> {
    let n = dataset.n();
    let mut report = StandardizationReport {
        means: Vec::new(),
        stds: Vec::new(),
        kept: Vec::new(),
        dropped_constant: Vec::new(),
    };
    let mut columns = Vec::new();
    for (j, col) in dataset.x().columns().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        if std < CONSTANT_COLUMN_STD {
            report.dropped_constant.push(j);
            continue;
        }
        let mut z: Vec<f64> = col.iter().map(|v| (v - mean) / std).collect();
        // Second pass removes the residual mean left by rounding.
        let m2 = z.iter().sum::<f64>() / n as f64;
        z.iter_mut().for_each(|v| *v -= m2);
        report.means.push(mean);
        report.stds.push(std);
        report.kept.push(j);
        columns.push(z);
    }
    if columns.is_empty() {
        return Err(Error::AllConstant);
    }
    let names = dataset
        .feature_names()
        .map(|names| report.kept.iter().map(|&j| names[j].clone()).collect());
    let out = Dataset::new(
        DesignMatrix::from_columns(columns)?,
        dataset.y().to_vec(),
        names,
        dataset.task(),
    )?;
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub task: Task,
    pub n: usize,
    pub d: usize,
    pub sparsity: usize,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// Sorted indices of the planted nonzero coefficients.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

/// Standard-normal features with a planted sparse linear model.
///
/// Regression responses are `x b + b0 + noise * N(0, 1)`; classification
/// labels are the sign of the same quantity (zero maps to +1).
pub fn synth(p: &SynthParams) -> Result<Synthetic> {
    if p.n < 2 || p.d == 0 {
        return Err(Error::Parameter(format!(
            "invalid size n={} d={}",
            p.n, p.d
        )));
    }
    if p.sparsity == 0 || p.sparsity > p.d {
        return Err(Error::Parameter(format!(
            "sparsity must be in 1..={}, got {}",
            p.d, p.sparsity
        )));
    }
    if !(p.noise >= 0.0 && p.noise.is_finite()) {
        return Err(Error::Parameter(format!("invalid noise {}", p.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let columns: Vec<Vec<f64>> = (0..p.d)
        .map(|_| (0..p.n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut support = sample(&mut rng, p.d, p.sparsity).into_vec();
    support.sort_unstable();
    let mut coefficients = vec![0.0; p.d];
    for &j in &support {
        let magnitude = 1.0 + rng.random::<f64>();
        coefficients[j] = if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        };
    }
    let intercept = match p.task {
        Task::Regression => 0.5,
        Task::BinaryClassification => 0.2,
    };
    let x = DesignMatrix::from_columns(columns)?;
    let mut y = x.margins(&coefficients, intercept);
    if p.noise > 0.0 {
        for v in &mut y {
            *v += p.noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if p.task == Task::BinaryClassification {
        for v in &mut y {
            *v = if *v >= 0.0 { 1.0 } else { -1.0 };
        }
    }
    Ok(Synthetic {
        dataset: Dataset::new(x, y, None, p.task)?,
        support,
        coefficients,
        intercept,
    })
}
