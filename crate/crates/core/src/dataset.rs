//! Tabular data: ingestion, the S/C column split and the synthetic generators.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Numeric predictor matrix stored by column, plus the response.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    response_name: String,
    response: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<(String, Vec<f64>)>, response_name: impl Into<String>, response: Vec<f64>) -> Result<Self> {
        let n = response.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 rows, got {n}")));
        }
        let mut seen = HashSet::new();
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, values) in columns {
            if name.is_empty() {
                return Err(Error::invalid("empty column name"));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateColumn(name));
            }
            if values.len() != n {
                return Err(Error::invalid(format!(
                    "column '{name}' has {} values, response has {n}",
                    values.len()
                )));
            }
            if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("column '{name}' row {} is not finite", row + 1)));
            }
            names.push(name);
            cols.push(values);
        }
        if let Some(row) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("response row {} is not finite", row + 1)));
        }
        Ok(Self {
            names,
            columns: cols,
            response_name: response_name.into(),
            response,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(self.column(self.column_index(name)?))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    /// Copies row `i` into `out` (length `n_cols`).
    pub fn copy_row(&self, i: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.columns) {
            *o = c[i];
        }
    }

    /// Row-major copy of all predictors.
    pub fn rows_flat(&self) -> Vec<f64> {
        let p = self.n_cols();
        let mut out = vec![0.0; self.n_rows() * p];
        for (i, row) in out.chunks_exact_mut(p.max(1)).enumerate().take(self.n_rows()) {
            self.copy_row(i, row);
        }
        out
    }

    /// Same predictors with a different response.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.n_rows() {
            return Err(Error::invalid(format!(
                "replacement response has {} values, expected {}",
                response.len(),
                self.n_rows()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("replacement response is not finite"));
        }
        Ok(Self {
            response,
            ..self.clone()
        })
    }

    /// Keeps only the listed columns, in the listed order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let mut cols = Vec::with_capacity(indices.len());
        for &j in indices {
            if j >= self.n_cols() {
                return Err(Error::invalid(format!("column index {j} out of range")));
            }
            cols.push((self.names[j].clone(), self.columns[j].clone()));
        }
        Self::new(cols, self.response_name.clone(), self.response.clone())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(&self.response_name);
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            record.push(self.response[i].to_string());
            w.write_record(&record).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, response_name: &str) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, response_name)
}

/// Parses numeric CSV with a mandatory header. Rows are numbered from 1 for
/// the first data row.
pub fn read_csv<R: Read>(input: R, response_name: &str) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Csv("missing header row".into()));
    }
    let mut seen = HashSet::new();
    for h in &header {
        if h.is_empty() {
            return Err(Error::Csv("empty column name in header".into()));
        }
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let response_col = header
        .iter()
        .position(|h| h == response_name)
        .ok_or_else(|| Error::UnknownColumn(response_name.to_string()))?;

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: cell.to_string(),
                });
            }
            values[j].push(v);
        }
    }

    let response = std::mem::take(&mut values[response_col]);
    let columns = header
        .iter()
        .cloned()
        .zip(values)
        .enumerate()
        .filter(|(j, _)| *j != response_col)
        .map(|(_, c)| c)
        .collect();
    FeatureMatrix::new(columns, response_name, response)
}

/// Single feature of interest (`S`) and its complement (`C`), as column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSplit {
    s_index: usize,
    c_indices: Vec<usize>,
}

impl ColumnSplit {
    /// `S` = column `s_index`, `C` = all other columns in their original order.
    pub fn new(s_index: usize, n_cols: usize) -> Result<Self> {
        if s_index >= n_cols {
            return Err(Error::invalid(format!(
                "feature index {s_index} out of range for {n_cols} columns"
            )));
        }
        Ok(Self {
            s_index,
            c_indices: (0..n_cols).filter(|&j| j != s_index).collect(),
        })
    }

    /// Split with an explicit ordering of the complement.
    pub fn with_complement(s_index: usize, c_indices: Vec<usize>) -> Result<Self> {
        let p = c_indices.len() + 1;
        let mut seen = vec![false; p];
        for &j in std::iter::once(&s_index).chain(&c_indices) {
            if j >= p || seen[j] {
                return Err(Error::invalid("split must partition the columns 0..p exactly once"));
            }
            seen[j] = true;
        }
        Ok(Self { s_index, c_indices })
    }

    pub fn by_name(data: &FeatureMatrix, name: &str) -> Result<Self> {
        Self::new(data.column_index(name)?, data.n_cols())
    }

    pub fn s_index(&self) -> usize {
        self.s_index
    }

    pub fn c_indices(&self) -> &[usize] {
        &self.c_indices
    }

    pub fn n_cols(&self) -> usize {
        self.c_indices.len() + 1
    }

    pub(crate) fn check(&self, data: &FeatureMatrix) -> Result<()> {
        if self.n_cols() != data.n_cols() {
            return Err(Error::invalid(format!(
                "split covers {} columns, data has {}",
                self.n_cols(),
                data.n_cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    /// `y = 0.2 x1 - 5 x2 + 10 x2 1[x3 >= 0] + e`, predictors iid U(-1, 1).
    CrissCross,
    /// `y = x1^2 + x2 + e`, predictors iid U(-1, 1).
    AdditiveParabola,
    /// `y = 10 x1^2 + 1[x2 >= 0] + e` with the positive quadrant left empty.
    ExtrapolationQuadrant,
}

impl SimModel {
    pub fn n_features(self) -> usize {
        match self {
            SimModel::CrissCross => 3,
            SimModel::AdditiveParabola | SimModel::ExtrapolationQuadrant => 2,
        }
    }

    /// Noise level used by the reference experiments.
    pub fn default_noise_sd(self) -> f64 {
        match self {
            SimModel::CrissCross | SimModel::AdditiveParabola => 1.0,
            SimModel::ExtrapolationQuadrant => 0.1,
        }
    }

    pub fn mean(self, x: &[f64]) -> f64 {
        match self {
            SimModel::CrissCross => {
                let ind = if x[2] >= 0.0 { 1.0 } else { 0.0 };
                0.2 * x[0] - 5.0 * x[1] + 10.0 * x[1] * ind
            }
            SimModel::AdditiveParabola => x[0] * x[0] + x[1],
            SimModel::ExtrapolationQuadrant => {
                let ind = if x[1] >= 0.0 { 1.0 } else { 0.0 };
                10.0 * x[0] * x[0] + ind
            }
        }
    }
}

impl FromStr for SimModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "criss_cross" => Ok(SimModel::CrissCross),
            "additive_parabola" => Ok(SimModel::AdditiveParabola),
            "extrapolation_quadrant" => Ok(SimModel::ExtrapolationQuadrant),
            _ => Err(Error::invalid(format!(
                "unknown simulation model '{s}' (expected criss-cross, additive-parabola or extrapolation-quadrant)"
            ))),
        }
    }
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimModel::CrissCross => "criss-cross",
            SimModel::AdditiveParabola => "additive-parabola",
            SimModel::ExtrapolationQuadrant => "extrapolation-quadrant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub model: SimModel,
    pub n: usize,
    pub seed: u64,
    pub noise_sd: f64,
}

impl SimSpec {
    pub fn new(model: SimModel, n: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            seed,
            noise_sd: model.default_noise_sd(),
        }
    }

    pub fn noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }
}

/// Draws a dataset from one of the reference generating processes.
pub fn simulate(spec: &SimSpec) -> Result<FeatureMatrix> {
    if spec.n < 2 {
        // FeatureMatrix needs two rows; a single draw is not a usable dataset.
        return Err(Error::invalid(format!("n must be at least 2, got {}", spec.n)));
    }
    if !(spec.noise_sd >= 0.0 && spec.noise_sd.is_finite()) {
        return Err(Error::invalid("noise_sd must be finite and non-negative"));
    }
    let p = spec.model.n_features();
    let mut rng = rng::seeded(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cols = vec![Vec::with_capacity(spec.n); p];
    let mut y = Vec::with_capacity(spec.n);
    let mut x = vec![0.0; p];
    for _ in 0..spec.n {
        match spec.model {
            SimModel::CrissCross | SimModel::AdditiveParabola => {
                for v in x.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            SimModel::ExtrapolationQuadrant => {
                // Three equally likely unit squares; [0,1] x [0,1] never drawn.
                let (r1, r2) = match rng.random_range(0..3u8) {
                    0 => (-1.0..0.0, -1.0..0.0),
                    1 => (0.0..1.0, -1.0..0.0),
                    _ => (-1.0..0.0, 0.0..1.0),
                };
                x[0] = rng.random_range(r1);
                x[1] = rng.random_range(r2);
            }
        }
        let e: f64 = noise.sample(&mut rng);
        let mean = spec.model.mean(&x);
        y.push(if spec.noise_sd == 0.0 {
            mean
        } else {
            mean + spec.noise_sd * e
        });
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
    }
    let columns = cols
        .into_iter()
        .enumerate()
        .map(|(j, c)| (format!("x{}", j + 1), c))
        .collect();
    FeatureMatrix::new(columns, "y", y)
}
