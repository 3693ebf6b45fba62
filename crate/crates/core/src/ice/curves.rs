use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnSplit, FeatureMatrix};
use crate::error::{Error, Result};
use crate::predictors::PredictorHandle;
use crate::{rng, stats};

/// Where along `x_S` the curves are evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GridSpec {
    /// Unique observed values of `x_S`.
    #[default]
    Observed,
    /// `G` equally spaced points from min to max of `x_S`.
    Uniform(usize),
    /// `G` type-7 quantiles of `x_S` at probabilities `0, 1/(G-1), ..., 1`, deduplicated.
    Quantile(usize),
    /// Explicit points; sorted and deduplicated before use.
    Values(Vec<f64>),
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridSpec::Observed => f.write_str("observed"),
            GridSpec::Uniform(g) => write!(f, "uniform:{g}"),
            GridSpec::Quantile(g) => write!(f, "quantile:{g}"),
            GridSpec::Values(v) => write!(f, "values:{}", v.len()),
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, n) = s.split_once(':').unwrap_or((s, ""));
        let count = || {
            n.parse::<usize>()
                .map_err(|_| Error::invalid(format!("grid '{s}' needs a point count, e.g. {kind}:50")))
        };
        match kind {
            "observed" if n.is_empty() => Ok(GridSpec::Observed),
            "uniform" => Ok(GridSpec::Uniform(count()?)),
            "quantile" => Ok(GridSpec::Quantile(count()?)),
            _ => Err(Error::invalid(format!(
                "unknown grid '{s}' (expected observed, uniform:<G> or quantile:<G>)"
            ))),
        }
    }
}

impl GridSpec {
    pub fn resolve(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let sorted = stats::sorted_copy(xs);
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let mut grid = match self {
            GridSpec::Observed => sorted,
            GridSpec::Uniform(g) => {
                if *g < 2 {
                    return Err(Error::invalid("uniform grid needs at least 2 points"));
                }
                let step = (hi - lo) / (*g - 1) as f64;
                (0..*g)
                    .map(|l| if l + 1 == *g { hi } else { lo + step * l as f64 })
                    .collect()
            }
            GridSpec::Quantile(g) => {
                if *g < 2 {
                    return Err(Error::invalid("quantile grid needs at least 2 points"));
                }
                (0..*g)
                    .map(|l| stats::quantile_sorted(&sorted, l as f64 / (*g - 1) as f64))
                    .collect()
            }
            GridSpec::Values(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("grid values must be finite"));
                }
                stats::sorted_copy(v)
            }
        };
        grid.dedup();
        if grid.is_empty() {
            return Err(Error::invalid("empty grid"));
        }
        Ok(grid)
    }
}

/// Index of the grid point nearest to `x`; ties go to the lower index.
pub(crate) fn nearest_index(grid: &[f64], x: f64) -> usize {
    let hi = grid.partition_point(|&g| g < x);
    if hi == 0 {
        return 0;
    }
    if hi == grid.len() {
        return grid.len() - 1;
    }
    let lo = hi - 1;
    if x - grid[lo] <= grid[hi] - x {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceMeta {
    pub s_name: String,
    pub grid_spec: String,
    /// Data row behind each curve.
    pub rows: Vec<usize>,
    /// Each curve's own observed `x_S`.
    pub observed_xs: Vec<f64>,
    /// Deciles of the full observed `x_S` column.
    pub x_deciles: Vec<f64>,
    /// Observed range of the training response, `max y - min y`.
    pub y_range: f64,
    pub n_data_rows: usize,
    pub subsampled: bool,
}

/// One curve per observation plus their pointwise mean (the partial dependence).
///
/// Serializes as `{grid, curves, pdp, observed_index, meta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceCurves {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub pdp: Vec<f64>,
    pub observed_index: Vec<usize>,
    pub meta: IceMeta,
}

impl IceCurves {
    pub fn n_curves(&self) -> usize {
        self.curves.len()
    }

    pub fn s_name(&self) -> &str {
        &self.meta.s_name
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("curves serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("curve json: {e}")))
    }
}

/// Pointwise mean over curves.
pub(crate) fn column_means(curves: &[Vec<f64>], g: usize) -> Vec<f64> {
    let mut out = vec![0.0; g];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    let n = curves.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IceOptions {
    /// Rows per model call.
    pub batch_size: usize,
}

impl Default for IceOptions {
    fn default() -> Self {
        Self { batch_size: 10_000 }
    }
}

pub fn compute_ice(
    model: &PredictorHandle,
    data: &FeatureMatrix,
    split: &ColumnSplit,
    grid_spec: &GridSpec,
) -> Result<IceCurves> {
    compute_ice_with(model, data, split, grid_spec, &IceOptions::default())
}

/// For every row `i` and grid value `g`, evaluates the model at row `i` with
/// its `x_S` replaced by `g`.
pub fn compute_ice_with(
    model: &PredictorHandle,
    data: &FeatureMatrix,
    split: &ColumnSplit,
    grid_spec: &GridSpec,
    options: &IceOptions,
) -> Result<IceCurves> {
    split.check(data)?;
    let p = data.n_cols();
    if model.n_features() != p {
        return Err(Error::ArityMismatch {
            expected: model.n_features(),
            found: p,
        });
    }
    if options.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let s = split.s_index();
    let xs = data.column(s);
    let grid = grid_spec.resolve(xs)?;
    let n = data.n_rows();
    let g = grid.len();

    let total = n * g;
    let mut values = Vec::with_capacity(total);
    let mut buf = Vec::with_capacity(options.batch_size.min(total) * p);
    let mut row = vec![0.0; p];
    let mut start = 0;
    while start < total {
        let end = (start + options.batch_size).min(total);
        buf.clear();
        for k in start..end {
            let (i, l) = (k / g, k % g);
            data.copy_row(i, &mut row);
            row[s] = grid[l];
            buf.extend_from_slice(&row);
        }
        values.extend(model.evaluate(&buf)?);
        start = end;
    }

    let curves: Vec<Vec<f64>> = values.chunks_exact(g).map(<[f64]>::to_vec).collect();
    let pdp = column_means(&curves, g);
    let exact = matches!(grid_spec, GridSpec::Observed);
    let observed_index = xs
        .iter()
        .map(|&x| {
            if exact {
                grid.binary_search_by(|v| v.total_cmp(&x))
                    .unwrap_or_else(|_| nearest_index(&grid, x))
            } else {
                nearest_index(&grid, x)
            }
        })
        .collect();
    let y = data.response();
    let y_range = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(IceCurves {
        grid,
        curves,
        pdp,
        observed_index,
        meta: IceMeta {
            s_name: data.names()[s].clone(),
            grid_spec: grid_spec.to_string(),
            rows: (0..n).collect(),
            observed_xs: xs.to_vec(),
            x_deciles: stats::deciles(xs),
            y_range,
            n_data_rows: n,
            subsampled: false,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSpec {
    Fraction(f64),
    Count(usize),
}

impl FromStr for SampleSpec {
    type Err = Error;

    /// Values in `(0, 1]` are fractions; integers above 1 are counts.
    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("bad sample size '{s}'")))?;
        if v > 1.0 && v.fract() == 0.0 {
            Ok(SampleSpec::Count(v as usize))
        } else {
            Ok(SampleSpec::Fraction(v))
        }
    }
}

/// Uniform subsample of curves without replacement. The PDP is recomputed
/// over the kept curves and the result is flagged as subsampled.
pub fn sample_curves(ice: &IceCurves, spec: SampleSpec, seed: u64) -> Result<IceCurves> {
    let n = ice.n_curves();
    let count = match spec {
        SampleSpec::Fraction(f) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid(format!("sample fraction must be in (0, 1], got {f}")));
            }
            ((f * n as f64).round() as usize).max(1)
        }
        SampleSpec::Count(c) => {
            if c == 0 || c > n {
                return Err(Error::invalid(format!("sample count must be in 1..={n}, got {c}")));
            }
            c
        }
    };
    if count == n {
        return Ok(ice.clone());
    }
    let mut rng = rng::seeded(seed);
    let mut keep = sample(&mut rng, n, count).into_vec();
    keep.sort_unstable();

    let curves: Vec<Vec<f64>> = keep.iter().map(|&i| ice.curves[i].clone()).collect();
    let pdp = column_means(&curves, ice.grid.len());
    let mut meta = ice.meta.clone();
    meta.rows = keep.iter().map(|&i| ice.meta.rows[i]).collect();
    meta.observed_xs = keep.iter().map(|&i| ice.meta.observed_xs[i]).collect();
    meta.subsampled = true;
    Ok(IceCurves {
        grid: ice.grid.clone(),
        curves,
        pdp,
        observed_index: keep.iter().map(|&i| ice.observed_index[i]).collect(),
        meta,
    })
}
