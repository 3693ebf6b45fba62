//! Backfitting of `y ~ g(x_S) + h(x_C)` with a supersmoother `g` and a
//! pluggable learner for `h`.

use std::sync::Arc;

use super::supersmooth::{supersmooth_with, SmootherConfig};
use super::{LearnerSpec, Predict, PredictorHandle, PredictorKind};
use crate::dataset::{ColumnSplit, FeatureMatrix};
use crate::error::{Error, Result};

/// One-dimensional piecewise-linear function: linear between knots,
/// constant beyond the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Smooth1d {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl Smooth1d {
    pub fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0] {
            return self.values[0];
        }
        let last = k.len() - 1;
        if x >= k[last] {
            return self.values[last];
        }
        // First knot strictly greater than x; x lies in [k[hi-1], k[hi]).
        let hi = k.partition_point(|&v| v <= x);
        let lo = hi - 1;
        let t = (x - k[lo]) / (k[hi] - k[lo]);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackfitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub smoother: SmootherConfig,
    /// Seed handed to the `h` learner on every pass.
    pub seed: u64,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 20,
            smoother: SmootherConfig::default(),
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackfitResult {
    /// Mean-centered smooth of `x_S`.
    pub g_star: Smooth1d,
    /// Model over the `C` columns only, in `split.c_indices()` order.
    pub h_star: PredictorHandle,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub split: ColumnSplit,
}

impl BackfitResult {
    /// The additive fit as a predictor over all `p` columns.
    pub fn into_predictor(self) -> PredictorHandle {
        let n_features = self.split.n_cols();
        let model = AdditiveModel {
            g: self.g_star,
            h: self.h_star,
            split: self.split,
        };
        PredictorHandle::new(PredictorKind::Additive, Arc::new(model))
            .with_meta("n_features", n_features)
            .with_meta("iterations", self.n_iterations)
            .with_meta("converged", self.converged)
    }
}

#[derive(Debug)]
struct AdditiveModel {
    g: Smooth1d,
    h: PredictorHandle,
    split: ColumnSplit,
}

impl Predict for AdditiveModel {
    fn n_features(&self) -> usize {
        self.split.n_cols()
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let p = self.split.n_cols();
        let c = self.split.c_indices();
        let mut c_rows = Vec::with_capacity(rows.len() / p * c.len());
        for row in rows.chunks_exact(p) {
            c_rows.extend(c.iter().map(|&j| row[j]));
        }
        let h = self.h.evaluate(&c_rows)?;
        Ok(rows
            .chunks_exact(p)
            .zip(h)
            .map(|(row, hv)| self.g.eval(row[self.split.s_index()]) + hv)
            .collect())
    }
}

fn sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Alternates `g <- smooth(x_S, y - h)` (then mean-centered) and
/// `h <- learner(x_C, y - g)` until the fitted values move less than
/// `tol * sd(y)` between passes, or `max_iter` passes have run.
pub fn backfit(
    data: &FeatureMatrix,
    split: &ColumnSplit,
    h_learner: &LearnerSpec,
    options: &BackfitOptions,
) -> Result<BackfitResult> {
    split.check(data)?;
    let n = data.n_rows();
    if n < 10 {
        return Err(Error::invalid(format!("backfitting needs at least 10 rows, got {n}")));
    }
    if options.tol.is_nan() || options.tol <= 0.0 {
        return Err(Error::invalid("tol must be positive"));
    }
    if options.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if split.c_indices().is_empty() {
        return Err(Error::invalid(
            "backfitting needs at least one column besides the feature",
        ));
    }

    let y = data.response();
    let xs = data.column(split.s_index());
    let c_data = data.select_columns(split.c_indices())?;
    let y_sd = sd(y);
    // A constant response has no scale; fall back to an absolute tolerance.
    let threshold = options.tol * if y_sd > 0.0 { y_sd } else { 1.0 };

    let mut h_vals = vec![0.0; n];
    let mut fitted = vec![0.0; n];
    let mut g_star = None;
    let mut h_star = None;
    let mut converged = false;
    let mut n_iterations = 0;

    for iteration in 1..=options.max_iter {
        n_iterations = iteration;
        let wrap = |e: Error| Error::Backfit {
            iteration,
            source: Box::new(e),
        };

        let partial: Vec<f64> = y.iter().zip(&h_vals).map(|(a, b)| a - b).collect();
        let smooth = supersmooth_with(xs, &partial, &options.smoother).map_err(wrap)?;
        let mut g_vals = smooth.fitted();
        let g_mean = g_vals.iter().sum::<f64>() / n as f64;
        g_vals.iter_mut().for_each(|v| *v -= g_mean);

        let target: Vec<f64> = y.iter().zip(&g_vals).map(|(a, b)| a - b).collect();
        let h_data = c_data.with_response(target).map_err(wrap)?;
        let h = h_learner.fit(&h_data, options.seed).map_err(wrap)?;
        h_vals = h.predict_data(&c_data).map_err(wrap)?;

        let mut change: f64 = 0.0;
        for i in 0..n {
            let new = g_vals[i] + h_vals[i];
            change = change.max((new - fitted[i]).abs());
            fitted[i] = new;
        }

        let mut knots = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for (x, v) in smooth.x_sorted.iter().zip(&smooth.smoothed) {
            if knots.last() != Some(x) {
                knots.push(*x);
                values.push(v - g_mean);
            }
        }
        g_star = Some(Smooth1d { knots, values });
        h_star = Some(h);

        if iteration > 1 && change <= threshold {
            converged = true;
            break;
        }
    }

    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(BackfitResult {
        g_star: g_star.expect("at least one pass"),
        h_star: h_star.expect("at least one pass"),
        fitted,
        residuals,
        n_iterations,
        converged,
        split: split.clone(),
    })
}
