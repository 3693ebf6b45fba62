use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Predict, PredictorHandle, PredictorKind};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Ordinary least squares with intercept: `b0 + sum_j b_j x_j`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl Predict for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows
            .chunks_exact(self.coefficients.len())
            .map(|row| self.intercept + row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum::<f64>())
            .collect())
    }
}

const RANK_TOL: f64 = 1e-10;

impl LinearModel {
    pub fn fit(data: &FeatureMatrix) -> Result<Self> {
        let n = data.n_rows();
        let p = data.n_cols();
        let cols = p + 1;
        if n < cols {
            return Err(Error::RankDeficient { rank: n, columns: cols });
        }
        let design = DMatrix::from_fn(n, cols, |i, j| if j == 0 { 1.0 } else { data.value(i, j - 1) });
        let y = DVector::from_column_slice(data.response());
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * max_sv).count();
        if rank < cols {
            return Err(Error::RankDeficient { rank, columns: cols });
        }
        let beta = svd
            .solve(&y, RANK_TOL * max_sv)
            .map_err(|e| Error::invalid(format!("least squares solve failed: {e}")))?;
        Ok(Self {
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        })
    }
}

pub fn fit_linear(data: &FeatureMatrix) -> Result<PredictorHandle> {
    let model = LinearModel::fit(data)?;
    Ok(PredictorHandle::new(PredictorKind::LinearLeastSquares, Arc::new(model)))
}
