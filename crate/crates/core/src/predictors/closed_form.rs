//! Analytic functions wrapped as fitted models, for exact oracle tests.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{Predict, PredictorHandle, PredictorKind};
use crate::dataset::SimModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormExpr {
    /// `0.2 x1 - 5 x2 + 10 x2 1[x3 >= 0]`
    CrissCrossMean,
    /// `x1^2 + x2`
    AdditiveParabolaMean,
    /// `10 x1^2 + 1[x2 >= 0]`
    QuadrantMean,
    /// `params[0]` everywhere.
    Constant,
    /// `params[0] + sum_j params[j + 1] x_j`
    Linear,
    /// Sum of all features.
    Sum,
    /// Product of all features.
    Product,
}

impl ClosedFormExpr {
    /// Fixed feature count, if the expression has one.
    fn arity(self) -> Option<usize> {
        match self {
            ClosedFormExpr::CrissCrossMean => Some(3),
            ClosedFormExpr::AdditiveParabolaMean | ClosedFormExpr::QuadrantMean => Some(2),
            _ => None,
        }
    }

    fn check_params(self, params: &[f64], n_features: usize) -> Result<()> {
        let expected = match self {
            ClosedFormExpr::Constant => 1,
            ClosedFormExpr::Linear => n_features + 1,
            _ => 0,
        };
        if params.len() != expected {
            return Err(Error::invalid(format!(
                "closed-form {self} takes {expected} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("closed-form parameters must be finite"));
        }
        Ok(())
    }
}

impl fmt::Display for ClosedFormExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClosedFormExpr::CrissCrossMean => "criss-cross-mean",
            ClosedFormExpr::AdditiveParabolaMean => "additive-parabola-mean",
            ClosedFormExpr::QuadrantMean => "quadrant-mean",
            ClosedFormExpr::Constant => "constant",
            ClosedFormExpr::Linear => "linear",
            ClosedFormExpr::Sum => "sum",
            ClosedFormExpr::Product => "product",
        })
    }
}

impl FromStr for ClosedFormExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('_', "-").as_str() {
            "criss-cross-mean" => ClosedFormExpr::CrissCrossMean,
            "additive-parabola-mean" => ClosedFormExpr::AdditiveParabolaMean,
            "quadrant-mean" | "extrapolation-quadrant-mean" => ClosedFormExpr::QuadrantMean,
            "constant" => ClosedFormExpr::Constant,
            "linear" => ClosedFormExpr::Linear,
            "sum" | "echo-sum" => ClosedFormExpr::Sum,
            "product" => ClosedFormExpr::Product,
            _ => return Err(Error::invalid(format!("unknown closed-form expression '{s}'"))),
        })
    }
}

#[derive(Debug)]
struct ClosedForm {
    expr: ClosedFormExpr,
    params: Vec<f64>,
    n_features: usize,
}

impl ClosedForm {
    fn eval(&self, x: &[f64]) -> f64 {
        match self.expr {
            ClosedFormExpr::CrissCrossMean => SimModel::CrissCross.mean(x),
            ClosedFormExpr::AdditiveParabolaMean => SimModel::AdditiveParabola.mean(x),
            ClosedFormExpr::QuadrantMean => SimModel::ExtrapolationQuadrant.mean(x),
            ClosedFormExpr::Constant => self.params[0],
            ClosedFormExpr::Linear => self.params[0] + x.iter().zip(&self.params[1..]).map(|(a, b)| a * b).sum::<f64>(),
            ClosedFormExpr::Sum => x.iter().sum(),
            ClosedFormExpr::Product => x.iter().product(),
        }
    }
}

impl Predict for ClosedForm {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        Ok(rows.chunks_exact(self.n_features).map(|r| self.eval(r)).collect())
    }
}

pub fn closed_form(expr: ClosedFormExpr, params: &[f64], n_features: usize) -> Result<PredictorHandle> {
    if let Some(arity) = expr.arity() {
        if arity != n_features {
            return Err(Error::ArityMismatch {
                expected: arity,
                found: n_features,
            });
        }
    }
    if n_features == 0 {
        return Err(Error::invalid("closed-form predictor needs at least one feature"));
    }
    expr.check_params(params, n_features)?;
    let model = ClosedForm {
        expr,
        params: params.to_vec(),
        n_features,
    };
    Ok(PredictorHandle::new(PredictorKind::ClosedForm, Arc::new(model)).with_meta("expr", expr))
}
