use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{IceCurves, IceMeta};
use crate::error::{Error, Result};
use crate::predictors::{supersmooth_with, SmootherConfig};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    /// Supersmooth each curve, then take central differences.
    #[default]
    SmoothedCentral,
    /// Central differences of the raw curve. Diagnostics only.
    RawCentral,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiceOptions {
    pub smoother: SmootherConfig,
    pub method: DerivativeMethod,
}

/// Per-curve derivative estimates and their pointwise standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DIceCurves {
    pub grid: Vec<f64>,
    pub dcurves: Vec<Vec<f64>>,
    pub sd_curve: Vec<f64>,
    pub smoother_config: SmootherConfig,
    pub method: DerivativeMethod,
    pub observed_index: Vec<usize>,
    pub meta: IceMeta,
}

impl DIceCurves {
    pub fn n_curves(&self) -> usize {
        self.dcurves.len()
    }
}

/// Derivative of tabulated values on a sorted, possibly non-uniform grid:
/// central differences inside, one-sided differences at the two ends.
pub fn central_differences(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let g = grid.len();
    debug_assert!(g >= 2 && values.len() == g);
    (0..g)
        .map(|l| {
            let (a, b) = match l {
                0 => (0, 1),
                l if l + 1 == g => (g - 2, g - 1),
                l => (l - 1, l + 1),
            };
            (values[b] - values[a]) / (grid[b] - grid[a])
        })
        .collect()
}

pub fn compute_dice(ice: &IceCurves, options: &DiceOptions) -> Result<DIceCurves> {
    let g = ice.grid.len();
    if g < 5 {
        return Err(Error::invalid(format!(
            "derivative curves need at least 5 distinct grid points, got {g}"
        )));
    }
    if ice.curves.len() < 2 {
        return Err(Error::invalid("derivative sd needs at least 2 curves"));
    }
    let dcurves = ice
        .curves
        .par_iter()
        .map(|curve| {
            let values = match options.method {
                DerivativeMethod::SmoothedCentral => supersmooth_with(&ice.grid, curve, &options.smoother)?.fitted(),
                DerivativeMethod::RawCentral => curve.clone(),
            };
            Ok(central_differences(&ice.grid, &values))
        })
        .collect::<Result<Vec<_>>>()?;
    let sd_curve = pointwise_sd(&dcurves, g);
    Ok(DIceCurves {
        grid: ice.grid.clone(),
        dcurves,
        sd_curve,
        smoother_config: options.smoother,
        method: options.method,
        observed_index: ice.observed_index.clone(),
        meta: ice.meta.clone(),
    })
}

fn pointwise_sd(dcurves: &[Vec<f64>], g: usize) -> Vec<f64> {
    let mut column = vec![0.0; dcurves.len()];
    (0..g)
        .map(|l| {
            for (c, d) in column.iter_mut().zip(dcurves) {
                *c = d[l];
            }
            stats::sample_sd(&column)
        })
        .collect()
}

/// Pointwise sample standard deviation (n - 1 denominator) across derivative curves.
pub fn derivative_sd_curve(dice: &DIceCurves) -> Result<Vec<f64>> {
    if dice.dcurves.len() < 2 {
        return Err(Error::invalid("need at least 2 derivative curves"));
    }
    Ok(pointwise_sd(&dice.dcurves, dice.grid.len()))
}

/// Maximal run of grid points where the derivative sd is high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiInterval {
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    pub lo: f64,
    pub hi: f64,
    pub peak_index: usize,
    pub peak_x: f64,
    pub peak_sd: f64,
}

/// Regions of interaction: maximal contiguous runs with
/// `sd_curve >= theta * max(sd_curve)`. An all-zero curve has none.
pub fn find_roi(sd_curve: &[f64], grid: &[f64], theta: f64) -> Result<Vec<RoiInterval>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid(format!("theta must be in (0, 1], got {theta}")));
    }
    if sd_curve.len() != grid.len() {
        return Err(Error::invalid("sd curve and grid lengths differ"));
    }
    let max = sd_curve.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    let cut = theta * max;
    let mut out = Vec::new();
    let mut l = 0;
    while l < sd_curve.len() {
        if sd_curve[l] < cut {
            l += 1;
            continue;
        }
        let start = l;
        let mut peak = l;
        while l < sd_curve.len() && sd_curve[l] >= cut {
            if sd_curve[l] > sd_curve[peak] {
                peak = l;
            }
            l += 1;
        }
        out.push(RoiInterval {
            start_index: start,
            end_index: l - 1,
            lo: grid[start],
            hi: grid[l - 1],
            peak_index: peak,
            peak_x: grid[peak],
            peak_sd: sd_curve[peak],
        });
    }
    Ok(out)
}
