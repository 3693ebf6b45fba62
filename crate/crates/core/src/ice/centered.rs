use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::curves::{column_means, nearest_index, IceCurves, IceMeta};
use crate::error::{Error, Result};

/// Choice of the pinch point `x*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinchSpec {
    Min,
    Max,
    /// Snapped to the nearest grid point.
    Value(f64),
}

impl FromStr for PinchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(PinchSpec::Min),
            "max" => Ok(PinchSpec::Max),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(PinchSpec::Value)
                .ok_or_else(|| Error::invalid(format!("pinch must be min, max or a number, got '{s}'"))),
        }
    }
}

/// ICE curves shifted so that each one is zero at the pinch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredIceCurves {
    pub x_star: f64,
    pub pinch_index: usize,
    pub requested: PinchSpec,
    /// True when a `Value` pinch was moved onto the grid.
    pub snapped: bool,
    pub grid: Vec<f64>,
    pub curves_centered: Vec<Vec<f64>>,
    /// Mean of the centered curves.
    pub pdp: Vec<f64>,
    pub observed_index: Vec<usize>,
    pub meta: IceMeta,
}

impl CenteredIceCurves {
    pub fn y_range(&self) -> f64 {
        self.meta.y_range
    }

    pub fn n_curves(&self) -> usize {
        self.curves_centered.len()
    }

    /// The centered curves viewed as plain ICE curves.
    pub fn as_ice(&self) -> IceCurves {
        IceCurves {
            grid: self.grid.clone(),
            curves: self.curves_centered.clone(),
            pdp: self.pdp.clone(),
            observed_index: self.observed_index.clone(),
            meta: self.meta.clone(),
        }
    }
}

pub fn center_ice(ice: &IceCurves, pinch: PinchSpec) -> Result<CenteredIceCurves> {
    if ice.curves.is_empty() {
        return Err(Error::invalid("no curves to center"));
    }
    let g = ice.grid.len();
    let (pinch_index, snapped) = match pinch {
        PinchSpec::Min => (0, false),
        PinchSpec::Max => (g - 1, false),
        PinchSpec::Value(v) => {
            let k = nearest_index(&ice.grid, v);
            (k, ice.grid[k] != v)
        }
    };
    let curves_centered: Vec<Vec<f64>> = ice
        .curves
        .iter()
        .map(|c| {
            let base = c[pinch_index];
            c.iter().map(|v| v - base).collect()
        })
        .collect();
    let pdp = column_means(&curves_centered, g);
    Ok(CenteredIceCurves {
        x_star: ice.grid[pinch_index],
        pinch_index,
        requested: pinch,
        snapped,
        grid: ice.grid.clone(),
        curves_centered,
        pdp,
        observed_index: ice.observed_index.clone(),
        meta: ice.meta.clone(),
    })
}
