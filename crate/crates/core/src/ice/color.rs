use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::stats;

/// Columns with at most this many distinct values are colored by level in `auto` mode.
pub const MAX_AUTO_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    #[default]
    Auto,
    Categorical,
    Continuous,
}

impl FromStr for ColorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ColorMode::Auto),
            "categorical" => Ok(ColorMode::Categorical),
            "continuous" => Ok(ColorMode::Continuous),
            _ => Err(Error::invalid(format!(
                "color mode must be auto, categorical or continuous, got '{s}'"
            ))),
        }
    }
}

/// Turns a column into a 0/1 indicator before coloring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `x > median(x)`
    GtMedian,
    Gt(f64),
    Ge(f64),
}

impl ThresholdRule {
    fn cut(&self, values: &[f64]) -> (f64, bool) {
        match *self {
            ThresholdRule::GtMedian => (stats::quantile_sorted(&stats::sorted_copy(values), 0.5), false),
            ThresholdRule::Gt(v) => (v, false),
            ThresholdRule::Ge(v) => (v, true),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::GtMedian => f.write_str("gt_median"),
            ThresholdRule::Gt(v) => write!(f, "gt:{v}"),
            ThresholdRule::Ge(v) => write!(f, "ge:{v}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "gt_median" || s == "gt-median" {
            return Ok(ThresholdRule::GtMedian);
        }
        let bad = || Error::invalid(format!("threshold must be gt_median, gt:<v> or ge:<v>, got '{s}'"));
        let (op, v) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = v.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(bad)?;
        match op {
            "gt" => Ok(ThresholdRule::Gt(v)),
            "ge" => Ok(ThresholdRule::Ge(v)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveColor {
    /// Index into `ColorBinding::labels` and the categorical palette.
    Level(usize),
    /// Position on the light-to-dark ramp, in `[0, 1]`.
    Shade(f64),
}

/// Per-curve colors derived from a second feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorBinding {
    pub k_name: String,
    /// `Categorical` or `Continuous`; never `Auto` once bound.
    pub mode: ColorMode,
    /// Level labels for categorical bindings, empty otherwise.
    pub labels: Vec<String>,
    /// One entry per data row.
    pub per_curve_color: Vec<CurveColor>,
    pub threshold: Option<ThresholdRule>,
}

impl ColorBinding {
    /// Colors for a subset of rows, e.g. after curve sampling.
    pub fn select_rows(&self, rows: &[usize]) -> ColorBinding {
        ColorBinding {
            per_curve_color: rows.iter().map(|&r| self.per_curve_color[r]).collect(),
            ..self.clone()
        }
    }
}

fn label(v: f64) -> String {
    format!("{v}")
}

pub fn bind_color(
    data: &FeatureMatrix,
    k_name: &str,
    mode: ColorMode,
    threshold: Option<ThresholdRule>,
) -> Result<ColorBinding> {
    let raw = data.column_by_name(k_name)?;
    let values: Vec<f64> = match threshold {
        Some(rule) => {
            let (cut, inclusive) = rule.cut(raw);
            raw.iter()
                .map(|&x| f64::from(u8::from(if inclusive { x >= cut } else { x > cut })))
                .collect()
        }
        None => raw.to_vec(),
    };
    let sorted = stats::sorted_copy(&values);
    let mut distinct = sorted.clone();
    distinct.dedup();

    let mode = match (mode, threshold) {
        (_, Some(_)) => ColorMode::Categorical,
        (ColorMode::Auto, None) if distinct.len() <= MAX_AUTO_LEVELS => ColorMode::Categorical,
        (ColorMode::Auto, None) => ColorMode::Continuous,
        (m, None) => m,
    };

    let (labels, per_curve_color) = if mode == ColorMode::Categorical {
        let labels = match threshold {
            Some(rule) => {
                let (cut, inclusive) = rule.cut(raw);
                let op = if inclusive { (">=", "<") } else { (">", "<=") };
                vec![
                    format!("{k_name} {} {}", op.1, label(cut)),
                    format!("{k_name} {} {}", op.0, label(cut)),
                ]
            }
            None => distinct.iter().map(|&v| label(v)).collect(),
        };
        let colors = values
            .iter()
            .map(|x| {
                let level = match threshold {
                    Some(_) => *x as usize,
                    None => distinct.partition_point(|d| d < x),
                };
                CurveColor::Level(level)
            })
            .collect();
        (labels, colors)
    } else {
        let denom = (values.len() - 1).max(1) as f64;
        let colors = values
            .iter()
            .map(|x| CurveColor::Shade(sorted.partition_point(|s| s < x) as f64 / denom))
            .collect();
        (Vec::new(), colors)
    };

    Ok(ColorBinding {
        k_name: k_name.to_string(),
        mode,
        labels,
        per_curve_color,
        threshold,
    })
}
