//! ICE curves and their transforms: partial dependence, centering,
//! derivatives, and second-feature coloring.

mod centered;
mod color;
mod curves;
mod derivative;

pub use centered::{center_ice, CenteredIceCurves, PinchSpec};
pub use color::{bind_color, ColorBinding, ColorMode, CurveColor, ThresholdRule, MAX_AUTO_LEVELS};
pub use curves::{compute_ice, compute_ice_with, sample_curves, GridSpec, IceCurves, IceMeta, IceOptions, SampleSpec};
pub use derivative::{
    central_differences, compute_dice, derivative_sd_curve, find_roi, DIceCurves, DerivativeMethod, DiceOptions,
    RoiInterval,
};
