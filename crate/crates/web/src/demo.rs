//! The demo operations as plain Rust, so they can be tested without a browser.

use icescope::ice::{
    bind_color, center_ice, compute_dice, compute_ice, ColorMode, DiceOptions, GridSpec, IceCurves, PinchSpec,
    ThresholdRule,
};
use icescope::lineup::{build_lineup, reveal, LineupKey, LineupOptions};
use icescope::plot::{render_cice, render_dice, render_ice, PlotKind, PlotSpec};
use icescope::predictors::{closed_form, ClosedFormExpr, SmootherConfig, TreeParams};
use icescope::{simulate, ColumnSplit, FeatureMatrix, LearnerSpec, PredictorHandle, SimModel, SimSpec};

const MAX_ROWS: usize = 2000;
const DEMO_TREES: usize = 30;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn trees(n_trees: usize) -> LearnerSpec {
    LearnerSpec::BaggedTrees(TreeParams {
        n_trees,
        ..TreeParams::default()
    })
}

fn criss_cross(n: usize, seed: u64) -> Result<FeatureMatrix, String> {
    if !(10..=MAX_ROWS).contains(&n) {
        return Err(format!("n must be between 10 and {MAX_ROWS}"));
    }
    simulate(&SimSpec::new(SimModel::CrissCross, n, seed)).map_err(err)
}

fn model(kind: &str, data: &FeatureMatrix, seed: u64) -> Result<PredictorHandle, String> {
    match kind {
        "trees" => trees(DEMO_TREES).fit(data, seed).map_err(err),
        "truth" => closed_form(ClosedFormExpr::CrissCrossMean, &[], 3).map_err(err),
        other => Err(format!("unknown model '{other}' (expected trees or truth)")),
    }
}

fn x2_curves(kind: &str, n: usize, seed: u64) -> Result<(FeatureMatrix, IceCurves), String> {
    let data = criss_cross(n, seed)?;
    let f = model(kind, &data, seed)?;
    let split = ColumnSplit::by_name(&data, "x2").map_err(err)?;
    let ice = compute_ice(&f, &data, &split, &GridSpec::Uniform(40)).map_err(err)?;
    Ok((data, ice))
}

fn spec(data: &FeatureMatrix, title: &str) -> Result<PlotSpec, String> {
    let binding = bind_color(data, "x3", ColorMode::Auto, Some(ThresholdRule::Ge(0.0))).map_err(err)?;
    Ok(PlotSpec {
        color_binding: Some(binding),
        title: title.to_string(),
        ..PlotSpec::default()
    })
}

/// ICE or centered ICE curves of `x2` on simulated criss-cross data,
/// colored by the sign of `x3`.
pub fn ice_svg(model_kind: &str, plot: &str, n: usize, seed: u64) -> Result<String, String> {
    let (data, ice) = x2_curves(model_kind, n, seed)?;
    let svg = match plot.parse::<PlotKind>().map_err(err)? {
        PlotKind::Ice => render_ice(&ice, &spec(&data, "ICE of x2")?),
        PlotKind::Cice => {
            let c = center_ice(&ice, PinchSpec::Min).map_err(err)?;
            render_cice(&c, &spec(&data, "centered ICE of x2")?)
        }
        PlotKind::Dice => return Err("use the derivative view for d-ICE".into()),
    }
    .map_err(err)?;
    String::from_utf8(svg).map_err(err)
}

/// Derivative curves of `x2` with the given bass setting.
pub fn dice_svg(model_kind: &str, n: usize, seed: u64, bass: f64) -> Result<String, String> {
    if !(0.0..=10.0).contains(&bass) {
        return Err("bass must be between 0 and 10".into());
    }
    let (data, ice) = x2_curves(model_kind, n, seed)?;
    let options = DiceOptions {
        smoother: SmootherConfig {
            bass,
            ..SmootherConfig::default()
        },
        ..DiceOptions::default()
    };
    let d = compute_dice(&ice, &options).map_err(err)?;
    let svg = render_dice(&d, &spec(&data, &format!("d-ICE of x2, bass {bass}"))?).map_err(err)?;
    String::from_utf8(svg).map_err(err)
}

/// A lineup whose answer stays hidden until a guess is made.
pub struct LineupGame {
    svg: String,
    key: LineupKey,
}

impl LineupGame {
    /// `dataset` is `criss-cross` (the real panel should stand out) or
    /// `additive` (it should not).
    pub fn new(dataset: &str, k: usize, seed: u64) -> Result<Self, String> {
        if !(2..=20).contains(&k) {
            return Err("k must be between 2 and 20".into());
        }
        let (model, feature) = match dataset {
            "criss-cross" => (SimModel::CrissCross, "x2"),
            "additive" => (SimModel::AdditiveParabola, "x1"),
            other => return Err(format!("unknown dataset '{other}'")),
        };
        let data = simulate(&SimSpec::new(model, 200, seed)).map_err(err)?;
        let split = ColumnSplit::by_name(&data, feature).map_err(err)?;
        let options = LineupOptions {
            k,
            seed,
            grid: GridSpec::Uniform(25),
            ..LineupOptions::default()
        };
        let lineup = build_lineup(&data, &split, &trees(DEMO_TREES), &options).map_err(err)?;
        Ok(Self {
            svg: String::from_utf8(lineup.svg).map_err(err)?,
            key: lineup.key,
        })
    }

    pub fn svg(&self) -> &str {
        &self.svg
    }

    pub fn k(&self) -> usize {
        self.key.k
    }

    /// Verdict text for a 1-based panel guess.
    pub fn guess(&self, panel: usize) -> Result<String, String> {
        reveal(&self.key, panel).map(|v| v.to_string()).map_err(err)
    }
}
