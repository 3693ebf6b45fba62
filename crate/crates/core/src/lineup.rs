//! Visual lineup test for additivity of a fitted model.
//!
//! The data are backfit as `g(x_S) + h(x_C)`, residuals are resampled to
//! build `k - 1` null responses that are additive by construction, the
//! learner is refit on each, and the real plot is hidden among the null
//! plots at a random position. A viewer who picks the real plot out of `k`
//! rejects additivity at level `1 / k`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ColumnSplit, FeatureMatrix};
use crate::error::{Error, Result};
use crate::ice::{
    center_ice, compute_dice, compute_ice, sample_curves, CenteredIceCurves, DiceOptions, GridSpec, IceCurves,
    PinchSpec, SampleSpec,
};
use crate::plot::{render_grid, PanelBundle, PlotKind, PlotSpec};
use crate::predictors::{backfit, BackfitOptions, LearnerSpec};
use crate::rng;

const KEY_VERSION: u32 = 1;
// Stream reserved for the hidden position; panel seeds come from `rng::child_seed`.
const POSITION_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Keep each residual's magnitude in place and draw its sign at random.
    #[default]
    SignFlip,
    /// Draw residuals with replacement.
    Bootstrap,
}

impl fmt::Display for ResampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResampleMode::SignFlip => "sign-flip",
            ResampleMode::Bootstrap => "bootstrap",
        })
    }
}

impl FromStr for ResampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign-flip" | "sign_flip" => Ok(ResampleMode::SignFlip),
            "bootstrap" => Ok(ResampleMode::Bootstrap),
            _ => Err(Error::invalid(format!(
                "resample mode must be sign-flip or bootstrap, got '{s}'"
            ))),
        }
    }
}

pub fn resample_residuals(r_star: &[f64], mode: ResampleMode, seed: u64) -> Result<Vec<f64>> {
    if r_star.is_empty() {
        return Err(Error::invalid("no residuals to resample"));
    }
    let mut rng = rng::seeded(seed);
    Ok(match mode {
        ResampleMode::SignFlip => r_star
            .iter()
            .map(|r| if rng.random::<bool>() { r.abs() } else { -r.abs() })
            .collect(),
        ResampleMode::Bootstrap => (0..r_star.len())
            .map(|_| *r_star.choose(&mut rng).expect("non-empty"))
            .collect(),
    })
}

/// Position of the real panel, uniform on `1..=k`.
pub fn draw_real_position(k: usize, seed: u64) -> usize {
    rng::stream(seed, POSITION_STREAM).random_range(1..=k)
}

/// Largest vertical spread of the centered curves at any grid point.
/// Spreads below `1e-10` of the curves' scale are rounding noise and count as 0.
pub fn centered_spread(c: &CenteredIceCurves) -> f64 {
    let g = c.grid.len();
    let scale = c.curves_centered.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let spread = (0..g)
        .map(|l| {
            let (lo, hi) = c
                .curves_centered
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    (lo.min(row[l]), hi.max(row[l]))
                });
            hi - lo
        })
        .fold(0.0f64, f64::max);
    if spread < 1e-10 * (1.0 + scale) {
        0.0
    } else {
        spread
    }
}

#[derive(Debug, Clone)]
pub struct LineupOptions {
    pub k: usize,
    pub plot_kind: PlotKind,
    pub resample: ResampleMode,
    pub seed: u64,
    pub grid: GridSpec,
    pub pinch: PinchSpec,
    /// Applied to every panel with the same seed, so all panels show the same rows.
    pub sample: Option<SampleSpec>,
    pub dice: DiceOptions,
    pub backfit: BackfitOptions,
    /// Learner for `h(x_C)` during backfitting. Defaults to the refit learner.
    pub h_learner: Option<LearnerSpec>,
    pub columns: usize,
    pub plot: PlotSpec,
}

impl Default for LineupOptions {
    fn default() -> Self {
        Self {
            k: 20,
            plot_kind: PlotKind::Cice,
            resample: ResampleMode::SignFlip,
            seed: rng::DEFAULT_SEED,
            grid: GridSpec::Uniform(50),
            pinch: PinchSpec::Min,
            sample: None,
            dice: DiceOptions::default(),
            backfit: BackfitOptions::default(),
            h_learner: None,
            columns: 4,
            plot: PlotSpec {
                width: 300,
                height: 240,
                show_observed_marks: false,
                show_decile_ticks: false,
                ..PlotSpec::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct LineupBundle {
    pub k: usize,
    /// 1-based position of the real panel. Secret until reveal.
    pub real_position: usize,
    /// The `k - 1` null responses in generation order.
    pub null_datasets: Vec<Vec<f64>>,
    /// The resampled residuals `r_b` behind each null response.
    pub null_residuals: Vec<Vec<f64>>,
    /// Backfit fitted values `ŷ*` and residuals `r*`.
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub resample_mode: ResampleMode,
    pub refit_spec: String,
    pub plot_kind: PlotKind,
    /// Panels in display order.
    pub panel_curves: Vec<PanelBundle>,
    pub seed: u64,
    pub backfit_converged: bool,
    pub backfit_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Lineup {
    pub bundle: LineupBundle,
    pub svg: Vec<u8>,
    pub key: LineupKey,
}

/// Everything needed to score a guess, bound to one rendered grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineupKey {
    pub version: u32,
    pub seed: u64,
    pub k: usize,
    pub real_position: usize,
    pub plot_kind: PlotKind,
    pub resample_mode: ResampleMode,
    pub refit_spec: String,
    pub grid_sha256: String,
    pub key_digest: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl LineupKey {
    fn new(bundle: &LineupBundle, svg: &[u8]) -> Self {
        let mut key = LineupKey {
            version: KEY_VERSION,
            seed: bundle.seed,
            k: bundle.k,
            real_position: bundle.real_position,
            plot_kind: bundle.plot_kind,
            resample_mode: bundle.resample_mode,
            refit_spec: bundle.refit_spec.clone(),
            grid_sha256: sha256_hex(svg),
            key_digest: String::new(),
        };
        key.key_digest = key.digest();
        key
    }

    fn digest(&self) -> String {
        let body = format!(
            "icescope-lineup-key\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n{}\n",
            self.version,
            self.seed,
            self.k,
            self.real_position,
            self.plot_kind,
            self.resample_mode,
            self.refit_spec,
            self.grid_sha256
        );
        sha256_hex(body.as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("key serializes")
    }

    /// Parses and checks the key for edits.
    pub fn from_json(s: &str) -> Result<Self> {
        let key: LineupKey = serde_json::from_str(s).map_err(|e| Error::Key(format!("cannot parse key: {e}")))?;
        if key.version != KEY_VERSION {
            return Err(Error::Key(format!("unsupported key version {}", key.version)));
        }
        if key.digest() != key.key_digest {
            return Err(Error::Key(
                "key digest does not match its contents; the key was edited".into(),
            ));
        }
        if key.k < 2 || !(1..=key.k).contains(&key.real_position) {
            return Err(Error::Key(format!(
                "real position {} is not in 1..={}",
                key.real_position, key.k
            )));
        }
        Ok(key)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks that `svg` is the grid this key was written for.
    pub fn verify_grid(&self, svg: &[u8]) -> Result<()> {
        if sha256_hex(svg) == self.grid_sha256 {
            Ok(())
        } else {
            Err(Error::Key("grid SVG does not match the key's checksum".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValue {
    Exact(f64),
    /// Only a lower bound is known.
    Above(f64),
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PValue::Exact(p) => write!(f, "{p}"),
            PValue::Above(p) => write!(f, "> {p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineupVerdict {
    pub guess: usize,
    pub k: usize,
    pub real_position: usize,
    pub correct: bool,
    pub p_value: PValue,
}

impl fmt::Display for LineupVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.correct {
            write!(f, "correct, p = {}", self.p_value)
        } else {
            write!(
                f,
                "incorrect (real panel was {}), p {}",
                self.real_position, self.p_value
            )
        }
    }
}

pub fn reveal(key: &LineupKey, guess: usize) -> Result<LineupVerdict> {
    if !(1..=key.k).contains(&guess) {
        return Err(Error::invalid(format!("guess must be in 1..={}, got {guess}", key.k)));
    }
    let alpha = 1.0 / key.k as f64;
    let correct = guess == key.real_position;
    Ok(LineupVerdict {
        guess,
        k: key.k,
        real_position: key.real_position,
        correct,
        p_value: if correct {
            PValue::Exact(alpha)
        } else {
            PValue::Above(alpha)
        },
    })
}

struct PanelContext<'a> {
    data: &'a FeatureMatrix,
    split: &'a ColumnSplit,
    learner: &'a LearnerSpec,
    options: &'a LineupOptions,
}

impl PanelContext<'_> {
    fn panel(&self, response: Option<Vec<f64>>, fit_seed: u64) -> Result<PanelBundle> {
        let owned;
        let data = match response {
            Some(y) => {
                owned = self.data.with_response(y)?;
                &owned
            }
            None => self.data,
        };
        let model = self.learner.fit(data, fit_seed)?;
        let ice = compute_ice(&model, data, self.split, &self.options.grid)?;
        self.transform(ice)
    }

    fn transform(&self, ice: IceCurves) -> Result<PanelBundle> {
        let o = self.options;
        let ice = match o.sample {
            Some(spec) => sample_curves(&ice, spec, o.seed)?,
            None => ice,
        };
        Ok(match o.plot_kind {
            PlotKind::Ice => PanelBundle::Ice(ice),
            PlotKind::Cice => PanelBundle::Cice(center_ice(&ice, o.pinch)?),
            PlotKind::Dice => PanelBundle::Dice(compute_dice(&ice, &o.dice)?),
        })
    }
}

/// Builds the `k`-panel lineup and its key. Backfitting that hits the
/// iteration cap is not an error; it is reported in the bundle.
/// A null panel's response and the residuals drawn for it.
type NullDraw = (Vec<f64>, Vec<f64>);

pub fn build_lineup(
    data: &FeatureMatrix,
    split: &ColumnSplit,
    refit: &LearnerSpec,
    options: &LineupOptions,
) -> Result<Lineup> {
    let k = options.k;
    if k < 2 {
        return Err(Error::invalid(format!("a lineup needs at least 2 panels, got {k}")));
    }
    split.check(data)?;
    let s_name = &data.names()[split.s_index()];
    let learner = refit.bind_feature(s_name);
    let h_learner = match options.h_learner.clone().unwrap_or_else(|| learner.clone()) {
        // An additive learner over x_C has no x_S to smooth.
        LearnerSpec::Additive { .. } => LearnerSpec::Linear,
        other => other,
    };

    let fit = backfit(data, split, &h_learner, &options.backfit)?;
    let fitted = fit.fitted;
    let residuals = fit.residuals;

    let real_position = draw_real_position(k, options.seed);
    let ctx = PanelContext {
        data,
        split,
        learner: &learner,
        options,
    };

    // Index 0 is the real data, 1..k are the nulls.
    let generated: Vec<(Option<NullDraw>, PanelBundle)> = (0..k)
        .into_par_iter()
        .map(|b| {
            let panel_seed = rng::child_seed(options.seed, b as u64);
            let fit_seed = rng::child_seed(panel_seed, 1);
            if b == 0 {
                return Ok((None, ctx.panel(None, fit_seed)?));
            }
            let wrap = |e: Error| Error::PanelRefit {
                panel: b,
                source: Box::new(e),
            };
            let r_b = resample_residuals(&residuals, options.resample, panel_seed).map_err(wrap)?;
            let y_b: Vec<f64> = fitted.iter().zip(&r_b).map(|(f, r)| f + r).collect();
            let panel = ctx.panel(Some(y_b.clone()), fit_seed).map_err(wrap)?;
            Ok((Some((r_b, y_b)), panel))
        })
        .collect::<Result<_>>()?;

    let mut null_datasets = Vec::with_capacity(k - 1);
    let mut null_residuals = Vec::with_capacity(k - 1);
    let mut nulls = Vec::with_capacity(k - 1);
    let mut real = None;
    for (y, panel) in generated {
        match y {
            Some((r, y)) => {
                null_residuals.push(r);
                null_datasets.push(y);
                nulls.push(panel);
            }
            None => real = Some(panel),
        }
    }
    let mut panel_curves = nulls;
    panel_curves.insert(real_position - 1, real.expect("real panel generated"));

    let svg = render_grid(&panel_curves, options.columns, &options.plot)?;
    let bundle = LineupBundle {
        k,
        real_position,
        null_datasets,
        null_residuals,
        fitted,
        residuals,
        resample_mode: options.resample,
        refit_spec: learner.to_string(),
        plot_kind: options.plot_kind,
        panel_curves,
        seed: options.seed,
        backfit_converged: fit.converged,
        backfit_iterations: fit.n_iterations,
    };
    let key = LineupKey::new(&bundle, &svg);
    Ok(Lineup { bundle, svg, key })
}
