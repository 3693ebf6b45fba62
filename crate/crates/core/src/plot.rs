//! Deterministic SVG rendering of curve bundles.
//!
//! Every figure carries a leading comment and `data-*` attributes on the
//! plot area describing the data-to-pixel map:
//!
//! ```text
//! x_px = x0 + (x - x_min) * (width / (x_max - x_min))
//! y_px = y0 + (y_max - y) * (height / (y_max - y_min))
//! ```
//!
//! Coordinates and labels are written with six significant digits, so the
//! same input always produces the same bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ice::{CenteredIceCurves, ColorBinding, ColorMode, CurveColor, DIceCurves, IceCurves, IceMeta};

/// Ordered categorical palette. Level 0 is red, level 1 is blue.
pub const PALETTE: [&str; 10] = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628", "#f781bf", "#999999", "#66c2a5", "#e6ab02",
];
pub const MONOCHROME: &str = "#4d4d4d";
const PDP_COLOR: &str = "#f2c400";
// Light and dark ends of the continuous ramp.
const RAMP_LIGHT: [f64; 3] = [198.0, 219.0, 239.0];
const RAMP_DARK: [f64; 3] = [8.0, 48.0, 107.0];

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_RIGHT_AXIS: f64 = 64.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 44.0;
const STRIP_GAP: f64 = 28.0;
const STRIP_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Ice,
    Cice,
    Dice,
}

impl std::fmt::Display for PlotKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlotKind::Ice => "ice",
            PlotKind::Cice => "cice",
            PlotKind::Dice => "dice",
        })
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ice" => Ok(PlotKind::Ice),
            "cice" => Ok(PlotKind::Cice),
            "dice" => Ok(PlotKind::Dice),
            _ => Err(Error::invalid(format!(
                "plot kind must be ice, cice or dice, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub width: u32,
    pub height: u32,
    pub show_pdp: bool,
    pub show_observed_marks: bool,
    pub show_decile_ticks: bool,
    pub color_binding: Option<ColorBinding>,
    /// Second vertical axis in units of the observed response range (centered plots).
    pub right_axis_fraction: bool,
    /// Standard-deviation strip under derivative plots.
    pub sd_panel: bool,
    pub title: String,
    pub x_label: Option<String>,
    pub y_label: Option<String>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            show_pdp: true,
            show_observed_marks: true,
            show_decile_ticks: true,
            color_binding: None,
            right_axis_fraction: true,
            sd_panel: true,
            title: String::new(),
            x_label: None,
            y_label: None,
        }
    }
}

/// A curve bundle of any kind, for grids.
#[derive(Debug, Clone, PartialEq)]
pub enum PanelBundle {
    Ice(IceCurves),
    Cice(CenteredIceCurves),
    Dice(DIceCurves),
}

impl PanelBundle {
    pub fn kind(&self) -> PlotKind {
        match self {
            PanelBundle::Ice(_) => PlotKind::Ice,
            PanelBundle::Cice(_) => PlotKind::Cice,
            PanelBundle::Dice(_) => PlotKind::Dice,
        }
    }

    fn view(&self) -> View<'_> {
        match self {
            PanelBundle::Ice(b) => ice_view(b),
            PanelBundle::Cice(b) => cice_view(b),
            PanelBundle::Dice(b) => dice_view(b),
        }
    }
}

fn ice_view(b: &IceCurves) -> View<'_> {
    View {
        kind: PlotKind::Ice,
        grid: &b.grid,
        curves: &b.curves,
        pdp: Some(&b.pdp),
        observed_index: &b.observed_index,
        meta: &b.meta,
        sd: None,
        x_star: None,
    }
}

fn cice_view(b: &CenteredIceCurves) -> View<'_> {
    View {
        kind: PlotKind::Cice,
        grid: &b.grid,
        curves: &b.curves_centered,
        pdp: Some(&b.pdp),
        observed_index: &b.observed_index,
        meta: &b.meta,
        sd: None,
        x_star: Some(b.x_star),
    }
}

fn dice_view(b: &DIceCurves) -> View<'_> {
    View {
        kind: PlotKind::Dice,
        grid: &b.grid,
        curves: &b.dcurves,
        pdp: None,
        observed_index: &b.observed_index,
        meta: &b.meta,
        sd: Some(&b.sd_curve),
        x_star: None,
    }
}

struct View<'a> {
    kind: PlotKind,
    grid: &'a [f64],
    curves: &'a [Vec<f64>],
    pdp: Option<&'a [f64]>,
    observed_index: &'a [usize],
    meta: &'a IceMeta,
    sd: Option<&'a [f64]>,
    x_star: Option<f64>,
}

/// Data ranges shared by every panel of a figure.
#[derive(Debug, Clone, Copy)]
struct Domains {
    x: (f64, f64),
    y: (f64, f64),
    sd: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xd: (f64, f64),
    yd: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xd.0) * (self.w / (self.xd.1 - self.xd.0))
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + (self.yd.1 - y) * (self.h / (self.yd.1 - self.yd.0))
    }
}

/// Six significant digits, trailing zeros trimmed, no negative zero.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn extent<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Widens a degenerate range so the affine map stays finite.
fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 0.5 } else { 0.5 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn union(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.min(b.0), a.1.max(b.1))
}

fn domains_of(view: &View<'_>, spec: &PlotSpec) -> (f64, f64, f64, f64, f64, f64) {
    let (x_lo, x_hi) = extent(view.grid.iter());
    let mut y = extent(view.curves.iter().flatten());
    if spec.show_pdp {
        if let Some(p) = view.pdp {
            y = union(y, extent(p.iter()));
        }
    }
    let sd = view.sd.map(|s| extent(s.iter())).unwrap_or((0.0, 0.0));
    (x_lo, x_hi, y.0, y.1, sd.0.min(0.0), sd.1)
}

fn finish_domains(raw: (f64, f64, f64, f64, f64, f64)) -> Domains {
    Domains {
        x: widen((raw.0, raw.1)),
        y: widen((raw.2, raw.3)),
        sd: widen((raw.4, raw.5)),
    }
}

/// Up to about six round tick values covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let base = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * base)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * base);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            // Snap values like 0.30000000000000004 onto the printed grid.
            fmt_num(v).parse().unwrap_or(v)
        })
        .collect()
}

fn shade_color(s: f64) -> String {
    let c: Vec<u8> = (0..3)
        .map(|i| (RAMP_LIGHT[i] + s.clamp(0.0, 1.0) * (RAMP_DARK[i] - RAMP_LIGHT[i])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn curve_colors(binding: Option<&ColorBinding>, view: &View<'_>) -> Result<Vec<String>> {
    let n = view.curves.len();
    let Some(b) = binding else {
        return Ok(vec![MONOCHROME.to_string(); n]);
    };
    let per_curve: Vec<CurveColor> = if b.per_curve_color.len() == view.meta.n_data_rows {
        view.meta.rows.iter().map(|&r| b.per_curve_color[r]).collect()
    } else if b.per_curve_color.len() == n {
        b.per_curve_color.clone()
    } else {
        return Err(Error::Plot(format!(
            "color binding has {} entries for {} curves from {} data rows",
            b.per_curve_color.len(),
            n,
            view.meta.n_data_rows
        )));
    };
    Ok(per_curve
        .into_iter()
        .map(|c| match c {
            CurveColor::Level(l) => PALETTE[l % PALETTE.len()].to_string(),
            CurveColor::Shade(s) => shade_color(s),
        })
        .collect())
}

fn polyline(out: &mut String, class: &str, stroke: &str, width: f64, pts: impl Iterator<Item = (f64, f64)>) {
    let _ = write!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{stroke}" stroke-width="{}" points=""#,
        fmt_num(width)
    );
    for (k, (x, y)) in pts.enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{},{}", fmt_num(x), fmt_num(y));
    }
    out.push_str("\"/>\n");
}

fn text(out: &mut String, class: &str, x: f64, y: f64, anchor: &str, body: &str) {
    let _ = writeln!(
        out,
        r#"<text class="{class}" x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
        fmt_num(x),
        fmt_num(y),
        escape(body)
    );
}

fn line(out: &mut String, class: &str, x1: f64, y1: f64, x2: f64, y2: f64) {
    let _ = writeln!(
        out,
        r#"<line class="{class}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
        fmt_num(x1),
        fmt_num(y1),
        fmt_num(x2),
        fmt_num(y2)
    );
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
        w = fmt_num(width),
        h = fmt_num(height)
    );
    out.push_str(
        "<style>.axis,.tick,.decile{stroke:#000;stroke-width:1}.frame{fill:none;stroke:#000}.grid-label{font-size:14px;font-weight:bold}</style>\n",
    );
}

fn metadata_comment(out: &mut String, frame: &Frame, strip: Option<&Frame>) {
    let _ = write!(
        out,
        "<!-- icescope figure. x_px = {} + (x - {}) * {}; y_px = {} + ({} - y) * {}.",
        fmt_num(frame.x0),
        fmt_num(frame.xd.0),
        fmt_num(frame.w / (frame.xd.1 - frame.xd.0)),
        fmt_num(frame.y0),
        fmt_num(frame.yd.1),
        fmt_num(frame.h / (frame.yd.1 - frame.yd.0)),
    );
    if let Some(s) = strip {
        let _ = write!(
            out,
            " sd strip: y_px = {} + ({} - sd) * {}.",
            fmt_num(s.y0),
            fmt_num(s.yd.1),
            fmt_num(s.h / (s.yd.1 - s.yd.0))
        );
    }
    out.push_str(
        " Decile ticks on the top axis are the 10%..90% quantiles of the observed x values, \
         computed by linear interpolation between order statistics (h = (n - 1) p). -->\n",
    );
}

struct Layout {
    main: Frame,
    strip: Option<Frame>,
    right_axis: bool,
}

fn layout(spec: &PlotSpec, kind: PlotKind, d: &Domains, right_axis: bool) -> Result<Layout> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let right = if right_axis { MARGIN_RIGHT_AXIS } else { MARGIN_RIGHT };
    let pw = w - MARGIN_LEFT - right;
    let total_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let with_strip = kind == PlotKind::Dice && spec.sd_panel;
    let (main_h, strip_h) = if with_strip {
        let strip_h = (total_h - STRIP_GAP) * STRIP_FRACTION;
        (total_h - STRIP_GAP - strip_h, strip_h)
    } else {
        (total_h, 0.0)
    };
    if spec.width == 0 || spec.height == 0 || pw <= 0.0 || main_h <= 0.0 {
        return Err(Error::Plot(format!(
            "plot area is empty for a {}x{} figure",
            spec.width, spec.height
        )));
    }
    let main = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        w: pw,
        h: main_h,
        xd: d.x,
        yd: d.y,
    };
    let strip = with_strip.then_some(Frame {
        y0: MARGIN_TOP + main_h + STRIP_GAP,
        h: strip_h,
        yd: d.sd,
        ..main
    });
    Ok(Layout {
        main,
        strip,
        right_axis,
    })
}

fn draw_frame_axes(out: &mut String, f: &Frame, y_label: &str, class: &str) {
    let _ = writeln!(
        out,
        r#"<rect class="frame" x="{}" y="{}" width="{}" height="{}"/>"#,
        fmt_num(f.x0),
        fmt_num(f.y0),
        fmt_num(f.w),
        fmt_num(f.h)
    );
    let _ = writeln!(out, r#"<g class="{class}">"#);
    for t in nice_ticks(f.yd.0, f.yd.1) {
        let y = f.py(t);
        line(out, "tick", f.x0 - 4.0, y, f.x0, y);
        text(out, "tick-label", f.x0 - 6.0, y + 4.0, "end", &fmt_num(t));
    }
    text(out, "axis-label", f.x0 - 48.0, f.y0 + f.h / 2.0, "middle", y_label);
    out.push_str("</g>\n");
}

fn draw_x_axis(out: &mut String, f: &Frame, label: &str) {
    out.push_str("<g class=\"x-axis\">\n");
    let base = f.y0 + f.h;
    for t in nice_ticks(f.xd.0, f.xd.1) {
        let x = f.px(t);
        line(out, "tick", x, base, x, base + 4.0);
        text(out, "tick-label", x, base + 16.0, "middle", &fmt_num(t));
    }
    text(out, "axis-label", f.x0 + f.w / 2.0, base + 34.0, "middle", label);
    out.push_str("</g>\n");
}

fn draw_panel(out: &mut String, view: &View<'_>, spec: &PlotSpec, lay: &Layout, colors: &[String]) {
    let f = &lay.main;
    let _ = writeln!(
        out,
        r#"<g class="plot-area" data-kind="{}" data-x-domain="{} {}" data-y-domain="{} {}" data-x-px="{} {}" data-y-px="{} {}">"#,
        view.kind,
        fmt_num(f.xd.0),
        fmt_num(f.xd.1),
        fmt_num(f.yd.0),
        fmt_num(f.yd.1),
        fmt_num(f.x0),
        fmt_num(f.x0 + f.w),
        fmt_num(f.y0 + f.h),
        fmt_num(f.y0),
    );
    let default_y = match view.kind {
        PlotKind::Ice => "prediction",
        PlotKind::Cice => "centered prediction",
        PlotKind::Dice => "partial derivative",
    };
    draw_frame_axes(out, f, spec.y_label.as_deref().unwrap_or(default_y), "y-axis");

    if lay.right_axis {
        let yr = view.meta.y_range;
        let lo = f.yd.0 / yr;
        let hi = f.yd.1 / yr;
        let _ = writeln!(
            out,
            r#"<g class="right-axis" data-y-range="{}" data-fraction-domain="{} {}">"#,
            fmt_num(yr),
            fmt_num(lo),
            fmt_num(hi)
        );
        let xr = f.x0 + f.w;
        for t in nice_ticks(lo, hi) {
            let y = f.py(t * yr);
            line(out, "tick", xr, y, xr + 4.0, y);
            text(out, "tick-label", xr + 6.0, y + 4.0, "start", &fmt_num(t));
        }
        text(
            out,
            "axis-label",
            xr + 52.0,
            f.y0 + f.h / 2.0,
            "middle",
            "fraction of y range",
        );
        out.push_str("</g>\n");
    }

    if spec.show_decile_ticks && !view.meta.x_deciles.is_empty() {
        out.push_str("<g class=\"deciles\">\n");
        for &q in &view.meta.x_deciles {
            let x = f.px(q);
            line(out, "decile", x, f.y0, x, f.y0 - 6.0);
        }
        out.push_str("</g>\n");
    }

    if lay.strip.is_none() {
        draw_x_axis(out, f, spec.x_label.as_deref().unwrap_or(&view.meta.s_name));
    }

    out.push_str("<g class=\"curves\">\n");
    for (curve, color) in view.curves.iter().zip(colors) {
        polyline(
            out,
            "curve",
            color,
            1.0,
            view.grid.iter().zip(curve).map(|(&x, &y)| (f.px(x), f.py(y))),
        );
    }
    out.push_str("</g>\n");

    if spec.show_observed_marks {
        out.push_str("<g class=\"marks\">\n");
        for ((curve, &oi), color) in view.curves.iter().zip(view.observed_index).zip(colors) {
            let _ = writeln!(
                out,
                r#"<circle class="mark" cx="{}" cy="{}" r="2.5" fill="{color}" stroke="black" stroke-width="0.5"/>"#,
                fmt_num(f.px(view.grid[oi])),
                fmt_num(f.py(curve[oi]))
            );
        }
        out.push_str("</g>\n");
    }

    if let Some(xs) = view.x_star {
        let x = f.px(xs);
        line(out, "pinch", x, f.y0, x, f.y0 + f.h);
    }

    if spec.show_pdp {
        if let Some(pdp) = view.pdp {
            polyline(
                out,
                "pdp",
                PDP_COLOR,
                4.0,
                view.grid.iter().zip(pdp).map(|(&x, &y)| (f.px(x), f.py(y))),
            );
        }
    }
    out.push_str("</g>\n");

    if let (Some(s), Some(sd)) = (&lay.strip, view.sd) {
        let _ = writeln!(
            out,
            r#"<g class="sd-panel" data-y-domain="{} {}" data-y-px="{} {}">"#,
            fmt_num(s.yd.0),
            fmt_num(s.yd.1),
            fmt_num(s.y0 + s.h),
            fmt_num(s.y0)
        );
        draw_frame_axes(out, s, "sd", "y-axis");
        draw_x_axis(out, s, spec.x_label.as_deref().unwrap_or(&view.meta.s_name));
        polyline(
            out,
            "sd",
            "#000000",
            1.5,
            view.grid.iter().zip(sd).map(|(&x, &y)| (s.px(x), s.py(y))),
        );
        out.push_str("</g>\n");
    }
}

fn draw_legend(out: &mut String, binding: Option<&ColorBinding>, spec: &PlotSpec) {
    let Some(b) = binding else { return };
    let x = spec.width as f64 - MARGIN_RIGHT - 4.0;
    out.push_str("<g class=\"legend\">\n");
    match b.mode {
        ColorMode::Categorical => {
            for (k, label) in b.labels.iter().enumerate() {
                let y = 14.0 + 12.0 * k as f64;
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="8" height="8" fill="{}"/>"#,
                    fmt_num(x - 8.0),
                    fmt_num(y - 8.0),
                    PALETTE[k % PALETTE.len()]
                );
                text(out, "legend-label", x - 12.0, y, "end", label);
            }
        }
        _ => {
            text(
                out,
                "legend-label",
                x,
                14.0,
                "end",
                &format!("shade: rank of {} (light = low)", b.k_name),
            );
        }
    }
    out.push_str("</g>\n");
}

fn render_single(view: View<'_>, spec: &PlotSpec) -> Result<Vec<u8>> {
    if view.curves.is_empty() {
        return Err(Error::Plot("no curves to draw".into()));
    }
    let domains = finish_domains(domains_of(&view, spec));
    let right_axis = view.kind == PlotKind::Cice && spec.right_axis_fraction && view.meta.y_range > 0.0;
    let lay = layout(spec, view.kind, &domains, right_axis)?;
    let colors = curve_colors(spec.color_binding.as_ref(), &view)?;

    let mut out = String::new();
    svg_open(&mut out, spec.width as f64, spec.height as f64);
    metadata_comment(&mut out, &lay.main, lay.strip.as_ref());
    if !spec.title.is_empty() {
        text(&mut out, "title", spec.width as f64 / 2.0, 16.0, "middle", &spec.title);
    }
    draw_legend(&mut out, spec.color_binding.as_ref(), spec);
    draw_panel(&mut out, &view, spec, &lay, &colors);
    out.push_str("</svg>\n");
    Ok(out.into_bytes())
}

pub fn render_ice(ice: &IceCurves, spec: &PlotSpec) -> Result<Vec<u8>> {
    render_single(ice_view(ice), spec)
}

/// Left axis in response units; with `right_axis_fraction`, a right axis in
/// fractions of the observed response range.
pub fn render_cice(c: &CenteredIceCurves, spec: &PlotSpec) -> Result<Vec<u8>> {
    render_single(cice_view(c), spec)
}

/// Derivative curves, with the pointwise sd in a strip underneath when `sd_panel` is set.
pub fn render_dice(d: &DIceCurves, spec: &PlotSpec) -> Result<Vec<u8>> {
    render_single(dice_view(d), spec)
}

/// Lays panels out row by row, `columns` per row, numbered from 1. All
/// panels share axis ranges and scaffolding; `spec.width` and
/// `spec.height` are per panel.
pub fn render_grid(panels: &[PanelBundle], columns: usize, spec: &PlotSpec) -> Result<Vec<u8>> {
    let first = panels.first().ok_or_else(|| Error::Plot("no panels".into()))?;
    if columns == 0 {
        return Err(Error::Plot("columns must be at least 1".into()));
    }
    let kind = first.kind();
    if let Some(p) = panels.iter().find(|p| p.kind() != kind) {
        return Err(Error::Plot(format!(
            "cannot mix {kind} and {} panels in one grid",
            p.kind()
        )));
    }
    let views: Vec<View<'_>> = panels.iter().map(PanelBundle::view).collect();
    if views.iter().any(|v| v.curves.is_empty()) {
        return Err(Error::Plot("a panel has no curves".into()));
    }
    let raw = views
        .iter()
        .map(|v| domains_of(v, spec))
        .reduce(|a, b| {
            (
                a.0.min(b.0),
                a.1.max(b.1),
                a.2.min(b.2),
                a.3.max(b.3),
                a.4.min(b.4),
                a.5.max(b.5),
            )
        })
        .expect("non-empty");
    let domains = finish_domains(raw);
    // The right axis depends on each panel's own response range, which would
    // tell the real panel apart, so grids never draw it.
    let lay = layout(spec, kind, &domains, false)?;

    let rows = panels.len().div_ceil(columns);
    let cols = columns.min(panels.len());
    let (pw, ph) = (spec.width as f64, spec.height as f64);
    let mut out = String::new();
    svg_open(
        &mut out,
        pw * cols as f64,
        ph * rows as f64 + if spec.title.is_empty() { 0.0 } else { 24.0 },
    );
    metadata_comment(&mut out, &lay.main, lay.strip.as_ref());
    let top = if spec.title.is_empty() {
        0.0
    } else {
        text(&mut out, "title", pw * cols as f64 / 2.0, 18.0, "middle", &spec.title);
        24.0
    };
    let _ = writeln!(
        out,
        r#"<g class="lineup-grid" data-panels="{}" data-rows="{rows}" data-columns="{cols}">"#,
        panels.len()
    );
    for (k, view) in views.iter().enumerate() {
        let colors = curve_colors(spec.color_binding.as_ref(), view)?;
        let (r, c) = (k / columns, k % columns);
        let _ = writeln!(
            out,
            r#"<g class="panel" data-panel="{}" transform="translate({},{})">"#,
            k + 1,
            fmt_num(c as f64 * pw),
            fmt_num(top + r as f64 * ph)
        );
        text(&mut out, "grid-label", 8.0, 18.0, "start", &(k + 1).to_string());
        draw_panel(&mut out, view, spec, &lay, &colors);
        out.push_str("</g>\n");
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out.into_bytes())
}
