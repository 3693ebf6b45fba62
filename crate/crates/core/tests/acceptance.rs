//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any criterion fails.
//!
//! `cargo test -p icescope --test acceptance -- <substring>` runs the
//! criteria whose names contain the substring.

use std::time::{Duration, Instant};

use icescope::dataset::{simulate, ColumnSplit, FeatureMatrix, SimModel, SimSpec};
use icescope::ice::{center_ice, compute_dice, compute_ice, find_roi, DiceOptions, GridSpec, IceCurves, PinchSpec};
use icescope::lineup::{build_lineup, centered_spread, draw_real_position, reveal, LineupKey, LineupOptions};
use icescope::plot::{render_ice, PanelBundle, PlotSpec};
use icescope::predictors::{closed_form, supersmooth, ClosedFormExpr, LearnerSpec, TreeParams};
use icescope::wire::WireConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Duration, Check); 8] = [
        ("pdp-ice-consistency", Duration::from_secs(10), pdp_ice_consistency),
        (
            "additivity-parallel-curves",
            Duration::from_secs(30),
            additivity_parallel_curves,
        ),
        (
            "criss-cross-heterogeneity",
            Duration::from_secs(120),
            criss_cross_heterogeneity,
        ),
        ("roi-localization", Duration::from_secs(300), roi_localization),
        (
            "extrapolation-detection",
            Duration::from_secs(60),
            extrapolation_detection,
        ),
        ("lineup-mechanics", Duration::from_secs(600), lineup_mechanics),
        ("supersmoother", Duration::from_secs(5), supersmoother),
        ("wire-round-trip", Duration::from_secs(60), wire_round_trip),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();

    let mut failed = 0;
    let mut ran = 0;
    for (name, limit, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {}; {:.1}s of {}s{}",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { " (over time limit)" }
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn trees(n_trees: usize) -> LearnerSpec {
    LearnerSpec::BaggedTrees(TreeParams {
        n_trees,
        ..TreeParams::default()
    })
}

fn column_mean(curves: &[Vec<f64>], l: usize) -> f64 {
    curves.iter().map(|c| c[l]).sum::<f64>() / curves.len() as f64
}

fn pdp_ice_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let model_kind = [
            SimModel::CrissCross,
            SimModel::AdditiveParabola,
            SimModel::ExtrapolationQuadrant,
        ][case % 3];
        let n = rng.random_range(50..400);
        let data = simulate(&SimSpec::new(model_kind, n, rng.random())).unwrap();
        let p = data.n_cols();
        let model = match case % 4 {
            0 => {
                let expr = match model_kind {
                    SimModel::CrissCross => ClosedFormExpr::CrissCrossMean,
                    SimModel::AdditiveParabola => ClosedFormExpr::AdditiveParabolaMean,
                    SimModel::ExtrapolationQuadrant => ClosedFormExpr::QuadrantMean,
                };
                closed_form(expr, &[], p).unwrap()
            }
            1 => LearnerSpec::Linear.fit(&data, 0).unwrap(),
            2 => trees(20).fit(&data, rng.random()).unwrap(),
            _ => LearnerSpec::ClosedForm {
                expr: ClosedFormExpr::Product,
                params: vec![],
            }
            .fit(&data, 0)
            .unwrap(),
        };
        let grid = match rng.random_range(0..3) {
            0 => GridSpec::Observed,
            1 => GridSpec::Uniform(rng.random_range(2..80)),
            _ => GridSpec::Quantile(rng.random_range(2..80)),
        };
        let s = rng.random_range(0..p);
        let ice = compute_ice(&model, &data, &ColumnSplit::new(s, p).unwrap(), &grid).unwrap();
        for l in 0..ice.grid.len() {
            let dev = (ice.pdp[l] - column_mean(&ice.curves, l)).abs() / (1.0 + ice.pdp[l].abs());
            worst = worst.max(dev);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("20 pairs, max relative deviation {worst:.3e} (limit 1e-12)"),
    )
}

fn additivity_parallel_curves() -> Outcome {
    let data = simulate(&SimSpec::new(SimModel::AdditiveParabola, 1000, 7)).unwrap();
    let model = closed_form(ClosedFormExpr::AdditiveParabolaMean, &[], 2).unwrap();
    let ice = compute_ice(&model, &data, &ColumnSplit::new(0, 2).unwrap(), &GridSpec::Observed).unwrap();

    let mut worst_range: f64 = 0.0;
    let n = ice.curves.len();
    let mut diff = vec![0.0; ice.grid.len()];
    for i in 0..n {
        for j in i + 1..n {
            for (d, (a, b)) in diff.iter_mut().zip(ice.curves[i].iter().zip(&ice.curves[j])) {
                *d = a - b;
            }
            let (lo, hi) = diff.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            worst_range = worst_range.max(hi - lo);
        }
    }
    let dice = compute_dice(&ice, &DiceOptions::default()).unwrap();
    let sd_max = dice.sd_curve.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst_range < 1e-10 && sd_max < 1e-3,
        format!(
            "G={}, max pairwise range {worst_range:.3e} (limit 1e-10), d-ICE sd max {sd_max:.3e} (limit 1e-3)",
            ice.grid.len()
        ),
    )
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn criss_cross_heterogeneity() -> Outcome {
    let data = simulate(&SimSpec::new(SimModel::CrissCross, 1000, 42)).unwrap();
    let model = trees(100).fit(&data, 42).unwrap();
    let ice = compute_ice(&model, &data, &ColumnSplit::new(1, 3).unwrap(), &GridSpec::Uniform(50)).unwrap();

    let g = &ice.grid;
    let local: Vec<f64> = (1..g.len())
        .map(|l| (ice.pdp[l] - ice.pdp[l - 1]) / (g[l] - g[l - 1]))
        .collect();
    // Magnitude of the grid-averaged slope. The average of local magnitudes is
    // reported too; it mostly measures the step roughness of tree ensembles.
    let pdp_slope = (local.iter().sum::<f64>() / local.len() as f64).abs();
    let pdp_roughness = local.iter().map(|s| s.abs()).sum::<f64>() / local.len() as f64;
    let pdp_ls = ls_slope(g, &ice.pdp);

    let slopes: Vec<f64> = ice.curves.iter().map(|c| ls_slope(g, c)).collect();
    // Two-means on the slopes, started from the extremes.
    let mut centers = [
        slopes.iter().cloned().fold(f64::INFINITY, f64::min),
        slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ];
    let mut assign = vec![0usize; slopes.len()];
    for _ in 0..100 {
        for (a, s) in assign.iter_mut().zip(&slopes) {
            *a = usize::from((s - centers[1]).abs() < (s - centers[0]).abs());
        }
        let mut next = [0.0; 2];
        for (k, c) in next.iter_mut().enumerate() {
            let members: Vec<f64> = slopes
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == k)
                .map(|(s, _)| *s)
                .collect();
            *c = members.iter().sum::<f64>() / members.len() as f64;
        }
        if next == centers {
            break;
        }
        centers = next;
    }
    let x3 = data.column(2);
    let correct = ice
        .meta
        .rows
        .iter()
        .zip(&assign)
        .filter(|(&row, &a)| (x3[row] >= 0.0) == (a == 1))
        .count();
    let frac = correct as f64 / slopes.len() as f64;
    let pass = pdp_slope < 1.0 && (centers[0] + 5.0).abs() <= 1.5 && (centers[1] - 5.0).abs() <= 1.5 && frac >= 0.8;
    outcome(
        pass,
        format!(
            "|grid-averaged PDP slope| {pdp_slope:.3} (limit 1.0; least-squares PDP slope {pdp_ls:.3}, mean local |slope| {pdp_roughness:.3}), cluster means {:.2} / {:.2} (targets -5 / +5 within 1.5), {:.1}% assigned by sign of x3 (limit 80%)",
            centers[0],
            centers[1],
            100.0 * frac
        ),
    )
}

fn roi_localization() -> Outcome {
    let mut hits = 0;
    let mut peaks = Vec::new();
    let mut one_interval_with_zero = 0;
    for seed in 1..=20u64 {
        let data = simulate(&SimSpec::new(SimModel::CrissCross, 1000, seed)).unwrap();
        let model = trees(100).fit(&data, seed).unwrap();
        let ice = compute_ice(&model, &data, &ColumnSplit::new(2, 3).unwrap(), &GridSpec::Uniform(101)).unwrap();
        let dice = compute_dice(&ice, &DiceOptions::default()).unwrap();
        let arg = (0..dice.grid.len())
            .max_by(|&a, &b| dice.sd_curve[a].total_cmp(&dice.sd_curve[b]))
            .unwrap();
        let peak = dice.grid[arg];
        peaks.push(peak);
        if peak.abs() < 0.1 {
            hits += 1;
        }
        let roi = find_roi(&dice.sd_curve, &dice.grid, 0.5).unwrap();
        if roi.len() == 1 && roi[0].lo <= 0.0 && roi[0].hi >= 0.0 {
            one_interval_with_zero += 1;
        }
    }
    let worst = peaks.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    outcome(
        hits >= 18,
        format!(
            "sd argmax within |x3| < 0.1 in {hits}/20 seeds (need 18), largest |argmax| {worst:.3}; single ROI containing 0 at theta 0.5 in {one_interval_with_zero}/20"
        ),
    )
}

fn extrapolation_detection() -> Outcome {
    let data = simulate(&SimSpec::new(SimModel::ExtrapolationQuadrant, 1000, 42)).unwrap();
    let model = trees(100).fit(&data, 42).unwrap();
    let ice = compute_ice(&model, &data, &ColumnSplit::new(0, 2).unwrap(), &GridSpec::Observed).unwrap();
    let x1 = data.column(0);
    let x2 = data.column(1);

    let upper: Vec<usize> = (0..ice.curves.len()).filter(|&c| x2[ice.meta.rows[c]] >= 0.0).collect();
    let marks_in_quadrant = upper.iter().filter(|&&c| ice.grid[ice.observed_index[c]] > 0.0).count();
    let own_x_matches = (0..ice.curves.len()).all(|c| ice.grid[ice.observed_index[c]] == x1[ice.meta.rows[c]]);
    let positive_grid: Vec<usize> = (0..ice.grid.len()).filter(|&l| ice.grid[l] > 0.0).collect();
    let quadrant_values_finite = upper
        .iter()
        .all(|&c| positive_grid.iter().all(|&l| ice.curves[c][l].is_finite()));

    let svg = String::from_utf8(render_ice(&ice, &PlotSpec::default()).unwrap()).unwrap();
    let nums = |attr: &str| -> Vec<f64> {
        svg.split(&format!("{attr}=\""))
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let (xd, xpx) = (nums("data-x-domain"), nums("data-x-px"));
    let zero_px = xpx[0] + (0.0 - xd[0]) * (xpx[1] - xpx[0]) / (xd[1] - xd[0]);
    let mark_xs: Vec<f64> = svg
        .lines()
        .filter(|l| l.starts_with("<circle class=\"mark\""))
        .map(|l| {
            l.split("cx=\"")
                .nth(1)
                .unwrap()
                .split('"')
                .next()
                .unwrap()
                .parse()
                .unwrap()
        })
        .collect();
    let svg_marks_right = mark_xs.iter().filter(|&&x| x > zero_px + 1e-3).count();
    let rows_right = x1.iter().filter(|&&v| v > 0.0).count();
    let rows_right_upper = (0..data.n_rows()).filter(|&i| x1[i] > 0.0 && x2[i] >= 0.0).count();
    let curves_drawn = svg.matches("class=\"curve\"").count();

    let pass = marks_in_quadrant == 0
        && rows_right_upper == 0
        && own_x_matches
        && quadrant_values_finite
        && !positive_grid.is_empty()
        && mark_xs.len() == data.n_rows()
        && svg_marks_right == rows_right
        && curves_drawn == data.n_rows();
    outcome(
        pass,
        format!(
            "{} curves with x2 >= 0, {marks_in_quadrant} of their marks at x1 > 0 (need 0); their values at {} grid points with x1 > 0 finite: {quadrant_values_finite}; SVG has {curves_drawn} curves and {} marks, {svg_marks_right} right of x1 = 0 vs {rows_right} rows with x1 > 0",
            upper.len(),
            positive_grid.len(),
            mark_xs.len()
        ),
    )
}

fn sorted_abs(v: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    a
}

fn spreads(panels: &[PanelBundle]) -> Vec<f64> {
    panels
        .iter()
        .map(|p| match p {
            PanelBundle::Cice(c) => centered_spread(c),
            _ => panic!("expected centered panels"),
        })
        .collect()
}

fn lineup_mechanics() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    // Null construction and key handling on one full lineup.
    let data = simulate(&SimSpec::new(SimModel::CrissCross, 400, 42)).unwrap();
    let split = ColumnSplit::new(1, 3).unwrap();
    let options = LineupOptions {
        h_learner: Some(LearnerSpec::Linear),
        ..LineupOptions::default()
    };
    let lineup = build_lineup(&data, &split, &trees(100), &options).unwrap();
    let b = &lineup.bundle;
    let multiset_ok = b.null_residuals.len() == 19
        && b.null_residuals
            .iter()
            .all(|r| sorted_abs(r) == sorted_abs(&b.residuals))
        && b.null_residuals
            .iter()
            .all(|r| r.iter().zip(&b.residuals).all(|(x, y)| x.abs() == y.abs()))
        && b.null_datasets
            .iter()
            .zip(&b.null_residuals)
            .all(|(y, r)| y.iter().zip(b.fitted.iter().zip(r)).all(|(yb, (f, rb))| *yb == f + rb));
    pass &= multiset_ok;
    notes.push(format!("sign-flip |r_b| multiset identity on 19 nulls: {multiset_ok}"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("key.json");
    lineup.key.save(&path).unwrap();
    let key = LineupKey::load(&path).unwrap();
    let verdict = reveal(&key, key.real_position).unwrap();
    let reveal_ok = verdict.correct
        && verdict.to_string() == "correct, p = 0.05"
        && key.verify_grid(&lineup.svg).is_ok()
        && key.real_position == draw_real_position(20, options.seed);
    pass &= reveal_ok;
    notes.push(format!("reveal on the true panel: '{verdict}'"));

    // Position uniformity.
    let mut counts = [0usize; 20];
    for seed in 0..200u64 {
        counts[draw_real_position(20, seed) - 1] += 1;
    }
    let expected = 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
    pass &= p > 0.01;
    notes.push(format!("position chi-square {chi2:.2}, p = {p:.3} (need > 0.01)"));

    // Real panel stands out on interacting data.
    let mut exceed = 0;
    for seed in 1..=20u64 {
        let data = simulate(&SimSpec::new(SimModel::CrissCross, 400, seed)).unwrap();
        let options = LineupOptions {
            seed,
            h_learner: Some(LearnerSpec::Linear),
            ..LineupOptions::default()
        };
        let l = build_lineup(&data, &split, &trees(100), &options).unwrap();
        let s = spreads(&l.bundle.panel_curves);
        let real = s[l.bundle.real_position - 1];
        if s.iter()
            .enumerate()
            .all(|(i, &v)| i == l.bundle.real_position - 1 || real > v)
        {
            exceed += 1;
        }
    }
    pass &= exceed >= 18;
    notes.push(format!(
        "criss-cross real spread above all nulls in {exceed}/20 seeds (need 18)"
    ));

    // Real panel blends in on additive data.
    let mut within = 0;
    let add_split = ColumnSplit::new(0, 2).unwrap();
    for seed in 1..=50u64 {
        let data = simulate(&SimSpec::new(SimModel::AdditiveParabola, 400, seed)).unwrap();
        let options = LineupOptions {
            seed,
            ..LineupOptions::default()
        };
        let l = build_lineup(&data, &add_split, &LearnerSpec::Additive { s_column: None }, &options).unwrap();
        let s = spreads(&l.bundle.panel_curves);
        let real = s[l.bundle.real_position - 1];
        let nulls: Vec<f64> = s
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != l.bundle.real_position - 1)
            .map(|(_, &v)| v)
            .collect();
        let lo = nulls.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nulls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo <= real && real <= hi {
            within += 1;
        }
    }
    pass &= within >= 45;
    notes.push(format!(
        "additive real spread within null range in {within}/50 seeds (need 45)"
    ));

    outcome(pass, notes.join("; "))
}

fn supersmoother() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
    let line: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
    let fit = supersmooth(&x, &line, 0.0).unwrap().fitted();
    let lin_err = fit.iter().zip(&line).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let normal = rand_distr::Normal::new(0.0, 0.1).unwrap();
    let truth: Vec<f64> = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).collect();
    let noisy: Vec<f64> = truth.iter().map(|t| t + rng.sample(normal)).collect();
    let fit = supersmooth(&x, &noisy, 0.0).unwrap().fitted();
    let rmse = (fit.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 500.0).sqrt();
    outcome(
        lin_err <= 1e-6 && rmse < 0.05,
        format!("linear max error {lin_err:.2e} (limit 1e-6), sine RMSE {rmse:.4} at N=500, sigma=0.1 (limit 0.05)"),
    )
}

fn wire_round_trip() -> Outcome {
    let data: FeatureMatrix = simulate(&SimSpec::new(SimModel::CrissCross, 300, 5)).unwrap();
    let adapter = env!("CARGO_BIN_EXE_echo-sum-adapter");
    let cfg = WireConfig {
        batch_size: 997,
        ..WireConfig::stdio(format!("'{adapter}' --n-features 3"), 3)
    };
    let remote = LearnerSpec::External(cfg).fit(&data, 0).unwrap();
    let local = closed_form(ClosedFormExpr::Sum, &[], 3).unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (s, grid) in [
        (0, GridSpec::Observed),
        (1, GridSpec::Uniform(40)),
        (2, GridSpec::Quantile(25)),
    ] {
        let split = ColumnSplit::new(s, 3).unwrap();
        let a: IceCurves = compute_ice(&remote, &data, &split, &grid).unwrap();
        let b = compute_ice(&local, &data, &split, &grid).unwrap();
        for (ca, cb) in a.curves.iter().zip(&b.curves) {
            for (x, y) in ca.iter().zip(cb) {
                worst = worst.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
                count += 1;
            }
        }
        let c = center_ice(&a, PinchSpec::Min).unwrap();
        assert!(c.curves_centered.iter().all(|r| r[0] == 0.0));
    }
    outcome(
        worst <= 1e-12,
        format!("{count} curve values through the stdio adapter, max relative difference {worst:.2e} (limit 1e-12)"),
    )
}
