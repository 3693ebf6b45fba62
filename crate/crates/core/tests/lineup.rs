use icescope::lineup::{build_lineup, resample_residuals, reveal, LineupKey, LineupOptions, ResampleMode};
use icescope::plot::PlotKind;
use icescope::{simulate, ColumnSplit, LearnerSpec, SimModel, SimSpec};

fn strip_numbers(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_num = false;
    for ch in s.chars() {
        let numeric = ch.is_ascii_digit() || (in_num && matches!(ch, '.' | 'e' | '-'));
        if numeric || (ch == '-' && !in_num) {
            if !in_num {
                out.push('#');
            }
            in_num = true;
        } else {
            in_num = false;
            out.push(ch);
        }
    }
    out
}

fn panels(svg: &str) -> Vec<String> {
    svg.split("<g class=\"panel\"")
        .skip(1)
        .map(|p| p.split("</g>\n</g>").next().unwrap().to_string())
        .collect()
}

fn small_lineup(kind: PlotKind, seed: u64) -> icescope::lineup::Lineup {
    let data = simulate(&SimSpec::new(SimModel::CrissCross, 80, seed)).unwrap();
    let split = ColumnSplit::by_name(&data, "x2").unwrap();
    let options = LineupOptions {
        k: 6,
        plot_kind: kind,
        seed,
        grid: "uniform:12".parse().unwrap(),
        ..LineupOptions::default()
    };
    build_lineup(&data, &split, &LearnerSpec::Linear, &options).unwrap()
}

#[test]
fn panels_differ_only_in_numbers() {
    for kind in [PlotKind::Ice, PlotKind::Cice, PlotKind::Dice] {
        let lineup = small_lineup(kind, 7);
        let svg = String::from_utf8(lineup.svg.clone()).unwrap();
        let shapes: Vec<String> = panels(&svg).iter().map(|p| strip_numbers(p)).collect();
        assert_eq!(shapes.len(), 6);
        for s in &shapes[1..] {
            assert_eq!(s, &shapes[0], "{kind} panel structure leaks the real panel");
        }
        assert!(!svg.to_lowercase().contains("real"));
        lineup.key.verify_grid(&lineup.svg).unwrap();
    }
}

#[test]
fn lineup_is_reproducible_and_key_round_trips() {
    let a = small_lineup(PlotKind::Cice, 3);
    let b = small_lineup(PlotKind::Cice, 3);
    assert_eq!(a.svg, b.svg);
    assert_eq!(a.key, b.key);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("key.json");
    a.key.save(&path).unwrap();
    let loaded = LineupKey::load(&path).unwrap();
    assert_eq!(loaded, a.key);
    let verdict = reveal(&loaded, loaded.real_position).unwrap();
    assert!(verdict.correct);
    assert_eq!(verdict.to_string(), format!("correct, p = {}", 1.0 / 6.0));
    let wrong = if loaded.real_position == 1 { 2 } else { 1 };
    assert!(!reveal(&loaded, wrong).unwrap().correct);
}

#[test]
fn null_responses_are_fit_plus_resampled_residuals() {
    let lineup = small_lineup(PlotKind::Ice, 11);
    let b = &lineup.bundle;
    assert_eq!(b.null_datasets.len(), b.k - 1);
    for (y, r) in b.null_datasets.iter().zip(&b.null_residuals) {
        for i in 0..y.len() {
            assert_eq!(y[i], b.fitted[i] + r[i]);
            assert_eq!(r[i].abs(), b.residuals[i].abs());
        }
    }
}

#[test]
fn sign_flip_mean_is_near_zero() {
    let r: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 2.0 + 0.5).collect();
    let trials = 10_000;
    let means: Vec<f64> = (0..trials)
        .map(|t| {
            let f = resample_residuals(&r, ResampleMode::SignFlip, t).unwrap();
            f.iter().sum::<f64>() / f.len() as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / trials as f64;
    // Each resample mean has variance sum(r^2) / n^2 under symmetric signs.
    let sd = (r.iter().map(|v| v * v).sum::<f64>()).sqrt() / r.len() as f64;
    assert!(grand.abs() < 3.0 * sd / (trials as f64).sqrt(), "{grand} vs {sd}");
}
