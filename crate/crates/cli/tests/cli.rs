use std::io::Write;
use std::process::{Command, Output, Stdio};

fn icescope() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_icescope"));
    cmd.env("ICESCOPE_THREADS", "1");
    cmd
}

fn run_with_stdin(args: &[&str], stdin: &[u8]) -> Output {
    let mut child = icescope()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // Usage errors exit before reading stdin.
    if let Err(e) = child.stdin.take().unwrap().write_all(stdin) {
        assert_eq!(e.kind(), std::io::ErrorKind::BrokenPipe);
    }
    child.wait_with_output().unwrap()
}

fn simulate(model: &str, n: &str) -> Vec<u8> {
    let out = icescope()
        .args(["simulate", "--model", model, "--n", n, "--seed", "42"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn polyline_points(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with(&format!("<polyline class=\"{class}\"")))
        .map(|l| {
            l.split("points=\"")
                .nth(1)
                .unwrap()
                .trim_end_matches("\"/>")
                .split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}

#[test]
fn simulate_is_reproducible() {
    let a = simulate("criss-cross", "50");
    assert_eq!(a, simulate("criss-cross", "50"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,x3,y");
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn piped_ice_shows_two_slope_regimes() {
    let csv = simulate("criss-cross", "200");
    let out = run_with_stdin(
        &[
            "ice",
            "--feature",
            "x2",
            "--model",
            "closed-form:criss-cross-mean",
            "--grid",
            "uniform:11",
        ],
        &csv,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = String::from_utf8(out.stdout).unwrap();
    let curves = polyline_points(&svg, "curve");
    assert_eq!(curves.len(), 200);
    // Pixel slopes of every curve take one of two values with opposite signs.
    let mut slopes: Vec<f64> = curves.iter().map(|c| (c[10].1 - c[0].1) / (c[10].0 - c[0].0)).collect();
    slopes.sort_by(f64::total_cmp);
    let (lo, hi) = (slopes[0], slopes[slopes.len() - 1]);
    assert!(lo < 0.0 && hi > 0.0);
    assert!((lo + hi).abs() < 1e-3 * hi.abs());
    assert!(slopes
        .iter()
        .all(|s| (s - lo).abs() < 1e-3 * hi.abs() || (s - hi).abs() < 1e-3 * hi.abs()));
}

#[test]
fn pdp_csv_and_curves_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, simulate("additive-parabola", "100")).unwrap();
    let json = dir.path().join("curves.json");
    let svg = dir.path().join("ice.svg");
    let status = icescope()
        .args([
            "ice",
            "--input",
            data.to_str().unwrap(),
            "--feature",
            "x1",
            "--model",
            "linear",
        ])
        .args([
            "--sample",
            "10",
            "--out",
            svg.to_str().unwrap(),
            "--curves-json",
            json.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["curves"].as_array().unwrap().len(), 10);
    assert_eq!(v["meta"]["subsampled"], true);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let out = icescope()
        .args([
            "pdp",
            "--input",
            data.to_str().unwrap(),
            "--feature",
            "x1",
            "--model",
            "linear",
        ])
        .args(["--grid", "uniform:5"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("x1,pdp"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn cice_and_dice_render() {
    let csv = simulate("criss-cross", "60");
    for (cmd, extra) in [
        ("cice", vec!["--pinch", "0.1"]),
        ("dice", vec!["--bass", "2", "--roi-theta", "0.5"]),
    ] {
        let mut args = vec![
            cmd,
            "--feature",
            "x3",
            "--model",
            "bagged-trees:n=10",
            "--grid",
            "uniform:21",
        ];
        args.extend(extra);
        let out = run_with_stdin(&args, &csv);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let svg = String::from_utf8(out.stdout).unwrap();
        assert_eq!(svg.matches("class=\"curve\"").count(), 60);
    }
}

#[test]
fn usage_errors_exit_2() {
    let csv = simulate("criss-cross", "30");
    let out = run_with_stdin(&["ice", "--feature", "nope", "--model", "linear"], &csv);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));

    let out = run_with_stdin(&["ice", "--feature", "x1", "--grid", "fancy"], &csv);
    assert_eq!(out.status.code(), Some(2));

    let out = icescope().args(["ice"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = icescope().args(["simulate", "--model", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let out = run_with_stdin(&["ice", "--feature", "x1"], b"x1,y\n1,2\n1,abc\n");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("abc"));
    let out = icescope()
        .args(["ice", "--input", "/nonexistent/data.csv", "--feature", "x1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn lineup_then_reveal() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(&data, simulate("criss-cross", "120")).unwrap();
    let grid = dir.path().join("grid.svg");
    let key = dir.path().join("key.json");
    let out = icescope()
        .args(["lineup", "--input", data.to_str().unwrap(), "--feature", "x2"])
        .args([
            "--model",
            "bagged-trees:n=10",
            "--h-model",
            "linear",
            "--grid",
            "uniform:15",
        ])
        .args(["--k", "6", "--columns", "3", "--resample", "bootstrap"])
        .args(["--out", grid.to_str().unwrap(), "--key", key.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = std::fs::read_to_string(&grid).unwrap();
    assert_eq!(svg.matches("<g class=\"panel\"").count(), 6);

    let k: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&key).unwrap()).unwrap();
    let real = k["real_position"].as_u64().unwrap();
    let reveal = |guess: u64| {
        icescope()
            .args(["reveal", "--key", key.to_str().unwrap(), "--guess", &guess.to_string()])
            .args(["--grid", grid.to_str().unwrap()])
            .output()
            .unwrap()
    };
    let out = reveal(real);
    assert!(out.status.success());
    let p = 1.0 / 6.0;
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        format!("correct, p = {p}")
    );
    let wrong = if real == 1 { 2 } else { 1 };
    let text = String::from_utf8(reveal(wrong).stdout).unwrap();
    assert!(text.starts_with("incorrect") && text.contains(&format!("> {p}")));
    assert_eq!(reveal(7).status.code(), Some(2));

    let tampered = std::fs::read_to_string(&key).unwrap().replace(
        &format!("\"real_position\": {real}"),
        &format!("\"real_position\": {wrong}"),
    );
    std::fs::write(&key, tampered).unwrap();
    assert_eq!(reveal(wrong).status.code(), Some(1));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("icescope.toml");
    std::fs::write(&cfg, "model = \"linear\"\ngrid = \"uniform:7\"\nwidth = 400\n").unwrap();
    let csv = simulate("additive-parabola", "40");
    let out = run_with_stdin(&["--config", cfg.to_str().unwrap(), "ice", "--feature", "x1"], &csv);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = String::from_utf8(out.stdout).unwrap();
    assert!(svg.contains("width=\"400\""));
    assert!(polyline_points(&svg, "curve").iter().all(|c| c.len() == 7));

    std::fs::write(&cfg, "colour = \"red\"\n").unwrap();
    let out = run_with_stdin(&["--config", cfg.to_str().unwrap(), "ice", "--feature", "x1"], &csv);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn color_by_threshold() {
    let csv = simulate("criss-cross", "50");
    let out = run_with_stdin(
        &[
            "ice",
            "--feature",
            "x2",
            "--model",
            "linear",
            "--color-by",
            "x3",
            "--threshold",
            "ge:0",
        ],
        &csv,
    );
    assert!(out.status.success());
    let svg = String::from_utf8(out.stdout).unwrap();
    let red = svg.matches("class=\"curve\" fill=\"none\" stroke=\"#e41a1c\"").count();
    let blue = svg.matches("class=\"curve\" fill=\"none\" stroke=\"#377eb8\"").count();
    assert_eq!(red + blue, 50);
    assert!(red > 0 && blue > 0);
}
