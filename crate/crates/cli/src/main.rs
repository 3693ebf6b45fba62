use std::fs::File;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use icescope::dataset::{read_csv, simulate, ColumnSplit, FeatureMatrix, SimModel, SimSpec};
use icescope::ice::{
    bind_color, center_ice, compute_dice, compute_ice, find_roi, sample_curves, ColorMode, DerivativeMethod,
    DiceOptions, GridSpec, IceCurves, PinchSpec, SampleSpec, ThresholdRule,
};
use icescope::lineup::{build_lineup, reveal, LineupKey, LineupOptions, ResampleMode};
use icescope::plot::{render_cice, render_dice, render_ice, PlotKind, PlotSpec};
use icescope::predictors::{LearnerSpec, SmootherConfig};
use icescope::{rng, Error};

mod config;
use config::Config;

const DEFAULT_MODEL: &str = "bagged-trees:n=100,leaf=5";

#[derive(Parser)]
#[command(
    name = "icescope",
    version,
    about = "ICE, centered ICE, derivative ICE and PDP plots for black-box models"
)]
struct Cli {
    /// Worker threads for model evaluation; defaults to all cores.
    #[arg(long, global = true, env = "ICESCOPE_THREADS")]
    threads: Option<usize>,
    /// TOML file with default option values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plot individual conditional expectation curves.
    Ice(CurveArgs),
    /// Plot ICE curves pinched to zero at one point.
    Cice {
        #[command(flatten)]
        curves: CurveArgs,
        /// min, max, or a value (snapped to the nearest grid point).
        #[arg(long)]
        pinch: Option<String>,
    },
    /// Plot derivative ICE curves with their standard deviation.
    Dice {
        #[command(flatten)]
        curves: CurveArgs,
        /// Smoother bass control in [0, 10].
        #[arg(long)]
        bass: Option<f64>,
        /// Difference the raw curves instead of the smoothed ones.
        #[arg(long)]
        raw_differences: bool,
        /// Report regions where the sd is at least this fraction of its maximum.
        #[arg(long)]
        roi_theta: Option<f64>,
    },
    /// Write the partial dependence function as CSV.
    Pdp(DataArgs),
    /// Build a lineup of real and null plots for a visual additivity test.
    Lineup {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        style: StyleArgs,
        /// Number of panels, one of them real (default 20).
        #[arg(long)]
        k: Option<usize>,
        /// ice, cice or dice.
        #[arg(long, default_value = "cice")]
        plot: String,
        /// sign-flip or bootstrap.
        #[arg(long)]
        resample: Option<String>,
        /// Panels per row.
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long)]
        pinch: Option<String>,
        #[arg(long)]
        bass: Option<f64>,
        /// Learner for the non-plotted columns while backfitting; defaults to --model.
        #[arg(long)]
        h_model: Option<String>,
        /// Where to write the answer key.
        #[arg(long)]
        key: PathBuf,
        /// After writing, read a guess from standard input and print the verdict.
        #[arg(long)]
        ask: bool,
    },
    /// Score a lineup guess against its key.
    Reveal {
        #[arg(long)]
        key: PathBuf,
        /// Panel number, counted from 1 in reading order.
        #[arg(long)]
        guess: usize,
        /// Also check that this grid SVG is the one the key was written for.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write a simulated data set as CSV.
    Simulate {
        /// criss-cross, additive-parabola or extrapolation-quadrant.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_sd: Option<f64>,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row, or - for standard input.
    #[arg(long, default_value = "-")]
    input: String,
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// The feature to vary.
    #[arg(long)]
    feature: String,
    /// Learner spec, e.g. bagged-trees:n=100,leaf=5, linear, closed-form:criss-cross-mean, external:cmd=...
    #[arg(long)]
    model: Option<String>,
    /// observed, uniform:G or quantile:G.
    #[arg(long)]
    grid: Option<String>,
    /// Seed for model fitting and curve sampling (default 42).
    #[arg(long)]
    seed: Option<u64>,
    /// Keep a fraction in (0, 1] or a count of curves.
    #[arg(long)]
    sample: Option<String>,
    /// Output path, or - for standard output.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct StyleArgs {
    /// Color curves by this column.
    #[arg(long)]
    color_by: Option<String>,
    /// auto, categorical or continuous.
    #[arg(long, default_value = "auto")]
    color_mode: String,
    /// Color by an indicator instead: gt_median, gt:<v> or ge:<v>.
    #[arg(long)]
    threshold: Option<String>,
    /// Plot width in pixels (per panel for lineups).
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    no_pdp: bool,
    #[arg(long)]
    no_marks: bool,
    #[arg(long)]
    no_deciles: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    style: StyleArgs,
    /// Also write the curves as JSON.
    #[arg(long)]
    curves_json: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownColumn(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn parse<T: FromStr>(what: &str, s: &str) -> Outcome<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Failure::Usage(format!("--{what}: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("icescope: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("icescope: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(Failure::Usage)?,
        None => Config::default(),
    };
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Ice(args) => curves_command(&config, args, CurveKind::Ice),
        Command::Cice { curves, pinch } => {
            let pinch = pinch.or(config.pinch.clone()).unwrap_or_else(|| "min".into());
            let pinch = parse("pinch", &pinch)?;
            curves_command(&config, curves, CurveKind::Cice(pinch))
        }
        Command::Dice {
            curves,
            bass,
            raw_differences,
            roi_theta,
        } => {
            let options = DiceOptions {
                smoother: SmootherConfig::with_bass(bass.or(config.bass).unwrap_or(0.0)),
                method: if raw_differences {
                    DerivativeMethod::RawCentral
                } else {
                    DerivativeMethod::SmoothedCentral
                },
            };
            curves_command(&config, curves, CurveKind::Dice(options, roi_theta))
        }
        Command::Pdp(args) => pdp_command(&config, args),
        Command::Lineup {
            data,
            style,
            k,
            plot,
            resample,
            columns,
            pinch,
            bass,
            h_model,
            key,
            ask,
        } => {
            let defaults = LineupOptions::default();
            let seed = data.seed.or(config.seed).unwrap_or(rng::DEFAULT_SEED);
            let plot_kind: PlotKind = parse("plot", &plot)?;
            let mut options = LineupOptions {
                k: k.or(config.k).unwrap_or(defaults.k),
                plot_kind,
                resample: match resample.or(config.resample.clone()) {
                    Some(r) => parse("resample", &r)?,
                    None => ResampleMode::SignFlip,
                },
                seed,
                grid: match data.grid.clone().or(config.grid.clone()) {
                    Some(g) => parse("grid", &g)?,
                    None => defaults.grid.clone(),
                },
                pinch: parse("pinch", &pinch.or(config.pinch.clone()).unwrap_or_else(|| "min".into()))?,
                sample: sample_spec(&config, &data)?,
                dice: DiceOptions {
                    smoother: SmootherConfig::with_bass(bass.or(config.bass).unwrap_or(0.0)),
                    ..DiceOptions::default()
                },
                h_learner: h_model.map(|m| parse("h-model", &m)).transpose()?,
                columns: columns.or(config.columns).unwrap_or(defaults.columns),
                ..defaults
            };
            if ask && data.input == "-" {
                return Err(Failure::Usage(
                    "--ask reads the guess from standard input, so --input must be a file".into(),
                ));
            }
            let frame = load(&config, &data)?;
            let split = ColumnSplit::by_name(&frame, &data.feature)?;
            options.plot = PlotSpec {
                width: style.width.or(config.width).unwrap_or(options.plot.width),
                height: style.height.or(config.height).unwrap_or(options.plot.height),
                show_pdp: !style.no_pdp,
                show_observed_marks: !style.no_marks && options.plot.show_observed_marks,
                show_decile_ticks: !style.no_deciles && options.plot.show_decile_ticks,
                color_binding: color_binding(&frame, &style)?,
                title: style.title.clone(),
                ..options.plot
            };
            let learner = learner(&config, &data)?;
            let lineup = build_lineup(&frame, &split, &learner, &options)?;
            write_output(&data.out, &lineup.svg)?;
            lineup.key.save(&key)?;
            if !lineup.bundle.backfit_converged {
                eprintln!(
                    "icescope: warning: backfitting stopped after {} iterations without converging",
                    lineup.bundle.backfit_iterations
                );
            }
            if ask {
                let shown = if data.out == "-" {
                    "standard output".to_string()
                } else {
                    data.out.clone()
                };
                eprint!(
                    "Lineup written to {shown}. Which panel (1-{}) shows the real data? ",
                    options.k
                );
                let mut line = String::new();
                io::stdin()
                    .lock()
                    .read_line(&mut line)
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                let guess = parse("guess", line.trim())?;
                println!("{}", reveal(&lineup.key, guess).map_err(usage_if_invalid)?);
            }
            Ok(())
        }
        Command::Reveal { key, guess, grid } => {
            let key = LineupKey::load(&key)?;
            if let Some(path) = grid {
                let svg = std::fs::read(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
                key.verify_grid(&svg)?;
            }
            println!("{}", reveal(&key, guess).map_err(usage_if_invalid)?);
            Ok(())
        }
        Command::Simulate {
            model,
            n,
            seed,
            noise_sd,
            out,
        } => {
            let model: SimModel = parse("model", &model)?;
            let mut spec = SimSpec::new(model, n, seed.or(config.seed).unwrap_or(rng::DEFAULT_SEED));
            if let Some(sd) = noise_sd {
                spec = spec.noise_sd(sd);
            }
            let data = simulate(&spec).map_err(usage_if_invalid)?;
            let mut buf = Vec::new();
            data.write_csv(&mut buf)?;
            write_output(&out, &buf)
        }
    }
}

fn usage_if_invalid(e: Error) -> Failure {
    match e {
        Error::InvalidArgument(msg) => Failure::Usage(msg),
        e => e.into(),
    }
}

enum CurveKind {
    Ice,
    Cice(PinchSpec),
    Dice(DiceOptions, Option<f64>),
}

fn learner(config: &Config, data: &DataArgs) -> Outcome<LearnerSpec> {
    let spec = data
        .model
        .clone()
        .or(config.model.clone())
        .unwrap_or_else(|| DEFAULT_MODEL.into());
    parse("model", &spec)
}

fn sample_spec(config: &Config, data: &DataArgs) -> Outcome<Option<SampleSpec>> {
    data.sample
        .clone()
        .or(config.sample.clone())
        .map(|s| parse("sample", &s))
        .transpose()
}

fn load(config: &Config, data: &DataArgs) -> Outcome<FeatureMatrix> {
    let response = data
        .response
        .clone()
        .or(config.response.clone())
        .unwrap_or_else(|| "y".into());
    let frame = if data.input == "-" {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::Runtime(format!("reading standard input: {e}")))?;
        read_csv(buf.as_slice(), &response)
    } else {
        let path = Path::new(&data.input);
        let file = File::open(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        read_csv(file, &response)
    };
    frame.map_err(|e| match e {
        Error::UnknownColumn(_) => Failure::Usage(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    })
}

fn color_binding(frame: &FeatureMatrix, style: &StyleArgs) -> Outcome<Option<icescope::ice::ColorBinding>> {
    let mode: ColorMode = parse("color-mode", &style.color_mode)?;
    let threshold: Option<ThresholdRule> = style.threshold.as_deref().map(|t| parse("threshold", t)).transpose()?;
    match &style.color_by {
        Some(name) => Ok(Some(bind_color(frame, name, mode, threshold)?)),
        None if threshold.is_some() => Err(Failure::Usage("--threshold needs --color-by".into())),
        None => Ok(None),
    }
}

fn write_output(out: &str, bytes: &[u8]) -> Outcome {
    let result = if out == "-" {
        let mut stdout = io::stdout().lock();
        stdout.write_all(bytes).and_then(|_| stdout.flush())
    } else {
        std::fs::write(out, bytes)
    };
    result.map_err(|e| Failure::Runtime(format!("writing {out}: {e}")))
}

fn write_json(path: &Path, json: String) -> Outcome {
    std::fs::write(path, json + "\n").map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn ice_for(config: &Config, data: &DataArgs) -> Outcome<(FeatureMatrix, IceCurves)> {
    let seed = data.seed.or(config.seed).unwrap_or(rng::DEFAULT_SEED);
    let grid: GridSpec = match data.grid.clone().or(config.grid.clone()) {
        Some(g) => parse("grid", &g)?,
        None => GridSpec::Observed,
    };
    let frame = load(config, data)?;
    let split = ColumnSplit::by_name(&frame, &data.feature)?;
    let spec = learner(config, data)?.bind_feature(&data.feature);
    let model = spec.fit(&frame, seed)?;
    let mut ice = compute_ice(&model, &frame, &split, &grid)?;
    if let Some(sample) = sample_spec(config, data)? {
        ice = sample_curves(&ice, sample, seed)?;
    }
    Ok((frame, ice))
}

fn curves_command(config: &Config, args: CurveArgs, kind: CurveKind) -> Outcome {
    let (frame, ice) = ice_for(config, &args.data)?;
    let style = &args.style;
    let defaults = PlotSpec::default();
    let spec = PlotSpec {
        width: style.width.or(config.width).unwrap_or(defaults.width),
        height: style.height.or(config.height).unwrap_or(defaults.height),
        show_pdp: !style.no_pdp,
        show_observed_marks: !style.no_marks,
        show_decile_ticks: !style.no_deciles,
        color_binding: color_binding(&frame, style)?,
        title: style.title.clone(),
        ..defaults
    };
    let (svg, json) = match kind {
        CurveKind::Ice => (render_ice(&ice, &spec)?, ice.to_json()),
        CurveKind::Cice(pinch) => {
            let c = center_ice(&ice, pinch)?;
            if c.snapped {
                eprintln!("icescope: pinch point snapped to grid value {}", c.x_star);
            }
            (render_cice(&c, &spec)?, to_json(&c)?)
        }
        CurveKind::Dice(options, theta) => {
            let d = compute_dice(&ice, &options)?;
            if let Some(theta) = theta {
                for r in find_roi(&d.sd_curve, &d.grid, theta).map_err(usage_if_invalid)? {
                    eprintln!(
                        "region of interaction: [{}, {}], peak sd {} at {}",
                        r.lo, r.hi, r.peak_sd, r.peak_x
                    );
                }
            }
            (render_dice(&d, &spec)?, to_json(&d)?)
        }
    };
    if let Some(path) = &args.curves_json {
        write_json(path, json)?;
    }
    write_output(&args.data.out, &svg)
}

fn to_json<T: serde::Serialize>(value: &T) -> Outcome<String> {
    serde_json::to_string(value).map_err(|e| Failure::Runtime(e.to_string()))
}

fn pdp_command(config: &Config, args: DataArgs) -> Outcome {
    let (_, ice) = ice_for(config, &args)?;
    let mut out = format!("{},pdp\n", args.feature);
    for (x, p) in ice.grid.iter().zip(&ice.pdp) {
        out.push_str(&format!("{x},{p}\n"));
    }
    write_output(&args.out, out.as_bytes())
}
