use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vlp_cli::figures::{read_meta, write_figure, FigureConfig};
use vlp_cli::report::validate_scenario;
use vlp_cli::table::Table;
use vlp_cli::{
    ensure_dir, exit_code, load_scenario, parse_override, read_scenario, write_json, CommandKind, RunManifest,
};
use vlp_core::crlb::{crlb, crlb_link};
use vlp_core::estimators::{direct_ml, two_step};
use vlp_core::montecarlo::{crlb_surface, sweep, trial_seed};
use vlp_core::{Error, Estimator, ReceivedSignalSet, Result, SweepAxis};

#[derive(Parser)]
#[command(
    name = "vlp",
    version,
    about = "Quasi-synchronous visible light positioning: bounds, estimators, sweeps"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON document; the built-in default room when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base noise seed; defaults to the scenario's noise.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials per point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Override a scenario field by dotted path, e.g. pulse.center_frequency=1e7.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Cramér-Rao bound at the scenario's receiver position.
    Crlb,
    /// sqrt-CRLB over the floor, written to surface.csv.
    Surface {
        /// Grid spacing, m.
        #[arg(long, default_value_t = 0.25)]
        spacing: f64,
    },
    /// Bound and estimator RMSE along one parameter, written to sweep.csv.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Estimators to run; none for a bound-only sweep.
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["direct", "two-step"])]
        estimators: Vec<EstimatorArg>,
    },
    /// Both estimators on one noisy realization.
    Estimate,
    /// Reproduce one of the eight figures as figN.csv plus figN.meta.json.
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=8))]
        n: u8,
        /// Re-run exactly the configuration recorded in a figN.meta.json.
        #[arg(long)]
        from_meta: Option<PathBuf>,
        /// Grid spacing of figure 1, m.
        #[arg(long)]
        spacing: Option<f64>,
    },
    /// Run the self-checks and print a JSON report.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Power,
    CenterFrequency,
    PulseDuration,
    TiltAngle,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Power => SweepAxis::Power,
            AxisArg::CenterFrequency => SweepAxis::CenterFrequency,
            AxisArg::PulseDuration => SweepAxis::PulseDuration,
            AxisArg::TiltAngle => SweepAxis::TiltAngle,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EstimatorArg {
    Direct,
    TwoStep,
    None,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn manifest(c: &Common, command: CommandKind, out: &Path) -> RunManifest {
    RunManifest {
        command,
        scenario_path: c.scenario.clone(),
        output_dir: out.to_path_buf(),
        overrides: c.overrides.iter().cloned().collect::<BTreeMap<_, _>>(),
        seed: c.seed,
    }
}

fn out_dir(c: &Common) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes to stdout; a closed pipe (`vlp ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))? + "\n"))
}

fn run(cli: &Cli) -> Result<u8> {
    let c = &cli.common;
    match &cli.command {
        Command::Crlb => {
            let s = load_scenario(c.scenario.as_deref(), &c.overrides)?;
            let bound = crlb(&s)?;
            let links: Vec<_> = (0..s.leds.len()).map(|i| crlb_link(&s, i).ok()).collect();
            #[derive(Serialize)]
            struct Out<'a> {
                sqrt_crlb_m: f64,
                bound: &'a vlp_core::CrlbResult,
                per_link: Vec<Option<vlp_core::crlb::LinkBound>>,
            }
            let out = Out {
                sqrt_crlb_m: bound.sqrt_mse(),
                bound: &bound,
                per_link: links,
            };
            print_json(&out)?;
            if let Some(dir) = &c.out {
                ensure_dir(dir)?;
                write_json(&dir.join("crlb.json"), &out)?;
                manifest(c, CommandKind::Crlb, dir).write()?;
            }
        }
        Command::Surface { spacing } => {
            let s = load_scenario(c.scenario.as_deref(), &c.overrides)?;
            let surf = crlb_surface(&s, *spacing)?;
            let mut t = Table::new(vec!["x_m".into(), "y_m".into(), "sqrt_crlb_m".into()]);
            for (iy, &y) in surf.ys.iter().enumerate() {
                for (ix, &x) in surf.xs.iter().enumerate() {
                    t.push(vec![Some(x), Some(y), surf.at(ix, iy)]);
                }
            }
            let dir = out_dir(c);
            ensure_dir(&dir)?;
            t.write(dir.join("surface.csv"))?;
            manifest(c, CommandKind::Surface, &dir).write()?;
            let gaps = surf.values.iter().filter(|v| v.is_none()).count();
            emit(&format!(
                "wrote {} grid points ({gaps} undefined) to {}\n",
                t.rows.len(),
                dir.join("surface.csv").display()
            ))?;
        }
        Command::Sweep {
            axis,
            values,
            estimators,
        } => {
            let s = load_scenario(c.scenario.as_deref(), &c.overrides)?;
            let ests: Vec<Estimator> = estimators
                .iter()
                .filter_map(|e| match e {
                    EstimatorArg::Direct => Some(Estimator::Direct),
                    EstimatorArg::TwoStep => Some(Estimator::TwoStep),
                    EstimatorArg::None => None,
                })
                .collect();
            let seed = c.seed.unwrap_or(s.noise.seed);
            let trials = c.trials.unwrap_or(vlp_cli::figures::DEFAULT_TRIALS);
            let r = sweep(&s, (*axis).into(), values, &ests, trials, seed)?;
            let mut columns = vec![r.axis.column().to_string(), "sqrt_crlb_m".to_string()];
            columns.extend(r.curves.iter().map(|cv| format!("rmse_{}_m", cv.estimator.name())));
            let mut t = Table::new(columns);
            for (i, &v) in r.values.iter().enumerate() {
                let mut row = vec![Some(v), r.sqrt_crlb[i]];
                row.extend(r.curves.iter().map(|cv| cv.rmse[i]));
                t.push(row);
            }
            let dir = out_dir(c);
            ensure_dir(&dir)?;
            t.write(dir.join("sweep.csv"))?;
            write_json(&dir.join("sweep.json"), &r)?;
            manifest(c, CommandKind::Sweep, &dir).write()?;
            emit(&t.to_csv_string())?;
        }
        Command::Estimate => {
            let s = load_scenario(c.scenario.as_deref(), &c.overrides)?;
            let seed = c.seed.unwrap_or(s.noise.seed);
            let rs = ReceivedSignalSet::synthesize(&s, |i| trial_seed(seed, 0, i as u64))?;
            let direct = direct_ml(&rs, &s.search);
            let two = two_step(&rs, &s.search);
            #[derive(Serialize)]
            struct Out {
                truth: vlp_core::nalgebra::Vector3<f64>,
                sqrt_crlb_m: Option<f64>,
                direct: std::result::Result<vlp_core::PositionEstimate, String>,
                direct_error_m: Option<f64>,
                two_step: std::result::Result<vlp_core::PositionEstimate, String>,
                two_step_error_m: Option<f64>,
                first_step: Option<vlp_core::FirstStepEstimates>,
            }
            let err = |p: &vlp_core::PositionEstimate| (p.position - s.receiver.position).norm();
            let out = Out {
                truth: s.receiver.position,
                sqrt_crlb_m: crlb(&s).ok().map(|b| b.sqrt_mse()),
                direct_error_m: direct.as_ref().ok().map(err),
                two_step_error_m: two.as_ref().ok().map(|(_, p)| err(p)),
                first_step: two.as_ref().ok().map(|(f, _)| f.clone()),
                direct: direct.map_err(|e| e.to_string()),
                two_step: two.map(|(_, p)| p).map_err(|e| e.to_string()),
            };
            print_json(&out)?;
            if let Some(dir) = &c.out {
                ensure_dir(dir)?;
                write_json(&dir.join("estimate.json"), &out)?;
                manifest(c, CommandKind::Estimate, dir).write()?;
            }
        }
        Command::Figure { n, from_meta, spacing } => {
            let config = match from_meta {
                Some(path) => {
                    let meta = read_meta(path)?;
                    if meta.config.figure != *n {
                        return Err(Error::Config(format!(
                            "{} describes figure {}, not {n}",
                            path.display(),
                            meta.config.figure
                        )));
                    }
                    meta.config
                }
                None => {
                    let s = load_scenario(c.scenario.as_deref(), &c.overrides)?;
                    let mut config = FigureConfig::new(*n, s)?;
                    if let Some(seed) = c.seed {
                        config.base_seed = seed;
                    }
                    if let Some(t) = c.trials {
                        config.trials = t;
                    }
                    if let Some(h) = spacing {
                        config.grid_spacing = *h;
                    }
                    config
                }
            };
            let dir = out_dir(c);
            let out = write_figure(&config, &dir)?;
            manifest(c, CommandKind::Figure, &dir).write()?;
            let gaps = out.table.rows.iter().flatten().filter(|v| v.is_none()).count();
            emit(&format!(
                "figure {n}: {} rows, {gaps} gaps, {:.1} s -> {}\n",
                out.table.rows.len(),
                out.meta.runtime_s,
                vlp_cli::figures::csv_path(&dir, *n).display()
            ))?;
        }
        Command::Validate => {
            let loaded = read_scenario(c.scenario.as_deref(), &c.overrides)?;
            let report = validate_scenario(&loaded.scenario, loaded.unknown_fields);
            print_json(&report)?;
            if let Some(dir) = &c.out {
                ensure_dir(dir)?;
                write_json(&dir.join("validate.json"), &report)?;
                manifest(c, CommandKind::Validate, dir).write()?;
            }
            if !report.passed {
                return Ok(1);
            }
        }
    }
    Ok(0)
}
