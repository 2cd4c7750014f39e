//! `polygonal`: fit, approximate, select, compare and simulate polygonal
//! mixtures. Exit codes: 0 success, 1 usage or input error, 2 numerical
//! failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use polygonal::approx::{polygonal_from_concave, squared_polygonal};
use polygonal::dist::{poly_sample, Sample};
use polygonal::divergence::{hellinger_sq, kl_divergence, sup_distance};
use polygonal::fit::{em_fit, fit_nested, FitConfig};
use polygonal::harness::{self, ExperimentConfig, OutputFormat};
use polygonal::quadrature::QuadratureConfig;
use polygonal::select::{select_calibrated, select_g, CalibrationConfig, SelectOptions, ShapeMode};
use polygonal::targets::Target;
use polygonal::Error;

#[derive(Parser)]
#[command(
    name = "polygonal",
    version,
    about = "Mixtures of triangular densities on [0, 1]"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a g-component mixture to a sample by EM.
    Fit {
        /// Sample as a JSON array or a CSV file with header `x`.
        sample: PathBuf,
        #[arg(long, default_value_t = 1)]
        g: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative log-likelihood tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interpolate a concave target by a mixture on g + 1 uniform nodes.
    Approximate {
        /// Built-in (uniform, tri:<θ>, quad6, sine), mixture JSON, or CSV `x,y`.
        target: String,
        #[arg(long, default_value_t = 4)]
        g: usize,
        /// Also report K(h‖s) for the squared polygonal density s.
        #[arg(long)]
        squared: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose the number of components by penalized likelihood.
    Select {
        sample: PathBuf,
        #[arg(long, default_value_t = 5)]
        gamma: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Fixed penalty multiplier; calibrated by the dimension jump if absent.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, value_enum, default_value_t = Shape::Solved)]
        shape: Shape,
        /// Write the (κ′, ĝ) calibration path as CSV.
        #[arg(long)]
        path_csv: Option<PathBuf>,
        /// Include every per-g fit in the output.
        #[arg(long)]
        with_fits: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Divergence between two densities, K(first‖second) for `kl`.
    Divergence {
        first: String,
        second: String,
        #[arg(long, value_enum, default_value_t = Metric::Kl)]
        metric: Metric,
    },
    /// Run a simulation experiment from a JSON config.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw a sample from a mixture target, written as CSV with header `x`.
    Sample {
        target: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Kl,
    Hellinger,
    Sup,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Solved,
    ClosedForm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> polygonal::Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cmd: Command) -> polygonal::Result<()> {
    let quad = QuadratureConfig::default();
    match cmd {
        Command::Fit {
            sample,
            g,
            restarts,
            seed,
            tol,
            max_iter,
            out,
        } => {
            let sample = Sample::load(&sample)?;
            let cfg = FitConfig {
                restarts,
                seed,
                tolerance: tol,
                max_iterations: max_iter,
                ..FitConfig::new(g)
            };
            write_json(&em_fit(&sample, &cfg)?, out.as_deref())
        }
        Command::Approximate {
            target,
            g,
            squared,
            out,
        } => {
            let target = Target::resolve(&target)?;
            let h = target.concave();
            let result = polygonal_from_concave(&h, g)?;
            let mut json = serde_json::to_value(&result)?;
            json["modes"] = serde_json::to_value(result.params.mode_values())?;
            if squared {
                let s = squared_polygonal(&h, g, &quad)?;
                json["kl_squared"] = kl_divergence(&target.density(), &s.density, &quad)?.into();
            }
            write_json(&json, out.as_deref())
        }
        Command::Select {
            sample,
            gamma,
            seed,
            restarts,
            kappa,
            shape,
            path_csv,
            with_fits,
            out,
        } => {
            let sample = Sample::load(&sample)?;
            let cfg = FitConfig {
                restarts,
                seed,
                ..FitConfig::new(1)
            };
            let fits = fit_nested(&sample, gamma, &cfg)?;
            let opts = SelectOptions {
                shape: match shape {
                    Shape::Solved => ShapeMode::Solved,
                    Shape::ClosedForm => ShapeMode::ClosedForm,
                },
                ..Default::default()
            };
            let mut result = match kappa {
                Some(k) => select_g(&fits, sample.len(), k, &opts)?,
                None => {
                    let (result, cal) = select_calibrated(
                        &fits,
                        sample.len(),
                        &opts,
                        &CalibrationConfig::default(),
                    )?;
                    if let (Some(p), Some(cal)) = (&path_csv, cal) {
                        cal.write_path_csv(File::create(p)?)?;
                    }
                    result
                }
            };
            if !with_fits {
                result.fits.clear();
            }
            write_json(&result, out.as_deref())
        }
        Command::Divergence {
            first,
            second,
            metric,
        } => {
            let f = Target::resolve(&first)?.density();
            let h = Target::resolve(&second)?.density();
            let (name, value) = match metric {
                Metric::Kl => ("kl", kl_divergence(&f, &h, &quad)?),
                Metric::Hellinger => ("hellinger_sq", hellinger_sq(&f, &h, &quad)?),
                Metric::Sup => ("sup", sup_distance(&f, &h)),
            };
            write_json(&serde_json::json!({ "metric": name, "value": value }), None)
        }
        Command::Simulate {
            config,
            out,
            format,
            seed,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(f) = format {
                cfg.format = match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Json => OutputFormat::Json,
                };
            }
            if out.is_some() {
                cfg.output = out;
            }
            let table = harness::run(&cfg)?;
            let mut w = output(cfg.output.as_deref())?;
            table.write(cfg.format, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Sample {
            target,
            n,
            seed,
            out,
        } => {
            let target = Target::resolve(&target)?;
            let params = target.params().ok_or_else(|| {
                Error::Config(format!("cannot sample from {target}; it is not a mixture"))
            })?;
            let sample = poly_sample(&params, n, seed)?;
            let mut w = output(out.as_deref())?;
            w.write_all(sample.to_csv_string().as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
