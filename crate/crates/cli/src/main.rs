mod config;
mod profile;
mod replay;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pmsense_core::compare::compare;
use pmsense_core::forecast::{
    evaluate, persistence_baseline, predictive_alert, split_series, sweep, train, write_sweep_csv, Activation,
    AdamConfig, Architecture, ForecastModel, SweepGrid, TrainConfig,
};
use pmsense_core::sensing::{simulate_series, Converter, Noise};
use pmsense_core::timeseries::csv_io::{read_device_csv_file, read_station_csv_file, write_device_csv};
use pmsense_core::timeseries::{aggregate_points, DeviceRecord};
use pmsense_core::{AqiLevel, Exec, Pollutant, Timestamp};

use crate::config::CliConfig;
use crate::profile::Profile;
use crate::replay::Replay;

/// Exit status when `compare --tolerance` is exceeded.
const EXIT_TOLERANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "pmsense", version, about = "Low-cost particulate-matter monitoring toolkit")]
struct Cli {
    /// Settings file (TOML).
    #[arg(long, global = true, env = "PMSENSE_CONFIG")]
    config: Option<PathBuf>,
    /// Log verbosity filter, e.g. `info` or `pmsense_service=debug`.
    #[arg(long, global = true, env = "PMSENSE_LOG", default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a sensor following a daily profile and write converted
    /// readings as device CSV.
    Simulate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "2019-11-28T00:00:00Z")]
        start: Timestamp,
        #[arg(long, default_value_t = 24)]
        hours: u32,
        /// Seconds between readings.
        #[arg(long, default_value_t = 30)]
        cadence: u32,
        /// Multiplicative noise amplitude (0.05 = ±5 %).
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, env = "PMSENSE_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Compare device readings with a reference station.
    Compare {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        station: PathBuf,
        /// Bucket width in minutes.
        #[arg(long, default_value_t = 60)]
        bucket: u32,
        #[arg(long, default_value = "pm25")]
        field: String,
        /// Exit with status 3 when the mean absolute difference exceeds this.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the JSON report here.
        #[arg(long)]
        json_out: Option<PathBuf>,
    },
    /// Classify the mean over a pollutant's averaging window.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "pm25")]
        pollutant: Pollutant,
        #[arg(long, default_value = "pm25")]
        field: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Train a forecaster on a device CSV series.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, default_value_t = 61)]
        hidden: usize,
        #[arg(long, default_value = "softmax")]
        activation: Activation,
        #[command(flatten)]
        training: TrainingArgs,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
    },
    /// Predict the next value from the most recent readings.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated recent readings, oldest first.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Report an alert when the predicted class reaches this level.
        #[arg(long)]
        threshold: Option<AqiLevel>,
    },
    /// Grid-search hidden size, activation, epochs and seed.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long, value_delimiter = ',', default_value = "25,50,61,75,100")]
        hidden: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "relu,sigmoid,tanh,softmax")]
        activations: Vec<Activation>,
        #[arg(long, value_delimiter = ',', default_value = "100,200,500,1000")]
        epochs: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Run the HTTP ingestion service.
    Serve,
    /// Stream a device CSV into a running service.
    IngestReplay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "http://127.0.0.1:8080", env = "PMSENSE_URL")]
        url: String,
        #[arg(long)]
        channel: u64,
        #[arg(long, env = "PMSENSE_WRITE_KEY")]
        write_key: String,
        /// Playback speed; 1 is real time, 0 sends without pauses.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Skip rate-limited records instead of waiting and resending.
        #[arg(long)]
        no_retry: bool,
    },
}

#[derive(clap::Args)]
struct SeriesArgs {
    #[arg(long, default_value = "pm25")]
    field: String,
    /// Average into buckets of this many minutes before windowing.
    #[arg(long)]
    bucket: Option<u32>,
}

#[derive(clap::Args)]
struct TrainingArgs {
    #[arg(long, default_value_t = 9)]
    window: usize,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, env = "PMSENSE_SEED", default_value_t = 0)]
    seed: u64,
}

impl TrainingArgs {
    fn config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            train_fraction: self.train_fraction,
            window: self.window,
            seed: self.seed,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug)]
struct ToleranceExceeded {
    value: f64,
    tolerance: f64,
}

impl std::fmt::Display for ToleranceExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "mean absolute difference {} exceeds tolerance {}", self.value, self.tolerance)
    }
}

impl std::error::Error for ToleranceExceeded {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(&cli.log))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ToleranceExceeded>() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_TOLERANCE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { profile, out, start, hours, cadence, noise, seed } => {
            simulate_cmd(&profile, &out, start, hours, cadence, noise, seed)
        }
        Command::Compare { device, station, bucket, field, tolerance, format, json_out } => {
            let device = field_points(&read_device_csv_file(&device)
                .with_context(|| format!("reading {}", device.display()))?, &field);
            let station = read_station_csv_file(&station)
                .with_context(|| format!("reading {}", station.display()))?;
            let report = compare(&device, &station, bucket, &config.table()?, Exec::default())?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(path) = json_out {
                std::fs::write(&path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))?;
            }
            match format {
                Format::Text => print!("{}", report.to_table()),
                Format::Json => println!("{json}"),
            }
            match tolerance {
                Some(t) if report.mean_abs_difference > t => Err(ToleranceExceeded {
                    value: report.mean_abs_difference,
                    tolerance: t,
                }
                .into()),
                _ => Ok(()),
            }
        }
        Command::Classify { input, pollutant, field, format } => {
            let records = read_device_csv_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let points = field_points(&records, &field);
            let assessment = config.table()?.assess_series(&points, pollutant)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&assessment)?),
                Format::Text => {
                    println!(
                        "{} mean {:.3} over {} h ({} samples) -> {}",
                        pollutant, assessment.mean, assessment.window_hours, assessment.samples, assessment.class.level
                    );
                    println!("{}", assessment.class.health_text);
                }
            }
            Ok(())
        }
        Command::Train { input, out, series, hidden, activation, training, epochs } => {
            let values = load_series(&input, &series)?;
            let cfg = training.config(epochs);
            let data = split_series(&values, cfg.window, cfg.train_fraction)?;
            let model = train(&data.train, &cfg, Architecture { hidden, activation }, Exec::default())?;
            model.save(&out)?;
            let metrics = evaluate(&model, &data.test, Exec::default())?;
            let baseline = persistence_baseline(&data.test)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "model": out,
                    "train_examples": data.train.len(),
                    "test_examples": data.test.len(),
                    "final_loss": model.history.last(),
                    "test": metrics,
                    "persistence": baseline,
                }))?
            );
            Ok(())
        }
        Command::Predict { model, values, threshold } => {
            let model = ForecastModel::load(&model)?;
            match threshold {
                None => println!("{}", model.predict(&values)?),
                Some(level) => {
                    let table = config.table()?;
                    let predicted = model.predict(&values)?;
                    println!("{predicted}");
                    if let Some(alert) = predictive_alert(&model, &values, level, &table)? {
                        println!("ALERT {}: {}", alert.class.level, alert.class.health_text);
                    }
                }
            }
            Ok(())
        }
        Command::Sweep { input, out, series, hidden, activations, epochs, seeds, training } => {
            let values = load_series(&input, &series)?;
            let base = training.config(epochs.first().copied().unwrap_or(100));
            let data = split_series(&values, base.window, base.train_fraction)?;
            let grid = SweepGrid { hidden, activations, epochs, seeds };
            let cells = sweep(&grid, &data, &base, Exec::default())?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            write_sweep_csv(&mut w, &cells)?;
            w.flush()?;
            if let Some(best) = cells.first() {
                match &best.outcome {
                    Ok(m) => println!(
                        "best: hidden {} {} {} epochs seed {} rmse {:.4}",
                        best.spec.arch.hidden, best.spec.arch.activation, best.spec.epochs, best.spec.seed, m.rmse
                    ),
                    Err(e) => println!("every cell failed, first error: {e}"),
                }
            }
            Ok(())
        }
        Command::Serve => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(pmsense_service::serve(&config.service))?;
            Ok(())
        }
        Command::IngestReplay { input, url, channel, write_key, speed, no_retry } => {
            let records = read_device_csv_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let stats = Replay { base_url: &url, channel, write_key: &write_key, speed, retry: !no_retry }.run(&records)?;
            println!(
                "accepted {} rate-limited {} rejected {}",
                stats.accepted, stats.rate_limited, stats.rejected
            );
            Ok(())
        }
    }
}

fn field_points(records: &[DeviceRecord], field: &str) -> Vec<(Timestamp, f64)> {
    let mut points: Vec<(Timestamp, f64)> = records
        .iter()
        .filter(|r| r.field == field)
        .map(|r| (r.timestamp, r.value))
        .collect();
    points.sort_by_key(|p| p.0);
    points
}

fn load_series(path: &Path, args: &SeriesArgs) -> Result<Vec<f64>> {
    let records = read_device_csv_file(path).with_context(|| format!("reading {}", path.display()))?;
    let points = field_points(&records, &args.field);
    if points.is_empty() {
        bail!("{} has no `{}` readings", path.display(), args.field);
    }
    Ok(match args.bucket {
        Some(minutes) => aggregate_points(&points, minutes, Exec::default())?
            .into_iter()
            .map(|p| p.mean)
            .collect(),
        None => points.into_iter().map(|p| p.1).collect(),
    })
}

fn simulate_cmd(
    profile: &Path,
    out: &Path,
    start: Timestamp,
    hours: u32,
    cadence: u32,
    noise: f64,
    seed: u64,
) -> Result<()> {
    if cadence == 0 {
        bail!("cadence must be > 0 s");
    }
    if !(0.0..1.0).contains(&noise) {
        bail!("noise amplitude must be in [0, 1)");
    }
    let profile = Profile::load(profile)?;
    let targets = profile.targets(start, hours, cadence);
    let converter = Converter::default();
    let noise = (noise > 0.0).then_some(Noise { amplitude: noise, seed });
    let run = simulate_series(
        &targets,
        &profile.sensor_id,
        &converter,
        f64::from(cadence),
        noise,
        Exec::default(),
    )?;
    let records: Vec<DeviceRecord> = run
        .iter()
        .map(|r| DeviceRecord::from_sample(&r.converted, "pm25"))
        .collect();
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_device_csv(BufWriter::new(file), &records)?;
    let place = if profile.location.is_empty() { &profile.sensor_id } else { &profile.location };
    eprintln!("wrote {} readings for {place} to {}", records.len(), out.display());
    Ok(())
}
