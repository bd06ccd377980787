//! `bandscene` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bandscene::config::SimConfig;
use bandscene::dataset;
use bandscene::metrics::DEFAULT_BF_TOLERANCE;
use bandscene::scene::{self, DEFAULT_SPLITS, SWEEP_DISTANCES};
use bandscene::spectrogram::WindowKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bandscene", version, about = "ISM-band coexistence spectrogram datasets")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings applied on top of the config file.
#[derive(Args)]
struct Overrides {
    /// TOML simulation config; flags below take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Disable receiver noise.
    #[arg(long, global = true)]
    no_noise: bool,
    /// Noise density, dBm/Hz.
    #[arg(long, global = true, allow_hyphen_values = true)]
    noise_floor: Option<f64>,
    #[arg(long, global = true)]
    fft_length: Option<usize>,
    #[arg(long, global = true)]
    window_length: Option<usize>,
    #[arg(long, global = true)]
    overlap: Option<usize>,
    #[arg(long, global = true, value_enum)]
    window: Option<Window>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    Hann,
    Hamming,
}

#[derive(Clone, Copy, ValueEnum)]
enum Segmenter {
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random-scene dataset.
    Generate {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SPLITS)]
        splits: Vec<f64>,
    },
    /// Generate a SmartBAN distance sweep (test split only).
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_DISTANCES)]
        distances: Vec<f64>,
        #[arg(long)]
        per_distance: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render one scene from its metadata sidecar.
    Render {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against a dataset.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Produce the predictions with a built-in segmenter first.
        #[arg(long, value_enum)]
        segmenter: Option<Segmenter>,
        #[arg(long, default_value_t = DEFAULT_BF_TOLERANCE)]
        bf_tolerance: usize,
    },
    /// Render a record as a PNG.
    ExportPng {
        /// Any of the record's .img, .mask or .meta files.
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Outline the ground-truth classes.
        #[arg(long)]
        overlay_mask: bool,
        /// Integer upscaling factor.
        #[arg(long, default_value_t = 1)]
        scale: u32,
    },
}

impl Overrides {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::load(path)?,
            None => SimConfig::default(),
        };
        if self.no_noise {
            cfg.noise_enabled = false;
        }
        if let Some(v) = self.noise_floor {
            cfg.noise_floor_dbm_per_hz = v;
        }
        if let Some(v) = self.fft_length {
            cfg.stft.fft_length = v;
        }
        if let Some(v) = self.window_length {
            cfg.stft.window_length = v;
        }
        if let Some(v) = self.overlap {
            cfg.stft.overlap = v;
        }
        if let Some(w) = self.window {
            cfg.stft.window = match w {
                Window::Hann => WindowKind::Hann,
                Window::Hamming => WindowKind::Hamming,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_plans(plans: &[scene::RecordPlan], seed: u64, cfg: &SimConfig, out: &Path) -> Result<()> {
    log::info!("rendering {} records into {}", plans.len(), out.display());
    let manifest = dataset::write_dataset(plans, seed, cfg, out)?;
    println!("wrote {} records to {}", manifest.record_count, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { count, seed, out, splits } => {
            let cfg = cli.overrides.config()?;
            let Ok(fractions) = <[f64; 3]>::try_from(splits) else {
                bail!("--splits takes exactly three fractions (train, val, test)");
            };
            let plans = scene::plan_dataset(count, seed, fractions, &cfg)?;
            write_plans(&plans, seed, &cfg, &out)
        }
        Command::Sweep {
            distances,
            per_distance,
            seed,
            out,
        } => {
            let cfg = cli.overrides.config()?;
            let plans = scene::plan_sweep(&distances, per_distance, seed, &cfg)?;
            write_plans(&plans, seed, &cfg, &out)
        }
        Command::Render { meta, out } => {
            let meta = dataset::read_meta(&meta)?;
            let record = meta.plan().render(&meta.config)?;
            dataset::write_record(&record, &meta.config, &out)?;
            let stem = dataset::record_stem(record.split, record.id);
            println!("wrote {}", out.join(stem).display());
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            report,
            segmenter,
            bf_tolerance,
        } => {
            if bf_tolerance == 0 {
                bail!("--bf-tolerance must be at least 1");
            }
            let result = dataset::evaluate_dataset(&gt, &pred, bf_tolerance, segmenter.is_some())
                .with_context(|| format!("evaluating {} against {}", pred.display(), gt.display()))?;
            dataset::write_metrics_report(&result, &report)?;
            print!("{}", result.summary());
            Ok(())
        }
        Command::ExportPng {
            record,
            out,
            overlay_mask,
            scale,
        } => {
            if scale == 0 {
                bail!("--scale must be at least 1");
            }
            let (rec, _) = dataset::read_record(&record)?;
            let mask = overlay_mask.then_some(&rec.mask);
            dataset::export_png(&rec.image, mask, scale, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
