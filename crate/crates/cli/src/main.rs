//! `latent-calib` command-line driver.
//!
//! Every `--seed` is a root seed; jobs derive their own seeds from it the same
//! way `run-all` does, so running the steps one by one reproduces a full run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use latent_calib::autoencoder::{encode_dataset, AutoencoderModel};
use latent_calib::calibration::{evaluate_split, parse_keep_rates, split_name, IntervalMethod};
use latent_calib::datagen::{Dataset, DensityProfile, Split};
use latent_calib::experiments::config::Seeds;
use latent_calib::experiments::pipeline::{self, RunInputs};
use latent_calib::experiments::{report, RunConfig};
use latent_calib::forward::{train_forward, ForwardModel};

#[derive(Parser)]
#[command(
    name = "latent-calib",
    version,
    about = "Calibrated MC-dropout surrogates in an autoencoder latent space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (TOML or JSON); defaults apply to anything not set.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `uniform` or `ramp:RATIO`.
        #[arg(long, default_value = "uniform")]
        profile: String,
        #[arg(long)]
        d_img: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train the autoencoder on a dataset.
    TrainAe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        d_z: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train one MC-dropout forward model.
    TrainForward {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        keep_rate: f64,
        #[arg(long)]
        mc_train: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train one model per keep rate and select the best calibrated.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long, default_value = "0.90:0.99:0.01")]
        keep_rates: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Calibration report for a trained forward model on one split.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// `empirical` or `gaussian`.
        #[arg(long, default_value = "empirical")]
        method: String,
        #[arg(long)]
        s_pred: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every job end to end, then the report.
    RunAll {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Latent- vs output-residual comparison in an existing run directory.
    ToyCompare {
        #[arg(long)]
        run: PathBuf,
    },
    /// Contour uncertainty in an existing run directory (needs toy-compare and sweep).
    Contours {
        #[arg(long)]
        run: PathBuf,
    },
    /// Training-density study in an existing run directory (needs sweep).
    Density {
        #[arg(long)]
        run: PathBuf,
    },
    /// Render SVG figures and summary text from a run directory's CSVs.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "validation" => Split::Validation,
        "test" => Split::Test,
        _ => bail!("unknown split {s:?} (train, validation, test)"),
    })
}

fn load_pair(data: &Path, ae: &Path) -> Result<(Dataset, AutoencoderModel)> {
    let d = Dataset::load(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let a = AutoencoderModel::load(ae).with_context(|| format!("loading autoencoder {}", ae.display()))?;
    Ok((d, a))
}

fn run_inputs(run: &Path) -> Result<RunInputs> {
    pipeline::load_run(run).with_context(|| format!("loading run directory {}", run.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenData {
            n,
            seed,
            profile,
            d_img,
            out,
            config,
        } => {
            let mut cfg = config.load()?;
            cfg.data.n = n;
            if let Some(d) = d_img {
                cfg.data.d_img = d;
            }
            let profile: DensityProfile = profile.parse()?;
            pipeline::run_data(&cfg, profile, Seeds::from_root(seed).data, &out)?;
        }
        Command::TrainAe {
            data,
            d_z,
            epochs,
            seed,
            out,
            config,
        } => {
            let mut cfg = config.load()?.autoencoder;
            cfg.seed = Seeds::from_root(seed).autoencoder;
            if let Some(d) = d_z {
                cfg.d_z = d;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let d = Dataset::load(&data)?;
            pipeline::run_autoencoder(&d, &cfg, &out)?;
        }
        Command::TrainForward {
            data,
            ae,
            keep_rate,
            mc_train,
            epochs,
            seed,
            out,
            config,
        } => {
            let mut cfg = config.load()?.forward;
            if let Some(s) = mc_train {
                cfg.mc_train = s;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let (d, a) = load_pair(&data, &ae)?;
            let latent = encode_dataset(&a, &d)?;
            let model = train_forward(&latent, keep_rate, &cfg, Seeds::from_root(seed).forward)?;
            model.save(&out)?;
            for w in &model.log.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Sweep {
            data,
            ae,
            keep_rates,
            seed,
            out,
            config,
        } => {
            let cfg = config.load()?;
            let rates = parse_keep_rates(&keep_rates)?;
            let (d, a) = load_pair(&data, &ae)?;
            let latent = encode_dataset(&a, &d)?;
            let sweep = pipeline::run_sweep(
                &latent,
                &rates,
                &cfg.forward,
                Seeds::from_root(seed).forward,
                &cfg.eval,
                &out,
            )?;
            print!("{}", csv_text(&sweep.table()));
        }
        Command::Calibrate {
            model,
            data,
            ae,
            split,
            method,
            s_pred,
            seed,
            out,
        } => {
            let split = parse_split(&split)?;
            let method: IntervalMethod = method.parse()?;
            let (d, a) = load_pair(&data, &ae)?;
            let m = ForwardModel::load(&model).with_context(|| format!("loading model {}", model.display()))?;
            let latent = encode_dataset(&a, &d)?;
            let mut opts = RunConfig::default().eval;
            opts.method = method;
            opts.s_pred = s_pred;
            let rep = evaluate_split(&m, &latent, split, &opts, Seeds::from_root(seed).forward)?;
            println!(
                "split {} keep_rate {} mean calibration error {}",
                split_name(split),
                m.keep_rate,
                rep.mean_error
            );
            for (dim, e) in rep.dim_errors.iter().enumerate() {
                println!("  z{dim}: {e}");
            }
            if let Some(dir) = out {
                rep.write(&dir)?;
            }
        }
        Command::RunAll { out, config } => {
            let cfg = config.load()?;
            let summary = pipeline::run_all(&cfg, &out)?;
            println!(
                "selected keep rate {} with test calibration error {}",
                summary.selected_keep_rate, summary.selected_test_error
            );
        }
        Command::ToyCompare { run } => {
            let inp = run_inputs(&run)?;
            let seeds = inp.config.seeds();
            let toy = pipeline::run_toy(
                &inp.config,
                &inp.ae,
                &inp.data,
                &inp.latent,
                seeds.toy,
                &run.join("toy"),
            )?;
            let s = &toy.comparison.summary;
            println!(
                "latent r {} output r {} simulator r {}",
                s.latent_r, s.output_r, s.simulator_r
            );
        }
        Command::Contours { run } => {
            let inp = run_inputs(&run)?;
            let toy = pipeline::load_toy(&inp, &run)?;
            let selected = pipeline::load_selected(&run)?;
            let c = &inp.config;
            pipeline::run_contours(
                &c.contours,
                &toy,
                &selected,
                &inp.ae,
                c.toy.m,
                c.toy.replicates,
                c.seeds().contours,
                &run.join("contours"),
            )?;
        }
        Command::Density { run } => {
            let inp = run_inputs(&run)?;
            let selected = pipeline::load_selected(&run)?;
            let model = match inp.config.density.keep_rate {
                Some(k) if k != selected.keep_rate => {
                    train_forward(&inp.latent, k, &inp.config.forward, inp.config.seeds().forward)?
                }
                _ => selected,
            };
            pipeline::run_density(&inp.config, &inp.ae, &inp.data, &model, &run.join("density"))?;
        }
        Command::Report { run } => {
            report::render_report(&run)?;
            println!("{}", run.join("report").display());
        }
    }
    Ok(())
}

fn csv_text(t: &latent_calib::io::Table) -> String {
    let mut s = t.header.join(",");
    s.push('\n');
    for r in &t.rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
