//! Job functions and the end-to-end driver.
//!
//! Run directory layout:
//!
//! ```text
//! config.json      resolved configuration
//! data/            dataset (+ density/data for the ramp dataset)
//! ae/              autoencoder checkpoint, reconstruction_r2.csv
//! latent/          encoded dataset
//! sweep/           sweep.csv, members/, selected/
//! toy/             residual-method clouds and summary
//! contours/        contour tables and summary
//! density/         ramp and uniform sd profiles, histogram, summary
//! report/          SVG figures and summary.txt
//! summary.json
//! ```

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{ContourConfig, RunConfig};
use super::density::{density_study, DensityStudy, DensitySummary};
use super::report::{self, summary_table};
use super::toy::{
    contour_uncertainty, output_mean_image_contours, sample_contours, toy_compare, ResidualUncertaintyModel, Space,
    ToyComparison, ToySummary,
};
use crate::autoencoder::{encode_dataset, train_autoencoder, AutoencoderConfig, AutoencoderModel, LatentDataset};
use crate::calibration::{sweep_keep_rate, EvalOptions, SweepResult};
use crate::datagen::{generate_dataset, Dataset, DensityProfile, SimInput, Simulator, Split};
use crate::error::{Error, Result};
use crate::forward::{train_forward, ForwardConfig, ForwardLoss, ForwardModel};
use crate::io::{self, fmt, write_json, Table};
use crate::rng::derive_seed;

/// Contour rows kept in `latent_samples.csv`.
pub const CONTOUR_SAMPLE_LIMIT: usize = 50;

pub fn run_data(config: &RunConfig, profile: DensityProfile, seed: u64, dir: &Path) -> Result<Dataset> {
    let sim = Simulator::new(config.data.d_img)?;
    let d = generate_dataset(config.data.n, seed, profile, config.data.split, &sim)?;
    d.write(dir)?;
    info!("dataset: {} samples ({profile}) -> {}", d.len(), dir.display());
    Ok(d)
}

/// Trains, saves and writes `reconstruction_r2.csv` (validation split).
pub fn run_autoencoder(dataset: &Dataset, config: &AutoencoderConfig, dir: &Path) -> Result<AutoencoderModel> {
    let ae = train_autoencoder(dataset, config)?;
    ae.save(dir)?;
    let r2 = ae.scalar_r2(dataset, Split::Validation)?;
    let mut t = Table::new(["channel", "r2"]);
    for (c, v) in r2.iter().enumerate() {
        t.push(vec![format!("s{c}"), fmt(*v)]);
    }
    t.write(&dir.join("reconstruction_r2.csv"))?;
    info!(
        "autoencoder: min validation R² {:.4}",
        r2.iter().copied().fold(f64::INFINITY, f64::min)
    );
    Ok(ae)
}

pub fn run_latent(ae: &AutoencoderModel, dataset: &Dataset, dir: &Path) -> Result<LatentDataset> {
    let latent = encode_dataset(ae, dataset)?;
    latent.write(dir)?;
    Ok(latent)
}

pub fn run_sweep(
    latent: &LatentDataset,
    keep_rates: &[f64],
    forward: &ForwardConfig,
    seed: u64,
    eval: &EvalOptions,
    dir: &Path,
) -> Result<SweepResult> {
    let sweep = sweep_keep_rate(latent, keep_rates, forward, seed, eval, Some(dir))?;
    sweep.write(dir)?;
    info!(
        "sweep: selected keep rate {} (test error {:.4})",
        sweep.selected_keep_rate,
        sweep.selected().test.mean_error
    );
    Ok(sweep)
}

/// Deterministic forward model used by the residual methods.
pub fn train_deterministic(
    latent: &LatentDataset,
    base: &ForwardConfig,
    epochs: usize,
    seed: u64,
) -> Result<ForwardModel> {
    let config = ForwardConfig {
        epochs,
        loss: ForwardLoss::Mse,
        input_dropout: false,
        ..base.clone()
    };
    train_forward(latent, 1.0, &config, seed)
}

/// The toy input: the configured one, else the first test-split sample.
pub fn toy_input(config: &RunConfig, dataset: &Dataset) -> Result<SimInput> {
    match &config.toy.input {
        Some(x) => SimInput::new(x.clone()),
        None => {
            let i = *dataset
                .split(Split::Test)
                .first()
                .ok_or_else(|| Error::InvalidArgument("dataset has an empty test split".into()))?;
            Ok(dataset.input(i))
        }
    }
}

pub struct ToyArtifacts {
    pub comparison: ToyComparison,
    pub output_model: ResidualUncertaintyModel,
}

pub fn run_toy(
    config: &RunConfig,
    ae: &AutoencoderModel,
    dataset: &Dataset,
    latent: &LatentDataset,
    seed: u64,
    dir: &Path,
) -> Result<ToyArtifacts> {
    io::ensure_dir(dir)?;
    let det = train_deterministic(latent, &config.forward, config.toy.epochs, derive_seed(seed, "forward"))?;
    det.save(&dir.join("deterministic"))?;
    let latent_model = ResidualUncertaintyModel::fit(Space::Latent, ae, &det, dataset, latent)?;
    let output_model = ResidualUncertaintyModel::fit(Space::Output, ae, &det, dataset, latent)?;
    let x = toy_input(config, dataset)?;
    let comparison = toy_compare(ae, &latent_model, &output_model, &det, dataset, &x, config.toy.m, seed)?;
    comparison
        .cloud_table(Space::Latent)
        .write(&dir.join("latent_cloud.csv"))?;
    comparison
        .cloud_table(Space::Output)
        .write(&dir.join("output_cloud.csv"))?;
    let s = &comparison.summary;
    summary_table(&[
        ("latent_r", s.latent_r),
        ("output_r", s.output_r),
        ("simulator_r", s.simulator_r),
        ("gap", s.latent_r - s.output_r.abs()),
    ])
    .write(&dir.join("summary.csv"))?;
    write_json(&dir.join("summary.json"), s)?;
    info!(
        "toy: latent r {:.3}, output r {:.3}, simulator r {:.3}",
        s.latent_r, s.output_r, s.simulator_r
    );
    Ok(ToyArtifacts {
        comparison,
        output_model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSummary {
    pub latent_max_sd: f64,
    pub latent_mean_sd: f64,
    pub latent_sd_cv: f64,
    pub output_max_sd: f64,
    /// Same statistic for MC-dropout posterior images of the selected model.
    pub dropout_max_sd: f64,
}

pub fn run_contours(
    contours: &ContourConfig,
    toy: &ToyArtifacts,
    model: &ForwardModel,
    ae: &AutoencoderModel,
    m: usize,
    replicates: usize,
    seed: u64,
    dir: &Path,
) -> Result<ContourSummary> {
    io::ensure_dir(dir)?;
    let x = SimInput::new(toy.comparison.summary.input.clone())?;
    let latent = sample_contours(&toy.comparison.latent_samples, contours.fraction, contours.n_angles)?;
    let dropout = contour_uncertainty(
        model,
        ae,
        &x,
        contours.s_pred,
        seed,
        contours.fraction,
        contours.n_angles,
    )?;
    let output = output_mean_image_contours(
        &toy.output_model,
        &toy.comparison.center,
        m,
        replicates,
        contours.fraction,
        contours.n_angles,
        seed,
    )?;
    latent.summary_table().write(&dir.join("latent_summary.csv"))?;
    latent
        .samples_table(CONTOUR_SAMPLE_LIMIT)
        .write(&dir.join("latent_samples.csv"))?;
    output.summary_table().write(&dir.join("output_mean_summary.csv"))?;
    dropout.summary_table().write(&dir.join("dropout_summary.csv"))?;
    let s = ContourSummary {
        latent_max_sd: latent.max_sd(),
        latent_mean_sd: crate::stats::mean(&latent.sd),
        latent_sd_cv: latent.sd_azimuthal_cv(),
        output_max_sd: output.max_sd(),
        dropout_max_sd: dropout.max_sd(),
    };
    summary_table(&[
        ("latent_max_sd", s.latent_max_sd),
        ("latent_mean_sd", s.latent_mean_sd),
        ("latent_sd_cv", s.latent_sd_cv),
        ("output_max_sd", s.output_max_sd),
        ("dropout_max_sd", s.dropout_max_sd),
    ])
    .write(&dir.join("summary.csv"))?;
    info!(
        "contours: latent max sd {:.3} px, output max sd {:.3} px",
        s.latent_max_sd, s.output_max_sd
    );
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub keep_rate: f64,
    pub ramp: DensitySummary,
    pub uniform: DensitySummary,
}

/// Ramp study with its own dataset, autoencoder and forward model, plus the
/// uniform control reusing the main pipeline's models.
pub fn run_density(
    config: &RunConfig,
    uniform_ae: &AutoencoderModel,
    uniform_data: &Dataset,
    uniform_model: &ForwardModel,
    dir: &Path,
) -> Result<DensityResult> {
    let seeds = config.seeds();
    let keep_rate = uniform_model.keep_rate;
    let data = run_data(
        config,
        DensityProfile::Ramp {
            ratio: config.density.ratio,
        },
        seeds.density_data,
        &dir.join("data"),
    )?;
    let ae_config = AutoencoderConfig {
        seed: seeds.density_autoencoder,
        ..config.autoencoder.clone()
    };
    let ae = run_autoencoder(&data, &ae_config, &dir.join("ae"))?;
    let latent = encode_dataset(&ae, &data)?;
    let model = train_forward(
        &latent,
        keep_rate,
        &config.forward,
        derive_seed(seeds.density, "forward"),
    )?;
    model.save(&dir.join("model"))?;
    let opts = &config.density.options;
    let ramp = density_study(&model, &ae, &data, opts, seeds.density)?;
    let uniform = density_study(uniform_model, uniform_ae, uniform_data, opts, seeds.density)?;
    write_study(&ramp, dir, "ramp")?;
    write_study(&uniform, dir, "uniform")?;
    let (dense, sparse) = ramp.summary.dense_sparse_sd();
    summary_table(&[
        ("keep_rate", keep_rate),
        ("ramp_count_ratio", ramp.summary.count_ratio()),
        ("ramp_dense_sd", dense),
        ("ramp_sparse_sd", sparse),
        ("uniform_lower_sd", uniform.summary.lower_mean_sd),
        ("uniform_upper_sd", uniform.summary.upper_mean_sd),
        ("uniform_relative_gap", uniform.summary.relative_gap()),
    ])
    .write(&dir.join("summary.csv"))?;
    info!(
        "density: ramp dense sd {dense:.4}, sparse sd {sparse:.4}; uniform gap {:.3}",
        uniform.summary.relative_gap()
    );
    Ok(DensityResult {
        keep_rate,
        ramp: ramp.summary,
        uniform: uniform.summary,
    })
}

fn write_study(study: &DensityStudy, dir: &Path, name: &str) -> Result<()> {
    study.points_table().write(&dir.join(format!("{name}_points.csv")))?;
    study
        .histogram_table()
        .write(&dir.join(format!("{name}_histogram.csv")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub autoencoder_min_r2: f64,
    /// `(keep_rate, validation error, test error)`.
    pub sweep: Vec<(f64, f64, f64)>,
    pub selected_keep_rate: f64,
    pub selected_test_error: f64,
    pub toy: ToySummary,
    pub contours: ContourSummary,
    pub density: DensityResult,
}

/// Every job in order, then the report.
pub fn run_all(config: &RunConfig, out: &Path) -> Result<RunSummary> {
    config.validate()?;
    let config = config.resolved();
    let seeds = config.seeds();
    io::ensure_dir(out)?;
    write_json(&out.join("config.json"), &config)?;

    let data = run_data(&config, config.data.profile, seeds.data, &out.join("data"))?;
    let ae = run_autoencoder(&data, &config.autoencoder, &out.join("ae"))?;
    let r2 = ae.scalar_r2(&data, Split::Validation)?;
    let latent = run_latent(&ae, &data, &out.join("latent"))?;
    let sweep = run_sweep(
        &latent,
        &config.sweep.keep_rates,
        &config.forward,
        seeds.forward,
        &config.eval,
        &out.join("sweep"),
    )?;
    let toy = run_toy(&config, &ae, &data, &latent, seeds.toy, &out.join("toy"))?;

    let density_keep = config.density.keep_rate.unwrap_or(sweep.selected_keep_rate);
    let trained;
    let density_model = match sweep.member(density_keep) {
        Some(m) => &m.model,
        None => {
            trained = train_forward(&latent, density_keep, &config.forward, seeds.forward)?;
            &trained
        }
    };
    let selected = &sweep.selected().model;
    let contours = run_contours(
        &config.contours,
        &toy,
        selected,
        &ae,
        config.toy.m,
        config.toy.replicates,
        seeds.contours,
        &out.join("contours"),
    )?;
    let density = run_density(&config, &ae, &data, density_model, &out.join("density"))?;
    report::render_report(out)?;

    let summary = RunSummary {
        seed: config.seed,
        autoencoder_min_r2: r2.iter().copied().fold(f64::INFINITY, f64::min),
        sweep: sweep
            .members
            .iter()
            .map(|m| (m.keep_rate, m.validation.mean_error, m.test.mean_error))
            .collect(),
        selected_keep_rate: sweep.selected_keep_rate,
        selected_test_error: sweep.selected().test.mean_error,
        toy: toy.comparison.summary.clone(),
        contours,
        density,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Artifacts of the data, autoencoder and latent jobs, read back from a run
/// directory. The config comes from `config.json` when present.
pub struct RunInputs {
    pub config: RunConfig,
    pub data: Dataset,
    pub ae: AutoencoderModel,
    pub latent: LatentDataset,
}

pub fn load_run(run: &Path) -> Result<RunInputs> {
    let cfg_path = run.join("config.json");
    let config = if cfg_path.is_file() {
        RunConfig::load(&cfg_path)?
    } else {
        RunConfig::default().resolved()
    };
    let data = Dataset::load(&run.join("data"))?;
    let ae = AutoencoderModel::load(&run.join("ae"))?;
    let latent = encode_dataset(&ae, &data)?;
    Ok(RunInputs {
        config,
        data,
        ae,
        latent,
    })
}

/// Rebuilds the toy artifacts from the saved deterministic model.
pub fn load_toy(inputs: &RunInputs, run: &Path) -> Result<ToyArtifacts> {
    let det = ForwardModel::load(&run.join("toy").join("deterministic"))?;
    let latent_model = ResidualUncertaintyModel::fit(Space::Latent, &inputs.ae, &det, &inputs.data, &inputs.latent)?;
    let output_model = ResidualUncertaintyModel::fit(Space::Output, &inputs.ae, &det, &inputs.data, &inputs.latent)?;
    let x = toy_input(&inputs.config, &inputs.data)?;
    let comparison = toy_compare(
        &inputs.ae,
        &latent_model,
        &output_model,
        &det,
        &inputs.data,
        &x,
        inputs.config.toy.m,
        inputs.config.seeds().toy,
    )?;
    Ok(ToyArtifacts {
        comparison,
        output_model,
    })
}

pub fn load_selected(run: &Path) -> Result<ForwardModel> {
    ForwardModel::load(&run.join("sweep").join("selected").join("model"))
}
