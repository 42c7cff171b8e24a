//! Uncertainty-equipped forward model `x ↦ z`.
//!
//! A dense ReLU network with dropout in front of every layer. Training draws
//! `S` dropout masks per batch item, forms the per-dimension mean `μ̂` and
//! sample sd `σ̂` of the `S` outputs, and minimizes the Gaussian negative
//! log-likelihood of the encoded target under `N(μ̂, σ̂²)`. Gradients flow
//! through every one of the `S` passes, including through `σ̂`.
//!
//! Prediction keeps dropout on and returns the raw Monte Carlo draws.

use std::path::Path;

use log::{debug, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{mse_and_grad, AutoencoderModel, EpochLoss, LatentDataset, LatentStats};
use crate::datagen::{MultimodalOutput, SimInput, Split};
use crate::error::{Error, Result};
use crate::io::{self, read_json, write_json};
use crate::netcore::dropout::validate_keep_rate;
use crate::netcore::{checkpoint, sample_mask_rows, DropoutMask, Gradients, NetworkParameters, Tensor2};
use crate::rng;
use crate::stats;

/// Smallest predictive sd used inside the likelihood (standardized latent units).
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-dimension Gaussian NLL, averaged over dimensions:
/// `(1/d) Σ_d [(z_d − μ_d)² / (2σ_d²) + ½·ln σ_d²]`.
///
/// Any `σ_d ≤ SIGMA_FLOOR` is replaced by the floor.
pub fn gaussian_nll(z: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    gaussian_nll_counted(z, mu, sigma).map(|(l, _)| l)
}

/// [`gaussian_nll`] plus the number of floor substitutions made.
pub fn gaussian_nll_counted(z: &[f64], mu: &[f64], sigma: &[f64]) -> Result<(f64, usize)> {
    if z.len() != mu.len() || z.len() != sigma.len() {
        return Err(Error::mismatch("gaussian_nll", z.len(), mu.len().max(sigma.len())));
    }
    if z.is_empty() {
        return Err(Error::InvalidArgument("gaussian_nll of an empty vector".into()));
    }
    let mut floored = 0;
    let mut total = 0.0;
    for ((z, m), s) in z.iter().zip(mu).zip(sigma) {
        let s = if *s <= SIGMA_FLOOR {
            floored += 1;
            SIGMA_FLOOR
        } else {
            *s
        };
        let var = s * s;
        total += (z - m) * (z - m) / (2.0 * var) + 0.5 * var.ln();
    }
    let loss = total / z.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("gaussian_nll".into()));
    }
    Ok((loss, floored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardLoss {
    /// Monte Carlo Gaussian likelihood over `mc_train` dropout passes.
    GaussianNll,
    /// Plain mean squared error on a single pass; used for deterministic
    /// (keep rate 1) reference models.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Dropout passes per item during training.
    pub mc_train: usize,
    /// Default number of posterior draws at prediction time.
    pub mc_pred: usize,
    /// Apply dropout to the network input as well as to hidden layers.
    pub input_dropout: bool,
    pub loss: ForwardLoss,
    /// Multiplier on the initial output-layer weights.
    pub output_init_scale: f64,
    /// L2 penalty coefficient on weights (not biases), added to the gradient.
    pub weight_decay: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256],
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            mc_train: 20,
            mc_pred: 1000,
            input_dropout: false,
            loss: ForwardLoss::GaussianNll,
            output_init_scale: 0.05,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrainLog {
    /// Train/validation loss per epoch (NLL or MSE depending on the loss).
    pub epochs: Vec<EpochLoss>,
    pub floor_substitutions: u64,
    pub warnings: Vec<String>,
}

impl ForwardTrainLog {
    pub fn best_validation_epoch(&self) -> Option<&EpochLoss> {
        self.epochs.iter().min_by(|a, b| a.validation.total_cmp(&b.validation))
    }
}

#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub net: NetworkParameters,
    pub keep_rate: f64,
    pub d_in: usize,
    pub d_z: usize,
    pub config: ForwardConfig,
    pub seed: u64,
    pub latent_stats: LatentStats,
    pub log: ForwardTrainLog,
}

/// Monte Carlo draws from the predictive distribution at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub input: SimInput,
    samples: Tensor2,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl PosteriorSamples {
    /// Wraps an `S × d` draw matrix and derives its column mean and sample sd.
    pub fn new(input: SimInput, samples: Tensor2) -> Result<Self> {
        if samples.rows() < 2 {
            return Err(Error::InvalidArgument("posterior needs at least 2 samples".into()));
        }
        samples.check_finite("posterior samples")?;
        let (mean, sd) = (0..samples.cols())
            .map(|d| {
                let col: Vec<f64> = samples.iter_rows().map(|r| r[d]).collect();
                (stats::mean(&col), stats::sample_sd(&col))
            })
            .unzip();
        Ok(Self {
            input,
            samples,
            mean,
            sd,
        })
    }

    pub fn samples(&self) -> &Tensor2 {
        &self.samples
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sd(&self) -> &[f64] {
        &self.sd
    }

    pub fn n_samples(&self) -> usize {
        self.samples.rows()
    }

    pub fn dims(&self) -> usize {
        self.samples.cols()
    }

    /// Draws for one dimension, sorted ascending.
    pub fn sorted_dim(&self, d: usize) -> Vec<f64> {
        let mut col: Vec<f64> = self.samples.iter_rows().map(|r| r[d]).collect();
        col.sort_by(f64::total_cmp);
        col
    }
}

/// Decoded posterior: one output per latent draw, with per-channel moments.
#[derive(Debug, Clone)]
pub struct OutputPosterior {
    pub samples: Vec<MultimodalOutput>,
    pub scalar_mean: Vec<f64>,
    pub scalar_sd: Vec<f64>,
    pub pixel_mean: Vec<f64>,
    pub pixel_sd: Vec<f64>,
}

impl OutputPosterior {
    pub fn from_samples(samples: Vec<MultimodalOutput>) -> Self {
        let column = |f: &dyn Fn(&MultimodalOutput) -> f64| -> (f64, f64) {
            let v: Vec<f64> = samples.iter().map(f).collect();
            (stats::mean(&v), stats::sample_sd(&v))
        };
        let d_s = samples.first().map_or(0, |s| s.scalars.len());
        let n_px = samples.first().map_or(0, |s| s.image.len());
        let (scalar_mean, scalar_sd) = (0..d_s).map(|c| column(&|s| s.scalars[c])).unzip();
        let (pixel_mean, pixel_sd) = (0..n_px).map(|p| column(&|s| s.image[p])).unzip();
        Self {
            samples,
            scalar_mean,
            scalar_sd,
            pixel_mean,
            pixel_sd,
        }
    }

    pub fn scalar_column(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.scalars[c]).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct FwdMeta {
    keep_rate: f64,
    d_in: usize,
    d_z: usize,
    mc_train: usize,
    mc_pred: usize,
    seed: u64,
    config: ForwardConfig,
    latent_stats: LatentStats,
    log: ForwardTrainLog,
}

/// Mask set for one forward evaluation of a `rows`-row batch.
fn batch_masks<R: rand::Rng>(
    net: &NetworkParameters,
    keep_rate: f64,
    input_dropout: bool,
    rows: usize,
    rng: &mut R,
) -> Result<Vec<DropoutMask>> {
    net.input_widths()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if i == 0 && !input_dropout {
                DropoutMask::ones(1.0, w)
            } else {
                sample_mask_rows(keep_rate, rows, w, rng)
            }
        })
        .collect()
}

/// Loss and parameter gradients of the Monte Carlo Gaussian NLL for one batch.
///
/// `inputs` holds `B` items; each is replicated `mc` times (rows `b·mc ..
/// (b+1)·mc`) and pushed through the network under `masks`, which must have
/// `B·mc` rows (or one shared row). `targets` is `B × d_z`. The returned loss
/// is the mean over items of [`gaussian_nll`] computed from the `mc` outputs.
pub fn mc_nll_loss_and_grad(
    net: &NetworkParameters,
    inputs: &Tensor2,
    targets: &Tensor2,
    masks: &[DropoutMask],
    mc: usize,
) -> Result<McNllStep> {
    if mc < 2 {
        return Err(Error::InvalidArgument("Monte Carlo NLL needs at least 2 passes".into()));
    }
    if targets.rows() != inputs.rows() {
        return Err(Error::mismatch("NLL targets", inputs.rows(), targets.rows()));
    }
    let x = inputs.repeat_rows(mc);
    let (out, cache) = net.forward_cached(&x, Some(masks))?;
    let d_z = out.cols();
    if targets.cols() != d_z {
        return Err(Error::mismatch("NLL target width", d_z, targets.cols()));
    }
    let b = inputs.rows();
    let mut grad = Tensor2::zeros(out.rows(), d_z);
    let mut loss = 0.0;
    let mut floored = 0u64;
    let mut collapsed_items = 0usize;
    let norm = 1.0 / (b * d_z) as f64;
    let (s_f, s_m1) = (mc as f64, (mc - 1) as f64);
    for item in 0..b {
        let rows = item * mc..(item + 1) * mc;
        let mut item_floored = 0;
        for d in 0..d_z {
            let mu = rows.clone().map(|r| out.get(r, d)).sum::<f64>() / s_f;
            let mut var = rows.clone().map(|r| (out.get(r, d) - mu).powi(2)).sum::<f64>() / s_m1;
            let floor_hit = var.sqrt() <= SIGMA_FLOOR;
            if floor_hit {
                var = SIGMA_FLOOR * SIGMA_FLOOR;
                item_floored += 1;
            }
            let resid = targets.get(item, d) - mu;
            loss += (resid * resid / (2.0 * var) + 0.5 * var.ln()) * norm;

            let dl_dmu = -resid / var * norm;
            let dl_dvar = if floor_hit {
                0.0
            } else {
                (0.5 / var - resid * resid / (2.0 * var * var)) * norm
            };
            for r in rows.clone() {
                let g = dl_dmu / s_f + dl_dvar * 2.0 * (out.get(r, d) - mu) / s_m1;
                grad.set(r, d, g);
            }
        }
        floored += item_floored as u64;
        if item_floored == d_z {
            collapsed_items += 1;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("Monte Carlo NLL".into()));
    }
    let bp = net.backward(&grad, &cache)?;
    Ok(McNllStep {
        loss,
        gradients: bp.params,
        floor_substitutions: floored,
        collapsed_items,
    })
}

#[derive(Debug, Clone)]
pub struct McNllStep {
    pub loss: f64,
    pub gradients: Gradients,
    pub floor_substitutions: u64,
    /// Items whose every dimension hit the sd floor.
    pub collapsed_items: usize,
}

/// Simulator inputs live in `[0, 1]`; the network sees them on `[-1, 1]` so
/// fresh ReLU hyperplanes pass through the middle of the domain, not a corner.
fn centered(inputs: &Tensor2) -> Tensor2 {
    let mut x = inputs.clone();
    x.map_inplace(|v| 2.0 * v - 1.0);
    x
}

fn add_weight_decay(grads: &mut Gradients, net: &NetworkParameters, weight_decay: f64) {
    if weight_decay == 0.0 {
        return;
    }
    for (g, l) in grads.layers.iter_mut().zip(net.layers()) {
        for (gw, w) in g.weights.data_mut().iter_mut().zip(l.weights().data()) {
            *gw += weight_decay * w;
        }
    }
}

pub fn train_forward(
    latent: &LatentDataset,
    keep_rate: f64,
    config: &ForwardConfig,
    seed: u64,
) -> Result<ForwardModel> {
    validate_keep_rate(keep_rate)?;
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument("epochs and batch_size must be > 0".into()));
    }
    let nll = config.loss == ForwardLoss::GaussianNll;
    if nll && (config.mc_train < 2 || config.mc_pred < 2) {
        return Err(Error::InvalidArgument("mc_train and mc_pred must be >= 2".into()));
    }
    if !nll && keep_rate != 1.0 {
        return Err(Error::InvalidArgument(
            "the MSE loss trains deterministic models only (keep rate 1)".into(),
        ));
    }

    let mut model = ForwardModel::new_untrained(
        latent.d_in(),
        latent.d_z(),
        keep_rate,
        config,
        seed,
        latent.stats.clone(),
    )?;
    if nll && keep_rate == 1.0 {
        let msg = "degenerate keep-rate 1.0: every dropout mask is identical, so the predictive sd is 0 and \
                   the likelihood is driven entirely by the sd floor"
            .to_owned();
        warn!("{msg}");
        model.log.warnings.push(msg);
    }

    let targets: Vec<Vec<f64>> = latent.z.iter_rows().map(|r| latent.stats.normalize_row(r)).collect();
    let targets = Tensor2::from_rows(&targets)?;
    let mut order = latent.split(Split::Train).to_vec();
    let val_idx = latent.split(Split::Validation);
    let val_x = centered(&latent.inputs.select_rows(val_idx));
    let val_t = targets.select_rows(val_idx);

    let mut shuffle_rng = rng::substream(rng::derive_seed(seed, "forward-shuffle"), 0);
    let mut mask_rng = rng::substream(rng::derive_seed(seed, "forward-masks"), 0);
    let val_seed = rng::derive_seed(seed, "forward-validation");

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut collapsed = 0usize;
        for batch in order.chunks(config.batch_size) {
            let xb = centered(&latent.inputs.select_rows(batch));
            let tb = targets.select_rows(batch);
            let loss = if nll {
                let masks = batch_masks(
                    &model.net,
                    keep_rate,
                    config.input_dropout,
                    xb.rows() * config.mc_train,
                    &mut mask_rng,
                )?;
                let step = mc_nll_loss_and_grad(&model.net, &xb, &tb, &masks, config.mc_train)
                    .map_err(|e| diverged(epoch, e))?;
                model.log.floor_substitutions += step.floor_substitutions;
                collapsed += step.collapsed_items;
                let mut grads = step.gradients;
                add_weight_decay(&mut grads, &model.net, config.weight_decay);
                model
                    .net
                    .optimizer_step(&grads, config.learning_rate)
                    .map_err(|e| diverged(epoch, e))?;
                step.loss
            } else {
                let (out, cache) = model.net.forward_cached(&xb, None).map_err(|e| diverged(epoch, e))?;
                let (loss, grad) = mse_and_grad(&out, &tb);
                let mut bp = model.net.backward(&grad, &cache).map_err(|e| diverged(epoch, e))?;
                add_weight_decay(&mut bp.params, &model.net, config.weight_decay);
                model
                    .net
                    .optimizer_step(&bp.params, config.learning_rate)
                    .map_err(|e| diverged(epoch, e))?;
                loss
            };
            total += loss * batch.len() as f64;
        }
        let train = total / order.len() as f64;
        if !train.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: "training loss is not finite".into(),
            });
        }
        let fraction = collapsed as f64 / order.len() as f64;
        if nll && keep_rate < 1.0 && fraction > 0.5 {
            return Err(Error::SigmaCollapse { epoch, fraction });
        }

        let validation = if val_x.rows() == 0 {
            f64::NAN
        } else if nll {
            let masks = batch_masks(
                &model.net,
                keep_rate,
                config.input_dropout,
                val_x.rows() * config.mc_train,
                &mut rng::seeded(val_seed),
            )?;
            mc_nll_loss_and_grad(&model.net, &val_x, &val_t, &masks, config.mc_train)
                .map_err(|e| diverged(epoch, e))?
                .loss
        } else {
            mse_and_grad(&model.net.forward(&val_x, None)?, &val_t).0
        };
        debug!("forward keep_rate={keep_rate} epoch {epoch}: train {train:.5} validation {validation:.5}");
        model.log.epochs.push(EpochLoss {
            epoch,
            train,
            validation,
        });
    }
    Ok(model)
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(reason) => Error::Divergence { epoch, reason },
        other => other,
    }
}

impl ForwardModel {
    pub fn new_untrained(
        d_in: usize,
        d_z: usize,
        keep_rate: f64,
        config: &ForwardConfig,
        seed: u64,
        latent_stats: LatentStats,
    ) -> Result<Self> {
        validate_keep_rate(keep_rate)?;
        if latent_stats.mean.len() != d_z || latent_stats.sd.len() != d_z {
            return Err(Error::mismatch("latent stats", d_z, latent_stats.mean.len()));
        }
        if !(config.weight_decay >= 0.0 && config.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay {} must be finite and >= 0",
                config.weight_decay
            )));
        }
        let mut widths = vec![d_in];
        widths.extend(&config.hidden);
        widths.push(d_z);
        let mut net = NetworkParameters::mlp(&widths, rng::derive_seed(seed, "forward-init"))?;
        if config.output_init_scale != 1.0 {
            let scale = config.output_init_scale;
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "output_init_scale {scale} must be finite and >= 0"
                )));
            }
            if let Some(last) = net.layers_mut().last_mut() {
                last.weights_mut().map_inplace(|w| w * scale);
            }
        }
        Ok(Self {
            net,
            keep_rate,
            d_in,
            d_z,
            config: config.clone(),
            seed,
            latent_stats,
            log: ForwardTrainLog::default(),
        })
    }

    pub fn is_trained(&self) -> bool {
        !self.log.epochs.is_empty()
    }

    fn check_ready(&self) -> Result<()> {
        if self.is_trained() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("forward model has not been trained".into()))
        }
    }

    /// Dropout-free prediction in raw latent units (mean-field network).
    pub fn predict_deterministic(&self, inputs: &Tensor2) -> Result<Tensor2> {
        self.check_ready()?;
        let mut out = self.net.forward(&centered(inputs), None)?;
        for r in 0..out.rows() {
            self.latent_stats.denormalize_in_place(out.row_mut(r));
        }
        Ok(out)
    }

    /// `s_pred` dropout masks, draw `s` taken from stream `s` of `seed`.
    /// The same draws are reused for every input, so results do not depend on
    /// how inputs are batched.
    fn posterior_masks(&self, s_pred: usize, seed: u64) -> Result<Vec<DropoutMask>> {
        let widths = self.net.input_widths();
        let mut per_layer: Vec<Vec<f64>> = widths.iter().map(|&w| Vec::with_capacity(w * s_pred)).collect();
        for s in 0..s_pred {
            let mut rng = rng::substream(seed, s as u64);
            let masks = batch_masks(&self.net, self.keep_rate, self.config.input_dropout, 1, &mut rng)?;
            for (acc, m) in per_layer.iter_mut().zip(&masks) {
                acc.extend_from_slice(m.entries());
            }
        }
        widths
            .iter()
            .zip(per_layer)
            .enumerate()
            .map(|(i, (&w, entries))| {
                let k = if i == 0 && !self.config.input_dropout {
                    1.0
                } else {
                    self.keep_rate
                };
                DropoutMask::from_entries(k, s_pred, w, entries)
            })
            .collect()
    }

    pub fn predict_posterior(&self, x: &SimInput, s_pred: usize, seed: u64) -> Result<PosteriorSamples> {
        let mut v = self.predict_posterior_batch(std::slice::from_ref(x), s_pred, seed)?;
        Ok(v.remove(0))
    }

    pub fn predict_posterior_batch(&self, xs: &[SimInput], s_pred: usize, seed: u64) -> Result<Vec<PosteriorSamples>> {
        self.check_ready()?;
        if s_pred < 2 {
            return Err(Error::InvalidArgument("s_pred must be >= 2".into()));
        }
        let masks = self.posterior_masks(s_pred, seed)?;
        xs.iter()
            .map(|x| {
                if x.x.len() != self.d_in {
                    return Err(Error::mismatch("forward input", self.d_in, x.x.len()));
                }
                let rows = centered(&Tensor2::row_vector(x.x.clone())).repeat_rows(s_pred);
                let mut out = self.net.forward(&rows, Some(&masks))?;
                for r in 0..out.rows() {
                    self.latent_stats.denormalize_in_place(out.row_mut(r));
                }
                PosteriorSamples::new(x.clone(), out)
            })
            .collect()
    }

    /// Decodes every latent draw individually; output-space moments are
    /// taken across the decoded samples.
    pub fn predict_output_posterior(
        &self,
        ae: &AutoencoderModel,
        x: &SimInput,
        s_pred: usize,
        seed: u64,
    ) -> Result<OutputPosterior> {
        if ae.d_z != self.d_z {
            return Err(Error::mismatch("autoencoder latent width", self.d_z, ae.d_z));
        }
        let post = self.predict_posterior(x, s_pred, seed)?;
        let decoded = ae.decode_batch(post.samples())?;
        Ok(OutputPosterior::from_samples(decoded))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        checkpoint::save(&self.net, &dir.join("forward.lcnn"))?;
        write_json(
            &dir.join("fwd_meta.json"),
            &FwdMeta {
                keep_rate: self.keep_rate,
                d_in: self.d_in,
                d_z: self.d_z,
                mc_train: self.config.mc_train,
                mc_pred: self.config.mc_pred,
                seed: self.seed,
                config: self.config.clone(),
                latent_stats: self.latent_stats.clone(),
                log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: FwdMeta = read_json(&dir.join("fwd_meta.json"))?;
        let net = checkpoint::load(&dir.join("forward.lcnn"))?;
        if net.in_dim() != meta.d_in || net.out_dim() != meta.d_z {
            return Err(Error::mismatch("forward checkpoint", meta.d_z, net.out_dim()));
        }
        validate_keep_rate(meta.keep_rate)?;
        Ok(Self {
            net,
            keep_rate: meta.keep_rate,
            d_in: meta.d_in,
            d_z: meta.d_z,
            config: meta.config,
            seed: meta.seed,
            latent_stats: meta.latent_stats,
            log: meta.log,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::LatentStats;
    use crate::netcore::sample_mask_rows;

    #[test]
    fn nll_closed_forms() {
        assert_eq!(gaussian_nll(&[0.3, -1.0], &[0.3, -1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gaussian_nll(&[1.0], &[0.0], &[1.0]).unwrap(), 0.5);
        let s = std::f64::consts::E.sqrt();
        assert!((gaussian_nll(&[2.0], &[2.0], &[s]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nll_floor_is_substituted_and_counted() {
        let (l, n) = gaussian_nll_counted(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(n, 1);
        let expected = (0.5 * (SIGMA_FLOOR * SIGMA_FLOOR).ln()) / 2.0;
        assert!((l - expected).abs() < 1e-12);
        assert!(gaussian_nll(&[0.0], &[0.0, 1.0], &[1.0]).is_err());
    }

    fn toy_latent(n: usize) -> LatentDataset {
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                vec![t, (3.0 * t).fract(), (7.0 * t).fract(), 1.0 - t]
            })
            .collect();
        let zs: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![x[0] + x[1] * x[2], (x[3] * 3.0).sin()])
            .collect();
        let train: Vec<usize> = (0..n).filter(|i| i % 5 != 0).collect();
        let validation: Vec<usize> = (0..n).filter(|i| i % 10 == 0).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % 10 == 5).collect();
        LatentDataset {
            inputs: Tensor2::from_rows(&xs).unwrap(),
            z: Tensor2::from_rows(&zs).unwrap(),
            splits: crate::datagen::Splits {
                train,
                validation,
                test,
            },
            stats: LatentStats {
                mean: vec![0.7, 0.1],
                sd: vec![0.4, 0.6],
            },
        }
    }

    fn cfg(epochs: usize) -> ForwardConfig {
        ForwardConfig {
            hidden: vec![16],
            epochs,
            mc_train: 8,
            mc_pred: 50,
            ..Default::default()
        }
    }

    #[test]
    fn keep_rate_one_warns_and_collapses() {
        let m = train_forward(&toy_latent(60), 1.0, &cfg(2), 3).unwrap();
        assert!(m.log.warnings.iter().any(|w| w.contains("degenerate keep-rate")));
        let p = m.predict_posterior(&SimInput { x: vec![0.5; 4] }, 20, 1).unwrap();
        assert!(p.sd().iter().all(|&s| s == 0.0));
        let first = p.samples().row(0).to_vec();
        assert!(p.samples().iter_rows().all(|r| r == first.as_slice()));
    }

    #[test]
    fn training_is_deterministic() {
        let a = train_forward(&toy_latent(80), 0.9, &cfg(3), 11).unwrap();
        let b = train_forward(&toy_latent(80), 0.9, &cfg(3), 11).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn posterior_is_seed_deterministic_and_batch_invariant() {
        let m = train_forward(&toy_latent(80), 0.9, &cfg(2), 5).unwrap();
        let xs = vec![
            SimInput {
                x: vec![0.1, 0.2, 0.3, 0.4],
            },
            SimInput { x: vec![0.9; 4] },
        ];
        let a = m.predict_posterior(&xs[1], 30, 77).unwrap();
        let b = m.predict_posterior_batch(&xs, 30, 77).unwrap();
        assert_eq!(a, b[1]);
        assert_ne!(m.predict_posterior(&xs[1], 30, 78).unwrap(), a);
    }

    #[test]
    fn posterior_moments_match_samples() {
        let m = train_forward(&toy_latent(80), 0.8, &cfg(2), 5).unwrap();
        let p = m.predict_posterior(&SimInput { x: vec![0.3; 4] }, 40, 2).unwrap();
        for d in 0..p.dims() {
            let col: Vec<f64> = p.samples().iter_rows().map(|r| r[d]).collect();
            assert_eq!(p.mean()[d], stats::mean(&col));
            assert_eq!(p.sd()[d], stats::sample_sd(&col));
            assert!(p.sd()[d] >= 0.0);
        }
    }

    #[test]
    fn posterior_moments_settle_with_more_draws() {
        let m = train_forward(&toy_latent(80), 0.8, &cfg(5), 5).unwrap();
        let x = SimInput {
            x: vec![0.3, 0.6, 0.2, 0.9],
        };
        let small = m.predict_posterior(&x, 1000, 1).unwrap();
        let big = m.predict_posterior(&x, 10_000, 2).unwrap();
        for d in 0..big.dims() {
            let s = big.sd()[d];
            assert!((small.mean()[d] - big.mean()[d]).abs() <= 3.0 * s / 1000f64.sqrt());
            // Standard error of the sd from the fourth central moment: se(s²) / (2s).
            let col: Vec<f64> = big.samples().iter_rows().map(|r| r[d]).collect();
            let m4 = col.iter().map(|v| (v - big.mean()[d]).powi(4)).sum::<f64>() / col.len() as f64;
            let se = ((m4 - s.powi(4)) / 1000.0).sqrt() / (2.0 * s);
            assert!(
                (small.sd()[d] - s).abs() <= 3.0 * se,
                "dim {d}: {} vs {s} (se {se})",
                small.sd()[d]
            );
        }
    }

    #[test]
    fn untrained_and_invalid_inputs() {
        let m = ForwardModel::new_untrained(4, 2, 0.9, &cfg(1), 0, toy_latent(20).stats).unwrap();
        assert!(m.predict_posterior(&SimInput { x: vec![0.3; 4] }, 10, 0).is_err());
        assert!(matches!(
            train_forward(&toy_latent(20), 0.0, &cfg(1), 0),
            Err(Error::InvalidKeepRate(_))
        ));
        let mse = ForwardConfig {
            loss: ForwardLoss::Mse,
            ..cfg(1)
        };
        assert!(train_forward(&toy_latent(20), 0.9, &mse, 0).is_err());
        assert!(train_forward(&toy_latent(20), 1.0, &mse, 0).is_ok());
    }

    #[test]
    fn nll_step_gradient_matches_finite_differences() {
        let net = NetworkParameters::mlp(&[3, 5, 2], 4).unwrap();
        let x = Tensor2::from_rows(&[[0.2, 0.5, 0.9], [0.7, 0.1, 0.4]]).unwrap();
        let t = Tensor2::from_rows(&[[0.3, -0.2], [1.1, 0.4]]).unwrap();
        let mc = 6;
        let mut rng = rng::seeded(9);
        let masks: Vec<DropoutMask> = net
            .input_widths()
            .iter()
            .map(|&w| sample_mask_rows(0.7, 2 * mc, w, &mut rng).unwrap())
            .collect();
        let step = mc_nll_loss_and_grad(&net, &x, &t, &masks, mc).unwrap();
        let eps = 1e-5;
        let analytic: Vec<f64> = step.gradients.flat().collect();
        let mut k = 0;
        for li in 0..net.layers().len() {
            for which in 0..2 {
                let n = if which == 0 {
                    net.layers()[li].weights().data().len()
                } else {
                    net.layers()[li].biases().data().len()
                };
                for j in 0..n {
                    let eval = |delta: f64| {
                        let mut p = net.clone();
                        let layer = &mut p.layers_mut()[li];
                        let buf = if which == 0 {
                            layer.weights_mut().data_mut()
                        } else {
                            layer.biases_mut().data_mut()
                        };
                        buf[j] += delta;
                        mc_nll_loss_and_grad(&p, &x, &t, &masks, mc).unwrap().loss
                    };
                    let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                    let a = analytic[k];
                    let denom = a.abs().max(fd.abs()).max(1e-6);
                    assert!((a - fd).abs() / denom < 1e-4, "param {k}: analytic {a} fd {fd}");
                    k += 1;
                }
            }
        }
    }
}
