//! Deterministic autoencoder mapping standardized `scalars ∥ image` vectors to
//! a low-dimensional latent space and back.
//!
//! The autoencoder is treated as fixed preprocessing downstream: it is trained
//! once on mean squared reconstruction error, without dropout, and its
//! parameters carry no uncertainty.

use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{normalize_outputs, Dataset, MultimodalOutput, Split, Splits, Standardizer};
use crate::error::{Error, Result};
use crate::io::{self, read_json, write_json, write_matrix};
use crate::netcore::{checkpoint, NetworkParameters, Tensor2};
use crate::rng;
use crate::stats;

/// A point in latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub d_z: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            d_z: 8,
            hidden: vec![128, 64],
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct AutoencoderModel {
    pub encoder: NetworkParameters,
    pub decoder: NetworkParameters,
    pub d_z: usize,
    pub standardizer: Standardizer,
    pub config: AutoencoderConfig,
    pub log: Vec<EpochLoss>,
}

#[derive(Serialize, Deserialize)]
struct AeMeta {
    d_z: usize,
    d_s: usize,
    d_img: usize,
    standardizer: Standardizer,
    config: AutoencoderConfig,
    log: Vec<EpochLoss>,
}

pub fn train_autoencoder(dataset: &Dataset, config: &AutoencoderConfig) -> Result<AutoencoderModel> {
    let normalized = normalize_outputs(dataset)?;
    let d_y = normalized.y.cols();
    if config.d_z == 0 || config.d_z >= d_y {
        return Err(Error::InvalidArgument(format!(
            "latent width {} must satisfy 1 <= d_z < {d_y}",
            config.d_z
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidArgument("epochs and batch_size must be > 0".into()));
    }

    let mut enc_widths = vec![d_y];
    enc_widths.extend(&config.hidden);
    enc_widths.push(config.d_z);
    let dec_widths: Vec<usize> = enc_widths.iter().rev().copied().collect();
    let mut encoder = NetworkParameters::mlp(&enc_widths, rng::derive_seed(config.seed, "encoder"))?;
    let mut decoder = NetworkParameters::mlp(&dec_widths, rng::derive_seed(config.seed, "decoder"))?;

    let y = &normalized.y;
    let val = y.select_rows(dataset.split(Split::Validation));
    let mut order = dataset.split(Split::Train).to_vec();
    let mut shuffle_rng = rng::substream(rng::derive_seed(config.seed, "ae-shuffle"), 0);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let yb = y.select_rows(batch);
            let mut step = || -> Result<f64> {
                let (z, enc_cache) = encoder.forward_cached(&yb, None)?;
                let (recon, dec_cache) = decoder.forward_cached(&z, None)?;
                let (loss, grad) = mse_and_grad(&recon, &yb);
                let dec_bp = decoder.backward(&grad, &dec_cache)?;
                let enc_bp = encoder.backward(&dec_bp.input, &enc_cache)?;
                decoder.optimizer_step(&dec_bp.params, config.learning_rate)?;
                encoder.optimizer_step(&enc_bp.params, config.learning_rate)?;
                Ok(loss)
            };
            let loss = step().map_err(|e| diverged(epoch, e))?;
            total += loss * batch.len() as f64;
        }
        let train = total / order.len() as f64;
        let validation = if val.rows() > 0 {
            let recon = decoder.forward(&encoder.forward(&val, None)?, None)?;
            mse_and_grad(&recon, &val).0
        } else {
            f64::NAN
        };
        if !train.is_finite() {
            return Err(Error::Divergence {
                epoch,
                reason: "reconstruction loss is not finite".into(),
            });
        }
        debug!("autoencoder epoch {epoch}: train {train:.5} validation {validation:.5}");
        log.push(EpochLoss {
            epoch,
            train,
            validation,
        });
    }

    Ok(AutoencoderModel {
        encoder,
        decoder,
        d_z: config.d_z,
        standardizer: normalized.standardizer,
        config: config.clone(),
        log,
    })
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(reason) => Error::Divergence { epoch, reason },
        other => other,
    }
}

/// Mean over all entries of `(pred − target)²`, and its gradient w.r.t. `pred`.
pub(crate) fn mse_and_grad(pred: &Tensor2, target: &Tensor2) -> (f64, Tensor2) {
    let n = pred.data().len() as f64;
    let mut grad = Tensor2::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    (loss / n, grad)
}

impl AutoencoderModel {
    pub fn d_y(&self) -> usize {
        self.standardizer.d_y()
    }

    /// Standardizes `y` with the stored training statistics, then encodes it.
    pub fn encode(&self, y: &MultimodalOutput) -> Result<LatentVector> {
        let v = self.standardizer.normalize(y)?;
        let z = self.encoder.forward(&Tensor2::row_vector(v), None)?;
        Ok(LatentVector(z.into_vec()))
    }

    /// Decodes to physical units; image pixels are clamped at zero.
    pub fn decode(&self, z: &LatentVector) -> Result<MultimodalOutput> {
        if z.len() != self.d_z {
            return Err(Error::mismatch("latent vector", self.d_z, z.len()));
        }
        let out = self.decode_normalized(&Tensor2::row_vector(z.0.clone()))?;
        self.to_physical(out.row(0))
    }

    /// Batch encode of already-standardized rows.
    pub fn encode_normalized(&self, y: &Tensor2) -> Result<Tensor2> {
        self.encoder.forward(y, None)
    }

    /// Batch decode to standardized output rows (no clamping).
    pub fn decode_normalized(&self, z: &Tensor2) -> Result<Tensor2> {
        if z.cols() != self.d_z {
            return Err(Error::mismatch("latent batch", self.d_z, z.cols()));
        }
        self.decoder.forward(z, None)
    }

    /// Batch decode to physical units with the image clamp applied.
    pub fn decode_batch(&self, z: &Tensor2) -> Result<Vec<MultimodalOutput>> {
        let out = self.decode_normalized(z)?;
        out.iter_rows().map(|r| self.to_physical(r)).collect()
    }

    /// Denormalizes a standardized output row and clamps the image at zero.
    pub fn to_physical(&self, normalized: &[f64]) -> Result<MultimodalOutput> {
        let mut out = self.standardizer.denormalize(normalized)?;
        for p in &mut out.image {
            *p = p.max(0.0);
        }
        Ok(out)
    }

    /// Per-scalar-channel R² of decode(encode(y)) over one split, in physical units.
    pub fn scalar_r2(&self, dataset: &Dataset, split: Split) -> Result<Vec<f64>> {
        let idx = dataset.split(split);
        let ys: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| self.standardizer.normalize(&dataset.output(i)))
            .collect::<Result<_>>()?;
        let z = self.encode_normalized(&Tensor2::from_rows(&ys)?)?;
        let recon = self.decode_batch(&z)?;
        let d_s = self.standardizer.d_s();
        Ok((0..d_s)
            .map(|c| {
                let truth: Vec<f64> = idx.iter().map(|&i| dataset.scalars.get(i, c)).collect();
                let m = stats::mean(&truth);
                let ss_tot: f64 = truth.iter().map(|t| (t - m) * (t - m)).sum();
                let ss_res: f64 = truth.iter().zip(&recon).map(|(t, r)| (t - r.scalars[c]).powi(2)).sum();
                1.0 - ss_res / ss_tot
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        checkpoint::save(&self.encoder, &dir.join("encoder.lcnn"))?;
        checkpoint::save(&self.decoder, &dir.join("decoder.lcnn"))?;
        write_json(
            &dir.join("ae_meta.json"),
            &AeMeta {
                d_z: self.d_z,
                d_s: self.standardizer.d_s(),
                d_img: self.standardizer.d_img,
                standardizer: self.standardizer.clone(),
                config: self.config.clone(),
                log: self.log.clone(),
            },
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: AeMeta = read_json(&dir.join("ae_meta.json"))?;
        let encoder = checkpoint::load(&dir.join("encoder.lcnn"))?;
        let decoder = checkpoint::load(&dir.join("decoder.lcnn"))?;
        if encoder.out_dim() != meta.d_z || decoder.in_dim() != meta.d_z {
            return Err(Error::mismatch("autoencoder latent width", meta.d_z, encoder.out_dim()));
        }
        if encoder.in_dim() != meta.standardizer.d_y() || decoder.out_dim() != meta.standardizer.d_y() {
            return Err(Error::mismatch(
                "autoencoder output width",
                meta.standardizer.d_y(),
                encoder.in_dim(),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            d_z: meta.d_z,
            standardizer: meta.standardizer,
            config: meta.config,
            log: meta.log,
        })
    }
}

/// Per-dimension statistics of the training-split latent codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    pub mean: Vec<f64>,
    /// Sample sd (ddof = 1).
    pub sd: Vec<f64>,
}

impl LatentStats {
    pub fn normalize_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize_in_place(&self, row: &mut [f64]) {
        for (v, (m, s)) in row.iter_mut().zip(self.mean.iter().zip(&self.sd)) {
            *v = *v * s + m;
        }
    }
}

/// Inputs paired with their encoded latent targets, with the dataset's splits.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    pub inputs: Tensor2,
    pub z: Tensor2,
    pub splits: Splits,
    pub stats: LatentStats,
}

impl LatentDataset {
    pub fn d_z(&self) -> usize {
        self.z.cols()
    }

    pub fn d_in(&self) -> usize {
        self.inputs.cols()
    }

    pub fn split(&self, split: Split) -> &[usize] {
        self.splits.get(split)
    }

    pub fn split_inputs(&self, split: Split) -> Tensor2 {
        self.inputs.select_rows(self.split(split))
    }

    pub fn split_latents(&self, split: Split) -> Tensor2 {
        self.z.select_rows(self.split(split))
    }

    /// Writes `latent.csv` (all samples, dataset order) and `latent_stats.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        let cols: Vec<String> = (0..self.d_z()).map(|i| format!("z{i}")).collect();
        write_matrix(&dir.join("latent.csv"), &cols, self.z.iter_rows().map(<[f64]>::to_vec))?;
        write_json(&dir.join("latent_stats.json"), &self.stats)
    }
}

pub fn encode_dataset(model: &AutoencoderModel, dataset: &Dataset) -> Result<LatentDataset> {
    let ys: Vec<Vec<f64>> = (0..dataset.len())
        .map(|i| model.standardizer.normalize(&dataset.output(i)))
        .collect::<Result<_>>()?;
    let z = model.encode_normalized(&Tensor2::from_rows(&ys)?)?;
    let train = dataset.split(Split::Train);
    let mut mean = Vec::with_capacity(model.d_z);
    let mut sd = Vec::with_capacity(model.d_z);
    for d in 0..model.d_z {
        let col: Vec<f64> = train.iter().map(|&i| z.get(i, d)).collect();
        let s = stats::sample_sd(&col);
        if !(s * s >= 1e-8) {
            return Err(Error::ZeroVariance(format!("latent z{d}")));
        }
        mean.push(stats::mean(&col));
        sd.push(s);
    }
    Ok(LatentDataset {
        inputs: dataset.inputs.clone(),
        z,
        splits: dataset.manifest.splits.clone(),
        stats: LatentStats { mean, sd },
    })
}
