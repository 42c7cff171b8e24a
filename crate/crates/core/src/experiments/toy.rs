//! Residual-resampling uncertainty in latent space versus output space.
//!
//! A deterministic pipeline (encoder, forward model trained without dropout,
//! decoder) is paired with its validation residuals, measured either on the
//! latent codes or on the decoded physical outputs. Uncertainty samples at a
//! test input add residuals to the deterministic prediction, drawing each
//! dimension's residual from an independently chosen validation row. In
//! latent space the decoder then maps every draw back onto the learned
//! output manifold; in output space the draws stay where they land.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::contour::{ContourSet, ImageView};
use crate::autoencoder::{AutoencoderModel, LatentDataset};
use crate::datagen::{Dataset, MultimodalOutput, SimInput, Split, CORRELATED_PAIR};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::io::{fmt, Table};
use crate::netcore::Tensor2;
use crate::rng;
use crate::stats::pearson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Latent,
    Output,
}

#[derive(Debug, Clone)]
pub struct ResidualUncertaintyModel {
    pub space: Space,
    /// One row per validation sample.
    pub residuals: Tensor2,
}

impl ResidualUncertaintyModel {
    /// Validation residuals of the deterministic pipeline in `space`.
    pub fn fit(
        space: Space,
        ae: &AutoencoderModel,
        forward: &ForwardModel,
        dataset: &Dataset,
        latent: &LatentDataset,
    ) -> Result<Self> {
        let idx = latent.split(Split::Validation);
        if idx.is_empty() {
            return Err(Error::InvalidArgument("residual model needs a validation split".into()));
        }
        let z_hat = forward.predict_deterministic(&latent.inputs.select_rows(idx))?;
        let residuals = match space {
            Space::Latent => {
                let mut r = latent.z.select_rows(idx);
                for row in 0..idx.len() {
                    for (v, p) in r.row_mut(row).iter_mut().zip(z_hat.row(row)) {
                        *v -= p;
                    }
                }
                r
            }
            Space::Output => {
                let decoded = ae.decode_batch(&z_hat)?;
                let rows: Vec<Vec<f64>> = idx
                    .iter()
                    .zip(&decoded)
                    .map(|(&i, d)| {
                        dataset
                            .output(i)
                            .concat()
                            .iter()
                            .zip(d.concat())
                            .map(|(y, p)| y - p)
                            .collect()
                    })
                    .collect();
                Tensor2::from_rows(&rows)?
            }
        };
        Ok(Self { space, residuals })
    }

    pub fn dims(&self) -> usize {
        self.residuals.cols()
    }

    /// `m` draws of `center + r`, with `r_d` taken from a uniformly chosen
    /// residual row independently for each dimension `d`.
    pub fn sample<R: Rng>(&self, center: &[f64], m: usize, rng: &mut R) -> Result<Tensor2> {
        if center.len() != self.dims() {
            return Err(Error::mismatch("residual model centre", self.dims(), center.len()));
        }
        let n = self.residuals.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("residual model has no residuals".into()));
        }
        let mut out = Tensor2::zeros(m, self.dims());
        for s in 0..m {
            for (d, c) in center.iter().enumerate() {
                let j = rng.random_range(0..n);
                out.set(s, d, c + self.residuals.get(j, d));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub input: Vec<f64>,
    pub pair: (usize, usize),
    pub m: usize,
    pub latent_r: f64,
    pub output_r: f64,
    pub simulator_r: f64,
}

#[derive(Debug, Clone)]
pub struct ToyComparison {
    pub summary: ToySummary,
    pub latent_samples: Vec<MultimodalOutput>,
    pub output_samples: Vec<MultimodalOutput>,
    /// Deterministic decoded prediction at the test input.
    pub center: MultimodalOutput,
}

fn pair_r(samples: &[MultimodalOutput], pair: (usize, usize)) -> f64 {
    let a: Vec<f64> = samples.iter().map(|s| s.scalars[pair.0]).collect();
    let b: Vec<f64> = samples.iter().map(|s| s.scalars[pair.1]).collect();
    pearson(&a, &b)
}

/// Pearson r of the correlated scalar pair over every sample in `dataset`.
pub fn simulator_pair_r(dataset: &Dataset) -> f64 {
    let (i, j) = CORRELATED_PAIR;
    let a: Vec<f64> = (0..dataset.len()).map(|k| dataset.scalars.get(k, i)).collect();
    let b: Vec<f64> = (0..dataset.len()).map(|k| dataset.scalars.get(k, j)).collect();
    pearson(&a, &b)
}

pub fn split_output(ae: &AutoencoderModel, row: &[f64]) -> MultimodalOutput {
    let d_s = ae.standardizer.d_s();
    MultimodalOutput {
        scalars: row[..d_s].to_vec(),
        image: row[d_s..].to_vec(),
        d_img: ae.standardizer.d_img,
    }
}

/// Both residual methods at `x`, `m` draws each.
pub fn toy_compare(
    ae: &AutoencoderModel,
    latent_model: &ResidualUncertaintyModel,
    output_model: &ResidualUncertaintyModel,
    forward: &ForwardModel,
    dataset: &Dataset,
    x: &SimInput,
    m: usize,
    seed: u64,
) -> Result<ToyComparison> {
    x.validate()?;
    if latent_model.space != Space::Latent || output_model.space != Space::Output {
        return Err(Error::InvalidArgument(
            "toy comparison needs one latent and one output residual model".into(),
        ));
    }
    if m < 2 {
        return Err(Error::InvalidArgument("toy comparison needs m >= 2".into()));
    }
    let z0 = forward.predict_deterministic(&Tensor2::row_vector(x.x.clone()))?;
    let center = ae.decode_batch(&z0)?.remove(0);

    let z = latent_model.sample(z0.row(0), m, &mut rng::seeded(rng::derive_seed(seed, "toy-latent")))?;
    let latent_samples = ae.decode_batch(&z)?;
    let y = output_model.sample(
        &center.concat(),
        m,
        &mut rng::seeded(rng::derive_seed(seed, "toy-output")),
    )?;
    let output_samples: Vec<MultimodalOutput> = y.iter_rows().map(|r| split_output(ae, r)).collect();

    let pair = CORRELATED_PAIR;
    Ok(ToyComparison {
        summary: ToySummary {
            input: x.x.clone(),
            pair,
            m,
            latent_r: pair_r(&latent_samples, pair),
            output_r: pair_r(&output_samples, pair),
            simulator_r: simulator_pair_r(dataset),
        },
        latent_samples,
        output_samples,
        center,
    })
}

impl ToyComparison {
    /// `sample, s_a, s_b` for the chosen method's cloud.
    pub fn cloud_table(&self, space: Space) -> Table {
        let (a, b) = self.summary.pair;
        let samples = match space {
            Space::Latent => &self.latent_samples,
            Space::Output => &self.output_samples,
        };
        let mut t = Table::new(["sample".to_string(), format!("s{a}"), format!("s{b}")]);
        for (i, s) in samples.iter().enumerate() {
            t.push(vec![i.to_string(), fmt(s.scalars[a]), fmt(s.scalars[b])]);
        }
        t
    }
}

/// Contours of the output-residual method's mean image over `replicates`
/// independent batches of `m` draws each.
pub fn output_mean_image_contours(
    output_model: &ResidualUncertaintyModel,
    center: &MultimodalOutput,
    m: usize,
    replicates: usize,
    fraction: f64,
    n_angles: usize,
    seed: u64,
) -> Result<ContourSet> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicate batches".into()));
    }
    let c = center.concat();
    let d_s = center.scalars.len();
    let side = center.d_img;
    let means = (0..replicates)
        .map(|r| {
            let mut rng = rng::substream(rng::derive_seed(seed, "toy-output-replicates"), r as u64);
            let y = output_model.sample(&c, m, &mut rng)?;
            let mut mean = vec![0.0; side * side];
            for row in y.iter_rows() {
                for (acc, v) in mean.iter_mut().zip(&row[d_s..]) {
                    *acc += v;
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            Ok(mean)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let views = means
        .iter()
        .map(|im| ImageView::new(im, side))
        .collect::<Result<Vec<_>>>()?;
    ContourSet::from_images(views, fraction, n_angles)
}

pub fn sample_contours(samples: &[MultimodalOutput], fraction: f64, n_angles: usize) -> Result<ContourSet> {
    let views = samples
        .iter()
        .map(|s| ImageView::new(&s.image, s.d_img))
        .collect::<Result<Vec<_>>>()?;
    ContourSet::from_images(views, fraction, n_angles)
}

/// Contours of decoded MC-dropout posterior images at `x`.
pub fn contour_uncertainty(
    model: &ForwardModel,
    ae: &AutoencoderModel,
    x: &SimInput,
    s_pred: usize,
    seed: u64,
    fraction: f64,
    n_angles: usize,
) -> Result<ContourSet> {
    let post = model.predict_output_posterior(ae, x, s_pred, seed)?;
    sample_contours(&post.samples, fraction, n_angles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_resampling_decorrelates() {
        let n = 500;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = (i as f64 * 0.37).sin();
                vec![t, t]
            })
            .collect();
        let model = ResidualUncertaintyModel {
            space: Space::Output,
            residuals: Tensor2::from_rows(&rows).unwrap(),
        };
        let s = model.sample(&[1.0, 2.0], 2000, &mut rng::seeded(1)).unwrap();
        let a: Vec<f64> = s.iter_rows().map(|r| r[0]).collect();
        let b: Vec<f64> = s.iter_rows().map(|r| r[1]).collect();
        assert!(pearson(&a, &b).abs() < 0.1);
        assert!((crate::stats::mean(&a) - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_residuals_collapse() {
        let model = ResidualUncertaintyModel {
            space: Space::Latent,
            residuals: Tensor2::zeros(10, 3),
        };
        let s = model.sample(&[0.5, -1.0, 2.0], 50, &mut rng::seeded(3)).unwrap();
        assert!(s.iter_rows().all(|r| r == [0.5, -1.0, 2.0]));
        assert!(model.sample(&[0.5], 5, &mut rng::seeded(3)).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let model = ResidualUncertaintyModel {
            space: Space::Latent,
            residuals: Tensor2::from_rows(&[[0.1, 0.2], [-0.3, 0.4], [0.5, -0.6]]).unwrap(),
        };
        let a = model.sample(&[0.0, 0.0], 20, &mut rng::seeded(9)).unwrap();
        let b = model.sample(&[0.0, 0.0], 20, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
    }
}
