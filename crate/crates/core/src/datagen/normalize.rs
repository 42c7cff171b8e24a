use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use super::simulator::MultimodalOutput;
use crate::error::{Error, Result};
use crate::netcore::Tensor2;

/// Training-split statistics: one (mean, sd) per scalar channel and a single
/// (mean, sd) shared by all image pixels. sd is the population sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub scalar_mean: Vec<f64>,
    pub scalar_sd: Vec<f64>,
    pub pixel_mean: f64,
    pub pixel_sd: f64,
    pub d_img: usize,
}

/// Standardized `scalars ∥ image` rows for every sample (all splits).
#[derive(Debug, Clone)]
pub struct NormalizedOutputs {
    pub y: Tensor2,
    pub standardizer: Standardizer,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn normalize_outputs(dataset: &Dataset) -> Result<NormalizedOutputs> {
    let train = dataset.split(Split::Train);
    if train.len() < 2 {
        return Err(Error::InvalidArgument(
            "normalization needs at least 2 training samples".into(),
        ));
    }
    let d_s = dataset.scalars.cols();
    let mut scalar_mean = Vec::with_capacity(d_s);
    let mut scalar_sd = Vec::with_capacity(d_s);
    for c in 0..d_s {
        let (m, s) = mean_sd(train.iter().map(|&i| dataset.scalars.get(i, c)));
        if !(s > 0.0) {
            return Err(Error::ZeroVariance(format!("scalar s{c}")));
        }
        scalar_mean.push(m);
        scalar_sd.push(s);
    }
    let (pixel_mean, pixel_sd) = mean_sd(train.iter().flat_map(|&i| dataset.images.row(i).iter().copied()));
    if !(pixel_sd > 0.0) {
        return Err(Error::ZeroVariance("image pixels".into()));
    }
    let standardizer = Standardizer {
        scalar_mean,
        scalar_sd,
        pixel_mean,
        pixel_sd,
        d_img: dataset.manifest.d_img,
    };
    let rows: Vec<Vec<f64>> = (0..dataset.len())
        .map(|i| standardizer.normalize(&dataset.output(i)))
        .collect::<Result<_>>()?;
    Ok(NormalizedOutputs {
        y: Tensor2::from_rows(&rows)?,
        standardizer,
    })
}

impl Standardizer {
    pub fn d_s(&self) -> usize {
        self.scalar_mean.len()
    }

    pub fn d_y(&self) -> usize {
        self.d_s() + self.d_img * self.d_img
    }

    pub fn normalize(&self, y: &MultimodalOutput) -> Result<Vec<f64>> {
        if y.scalars.len() != self.d_s() {
            return Err(Error::mismatch("scalar channels", self.d_s(), y.scalars.len()));
        }
        if y.image.len() != self.d_img * self.d_img {
            return Err(Error::mismatch("image pixels", self.d_img * self.d_img, y.image.len()));
        }
        let mut v = Vec::with_capacity(self.d_y());
        v.extend(
            y.scalars
                .iter()
                .zip(self.scalar_mean.iter().zip(&self.scalar_sd))
                .map(|(s, (m, sd))| (s - m) / sd),
        );
        v.extend(y.image.iter().map(|p| (p - self.pixel_mean) / self.pixel_sd));
        Ok(v)
    }

    /// Inverse of [`Standardizer::normalize`]; no clamping.
    pub fn denormalize(&self, v: &[f64]) -> Result<MultimodalOutput> {
        if v.len() != self.d_y() {
            return Err(Error::mismatch("normalized output", self.d_y(), v.len()));
        }
        let d_s = self.d_s();
        let scalars = v[..d_s]
            .iter()
            .zip(self.scalar_mean.iter().zip(&self.scalar_sd))
            .map(|(z, (m, sd))| z * sd + m)
            .collect();
        let image = v[d_s..].iter().map(|z| z * self.pixel_sd + self.pixel_mean).collect();
        Ok(MultimodalOutput {
            scalars,
            image,
            d_img: self.d_img,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, DensityProfile, Simulator, SplitFractions};
    use proptest::prelude::*;

    fn dataset() -> Dataset {
        generate_dataset(
            200,
            5,
            DensityProfile::Uniform,
            SplitFractions::default(),
            &Simulator::default(),
        )
        .unwrap()
    }

    #[test]
    fn train_split_is_standardized() {
        let d = dataset();
        let n = normalize_outputs(&d).unwrap();
        let train = d.split(Split::Train);
        for c in 0..n.y.cols().min(12) {
            if c >= d.scalars.cols() {
                break;
            }
            let (m, s) = mean_sd(train.iter().map(|&i| n.y.get(i, c)));
            assert!(m.abs() < 1e-9, "channel {c} mean {m}");
            assert!((s - 1.0).abs() < 1e-9, "channel {c} sd {s}");
        }
        let d_s = d.scalars.cols();
        let (m, s) = mean_sd(train.iter().flat_map(|&i| n.y.row(i)[d_s..].iter().copied()));
        assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_channel_is_rejected() {
        let mut d = dataset();
        for i in 0..d.len() {
            d.scalars.set(i, 3, 2.5);
        }
        assert!(matches!(normalize_outputs(&d), Err(Error::ZeroVariance(c)) if c == "scalar s3"));
    }

    #[test]
    fn round_trip_on_dataset() {
        let d = dataset();
        let n = normalize_outputs(&d).unwrap();
        for i in [0, 17, 199] {
            let back = n.standardizer.denormalize(n.y.row(i)).unwrap();
            let orig = d.output(i);
            for (a, b) in back.concat().iter().zip(orig.concat()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn denormalize_inverts_normalize(vals in prop::collection::vec(-50.0f64..50.0, 8 + 256)) {
            let st = normalize_outputs(&dataset()).unwrap().standardizer;
            let y = MultimodalOutput { scalars: vals[..8].to_vec(), image: vals[8..].to_vec(), d_img: 16 };
            let back = st.denormalize(&st.normalize(&y).unwrap()).unwrap();
            for (a, b) in back.concat().iter().zip(y.concat()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
