//! Predictive spread along one input coordinate versus training density.

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderModel;
use crate::datagen::{Dataset, SimInput, Split};
use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::io::{fmt, Table};
use crate::stats;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub value: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub coordinate: usize,
    pub scalar: usize,
    /// Training samples with the coordinate in `[0, 0.5)` and `[0.5, 1]`.
    pub lower_count: usize,
    pub upper_count: usize,
    pub lower_mean_sd: f64,
    pub upper_mean_sd: f64,
}

impl DensitySummary {
    /// Larger region count over smaller.
    pub fn count_ratio(&self) -> f64 {
        let (a, b) = (self.lower_count as f64, self.upper_count as f64);
        a.max(b) / a.min(b)
    }

    /// `(dense, sparse)` mean sd; the lower half counts as dense on a tie.
    pub fn dense_sparse_sd(&self) -> (f64, f64) {
        if self.lower_count >= self.upper_count {
            (self.lower_mean_sd, self.upper_mean_sd)
        } else {
            (self.upper_mean_sd, self.lower_mean_sd)
        }
    }

    /// Relative gap `|a − b| / min(a, b)` between the two halves' mean sd.
    pub fn relative_gap(&self) -> f64 {
        let (a, b) = (self.lower_mean_sd, self.upper_mean_sd);
        (a - b).abs() / a.min(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStudy {
    pub points: Vec<DensityPoint>,
    /// `(bin_lo, bin_hi, training count)`.
    pub histogram: Vec<(f64, f64, usize)>,
    pub summary: DensitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityOptions {
    pub coordinate: usize,
    /// Values for every input; the swept coordinate's entry is ignored.
    pub fixed: Vec<f64>,
    pub scalar: usize,
    pub n_eval: usize,
    pub s_pred: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            coordinate: 0,
            fixed: vec![0.5; crate::datagen::D_IN],
            scalar: 0,
            n_eval: 1000,
            s_pred: 1000,
        }
    }
}

pub fn density_study(
    model: &ForwardModel,
    ae: &AutoencoderModel,
    dataset: &Dataset,
    options: &DensityOptions,
    seed: u64,
) -> Result<DensityStudy> {
    let d_in = model.d_in;
    if options.coordinate >= d_in {
        return Err(Error::InvalidArgument(format!(
            "coordinate {} out of range for {d_in} inputs",
            options.coordinate
        )));
    }
    if options.fixed.len() != d_in {
        return Err(Error::mismatch("fixed inputs", d_in, options.fixed.len()));
    }
    if options.scalar >= ae.standardizer.d_s() {
        return Err(Error::InvalidArgument(format!(
            "scalar {} out of range",
            options.scalar
        )));
    }
    if options.n_eval < 2 {
        return Err(Error::InvalidArgument("n_eval must be >= 2".into()));
    }
    SimInput::new(options.fixed.clone())?;

    let points = (0..options.n_eval)
        .map(|i| {
            let value = i as f64 / (options.n_eval - 1) as f64;
            let mut x = options.fixed.clone();
            x[options.coordinate] = value;
            let post = model.predict_output_posterior(ae, &SimInput { x }, options.s_pred, seed)?;
            Ok(DensityPoint {
                value,
                mean: post.scalar_mean[options.scalar],
                sd: post.scalar_sd[options.scalar],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let train: Vec<f64> = dataset
        .split(Split::Train)
        .iter()
        .map(|&i| dataset.inputs.get(i, options.coordinate))
        .collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in &train {
        counts[((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            (
                b as f64 / HISTOGRAM_BINS as f64,
                (b + 1) as f64 / HISTOGRAM_BINS as f64,
                c,
            )
        })
        .collect();

    let half_sd = |lower: bool| {
        let v: Vec<f64> = points
            .iter()
            .filter(|p| (p.value < 0.5) == lower)
            .map(|p| p.sd)
            .collect();
        stats::mean(&v)
    };
    let lower_count = train.iter().filter(|&&v| v < 0.5).count();
    let summary = DensitySummary {
        coordinate: options.coordinate,
        scalar: options.scalar,
        lower_count,
        upper_count: train.len() - lower_count,
        lower_mean_sd: half_sd(true),
        upper_mean_sd: half_sd(false),
    };
    Ok(DensityStudy {
        points,
        histogram,
        summary,
    })
}

impl DensityStudy {
    /// `value, mean, sd`, one row per evaluation point.
    pub fn points_table(&self) -> Table {
        let mut t = Table::new(["value", "mean", "sd"]);
        for p in &self.points {
            t.push(vec![fmt(p.value), fmt(p.mean), fmt(p.sd)]);
        }
        t
    }

    pub fn histogram_table(&self) -> Table {
        let mut t = Table::new(["bin_lo", "bin_hi", "count"]);
        for &(lo, hi, c) in &self.histogram {
            t.push(vec![fmt(lo), fmt(hi), c.to_string()]);
        }
        t
    }
}
