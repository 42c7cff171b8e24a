//! Coverage of predictive intervals on held-out data, calibration curves,
//! the weighted calibration error score, and the keep-rate sweep.
//!
//! Everything is evaluated one latent dimension at a time. A level-`p`
//! interval is the central empirical interval of the posterior draws,
//! bounded by the `(1−p)/2` and `(1+p)/2` quantiles; a truth counts as
//! covered only when it lies strictly inside.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::autoencoder::{LatentDataset, LatentVector};
use crate::datagen::{SimInput, Split};
use crate::error::{Error, Result};
use crate::forward::{train_forward, ForwardConfig, ForwardModel, PosteriorSamples};
use crate::io::{self, fmt, write_json, Table};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceGrid {
    levels: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for ConfidenceGrid {
    /// 0.05, 0.10, …, 0.95 with unit weights.
    fn default() -> Self {
        let levels: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
        Self {
            weights: vec![1.0; levels.len()],
            levels,
        }
    }
}

impl ConfidenceGrid {
    pub fn new(levels: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if levels.is_empty() || levels.len() != weights.len() {
            return Err(Error::mismatch("confidence grid weights", levels.len(), weights.len()));
        }
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidArgument("confidence levels must lie in (0, 1)".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "confidence levels must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "confidence weights must be finite and >= 0".into(),
            ));
        }
        Ok(Self { levels, weights })
    }

    pub fn uniform(levels: Vec<f64>) -> Result<Self> {
        let n = levels.len();
        Self::new(levels, vec![1.0; n])
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// Central interval between empirical quantiles of the draws.
    #[default]
    Empirical,
    /// `μ̂ ± z·σ̂` with `z` the standard normal `(1+p)/2` quantile.
    Gaussian,
}

impl std::str::FromStr for IntervalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown interval method '{other}'"))),
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )))
    }
}

/// Inclusive linear-interpolation quantile of sorted data: position `(n−1)q`.
/// Positions within 1e-9 of an integer snap to it, so `(1 − 0.9)/2` lands on
/// the intended order statistic despite rounding.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let mut h = (sorted.len() - 1) as f64 * q;
    if (h - h.round()).abs() < 1e-9 {
        h = h.round();
    }
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Central empirical interval at `level` from ascending `samples`.
pub fn central_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("interval needs at least 2 samples".into()));
    }
    check_level(level)?;
    debug_assert!(samples.windows(2).all(|w| w[0] <= w[1]), "samples must be sorted");
    let lower = quantile_sorted(samples, (1.0 - level) / 2.0);
    let upper = quantile_sorted(samples, (1.0 + level) / 2.0);
    Ok((lower, upper.max(lower)))
}

pub fn gaussian_interval(mean: f64, sd: f64, level: f64) -> Result<(f64, f64)> {
    check_level(level)?;
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    Ok((mean - z * sd, mean + z * sd))
}

/// The draws for one latent dimension of one posterior, sorted once so every
/// grid level can be read off cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    sorted: Vec<f64>,
    mean: f64,
    sd: f64,
}

impl Marginal {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument("interval needs at least 2 samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("posterior draws".into()));
        }
        values.sort_by(f64::total_cmp);
        let mean = crate::stats::mean(&values);
        let sd = crate::stats::sample_sd(&values);
        Ok(Self {
            sorted: values,
            mean,
            sd,
        })
    }

    pub fn from_posterior(post: &PosteriorSamples, dim: usize) -> Result<Self> {
        if dim >= post.dims() {
            return Err(Error::mismatch("latent dimension", post.dims(), dim));
        }
        Self::new(post.samples().iter_rows().map(|r| r[dim]).collect())
    }

    pub fn interval(&self, level: f64, method: IntervalMethod) -> Result<(f64, f64)> {
        match method {
            IntervalMethod::Empirical => central_interval(&self.sorted, level),
            IntervalMethod::Gaussian => gaussian_interval(self.mean, self.sd, level),
        }
    }
}

fn covered(m: &Marginal, truth: f64, level: f64, method: IntervalMethod) -> Result<bool> {
    let (lo, hi) = m.interval(level, method)?;
    Ok(lo < truth && truth < hi)
}

/// Fraction of truths strictly inside their marginal's level interval.
pub fn marginal_coverage(marginals: &[Marginal], truths: &[f64], level: f64, method: IntervalMethod) -> Result<f64> {
    if marginals.len() != truths.len() {
        return Err(Error::mismatch("coverage truths", marginals.len(), truths.len()));
    }
    if marginals.is_empty() {
        return Err(Error::InvalidArgument("coverage over zero points".into()));
    }
    let mut hits = 0usize;
    for (m, &t) in marginals.iter().zip(truths) {
        hits += covered(m, t, level, method)? as usize;
    }
    Ok(hits as f64 / truths.len() as f64)
}

pub fn marginal_curve(
    marginals: &[Marginal],
    truths: &[f64],
    grid: &ConfidenceGrid,
    method: IntervalMethod,
) -> Result<Vec<(f64, f64)>> {
    grid.levels()
        .iter()
        .map(|&p| Ok((p, marginal_coverage(marginals, truths, p, method)?)))
        .collect()
}

fn marginals_for(posteriors: &[PosteriorSamples], dim: usize) -> Result<Vec<Marginal>> {
    posteriors.iter().map(|p| Marginal::from_posterior(p, dim)).collect()
}

fn truths_for(truths: &[LatentVector], dim: usize) -> Result<Vec<f64>> {
    truths
        .iter()
        .map(|t| {
            t.0.get(dim)
                .copied()
                .ok_or(Error::mismatch("truth dimension", dim + 1, t.0.len()))
        })
        .collect()
}

pub fn coverage(posteriors: &[PosteriorSamples], truths: &[LatentVector], level: f64, dim: usize) -> Result<f64> {
    if posteriors.len() != truths.len() {
        return Err(Error::mismatch("coverage truths", posteriors.len(), truths.len()));
    }
    marginal_coverage(
        &marginals_for(posteriors, dim)?,
        &truths_for(truths, dim)?,
        level,
        IntervalMethod::Empirical,
    )
}

pub fn calibration_curve(
    posteriors: &[PosteriorSamples],
    truths: &[LatentVector],
    grid: &ConfidenceGrid,
    dim: usize,
) -> Result<Vec<(f64, f64)>> {
    if posteriors.len() != truths.len() {
        return Err(Error::mismatch("coverage truths", posteriors.len(), truths.len()));
    }
    marginal_curve(
        &marginals_for(posteriors, dim)?,
        &truths_for(truths, dim)?,
        grid,
        IntervalMethod::Empirical,
    )
}

/// `Σ_k w_k (p_k − p̂_k)²` over the grid.
pub fn calibration_error(curve: &[(f64, f64)], grid: &ConfidenceGrid) -> Result<f64> {
    if curve.len() != grid.len() {
        return Err(Error::mismatch("calibration curve", grid.len(), curve.len()));
    }
    let mut total = 0.0;
    for ((&(p, observed), &level), &w) in curve.iter().zip(grid.levels()).zip(grid.weights()) {
        if p != level {
            return Err(Error::InvalidArgument(format!(
                "curve level {p} does not match grid level {level}"
            )));
        }
        total += w * (p - observed) * (p - observed);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub split: String,
    pub keep_rate: f64,
    pub train_seed: u64,
    pub posterior_seed: u64,
    pub s_pred: usize,
    pub method: IntervalMethod,
    pub n_points: usize,
    pub grid: ConfidenceGrid,
    /// `observed[d][k]` is the coverage of dimension `d` at grid level `k`.
    pub observed: Vec<Vec<f64>>,
    pub dim_errors: Vec<f64>,
    pub mean_error: f64,
}

impl CalibrationReport {
    pub fn from_curves(
        observed: Vec<Vec<f64>>,
        grid: ConfidenceGrid,
        meta: ReportMeta,
        n_points: usize,
    ) -> Result<Self> {
        let dim_errors = observed
            .iter()
            .map(|obs| {
                let curve: Vec<(f64, f64)> = grid.levels().iter().copied().zip(obs.iter().copied()).collect();
                calibration_error(&curve, &grid)
            })
            .collect::<Result<Vec<_>>>()?;
        if dim_errors.is_empty() {
            return Err(Error::InvalidArgument("report without dimensions".into()));
        }
        let mean_error = dim_errors.iter().sum::<f64>() / dim_errors.len() as f64;
        Ok(Self {
            split: meta.split,
            keep_rate: meta.keep_rate,
            train_seed: meta.train_seed,
            posterior_seed: meta.posterior_seed,
            s_pred: meta.s_pred,
            method: meta.method,
            n_points,
            grid,
            observed,
            dim_errors,
            mean_error,
        })
    }

    pub fn dims(&self) -> usize {
        self.observed.len()
    }

    pub fn curve(&self, dim: usize) -> Vec<(f64, f64)> {
        self.grid
            .levels()
            .iter()
            .copied()
            .zip(self.observed[dim].iter().copied())
            .collect()
    }

    /// Errors recomputed from the stored curves.
    pub fn recomputed_errors(&self) -> Result<Vec<f64>> {
        (0..self.dims())
            .map(|d| calibration_error(&self.curve(d), &self.grid))
            .collect()
    }

    pub fn curves_table(&self) -> Table {
        let mut t = Table::new(["dim", "level", "observed"]);
        for d in 0..self.dims() {
            for (p, obs) in self.curve(d) {
                t.push(vec![d.to_string(), fmt(p), fmt(obs)]);
            }
        }
        t
    }

    /// Writes `calibration_report.json` and `curves.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        write_json(&dir.join("calibration_report.json"), self)?;
        self.curves_table().write(&dir.join("curves.csv"))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        io::read_json(&dir.join("calibration_report.json"))
    }
}

#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub split: String,
    pub keep_rate: f64,
    pub train_seed: u64,
    pub posterior_seed: u64,
    pub s_pred: usize,
    pub method: IntervalMethod,
}

/// Posterior draws at every input of `split`, paired with encoded truths.
pub fn split_posteriors(
    model: &ForwardModel,
    latent: &LatentDataset,
    split: Split,
    s_pred: usize,
    seed: u64,
) -> Result<(Vec<PosteriorSamples>, Vec<LatentVector>)> {
    let idx = latent.split(split);
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!("{} split is empty", split_name(split))));
    }
    let inputs: Vec<SimInput> = idx
        .iter()
        .map(|&i| SimInput {
            x: latent.inputs.row(i).to_vec(),
        })
        .collect();
    let posts = model.predict_posterior_batch(&inputs, s_pred, seed)?;
    let truths = idx.iter().map(|&i| LatentVector(latent.z.row(i).to_vec())).collect();
    Ok((posts, truths))
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Validation => "validation",
        Split::Test => "test",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub grid: ConfidenceGrid,
    pub method: IntervalMethod,
    /// Posterior draws per input; `None` uses the model's default.
    pub s_pred: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            grid: ConfidenceGrid::default(),
            method: IntervalMethod::Empirical,
            s_pred: None,
        }
    }
}

/// Posterior seed for a split; shared by every sweep member.
pub fn posterior_seed(root: u64, split: Split) -> u64 {
    rng::derive_seed(root, &format!("posterior-{}", split_name(split)))
}

pub fn evaluate_split(
    model: &ForwardModel,
    latent: &LatentDataset,
    split: Split,
    options: &EvalOptions,
    root_seed: u64,
) -> Result<CalibrationReport> {
    let s_pred = options.s_pred.unwrap_or(model.config.mc_pred);
    let seed = posterior_seed(root_seed, split);
    let (posts, truths) = split_posteriors(model, latent, split, s_pred, seed)?;
    let observed = (0..model.d_z)
        .map(|d| {
            let marginals = marginals_for(&posts, d)?;
            let t = truths_for(&truths, d)?;
            Ok(marginal_curve(&marginals, &t, &options.grid, options.method)?
                .into_iter()
                .map(|(_, o)| o)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    CalibrationReport::from_curves(
        observed,
        options.grid.clone(),
        ReportMeta {
            split: split_name(split).into(),
            keep_rate: model.keep_rate,
            train_seed: model.seed,
            posterior_seed: seed,
            s_pred,
            method: options.method,
        },
        posts.len(),
    )
}

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub keep_rate: f64,
    pub model: ForwardModel,
    pub validation: CalibrationReport,
    pub test: CalibrationReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub members: Vec<SweepMember>,
    pub selected_keep_rate: f64,
}

/// Lowest mean error wins; exact ties go to the larger keep rate.
pub fn select_keep_rate(candidates: &[(f64, f64)]) -> Option<f64> {
    candidates
        .iter()
        .copied()
        .reduce(|best, c| {
            if c.1 < best.1 || (c.1 == best.1 && c.0 > best.0) {
                c
            } else {
                best
            }
        })
        .map(|(k, _)| k)
}

impl SweepResult {
    pub fn selected(&self) -> &SweepMember {
        self.members
            .iter()
            .find(|m| m.keep_rate == self.selected_keep_rate)
            .expect("selected keep rate is a member")
    }

    pub fn member(&self, keep_rate: f64) -> Option<&SweepMember> {
        self.members.iter().find(|m| (m.keep_rate - keep_rate).abs() < 1e-12)
    }

    /// One row per keep rate: validation and test mean errors plus the
    /// per-dimension validation errors.
    pub fn table(&self) -> Table {
        let d_z = self.members.first().map_or(0, |m| m.validation.dims());
        let mut header: Vec<String> = ["keep_rate", "validation_error", "test_error", "selected"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..d_z).map(|d| format!("validation_error_z{d}")));
        let mut t = Table::new(header);
        for m in &self.members {
            let mut row = vec![
                fmt(m.keep_rate),
                fmt(m.validation.mean_error),
                fmt(m.test.mean_error),
                u8::from(m.keep_rate == self.selected_keep_rate).to_string(),
            ];
            row.extend(m.validation.dim_errors.iter().map(|&e| fmt(e)));
            t.push(row);
        }
        t
    }

    /// `sweep.csv`, the selected model's test report and every member's
    /// validation report under `members/kr_<rate>/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        self.table().write(&dir.join("sweep.csv"))?;
        self.selected().test.write(&dir.join("selected"))?;
        self.selected().model.save(&dir.join("selected").join("model"))?;
        for m in &self.members {
            m.validation.write(&member_dir(dir, m.keep_rate))?;
        }
        Ok(())
    }
}

pub fn member_dir(dir: &Path, keep_rate: f64) -> PathBuf {
    dir.join("members").join(format!("kr_{keep_rate:.4}"))
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_keep_rates(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("bad keep-rate list '{spec}'"));
    let rates: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Round to 1e-10 so 0.90 + 3·0.01 prints and compares as 0.93.
        (0..=n)
            .map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10)
            .collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    for &k in &rates {
        if !(k > 0.0 && k <= 1.0) {
            return Err(Error::InvalidKeepRate(k));
        }
    }
    Ok(rates)
}

/// Trains one forward model per keep rate with identical seed and config,
/// selects on the validation split and reports on the test split.
///
/// With `out` set, each member's reports are written as soon as it finishes,
/// so a failure leaves the completed members on disk as well as in the error.
pub fn sweep_keep_rate(
    latent: &LatentDataset,
    keep_rates: &[f64],
    config: &ForwardConfig,
    seed: u64,
    options: &EvalOptions,
    out: Option<&Path>,
) -> Result<SweepResult> {
    if keep_rates.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least 2 keep rates".into()));
    }
    if latent.split(Split::Validation).is_empty() || latent.split(Split::Test).is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs non-empty validation and test splits".into(),
        ));
    }
    let mut members: Vec<SweepMember> = Vec::with_capacity(keep_rates.len());
    for &keep_rate in keep_rates {
        let run = || -> Result<SweepMember> {
            let model = train_forward(latent, keep_rate, config, seed)?;
            let validation = evaluate_split(&model, latent, Split::Validation, options, seed)?;
            let test = evaluate_split(&model, latent, Split::Test, options, seed)?;
            Ok(SweepMember {
                keep_rate,
                model,
                validation,
                test,
            })
        };
        match run() {
            Ok(m) => {
                info!(
                    "keep_rate {keep_rate}: validation error {:.4}, test error {:.4}",
                    m.validation.mean_error, m.test.mean_error
                );
                if let Some(dir) = out {
                    let mdir = member_dir(dir, keep_rate);
                    m.validation.write(&mdir)?;
                    m.test.write(&mdir.join("test"))?;
                }
                members.push(m);
            }
            Err(source) => {
                warn!("sweep member {keep_rate} failed: {source}");
                return Err(Error::SweepMember {
                    keep_rate,
                    completed: members.iter().map(|m| (m.keep_rate, m.validation.mean_error)).collect(),
                    source: Box::new(source),
                });
            }
        }
    }
    let candidates: Vec<(f64, f64)> = members.iter().map(|m| (m.keep_rate, m.validation.mean_error)).collect();
    let selected_keep_rate = select_keep_rate(&candidates).expect("at least two members");
    Ok(SweepResult {
        members,
        selected_keep_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn default_grid() {
        let g = ConfidenceGrid::default();
        assert_eq!(g.len(), 19);
        assert!((g.levels()[0] - 0.05).abs() < 1e-15 && (g.levels()[18] - 0.95).abs() < 1e-15);
        assert!(g.weights().iter().all(|&w| w == 1.0));
        assert!(ConfidenceGrid::uniform(vec![0.5, 0.4]).is_err());
        assert!(ConfidenceGrid::uniform(vec![0.0, 0.4]).is_err());
        assert!(ConfidenceGrid::new(vec![0.5], vec![-1.0]).is_err());
    }

    #[test]
    fn interval_on_arithmetic_sequence() {
        let s: Vec<f64> = (1..=1001).map(f64::from).collect();
        assert_eq!(central_interval(&s, 0.9).unwrap(), (51.0, 951.0));
    }

    #[test]
    fn interval_edge_cases() {
        let (lo, hi) = central_interval(&[0.0, 1.0], 0.3).unwrap();
        assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
        assert_eq!(central_interval(&[2.5; 7], 0.8).unwrap(), (2.5, 2.5));
        assert!(central_interval(&[1.0], 0.5).is_err());
        assert!(central_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn error_closed_forms() {
        let g = ConfidenceGrid::default();
        let exact: Vec<(f64, f64)> = g.levels().iter().map(|&p| (p, p)).collect();
        assert_eq!(calibration_error(&exact, &g).unwrap(), 0.0);
        let zero: Vec<(f64, f64)> = g.levels().iter().map(|&p| (p, 0.0)).collect();
        // 0.05² · Σ k² for k = 1..19 = 0.0025 · 2470
        assert!((calibration_error(&zero, &g).unwrap() - 6.175).abs() < 1e-12);
        let shifted: Vec<(f64, f64)> = g.levels().iter().map(|&p| (p, p + 0.1)).collect();
        assert!((calibration_error(&shifted, &g).unwrap() - 0.19).abs() < 1e-15);
        assert!(calibration_error(&exact[1..], &g).is_err());
    }

    fn gaussian_marginals(n: usize, s: usize, sd_scale: f64, seed: u64) -> (Vec<Marginal>, Vec<f64>) {
        let mut rng = rng::seeded(seed);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut marginals = Vec::with_capacity(n);
        let mut truths = Vec::with_capacity(n);
        for _ in 0..n {
            let mu = 3.0 * draw();
            let sd = 0.5 + draw().abs();
            truths.push(mu + sd * draw());
            marginals.push(Marginal::new((0..s).map(|_| mu + sd_scale * sd * draw()).collect()).unwrap());
        }
        (marginals, truths)
    }

    #[test]
    fn coverage_of_calibrated_generator() {
        let (m, t) = gaussian_marginals(2000, 2000, 1.0, 1);
        let c = marginal_coverage(&m, &t, 0.9, IntervalMethod::Empirical).unwrap();
        assert!((0.88..=0.92).contains(&c), "coverage {c}");
        let g = marginal_coverage(&m, &t, 0.9, IntervalMethod::Gaussian).unwrap();
        assert!((0.88..=0.92).contains(&g), "gaussian coverage {g}");
    }

    #[test]
    fn coverage_median_and_outside() {
        let m: Vec<Marginal> = (0..5)
            .map(|i| Marginal::new((0..11).map(|k| (i + k) as f64).collect()).unwrap())
            .collect();
        let medians: Vec<f64> = (0..5).map(|i| (i + 5) as f64).collect();
        assert_eq!(
            marginal_coverage(&m, &medians, 0.5, IntervalMethod::Empirical).unwrap(),
            1.0
        );
        let outside: Vec<f64> = (0..5).map(|i| (i + 100) as f64).collect();
        assert_eq!(
            marginal_coverage(&m, &outside, 0.95, IntervalMethod::Empirical).unwrap(),
            0.0
        );
        assert!(marginal_coverage(&m, &outside[1..], 0.5, IntervalMethod::Empirical).is_err());
    }

    #[test]
    fn degenerate_posteriors_cover_nothing() {
        let m: Vec<Marginal> = (0..4).map(|i| Marginal::new(vec![i as f64; 10]).unwrap()).collect();
        let t: Vec<f64> = (0..4).map(|i| i as f64 + 0.25).collect();
        let curve = marginal_curve(&m, &t, &ConfidenceGrid::default(), IntervalMethod::Empirical).unwrap();
        assert!(curve.iter().all(|&(_, o)| o == 0.0));
        // Ties count as uncovered.
        let exact: Vec<f64> = (0..4).map(|i| i as f64).collect();
        assert_eq!(
            marginal_coverage(&m, &exact, 0.5, IntervalMethod::Empirical).unwrap(),
            0.0
        );
    }

    #[test]
    fn selection_rules() {
        assert_eq!(select_keep_rate(&[(0.9, 0.2), (0.95, 0.1), (0.99, 0.3)]), Some(0.95));
        assert_eq!(select_keep_rate(&[(0.9, 0.1), (0.95, 0.1), (0.92, 0.1)]), Some(0.95));
        assert_eq!(select_keep_rate(&[]), None);
    }

    #[test]
    fn keep_rate_lists() {
        let r = parse_keep_rates("0.90:0.99:0.01").unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r[3], 0.93);
        assert_eq!(r[9], 0.99);
        assert_eq!(parse_keep_rates("0.9, 1.0").unwrap(), vec![0.9, 1.0]);
        assert!(parse_keep_rates("0.9:1.2:0.1").is_err());
        assert!(parse_keep_rates("a,b").is_err());
    }

    #[test]
    fn report_round_trip_and_recompute() {
        let g = ConfidenceGrid::default();
        let observed = vec![g.levels().iter().map(|p| p * 0.9).collect(), g.levels().to_vec()];
        let meta = ReportMeta {
            split: "test".into(),
            keep_rate: 0.95,
            train_seed: 1,
            posterior_seed: 2,
            s_pred: 100,
            method: IntervalMethod::Empirical,
        };
        let r = CalibrationReport::from_curves(observed, g, meta, 10).unwrap();
        assert_eq!(r.dim_errors[1], 0.0);
        assert_eq!(r.recomputed_errors().unwrap(), r.dim_errors);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        assert_eq!(CalibrationReport::read(dir.path()).unwrap(), r);
        let curves = Table::read(&dir.path().join("curves.csv")).unwrap();
        assert_eq!(curves.header, ["dim", "level", "observed"]);
        assert_eq!(curves.rows.len(), 38);
    }

    proptest! {
        #[test]
        fn coverage_is_monotone_in_level(seed in 0u64..200) {
            let (m, t) = gaussian_marginals(40, 50, 0.7, seed);
            let curve = marginal_curve(&m, &t, &ConfidenceGrid::default(), IntervalMethod::Empirical).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
            prop_assert!(curve.iter().all(|&(_, o)| (0.0..=1.0).contains(&o)));
        }

        #[test]
        fn coverage_is_affine_equivariant(seed in 0u64..200, a in 0.1f64..10.0, b in -50.0f64..50.0) {
            // Power-of-two scale and integer shift keep the transform exact in floating point.
            let a = a.log2().round().exp2();
            let b = b.round();
            let (m, t) = gaussian_marginals(30, 40, 1.0, seed);
            let m2: Vec<Marginal> = m.iter().map(|x| Marginal::new(x.sorted.iter().map(|v| a * v + b).collect()).unwrap()).collect();
            let t2: Vec<f64> = t.iter().map(|v| a * v + b).collect();
            let g = ConfidenceGrid::default();
            prop_assert_eq!(
                marginal_curve(&m, &t, &g, IntervalMethod::Empirical).unwrap(),
                marginal_curve(&m2, &t2, &g, IntervalMethod::Empirical).unwrap()
            );
        }

        #[test]
        fn error_is_nonnegative(obs in prop::collection::vec(0.0f64..=1.0, 19)) {
            let g = ConfidenceGrid::default();
            let curve: Vec<(f64, f64)> = g.levels().iter().copied().zip(obs).collect();
            prop_assert!(calibration_error(&curve, &g).unwrap() >= 0.0);
        }
    }
}
