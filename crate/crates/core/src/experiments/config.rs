//! Run configuration, read from JSON or TOML.
//!
//! Every section has defaults, so `{}` is a complete config. All randomness
//! flows from `seed`: component seeds are derived from it by label and the
//! derived values are written back into the resolved copy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contour::{DEFAULT_FRACTION, DEFAULT_N_ANGLES};
use super::density::DensityOptions;
use crate::autoencoder::AutoencoderConfig;
use crate::calibration::EvalOptions;
use crate::datagen::{DensityProfile, SplitFractions};
use crate::error::{Error, Result};
use crate::forward::ForwardConfig;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub profile: DensityProfile,
    pub d_img: usize,
    pub split: SplitFractions,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            profile: DensityProfile::Uniform,
            d_img: crate::datagen::simulator::DEFAULT_D_IMG,
            split: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub keep_rates: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            keep_rates: (0..10).map(|i| (90 + i) as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    /// Uncertainty draws per method.
    pub m: usize,
    /// Test input; defaults to the first test-split sample.
    pub input: Option<Vec<f64>>,
    /// Epochs for the deterministic forward model.
    pub epochs: usize,
    /// Batches for the output-method mean-image contour spread.
    pub replicates: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            input: None,
            epochs: 200,
            replicates: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourConfig {
    pub fraction: f64,
    pub n_angles: usize,
    /// Posterior draws for the MC-dropout contour fan.
    pub s_pred: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_FRACTION,
            n_angles: DEFAULT_N_ANGLES,
            s_pred: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    /// Sample-count ratio of `[0, 0.5)` to `[0.5, 1]` on the ramp coordinate.
    pub ratio: f64,
    /// Keep rate for the ramp model; defaults to the sweep's selection.
    pub keep_rate: Option<f64>,
    #[serde(flatten)]
    pub options: DensityOptions,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            ratio: 1.75,
            keep_rate: None,
            options: DensityOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub autoencoder: AutoencoderConfig,
    pub forward: ForwardConfig,
    pub sweep: SweepConfig,
    pub eval: EvalOptions,
    pub toy: ToyConfig,
    pub contours: ContourConfig,
    pub density: DensityConfig,
}

/// Seeds for each job, all derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub autoencoder: u64,
    pub forward: u64,
    pub toy: u64,
    pub contours: u64,
    pub density_data: u64,
    pub density_autoencoder: u64,
    pub density: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Self {
            data: derive_seed(root, "data"),
            autoencoder: derive_seed(root, "autoencoder"),
            forward: derive_seed(root, "forward"),
            toy: derive_seed(root, "toy"),
            contours: derive_seed(root, "contours"),
            density_data: derive_seed(root, "density-data"),
            density_autoencoder: derive_seed(root, "density-autoencoder"),
            density: derive_seed(root, "density"),
        }
    }
}

impl RunConfig {
    /// Reads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let config: Self = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.keep_rates.len() < 2 {
            return Err(Error::Config("sweep.keep_rates needs at least 2 entries".into()));
        }
        if let Some(&k) = self.sweep.keep_rates.iter().find(|&&k| !(k > 0.0 && k <= 1.0)) {
            return Err(Error::Config(format!("keep rate {k} outside (0, 1]")));
        }
        if !(self.density.ratio > 0.0) {
            return Err(Error::Config("density.ratio must be > 0".into()));
        }
        if self.toy.m < 2 || self.toy.replicates < 2 {
            return Err(Error::Config("toy.m and toy.replicates must be >= 2".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_root(self.seed)
    }

    /// Copy with derived seeds filled in, as written next to run outputs.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.autoencoder.seed = self.seeds().autoencoder;
        c
    }
}
