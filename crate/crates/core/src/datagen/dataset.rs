use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::simulator::{MultimodalOutput, SimInput, Simulator, D_IN, D_S, SIMULATOR_VERSION};
use crate::error::{Error, Result};
use crate::io::{self, read_json, read_matrix, write_json, write_matrix};
use crate::netcore::Tensor2;
use crate::rng;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MIN_SAMPLES: usize = 50;

/// Sampling density over the input cube.
///
/// `Ramp { ratio }` is piecewise constant along coordinate 0: the density on
/// `[0, ½)` is `ratio` times the density on `[½, 1]`. Region counts are
/// stratified (exactly `round(n·ratio/(1+ratio))` points land in the first
/// half); positions inside each region and the other coordinates are uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityProfile {
    Uniform,
    Ramp { ratio: f64 },
}

impl fmt::Display for DensityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityProfile::Uniform => f.write_str("uniform"),
            DensityProfile::Ramp { ratio } => write!(f, "ramp:{ratio}"),
        }
    }
}

impl FromStr for DensityProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "uniform" {
            return Ok(DensityProfile::Uniform);
        }
        let ratio = s
            .strip_prefix("ramp:")
            .and_then(|r| r.parse::<f64>().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown density profile {s:?}")))?;
        let p = DensityProfile::Ramp { ratio };
        p.validate()?;
        Ok(p)
    }
}

impl Serialize for DensityProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DensityProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl DensityProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DensityProfile::Uniform => Ok(()),
            DensityProfile::Ramp { ratio } if ratio.is_finite() && ratio > 0.0 => Ok(()),
            DensityProfile::Ramp { ratio } => Err(Error::InvalidArgument(format!("ramp ratio {ratio} must be > 0"))),
        }
    }

    fn sample_inputs<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let mut xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..D_IN).map(|_| rng.random::<f64>()).collect())
            .collect();
        if let DensityProfile::Ramp { ratio } = *self {
            let n_low = ((n as f64) * ratio / (1.0 + ratio)).round() as usize;
            let mut low: Vec<bool> = (0..n).map(|i| i < n_low).collect();
            low.shuffle(rng);
            for (x, low) in xs.iter_mut().zip(low) {
                // x[0] was drawn on [0, 1); fold it into the assigned half.
                x[0] = if low { 0.5 * x[0] } else { 0.5 + 0.5 * x[0] };
            }
        }
        xs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            validation: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Disjoint and covering `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.validation).chain(&self.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!(
                    "split index {i} repeated or out of range"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("splits do not cover every sample".into()));
        }
        Ok(())
    }
}

/// `manifest.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub simulator_version: u32,
    pub n_samples: usize,
    pub d_in: usize,
    pub d_s: usize,
    pub d_img: usize,
    pub seed: u64,
    pub profile: DensityProfile,
    pub split_fractions: SplitFractions,
    pub splits: Splits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// `n × d_in`
    pub inputs: Tensor2,
    /// `n × d_s`
    pub scalars: Tensor2,
    /// `n × d_img²`, each row a row-major image
    pub images: Tensor2,
}

pub fn generate_dataset(
    n: usize,
    seed: u64,
    profile: DensityProfile,
    fractions: SplitFractions,
    simulator: &Simulator,
) -> Result<Dataset> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("n = {n} < {MIN_SAMPLES}")));
    }
    profile.validate()?;
    if !(fractions.validation >= 0.1 && fractions.test >= 0.1 && fractions.validation + fractions.test < 0.9) {
        return Err(Error::InvalidArgument(format!(
            "validation/test fractions {fractions:?} must each be >= 0.1 and leave a training split"
        )));
    }

    let mut input_rng = rng::substream(seed, 0);
    let xs = profile.sample_inputs(n, &mut input_rng);
    let outs = xs
        .iter()
        .map(|x| simulator.simulate(&SimInput { x: x.clone() }))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, 1));
    let n_val = (fractions.validation * n as f64).ceil() as usize;
    let n_test = (fractions.test * n as f64).ceil() as usize;
    let mut validation = order[..n_val].to_vec();
    let mut test = order[n_val..n_val + n_test].to_vec();
    let mut train = order[n_val + n_test..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();

    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        simulator_version: SIMULATOR_VERSION,
        n_samples: n,
        d_in: D_IN,
        d_s: D_S,
        d_img: simulator.d_img,
        seed,
        profile,
        split_fractions: fractions,
        splits: Splits {
            train,
            validation,
            test,
        },
    };
    let scalars: Vec<&[f64]> = outs.iter().map(|o| o.scalars.as_slice()).collect();
    let images: Vec<&[f64]> = outs.iter().map(|o| o.image.as_slice()).collect();
    Ok(Dataset {
        manifest,
        inputs: Tensor2::from_rows(&xs)?,
        scalars: Tensor2::from_rows(&scalars)?,
        images: Tensor2::from_rows(&images)?,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.n_samples == 0
    }

    pub fn split(&self, split: Split) -> &[usize] {
        self.manifest.splits.get(split)
    }

    pub fn simulator(&self) -> Simulator {
        Simulator {
            d_img: self.manifest.d_img,
        }
    }

    pub fn output(&self, i: usize) -> MultimodalOutput {
        MultimodalOutput {
            scalars: self.scalars.row(i).to_vec(),
            image: self.images.row(i).to_vec(),
            d_img: self.manifest.d_img,
        }
    }

    pub fn input(&self, i: usize) -> SimInput {
        SimInput {
            x: self.inputs.row(i).to_vec(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        write_json(&dir.join("manifest.json"), &self.manifest)?;
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
        write_matrix(
            &dir.join("inputs.csv"),
            &names("x", self.inputs.cols()),
            self.inputs.iter_rows().map(<[f64]>::to_vec),
        )?;
        write_matrix(
            &dir.join("scalars.csv"),
            &names("s", self.scalars.cols()),
            self.scalars.iter_rows().map(<[f64]>::to_vec),
        )?;
        write_matrix(
            &dir.join("images.csv"),
            &names("p", self.images.cols()),
            self.images.iter_rows().map(<[f64]>::to_vec),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != DATASET_FORMAT_VERSION || manifest.simulator_version != SIMULATOR_VERSION {
            return Err(Error::Format {
                path: dir.join("manifest.json"),
                reason: format!(
                    "unsupported format/simulator version {}/{}",
                    manifest.format_version, manifest.simulator_version
                ),
            });
        }
        let read = |name: &str, cols: usize| -> Result<Tensor2> {
            let path = dir.join(name);
            let (_, rows) = read_matrix(&path)?;
            if rows.len() != manifest.n_samples {
                return Err(Error::Format {
                    path,
                    reason: format!("expected {} rows, found {}", manifest.n_samples, rows.len()),
                });
            }
            if rows.iter().any(|r| r.len() != cols) {
                return Err(Error::Format {
                    path,
                    reason: format!("expected {cols} columns"),
                });
            }
            Tensor2::from_rows(&rows)
        };
        let inputs = read("inputs.csv", manifest.d_in)?;
        let scalars = read("scalars.csv", manifest.d_s)?;
        let images = read("images.csv", manifest.d_img * manifest.d_img)?;
        manifest.splits.check_partition(manifest.n_samples)?;
        Ok(Self {
            manifest,
            inputs,
            scalars,
            images,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(n: usize, seed: u64, profile: DensityProfile) -> Dataset {
        generate_dataset(n, seed, profile, SplitFractions::default(), &Simulator::default()).unwrap()
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("uniform".parse::<DensityProfile>().unwrap(), DensityProfile::Uniform);
        assert_eq!(
            "ramp:1.75".parse::<DensityProfile>().unwrap(),
            DensityProfile::Ramp { ratio: 1.75 }
        );
        assert!("ramp:-1".parse::<DensityProfile>().is_err());
        assert!("ramp".parse::<DensityProfile>().is_err());
        assert!("gauss".parse::<DensityProfile>().is_err());
        assert_eq!(DensityProfile::Ramp { ratio: 1.75 }.to_string(), "ramp:1.75");
    }

    #[test]
    fn uniform_means_near_half() {
        let d = gen(1000, 1, DensityProfile::Uniform);
        for c in 0..D_IN {
            let m: f64 = (0..d.len()).map(|i| d.inputs.get(i, c)).sum::<f64>() / d.len() as f64;
            assert!((0.45..=0.55).contains(&m), "coordinate {c}: mean {m}");
        }
    }

    #[test]
    fn ramp_count_ratio() {
        let d = gen(2000, 2, DensityProfile::Ramp { ratio: 1.75 });
        let low = (0..d.len()).filter(|&i| d.inputs.get(i, 0) < 0.5).count();
        let ratio = low as f64 / (d.len() - low) as f64;
        assert!((1.6..=1.9).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn splits_partition_and_sizes() {
        for n in [50, 51, 999, 2000] {
            let d = gen(n, 3, DensityProfile::Uniform);
            d.manifest.splits.check_partition(n).unwrap();
            assert!(d.split(Split::Validation).len() as f64 >= 0.1 * n as f64);
            assert!(d.split(Split::Test).len() as f64 >= 0.1 * n as f64);
        }
    }

    #[test]
    fn too_small_or_bad_fractions() {
        let sim = Simulator::default();
        assert!(generate_dataset(49, 0, DensityProfile::Uniform, SplitFractions::default(), &sim).is_err());
        let bad = SplitFractions {
            validation: 0.05,
            test: 0.1,
        };
        assert!(generate_dataset(100, 0, DensityProfile::Uniform, bad, &sim).is_err());
    }

    #[test]
    fn files_are_byte_identical_and_reload() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        gen(120, 9, DensityProfile::Ramp { ratio: 1.75 })
            .write(a.path())
            .unwrap();
        gen(120, 9, DensityProfile::Ramp { ratio: 1.75 })
            .write(b.path())
            .unwrap();
        for f in ["manifest.json", "inputs.csv", "scalars.csv", "images.csv"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let back = Dataset::load(a.path()).unwrap();
        assert_eq!(back, gen(120, 9, DensityProfile::Ramp { ratio: 1.75 }));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, b"x").unwrap();
        let d = gen(60, 0, DensityProfile::Uniform);
        assert!(matches!(d.write(&file.join("sub")), Err(Error::Io { .. })));
    }
}
