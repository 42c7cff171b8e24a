//! Analytic stand-in for an expensive multimodal simulation code.
//!
//! Maps a point `x ∈ [0, 1]⁴` to eight scalar diagnostics and a square image
//! of a tilted, elongated Gaussian emission blob. The formulas below are
//! version [`SIMULATOR_VERSION`]; any change to them changes every generated
//! dataset and must bump the version.
//!
//! Scalars (`x = [x0, x1, x2, x3]`):
//!
//! | channel | formula |
//! |---|---|
//! | s0 | `1.2·exp(−4(x0−½)²) + 0.5·x1·x2 + 0.3·sin(π·x3)` |
//! | s1 | `0.6 + 0.8·x1 + 0.3·x2² + 0.25·sin(π·x0) + 0.15·x3` |
//! | s2 | `s1 + 0.02·sin(4π·x0)` (tracks s1; the correlated pair) |
//! | s3 | `exp(0.6·x2 − 0.4·x3)` |
//! | s4 | `x0·x1 + 0.2·cos(3·x2)` |
//! | s5 | `tanh(2(x3 − ½)) + 0.1·x0` |
//! | s6 | `((x1 + x2 + x3)/3)²` |
//! | s7 | `sin(π·x0·x3) + 0.3·x1` |
//!
//! Image, in pixel units of a 16-pixel reference grid scaled by `d_img/16`
//! (pixel `(col, row)` sits at coordinate `(col, row)`):
//!
//! - centre `cx = 6 + 3·x3` (x3 is the "position" input), `cy = 7.5 + 1.5(x1 − ½)`
//! - width `σ = 1.6 + 0.8·x2`, elongation `k = 1 + 0.5·x1`, axes `σ√k` and `σ/√k`
//! - orientation `θ = 0.8π(x0 − ½)`
//! - amplitude `A = 1 + 0.5·x0 + 0.3·sin(π·x2)`

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIMULATOR_VERSION: u32 = 1;
pub const D_IN: usize = 4;
pub const D_S: usize = 8;
pub const DEFAULT_D_IMG: usize = 16;

/// Index of the scalar that tracks [`CORRELATED_PAIR`]`.0` closely.
pub const CORRELATED_PAIR: (usize, usize) = (1, 2);
/// Input coordinate that moves the image blob horizontally.
pub const POSITION_INPUT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimInput {
    pub x: Vec<f64>,
}

impl SimInput {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let input = Self { x };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != D_IN {
            return Err(Error::mismatch("simulator input", D_IN, self.x.len()));
        }
        for (index, &value) in self.x.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { index, value });
            }
        }
        Ok(())
    }
}

/// One simulation's outputs: scalar diagnostics plus a `d_img × d_img` image
/// stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalOutput {
    pub scalars: Vec<f64>,
    pub image: Vec<f64>,
    pub d_img: usize,
}

impl MultimodalOutput {
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.image[row * self.d_img + col]
    }

    pub fn image_max(&self) -> f64 {
        self.image.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `scalars ∥ image` as one flat vector.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.scalars.clone();
        v.extend_from_slice(&self.image);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Simulator {
    pub d_img: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Self { d_img: DEFAULT_D_IMG }
    }
}

impl Simulator {
    pub fn new(d_img: usize) -> Result<Self> {
        if d_img < 8 {
            return Err(Error::InvalidArgument(format!("image size {d_img} < 8")));
        }
        Ok(Self { d_img })
    }

    pub fn d_y(&self) -> usize {
        D_S + self.d_img * self.d_img
    }

    pub fn simulate(&self, input: &SimInput) -> Result<MultimodalOutput> {
        input.validate()?;
        let x = &input.x;
        Ok(MultimodalOutput {
            scalars: scalars(x),
            image: self.image(x),
            d_img: self.d_img,
        })
    }

    fn image(&self, x: &[f64]) -> Vec<f64> {
        let scale = self.d_img as f64 / DEFAULT_D_IMG as f64;
        let cx = (6.0 + 3.0 * x[3]) * scale;
        let cy = (7.5 + 1.5 * (x[1] - 0.5)) * scale;
        let sigma = (1.6 + 0.8 * x[2]) * scale;
        let k = 1.0 + 0.5 * x[1];
        let (sa, sb) = (sigma * k.sqrt(), sigma / k.sqrt());
        let theta = 0.8 * PI * (x[0] - 0.5);
        let amp = 1.0 + 0.5 * x[0] + 0.3 * (PI * x[2]).sin();
        let (s, c) = theta.sin_cos();

        let n = self.d_img;
        let mut img = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let u = col as f64 - cx;
                let v = row as f64 - cy;
                let a = u * c + v * s;
                let b = -u * s + v * c;
                img.push(amp * (-0.5 * (a * a / (sa * sa) + b * b / (sb * sb))).exp());
            }
        }
        img
    }
}

fn scalars(x: &[f64]) -> Vec<f64> {
    let (x0, x1, x2, x3) = (x[0], x[1], x[2], x[3]);
    let s1 = 0.6 + 0.8 * x1 + 0.3 * x2 * x2 + 0.25 * (PI * x0).sin() + 0.15 * x3;
    vec![
        1.2 * (-4.0 * (x0 - 0.5).powi(2)).exp() + 0.5 * x1 * x2 + 0.3 * (PI * x3).sin(),
        s1,
        s1 + 0.02 * (4.0 * PI * x0).sin(),
        (0.6 * x2 - 0.4 * x3).exp(),
        x0 * x1 + 0.2 * (3.0 * x2).cos(),
        (2.0 * (x3 - 0.5)).tanh() + 0.1 * x0,
        ((x1 + x2 + x3) / 3.0).powi(2),
        (PI * x0 * x3).sin() + 0.3 * x1,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::stats::pearson;
    use rand::Rng;

    fn random_inputs(n: usize, seed: u64) -> Vec<SimInput> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| SimInput::new((0..D_IN).map(|_| rng.random::<f64>()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn simulate_is_pure() {
        let sim = Simulator::default();
        let x = SimInput::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        assert_eq!(sim.simulate(&x).unwrap(), sim.simulate(&x).unwrap());
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(matches!(
            SimInput::new(vec![0.2, 1.1, 0.0, 0.0]),
            Err(Error::OutOfDomain { index: 1, .. })
        ));
        assert!(SimInput::new(vec![0.2]).is_err());
    }

    #[test]
    fn correlated_pair_over_uniform_draws() {
        let sim = Simulator::default();
        let outs: Vec<_> = random_inputs(1000, 3)
            .iter()
            .map(|x| sim.simulate(x).unwrap())
            .collect();
        let a: Vec<f64> = outs.iter().map(|o| o.scalars[CORRELATED_PAIR.0]).collect();
        let b: Vec<f64> = outs.iter().map(|o| o.scalars[CORRELATED_PAIR.1]).collect();
        let r = pearson(&a, &b);
        assert!(r >= 0.95, "r = {r}");
    }

    #[test]
    fn images_are_nonnegative_with_positive_peak() {
        let sim = Simulator::default();
        for x in random_inputs(200, 4) {
            let out = sim.simulate(&x).unwrap();
            assert_eq!(out.image.len(), 256);
            assert!(out.image.iter().all(|&p| p >= 0.0));
            assert!(out.image_max() > 0.0);
        }
    }

    #[test]
    fn peak_column_tracks_position_input() {
        let sim = Simulator::default();
        let mut cols = Vec::new();
        for i in 0..=50 {
            let mut x = vec![0.5; D_IN];
            x[POSITION_INPUT] = i as f64 / 50.0;
            let out = sim.simulate(&SimInput::new(x).unwrap()).unwrap();
            let argmax = (0..out.image.len())
                .max_by(|&a, &b| out.image[a].total_cmp(&out.image[b]))
                .unwrap();
            cols.push(argmax % out.d_img);
        }
        assert!(cols.windows(2).all(|w| w[1] >= w[0]), "{cols:?}");
        assert!(cols[50] > cols[0]);
    }
}
