//! Iso-brightness contours as radius-per-azimuth about the brightness centroid.
//!
//! The contour at `fraction × peak` is traced along `n_angles` rays. Each ray
//! samples the bilinearly interpolated image at a fine step and keeps the
//! outermost downward crossing of the level, refined by linear
//! interpolation. A ray with no crossing has radius 0; a ray that leaves the
//! image while still above the level is clipped at the image edge. Shapes
//! are assumed star-convex about the centroid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt, Table};
use crate::stats;

pub const DEFAULT_FRACTION: f64 = 0.17;
pub const DEFAULT_N_ANGLES: usize = 64;
const RAY_STEP: f64 = 0.02;

/// Square image stored row-major; pixel `(col, row)` sits at `(col, row)`.
#[derive(Debug, Clone, Copy)]
pub struct ImageView<'a> {
    pub pixels: &'a [f64],
    pub side: usize,
}

impl<'a> ImageView<'a> {
    pub fn new(pixels: &'a [f64], side: usize) -> Result<Self> {
        if side < 2 || pixels.len() != side * side {
            return Err(Error::mismatch("image pixels", side * side, pixels.len()));
        }
        Ok(Self { pixels, side })
    }

    fn at(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    pub fn peak(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation; `None` outside `[0, side − 1]²`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let max = (self.side - 1) as f64;
        if !(0.0..=max).contains(&x) || !(0.0..=max).contains(&y) {
            return None;
        }
        let c0 = (x.floor() as usize).min(self.side - 2);
        let r0 = (y.floor() as usize).min(self.side - 2);
        let (fx, fy) = (x - c0 as f64, y - r0 as f64);
        let top = self.at(c0, r0) * (1.0 - fx) + self.at(c0 + 1, r0) * fx;
        let bottom = self.at(c0, r0 + 1) * (1.0 - fx) + self.at(c0 + 1, r0 + 1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Brightness-weighted centroid `(x, y)`; negative pixels get zero weight.
    pub fn centroid(&self) -> Result<(f64, f64)> {
        let (mut w, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for row in 0..self.side {
            for col in 0..self.side {
                let v = self.at(col, row).max(0.0);
                w += v;
                sx += v * col as f64;
                sy += v * row as f64;
            }
        }
        if !(w > 0.0) {
            return Err(Error::InvalidArgument("image has no positive brightness".into()));
        }
        Ok((sx / w, sy / w))
    }
}

pub fn angle(k: usize, n_angles: usize) -> f64 {
    2.0 * PI * k as f64 / n_angles as f64
}

/// Radius of the `fraction`-of-peak contour along each of `n_angles` rays.
pub fn extract_contour(image: ImageView<'_>, fraction: f64, n_angles: usize) -> Result<Vec<f64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "contour fraction {fraction} gives an empty level set"
        )));
    }
    if n_angles == 0 {
        return Err(Error::InvalidArgument("n_angles must be > 0".into()));
    }
    let peak = image.peak();
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("image peak must be > 0".into()));
    }
    let level = fraction * peak;
    let (cx, cy) = image.centroid()?;
    Ok((0..n_angles)
        .map(|k| {
            let (s, c) = angle(k, n_angles).sin_cos();
            let mut radius = 0.0;
            let mut prev = match image.sample(cx, cy) {
                Some(v) => (0.0, v),
                None => return 0.0,
            };
            let mut i = 1;
            loop {
                let r = i as f64 * RAY_STEP;
                match image.sample(cx + r * c, cy + r * s) {
                    Some(v) => {
                        if prev.1 >= level && v < level {
                            let t = (prev.1 - level) / (prev.1 - v);
                            radius = prev.0 + t * (r - prev.0);
                        }
                        prev = (r, v);
                    }
                    None => {
                        if prev.1 >= level {
                            radius = prev.0;
                        }
                        break;
                    }
                }
                i += 1;
            }
            radius
        })
        .collect())
}

/// Per-image contours plus per-angle mean and sample sd of the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub fraction: f64,
    pub n_angles: usize,
    pub radii: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ContourSet {
    pub fn from_images<'a>(
        images: impl IntoIterator<Item = ImageView<'a>>,
        fraction: f64,
        n_angles: usize,
    ) -> Result<Self> {
        let radii = images
            .into_iter()
            .map(|im| extract_contour(im, fraction, n_angles))
            .collect::<Result<Vec<_>>>()?;
        Self::from_radii(radii, fraction, n_angles)
    }

    pub fn from_radii(radii: Vec<Vec<f64>>, fraction: f64, n_angles: usize) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::InvalidArgument("contour set needs at least one image".into()));
        }
        if let Some(r) = radii.iter().find(|r| r.len() != n_angles) {
            return Err(Error::mismatch("contour angles", n_angles, r.len()));
        }
        let (mean, sd) = (0..n_angles)
            .map(|k| {
                let col: Vec<f64> = radii.iter().map(|r| r[k]).collect();
                (stats::mean(&col), stats::sample_sd(&col))
            })
            .unzip();
        Ok(Self {
            fraction,
            n_angles,
            radii,
            mean,
            sd,
        })
    }

    pub fn max_sd(&self) -> f64 {
        self.sd.iter().copied().fold(0.0, f64::max)
    }

    /// Coefficient of variation of the per-angle sd across angles.
    pub fn sd_azimuthal_cv(&self) -> f64 {
        let m = stats::mean(&self.sd);
        if m > 0.0 {
            stats::sample_sd(&self.sd) / m
        } else {
            0.0
        }
    }

    /// `angle, mean_radius, sd_radius`, one row per angle.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["angle", "mean_radius", "sd_radius"]);
        for k in 0..self.n_angles {
            t.push(vec![fmt(angle(k, self.n_angles)), fmt(self.mean[k]), fmt(self.sd[k])]);
        }
        t
    }

    /// First `limit` individual contours: `sample, angle, radius`.
    pub fn samples_table(&self, limit: usize) -> Table {
        let mut t = Table::new(["sample", "angle", "radius"]);
        for (i, r) in self.radii.iter().take(limit).enumerate() {
            for (k, v) in r.iter().enumerate() {
                t.push(vec![i.to_string(), fmt(angle(k, self.n_angles)), fmt(*v)]);
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blob(side: usize, cx: f64, cy: f64, sa: f64, sb: f64, theta: f64) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        let mut v = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                let (u, w) = (col as f64 - cx, row as f64 - cy);
                let a = u * c + w * s;
                let b = -u * s + w * c;
                v.push((-0.5 * (a * a / (sa * sa) + b * b / (sb * sb))).exp());
            }
        }
        v
    }

    /// Independent route: upsample on a dense grid, keep every point at or
    /// above the level, and take the farthest such point within each
    /// angular sector.
    fn brute_force(image: ImageView<'_>, fraction: f64, n_angles: usize) -> Vec<f64> {
        let level = fraction * image.peak();
        let (cx, cy) = image.centroid().unwrap();
        let mut best = vec![0.0f64; n_angles];
        let n = (image.side - 1) * 40;
        let half_width = PI / n_angles as f64;
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (i as f64 / 40.0, j as f64 / 40.0);
                if image.sample(x, y).unwrap() < level {
                    continue;
                }
                let (dx, dy) = (x - cx, y - cy);
                let phi = dy.atan2(dx).rem_euclid(2.0 * PI);
                let k = ((phi / (2.0 * PI) * n_angles as f64).round() as usize) % n_angles;
                let mut delta = (phi - angle(k, n_angles)).abs();
                delta = delta.min(2.0 * PI - delta);
                if delta <= half_width {
                    best[k] = best[k].max(dx.hypot(dy));
                }
            }
        }
        best
    }

    #[test]
    fn isotropic_gaussian_radius() {
        let img = blob(24, 11.5, 11.5, 3.0, 3.0, 0.0);
        let r = extract_contour(ImageView::new(&img, 24).unwrap(), 0.17, 64).unwrap();
        let expected = 3.0 * (2.0 * (1.0f64 / 0.17).ln()).sqrt();
        assert!((expected - 5.65).abs() < 0.01);
        for v in &r {
            assert!((v - expected).abs() < 0.5, "radius {v} vs {expected}");
        }
    }

    #[test]
    fn isotropic_gaussian_on_default_grid() {
        let img = blob(16, 7.5, 7.5, 3.0, 3.0, 0.0);
        let r = extract_contour(ImageView::new(&img, 16).unwrap(), 0.17, 64).unwrap();
        let expected = 3.0 * (2.0 * (1.0f64 / 0.17).ln()).sqrt();
        assert!(r.iter().all(|v| (v - expected).abs() < 0.5), "{r:?}");
    }

    #[test]
    fn elliptical_ratio() {
        let img = blob(32, 15.5, 15.5, 4.0, 2.0, 0.3);
        let r = extract_contour(ImageView::new(&img, 32).unwrap(), 0.17, 64).unwrap();
        let max = r.iter().copied().fold(0.0, f64::max);
        let min = r.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((max / min - 2.0).abs() < 0.2, "ratio {}", max / min);
    }

    #[test]
    fn full_fraction_collapses() {
        let img = blob(16, 7.3, 8.1, 2.0, 2.0, 0.0);
        let r = extract_contour(ImageView::new(&img, 16).unwrap(), 1.0, 16).unwrap();
        assert!(r.iter().all(|&v| v < 0.05), "{r:?}");
    }

    #[test]
    fn invalid_inputs() {
        let img = blob(16, 7.5, 7.5, 2.0, 2.0, 0.0);
        let view = ImageView::new(&img, 16).unwrap();
        assert!(extract_contour(view, 1.2, 8).is_err());
        assert!(extract_contour(view, 0.0, 8).is_err());
        let zeros = vec![0.0; 256];
        assert!(extract_contour(ImageView::new(&zeros, 16).unwrap(), 0.17, 8).is_err());
        assert!(ImageView::new(&zeros, 15).is_err());
    }

    #[test]
    fn set_statistics() {
        let img = blob(16, 7.5, 7.5, 2.5, 2.5, 0.0);
        let set = ContourSet::from_images(vec![ImageView::new(&img, 16).unwrap(); 3], 0.17, 32).unwrap();
        assert_eq!(set.radii.len(), 3);
        assert!(set.sd.iter().all(|&s| s == 0.0));
        assert_eq!(set.summary_table().rows.len(), 32);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn agrees_with_dense_scan(
            cx in 6.0f64..10.0, cy in 6.0f64..10.0,
            sa in 1.5f64..3.0, ratio in 1.0f64..1.6, theta in 0.0f64..3.1,
        ) {
            let img = blob(16, cx, cy, sa, sa / ratio, theta);
            let view = ImageView::new(&img, 16).unwrap();
            let fast = extract_contour(view, 0.17, 32).unwrap();
            let slow = brute_force(view, 0.17, 32);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1.0, "ray {a} scan {b}");
                prop_assert!(*a >= 0.0);
            }
        }
    }
}
