use rand::Rng;

use crate::error::{Error, Result};

/// Binary keep/drop mask for one layer input, using the inverted-dropout
/// convention: kept activations are multiplied by `1 / keep_rate`.
///
/// A mask has either one row (shared by every row of the batch it gates) or
/// exactly as many rows as the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep_rate: f64,
    rows: usize,
    width: usize,
    mask: Vec<f64>,
}

pub(crate) fn validate_keep_rate(keep_rate: f64) -> Result<()> {
    if keep_rate > 0.0 && keep_rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidKeepRate(keep_rate))
    }
}

/// Single-row mask; each entry is 1 with probability `keep_rate`.
pub fn sample_mask<R: Rng + ?Sized>(keep_rate: f64, width: usize, rng: &mut R) -> Result<DropoutMask> {
    sample_mask_rows(keep_rate, 1, width, rng)
}

/// Independent mask per batch row.
pub fn sample_mask_rows<R: Rng + ?Sized>(
    keep_rate: f64,
    rows: usize,
    width: usize,
    rng: &mut R,
) -> Result<DropoutMask> {
    validate_keep_rate(keep_rate)?;
    let mask = (0..rows * width)
        .map(|_| if rng.random::<f64>() < keep_rate { 1.0 } else { 0.0 })
        .collect();
    Ok(DropoutMask {
        keep_rate,
        rows,
        width,
        mask,
    })
}

impl DropoutMask {
    /// All-ones mask; scaling is still `1 / keep_rate`.
    pub fn ones(keep_rate: f64, width: usize) -> Result<Self> {
        validate_keep_rate(keep_rate)?;
        Ok(Self {
            keep_rate,
            rows: 1,
            width,
            mask: vec![1.0; width],
        })
    }

    /// Builds a mask from explicit 0/1 entries.
    pub fn from_entries(keep_rate: f64, rows: usize, width: usize, entries: Vec<f64>) -> Result<Self> {
        validate_keep_rate(keep_rate)?;
        if entries.len() != rows * width {
            return Err(Error::mismatch(
                "DropoutMask::from_entries",
                rows * width,
                entries.len(),
            ));
        }
        if entries.iter().any(|&e| e != 0.0 && e != 1.0) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            keep_rate,
            rows,
            width,
            mask: entries,
        })
    }

    #[inline]
    pub fn keep_rate(&self) -> f64 {
        self.keep_rate
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        1.0 / self.keep_rate
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn entries(&self) -> &[f64] {
        &self.mask
    }

    pub fn fraction_kept(&self) -> f64 {
        if self.mask.is_empty() {
            return 1.0;
        }
        self.mask.iter().sum::<f64>() / self.mask.len() as f64
    }

    pub(crate) fn check_shape(&self, batch_rows: usize, width: usize) -> Result<()> {
        if self.width != width {
            return Err(Error::mismatch("dropout mask width", width, self.width));
        }
        if self.rows != 1 && self.rows != batch_rows {
            return Err(Error::mismatch("dropout mask rows", batch_rows, self.rows));
        }
        Ok(())
    }

    /// Multiplies `data` (a `batch_rows × width` row-major block) by mask·scale.
    pub(crate) fn apply(&self, data: &mut [f64]) {
        let scale = self.scale();
        for (r, row) in data.chunks_exact_mut(self.width.max(1)).enumerate() {
            let m = if self.rows == 1 {
                &self.mask[..]
            } else {
                &self.mask[r * self.width..(r + 1) * self.width]
            };
            for (v, &k) in row.iter_mut().zip(m) {
                *v *= k * scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn keep_rate_one_is_all_ones() {
        let m = sample_mask(1.0, 1000, &mut seeded(1)).unwrap();
        assert!(m.entries().iter().all(|&e| e == 1.0));
        assert_eq!(m.scale(), 1.0);
    }

    #[test]
    fn fraction_of_ones_concentrates() {
        // 3σ binomial band: 0.9 ± 3·sqrt(0.09/1e5) ≈ 0.9 ± 0.00285
        let m = sample_mask(0.9, 100_000, &mut seeded(11)).unwrap();
        let f = m.fraction_kept();
        assert!((0.897..=0.903).contains(&f), "fraction {f}");
    }

    #[test]
    fn same_seed_same_mask() {
        let a = sample_mask(0.7, 64, &mut seeded(5)).unwrap();
        let b = sample_mask(0.7, 64, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_keep_rates() {
        for k in [0.0, -0.1, 1.0001, f64::NAN] {
            assert!(matches!(
                sample_mask(k, 4, &mut seeded(0)),
                Err(Error::InvalidKeepRate(_))
            ));
        }
    }

    #[test]
    fn apply_scales_kept_entries() {
        let m = DropoutMask::from_entries(0.5, 1, 3, vec![1.0, 0.0, 1.0]).unwrap();
        let mut x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        m.apply(&mut x);
        assert_eq!(x, vec![2.0, 0.0, 6.0, 8.0, 0.0, 12.0]);
    }
}
