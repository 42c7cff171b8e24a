//! Dense row-major matrix used for every activation, weight and gradient.
//!
//! Vectors are stored as `1 × d` tensors and batches as `n × d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch("Tensor2::from_vec", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::mismatch("Tensor2::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column tensor has no meaningful rows.
        self.data.chunks_exact(self.cols.max(1))
    }

    /// Copies the selected rows, in order, into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Repeats every row `times` times consecutively (row i lands at i*times..(i+1)*times).
    pub fn repeat_rows(&self, times: usize) -> Self {
        let mut data = Vec::with_capacity(self.data.len() * times);
        for r in self.iter_rows() {
            for _ in 0..times {
                data.extend_from_slice(r);
            }
        }
        Self {
            rows: self.rows * times,
            cols: self.cols,
            data,
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_owned()))
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.rows {
            return Err(Error::mismatch("matmul", self.cols, other.rows));
        }
        let mut out = Tensor2::zeros(self.rows, other.cols);
        gemm(
            (self.rows, self.cols, other.cols),
            (&self.data, self.cols as isize, 1),
            (&other.data, other.cols as isize, 1),
            &mut out,
        );
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.rows != other.rows {
            return Err(Error::mismatch("t_matmul", self.rows, other.rows));
        }
        let mut out = Tensor2::zeros(self.cols, other.cols);
        gemm(
            (self.cols, self.rows, other.cols),
            (&self.data, 1, self.cols as isize),
            (&other.data, other.cols as isize, 1),
            &mut out,
        );
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Tensor2) -> Result<Tensor2> {
        if self.cols != other.cols {
            return Err(Error::mismatch("matmul_t", self.cols, other.cols));
        }
        let mut out = Tensor2::zeros(self.rows, other.rows);
        gemm(
            (self.rows, self.cols, other.rows),
            (&self.data, self.cols as isize, 1),
            (&other.data, 1, other.cols as isize),
            &mut out,
        );
        Ok(out)
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row(&mut self, row: &Tensor2) -> Result<()> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::mismatch("add_row", self.cols, row.cols));
        }
        for r in self.data.chunks_exact_mut(self.cols.max(1)) {
            for (v, b) in r.iter_mut().zip(&row.data) {
                *v += b;
            }
        }
        Ok(())
    }

    /// Column sums as a `1 × cols` tensor.
    pub fn sum_rows(&self) -> Tensor2 {
        let mut out = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        Tensor2::row_vector(out)
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], isize, isize),
    (b, rsb, csb): (&[f64], isize, isize),
    out: &mut Tensor2,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && out.data.len() == m * n);
    // SAFETY: strides describe in-bounds m×k, k×n and m×n views of the three
    // buffers, which the callers size from the same dimensions.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor2, b: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(a: &Tensor2) -> Tensor2 {
        let mut out = Tensor2::zeros(a.cols(), a.rows());
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                out.set(j, i, a.get(i, j));
            }
        }
        out
    }

    fn seq(rows: usize, cols: usize, offset: f64) -> Tensor2 {
        let data = (0..rows * cols).map(|i| (i as f64 * 0.37 + offset).sin()).collect();
        Tensor2::from_vec(rows, cols, data).unwrap()
    }

    fn close(a: &Tensor2, b: &Tensor2) -> bool {
        a.rows() == b.rows()
            && a.cols() == b.cols()
            && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let a = seq(5, 3, 0.1);
        let b = seq(3, 4, 0.7);
        assert!(close(&a.matmul(&b).unwrap(), &naive(&a, &b)));

        let at = transpose(&a);
        assert!(close(&at.t_matmul(&b).unwrap(), &naive(&a, &b)));

        let bt = transpose(&b);
        assert!(close(&a.matmul_t(&bt).unwrap(), &naive(&a, &b)));
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor2::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(seq(2, 3, 0.0).matmul(&seq(2, 3, 0.0)).is_err());
        assert!(Tensor2::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn repeat_and_select() {
        let a = Tensor2::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let r = a.repeat_rows(3);
        assert_eq!(r.rows(), 6);
        assert_eq!(r.row(2), &[1.0, 2.0]);
        assert_eq!(r.row(3), &[3.0, 4.0]);
        assert_eq!(a.select_rows(&[1, 1, 0]).row(1), &[3.0, 4.0]);
        assert_eq!(a.sum_rows().data(), &[4.0, 6.0]);
    }

    #[test]
    fn non_finite_is_reported() {
        let mut a = Tensor2::zeros(1, 2);
        assert!(a.check_finite("x").is_ok());
        a.set(0, 1, f64::NAN);
        assert!(matches!(a.check_finite("x"), Err(Error::NonFinite(_))));
    }
}
