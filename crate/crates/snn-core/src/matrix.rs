//! Dense row-major `f64` matrix plus the bounded synapse matrix built on it.

use rand::Rng;

use crate::error::{Result, SnnError};

/// Dense row-major matrix of `f64`.
///
/// Small by design: the engine only needs construction, element access,
/// row slices, and a few reductions. Rows index the leading dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Matrix filled with one value.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Adopt an existing row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SnnError::Dimension(format!(
                "buffer of {} values cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, delta: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] += delta;
    }

    /// Immutable view of one row.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Mutable view of one row.
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// One column, copied out.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Flat row-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Flat mutable row-major view of all values.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Smallest and largest element; `None` for an empty matrix.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        if self.data.is_empty() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product `self (r x k) * other (k x c)`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(SnnError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(r);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }
}

/// Weight matrix between two layers, with hard bounds.
///
/// Rows are presynaptic neurons, columns are postsynaptic neurons, so
/// `weights.get(i, j)` is the synapse from input `i` to output `j`.
/// Every mutation goes through [`SynapseMatrix::nudge`] or a clamp so the
/// bounds invariant `w_min <= w <= w_max` holds at all times.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseMatrix {
    pub weights: Matrix,
    pub w_min: f64,
    pub w_max: f64,
}

impl SynapseMatrix {
    /// Matrix with every weight at `value` (clamped into bounds).
    pub fn filled(pre: usize, post: usize, value: f64, w_min: f64, w_max: f64) -> Result<Self> {
        Self::check_bounds(w_min, w_max)?;
        Ok(SynapseMatrix {
            weights: Matrix::filled(pre, post, value.clamp(w_min, w_max)),
            w_min,
            w_max,
        })
    }

    /// Adopt a prebuilt weight matrix, verifying it respects the bounds.
    pub fn from_matrix(weights: Matrix, w_min: f64, w_max: f64) -> Result<Self> {
        Self::check_bounds(w_min, w_max)?;
        if let Some((lo, hi)) = weights.min_max() {
            if lo < w_min || hi > w_max {
                return Err(SnnError::InvalidParameter(format!(
                    "weights span [{lo}, {hi}] outside bounds [{w_min}, {w_max}]"
                )));
            }
        }
        Ok(SynapseMatrix {
            weights,
            w_min,
            w_max,
        })
    }

    /// Uniform random weights in `[init_lo, init_hi]`.
    pub fn random(
        pre: usize,
        post: usize,
        init_lo: f64,
        init_hi: f64,
        w_min: f64,
        w_max: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::check_bounds(w_min, w_max)?;
        if !(init_lo <= init_hi && init_lo >= w_min && init_hi <= w_max) {
            return Err(SnnError::InvalidParameter(format!(
                "init range [{init_lo}, {init_hi}] must sit inside weight bounds [{w_min}, {w_max}]"
            )));
        }
        let weights = Matrix::from_fn(pre, post, |_, _| rng.gen_range(init_lo..=init_hi));
        Ok(SynapseMatrix {
            weights,
            w_min,
            w_max,
        })
    }

    fn check_bounds(w_min: f64, w_max: f64) -> Result<()> {
        if !(w_min.is_finite() && w_max.is_finite() && w_min < w_max) {
            return Err(SnnError::InvalidParameter(format!(
                "weight bounds must be finite with w_min < w_max, got [{w_min}, {w_max}]"
            )));
        }
        Ok(())
    }

    pub fn pre_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn post_count(&self) -> usize {
        self.weights.cols()
    }

    /// Add `delta` to one weight and clamp the result into bounds.
    #[inline]
    pub fn nudge(&mut self, pre: usize, post: usize, delta: f64) {
        let w = (self.weights.get(pre, post) + delta).clamp(self.w_min, self.w_max);
        self.weights.set(pre, post, w);
    }

    /// True when every weight lies inside `[w_min, w_max]`.
    pub fn in_bounds(&self) -> bool {
        self.weights
            .values()
            .iter()
            .all(|&w| w >= self.w_min && w <= self.w_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Matrix::from_vec(2, 3, vec![0.0; 5]).is_err());
        assert!(Matrix::from_vec(2, 3, vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_small_known_product() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn nudge_clamps_to_bounds() {
        let mut syn = SynapseMatrix::filled(1, 1, 0.5, -1.0, 1.0).unwrap();
        syn.nudge(0, 0, 10.0);
        assert_eq!(syn.weights.get(0, 0), 1.0);
        syn.nudge(0, 0, -10.0);
        assert_eq!(syn.weights.get(0, 0), -1.0);
        assert!(syn.in_bounds());
    }

    #[test]
    fn random_init_respects_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let syn = SynapseMatrix::random(20, 4, 0.84, 1.12, -1.2, 1.4, &mut rng).unwrap();
        let (lo, hi) = syn.weights.min_max().unwrap();
        assert!(lo >= 0.84 && hi <= 1.12);
    }

    #[test]
    fn random_init_rejects_range_outside_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert!(SynapseMatrix::random(2, 2, 0.5, 2.0, -1.0, 1.4, &mut rng).is_err());
    }
}
