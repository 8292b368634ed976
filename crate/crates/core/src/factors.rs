//! Dense nonnegative factor matrices and the bilinear recommendation score.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Dense nonnegative real matrix holding user preferences (U x K) or item
/// attributes (I x K). Stored row-major so the factor axis is the fast one.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    values: Array2<f64>,
}

impl FactorMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "factor matrix dimensions must be positive".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "factor entries must be finite and nonnegative, found {v}"
            )));
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().to_owned()
        };
        Ok(Self { values })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let arr = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::InvalidArgument(format!("bad factor shape: {e}")))?;
        Self::new(arr)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.values.row(r)
    }

    /// Contiguous slice of row `r` (guaranteed by the standard layout).
    pub fn row_slice(&self, r: usize) -> &[f64] {
        self.values
            .row(r)
            .to_slice()
            .expect("rows are contiguous in standard layout")
    }

    pub fn min_entry(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Fixed-order inner product; every matrix kernel in the crate goes through
/// this so results do not depend on thread count or backend.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Expected interaction scores `[W H^T]_ui = sum_k W_uk H_ik`.
///
/// `w_mean` is U x K and `h_mean` is I x K; the output is U x I and
/// nonnegative. Means of a fitted posterior or ML factors both qualify.
pub fn predict_scores(w_mean: &FactorMatrix, h_mean: &FactorMatrix) -> Result<Array2<f64>> {
    if w_mean.cols() != h_mean.cols() {
        return Err(Error::InvalidArgument(format!(
            "factor dimension mismatch: W has K={}, H has K={}",
            w_mean.cols(),
            h_mean.cols()
        )));
    }
    let (n_users, n_items) = (w_mean.rows(), h_mean.rows());
    let mut out = Array2::zeros((n_users, n_items));
    for u in 0..n_users {
        let wu = w_mean.row_slice(u);
        for i in 0..n_items {
            out[[u, i]] = dot(wu, h_mean.row_slice(i));
        }
    }
    Ok(out)
}

/// One row of [`predict_scores`]: the score of every item for `user`.
pub fn predict_user_scores(
    w_mean: &FactorMatrix,
    h_mean: &FactorMatrix,
    user: usize,
) -> Result<Vec<f64>> {
    if w_mean.cols() != h_mean.cols() {
        return Err(Error::InvalidArgument(format!(
            "factor dimension mismatch: W has K={}, H has K={}",
            w_mean.cols(),
            h_mean.cols()
        )));
    }
    if user >= w_mean.rows() {
        return Err(Error::InvalidArgument(format!(
            "user {user} out of range for {} rows",
            w_mean.rows()
        )));
    }
    let wu = w_mean.row_slice(user);
    Ok((0..h_mean.rows())
        .map(|i| dot(wu, h_mean.row_slice(i)))
        .collect())
}
