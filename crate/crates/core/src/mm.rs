//! Maximum-likelihood NBMF by alternating multiplicative
//! majorization-minimization updates.
//!
//! Each half-step multiplies the current factor elementwise by a ratio of
//! positive sums, so strictly positive inputs stay strictly positive and the
//! data-fitting cost never increases.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counts::SparseCountMatrix;
use crate::divergence::objective;
use crate::error::{Error, Result};
use crate::factors::{dot, FactorMatrix};
use crate::trace::FitTrace;

#[derive(Debug, Clone)]
pub struct MmConfig {
    pub k: usize,
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    /// Factors start uniform on `(0.5, 1.5) * init_scale`; `None` derives
    /// `sqrt(mean(Y)/k)` so the initial product sits near the data scale.
    pub init_scale: Option<f64>,
}

impl MmConfig {
    pub fn new(k: usize, alpha: f64) -> Self {
        Self {
            k,
            alpha,
            max_iters: 1000,
            rel_tol: 1e-5,
            seed: 0,
            init_scale: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be strictly positive, got {}",
                self.alpha
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "init_scale must be strictly positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MmResult {
    pub w: FactorMatrix,
    pub h: FactorMatrix,
    pub trace: FitTrace,
    pub converged: bool,
}

/// One multiplicative update of the item factors given fixed `w`:
///
/// `h_ik = hbar_ik * [sum_u (y_ui / p_ui) w_uk] / [sum_u ((y_ui+alpha)/(p_ui+alpha)) w_uk]`
///
/// with `p = W Hbar^T`. The numerator runs over the nonzeros only; the
/// denominator runs over every user.
pub fn update_h(
    y: &SparseCountMatrix,
    w: &FactorMatrix,
    h_bar: &FactorMatrix,
    alpha: f64,
) -> Result<FactorMatrix> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be strictly positive, got {alpha}"
        )));
    }
    let (n_users, n_items) = (y.n_users(), y.n_items());
    let k = w.cols();
    if w.rows() != n_users || h_bar.rows() != n_items || h_bar.cols() != k {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: Y is {}x{}, W is {}x{}, Hbar is {}x{}",
            n_users,
            n_items,
            w.rows(),
            w.cols(),
            h_bar.rows(),
            h_bar.cols()
        )));
    }
    if !(w.min_entry() > 0.0) || !(h_bar.min_entry() > 0.0) {
        return Err(Error::InvalidArgument(
            "multiplicative updates require strictly positive factors".into(),
        ));
    }

    // p = W Hbar^T, then ratio r_ui = (y_ui + alpha)/(p_ui + alpha) built from
    // the dense zero-count value plus sparse corrections.
    let mut p = Array2::<f64>::zeros((n_users, n_items));
    p.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n_items)
        .enumerate()
        .try_for_each(|(u, row)| {
            let wu = w.row_slice(u);
            for (i, slot) in row.iter_mut().enumerate() {
                let v = dot(wu, h_bar.row_slice(i));
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(
                        "update_h",
                        format!("predicted mean at ({u}, {i}) is {v}"),
                    ));
                }
                *slot = v;
            }
            Ok(())
        })?;
    let mut ratio = p.mapv(|v| alpha / (v + alpha));
    for t in y.entries() {
        ratio[[t.user, t.item]] += t.count as f64 / (p[[t.user, t.item]] + alpha);
    }

    let by_item = y.by_item();
    let mut out = Array2::<f64>::zeros((n_items, k));
    out.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(k)
        .enumerate()
        .try_for_each(|(i, row)| {
            let mut num = vec![0.0; k];
            for &(u, c) in &by_item[i] {
                let coef = c as f64 / p[[u, i]];
                let wu = w.row_slice(u);
                for (n, wv) in num.iter_mut().zip(wu) {
                    *n += coef * wv;
                }
            }
            let mut den = vec![0.0; k];
            for u in 0..n_users {
                let r = ratio[[u, i]];
                let wu = w.row_slice(u);
                for (d, wv) in den.iter_mut().zip(wu) {
                    *d += r * wv;
                }
            }
            for (kk, slot) in row.iter_mut().enumerate() {
                let d = den[kk];
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::domain(
                        "update_h",
                        format!("denominator for item {i} is {d}"),
                    ));
                }
                *slot = h_bar.values()[[i, kk]] * num[kk] / d;
            }
            Ok(())
        })?;
    FactorMatrix::new(out)
}

/// Mirror of [`update_h`] for the user factors, obtained by transposition:
/// fitting `Y ~ W H^T` is the same problem as `Y^T ~ H W^T`.
pub fn update_w(
    y: &SparseCountMatrix,
    w_bar: &FactorMatrix,
    h: &FactorMatrix,
    alpha: f64,
) -> Result<FactorMatrix> {
    update_h(&y.transpose(), h, w_bar, alpha)
}

/// Alternating block descent: W then H each outer iteration, objective
/// recorded after both, until the relative decrease falls below
/// `config.rel_tol` or `config.max_iters` is hit.
pub fn fit_mm(y: &SparseCountMatrix, config: &MmConfig) -> Result<MmResult> {
    config.validate()?;
    if y.nnz() == 0 {
        return Err(Error::InvalidArgument(
            "cannot fit an all-zero count matrix".into(),
        ));
    }
    let k = config.k;
    let scale = match config.init_scale {
        Some(s) => s,
        None => (y.mean() / k as f64).sqrt(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows: usize| -> FactorMatrix {
        let data: Vec<f64> = (0..rows * k)
            .map(|_| rng.random_range(0.5..1.5) * scale)
            .collect();
        FactorMatrix::from_vec(rows, k, data).expect("positive initialization")
    };
    let mut w = draw(y.n_users());
    let mut h = draw(y.n_items());

    let y_t = y.transpose();
    let mut trace = FitTrace::new();
    let start = Instant::now();
    let mut prev = objective(y, &w, &h, config.alpha)?;
    trace.push(0, prev, start.elapsed().as_secs_f64());

    let mut converged = false;
    for it in 1..=config.max_iters {
        let t0 = Instant::now();
        w = floor_exact_zeros(update_h(&y_t, &h, &w, config.alpha)?);
        h = floor_exact_zeros(update_h(y, &w, &h, config.alpha)?);
        let obj = objective(y, &w, &h, config.alpha)?;
        trace.push(it, obj, t0.elapsed().as_secs_f64());
        let rel_decrease = (prev - obj) / prev.abs().max(f64::MIN_POSITIVE);
        prev = obj;
        if rel_decrease < config.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(MmResult {
        w,
        h,
        trace,
        converged,
    })
}

/// An all-zero row/column of Y drives its factor entries to exactly 0 in one
/// multiplicative step (the numerator vanishes). Replace those zeros with a
/// tiny positive value so later iterations and the objective stay defined.
fn floor_exact_zeros(f: FactorMatrix) -> FactorMatrix {
    if f.min_entry() > 0.0 {
        return f;
    }
    let values = f
        .into_values()
        .mapv(|v| if v == 0.0 { 1e-100 } else { v });
    FactorMatrix::new(values).expect("floored values are positive")
}
