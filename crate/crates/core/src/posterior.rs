//! Gamma variational posteriors and the mean-field state of the Bayesian
//! solver.

use ndarray::Array2;

use crate::counts::SparseCountMatrix;
use crate::error::{Error, Result};
use crate::factors::{dot, FactorMatrix};
use crate::special::digamma;

/// Elementwise gamma posterior `q(x_rc) = Gamma(shape_rc, rate_rc)`.
///
/// Moments follow the standard identities `<x> = shape/rate` and
/// `<log x> = psi(shape) - log(rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVariationalMatrix {
    shape: Array2<f64>,
    rate: Array2<f64>,
}

impl GammaVariationalMatrix {
    pub fn new(shape: Array2<f64>, rate: Array2<f64>) -> Result<Self> {
        if shape.dim() != rate.dim() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} and rate {:?} dimensions differ",
                shape.dim(),
                rate.dim()
            )));
        }
        for (name, m) in [("shape", &shape), ("rate", &rate)] {
            if let Some(v) = m.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!(
                    "gamma {name} parameters must be finite and strictly positive, found {v}"
                )));
            }
        }
        let shape = to_standard(shape);
        let rate = to_standard(rate);
        Ok(Self { shape, rate })
    }

    pub fn nrows(&self) -> usize {
        self.shape.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.shape.ncols()
    }

    pub fn shape(&self) -> &Array2<f64> {
        &self.shape
    }

    pub fn rate(&self) -> &Array2<f64> {
        &self.rate
    }

    pub fn mean(&self) -> Array2<f64> {
        &self.shape / &self.rate
    }

    pub fn mean_log(&self) -> Array2<f64> {
        let mut out = self.shape.mapv(digamma);
        out.zip_mut_with(&self.rate, |m, &r| *m -= r.ln());
        out
    }

    pub fn mean_at(&self, r: usize, c: usize) -> f64 {
        self.shape[[r, c]] / self.rate[[r, c]]
    }

    pub fn mean_log_at(&self, r: usize, c: usize) -> f64 {
        digamma(self.shape[[r, c]]) - self.rate[[r, c]].ln()
    }

    pub fn mean_factor(&self) -> FactorMatrix {
        FactorMatrix::new(self.mean()).expect("gamma means are positive and finite")
    }

    /// Same posterior family with every rate multiplied by `factor`.
    pub fn with_scaled_rate(&self, factor: f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.rate.mapv(|r| r * factor))
    }
}

fn to_standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

/// Representation of the exposure posterior `q(a_ui)`.
///
/// The shape parameter is always `alpha + y_ui`, so a dense U x I store is
/// redundant at scale: beyond a configurable cell budget the solver keeps
/// only the factor-mean snapshots taken when the exposure update ran and
/// reconstructs `rate_ui = alpha + <w_u, h_i>` on demand. Both forms produce
/// bit-identical trajectories.
#[derive(Debug, Clone, PartialEq)]
pub enum Exposure {
    Dense(GammaVariationalMatrix),
    Implicit {
        w_means: Array2<f64>,
        h_means: Array2<f64>,
    },
    /// Poisson-factorization mode: `<a> = 1`, `<log a> = 0`, never updated.
    Pinned,
}

impl Exposure {
    pub fn is_pinned(&self) -> bool {
        matches!(self, Exposure::Pinned)
    }

    /// `(shape, rate)` of `q(a_ui)`; `None` in pinned mode.
    pub fn params_at(&self, u: usize, i: usize, y_ui: u64, alpha: f64) -> Option<(f64, f64)> {
        match self {
            Exposure::Dense(g) => Some((g.shape()[[u, i]], g.rate()[[u, i]])),
            Exposure::Implicit { w_means, h_means } => {
                let s = dot(
                    w_means.row(u).to_slice().expect("standard layout"),
                    h_means.row(i).to_slice().expect("standard layout"),
                );
                Some((alpha + y_ui as f64, alpha + s))
            }
            Exposure::Pinned => None,
        }
    }

    pub fn mean_at(&self, u: usize, i: usize, y_ui: u64, alpha: f64) -> f64 {
        match self.params_at(u, i, y_ui, alpha) {
            Some((shape, rate)) => shape / rate,
            None => 1.0,
        }
    }
}

/// Full mean-field state: factor posteriors, exposure posterior, and the
/// multinomial component probabilities on the nonzero cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub q_w: GammaVariationalMatrix,
    pub q_h: GammaVariationalMatrix,
    pub q_a: Exposure,
    /// Row `e` holds the length-K probability vector for entry `e` of the
    /// count matrix the state was fitted to (same order as `entries()`).
    pub phi: Array2<f64>,
}

impl VariationalState {
    pub fn k(&self) -> usize {
        self.q_w.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.q_w.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.q_h.nrows()
    }

    /// Expected predictive posterior `sum_k <w_uk><h_ik>`, the recommendation
    /// score matrix.
    pub fn score_matrix(&self) -> Array2<f64> {
        let w = self.q_w.mean_factor();
        let h = self.q_h.mean_factor();
        crate::factors::predict_scores(&w, &h).expect("posterior factor dimensions agree")
    }

    /// Dense exposure means for diagnostics; `None` in pinned mode.
    pub fn exposure_mean_dense(&self, y: &SparseCountMatrix, alpha: f64) -> Option<Array2<f64>> {
        if self.q_a.is_pinned() {
            return None;
        }
        let (n_users, n_items) = (y.n_users(), y.n_items());
        let mut out = Array2::zeros((n_users, n_items));
        for u in 0..n_users {
            let mut row = y.row(u).iter().peekable();
            for i in 0..n_items {
                let y_ui = match row.peek() {
                    Some(t) if t.item == i => row.next().unwrap().count,
                    _ => 0,
                };
                out[[u, i]] = self.q_a.mean_at(u, i, y_ui, alpha);
            }
        }
        Some(out)
    }

    /// The rate rescaling `q_w rates * lambda`, `q_h rates / lambda` that,
    /// together with [`crate::HyperParams::scale_transform`], leaves the ELBO
    /// and all induced rankings unchanged.
    pub fn scale_transform(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be strictly positive, got {lambda}"
            )));
        }
        Ok(Self {
            q_w: self.q_w.with_scaled_rate(lambda)?,
            q_h: self.q_h.with_scaled_rate(1.0 / lambda)?,
            q_a: self.q_a.clone(),
            phi: self.phi.clone(),
        })
    }
}
