//! Bayesian NBMF via coordinate-ascent variational inference, with Poisson
//! factorization available as the pinned-exposure special case.
//!
//! One sweep runs, in order: the multinomial probabilities on nonzeros, the
//! exposure posterior on every cell, the user factors, the item factors, and
//! finally the item-rate hyperparameter. Moments are refreshed eagerly after
//! each family, so every update sees the latest state and the ELBO recorded
//! at the end of a sweep can only go up.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::counts::SparseCountMatrix;
use crate::error::{Error, Result};
use crate::factors::dot;
use crate::params::{HyperParams, Mode};
use crate::posterior::{Exposure, GammaVariationalMatrix, VariationalState};
use crate::special::{digamma, ln_gamma};
use crate::trace::FitTrace;

#[derive(Debug, Clone)]
pub struct CaviConfig {
    pub k: usize,
    pub hyper: HyperParams,
    pub max_iters: usize,
    /// Convergence rate tau: stop when the relative ELBO increment drops
    /// below it.
    pub rel_tol: f64,
    pub seed: u64,
    /// Re-estimate `beta_h` once per sweep (the scale carrier; `beta_w`
    /// stays fixed by scale invariance).
    pub learn_beta_h: bool,
    /// Store the exposure posterior as a dense U x I pair only while
    /// `U * I` stays within this budget; beyond it the rates are rebuilt on
    /// demand from factor-mean snapshots.
    pub qa_dense_max_cells: usize,
}

impl CaviConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            hyper: HyperParams::default(),
            max_iters: 1000,
            rel_tol: 1e-5,
            seed: 0,
            learn_beta_h: true,
            qa_dense_max_cells: 4_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
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
        self.hyper.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CaviResult {
    pub state: VariationalState,
    pub trace: FitTrace,
    /// Hyperparameters after fitting; `beta_h` differs from the input when
    /// it was learned.
    pub hyper: HyperParams,
    pub converged: bool,
}

/// Multinomial probabilities for one nonzero cell:
/// `phi_k ∝ exp(<log w_uk> + <log h_ik>)`.
///
/// Calling this on a zero entry is a contract violation: the component
/// posterior only exists where `y_ui > 0`.
pub fn update_phi(
    state: &VariationalState,
    y: &SparseCountMatrix,
    u: usize,
    i: usize,
) -> Result<Vec<f64>> {
    if y.get(u, i) == 0 {
        return Err(Error::ContractViolation(format!(
            "phi update requested on zero entry ({u}, {i})"
        )));
    }
    let k = state.k();
    let mut logits = vec![0.0; k];
    for (kk, slot) in logits.iter_mut().enumerate() {
        *slot = state.q_w.mean_log_at(u, kk) + state.q_h.mean_log_at(i, kk);
    }
    Ok(softmax(&logits))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    // Components are strictly positive; repair the (pathological) underflow
    // case without disturbing normalization beyond 1e-12.
    if out.iter().any(|&v| v == 0.0) {
        for v in &mut out {
            *v = v.max(f64::MIN_POSITIVE);
        }
        let sum: f64 = out.iter().sum();
        for v in &mut out {
            *v /= sum;
        }
    }
    out
}

/// All phi rows at once, in entry order; bitwise identical to calling
/// [`update_phi`] per nonzero.
fn update_phi_all(state: &VariationalState, y: &SparseCountMatrix) -> Array2<f64> {
    let k = state.k();
    let elogw = state.q_w.mean_log();
    let elogh = state.q_h.mean_log();
    let mut phi = Array2::<f64>::zeros((y.nnz(), k));
    let entries = y.entries();
    phi.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(e, row)| {
            let t = entries[e];
            let mut logits = vec![0.0; k];
            for (kk, slot) in logits.iter_mut().enumerate() {
                *slot = elogw[[t.user, kk]] + elogh[[t.item, kk]];
            }
            row.copy_from_slice(&softmax(&logits));
        });
    phi
}

/// Exposure posterior on every cell:
/// `shape = alpha + y_ui`, `rate = alpha + sum_k <w_uk><h_ik>`.
pub fn update_qa(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
) -> GammaVariationalMatrix {
    let (n_users, n_items) = (y.n_users(), y.n_items());
    let ew = state.q_w.mean();
    let eh = state.q_h.mean();
    let alpha = hyper.alpha;
    let mut shape = Array2::<f64>::from_elem((n_users, n_items), alpha);
    for t in y.entries() {
        shape[[t.user, t.item]] += t.count as f64;
    }
    let mut rate = Array2::<f64>::zeros((n_users, n_items));
    rate.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(n_items)
        .enumerate()
        .for_each(|(u, row)| {
            let wu = ew.row(u);
            let wu = wu.to_slice().expect("standard layout");
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = alpha + dot(wu, eh.row(i).to_slice().expect("standard layout"));
            }
        });
    GammaVariationalMatrix::new(shape, rate).expect("positive exposure parameters")
}

/// User-factor posterior:
/// `shape_uk = alpha_w + sum_i y_ui phi_uik`,
/// `rate_uk = beta_w + sum_i <a_ui><h_ik>` (the rate runs over every item).
pub fn update_qw(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
) -> Result<GammaVariationalMatrix> {
    let eh = state.q_h.mean();
    factor_family_update(
        state,
        y,
        hyper,
        FamilyAxis::Users,
        hyper.alpha_w,
        hyper.beta_w,
        &eh,
    )
}

/// Item-factor posterior, the mirror of [`update_qw`] over users. Uses the
/// current (already updated) user moments within a sweep.
pub fn update_qh(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
) -> Result<GammaVariationalMatrix> {
    let ew = state.q_w.mean();
    factor_family_update(
        state,
        y,
        hyper,
        FamilyAxis::Items,
        hyper.alpha_h,
        hyper.beta_h,
        &ew,
    )
}

#[derive(Clone, Copy, PartialEq)]
enum FamilyAxis {
    Users,
    Items,
}

/// Shared kernel for the two factor-family updates. `other_means` is the
/// mean matrix of the opposite factor (items for the user update and vice
/// versa); the exposure term pairs cell (u, i) with the opposite row.
fn factor_family_update(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
    axis: FamilyAxis,
    prior_shape: f64,
    prior_rate: f64,
    other_means: &Array2<f64>,
) -> Result<GammaVariationalMatrix> {
    let k = state.k();
    let alpha = hyper.alpha;
    let n_rows = match axis {
        FamilyAxis::Users => y.n_users(),
        FamilyAxis::Items => y.n_items(),
    };
    let n_other = other_means.nrows();

    let mut shape = Array2::<f64>::from_elem((n_rows, k), prior_shape);
    {
        let phi = &state.phi;
        let entries = y.entries();
        for (e, t) in entries.iter().enumerate() {
            let row = match axis {
                FamilyAxis::Users => t.user,
                FamilyAxis::Items => t.item,
            };
            let yv = t.count as f64;
            for kk in 0..k {
                shape[[row, kk]] += yv * phi[[e, kk]];
            }
        }
    }

    // Exposure means oriented along the update axis so the inner loop walks
    // contiguous memory. Pinned mode needs none.
    let a_means: Option<Array2<f64>> = match &state.q_a {
        Exposure::Pinned => None,
        Exposure::Dense(g) => {
            let means = g.mean();
            Some(match axis {
                FamilyAxis::Users => means,
                FamilyAxis::Items => means.t().as_standard_layout().to_owned(),
            })
        }
        Exposure::Implicit { w_means, h_means } => {
            // Rebuild <a> from the snapshots row by row; y lookups ride an
            // axis-aligned adjacency.
            let y_for_axis: SparseCountMatrix;
            let y_rows: &SparseCountMatrix = match axis {
                FamilyAxis::Users => y,
                FamilyAxis::Items => {
                    y_for_axis = y.transpose();
                    &y_for_axis
                }
            };
            let (rows_snap, cols_snap) = match axis {
                FamilyAxis::Users => (w_means, h_means),
                FamilyAxis::Items => (h_means, w_means),
            };
            let mut am = Array2::<f64>::zeros((n_rows, n_other));
            am.as_slice_mut()
                .expect("standard layout")
                .par_chunks_mut(n_other)
                .enumerate()
                .for_each(|(r, out)| {
                    let snap_r = rows_snap.row(r);
                    let snap_r = snap_r.to_slice().expect("standard layout");
                    let mut nz = y_rows.row(r).iter().peekable();
                    for (j, slot) in out.iter_mut().enumerate() {
                        let y_cell = match nz.peek() {
                            Some(t) if t.item == j => nz.next().unwrap().count,
                            _ => 0,
                        };
                        let s = dot(
                            snap_r,
                            cols_snap.row(j).to_slice().expect("standard layout"),
                        );
                        *slot = (alpha + y_cell as f64) / (alpha + s);
                    }
                });
            Some(am)
        }
    };

    let mut rate = Array2::<f64>::zeros((n_rows, k));
    rate.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(r, out_row)| {
            for slot in out_row.iter_mut() {
                *slot = prior_rate;
            }
            match &a_means {
                None => {
                    for j in 0..n_other {
                        let other = other_means.row(j);
                        let other = other.to_slice().expect("standard layout");
                        for (slot, hv) in out_row.iter_mut().zip(other) {
                            *slot += hv;
                        }
                    }
                }
                Some(am) => {
                    let am_row = am.row(r);
                    let am_row = am_row.to_slice().expect("standard layout");
                    for (j, &a_mean) in am_row.iter().enumerate() {
                        let other = other_means.row(j);
                        let other = other.to_slice().expect("standard layout");
                        for (slot, hv) in out_row.iter_mut().zip(other) {
                            *slot += a_mean * hv;
                        }
                    }
                }
            }
        });

    GammaVariationalMatrix::new(shape, rate)
}

/// ELBO-maximizing item rate: the prior mean of `h` is pulled onto the
/// average posterior mean, `beta_h = alpha_h / mean(<h_ik>)`.
pub fn update_beta_h(state: &VariationalState, hyper: &HyperParams) -> Result<f64> {
    let means = state.q_h.mean();
    let sum: f64 = means.iter().sum();
    let n = means.len() as f64;
    if !(sum > 0.0 && sum.is_finite()) {
        return Err(Error::domain(
            "update_beta_h",
            format!("sum of posterior means is {sum}"),
        ));
    }
    Ok(hyper.alpha_h * n / sum)
}

/// `E_q[log p(x)]` for `x ~ Gamma(prior_shape, prior_rate)` under
/// `q = Gamma(q_shape, q_rate)`.
#[inline]
fn gamma_cross_entropy(prior_shape: f64, prior_rate: f64, q_shape: f64, q_rate: f64) -> f64 {
    prior_shape * prior_rate.ln() - ln_gamma(prior_shape)
        + (prior_shape - 1.0) * (digamma(q_shape) - q_rate.ln())
        - prior_rate * q_shape / q_rate
}

/// Entropy of `Gamma(shape, rate)`.
#[inline]
fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma(shape) + (1.0 - shape) * digamma(shape)
}

fn gamma_block(q: &GammaVariationalMatrix, prior_shape: f64, prior_rate: f64) -> f64 {
    let mut total = 0.0;
    for (s, r) in q.shape().iter().zip(q.rate()) {
        total += gamma_cross_entropy(prior_shape, prior_rate, *s, *r) + gamma_entropy(*s, *r);
    }
    total
}

/// Evidence lower bound of the current state. Includes every constant
/// (`log Gamma(y_ui + 1)` and friends) so the value is directly comparable
/// with the exact log marginal likelihood.
pub fn compute_elbo(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
) -> Result<f64> {
    let k = state.k();
    let alpha = hyper.alpha;
    let (n_users, n_items) = (y.n_users(), y.n_items());
    if state.n_users() != n_users || state.n_items() != n_items {
        return Err(Error::InvalidArgument(format!(
            "state is {}x{} but Y is {}x{}",
            state.n_users(),
            state.n_items(),
            n_users,
            n_items
        )));
    }
    if state.phi.nrows() != y.nnz() || state.phi.ncols() != k {
        return Err(Error::InvalidArgument(
            "phi rows must align with the nonzero entries".into(),
        ));
    }

    let ew = state.q_w.mean();
    let eh = state.q_h.mean();
    let elogw = state.q_w.mean_log();
    let elogh = state.q_h.mean_log();

    let mut total = gamma_block(&state.q_w, hyper.alpha_w, hyper.beta_w)
        + gamma_block(&state.q_h, hyper.alpha_h, hyper.beta_h);

    // Multinomial component terms and the count constants, nonzeros only.
    for (e, t) in y.entries().iter().enumerate() {
        let yv = t.count as f64;
        for kk in 0..k {
            let p = state.phi[[e, kk]];
            if p > 0.0 {
                total += yv * p * (elogw[[t.user, kk]] + elogh[[t.item, kk]] - p.ln());
            }
        }
        total -= ln_gamma(yv + 1.0);
    }

    // Exposure-weighted intensity plus the exposure prior and entropy.
    match &state.q_a {
        Exposure::Pinned => {
            // <a> = 1 everywhere: sum_ui s_ui factorizes over k.
            let mut s_total = 0.0;
            for kk in 0..k {
                let cw: f64 = (0..n_users).map(|u| ew[[u, kk]]).sum();
                let ch: f64 = (0..n_items).map(|i| eh[[i, kk]]).sum();
                s_total += cw * ch;
            }
            total -= s_total;
        }
        exposure => {
            // Per-cell digamma/ln_gamma collapse to the y = 0 values on the
            // (dominant) zero cells.
            let psi_alpha = digamma(alpha);
            let lng_alpha = ln_gamma(alpha);
            let prior_const = alpha * alpha.ln() - lng_alpha;
            let dense = match exposure {
                Exposure::Dense(g) => Some(g),
                _ => None,
            };
            let snapshots = match exposure {
                Exposure::Implicit { w_means, h_means } => Some((w_means, h_means)),
                _ => None,
            };
            let partials: Vec<f64> = (0..n_users)
                .into_par_iter()
                .map(|u| {
                    let wu = ew.row(u);
                    let wu = wu.to_slice().expect("standard layout");
                    let qa_rows = dense.map(|g| {
                        (
                            g.shape().row(u),
                            g.rate().row(u),
                        )
                    });
                    let snap_row = snapshots.map(|(wm, _)| wm.row(u));
                    let mut acc = 0.0;
                    let mut nz = y.row(u).iter().peekable();
                    for i in 0..n_items {
                        let y_cell = match nz.peek() {
                            Some(t) if t.item == i => nz.next().unwrap().count,
                            _ => 0,
                        };
                        let (a_shape, a_rate) = match (&qa_rows, &snap_row) {
                            (Some((sh, ra)), _) => (sh[i], ra[i]),
                            (None, Some(wm_row)) => {
                                let (_, hm) = snapshots.expect("implicit snapshots");
                                let s = dot(
                                    wm_row.to_slice().expect("standard layout"),
                                    hm.row(i).to_slice().expect("standard layout"),
                                );
                                (alpha + y_cell as f64, alpha + s)
                            }
                            _ => unreachable!("non-pinned exposure"),
                        };
                        let s_new = dot(wu, eh.row(i).to_slice().expect("standard layout"));
                        let (psi_s, lng_s) = if a_shape == alpha {
                            (psi_alpha, lng_alpha)
                        } else {
                            (digamma(a_shape), ln_gamma(a_shape))
                        };
                        let ln_rate = a_rate.ln();
                        let e_log_a = psi_s - ln_rate;
                        let e_a = a_shape / a_rate;
                        // likelihood terms in a
                        acc += y_cell as f64 * e_log_a - e_a * s_new;
                        // prior cross-entropy
                        acc += prior_const + (alpha - 1.0) * e_log_a - alpha * e_a;
                        // entropy
                        acc += a_shape - ln_rate + lng_s + (1.0 - a_shape) * psi_s;
                    }
                    acc
                })
                .collect();
            for p in partials {
                total += p;
            }
        }
    }

    if !total.is_finite() {
        return Err(Error::domain(
            "compute_elbo",
            format!("ELBO evaluated to {total}"),
        ));
    }
    Ok(total)
}

fn initialize(y: &SparseCountMatrix, config: &CaviConfig) -> VariationalState {
    let k = config.k;
    let hyper = &config.hyper;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Shapes start at the prior plus uniform jitter (symmetry breaking);
    // rates start exactly at the prior rates.
    let w_shape =
        Array2::from_shape_fn((y.n_users(), k), |_| hyper.alpha_w + rng.random::<f64>());
    let w_rate = Array2::from_elem((y.n_users(), k), hyper.beta_w);
    let h_shape =
        Array2::from_shape_fn((y.n_items(), k), |_| hyper.alpha_h + rng.random::<f64>());
    let h_rate = Array2::from_elem((y.n_items(), k), hyper.beta_h);
    let q_w = GammaVariationalMatrix::new(w_shape, w_rate).expect("positive init");
    let q_h = GammaVariationalMatrix::new(h_shape, h_rate).expect("positive init");
    let phi = Array2::from_elem((y.nnz(), k), 1.0 / k as f64);
    let mut state = VariationalState {
        q_w,
        q_h,
        q_a: Exposure::Pinned,
        phi,
    };
    state.q_a = match hyper.mode {
        Mode::Pf => Exposure::Pinned,
        Mode::Nbmf => fresh_exposure(&state, y, hyper, config.qa_dense_max_cells),
    };
    state
}

fn fresh_exposure(
    state: &VariationalState,
    y: &SparseCountMatrix,
    hyper: &HyperParams,
    budget: usize,
) -> Exposure {
    if y.n_users().saturating_mul(y.n_items()) <= budget {
        Exposure::Dense(update_qa(state, y, hyper))
    } else {
        Exposure::Implicit {
            w_means: state.q_w.mean(),
            h_means: state.q_h.mean(),
        }
    }
}

/// Run coordinate ascent until the relative ELBO increment drops below
/// `config.rel_tol` or `config.max_iters` sweeps have run.
pub fn fit_cavi(y: &SparseCountMatrix, config: &CaviConfig) -> Result<CaviResult> {
    config.validate()?;
    let mut hyper = config.hyper;
    let mut state = initialize(y, config);
    let mut trace = FitTrace::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;

    for it in 1..=config.max_iters {
        let t0 = Instant::now();
        state.phi = update_phi_all(&state, y);
        if hyper.mode == Mode::Nbmf {
            state.q_a = fresh_exposure(&state, y, &hyper, config.qa_dense_max_cells);
        }
        state.q_w = update_qw(&state, y, &hyper)?;
        state.q_h = update_qh(&state, y, &hyper)?;
        if config.learn_beta_h {
            hyper.beta_h = update_beta_h(&state, &hyper)?;
        }
        let elbo = compute_elbo(&state, y, &hyper)?;
        trace.push(it, elbo, t0.elapsed().as_secs_f64());
        if let Some(p) = prev {
            if (elbo - p).abs() <= config.rel_tol * p.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        prev = Some(elbo);
    }

    Ok(CaviResult {
        state,
        trace,
        hyper,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::Triplet;

    fn toy_matrix() -> SparseCountMatrix {
        SparseCountMatrix::new(
            5,
            4,
            vec![
                Triplet::new(0, 0, 3),
                Triplet::new(0, 2, 1),
                Triplet::new(1, 1, 5),
                Triplet::new(2, 0, 2),
                Triplet::new(2, 3, 4),
                Triplet::new(3, 2, 1),
                Triplet::new(4, 1, 2),
                Triplet::new(4, 3, 7),
            ],
        )
        .unwrap()
    }

    fn state_for(y: &SparseCountMatrix, k: usize, hyper: &HyperParams, seed: u64) -> VariationalState {
        let mut config = CaviConfig::new(k);
        config.hyper = *hyper;
        config.seed = seed;
        initialize(y, &config)
    }

    #[test]
    fn phi_single_component_is_one() {
        let y = toy_matrix();
        let state = state_for(&y, 1, &HyperParams::default(), 0);
        let phi = update_phi(&state, &y, 0, 0).unwrap();
        assert_eq!(phi, vec![1.0]);
    }

    #[test]
    fn phi_uniform_under_equal_logits() {
        let y = toy_matrix();
        let hyper = HyperParams::default();
        // All shapes/rates identical across k => equal logits.
        let k = 4;
        let q_w = GammaVariationalMatrix::new(
            Array2::from_elem((5, k), 2.0),
            Array2::from_elem((5, k), 3.0),
        )
        .unwrap();
        let q_h = GammaVariationalMatrix::new(
            Array2::from_elem((4, k), 1.5),
            Array2::from_elem((4, k), 2.0),
        )
        .unwrap();
        let state = VariationalState {
            q_w,
            q_h,
            q_a: Exposure::Pinned,
            phi: Array2::from_elem((y.nnz(), k), 1.0 / k as f64),
        };
        let _ = hyper;
        let phi = update_phi(&state, &y, 0, 0).unwrap();
        for p in &phi {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let total: f64 = phi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_softmax_closed_form() {
        // K=2 with logits differing by ln 3 => (0.75, 0.25).
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 2)]).unwrap();
        // mean_log = psi(shape) - ln(rate); same shapes, rates differing 3x
        // in the second component make the logit gap exactly ln 3.
        let q_w = GammaVariationalMatrix::new(
            Array2::from_elem((1, 2), 2.0),
            ndarray::array![[1.0, 3.0]],
        )
        .unwrap();
        let q_h = GammaVariationalMatrix::new(
            Array2::from_elem((1, 2), 2.0),
            Array2::from_elem((1, 2), 1.0),
        )
        .unwrap();
        let state = VariationalState {
            q_w,
            q_h,
            q_a: Exposure::Pinned,
            phi: Array2::from_elem((1, 2), 0.5),
        };
        let phi = update_phi(&state, &y, 0, 0).unwrap();
        assert!((phi[0] - 0.75).abs() < 1e-12, "{phi:?}");
        assert!((phi[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn phi_on_zero_entry_is_a_contract_violation() {
        let y = toy_matrix();
        let state = state_for(&y, 2, &HyperParams::default(), 0);
        assert!(matches!(
            update_phi(&state, &y, 0, 1),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn qa_update_matches_direct_substitution() {
        // alpha=1, y=3, sum_k <w><h> = 2 => shape 4, rate 3, mean 4/3.
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 3)]).unwrap();
        let hyper = HyperParams::default();
        let q_w = GammaVariationalMatrix::new(
            ndarray::array![[2.0]],
            ndarray::array![[1.0]],
        )
        .unwrap();
        let q_h = GammaVariationalMatrix::new(
            ndarray::array![[1.0]],
            ndarray::array![[1.0]],
        )
        .unwrap();
        let state = VariationalState {
            q_w,
            q_h,
            q_a: Exposure::Pinned,
            phi: Array2::from_elem((1, 1), 1.0),
        };
        let qa = update_qa(&state, &y, &hyper);
        assert_eq!(qa.shape()[[0, 0]], 4.0);
        assert_eq!(qa.rate()[[0, 0]], 3.0);
        assert!((qa.mean_at(0, 0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn qa_prior_recovery_and_over_exposure() {
        let hyper = HyperParams::default();
        // No observations, predicted means pushed to ~0: exposure mean -> 1.
        let y0 = SparseCountMatrix::new(1, 1, vec![]).unwrap();
        let tiny = GammaVariationalMatrix::new(
            ndarray::array![[1e-12]],
            ndarray::array![[1.0]],
        )
        .unwrap();
        let state = VariationalState {
            q_w: tiny.clone(),
            q_h: tiny,
            q_a: Exposure::Pinned,
            phi: Array2::zeros((0, 1)),
        };
        let qa = update_qa(&state, &y0, &hyper);
        assert!((qa.mean_at(0, 0) - 1.0).abs() < 1e-9);

        // High count with small predicted mean: y=50, s=1, alpha=1 -> 25.5.
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 50)]).unwrap();
        let unit = GammaVariationalMatrix::new(
            ndarray::array![[1.0]],
            ndarray::array![[1.0]],
        )
        .unwrap();
        let state = VariationalState {
            q_w: unit.clone(),
            q_h: unit,
            q_a: Exposure::Pinned,
            phi: Array2::from_elem((1, 1), 1.0),
        };
        let qa = update_qa(&state, &y, &hyper);
        assert!((qa.mean_at(0, 0) - 25.5).abs() < 1e-12);
    }

    #[test]
    fn qw_shape_reduces_to_prior_without_observations() {
        // User 3 of this matrix has exactly one nonzero; user 1 of a matrix
        // where we drop their entries has none.
        let y = SparseCountMatrix::new(
            2,
            2,
            vec![Triplet::new(0, 0, 5)],
        )
        .unwrap();
        let hyper = HyperParams::default();
        let mut config = CaviConfig::new(5);
        config.hyper = hyper;
        let mut state = initialize(&y, &config);
        state.phi = update_phi_all(&state, &y);
        let qw = update_qw(&state, &y, &hyper).unwrap();
        // User 1 has no observations: shape equals the prior.
        for kk in 0..5 {
            assert_eq!(qw.shape()[[1, kk]], hyper.alpha_w);
        }
        // User 0's shapes sum to alpha_w*K + y (multinomial totals).
        let total: f64 = (0..5).map(|kk| qw.shape()[[0, kk]]).sum();
        assert!((total - (5.0 * hyper.alpha_w + 5.0)).abs() < 1e-9);
    }

    #[test]
    fn qw_single_nonzero_fixture() {
        // y = 5 with phi_k = 0.2 adds exactly one to each component shape.
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 5)]).unwrap();
        let hyper = HyperParams::default();
        let flat = GammaVariationalMatrix::new(
            Array2::from_elem((1, 5), 1.0),
            Array2::from_elem((1, 5), 1.0),
        )
        .unwrap();
        let state = VariationalState {
            q_w: flat.clone(),
            q_h: flat,
            q_a: Exposure::Pinned,
            phi: Array2::from_elem((1, 5), 0.2),
        };
        let qw = update_qw(&state, &y, &hyper).unwrap();
        for kk in 0..5 {
            assert!((qw.shape()[[0, kk]] - (hyper.alpha_w + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn factor_updates_match_hand_computed_sums() {
        // 2x2, K=1: every sum is small enough to write out by hand.
        let y = SparseCountMatrix::new(
            2,
            2,
            vec![Triplet::new(0, 0, 2), Triplet::new(1, 1, 3)],
        )
        .unwrap();
        let hyper = HyperParams::default();
        let q_w = GammaVariationalMatrix::new(
            ndarray::array![[2.0], [4.0]],
            ndarray::array![[2.0], [2.0]],
        )
        .unwrap(); // means 1, 2
        let q_h = GammaVariationalMatrix::new(
            ndarray::array![[3.0], [1.0]],
            ndarray::array![[1.0], [2.0]],
        )
        .unwrap(); // means 3, 0.5
        let qa_shape = ndarray::array![[3.0, 1.0], [1.0, 4.0]]; // alpha + y
        let qa_rate = ndarray::array![[4.0, 1.5], [7.0, 2.0]]; // alpha + <w><h>
        let q_a = Exposure::Dense(GammaVariationalMatrix::new(qa_shape, qa_rate).unwrap());
        let state = VariationalState {
            q_w,
            q_h,
            q_a,
            phi: Array2::from_elem((2, 1), 1.0),
        };
        let qw = update_qw(&state, &y, &hyper).unwrap();
        // shape: alpha_w + y over the user's nonzeros
        assert_eq!(qw.shape()[[0, 0]], 1.0 + 2.0);
        assert_eq!(qw.shape()[[1, 0]], 1.0 + 3.0);
        // rate: beta_w + sum_i <a_ui><h_i>; <a> = shape/rate of q_a
        let want0 = 1.0 + (3.0 / 4.0) * 3.0 + (1.0 / 1.5) * 0.5;
        let want1 = 1.0 + (1.0 / 7.0) * 3.0 + (4.0 / 2.0) * 0.5;
        assert!((qw.rate()[[0, 0]] - want0).abs() < 1e-12);
        assert!((qw.rate()[[1, 0]] - want1).abs() < 1e-12);

        // Mirror for H with the *current* (here: unchanged) user moments.
        let qh = update_qh(&state, &y, &hyper).unwrap();
        assert_eq!(qh.shape()[[0, 0]], 1.0 + 2.0);
        assert_eq!(qh.shape()[[1, 0]], 1.0 + 3.0);
        let want_i0 = 1.0 + (3.0 / 4.0) * 1.0 + (1.0 / 7.0) * 2.0;
        let want_i1 = 1.0 + (1.0 / 1.5) * 1.0 + (4.0 / 2.0) * 2.0;
        assert!((qh.rate()[[0, 0]] - want_i0).abs() < 1e-12);
        assert!((qh.rate()[[1, 0]] - want_i1).abs() < 1e-12);
    }

    #[test]
    fn beta_h_update_fixtures() {
        let hyper = HyperParams::default();
        let ones = GammaVariationalMatrix::new(
            Array2::from_elem((2, 2), 2.0),
            Array2::from_elem((2, 2), 2.0),
        )
        .unwrap(); // all means 1
        let state = VariationalState {
            q_w: ones.clone(),
            q_h: ones,
            q_a: Exposure::Pinned,
            phi: Array2::zeros((0, 2)),
        };
        assert!((update_beta_h(&state, &hyper).unwrap() - hyper.alpha_h).abs() < 1e-15);

        let twos = GammaVariationalMatrix::new(
            Array2::from_elem((2, 2), 4.0),
            Array2::from_elem((2, 2), 2.0),
        )
        .unwrap(); // all means 2
        let state = VariationalState {
            q_w: twos.clone(),
            q_h: twos,
            q_a: Exposure::Pinned,
            phi: Array2::zeros((0, 2)),
        };
        assert!((update_beta_h(&state, &hyper).unwrap() - 0.5).abs() < 1e-15);

        // Mixed means on a 2x1 grid (K=1): direct substitution.
        let mixed = GammaVariationalMatrix::new(
            ndarray::array![[3.0], [1.0]],
            ndarray::array![[1.0], [2.0]],
        )
        .unwrap(); // means 3, 0.5
        let state = VariationalState {
            q_w: mixed.clone(),
            q_h: mixed,
            q_a: Exposure::Pinned,
            phi: Array2::zeros((0, 1)),
        };
        let want = hyper.alpha_h * 2.0 / 3.5;
        assert!((update_beta_h(&state, &hyper).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn one_sweep_strictly_increases_elbo() {
        let y = toy_matrix();
        let mut config = CaviConfig::new(2);
        config.seed = 14;
        let mut state = initialize(&y, &config);
        let hyper = config.hyper;
        let before = compute_elbo(&state, &y, &hyper).unwrap();
        state.phi = update_phi_all(&state, &y);
        state.q_a = fresh_exposure(&state, &y, &hyper, config.qa_dense_max_cells);
        state.q_w = update_qw(&state, &y, &hyper).unwrap();
        state.q_h = update_qh(&state, &y, &hyper).unwrap();
        let after = compute_elbo(&state, &y, &hyper).unwrap();
        assert!(after > before, "{after} !> {before}");
    }

    #[test]
    fn fit_trace_is_monotone_and_deterministic() {
        let y = toy_matrix();
        let mut config = CaviConfig::new(3);
        config.seed = 5;
        config.max_iters = 60;
        config.rel_tol = 1e-10;
        let a = fit_cavi(&y, &config).unwrap();
        assert!(a.trace.is_nondecreasing(1e-9));
        let b = fit_cavi(&y, &config).unwrap();
        assert_eq!(a.trace.objectives(), b.trace.objectives());
        assert_eq!(a.state.q_w, b.state.q_w);
    }

    #[test]
    fn pf_mode_reproduces_plain_poisson_factorization() {
        // With the exposure pinned, the rate updates collapse to column sums:
        // run one sweep and verify against the textbook PF update.
        let y = toy_matrix();
        let mut config = CaviConfig::new(2);
        config.hyper.mode = Mode::Pf;
        config.seed = 3;
        let mut state = initialize(&y, &config);
        let hyper = config.hyper;
        state.phi = update_phi_all(&state, &y);
        let eh = state.q_h.mean();
        let qw = update_qw(&state, &y, &hyper).unwrap();
        for u in 0..y.n_users() {
            for kk in 0..2 {
                let want_rate = hyper.beta_w + (0..y.n_items()).map(|i| eh[[i, kk]]).sum::<f64>();
                assert!((qw.rate()[[u, kk]] - want_rate).abs() < 1e-12);
            }
        }
        // And the exposure diagnostics are absent.
        assert!(state.q_a.is_pinned());
        assert!(state.exposure_mean_dense(&y, hyper.alpha).is_none());
    }

    #[test]
    fn phi_rows_stay_normalized_across_sweeps() {
        let y = toy_matrix();
        let mut config = CaviConfig::new(4);
        config.max_iters = 25;
        config.rel_tol = 1e-12;
        let fit = fit_cavi(&y, &config).unwrap();
        for e in 0..y.nnz() {
            let total: f64 = (0..4).map(|kk| fit.state.phi[[e, kk]]).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((0..4).all(|kk| fit.state.phi[[e, kk]] > 0.0));
        }
    }

    #[test]
    fn shape_bookkeeping_conserves_counts() {
        let y = toy_matrix();
        let mut config = CaviConfig::new(3);
        config.max_iters = 7;
        config.rel_tol = 1e-12;
        let fit = fit_cavi(&y, &config).unwrap();
        for u in 0..y.n_users() {
            let got: f64 = (0..3)
                .map(|kk| fit.state.q_w.shape()[[u, kk]] - config.hyper.alpha_w)
                .sum();
            let want: u64 = y.row(u).iter().map(|t| t.count).sum();
            assert!((got - want as f64).abs() < 1e-9, "user {u}: {got} vs {want}");
        }
        for i in 0..y.n_items() {
            let got: f64 = (0..3)
                .map(|kk| fit.state.q_h.shape()[[i, kk]] - config.hyper.alpha_h)
                .sum();
            let want: u64 = y.by_item()[i].iter().map(|&(_, c)| c).sum();
            assert!((got - want as f64).abs() < 1e-9, "item {i}: {got} vs {want}");
        }
    }

    #[test]
    fn implicit_exposure_reproduces_dense_trajectory() {
        let y = toy_matrix();
        let mut dense_cfg = CaviConfig::new(2);
        dense_cfg.max_iters = 30;
        dense_cfg.rel_tol = 1e-12;
        dense_cfg.seed = 9;
        let mut implicit_cfg = dense_cfg.clone();
        implicit_cfg.qa_dense_max_cells = 0;
        let dense = fit_cavi(&y, &dense_cfg).unwrap();
        let implicit = fit_cavi(&y, &implicit_cfg).unwrap();
        assert_eq!(dense.trace.objectives(), implicit.trace.objectives());
        assert_eq!(dense.state.q_w, implicit.state.q_w);
        assert_eq!(dense.state.q_h, implicit.state.q_h);
    }

    #[test]
    fn scale_transform_preserves_elbo_and_scores() {
        let y = toy_matrix();
        let mut config = CaviConfig::new(2);
        config.max_iters = 40;
        config.rel_tol = 1e-10;
        config.seed = 31;
        let fit = fit_cavi(&y, &config).unwrap();
        let base = compute_elbo(&fit.state, &y, &fit.hyper).unwrap();
        for &lambda in &[0.1, 2.0, 7.0] {
            let state = fit.state.scale_transform(lambda).unwrap();
            let hyper = fit.hyper.scale_transform(lambda).unwrap();
            let elbo = compute_elbo(&state, &y, &hyper).unwrap();
            assert!(
                (elbo - base).abs() <= 1e-9 * base.abs(),
                "lambda {lambda}: {elbo} vs {base}"
            );
        }
    }
}
