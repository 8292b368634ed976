//! The divergence induced by mean-parametrized NB maximum likelihood, its
//! generalized KL limit, and NB log-likelihood evaluation.

use rayon::prelude::*;

use crate::counts::SparseCountMatrix;
use crate::error::{Error, Result};
use crate::factors::{dot, FactorMatrix};
use crate::special::ln_gamma;

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be strictly positive and finite, got {v}"
        )))
    }
}

/// `d_alpha(a|b) = a log(a/b) - (alpha+a) log((alpha+a)/(alpha+b))`.
///
/// Nonnegative, zero exactly when `a == b`; the `a log(a/b)` term takes its
/// continuous extension 0 at `a = 0`. Converges to the generalized KL
/// divergence as `alpha` grows.
pub fn nb_divergence(a: f64, b: f64, alpha: f64) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "a must be finite and nonnegative, got {a}"
        )));
    }
    check_positive("b", b)?;
    check_positive("alpha", alpha)?;
    Ok(nb_div_raw(a, b, alpha))
}

pub(crate) fn nb_div_raw(a: f64, b: f64, alpha: f64) -> f64 {
    // ln((alpha+a)/(alpha+b)) as ln_1p((a-b)/(alpha+b)): exact at a == b and
    // free of the cancellation that otherwise swamps the large-alpha limit.
    let t1 = if a > 0.0 { a * ((a - b) / b).ln_1p() } else { 0.0 };
    let v = t1 - (alpha + a) * ((a - b) / (alpha + b)).ln_1p();
    clamp_rounding_negatives(v, a, b, alpha)
}

/// Generalized Kullback-Leibler divergence `a log(a/b) - a + b`.
pub fn kl_divergence(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "a must be finite and nonnegative, got {a}"
        )));
    }
    check_positive("b", b)?;
    let t1 = if a > 0.0 { a * ((a - b) / b).ln_1p() } else { 0.0 };
    Ok(clamp_rounding_negatives(t1 - a + b, a, b, 0.0))
}

/// Both divergences are mathematically nonnegative; swallow the sub-ulp
/// negative residue that cancellation can leave near `a == b`.
#[inline]
fn clamp_rounding_negatives(v: f64, a: f64, b: f64, alpha: f64) -> f64 {
    if v < 0.0 && v >= -1e-12 * (1.0 + a.abs() + b.abs() + alpha.abs()) {
        0.0
    } else {
        v
    }
}

/// Full data-fitting cost `sum_ui d_alpha(y_ui | [W H^T]_ui)` over all U*I
/// cells; zero entries contribute `alpha log(1 + [W H^T]_ui / alpha)`.
///
/// Computed as the dense zero-cell term plus sparse corrections on the
/// nonzeros, row-parallel with a fixed reduction order.
pub fn objective(
    y: &SparseCountMatrix,
    w: &FactorMatrix,
    h: &FactorMatrix,
    alpha: f64,
) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_dims(y, w, h)?;
    let n_items = y.n_items();
    let partials: Vec<Result<f64>> = (0..y.n_users())
        .into_par_iter()
        .map(|u| {
            let wu = w.row_slice(u);
            let mut acc = 0.0;
            let mut row = y.row(u).iter().peekable();
            for i in 0..n_items {
                let p = dot(wu, h.row_slice(i));
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::domain(
                        "objective",
                        format!("predicted mean at ({u}, {i}) is {p}"),
                    ));
                }
                acc += alpha * (p / alpha).ln_1p();
                if let Some(t) = row.peek() {
                    if t.item == i {
                        let yv = row.next().unwrap().count as f64;
                        acc += nb_div_raw(yv, p, alpha) - alpha * (p / alpha).ln_1p();
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total)
}

fn check_dims(y: &SparseCountMatrix, w: &FactorMatrix, h: &FactorMatrix) -> Result<()> {
    if w.rows() != y.n_users() || h.rows() != y.n_items() || w.cols() != h.cols() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: Y is {}x{}, W is {}x{}, H is {}x{}",
            y.n_users(),
            y.n_items(),
            w.rows(),
            w.cols(),
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

/// Log pmf of the mean-parametrized NB distribution,
/// `p = 1 / (1 + alpha/mean)`.
pub fn nb_log_pmf(y: u64, mean: f64, alpha: f64) -> Result<f64> {
    check_positive("mean", mean)?;
    check_positive("alpha", alpha)?;
    let yf = y as f64;
    let mut v = ln_gamma(yf + alpha) - ln_gamma(yf + 1.0) - ln_gamma(alpha);
    // alpha * log(1 - p) = -alpha * log1p(mean/alpha)
    v -= alpha * (mean / alpha).ln_1p();
    if y > 0 {
        v += yf * (mean.ln() - (mean + alpha).ln());
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counts::Triplet;
    use ndarray::Array2;

    #[test]
    fn divergence_is_zero_at_the_mean() {
        for &(b, alpha) in &[(1.0, 1.0), (0.3, 0.5), (17.0, 8.0), (2.5, 1e8)] {
            assert_eq!(nb_divergence(b, b, alpha).unwrap(), 0.0);
        }
    }

    #[test]
    fn divergence_matches_closed_form_fixtures() {
        // 2 ln 2 - 3 ln(3/2) evaluated at high precision.
        let got = nb_divergence(2.0, 1.0, 1.0).unwrap();
        assert!((got - 0.1698990367953974729).abs() < 1e-15);
        // a = 0 branch reduces to alpha log(1 + b/alpha) = ln 2.
        let got = nb_divergence(0.0, 1.0, 1.0).unwrap();
        assert!((got - 0.69314718055994530942).abs() < 1e-15);
    }

    #[test]
    fn divergence_approaches_generalized_kl() {
        for &(a, b) in &[(2.0, 1.0), (0.0, 3.0), (5.5, 0.7), (10.0, 10.5)] {
            let lim = nb_divergence(a, b, 1e8).unwrap();
            let kl = kl_divergence(a, b).unwrap();
            assert!(
                (lim - kl).abs() <= 1e-6 * kl.abs().max(1e-12),
                "a={a} b={b}: {lim} vs {kl}"
            );
        }
    }

    #[test]
    fn kl_fixtures() {
        assert_eq!(kl_divergence(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(kl_divergence(0.0, 2.5).unwrap(), 2.5);
        let got = kl_divergence(2.0, 1.0).unwrap();
        assert!((got - 0.38629436111989061883).abs() < 1e-15);
    }

    #[test]
    fn rejects_domain_violations() {
        assert!(nb_divergence(-1.0, 1.0, 1.0).is_err());
        assert!(nb_divergence(1.0, 0.0, 1.0).is_err());
        assert!(nb_divergence(1.0, 1.0, -2.0).is_err());
        assert!(kl_divergence(1.0, -1.0).is_err());
        assert!(nb_log_pmf(0, 0.0, 1.0).is_err());
        assert!(nb_log_pmf(0, 1.0, 0.0).is_err());
    }

    #[test]
    fn objective_zero_at_exact_factorization() {
        // W H^T integer-valued by construction.
        let w = FactorMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 1.0]).unwrap();
        let h = FactorMatrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 4.0]).unwrap();
        let mut entries = Vec::new();
        for u in 0..2 {
            for i in 0..2 {
                let p: f64 = (0..2).map(|k| w.values()[[u, k]] * h.values()[[i, k]]).sum();
                entries.push(Triplet::new(u, i, p as u64));
            }
        }
        let y = SparseCountMatrix::new(2, 2, entries).unwrap();
        let obj = objective(&y, &w, &h, 1.0).unwrap();
        assert!(obj.abs() < 1e-12, "objective {obj}");
    }

    #[test]
    fn objective_single_cell_fixture() {
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 2)]).unwrap();
        let w = FactorMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let h = FactorMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        let obj = objective(&y, &w, &h, 1.0).unwrap();
        assert!((obj - 0.1698990367953974729).abs() < 1e-15);
    }

    #[test]
    fn objective_matches_naive_double_loop() {
        let w = FactorMatrix::from_vec(2, 2, vec![0.8, 1.2, 0.5, 2.0]).unwrap();
        let h = FactorMatrix::from_vec(2, 2, vec![1.1, 0.6, 0.9, 1.4]).unwrap();
        let y =
            SparseCountMatrix::new(2, 2, vec![Triplet::new(0, 1, 3), Triplet::new(1, 0, 1)])
                .unwrap();
        let alpha = 0.7;
        let got = objective(&y, &w, &h, alpha).unwrap();
        let mut want = 0.0;
        for u in 0..2 {
            for i in 0..2 {
                let p: f64 = (0..2).map(|k| w.values()[[u, k]] * h.values()[[i, k]]).sum();
                want += nb_divergence(y.get(u, i) as f64, p, alpha).unwrap();
            }
        }
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn objective_rejects_zero_predicted_mean() {
        let y = SparseCountMatrix::new(1, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let w = FactorMatrix::new(Array2::zeros((1, 1))).unwrap();
        let h = FactorMatrix::from_vec(1, 1, vec![1.0]).unwrap();
        assert!(matches!(
            objective(&y, &w, &h, 1.0),
            Err(Error::NumericalDomain { .. })
        ));
    }

    #[test]
    fn pmf_normalizes_and_matches_moments() {
        let (mean, alpha) = (2.0, 1.0);
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for y in 0..=500u64 {
            let p = nb_log_pmf(y, mean, alpha).unwrap().exp();
            z += p;
            m1 += y as f64 * p;
            m2 += (y as f64) * (y as f64) * p;
        }
        assert!((z - 1.0).abs() < 1e-10, "normalization {z}");
        assert!((m1 - mean).abs() < 1e-8, "mean {m1}");
        let var = m2 - m1 * m1;
        let want_var = mean * (1.0 + mean / alpha);
        assert!((var - want_var).abs() < 1e-6, "variance {var} vs {want_var}");
    }

    #[test]
    fn mle_agrees_between_divergence_and_likelihood() {
        // argmin_b sum_i d_alpha(y_i|b) == argmax_b sum_i nb_log_pmf(y_i, b, alpha)
        // on a shared grid.
        let ys = [0u64, 2, 3, 7, 1, 1, 4];
        let alpha = 0.8;
        let grid: Vec<f64> = (1..400).map(|j| j as f64 * 0.05).collect();
        let best_div = grid
            .iter()
            .min_by(|&&a, &&b| {
                let fa: f64 = ys.iter().map(|&y| nb_div_raw(y as f64, a, alpha)).sum();
                let fb: f64 = ys.iter().map(|&y| nb_div_raw(y as f64, b, alpha)).sum();
                fa.total_cmp(&fb)
            })
            .unwrap();
        let best_ll = grid
            .iter()
            .max_by(|&&a, &&b| {
                let fa: f64 = ys.iter().map(|&y| nb_log_pmf(y, a, alpha).unwrap()).sum();
                let fb: f64 = ys.iter().map(|&y| nb_log_pmf(y, b, alpha).unwrap()).sum();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert_eq!(best_div, best_ll);
    }

    proptest::proptest! {
        #[test]
        fn divergence_nonnegative_with_unique_minimum(
            a in 0.01f64..50.0,
            alpha in 0.05f64..20.0,
        ) {
            // Grid scan over b: minimum sits at b == a, value 0 elsewhere positive.
            let at_a = nb_divergence(a, a, alpha).unwrap();
            proptest::prop_assert_eq!(at_a, 0.0);
            for j in 1..200 {
                let b = 0.02 * j as f64 + 0.013;
                let v = nb_divergence(a, b, alpha).unwrap();
                proptest::prop_assert!(v >= 0.0);
                if (b - a).abs() > 1e-3 {
                    proptest::prop_assert!(v > 0.0, "d({a}|{b}; {alpha}) = {v}");
                }
            }
        }

        #[test]
        fn limit_gap_shrinks_monotonically_in_alpha(
            a in 0.0f64..20.0,
            b in 0.05f64..20.0,
        ) {
            let kl = kl_divergence(a, b).unwrap();
            let mut prev_gap = f64::INFINITY;
            for exp in 2..=8 {
                let alpha = 10f64.powi(exp);
                let gap = (nb_divergence(a, b, alpha).unwrap() - kl).abs();
                proptest::prop_assert!(gap <= prev_gap + 1e-12, "gap grew at alpha={alpha}");
                prev_gap = gap;
            }
        }
    }
}
