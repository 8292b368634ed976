//! Sampling from the generative model to build planted-factor datasets.
//!
//! The hierarchy is `w ~ Gamma(alpha_w, beta_w)`, `h ~ Gamma(alpha_h,
//! beta_h)`, `a_ui ~ Gamma(alpha, alpha)` and `y_ui ~ Pois(a_ui [W H^T]_ui)`,
//! so the marginal of `y` is the mean-parametrized NB distribution.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;

use crate::counts::{SparseCountMatrix, Triplet};
use crate::error::{Error, Result};
use crate::factors::{dot, FactorMatrix};
use crate::params::{HyperParams, Mode};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub k_true: usize,
    pub hyper: HyperParams,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub y: SparseCountMatrix,
    pub w_true: FactorMatrix,
    pub h_true: FactorMatrix,
    pub a_true: Array2<f64>,
}

/// Gamma draw in the (shape, rate) parametrization, mean `shape/rate`.
///
/// Marsaglia-Tsang squeeze-and-reject for shape >= 1 with the
/// `x * u^(1/shape)` boost below 1. Panics on non-positive parameters.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    assert!(
        shape > 0.0 && rate > 0.0,
        "sample_gamma requires positive shape and rate"
    );
    Gamma::new(shape, 1.0 / rate)
        .expect("validated parameters")
        .sample(rng)
}

/// Poisson draw; a zero mean always yields zero. Inversion below mean 10,
/// transformed rejection above. Panics on negative or non-finite means.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    assert!(
        mean >= 0.0 && mean.is_finite(),
        "sample_poisson requires a finite nonnegative mean"
    );
    if mean == 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("validated mean").sample(rng);
    draw as u64
}

// Row substreams: one counter-based generator per (tag, row) so parallel and
// serial generation produce identical output.
const STREAM_W: u64 = 1;
const STREAM_H: u64 = 2;
const STREAM_AY: u64 = 3;

fn row_rng(seed: u64, tag: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) | row as u64);
    rng
}

/// Draw planted factors, exposures, and the observed count matrix.
///
/// In `Mode::Pf` the exposure is pinned to 1 and `y` is plain Poisson.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.hyper.validate()?;
    if spec.n_users == 0 || spec.n_items == 0 || spec.k_true == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dimensions must be at least 1".into(),
        ));
    }
    let hyper = &spec.hyper;
    let k = spec.k_true;

    let sample_factor = |rows: usize, tag: u64, shape: f64, rate: f64| -> FactorMatrix {
        let mut data = vec![0.0; rows * k];
        data.par_chunks_mut(k).enumerate().for_each(|(r, row)| {
            let mut rng = row_rng(spec.seed, tag, r);
            for slot in row.iter_mut() {
                *slot = sample_gamma(shape, rate, &mut rng);
            }
        });
        FactorMatrix::from_vec(rows, k, data).expect("gamma draws are positive")
    };
    let w_true = sample_factor(spec.n_users, STREAM_W, hyper.alpha_w, hyper.beta_w);
    let h_true = sample_factor(spec.n_items, STREAM_H, hyper.alpha_h, hyper.beta_h);

    let n_items = spec.n_items;
    let rows: Vec<(Vec<f64>, Vec<Triplet>)> = (0..spec.n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = row_rng(spec.seed, STREAM_AY, u);
            let wu = w_true.row_slice(u);
            let mut a_row = vec![1.0; n_items];
            let mut entries = Vec::new();
            for i in 0..n_items {
                let a = match hyper.mode {
                    Mode::Pf => 1.0,
                    Mode::Nbmf => sample_gamma(hyper.alpha, hyper.alpha, &mut rng),
                };
                a_row[i] = a;
                let mean = a * dot(wu, h_true.row_slice(i));
                let y = sample_poisson(mean, &mut rng);
                if y > 0 {
                    entries.push(Triplet::new(u, i, y));
                }
            }
            (a_row, entries)
        })
        .collect();

    let mut a_true = Array2::zeros((spec.n_users, spec.n_items));
    let mut entries = Vec::new();
    for (u, (a_row, row_entries)) in rows.into_iter().enumerate() {
        for (i, a) in a_row.into_iter().enumerate() {
            a_true[[u, i]] = a;
        }
        entries.extend(row_entries);
    }
    let y = SparseCountMatrix::new(spec.n_users, spec.n_items, entries)?;
    Ok(SynthData {
        y,
        w_true,
        h_true,
        a_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_moments_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_gamma(2.0, 4.0, &mut rng)).collect();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        // Var of Gamma(2, 4) is 2/16; three standard errors of the mean.
        let se = (2.0 / 16.0 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
        assert!(draws.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn unit_mean_exposure_has_inverse_alpha_variance() {
        let alpha = 2.5;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_gamma(alpha, alpha, &mut rng))
            .collect();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let var: f64 =
            draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0 / alpha).abs() < 0.02, "var {var}");
    }

    #[test]
    fn samplers_are_reproducible() {
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..50).map(|_| sample_gamma(0.7, 1.3, &mut rng)).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..50).map(|_| sample_gamma(0.7, 1.3, &mut rng)).collect()
        };
        assert_eq!(a, b);
        let p: Vec<u64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (0..50).map(|_| sample_poisson(3.7, &mut rng)).collect()
        };
        let q: Vec<u64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            (0..50).map(|_| sample_poisson(3.7, &mut rng)).collect()
        };
        assert_eq!(p, q);
    }

    #[test]
    fn zero_mean_poisson_is_always_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_poisson(0.0, &mut rng), 0);
        }
    }

    #[test]
    fn poisson_moment_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mean_target = 3.7;
        let total: u64 = (0..n).map(|_| sample_poisson(mean_target, &mut rng)).sum();
        let mean = total as f64 / n as f64;
        let se = (mean_target / n as f64).sqrt();
        assert!((mean - mean_target).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = SynthSpec {
            n_users: 12,
            n_items: 9,
            k_true: 2,
            hyper: HyperParams::default(),
            seed: 99,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.w_true.values(), b.w_true.values());
        assert_eq!(a.h_true.values(), b.h_true.values());
        assert_eq!(a.a_true, b.a_true);
    }

    #[test]
    fn huge_alpha_looks_poisson() {
        // Dispersion index of y over ~1e5 cells should sit near 1. Tightly
        // concentrated factor priors keep the cell means homogeneous so the
        // pooled index reflects the count noise alone.
        let spec = SynthSpec {
            n_users: 400,
            n_items: 250,
            k_true: 1,
            hyper: HyperParams {
                alpha: 1e6,
                alpha_w: 1e6,
                beta_w: 1e6,
                alpha_h: 1e6,
                beta_h: 1e6,
                ..Default::default()
            },
            seed: 5,
        };
        let data = generate(&spec).unwrap();
        let (mean, var) = dispersion(&data.y);
        let index = var / mean;
        assert!((0.9..=1.1).contains(&index), "dispersion index {index}");
    }

    #[test]
    fn small_alpha_is_overdispersed() {
        // Fixed factors with [W H^T] = 2 exactly; alpha = 0.5 gives
        // var = 2 (1 + 2/0.5) = 10.
        let n = 100_000usize;
        let alpha = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws: Vec<u64> = (0..n)
            .map(|_| {
                let a = sample_gamma(alpha, alpha, &mut rng);
                sample_poisson(2.0 * a, &mut rng)
            })
            .collect();
        let mean: f64 = draws.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
        let var: f64 = draws
            .iter()
            .map(|&d| (d as f64 - mean) * (d as f64 - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((var - 10.0).abs() < 0.15 * 10.0, "var {var}");
        assert!(var / mean > 1.0);
    }

    fn dispersion(y: &SparseCountMatrix) -> (f64, f64) {
        let cells = y.n_users() as f64 * y.n_items() as f64;
        let mean = y.total_count() as f64 / cells;
        let sum_sq: f64 = y
            .entries()
            .iter()
            .map(|t| (t.count as f64) * (t.count as f64))
            .sum();
        let var = sum_sq / cells - mean * mean;
        (mean, var)
    }
}
