//! Negative binomial matrix factorization for over-dispersed count data.
//!
//! Implicit-feedback counts (plays, clicks, views) are sparse, noisy and
//! bursty; a Poisson model ties their variance to their mean and gets
//! dominated by heavy counts unless the data is binarized first. This crate
//! factorizes such matrices under a mean-parametrized negative binomial
//! model instead: a latent per-cell exposure multiplier with unit mean and
//! variance `1/alpha` absorbs the excess dispersion, so raw counts can be
//! used directly.
//!
//! Two estimators are provided:
//!
//! - [`fit_mm`]: maximum likelihood by alternating multiplicative
//!   majorization-minimization updates of the induced divergence.
//! - [`fit_cavi`]: mean-field variational inference with gamma priors on
//!   both factors, coordinate ascent on the ELBO, and an optional learned
//!   item-rate hyperparameter. Pinning the exposure to 1 yields the Poisson
//!   factorization baselines (raw or binarized counts).
//!
//! Supporting modules cover the generative sampler ([`synth`]), triplet
//! ingestion with filtering and train/test splitting ([`data`]), NDCG
//! ranking evaluation ([`eval`]), and model persistence ([`model_io`]).

pub mod cavi;
pub mod counts;
pub mod data;
pub mod divergence;
pub mod error;
pub mod eval;
pub mod factors;
pub mod mm;
pub mod model_io;
pub mod params;
pub mod posterior;
pub mod special;
pub mod synth;
pub mod trace;

pub use cavi::{fit_cavi, CaviConfig, CaviResult};
pub use counts::{SparseCountMatrix, Triplet};
pub use error::{Error, Result};
pub use factors::{predict_scores, FactorMatrix};
pub use mm::{fit_mm, MmConfig, MmResult};
pub use params::{HyperParams, Mode};
pub use posterior::{Exposure, GammaVariationalMatrix, VariationalState};
pub use trace::FitTrace;
