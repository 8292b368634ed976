//! Model hyperparameters.

use crate::error::{Error, Result};

/// Which observation model the solvers target.
///
/// `Pf` pins the exposure variable to 1 exactly (the infinite-dispersion
/// limit), recovering plain Poisson factorization with no numerical drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nbmf,
    Pf,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Nbmf => "nbmf",
            Mode::Pf => "pf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nbmf" => Ok(Mode::Nbmf),
            "pf" => Ok(Mode::Pf),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// NB dispersion plus gamma prior shapes/rates for the factor matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// NB dispersion; small values mean heavy over-dispersion.
    pub alpha: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub mode: Mode,
}

impl Default for HyperParams {
    /// The reference experimental configuration: unit gamma priors with
    /// `beta_w = alpha_w`, dispersion 1.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            alpha_w: 1.0,
            beta_w: 1.0,
            alpha_h: 1.0,
            beta_h: 1.0,
            mode: Mode::Nbmf,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("alpha_w", self.alpha_w),
            ("beta_w", self.beta_w),
            ("alpha_h", self.alpha_h),
            ("beta_h", self.beta_h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "hyperparameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The rate rescaling that leaves the likelihood unchanged:
    /// `beta_w -> lambda * beta_w`, `beta_h -> beta_h / lambda`.
    pub fn scale_transform(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be strictly positive, got {lambda}"
            )));
        }
        Ok(Self {
            beta_w: self.beta_w * lambda,
            beta_h: self.beta_h / lambda,
            ..*self
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_reference_configuration() {
        let h = HyperParams::default();
        assert_eq!(h.alpha_w, 1.0);
        assert_eq!(h.alpha_h, 1.0);
        assert_eq!(h.beta_w, h.alpha_w);
        assert_eq!(h.alpha, 1.0);
        assert_eq!(h.mode, Mode::Nbmf);
        h.validate().unwrap();
    }

    #[test]
    fn rejects_non_positive_fields() {
        let mut h = HyperParams::default();
        h.alpha = 0.0;
        assert!(h.validate().is_err());
        h.alpha = -1.0;
        assert!(h.validate().is_err());
        h.alpha = f64::NAN;
        assert!(h.validate().is_err());
    }

    #[test]
    fn mode_round_trips_through_strings() {
        assert_eq!(Mode::parse("nbmf").unwrap(), Mode::Nbmf);
        assert_eq!(Mode::parse(Mode::Pf.as_str()).unwrap(), Mode::Pf);
        assert!(Mode::parse("poisson").is_err());
    }
}
