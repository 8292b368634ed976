pub mod evaluate;
pub mod export;
pub mod recommend;
pub mod rerun;
pub mod simulate;
pub mod split;
pub mod train;

use std::path::Path;

use crate::CliError;

/// Shared hyperparameter flags for commands that touch the model.
#[derive(Debug, Clone, clap::Args)]
pub struct HyperFlags {
    /// NB dispersion coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Gamma prior shape for user factors.
    #[arg(long, default_value_t = 1.0)]
    pub alpha_w: f64,
    /// Gamma prior rate for user factors (the scale anchor).
    #[arg(long, default_value_t = 1.0)]
    pub beta_w: f64,
    /// Gamma prior shape for item factors.
    #[arg(long, default_value_t = 1.0)]
    pub alpha_h: f64,
    /// Gamma prior rate for item factors (initial value when learned).
    #[arg(long, default_value_t = 1.0)]
    pub beta_h: f64,
}

impl HyperFlags {
    pub fn to_hyper(&self, mode: nbmf::Mode) -> Result<nbmf::HyperParams, CliError> {
        let hyper = nbmf::HyperParams {
            alpha: self.alpha,
            alpha_w: self.alpha_w,
            beta_w: self.beta_w,
            alpha_h: self.alpha_h,
            beta_h: self.beta_h,
            mode,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn argv(&self) -> Vec<String> {
        vec![
            "--alpha".into(),
            self.alpha.to_string(),
            "--alpha-w".into(),
            self.alpha_w.to_string(),
            "--beta-w".into(),
            self.beta_w.to_string(),
            "--alpha-h".into(),
            self.alpha_h.to_string(),
            "--beta-h".into(),
            self.beta_h.to_string(),
        ]
    }
}

pub fn ensure_parent_dir(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(CliError::from_io)?;
        }
    }
    Ok(())
}

pub fn path_arg(path: &Path) -> String {
    path.display().to_string()
}
