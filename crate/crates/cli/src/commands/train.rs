use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use nbmf::cavi::{fit_cavi, CaviConfig};
use nbmf::data::{binarize, read_corpus_from_path};
use nbmf::mm::{fit_mm, MmConfig};
use nbmf::model_io::{save_model, ModelMeta};
use nbmf::{FitTrace, Mode};

use super::{path_arg, HyperFlags};
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Estimator: `mm` (maximum likelihood), `cavi` (Bayesian NBMF),
    /// `pf` (Poisson factorization), `pf-bin` (PF on binarized counts).
    #[arg(long)]
    pub method: String,
    /// Number of latent factors.
    #[arg(long)]
    pub k: usize,
    /// Training triplets (TSV).
    #[arg(long)]
    pub train: PathBuf,
    /// Model output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub hyper: HyperFlags,
    /// Keep `beta_h` fixed instead of re-estimating it every sweep.
    #[arg(long, default_value_t = false)]
    pub fix_beta_h: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Relative convergence tolerance (objective decrease or ELBO increment).
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let method = args.method.as_str();
    let mode = match method {
        "mm" | "cavi" => Mode::Nbmf,
        "pf" | "pf-bin" => Mode::Pf,
        other => {
            return Err(CliError::usage(format!(
                "unknown method `{other}` (expected mm, cavi, pf or pf-bin)"
            )))
        }
    };
    let hyper = args.hyper.to_hyper(mode)?;

    let mut argv: Vec<String> = vec![
        "--method".into(),
        method.into(),
        "--k".into(),
        args.k.to_string(),
        "--train".into(),
        path_arg(&args.train),
        "--out".into(),
        path_arg(&args.out),
        "--seed".into(),
        args.seed.to_string(),
        "--max-iters".into(),
        args.max_iters.to_string(),
        "--tol".into(),
        args.tol.to_string(),
    ];
    if args.fix_beta_h {
        argv.push("--fix-beta-h".into());
    }
    argv.extend(args.hyper.argv());
    let builder = ManifestBuilder::new("train", argv)
        .seed(args.seed)
        .input(&args.train)?;

    let corpus = read_corpus_from_path(&args.train)?;
    let binarized = method == "pf-bin";
    let y = if binarized {
        binarize(&corpus.matrix)
    } else {
        corpus.matrix
    };

    let (w, h, trace, final_hyper, qa_mean) = match method {
        "mm" => {
            let config = MmConfig {
                k: args.k,
                alpha: args.hyper.alpha,
                max_iters: args.max_iters,
                rel_tol: args.tol,
                seed: args.seed,
                init_scale: None,
            };
            let fit = fit_mm(&y, &config)?;
            (fit.w, fit.h, fit.trace, hyper, None)
        }
        _ => {
            let config = CaviConfig {
                k: args.k,
                hyper,
                max_iters: args.max_iters,
                rel_tol: args.tol,
                seed: args.seed,
                learn_beta_h: !args.fix_beta_h,
                ..CaviConfig::new(args.k)
            };
            let fit = fit_cavi(&y, &config)?;
            let qa_mean = if method == "cavi" {
                fit.state.exposure_mean_dense(&y, fit.hyper.alpha)
            } else {
                None
            };
            (
                fit.state.q_w.mean_factor(),
                fit.state.q_h.mean_factor(),
                fit.trace,
                fit.hyper,
                qa_mean,
            )
        }
    };

    let meta = ModelMeta {
        n_users: y.n_users(),
        n_items: y.n_items(),
        k: args.k,
        method: method.to_string(),
        binarized,
        seed: args.seed,
        hyper: final_hyper,
    };
    fs::create_dir_all(&args.out).map_err(CliError::from_io)?;
    save_model(&args.out, &meta, &w, &h, qa_mean.as_ref())?;
    let trace_path = args.out.join("trace.csv");
    write_trace(&trace, &trace_path)?;

    println!(
        "trained {method} model: k={} iters={} final_objective={}",
        args.k,
        trace.len(),
        trace.last_objective().unwrap_or(f64::NAN)
    );

    let mut builder = builder
        .output(&args.out.join("meta"))
        .output(&args.out.join("W.csv"))
        .output(&args.out.join("H.csv"));
    if qa_mean.is_some() {
        builder = builder.output(&args.out.join("q_a_mean.csv"));
    }
    builder.write(&args.out.join("manifest.json"))
}

fn write_trace(trace: &FitTrace, path: &PathBuf) -> Result<(), CliError> {
    let file = File::create(path).map_err(CliError::from_io)?;
    trace
        .write_csv(BufWriter::new(file))
        .map_err(CliError::from_io)
}
