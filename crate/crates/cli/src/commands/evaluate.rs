use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use nbmf::data::read_corpus_pair;
use nbmf::eval::{evaluate, EvalReport, RelevanceSpec};
use nbmf::model_io::{load_model, LoadedModel};
use nbmf::predict_scores;

use super::{ensure_parent_dir, path_arg};
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Model directory; pass several (comma-separated) with --sweep-k.
    #[arg(long, value_delimiter = ',', required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Ground-truth relevance: `a` = raw test counts, `b` = 1[count >= s].
    #[arg(long, default_value = "a")]
    pub rel: String,
    /// Threshold s for relevance b.
    #[arg(long, default_value_t = 1)]
    pub threshold: u64,
    /// Write per-user NDCG values of the (single) model to this CSV.
    #[arg(long)]
    pub per_user: Option<PathBuf>,
    /// Comma-separated thresholds for a relevance-b sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep_s: Option<Vec<u64>>,
    /// CSV destination for --sweep-s rows.
    #[arg(long)]
    pub sweep_out: Option<PathBuf>,
    /// CSV destination for a sweep over the models' latent dimensions.
    #[arg(long)]
    pub sweep_k: Option<PathBuf>,
}

fn relevance_spec(rel: &str, threshold: u64) -> Result<RelevanceSpec, CliError> {
    match rel {
        "a" => Ok(RelevanceSpec::rel_a()),
        "b" => Ok(RelevanceSpec::rel_b(threshold)),
        other => Err(CliError::usage(format!(
            "unknown relevance `{other}` (expected a or b)"
        ))),
    }
}

fn scores_for(
    model: &LoadedModel,
    dir: &Path,
    n_users: usize,
    n_items: usize,
) -> Result<Array2<f64>, CliError> {
    if model.meta.n_users != n_users || model.meta.n_items != n_items {
        return Err(CliError::usage(format!(
            "frame mismatch: model {} is {}x{} but the data frame is {}x{}",
            dir.display(),
            model.meta.n_users,
            model.meta.n_items,
            n_users,
            n_items
        )));
    }
    Ok(predict_scores(&model.w, &model.h)?)
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut argv: Vec<String> = vec!["--model".into(), join_paths(&args.model)];
    argv.extend([
        "--train".into(),
        path_arg(&args.train),
        "--test".into(),
        path_arg(&args.test),
        "--rel".into(),
        args.rel.clone(),
        "--threshold".into(),
        args.threshold.to_string(),
    ]);
    if let Some(p) = &args.per_user {
        argv.extend(["--per-user".into(), path_arg(p)]);
    }
    if let Some(s) = &args.sweep_s {
        let list: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        argv.extend(["--sweep-s".into(), list.join(",")]);
    }
    if let Some(p) = &args.sweep_out {
        argv.extend(["--sweep-out".into(), path_arg(p)]);
    }
    if let Some(p) = &args.sweep_k {
        argv.extend(["--sweep-k".into(), path_arg(p)]);
    }
    let mut builder = ManifestBuilder::new("evaluate", argv)
        .input(&args.train)?
        .input(&args.test)?;

    let pair = read_corpus_pair(&args.train, &args.test)?;
    let (n_users, n_items) = (pair.first.n_users(), pair.first.n_items());
    let spec = relevance_spec(&args.rel, args.threshold)?;

    if let Some(sweep_k_path) = &args.sweep_k {
        let mut rows = Vec::new();
        for dir in &args.model {
            let model = load_model(dir)?;
            let scores = scores_for(&model, dir, n_users, n_items)?;
            let report = evaluate(&scores, &pair.first, &pair.second, &spec)?;
            rows.push((model.meta.k, report.mean_ndcg));
        }
        rows.sort_by_key(|r| r.0);
        ensure_parent_dir(sweep_k_path)?;
        let mut out = BufWriter::new(File::create(sweep_k_path).map_err(CliError::from_io)?);
        writeln!(out, "k,mean_ndcg").map_err(CliError::from_io)?;
        for (k, ndcg) in &rows {
            writeln!(out, "{k},{ndcg}").map_err(CliError::from_io)?;
        }
        out.flush().map_err(CliError::from_io)?;
        println!("wrote k sweep over {} models", rows.len());
        for dir in &args.model {
            builder = builder.output(dir.join("W.csv").as_path());
        }
        return builder
            .output(sweep_k_path)
            .write(&sweep_k_path.with_extension("manifest.json"));
    }

    if args.model.len() != 1 {
        return Err(CliError::usage(
            "multiple --model directories are only valid with --sweep-k",
        ));
    }
    let dir = &args.model[0];
    let model = load_model(dir)?;
    let scores = scores_for(&model, dir, n_users, n_items)?;

    if let Some(thresholds) = &args.sweep_s {
        let sweep_out = args.sweep_out.as_ref().ok_or_else(|| {
            CliError::usage("--sweep-s requires --sweep-out for the CSV destination")
        })?;
        ensure_parent_dir(sweep_out)?;
        let mut out = BufWriter::new(File::create(sweep_out).map_err(CliError::from_io)?);
        writeln!(out, "s,mean_ndcg,evaluated_users").map_err(CliError::from_io)?;
        for &s in thresholds {
            let spec = RelevanceSpec::rel_b(s);
            let report = evaluate(&scores, &pair.first, &pair.second, &spec)?;
            writeln!(out, "{s},{},{}", report.mean_ndcg, report.evaluated_users)
                .map_err(CliError::from_io)?;
        }
        out.flush().map_err(CliError::from_io)?;
        println!("wrote threshold sweep with {} rows", thresholds.len());
        return builder
            .output(sweep_out)
            .write(&sweep_out.with_extension("manifest.json"));
    }

    let report = evaluate(&scores, &pair.first, &pair.second, &spec)?;
    print_report(&report);

    if let Some(per_user_path) = &args.per_user {
        ensure_parent_dir(per_user_path)?;
        write_per_user(per_user_path, &report)?;
        return builder
            .output(per_user_path)
            .write(&per_user_path.with_extension("manifest.json"));
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!("mean_ndcg={}", report.mean_ndcg);
    println!("evaluated_users={}", report.evaluated_users);
    println!("excluded_users={}", report.excluded_users);
}

fn write_per_user(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(CliError::from_io)?);
    writeln!(out, "user,ndcg").map_err(CliError::from_io)?;
    for (u, v) in report.per_user.iter().enumerate() {
        if let Some(ndcg) = v {
            writeln!(out, "{u},{ndcg}").map_err(CliError::from_io)?;
        }
    }
    out.flush().map_err(CliError::from_io)
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",")
}
