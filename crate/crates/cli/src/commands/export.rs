use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use nbmf::data::{binarize, filter_dataset_keeping, read_corpus_from_path, write_triplets};

use super::{ensure_parent_dir, path_arg};
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub input: PathBuf,
    /// Output TSV; the manifest lands next to it as `<out>.manifest.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep users with at least this many distinct items.
    #[arg(long)]
    pub min_items_per_user: Option<usize>,
    /// Keep items with at least this many distinct users.
    #[arg(long)]
    pub min_users_per_item: Option<usize>,
    /// Threshold all counts to 1 after filtering.
    #[arg(long, default_value_t = false)]
    pub binarize: bool,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut argv = vec![
        "--input".into(),
        path_arg(&args.input),
        "--out".into(),
        path_arg(&args.out),
    ];
    if let Some(v) = args.min_items_per_user {
        argv.extend(["--min-items-per-user".into(), v.to_string()]);
    }
    if let Some(v) = args.min_users_per_item {
        argv.extend(["--min-users-per-item".into(), v.to_string()]);
    }
    if args.binarize {
        argv.push("--binarize".into());
    }
    let builder = ManifestBuilder::new("export", argv).input(&args.input)?;

    let corpus = read_corpus_from_path(&args.input)?;
    let (mut matrix, user_tokens, item_tokens) =
        if args.min_items_per_user.is_some() || args.min_users_per_item.is_some() {
            let outcome = filter_dataset_keeping(
                &corpus.matrix,
                args.min_items_per_user.unwrap_or(1),
                args.min_users_per_item.unwrap_or(1),
            )?;
            let users: Vec<String> = outcome
                .kept_users
                .iter()
                .map(|&u| corpus.user_tokens[u].clone())
                .collect();
            let items: Vec<String> = outcome
                .kept_items
                .iter()
                .map(|&i| corpus.item_tokens[i].clone())
                .collect();
            (outcome.matrix, users, items)
        } else {
            (corpus.matrix, corpus.user_tokens, corpus.item_tokens)
        };
    if args.binarize {
        matrix = binarize(&matrix);
    }

    ensure_parent_dir(&args.out)?;
    let file = File::create(&args.out).map_err(CliError::from_io)?;
    write_triplets(
        BufWriter::new(file),
        &matrix,
        Some(&user_tokens),
        Some(&item_tokens),
    )?;

    println!(
        "exported {} users x {} items, nnz={} density={:.4}",
        matrix.n_users(),
        matrix.n_items(),
        matrix.nnz(),
        matrix.density()
    );

    let manifest_path = args.out.with_extension("manifest.json");
    builder.output(&args.out).write(&manifest_path)
}
