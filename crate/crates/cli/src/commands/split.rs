use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use nbmf::data::{read_corpus_from_path, split_train_test, write_triplets};

use super::path_arg;
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Triplet TSV to split.
    #[arg(long)]
    pub input: PathBuf,
    /// Fraction of nonzeros sent to the train side (floor rounding).
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for train.tsv, test.tsv and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let argv = vec![
        "--input".into(),
        path_arg(&args.input),
        "--fraction".into(),
        args.fraction.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out".into(),
        path_arg(&args.out),
    ];
    let builder = ManifestBuilder::new("split", argv)
        .seed(args.seed)
        .input(&args.input)?;

    let corpus = read_corpus_from_path(&args.input)?;
    let split = split_train_test(&corpus.matrix, args.fraction, args.seed)?;
    fs::create_dir_all(&args.out).map_err(CliError::from_io)?;

    let train_path = args.out.join("train.tsv");
    let test_path = args.out.join("test.tsv");
    for (path, matrix) in [(&train_path, &split.y_train), (&test_path, &split.y_test)] {
        let file = File::create(path).map_err(CliError::from_io)?;
        write_triplets(
            BufWriter::new(file),
            matrix,
            Some(&corpus.user_tokens),
            Some(&corpus.item_tokens),
        )?;
    }

    println!(
        "split {} nonzeros into {} train / {} test",
        corpus.matrix.nnz(),
        split.y_train.nnz(),
        split.y_test.nnz()
    );

    builder
        .output(&train_path)
        .output(&test_path)
        .write(&args.out.join("manifest.json"))
}
