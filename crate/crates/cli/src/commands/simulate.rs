use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use nbmf::data::write_triplets;
use nbmf::model_io::write_matrix_csv;
use nbmf::synth::{generate, SynthSpec};
use nbmf::Mode;

use super::{path_arg, HyperFlags};
use crate::manifest::ManifestBuilder;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub users: usize,
    #[arg(long)]
    pub items: usize,
    /// Number of planted latent factors.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for triplets.tsv, the true factors and the manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperFlags,
    /// Observation model: `nbmf` draws exposures, `pf` pins them to 1.
    #[arg(long, default_value = "nbmf")]
    pub mode: String,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mode = Mode::parse(&args.mode)?;
    let hyper = args.hyper.to_hyper(mode)?;
    let spec = SynthSpec {
        n_users: args.users,
        n_items: args.items,
        k_true: args.k,
        hyper,
        seed: args.seed,
    };
    let mut argv: Vec<String> = vec![
        "--users".into(),
        args.users.to_string(),
        "--items".into(),
        args.items.to_string(),
        "--k".into(),
        args.k.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out".into(),
        path_arg(&args.out),
        "--mode".into(),
        mode.as_str().into(),
    ];
    argv.extend(args.hyper.argv());
    let builder = ManifestBuilder::new("simulate", argv).seed(args.seed);

    let data = generate(&spec)?;
    fs::create_dir_all(&args.out).map_err(CliError::from_io)?;

    let triplets = args.out.join("triplets.tsv");
    // Tokens are the generator's own indices, so *_true.csv rows can be
    // matched back to them.
    let user_tokens: Vec<String> = (0..args.users).map(|u| u.to_string()).collect();
    let item_tokens: Vec<String> = (0..args.items).map(|i| i.to_string()).collect();
    let file = File::create(&triplets).map_err(CliError::from_io)?;
    write_triplets(
        BufWriter::new(file),
        &data.y,
        Some(&user_tokens),
        Some(&item_tokens),
    )?;

    let w_path = args.out.join("W_true.csv");
    let h_path = args.out.join("H_true.csv");
    let a_path = args.out.join("A_true.csv");
    write_matrix_csv(&w_path, data.w_true.values())?;
    write_matrix_csv(&h_path, data.h_true.values())?;
    write_matrix_csv(&a_path, &data.a_true)?;

    println!(
        "simulated {}x{} counts: nnz={} density={:.4}",
        args.users,
        args.items,
        data.y.nnz(),
        data.y.density()
    );

    builder
        .output(&triplets)
        .output(&w_path)
        .output(&h_path)
        .output(&a_path)
        .write(&args.out.join("manifest.json"))
}
