use std::path::PathBuf;

use crate::manifest::read_manifest;
use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Manifest written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let manifest = read_manifest(&args.manifest)?;
    let mut argv = vec!["nbmf".to_string(), manifest.command.clone()];
    argv.extend(manifest.argv.iter().cloned());
    crate::dispatch_argv(&argv)
}
