use std::path::PathBuf;

use nbmf::data::read_corpus_from_path;
use nbmf::eval::rank_items;
use nbmf::factors::predict_user_scores;
use nbmf::model_io::load_model;

use crate::CliError;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Model directory holding exposure means (a `cavi` fit).
    #[arg(long)]
    pub model: PathBuf,
    /// Training triplets the model was fitted to.
    #[arg(long)]
    pub train: PathBuf,
    /// User token from the training file (or a bare row index).
    #[arg(long)]
    pub user: String,
    /// List length.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let corpus = read_corpus_from_path(&args.train)?;
    if corpus.matrix.n_users() != model.meta.n_users
        || corpus.matrix.n_items() != model.meta.n_items
    {
        return Err(CliError::usage(format!(
            "frame mismatch: model is {}x{} but {} has {}x{}",
            model.meta.n_users,
            model.meta.n_items,
            args.train.display(),
            corpus.matrix.n_users(),
            corpus.matrix.n_items()
        )));
    }
    let qa = model.qa_mean.as_ref().ok_or_else(|| {
        CliError::usage(format!(
            "model {} has no q_a_mean.csv; train with --method cavi for exposure diagnostics",
            args.model.display()
        ))
    })?;

    let user = corpus
        .user_tokens
        .iter()
        .position(|t| t == &args.user)
        .or_else(|| {
            args.user
                .parse::<usize>()
                .ok()
                .filter(|&u| u < corpus.matrix.n_users())
        })
        .ok_or_else(|| CliError::usage(format!("unknown user `{}`", args.user)))?;

    let scores = predict_user_scores(&model.w, &model.h, user)?;
    let mut consumed = vec![false; corpus.matrix.n_items()];
    for t in corpus.matrix.row(user) {
        consumed[t.item] = true;
    }
    let ranking = rank_items(&scores, &consumed);
    let n_unconsumed = consumed.iter().filter(|&&c| !c).count();

    println!("user {} ({})", user, corpus.user_tokens[user]);
    println!("top {} recommendations:", args.top.min(n_unconsumed));
    for (rank, &item) in ranking
        .iter()
        .take(args.top.min(n_unconsumed))
        .enumerate()
    {
        println!(
            "  {:>3}. {}  score={:.6}",
            rank + 1,
            corpus.item_tokens[item],
            scores[item]
        );
    }

    println!("consumed items (exposure diagnostics):");
    for t in corpus.matrix.row(user) {
        let a = qa[[user, t.item]];
        let tag = if a < 0.5 {
            "under"
        } else if a > 2.0 {
            "over"
        } else {
            "neutral"
        };
        println!(
            "  {}  count={}  exposure={:.4}  [{}]",
            corpus.item_tokens[t.item], t.count, a, tag
        );
    }
    Ok(())
}
