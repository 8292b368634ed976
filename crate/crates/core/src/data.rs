//! Triplet ingestion, dataset filtering, binarization, and the train/test
//! split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::counts::{SparseCountMatrix, Triplet};
use crate::error::{Error, Result};

/// A count matrix together with the raw tokens behind its dense indices.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub matrix: SparseCountMatrix,
    pub user_tokens: Vec<String>,
    pub item_tokens: Vec<String>,
}

/// Parse tab-separated `user_token item_token count` lines.
///
/// Tokens map to dense 0-based indices in first-appearance order; duplicate
/// `(user, item)` lines have their counts summed.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut user_ids: HashMap<String, usize> = HashMap::new();
    let mut item_ids: HashMap<String, usize> = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let mut fields = line.split('\t');
        let (user, item, count) = match (fields.next(), fields.next(), fields.next(), fields.next())
        {
            (Some(u), Some(i), Some(c), None) if !u.is_empty() && !i.is_empty() => (u, i, c),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "expected `user<TAB>item<TAB>count`, got {line:?}"
                    ),
                })
            }
        };
        let count: u64 = count.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("count must be a positive integer, got {count:?}"),
        })?;
        if count == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "count must be at least 1".into(),
            });
        }
        let u = *user_ids.entry(user.to_string()).or_insert_with(|| {
            user_tokens.push(user.to_string());
            user_tokens.len() - 1
        });
        let i = *item_ids.entry(item.to_string()).or_insert_with(|| {
            item_tokens.push(item.to_string());
            item_tokens.len() - 1
        });
        *counts.entry((u, i)).or_insert(0) += count;
    }

    if counts.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let entries = counts
        .into_iter()
        .map(|((u, i), c)| Triplet::new(u, i, c))
        .collect();
    let matrix = SparseCountMatrix::new(user_tokens.len(), item_tokens.len(), entries)?;
    Ok(Corpus {
        matrix,
        user_tokens,
        item_tokens,
    })
}

pub fn read_corpus_from_path(path: &Path) -> Result<Corpus> {
    let file = File::open(path)?;
    read_corpus(BufReader::new(file))
}

/// Two matrices sharing one token frame.
#[derive(Debug, Clone)]
pub struct CorpusPair {
    pub first: SparseCountMatrix,
    pub second: SparseCountMatrix,
    pub user_tokens: Vec<String>,
    pub item_tokens: Vec<String>,
}

/// Read two triplet files onto a single frame: tokens index in
/// first-appearance order with the first file read first, so a matrix
/// loaded from the first file alone gets identical indices.
pub fn read_corpus_pair(first: &Path, second: &Path) -> Result<CorpusPair> {
    let a = read_corpus_from_path(first)?;
    let b = read_corpus_from_path(second)?;
    let mut user_tokens = a.user_tokens.clone();
    let mut item_tokens = a.item_tokens.clone();
    let mut user_ids: HashMap<String, usize> = user_tokens.iter().cloned().zip(0..).collect();
    let mut item_ids: HashMap<String, usize> = item_tokens.iter().cloned().zip(0..).collect();
    let mut remap = |tokens: &[String], ids: &mut HashMap<String, usize>,
                     table: &mut Vec<String>|
     -> Vec<usize> {
        tokens
            .iter()
            .map(|t| {
                *ids.entry(t.clone()).or_insert_with(|| {
                    table.push(t.clone());
                    table.len() - 1
                })
            })
            .collect()
    };
    let user_remap = remap(&b.user_tokens, &mut user_ids, &mut user_tokens);
    let item_remap = remap(&b.item_tokens, &mut item_ids, &mut item_tokens);

    let n_users = user_tokens.len();
    let n_items = item_tokens.len();
    let widen = |m: &SparseCountMatrix, user_remap: Option<&[usize]>, item_remap: Option<&[usize]>| {
        let entries = m
            .entries()
            .iter()
            .map(|t| {
                Triplet::new(
                    user_remap.map_or(t.user, |r| r[t.user]),
                    item_remap.map_or(t.item, |r| r[t.item]),
                    t.count,
                )
            })
            .collect();
        SparseCountMatrix::new(n_users, n_items, entries)
    };
    Ok(CorpusPair {
        first: widen(&a.matrix, None, None)?,
        second: widen(&b.matrix, Some(&user_remap), Some(&item_remap))?,
        user_tokens,
        item_tokens,
    })
}

/// [`read_corpus_from_path`] without the token tables.
pub fn load_triplets(path: &Path) -> Result<SparseCountMatrix> {
    Ok(read_corpus_from_path(path)?.matrix)
}

/// Write triplets in the same TSV format; token tables fall back to the
/// decimal indices when absent.
pub fn write_triplets<W: Write>(
    mut out: W,
    matrix: &SparseCountMatrix,
    user_tokens: Option<&[String]>,
    item_tokens: Option<&[String]>,
) -> Result<()> {
    for t in matrix.entries() {
        match (user_tokens, item_tokens) {
            (Some(us), Some(is)) => {
                writeln!(out, "{}\t{}\t{}", us[t.user], is[t.item], t.count)?
            }
            _ => writeln!(out, "{}\t{}\t{}", t.user, t.item, t.count)?,
        }
    }
    Ok(())
}

/// Outcome of [`filter_dataset_keeping`]: the filtered matrix plus the
/// original indices that survived, in order.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub matrix: SparseCountMatrix,
    pub kept_users: Vec<usize>,
    pub kept_items: Vec<usize>,
}

/// Alternately drop users with too few distinct items and items with too few
/// distinct users until nothing changes, then recompact indices.
///
/// One-shot filtering can leave fresh violations behind, so this iterates to
/// the fixed point.
pub fn filter_dataset_keeping(
    y: &SparseCountMatrix,
    min_items_per_user: usize,
    min_users_per_item: usize,
) -> Result<FilterOutcome> {
    if min_items_per_user == 0 || min_users_per_item == 0 {
        return Err(Error::InvalidArgument(
            "filtering thresholds must be at least 1".into(),
        ));
    }
    let mut keep_user = vec![true; y.n_users()];
    let mut keep_item = vec![true; y.n_items()];
    loop {
        let mut changed = false;
        let mut user_deg = vec![0usize; y.n_users()];
        for t in y.entries() {
            if keep_user[t.user] && keep_item[t.item] {
                user_deg[t.user] += 1;
            }
        }
        for (u, keep) in keep_user.iter_mut().enumerate() {
            if *keep && user_deg[u] < min_items_per_user {
                *keep = false;
                changed = true;
            }
        }
        let mut item_deg = vec![0usize; y.n_items()];
        for t in y.entries() {
            if keep_user[t.user] && keep_item[t.item] {
                item_deg[t.item] += 1;
            }
        }
        for (i, keep) in keep_item.iter_mut().enumerate() {
            if *keep && item_deg[i] < min_users_per_item {
                *keep = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept_users: Vec<usize> = (0..y.n_users()).filter(|&u| keep_user[u]).collect();
    let kept_items: Vec<usize> = (0..y.n_items()).filter(|&i| keep_item[i]).collect();
    if kept_users.is_empty() || kept_items.is_empty() {
        return Err(Error::InvalidArgument("empty after filtering".into()));
    }
    let user_map: HashMap<usize, usize> =
        kept_users.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let item_map: HashMap<usize, usize> =
        kept_items.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let entries = y
        .entries()
        .iter()
        .filter(|t| keep_user[t.user] && keep_item[t.item])
        .map(|t| Triplet::new(user_map[&t.user], item_map[&t.item], t.count))
        .collect();
    let matrix = SparseCountMatrix::new(kept_users.len(), kept_items.len(), entries)?;
    Ok(FilterOutcome {
        matrix,
        kept_users,
        kept_items,
    })
}

pub fn filter_dataset(
    y: &SparseCountMatrix,
    min_items_per_user: usize,
    min_users_per_item: usize,
) -> Result<SparseCountMatrix> {
    Ok(filter_dataset_keeping(y, min_items_per_user, min_users_per_item)?.matrix)
}

/// Threshold every positive count to 1; the support is unchanged.
pub fn binarize(y: &SparseCountMatrix) -> SparseCountMatrix {
    let entries = y
        .entries()
        .iter()
        .map(|t| Triplet::new(t.user, t.item, 1))
        .collect();
    SparseCountMatrix::new(y.n_users(), y.n_items(), entries)
        .expect("binarization preserves validity")
}

#[derive(Debug, Clone)]
pub struct SplitResult {
    pub y_train: SparseCountMatrix,
    pub y_test: SparseCountMatrix,
    pub split_seed: u64,
}

/// Randomly assign `floor(fraction * nnz)` of the nonzeros to the train
/// matrix and the rest to the test matrix, both on the original U x I frame.
/// Zeros stay zero on both sides, preserving the ambiguity between negative
/// and missing feedback.
pub fn split_train_test(y: &SparseCountMatrix, fraction: f64, seed: u64) -> Result<SplitResult> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if y.nnz() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two nonzeros to split".into(),
        ));
    }
    let mut order: Vec<usize> = (0..y.nnz()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (fraction * y.nnz() as f64).floor() as usize;
    let entries = y.entries();
    let train: Vec<Triplet> = order[..n_train].iter().map(|&e| entries[e]).collect();
    let test: Vec<Triplet> = order[n_train..].iter().map(|&e| entries[e]).collect();
    Ok(SplitResult {
        y_train: SparseCountMatrix::new(y.n_users(), y.n_items(), train)?,
        y_test: SparseCountMatrix::new(y.n_users(), y.n_items(), test)?,
        split_seed: seed,
    })
}

/// Fraction of nonzeros at or above each threshold, for cumulative histogram
/// export: `out[s-1]` is the share of nonzeros with count >= s.
pub fn cumulative_count_fractions(y: &SparseCountMatrix, max_threshold: u64) -> Vec<f64> {
    let nnz = y.nnz() as f64;
    (1..=max_threshold)
        .map(|s| y.entries().iter().filter(|t| t.count >= s).count() as f64 / nnz)
        .collect()
}
