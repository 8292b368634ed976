//! Model persistence: a directory holding `meta` (key=value lines) plus
//! `W.csv` / `H.csv`, with values printed at 17 significant digits so a
//! round trip is bit-faithful. Exposure-aware fits add `q_a_mean.csv`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::factors::FactorMatrix;
use crate::params::{HyperParams, Mode};

/// 17 significant digits: enough to reconstruct every f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub method: String,
    pub binarized: bool,
    pub seed: u64,
    pub hyper: HyperParams,
}

const META_FILE: &str = "meta";
const W_FILE: &str = "W.csv";
const H_FILE: &str = "H.csv";
const QA_FILE: &str = "q_a_mean.csv";

pub fn save_model(
    dir: &Path,
    meta: &ModelMeta,
    w: &FactorMatrix,
    h: &FactorMatrix,
    qa_mean: Option<&Array2<f64>>,
) -> Result<()> {
    if w.rows() != meta.n_users
        || h.rows() != meta.n_items
        || w.cols() != meta.k
        || h.cols() != meta.k
    {
        return Err(Error::InvalidArgument(format!(
            "meta says {}x{} with k={}, factors are {}x{} and {}x{}",
            meta.n_users,
            meta.n_items,
            meta.k,
            w.rows(),
            w.cols(),
            h.rows(),
            h.cols()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(META_FILE))?);
    writeln!(out, "u={}", meta.n_users)?;
    writeln!(out, "i={}", meta.n_items)?;
    writeln!(out, "k={}", meta.k)?;
    writeln!(out, "mode={}", meta.hyper.mode.as_str())?;
    writeln!(out, "method={}", meta.method)?;
    writeln!(out, "binarized={}", meta.binarized)?;
    writeln!(out, "seed={}", meta.seed)?;
    writeln!(out, "alpha={}", fmt_f64(meta.hyper.alpha))?;
    writeln!(out, "alpha_w={}", fmt_f64(meta.hyper.alpha_w))?;
    writeln!(out, "beta_w={}", fmt_f64(meta.hyper.beta_w))?;
    writeln!(out, "alpha_h={}", fmt_f64(meta.hyper.alpha_h))?;
    writeln!(out, "beta_h={}", fmt_f64(meta.hyper.beta_h))?;
    out.flush()?;

    write_matrix_csv(&dir.join(W_FILE), w.values())?;
    write_matrix_csv(&dir.join(H_FILE), h.values())?;
    if let Some(qa) = qa_mean {
        write_matrix_csv(&dir.join(QA_FILE), qa)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub meta: ModelMeta,
    pub w: FactorMatrix,
    pub h: FactorMatrix,
    pub qa_mean: Option<Array2<f64>>,
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    let meta = read_meta(&dir.join(META_FILE))?;
    let w = FactorMatrix::new(read_matrix_csv(&dir.join(W_FILE))?)?;
    let h = FactorMatrix::new(read_matrix_csv(&dir.join(H_FILE))?)?;
    if w.rows() != meta.n_users
        || h.rows() != meta.n_items
        || w.cols() != meta.k
        || h.cols() != meta.k
    {
        return Err(Error::InvalidArgument(format!(
            "model dimensions disagree with meta in {}",
            dir.display()
        )));
    }
    let qa_path = dir.join(QA_FILE);
    let qa_mean = if qa_path.exists() {
        let qa = read_matrix_csv(&qa_path)?;
        if qa.dim() != (meta.n_users, meta.n_items) {
            return Err(Error::InvalidArgument(format!(
                "q_a_mean.csv dimensions disagree with meta in {}",
                dir.display()
            )));
        }
        Some(qa)
    } else {
        None
    };
    Ok(LoadedModel {
        meta,
        w,
        h,
        qa_mean,
    })
}

fn read_meta(path: &Path) -> Result<ModelMeta> {
    let file = File::open(path)?;
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("meta is missing `{key}`")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("meta `{key}` is not an integer")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("meta `{key}` is not a number")))
    };
    let hyper = HyperParams {
        alpha: parse_f64("alpha")?,
        alpha_w: parse_f64("alpha_w")?,
        beta_w: parse_f64("beta_w")?,
        alpha_h: parse_f64("alpha_h")?,
        beta_h: parse_f64("beta_h")?,
        mode: Mode::parse(get("mode")?)?,
    };
    hyper.validate()?;
    Ok(ModelMeta {
        n_users: parse_usize("u")?,
        n_items: parse_usize("i")?,
        k: parse_usize("k")?,
        method: get("method")?.clone(),
        binarized: get("binarized")? == "true",
        seed: parse_usize("seed")? as u64,
        hyper,
    })
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path)?;
    let mut data: Vec<f64> = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("not a number: {tok:?}"),
                })
            })
            .collect::<Result<_>>()?;
        match n_cols {
            None => n_cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("ragged row: expected {c} columns, got {}", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::InvalidArgument("empty matrix file".into()))?;
    Array2::from_shape_vec((n_rows, n_cols), data)
        .map_err(|e| Error::InvalidArgument(format!("bad matrix shape: {e}")))
}
