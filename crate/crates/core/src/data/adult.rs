//! The Adult census dataset in svmlight text form, plus a seeded
//! generator producing files of the same shape for environments without
//! the originals.
//!
//! Each line is `<label> <index>:<value> ...` with 1-based feature
//! indices. Labels +1/-1 map to classes 1/0; absent features map to
//! -1 and present ones to +1, so every loaded feature is a spin value.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Feature dimension of the Adult (a1a) release.
pub const ADULT_DIM: usize = 123;
/// Training rows in a1a.
pub const ADULT_TRAIN_ROWS: usize = 1605;
/// Test rows in a1a.t.
pub const ADULT_TEST_ROWS: usize = 30956;

/// One parsed svmlight row: class 0/1 and the 1-based active indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SvmlightRow {
    pub label: usize,
    pub active: Vec<usize>,
}

/// Parses svmlight text. `dim` bounds the allowed indices; indices are
/// 1-based in the file. `path` only labels errors.
pub fn parse_svmlight(text: &str, dim: usize, path: &str) -> Result<Vec<SvmlightRow>> {
    let err = |line: usize, msg: String| Error::Parse { path: path.into(), line, msg };
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label = match label_tok {
            "+1" | "1" => 1,
            "-1" => 0,
            other => {
                return Err(err(lineno, format!("expected a +1/-1 label, got {other:?}")));
            }
        };
        let mut active = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("expected index:value, got {tok:?}")))?;
            let index: usize = i
                .parse()
                .map_err(|_| err(lineno, format!("bad feature index {i:?}")))?;
            if index == 0 || index > dim {
                return Err(err(
                    lineno,
                    format!("feature index {index} out of range 1..={dim}"),
                ));
            }
            let value: f64 = v
                .parse()
                .map_err(|_| err(lineno, format!("bad feature value {v:?}")))?;
            if value != 1.0 {
                return Err(err(
                    lineno,
                    format!("binary features must have value 1, got {value}"),
                ));
            }
            if active.contains(&index) {
                return Err(err(lineno, format!("duplicate feature index {index}")));
            }
            active.push(index);
        }
        rows.push(SvmlightRow { label, active });
    }
    Ok(rows)
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn rows_to_matrix(rows: &[SvmlightRow], dim: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut x = DMatrix::from_element(rows.len(), dim, -1.0);
    let mut y = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        for &i in &row.active {
            x[(r, i - 1)] = 1.0;
        }
        y.push(row.label);
    }
    (x, y)
}

/// Loads the Adult train/test pair. Features become spins (-1 absent,
/// +1 present). With `feature_subset = Some(k)`, `k` of the 123
/// features are chosen uniformly by the seed and the matrix shrinks to
/// those columns, in ascending original order.
pub fn load_adult(
    train_path: &Path,
    test_path: &Path,
    feature_subset: Option<usize>,
    seed: u64,
) -> Result<TabularDataset> {
    let train_rows = parse_svmlight(
        &read_to_string(train_path)?,
        ADULT_DIM,
        &train_path.display().to_string(),
    )?;
    let test_rows = parse_svmlight(
        &read_to_string(test_path)?,
        ADULT_DIM,
        &test_path.display().to_string(),
    )?;

    let all: Vec<SvmlightRow> = train_rows.iter().chain(test_rows.iter()).cloned().collect();
    let (mut x, y) = rows_to_matrix(&all, ADULT_DIM);

    if let Some(k) = feature_subset {
        if k == 0 || k > ADULT_DIM {
            return Err(Error::InvalidArgument(format!(
                "feature subset size must be in 1..={ADULT_DIM}, got {k}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut columns: Vec<usize> = (0..ADULT_DIM).collect();
        columns.shuffle(&mut rng);
        let mut keep: Vec<usize> = columns.into_iter().take(k).collect();
        keep.sort_unstable();
        x = DMatrix::from_fn(x.nrows(), k, |r, c| x[(r, keep[c])]);
    }

    Ok(TabularDataset {
        x,
        y,
        train: (0..train_rows.len()).collect(),
        test: (train_rows.len()..all.len()).collect(),
        seed,
    })
}

/// Category blocks partitioning the 123 slots, mirroring the one-hot
/// structure of the original encoding: each generated row activates one
/// slot per block.
const CATEGORY_BLOCKS: usize = 14;

/// Writes a seeded Adult-shaped train/test pair in svmlight form, with
/// the a1a row counts and feature dimension. Labels follow a sparse
/// linear rule over the active slots with 10% label noise, so the data
/// is learnable but not trivially so.
pub fn synthesize_adult(dir: &Path, seed: u64) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Block b covers slots [bounds[b], bounds[b+1]).
    let mut bounds = vec![0usize];
    let base = ADULT_DIM / CATEGORY_BLOCKS;
    let extra = ADULT_DIM % CATEGORY_BLOCKS;
    for b in 0..CATEGORY_BLOCKS {
        bounds.push(bounds[b] + base + usize::from(b < extra));
    }
    let weights: Vec<f64> = (0..ADULT_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut write_split = |name: &str, rows: usize| -> Result<std::path::PathBuf> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut out = std::io::BufWriter::new(file);
        for _ in 0..rows {
            let mut active: Vec<usize> = (0..CATEGORY_BLOCKS)
                .map(|b| rng.gen_range(bounds[b]..bounds[b + 1]))
                .collect();
            active.sort_unstable();
            let score: f64 = active.iter().map(|&i| weights[i]).sum();
            let mut label = score >= 0.0;
            if rng.gen::<f64>() < 0.1 {
                label = !label;
            }
            let mut line = String::from(if label { "+1" } else { "-1" });
            for i in &active {
                line.push_str(&format!(" {}:1", i + 1));
            }
            line.push('\n');
            out.write_all(line.as_bytes()).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        out.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(path)
    };

    let train = write_split("a1a", ADULT_TRAIN_ROWS)?;
    let test = write_split("a1a.t", ADULT_TEST_ROWS)?;
    Ok((train, test))
}
