//! JSON documents for states, block data and measurement counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{Axis, CountsBlock, NoiseModel, PauliBlockData, SettingCounts};
use crate::states::{AnyState, DenseOperator, MatrixProductOperator, SiteTensor};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported document version {version} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(Error::Format(format!("ragged matrix in {what}")));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}

/// Self-describing state document, tagged by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StateDoc {
    Mpo {
        version: u32,
        n_sites: usize,
        d: usize,
        bond_dims: Vec<usize>,
        /// `tensors[site][alpha][left][right]`
        tensors: Vec<Vec<Vec<Vec<f64>>>>,
    },
    Dense {
        version: u32,
        n_sites: usize,
        d: usize,
        /// Row-major `[re, im]` pairs.
        matrix: Vec<Vec<[f64; 2]>>,
    },
}

fn mpo_doc(mpo: &MatrixProductOperator) -> StateDoc {
    StateDoc::Mpo {
        version: FORMAT_VERSION,
        n_sites: mpo.n_sites(),
        d: mpo.d(),
        bond_dims: mpo.bond_dims(),
        tensors: mpo
            .sites()
            .iter()
            .map(|s| s.matrices().iter().map(matrix_rows).collect())
            .collect(),
    }
}

fn dense_doc(state: &DenseOperator) -> StateDoc {
    StateDoc::Dense {
        version: FORMAT_VERSION,
        n_sites: state.n_sites(),
        d: state.d(),
        matrix: state
            .matrix()
            .row_iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect(),
    }
}

fn state_from_doc(doc: StateDoc) -> Result<AnyState> {
    match doc {
        StateDoc::Mpo {
            version,
            n_sites,
            d,
            bond_dims,
            tensors,
        } => {
            check_version(version)?;
            let sites = tensors
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let mats = t
                        .iter()
                        .map(|m| matrix_from_rows(m, &format!("site {i}")))
                        .collect::<Result<Vec<_>>>()?;
                    SiteTensor::new(mats)
                })
                .collect::<Result<Vec<_>>>()?;
            let mpo = MatrixProductOperator::new(d, sites)?;
            if mpo.n_sites() != n_sites || mpo.bond_dims() != bond_dims {
                return Err(Error::Format("declared sizes do not match the tensors".into()));
            }
            Ok(AnyState::Mpo(mpo))
        }
        StateDoc::Dense {
            version,
            n_sites,
            d,
            matrix,
        } => {
            check_version(version)?;
            let dim = matrix.len();
            if matrix.iter().any(|r| r.len() != dim) {
                return Err(Error::Format("dense matrix must be square".into()));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| Complex64::new(matrix[i][j][0], matrix[i][j][1]));
            let state = DenseOperator::new(m, d)?;
            if state.n_sites() != n_sites {
                return Err(Error::Format("declared n_sites does not match the matrix".into()));
            }
            Ok(AnyState::Dense(state))
        }
    }
}

pub fn mpo_to_json(mpo: &MatrixProductOperator) -> Result<String> {
    Ok(serde_json::to_string(&mpo_doc(mpo))?)
}

pub fn dense_to_json(state: &DenseOperator) -> Result<String> {
    Ok(serde_json::to_string(&dense_doc(state))?)
}

pub fn state_to_json(state: &AnyState) -> Result<String> {
    match state {
        AnyState::Dense(s) => dense_to_json(s),
        AnyState::Mpo(m) => mpo_to_json(m),
    }
}

/// Parses either state document, dispatching on `kind`.
pub fn state_from_json(text: &str) -> Result<AnyState> {
    state_from_doc(serde_json::from_str(text)?)
}

pub fn save_state(path: &Path, state: &AnyState) -> Result<()> {
    fs::write(path, state_to_json(state)?)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<AnyState> {
    state_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum NoiseDoc {
    None,
    Scalar {
        variance: f64,
    },
    Fisher {
        covariance: Option<Vec<Vec<f64>>>,
        fallback_variance: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockDataDoc {
    version: u32,
    kind: String,
    n_sites: usize,
    window: usize,
    d: usize,
    blocks: Vec<Vec<f64>>,
    noise: Vec<NoiseDoc>,
}

pub fn block_data_to_json(data: &PauliBlockData) -> Result<String> {
    let noise = data
        .noise_models()
        .iter()
        .map(|n| match n {
            NoiseModel::None => NoiseDoc::None,
            NoiseModel::Scalar { variance } => NoiseDoc::Scalar { variance: *variance },
            NoiseModel::Fisher {
                covariance,
                fallback_variance,
            } => NoiseDoc::Fisher {
                covariance: covariance.as_ref().map(matrix_rows),
                fallback_variance: *fallback_variance,
            },
        })
        .collect();
    let doc = BlockDataDoc {
        version: FORMAT_VERSION,
        kind: "block_data".into(),
        n_sites: data.n_sites(),
        window: data.window(),
        d: data.d(),
        blocks: data.blocks().to_vec(),
        noise,
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn block_data_from_json(text: &str) -> Result<PauliBlockData> {
    let doc: BlockDataDoc = serde_json::from_str(text)?;
    check_version(doc.version)?;
    if doc.kind != "block_data" {
        return Err(Error::Format(format!("expected kind 'block_data', found '{}'", doc.kind)));
    }
    let noise = doc
        .noise
        .into_iter()
        .map(|n| {
            Ok(match n {
                NoiseDoc::None => NoiseModel::None,
                NoiseDoc::Scalar { variance } => NoiseModel::Scalar { variance },
                NoiseDoc::Fisher {
                    covariance,
                    fallback_variance,
                } => NoiseModel::Fisher {
                    covariance: covariance.map(|c| matrix_from_rows(&c, "covariance")).transpose()?,
                    fallback_variance,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PauliBlockData::new(doc.n_sites, doc.window, doc.d, doc.blocks, noise)
}

pub fn save_block_data(path: &Path, data: &PauliBlockData) -> Result<()> {
    fs::write(path, block_data_to_json(data)?)?;
    Ok(())
}

pub fn load_block_data(path: &Path) -> Result<PauliBlockData> {
    block_data_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SettingDoc {
    s: String,
    shots: u64,
    counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CountsBlockDoc {
    k: usize,
    settings: Vec<SettingDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CountsDoc {
    version: u32,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "R")]
    r: usize,
    d: usize,
    blocks: Vec<CountsBlockDoc>,
}

/// Measurement records of a chain, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CountsFile {
    pub n_sites: usize,
    pub window: usize,
    pub blocks: Vec<CountsBlock>,
}

fn outcome_label(o: usize, r: usize) -> String {
    (0..r).map(|i| if o >> (r - 1 - i) & 1 == 1 { '-' } else { '+' }).collect()
}

fn parse_outcome(label: &str, r: usize) -> Result<usize> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() != r {
        return Err(Error::Format(format!("outcome '{label}' does not have {r} characters")));
    }
    chars.iter().try_fold(0usize, |acc, c| match c {
        '+' => Ok(acc << 1),
        '-' | '\u{2212}' => Ok(acc << 1 | 1),
        _ => Err(Error::Format(format!("outcome '{label}' may only contain '+' and '-'"))),
    })
}

pub fn counts_to_json(file: &CountsFile) -> Result<String> {
    let doc = CountsDoc {
        version: FORMAT_VERSION,
        n: file.n_sites,
        r: file.window,
        d: 2,
        blocks: file
            .blocks
            .iter()
            .map(|b| CountsBlockDoc {
                k: b.k,
                settings: b
                    .settings
                    .iter()
                    .map(|s| SettingDoc {
                        s: s.label(),
                        shots: s.shots,
                        counts: s
                            .counts
                            .iter()
                            .enumerate()
                            .filter(|(_, &c)| c > 0)
                            .map(|(o, &c)| (outcome_label(o, b.window), c))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a counts document; per-setting totals must equal the declared shots.
pub fn counts_from_json(text: &str) -> Result<CountsFile> {
    let doc: CountsDoc = serde_json::from_str(text)?;
    check_version(doc.version)?;
    if doc.d != 2 {
        return Err(Error::UnsupportedDimension(doc.d));
    }
    if doc.r == 0 || doc.r > doc.n {
        return Err(Error::Format(format!("R = {} invalid for N = {}", doc.r, doc.n)));
    }
    let r = doc.r;
    let blocks = doc
        .blocks
        .into_iter()
        .map(|b| {
            if b.k == 0 || b.k + r - 1 > doc.n {
                return Err(Error::Format(format!("block index {} out of range", b.k)));
            }
            let settings = b
                .settings
                .into_iter()
                .map(|s| {
                    let axes = s.s.chars().map(Axis::from_char).collect::<Result<Vec<_>>>()?;
                    if axes.len() != r {
                        return Err(Error::Format(format!("setting '{}' does not have {r} characters", s.s)));
                    }
                    let mut counts = vec![0u64; 1 << r];
                    for (label, c) in &s.counts {
                        counts[parse_outcome(label, r)?] += c;
                    }
                    let total: u64 = counts.iter().sum();
                    if total != s.shots {
                        return Err(Error::Format(format!(
                            "block {} setting '{}': counts sum to {total}, shots = {}",
                            b.k, s.s, s.shots
                        )));
                    }
                    SettingCounts::new(axes, counts)
                })
                .collect::<Result<Vec<_>>>()?;
            let block = CountsBlock {
                k: b.k,
                window: r,
                settings,
            };
            block.validate()?;
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountsFile {
        n_sites: doc.n,
        window: r,
        blocks,
    })
}

pub fn save_counts(path: &Path, file: &CountsFile) -> Result<()> {
    fs::write(path, counts_to_json(file)?)?;
    Ok(())
}

pub fn load_counts(path: &Path) -> Result<CountsFile> {
    counts_from_json(&fs::read_to_string(path)?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
