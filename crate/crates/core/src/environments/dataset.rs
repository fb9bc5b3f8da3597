use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{to_json_line, write_atomic};
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    state_dim: usize,
    action_dim: usize,
    n: usize,
    behavior_tag: String,
}

#[derive(Serialize, Deserialize)]
struct Line {
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    s2: Vec<f64>,
    d: u8,
}

/// Fixed offline dataset of `(s, a, r, s', done)` tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
    behavior_tag: String,
}

impl OfflineDataset {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        transitions: Vec<Transition>,
        behavior_tag: impl Into<String>,
    ) -> Result<Self> {
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != state_dim || t.next_state.len() != state_dim || t.action.len() != action_dim {
                return Err(Error::rejected(format!(
                    "transition {i} has dimensions ({}, {}, {}), header declares ({state_dim}, {action_dim})",
                    t.state.len(),
                    t.action.len(),
                    t.next_state.len()
                )));
            }
            let finite = t.reward.is_finite()
                && t.state.iter().chain(&t.action).chain(&t.next_state).all(|v| v.is_finite());
            if !finite {
                return Err(Error::rejected(format!("transition {i} has non-finite values")));
            }
        }
        Ok(Self {
            state_dim,
            action_dim,
            transitions,
            behavior_tag: behavior_tag.into(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn behavior_tag(&self) -> &str {
        &self.behavior_tag
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// States stacked as an `n × state_dim` matrix.
    pub fn state_matrix(&self) -> Matrix {
        stack(self.transitions.iter().map(|t| &t.state[..]), self.len(), self.state_dim)
    }

    pub fn next_state_matrix(&self) -> Matrix {
        stack(self.transitions.iter().map(|t| &t.next_state[..]), self.len(), self.state_dim)
    }

    pub fn action_matrix(&self) -> Matrix {
        stack(self.transitions.iter().map(|t| &t.action[..]), self.len(), self.action_dim)
    }

    /// Undiscounted returns of the episodes in the dataset, split at `done`
    /// flags and at discontinuities between consecutive transitions.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut current = 0.0;
        let mut open = false;
        for (i, t) in self.transitions.iter().enumerate() {
            if open && self.transitions[i - 1].next_state != t.state {
                out.push(current);
                current = 0.0;
            }
            current += t.reward;
            open = true;
            if t.done {
                out.push(current);
                current = 0.0;
                open = false;
            }
        }
        if open {
            out.push(current);
        }
        out
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = to_json_line(&Header {
            schema_version: DATASET_SCHEMA_VERSION,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            n: self.len(),
            behavior_tag: self.behavior_tag.clone(),
        })?;
        out.push('\n');
        for t in &self.transitions {
            out.push_str(&to_json_line(&Line {
                s: t.state.clone(),
                a: t.action.clone(),
                r: t.reward,
                s2: t.next_state.clone(),
                d: t.done as u8,
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format("dataset file is empty".into()))??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::Format(format!("bad dataset header: {e}")))?;
        if header.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset schema_version {}",
                header.schema_version
            )));
        }
        let mut transitions = Vec::with_capacity(header.n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("bad transition on line {}: {e}", i + 2)))?;
            if l.d > 1 {
                return Err(Error::Format(format!("done flag {} on line {} is not 0/1", l.d, i + 2)));
            }
            transitions.push(Transition {
                state: l.s,
                action: l.a,
                reward: l.r,
                next_state: l.s2,
                done: l.d == 1,
            });
        }
        if transitions.len() != header.n {
            return Err(Error::Format(format!(
                "header declares n = {} but file holds {} transitions",
                header.n,
                transitions.len()
            )));
        }
        Self::new(header.state_dim, header.action_dim, transitions, header.behavior_tag)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl_reader(BufReader::new(fs::File::open(path)?))
    }

    /// SHA-256 of the serialized file contents, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_jsonl()?.as_bytes())))
    }

    /// Interpret states and actions as one-hot tabular coordinates.
    pub fn tabular_indices(&self) -> Result<Vec<(usize, usize, usize)>> {
        self.transitions
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let s = decode_one_hot(&t.state)
                    .ok_or_else(|| Error::rejected(format!("state of transition {i} is not one-hot")))?;
                let a = decode_one_hot(&t.action)
                    .ok_or_else(|| Error::rejected(format!("action of transition {i} is not one-hot")))?;
                let s2 = decode_one_hot(&t.next_state)
                    .ok_or_else(|| Error::rejected(format!("next state of transition {i} is not one-hot")))?;
                Ok((s, a, s2))
            })
            .collect()
    }
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize, dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(n * dim);
    for r in rows {
        data.extend_from_slice(r);
    }
    Matrix::from_vec(n, dim, data).expect("dataset rows are dimension-checked")
}

pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

/// Index of the single 1.0 entry, if `v` is exactly one-hot.
pub fn decode_one_hot(v: &[f64]) -> Option<usize> {
    let mut found = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        } else if x != 0.0 {
            return None;
        }
    }
    found
}
