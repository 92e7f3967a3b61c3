use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LossKind;

/// What a run contributes to the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum RunRole {
    /// One-hot training on subsample `k`.
    Subsample { k: usize },
    /// The teacher trained on subsample `k` for distillation.
    Teacher { k: usize },
    /// A student distilled on subsample `k` from the matching teacher.
    Distill { k: usize },
    /// One-hot training on the full dataset minus exclusion set `set`.
    Exclusion { set: usize, repeat: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Done,
    Failed,
}

/// Paths of a run's files, relative to the artifact directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFiles {
    pub correctness: String,
    pub trace: String,
    pub params: String,
}

impl RunFiles {
    pub fn for_run(run_id: &str) -> Self {
        RunFiles {
            correctness: format!("runs/{run_id}/correctness.bin"),
            trace: format!("runs/{run_id}/trace.jsonl"),
            params: format!("runs/{run_id}/params.bin"),
        }
    }

    fn all(&self) -> [&str; 3] {
        [&self.correctness, &self.trace, &self.params]
    }

    pub fn exist_under(&self, dir: &Path) -> bool {
        self.all().iter().all(|f| dir.join(f).is_file())
    }
}

/// One training run of the experiment and where its outputs live.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub run_id: String,
    #[serde(flatten)]
    pub role: RunRole,
    pub ladder_index: usize,
    pub loss: LossKind,
    /// Run id of the teacher, for distilled runs.
    pub teacher: Option<String>,
    pub seed: u64,
    pub status: RunStatus,
    pub attempts: usize,
    pub error: Option<String>,
    pub files: RunFiles,
}

impl RunArtifact {
    pub fn is_done(&self) -> bool {
        self.status == RunStatus::Done
    }

    pub fn load_correctness(&self, dir: &Path) -> Result<Vec<bool>> {
        decode_correctness(&fs::read(dir.join(&self.files.correctness))?)
    }

    pub fn load_trace(&self, dir: &Path) -> Result<Vec<Vec<f32>>> {
        crate::nn::io::decode_trace(&fs::read(dir.join(&self.files.trace))?)
    }

    pub fn load_model(&self, dir: &Path) -> Result<crate::nn::TrainedModel> {
        let (spec, params) = crate::nn::io::read_params(&dir.join(&self.files.params))?;
        crate::nn::TrainedModel::from_params(spec, params)
    }
}

/// `u64` little-endian length, then the bits packed least-significant-bit first.
pub fn encode_correctness(bits: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + bits.len().div_ceil(8));
    out.extend((bits.len() as u64).to_le_bytes());
    for chunk in bits.chunks(8) {
        out.push(chunk.iter().enumerate().fold(0u8, |acc, (j, &b)| acc | ((b as u8) << j)));
    }
    out
}

pub fn decode_correctness(bytes: &[u8]) -> Result<Vec<bool>> {
    let bad = |msg: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()));
    let header: [u8; 8] = bytes.get(..8).and_then(|h| h.try_into().ok()).ok_or_else(|| bad("correctness file too short"))?;
    let n = u64::from_le_bytes(header) as usize;
    let body = &bytes[8..];
    if body.len() != n.div_ceil(8) {
        return Err(bad("correctness length header does not match body"));
    }
    Ok((0..n).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_lsb_first() {
        let bytes = encode_correctness(&[true, false, false, false, false, false, false, false, false, true]);
        assert_eq!(bytes, vec![10, 0, 0, 0, 0, 0, 0, 0, 0b0000_0001, 0b0000_0010]);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let mut bytes = encode_correctness(&[true; 20]);
        bytes.pop();
        assert!(decode_correctness(&bytes).is_err());
        assert!(decode_correctness(&[1, 2]).is_err());
    }

    #[test]
    fn role_serialises_flat() {
        let a = RunArtifact {
            run_id: "e00-x001-r002".into(),
            role: RunRole::Exclusion { set: 1, repeat: 2 },
            ladder_index: 0,
            loss: LossKind::OneHot,
            teacher: None,
            seed: 7,
            status: RunStatus::Pending,
            attempts: 0,
            error: None,
            files: RunFiles::for_run("e00-x001-r002"),
        };
        let v = serde_json::to_value(&a).unwrap();
        assert_eq!(v["role"], "exclusion");
        assert_eq!(v["set"], 1);
        let back: RunArtifact = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn codec_round_trips(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            prop_assert_eq!(decode_correctness(&encode_correctness(&bits)).unwrap(), bits);
        }
    }
}
