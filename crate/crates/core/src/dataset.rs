//! On-disk trial datasets.
//!
//! A dataset is a directory holding `metadata.json` and `trials.bin`. The
//! binary file is a flat array of little-endian `f32` values ordered trial,
//! then channel, then sample: exactly `n_trials * n_channels * n_samples`
//! values with no header. Continuous recordings use the same layout with a
//! single "trial" and the stimulus onsets listed in the metadata.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::codes::CodePair;
use crate::decoder::TrialSet;
use crate::error::{Error, Result};
use crate::simulator::ForwardModel;
use crate::stimulus::Condition;

pub const METADATA_FILE: &str = "metadata.json";
pub const TRIALS_FILE: &str = "trials.bin";
const FORMAT_TAG: &str = "cvep-trials/1";

/// Where a dataset came from: the stimulus codes and the generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub codes: CodePair,
    pub duration_s: f64,
    pub simulation_seed: u64,
    pub plan_seed: Option<u64>,
    pub forward_model: Option<ForwardModel>,
}

/// Epoched trials plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trials: TrialSet,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordingKind {
    Epochs,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    format: String,
    kind: RecordingKind,
    rate_hz: f64,
    n_channels: usize,
    n_samples: usize,
    n_trials: usize,
    channel_names: Vec<String>,
    labels: Vec<u8>,
    conditions: Vec<Condition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    onsets: Option<Vec<usize>>,
    code_names: Option<[String; 2]>,
    provenance: Option<Provenance>,
}

fn write_blocks(dir: &Path, meta: &Metadata, blocks: &[DMatrix<f64>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::json(&meta_path, e))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;

    let mut bytes = Vec::with_capacity(blocks.len() * meta.n_channels * meta.n_samples * 4);
    for x in blocks {
        for row in x.row_iter() {
            for v in row.iter() {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    let bin_path = dir.join(TRIALS_FILE);
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
}

fn read_blocks(dir: &Path) -> Result<(Metadata, Vec<DMatrix<f64>>)> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Metadata = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
    if meta.format != FORMAT_TAG {
        return Err(Error::Format {
            path: meta_path,
            reason: format!("unknown format tag {:?}", meta.format),
        });
    }
    let bin_path = dir.join(TRIALS_FILE);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let (c, t, j) = (meta.n_channels, meta.n_samples, meta.n_trials);
    let expected = j * c * t * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: bin_path,
            reason: format!("{} bytes, expected {expected} for {j}x{c}x{t} f32 values", bytes.len()),
        });
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
    let blocks = (0..j)
        .map(|_| DMatrix::from_row_iterator(c, t, values.by_ref().take(c * t)))
        .collect();
    Ok((meta, blocks))
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let ts = &self.trials;
        let meta = Metadata {
            format: FORMAT_TAG.to_string(),
            kind: RecordingKind::Epochs,
            rate_hz: ts.rate_hz,
            n_channels: ts.n_channels(),
            n_samples: ts.n_samples(),
            n_trials: ts.len(),
            channel_names: ts.channel_names.clone(),
            labels: ts.labels.clone(),
            conditions: ts.conditions.clone(),
            onsets: None,
            code_names: Some([
                self.provenance.codes.left.name().to_string(),
                self.provenance.codes.right.name().to_string(),
            ]),
            provenance: Some(self.provenance.clone()),
        };
        write_blocks(dir, &meta, &ts.trials)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (meta, blocks) = read_blocks(dir)?;
        let meta_path = dir.join(METADATA_FILE);
        if meta.kind != RecordingKind::Epochs {
            return Err(Error::Format {
                path: meta_path,
                reason: "expected epoched trials, found a continuous recording".into(),
            });
        }
        let provenance = meta.provenance.ok_or_else(|| Error::Format {
            path: meta_path.clone(),
            reason: "missing provenance (stimulus codes)".into(),
        })?;
        let trials = TrialSet::new(blocks, meta.labels, meta.conditions, meta.channel_names, meta.rate_hz)?;
        Ok(Self { trials, provenance })
    }

    /// Trials of one condition with the same provenance.
    pub fn condition(&self, condition: Condition) -> Dataset {
        Dataset {
            trials: self.trials.condition(condition),
            provenance: self.provenance.clone(),
        }
    }
}

/// A continuous multichannel recording with stimulus onsets (sample
/// indices) and the label and condition of each onset.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub data: DMatrix<f64>,
    pub rate_hz: f64,
    pub onsets: Vec<usize>,
    pub labels: Vec<u8>,
    pub conditions: Vec<Condition>,
    pub channel_names: Vec<String>,
    pub provenance: Option<Provenance>,
}

impl RawRecording {
    pub fn new(
        data: DMatrix<f64>,
        rate_hz: f64,
        onsets: Vec<usize>,
        labels: Vec<u8>,
        conditions: Vec<Condition>,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let raw = Self {
            data,
            rate_hz,
            onsets,
            labels,
            conditions,
            channel_names,
            provenance: None,
        };
        raw.validate()?;
        Ok(raw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.nrows() != self.channel_names.len() {
            return Err(Error::dim(format!(
                "{} channels but {} names",
                self.data.nrows(),
                self.channel_names.len()
            )));
        }
        if self.labels.len() != self.onsets.len() || self.conditions.len() != self.onsets.len() {
            return Err(Error::dim("onsets, labels and conditions differ in length"));
        }
        if self.onsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("onsets must be strictly increasing"));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::invalid(format!("rate {} Hz must be positive", self.rate_hz)));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn with_data(&self, data: DMatrix<f64>) -> RawRecording {
        RawRecording {
            data,
            ..self.clone()
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = Metadata {
            format: FORMAT_TAG.to_string(),
            kind: RecordingKind::Raw,
            rate_hz: self.rate_hz,
            n_channels: self.data.nrows(),
            n_samples: self.data.ncols(),
            n_trials: 1,
            channel_names: self.channel_names.clone(),
            labels: self.labels.clone(),
            conditions: self.conditions.clone(),
            onsets: Some(self.onsets.clone()),
            code_names: self
                .provenance
                .as_ref()
                .map(|p| [p.codes.left.name().to_string(), p.codes.right.name().to_string()]),
            provenance: self.provenance.clone(),
        };
        write_blocks(dir, &meta, std::slice::from_ref(&self.data))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (meta, mut blocks) = read_blocks(dir)?;
        let meta_path = dir.join(METADATA_FILE);
        if meta.kind != RecordingKind::Raw || blocks.len() != 1 {
            return Err(Error::Format {
                path: meta_path,
                reason: "expected a single continuous recording".into(),
            });
        }
        let mut raw = RawRecording::new(
            blocks.pop().expect("one block"),
            meta.rate_hz,
            meta.onsets.unwrap_or_default(),
            meta.labels,
            meta.conditions,
            meta.channel_names,
        )?;
        raw.provenance = meta.provenance;
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_size_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let raw = RawRecording::new(
            DMatrix::from_fn(2, 5, |i, j| (i * 5 + j) as f64),
            512.0,
            vec![1],
            vec![0],
            vec![Condition::Overt],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        raw.save(dir.path()).unwrap();
        assert_eq!(RawRecording::load(dir.path()).unwrap(), raw);
        // Channel-major then sample order.
        let bytes = fs::read(dir.path().join(TRIALS_FILE)).unwrap();
        assert_eq!(f32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1.0);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 5.0);
        fs::write(dir.path().join(TRIALS_FILE), &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(RawRecording::load(dir.path()), Err(Error::Format { .. })));
        assert!(Dataset::load(dir.path()).is_err());
    }

    #[test]
    fn onsets_must_increase() {
        let r = RawRecording::new(
            DMatrix::zeros(1, 10),
            512.0,
            vec![3, 3],
            vec![0, 1],
            vec![Condition::Overt; 2],
            vec!["a".into()],
        );
        assert!(r.is_err());
    }
}
