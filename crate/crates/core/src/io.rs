//! JSON formats for match sets and checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::CheckpointSet;
use crate::matching::{Match, SimilarityTransform, Stage};
use crate::pipeline::{PipelineOutput, StageStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub rx: f64,
    pub ry: f64,
    pub sx: f64,
    pub sy: f64,
    pub dist: f64,
    pub stage: Stage,
}

impl From<&Match> for MatchRecord {
    fn from(m: &Match) -> Self {
        Self {
            rx: m.ref_point.0,
            ry: m.ref_point.1,
            sx: m.sen_point.0,
            sy: m.sen_point.1,
            dist: m.distance,
            stage: m.stage,
        }
    }
}

impl MatchRecord {
    pub fn to_match(&self) -> Match {
        Match {
            ref_point: (self.rx, self.ry),
            sen_point: (self.sx, self.sy),
            distance: self.dist,
            stage: self.stage,
            ref_feature: None,
            sen_feature: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub scale: f64,
    pub rotation_deg: f64,
    pub tx: f64,
    pub ty: f64,
}

impl From<&SimilarityTransform> for TransformRecord {
    fn from(t: &SimilarityTransform) -> Self {
        Self {
            scale: t.scale,
            rotation_deg: t.rotation.to_degrees(),
            tx: t.tx,
            ty: t.ty,
        }
    }
}

impl TransformRecord {
    pub fn to_transform(&self) -> SimilarityTransform {
        SimilarityTransform::new(self.scale, self.rotation_deg.to_radians(), self.tx, self.ty)
    }
}

/// Contents of a match file. `config` and `stats` are informational and kept as raw JSON on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFile {
    pub config: serde_json::Value,
    pub transform: TransformRecord,
    pub stats: serde_json::Value,
    pub matches: Vec<MatchRecord>,
}

impl MatchFile {
    pub fn new(cfg: &PipelineConfig, out: &PipelineOutput) -> Result<Self> {
        Ok(Self {
            config: to_value(cfg)?,
            transform: (&out.transform).into(),
            stats: to_value::<StageStats>(&out.stats)?,
            matches: out.matches.iter().map(MatchRecord::from).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            what: "match file",
            msg: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            what: "match file",
            msg: e.to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &(self.to_json()? + "\n"))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&read_text(path.as_ref())?)
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format {
        what: "match file",
        msg: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct CheckpointRecord {
    #[serde(rename = "ref")]
    reference: [f64; 2],
    sen: [f64; 2],
}

pub fn checkpoints_from_json(text: &str) -> Result<CheckpointSet> {
    let records: Vec<CheckpointRecord> = serde_json::from_str(text).map_err(|e| Error::Format {
        what: "checkpoints",
        msg: e.to_string(),
    })?;
    CheckpointSet::new(
        records
            .iter()
            .map(|r| ((r.reference[0], r.reference[1]), (r.sen[0], r.sen[1])))
            .collect(),
    )
}

pub fn checkpoints_to_json(cps: &CheckpointSet) -> String {
    let records: Vec<CheckpointRecord> = cps
        .pairs
        .iter()
        .map(|&(r, s)| CheckpointRecord {
            reference: [r.0, r.1],
            sen: [s.0, s.1],
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("plain numbers always serialize")
}

pub fn read_checkpoints(path: impl AsRef<Path>) -> Result<CheckpointSet> {
    checkpoints_from_json(&read_text(path.as_ref())?)
}

pub fn write_checkpoints(path: impl AsRef<Path>, cps: &CheckpointSet) -> Result<()> {
    write_text(path.as_ref(), &(checkpoints_to_json(cps) + "\n"))
}
