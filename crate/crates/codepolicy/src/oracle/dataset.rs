//! Trajectory records and the line-oriented dataset file format.
//!
//! A dataset file is UTF-8 JSON lines: one header object
//! `{"format_version":1,"kind":"trajectory-dataset"}` followed by one
//! trajectory record per line. Observations store flat float arrays next to
//! explicit shape headers.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::obs::Observation;
use crate::sim::task::TaskSpec;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset line {line}: {err}")]
    Json { line: usize, err: serde_json::Error },
    #[error("missing dataset header")]
    MissingHeader,
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Oracle,
    OracleShifted,
    PlannerRelabel,
    Exec,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::Oracle => "oracle",
            LabelSource::OracleShifted => "shifted",
            LabelSource::PlannerRelabel => "relabel",
            LabelSource::Exec => "exec",
        }
    }

    pub fn parse(s: &str) -> Option<LabelSource> {
        match s {
            "oracle" => Some(LabelSource::Oracle),
            "shifted" | "oracle_shifted" => Some(LabelSource::OracleShifted),
            "relabel" | "planner_relabel" => Some(LabelSource::PlannerRelabel),
            "exec" => Some(LabelSource::Exec),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub obs: StoredObservation,
    pub action: [f32; 4],
    pub instruction: String,
    pub is_keystep: bool,
}

/// Observation with explicit shape headers for storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredObservation {
    pub base_shape: [usize; 3],
    pub base: Vec<f32>,
    pub wrist_shape: [usize; 3],
    pub wrist: Vec<f32>,
    pub proprio: Vec<f32>,
    pub extra: Vec<f32>,
}

impl From<&Observation> for StoredObservation {
    fn from(o: &Observation) -> Self {
        Self {
            base_shape: Observation::base_shape(),
            base: o.base.clone(),
            wrist_shape: Observation::wrist_shape(),
            wrist: o.wrist.clone(),
            proprio: o.proprio.clone(),
            extra: o.extra.clone(),
        }
    }
}

impl StoredObservation {
    pub fn to_observation(&self) -> Observation {
        Observation {
            base: self.base.clone(),
            wrist: self.wrist.clone(),
            proprio: self.proprio.clone(),
            extra: self.extra.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub task: TaskSpec,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub success: bool,
    pub label_source: LabelSource,
}

impl TrajectoryRecord {
    /// Key-step indices of this record's label layout.
    pub fn keystep_indices(&self) -> Vec<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_keystep.then_some(i))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TrajectoryRecord>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.records.iter().map(|r| r.steps.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        let header = Header { format_version: FORMAT_VERSION, kind: "trajectory-dataset".into() };
        serde_json::to_writer(&mut w, &header).map_err(|err| DatasetError::Json { line: 1, err })?;
        w.write_all(b"\n")?;
        for (i, r) in self.records.iter().enumerate() {
            serde_json::to_writer(&mut w, r)
                .map_err(|err| DatasetError::Json { line: i + 2, err })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines.next().ok_or(DatasetError::MissingHeader)??;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|err| DatasetError::Json { line: 1, err })?;
        if header.format_version != FORMAT_VERSION {
            return Err(DatasetError::Version(header.format_version));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line).map_err(|err| DatasetError::Json { line: i + 2, err })?,
            );
        }
        Ok(Dataset { records })
    }

    pub fn merge(mut self, other: Dataset) -> Dataset {
        self.records.extend(other.records);
        self
    }
}
