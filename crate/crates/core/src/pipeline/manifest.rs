//! JSONL manifest: one record per line, keys in declaration order, unknown
//! keys kept verbatim (sorted) after the known ones.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instruction::EditInstruction;
use crate::regionmerge::{Connectivity, SelectionPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Filtered,
    Failed,
}

/// One dataset sample. Artifact paths are relative to the manifest's
/// directory and are present exactly when `status` is `ok`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub seed: u64,
    pub status: RecordStatus,
    pub attempt: u32,
    /// Stage that failed, or `filter` for filtered records.
    pub stage: Option<String>,
    pub reason: Option<String>,
    pub source_image: Option<String>,
    pub edited_image: Option<String>,
    pub instruction: Option<EditInstruction>,
    pub source_structure: Option<String>,
    pub edited_structure: Option<String>,
    pub merged_structure: Option<String>,
    pub source_slat: Option<String>,
    pub merged_slat: Option<String>,
    pub voxel_sum_src: Option<usize>,
    pub voxel_sum_tgt: Option<usize>,
    pub voxel_sum_merged: Option<usize>,
    pub mask_component_sizes: Vec<usize>,
    pub connectivity: Connectivity,
    pub policy: SelectionPolicy,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ManifestRecord {
    /// A record with no outcome yet.
    pub fn pending(id: impl Into<String>, seed: u64, connectivity: Connectivity, policy: SelectionPolicy) -> Self {
        Self {
            id: id.into(),
            seed,
            status: RecordStatus::Failed,
            attempt: 1,
            stage: None,
            reason: None,
            source_image: None,
            edited_image: None,
            instruction: None,
            source_structure: None,
            edited_structure: None,
            merged_structure: None,
            source_slat: None,
            merged_slat: None,
            voxel_sum_src: None,
            voxel_sum_tgt: None,
            voxel_sum_merged: None,
            mask_component_sizes: Vec::new(),
            connectivity,
            policy,
            extra: BTreeMap::new(),
        }
    }

    /// `(field, relative path, expected voxel count)` for each NVX artifact.
    pub fn artifacts(&self) -> Vec<(&'static str, Option<&str>, Option<usize>)> {
        vec![
            ("source_structure", self.source_structure.as_deref(), self.voxel_sum_src),
            ("edited_structure", self.edited_structure.as_deref(), self.voxel_sum_tgt),
            ("merged_structure", self.merged_structure.as_deref(), self.voxel_sum_merged),
            ("source_slat", self.source_slat.as_deref(), self.voxel_sum_src),
            ("merged_slat", self.merged_slat.as_deref(), self.voxel_sum_merged),
        ]
    }
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode record `{id}`: {source}")]
    Encode { id: String, source: serde_json::Error },
}

/// A line that could not be decoded. It is reported, never dropped silently.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MalformedLine {
    /// 1-based.
    pub line_no: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadedManifest {
    pub records: Vec<ManifestRecord>,
    pub malformed: Vec<MalformedLine>,
}

pub fn encode_record(record: &ManifestRecord) -> Result<String, ManifestError> {
    serde_json::to_string(record).map_err(|source| ManifestError::Encode { id: record.id.clone(), source })
}

pub fn decode_record(line: &str) -> Result<ManifestRecord, serde_json::Error> {
    serde_json::from_str(line)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io { path: path.to_path_buf(), source }
}

pub fn append_record(path: impl AsRef<Path>, record: &ManifestRecord) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let mut line = encode_record(record)?;
    line.push('\n');
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    file.write_all(line.as_bytes()).map_err(io_err(path))
}

/// Replaces the file with the given records.
pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in records {
        writeln!(out, "{}", encode_record(r)?).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads every line. Blank lines are skipped; undecodable lines are listed
/// in `malformed` and the rest still load.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest, ManifestError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut loaded = LoadedManifest::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        match decode_record(&line) {
            Ok(r) => loaded.records.push(r),
            Err(e) => loaded.malformed.push(MalformedLine { line_no: i + 1, message: e.to_string() }),
        }
    }
    Ok(loaded)
}
