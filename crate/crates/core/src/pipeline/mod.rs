//! Paired-edit dataset construction.
//!
//! Each sample runs: instruction from the source image, source asset
//! generation, image edit, edited asset generation, voxel merge, latent
//! merge, quality filter. A rejected sample is re-run from the start with
//! fresh stage seeds, up to `max_attempts` times. Artifacts are written only
//! for accepted samples, so a manifest never points at files from a rejected
//! attempt.
//!
//! Samples run on a bounded worker pool; records flow to a single writer
//! that appends them in input order, so the manifest bytes do not depend on
//! scheduling.

mod backends;
mod instruction;
mod manifest;

use std::collections::{BTreeMap, HashSet};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backends::{
    mock_image, AcceptAll, AlwaysReject, BackendError, BackendSuite, FilterBackend, GeneratorBackend,
    ImageBlob, ImageEditorBackend, InstructionBackend, MockEditor, MockGenerator, MockInstructor, RejectFirst,
    Verdict,
};
pub use instruction::{parse_instruction, render_instruction, render_named, EditAction, EditInstruction, InstructionError};
pub use manifest::{
    append_record, decode_record, encode_record, load_manifest, write_manifest, LoadedManifest, MalformedLine,
    ManifestError, ManifestRecord, RecordStatus,
};

use crate::metrics::{region_consistency, ConsistencyReport};
use crate::regionmerge::{slat_merge, voxel_merge, Connectivity, SelectionPolicy};
use crate::voxgrid::nvx::{read_nvx, write_nvx, NvxError, NvxPayload};
use crate::voxgrid::{SparseStructure, StructuredLatent, VoxelCoord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Instruction,
    GenerateSource,
    EditImage,
    GenerateTarget,
    VoxelMerge,
    SlatMerge,
    Consistency,
    Filter,
    Write,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Instruction => "instruction",
            Stage::GenerateSource => "generate_source",
            Stage::EditImage => "edit_image",
            Stage::GenerateTarget => "generate_target",
            Stage::VoxelMerge => "voxel_merge",
            Stage::SlatMerge => "slat_merge",
            Stage::Consistency => "consistency",
            Stage::Filter => "filter",
            Stage::Write => "write",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub connectivity: Connectivity,
    pub policy: SelectionPolicy,
    pub max_attempts: u32,
    /// Worker threads; at least 1.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::default(),
            policy: SelectionPolicy::default(),
            max_attempts: 3,
            workers: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid sample id `{0}`: use letters, digits, `-`, `_` or `.`")]
    InvalidId(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// One unit of work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleInput {
    pub id: String,
    pub image: ImageBlob,
    pub seed: u64,
}

/// Seed for one stage of one attempt, derived from the sample seed.
pub fn stage_seed(seed: u64, attempt: u32, stage: Stage) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(attempt) << 8) | stage.stream());
    rng.next_u64()
}

/// `count` mock samples whose seeds derive from `seed`.
pub fn mock_inputs(count: usize, seed: u64) -> Vec<SampleInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let sample_seed = rng.next_u64();
            SampleInput {
                id: format!("sample-{i:05}"),
                image: mock_image(sample_seed),
                seed: sample_seed,
            }
        })
        .collect()
}

fn check_id(id: &str) -> Result<(), PipelineError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::InvalidId(id.to_string()))
    }
}

fn check_config(config: &PipelineConfig) -> Result<(), PipelineError> {
    if config.max_attempts == 0 {
        return Err(PipelineError::InvalidConfig("max_attempts must be at least 1".into()));
    }
    if config.workers == 0 {
        return Err(PipelineError::InvalidConfig("workers must be at least 1".into()));
    }
    Ok(())
}

struct Produced {
    source: StructuredLatent,
    target: SparseStructure,
    merged: SparseStructure,
    merged_slat: StructuredLatent,
    edited_image: ImageBlob,
}

struct StageFailure {
    stage: Stage,
    message: String,
}

fn fail(stage: Stage) -> impl FnOnce(String) -> StageFailure {
    move |message| StageFailure { stage, message }
}

fn artifact_path(id: &str, name: &str) -> String {
    format!("artifacts/{id}/{name}.nvx")
}

fn attempt_once(
    input: &SampleInput,
    suite: &BackendSuite,
    config: &PipelineConfig,
    record: &mut ManifestRecord,
) -> Result<Produced, StageFailure> {
    let seed = |stage| stage_seed(input.seed, record.attempt, stage);
    let instruction = suite
        .instruction
        .instruct(&input.image, seed(Stage::Instruction))
        .map_err(|e| fail(Stage::Instruction)(e.0))?;
    record.instruction = Some(instruction.clone());
    let source = suite
        .generator
        .generate(&input.image, seed(Stage::GenerateSource))
        .map_err(|e| fail(Stage::GenerateSource)(e.0))?;
    let edited_image = suite
        .editor
        .edit(&input.image, &instruction, seed(Stage::EditImage))
        .map_err(|e| fail(Stage::EditImage)(e.0))?;
    record.edited_image = edited_image.path.clone();
    let target_latent = suite
        .generator
        .generate(&edited_image, seed(Stage::GenerateTarget))
        .map_err(|e| fail(Stage::GenerateTarget)(e.0))?;
    let source_structure = source.structure();
    let target = target_latent.structure();
    let (merged, mask) = voxel_merge(&source_structure, &target, config.connectivity, config.policy)
        .map_err(|e| fail(Stage::VoxelMerge)(e.to_string()))?;
    record.mask_component_sizes = mask.component_sizes().to_vec();
    let merged_slat =
        slat_merge(&source, &target_latent, &mask, &merged).map_err(|e| fail(Stage::SlatMerge)(e.to_string()))?;
    let report = region_consistency(&source_structure, &target, &merged, &mask)
        .map_err(|e| fail(Stage::Consistency)(e.to_string()))?;
    if !report.is_exact() {
        return Err(fail(Stage::Consistency)(format!("merge is not region consistent: {report:?}")));
    }

    let id = &input.id;
    record.source_structure = Some(artifact_path(id, "source_structure"));
    record.edited_structure = Some(artifact_path(id, "edited_structure"));
    record.merged_structure = Some(artifact_path(id, "merged_structure"));
    record.source_slat = Some(artifact_path(id, "source_slat"));
    record.merged_slat = Some(artifact_path(id, "merged_slat"));
    record.voxel_sum_src = Some(source.len());
    record.voxel_sum_tgt = Some(target.voxel_sum());
    record.voxel_sum_merged = Some(merged.voxel_sum());
    Ok(Produced { source, target, merged, merged_slat, edited_image })
}

fn clear_artifacts(record: &mut ManifestRecord) {
    record.source_structure = None;
    record.edited_structure = None;
    record.merged_structure = None;
    record.source_slat = None;
    record.merged_slat = None;
    record.voxel_sum_src = None;
    record.voxel_sum_tgt = None;
    record.voxel_sum_merged = None;
}

fn write_artifacts(root: &Path, record: &ManifestRecord, produced: Produced) -> Result<(), String> {
    let dir = root.join("artifacts").join(&record.id);
    std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let structure = produced.source.structure();
    let files: [(&Option<String>, NvxPayload); 5] = [
        (&record.source_structure, structure.into()),
        (&record.edited_structure, produced.target.into()),
        (&record.merged_structure, produced.merged.into()),
        (&record.source_slat, produced.source.into()),
        (&record.merged_slat, produced.merged_slat.into()),
    ];
    for (rel, payload) in files {
        let rel = rel.as_deref().expect("paths set before writing");
        write_nvx(root.join(rel), &payload).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Runs one sample to completion. Artifact paths in the record are relative
/// to `root`. Backend and stage failures become `failed` records; only
/// invalid arguments return an error.
pub fn run_sample(
    input: &SampleInput,
    suite: &BackendSuite,
    config: &PipelineConfig,
    root: &Path,
) -> Result<ManifestRecord, PipelineError> {
    check_config(config)?;
    check_id(&input.id)?;
    let mut record = ManifestRecord::pending(input.id.clone(), input.seed, config.connectivity, config.policy);
    record.source_image = input.image.path.clone();
    for attempt in 1..=config.max_attempts {
        record.attempt = attempt;
        record.stage = None;
        record.reason = None;
        record.instruction = None;
        record.edited_image = None;
        record.mask_component_sizes.clear();
        clear_artifacts(&mut record);
        let produced = match attempt_once(input, suite, config, &mut record) {
            Ok(p) => p,
            Err(f) => {
                clear_artifacts(&mut record);
                record.status = RecordStatus::Failed;
                record.stage = Some(f.stage.as_str().into());
                record.reason = Some(f.message);
                return Ok(record);
            }
        };
        let verdict = match suite.filter.judge(&record, &produced.edited_image) {
            Ok(v) => v,
            Err(e) => {
                clear_artifacts(&mut record);
                record.status = RecordStatus::Failed;
                record.stage = Some(Stage::Filter.as_str().into());
                record.reason = Some(e.0);
                return Ok(record);
            }
        };
        if verdict.accept {
            if let Err(message) = write_artifacts(root, &record, produced) {
                clear_artifacts(&mut record);
                record.status = RecordStatus::Failed;
                record.stage = Some(Stage::Write.as_str().into());
                record.reason = Some(message);
                return Ok(record);
            }
            record.status = RecordStatus::Ok;
            return Ok(record);
        }
        clear_artifacts(&mut record);
        record.status = RecordStatus::Filtered;
        record.stage = Some(Stage::Filter.as_str().into());
        record.reason = Some(verdict.reason);
    }
    Ok(record)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub manifest: PathBuf,
    pub samples: usize,
    pub ok: usize,
    pub filtered: usize,
    pub failed: usize,
    pub attempts: u64,
}

/// Runs every sample and writes a fresh manifest at `manifest_path`.
/// Artifacts go under `artifacts/<id>/` next to the manifest.
pub fn run_pipeline(
    inputs: &[SampleInput],
    suite: &BackendSuite,
    config: &PipelineConfig,
    manifest_path: &Path,
) -> Result<PipelineSummary, PipelineError> {
    check_config(config)?;
    let mut seen = HashSet::new();
    for input in inputs {
        check_id(&input.id)?;
        if !seen.insert(input.id.as_str()) {
            return Err(PipelineError::DuplicateId(input.id.clone()));
        }
    }
    let root = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io_err = |source| ManifestError::Io { path: manifest_path.to_path_buf(), source };
    std::fs::create_dir_all(root).map_err(io_err)?;
    let file = std::fs::File::create(manifest_path).map_err(io_err)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;

    let (tx, rx) = mpsc::channel::<(usize, ManifestRecord)>();
    let mut summary = PipelineSummary {
        manifest: manifest_path.to_path_buf(),
        samples: inputs.len(),
        ..Default::default()
    };
    std::thread::scope(|scope| -> Result<(), PipelineError> {
        let writer = scope.spawn(move || -> Result<Vec<(RecordStatus, u32)>, PipelineError> {
            let mut out = BufWriter::new(file);
            let mut pending = BTreeMap::new();
            let mut next = 0usize;
            let mut outcomes = Vec::new();
            for (i, record) in rx {
                pending.insert(i, record);
                while let Some(record) = pending.remove(&next) {
                    writeln!(out, "{}", encode_record(&record)?).map_err(io_err)?;
                    outcomes.push((record.status, record.attempt));
                    next += 1;
                }
            }
            out.flush().map_err(io_err)?;
            Ok(outcomes)
        });
        let worker_result: Result<(), PipelineError> = pool.install(|| {
            inputs.par_iter().enumerate().try_for_each_with(tx, |tx, (i, input)| {
                let record = run_sample(input, suite, config, root)?;
                // The writer only stops early on an I/O error, reported below.
                let _ = tx.send((i, record));
                Ok(())
            })
        });
        let outcomes = writer.join().expect("manifest writer panicked")?;
        worker_result?;
        for (status, attempt) in outcomes {
            summary.attempts += u64::from(attempt);
            match status {
                RecordStatus::Ok => summary.ok += 1,
                RecordStatus::Filtered => summary.filtered += 1,
                RecordStatus::Failed => summary.failed += 1,
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("record `{0}` is not ok")]
    NotOk(String),
    #[error("record `{id}` has no {field}")]
    MissingArtifact { id: String, field: &'static str },
    #[error("{field}: {source}")]
    Nvx { field: &'static str, source: NvxError },
    #[error("{field} holds {actual} voxels, manifest says {recorded}")]
    VoxelSumMismatch { field: &'static str, recorded: usize, actual: usize },
    #[error("{field} has the wrong payload kind")]
    WrongKind { field: &'static str },
    #[error("stored merge differs from recomputation: {0}")]
    MergeMismatch(String),
    #[error("merged latent at {0} is not the source latent")]
    LatentMismatch(VoxelCoord),
    #[error("region consistency violated: {0:?}")]
    Inconsistent(ConsistencyReport),
}

/// Re-reads an `ok` record's artifacts from `root` and checks voxel sums,
/// recomputes the merge, and checks region consistency and latent
/// provenance outside the mask.
pub fn verify_record(root: &Path, record: &ManifestRecord) -> Result<ConsistencyReport, VerifyError> {
    if record.status != RecordStatus::Ok {
        return Err(VerifyError::NotOk(record.id.clone()));
    }
    let mut payloads = Vec::new();
    for (field, rel, sum) in record.artifacts() {
        let missing = || VerifyError::MissingArtifact { id: record.id.clone(), field };
        let rel = rel.ok_or_else(missing)?;
        let recorded = sum.ok_or_else(missing)?;
        let payload = read_nvx(root.join(rel)).map_err(|source| VerifyError::Nvx { field, source })?;
        let actual = payload.structure().voxel_sum();
        if actual != recorded {
            return Err(VerifyError::VoxelSumMismatch { field, recorded, actual });
        }
        payloads.push((field, payload));
    }
    let mut it = payloads.into_iter();
    let occupancy = |it: &mut dyn Iterator<Item = (&'static str, NvxPayload)>| match it.next() {
        Some((_, NvxPayload::Occupancy(s))) => Ok(s),
        Some((field, _)) => Err(VerifyError::WrongKind { field }),
        None => unreachable!("five artifacts"),
    };
    let source = occupancy(&mut it)?;
    let target = occupancy(&mut it)?;
    let merged = occupancy(&mut it)?;
    let latent = |it: &mut dyn Iterator<Item = (&'static str, NvxPayload)>| match it.next() {
        Some((_, NvxPayload::Latent(z))) => Ok(z),
        Some((field, _)) => Err(VerifyError::WrongKind { field }),
        None => unreachable!("five artifacts"),
    };
    let source_slat = latent(&mut it)?;
    let merged_slat = latent(&mut it)?;

    if source_slat.structure() != source {
        return Err(VerifyError::MergeMismatch("source latent occupancy differs from source structure".into()));
    }
    let (recomputed, mask) = voxel_merge(&source, &target, record.connectivity, record.policy)
        .map_err(|e| VerifyError::MergeMismatch(e.to_string()))?;
    if recomputed != merged {
        return Err(VerifyError::MergeMismatch("merged occupancy".into()));
    }
    if mask.component_sizes() != record.mask_component_sizes.as_slice() {
        return Err(VerifyError::MergeMismatch("component sizes".into()));
    }
    if merged_slat.structure() != merged {
        return Err(VerifyError::MergeMismatch("merged latent occupancy".into()));
    }
    for (c, z) in merged_slat.iter() {
        if mask.contains(c) {
            continue;
        }
        let same = source_slat
            .latent(c)
            .is_some_and(|s| s.iter().zip(z).all(|(a, b)| a.to_bits() == b.to_bits()));
        if !same {
            return Err(VerifyError::LatentMismatch(c));
        }
    }
    let report = region_consistency(&source, &target, &merged, &mask)
        .map_err(|e| VerifyError::MergeMismatch(e.to_string()))?;
    if !report.is_exact() {
        return Err(VerifyError::Inconsistent(report));
    }
    Ok(report)
}
