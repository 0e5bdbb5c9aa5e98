//! External-model interfaces and their deterministic stand-ins.
//!
//! A real deployment implements these traits over HTTP or local inference.
//! Implementations must be callable from several worker threads at once and
//! must not keep per-call state: everything that varies between calls comes
//! in through the arguments, including the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::instruction::{EditAction, EditInstruction};
use super::manifest::ManifestRecord;
use crate::voxgrid::{StructuredLatent, VoxelCoord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct BackendError(pub String);

/// Opaque image bytes plus an optional on-disk location.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBlob {
    pub path: Option<String>,
    pub bytes: Vec<u8>,
}

impl ImageBlob {
    pub fn in_memory(bytes: Vec<u8>) -> Self {
        Self { path: None, bytes }
    }

    pub fn checksum(&self) -> u32 {
        crc32fast::hash(&self.bytes)
    }
}

/// Outcome of a quality check. `reason` is free-form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub accept: bool,
    pub reason: String,
}

impl Verdict {
    pub fn accept() -> Self {
        Self { accept: true, reason: String::new() }
    }

    pub fn reject(reason: impl Into<String>) -> Self {
        Self { accept: false, reason: reason.into() }
    }
}

/// Image to edit instruction.
pub trait InstructionBackend: Send + Sync {
    fn instruct(&self, image: &ImageBlob, seed: u64) -> Result<EditInstruction, BackendError>;
}

/// Image plus instruction to edited image.
pub trait ImageEditorBackend: Send + Sync {
    fn edit(&self, image: &ImageBlob, instruction: &EditInstruction, seed: u64) -> Result<ImageBlob, BackendError>;
}

/// Image to structured latent; the occupancy is the latent's coordinate set.
pub trait GeneratorBackend: Send + Sync {
    fn generate(&self, image: &ImageBlob, seed: u64) -> Result<StructuredLatent, BackendError>;
}

/// Candidate record (artifacts not yet written) to accept or reject.
pub trait FilterBackend: Send + Sync {
    fn judge(&self, candidate: &ManifestRecord, edited_image: &ImageBlob) -> Result<Verdict, BackendError>;
}

pub struct BackendSuite {
    pub instruction: Box<dyn InstructionBackend>,
    pub editor: Box<dyn ImageEditorBackend>,
    pub generator: Box<dyn GeneratorBackend>,
    pub filter: Box<dyn FilterBackend>,
}

impl BackendSuite {
    /// All mocks, with the given filter.
    pub fn mock(filter: impl FilterBackend + 'static) -> Self {
        Self {
            instruction: Box::new(MockInstructor),
            editor: Box::new(MockEditor),
            generator: Box::new(MockGenerator::default()),
            filter: Box::new(filter),
        }
    }
}

const MOCK_MAGIC: &str = "mock-image v1";

/// Source image in the mock text format: a header and a shape seed.
pub fn mock_image(shape_seed: u64) -> ImageBlob {
    ImageBlob::in_memory(format!("{MOCK_MAGIC}\nshape {shape_seed}\n").into_bytes())
}

struct MockImage {
    shape_seed: u64,
    edits: Vec<EditInstruction>,
}

fn parse_mock_image(image: &ImageBlob) -> Result<MockImage, BackendError> {
    let bad = |m: &str| BackendError(format!("not a mock image: {m}"));
    let text = std::str::from_utf8(&image.bytes).map_err(|_| bad("not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MOCK_MAGIC) {
        return Err(bad("missing header"));
    }
    let shape_seed = lines
        .next()
        .and_then(|l| l.strip_prefix("shape "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing shape line"))?;
    let mut edits = Vec::new();
    for line in lines {
        let rendered = line.strip_prefix("edit ").ok_or_else(|| bad("unexpected line"))?;
        edits.push(rendered.parse().map_err(|e| bad(&format!("{e}")))?);
    }
    Ok(MockImage { shape_seed, edits })
}

const ELEMENTS: &[&str] = &["a chimney", "a pair of wings", "a handle", "an antenna", "a square pedestal"];
const LOCATIONS: &[&str] = &["the top", "the left side", "the back", "the front"];
const PARTS: &[&str] = &["the left wing", "the handle", "the top part", "the tail"];
const REPLACEMENTS: &[&str] = &["a cube", "a cone", "a flat panel", "a cylinder"];

/// Picks an action and slot phrases from small vocabularies.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockInstructor;

impl InstructionBackend for MockInstructor {
    fn instruct(&self, image: &ImageBlob, seed: u64) -> Result<EditInstruction, BackendError> {
        parse_mock_image(image)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(image.checksum()));
        let pick = |rng: &mut ChaCha8Rng, list: &[&'static str]| *list.choose(rng).expect("non-empty");
        let action = *EditAction::ALL.choose(&mut rng).expect("non-empty");
        let result = match action {
            EditAction::Add => EditInstruction::add(pick(&mut rng, ELEMENTS), pick(&mut rng, LOCATIONS)),
            EditAction::Remove => EditInstruction::remove(pick(&mut rng, PARTS)),
            EditAction::Replace => EditInstruction::replace(pick(&mut rng, PARTS), pick(&mut rng, REPLACEMENTS)),
        };
        result.map_err(|e| BackendError(e.to_string()))
    }
}

/// Appends the instruction as an `edit` line.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockEditor;

impl ImageEditorBackend for MockEditor {
    fn edit(&self, image: &ImageBlob, instruction: &EditInstruction, _seed: u64) -> Result<ImageBlob, BackendError> {
        parse_mock_image(image)?;
        let mut bytes = image.bytes.clone();
        bytes.extend_from_slice(format!("edit {}\n", instruction.rendered()).as_bytes());
        Ok(ImageBlob::in_memory(bytes))
    }
}

/// Synthesizes a solid ellipsoid from the image's shape seed, applies each
/// edit line as a large geometric change, then toggles a few isolated
/// "speck" voxels chosen by the call seed. Specks model generator noise:
/// they differ between calls and form components far below the default
/// selection threshold. Latents are derived from the image checksum and the
/// voxel position.
#[derive(Clone, Copy, Debug)]
pub struct MockGenerator {
    pub resolution: u16,
    pub channels: usize,
    pub specks: usize,
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self { resolution: 32, channels: 8, specks: 12 }
    }
}

impl MockGenerator {
    fn occupancy(&self, image: &MockImage, seed: u64) -> Vec<bool> {
        let r = usize::from(self.resolution);
        let rf = r as f64;
        let mut shape_rng = ChaCha8Rng::seed_from_u64(image.shape_seed);
        let center: [f64; 3] = std::array::from_fn(|_| rf * shape_rng.gen_range(0.45..0.55));
        let radii: [f64; 3] = std::array::from_fn(|_| rf * shape_rng.gen_range(0.2..0.28));
        let idx = |x: usize, y: usize, z: usize| (x * r + y) * r + z;
        let mut grid = vec![false; r * r * r];
        let cell = |i: usize, a: usize| (i as f64 + 0.5 - center[a]) / radii[a];
        for x in 0..r {
            for y in 0..r {
                for z in 0..r {
                    let d = cell(x, 0).powi(2) + cell(y, 1).powi(2) + cell(z, 2).powi(2);
                    grid[idx(x, y, z)] = d <= 1.0;
                }
            }
        }
        for edit in &image.edits {
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from(crc32fast::hash(edit.rendered().as_bytes())));
            let axis = rng.gen_range(0..3usize);
            let positive = rng.gen_bool(0.5);
            let action = edit.action();
            if matches!(action, EditAction::Remove | EditAction::Replace) {
                // Cut the cap beyond half the radius on one side.
                for x in 0..r {
                    for y in 0..r {
                        for z in 0..r {
                            let u = [x, y, z][axis];
                            let offset = cell(u, axis);
                            if (positive && offset > 0.5) || (!positive && offset < -0.5) {
                                grid[idx(x, y, z)] = false;
                            }
                        }
                    }
                }
            }
            if matches!(action, EditAction::Add | EditAction::Replace) {
                // A 6-voxel cube touching the shape on the chosen side.
                let side = 6usize;
                let mut lo = [0usize; 3];
                for (a, l) in lo.iter_mut().enumerate() {
                    let c = center[a].floor() as isize - (side as isize) / 2;
                    *l = c.clamp(0, (r - side) as isize) as usize;
                }
                let extent = if positive {
                    center[axis] + radii[axis] * if action == EditAction::Replace { 0.5 } else { 1.0 }
                } else {
                    center[axis] - radii[axis] * if action == EditAction::Replace { 0.5 } else { 1.0 } - side as f64
                };
                lo[axis] = (extent.floor() as isize).clamp(0, (r - side) as isize) as usize;
                for x in lo[0]..lo[0] + side {
                    for y in lo[1]..lo[1] + side {
                        for z in lo[2]..lo[2] + side {
                            grid[idx(x, y, z)] = true;
                        }
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..self.specks {
            let i = rng.gen_range(0..grid.len());
            grid[i] = !grid[i];
        }
        grid
    }
}

impl GeneratorBackend for MockGenerator {
    fn generate(&self, image: &ImageBlob, seed: u64) -> Result<StructuredLatent, BackendError> {
        let parsed = parse_mock_image(image)?;
        let grid = self.occupancy(&parsed, seed);
        let coords: Vec<VoxelCoord> = grid
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| VoxelCoord::from_linear_index(i as u64, self.resolution))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(image.checksum()));
        let mut values = Vec::with_capacity(coords.len() * self.channels);
        for c in &coords {
            rng.set_stream(c.linear_index(self.resolution));
            rng.set_word_pos(0);
            values.extend((0..self.channels).map(|_| rng.gen_range(-1.0f32..1.0)));
        }
        StructuredLatent::from_parts(coords, values, self.channels, self.resolution)
            .map_err(|e| BackendError(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AcceptAll;

impl FilterBackend for AcceptAll {
    fn judge(&self, _: &ManifestRecord, _: &ImageBlob) -> Result<Verdict, BackendError> {
        Ok(Verdict::accept())
    }
}

/// Rejects the first attempt of every sample, accepts later ones.
#[derive(Clone, Copy, Debug, Default)]
pub struct RejectFirst;

impl FilterBackend for RejectFirst {
    fn judge(&self, candidate: &ManifestRecord, _: &ImageBlob) -> Result<Verdict, BackendError> {
        Ok(if candidate.attempt == 1 {
            Verdict::reject("first attempt is always resampled")
        } else {
            Verdict::accept()
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AlwaysReject;

impl FilterBackend for AlwaysReject {
    fn judge(&self, _: &ManifestRecord, _: &ImageBlob) -> Result<Verdict, BackendError> {
        Ok(Verdict::reject("instruction not followed"))
    }
}
