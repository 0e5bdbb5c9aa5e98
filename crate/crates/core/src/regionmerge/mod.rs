//! Region-aware merging of an edited voxel structure back onto its source.
//!
//! The pipeline is: XOR difference map, connected components of the
//! difference, selection of the significant components into a flip mask, and
//! finally XOR of the mask into the source occupancy. The same mask then
//! decides, per voxel, whether the merged latent comes from the source or the
//! target latent set.

mod components;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use components::{
    label_components, label_components_parallel, Component, ComponentSet, Connectivity,
    InvalidConnectivity,
};
pub use crate::voxgrid::StructuredLatent;
use crate::voxgrid::{SparseStructure, VoxelCoord, VoxelError};

/// Component size threshold used when no policy is given.
pub const DEFAULT_TAU: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("resolution mismatch: {expected} vs {actual}")]
    ResolutionMismatch { expected: u16, actual: u16 },
    #[error("channel mismatch: source has {source_channels}, target has {target_channels}")]
    ChannelMismatch { source_channels: usize, target_channels: usize },
    #[error("no {side} latent for voxel {coord}")]
    MissingLatent { coord: VoxelCoord, side: LatentSide },
    #[error("invalid mask: {0}")]
    InvalidMask(#[from] VoxelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSide {
    Source,
    Target,
}

impl std::fmt::Display for LatentSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LatentSide::Source => "source",
            LatentSide::Target => "target",
        })
    }
}

fn same_resolution(expected: u16, actual: u16) -> Result<(), MergeError> {
    if expected == actual {
        Ok(())
    } else {
        Err(MergeError::ResolutionMismatch { expected, actual })
    }
}

/// Voxels occupied in exactly one of two structures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffMap {
    structure: SparseStructure,
}

impl DiffMap {
    pub fn from_structure(structure: SparseStructure) -> Self {
        Self { structure }
    }

    pub fn resolution(&self) -> u16 {
        self.structure.resolution()
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        self.structure.coords()
    }

    pub fn len(&self) -> usize {
        self.structure.voxel_sum()
    }

    pub fn is_empty(&self) -> bool {
        self.structure.is_empty()
    }

    pub fn as_structure(&self) -> &SparseStructure {
        &self.structure
    }
}

/// Symmetric difference of two sorted, duplicate-free lists.
fn symmetric_difference(a: &[VoxelCoord], b: &[VoxelCoord]) -> Vec<VoxelCoord> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Voxel-wise XOR `g(i) = s_src(i) xor s_tgt(i)`.
pub fn diff_xor(source: &SparseStructure, target: &SparseStructure) -> Result<DiffMap, MergeError> {
    same_resolution(source.resolution(), target.resolution())?;
    let coords = symmetric_difference(source.coords(), target.coords());
    Ok(DiffMap { structure: SparseStructure::from_canonical(coords, source.resolution()) })
}

/// How components of the difference map are chosen for the flip mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The first `k` components in canonical order.
    TopK(usize),
    /// Every component with strictly more than `tau` voxels.
    #[serde(rename = "tau")]
    Threshold(usize),
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy::Threshold(DEFAULT_TAU)
    }
}

/// Union of whole selected components, plus the audit trail that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlipMask {
    resolution: u16,
    coords: Vec<VoxelCoord>,
    selected_sizes: Vec<usize>,
    component_sizes: Vec<usize>,
    connectivity: Connectivity,
    policy: Option<SelectionPolicy>,
}

impl FlipMask {
    /// Mask made of the components at the given positions of `set`.
    pub fn from_components(set: &ComponentSet, picks: &[usize]) -> Self {
        let mut picks: Vec<usize> = picks.iter().copied().filter(|&p| p < set.len()).collect();
        picks.sort_unstable();
        picks.dedup();
        let mut coords: Vec<VoxelCoord> = picks
            .iter()
            .flat_map(|&p| set.components()[p].coords().iter().copied())
            .collect();
        coords.sort_unstable();
        Self {
            resolution: set.resolution(),
            coords,
            selected_sizes: picks.iter().map(|&p| set.components()[p].size()).collect(),
            component_sizes: set.sizes(),
            connectivity: set.connectivity(),
            policy: None,
        }
    }

    /// Mask over no voxels at all.
    pub fn empty(resolution: u16) -> Self {
        Self {
            resolution,
            coords: Vec::new(),
            selected_sizes: Vec::new(),
            component_sizes: Vec::new(),
            connectivity: Connectivity::default(),
            policy: None,
        }
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, coord: VoxelCoord) -> bool {
        self.coords.binary_search(&coord).is_ok()
    }

    pub fn selected_sizes(&self) -> &[usize] {
        &self.selected_sizes
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn policy(&self) -> Option<SelectionPolicy> {
        self.policy
    }

    pub fn as_structure(&self) -> SparseStructure {
        SparseStructure::from_canonical(self.coords.clone(), self.resolution)
    }

    pub fn report(&self) -> MaskReport {
        MaskReport {
            resolution: self.resolution,
            connectivity: self.connectivity,
            policy: self.policy,
            diff_size: self.component_sizes.iter().sum(),
            mask_size: self.coords.len(),
            component_sizes: self.component_sizes.clone(),
            selected_sizes: self.selected_sizes.clone(),
            coords: self.coords.iter().map(|c| c.to_array()).collect(),
        }
    }

    pub fn from_report(report: &MaskReport) -> Result<Self, MergeError> {
        let coords: Vec<VoxelCoord> = report.coords.iter().map(|&c| c.into()).collect();
        let structure = SparseStructure::from_sorted(coords, report.resolution)?;
        Ok(Self {
            resolution: report.resolution,
            coords: structure.into_coords(),
            selected_sizes: report.selected_sizes.clone(),
            component_sizes: report.component_sizes.clone(),
            connectivity: report.connectivity,
            policy: report.policy,
        })
    }
}

/// Serializable mask audit: how the mask was chosen and which voxels it
/// covers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskReport {
    pub resolution: u16,
    pub connectivity: Connectivity,
    pub policy: Option<SelectionPolicy>,
    pub diff_size: usize,
    pub mask_size: usize,
    pub component_sizes: Vec<usize>,
    pub selected_sizes: Vec<usize>,
    pub coords: Vec<[u16; 3]>,
}

pub fn select_components(set: &ComponentSet, policy: SelectionPolicy) -> FlipMask {
    let picks: Vec<usize> = match policy {
        SelectionPolicy::TopK(k) => (0..k.min(set.len())).collect(),
        SelectionPolicy::Threshold(tau) => set
            .components()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.size() > tau)
            .map(|(i, _)| i)
            .collect(),
    };
    FlipMask { policy: Some(policy), ..FlipMask::from_components(set, &picks) }
}

/// `s_src xor M`: toggles occupancy exactly at the mask voxels.
pub fn apply_flip(source: &SparseStructure, mask: &FlipMask) -> Result<SparseStructure, MergeError> {
    same_resolution(source.resolution(), mask.resolution())?;
    Ok(SparseStructure::from_canonical(
        symmetric_difference(source.coords(), mask.coords()),
        source.resolution(),
    ))
}

/// Difference, labeling, selection and flip in one call. Returns the merged
/// occupancy and the mask that produced it.
pub fn voxel_merge(
    source: &SparseStructure,
    target: &SparseStructure,
    connectivity: Connectivity,
    policy: SelectionPolicy,
) -> Result<(SparseStructure, FlipMask), MergeError> {
    let diff = diff_xor(source, target)?;
    let components = label_components(&diff, connectivity);
    let mask = select_components(&components, policy);
    let merged = apply_flip(source, &mask)?;
    Ok((merged, mask))
}

/// Latents for the merged occupancy: mask voxels take the target latent,
/// every other voxel keeps its source latent. Values are copied bit for bit.
pub fn slat_merge(
    source: &StructuredLatent,
    target: &StructuredLatent,
    mask: &FlipMask,
    merged: &SparseStructure,
) -> Result<StructuredLatent, MergeError> {
    let r = source.resolution();
    same_resolution(r, target.resolution())?;
    same_resolution(r, mask.resolution())?;
    same_resolution(r, merged.resolution())?;
    if source.channels() != target.channels() {
        return Err(MergeError::ChannelMismatch {
            source_channels: source.channels(),
            target_channels: target.channels(),
        });
    }
    let mut values = Vec::with_capacity(merged.voxel_sum() * source.channels());
    for c in merged.iter() {
        let (side, from) = if mask.contains(c) {
            (LatentSide::Target, target)
        } else {
            (LatentSide::Source, source)
        };
        let latent = from.latent(c).ok_or(MergeError::MissingLatent { coord: c, side })?;
        values.extend_from_slice(latent);
    }
    Ok(StructuredLatent::from_parts(merged.coords().to_vec(), values, source.channels(), r)?)
}

/// Every merged voxel takes its target latent. This is the explicit escape
/// hatch for appearance-only edits, whose occupancy difference (and hence
/// mask) is empty.
pub fn slat_merge_all_target(
    target: &StructuredLatent,
    merged: &SparseStructure,
) -> Result<StructuredLatent, MergeError> {
    same_resolution(target.resolution(), merged.resolution())?;
    let mut values = Vec::with_capacity(merged.voxel_sum() * target.channels());
    for c in merged.iter() {
        let latent = target
            .latent(c)
            .ok_or(MergeError::MissingLatent { coord: c, side: LatentSide::Target })?;
        values.extend_from_slice(latent);
    }
    Ok(StructuredLatent::from_parts(
        merged.coords().to_vec(),
        values,
        target.channels(),
        target.resolution(),
    )?)
}
