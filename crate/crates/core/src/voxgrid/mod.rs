//! Sparse voxel structures on an `R x R x R` grid.
//!
//! Every voxel set in the crate is stored as a sorted, duplicate-free list of
//! coordinates. The sort key is the x-major linear index
//! `x * R^2 + y * R + z`, which for in-bounds coordinates coincides with the
//! lexicographic order of `(x, y, z)`. All merging, tie-breaking and
//! serialization rely on this one order.

mod latent;
mod mesh;
pub mod nvx;
mod surface;
mod voxelize;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use latent::StructuredLatent;
pub use mesh::{parse_obj, Aabb, TriMesh};
pub use surface::extract_surface_mesh;
pub use voxelize::{triangle_box_overlap, voxelize_mesh, voxelize_mesh_auto, DEFAULT_BOUNDS_PADDING};

/// Grid resolution used by the occupancy stage unless overridden.
pub const DEFAULT_RESOLUTION: u16 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxelError {
    #[error("resolution {0} is below the minimum of 2")]
    InvalidResolution(u32),
    #[error("coordinate {coord} is out of bounds for resolution {resolution}")]
    OutOfBounds { coord: VoxelCoord, resolution: u16 },
    #[error("dense grid has {actual} cells, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("coordinates are not strictly ascending at position {0}")]
    NotCanonical(usize),
    #[error("duplicate coordinate {0}")]
    DuplicateCoord(VoxelCoord),
    #[error("latent at {0} has non-finite values")]
    NonFiniteLatent(VoxelCoord),
    #[error("latent at {coord} has {actual} channels, expected {expected}")]
    ChannelMismatch { coord: VoxelCoord, expected: usize, actual: usize },
    #[error("channel count must be between 1 and 65535, got {0}")]
    InvalidChannels(usize),
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    BadTriangleIndex { triangle: usize, index: u32, vertex_count: usize },
    #[error("non-finite vertex {0}")]
    NonFiniteVertex(usize),
    #[error("bounds must have positive extent on every axis")]
    EmptyBounds,
    #[error("malformed OBJ at line {line}: {message}")]
    MalformedObj { line: usize, message: String },
}

/// Integer cell index on the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub x: u16,
    pub y: u16,
    pub z: u16,
}

impl VoxelCoord {
    pub const fn new(x: u16, y: u16, z: u16) -> Self {
        Self { x, y, z }
    }

    pub fn in_bounds(self, resolution: u16) -> bool {
        self.x < resolution && self.y < resolution && self.z < resolution
    }

    /// x-major linear index `x * R^2 + y * R + z`.
    pub fn linear_index(self, resolution: u16) -> u64 {
        let r = u64::from(resolution);
        (u64::from(self.x) * r + u64::from(self.y)) * r + u64::from(self.z)
    }

    pub fn from_linear_index(index: u64, resolution: u16) -> Self {
        let r = u64::from(resolution);
        Self {
            x: (index / (r * r)) as u16,
            y: ((index / r) % r) as u16,
            z: (index % r) as u16,
        }
    }

    pub fn to_array(self) -> [u16; 3] {
        [self.x, self.y, self.z]
    }

    /// Neighbor at a signed offset, or `None` if it leaves the grid.
    pub fn offset(self, delta: [i32; 3], resolution: u16) -> Option<Self> {
        let shift = |v: u16, d: i32| {
            let n = i32::from(v) + d;
            (0..i32::from(resolution)).contains(&n).then_some(n as u16)
        };
        Some(Self {
            x: shift(self.x, delta[0])?,
            y: shift(self.y, delta[1])?,
            z: shift(self.z, delta[2])?,
        })
    }
}

impl From<[u16; 3]> for VoxelCoord {
    fn from([x, y, z]: [u16; 3]) -> Self {
        Self { x, y, z }
    }
}

impl fmt::Display for VoxelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

pub(crate) fn check_resolution(resolution: u16) -> Result<(), VoxelError> {
    if resolution < 2 {
        Err(VoxelError::InvalidResolution(u32::from(resolution)))
    } else {
        Ok(())
    }
}

/// Set of occupied cells in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparseStructure {
    resolution: u16,
    coords: Vec<VoxelCoord>,
}

impl SparseStructure {
    /// Canonicalizes arbitrary input: sorts, removes duplicates, rejects
    /// out-of-bounds cells.
    pub fn new(
        coords: impl IntoIterator<Item = VoxelCoord>,
        resolution: u16,
    ) -> Result<Self, VoxelError> {
        check_resolution(resolution)?;
        let mut coords: Vec<VoxelCoord> = coords.into_iter().collect();
        if let Some(&coord) = coords.iter().find(|c| !c.in_bounds(resolution)) {
            return Err(VoxelError::OutOfBounds { coord, resolution });
        }
        coords.sort_unstable();
        coords.dedup();
        Ok(Self { resolution, coords })
    }

    pub fn empty(resolution: u16) -> Result<Self, VoxelError> {
        Self::new([], resolution)
    }

    /// Accepts an already canonical list, validating order and bounds.
    pub fn from_sorted(coords: Vec<VoxelCoord>, resolution: u16) -> Result<Self, VoxelError> {
        check_resolution(resolution)?;
        check_canonical(&coords, resolution)?;
        Ok(Self { resolution, coords })
    }

    pub(crate) fn from_canonical(coords: Vec<VoxelCoord>, resolution: u16) -> Self {
        debug_assert!(check_canonical(&coords, resolution).is_ok());
        Self { resolution, coords }
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<VoxelCoord> {
        self.coords
    }

    /// Number of occupied cells.
    pub fn voxel_sum(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn contains(&self, coord: VoxelCoord) -> bool {
        self.coords.binary_search(&coord).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        self.coords.iter().copied()
    }

    pub fn to_dense(&self) -> DenseGrid {
        let mut grid = DenseGrid::filled(self.resolution, false);
        for &c in &self.coords {
            grid.set(c, true);
        }
        grid
    }

    pub fn from_dense(grid: &DenseGrid) -> Self {
        let coords = grid
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| VoxelCoord::from_linear_index(i as u64, grid.resolution))
            .collect();
        Self { resolution: grid.resolution, coords }
    }
}

pub(crate) fn check_canonical(coords: &[VoxelCoord], resolution: u16) -> Result<(), VoxelError> {
    for (i, &coord) in coords.iter().enumerate() {
        if !coord.in_bounds(resolution) {
            return Err(VoxelError::OutOfBounds { coord, resolution });
        }
        if i > 0 && coords[i - 1] >= coord {
            return Err(VoxelError::NotCanonical(i));
        }
    }
    Ok(())
}

/// Dense boolean occupancy over all `R^3` cells, indexed by linear index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseGrid {
    resolution: u16,
    cells: Vec<bool>,
}

impl DenseGrid {
    pub fn new(resolution: u16, cells: Vec<bool>) -> Result<Self, VoxelError> {
        check_resolution(resolution)?;
        let expected = cell_count(resolution);
        if cells.len() != expected {
            return Err(VoxelError::DimensionMismatch { expected, actual: cells.len() });
        }
        Ok(Self { resolution, cells })
    }

    pub fn filled(resolution: u16, value: bool) -> Self {
        Self { resolution, cells: vec![value; cell_count(resolution)] }
    }

    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, coord: VoxelCoord) -> bool {
        self.cells[coord.linear_index(self.resolution) as usize]
    }

    pub fn set(&mut self, coord: VoxelCoord, value: bool) {
        let i = coord.linear_index(self.resolution) as usize;
        self.cells[i] = value;
    }
}

fn cell_count(resolution: u16) -> usize {
    let r = usize::from(resolution);
    r * r * r
}
