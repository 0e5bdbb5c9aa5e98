//! Connected-component labeling of difference maps.
//!
//! Components are found with a disjoint-set forest over the sorted voxel
//! list. Each voxel is only linked to neighbors with a larger linear index,
//! so every adjacency is visited exactly once. The final ordering is
//! canonical (size descending, then smallest member ascending), so serial and
//! parallel runs produce identical output.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiffMap;
use crate::voxgrid::VoxelCoord;

/// Voxel adjacency: shared faces (6), plus shared edges (18), plus shared
/// corners (26).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

    pub fn neighbor_count(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Offsets `d` with `d > (0, 0, 0)` lexicographically, i.e. the half of
    /// the neighborhood with larger linear index.
    pub fn forward_offsets(self) -> Vec<[i32; 3]> {
        let max_manhattan = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1i32..=1 {
                    let d = [dx, dy, dz];
                    let manhattan: i32 = d.iter().map(|v: &i32| v.abs()).sum();
                    if d > [0, 0, 0] && manhattan <= max_manhattan {
                        out.push(d);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InvalidConnectivity(pub u8);

impl fmt::Display for InvalidConnectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "connectivity must be 6, 18 or 26, got {}", self.0)
    }
}

impl std::error::Error for InvalidConnectivity {}

impl TryFrom<u8> for Connectivity {
    type Error = InvalidConnectivity;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(InvalidConnectivity(other)),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.neighbor_count()
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.neighbor_count())
    }
}

/// One connected component; coordinates sorted by linear index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    coords: Vec<VoxelCoord>,
}

impl Component {
    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn size(&self) -> usize {
        self.coords.len()
    }

    pub fn min_coord(&self) -> VoxelCoord {
        self.coords[0]
    }
}

/// Partition of a difference map into components, in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSet {
    resolution: u16,
    connectivity: Connectivity,
    components: Vec<Component>,
}

impl ComponentSet {
    pub fn resolution(&self) -> u16 {
        self.resolution
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(Component::size).collect()
    }

    pub fn total_voxels(&self) -> usize {
        self.components.iter().map(Component::size).sum()
    }
}

/// Single-threaded labeling.
pub fn label_components(diff: &DiffMap, connectivity: Connectivity) -> ComponentSet {
    let coords = diff.coords();
    let lookup = IndexLookup::new(coords, diff.resolution());
    let offsets = connectivity.forward_offsets();
    let mut forest = DisjointSets::new(coords.len());
    for (i, &c) in coords.iter().enumerate() {
        for_each_forward_neighbor(c, i, &offsets, diff.resolution(), &lookup, |a, b| forest.union(a, b));
    }
    assemble(diff, connectivity, forest)
}

/// Labeling with neighbor discovery split across `threads` workers. The
/// output is identical to [`label_components`].
pub fn label_components_parallel(
    diff: &DiffMap,
    connectivity: Connectivity,
    threads: usize,
) -> ComponentSet {
    let coords = diff.coords();
    let threads = threads.max(1);
    let lookup = IndexLookup::new(coords, diff.resolution());
    let offsets = connectivity.forward_offsets();
    let chunk = coords.len().div_ceil(threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let edges: Vec<Vec<(u32, u32)>> = pool.install(|| {
        coords
            .par_chunks(chunk)
            .enumerate()
            .map(|(k, part)| {
                let mut local = Vec::new();
                for (j, &c) in part.iter().enumerate() {
                    let i = k * chunk + j;
                    for_each_forward_neighbor(c, i, &offsets, diff.resolution(), &lookup, |a, b| {
                        local.push((a as u32, b as u32))
                    });
                }
                local
            })
            .collect()
    });
    let mut forest = DisjointSets::new(coords.len());
    for (a, b) in edges.into_iter().flatten() {
        forest.union(a as usize, b as usize);
    }
    assemble(diff, connectivity, forest)
}

fn for_each_forward_neighbor(
    c: VoxelCoord,
    i: usize,
    offsets: &[[i32; 3]],
    resolution: u16,
    lookup: &IndexLookup<'_>,
    mut link: impl FnMut(usize, usize),
) {
    for &d in offsets {
        if let Some(n) = c.offset(d, resolution) {
            if let Some(j) = lookup.position(n) {
                link(i, j);
            }
        }
    }
}

fn assemble(diff: &DiffMap, connectivity: Connectivity, mut forest: DisjointSets) -> ComponentSet {
    let coords = diff.coords();
    let mut slot_of_root = vec![u32::MAX; coords.len()];
    let mut components: Vec<Component> = Vec::new();
    for (i, &c) in coords.iter().enumerate() {
        let root = forest.find(i);
        if slot_of_root[root] == u32::MAX {
            slot_of_root[root] = components.len() as u32;
            components.push(Component { coords: Vec::new() });
        }
        components[slot_of_root[root] as usize].coords.push(c);
    }
    components.sort_by(|a, b| b.size().cmp(&a.size()).then(a.min_coord().cmp(&b.min_coord())));
    ComponentSet { resolution: diff.resolution(), connectivity, components }
}

/// Position of a coordinate within the sorted voxel list.
enum IndexLookup<'a> {
    /// Linear index -> position + 1 (0 = absent). Used for small grids.
    Dense(Vec<u32>, u16),
    Sorted(&'a [VoxelCoord]),
}

const DENSE_LOOKUP_LIMIT: u64 = 1 << 21;

impl<'a> IndexLookup<'a> {
    fn new(coords: &'a [VoxelCoord], resolution: u16) -> Self {
        let cells = u64::from(resolution).pow(3);
        if cells <= DENSE_LOOKUP_LIMIT && coords.len() < u32::MAX as usize {
            let mut table = vec![0u32; cells as usize];
            for (i, c) in coords.iter().enumerate() {
                table[c.linear_index(resolution) as usize] = i as u32 + 1;
            }
            IndexLookup::Dense(table, resolution)
        } else {
            IndexLookup::Sorted(coords)
        }
    }

    fn position(&self, c: VoxelCoord) -> Option<usize> {
        match self {
            IndexLookup::Dense(table, r) => match table[c.linear_index(*r) as usize] {
                0 => None,
                p => Some(p as usize - 1),
            },
            IndexLookup::Sorted(coords) => coords.binary_search(&c).ok(),
        }
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            let grand = self.parent[self.parent[i] as usize];
            self.parent[i] = grand;
            i = grand as usize;
        }
        i
    }

    /// The smaller root becomes the parent.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo as u32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxgrid::SparseStructure;

    fn diff(coords: &[[u16; 3]], r: u16) -> DiffMap {
        DiffMap::from_structure(SparseStructure::new(coords.iter().map(|&c| c.into()), r).unwrap())
    }

    #[test]
    fn offsets_cover_half_neighborhoods() {
        assert_eq!(Connectivity::Six.forward_offsets().len(), 3);
        assert_eq!(Connectivity::Eighteen.forward_offsets().len(), 9);
        assert_eq!(Connectivity::TwentySix.forward_offsets().len(), 13);
    }

    #[test]
    fn corner_adjacency_only_in_26() {
        let d = diff(&[[0, 0, 0], [1, 1, 1]], 4);
        assert_eq!(label_components(&d, Connectivity::Six).len(), 2);
        assert_eq!(label_components(&d, Connectivity::Eighteen).len(), 2);
        assert_eq!(label_components(&d, Connectivity::TwentySix).len(), 1);
    }

    #[test]
    fn edge_adjacency_enters_at_18() {
        let d = diff(&[[0, 0, 0], [1, 1, 0]], 4);
        assert_eq!(label_components(&d, Connectivity::Six).len(), 2);
        assert_eq!(label_components(&d, Connectivity::Eighteen).len(), 1);
    }

    #[test]
    fn canonical_order_size_then_min_index() {
        let d = diff(&[[3, 3, 3], [0, 0, 0], [0, 0, 1], [2, 0, 0], [2, 0, 1]], 4);
        let cs = label_components(&d, Connectivity::Six);
        assert_eq!(cs.sizes(), vec![2, 2, 1]);
        assert_eq!(cs.components()[0].min_coord(), VoxelCoord::new(0, 0, 0));
        assert_eq!(cs.components()[1].min_coord(), VoxelCoord::new(2, 0, 0));
    }

    #[test]
    fn empty_diff_has_no_components() {
        let cs = label_components(&diff(&[], 4), Connectivity::TwentySix);
        assert!(cs.is_empty());
    }

    #[test]
    fn sorted_lookup_path_for_large_grids() {
        let d = diff(&[[0, 0, 0], [0, 0, 1], [500, 500, 500], [501, 501, 501]], 1024);
        let cs = label_components(&d, Connectivity::TwentySix);
        assert_eq!(cs.sizes(), vec![2, 2]);
        assert_eq!(label_components_parallel(&d, Connectivity::TwentySix, 3), cs);
    }

    #[test]
    fn connectivity_parse() {
        assert_eq!(Connectivity::try_from(18).unwrap(), Connectivity::Eighteen);
        assert_eq!(Connectivity::try_from(8), Err(InvalidConnectivity(8)));
        assert_eq!(serde_json::to_string(&Connectivity::Six).unwrap(), "6");
    }
}
