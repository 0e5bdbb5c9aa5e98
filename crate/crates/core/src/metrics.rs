//! Geometric evaluation metrics.
//!
//! Chamfer distance here is the sum of the two directed mean squared
//! nearest-neighbor distances:
//! `CD(A, B) = mean_a min_b |a - b|^2 + mean_b min_a |a - b|^2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regionmerge::FlipMask;
use crate::voxgrid::SparseStructure;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptySet,
    #[error("resolution mismatch: {expected} vs {actual}")]
    ResolutionMismatch { expected: u16, actual: u16 },
}

fn squared_distance<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Static 3-d tree for nearest-neighbor distance queries.
struct KdTree<'a, T> {
    points: &'a [[T; 3]],
    /// Point indices arranged so that every subrange `[lo, hi)` is a subtree
    /// whose median element splits on axis `depth % 3`.
    order: Vec<usize>,
}

impl<'a, T: Scalar> KdTree<'a, T> {
    fn build(points: &'a [[T; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        Self::arrange(points, &mut order, 0);
        Self { points, order }
    }

    fn arrange(points: &[[T; 3]], idx: &mut [usize], depth: usize) {
        if idx.len() <= 1 {
            return;
        }
        let axis = depth % 3;
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis].partial_cmp(&points[b][axis]).expect("finite coordinates")
        });
        let (left, right) = idx.split_at_mut(mid);
        Self::arrange(points, left, depth + 1);
        Self::arrange(points, &mut right[1..], depth + 1);
    }

    fn nearest_squared(&self, q: &[T; 3]) -> T {
        let mut best = T::infinity();
        self.search(q, 0, self.order.len(), 0, &mut best);
        best
    }

    fn search(&self, q: &[T; 3], lo: usize, hi: usize, depth: usize, best: &mut T) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[self.order[mid]];
        let d = squared_distance(q, p);
        if d < *best {
            *best = d;
        }
        let axis = depth % 3;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if delta * delta < *best {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn directed_mean<T: Scalar>(from: &[[T; 3]], to: &[[T; 3]]) -> T {
    let tree = KdTree::build(to);
    let total = from.iter().fold(T::zero(), |acc, a| acc + tree.nearest_squared(a));
    total / T::of(from.len() as f64)
}

/// Symmetric Chamfer distance with squared Euclidean distances.
pub fn chamfer<T: Scalar>(a: &[[T; 3]], b: &[[T; 3]]) -> Result<T, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(directed_mean(a, b) + directed_mean(b, a))
}

/// Cell centers in grid units.
pub fn voxel_centers<T: Scalar>(s: &SparseStructure) -> Vec<[T; 3]> {
    let half = T::of(0.5);
    s.iter()
        .map(|c| c.to_array().map(|v| T::of(f64::from(v)) + half))
        .collect()
}

/// Chamfer distance between the cell centers of two structures.
pub fn chamfer_voxels(a: &SparseStructure, b: &SparseStructure) -> Result<f64, MetricsError> {
    if a.resolution() != b.resolution() {
        return Err(MetricsError::ResolutionMismatch { expected: a.resolution(), actual: b.resolution() });
    }
    chamfer::<f64>(&voxel_centers(a), &voxel_centers(b))
}

/// `|A n B| / |A u B|`, defined as 1 when both sets are empty.
pub fn occupancy_iou(a: &SparseStructure, b: &SparseStructure) -> Result<f64, MetricsError> {
    if a.resolution() != b.resolution() {
        return Err(MetricsError::ResolutionMismatch { expected: a.resolution(), actual: b.resolution() });
    }
    let inter = sorted_intersection_len(a.coords(), b.coords());
    let union = a.voxel_sum() + b.voxel_sum() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

fn sorted_intersection_len<K: Ord>(a: &[K], b: &[K]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// How faithfully a merge kept the source outside the mask and took the
/// target inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// IoU of merged and source occupancy restricted to the mask complement.
    pub outside_mask_iou: f64,
    /// Fraction of mask voxels whose merged occupancy equals the target's.
    pub inside_mask_match_fraction: f64,
    pub mask_size: usize,
    pub diff_size: usize,
}

impl ConsistencyReport {
    pub fn is_exact(&self) -> bool {
        self.outside_mask_iou == 1.0 && self.inside_mask_match_fraction == 1.0
    }
}

pub fn region_consistency(
    source: &SparseStructure,
    target: &SparseStructure,
    merged: &SparseStructure,
    mask: &FlipMask,
) -> Result<ConsistencyReport, MetricsError> {
    let r = source.resolution();
    for other in [target.resolution(), merged.resolution(), mask.resolution()] {
        if other != r {
            return Err(MetricsError::ResolutionMismatch { expected: r, actual: other });
        }
    }
    let outside = |s: &SparseStructure| {
        SparseStructure::from_sorted(s.iter().filter(|&c| !mask.contains(c)).collect(), r)
            .expect("subset of a canonical list")
    };
    let outside_mask_iou = occupancy_iou(&outside(merged), &outside(source))?;
    let matching = mask
        .coords()
        .iter()
        .filter(|&&c| merged.contains(c) == target.contains(c))
        .count();
    let inside_mask_match_fraction = if mask.is_empty() {
        1.0
    } else {
        matching as f64 / mask.len() as f64
    };
    let diff_size = source.voxel_sum() + target.voxel_sum()
        - 2 * sorted_intersection_len(source.coords(), target.coords());
    Ok(ConsistencyReport {
        outside_mask_iou,
        inside_mask_match_fraction,
        mask_size: mask.len(),
        diff_size,
    })
}
