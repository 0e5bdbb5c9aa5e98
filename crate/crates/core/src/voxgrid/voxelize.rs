//! Conservative surface voxelization with the triangle/box separating-axis
//! test.

use super::{check_resolution, Aabb, SparseStructure, TriMesh, VoxelCoord, VoxelError};
use crate::Scalar;

/// Padding added to each side of a mesh bounding box when no explicit bounds
/// are given.
pub const DEFAULT_BOUNDS_PADDING: f64 = 1e-6;

/// Occupies every cell of the uniform `R^3` partition of `bounds` whose
/// closed box intersects at least one triangle. Geometry outside `bounds`
/// is ignored.
pub fn voxelize_mesh<T: Scalar>(
    mesh: &TriMesh<T>,
    resolution: u16,
    bounds: &Aabb<T>,
) -> Result<SparseStructure, VoxelError> {
    check_resolution(resolution)?;
    if !bounds.has_positive_extent() {
        return Err(VoxelError::EmptyBounds);
    }
    let r = T::of(f64::from(resolution));
    let cell: [T; 3] = std::array::from_fn(|a| (bounds.max[a] - bounds.min[a]) / r);
    let half = cell.map(|h| h * T::of(0.5));
    let last = i64::from(resolution) - 1;

    let mut occupied = Vec::new();
    for t in 0..mesh.triangles().len() {
        let tri = mesh.triangle(t);
        // Cell range of the triangle's bounding box, widened by one cell so
        // rounding in the division never drops a touching cell.
        let mut range = [(0i64, 0i64); 3];
        for a in 0..3 {
            let lo = tri.iter().map(|p| p[a]).fold(T::infinity(), T::min);
            let hi = tri.iter().map(|p| p[a]).fold(T::neg_infinity(), T::max);
            let first = ((lo - bounds.min[a]) / cell[a]).floor().to_i64().unwrap_or(i64::MIN).saturating_sub(1);
            let end = ((hi - bounds.min[a]) / cell[a]).floor().to_i64().unwrap_or(i64::MAX).saturating_add(1);
            range[a] = (first.max(0), end.min(last));
        }
        if range.iter().any(|&(a, b)| a > b) {
            continue;
        }
        for x in range[0].0..=range[0].1 {
            for y in range[1].0..=range[1].1 {
                for z in range[2].0..=range[2].1 {
                    let idx = [x, y, z];
                    let center: [T; 3] = std::array::from_fn(|a| {
                        bounds.min[a] + (T::of(idx[a] as f64) + T::of(0.5)) * cell[a]
                    });
                    if triangle_box_overlap(tri, center, half) {
                        occupied.push(VoxelCoord::new(x as u16, y as u16, z as u16));
                    }
                }
            }
        }
    }
    SparseStructure::new(occupied, resolution)
}

/// [`voxelize_mesh`] over the mesh bounding box padded by
/// [`DEFAULT_BOUNDS_PADDING`]. An empty mesh yields an empty structure.
pub fn voxelize_mesh_auto<T: Scalar>(
    mesh: &TriMesh<T>,
    resolution: u16,
) -> Result<SparseStructure, VoxelError> {
    match mesh.bounding_box() {
        None => SparseStructure::empty(resolution),
        Some(b) => voxelize_mesh(mesh, resolution, &b.expanded(T::of(DEFAULT_BOUNDS_PADDING))),
    }
}

fn sub<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross<T: Scalar>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Closed triangle/box intersection test over the 13 candidate separating
/// axes: three box normals, the triangle normal, and the nine edge/box-axis
/// cross products. Touching counts as overlap, and degenerate triangles
/// (segments, points) are handled by the same axes.
pub fn triangle_box_overlap<T: Scalar>(tri: [[T; 3]; 3], center: [T; 3], half: [T; 3]) -> bool {
    let v = tri.map(|p| sub(p, center));
    let separated = |axis: [T; 3]| {
        let p = v.map(|q| dot(axis, q));
        let lo = p[0].min(p[1]).min(p[2]);
        let hi = p[0].max(p[1]).max(p[2]);
        let radius = half[0] * axis[0].abs() + half[1] * axis[1].abs() + half[2] * axis[2].abs();
        lo > radius || hi < -radius
    };

    let (o, l) = (T::zero(), T::one());
    let units = [[l, o, o], [o, l, o], [o, o, l]];
    if units.into_iter().any(separated) {
        return false;
    }
    let edges = [sub(v[1], v[0]), sub(v[2], v[1]), sub(v[0], v[2])];
    if separated(cross(edges[0], edges[1])) {
        return false;
    }
    !edges
        .iter()
        .any(|&e| units.iter().any(|&u| separated(cross(u, e))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_axis_separation() {
        let tri = [[2.0, 0.0, 0.0], [3.0, 0.0, 0.0], [2.0, 1.0, 0.0]];
        assert!(!triangle_box_overlap(tri, [0.0; 3], [1.0; 3]));
        // touching the face x = 1 counts
        let tri = [[1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [2.0, 1.0, 0.0]];
        assert!(triangle_box_overlap(tri, [0.0; 3], [1.0; 3]));
    }

    #[test]
    fn plane_separation() {
        // Large triangle in plane x + y + z = 3.5 misses the unit box corner
        // region even though its bounding box covers the box.
        let tri = [[3.5, 0.0, 0.0], [0.0, 3.5, 0.0], [0.0, 0.0, 3.5]];
        assert!(!triangle_box_overlap(tri, [0.0; 3], [1.0; 3]));
        let tri = [[2.9, 0.0, 0.0], [0.0, 2.9, 0.0], [0.0, 0.0, 2.9]];
        assert!(triangle_box_overlap(tri, [0.0; 3], [1.0; 3]));
    }

    #[test]
    fn sliver_near_box_edge() {
        let tri = [[1.5, -0.2, -5.0], [-0.2, 1.5, -5.0], [-0.2, 1.5, 5.0]];
        assert!(!triangle_box_overlap(tri, [0.0; 3], [0.5; 3]));
        let tri = [[0.9, -0.2, -5.0], [-0.2, 0.9, -5.0], [-0.2, 0.9, 5.0]];
        assert!(triangle_box_overlap(tri, [0.0; 3], [0.5; 3]));
    }

    #[test]
    fn degenerate_point_triangle() {
        let p = [0.25f32, 0.25, 0.25];
        assert!(triangle_box_overlap([p, p, p], [0.0; 3], [0.5; 3]));
        let q = [0.75f32, 0.25, 0.25];
        assert!(!triangle_box_overlap([q, q, q], [0.0; 3], [0.5; 3]));
    }

    #[test]
    fn empty_mesh_and_empty_bounds() {
        let mesh = TriMesh::<f64>::empty();
        assert!(voxelize_mesh_auto(&mesh, 8).unwrap().is_empty());
        let flat = Aabb::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
        assert_eq!(voxelize_mesh(&mesh, 8, &flat).unwrap_err(), VoxelError::EmptyBounds);
    }

    #[test]
    fn geometry_outside_bounds_is_ignored() {
        let mesh = TriMesh::new(
            vec![[5.0, 5.0, 5.0], [6.0, 5.0, 5.0], [5.0, 6.0, 5.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let b = Aabb::new([0.0; 3], [1.0; 3]);
        assert!(voxelize_mesh(&mesh, 4, &b).unwrap().is_empty());
    }
}
