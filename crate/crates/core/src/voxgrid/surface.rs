use std::collections::HashMap;

use super::{SparseStructure, TriMesh};
use crate::Scalar;

/// Outward direction and the four face corners (unit-cube offsets) in
/// counter-clockwise order seen from outside.
const FACES: [([i32; 3], [[u32; 3]; 4]); 6] = [
    ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
    ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
    ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
    ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
    ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
    ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
];

/// Boundary surface of the occupied cells: two triangles per face whose
/// neighbor across that face is empty (or outside the grid). Vertices are
/// grid-corner positions, shared between faces.
pub fn extract_surface_mesh<T: Scalar>(s: &SparseStructure) -> TriMesh<T> {
    let r = s.resolution();
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let mut corners: Vec<[u32; 3]> = Vec::new();
    let mut triangles = Vec::new();

    for voxel in s.iter() {
        for (dir, quad) in &FACES {
            let exposed = match voxel.offset(*dir, r) {
                Some(n) => !s.contains(n),
                None => true,
            };
            if !exposed {
                continue;
            }
            let ids = quad.map(|o| {
                let p = [
                    u32::from(voxel.x) + o[0],
                    u32::from(voxel.y) + o[1],
                    u32::from(voxel.z) + o[2],
                ];
                *index.entry(p).or_insert_with(|| {
                    corners.push(p);
                    (corners.len() - 1) as u32
                })
            });
            triangles.push([ids[0], ids[1], ids[2]]);
            triangles.push([ids[0], ids[2], ids[3]]);
        }
    }

    let vertices = corners
        .iter()
        .map(|p| p.map(|c| T::of(f64::from(c))))
        .collect();
    TriMesh::new(vertices, triangles).expect("indices are generated in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxgrid::VoxelCoord;
    use proptest::prelude::*;

    fn structure(coords: &[[u16; 3]], r: u16) -> SparseStructure {
        SparseStructure::new(coords.iter().map(|&c| VoxelCoord::from(c)), r).unwrap()
    }

    #[test]
    fn empty_structure_gives_empty_mesh() {
        let mesh: TriMesh<f64> = extract_surface_mesh(&structure(&[], 4));
        assert!(mesh.is_empty());
        assert!(mesh.vertices().is_empty());
    }

    #[test]
    fn single_voxel_is_a_cube() {
        let mesh: TriMesh<f64> = extract_surface_mesh(&structure(&[[1, 1, 1]], 4));
        assert_eq!(mesh.triangles().len(), 12);
        assert_eq!(mesh.vertices().len(), 8);
    }

    #[test]
    fn face_adjacent_pair_hides_two_faces() {
        let mesh: TriMesh<f32> = extract_surface_mesh(&structure(&[[1, 1, 1], [1, 1, 2]], 4));
        assert_eq!(mesh.triangles().len(), 20);
        assert_eq!(mesh.vertices().len(), 12);
    }

    #[test]
    fn windings_face_outward() {
        let mesh: TriMesh<f64> = extract_surface_mesh(&structure(&[[0, 0, 0]], 2));
        let centre = [0.5, 0.5, 0.5];
        for t in 0..mesh.triangles().len() {
            let [a, b, c] = mesh.triangle(t);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let out = [a[0] - centre[0], a[1] - centre[1], a[2] - centre[2]];
            assert!(n[0] * out[0] + n[1] * out[1] + n[2] * out[2] > 0.0, "triangle {t} faces inward");
        }
    }

    proptest! {
        #[test]
        fn triangle_count_matches_brute_force_face_count(
            raw in proptest::collection::vec((0u16..5, 0u16..5, 0u16..5), 0..40)
        ) {
            let s = SparseStructure::new(raw.iter().map(|&(x, y, z)| VoxelCoord::new(x, y, z)), 5).unwrap();
            let dense = s.to_dense();
            let mut exposed = 0usize;
            for v in s.iter() {
                for d in [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]] {
                    let (x, y, z) = (i32::from(v.x) + d[0], i32::from(v.y) + d[1], i32::from(v.z) + d[2]);
                    let inside = (0..5).contains(&x) && (0..5).contains(&y) && (0..5).contains(&z);
                    if !inside || !dense.get(VoxelCoord::new(x as u16, y as u16, z as u16)) {
                        exposed += 1;
                    }
                }
            }
            let mesh: TriMesh<f64> = extract_surface_mesh(&s);
            prop_assert_eq!(mesh.triangles().len(), 2 * exposed);
        }
    }
}
