use std::fmt::Write as _;

use super::VoxelError;
use crate::Scalar;

/// Axis-aligned box `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T> {
    pub min: [T; 3],
    pub max: [T; 3],
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: [T; 3], max: [T; 3]) -> Self {
        Self { min, max }
    }

    pub fn has_positive_extent(&self) -> bool {
        (0..3).all(|a| self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a])
    }

    pub fn expanded(&self, pad: T) -> Self {
        Self {
            min: self.min.map(|v| v - pad),
            max: self.max.map(|v| v + pad),
        }
    }
}

/// Indexed triangle mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh<T> {
    vertices: Vec<[T; 3]>,
    triangles: Vec<[u32; 3]>,
}

impl<T: Scalar> TriMesh<T> {
    pub fn new(vertices: Vec<[T; 3]>, triangles: Vec<[u32; 3]>) -> Result<Self, VoxelError> {
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(VoxelError::NonFiniteVertex(i));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(VoxelError::BadTriangleIndex {
                    triangle: t,
                    index,
                    vertex_count: vertices.len(),
                });
            }
        }
        Ok(Self { vertices, triangles })
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new() }
    }

    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, index: usize) -> [[T; 3]; 3] {
        self.triangles[index].map(|i| self.vertices[i as usize])
    }

    /// Bounding box of the referenced vertices, `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<Aabb<T>> {
        let mut points = self.triangles.iter().flatten().map(|&i| self.vertices[i as usize]);
        let first = points.next()?;
        let (min, max) = points.fold((first, first), |(lo, hi), p| {
            (
                [lo[0].min(p[0]), lo[1].min(p[1]), lo[2].min(p[2])],
                [hi[0].max(p[0]), hi[1].max(p[1]), hi[2].max(p[2])],
            )
        });
        Some(Aabb { min, max })
    }

    /// Wavefront OBJ text with `v` and `f` records (1-based indices).
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

/// Parses the geometry subset of OBJ: `v` and `f` records. Polygonal faces
/// are fan-triangulated; texture/normal references and negative (relative)
/// indices are supported, everything else is ignored.
pub fn parse_obj<T: Scalar>(text: &str) -> Result<TriMesh<T>, VoxelError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let bad = |message: String| VoxelError::MalformedObj { line: line_no, message };
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut p = [T::zero(); 3];
                for slot in &mut p {
                    let raw = fields.next().ok_or_else(|| bad("vertex needs 3 coordinates".into()))?;
                    let value: f64 = raw.parse().map_err(|_| bad(format!("bad number {raw:?}")))?;
                    *slot = T::of(value);
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut face = Vec::new();
                for raw in fields {
                    let head = raw.split('/').next().unwrap_or_default();
                    let idx: i64 = head.parse().map_err(|_| bad(format!("bad index {raw:?}")))?;
                    let resolved = match idx {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => return Err(bad("index 0 is invalid".into())),
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(bad(format!("index {idx} out of range")));
                    }
                    face.push(resolved as u32);
                }
                if face.len() < 3 {
                    return Err(bad("face needs at least 3 vertices".into()));
                }
                for k in 1..face.len() - 1 {
                    triangles.push([face[0], face[k], face[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}
