//! Reference implementations used as test oracles. They share no code with
//! the library: dense grids, breadth-first flood fill, quadratic scans.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use voxedit_core::voxgrid::{SparseStructure, VoxelCoord};

pub fn idx(r: usize, x: usize, y: usize, z: usize) -> usize {
    (x * r + y) * r + z
}

pub fn dense(s: &SparseStructure) -> Vec<bool> {
    let r = usize::from(s.resolution());
    let mut cells = vec![false; r * r * r];
    for c in s.iter() {
        cells[idx(r, c.x.into(), c.y.into(), c.z.into())] = true;
    }
    cells
}

pub fn sparse(cells: &[bool], r: u16) -> SparseStructure {
    let n = usize::from(r);
    let mut coords = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if cells[idx(n, x, y, z)] {
                    coords.push(VoxelCoord::new(x as u16, y as u16, z as u16));
                }
            }
        }
    }
    SparseStructure::new(coords, r).unwrap()
}

pub fn random_structure<R: Rng>(rng: &mut R, r: u16, density: f64) -> SparseStructure {
    let n = usize::from(r);
    let cells: Vec<bool> = (0..n * n * n).map(|_| rng.gen_bool(density)).collect();
    sparse(&cells, r)
}

/// Neighbor offsets by explicit enumeration of shared faces / edges / corners.
pub fn neighbor_offsets(connectivity: u8) -> Vec<[i32; 3]> {
    let mut out = Vec::new();
    for dx in -1i32..=1 {
        for dy in -1i32..=1 {
            for dz in -1i32..=1 {
                let nonzero = [dx, dy, dz].iter().filter(|v| **v != 0).count();
                let keep = match connectivity {
                    6 => nonzero == 1,
                    18 => nonzero == 1 || nonzero == 2,
                    26 => nonzero >= 1,
                    _ => panic!("bad connectivity"),
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// Components of a dense grid by BFS, each a sorted list of linear indices,
/// ordered by size descending then smallest index ascending.
pub fn bfs_components(cells: &[bool], r: usize, connectivity: u8) -> Vec<Vec<usize>> {
    let offsets = neighbor_offsets(connectivity);
    let mut seen = vec![false; cells.len()];
    let mut comps = Vec::new();
    for start in 0..cells.len() {
        if !cells[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y, z) = ((i / (r * r)) as i32, ((i / r) % r) as i32, (i % r) as i32);
            for d in &offsets {
                let (nx, ny, nz) = (x + d[0], y + d[1], z + d[2]);
                let inside = |v: i32| (0..r as i32).contains(&v);
                if inside(nx) && inside(ny) && inside(nz) {
                    let j = idx(r, nx as usize, ny as usize, nz as usize);
                    if cells[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

pub enum OraclePolicy {
    TopK(usize),
    Tau(usize),
}

/// Dense reference merge: returns `(merged cells, mask cells)`.
pub fn dense_merge(src: &[bool], tgt: &[bool], r: usize, connectivity: u8, policy: &OraclePolicy) -> (Vec<bool>, Vec<bool>) {
    let diff: Vec<bool> = src.iter().zip(tgt).map(|(a, b)| a != b).collect();
    let comps = bfs_components(&diff, r, connectivity);
    let mut mask = vec![false; diff.len()];
    for (rank, comp) in comps.iter().enumerate() {
        let take = match policy {
            OraclePolicy::TopK(k) => rank < *k,
            OraclePolicy::Tau(t) => comp.len() > *t,
        };
        if take {
            for &i in comp {
                mask[i] = true;
            }
        }
    }
    let merged = (0..diff.len()).map(|i| if mask[i] { tgt[i] } else { src[i] }).collect();
    (merged, mask)
}

pub fn brute_chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let d2 = |p: &[f64; 3], q: &[f64; 3]| {
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let dz = p[2] - q[2];
        dx * dx + dy * dy + dz * dz
    };
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        let mut total = 0.0;
        for p in from {
            let mut best = f64::INFINITY;
            for q in to {
                best = best.min(d2(p, q));
            }
            total += best;
        }
        total / from.len() as f64
    };
    directed(a, b) + directed(b, a)
}

pub fn random_latent<R: Rng>(rng: &mut R, s: &SparseStructure, channels: usize) -> voxedit_core::voxgrid::StructuredLatent {
    let entries = s.iter().map(|c| {
        let v: Vec<f32> = (0..channels).map(|_| finite_f32(rng)).collect();
        (c, v)
    });
    voxedit_core::voxgrid::StructuredLatent::new(entries, channels, s.resolution()).unwrap()
}

/// Uniform over finite `f32` bit patterns, so subnormals, negative zero and
/// extreme exponents all appear.
pub fn finite_f32<R: Rng>(rng: &mut R) -> f32 {
    loop {
        let x = f32::from_bits(rng.gen());
        if x.is_finite() {
            return x;
        }
    }
}

pub fn random_payload<R: Rng>(rng: &mut R) -> voxedit_core::voxgrid::nvx::NvxPayload {
    use voxedit_core::voxgrid::nvx::NvxPayload;
    let r = rng.gen_range(2..=12u16);
    let density = rng.gen_range(0.0..0.6);
    let s = random_structure(rng, r, density);
    if rng.gen_bool(0.5) {
        NvxPayload::Occupancy(s)
    } else {
        let channels = rng.gen_range(1..=9);
        NvxPayload::Latent(random_latent(rng, &s, channels))
    }
}

fn random_text<R: Rng>(rng: &mut R) -> String {
    const PIECES: &[&str] = &["chair", "red", "wing", " ", "é", "\"", "\\", "\n", "\t", "\u{1F600}", "{}", "leg 2", "ü"];
    let n = rng.gen_range(0..6);
    (0..n).map(|_| PIECES[rng.gen_range(0..PIECES.len())]).collect()
}

fn maybe<R: Rng, T>(rng: &mut R, f: impl FnOnce(&mut R) -> T) -> Option<T> {
    if rng.gen_bool(0.5) {
        Some(f(rng))
    } else {
        None
    }
}

pub fn random_record<R: Rng>(rng: &mut R, index: usize) -> voxedit_core::pipeline::ManifestRecord {
    use voxedit_core::pipeline::EditInstruction;
    use voxedit_core::pipeline::{ManifestRecord, RecordStatus};
    use voxedit_core::regionmerge::{Connectivity, SelectionPolicy};

    const WORDS: &[&str] = &["a red hat", "the left wing", "chair back", "wheels", "a tall antenna"];
    let word = |rng: &mut R| WORDS[rng.gen_range(0..WORDS.len())];
    let connectivity = Connectivity::try_from([6u8, 18, 26][rng.gen_range(0..3)]).unwrap();
    let policy = if rng.gen_bool(0.5) {
        SelectionPolicy::TopK(rng.gen_range(0..10))
    } else {
        SelectionPolicy::Threshold(rng.gen_range(0..500))
    };
    let mut r = ManifestRecord::pending(format!("rec-{index:06}"), rng.gen(), connectivity, policy);
    r.status = [RecordStatus::Ok, RecordStatus::Filtered, RecordStatus::Failed][rng.gen_range(0..3)];
    r.attempt = rng.gen_range(1..10);
    r.stage = maybe(rng, random_text);
    r.reason = maybe(rng, random_text);
    r.source_image = maybe(rng, random_text);
    r.edited_image = maybe(rng, random_text);
    r.instruction = match rng.gen_range(0..4) {
        0 => None,
        1 => Some(EditInstruction::add(word(rng), word(rng)).unwrap()),
        2 => Some(EditInstruction::remove(word(rng)).unwrap()),
        _ => Some(EditInstruction::replace(word(rng), word(rng)).unwrap()),
    };
    r.source_structure = maybe(rng, random_text);
    r.edited_structure = maybe(rng, random_text);
    r.merged_structure = maybe(rng, random_text);
    r.source_slat = maybe(rng, random_text);
    r.merged_slat = maybe(rng, random_text);
    r.voxel_sum_src = maybe(rng, |g| g.gen_range(0..300_000));
    r.voxel_sum_tgt = maybe(rng, |g| g.gen_range(0..300_000));
    r.voxel_sum_merged = maybe(rng, |g| g.gen_range(0..300_000));
    r.mask_component_sizes = (0..rng.gen_range(0..6)).map(|_| rng.gen_range(1..5000)).collect();
    if rng.gen_bool(0.3) {
        r.extra.insert("x_note".into(), serde_json::Value::String(random_text(rng)));
        r.extra.insert("x_score".into(), serde_json::json!(rng.gen_range(0..1000)));
    }
    r
}
