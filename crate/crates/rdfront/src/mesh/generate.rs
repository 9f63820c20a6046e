//! Structured box mesher with graded refinement toward an inner primitive.
//!
//! A tensor grid is built per axis: uniform cells of size <= `fine_h` across
//! the inner primitive's bounding box (plus a two-cell margin), geometrically
//! graded up to `coarse_h` toward the outer boundary. Every grid cell is split
//! into six tetrahedra around the same main diagonal, which keeps neighboring
//! cells conforming. The result is fully deterministic.

use super::{signed_volume, BoundaryFace, GeometryPrimitive, Mesh};
use crate::error::{Error, Result};

/// Default cap on generated elements.
pub const DEFAULT_ELEMENT_BUDGET: usize = 3_000_000;

const GRADING_RATIO: f64 = 1.4;

/// Mesh the `outer` box, refined near the surface of `inner`.
pub fn generate_box_mesh(
    outer: GeometryPrimitive,
    inner: GeometryPrimitive,
    coarse_h: f64,
    fine_h: f64,
) -> Result<Mesh> {
    generate_box_mesh_with_budget(outer, inner, coarse_h, fine_h, DEFAULT_ELEMENT_BUDGET)
}

/// As [`generate_box_mesh`], with an explicit element budget.
pub fn generate_box_mesh_with_budget(
    outer: GeometryPrimitive,
    inner: GeometryPrimitive,
    coarse_h: f64,
    fine_h: f64,
    element_budget: usize,
) -> Result<Mesh> {
    outer.validate()?;
    inner.validate()?;
    if !(fine_h > 0.0) || !(coarse_h > 0.0) || fine_h > coarse_h {
        return Err(Error::Geometry(format!(
            "mesh sizes must satisfy 0 < fine_h <= coarse_h, got fine_h={fine_h}, coarse_h={coarse_h}"
        )));
    }
    let extents = match outer {
        GeometryPrimitive::Box { extents } => extents,
        GeometryPrimitive::Sphere { .. } => {
            return Err(Error::Argument(
                "outer primitive must be a box".into(),
            ))
        }
    };
    let (in_lo, in_hi) = inner.bounding_box();
    for k in 0..3 {
        let e = 0.5 * extents[k];
        if !(in_lo[k] > -e && in_hi[k] < e) {
            return Err(Error::Geometry(format!(
                "inner primitive is not strictly contained in the outer box along axis {k}"
            )));
        }
    }

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(3);
    for k in 0..3 {
        axes.push(axis_grid(0.5 * extents[k], in_lo[k], in_hi[k], fine_h, coarse_h));
    }
    let (nx, ny, nz) = (axes[0].len() - 1, axes[1].len() - 1, axes[2].len() - 1);
    let cell_count = nx * ny * nz;
    if cell_count.saturating_mul(6) > element_budget {
        return Err(Error::Resource(format!(
            "requested sizing produces {} elements, budget is {element_budget}",
            cell_count * 6
        )));
    }

    let node_id = |i: usize, j: usize, k: usize| -> usize { (k * (ny + 1) + j) * (nx + 1) + i };
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([axes[0][i], axes[1][j], axes[2][k]]);
            }
        }
    }

    // Six tets per cell sharing the c000-c111 diagonal; one per traversal
    // order of the three axes.
    const PATHS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(cell_count * 6);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |dx: usize, dy: usize, dz: usize| node_id(i + dx, j + dy, k + dz);
                for path in PATHS {
                    let mut at = [0usize; 3];
                    let v0 = corner(0, 0, 0);
                    at[path[0]] = 1;
                    let v1 = corner(at[0], at[1], at[2]);
                    at[path[1]] = 1;
                    let v2 = corner(at[0], at[1], at[2]);
                    let v3 = corner(1, 1, 1);
                    let mut t = [v0, v1, v2, v3];
                    if signed_volume(t, &nodes) < 0.0 {
                        t.swap(2, 3);
                    }
                    tets.push(t);
                }
            }
        }
    }

    let boundary_faces = tag_boundary_faces(&nodes, &tets, extents);
    Mesh::from_parts(nodes, tets, boundary_faces)
}

/// 1D node coordinates over [-half, half]: uniform fine cells across
/// [core_lo, core_hi] widened by a two-cell margin, then geometric grading
/// outwards, rescaled so the last cell lands exactly on the boundary.
fn axis_grid(half: f64, core_lo: f64, core_hi: f64, fine_h: f64, coarse_h: f64) -> Vec<f64> {
    let lo = (core_lo - 2.0 * fine_h).max(-half);
    let hi = (core_hi + 2.0 * fine_h).min(half);

    if lo <= -half + 1e-12 * half && hi >= half - 1e-12 * half {
        // Fine region swallows the whole axis: plain uniform grid.
        let n = ((2.0 * half) / fine_h).ceil().max(1.0) as usize;
        return linspace(-half, half, n);
    }

    let n_fine = ((hi - lo) / fine_h).ceil().max(1.0) as usize;
    let mut coords = linspace(lo, hi, n_fine);
    let s_fine = (hi - lo) / n_fine as f64;

    let left = graded_spacings(lo + half, s_fine, coarse_h);
    let right = graded_spacings(half - hi, s_fine, coarse_h);

    let mut full = Vec::with_capacity(left.len() + coords.len() + right.len());
    let mut x = -half;
    full.push(x);
    for &s in left.iter().rev() {
        x += s;
        full.push(x);
    }
    // Snap to the fine block start to avoid drift, then append it.
    if let Some(last) = full.last_mut() {
        *last = lo;
    }
    full.extend(coords.drain(1..));
    let mut x = hi;
    for &s in &right {
        x += s;
        full.push(x);
    }
    if let Some(last) = full.last_mut() {
        *last = half;
    }
    full
}

/// Spacings covering a segment of length `len`, growing geometrically from
/// `start` up to `cap`, uniformly rescaled to land exactly on `len`.
fn graded_spacings(len: f64, start: f64, cap: f64) -> Vec<f64> {
    if len <= 1e-12 * (start + cap) {
        return Vec::new();
    }
    let mut spacings = Vec::new();
    let mut s = (start * GRADING_RATIO).min(cap);
    let mut covered = 0.0;
    while covered < len {
        spacings.push(s);
        covered += s;
        s = (s * GRADING_RATIO).min(cap);
    }
    let scale = len / covered;
    for s in &mut spacings {
        *s *= scale;
    }
    spacings
}

fn linspace(a: f64, b: f64, cells: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(cells + 1);
    for i in 0..=cells {
        v.push(a + (b - a) * i as f64 / cells as f64);
    }
    // Exact endpoints regardless of rounding.
    v[0] = a;
    v[cells] = b;
    v
}

/// Faces used by exactly one tet, tagged 0..5 by the outer plane they lie on
/// (x-,x+,y-,y+,z-,z+), or -1 if unmatched.
fn tag_boundary_faces(
    nodes: &[[f64; 3]],
    tets: &[[usize; 4]],
    extents: [f64; 3],
) -> Vec<BoundaryFace> {
    use std::collections::HashMap;
    let mut counts: HashMap<[usize; 3], u8> = HashMap::new();
    for t in tets {
        for f in [[t[1], t[2], t[3]], [t[0], t[2], t[3]], [t[0], t[1], t[3]], [t[0], t[1], t[2]]] {
            let mut key = f;
            key.sort_unstable();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut faces: Vec<[usize; 3]> = counts
        .into_iter()
        .filter_map(|(f, c)| (c == 1).then_some(f))
        .collect();
    faces.sort_unstable();

    faces
        .into_iter()
        .map(|f| {
            let mut tag = -1;
            for axis in 0..3 {
                let e = 0.5 * extents[axis];
                let tol = 1e-9 * e.max(1.0);
                if f.iter().all(|&n| (nodes[n][axis] + e).abs() < tol) {
                    tag = (2 * axis) as i32;
                } else if f.iter().all(|&n| (nodes[n][axis] - e).abs() < tol) {
                    tag = (2 * axis + 1) as i32;
                }
            }
            BoundaryFace { nodes: f, tag }
        })
        .collect()
}
