//! Unstructured tetrahedral meshes: generation, import/export and geometric
//! queries.
//!
//! Coordinates are in millimetres. A [`Mesh`] is validated and canonically
//! oriented at construction and immutable afterwards, so it can be shared
//! read-only between subdomain workers.

mod generate;
mod io;

pub use generate::{generate_box_mesh, generate_box_mesh_with_budget, DEFAULT_ELEMENT_BUDGET};
pub use io::{load_mesh, load_mesh_from_str, save_mesh, write_mesh_string};

use crate::error::{Error, Result};
use crate::util::CompensatedSum;

/// Analytic shapes used for domain setup and signed-distance initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryPrimitive {
    /// Axis-aligned box centered at the origin, given by full extents (mm).
    Box { extents: [f64; 3] },
    /// Sphere given by center and radius (mm).
    Sphere { center: [f64; 3], radius: f64 },
}

impl GeometryPrimitive {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeometryPrimitive::Box { extents } => {
                if extents.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Geometry(format!(
                        "box extents must be positive, got {extents:?}"
                    )));
                }
            }
            GeometryPrimitive::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Geometry(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Signed distance to the surface, positive inside the primitive.
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        match self {
            GeometryPrimitive::Box { extents } => {
                let d = [
                    p[0].abs() - 0.5 * extents[0],
                    p[1].abs() - 0.5 * extents[1],
                    p[2].abs() - 0.5 * extents[2],
                ];
                let outside = {
                    let q = [d[0].max(0.0), d[1].max(0.0), d[2].max(0.0)];
                    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt()
                };
                let inside = d[0].max(d[1]).max(d[2]).min(0.0);
                -(outside + inside)
            }
            GeometryPrimitive::Sphere { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let dz = p[2] - center[2];
                radius - (dx * dx + dy * dy + dz * dz).sqrt()
            }
        }
    }

    /// Axis-aligned bounding box as (lo, hi) corners.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            GeometryPrimitive::Box { extents } => (
                [-0.5 * extents[0], -0.5 * extents[1], -0.5 * extents[2]],
                [0.5 * extents[0], 0.5 * extents[1], 0.5 * extents[2]],
            ),
            GeometryPrimitive::Sphere { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
        }
    }
}

/// A boundary triangle with an application tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub tag: i32,
}

/// Validated, canonically oriented tetrahedral mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    min_edge_h: f64,
    // CSR node -> incident elements, built once at construction.
    node_elem_offsets: Vec<usize>,
    node_elem_data: Vec<u32>,
}

/// One sixth of the scalar triple product of the edge vectors; the signed
/// volume of the tetrahedron `(a, b, c, d)` in mm^3.
pub fn signed_volume(tet: [usize; 4], nodes: &[[f64; 3]]) -> f64 {
    let a = nodes[tet[0]];
    let b = nodes[tet[1]];
    let c = nodes[tet[2]];
    let d = nodes[tet[3]];
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    let det = u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]);
    det / 6.0
}

fn tet_edges(t: [usize; 4]) -> [(usize, usize); 6] {
    [
        (t[0], t[1]),
        (t[0], t[2]),
        (t[0], t[3]),
        (t[1], t[2]),
        (t[1], t[3]),
        (t[2], t[3]),
    ]
}

impl Mesh {
    /// Build a mesh from raw arrays, validating every stated invariant:
    /// indices in range, distinct nodes per tet, positive volume after
    /// canonical orientation (degenerate tets rejected), connectedness.
    pub fn from_parts(
        nodes: Vec<[f64; 3]>,
        tets: Vec<[usize; 4]>,
        boundary_faces: Vec<BoundaryFace>,
    ) -> Result<Mesh> {
        Self::from_parts_with_lines(nodes, tets, boundary_faces, None, None)
    }

    /// As `from_parts`, with optional per-entity source line numbers so file
    /// loading can report where a bad tet or face came from.
    pub(crate) fn from_parts_with_lines(
        nodes: Vec<[f64; 3]>,
        mut tets: Vec<[usize; 4]>,
        boundary_faces: Vec<BoundaryFace>,
        tet_lines: Option<&[usize]>,
        face_lines: Option<&[usize]>,
    ) -> Result<Mesh> {
        let at_line = |lines: Option<&[usize]>, k: usize, msg: String| -> Error {
            match lines.and_then(|l| l.get(k)) {
                Some(&line) => Error::Parse { line, msg },
                None => Error::Validation(msg),
            }
        };

        if nodes.is_empty() || tets.is_empty() {
            return Err(Error::Validation(
                "mesh must have at least one node and one element".into(),
            ));
        }
        for (k, t) in tets.iter_mut().enumerate() {
            for &i in t.iter() {
                if i >= nodes.len() {
                    return Err(at_line(
                        tet_lines,
                        k,
                        format!("tet {k} references node {i}, mesh has {} nodes", nodes.len()),
                    ));
                }
            }
            if t[0] == t[1] || t[0] == t[2] || t[0] == t[3] || t[1] == t[2] || t[1] == t[3]
                || t[2] == t[3]
            {
                return Err(at_line(tet_lines, k, format!("tet {k} has repeated nodes")));
            }
            let mut vol = signed_volume(*t, &nodes);
            if vol < 0.0 {
                t.swap(2, 3);
                vol = -vol;
            }
            let longest = tet_edges(*t)
                .iter()
                .map(|&(a, b)| dist(nodes[a], nodes[b]))
                .fold(0.0_f64, f64::max);
            if !(vol > 1e-14 * longest * longest * longest) {
                return Err(at_line(
                    tet_lines,
                    k,
                    format!("tet {k} is degenerate (volume {vol:.3e})"),
                ));
            }
        }
        for (k, f) in boundary_faces.iter().enumerate() {
            for &i in &f.nodes {
                if i >= nodes.len() {
                    return Err(at_line(
                        face_lines,
                        k,
                        format!("boundary face {k} references node {i} out of range"),
                    ));
                }
            }
        }

        let mut min_edge = f64::INFINITY;
        for t in &tets {
            for (a, b) in tet_edges(*t) {
                let d = dist(nodes[a], nodes[b]);
                if d < min_edge {
                    min_edge = d;
                }
            }
        }

        // Node-to-element adjacency in CSR form.
        let mut counts = vec![0usize; nodes.len()];
        for t in &tets {
            for &i in t {
                counts[i] += 1;
            }
        }
        let mut offsets = vec![0usize; nodes.len() + 1];
        for i in 0..nodes.len() {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut data = vec![0u32; offsets[nodes.len()]];
        let mut cursor = offsets.clone();
        for (e, t) in tets.iter().enumerate() {
            for &i in t {
                data[cursor[i]] = e as u32;
                cursor[i] += 1;
            }
        }

        let mesh = Mesh {
            nodes,
            tets,
            boundary_faces,
            min_edge_h: min_edge,
            node_elem_offsets: offsets,
            node_elem_data: data,
        };

        if !mesh.is_connected() {
            return Err(Error::Validation(
                "mesh is not connected (more than one component)".into(),
            ));
        }
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Length of the smallest element edge; used as the interface sampling
    /// offset `h`.
    pub fn min_edge_h(&self) -> f64 {
        self.min_edge_h
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.tets.len()
    }

    /// Elements incident to a node.
    pub fn elements_of_node(&self, node: usize) -> &[u32] {
        &self.node_elem_data[self.node_elem_offsets[node]..self.node_elem_offsets[node + 1]]
    }

    pub fn signed_volume_of(&self, element: usize) -> f64 {
        signed_volume(self.tets[element], &self.nodes)
    }

    pub fn element_centroid(&self, element: usize) -> [f64; 3] {
        let t = self.tets[element];
        let mut c = [0.0; 3];
        for &i in &t {
            for k in 0..3 {
                c[k] += self.nodes[i][k];
            }
        }
        [c[0] / 4.0, c[1] / 4.0, c[2] / 4.0]
    }

    /// Total volume as the compensated sum of |signed volume| over elements.
    pub fn total_volume(&self) -> f64 {
        let mut s = CompensatedSum::new();
        for e in 0..self.tets.len() {
            s.add(self.signed_volume_of(e).abs());
        }
        s.value()
    }

    /// Constant gradients of the four P1 basis functions on an element,
    /// plus its (positive) volume.
    pub fn element_gradients(&self, element: usize) -> ([[f64; 3]; 4], f64) {
        let t = self.tets[element];
        let a = self.nodes[t[0]];
        let b = self.nodes[t[1]];
        let c = self.nodes[t[2]];
        let d = self.nodes[t[3]];
        let j = [
            [b[0] - a[0], c[0] - a[0], d[0] - a[0]],
            [b[1] - a[1], c[1] - a[1], d[1] - a[1]],
            [b[2] - a[2], c[2] - a[2], d[2] - a[2]],
        ];
        let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
        let inv_det = 1.0 / det;
        // Rows of J^-1 are the gradients of the barycentric coordinates 1..3.
        let inv = [
            [
                (j[1][1] * j[2][2] - j[1][2] * j[2][1]) * inv_det,
                (j[0][2] * j[2][1] - j[0][1] * j[2][2]) * inv_det,
                (j[0][1] * j[1][2] - j[0][2] * j[1][1]) * inv_det,
            ],
            [
                (j[1][2] * j[2][0] - j[1][0] * j[2][2]) * inv_det,
                (j[0][0] * j[2][2] - j[0][2] * j[2][0]) * inv_det,
                (j[0][2] * j[1][0] - j[0][0] * j[1][2]) * inv_det,
            ],
            [
                (j[1][0] * j[2][1] - j[1][1] * j[2][0]) * inv_det,
                (j[0][1] * j[2][0] - j[0][0] * j[2][1]) * inv_det,
                (j[0][0] * j[1][1] - j[0][1] * j[1][0]) * inv_det,
            ],
        ];
        let g1 = inv[0];
        let g2 = inv[1];
        let g3 = inv[2];
        let g0 = [-g1[0] - g2[0] - g3[0], -g1[1] - g2[1] - g3[1], -g1[2] - g2[2] - g3[2]];
        ([g0, g1, g2, g3], det.abs() / 6.0)
    }

    /// Piecewise-constant gradient of a nodal field on one element.
    pub fn field_gradient(&self, element: usize, field: &[f64]) -> [f64; 3] {
        let (grads, _) = self.element_gradients(element);
        let t = self.tets[element];
        let mut g = [0.0; 3];
        for a in 0..4 {
            let v = field[t[a]];
            for k in 0..3 {
                g[k] += v * grads[a][k];
            }
        }
        g
    }

    fn is_connected(&self) -> bool {
        let ne = self.tets.len();
        let mut seen = vec![false; ne];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1usize;
        while let Some(e) = stack.pop() {
            for &n in &self.tets[e] {
                for &adj in self.elements_of_node(n) {
                    let adj = adj as usize;
                    if !seen[adj] {
                        seen[adj] = true;
                        visited += 1;
                        stack.push(adj);
                    }
                }
            }
        }
        visited == ne
    }

    /// Map from sorted face triple to the elements sharing it. Every interior
    /// face belongs to exactly two elements, every boundary face to one.
    pub fn face_incidence(&self) -> std::collections::HashMap<[usize; 3], Vec<usize>> {
        let mut map: std::collections::HashMap<[usize; 3], Vec<usize>> =
            std::collections::HashMap::new();
        for (e, t) in self.tets.iter().enumerate() {
            for f in [[t[1], t[2], t[3]], [t[0], t[2], t[3]], [t[0], t[1], t[3]], [t[0], t[1], t[2]]]
            {
                let mut key = f;
                key.sort_unstable();
                map.entry(key).or_default().push(e);
            }
        }
        map
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
