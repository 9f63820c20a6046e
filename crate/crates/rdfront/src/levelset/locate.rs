//! Point location and P1 interpolation on a tetrahedral mesh.
//!
//! A uniform grid over the mesh bounding box stores, per cell, the elements
//! whose bounding boxes overlap it. Built once per mesh and shared read-only.

use crate::mesh::Mesh;

#[derive(Debug)]
pub struct PointLocator {
    lo: [f64; 3],
    cell: [f64; 3],
    dims: [usize; 3],
    /// CSR cell -> element ids.
    offsets: Vec<usize>,
    elems: Vec<u32>,
}

const BARY_TOL: f64 = 1e-10;

impl PointLocator {
    pub fn build(mesh: &Mesh) -> PointLocator {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in mesh.nodes() {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        // Aim for a few elements per cell.
        let target = (mesh.element_count() as f64 / 4.0).cbrt().ceil().max(1.0) as usize;
        let dims = [target, target, target];
        let mut cell = [0.0; 3];
        for k in 0..3 {
            let span = (hi[k] - lo[k]).max(1e-12);
            cell[k] = span / dims[k] as f64 * (1.0 + 1e-12);
        }

        let n_cells = dims[0] * dims[1] * dims[2];
        let cell_of = |p: [f64; 3]| -> [usize; 3] {
            let mut c = [0usize; 3];
            for k in 0..3 {
                let i = ((p[k] - lo[k]) / cell[k]).floor();
                c[k] = (i.max(0.0) as usize).min(dims[k] - 1);
            }
            c
        };

        let mut counts = vec![0usize; n_cells];
        let mut ranges = Vec::with_capacity(mesh.element_count());
        for t in mesh.tets() {
            let mut elo = [f64::INFINITY; 3];
            let mut ehi = [f64::NEG_INFINITY; 3];
            for &n in t {
                let p = mesh.nodes()[n];
                for k in 0..3 {
                    elo[k] = elo[k].min(p[k]);
                    ehi[k] = ehi[k].max(p[k]);
                }
            }
            let c0 = cell_of(elo);
            let c1 = cell_of(ehi);
            ranges.push((c0, c1));
            for cz in c0[2]..=c1[2] {
                for cy in c0[1]..=c1[1] {
                    for cx in c0[0]..=c1[0] {
                        counts[(cz * dims[1] + cy) * dims[0] + cx] += 1;
                    }
                }
            }
        }
        let mut offsets = vec![0usize; n_cells + 1];
        for i in 0..n_cells {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut elems = vec![0u32; offsets[n_cells]];
        let mut cursor = offsets.clone();
        for (e, (c0, c1)) in ranges.iter().enumerate() {
            for cz in c0[2]..=c1[2] {
                for cy in c0[1]..=c1[1] {
                    for cx in c0[0]..=c1[0] {
                        let c = (cz * dims[1] + cy) * dims[0] + cx;
                        elems[cursor[c]] = e as u32;
                        cursor[c] += 1;
                    }
                }
            }
        }
        PointLocator { lo, cell, dims, offsets, elems }
    }

    fn cell_index(&self, p: [f64; 3]) -> [usize; 3] {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let i = ((p[k] - self.lo[k]) / self.cell[k]).floor();
            c[k] = (i.max(0.0) as usize).min(self.dims[k] - 1);
        }
        c
    }

    /// Element containing `p` and its barycentric coordinates, searching the
    /// cell of `p` and growing rings of neighbor cells.
    pub fn find(&self, mesh: &Mesh, p: [f64; 3]) -> Option<(usize, [f64; 4])> {
        let home = self.cell_index(p);
        let max_ring = self.dims.iter().max().copied().unwrap_or(1);
        for ring in 0..=max_ring {
            let mut best: Option<(usize, [f64; 4])> = None;
            self.for_cells_in_ring(home, ring, |cell| {
                for &e in &self.elems[self.offsets[cell]..self.offsets[cell + 1]] {
                    if best.is_some() {
                        return;
                    }
                    if let Some(bary) = barycentric(mesh, e as usize, p) {
                        best = Some((e as usize, bary));
                    }
                }
            });
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn for_cells_in_ring(&self, home: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as i64;
        let h = [home[0] as i64, home[1] as i64, home[2] as i64];
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let (x, y, z) = (h[0] + dx, h[1] + dy, h[2] + dz);
                    if x < 0 || y < 0 || z < 0 {
                        continue;
                    }
                    let (x, y, z) = (x as usize, y as usize, z as usize);
                    if x >= self.dims[0] || y >= self.dims[1] || z >= self.dims[2] {
                        continue;
                    }
                    f((z * self.dims[1] + y) * self.dims[0] + x);
                }
            }
        }
    }

    /// P1 interpolation of a nodal field at `p`; falls back to the value at
    /// the nearest node of the nearest candidate element when `p` is outside
    /// the mesh.
    pub fn interpolate(&self, mesh: &Mesh, field: &[f64], p: [f64; 3]) -> f64 {
        if let Some((e, bary)) = self.find(mesh, p) {
            let t = mesh.tets()[e];
            return (0..4).map(|a| bary[a] * field[t[a]]).sum();
        }
        // Outside the domain: nearest node over the whole mesh.
        let mut best = (f64::INFINITY, 0usize);
        for (i, q) in mesh.nodes().iter().enumerate() {
            let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2);
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        field[best.1]
    }
}

fn barycentric(mesh: &Mesh, e: usize, p: [f64; 3]) -> Option<[f64; 4]> {
    let t = mesh.tets()[e];
    let total = mesh.signed_volume_of(e);
    let mut bary = [0.0; 4];
    // Barycentric coordinate of vertex v = volume of the tet with v replaced
    // by p, over the total volume.
    for v in 0..4 {
        let mut corners = [
            mesh.nodes()[t[0]],
            mesh.nodes()[t[1]],
            mesh.nodes()[t[2]],
            mesh.nodes()[t[3]],
        ];
        corners[v] = p;
        bary[v] = vol_of(corners) / total;
    }
    if bary.iter().all(|&b| b >= -BARY_TOL) {
        Some(bary)
    } else {
        None
    }
}

fn vol_of(c: [[f64; 3]; 4]) -> f64 {
    let u = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
    let v = [c[2][0] - c[0][0], c[2][1] - c[0][1], c[2][2] - c[0][2]];
    let w = [c[3][0] - c[0][0], c[3][1] - c[0][1], c[3][2] - c[0][2]];
    (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]))
        / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_box_mesh, GeometryPrimitive};

    #[test]
    fn locates_points_and_interpolates_linear_fields_exactly() {
        let mesh = generate_box_mesh(
            GeometryPrimitive::Box { extents: [1.0, 1.0, 1.0] },
            GeometryPrimitive::Box { extents: [0.4, 0.4, 0.4] },
            0.25,
            0.125,
        )
        .unwrap();
        let locator = PointLocator::build(&mesh);
        // Linear field reproduced exactly by P1 interpolation.
        let field: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|p| 3.0 * p[0] - 2.0 * p[1] + 0.5 * p[2] + 1.0)
            .collect();
        let mut rng = crate::util::SplitMix64::new(2);
        for _ in 0..200 {
            let p = [rng.range(-0.49, 0.49), rng.range(-0.49, 0.49), rng.range(-0.49, 0.49)];
            let exact = 3.0 * p[0] - 2.0 * p[1] + 0.5 * p[2] + 1.0;
            let got = locator.interpolate(&mesh, &field, p);
            assert!((got - exact).abs() < 1e-10, "at {p:?}: {got} vs {exact}");
        }
    }

    #[test]
    fn outside_points_fall_back_to_nearest_node() {
        let mesh = generate_box_mesh(
            GeometryPrimitive::Box { extents: [1.0, 1.0, 1.0] },
            GeometryPrimitive::Box { extents: [0.4, 0.4, 0.4] },
            0.25,
            0.25,
        )
        .unwrap();
        let locator = PointLocator::build(&mesh);
        let field: Vec<f64> = mesh.nodes().iter().map(|p| p[0]).collect();
        let v = locator.interpolate(&mesh, &field, [2.0, 0.0, 0.0]);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn vertices_and_boundary_points_are_found() {
        let mesh = generate_box_mesh(
            GeometryPrimitive::Box { extents: [1.0, 1.0, 1.0] },
            GeometryPrimitive::Box { extents: [0.4, 0.4, 0.4] },
            0.5,
            0.5,
        )
        .unwrap();
        let locator = PointLocator::build(&mesh);
        for &p in mesh.nodes() {
            assert!(locator.find(&mesh, p).is_some(), "node {p:?} not located");
        }
        assert!(locator.find(&mesh, [0.5, 0.5, 0.5]).is_some());
        assert!(locator.find(&mesh, [-0.5, 0.0, 0.25]).is_some());
    }
}
