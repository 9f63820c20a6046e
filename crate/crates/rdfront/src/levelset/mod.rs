//! Level-set interface tracking: signed-distance initialization, interface
//! velocity from the mass-flux jump condition, implicit advection, and the
//! geometric observables (solid volume, interface area, mass loss, evolved
//! gas volume).
//!
//! The signed distance is positive inside the solid bulk and negative in the
//! medium; its zero isosurface is the degradation front. A positive normal
//! velocity recedes the front into the bulk, so the field evolves by
//! `d phi / dt = -V |grad phi|`. The gradient magnitude is lagged one step,
//! which keeps every solve linear; the field is initialized once and never
//! re-distanced, with a guard rail watching the band gradients instead.

mod locate;

pub use locate::PointLocator;

use crate::decomp::Subdomain;
use crate::error::{Error, Result};
use crate::fem::AssemblyInput;
use crate::linsolve::{SolveStats, SolverConfig};
use crate::mesh::{GeometryPrimitive, Mesh};
use crate::physics::ChemParams;
use crate::util::CompensatedSum;

/// Universal gas constant (J / (mol K)).
pub const GAS_CONSTANT: f64 = 8.314;
/// Volume conversion for concentrations given per litre on a millimetre
/// mesh.
pub const LITERS_PER_MM3: f64 = 1e-6;
/// Narrow band half-width in multiples of the sampling offset `h`.
pub const BAND_HALF_WIDTH: f64 = 3.0;

/// Nodal signed distance to the primitive's surface, positive inside.
pub fn init_signed_distance(mesh: &Mesh, inner: &GeometryPrimitive) -> Result<Vec<f64>> {
    inner.validate()?;
    Ok(mesh.nodes().iter().map(|&p| inner.signed_distance(p)).collect())
}

/// Volume-weighted nodal gradient of a P1 field.
pub fn nodal_gradients(mesh: &Mesh, field: &[f64]) -> Vec<[f64; 3]> {
    let mut acc = vec![[0.0; 4]; mesh.node_count()];
    for e in 0..mesh.element_count() {
        let g = mesh.field_gradient(e, field);
        let vol = mesh.signed_volume_of(e).abs();
        for &n in &mesh.tets()[e] {
            acc[n][0] += vol * g[0];
            acc[n][1] += vol * g[1];
            acc[n][2] += vol * g[2];
            acc[n][3] += vol;
        }
    }
    acc.into_iter()
        .map(|a| {
            let w = a[3].max(1e-300);
            [a[0] / w, a[1] / w, a[2] / w]
        })
        .collect()
}

/// Median over nodes of the deviation of the volume-averaged gradient
/// magnitude from 1; a health check for signed-distance fields.
pub fn eikonal_median_deviation(mesh: &Mesh, phi: &[f64]) -> f64 {
    let grads = nodal_gradients(mesh, phi);
    let mut dev: Vec<f64> = grads
        .iter()
        .map(|g| ((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt() - 1.0).abs())
        .collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dev[dev.len() / 2]
}

/// Range of per-element gradient magnitudes over elements touching the
/// narrow band; the no-redistancing guard rail.
pub fn band_gradient_range(mesh: &Mesh, phi: &[f64], h: f64) -> Option<(f64, f64)> {
    let half = BAND_HALF_WIDTH * h;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for e in 0..mesh.element_count() {
        let t = mesh.tets()[e];
        if t.iter().any(|&n| phi[n].abs() <= half) {
            let g = mesh.field_gradient(e, phi);
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            lo = lo.min(norm);
            hi = hi.max(norm);
            any = true;
        }
    }
    any.then_some((lo, hi))
}

/// Interface velocity on the narrow band with constant extension elsewhere.
///
/// For band nodes (|phi| <= 3h) the dissolved concentration is sampled at
/// the interface foot point `x - phi n` and at the offset point
/// `x - (phi + h) n` one `h` into the medium along the inward normal
/// `n = grad phi / |grad phi|`; their one-sided difference over `h` is the
/// normal derivative entering the jump condition
/// `V = D grad_n c / (c_sol - c_sat)`. Off-band nodes copy the value of the
/// nearest band node (ties to the lowest node id).
pub fn interface_velocity(
    mesh: &Mesh,
    locator: &PointLocator,
    phi: &[f64],
    c_mg: &[f64],
    c_film: &[f64],
    params: &ChemParams,
    h: f64,
) -> Result<Vec<f64>> {
    let band = band_nodes(phi, h);
    if band.is_empty() {
        return Ok(vec![0.0; phi.len()]);
    }
    let normals = nodal_gradients(mesh, phi);
    let mut v = vec![0.0; phi.len()];
    for &node in &band {
        v[node] =
            band_velocity_at(mesh, locator, phi, c_mg, c_film, params, h, node, normals[node])?;
    }
    extend_from_band(mesh, &band, &mut v);
    Ok(v)
}

/// Nodes within the narrow band |phi| <= 3h.
pub fn band_nodes(phi: &[f64], h: f64) -> Vec<usize> {
    let half = BAND_HALF_WIDTH * h;
    phi.iter()
        .enumerate()
        .filter(|(_, &p)| p.abs() <= half)
        .map(|(i, _)| i)
        .collect()
}

/// Velocity of one band node given its (volume-averaged) level-set gradient;
/// exposed for the distributed path where each worker evaluates its own band
/// nodes against shared global fields.
#[allow(clippy::too_many_arguments)]
pub fn band_velocity_at(
    mesh: &Mesh,
    locator: &PointLocator,
    phi: &[f64],
    c_mg: &[f64],
    c_film: &[f64],
    params: &ChemParams,
    h: f64,
    node: usize,
    gradient: [f64; 3],
) -> Result<f64> {
    let g = gradient;
    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    if norm < 1e-12 {
        return Err(Error::Validation(format!(
            "degenerate level-set gradient at band node {node}"
        )));
    }
    let n = [g[0] / norm, g[1] / norm, g[2] / norm];
    let x = mesh.nodes()[node];
    let d = phi[node];
    let foot = [x[0] - d * n[0], x[1] - d * n[1], x[2] - d * n[2]];
    let off = [
        x[0] - (d + h) * n[0],
        x[1] - (d + h) * n[1],
        x[2] - (d + h) * n[2],
    ];
    let c_foot = locator.interpolate(mesh, c_mg, foot);
    let c_off = locator.interpolate(mesh, c_mg, off);
    let film_off = locator.interpolate(mesh, c_film, off);
    let d_eff = crate::physics::effective_diffusion(film_off.max(0.0), params)?;
    let grad_n = (c_foot - c_off) / h;
    Ok(d_eff * grad_n / (params.mg_sol - params.mg_sat))
}

/// Fill non-band nodes with the value of the Euclidean-nearest band node.
pub fn extend_from_band(mesh: &Mesh, band: &[usize], v: &mut [f64]) {
    let index = BandIndex::build(mesh, band);
    let in_band: std::collections::HashSet<usize> = band.iter().copied().collect();
    for node in 0..v.len() {
        if !in_band.contains(&node) {
            let nearest = index.nearest(mesh.nodes()[node]);
            v[node] = v[nearest];
        }
    }
}

/// k-d tree over band nodes for nearest-neighbor queries. Deterministic:
/// distance ties resolve to the lowest node id.
pub struct BandIndex {
    /// Band node ids in tree order.
    ids: Vec<u32>,
    /// Coordinates parallel to `ids`.
    coords: Vec<[f64; 3]>,
}

impl BandIndex {
    pub fn build(mesh: &Mesh, band: &[usize]) -> BandIndex {
        assert!(!band.is_empty());
        let mut ids: Vec<u32> = band.iter().map(|&n| n as u32).collect();
        let mut coords: Vec<[f64; 3]> = band.iter().map(|&n| mesh.nodes()[n]).collect();
        build_kd(&mut ids, &mut coords, 0);
        BandIndex { ids, coords }
    }

    /// Nearest band node to `p` by Euclidean distance (ties: lowest id).
    pub fn nearest(&self, p: [f64; 3]) -> usize {
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(0..self.ids.len(), 0, p, &mut best);
        best.1 as usize
    }

    fn search(&self, range: std::ops::Range<usize>, depth: usize, p: [f64; 3], best: &mut (f64, u32)) {
        if range.is_empty() {
            return;
        }
        let mid = range.start + range.len() / 2;
        let q = self.coords[mid];
        let id = self.ids[mid];
        let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2);
        if d2 < best.0 || (d2 == best.0 && id < best.1) {
            *best = (d2, id);
        }
        let axis = depth % 3;
        let diff = p[axis] - q[axis];
        let (near, far) = if diff < 0.0 {
            (range.start..mid, mid + 1..range.end)
        } else {
            (mid + 1..range.end, range.start..mid)
        };
        self.search(near, depth + 1, p, best);
        // The far side may hold an equal distance with a lower id, so prune
        // only strictly.
        if diff * diff <= best.0 {
            self.search(far, depth + 1, p, best);
        }
    }
}

fn build_kd(ids: &mut [u32], coords: &mut [[f64; 3]], depth: usize) {
    if ids.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = ids.len() / 2;
    // Median split with a total order (coordinate, id) for determinism.
    let mut perm: Vec<usize> = (0..ids.len()).collect();
    perm.select_nth_unstable_by(mid, |&a, &b| {
        coords[a][axis]
            .partial_cmp(&coords[b][axis])
            .unwrap()
            .then(ids[a].cmp(&ids[b]))
    });
    apply_permutation(ids, coords, &perm);
    let (left_i, right_i) = ids.split_at_mut(mid);
    let (left_c, right_c) = coords.split_at_mut(mid);
    build_kd(left_i, left_c, depth + 1);
    build_kd(&mut right_i[1..], &mut right_c[1..], depth + 1);
}

fn apply_permutation(ids: &mut [u32], coords: &mut [[f64; 3]], perm: &[usize]) {
    let new_ids: Vec<u32> = perm.iter().map(|&k| ids[k]).collect();
    let new_coords: Vec<[f64; 3]> = perm.iter().map(|&k| coords[k]).collect();
    ids.copy_from_slice(&new_ids);
    coords.copy_from_slice(&new_coords);
}

/// One implicit step of `d phi / dt = -V |grad phi|` with the gradient
/// magnitude frozen at the previous field (consistent mass matrix, natural
/// boundaries).
pub fn advance_levelset(
    mesh: &Mesh,
    dec: &crate::decomp::OverlapDecomposition,
    phi: &[f64],
    velocity: &[f64],
    dt: f64,
    solver: &SolverConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    let grads = nodal_gradients(mesh, phi);
    let source: Vec<f64> = velocity
        .iter()
        .zip(&grads)
        .map(|(v, g)| -v * (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
        .collect();
    let n = mesh.node_count();
    let zeros = vec![0.0; n];
    let ones = vec![1.0; n];
    let input = AssemblyInput {
        dt,
        diffusion: &zeros,
        alpha: &ones,
        source: &source,
        previous: phi,
        penalties: &[],
        lump_mass: false,
    };
    let (a, b) = crate::fem::assemble_system(mesh, &input)?;
    crate::physics::solve_scaled(&a, &b, phi.to_vec(), dec, solver)
}

/// Volume of the `phi >= 0` part of one element by exact slicing of the
/// linear field: corner and wedge cases in barycentric coordinates.
pub fn element_positive_volume(mesh: &Mesh, element: usize, phi_of: impl Fn(usize) -> f64) -> f64 {
    let t = mesh.tets()[element];
    let vals = [phi_of(t[0]), phi_of(t[1]), phi_of(t[2]), phi_of(t[3])];
    let vol = mesh.signed_volume_of(element).abs();
    let inside: Vec<usize> = (0..4).filter(|&a| vals[a] >= 0.0).collect();
    match inside.len() {
        0 => 0.0,
        4 => vol,
        1 => {
            let a = inside[0];
            let mut frac = 1.0;
            for j in 0..4 {
                if j != a {
                    frac *= vals[a] / (vals[a] - vals[j]);
                }
            }
            vol * frac
        }
        3 => {
            let d = (0..4).find(|&a| vals[a] < 0.0).unwrap();
            let mut frac = 1.0;
            for j in 0..4 {
                if j != d {
                    frac *= vals[d] / (vals[d] - vals[j]);
                }
            }
            vol * (1.0 - frac)
        }
        2 => {
            let (a, b) = (inside[0], inside[1]);
            let outside: Vec<usize> = (0..4).filter(|&k| vals[k] < 0.0).collect();
            let (c, d) = (outside[0], outside[1]);
            let p = |i: usize| mesh.nodes()[t[i]];
            let cut = |i: usize, j: usize| -> [f64; 3] {
                let s = vals[i] / (vals[i] - vals[j]);
                let (pi, pj) = (p(i), p(j));
                [
                    pi[0] + s * (pj[0] - pi[0]),
                    pi[1] + s * (pj[1] - pi[1]),
                    pi[2] + s * (pj[2] - pi[2]),
                ]
            };
            let (pac, pad, pbc, pbd) = (cut(a, c), cut(a, d), cut(b, c), cut(b, d));
            // The positive region is a wedge with planar quad faces (two tet
            // faces and the cut plane), so a three-tet split is exact.
            let (pa, pb) = (p(a), p(b));
            tet_vol(pa, pac, pad, pb) + tet_vol(pac, pad, pb, pbc) + tet_vol(pad, pb, pbc, pbd)
        }
        _ => unreachable!(),
    }
}

fn tet_vol(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let w = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
    ((u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0]))
        / 6.0)
        .abs()
}

/// Total solid volume `|{phi >= 0}|` over the whole mesh (mm^3).
pub fn solid_volume(mesh: &Mesh, phi: &[f64]) -> f64 {
    let mut sum = CompensatedSum::new();
    for e in 0..mesh.element_count() {
        sum.add(element_positive_volume(mesh, e, |n| phi[n]));
    }
    sum.value()
}

/// Subdomain partial of the solid volume over non-ghost elements, with the
/// field given in subdomain-local indexing.
pub fn solid_volume_partial(
    mesh: &Mesh,
    sub: &Subdomain,
    phi_local: &[f64],
    exclude_ghosts: bool,
) -> CompensatedSum {
    let mut sum = CompensatedSum::new();
    for (k, &e) in sub.local_elements.iter().enumerate() {
        if exclude_ghosts && sub.is_ghost_element(k) {
            continue;
        }
        let t = mesh.tets()[e];
        let local = t.map(|g| sub.local_index_of(g).expect("local mesh covers its elements"));
        sum.add(element_positive_volume(mesh, e, |n| {
            let a = (0..4).find(|&a| t[a] == n).unwrap();
            phi_local[local[a]]
        }));
    }
    sum
}

/// Mass lost between the initial and current front positions:
/// `mg_sol * (V+(0) - V+(t))`, with the solid concentration in g/L and
/// volumes in mm^3.
pub fn mass_loss(solid_volume_initial: f64, solid_volume_now: f64, params: &ChemParams) -> f64 {
    params.mg_sol * (solid_volume_initial - solid_volume_now) * LITERS_PER_MM3
}

/// Area of the `phi = 0` isosurface (mm^2) by per-element plane extraction:
/// a triangle when one vertex sits on one side, a planar quad split into two
/// triangles when two do. Returns 0 for single-sign fields.
pub fn interface_area(mesh: &Mesh, phi: &[f64]) -> f64 {
    let mut sum = CompensatedSum::new();
    for e in 0..mesh.element_count() {
        sum.add(element_interface_area(mesh, e, |n| phi[n]));
    }
    sum.value()
}

/// Subdomain partial of the interface area over non-ghost elements.
pub fn interface_area_partial(
    mesh: &Mesh,
    sub: &Subdomain,
    phi_local: &[f64],
    exclude_ghosts: bool,
) -> CompensatedSum {
    let mut sum = CompensatedSum::new();
    for (k, &e) in sub.local_elements.iter().enumerate() {
        if exclude_ghosts && sub.is_ghost_element(k) {
            continue;
        }
        let t = mesh.tets()[e];
        let local = t.map(|g| sub.local_index_of(g).expect("local mesh covers its elements"));
        sum.add(element_interface_area(mesh, e, |n| {
            let a = (0..4).find(|&a| t[a] == n).unwrap();
            phi_local[local[a]]
        }));
    }
    sum
}

/// Interface triangles of one element.
pub fn element_interface_area(mesh: &Mesh, element: usize, phi_of: impl Fn(usize) -> f64) -> f64 {
    let t = mesh.tets()[element];
    let vals = [phi_of(t[0]), phi_of(t[1]), phi_of(t[2]), phi_of(t[3])];
    let inside: Vec<usize> = (0..4).filter(|&a| vals[a] >= 0.0).collect();
    let p = |i: usize| mesh.nodes()[t[i]];
    let cut = |i: usize, j: usize| -> [f64; 3] {
        let s = vals[i] / (vals[i] - vals[j]);
        let (pi, pj) = (p(i), p(j));
        [
            pi[0] + s * (pj[0] - pi[0]),
            pi[1] + s * (pj[1] - pi[1]),
            pi[2] + s * (pj[2] - pi[2]),
        ]
    };
    match inside.len() {
        0 | 4 => 0.0,
        1 => {
            let a = inside[0];
            let pts: Vec<[f64; 3]> = (0..4).filter(|&j| j != a).map(|j| cut(a, j)).collect();
            tri_area(pts[0], pts[1], pts[2])
        }
        3 => {
            let d = (0..4).find(|&a| vals[a] < 0.0).unwrap();
            let pts: Vec<[f64; 3]> = (0..4).filter(|&j| j != d).map(|j| cut(j, d)).collect();
            tri_area(pts[0], pts[1], pts[2])
        }
        2 => {
            let (a, b) = (inside[0], inside[1]);
            let outside: Vec<usize> = (0..4).filter(|&k| vals[k] < 0.0).collect();
            let (c, d) = (outside[0], outside[1]);
            let (pac, pad, pbd, pbc) = (cut(a, c), cut(a, d), cut(b, d), cut(b, c));
            // Cyclic order around the (planar) cut quad.
            tri_area(pac, pad, pbd) + tri_area(pac, pbd, pbc)
        }
        _ => unreachable!(),
    }
}

fn tri_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = u[1] * v[2] - u[2] * v[1];
    let y = u[2] * v[0] - u[0] * v[2];
    let z = u[0] * v[1] - u[1] * v[0];
    0.5 * (x * x + y * y + z * z).sqrt()
}

/// Evolved gas volume per exposed area from the ideal gas law:
/// `H = (m / M) R T / (P A)` in m^3 of gas per m^2 of surface, with the
/// lost mass in grams and the area in mm^2.
pub fn hydrogen_volume(mass_lost: f64, area_mm2: f64, params: &ChemParams) -> Result<f64> {
    if !(area_mm2 > 0.0) {
        return Err(Error::Argument(format!(
            "exposed area must be positive, got {area_mm2}"
        )));
    }
    let area_m2 = area_mm2 * 1e-6;
    Ok((mass_lost / params.mg_molar) * GAS_CONSTANT * params.temperature
        / (params.pressure * area_m2))
}
