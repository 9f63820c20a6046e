//! P1 Lagrange finite-element assembly of the time-discrete weak forms.
//!
//! One backward-Euler step of the reaction-diffusion equation leads to the
//! linear system `A u = b` with
//!
//! ```text
//! A_ij = M_ij + dt * mean(alpha) * mean(D) * K_ij      (per element)
//! b_i  = alpha_i * ( (M u_prev)_i + dt * (M f)_i )
//! ```
//!
//! where `M` is the (optionally lumped) mass matrix, `K` the stiffness
//! matrix, and `alpha`, `D` nodal coefficient fields averaged per element.
//! Selected nodes can be pinned to a target value by adding a large penalty
//! to the diagonal and right-hand side. Both `alpha` and `D` change every
//! step, so the operator is rebuilt every step.
//!
//! Boundary conditions are the natural no-flux ones: no surface terms are
//! assembled.

mod sparse;

pub use sparse::{lump_mass, SparseMatrix};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Pin `node` to `target` by adding `weight` to the diagonal and
/// `weight * target` to the right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyEntry {
    /// Global node id.
    pub node: usize,
    pub target: f64,
    pub weight: f64,
}

/// Default penalty weight for pinned nodes.
pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e10;

/// Coefficients and previous state for one implicit step.
///
/// All nodal slices are indexed by the assembler's column map (global node
/// ids in the whole-mesh case). Penalty nodes are global ids.
#[derive(Debug, Clone, Copy)]
pub struct AssemblyInput<'a> {
    /// Time step (h), > 0.
    pub dt: f64,
    /// Per-node effective diffusion coefficient (mm^2/h), >= 0.
    pub diffusion: &'a [f64],
    /// Per-node reaction damping coefficient, in (0, 1].
    pub alpha: &'a [f64],
    /// Per-node source term at this step.
    pub source: &'a [f64],
    /// Per-node solution of the previous step.
    pub previous: &'a [f64],
    pub penalties: &'a [PenaltyEntry],
    /// Replace the consistent mass matrix by its row-sum diagonal.
    pub lump_mass: bool,
}

/// Local mass and stiffness matrices of one element.
///
/// `mass[a][b] = V (1 + delta_ab) / 20`, `stiffness[a][b] = V grad_a . grad_b`
/// with the constant P1 gradients.
pub fn element_matrices(mesh: &Mesh, element: usize) -> Result<([[f64; 4]; 4], [[f64; 4]; 4])> {
    let (grads, vol) = mesh.element_gradients(element);
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(Error::Validation(format!(
            "element {element} is degenerate (volume {vol})"
        )));
    }
    let mut mass = [[0.0; 4]; 4];
    let mut stiff = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            mass[a][b] = if a == b { vol / 10.0 } else { vol / 20.0 };
            stiff[a][b] = vol
                * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1] + grads[a][2] * grads[b][2]);
        }
    }
    Ok((mass, stiff))
}

/// Reusable assembler over a fixed element set with row and column node maps.
///
/// The sparsity pattern and element geometry are computed once; `assemble`
/// refills values, which is what the time loop needs since the operator
/// changes every step. Rows cover the nodes this assembler is responsible
/// for (the owned nodes of a subdomain worker, or all nodes sequentially);
/// columns cover every node of every element touched.
pub struct Assembler {
    elements: Vec<usize>,
    /// Per element: 4 column indices, 4 row indices (-1 when unmapped).
    elem_cols: Vec<[u32; 4]>,
    elem_rows: Vec<[i64; 4]>,
    /// Cached stiffness and volume per element.
    elem_stiff: Vec<[[f64; 4]; 4]>,
    elem_vol: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    matrix: SparseMatrix,
    /// Column index of each row's node, for diagonal access and nodal scaling.
    row_to_col: Vec<u32>,
    /// Row index per global node, for penalty application.
    row_of_global: std::collections::HashMap<usize, usize>,
}

impl Assembler {
    /// `row_nodes` and `col_nodes` are global node ids; `row_nodes` must be a
    /// subset of `col_nodes`, and every node of every listed element must be
    /// in `col_nodes`.
    pub fn new(
        mesh: &Mesh,
        elements: Vec<usize>,
        row_nodes: &[usize],
        col_nodes: &[usize],
    ) -> Result<Assembler> {
        let mut col_of: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();
        for (l, &g) in col_nodes.iter().enumerate() {
            col_of.insert(g, l as u32);
        }
        let mut row_of: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        let mut row_to_col = Vec::with_capacity(row_nodes.len());
        for (l, &g) in row_nodes.iter().enumerate() {
            row_of.insert(g, l);
            match col_of.get(&g) {
                Some(&c) => row_to_col.push(c),
                None => {
                    return Err(Error::Conformance(format!(
                        "row node {g} is not in the column node set"
                    )))
                }
            }
        }

        let mut elem_cols = Vec::with_capacity(elements.len());
        let mut elem_rows = Vec::with_capacity(elements.len());
        let mut elem_stiff = Vec::with_capacity(elements.len());
        let mut elem_vol = Vec::with_capacity(elements.len());
        // Diagonal entries always exist, so penalties can be applied even to
        // rows no element touches.
        let mut pairs: Vec<(u32, u32)> = (0..row_nodes.len())
            .map(|r| (r as u32, row_to_col[r]))
            .collect();
        for &e in &elements {
            let t = mesh.tets()[e];
            let mut cols = [0u32; 4];
            let mut rows = [-1i64; 4];
            for a in 0..4 {
                cols[a] = *col_of.get(&t[a]).ok_or_else(|| {
                    Error::Conformance(format!(
                        "element {e} touches node {} outside the column node set",
                        t[a]
                    ))
                })?;
                if let Some(&r) = row_of.get(&t[a]) {
                    rows[a] = r as i64;
                }
            }
            for a in 0..4 {
                if rows[a] >= 0 {
                    for b in 0..4 {
                        pairs.push((rows[a] as u32, cols[b]));
                    }
                }
            }
            let (_, stiff) = element_matrices(mesh, e)?;
            elem_cols.push(cols);
            elem_rows.push(rows);
            elem_stiff.push(stiff);
            elem_vol.push(mesh.signed_volume_of(e).abs());
        }
        let matrix = SparseMatrix::from_pairs(row_nodes.len(), col_nodes.len(), pairs);
        Ok(Assembler {
            elements,
            elem_cols,
            elem_rows,
            elem_stiff,
            elem_vol,
            n_rows: row_nodes.len(),
            n_cols: col_nodes.len(),
            matrix,
            row_to_col,
            row_of_global: row_of,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    /// Assemble the operator and right-hand side for one implicit step.
    pub fn assemble(&mut self, input: &AssemblyInput) -> Result<(&SparseMatrix, Vec<f64>)> {
        validate_input(input, self.n_cols)?;
        self.matrix.zero_values();
        // r = (M u_prev) + dt (M f), scaled nodally by alpha afterwards.
        let mut rhs = vec![0.0; self.n_rows];

        for (k, _) in self.elements.iter().enumerate() {
            let cols = self.elem_cols[k];
            let rows = self.elem_rows[k];
            let vol = self.elem_vol[k];
            let stiff = &self.elem_stiff[k];

            let mut alpha_bar = 0.0;
            let mut d_bar = 0.0;
            for a in 0..4 {
                alpha_bar += input.alpha[cols[a] as usize];
                d_bar += input.diffusion[cols[a] as usize];
            }
            alpha_bar *= 0.25;
            d_bar *= 0.25;
            let kcoef = input.dt * alpha_bar * d_bar;

            for a in 0..4 {
                if rows[a] < 0 {
                    continue;
                }
                let row = rows[a] as usize;
                if input.lump_mass {
                    // Row-sum lumping: V/4 on the diagonal per vertex.
                    let lumped = vol / 4.0;
                    self.matrix.add_at(row, cols[a] as usize, lumped);
                    let ca = cols[a] as usize;
                    rhs[row] += lumped * (input.previous[ca] + input.dt * input.source[ca]);
                    for b in 0..4 {
                        self.matrix.add_at(row, cols[b] as usize, kcoef * stiff[a][b]);
                    }
                } else {
                    for b in 0..4 {
                        let m_ab = if a == b { vol / 10.0 } else { vol / 20.0 };
                        let cb = cols[b] as usize;
                        self.matrix
                            .add_at(row, cb, m_ab + kcoef * stiff[a][b]);
                        rhs[row] += m_ab * (input.previous[cb] + input.dt * input.source[cb]);
                    }
                }
            }
        }

        // Nodal alpha scaling of the right-hand side. Row nodes are a subset
        // of column nodes, so alpha is looked up through the column map.
        for row in 0..self.n_rows {
            rhs[row] *= input.alpha[self.row_to_col[row] as usize];
        }

        for p in input.penalties {
            if let Some(&row) = self.row_of_global.get(&p.node) {
                self.matrix.add_at(row, self.row_to_col[row] as usize, p.weight);
                rhs[row] += p.weight * p.target;
            }
        }
        Ok((&self.matrix, rhs))
    }

    /// Right-hand side only, leaving the stored operator untouched. Used
    /// when the matrix is constant across steps (the level-set mass solve).
    pub fn assemble_rhs(&self, input: &AssemblyInput) -> Result<Vec<f64>> {
        validate_input(input, self.n_cols)?;
        let mut rhs = vec![0.0; self.n_rows];
        for (k, _) in self.elements.iter().enumerate() {
            let cols = self.elem_cols[k];
            let rows = self.elem_rows[k];
            let vol = self.elem_vol[k];
            for a in 0..4 {
                if rows[a] < 0 {
                    continue;
                }
                let row = rows[a] as usize;
                if input.lump_mass {
                    let ca = cols[a] as usize;
                    rhs[row] += vol / 4.0 * (input.previous[ca] + input.dt * input.source[ca]);
                } else {
                    for b in 0..4 {
                        let m_ab = if a == b { vol / 10.0 } else { vol / 20.0 };
                        let cb = cols[b] as usize;
                        rhs[row] += m_ab * (input.previous[cb] + input.dt * input.source[cb]);
                    }
                }
            }
        }
        for row in 0..self.n_rows {
            rhs[row] *= input.alpha[self.row_to_col[row] as usize];
        }
        for p in input.penalties {
            if let Some(&row) = self.row_of_global.get(&p.node) {
                rhs[row] += p.weight * p.target;
            }
        }
        Ok(rhs)
    }

    /// The most recently assembled operator.
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Mutable access for post-assembly scaling.
    pub fn matrix_mut(&mut self) -> &mut SparseMatrix {
        &mut self.matrix
    }
}

fn validate_input(input: &AssemblyInput, n_cols: usize) -> Result<()> {
    if !(input.dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {}", input.dt)));
    }
    for (name, slice) in [
        ("diffusion", input.diffusion),
        ("alpha", input.alpha),
        ("source", input.source),
        ("previous", input.previous),
    ] {
        if slice.len() != n_cols {
            return Err(Error::Validation(format!(
                "{name} has length {}, expected {n_cols}",
                slice.len()
            )));
        }
        if slice.iter().any(|v| v.is_nan()) {
            return Err(Error::Validation(format!("{name} contains NaN")));
        }
    }
    if input.diffusion.iter().any(|&d| d < 0.0) {
        return Err(Error::Validation("diffusion must be non-negative".into()));
    }
    if input.alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
        return Err(Error::Validation("alpha must lie in (0, 1]".into()));
    }
    Ok(())
}

/// Assemble the full-mesh system. Convenience wrapper building a whole-mesh
/// [`Assembler`] once; time loops should hold an `Assembler` instead.
pub fn assemble_system(mesh: &Mesh, input: &AssemblyInput) -> Result<(SparseMatrix, Vec<f64>)> {
    let all_nodes: Vec<usize> = (0..mesh.node_count()).collect();
    let mut asm = Assembler::new(
        mesh,
        (0..mesh.element_count()).collect(),
        &all_nodes,
        &all_nodes,
    )?;
    let (a, b) = asm.assemble(input)?;
    Ok((a.clone(), b))
}

/// Assemble only the consistent mass matrix.
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    let n = mesh.node_count();
    let zeros = vec![0.0; n];
    let ones = vec![1.0; n];
    let input = AssemblyInput {
        dt: 1.0,
        diffusion: &zeros,
        alpha: &ones,
        source: &zeros,
        previous: &zeros,
        penalties: &[],
        lump_mass: false,
    };
    Ok(assemble_system(mesh, &input)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_box_mesh, GeometryPrimitive, Mesh};
    use crate::util::SplitMix64;

    fn reference_tet_mesh() -> Mesh {
        Mesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
            vec![],
        )
        .unwrap()
    }

    fn small_cube_mesh() -> Mesh {
        generate_box_mesh(
            GeometryPrimitive::Box { extents: [1.0, 1.0, 1.0] },
            GeometryPrimitive::Box { extents: [0.4, 0.4, 0.4] },
            0.25,
            0.25,
        )
        .unwrap()
    }

    /// Straightforward Gaussian elimination with partial pivoting; the
    /// independent solve used to check assembled systems.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap()).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= a[i][j] * x[j];
            }
            x[i] = s / a[i][i];
        }
        x
    }

    #[test]
    fn reference_tet_mass_matches_exact_integration() {
        let mesh = reference_tet_mesh();
        let (mass, _) = element_matrices(&mesh, 0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if a == b { 1.0 / 60.0 } else { 1.0 / 120.0 };
                assert!((mass[a][b] - expected).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn mass_matches_quadrature_oracle_on_random_tets() {
        // Four-point rule, exact for quadratics, evaluated independently.
        let qa = 0.585_410_196_624_968_5;
        let qb = 0.138_196_601_125_010_5;
        let points = [
            [qa, qb, qb, qb],
            [qb, qa, qb, qb],
            [qb, qb, qa, qb],
            [qb, qb, qb, qa],
        ];
        let mut rng = SplitMix64::new(3);
        for _ in 0..20 {
            let nodes: Vec<[f64; 3]> = (0..4)
                .map(|_| [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)])
                .collect();
            let vol = crate::mesh::signed_volume([0, 1, 2, 3], &nodes).abs();
            if vol < 1e-3 {
                continue;
            }
            let mesh = Mesh::from_parts(nodes, vec![[0, 1, 2, 3]], vec![]).unwrap();
            let (mass, _) = element_matrices(&mesh, 0).unwrap();
            // The mesh may have reoriented the tet; volume is all that the
            // mass matrix depends on.
            for a in 0..4 {
                for b in 0..4 {
                    let oracle: f64 = points
                        .iter()
                        .map(|lam| 0.25 * vol * lam[a] * lam[b])
                        .sum();
                    assert!(
                        (mass[a][b] - oracle).abs() < 1e-13 * vol.max(1.0),
                        "mass[{a}][{b}]"
                    );
                }
            }
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..20 {
            let nodes: Vec<[f64; 3]> = (0..4)
                .map(|_| [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)])
                .collect();
            if crate::mesh::signed_volume([0, 1, 2, 3], &nodes).abs() < 1e-3 {
                continue;
            }
            let mesh = Mesh::from_parts(nodes, vec![[0, 1, 2, 3]], vec![]).unwrap();
            let (_, stiff) = element_matrices(&mesh, 0).unwrap();
            for a in 0..4 {
                let s: f64 = stiff[a].iter().sum();
                assert!(s.abs() < 1e-12, "row {a} sums to {s}");
            }
        }
    }

    #[test]
    fn scaling_tet_by_two_scales_mass_by_eight_stiffness_by_two() {
        let mesh = reference_tet_mesh();
        let (m1, k1) = element_matrices(&mesh, 0).unwrap();
        let scaled = Mesh::from_parts(
            mesh.nodes().iter().map(|p| [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]).collect(),
            vec![[0, 1, 2, 3]],
            vec![],
        )
        .unwrap();
        let (m2, k2) = element_matrices(&scaled, 0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!((m2[a][b] - 8.0 * m1[a][b]).abs() < 1e-14);
                assert!((k2[a][b] - 2.0 * k1[a][b]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_diffusion_identity_step_returns_previous_state() {
        let mesh = small_cube_mesh();
        let n = mesh.node_count();
        let mut rng = SplitMix64::new(5);
        let previous: Vec<f64> = (0..n).map(|_| rng.range(0.0, 2.0)).collect();
        let zeros = vec![0.0; n];
        let ones = vec![1.0; n];
        let input = AssemblyInput {
            dt: 0.5,
            diffusion: &zeros,
            alpha: &ones,
            source: &zeros,
            previous: &previous,
            penalties: &[],
            lump_mass: false,
        };
        let (a, b) = assemble_system(&mesh, &input).unwrap();
        let x = dense_solve(a.to_dense(), b);
        for (xi, pi) in x.iter().zip(&previous) {
            assert!((xi - pi).abs() < 1e-10);
        }
    }

    #[test]
    fn single_element_system_matches_hand_assembled_mass_plus_stiffness() {
        // Reference tet, alpha = 1, D = 1, dt = 1: gradients are known in
        // closed form, so A = M + K has exact rational entries.
        let mesh = reference_tet_mesh();
        let ones = vec![1.0; 4];
        let zeros = vec![0.0; 4];
        let input = AssemblyInput {
            dt: 1.0,
            diffusion: &ones,
            alpha: &ones,
            source: &zeros,
            previous: &zeros,
            penalties: &[],
            lump_mass: false,
        };
        let (a, _) = assemble_system(&mesh, &input).unwrap();
        let g = [
            [-1.0, -1.0, -1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let vol = 1.0 / 6.0;
        for i in 0..4 {
            for j in 0..4 {
                let mass = if i == j { vol / 10.0 } else { vol / 20.0 };
                let dot: f64 = (0..3).map(|k| g[i][k] * g[j][k]).sum();
                let expected = mass + vol * dot;
                assert!((a.get(i, j) - expected).abs() < 1e-15, "A[{i}][{j}]");
            }
        }
    }

    #[test]
    fn penalty_pins_node_to_target() {
        let mesh = small_cube_mesh();
        let n = mesh.node_count();
        let ones = vec![1.0; n];
        let zeros = vec![0.0; n];
        let diffusion = vec![0.3; n];
        let penalties = [PenaltyEntry { node: 7, target: 278.0, weight: 1e10 }];
        let input = AssemblyInput {
            dt: 0.1,
            diffusion: &diffusion,
            alpha: &ones,
            source: &zeros,
            previous: &zeros,
            penalties: &penalties,
            lump_mass: false,
        };
        let (a, b) = assemble_system(&mesh, &input).unwrap();
        let x = dense_solve(a.to_dense(), b);
        assert!((x[7] - 278.0).abs() / 278.0 < 1e-6);
    }

    #[test]
    fn lumped_reference_tet_is_volume_over_four() {
        let mesh = reference_tet_mesh();
        let mass = assemble_mass(&mesh).unwrap();
        let lumped = lump_mass(&mass).unwrap();
        for &l in &lumped {
            assert!((l - 1.0 / 24.0).abs() < 1e-16);
        }
    }

    #[test]
    fn lumped_mass_sums_to_mesh_volume() {
        let mesh = small_cube_mesh();
        let mass = assemble_mass(&mesh).unwrap();
        let lumped = lump_mass(&mass).unwrap();
        let total: f64 = lumped.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_mass_is_positive_definite_on_random_vectors() {
        let mesh = small_cube_mesh();
        let mass = assemble_mass(&mesh).unwrap();
        assert!(mass.pattern_is_symmetric());
        let n = mesh.node_count();
        let mut rng = SplitMix64::new(21);
        let mut y = vec![0.0; n];
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            mass.matvec(&x, &mut y);
            let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!(rayleigh > 0.0);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let mesh = small_cube_mesh();
        let n = mesh.node_count();
        let ones_coef = vec![1.0; n];
        let zeros = vec![0.0; n];
        // A = M + dt K with dt = 1; K 1 = A 1 - M 1.
        let input = AssemblyInput {
            dt: 1.0,
            diffusion: &ones_coef,
            alpha: &ones_coef,
            source: &zeros,
            previous: &zeros,
            penalties: &[],
            lump_mass: false,
        };
        let (a, _) = assemble_system(&mesh, &input).unwrap();
        let mass = assemble_mass(&mesh).unwrap();
        let ones = vec![1.0; n];
        let mut a1 = vec![0.0; n];
        let mut m1 = vec![0.0; n];
        a.matvec(&ones, &mut a1);
        mass.matvec(&ones, &mut m1);
        let knorm = (a.norm_frobenius().powi(2) - mass.norm_frobenius().powi(2)).abs().sqrt().max(1.0);
        let k1: f64 = a1.iter().zip(&m1).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(k1 <= 1e-12 * knorm, "|K 1| = {k1}, scale {knorm}");
    }

    #[test]
    fn lumped_pure_diffusion_step_conserves_total_mass() {
        let mesh = small_cube_mesh();
        let n = mesh.node_count();
        let ones = vec![1.0; n];
        let zeros = vec![0.0; n];
        let mut rng = SplitMix64::new(8);
        let previous: Vec<f64> = (0..n).map(|_| rng.range(0.0, 1.0)).collect();
        let diffusion = vec![0.7; n];
        let input = AssemblyInput {
            dt: 0.05,
            diffusion: &diffusion,
            alpha: &ones,
            source: &zeros,
            previous: &previous,
            penalties: &[],
            lump_mass: true,
        };
        let (a, b) = assemble_system(&mesh, &input).unwrap();
        let x = dense_solve(a.to_dense(), b);
        let mass = assemble_mass(&mesh).unwrap();
        let lumped = lump_mass(&mass).unwrap();
        let before: f64 = lumped.iter().zip(&previous).map(|(l, u)| l * u).sum();
        let after: f64 = lumped.iter().zip(&x).map(|(l, u)| l * u).sum();
        assert!((after - before).abs() / before.abs() < 1e-12);
    }

    #[test]
    fn operator_changes_when_coefficient_fields_change() {
        let mesh = small_cube_mesh();
        let n = mesh.node_count();
        let ones = vec![1.0; n];
        let zeros = vec![0.0; n];
        let d1 = vec![0.5; n];
        let mut d2 = d1.clone();
        d2[3] = 0.9;
        let mk = |d: &[f64]| {
            let input = AssemblyInput {
                dt: 0.1,
                diffusion: d,
                alpha: &ones,
                source: &zeros,
                previous: &zeros,
                penalties: &[],
                lump_mass: false,
            };
            assemble_system(&mesh, &input).unwrap().0
        };
        let a1 = mk(&d1);
        let a2 = mk(&d2);
        let differs = (0..n).any(|i| {
            let (c1, v1) = a1.row(i);
            let (_, v2) = a2.row(i);
            c1.iter().zip(v1.iter().zip(v2)).any(|(_, (x, y))| x != y)
        });
        assert!(differs);
    }

    #[test]
    fn nan_coefficient_is_a_validation_error() {
        let mesh = reference_tet_mesh();
        let ones = vec![1.0; 4];
        let zeros = vec![0.0; 4];
        let bad = vec![0.1, f64::NAN, 0.1, 0.1];
        let input = AssemblyInput {
            dt: 0.1,
            diffusion: &bad,
            alpha: &ones,
            source: &zeros,
            previous: &zeros,
            penalties: &[],
            lump_mass: false,
        };
        assert!(matches!(assemble_system(&mesh, &input), Err(Error::Validation(_))));
    }

    #[test]
    fn dimension_mismatch_is_a_validation_error() {
        let mesh = reference_tet_mesh();
        let ones = vec![1.0; 4];
        let zeros = vec![0.0; 4];
        let short = vec![0.0; 3];
        let input = AssemblyInput {
            dt: 0.1,
            diffusion: &short,
            alpha: &ones,
            source: &zeros,
            previous: &zeros,
            penalties: &[],
            lump_mass: false,
        };
        assert!(matches!(assemble_system(&mesh, &input), Err(Error::Validation(_))));
    }
}
