//! Iterative solution of the assembled systems: restarted GMRES with
//! identity, Jacobi or restricted additive Schwarz preconditioning.
//!
//! The Schwarz preconditioner applies `z = sum_i R_i^T D_i A_i^-1 R_i r`:
//! every subdomain solves its local overlapping system and only owner values
//! (partition-of-unity weight 1) enter the result. `A_i^-1` is exact dense
//! LU for small blocks and an approximate ILU(0)-preconditioned inner
//! iteration for large ones.

mod dense;
mod gmres;
mod ilu;

pub use dense::DenseLu;
pub use gmres::{gmres, KrylovWorkspace};
pub use ilu::Ilu0;

use crate::decomp::OverlapDecomposition;
use crate::error::{Error, Result};
use crate::fem::SparseMatrix;
use std::fmt;

/// Default Krylov restart length.
pub const DEFAULT_RESTART: usize = 30;
/// Default relative residual tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Default absolute residual tolerance (effectively disabled).
pub const DEFAULT_ABS_TOL: f64 = 1e-300;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 1000;
/// Local systems at most this large are factorized densely inside the
/// Schwarz preconditioner; larger ones fall back to ILU(0) inner iterations.
pub const RAS_DENSE_THRESHOLD: usize = 2000;

const INNER_TOL: f64 = 1e-2;
const INNER_MAX_ITERS: usize = 16;
const INNER_RESTART: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    None,
    Jacobi,
    Ras,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasLocalSolver {
    /// Dense LU up to [`RAS_DENSE_THRESHOLD`] unknowns, ILU(0) above.
    Auto,
    DenseLu,
    Ilu0,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub method: Method,
    pub restart: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    pub preconditioner: PreconditionerKind,
    pub ras_local_solver: RasLocalSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Gmres,
            restart: DEFAULT_RESTART,
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            preconditioner: PreconditionerKind::Ras,
            ras_local_solver: RasLocalSolver::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart < 1 {
            return Err(Error::Validation("solver restart must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::Validation("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Validation("solver max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of a converged solve.
#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final true residual norm `|b - A x|`.
    pub residual: f64,
    pub wall_s: f64,
    /// Residual norm after each Arnoldi step, starting with the initial one.
    pub residual_history: Vec<f64>,
}

impl SolveStats {
    /// Log line consumed by the performance tooling.
    pub fn log_line(&self, pde: &str) -> String {
        format!(
            "pde={} iters={} resid={:e} t={:.6}",
            pde, self.iterations, self.residual, self.wall_s
        )
    }
}

#[derive(Debug, Clone)]
pub enum SolveError {
    /// The Arnoldi basis degenerated while the residual was still above the
    /// target; the system is singular or inconsistent.
    Breakdown { residual: f64 },
    /// Iteration budget exhausted; `best` carries the best iterate when the
    /// calling context can provide it.
    MaxIters { iterations: usize, residual: f64, best: Vec<f64> },
    /// A factorization hit a zero pivot.
    SingularMatrix { pivot: usize },
    /// A subdomain-local factorization failed.
    SingularSubdomain { subdomain: usize },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Breakdown { residual } => {
                write!(f, "Krylov breakdown with residual {residual:e}")
            }
            SolveError::MaxIters { iterations, residual, .. } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:e})"
            ),
            SolveError::SingularMatrix { pivot } => {
                write!(f, "singular matrix (zero pivot at {pivot})")
            }
            SolveError::SingularSubdomain { subdomain } => {
                write!(f, "singular local system on subdomain {subdomain}")
            }
        }
    }
}

impl std::error::Error for SolveError {}

/// Application of an approximate inverse, `z = M^-1 r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &SparseMatrix) -> Result<JacobiPreconditioner> {
        let diag = a.diagonal();
        let mut inv = Vec::with_capacity(diag.len());
        for (i, d) in diag.iter().enumerate() {
            if *d == 0.0 || !d.is_finite() {
                return Err(Error::Solve(SolveError::SingularMatrix { pivot: i }));
            }
            inv.push(1.0 / d);
        }
        Ok(JacobiPreconditioner { inv_diag: inv })
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *z = r * d;
        }
    }
}

/// Local solver behind one Schwarz subdomain.
pub enum LocalSolver {
    Dense(DenseLu),
    Ilu { matrix: SparseMatrix, ilu: Ilu0 },
}

impl LocalSolver {
    /// Factor a local operator according to the configured strategy.
    pub fn build(
        a_local: SparseMatrix,
        choice: RasLocalSolver,
        subdomain: usize,
    ) -> Result<LocalSolver> {
        let use_dense = match choice {
            RasLocalSolver::DenseLu => true,
            RasLocalSolver::Ilu0 => false,
            RasLocalSolver::Auto => a_local.n_rows() <= RAS_DENSE_THRESHOLD,
        };
        if use_dense {
            let lu = DenseLu::factor_sparse(&a_local)
                .map_err(|_| Error::SingularSubdomain {
                    subdomain,
                    msg: "dense LU factorization failed".into(),
                })?;
            Ok(LocalSolver::Dense(lu))
        } else {
            let ilu = Ilu0::factor(&a_local).map_err(|_| Error::SingularSubdomain {
                subdomain,
                msg: "ILU(0) factorization failed".into(),
            })?;
            Ok(LocalSolver::Ilu { matrix: a_local, ilu })
        }
    }

    /// Apply the exact or approximate local inverse.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        match self {
            LocalSolver::Dense(lu) => lu.solve(r),
            LocalSolver::Ilu { matrix, ilu } => {
                // Fixed-budget inner iteration; best effort by construction,
                // the outer flexible GMRES tolerates the approximation.
                let cfg = SolverConfig {
                    restart: INNER_RESTART,
                    rel_tol: INNER_TOL,
                    abs_tol: DEFAULT_ABS_TOL,
                    max_iters: INNER_MAX_ITERS,
                    ..SolverConfig::default()
                };
                let mut ws = SequentialWorkspace::new(matrix, IluApply(ilu), r.len());
                let x = ws.push_vector(vec![0.0; r.len()]);
                let b = ws.push_vector(r.to_vec());
                let _ = gmres(&mut ws, x, b, &cfg);
                ws.take_vector(x)
            }
        }
    }
}

struct IluApply<'a>(&'a Ilu0);

impl Preconditioner for IluApply<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.0.apply(r, z);
    }
}

/// Sequential restricted additive Schwarz preconditioner over local
/// submatrices extracted from the global operator.
pub struct RasPreconditioner {
    subdomains: Vec<RasSubdomain>,
}

struct RasSubdomain {
    /// Global node ids of the local space, ascending.
    nodes: Vec<usize>,
    /// Partition-of-unity weight per local node.
    weights: Vec<f64>,
    solver: LocalSolver,
}

impl RasPreconditioner {
    /// Extract `A_i = R_i A R_i^T` for each subdomain of `dec` and factor it.
    pub fn from_global(
        a: &SparseMatrix,
        dec: &OverlapDecomposition,
        choice: RasLocalSolver,
    ) -> Result<RasPreconditioner> {
        if a.n_rows() != dec.n_global_nodes() {
            return Err(Error::Conformance(format!(
                "operator has {} rows, decomposition covers {} nodes",
                a.n_rows(),
                dec.n_global_nodes()
            )));
        }
        let mut subdomains = Vec::with_capacity(dec.n_parts());
        for (i, sub) in dec.subdomains().iter().enumerate() {
            let nodes = sub.local_nodes.clone();
            let a_local = extract_submatrix(a, &nodes);
            let solver = LocalSolver::build(a_local, choice, i)?;
            subdomains.push(RasSubdomain {
                nodes,
                weights: sub.pou_weight.clone(),
                solver,
            });
        }
        Ok(RasPreconditioner { subdomains })
    }
}

impl Preconditioner for RasPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        for sub in &self.subdomains {
            let r_local: Vec<f64> = sub.nodes.iter().map(|&g| r[g]).collect();
            let z_local = sub.solver.solve(&r_local);
            for ((&g, &w), zl) in sub.nodes.iter().zip(&sub.weights).zip(&z_local) {
                if w != 0.0 {
                    z[g] += w * zl;
                }
            }
        }
    }
}

/// Symmetric Jacobi scaling `A~ = D^-1/2 A D^-1/2` with `D = diag(A)`.
/// Returns the scaled matrix and `D^-1/2`.
///
/// Assembled operators with penalty pinning mix diagonal magnitudes across
/// ten orders; without this rescaling the attainable true-residual floor of
/// f64 sits above any physically meaningful tolerance.
pub fn symmetric_diagonal_scaling(a: &SparseMatrix) -> Result<(SparseMatrix, Vec<f64>)> {
    let n = a.n_rows();
    if n != a.n_cols() {
        return Err(Error::Conformance("diagonal scaling needs a square matrix".into()));
    }
    let diag = a.diagonal();
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, &d) in diag.iter().enumerate() {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Solve(SolveError::SingularMatrix { pivot: i }));
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let mut pairs = Vec::with_capacity(a.nnz());
    for i in 0..n {
        let (cols, _) = a.row(i);
        for &c in cols {
            pairs.push((i as u32, c));
        }
    }
    let mut scaled = SparseMatrix::from_pairs(n, n, pairs);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            let j = *c as usize;
            scaled.add_at(i, j, v * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    Ok((scaled, inv_sqrt))
}

/// Rows and columns of `a` restricted to `nodes` (which must be ascending).
pub fn extract_submatrix(a: &SparseMatrix, nodes: &[usize]) -> SparseMatrix {
    let mut local_of = std::collections::HashMap::with_capacity(nodes.len());
    for (l, &g) in nodes.iter().enumerate() {
        local_of.insert(g as u32, l as u32);
    }
    let mut pairs = Vec::new();
    for (li, &g) in nodes.iter().enumerate() {
        let (cols, _) = a.row(g);
        for c in cols {
            if let Some(&lj) = local_of.get(c) {
                pairs.push((li as u32, lj));
            }
        }
    }
    let mut m = SparseMatrix::from_pairs(nodes.len(), nodes.len(), pairs);
    for (li, &g) in nodes.iter().enumerate() {
        let (cols, vals) = a.row(g);
        for (c, v) in cols.iter().zip(vals) {
            if let Some(&lj) = local_of.get(c) {
                m.add_at(li, lj as usize, *v);
            }
        }
    }
    m
}

/// In-memory workspace driving [`gmres`] sequentially.
pub struct SequentialWorkspace<'a, P: Preconditioner> {
    a: &'a SparseMatrix,
    m: P,
    slots: Vec<Vec<f64>>,
    free: Vec<usize>,
    n: usize,
}

impl<'a, P: Preconditioner> SequentialWorkspace<'a, P> {
    pub fn new(a: &'a SparseMatrix, m: P, n: usize) -> Self {
        SequentialWorkspace { a, m, slots: Vec::new(), free: Vec::new(), n }
    }

    pub fn push_vector(&mut self, v: Vec<f64>) -> usize {
        assert_eq!(v.len(), self.n);
        self.slots.push(v);
        self.slots.len() - 1
    }

    pub fn vector(&self, h: usize) -> &[f64] {
        &self.slots[h]
    }

    pub fn take_vector(&mut self, h: usize) -> Vec<f64> {
        std::mem::take(&mut self.slots[h])
    }
}

impl<P: Preconditioner> KrylovWorkspace for SequentialWorkspace<'_, P> {
    type Handle = usize;

    fn alloc(&mut self) -> usize {
        if let Some(h) = self.free.pop() {
            self.slots[h].iter_mut().for_each(|v| *v = 0.0);
            h
        } else {
            self.slots.push(vec![0.0; self.n]);
            self.slots.len() - 1
        }
    }

    fn release(&mut self, h: usize) {
        self.free.push(h);
    }

    fn copy(&mut self, dst: usize, src: usize) {
        let (a, b) = two_slots(&mut self.slots, dst, src);
        a.copy_from_slice(b);
    }

    fn set_zero(&mut self, x: usize) {
        self.slots[x].iter_mut().for_each(|v| *v = 0.0);
    }

    fn scale(&mut self, x: usize, a: f64) {
        self.slots[x].iter_mut().for_each(|v| *v *= a);
    }

    fn axpy(&mut self, y: usize, a: f64, x: usize) {
        let (yv, xv) = two_slots(&mut self.slots, y, x);
        for (y, x) in yv.iter_mut().zip(xv.iter()) {
            *y += a * x;
        }
    }

    fn dot(&mut self, x: usize, y: usize) -> f64 {
        self.slots[x].iter().zip(&self.slots[y]).map(|(a, b)| a * b).sum()
    }

    fn apply_operator(&mut self, y: usize, x: usize) {
        let (yv, xv) = two_slots(&mut self.slots, y, x);
        self.a.matvec(xv, yv);
    }

    fn apply_preconditioner(&mut self, z: usize, r: usize) {
        let (zv, rv) = two_slots(&mut self.slots, z, r);
        self.m.apply(rv, zv);
    }
}

fn two_slots(slots: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &[f64]) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = slots.split_at_mut(b);
        (&mut lo[a], &hi[0])
    } else {
        let (lo, hi) = slots.split_at_mut(a);
        (&mut hi[0], &lo[b])
    }
}

/// Solve `A x = b` with the configured method and preconditioner. On
/// iteration-budget failure the error carries the best iterate.
pub fn gmres_solve(
    a: &SparseMatrix,
    b: &[f64],
    precond: &dyn Preconditioner,
    cfg: &SolverConfig,
) -> std::result::Result<(Vec<f64>, SolveStats), SolveError> {
    gmres_solve_from(a, b, vec![0.0; b.len()], precond, cfg)
}

/// As [`gmres_solve`] with an initial guess.
pub fn gmres_solve_from(
    a: &SparseMatrix,
    b: &[f64],
    x0: Vec<f64>,
    precond: &dyn Preconditioner,
    cfg: &SolverConfig,
) -> std::result::Result<(Vec<f64>, SolveStats), SolveError> {
    let mut ws = SequentialWorkspace::new(a, PrecondRef(precond), b.len());
    let x = ws.push_vector(x0);
    let bh = ws.push_vector(b.to_vec());
    match gmres(&mut ws, x, bh, cfg) {
        Ok(stats) => Ok((ws.take_vector(x), stats)),
        Err(SolveError::MaxIters { iterations, residual, .. }) => Err(SolveError::MaxIters {
            iterations,
            residual,
            best: ws.take_vector(x),
        }),
        Err(e) => Err(e),
    }
}

struct PrecondRef<'a>(&'a dyn Preconditioner);

impl Preconditioner for PrecondRef<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.0.apply(r, z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{build_overlap, partition_mesh};
    use crate::fem::{assemble_system, AssemblyInput};
    use crate::mesh::{generate_box_mesh, GeometryPrimitive, Mesh};
    use crate::util::{rel_diff_norm2, SplitMix64};

    fn small_cube_mesh(h: f64) -> Mesh {
        generate_box_mesh(
            GeometryPrimitive::Box { extents: [1.0, 1.0, 1.0] },
            GeometryPrimitive::Box { extents: [0.4, 0.4, 0.4] },
            h,
            h,
        )
        .unwrap()
    }

    fn fem_system(mesh: &Mesh) -> (SparseMatrix, Vec<f64>) {
        let n = mesh.node_count();
        let ones = vec![1.0; n];
        let diffusion = vec![0.4; n];
        let mut rng = SplitMix64::new(31);
        let previous: Vec<f64> = (0..n).map(|_| rng.range(0.0, 1.0)).collect();
        let source: Vec<f64> = (0..n).map(|_| rng.range(-0.2, 0.2)).collect();
        let input = AssemblyInput {
            dt: 0.1,
            diffusion: &diffusion,
            alpha: &ones,
            source: &source,
            previous: &previous,
            penalties: &[],
            lump_mass: false,
        };
        assemble_system(mesh, &input).unwrap()
    }

    #[test]
    fn identity_system_converges_in_one_iteration() {
        let a = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let b = vec![3.0, -1.0, 0.5];
        let cfg = SolverConfig { preconditioner: PreconditionerKind::None, ..Default::default() };
        let (x, stats) = gmres_solve(&a, &b, &IdentityPreconditioner, &cfg).unwrap();
        assert_eq!(stats.iterations, 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn two_by_two_system_matches_hand_elimination() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let cfg = SolverConfig {
            preconditioner: PreconditionerKind::None,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let (x, _) = gmres_solve(&a, &[1.0, 2.0], &IdentityPreconditioner, &cfg).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-11);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-11);
    }

    #[test]
    fn singular_inconsistent_system_errors_instead_of_answering() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 0.0)]);
        let cfg = SolverConfig { preconditioner: PreconditionerKind::None, ..Default::default() };
        let err = gmres_solve(&a, &[1.0, 1.0], &IdentityPreconditioner, &cfg).unwrap_err();
        assert!(matches!(err, SolveError::Breakdown { .. } | SolveError::MaxIters { .. }));
    }

    #[test]
    fn max_iters_error_carries_best_iterate() {
        // Force failure with a one-iteration budget on a non-trivial system.
        let mesh = small_cube_mesh(0.25);
        let (a, b) = fem_system(&mesh);
        let cfg = SolverConfig {
            preconditioner: PreconditionerKind::None,
            max_iters: 1,
            rel_tol: 1e-14,
            restart: 1,
            ..Default::default()
        };
        match gmres_solve(&a, &b, &IdentityPreconditioner, &cfg) {
            Err(SolveError::MaxIters { best, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.len(), b.len());
                assert!(best.iter().any(|&v| v != 0.0));
            }
            other => panic!("expected MaxIters, got {other:?}"),
        }
    }

    #[test]
    fn ras_with_one_subdomain_is_the_exact_inverse() {
        let mesh = small_cube_mesh(0.25);
        let (a, _) = fem_system(&mesh);
        let p = partition_mesh(&mesh, 1, 0).unwrap();
        let dec = build_overlap(&mesh, &p, 1);
        let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::DenseLu).unwrap();
        let lu = DenseLu::factor_sparse(&a).unwrap();
        let mut rng = SplitMix64::new(5);
        let r: Vec<f64> = (0..a.n_rows()).map(|_| rng.range(-1.0, 1.0)).collect();
        let mut z = vec![0.0; r.len()];
        ras.apply(&r, &mut z);
        let exact = lu.solve(&r);
        assert!(rel_diff_norm2(&exact, &z) < 1e-12);
    }

    #[test]
    fn ras_on_a_diagonal_matrix_equals_jacobi_exactly() {
        let mesh = small_cube_mesh(0.25);
        let n = mesh.node_count();
        let mut rng = SplitMix64::new(77);
        let triplets: Vec<(usize, usize, f64)> =
            (0..n).map(|i| (i, i, rng.range(0.5, 3.0))).collect();
        let a = SparseMatrix::from_triplets(n, &triplets);
        for parts in [2usize, 3, 5] {
            let p = partition_mesh(&mesh, parts, 0).unwrap();
            let dec = build_overlap(&mesh, &p, 1);
            let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::DenseLu).unwrap();
            let jac = JacobiPreconditioner::new(&a).unwrap();
            let r: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
            let mut zr = vec![0.0; n];
            let mut zj = vec![0.0; n];
            ras.apply(&r, &mut zr);
            jac.apply(&r, &mut zj);
            for (a, b) in zr.iter().zip(&zj) {
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gmres_ras_matches_dense_direct_solve_on_two_subdomains() {
        let mesh = small_cube_mesh(0.2);
        let (a, b) = fem_system(&mesh);
        let p = partition_mesh(&mesh, 2, 0).unwrap();
        let dec = build_overlap(&mesh, &p, 1);
        let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::Auto).unwrap();
        let cfg = SolverConfig { rel_tol: 1e-10, ..Default::default() };
        let (x, stats) = gmres_solve(&a, &b, &ras, &cfg).unwrap();
        let direct = DenseLu::factor_sparse(&a).unwrap().solve(&b);
        assert!(rel_diff_norm2(&direct, &x) < 1e-8, "iters {}", stats.iterations);
    }

    #[test]
    fn solution_is_independent_of_subdomain_count() {
        let mesh = small_cube_mesh(0.2);
        let (a, b) = fem_system(&mesh);
        let cfg = SolverConfig { rel_tol: 1e-9, ..Default::default() };
        let mut solutions = Vec::new();
        for parts in [1usize, 2, 4, 8] {
            let p = partition_mesh(&mesh, parts, 0).unwrap();
            let dec = build_overlap(&mesh, &p, 1);
            let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::Auto).unwrap();
            let (x, _) = gmres_solve(&a, &b, &ras, &cfg).unwrap();
            solutions.push(x);
        }
        for i in 0..solutions.len() {
            for j in i + 1..solutions.len() {
                assert!(
                    rel_diff_norm2(&solutions[i], &solutions[j]) < 10.0 * cfg.rel_tol,
                    "solutions {i} and {j} disagree"
                );
            }
        }
    }

    #[test]
    fn residual_history_is_non_increasing_within_a_cycle() {
        let mesh = small_cube_mesh(0.2);
        let (a, b) = fem_system(&mesh);
        let cfg = SolverConfig {
            preconditioner: PreconditionerKind::None,
            rel_tol: 1e-10,
            restart: 200,
            ..Default::default()
        };
        let (_, stats) = gmres_solve(&a, &b, &IdentityPreconditioner, &cfg).unwrap();
        for w in stats.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "residual increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn reported_solution_satisfies_unpreconditioned_residual_bound() {
        let mesh = small_cube_mesh(0.2);
        let (a, b) = fem_system(&mesh);
        let p = partition_mesh(&mesh, 3, 0).unwrap();
        let dec = build_overlap(&mesh, &p, 1);
        let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::Auto).unwrap();
        let cfg = SolverConfig::default();
        let (x, stats) = gmres_solve(&a, &b, &ras, &cfg).unwrap();
        let mut ax = vec![0.0; b.len()];
        a.matvec(&x, &mut ax);
        let resid: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let bnorm = crate::util::norm2(&b);
        assert!(resid <= (cfg.rel_tol * bnorm).max(cfg.abs_tol) * (1.0 + 1e-12));
        assert!((stats.residual - resid).abs() <= 1e-12 * bnorm);
    }

    #[test]
    fn ilu_local_solver_still_converges_to_tolerance() {
        let mesh = small_cube_mesh(0.2);
        let (a, b) = fem_system(&mesh);
        let p = partition_mesh(&mesh, 2, 0).unwrap();
        let dec = build_overlap(&mesh, &p, 1);
        let ras = RasPreconditioner::from_global(&a, &dec, RasLocalSolver::Ilu0).unwrap();
        let cfg = SolverConfig { rel_tol: 1e-9, ..Default::default() };
        let (x, _) = gmres_solve(&a, &b, &ras, &cfg).unwrap();
        let direct = DenseLu::factor_sparse(&a).unwrap().solve(&b);
        assert!(rel_diff_norm2(&direct, &x) < 1e-7);
    }
}
