//! The distributed worker-pool path must reproduce the sequential path:
//! same operators, same solves, same observables, bit-for-bit reproducible
//! runs for a fixed worker count.

use rdfront::decomp::{build_overlap, partition_mesh};
use rdfront::levelset;
use rdfront::linsolve::{RasLocalSolver, SolverConfig};
use rdfront::mesh::{generate_box_mesh, GeometryPrimitive, Mesh};
use rdfront::par::{BandData, GlobalFields, WorkerPool, SLOT_C_FILM, SLOT_C_MG, SLOT_PHI, SLOT_VELOCITY};
use rdfront::physics::{
    self, effective_penalty_weight, ChemParams, FieldState, MgStepOptions,
};
use rdfront::util::rel_diff_norm2;
use std::sync::Arc;

fn test_mesh() -> Mesh {
    generate_box_mesh(
        GeometryPrimitive::Box { extents: [2.0, 2.0, 1.2] },
        GeometryPrimitive::Box { extents: [0.8, 0.8, 0.4] },
        0.3,
        0.15,
    )
    .unwrap()
}

fn test_params() -> ChemParams {
    ChemParams {
        d_mg: 0.8,
        k1: 0.4,
        k2: 0.05,
        cl: 0.3,
        rho_film: 3.0,
        porosity: 0.5,
        tortuosity: 2.0,
        mg_sol: 2.0,
        mg_sat: 0.4,
        ..ChemParams::default()
    }
}

fn initial_state(mesh: &Mesh, params: &ChemParams) -> FieldState {
    let block = GeometryPrimitive::Box { extents: [0.8, 0.8, 0.4] };
    let phi = levelset::init_signed_distance(mesh, &block).unwrap();
    FieldState::initial(phi, params, 0.0)
}

fn spawn_pool(mesh: &Arc<Mesh>, workers: usize, delta: usize) -> WorkerPool {
    let partition = partition_mesh(mesh, workers, 0).unwrap();
    let dec = Arc::new(build_overlap(mesh, &partition, delta));
    WorkerPool::spawn(Arc::clone(mesh), dec, RasLocalSolver::Auto).unwrap()
}

fn load_state(pool: &mut WorkerPool, state: &FieldState) {
    pool.scatter(SLOT_C_MG, Arc::new(state.c_mg.clone())).unwrap();
    pool.scatter(SLOT_C_FILM, Arc::new(state.c_film.clone())).unwrap();
    pool.scatter(SLOT_PHI, Arc::new(state.phi.clone())).unwrap();
}

#[test]
fn scatter_gather_round_trips() {
    let mesh = Arc::new(test_mesh());
    let mut pool = spawn_pool(&mesh, 3, 1);
    let mut rng = rdfront::util::SplitMix64::new(5);
    let data: Vec<f64> = (0..mesh.node_count()).map(|_| rng.range(-2.0, 2.0)).collect();
    pool.scatter(SLOT_C_MG, Arc::new(data.clone())).unwrap();
    let back = pool.gather(SLOT_C_MG).unwrap();
    assert_eq!(back, data);
    pool.shutdown();
}

#[test]
fn distributed_dot_matches_sequential_sum() {
    let mesh = Arc::new(test_mesh());
    let mut pool = spawn_pool(&mesh, 4, 1);
    let mut rng = rdfront::util::SplitMix64::new(9);
    let x: Vec<f64> = (0..mesh.node_count()).map(|_| rng.range(-1.0, 1.0)).collect();
    let y: Vec<f64> = (0..mesh.node_count()).map(|_| rng.range(-1.0, 1.0)).collect();
    pool.scatter(SLOT_C_MG, Arc::new(x.clone())).unwrap();
    pool.scatter(SLOT_C_FILM, Arc::new(y.clone())).unwrap();
    let dist = pool.dot(SLOT_C_MG, SLOT_C_FILM).unwrap();
    let seq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    assert!((dist - seq).abs() <= 1e-12 * seq.abs().max(1.0));
    pool.shutdown();
}

#[test]
fn distributed_transport_step_matches_sequential() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let dt = 0.025;
    let penalty = effective_penalty_weight(1e10, mesh.total_volume(), mesh.node_count());
    let cfg = SolverConfig { rel_tol: 1e-10, ..Default::default() };

    // Sequential reference.
    let partition = partition_mesh(&mesh, 1, 0).unwrap();
    let dec = build_overlap(&mesh, &partition, 1);
    let opts = MgStepOptions { solver: cfg, ..Default::default() };
    let reference = physics::step_mg(&mesh, &dec, &state, &params, dt, &opts).unwrap();

    for workers in [1usize, 2, 4] {
        let mut pool = spawn_pool(&mesh, workers, 1);
        load_state(&mut pool, &state);
        let b = pool.alloc();
        let x = pool.alloc();
        pool.assemble_transport(dt, &params, true, penalty, true, RasLocalSolver::Auto, b, x)
            .unwrap();
        let stats = pool.solve(false, b, x, SLOT_C_MG, &cfg).unwrap();
        let clamped = pool.clamp_non_negative(SLOT_C_MG).unwrap();
        let c_mg = pool.gather(SLOT_C_MG).unwrap();
        pool.shutdown();

        assert_eq!(clamped, reference.clamped_negative);
        let diff = rel_diff_norm2(&reference.c_mg, &c_mg);
        assert!(
            diff < 1e-7,
            "{workers} workers diverge from sequential by {diff} (iters {})",
            stats.iterations
        );
    }
}

#[test]
fn distributed_film_step_matches_sequential() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let mut rng = rdfront::util::SplitMix64::new(3);
    let c_mg: Vec<f64> = (0..mesh.node_count()).map(|_| rng.range(0.0, 2.0)).collect();
    let c_film: Vec<f64> =
        (0..mesh.node_count()).map(|_| rng.range(0.0, params.film_max())).collect();
    let dt = 0.025;
    let expected = physics::step_film(&c_film, &c_mg, &params, dt);

    let mut pool = spawn_pool(&mesh, 3, 1);
    pool.scatter(SLOT_C_MG, Arc::new(c_mg)).unwrap();
    pool.scatter(SLOT_C_FILM, Arc::new(c_film)).unwrap();
    pool.step_film(dt, &params).unwrap();
    let got = pool.gather(SLOT_C_FILM).unwrap();
    pool.shutdown();
    assert_eq!(got, expected);
}

#[test]
fn distributed_observables_match_sequential_integrals() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let vol_seq = levelset::solid_volume(&mesh, &state.phi);
    let area_seq = levelset::interface_area(&mesh, &state.phi);
    for workers in [1usize, 2, 5] {
        let mut pool = spawn_pool(&mesh, workers, 1);
        load_state(&mut pool, &state);
        let (vol, area) = pool.observables().unwrap();
        pool.shutdown();
        assert!((vol - vol_seq).abs() <= 1e-12 * vol_seq);
        assert!((area - area_seq).abs() <= 1e-12 * area_seq);
    }
}

#[test]
fn distributed_band_velocity_matches_sequential() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let h = mesh.min_edge_h();
    let locator = Arc::new(levelset::PointLocator::build(&mesh));

    // A non-trivial concentration profile around the interface.
    let c_mg: Vec<f64> = mesh
        .nodes()
        .iter()
        .zip(&state.phi)
        .map(|(p, &d)| if d >= 0.0 { params.mg_sol } else { (params.mg_sol + d).max(0.0) + 0.1 * p[0] })
        .collect();

    let sequential = levelset::interface_velocity(
        &mesh,
        &locator,
        &state.phi,
        &c_mg,
        &state.c_film,
        &params,
        h,
    )
    .unwrap();

    let fields = Arc::new(GlobalFields {
        c_mg: c_mg.clone(),
        c_film: state.c_film.clone(),
        phi: state.phi.clone(),
    });
    let mut pool = spawn_pool(&mesh, 4, 1);
    load_state(&mut pool, &state);
    let pairs = pool
        .band_velocity(&params, h, Arc::clone(&fields), Arc::clone(&locator))
        .unwrap();
    let band_nodes: Vec<usize> = pairs.iter().map(|&(g, _)| g).collect();
    let values: Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
    assert_eq!(band_nodes, levelset::band_nodes(&state.phi, h));
    let band = Arc::new(BandData {
        index: levelset::BandIndex::build(&mesh, &band_nodes),
        nodes: band_nodes,
        values,
    });
    pool.extend_velocity(band, h).unwrap();
    let v = pool.gather(SLOT_VELOCITY).unwrap();
    pool.shutdown();

    for (i, (a, b)) in v.iter().zip(&sequential).enumerate() {
        assert_eq!(a.to_bits(), b.to_bits(), "velocity differs at node {i}");
    }
}

#[test]
fn distributed_levelset_advance_matches_sequential() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let dt = 0.05;
    let speed = 0.3;
    let velocity = vec![speed; mesh.node_count()];
    let cfg = SolverConfig { rel_tol: 1e-10, ..Default::default() };

    let partition = partition_mesh(&mesh, 1, 0).unwrap();
    let dec = build_overlap(&mesh, &partition, 1);
    let (reference, _) =
        levelset::advance_levelset(&mesh, &dec, &state.phi, &velocity, dt, &cfg).unwrap();

    for workers in [1usize, 3] {
        let mut pool = spawn_pool(&mesh, workers, 1);
        load_state(&mut pool, &state);
        pool.scatter(SLOT_VELOCITY, Arc::new(velocity.clone())).unwrap();
        let b = pool.alloc();
        let x = pool.alloc();
        let g = pool.alloc();
        pool.compute_grad_norm(g).unwrap();
        pool.assemble_ls(dt, g, b, x).unwrap();
        pool.solve(true, b, x, SLOT_PHI, &cfg).unwrap();
        let phi = pool.gather(SLOT_PHI).unwrap();
        pool.shutdown();
        let diff = rel_diff_norm2(&reference, &phi);
        assert!(diff < 1e-8, "{workers} workers: {diff}");
    }
}

#[test]
fn fixed_worker_count_solves_are_bitwise_reproducible() {
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let dt = 0.025;
    let penalty = effective_penalty_weight(1e10, mesh.total_volume(), mesh.node_count());
    let cfg = SolverConfig::default();

    let run = || -> (Vec<f64>, usize) {
        let mut pool = spawn_pool(&mesh, 3, 1);
        load_state(&mut pool, &state);
        let b = pool.alloc();
        let x = pool.alloc();
        pool.assemble_transport(dt, &params, true, penalty, true, RasLocalSolver::Auto, b, x)
            .unwrap();
        let stats = pool.solve(false, b, x, SLOT_C_MG, &cfg).unwrap();
        let out = pool.gather(SLOT_C_MG).unwrap();
        pool.shutdown();
        (out, stats.iterations)
    };
    let (a, ia) = run();
    let (b, ib) = run();
    assert_eq!(ia, ib, "iteration counts differ between runs");
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn delta_zero_overlap_still_solves_correctly() {
    // With no overlap the Schwarz blocks are the non-overlapping parts; the
    // operator rows still come from the owned-node closure, so the solution
    // is unchanged.
    let mesh = Arc::new(test_mesh());
    let params = test_params();
    let state = initial_state(&mesh, &params);
    let dt = 0.025;
    let penalty = effective_penalty_weight(1e10, mesh.total_volume(), mesh.node_count());
    let cfg = SolverConfig { rel_tol: 1e-10, ..Default::default() };

    let partition = partition_mesh(&mesh, 1, 0).unwrap();
    let dec = build_overlap(&mesh, &partition, 1);
    let opts = MgStepOptions { solver: cfg, ..Default::default() };
    let reference = physics::step_mg(&mesh, &dec, &state, &params, dt, &opts).unwrap();

    let mut pool = spawn_pool(&mesh, 3, 0);
    load_state(&mut pool, &state);
    let b = pool.alloc();
    let x = pool.alloc();
    pool.assemble_transport(dt, &params, true, penalty, true, RasLocalSolver::Auto, b, x)
        .unwrap();
    pool.solve(false, b, x, SLOT_C_MG, &cfg).unwrap();
    pool.clamp_non_negative(SLOT_C_MG).unwrap();
    let c_mg = pool.gather(SLOT_C_MG).unwrap();
    pool.shutdown();
    assert!(rel_diff_norm2(&reference.c_mg, &c_mg) < 1e-7);
}
