//! Simulation orchestration: the coupled time loop, output emission, the
//! scaling harness and the fit runner.
//!
//! Each step runs, in order: transport coefficients are recomputed from the
//! film field and the implicit transport system is assembled and solved with
//! bulk nodes pinned; the film field takes its nodewise implicit update from
//! the fresh concentrations; the interface velocity is sampled on the narrow
//! band and extended; the level-set field advances by one implicit step; the
//! geometric observables are appended to the CSV. The orchestrator only
//! reduces, logs and writes files; all field arithmetic happens on the
//! subdomain workers.
//!
//! Phase timings are the orchestrator's wall time per bucket, which bounds
//! the per-worker clocks from above and so measures the critical path.

use crate::config::{MeshSource, SimConfig};
use crate::decomp::{build_overlap, partition_mesh};
use crate::error::{Error, Result};
use crate::levelset::{self, BandIndex, PointLocator};
use crate::mesh::{generate_box_mesh_with_budget, load_mesh, GeometryPrimitive, Mesh};
use crate::output::{self, ObservablesRow, ObservablesWriter};
use crate::par::{
    BandData, GlobalFields, Phase, Slot, WorkerPool, SLOT_C_FILM, SLOT_C_MG, SLOT_PHI,
    SLOT_VELOCITY,
};
use crate::perf::{self, ScalingMode, ScalingReport, TimingRow};
use crate::physics::{effective_penalty_weight, FieldState};
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

/// A configured, running simulation with persistent workers.
pub struct Simulation {
    mesh: Arc<Mesh>,
    pool: WorkerPool,
    locator: Arc<PointLocator>,
    cfg: SimConfig,
    penalty_abs: f64,
    h: f64,
    b_slot: Slot,
    x_slot: Slot,
    grad_slot: Slot,
    time: f64,
    step_index: usize,
    initial_solid_volume: f64,
}

/// Outcome of one coupled step.
pub struct StepReport {
    pub mg_iterations: usize,
    pub mg_residual: f64,
    pub mg_solve_s: f64,
    pub ls_iterations: usize,
    pub ls_residual: f64,
    pub ls_solve_s: f64,
    pub clamped_negative: usize,
    /// Seconds per phase: [other, transport, film, level set].
    pub phase_seconds: [f64; 4],
    pub observables: ObservablesRow,
    /// Range of band gradient magnitudes before the advance.
    pub band_gradient_range: Option<(f64, f64)>,
}

impl StepReport {
    /// Per-solve log lines in the `pde=<name> iters=<n> resid=<r> t=<s>`
    /// format the performance tooling reads.
    pub fn solve_log_lines(&self) -> [String; 3] {
        [
            format!(
                "pde=mg iters={} resid={:e} t={:.6}",
                self.mg_iterations, self.mg_residual, self.mg_solve_s
            ),
            format!(
                "pde=film iters=0 resid=0 t={:.6}",
                self.phase_seconds[Phase::FilmPde as usize]
            ),
            format!(
                "pde=ls iters={} resid={:e} t={:.6}",
                self.ls_iterations, self.ls_residual, self.ls_solve_s
            ),
        ]
    }
}

impl Simulation {
    pub fn new(cfg: &SimConfig) -> Result<Simulation> {
        cfg.validate()?;
        let (mesh, inner) = build_mesh(&cfg.mesh)?;
        let mesh = Arc::new(mesh);
        let partition = partition_mesh(&mesh, cfg.workers, 0)?;
        let dec = Arc::new(build_overlap(&mesh, &partition, cfg.overlap));
        let mut pool =
            WorkerPool::spawn(Arc::clone(&mesh), dec, cfg.solver_ls.ras_local_solver)?;
        let locator = Arc::new(PointLocator::build(&mesh));

        let phi = levelset::init_signed_distance(&mesh, &inner)?;
        let state = FieldState::initial(phi, &cfg.chem, cfg.medium_c0);
        pool.scatter(SLOT_C_MG, Arc::new(state.c_mg))?;
        pool.scatter(SLOT_C_FILM, Arc::new(state.c_film))?;
        pool.scatter(SLOT_PHI, Arc::new(state.phi))?;
        pool.set_zero(SLOT_VELOCITY)?;

        let penalty_abs =
            effective_penalty_weight(cfg.penalty_weight, mesh.total_volume(), mesh.node_count());
        let (initial_solid_volume, _) = pool.observables()?;
        let b_slot = pool.alloc();
        let x_slot = pool.alloc();
        let grad_slot = pool.alloc();
        let h = mesh.min_edge_h();
        Ok(Simulation {
            mesh,
            pool,
            locator,
            cfg: cfg.clone(),
            penalty_abs,
            h,
            b_slot,
            x_slot,
            grad_slot,
            time: 0.0,
            step_index: 0,

            initial_solid_volume,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    pub fn initial_solid_volume(&self) -> f64 {
        self.initial_solid_volume
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Gather the distributed state into plain global vectors.
    pub fn gather_state(&mut self) -> Result<FieldState> {
        Ok(FieldState {
            c_mg: self.pool.gather(SLOT_C_MG)?,
            c_film: self.pool.gather(SLOT_C_FILM)?,
            phi: self.pool.gather(SLOT_PHI)?,
            time: self.time,
        })
    }

    /// One coupled step of all three equations plus observables.
    pub fn step(&mut self) -> Result<StepReport> {
        let dt = self.cfg.dt;
        let params = self.cfg.chem;
        let step = self.step_index;
        let mut phase_seconds = [0.0f64; 4];

        // Transport: coefficients, assembly, Schwarz setup, solve, clamp.
        let t0 = Instant::now();
        self.pool.set_phase(Phase::MgPde)?;
        self.pool
            .assemble_transport(
                dt,
                &params,
                true,
                self.penalty_abs,
                self.cfg.lump_mass,
                self.cfg.solver_mg.ras_local_solver,
                self.b_slot,
                self.x_slot,
            )
            .map_err(|e| e.in_step(step, "transport"))?;
        let mg_stats = self
            .pool
            .solve(false, self.b_slot, self.x_slot, SLOT_C_MG, &self.cfg.solver_mg)
            .map_err(|e| e.in_step(step, "transport"))?;
        let clamped = self.pool.clamp_non_negative(SLOT_C_MG)?;
        phase_seconds[Phase::MgPde as usize] = t0.elapsed().as_secs_f64();

        // Film: nodewise implicit update from the fresh concentrations.
        let t0 = Instant::now();
        self.pool.set_phase(Phase::FilmPde)?;
        self.pool.step_film(dt, &params).map_err(|e| e.in_step(step, "film"))?;
        phase_seconds[Phase::FilmPde as usize] = t0.elapsed().as_secs_f64();

        // Level set: band velocity, extension, implicit advance.
        let t0 = Instant::now();
        self.pool.set_phase(Phase::LsPde)?;
        let band_range = self.pool.band_grad_range(self.h)?;
        let c_mg = self.pool.gather(SLOT_C_MG)?;
        let c_film = self.pool.gather(SLOT_C_FILM)?;
        let phi = self.pool.gather(SLOT_PHI)?;
        let fields = Arc::new(GlobalFields { c_mg, c_film, phi });
        let pairs = self
            .pool
            .band_velocity(&params, self.h, Arc::clone(&fields), Arc::clone(&self.locator))
            .map_err(|e| e.in_step(step, "level set"))?;
        let ls_stats = if pairs.is_empty() {
            // No interface in the domain: the field is stationary.
            crate::linsolve::SolveStats {
                iterations: 0,
                residual: 0.0,
                wall_s: 0.0,
                residual_history: Vec::new(),
            }
        } else {
            let nodes: Vec<usize> = pairs.iter().map(|&(g, _)| g).collect();
            let values: Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
            let band = Arc::new(BandData {
                index: BandIndex::build(&self.mesh, &nodes),
                nodes,
                values,
            });
            self.pool.extend_velocity(band, self.h)?;
            self.pool.compute_grad_norm(self.grad_slot)?;
            self.pool
                .assemble_ls(dt, self.grad_slot, self.b_slot, self.x_slot)
                .map_err(|e| e.in_step(step, "level set"))?;
            self.pool
                .solve(true, self.b_slot, self.x_slot, SLOT_PHI, &self.cfg.solver_ls)
                .map_err(|e| e.in_step(step, "level set"))?
        };
        phase_seconds[Phase::LsPde as usize] = t0.elapsed().as_secs_f64();

        // Observables.
        let t0 = Instant::now();
        self.pool.set_phase(Phase::Other)?;
        let (solid_volume, area) = self.pool.observables()?;
        let mass_lost = levelset::mass_loss(self.initial_solid_volume, solid_volume, &params);
        let hydrogen = if area > 0.0 {
            levelset::hydrogen_volume(mass_lost, area, &params)?
        } else {
            0.0
        };
        self.time += dt;
        self.step_index += 1;
        let observables = ObservablesRow {
            time_h: self.time,
            mass_lost_g: mass_lost,
            hydrogen,
            area_mm2: area,
            solid_volume_mm3: solid_volume,
        };
        phase_seconds[Phase::Other as usize] = t0.elapsed().as_secs_f64();
        // Drain the per-worker clocks so long runs don't accumulate.
        let _ = self.pool.take_timers()?;

        Ok(StepReport {
            mg_iterations: mg_stats.iterations,
            mg_residual: mg_stats.residual,
            mg_solve_s: mg_stats.wall_s,
            ls_iterations: ls_stats.iterations,
            ls_residual: ls_stats.residual,
            ls_solve_s: ls_stats.wall_s,
            clamped_negative: clamped,
            phase_seconds,
            observables,
            band_gradient_range: band_range,
        })
    }

    pub fn shutdown(self) {
        self.pool.shutdown();
    }
}

fn build_mesh(source: &MeshSource) -> Result<(Mesh, GeometryPrimitive)> {
    match source {
        MeshSource::Generate { outer, inner, coarse_h, fine_h, max_elements } => Ok((
            generate_box_mesh_with_budget(*outer, *inner, *coarse_h, *fine_h, *max_elements)?,
            *inner,
        )),
        MeshSource::File { path, inner } => Ok((load_mesh(path)?, *inner)),
    }
}

/// Summary returned by [`run_simulation`].
pub struct RunSummary {
    pub steps: usize,
    pub final_mass_lost_g: f64,
    pub final_hydrogen: f64,
    pub final_solid_volume_mm3: f64,
    pub wall_s: f64,
}

/// Number of steps covering `end_time` in increments of `dt`.
pub fn step_count(dt: f64, end_time: f64) -> usize {
    ((end_time / dt) + 1e-9).floor().max(1.0) as usize
}

/// Full run: time loop plus `observables.csv`, `timings.csv` and VTK
/// snapshots under the configured output directory.
pub fn run_simulation(cfg: &SimConfig, log: &mut dyn Write) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    write!(log, "{}", cfg.echo())?;
    if let Some(w) = perf::hardware_thread_warning(cfg.workers) {
        writeln!(log, "{w}")?;
    }

    let start = Instant::now();
    let mut sim = Simulation::new(cfg)?;
    writeln!(
        log,
        "mesh: {} nodes, {} elements, h = {}",
        sim.mesh().node_count(),
        sim.mesh().element_count(),
        sim.mesh().min_edge_h()
    )?;

    let steps = step_count(cfg.dt, cfg.end_time);
    let mut observables = ObservablesWriter::create(cfg.out_dir.join("observables.csv"))?;
    let mut timing_rows: Vec<TimingRow> = Vec::with_capacity(steps);
    let mut last = None;

    for k in 0..steps {
        let report = sim.step()?;
        for line in report.solve_log_lines() {
            writeln!(log, "step {k}: {line}")?;
        }
        if report.clamped_negative > 0 {
            writeln!(log, "step {k}: clamped {} negative concentrations", report.clamped_negative)?;
        }
        if report.observables.area_mm2 <= 0.0 {
            writeln!(log, "step {k}: interface area is zero (single-sign field)")?;
        }
        if let Some((_, hi)) = report.band_gradient_range {
            // Without re-distancing the field may flatten or steepen; the
            // peak band gradient staying in [0.2, 5] says it has not.
            if !(0.2..=5.0).contains(&hi) {
                writeln!(
                    log,
                    "step {k}: warning: peak band gradient {hi:.3} left the guard range [0.2, 5]"
                )?;
            }
        }
        observables.append(&report.observables)?;
        observables.flush()?;
        timing_rows.push(TimingRow {
            workers: cfg.workers,
            step: k,
            ls_pde_s: report.phase_seconds[Phase::LsPde as usize],
            mg_pde_s: report.phase_seconds[Phase::MgPde as usize],
            film_pde_s: report.phase_seconds[Phase::FilmPde as usize],
            total_s: report.phase_seconds[Phase::LsPde as usize]
                + report.phase_seconds[Phase::MgPde as usize]
                + report.phase_seconds[Phase::FilmPde as usize],
        });
        if cfg.snapshot_every > 0 && (k + 1) % cfg.snapshot_every == 0 {
            let state = sim.gather_state()?;
            output::write_vtk(
                cfg.out_dir.join(format!("snapshot_{:06}.vtk", k + 1)),
                sim.mesh(),
                &[("phi", &state.phi), ("c_mg", &state.c_mg), ("c_film", &state.c_film)],
                &[],
            )?;
        }
        last = Some(report.observables);
    }
    perf::write_timings_csv(&timing_rows, cfg.out_dir.join("timings.csv"))?;

    let last = last.expect("at least one step");
    let summary = RunSummary {
        steps,
        final_mass_lost_g: last.mass_lost_g,
        final_hydrogen: last.hydrogen,
        final_solid_volume_mm3: last.solid_volume_mm3,
        wall_s: start.elapsed().as_secs_f64(),
    };
    writeln!(
        log,
        "done: {} steps, mass lost {} g, evolved gas {} m^3/m^2, wall {:.2}s",
        summary.steps, summary.final_mass_lost_g, summary.final_hydrogen, summary.wall_s
    )?;
    sim.shutdown();
    Ok(summary)
}

/// Strong or weak scaling sweep over `worker_counts`; the weak preset grows
/// the domain along x proportionally to the worker count.
pub fn run_scaling(
    cfg: &SimConfig,
    mode: ScalingMode,
    worker_counts: &[usize],
    log: &mut dyn Write,
) -> Result<(Vec<TimingRow>, ScalingReport)> {
    if worker_counts.is_empty() {
        return Err(Error::Argument("scaling needs at least one worker count".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut rows: Vec<TimingRow> = Vec::new();
    for &n in worker_counts {
        let mut variant = cfg.clone();
        variant.workers = n;
        if mode == ScalingMode::Weak {
            variant.mesh = scale_mesh_along_x(&cfg.mesh, n as f64)?;
        }
        if let Some(w) = perf::hardware_thread_warning(n) {
            writeln!(log, "{w}")?;
        }
        let mut sim = Simulation::new(&variant)?;
        writeln!(
            log,
            "workers {n}: {} nodes, {} elements",
            sim.mesh().node_count(),
            sim.mesh().element_count()
        )?;
        // One warmup step outside the measurement window.
        sim.step()?;
        for k in 0..cfg.measure_steps {
            let report = sim.step()?;
            for line in report.solve_log_lines() {
                writeln!(log, "workers {n} step {k}: {line}")?;
            }
            rows.push(TimingRow {
                workers: n,
                step: k,
                ls_pde_s: report.phase_seconds[Phase::LsPde as usize],
                mg_pde_s: report.phase_seconds[Phase::MgPde as usize],
                film_pde_s: report.phase_seconds[Phase::FilmPde as usize],
                total_s: report.phase_seconds[Phase::LsPde as usize]
                    + report.phase_seconds[Phase::MgPde as usize]
                    + report.phase_seconds[Phase::FilmPde as usize],
            });
        }
        sim.shutdown();
    }
    perf::write_timings_csv(&rows, cfg.out_dir.join("timings.csv"))?;
    let report = perf::build_report(&rows, mode)?;
    std::fs::write(cfg.out_dir.join("scaling_report.txt"), report.table())?;
    std::fs::write(cfg.out_dir.join("scaling_report.csv"), report.to_csv())?;
    write!(log, "{}", report.table())?;
    Ok((rows, report))
}

fn scale_mesh_along_x(source: &MeshSource, factor: f64) -> Result<MeshSource> {
    match source {
        MeshSource::Generate { outer, inner, coarse_h, fine_h, max_elements } => {
            let scale_box = |p: &GeometryPrimitive| -> Result<GeometryPrimitive> {
                match p {
                    GeometryPrimitive::Box { extents } => Ok(GeometryPrimitive::Box {
                        extents: [extents[0] * factor, extents[1], extents[2]],
                    }),
                    GeometryPrimitive::Sphere { .. } => Err(Error::Argument(
                        "weak scaling preset needs box primitives".into(),
                    )),
                }
            };
            Ok(MeshSource::Generate {
                outer: scale_box(outer)?,
                inner: scale_box(inner)?,
                coarse_h: *coarse_h,
                fine_h: *fine_h,
                max_elements: *max_elements,
            })
        }
        MeshSource::File { .. } => Err(Error::Argument(
            "weak scaling preset needs a generated mesh".into(),
        )),
    }
}

/// Fit a sequential fraction to a timings CSV; speedups follow the law's
/// natural mode (fixed problem for the strong-scaling law, grown problem for
/// the weak one).
pub fn run_fit(input: &std::path::Path, law: perf::ScalingLaw) -> Result<(f64, String)> {
    let rows = perf::read_timings_csv(input)?;
    let records = perf::median_records(&rows);
    let mode = match law {
        perf::ScalingLaw::Amdahl => ScalingMode::Strong,
        perf::ScalingLaw::Gustafson => ScalingMode::Weak,
    };
    let speedups = perf::speedups(&records, mode)?;
    let f = perf::fit_fraction(&speedups, law)?;
    let name = match law {
        perf::ScalingLaw::Amdahl => "amdahl",
        perf::ScalingLaw::Gustafson => "gustafson",
    };
    let mut text = String::new();
    use std::fmt::Write as _;
    for &(n, s) in &speedups {
        let _ = writeln!(text, "workers {n}: speedup {s:.4}");
    }
    let _ = writeln!(text, "f_{name} = {f:.4}");
    Ok((f, text))
}
