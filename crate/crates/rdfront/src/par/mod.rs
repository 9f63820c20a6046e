//! Persistent subdomain workers with a message-passing contract.
//!
//! One thread per subdomain owns its local matrices, factorizations and
//! vector slots. The orchestrator broadcasts commands and combines replies
//! in worker-id order, so every reduction is deterministic; ghost values
//! move directly between workers over per-pair channels before each operator
//! application. Vectors are stored on each worker's halo (the nodes of its
//! overlap mesh plus the closure elements of its owned nodes) and kept
//! consistent: every worker's copy of a shared node holds the owner's value.
//!
//! Pointwise updates of consistent vectors stay consistent without
//! communication; matrix-vector products and local solves write owned
//! entries and refresh ghosts by one exchange.

use crate::decomp::OverlapDecomposition;
use crate::error::{Error, Result};
use crate::fem::{Assembler, AssemblyInput, PenaltyEntry};
use crate::levelset::{BandIndex, PointLocator};
use crate::linsolve::{gmres, KrylovWorkspace, LocalSolver, RasLocalSolver, SolveStats, SolverConfig};
use crate::mesh::Mesh;
use crate::physics::ChemParams;
use crate::util::CompensatedSum;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

/// Distributed vector handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot(pub usize);

/// Well-known state slots.
pub const SLOT_C_MG: Slot = Slot(0);
pub const SLOT_C_FILM: Slot = Slot(1);
pub const SLOT_PHI: Slot = Slot(2);
pub const SLOT_VELOCITY: Slot = Slot(3);
const FIRST_FREE_SLOT: usize = 4;

/// Timing buckets accumulated per worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Other = 0,
    MgPde = 1,
    FilmPde = 2,
    LsPde = 3,
}

/// Global snapshot shared with workers for interface sampling. Offset
/// points can land in any subdomain, so sampling reads whole-domain fields.
pub struct GlobalFields {
    pub c_mg: Vec<f64>,
    pub c_film: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Merged band velocities shared with workers for constant extension.
pub struct BandData {
    /// Band node ids, ascending.
    pub nodes: Vec<usize>,
    /// Velocity per band node, parallel to `nodes`.
    pub values: Vec<f64>,
    pub index: BandIndex,
}

enum Command {
    SetZero(Slot),
    Copy { dst: Slot, src: Slot },
    Scale { v: Slot, a: f64 },
    Axpy { y: Slot, a: f64, x: Slot },
    DotPartial { x: Slot, y: Slot },
    Exchange(Slot),
    Scatter { v: Slot, data: Arc<Vec<f64>> },
    GatherOwned(Slot),
    AssembleTransport {
        dt: f64,
        params: ChemParams,
        pin_bulk: bool,
        penalty_weight: f64,
        lump_mass: bool,
        local_solver: RasLocalSolver,
        b: Slot,
        x: Slot,
    },
    AssembleLs {
        dt: f64,
        grad_norm: Slot,
        b: Slot,
        x: Slot,
    },
    /// Volume-averaged |grad phi| at owned nodes, exchanged to the halo.
    ComputeGradNorm { out: Slot },
    /// (min, max) of per-element |grad phi| over owned elements touching the
    /// narrow band.
    BandGradRange { h: f64 },
    MatVec { y: Slot, x: Slot, ls: bool },
    PrecApply { z: Slot, r: Slot, ls: bool },
    Unscale { v: Slot, ls: bool },
    ClampNonNegative(Slot),
    StepFilm { dt: f64, params: ChemParams },
    BandVelocity {
        params: ChemParams,
        h: f64,
        fields: Arc<GlobalFields>,
        locator: Arc<PointLocator>,
    },
    ExtendVelocity { band: Arc<BandData>, h: f64 },
    Observables,
    SetPhase(u8),
    TakeTimers,
    Shutdown,
}

enum Reply {
    Done(usize),
    Scalar(usize, f64),
    Values(usize, Vec<f64>),
    BandPairs(usize, Vec<(usize, f64)>),
    Sums(usize, [(f64, f64); 2]),
    Range(usize, Option<(f64, f64)>),
    Timers(usize, [f64; 4]),
    Count(usize, usize),
    Failed(usize, String),
}

impl Reply {
    fn worker(&self) -> usize {
        match *self {
            Reply::Done(w)
            | Reply::Scalar(w, _)
            | Reply::Values(w, _)
            | Reply::BandPairs(w, _)
            | Reply::Sums(w, _)
            | Reply::Range(w, _)
            | Reply::Timers(w, _)
            | Reply::Count(w, _)
            | Reply::Failed(w, _) => w,
        }
    }
}

/// Communication plan derived from the decomposition.
struct PoolPlan {
    owned: Vec<Vec<usize>>,
    halo: Vec<Vec<usize>>,
    row_elements: Vec<Vec<usize>>,
    /// `[i][j]`: halo-local indices of worker i's values destined for j.
    send_lists: Vec<Vec<Vec<u32>>>,
    /// `[i][j]`: halo-local indices of worker i filled from j.
    recv_lists: Vec<Vec<Vec<u32>>>,
}

fn build_plan(mesh: &Mesh, dec: &OverlapDecomposition) -> PoolPlan {
    let n = dec.n_parts();
    let owner = dec.node_owner();
    let mut owned = vec![Vec::new(); n];
    for (g, &o) in owner.iter().enumerate() {
        owned[o as usize].push(g);
    }
    let mut row_elements = Vec::with_capacity(n);
    let mut halo = Vec::with_capacity(n);
    for i in 0..n {
        let mut elems: Vec<usize> = owned[i]
            .iter()
            .flat_map(|&g| mesh.elements_of_node(g).iter().map(|&e| e as usize))
            .collect();
        elems.sort_unstable();
        elems.dedup();
        let mut nodes: Vec<usize> = elems
            .iter()
            .flat_map(|&e| mesh.tets()[e].iter().copied())
            .chain(dec.subdomain(i).local_nodes.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        row_elements.push(elems);
        halo.push(nodes);
    }
    let mut send_lists = vec![vec![Vec::new(); n]; n];
    let mut recv_lists = vec![vec![Vec::new(); n]; n];
    for j in 0..n {
        for (local, &g) in halo[j].iter().enumerate() {
            let o = owner[g] as usize;
            if o != j {
                let in_owner = halo[o].binary_search(&g).expect("owner halo covers owned node");
                send_lists[o][j].push(in_owner as u32);
                recv_lists[j][o].push(local as u32);
            }
        }
    }
    PoolPlan { owned, halo, row_elements, send_lists, recv_lists }
}

/// Orchestrator handle over the persistent subdomain workers.
pub struct WorkerPool {
    n: usize,
    cmd_tx: Vec<Sender<Command>>,
    reply_rx: Receiver<Reply>,
    handles: Vec<std::thread::JoinHandle<()>>,
    owned: Vec<Vec<usize>>,
    n_global: usize,
    next_slot: usize,
    free_slots: Vec<usize>,
}

impl WorkerPool {
    /// Spawn one worker per subdomain. Workers build their assemblers and
    /// the constant level-set context during startup.
    pub fn spawn(
        mesh: Arc<Mesh>,
        dec: Arc<OverlapDecomposition>,
        ls_local_solver: RasLocalSolver,
    ) -> Result<WorkerPool> {
        let n = dec.n_parts();
        let plan = build_plan(&mesh, &dec);

        // Per-pair ghost channels.
        let mut peer_tx: Vec<Vec<Option<Sender<Vec<f64>>>>> = (0..n)
            .map(|_| (0..n).map(|_| None).collect())
            .collect();
        let mut peer_rx: Vec<Vec<Option<Receiver<Vec<f64>>>>> = (0..n)
            .map(|_| (0..n).map(|_| None).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                if i != j && !plan.send_lists[i][j].is_empty() {
                    let (tx, rx) = channel();
                    peer_tx[i][j] = Some(tx);
                    peer_rx[j][i] = Some(rx);
                }
            }
        }

        let (reply_tx, reply_rx) = channel::<Reply>();
        let mut cmd_tx = Vec::with_capacity(n);
        let mut handles = Vec::with_capacity(n);
        let mut peer_tx_iter = peer_tx.into_iter();
        let mut peer_rx_iter = peer_rx.into_iter();
        for i in 0..n {
            let (tx, rx) = channel::<Command>();
            cmd_tx.push(tx);
            let ctx = WorkerInit {
                id: i,
                mesh: Arc::clone(&mesh),
                dec: Arc::clone(&dec),
                owned: plan.owned[i].clone(),
                halo: plan.halo[i].clone(),
                row_elements: plan.row_elements[i].clone(),
                send_lists: plan.send_lists[i].clone(),
                recv_lists: plan.recv_lists[i].clone(),
                peer_tx: peer_tx_iter.next().unwrap(),
                peer_rx: peer_rx_iter.next().unwrap(),
                ls_local_solver,
            };
            let reply = reply_tx.clone();
            handles.push(
                std::thread::Builder::new()
                    .name(format!("subdomain-{i}"))
                    .spawn(move || worker_main(ctx, rx, reply))
                    .expect("spawn worker thread"),
            );
        }
        drop(reply_tx);

        let pool = WorkerPool {
            n,
            cmd_tx,
            reply_rx,
            handles,
            owned: plan.owned,
            n_global: mesh.node_count(),
            next_slot: FIRST_FREE_SLOT,
            free_slots: Vec::new(),
        };
        // Workers reply Done once their startup assembly succeeded.
        pool.collect_done()?;
        Ok(pool)
    }

    pub fn n_workers(&self) -> usize {
        self.n
    }

    fn broadcast(&self, make: impl Fn() -> Command) {
        for tx in &self.cmd_tx {
            // A dead worker surfaces as an error in collect(); don't panic
            // here, Drop also broadcasts.
            let _ = tx.send(make());
        }
    }

    fn collect(&self) -> Result<Vec<Reply>> {
        let mut replies: Vec<Option<Reply>> = (0..self.n).map(|_| None).collect();
        for _ in 0..self.n {
            let r = self
                .reply_rx
                .recv()
                .map_err(|_| Error::Validation("a subdomain worker terminated".into()))?;
            let w = r.worker();
            replies[w] = Some(r);
        }
        let replies: Vec<Reply> = replies.into_iter().map(Option::unwrap).collect();
        for r in &replies {
            if let Reply::Failed(w, msg) = r {
                return Err(Error::Worker { worker: *w, msg: msg.clone() });
            }
        }
        Ok(replies)
    }

    fn collect_done(&self) -> Result<()> {
        self.collect().map(|_| ())
    }

    pub fn alloc(&mut self) -> Slot {
        let id = self.free_slots.pop().unwrap_or_else(|| {
            let id = self.next_slot;
            self.next_slot += 1;
            id
        });
        Slot(id)
    }

    pub fn free(&mut self, s: Slot) {
        assert!(s.0 >= FIRST_FREE_SLOT, "state slots are never freed");
        self.free_slots.push(s.0);
    }

    pub fn set_zero(&mut self, v: Slot) -> Result<()> {
        self.broadcast(|| Command::SetZero(v));
        self.collect_done()
    }

    pub fn copy(&mut self, dst: Slot, src: Slot) -> Result<()> {
        self.broadcast(|| Command::Copy { dst, src });
        self.collect_done()
    }

    pub fn scale(&mut self, v: Slot, a: f64) -> Result<()> {
        self.broadcast(|| Command::Scale { v, a });
        self.collect_done()
    }

    pub fn axpy(&mut self, y: Slot, a: f64, x: Slot) -> Result<()> {
        self.broadcast(|| Command::Axpy { y, a, x });
        self.collect_done()
    }

    /// Deterministic global dot product: per-worker partials over owned
    /// nodes combined in worker order.
    pub fn dot(&mut self, x: Slot, y: Slot) -> Result<f64> {
        self.broadcast(|| Command::DotPartial { x, y });
        let replies = self.collect()?;
        let mut acc = 0.0;
        for r in replies {
            if let Reply::Scalar(_, v) = r {
                acc += v;
            }
        }
        Ok(acc)
    }

    pub fn scatter(&mut self, v: Slot, data: Arc<Vec<f64>>) -> Result<()> {
        assert_eq!(data.len(), self.n_global);
        self.broadcast(|| Command::Scatter { v, data: Arc::clone(&data) });
        self.collect_done()
    }

    pub fn gather(&mut self, v: Slot) -> Result<Vec<f64>> {
        self.broadcast(|| Command::GatherOwned(v));
        let replies = self.collect()?;
        let mut global = vec![0.0; self.n_global];
        for r in replies {
            if let Reply::Values(w, vals) = r {
                for (k, &g) in self.owned[w].iter().enumerate() {
                    global[g] = vals[k];
                }
            }
        }
        Ok(global)
    }

    pub fn exchange(&mut self, v: Slot) -> Result<()> {
        self.broadcast(|| Command::Exchange(v));
        self.collect_done()
    }

    /// Assemble, scale and factor the transport system; returns the scaled
    /// right-hand side and warm-start slots for [`WorkerPool::solve`].
    #[allow(clippy::too_many_arguments)]
    pub fn assemble_transport(
        &mut self,
        dt: f64,
        params: &ChemParams,
        pin_bulk: bool,
        penalty_weight: f64,
        lump_mass: bool,
        local_solver: RasLocalSolver,
        b: Slot,
        x: Slot,
    ) -> Result<()> {
        let params = *params;
        self.broadcast(|| Command::AssembleTransport {
            dt,
            params,
            pin_bulk,
            penalty_weight,
            lump_mass,
            local_solver,
            b,
            x,
        });
        self.collect_done()
    }

    pub fn assemble_ls(&mut self, dt: f64, grad_norm: Slot, b: Slot, x: Slot) -> Result<()> {
        self.broadcast(|| Command::AssembleLs { dt, grad_norm, b, x });
        self.collect_done()
    }

    /// Volume-averaged |grad phi| per node into a halo-consistent slot.
    pub fn compute_grad_norm(&mut self, out: Slot) -> Result<()> {
        self.broadcast(|| Command::ComputeGradNorm { out });
        self.collect_done()
    }

    /// Range of per-element gradient magnitudes on the narrow band, reduced
    /// over workers; `None` when no owned element touches the band.
    pub fn band_grad_range(&mut self, h: f64) -> Result<Option<(f64, f64)>> {
        self.broadcast(|| Command::BandGradRange { h });
        let replies = self.collect()?;
        let mut out: Option<(f64, f64)> = None;
        for r in replies {
            if let Reply::Range(_, Some((lo, hi))) = r {
                out = Some(match out {
                    None => (lo, hi),
                    Some((a, b)) => (a.min(lo), b.max(hi)),
                });
            }
        }
        Ok(out)
    }

    /// Run GMRES over the distributed scaled system prepared by one of the
    /// assemble commands, then map the solution back and store it in `state`.
    pub fn solve(
        &mut self,
        ls: bool,
        b: Slot,
        x: Slot,
        state: Slot,
        cfg: &SolverConfig,
    ) -> Result<SolveStats> {
        let stats = {
            let mut ws = PoolWorkspace { pool: self, ls };
            gmres(&mut ws, x, b, cfg)
        };
        let stats = match stats {
            Ok(s) => s,
            Err(crate::linsolve::SolveError::MaxIters { iterations, residual, .. }) => {
                // Keep the best iterate retrievable by the caller.
                self.broadcast(|| Command::Unscale { v: x, ls });
                self.collect_done()?;
                self.copy(state, x)?;
                return Err(Error::Solve(crate::linsolve::SolveError::MaxIters {
                    iterations,
                    residual,
                    best: self.gather(state)?,
                }));
            }
            Err(e) => return Err(Error::Solve(e)),
        };
        self.broadcast(|| Command::Unscale { v: x, ls });
        self.collect_done()?;
        self.copy(state, x)?;
        Ok(stats)
    }

    /// Clamp a state slot to non-negative values; returns how many owned
    /// entries were clamped across all workers.
    pub fn clamp_non_negative(&mut self, v: Slot) -> Result<usize> {
        self.broadcast(|| Command::ClampNonNegative(v));
        let replies = self.collect()?;
        let mut count = 0;
        for r in replies {
            if let Reply::Count(_, c) = r {
                count += c;
            }
        }
        Ok(count)
    }

    pub fn step_film(&mut self, dt: f64, params: &ChemParams) -> Result<()> {
        let params = *params;
        self.broadcast(|| Command::StepFilm { dt, params });
        self.collect_done()
    }

    /// Velocities at owned band nodes, merged and sorted by node id.
    pub fn band_velocity(
        &mut self,
        params: &ChemParams,
        h: f64,
        fields: Arc<GlobalFields>,
        locator: Arc<PointLocator>,
    ) -> Result<Vec<(usize, f64)>> {
        let params = *params;
        self.broadcast(|| Command::BandVelocity {
            params,
            h,
            fields: Arc::clone(&fields),
            locator: Arc::clone(&locator),
        });
        let replies = self.collect()?;
        let mut pairs = Vec::new();
        for r in replies {
            if let Reply::BandPairs(_, mut p) = r {
                pairs.append(&mut p);
            }
        }
        pairs.sort_by_key(|&(g, _)| g);
        Ok(pairs)
    }

    pub fn extend_velocity(&mut self, band: Arc<BandData>, h: f64) -> Result<()> {
        self.broadcast(|| Command::ExtendVelocity { band: Arc::clone(&band), h });
        self.collect_done()
    }

    /// (solid volume, interface area) over non-ghost elements, reduced in
    /// worker order with compensated partials.
    pub fn observables(&mut self) -> Result<(f64, f64)> {
        self.broadcast(|| Command::Observables);
        let replies = self.collect()?;
        let mut vol = CompensatedSum::new();
        let mut area = CompensatedSum::new();
        for r in replies {
            if let Reply::Sums(_, [v, a]) = r {
                vol.merge(&CompensatedSum::from_parts(v.0, v.1));
                area.merge(&CompensatedSum::from_parts(a.0, a.1));
            }
        }
        Ok((vol.value(), area.value()))
    }

    pub fn set_phase(&mut self, phase: Phase) -> Result<()> {
        let p = phase as u8;
        self.broadcast(|| Command::SetPhase(p));
        self.collect_done()
    }

    /// Per-bucket seconds as the max over workers (critical path), and reset.
    pub fn take_timers(&mut self) -> Result<[f64; 4]> {
        self.broadcast(|| Command::TakeTimers);
        let replies = self.collect()?;
        let mut acc = [0.0f64; 4];
        for r in replies {
            if let Reply::Timers(_, t) = r {
                for k in 0..4 {
                    acc[k] = acc[k].max(t[k]);
                }
            }
        }
        Ok(acc)
    }

    pub fn shutdown(mut self) {
        self.broadcast(|| Command::Shutdown);
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        if !self.handles.is_empty() {
            self.broadcast(|| Command::Shutdown);
            for h in self.handles.drain(..) {
                let _ = h.join();
            }
        }
    }
}

/// Krylov workspace over pool slots; `ls` selects which prepared operator
/// context the matrix and preconditioner commands address.
struct PoolWorkspace<'a> {
    pool: &'a mut WorkerPool,
    ls: bool,
}

impl KrylovWorkspace for PoolWorkspace<'_> {
    type Handle = Slot;

    fn alloc(&mut self) -> Slot {
        let s = self.pool.alloc();
        self.pool.set_zero(s).expect("worker pool alive");
        s
    }

    fn release(&mut self, h: Slot) {
        self.pool.free(h);
    }

    fn copy(&mut self, dst: Slot, src: Slot) {
        self.pool.copy(dst, src).expect("worker pool alive");
    }

    fn set_zero(&mut self, x: Slot) {
        self.pool.set_zero(x).expect("worker pool alive");
    }

    fn scale(&mut self, x: Slot, a: f64) {
        self.pool.scale(x, a).expect("worker pool alive");
    }

    fn axpy(&mut self, y: Slot, a: f64, x: Slot) {
        self.pool.axpy(y, a, x).expect("worker pool alive");
    }

    fn dot(&mut self, x: Slot, y: Slot) -> f64 {
        self.pool.dot(x, y).expect("worker pool alive")
    }

    fn apply_operator(&mut self, y: Slot, x: Slot) {
        let ls = self.ls;
        self.pool.broadcast(|| Command::MatVec { y, x, ls });
        self.pool.collect_done().expect("worker pool alive");
    }

    fn apply_preconditioner(&mut self, z: Slot, r: Slot) {
        let ls = self.ls;
        self.pool.broadcast(|| Command::PrecApply { z, r, ls });
        self.pool.collect_done().expect("worker pool alive");
    }
}

// ---------------------------------------------------------------------------
// Worker side
// ---------------------------------------------------------------------------

struct WorkerInit {
    id: usize,
    mesh: Arc<Mesh>,
    dec: Arc<OverlapDecomposition>,
    owned: Vec<usize>,
    halo: Vec<usize>,
    row_elements: Vec<usize>,
    send_lists: Vec<Vec<u32>>,
    recv_lists: Vec<Vec<u32>>,
    peer_tx: Vec<Option<Sender<Vec<f64>>>>,
    peer_rx: Vec<Option<Receiver<Vec<f64>>>>,
    ls_local_solver: RasLocalSolver,
}

/// One operator context: row matrix over owned rows, its diagonal scaling,
/// and the factored local Schwarz block.
struct OperatorContext {
    assembler: Assembler,
    solver: Option<LocalSolver>,
    /// Scaled right-hand-side factors live in a pool slot; this caches the
    /// halo copy for matrix scaling and unscaling.
    scale: Vec<f64>,
}

struct Worker {
    id: usize,
    mesh: Arc<Mesh>,
    dec: Arc<OverlapDecomposition>,
    halo: Vec<usize>,
    owned_local: Vec<u32>,
    owned_mask: Vec<bool>,
    /// Halo-local index of each RAS-local node of this subdomain.
    ras_to_halo: Vec<u32>,
    send_lists: Vec<Vec<u32>>,
    recv_lists: Vec<Vec<u32>>,
    peer_tx: Vec<Option<Sender<Vec<f64>>>>,
    peer_rx: Vec<Option<Receiver<Vec<f64>>>>,
    slots: Vec<Vec<f64>>,
    transport: OperatorContext,
    ras_assembler: Assembler,
    ls: OperatorContext,
    ls_ras: Option<LocalSolver>,
    ls_ras_assembler: Assembler,
    phase: usize,
    acc: [f64; 4],
}

fn worker_main(init: WorkerInit, rx: Receiver<Command>, reply: Sender<Reply>) {
    let id = init.id;
    let mut worker = match Worker::build(init) {
        Ok(w) => {
            let _ = reply.send(Reply::Done(id));
            w
        }
        Err(e) => {
            let _ = reply.send(Reply::Failed(id, e.to_string()));
            return;
        }
    };
    while let Ok(cmd) = rx.recv() {
        if matches!(cmd, Command::Shutdown) {
            return;
        }
        let t0 = std::time::Instant::now();
        let out = worker.execute(cmd);
        worker.acc[worker.phase] += t0.elapsed().as_secs_f64();
        let msg = match out {
            Ok(r) => r,
            Err(e) => Reply::Failed(worker.id, e.to_string()),
        };
        if reply.send(msg).is_err() {
            return;
        }
    }
}

impl Worker {
    fn build(init: WorkerInit) -> Result<Worker> {
        let WorkerInit {
            id,
            mesh,
            dec,
            owned,
            halo,
            row_elements,
            send_lists,
            recv_lists,
            peer_tx,
            peer_rx,
            ls_local_solver,
        } = init;

        let owned_local: Vec<u32> = owned
            .iter()
            .map(|g| halo.binary_search(g).expect("owned in halo") as u32)
            .collect();
        let mut owned_mask = vec![false; halo.len()];
        for &l in &owned_local {
            owned_mask[l as usize] = true;
        }
        let sub = dec.subdomain(id);
        let ras_to_halo: Vec<u32> = sub
            .local_nodes
            .iter()
            .map(|g| halo.binary_search(g).expect("ras node in halo") as u32)
            .collect();

        let transport_assembler = Assembler::new(&mesh, row_elements.clone(), &owned, &halo)?;
        let ras_assembler = Assembler::new(
            &mesh,
            sub.local_elements.clone(),
            &sub.local_nodes,
            &sub.local_nodes,
        )?;
        let ls_assembler = Assembler::new(&mesh, row_elements, &owned, &halo)?;
        let ls_ras_assembler = Assembler::new(
            &mesh,
            sub.local_elements.clone(),
            &sub.local_nodes,
            &sub.local_nodes,
        )?;

        let mut worker = Worker {
            id,
            mesh,
            dec,
            halo,
            owned_local,
            owned_mask,
            ras_to_halo,
            send_lists,
            recv_lists,
            peer_tx,
            peer_rx,
            slots: Vec::new(),
            transport: OperatorContext {
                assembler: transport_assembler,
                solver: None,
                scale: Vec::new(),
            },
            ras_assembler,
            ls: OperatorContext { assembler: ls_assembler, solver: None, scale: Vec::new() },
            ls_ras: None,
            ls_ras_assembler,
            phase: 0,
            acc: [0.0; 4],
        };
        worker.build_ls_context(ls_local_solver)?;
        Ok(worker)
    }

    /// Constant level-set operator: consistent mass, scaled and factored
    /// once at startup.
    fn build_ls_context(&mut self, choice: RasLocalSolver) -> Result<()> {
        let n_halo = self.halo.len();
        let zeros = vec![0.0; n_halo];
        let ones = vec![1.0; n_halo];
        let input = AssemblyInput {
            dt: 1.0,
            diffusion: &zeros,
            alpha: &ones,
            source: &zeros,
            previous: &zeros,
            penalties: &[],
            lump_mass: false,
        };
        self.ls.assembler.assemble(&input)?;

        // Global mass diagonal at owned rows, exchanged to the halo.
        let mut scale = vec![0.0; n_halo];
        for (r, &l) in self.owned_local.iter().enumerate() {
            let d = self.ls.assembler.matrix().get(r, l as usize);
            if !(d > 0.0) {
                return Err(Error::SingularSubdomain {
                    subdomain: self.id,
                    msg: format!("non-positive mass diagonal at node {}", self.halo[l as usize]),
                });
            }
            scale[l as usize] = 1.0 / d.sqrt();
        }
        self.exchange_raw(&mut scale);
        let row_scale: Vec<f64> =
            self.owned_local.iter().map(|&l| scale[l as usize]).collect();
        self.ls.assembler.matrix_mut().scale_rows_cols(&row_scale, &scale);
        self.ls.scale = scale;

        let n_ras = self.ras_to_halo.len();
        let zeros_r = vec![0.0; n_ras];
        let ones_r = vec![1.0; n_ras];
        let input_r = AssemblyInput {
            dt: 1.0,
            diffusion: &zeros_r,
            alpha: &ones_r,
            source: &zeros_r,
            previous: &zeros_r,
            penalties: &[],
            lump_mass: false,
        };
        self.ls_ras_assembler.assemble(&input_r)?;
        let ras_scale: Vec<f64> =
            self.ras_to_halo.iter().map(|&l| self.ls.scale[l as usize]).collect();
        self.ls_ras_assembler
            .matrix_mut()
            .scale_rows_cols(&ras_scale, &ras_scale);
        self.ls_ras = Some(LocalSolver::build(
            self.ls_ras_assembler.matrix().clone(),
            choice,
            self.id,
        )?);
        Ok(())
    }

    fn slot(&mut self, s: Slot) -> &mut Vec<f64> {
        if self.slots.len() <= s.0 {
            let n = self.halo.len();
            self.slots.resize_with(s.0 + 1, || vec![0.0; n]);
        }
        if self.slots[s.0].is_empty() {
            self.slots[s.0] = vec![0.0; self.halo.len()];
        }
        &mut self.slots[s.0]
    }

    fn two_slots(&mut self, a: Slot, b: Slot) -> (&mut Vec<f64>, &Vec<f64>) {
        self.slot(a);
        self.slot(b);
        assert_ne!(a.0, b.0);
        if a.0 < b.0 {
            let (lo, hi) = self.slots.split_at_mut(b.0);
            (&mut lo[a.0], &hi[0])
        } else {
            let (lo, hi) = self.slots.split_at_mut(a.0);
            (&mut hi[0], &lo[b.0])
        }
    }

    /// Halo refresh: send owned values needed by peers, fill ghosts from
    /// owners. All sends complete before any receive, so the pairwise
    /// channels cannot deadlock.
    fn exchange_raw(&mut self, data: &mut [f64]) {
        for j in 0..self.send_lists.len() {
            if let Some(tx) = &self.peer_tx[j] {
                let payload: Vec<f64> =
                    self.send_lists[j].iter().map(|&l| data[l as usize]).collect();
                let _ = tx.send(payload);
            }
        }
        for j in 0..self.recv_lists.len() {
            if let Some(rx) = &self.peer_rx[j] {
                let payload = rx.recv().expect("peer worker terminated");
                for (k, &l) in self.recv_lists[j].iter().enumerate() {
                    data[l as usize] = payload[k];
                }
            }
        }
    }

    fn exchange_slot(&mut self, s: Slot) {
        let mut data = std::mem::take(self.slot(s));
        self.exchange_raw(&mut data);
        *self.slot(s) = data;
    }

    fn execute(&mut self, cmd: Command) -> Result<Reply> {
        let id = self.id;
        match cmd {
            Command::Shutdown => unreachable!("handled by the loop"),
            Command::SetZero(v) => {
                self.slot(v).iter_mut().for_each(|x| *x = 0.0);
                Ok(Reply::Done(id))
            }
            Command::Copy { dst, src } => {
                let (d, s) = self.two_slots(dst, src);
                d.copy_from_slice(s);
                Ok(Reply::Done(id))
            }
            Command::Scale { v, a } => {
                self.slot(v).iter_mut().for_each(|x| *x *= a);
                Ok(Reply::Done(id))
            }
            Command::Axpy { y, a, x } => {
                let (yv, xv) = self.two_slots(y, x);
                for (y, x) in yv.iter_mut().zip(xv.iter()) {
                    *y += a * x;
                }
                Ok(Reply::Done(id))
            }
            Command::DotPartial { x, y } => {
                self.slot(x);
                self.slot(y);
                let xs = &self.slots[x.0];
                let ys = &self.slots[y.0];
                let mut acc = 0.0;
                for &l in &self.owned_local {
                    acc += xs[l as usize] * ys[l as usize];
                }
                Ok(Reply::Scalar(id, acc))
            }
            Command::Exchange(v) => {
                self.exchange_slot(v);
                Ok(Reply::Done(id))
            }
            Command::Scatter { v, data } => {
                self.slot(v);
                let halo = std::mem::take(&mut self.halo);
                {
                    let dst = &mut self.slots[v.0];
                    for (l, &g) in halo.iter().enumerate() {
                        dst[l] = data[g];
                    }
                }
                self.halo = halo;
                Ok(Reply::Done(id))
            }
            Command::GatherOwned(v) => {
                self.slot(v);
                let vals: Vec<f64> = self
                    .owned_local
                    .iter()
                    .map(|&l| self.slots[v.0][l as usize])
                    .collect();
                Ok(Reply::Values(id, vals))
            }
            Command::AssembleTransport {
                dt,
                params,
                pin_bulk,
                penalty_weight,
                lump_mass,
                local_solver,
                b,
                x,
            } => {
                self.assemble_transport(
                    dt,
                    &params,
                    pin_bulk,
                    penalty_weight,
                    lump_mass,
                    local_solver,
                    b,
                    x,
                )?;
                Ok(Reply::Done(id))
            }
            Command::AssembleLs { dt, grad_norm, b, x } => {
                self.assemble_ls(dt, grad_norm, b, x)?;
                Ok(Reply::Done(id))
            }
            Command::ComputeGradNorm { out } => {
                self.compute_grad_norm(out);
                Ok(Reply::Done(id))
            }
            Command::BandGradRange { h } => {
                let range = self.band_grad_range(h);
                Ok(Reply::Range(id, range))
            }
            Command::MatVec { y, x, ls } => {
                self.matvec(y, x, ls);
                Ok(Reply::Done(id))
            }
            Command::PrecApply { z, r, ls } => {
                self.prec_apply(z, r, ls);
                Ok(Reply::Done(id))
            }
            Command::Unscale { v, ls } => {
                let scale = if ls { &self.ls.scale } else { &self.transport.scale };
                assert_eq!(scale.len(), self.halo.len(), "unscale before assembly");
                let scale = scale.clone();
                let dst = self.slot(v);
                for (x, s) in dst.iter_mut().zip(&scale) {
                    *x *= s;
                }
                Ok(Reply::Done(id))
            }
            Command::ClampNonNegative(v) => {
                let owned_mask = std::mem::take(&mut self.owned_mask);
                let mut count = 0usize;
                {
                    let dst = self.slot(v);
                    for (l, x) in dst.iter_mut().enumerate() {
                        if *x < 0.0 {
                            *x = 0.0;
                            if owned_mask[l] {
                                count += 1;
                            }
                        }
                    }
                }
                self.owned_mask = owned_mask;
                Ok(Reply::Count(id, count))
            }
            Command::StepFilm { dt, params } => {
                self.slot(SLOT_C_MG);
                self.slot(SLOT_C_FILM);
                let next = crate::physics::step_film(
                    &self.slots[SLOT_C_FILM.0],
                    &self.slots[SLOT_C_MG.0],
                    &params,
                    dt,
                );
                self.slots[SLOT_C_FILM.0] = next;
                Ok(Reply::Done(id))
            }
            Command::BandVelocity { params, h, fields, locator } => {
                let pairs = self.band_velocity(&params, h, &fields, &locator)?;
                Ok(Reply::BandPairs(id, pairs))
            }
            Command::ExtendVelocity { band, h } => {
                self.extend_velocity(&band, h);
                Ok(Reply::Done(id))
            }
            Command::Observables => {
                let (vol, area) = self.observables();
                Ok(Reply::Sums(id, [vol, area]))
            }
            Command::SetPhase(p) => {
                self.phase = p as usize;
                Ok(Reply::Done(id))
            }
            Command::TakeTimers => {
                let acc = self.acc;
                self.acc = [0.0; 4];
                Ok(Reply::Timers(id, acc))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble_transport(
        &mut self,
        dt: f64,
        params: &ChemParams,
        pin_bulk: bool,
        penalty_weight: f64,
        lump_mass: bool,
        local_solver: RasLocalSolver,
        b: Slot,
        x: Slot,
    ) -> Result<()> {
        self.slot(SLOT_C_FILM);
        self.slot(SLOT_C_MG);
        self.slot(SLOT_PHI);

        self.slot(b);
        self.slot(x);
        let c_film = self.slots[SLOT_C_FILM.0].clone();
        let c_mg = self.slots[SLOT_C_MG.0].clone();
        let phi = self.slots[SLOT_PHI.0].clone();

        let diffusion = crate::physics::effective_diffusion_field(&c_film, params)?;
        let alpha = crate::physics::alpha_field(&c_film, dt, params);
        let source = crate::physics::source_field(&c_film, params);
        let penalties: Vec<PenaltyEntry> = if pin_bulk {
            self.owned_local
                .iter()
                .filter(|&&l| phi[l as usize] >= 0.0)
                .map(|&l| PenaltyEntry {
                    node: self.halo[l as usize],
                    target: params.mg_sol,
                    weight: penalty_weight,
                })
                .collect()
        } else {
            Vec::new()
        };
        let input = AssemblyInput {
            dt,
            diffusion: &diffusion,
            alpha: &alpha,
            source: &source,
            previous: &c_mg,
            penalties: &penalties,
            lump_mass,
        };
        let rhs = {
            let (_, rhs) = self.transport.assembler.assemble(&input)?;
            rhs
        };

        // Symmetric diagonal scaling of the distributed system.
        let mut scale = vec![0.0; self.halo.len()];
        for (r, &l) in self.owned_local.iter().enumerate() {
            let d = self.transport.assembler.matrix().get(r, l as usize);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularSubdomain {
                    subdomain: self.id,
                    msg: format!("non-positive diagonal at node {}", self.halo[l as usize]),
                });
            }
            scale[l as usize] = 1.0 / d.sqrt();
        }
        self.exchange_raw(&mut scale);
        let row_scale: Vec<f64> =
            self.owned_local.iter().map(|&l| scale[l as usize]).collect();
        self.transport
            .assembler
            .matrix_mut()
            .scale_rows_cols(&row_scale, &scale);
        {
            let owned_local = self.owned_local.clone();
            let dst = self.slot(b);
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (r, &l) in owned_local.iter().enumerate() {
                dst[l as usize] = rhs[r] * scale[l as usize];
            }
        }
        self.exchange_slot(b);
        {
            let scale_ref = scale.clone();
            let (xs, cs) = self.two_slots(x, SLOT_C_MG);
            for ((x, c), s) in xs.iter_mut().zip(cs.iter()).zip(&scale_ref) {
                *x = c / s;
            }
        }


        // Local Schwarz block on the overlap mesh, scaled consistently.
        let n_ras = self.ras_to_halo.len();
        let mut d_r = vec![0.0; n_ras];
        let mut a_r = vec![0.0; n_ras];
        let mut s_r = vec![0.0; n_ras];
        let mut u_r = vec![0.0; n_ras];
        for (k, &l) in self.ras_to_halo.iter().enumerate() {
            d_r[k] = diffusion[l as usize];
            a_r[k] = alpha[l as usize];
            s_r[k] = source[l as usize];
            u_r[k] = c_mg[l as usize];
        }
        let ras_penalties: Vec<PenaltyEntry> = if pin_bulk {
            self.ras_to_halo
                .iter()
                .filter(|&&l| phi[l as usize] >= 0.0)
                .map(|&l| PenaltyEntry {
                    node: self.halo[l as usize],
                    target: params.mg_sol,
                    weight: penalty_weight,
                })
                .collect()
        } else {
            Vec::new()
        };
        let input_r = AssemblyInput {
            dt,
            diffusion: &d_r,
            alpha: &a_r,
            source: &s_r,
            previous: &u_r,
            penalties: &ras_penalties,
            lump_mass,
        };
        self.ras_assembler.assemble(&input_r)?;
        let ras_scale: Vec<f64> = self.ras_to_halo.iter().map(|&l| scale[l as usize]).collect();
        self.ras_assembler
            .matrix_mut()
            .scale_rows_cols(&ras_scale, &ras_scale);
        self.transport.solver = Some(LocalSolver::build(
            self.ras_assembler.matrix().clone(),
            local_solver,
            self.id,
        )?);
        self.transport.scale = scale;
        Ok(())
    }

    fn assemble_ls(&mut self, dt: f64, grad_norm: Slot, b: Slot, x: Slot) -> Result<()> {
        self.slot(SLOT_PHI);
        self.slot(SLOT_VELOCITY);
        self.slot(grad_norm);
        self.slot(b);
        self.slot(x);
        let phi = self.slots[SLOT_PHI.0].clone();
        let velocity = self.slots[SLOT_VELOCITY.0].clone();
        let grad_norm = self.slots[grad_norm.0].clone();
        let n_halo = self.halo.len();
        let source: Vec<f64> = (0..n_halo).map(|l| -velocity[l] * grad_norm[l]).collect();
        let zeros = vec![0.0; n_halo];
        let ones = vec![1.0; n_halo];
        let input = AssemblyInput {
            dt,
            diffusion: &zeros,
            alpha: &ones,
            source: &source,
            previous: &phi,
            penalties: &[],
            lump_mass: false,
        };
        let rhs = self.ls.assembler.assemble_rhs(&input)?;
        let scale = self.ls.scale.clone();
        {
            let owned_local = self.owned_local.clone();
            let dst = self.slot(b);
            dst.iter_mut().for_each(|v| *v = 0.0);
            for (r, &l) in owned_local.iter().enumerate() {
                dst[l as usize] = rhs[r] * scale[l as usize];
            }
        }
        self.exchange_slot(b);
        let (xs, ps) = self.two_slots(x, SLOT_PHI);
        for ((x, p), s) in xs.iter_mut().zip(ps.iter()).zip(&scale) {
            *x = p / s;
        }
        Ok(())
    }

    fn matvec(&mut self, y: Slot, x: Slot, ls: bool) {
        self.slot(y);
        self.slot(x);
        let matrix = if ls {
            self.ls.assembler.matrix()
        } else {
            self.transport.assembler.matrix()
        };
        let mut out = vec![0.0; self.halo.len()];
        {
            let xs = &self.slots[x.0];
            for (r, &l) in self.owned_local.iter().enumerate() {
                let (cols, vals) = matrix.row(r);
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    acc += v * xs[*c as usize];
                }
                out[l as usize] = acc;
            }
        }
        self.exchange_raw(&mut out);
        *self.slot(y) = out;
    }

    fn prec_apply(&mut self, z: Slot, r: Slot, ls: bool) {
        self.slot(z);
        self.slot(r);
        let solver = if ls {
            self.ls_ras.as_ref().expect("level-set context built at startup")
        } else {
            self.transport.solver.as_ref().expect("transport assembled before solve")
        };
        let r_local: Vec<f64> = self
            .ras_to_halo
            .iter()
            .map(|&l| self.slots[r.0][l as usize])
            .collect();
        let z_local = solver.solve(&r_local);
        let mut out = vec![0.0; self.halo.len()];
        let sub = self.dec.subdomain(self.id);
        for (k, &l) in self.ras_to_halo.iter().enumerate() {
            if sub.pou_weight[k] != 0.0 {
                out[l as usize] = sub.pou_weight[k] * z_local[k];
            }
        }
        self.exchange_raw(&mut out);
        *self.slot(z) = out;
    }

    /// Volume-weighted level-set gradient at an owned node; every incident
    /// element is inside the row closure, so the average is exact.
    fn nodal_gradient_at(&self, g: usize, phi_halo: &[f64]) -> [f64; 3] {
        let mut acc = [0.0f64; 4];
        for &e in self.mesh.elements_of_node(g) {
            let e = e as usize;
            let (grads, _) = self.mesh.element_gradients(e);
            // Same volume expression as the sequential gradient average, so
            // the two paths agree bit for bit.
            let vol = self.mesh.signed_volume_of(e).abs();
            let t = self.mesh.tets()[e];
            let mut gvec = [0.0; 3];
            for a in 0..4 {
                let l = self.halo.binary_search(&t[a]).expect("element node in halo");
                let v = phi_halo[l];
                for k in 0..3 {
                    gvec[k] += v * grads[a][k];
                }
            }
            acc[0] += vol * gvec[0];
            acc[1] += vol * gvec[1];
            acc[2] += vol * gvec[2];
            acc[3] += vol;
        }
        let w = acc[3].max(1e-300);
        [acc[0] / w, acc[1] / w, acc[2] / w]
    }

    fn compute_grad_norm(&mut self, out: Slot) {
        self.slot(SLOT_PHI);
        self.slot(out);
        let phi = self.slots[SLOT_PHI.0].clone();
        let mut data = vec![0.0; self.halo.len()];
        for &l in &self.owned_local {
            let g = self.nodal_gradient_at(self.halo[l as usize], &phi);
            data[l as usize] = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        }
        self.exchange_raw(&mut data);
        *self.slot(out) = data;
    }

    fn band_grad_range(&mut self, h: f64) -> Option<(f64, f64)> {
        self.slot(SLOT_PHI);
        let phi = &self.slots[SLOT_PHI.0];
        let half = crate::levelset::BAND_HALF_WIDTH * h;
        let sub = self.dec.subdomain(self.id);
        let mut out: Option<(f64, f64)> = None;
        for (k, &e) in sub.local_elements.iter().enumerate() {
            if sub.is_ghost_element(k) {
                continue;
            }
            let t = self.mesh.tets()[e];
            let near_band = t.iter().any(|&n| {
                let l = self.halo.binary_search(&n).expect("element node in halo");
                phi[l].abs() <= half
            });
            if !near_band {
                continue;
            }
            let (grads, _) = self.mesh.element_gradients(e);
            let mut gvec = [0.0; 3];
            for a in 0..4 {
                let l = self.halo.binary_search(&t[a]).expect("element node in halo");
                for c in 0..3 {
                    gvec[c] += phi[l] * grads[a][c];
                }
            }
            let norm = (gvec[0] * gvec[0] + gvec[1] * gvec[1] + gvec[2] * gvec[2]).sqrt();
            out = Some(match out {
                None => (norm, norm),
                Some((lo, hi)) => (lo.min(norm), hi.max(norm)),
            });
        }
        out
    }

    fn band_velocity(
        &mut self,
        params: &ChemParams,
        h: f64,
        fields: &GlobalFields,
        locator: &PointLocator,
    ) -> Result<Vec<(usize, f64)>> {
        self.slot(SLOT_PHI);
        let phi_halo = self.slots[SLOT_PHI.0].clone();
        let half = crate::levelset::BAND_HALF_WIDTH * h;
        let mut pairs = Vec::new();
        for &l in &self.owned_local {
            let g = self.halo[l as usize];
            if fields.phi[g].abs() <= half {
                let normal = self.nodal_gradient_at(g, &phi_halo);
                let v = crate::levelset::band_velocity_at(
                    &self.mesh,
                    locator,
                    &fields.phi,
                    &fields.c_mg,
                    &fields.c_film,
                    params,
                    h,
                    g,
                    normal,
                )?;
                pairs.push((g, v));
            }
        }
        Ok(pairs)
    }

    fn extend_velocity(&mut self, band: &BandData, _h: f64) {
        self.slot(SLOT_VELOCITY);
        let halo = std::mem::take(&mut self.halo);
        {
            let mesh = Arc::clone(&self.mesh);
            let dst = &mut self.slots[SLOT_VELOCITY.0];
            for (l, &g) in halo.iter().enumerate() {
                dst[l] = match band.nodes.binary_search(&g) {
                    Ok(k) => band.values[k],
                    Err(_) => {
                        let nearest = band.index.nearest(mesh.nodes()[g]);
                        let k = band
                            .nodes
                            .binary_search(&nearest)
                            .expect("nearest returns a band node");
                        band.values[k]
                    }
                };
            }
        }
        self.halo = halo;
    }

    fn observables(&mut self) -> ((f64, f64), (f64, f64)) {
        self.slot(SLOT_PHI);
        let sub = self.dec.subdomain(self.id);
        let phi_sub: Vec<f64> = sub
            .local_nodes
            .iter()
            .map(|g| {
                let l = self.halo.binary_search(g).expect("ras node in halo");
                self.slots[SLOT_PHI.0][l]
            })
            .collect();
        let vol = crate::levelset::solid_volume_partial(&self.mesh, sub, &phi_sub, true);
        let area = crate::levelset::interface_area_partial(&self.mesh, sub, &phi_sub, true);
        (vol.parts(), area.parts())
    }
}
