//! Plain-text run configuration: `key = value` lines grouped by
//! `[section]` headers, `#` comments, strict unknown-key rejection.
//!
//! ```text
//! [mesh]
//! outer = 30 30 20        # medium box extents (mm)
//! inner = 13 13 4         # solid block extents (mm)
//! coarse_h = 2.0
//! fine_h = 1.0
//!
//! [time]
//! dt = 0.025
//! end_time = 1.0
//! ```
//!
//! Sections: `mesh`, `chem`, `time`, `run`, `solver`, `solver.mg`,
//! `solver.ls`. Every key has a default except `time.end_time`; unknown keys
//! abort parsing so a typo cannot silently fall back to a default.

use crate::error::{Error, Result};
use crate::linsolve::{Method, PreconditionerKind, RasLocalSolver, SolverConfig};
use crate::mesh::GeometryPrimitive;
use crate::physics::ChemParams;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Default time step (h).
pub const DEFAULT_DT: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Simulate,
    StrongScaling,
    WeakScaling,
    FitOnly,
}

#[derive(Debug, Clone)]
pub enum MeshSource {
    Generate {
        outer: GeometryPrimitive,
        inner: GeometryPrimitive,
        coarse_h: f64,
        fine_h: f64,
        max_elements: usize,
    },
    File { path: PathBuf, inner: GeometryPrimitive },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub mesh: MeshSource,
    pub chem: ChemParams,
    /// Initial dissolved concentration in the medium.
    pub medium_c0: f64,
    pub dt: f64,
    pub end_time: f64,
    /// Steps between VTK snapshots; 0 disables them.
    pub snapshot_every: usize,
    pub workers: usize,
    pub overlap: usize,
    pub out_dir: PathBuf,
    pub mode: RunMode,
    /// Relative penalty weight pinning bulk nodes.
    pub penalty_weight: f64,
    pub lump_mass: bool,
    /// Steps in the timing window of the scaling harness.
    pub measure_steps: usize,
    /// Worker counts for the scaling modes.
    pub scaling_workers: Vec<usize>,
    pub solver_mg: SolverConfig,
    pub solver_ls: SolverConfig,
    /// Timings CSV consumed by `mode = fit_only`.
    pub fit_input: Option<PathBuf>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let named = |key: &str, msg: String| Error::Config { key: key.into(), msg };
        if !(self.dt > 0.0) {
            return Err(named("time.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.end_time >= self.dt) {
            return Err(named(
                "time.end_time",
                format!("must be at least dt = {}, got {}", self.dt, self.end_time),
            ));
        }
        if self.workers < 1 {
            return Err(named("run.workers", "must be at least 1".into()));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(named("run.penalty_weight", "must be positive".into()));
        }
        if self.measure_steps < 1 {
            return Err(named("run.measure_steps", "must be at least 1".into()));
        }
        if self.scaling_workers.is_empty() || self.scaling_workers.iter().any(|&n| n < 1) {
            return Err(named(
                "run.scaling_workers",
                "must be a non-empty list of counts >= 1".into(),
            ));
        }
        self.chem
            .validate()
            .map_err(|e| named("chem", e.to_string()))?;
        self.solver_mg
            .validate()
            .map_err(|e| named("solver.mg", e.to_string()))?;
        self.solver_ls
            .validate()
            .map_err(|e| named("solver.ls", e.to_string()))?;
        match &self.mesh {
            MeshSource::Generate { outer, inner, coarse_h, fine_h, .. } => {
                outer.validate().map_err(|e| named("mesh.outer", e.to_string()))?;
                inner.validate().map_err(|e| named("mesh.inner", e.to_string()))?;
                if !(*fine_h > 0.0 && fine_h <= coarse_h) {
                    return Err(named(
                        "mesh.fine_h",
                        "must satisfy 0 < fine_h <= coarse_h".into(),
                    ));
                }
            }
            MeshSource::File { inner, .. } => {
                inner.validate().map_err(|e| named("mesh.inner", e.to_string()))?;
            }
        }
        if self.mode == RunMode::FitOnly && self.fit_input.is_none() {
            return Err(named("run.fit_input", "required when mode = fit_only".into()));
        }
        Ok(())
    }

    /// Effective settings, one `key = value` per line, for the run log.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        use std::fmt::Write;
        match &self.mesh {
            MeshSource::Generate { outer, inner, coarse_h, fine_h, max_elements } => {
                let _ = writeln!(out, "mesh.source = generate");
                if let GeometryPrimitive::Box { extents } = outer {
                    let _ = writeln!(out, "mesh.outer = {} {} {}", extents[0], extents[1], extents[2]);
                }
                match inner {
                    GeometryPrimitive::Box { extents } => {
                        let _ = writeln!(out, "mesh.inner_kind = box");
                        let _ = writeln!(out, "mesh.inner = {} {} {}", extents[0], extents[1], extents[2]);
                    }
                    GeometryPrimitive::Sphere { center, radius } => {
                        let _ = writeln!(out, "mesh.inner_kind = sphere");
                        let _ = writeln!(out, "mesh.inner_center = {} {} {}", center[0], center[1], center[2]);
                        let _ = writeln!(out, "mesh.inner_radius = {radius}");
                    }
                }
                let _ = writeln!(out, "mesh.coarse_h = {coarse_h}");
                let _ = writeln!(out, "mesh.fine_h = {fine_h}");
                let _ = writeln!(out, "mesh.max_elements = {max_elements}");
            }
            MeshSource::File { path, .. } => {
                let _ = writeln!(out, "mesh.source = file");
                let _ = writeln!(out, "mesh.file = {}", path.display());
            }
        }
        let c = &self.chem;
        for (k, v) in [
            ("chem.d_mg", c.d_mg),
            ("chem.k1", c.k1),
            ("chem.k2", c.k2),
            ("chem.cl", c.cl),
            ("chem.rho_film", c.rho_film),
            ("chem.porosity", c.porosity),
            ("chem.tortuosity", c.tortuosity),
            ("chem.mg_sol", c.mg_sol),
            ("chem.mg_sat", c.mg_sat),
            ("chem.mg_molar", c.mg_molar),
            ("chem.temperature", c.temperature),
            ("chem.pressure", c.pressure),
            ("chem.medium_c0", self.medium_c0),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "time.dt = {}", self.dt);
        let _ = writeln!(out, "time.end_time = {}", self.end_time);
        let _ = writeln!(out, "time.snapshot_every = {}", self.snapshot_every);
        let _ = writeln!(out, "run.workers = {}", self.workers);
        let _ = writeln!(out, "run.overlap = {}", self.overlap);
        let _ = writeln!(out, "run.out_dir = {}", self.out_dir.display());
        let _ = writeln!(out, "run.mode = {}", match self.mode {
            RunMode::Simulate => "simulate",
            RunMode::StrongScaling => "strong_scaling",
            RunMode::WeakScaling => "weak_scaling",
            RunMode::FitOnly => "fit_only",
        });
        let _ = writeln!(out, "run.penalty_weight = {}", self.penalty_weight);
        let _ = writeln!(out, "run.lump_mass = {}", self.lump_mass);
        let _ = writeln!(out, "run.measure_steps = {}", self.measure_steps);
        let _ = writeln!(
            out,
            "run.scaling_workers = {}",
            self.scaling_workers
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        for (name, s) in [("mg", &self.solver_mg), ("ls", &self.solver_ls)] {
            let _ = writeln!(out, "solver.{name}.restart = {}", s.restart);
            let _ = writeln!(out, "solver.{name}.rel_tol = {}", s.rel_tol);
            let _ = writeln!(out, "solver.{name}.abs_tol = {}", s.abs_tol);
            let _ = writeln!(out, "solver.{name}.max_iters = {}", s.max_iters);
            let _ = writeln!(out, "solver.{name}.preconditioner = {}", match s.preconditioner {
                PreconditionerKind::None => "none",
                PreconditionerKind::Jacobi => "jacobi",
                PreconditionerKind::Ras => "ras",
            });
            let _ = writeln!(out, "solver.{name}.ras_local = {}", match s.ras_local_solver {
                RasLocalSolver::Auto => "auto",
                RasLocalSolver::DenseLu => "dense_lu",
                RasLocalSolver::Ilu0 => "ilu0",
            });
        }
        out
    }
}

pub fn parse_config_file(path: impl AsRef<Path>) -> Result<SimConfig> {
    let text = std::fs::read_to_string(&path)?;
    parse_config(&text)
}

/// Raw `section.key -> (value, line)` store with removal-based extraction;
/// whatever remains at the end is an unknown key.
struct KeyStore {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyStore {
    fn parse(text: &str) -> Result<KeyStore> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Parse {
                    line: idx + 1,
                    msg: format!("malformed section header `{line}`"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            if entries.insert(full.clone(), (value.trim().to_string(), idx + 1)).is_some() {
                return Err(Error::Config {
                    key: full,
                    msg: format!("duplicate key (line {})", idx + 1),
                });
            }
        }
        Ok(KeyStore { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config {
                key: key.into(),
                msg: format!("cannot parse `{v}`"),
            }),
        }
    }

    fn take_triple(&mut self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::Config {
                        key: key.into(),
                        msg: format!("expected three numbers, got `{v}`"),
                    });
                }
                let mut out = [0.0; 3];
                for (k, p) in parts.iter().enumerate() {
                    out[k] = p.parse().map_err(|_| Error::Config {
                        key: key.into(),
                        msg: format!("cannot parse `{p}`"),
                    })?;
                }
                Ok(out)
            }
        }
    }

    fn reject_leftovers(&self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.iter().next() {
            return Err(Error::Config {
                key: key.clone(),
                msg: format!("unknown key (line {line})"),
            });
        }
        Ok(())
    }
}

fn parse_solver(store: &mut KeyStore, prefix: &str, base: SolverConfig) -> Result<SolverConfig> {
    let key = |k: &str| format!("{prefix}.{k}");
    let mut cfg = base;
    if let Some(v) = store.take(&key("method")) {
        cfg.method = match v.as_str() {
            "gmres" => Method::Gmres,
            other => {
                return Err(Error::Config {
                    key: key("method"),
                    msg: format!("unknown method `{other}` (expected gmres)"),
                })
            }
        };
    }
    cfg.restart = store.take_parsed(&key("restart"), cfg.restart)?;
    cfg.rel_tol = store.take_parsed(&key("rel_tol"), cfg.rel_tol)?;
    cfg.abs_tol = store.take_parsed(&key("abs_tol"), cfg.abs_tol)?;
    cfg.max_iters = store.take_parsed(&key("max_iters"), cfg.max_iters)?;
    if let Some(v) = store.take(&key("preconditioner")) {
        cfg.preconditioner = match v.as_str() {
            "none" => PreconditionerKind::None,
            "jacobi" => PreconditionerKind::Jacobi,
            "ras" => PreconditionerKind::Ras,
            other => {
                return Err(Error::Config {
                    key: key("preconditioner"),
                    msg: format!("unknown preconditioner `{other}`"),
                })
            }
        };
    }
    if let Some(v) = store.take(&key("ras_local")) {
        cfg.ras_local_solver = match v.as_str() {
            "auto" => RasLocalSolver::Auto,
            "dense_lu" => RasLocalSolver::DenseLu,
            "ilu0" => RasLocalSolver::Ilu0,
            other => {
                return Err(Error::Config {
                    key: key("ras_local"),
                    msg: format!("unknown local solver `{other}`"),
                })
            }
        };
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut store = KeyStore::parse(text)?;

    // Mesh.
    let source = store.take("mesh.source").unwrap_or_else(|| "generate".into());
    let outer = GeometryPrimitive::Box {
        extents: store.take_triple("mesh.outer", [30.0, 30.0, 20.0])?,
    };
    let inner_kind = store.take("mesh.inner_kind").unwrap_or_else(|| "box".into());
    let inner = match inner_kind.as_str() {
        "box" => GeometryPrimitive::Box {
            extents: store.take_triple("mesh.inner", [13.0, 13.0, 4.0])?,
        },
        "sphere" => GeometryPrimitive::Sphere {
            center: store.take_triple("mesh.inner_center", [0.0; 3])?,
            radius: store.take_parsed("mesh.inner_radius", 1.0)?,
        },
        other => {
            return Err(Error::Config {
                key: "mesh.inner_kind".into(),
                msg: format!("unknown primitive `{other}` (expected box or sphere)"),
            })
        }
    };
    let coarse_h = store.take_parsed("mesh.coarse_h", 2.0)?;
    let fine_h = store.take_parsed("mesh.fine_h", 1.0)?;
    let max_elements =
        store.take_parsed("mesh.max_elements", crate::mesh::DEFAULT_ELEMENT_BUDGET)?;
    let file = store.take("mesh.file");
    let mesh = match source.as_str() {
        "generate" => MeshSource::Generate { outer, inner, coarse_h, fine_h, max_elements },
        "file" => MeshSource::File {
            path: PathBuf::from(file.ok_or_else(|| Error::Config {
                key: "mesh.file".into(),
                msg: "required when mesh.source = file".into(),
            })?),
            inner,
        },
        other => {
            return Err(Error::Config {
                key: "mesh.source".into(),
                msg: format!("unknown source `{other}` (expected generate or file)"),
            })
        }
    };

    // Chemistry.
    let defaults = ChemParams::default();
    let chem = ChemParams {
        d_mg: store.take_parsed("chem.d_mg", defaults.d_mg)?,
        k1: store.take_parsed("chem.k1", defaults.k1)?,
        k2: store.take_parsed("chem.k2", defaults.k2)?,
        cl: store.take_parsed("chem.cl", defaults.cl)?,
        rho_film: store.take_parsed("chem.rho_film", defaults.rho_film)?,
        porosity: store.take_parsed("chem.porosity", defaults.porosity)?,
        tortuosity: store.take_parsed("chem.tortuosity", defaults.tortuosity)?,
        mg_sol: store.take_parsed("chem.mg_sol", defaults.mg_sol)?,
        mg_sat: store.take_parsed("chem.mg_sat", defaults.mg_sat)?,
        mg_molar: store.take_parsed("chem.mg_molar", defaults.mg_molar)?,
        temperature: store.take_parsed("chem.temperature", defaults.temperature)?,
        pressure: store.take_parsed("chem.pressure", defaults.pressure)?,
    };
    let medium_c0 = store.take_parsed("chem.medium_c0", 0.0)?;

    // Time.
    let dt = store.take_parsed("time.dt", DEFAULT_DT)?;
    let end_time: f64 = match store.take("time.end_time") {
        Some(v) => v.parse().map_err(|_| Error::Config {
            key: "time.end_time".into(),
            msg: format!("cannot parse `{v}`"),
        })?,
        None => {
            return Err(Error::Config {
                key: "time.end_time".into(),
                msg: "required key is missing".into(),
            })
        }
    };
    let snapshot_every = store.take_parsed("time.snapshot_every", 0usize)?;

    // Run.
    let workers = store.take_parsed("run.workers", 1usize)?;
    let overlap = store.take_parsed("run.overlap", 1usize)?;
    let out_dir = PathBuf::from(store.take("run.out_dir").unwrap_or_else(|| "out".into()));
    let mode = match store.take("run.mode").unwrap_or_else(|| "simulate".into()).as_str() {
        "simulate" => RunMode::Simulate,
        "strong_scaling" => RunMode::StrongScaling,
        "weak_scaling" => RunMode::WeakScaling,
        "fit_only" => RunMode::FitOnly,
        other => {
            return Err(Error::Config {
                key: "run.mode".into(),
                msg: format!("unknown mode `{other}`"),
            })
        }
    };
    let penalty_weight =
        store.take_parsed("run.penalty_weight", crate::fem::DEFAULT_PENALTY_WEIGHT)?;
    let lump_mass = store.take_parsed("run.lump_mass", true)?;
    let measure_steps = store.take_parsed("run.measure_steps", 5usize)?;
    let scaling_workers = match store.take("run.scaling_workers") {
        None => vec![1, 2, 4],
        Some(v) => parse_worker_list(&v).map_err(|msg| Error::Config {
            key: "run.scaling_workers".into(),
            msg,
        })?,
    };
    let fit_input = store.take("run.fit_input").map(PathBuf::from);

    // Solvers: `[solver]` is the base, `[solver.mg]`/`[solver.ls]` override.
    let base = parse_solver(&mut store, "solver", SolverConfig::default())?;
    let solver_mg = parse_solver(&mut store, "solver.mg", base)?;
    let solver_ls = parse_solver(&mut store, "solver.ls", base)?;

    store.reject_leftovers()?;

    let cfg = SimConfig {
        mesh,
        chem,
        medium_c0,
        dt,
        end_time,
        snapshot_every,
        workers,
        overlap,
        out_dir,
        mode,
        penalty_weight,
        lump_mass,
        measure_steps,
        scaling_workers,
        solver_mg,
        solver_ls,
        fit_input,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Comma-separated worker counts, e.g. `1,2,4,8`.
pub fn parse_worker_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    let counts: std::result::Result<Vec<usize>, String> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid worker count `{}`", p.trim()))
        })
        .collect();
    let counts = counts?;
    if counts.is_empty() || counts.iter().any(|&n| n == 0) {
        return Err("worker counts must be >= 1".into());
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[time]\nend_time = 1.0\n").unwrap();
        assert_eq!(cfg.dt, 0.025);
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.overlap, 1);
        assert!(matches!(cfg.mode, RunMode::Simulate));
        let echo = cfg.echo();
        assert!(echo.contains("time.dt = 0.025"));
        assert!(echo.contains("run.workers = 1"));
    }

    #[test]
    fn negative_dt_names_the_key() {
        let err = parse_config("[time]\ndt = -1\nend_time = 1\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "time.dt"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_config("[time]\nend_time = 1\nfoo = 3\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "time.foo"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn per_pde_solver_overrides_apply_on_top_of_base() {
        let text = "\
[time]
end_time = 1
[solver]
rel_tol = 1e-9
restart = 40
[solver.ls]
rel_tol = 1e-6
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.solver_mg.rel_tol, 1e-9);
        assert_eq!(cfg.solver_mg.restart, 40);
        assert_eq!(cfg.solver_ls.rel_tol, 1e-6);
        assert_eq!(cfg.solver_ls.restart, 40);
    }

    #[test]
    fn sphere_inner_primitive_parses() {
        let text = "\
[mesh]
inner_kind = sphere
inner_center = 0 0 1
inner_radius = 2.5
[time]
end_time = 0.1
";
        let cfg = parse_config(text).unwrap();
        match cfg.mesh {
            MeshSource::Generate { inner: GeometryPrimitive::Sphere { center, radius }, .. } => {
                assert_eq!(center, [0.0, 0.0, 1.0]);
                assert_eq!(radius, 2.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("[time]\nend_time = 1\nend_time = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn fit_only_requires_an_input() {
        let err = parse_config("[time]\nend_time = 1\n[run]\nmode = fit_only\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "run.fit_input"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# top\n[time] # section\nend_time = 2 # trailing\n\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.end_time, 2.0);
    }
}
