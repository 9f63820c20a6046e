//! Timing records, speedup and efficiency series, and sequential-fraction
//! fits of the two classic scaling laws.
//!
//! Strong scaling keeps the problem fixed and varies the worker count; its
//! speedup is `T(1)/T(N)` and the sequential fraction comes from fitting
//! `S = 1 / (f + (1-f)/N)`. Weak scaling grows the problem with the worker
//! count; the scaled speedup is `N T(1)/T(N)` and the model is
//! `S = f + (1-f) N`.

use crate::error::{Error, Result};
use std::path::Path;

/// Wall time per equation for one measured configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRecord {
    pub workers: usize,
    /// Level-set solve seconds per step.
    pub ls_pde_s: f64,
    /// Transport solve seconds per step.
    pub mg_pde_s: f64,
    /// Film update seconds per step.
    pub film_pde_s: f64,
}

impl TimingRecord {
    pub fn total(&self) -> f64 {
        self.ls_pde_s + self.mg_pde_s + self.film_pde_s
    }
}

/// One row of a timings CSV: per-step measurement for one worker count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub workers: usize,
    pub step: usize,
    pub ls_pde_s: f64,
    pub mg_pde_s: f64,
    pub film_pde_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingLaw {
    Amdahl,
    Gustafson,
}

/// Speedup and efficiency series plus fitted sequential fractions.
#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub mode: ScalingMode,
    pub records: Vec<TimingRecord>,
    /// (workers, speedup), ascending in workers.
    pub speedups: Vec<(usize, f64)>,
    /// (workers, efficiency).
    pub efficiencies: Vec<(usize, f64)>,
    /// Worker counts with efficiency above one.
    pub superlinear: Vec<usize>,
    pub f_amdahl: f64,
    pub f_gustafson: f64,
}

/// Median over measured steps of each per-equation bucket.
pub fn median_records(rows: &[TimingRow]) -> Vec<TimingRecord> {
    let mut by_n: std::collections::BTreeMap<usize, Vec<&TimingRow>> = Default::default();
    for r in rows {
        by_n.entry(r.workers).or_default().push(r);
    }
    by_n
        .into_iter()
        .map(|(workers, rows)| {
            let med = |f: fn(&TimingRow) -> f64| -> f64 {
                let mut v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    0.5 * (v[n / 2 - 1] + v[n / 2])
                }
            };
            TimingRecord {
                workers,
                ls_pde_s: med(|r| r.ls_pde_s),
                mg_pde_s: med(|r| r.mg_pde_s),
                film_pde_s: med(|r| r.film_pde_s),
            }
        })
        .collect()
}

/// Observed speedups relative to the single-worker baseline.
pub fn speedups(records: &[TimingRecord], mode: ScalingMode) -> Result<Vec<(usize, f64)>> {
    let baseline = records
        .iter()
        .find(|r| r.workers == 1)
        .ok_or_else(|| Error::Argument("scaling data needs a workers=1 baseline".into()))?
        .total();
    if records.len() < 2 {
        return Err(Error::Argument("scaling data needs at least two worker counts".into()));
    }
    let mut out: Vec<(usize, f64)> = records
        .iter()
        .map(|r| {
            let s = match mode {
                ScalingMode::Strong => baseline / r.total(),
                ScalingMode::Weak => r.workers as f64 * baseline / r.total(),
            };
            (r.workers, s)
        })
        .collect();
    out.sort_by_key(|&(n, _)| n);
    Ok(out)
}

/// Build the full report from per-step rows.
pub fn build_report(rows: &[TimingRow], mode: ScalingMode) -> Result<ScalingReport> {
    let records = median_records(rows);
    let speedups = speedups(&records, mode)?;
    let efficiencies: Vec<(usize, f64)> =
        speedups.iter().map(|&(n, s)| (n, s / n as f64)).collect();
    let superlinear = efficiencies
        .iter()
        .filter(|&&(_, e)| e > 1.0)
        .map(|&(n, _)| n)
        .collect();
    let f_amdahl = fit_fraction(&speedups, ScalingLaw::Amdahl)?;
    let f_gustafson = fit_fraction(&speedups, ScalingLaw::Gustafson)?;
    Ok(ScalingReport {
        mode,
        records,
        speedups,
        efficiencies,
        superlinear,
        f_amdahl,
        f_gustafson,
    })
}

fn model(law: ScalingLaw, f: f64, n: f64) -> f64 {
    match law {
        ScalingLaw::Amdahl => 1.0 / (f + (1.0 - f) / n),
        ScalingLaw::Gustafson => f + (1.0 - f) * n,
    }
}

/// Least-squares sequential fraction over observed speedups, minimized by
/// golden-section search on [0, 1] to 1e-6.
pub fn fit_fraction(speedups: &[(usize, f64)], law: ScalingLaw) -> Result<f64> {
    if speedups.len() < 2 {
        return Err(Error::Argument("fit needs at least two speedup points".into()));
    }
    if !speedups.iter().any(|&(n, _)| n == 1) {
        return Err(Error::Argument("fit needs the workers=1 baseline".into()));
    }
    let sse = |f: f64| -> f64 {
        speedups
            .iter()
            .map(|&(n, s)| {
                let m = model(law, f, n as f64);
                (m - s) * (m - s)
            })
            .sum()
    };
    Ok(golden_section_min(sse, 0.0, 1.0, 1e-8))
}

/// Convenience wrappers matching the two laws.
pub fn fit_amdahl(speedups: &[(usize, f64)]) -> Result<f64> {
    fit_fraction(speedups, ScalingLaw::Amdahl)
}

pub fn fit_gustafson(speedups: &[(usize, f64)]) -> Result<f64> {
    fit_fraction(speedups, ScalingLaw::Gustafson)
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Warn when the host cannot actually run `n` workers in parallel.
pub fn hardware_thread_warning(n: usize) -> Option<String> {
    let available = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    (n > available).then(|| {
        format!(
            "warning: {n} workers requested but only {available} hardware threads are available; \
             timings will undercount parallel speedup"
        )
    })
}

/// Write per-step rows in the timings CSV format.
pub fn write_timings_csv(rows: &[TimingRow], path: impl AsRef<Path>) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "N,step,ls_pde_s,mg_pde_s,film_pde_s,total_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.workers, r.step, r.ls_pde_s, r.mg_pde_s, r.film_pde_s, r.total_s
        )?;
    }
    Ok(())
}

/// Read a timings CSV (`N,step,ls_pde_s,mg_pde_s,film_pde_s,total_s`).
pub fn read_timings_csv(path: impl AsRef<Path>) -> Result<Vec<TimingRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_timings_csv(&text)
}

pub fn parse_timings_csv(text: &str) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("N,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 6 comma-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid number `{s}`"),
            })
        };
        rows.push(TimingRow {
            workers: fields[0].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid worker count `{}`", fields[0]),
            })?,
            step: fields[1].parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("invalid step `{}`", fields[1]),
            })?,
            ls_pde_s: parse(fields[2])?,
            mg_pde_s: parse(fields[3])?,
            film_pde_s: parse(fields[4])?,
            total_s: parse(fields[5])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "timings file has no data rows".into() });
    }
    Ok(rows)
}

impl ScalingReport {
    /// Summary CSV: one row per worker count with bucket medians, speedup
    /// and efficiency.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("N,ls_pde_s,mg_pde_s,film_pde_s,total_s,speedup,efficiency\n");
        for (r, (&(_, s), &(_, e))) in self
            .records
            .iter()
            .zip(self.speedups.iter().zip(&self.efficiencies))
        {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.workers,
                r.ls_pde_s,
                r.mg_pde_s,
                r.film_pde_s,
                r.total(),
                s,
                e
            );
        }
        out
    }

    /// Plain-text table: one column per worker count, one row per equation.
    pub fn table(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = write!(out, "{:<18}", "workers");
        for r in &self.records {
            let _ = write!(out, "{:>10}", r.workers);
        }
        out.push('\n');
        for (label, get) in [
            ("LS PDE (s)", (|r: &TimingRecord| r.ls_pde_s) as fn(&TimingRecord) -> f64),
            ("Mg PDE (s)", |r| r.mg_pde_s),
            ("Film PDE (s)", |r| r.film_pde_s),
            ("Total (s)", |r| r.total()),
        ] {
            let _ = write!(out, "{label:<18}");
            for r in &self.records {
                let _ = write!(out, "{:>10.4}", get(r));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<18}", "speedup");
        for &(_, s) in &self.speedups {
            let _ = write!(out, "{s:>10.3}");
        }
        out.push('\n');
        let _ = write!(out, "{:<18}", "efficiency");
        for &(_, e) in &self.efficiencies {
            let _ = write!(out, "{e:>10.3}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "sequential fraction: amdahl {:.4}, gustafson {:.4}",
            self.f_amdahl, self.f_gustafson
        );
        if !self.superlinear.is_empty() {
            let _ = writeln!(out, "superlinear efficiency at workers {:?}", self.superlinear);
        }
        out
    }
}
