//! Command line front end: `simulate`, `scaling` and `fit` subcommands.

use rdfront::config::{parse_config_file, parse_worker_list, RunMode, SimConfig};
use rdfront::perf::{ScalingLaw, ScalingMode};
use rdfront::sim;
use std::path::PathBuf;
use std::process::ExitCode;

const USAGE: &str = "\
rdfront - parallel reaction-diffusion solver with a moving interface

USAGE:
    rdfront simulate --config <path> [--workers N] [--out DIR]
    rdfront scaling --mode strong|weak --config <path> --workers 1,2,4,8 [--out DIR]
    rdfront fit --input <timings.csv> --law amdahl|gustafson

Outputs land in the configured output directory: observables.csv,
timings.csv and snapshot_<step>.vtk.
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Vec<String>) -> Result<(), String> {
    let mut it = args.into_iter();
    let sub = it.next().ok_or_else(|| format!("missing subcommand\n\n{USAGE}"))?;
    let rest: Vec<String> = it.collect();
    match sub.as_str() {
        "simulate" => simulate(rest),
        "scaling" => scaling(rest),
        "fit" => fit(rest),
        "--help" | "-h" | "help" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(format!("unknown subcommand `{other}`\n\n{USAGE}")),
    }
}

struct Flags {
    values: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: Vec<String>) -> Result<Flags, String> {
        let mut values = Vec::new();
        let mut it = args.into_iter();
        while let Some(flag) = it.next() {
            let name = flag
                .strip_prefix("--")
                .ok_or_else(|| format!("expected a --flag, got `{flag}`"))?;
            let value = it.next().ok_or_else(|| format!("--{name} needs a value"))?;
            values.push((name.to_string(), value));
        }
        Ok(Flags { values })
    }

    fn take(&mut self, name: &str) -> Option<String> {
        let pos = self.values.iter().position(|(n, _)| n == name)?;
        Some(self.values.remove(pos).1)
    }

    fn finish(self) -> Result<(), String> {
        if let Some((name, _)) = self.values.into_iter().next() {
            return Err(format!("unknown flag --{name}"));
        }
        Ok(())
    }
}

fn load_config(flags: &mut Flags) -> Result<SimConfig, String> {
    let path = flags.take("config").ok_or("--config is required")?;
    let mut cfg = parse_config_file(&path).map_err(|e| e.to_string())?;
    if let Some(w) = flags.take("workers") {
        // For `simulate` this is a single count; `scaling` consumes the flag
        // before calling here.
        cfg.workers = w.parse().map_err(|_| format!("invalid --workers `{w}`"))?;
    }
    if let Some(out) = flags.take("out") {
        cfg.out_dir = PathBuf::from(out);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn simulate(args: Vec<String>) -> Result<(), String> {
    let mut flags = Flags::parse(args)?;
    let cfg = load_config(&mut flags)?;
    flags.finish()?;
    let mut stdout = std::io::stdout();
    match cfg.mode {
        RunMode::Simulate => {
            sim::run_simulation(&cfg, &mut stdout).map_err(|e| e.to_string())?;
        }
        RunMode::FitOnly => {
            let input = cfg.fit_input.clone().expect("validated");
            for law in [ScalingLaw::Amdahl, ScalingLaw::Gustafson] {
                let (_, text) = sim::run_fit(&input, law).map_err(|e| e.to_string())?;
                print!("{text}");
            }
        }
        RunMode::StrongScaling => {
            sim::run_scaling(&cfg, ScalingMode::Strong, &cfg.scaling_workers.clone(), &mut stdout)
                .map_err(|e| e.to_string())?;
        }
        RunMode::WeakScaling => {
            sim::run_scaling(&cfg, ScalingMode::Weak, &cfg.scaling_workers.clone(), &mut stdout)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn scaling(args: Vec<String>) -> Result<(), String> {
    let mut flags = Flags::parse(args)?;
    let mode = match flags.take("mode").ok_or("--mode is required")?.as_str() {
        "strong" => ScalingMode::Strong,
        "weak" => ScalingMode::Weak,
        other => return Err(format!("unknown mode `{other}` (expected strong or weak)")),
    };
    let workers = match flags.take("workers") {
        Some(list) => parse_worker_list(&list)?,
        None => return Err("--workers is required, e.g. --workers 1,2,4".into()),
    };
    let cfg = load_config(&mut flags)?;
    flags.finish()?;
    let mut stdout = std::io::stdout();
    sim::run_scaling(&cfg, mode, &workers, &mut stdout).map_err(|e| e.to_string())?;
    Ok(())
}

fn fit(args: Vec<String>) -> Result<(), String> {
    let mut flags = Flags::parse(args)?;
    let input = PathBuf::from(flags.take("input").ok_or("--input is required")?);
    let law = match flags.take("law").ok_or("--law is required")?.as_str() {
        "amdahl" => ScalingLaw::Amdahl,
        "gustafson" => ScalingLaw::Gustafson,
        other => return Err(format!("unknown law `{other}` (expected amdahl or gustafson)")),
    };
    flags.finish()?;
    let (_, text) = sim::run_fit(&input, law).map_err(|e| e.to_string())?;
    print!("{text}");
    Ok(())
}
