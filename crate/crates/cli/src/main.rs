//! `dispersim`: batch runner for dispersive-equation scenarios and check suites.
//!
//! Every subcommand takes one or more `--config` files, writes artifacts under
//! `<out>/<name>/` and exits with status 0 iff every enabled check passes
//! (1 when a check fails, 2 on configuration or runtime errors).

mod suite;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dispersim::campaign::{refit, run_scenario, CheckResult, RunOptions};
use dispersim::config::{DataShape, Scenario};

use suite::{run_suite, SuiteConfig, SuiteKind};

const BUILD: &str = env!("DISPERSIM_BUILD");

#[derive(Parser)]
#[command(name = "dispersim", version = BUILD, about = "Long-time asymptotics lab for 1-D cubic dispersive equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario configs (evolution, diagnostics, checks).
    Run(Common),
    /// Dispersive decay, stationary phase and vector-field suites.
    LinearCheck(Common),
    /// Wave-packet residual scaling.
    PacketTest(Common),
    /// Scenario runs that must record wave-packet profiles.
    Scatter(Common),
    /// Scenario runs starting from a scattering profile.
    Waveop(Common),
    /// Division symbol and fast cubic path suites.
    DivisionCheck(Common),
    /// Re-evaluate scenario checks on existing artifacts.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Config file; repeat to run several.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Parent directory for artifacts (default: the config's `output_dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent configs (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

struct Finished {
    name: String,
    checks: Vec<CheckResult>,
}

fn out_root(flag: &Option<PathBuf>, cfg: &Option<PathBuf>) -> PathBuf {
    flag.clone().or_else(|| cfg.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = Scenario::from_file(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    sc.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(sc)
}

fn scenario(path: &Path, common: &Common, require: Option<SuiteReq>) -> Result<Finished> {
    let sc = load_scenario(path, common.seed)?;
    match require {
        Some(SuiteReq::Packets) if sc.diagnostics.packets.is_none() => {
            bail!("{}: scatter needs [diagnostics.packets]", path.display())
        }
        Some(SuiteReq::Profile) if !matches!(sc.data.shape, DataShape::ScatteringProfile { .. }) => {
            bail!("{}: waveop needs data shape scattering_profile", path.display())
        }
        _ => {}
    }
    let opts = RunOptions {
        out_dir: Some(out_root(&common.out, &sc.output_dir)),
        build: BUILD.to_string(),
    };
    let out = run_scenario(&sc, &opts).with_context(|| format!("running {}", sc.name))?;
    Ok(Finished { name: sc.name, checks: out.checks })
}

fn report(path: &Path, common: &Common) -> Result<Finished> {
    let sc = load_scenario(path, common.seed)?;
    let root = out_root(&common.out, &sc.output_dir);
    let out = refit(&sc, &root).with_context(|| format!("reading artifacts of {}", sc.name))?;
    let dir = root.join(&sc.name);
    let body = serde_json::json!({ "scenario": sc.name, "build": BUILD, "checks": out.checks, "fits": out.fits });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&body)?)?;
    Ok(Finished { name: sc.name, checks: out.checks })
}

fn suite(path: &Path, common: &Common, kind: SuiteKind) -> Result<Finished> {
    let mut cfg = SuiteConfig::from_file(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let dir = out_root(&common.out, &cfg.output_dir).join(&cfg.name);
    fs::create_dir_all(&dir)?;
    let clock = std::time::Instant::now();
    let result = run_suite(&cfg, kind);
    let (checks, failure) = match &result {
        Ok(o) => (o.checks.clone(), None),
        Err(e) => (Vec::new(), Some(format!("{e:#}"))),
    };
    if let Ok(o) = &result {
        for (file, body) in &o.csv {
            fs::write(dir.join(file), body)?;
        }
    }
    let summary = serde_json::json!({
        "suite": cfg.name,
        "build": BUILD,
        "seed": cfg.seed,
        "passed": failure.is_none() && checks.iter().all(|c| c.passed),
        "failure": failure,
        "runtime_s": clock.elapsed().as_secs_f64(),
        "checks": checks,
        "details": result.as_ref().ok().map(|o| &o.details),
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    result?;
    Ok(Finished { name: cfg.name, checks })
}

#[derive(Clone, Copy)]
enum SuiteReq {
    Packets,
    Profile,
}

fn print_checks(f: &Finished) {
    for c in &f.checks {
        let value = c.value.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let bound = |b: Option<f64>| b.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        println!(
            "{} {}/{} value={} bounds=[{}, {}]{}",
            if c.passed { "PASS" } else { "FAIL" },
            f.name,
            c.name,
            value,
            bound(c.min),
            bound(c.max),
            c.error.as_ref().map_or(String::new(), |e| format!(" ({e})"))
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, job): (&Common, Box<dyn Fn(&Path, &Common) -> Result<Finished> + Sync>) = match &cli.command {
        Command::Run(c) => (c, Box::new(|p, c| scenario(p, c, None))),
        Command::Scatter(c) => (c, Box::new(|p, c| scenario(p, c, Some(SuiteReq::Packets)))),
        Command::Waveop(c) => (c, Box::new(|p, c| scenario(p, c, Some(SuiteReq::Profile)))),
        Command::Report(c) => (c, Box::new(report)),
        Command::LinearCheck(c) => (c, Box::new(|p, c| suite(p, c, SuiteKind::Linear))),
        Command::PacketTest(c) => (c, Box::new(|p, c| suite(p, c, SuiteKind::Packets))),
        Command::DivisionCheck(c) => (c, Box::new(|p, c| suite(p, c, SuiteKind::Division))),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let results: Vec<Result<Finished>> = pool.install(|| common.configs.par_iter().map(|p| job(p, common)).collect());
    let mut code = 0u8;
    for r in &results {
        match r {
            Ok(f) => {
                print_checks(f);
                if f.checks.iter().any(|c| !c.passed) {
                    code = code.max(1);
                }
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                code = 2;
            }
        }
    }
    ExitCode::from(code)
}
