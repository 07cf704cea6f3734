use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lamination_core::config::RunConfig;
use lamination_core::diagnostics::{lamination_entry, lamination_trend, write_report_csvs, DiagnosticSettings, LaminationEntry};
use lamination_core::mesh::io::{read_mesh, sidecar_path};
use lamination_core::pipeline::{run_sequence, verify_run_files, write_area_histories, RunManifest, MANIFEST};
use lamination_core::verify::verify_metric;
use lamination_core::Error;

const REPORT: &str = "lamination_report.json";
const VERIFY_REPORT: &str = "verify_metric.json";
const CSV_REPORTS: [&str; 3] = ["area_histories.csv", "crossing_heights.csv", "curvature_bands.csv"];

/// Minimal annuli in warped products and the diagnostics of their limit lamination.
#[derive(Parser, Debug)]
#[command(name = "lamination", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file (`key = value` lines); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides `threads` (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::All)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the warp profile, scalar curvature, slices and walls.
    VerifyMetric,
    /// Solve, assemble and diagnose every n of the config.
    Run,
    /// Copy the artifacts of a finished run.
    Export { run_dir: PathBuf },
    /// Recompute the lamination report from a run's assembled meshes.
    Diagnose { run_dir: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Obj,
    Csv,
    Json,
    All,
}

impl Format {
    fn wants(self, f: Format) -> bool {
        self == Format::All || self == f
    }
}

/// 0 success, 1 validation failure, 2 pipeline incomplete, 3 I/O error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::Pipeline(_) | Error::Assembly(_) => 2,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> lamination_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> lamination_core::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_verify_metric(cfg: &RunConfig) -> lamination_core::Result<u8> {
    let report = verify_metric(&cfg.warp_profile(), cfg.eps0, cfg.check_grid)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join(VERIFY_REPORT), &report)?;
    for c in &report.warp.conditions {
        println!("condition ({}) {}: {}", c.id, if c.passed { "pass" } else { "FAIL" }, c.description);
    }
    let s = &report.scalar_curvature;
    println!(
        "scalar curvature: min {:.12} at z = {:.3}, {}",
        s.min,
        s.argmin,
        if s.all_positive { "positive" } else { "NOT positive" }
    );
    for sl in &report.slices {
        println!(
            "slice z = {:.4}: residual in [{:.6}, {:.6}], expected {:.6}: {}",
            sl.z,
            sl.min,
            sl.max,
            sl.expected,
            if sl.passed { "pass" } else { "FAIL" }
        );
    }
    for w in &report.walls {
        println!(
            "wall {}: residual {:.2e}, angle error {:.2e}: {}",
            w.wall,
            w.max_residual,
            w.max_angle_error,
            if w.passed { "pass" } else { "FAIL" }
        );
    }
    println!("report: {}", cfg.out_dir.join(VERIFY_REPORT).display());
    Ok(if report.all_pass { 0 } else { 1 })
}

fn diagnose_meshes(
    cfg: &RunConfig,
    meshes: Vec<(u32, lamination_core::mesh::SurfaceMesh)>,
    dir: &Path,
) -> lamination_core::Result<()> {
    use rayon::prelude::*;
    let settings = DiagnosticSettings::from_config(cfg)?;
    let profile = cfg.warp_profile();
    let entries: Vec<LaminationEntry> = meshes
        .par_iter()
        .map(|(n, m)| lamination_entry(*n, m, &profile, &settings))
        .collect::<lamination_core::Result<_>>()?;
    let report = lamination_trend(entries);
    write_json(&dir.join(REPORT), &report)?;
    write_report_csvs(&report, dir)?;
    for e in &report.entries {
        println!(
            "n = {}: {} crossings ({} above, {} below), min |z| {:?}, trace pass {:.3}, self-intersections {}",
            e.n,
            e.sheet_count,
            e.census.above.len(),
            e.census.below.len(),
            e.min_abs_height,
            e.trace.pass_fraction,
            e.self_intersections
        );
    }
    if let Some(t) = &report.trend {
        println!(
            "trend: counts nondecreasing {}, min height decreasing {}, two-sided {}",
            t.counts_nondecreasing, t.min_height_decreasing, report.two_sided_all
        );
    }
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> lamination_core::Result<u8> {
    let (manifest, entries) = run_sequence(cfg)?;
    let dir = &cfg.out_dir;
    write_area_histories(dir, &manifest, &dir.join(CSV_REPORTS[0]))?;
    for r in &manifest.records {
        match &r.error {
            None => println!("n = {}: complete ({} stages)", r.n, r.stages.len()),
            Some(e) => println!("n = {}: INCOMPLETE: {e}", r.n),
        }
    }
    let meshes = entries.into_iter().filter_map(|e| e.assembled.map(|a| (e.n, a.mesh))).collect();
    diagnose_meshes(cfg, meshes, dir)?;
    println!("run directory: {}", dir.display());
    Ok(if manifest.all_complete() { 0 } else { 2 })
}

fn config_from_manifest(manifest: &RunManifest) -> lamination_core::Result<RunConfig> {
    let text: String = manifest.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    RunConfig::parse(&text)
}

fn cmd_diagnose(cli: &Cli, run_dir: &Path) -> lamination_core::Result<u8> {
    let manifest = RunManifest::load(run_dir)?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => config_from_manifest(&manifest)?,
    };
    cfg.out_dir = cli.out.clone().unwrap_or_else(|| run_dir.to_path_buf());
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut meshes = Vec::new();
    for r in &manifest.records {
        if let Some(f) = &r.assembled_file {
            meshes.push((r.n, read_mesh(&run_dir.join(&f.path))?.0));
        }
    }
    diagnose_meshes(&cfg, meshes, &cfg.out_dir)?;
    Ok(if manifest.all_complete() { 0 } else { 2 })
}

fn copy_into(run_dir: &Path, dest: &Path, rel: &str) -> lamination_core::Result<()> {
    let target = dest.join(rel);
    if let Some(parent) = target.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::copy(run_dir.join(rel), target)?;
    Ok(())
}

fn cmd_export(cli: &Cli, run_dir: &Path) -> lamination_core::Result<u8> {
    let manifest = match RunManifest::load(run_dir) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("missing: {} ({e})", run_dir.join(MANIFEST).display());
            return Ok(3);
        }
    };
    let problems: Vec<_> = verify_run_files(run_dir, &manifest).into_iter().filter(|(_, v)| v.is_err()).collect();
    if !problems.is_empty() {
        for (path, v) in &problems {
            eprintln!("{}: {}", path, v.as_ref().unwrap_err());
        }
        return Ok(3);
    }
    let dest = cli.out.clone().unwrap_or_else(|| run_dir.join("export"));
    std::fs::create_dir_all(&dest)?;
    let mut written = 0usize;
    if cli.format.wants(Format::Obj) {
        for r in &manifest.records {
            let files = r.stages.iter().map(|s| &s.mesh_file).chain(r.core_file.iter()).chain(r.assembled_file.iter());
            for f in files {
                copy_into(run_dir, &dest, &f.path)?;
                let side = sidecar_path(Path::new(&f.path));
                copy_into(run_dir, &dest, side.to_str().expect("utf-8 path"))?;
                written += 1;
            }
        }
    }
    if cli.format.wants(Format::Csv) {
        write_area_histories(run_dir, &manifest, &dest.join(CSV_REPORTS[0]))?;
        written += 1;
        for name in &CSV_REPORTS[1..] {
            if run_dir.join(name).exists() {
                copy_into(run_dir, &dest, name)?;
                written += 1;
            }
        }
    }
    if cli.format.wants(Format::Json) {
        for name in [MANIFEST, REPORT] {
            if run_dir.join(name).exists() {
                copy_into(run_dir, &dest, name)?;
                written += 1;
            }
        }
    }
    println!("exported {written} files to {}", dest.display());
    Ok(0)
}

fn dispatch(cli: &Cli) -> lamination_core::Result<u8> {
    match &cli.command {
        Command::VerifyMetric => cmd_verify_metric(&load_config(cli)?),
        Command::Run => cmd_run(&load_config(cli)?),
        Command::Export { run_dir } => cmd_export(cli, run_dir),
        Command::Diagnose { run_dir } => cmd_diagnose(cli, run_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let from_config = cli.config.as_ref().and_then(|p| RunConfig::load(p).ok()).map(|c| c.threads);
    let threads = cli.threads.or(from_config).unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
