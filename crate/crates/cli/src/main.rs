//! `edgelab` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 self-test oracle
//! failure.

mod plot;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use edgelab_core::analyzer::{analyze, AnalyzerConfig, Captures, FrameOwdEndpoints, MatchMode};
use edgelab_core::config::{self, manifest, manifest_scenario, LabConfig, RunManifest};
use edgelab_core::emulator::{self, NTP_FILE, TRUTH_FILE};
use edgelab_core::kpis::{build_report, write_csv, KpiReport, ReportConfig, ScenarioLabel};
use edgelab_core::model::{write_ndjson, Tap};
use edgelab_core::{selftest, sweep};

const MANIFEST_FILE: &str = "manifest.ini";
const SAMPLES_FILE: &str = "samples.ndjson";
const REPORT_CSV: &str = "report.csv";
const REPORT_NDJSON: &str = "report.ndjson";
const REPORT_JSON: &str = "report.json";
const COMPARISON_FILE: &str = "comparison.csv";
const MEDIANS_FILE: &str = "medians.csv";

#[derive(Parser)]
#[command(name = "edgelab", version, about = "Deterministic 4G/5G edge-latency emulation and KPI analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emulate one scenario and write the tap captures, NTP trace and truth log.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Replace existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Extract samples from a capture directory and write the KPI report.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// SRTT gain.
        #[arg(long, default_value_t = 0.125)]
        alpha: f64,
        #[arg(long = "match", value_enum, default_value_t = MatchArg::Pid)]
        match_mode: MatchArg,
        #[arg(long = "frame-owd", value_enum, default_value_t = FrameOwdArg::FirstLast)]
        frame_owd: FrameOwdArg,
        /// Service time bound for the reliability fraction, ms.
        #[arg(long, default_value_t = 100.0)]
        bound_ms: f64,
        /// Reliability level used for latency_at, response time and velocity.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output directory; defaults to the capture directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the five standard scenarios and compare them.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Render samples or demand as SVG, or as text with --ascii.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// cdf: samples.ndjson. box: samples.ndjson or a sweep directory.
        /// throughput: a configuration file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sample class to plot (cdf, box).
        #[arg(long)]
        class: Option<String>,
        /// Reliability level marked on the CDF.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        ascii: bool,
        #[arg(long)]
        force: bool,
    },
    /// Run the built-in oracle battery.
    Selftest {
        /// SRTT gain under test.
        #[arg(long, default_value_t = 0.125, hide = true)]
        alpha: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Pid,
    Seq,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameOwdArg {
    FirstLast,
    FirstFirst,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PlotKind {
    Cdf,
    Box,
    Throughput,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Simulate { config, seed, out, force } => simulate(&config, seed, &out, force),
        Command::Analyze { input, alpha, match_mode, frame_owd, bound_ms, level, out, force } => {
            let acfg = AnalyzerConfig {
                alpha,
                match_mode: match match_mode {
                    MatchArg::Pid => MatchMode::Pid,
                    MatchArg::Seq => MatchMode::Seq,
                },
                frame_owd_endpoints: match frame_owd {
                    FrameOwdArg::FirstLast => FrameOwdEndpoints::FirstToLast,
                    FrameOwdArg::FirstFirst => FrameOwdEndpoints::FirstToFirst,
                },
            };
            if !(bound_ms > 0.0) || !(level > 0.0 && level <= 1.0) {
                bail!("--bound-ms must be > 0 and --level must lie in (0, 1]");
            }
            let rcfg = ReportConfig { reliability_bound_ms: bound_ms, reliability_level: level, ..Default::default() };
            let out = out.unwrap_or_else(|| input.clone());
            analyze_dir(&input, &out, &acfg, &rcfg, force)
        }
        Command::Sweep { config, out, force } => run_sweep(&config, &out, force),
        Command::Plot { kind, input, out, class, level, ascii, force } => {
            refuse_overwrite(std::slice::from_ref(&out), force)?;
            let text = plot::render(kind, &input, class.as_deref(), level, ascii)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { alpha } => {
            let report = selftest::run(&selftest::SelftestOptions { alpha, ..Default::default() });
            for c in &report.checks {
                println!("{}  {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} checks, {} failed", report.checks.len(), report.failures());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn load_config(path: &Path) -> Result<LabConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    config::parse(&text).with_context(|| format!("{}", path.display()))
}

/// Fails when any of `paths` exists, unless `force` is set.
fn refuse_overwrite(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    if let Some(p) = paths.iter().find(|p| p.exists()) {
        bail!("{} already exists; pass --force to overwrite", p.display());
    }
    Ok(())
}

fn capture_outputs(dir: &Path) -> Vec<PathBuf> {
    Tap::ALL
        .iter()
        .map(|t| t.file_name())
        .chain([NTP_FILE, TRUTH_FILE, MANIFEST_FILE])
        .map(|f| dir.join(f))
        .collect()
}

fn report_outputs(dir: &Path) -> Vec<PathBuf> {
    [SAMPLES_FILE, REPORT_CSV, REPORT_NDJSON, REPORT_JSON].iter().map(|f| dir.join(f)).collect()
}

fn simulate(config_path: &Path, seed: Option<u64>, out: &Path, force: bool) -> Result<ExitCode> {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = cfg.resolve()?;
    refuse_overwrite(&capture_outputs(out), force)?;
    let set = emulator::run(&run)?;
    set.write_dir(out).with_context(|| format!("writing captures to {}", out.display()))?;
    let meta = RunManifest {
        command: "simulate".into(),
        config_path: config_path.display().to_string(),
        out_dir: out.display().to_string(),
    };
    fs::write(out.join(MANIFEST_FILE), manifest(&meta, &run, &cfg.report))?;
    println!(
        "{}: {} UE, {} CORE, {} APP records, {} frames -> {}",
        run.scenario.label(),
        set.ue.len(),
        set.core.len(),
        set.app.len(),
        set.truth.frames.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_report(dir: &Path, analysis: &edgelab_core::analyzer::Analysis, report: &KpiReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_ndjson(BufWriter::new(fs::File::create(dir.join(SAMPLES_FILE))?), &analysis.sample_records())?;
    let rows = report.rows();
    write_csv(BufWriter::new(fs::File::create(dir.join(REPORT_CSV))?), &rows)?;
    write_ndjson(BufWriter::new(fs::File::create(dir.join(REPORT_NDJSON))?), &rows)?;
    fs::write(dir.join(REPORT_JSON), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

fn analyze_dir(input: &Path, out: &Path, acfg: &AnalyzerConfig, rcfg: &ReportConfig, force: bool) -> Result<ExitCode> {
    let captures = Captures::load(input)?;
    let analysis = analyze(&captures, acfg)?;
    // the manifest only names the scenario; nothing else is read from it
    let label = fs::read_to_string(input.join(MANIFEST_FILE))
        .ok()
        .and_then(|m| manifest_scenario(&m))
        .and_then(|(tech, range)| edgelab_core::model::Scenario::new(tech, range).ok())
        .map(|s| ScenarioLabel::of(&s))
        .unwrap_or_else(ScenarioLabel::unknown);
    let report = build_report(&analysis, rcfg, label);
    refuse_overwrite(&report_outputs(out), force)?;
    write_report(out, &analysis, &report)?;
    print_summary(&report);
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map(|x| format!("{x:.3} {unit}")).unwrap_or_else(|| "absent".into())
}

fn print_summary(r: &KpiReport) {
    println!("scenario {}", r.label.scenario);
    for k in &r.latency {
        println!(
            "  {:<13} latency median {:.3} ms, p95 {:.3} ms, srtt {:.3} ms ({} samples)",
            k.class.as_str(),
            k.median_ms,
            k.p95_ms,
            k.srtt_last_ms,
            k.samples
        );
    }
    for k in &r.owd {
        println!(
            "  {:<13} owd mean {:.3} ± {:.3} ms, p95 {:.3} ms ({} samples)",
            k.class.as_str(),
            k.mean_ms,
            k.sigma_ms,
            k.p95_ms,
            k.samples
        );
    }
    println!("  availability {}", fmt_opt(r.availability_pct, "%"));
    println!("  e2e srt {}", fmt_opt(r.e2e_srt.as_ref().map(|e| e.srt_assumed_ms), "ms"));
    println!("  velocity {}", fmt_opt(r.velocity.as_ref().map(|v| v.kmh), "km/h"));
    if !r.absent.is_empty() {
        println!("  absent: {}", r.absent.join(", "));
    }
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

fn run_sweep(config_path: &Path, out: &Path, force: bool) -> Result<ExitCode> {
    let cfg = load_config(config_path)?;
    let mut planned = vec![out.join(COMPARISON_FILE), out.join(MEDIANS_FILE)];
    for (tech, range) in config::SWEEP {
        planned.push(out.join(format!("{}-{}", tech.label(), range.as_str())));
    }
    refuse_overwrite(&planned, force)?;
    let outcomes = sweep::run_sweep(&cfg, &AnalyzerConfig::default())?;
    for o in &outcomes {
        let dir = out.join(&o.report.label.scenario);
        o.captures.write_dir(&dir)?;
        let meta = RunManifest {
            command: "sweep".into(),
            config_path: config_path.display().to_string(),
            out_dir: dir.display().to_string(),
        };
        fs::write(dir.join(MANIFEST_FILE), manifest(&meta, &o.run, &cfg.report))?;
        write_report(&dir, &o.analysis, &o.report)?;
    }
    let rows = sweep::comparison(&outcomes);
    fs::write(out.join(COMPARISON_FILE), sweep::comparison_csv(&rows))?;
    fs::write(out.join(MEDIANS_FILE), sweep::median_csv(&outcomes))?;

    println!("{:<12} {:>10} {:>12} {:>14}", "scenario", "owd p95", "e2e srt", "velocity");
    for r in &rows {
        println!(
            "{:<12} {:>10} {:>12} {:>14}",
            r.scenario,
            fmt_opt(r.owd_frame_ms, "ms"),
            fmt_opt(r.e2e_srt_ms, "ms"),
            fmt_opt(r.velocity_kmh, "km/h")
        );
    }
    println!();
    print!("{}", sweep::median_csv(&outcomes));
    Ok(ExitCode::SUCCESS)
}
