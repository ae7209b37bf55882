//! `dwstab` command-line front end.

mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dwstab::charmat::CharMatrixEvaluator;
use dwstab::config::{parse_config, ProblemConfig, ResolvedProblem, ScanConfig};
use dwstab::control::{scan_gain, GainTemplate, ScanSettings};
use dwstab::oracle::{compare_pipelines, CompareSettings};
use dwstab::report::{to_json, write_scan_table, AnalysisReport, ComparisonOutput, REPORT_SCHEMA_VERSION};
use dwstab::roots::{classify, find_all, Classification, MultiplierSet, RootSettings, SearchRegion};

const EXIT_ERROR: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_NO_STABLE_INTERVAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dwstab", version, about = "Floquet multipliers of symmetric periodic orbits of delay equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate multipliers and classify stability.
    Analyze(ProblemArgs),
    /// Locate multipliers only.
    Roots(ProblemArgs),
    /// Cross-check multipliers against the discretized operator.
    OracleCompare(ProblemArgs),
    /// Scan the gain of equivariant delayed feedback.
    ScanGain(ProblemArgs),
    /// Run the invariant suite on the builtin catalog.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Overrides {
    /// Flow integration tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Mesh size of the discretized operator.
    #[arg(long)]
    mesh: Option<usize>,
    /// Smallest multiplier modulus searched.
    #[arg(long = "mu-min")]
    mu_min: Option<f64>,
    /// Output directory; without it results go to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProblemArgs {
    /// TOML problem config.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    config: Option<PathBuf>,
    /// Builtin problem spec, e.g. "scalar_linear a=1 b=0".
    #[arg(long)]
    builtin: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SelftestArgs {
    /// Flow integration tolerance; thresholds scale with it.
    #[arg(long)]
    tol: Option<f64>,
    /// Mesh size of the discretized operator.
    #[arg(long)]
    mesh: Option<usize>,
    /// Output directory for the result matrix.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, hide = true)]
    corrupt_theta: bool,
}

type CliResult<T> = Result<T, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Roots(a) => cmd_roots(&a),
        Command::OracleCompare(a) => cmd_oracle_compare(&a),
        Command::ScanGain(a) => cmd_scan_gain(&a),
        Command::Selftest(a) => selftest::run(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load_config(args: &ProblemArgs) -> CliResult<ProblemConfig> {
    let mut cfg = match (&args.config, &args.builtin) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| e.to_string())?
        }
        (None, Some(spec)) => ProblemConfig::from_builtin_spec(spec).map_err(|e| e.to_string())?,
        (None, None) => return Err("a config file or --builtin is required".into()),
    };
    let o = &args.overrides;
    if let Some(t) = o.tol {
        cfg.solver.flow_tol = t;
    }
    if let Some(m) = o.mesh {
        cfg.solver.mesh = m;
    }
    if let Some(m) = o.mu_min {
        cfg.solver.mu_min = m;
        if let Some(scan) = &mut cfg.scan {
            scan.mu_min = m;
        }
    }
    if let Some(dir) = &o.out {
        cfg.output.dir = Some(dir.display().to_string());
    }
    cfg.check().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Writes `contents` to `dir/name`, or to standard output without a directory.
fn emit(dir: Option<&Path>, name: &str, contents: &str) -> CliResult<()> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| format!("{}: {e}", d.display()))?;
            let path = d.join(name);
            fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Human-readable lines go to stdout when files are written, else stderr.
fn say(dir: Option<&Path>, line: &str) {
    if dir.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn out_dir(cfg: &ProblemConfig) -> Option<PathBuf> {
    cfg.output.dir.as_ref().map(PathBuf::from)
}

fn locate(cfg: &ProblemConfig, problem: &ResolvedProblem) -> CliResult<MultiplierSet> {
    let eval = CharMatrixEvaluator::new(problem.coeffs.clone(), problem.orbit.shift(), cfg.solver.flow_tol)
        .map_err(|e| e.to_string())?;
    let region = SearchRegion::from_min_multiplier(cfg.solver.mu_min).map_err(|e| e.to_string())?;
    find_all(&eval, &region, &RootSettings::default()).map_err(|e| e.to_string())
}

fn summarize_roots(dir: Option<&Path>, set: &MultiplierSet) {
    say(dir, &format!("{} multiplier(s), total multiplicity {}", set.roots.len(), set.multiplicity_sum()));
    for r in &set.roots {
        let mu = r.multiplier;
        say(dir, &format!("  mu = {:+.12e} {:+.12e}i  |mu| = {:.12e}  m = {}", mu.re, mu.im, mu.norm(), r.multiplicity));
    }
}

fn verdict_name(c: Classification) -> &'static str {
    match c {
        Classification::Stable => "stable",
        Classification::Unstable => "unstable",
        Classification::Inconclusive => "inconclusive",
    }
}

fn cmd_analyze(args: &ProblemArgs) -> CliResult<u8> {
    let cfg = load_config(args)?;
    let dir = out_dir(&cfg);
    let dir = dir.as_deref();
    let problem = cfg.resolve().map_err(|e| e.to_string())?;
    let set = locate(&cfg, &problem)?;
    let verdict = classify(&set, cfg.solver.tol_unit);
    let report = AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION,
        problem: problem.label.clone(),
        dimension: problem.coeffs.dim(),
        delay: problem.coeffs.delay(),
        validation: problem.validation.clone(),
        multipliers: set,
        verdict,
    };
    emit(dir, "analysis.json", &to_json(&report).map_err(|e| e.to_string())?)?;
    say(dir, &format!("problem: {}", report.problem));
    summarize_roots(dir, &report.multipliers);
    say(dir, &format!("verdict: {}", verdict_name(report.verdict.classification)));
    for w in &report.verdict.warnings {
        say(dir, &format!("  note: {w}"));
    }
    Ok(match report.verdict.classification {
        Classification::Inconclusive => EXIT_INCONCLUSIVE,
        _ => 0,
    })
}

fn cmd_roots(args: &ProblemArgs) -> CliResult<u8> {
    let cfg = load_config(args)?;
    let dir = out_dir(&cfg);
    let dir = dir.as_deref();
    let problem = cfg.resolve().map_err(|e| e.to_string())?;
    let set = locate(&cfg, &problem)?;
    emit(dir, "multipliers.json", &to_json(&set).map_err(|e| e.to_string())?)?;
    summarize_roots(dir, &set);
    Ok(0)
}

fn cmd_oracle_compare(args: &ProblemArgs) -> CliResult<u8> {
    let cfg = load_config(args)?;
    let dir = out_dir(&cfg);
    let dir = dir.as_deref();
    let problem = cfg.resolve().map_err(|e| e.to_string())?;
    let s = &cfg.solver;
    let settings = CompareSettings {
        mesh: s.mesh,
        mu_floor: s.mu_floor,
        match_tol: s.match_tol,
        flow_tol: s.flow_tol,
        roots: RootSettings::default(),
    };
    let (set, comparison) =
        compare_pipelines(&problem.coeffs, problem.orbit.shift(), &settings).map_err(|e| e.to_string())?;
    let passed = comparison.passed;
    say(
        dir,
        &format!(
            "{}: {} matched, max error {:.3e} (tol {:.1e}), {} unmatched eigenvalue(s), {} unmatched root(s)",
            problem.label,
            comparison.pairs.len(),
            comparison.max_error,
            comparison.match_tol,
            comparison.unmatched_eigenvalues.len(),
            comparison.unmatched_roots.len()
        ),
    );
    let out = ComparisonOutput {
        schema_version: REPORT_SCHEMA_VERSION,
        problem: problem.label,
        multipliers: set,
        comparison,
    };
    emit(dir, "comparison.json", &to_json(&out).map_err(|e| e.to_string())?)?;
    say(dir, if passed { "comparison: pass" } else { "comparison: FAIL" });
    Ok(if passed { 0 } else { EXIT_ERROR })
}

fn cmd_scan_gain(args: &ProblemArgs) -> CliResult<u8> {
    let cfg = load_config(args)?;
    let dir = out_dir(&cfg);
    let dir = dir.as_deref();
    let problem = cfg.resolve().map_err(|e| e.to_string())?;
    let builtin = problem.builtin.as_ref().ok_or("gain scans need a builtin problem")?;
    let mut template: GainTemplate =
        builtin.gain_template.clone().ok_or_else(|| format!("builtin `{}` has no feedback template", builtin.name))?;
    if let Some(k0) = cfg.gain_structure(builtin.dim()).map_err(|e| e.to_string())? {
        template.structure = k0;
    }
    let scan = cfg.scan.clone().unwrap_or_else(|| ScanConfig {
        mu_min: args.overrides.mu_min.unwrap_or(ScanConfig::default().mu_min),
        ..ScanConfig::default()
    });
    let settings = ScanSettings {
        flow_tol: cfg.solver.flow_tol,
        mu_min: scan.mu_min,
        validation_tol: cfg.solver.validation_tol,
        tol_unit: cfg.solver.tol_unit,
        roots: RootSettings::default(),
    };
    let result = scan_gain(&template, &scan.grid(), &settings).map_err(|e| e.to_string())?;
    match dir {
        Some(_) => {
            emit(dir, "scan.tsv", &write_scan_table(&result))?;
            emit(dir, "scan.json", &to_json(&result).map_err(|e| e.to_string())?)?;
        }
        None => emit(None, "scan.tsv", &write_scan_table(&result))?,
    }
    let failed = result.points.iter().filter(|p| p.error.is_some()).count();
    say(dir, &format!("{}: {} grid point(s), {} failed", problem.label, result.points.len(), failed));
    if result.stable_intervals.is_empty() {
        say(dir, "no stable interval");
        return Ok(EXIT_NO_STABLE_INTERVAL);
    }
    for (a, b) in &result.stable_intervals {
        say(dir, &format!("stable for k in [{a}, {b}]"));
    }
    Ok(0)
}
