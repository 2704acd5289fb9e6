//! Probe dispatch, artifact writing and the run/report drivers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qla_core::estimators::{estimate, OptimizerSettings, QuadratureSettings};
use qla_core::field::LocalChart;
use qla_core::models::{self, ModelKind};
use qla_core::stream::child_stream;
use qla_core::verification::{self, default_f_family, ProbeContext, ProbeReport, Verdict};

use crate::config::{ResolvedConfig, ResolvedProbe};

pub const MARKER_FILE: &str = "INCOMPLETE.marker";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub probes: Vec<ProbeSummary>,
    pub exit_code: i32,
}

#[derive(Serialize, Deserialize)]
pub struct ProbeSummary {
    pub name: String,
    pub file_stem: String,
    pub verdict: Verdict,
}

/// Runs one named probe with its resolved settings.
pub fn dispatch_probe(
    cfg: &ResolvedConfig,
    probe: &ResolvedProbe,
    ctx: &ProbeContext,
) -> Result<ProbeReport> {
    let spec = cfg.model_spec()?;
    let schedule = cfg.scaling_schedule()?;
    let profile = cfg.condition_profile()?;
    let space = spec.parameter_space()?;
    let prior = cfg.prior_for(&space)?;
    let opt = OptimizerSettings::default();
    let quad = QuadratureSettings {
        nodes_per_dim: probe.nodes_per_dim as usize,
        refine_check: true,
    };
    let reps = probe.reps as usize;

    let report = match probe.name.as_str() {
        "pld_tail" => {
            verification::pld_tail_probe(&spec, &schedule, &profile, &probe.r_grid, reps, ctx)?
        }
        "identifiability" => {
            verification::identifiability_probe(&spec, probe.grid_size as usize, ctx)?
        }
        "condition_norm" => {
            verification::condition_norm_probe(&spec, &schedule, &profile, reps, ctx)?
        }
        "gamma_uniform_consistency" => {
            verification::gamma_uniform_consistency_probe(&spec, &schedule, probe.k, reps, ctx)?
        }
        "efficiency_residual" => {
            verification::efficiency_residual_probe(&spec, &schedule, &opt, reps, ctx)?
        }
        "mle_bayes_gap" => {
            verification::mle_bayes_gap_probe(&spec, &schedule, &prior, &opt, &quad, reps, ctx)?
        }
        "moment_convergence" => verification::moment_convergence_probe(
            &spec,
            &schedule,
            &default_f_family(),
            &prior,
            &opt,
            &quad,
            reps,
            ctx,
        )?,
        "studentized_normality" => {
            verification::studentized_normality_probe(&spec, &schedule, &opt, reps, ctx)?
        }
        "qbe_integrability" => verification::qbe_integrability_check(
            &spec,
            &schedule,
            probe.q,
            probe.delta,
            reps,
            ctx,
        )?,
        other => bail!("unknown probe '{other}'"),
    };
    Ok(report)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_report_files(dir: &Path, stem: &str, report: &ProbeReport) -> Result<()> {
    fs::write(dir.join(format!("{stem}.report.json")), report.to_json())
        .with_context(|| format!("writing report for {stem}"))?;
    for (series, body) in report.csv_tables() {
        let file = format!("{stem}__{}.csv", sanitize(&series));
        fs::write(dir.join(file), body)?;
    }
    Ok(())
}

/// Dumps one simulated path per scheduled scale (replicate 0 of a dedicated
/// stream): `t,x` for the OU model, `i,dx` for the volatility model. The
/// synthetic model has no path and dumps nothing.
fn dump_paths(cfg: &ResolvedConfig, dir: &Path) -> Result<()> {
    let spec = cfg.model_spec()?;
    let paths_dir = dir.join("paths");
    match spec.kind {
        ModelKind::OuDrift => {
            fs::create_dir_all(&paths_dir)?;
            for &t in &cfg.schedule {
                let s = spec.with_horizon(t);
                let path = models::simulate_ou_path(&s, &mut child_stream(cfg.seed, "dump", 0))?;
                let mut body = String::from("t,x\n");
                for (i, x) in path.x.iter().enumerate() {
                    body.push_str(&format!("{},{}\n", i as f64 * path.mesh, x));
                }
                fs::write(paths_dir.join(format!("ou_T{t}.csv")), body)?;
            }
        }
        ModelKind::VolContrast => {
            fs::create_dir_all(&paths_dir)?;
            for &t in &cfg.schedule {
                let s = spec.with_horizon(t);
                let incr =
                    models::simulate_vol_increments(&s, &mut child_stream(cfg.seed, "dump", 0))?;
                let mut body = String::from("i,dx\n");
                for (i, dx) in incr.iter().enumerate() {
                    body.push_str(&format!("{},{}\n", i + 1, dx));
                }
                fs::write(paths_dir.join(format!("vol_n{t}.csv")), body)?;
            }
        }
        ModelKind::SyntheticLaq => {}
    }
    Ok(())
}

pub struct RunOptions {
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub strict: bool,
    pub dump_paths: bool,
}

/// Executes every configured probe, writes tables, reports and the summary,
/// and returns the exit code (0 all pass, 2 any inconclusive, 1 any fail).
pub fn run(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<i32> {
    fs::create_dir_all(&opts.out_dir)
        .with_context(|| format!("cannot create output directory {}", opts.out_dir.display()))?;
    let hash = cfg.hash();
    fs::write(
        opts.out_dir.join(RESOLVED_CONFIG_FILE),
        cfg.canonical_json(),
    )?;

    let outcome = execute_probes(cfg, opts, &hash);
    match outcome {
        Ok(code) => Ok(code),
        Err(e) => {
            // Leave a partial-results marker so `report` can tell.
            let _ = fs::write(
                opts.out_dir.join(MARKER_FILE),
                format!("run aborted: {e:#}\n"),
            );
            Err(e)
        }
    }
}

fn execute_probes(cfg: &ResolvedConfig, opts: &RunOptions, hash: &str) -> Result<i32> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = opts.threads {
            b = b.num_threads(n);
        }
        b.build().context("building worker pool")?
    };

    let ctx = ProbeContext::new(cfg.seed, hash);
    let mut summaries = Vec::with_capacity(cfg.probes.len());
    for (idx, probe) in cfg.probes.iter().enumerate() {
        let report = pool.install(|| dispatch_probe(cfg, probe, &ctx))?;
        if opts.strict {
            ensure_quadrature_strict(&report)?;
        }
        let stem = format!("{:02}_{}", idx, sanitize(&probe.name));
        write_report_files(&opts.out_dir, &stem, &report)?;
        summaries.push(ProbeSummary {
            name: probe.name.clone(),
            file_stem: stem,
            verdict: report.verdict,
        });
    }

    if opts.dump_paths {
        dump_paths(cfg, &opts.out_dir)?;
    }

    let exit_code = exit_code_for(summaries.iter().map(|s| s.verdict));
    let summary = Summary {
        config_hash: hash.to_string(),
        seed: cfg.seed,
        probes: summaries,
        exit_code,
    };
    fs::write(
        opts.out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(exit_code)
}

/// Under --strict, a QBE node-doubling error above 1e-6 aborts the run.
fn ensure_quadrature_strict(report: &ProbeReport) -> Result<()> {
    for row in report.grid.iter().filter(|r| r.series == "quad_error_max") {
        if row.estimate > 1e-6 {
            bail!(
                "strict mode: QBE quadrature self-check error {:.3e} at T = {} exceeds 1e-6",
                row.estimate,
                row.x
            );
        }
    }
    Ok(())
}

pub fn exit_code_for(verdicts: impl Iterator<Item = Verdict>) -> i32 {
    let mut code = 0;
    for v in verdicts {
        match v {
            Verdict::Fail => return 1,
            Verdict::Inconclusive => code = code.max(2),
            Verdict::Pass => {}
        }
    }
    code
}

/// Prints the verdict matrix of a completed run and returns the exit code.
pub fn report(dir: &Path) -> Result<i32> {
    if !dir.is_dir() {
        bail!("no such run directory: {}", dir.display());
    }
    let marker = dir.join(MARKER_FILE);
    if marker.exists() {
        let msg = fs::read_to_string(&marker).unwrap_or_default();
        print_ignoring_closed_pipe(&format!("run is incomplete: {}\n", msg.trim()));
        return Ok(2);
    }
    let summary: Summary = serde_json::from_str(
        &fs::read_to_string(dir.join(SUMMARY_FILE))
            .with_context(|| format!("no summary in {}", dir.display()))?,
    )?;
    let mut digest = String::new();
    let _ = writeln!(
        digest,
        "config {}  seed {}",
        summary.config_hash, summary.seed
    );
    let _ = writeln!(digest, "{:<28} {:<13} estimates", "probe", "verdict");
    let mut tables = Vec::new();
    for p in &summary.probes {
        let report_path = dir.join(format!("{}.report.json", p.file_stem));
        let report: ProbeReport = serde_json::from_str(&fs::read_to_string(&report_path)?)?;
        let lead_series = report
            .grid
            .first()
            .map(|r| r.series.clone())
            .unwrap_or_default();
        let cells: Vec<String> = report
            .grid
            .iter()
            .filter(|r| r.series == lead_series)
            .map(|r| format!("{}={:.5}", r.x, r.estimate))
            .collect();
        let _ = writeln!(
            digest,
            "{:<28} {:<13} {}",
            p.name,
            p.verdict.to_string(),
            cells.join("  ")
        );
        for (series, _) in report.csv_tables() {
            tables.push(format!("{}__{}.csv", p.file_stem, sanitize(&series)));
        }
    }
    let _ = writeln!(digest, "plot tables in {}:", dir.display());
    for t in &tables {
        let _ = writeln!(digest, "  {t}");
    }
    print_ignoring_closed_pipe(&digest);
    Ok(summary.exit_code)
}

/// Single-sample estimation: simulates one field at the configured horizon
/// and prints the full estimate record as JSON.
pub fn run_estimate(cfg: &ResolvedConfig, opts: &RunOptions) -> Result<i32> {
    let spec = cfg.model_spec()?;
    let mut rng = child_stream(cfg.seed, "estimate", 0);
    let field = models::simulate_field(&spec, &mut rng)?;
    let chart = LocalChart::new(field, spec.scaling())?;
    let space = spec.parameter_space()?;
    let prior = cfg.prior_for(&space)?;
    let quad = QuadratureSettings {
        nodes_per_dim: cfg.probes.first().map_or(201, |p| p.nodes_per_dim as usize),
        refine_check: true,
    };
    let record = estimate(&chart, &prior, &OptimizerSettings::default(), &quad)?;
    if opts.strict {
        if let Some(err) = record.quad_error {
            if err > 1e-6 {
                bail!("strict mode: QBE quadrature self-check error {err:.3e} exceeds 1e-6");
            }
        }
    }
    if opts.dump_paths {
        fs::create_dir_all(&opts.out_dir)?;
        dump_paths(cfg, &opts.out_dir)?;
    }
    print_ignoring_closed_pipe(&format!("{}\n", serde_json::to_string_pretty(&record)?));
    Ok(0)
}

/// Writes to stdout, treating a closed pipe (e.g. `qla report | head`) as a
/// normal end of output instead of a panic.
fn print_ignoring_closed_pipe(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().write_all(text.as_bytes());
}
