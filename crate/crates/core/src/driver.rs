//! Orchestration of the four modes and all on-disk artifacts.
//!
//! Exit codes: 0 all audits pass, 1 an audit failed, 2 a run aborted,
//! 3 configuration error, 4 I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::audit::{audit_series, AuditReport, EnergyReference};
use crate::config::{parse_config, Mode, RunConfig, Simulation};
use crate::diagnostics::{read_csv, write_csv};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::ladder::{run_ladder, rung_dir_name, write_rung_snapshots, LadderConfig};
use crate::model::make_initial;
use crate::snapshot::write_snapshot;
use crate::stepper::{run, RunOptions, RunStatus};
use crate::sweep::{self, threshold_sweep, SweepPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub dry_run: bool,
    pub jobs: usize,
    /// Replaces `output.directory` from the file.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    /// Human-readable summary for stdout (or the error for stderr).
    pub message: String,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) | Error::Parameter(_) => EXIT_CONFIG,
        _ => EXIT_ABORTED,
    }
}

fn failure(err: Error) -> Outcome {
    Outcome {
        code: exit_code(&err),
        message: err.to_string(),
    }
}

/// Reads, parses and executes the configuration at `path`. Relative paths
/// inside the file (`audit.input`) are resolved against the file's directory.
pub fn execute_path(path: &Path, opts: &ExecOptions) -> Outcome {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return failure(Error::io(path, e)),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return failure(e),
    };
    if let Mode::Audit { input } = &mut cfg.mode {
        if input.is_relative() {
            if let Some(dir) = path.parent() {
                *input = dir.join(&*input);
            }
        }
    }
    execute(&cfg, &text, opts)
}

pub fn execute(cfg: &RunConfig, config_text: &str, opts: &ExecOptions) -> Outcome {
    let out_dir = opts.output.clone().unwrap_or_else(|| cfg.output.directory.clone());
    if opts.dry_run {
        return match plan(cfg, &out_dir) {
            Ok(message) => Outcome { code: EXIT_OK, message },
            Err(e) => failure(e),
        };
    }
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let jobs = opts.jobs.max(1);
    let result = match &cfg.mode {
        Mode::Run => execute_run(cfg, &out_dir),
        Mode::Sweep { m_values, trials } => execute_sweep(cfg, m_values, *trials, jobs, &out_dir),
        Mode::Ladder { eps, test_functions } => execute_ladder(cfg, eps, test_functions, jobs, &out_dir),
        Mode::Audit { input } => execute_audit(cfg, input, &out_dir),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => failure(e),
    };
    if outcome.code == EXIT_CONFIG {
        return outcome;
    }
    let manifest = manifest_text(cfg, config_text, started_unix, started.elapsed().as_secs_f64(), outcome.code);
    match write_atomic(&out_dir.join("manifest"), manifest.as_bytes()) {
        Ok(()) => outcome,
        Err(e) if outcome.code == EXIT_IO => Outcome {
            code: EXIT_IO,
            message: format!("{}\n{e}", outcome.message),
        },
        Err(e) => failure(e),
    }
}

pub fn build_id() -> &'static str {
    option_env!("CHEMOTAXSIM_BUILD_ID").unwrap_or(concat!("chemotaxsim-", env!("CARGO_PKG_VERSION")))
}

fn manifest_text(cfg: &RunConfig, config_text: &str, started_unix: u64, wall: f64, code: i32) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let seed = cfg
        .simulation
        .as_ref()
        .map(|s| s.initial.seed.to_string())
        .unwrap_or_else(|| "none".into());
    format!(
        "config_sha256 = {hash}\nseed = {seed}\nbuild = {}\nmode = {}\nformulation = {}\nstarted_unix = {started_unix}\nwall_clock_seconds = {wall:.3}\nexit_code = {code}\n",
        build_id(),
        cfg.mode.name(),
        cfg.formulation,
    )
}

fn simulation(cfg: &RunConfig) -> Result<&Simulation> {
    cfg.simulation
        .as_ref()
        .ok_or_else(|| Error::Config(format!("mode {} needs grid, model and initial blocks", cfg.mode.name())))
}

fn plan(cfg: &RunConfig, out_dir: &Path) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", cfg.mode.name());
    let _ = writeln!(s, "output = {}", out_dir.display());
    if let Some(sim) = &cfg.simulation {
        // builds the fields once so data errors surface in a dry run too
        make_initial(&sim.initial, sim.grid.clone())?;
        let _ = writeln!(
            s,
            "grid = {:?} cells, lengths {:?}; formulation {}; t_end = {}, sample_every = {}",
            sim.grid.cells(),
            sim.grid.lengths(),
            cfg.formulation,
            cfg.scheme.t_end,
            cfg.scheme.sample_every
        );
    }
    match &cfg.mode {
        Mode::Run => {
            let sim = simulation(cfg)?;
            let _ = writeln!(s, "planned runs = 1");
            let _ = writeln!(s, "run m = {} seed = {}", sim.spec.m(), sim.initial.seed);
        }
        Mode::Sweep { m_values, trials } => {
            let jobs = sweep_plan(cfg, m_values, *trials)?.jobs()?;
            let _ = writeln!(s, "planned runs = {}", jobs.len());
            for (m, trial, seed) in jobs {
                let _ = writeln!(s, "run m = {m} trial = {trial} seed = {seed}");
            }
        }
        Mode::Ladder { eps, test_functions } => {
            ladder_config(cfg, eps, test_functions)?.validate()?;
            let _ = writeln!(s, "planned runs = {}", eps.len());
            for e in eps {
                let _ = writeln!(s, "run eps = {e}");
            }
            let _ = writeln!(s, "test functions = {}", test_functions.len());
        }
        Mode::Audit { input } => {
            let _ = writeln!(s, "planned runs = 0");
            let _ = writeln!(s, "audit input = {}", input.display());
        }
    }
    Ok(s)
}

fn run_options(cfg: &RunConfig, keep_samples: bool) -> RunOptions {
    RunOptions {
        formulation: cfg.formulation,
        diagnostics: cfg.diagnostics.clone(),
        keep_samples,
    }
}

fn execute_run(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let sim = simulation(cfg)?;
    let data = make_initial(&sim.initial, sim.grid.clone())?;
    let out = run(&data, &sim.spec, &cfg.scheme, &run_options(cfg, cfg.output.snapshots), None)?;
    write_csv(&out_dir.join("diagnostics.csv"), &out.records)?;
    if cfg.output.snapshots {
        for (k, s) in out.samples.iter().enumerate() {
            write_snapshot(&out_dir.join(format!("snapshots/u_{k:04}.chf")), &s.u, s.t)?;
            write_snapshot(&out_dir.join(format!("snapshots/v_{k:04}.chf")), &s.v, s.t)?;
        }
    }
    let report = audit_series(&out.records, EnergyReference::from_data(&data)?, data.v0_max(), &cfg.audit)?;
    let mut text = format!("status = {}\nsteps = {}\n", out.status.label(), out.steps);
    if let RunStatus::Aborted(reason) = &out.status {
        let _ = writeln!(text, "reason = {reason}");
        let last = &out.last_state;
        write_snapshot(&out_dir.join("dump/u_last.chf"), &last.u, last.t)?;
        write_snapshot(&out_dir.join("dump/v_last.chf"), &last.v, last.t)?;
    }
    text.push('\n');
    text.push_str(&report.render());
    write_atomic(&out_dir.join("audit.txt"), text.as_bytes())?;
    let code = match out.status {
        RunStatus::Aborted(_) => EXIT_ABORTED,
        _ if !report.all_passed() => EXIT_AUDIT_FAILED,
        _ => EXIT_OK,
    };
    Ok(Outcome { code, message: text })
}

fn sweep_plan(cfg: &RunConfig, m_values: &[f64], trials: u32) -> Result<SweepPlan> {
    let sim = simulation(cfg)?;
    Ok(SweepPlan {
        grid: sim.grid.clone(),
        initial: sim.initial.clone(),
        spec: sim.spec.clone(),
        scheme: cfg.scheme.clone(),
        run_options: run_options(cfg, false),
        m_values: m_values.to_vec(),
        trials,
    })
}

fn execute_sweep(cfg: &RunConfig, m_values: &[f64], trials: u32, jobs: usize, out_dir: &Path) -> Result<Outcome> {
    let plan = sweep_plan(cfg, m_values, trials)?;
    let rows = threshold_sweep(&plan, jobs)?;
    for r in &rows {
        let dir = out_dir.join(format!("runs/m_{}_trial_{}", r.m, r.trial));
        write_csv(&dir.join("diagnostics.csv"), &r.records)?;
    }
    let table = sweep::to_csv(&rows);
    write_atomic(&out_dir.join("sweep.csv"), table.as_bytes())?;
    let aborted = rows.iter().any(|r| matches!(r.status, RunStatus::Aborted(_)));
    Ok(Outcome {
        code: if aborted { EXIT_ABORTED } else { EXIT_OK },
        message: table,
    })
}

fn ladder_config(cfg: &RunConfig, eps: &[f64], phis: &[crate::ladder::TestFunction]) -> Result<LadderConfig> {
    let sim = simulation(cfg)?;
    Ok(LadderConfig {
        base: sim.spec.clone(),
        eps: eps.to_vec(),
        data: make_initial(&sim.initial, sim.grid.clone())?,
        scheme: cfg.scheme.clone(),
        formulation: cfg.formulation,
        test_functions: phis.to_vec(),
    })
}

fn execute_ladder(
    cfg: &RunConfig,
    eps: &[f64],
    phis: &[crate::ladder::TestFunction],
    jobs: usize,
    out_dir: &Path,
) -> Result<Outcome> {
    let lc = ladder_config(cfg, eps, phis)?;
    let report = run_ladder(&lc, jobs)?;
    for rung in &report.rungs {
        write_rung_snapshots(&out_dir.join("ladder").join(rung_dir_name(rung.eps)), rung)?;
    }
    write_atomic(&out_dir.join("ladder.csv"), report.to_csv(phis.len()).as_bytes())?;
    let summary = report.summary();
    write_atomic(&out_dir.join("ladder_summary.txt"), summary.as_bytes())?;
    let code = if report.rungs.iter().any(|r| !r.completed()) {
        EXIT_ABORTED
    } else if !report.cauchy_consistent {
        EXIT_AUDIT_FAILED
    } else {
        EXIT_OK
    };
    Ok(Outcome { code, message: summary })
}

fn execute_audit(cfg: &RunConfig, input: &Path, out_dir: &Path) -> Result<Outcome> {
    let bad_input = |e: Error| match e {
        Error::Io { .. } => e,
        other => Error::Config(format!("audit.input: {other}")),
    };
    let series = read_csv(input).map_err(bad_input)?;
    let reference = EnergyReference::from_series(&series).map_err(bad_input)?;
    let v0_max = series[0].max_v;
    let report: AuditReport = audit_series(&series, reference, v0_max, &cfg.audit)?;
    let text = report.render();
    write_atomic(&out_dir.join("audit.txt"), text.as_bytes())?;
    Ok(Outcome {
        code: if report.all_passed() { EXIT_OK } else { EXIT_AUDIT_FAILED },
        message: text,
    })
}
