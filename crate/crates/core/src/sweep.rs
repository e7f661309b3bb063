//! Batch runs over the diffusion exponent m with seeded trials.

use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::DiagRecord;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{make_initial, DiffusionSpec, InitialSpec};
use crate::snapshot::fmt17;
use crate::stepper::{run, RunOptions, RunStatus, SchemeConfig};

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub grid: Arc<GridSpec>,
    pub initial: InitialSpec,
    /// Template law; its exponent is replaced by each entry of `m_values`.
    pub spec: DiffusionSpec,
    pub scheme: SchemeConfig,
    pub run_options: RunOptions,
    pub m_values: Vec<f64>,
    pub trials: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: f64,
    pub trial: u32,
    pub seed: u64,
    pub status: RunStatus,
    pub max_sup_u: f64,
    pub t_of_max: f64,
    pub records: Vec<DiagRecord>,
}

impl SweepPlan {
    /// (m, trial, seed) for every planned run, in table order.
    pub fn jobs(&self) -> Result<Vec<(f64, u32, u64)>> {
        if self.m_values.is_empty() {
            return Err(Error::param("sweep m list is empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("sweep trials must be >= 1"));
        }
        if let Some(m) = self.m_values.iter().find(|m| !(**m >= 1.0 && m.is_finite())) {
            return Err(Error::param(format!("sweep m values must be >= 1, got {m}")));
        }
        let mut ms = self.m_values.clone();
        ms.sort_by(f64::total_cmp);
        Ok(ms
            .iter()
            .flat_map(|&m| (0..self.trials).map(move |k| (m, k)))
            .map(|(m, k)| (m, k, self.initial.seed.wrapping_add(k as u64)))
            .collect())
    }
}

fn run_one(plan: &SweepPlan, m: f64, trial: u32, seed: u64) -> SweepRow {
    let failed = |reason: String| SweepRow {
        m,
        trial,
        seed,
        status: RunStatus::Aborted(reason),
        max_sup_u: f64::NAN,
        t_of_max: f64::NAN,
        records: Vec::new(),
    };
    let spec = match plan.spec.with_m(m) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let data = match make_initial(&plan.initial.clone().with_seed(seed), plan.grid.clone()) {
        Ok(d) => d,
        Err(e) => return failed(e.to_string()),
    };
    match run(&data, &spec, &plan.scheme, &plan.run_options, None) {
        Ok(out) => SweepRow {
            m,
            trial,
            seed,
            status: out.status,
            max_sup_u: out.max_sup_u,
            t_of_max: out.t_of_max,
            records: out.records,
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Runs every (m, trial) pair on at most `jobs` threads. Rows come back
/// sorted by m, then trial, whatever the completion order; a failing run
/// becomes an `aborted` row.
pub fn threshold_sweep(plan: &SweepPlan, jobs: usize) -> Result<Vec<SweepRow>> {
    let list = plan.jobs()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        list.par_iter()
            .map(|&(m, trial, seed)| run_one(plan, m, trial, seed))
            .collect()
    }))
}

/// Sweep table CSV `m,trial,seed,status,max_sup_u,t_of_max`.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("m,trial,seed,status,max_sup_u,t_of_max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m,
            r.trial,
            r.seed,
            r.status.label(),
            fmt17(r.max_sup_u),
            fmt17(r.t_of_max)
        ));
    }
    out
}
