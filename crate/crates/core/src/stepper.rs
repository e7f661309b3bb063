//! Time integration of the chemotaxis-consumption system.
//!
//! Two formulations share the same explicit, upwinded, flux-form u-update:
//!
//! * `uv`: u_t = ∇·(D(u)∇u) − ∇·(u ∇v / v), v_t = Δv − uv, with the
//!   v-equation solved implicitly (absorption and diffusion) each step.
//! * `uw`: the same system in w = −log(v / v0_max), where the chemotactic
//!   velocity is −∇w and w_t = Δw − |∇w|² + u is solved semi-implicitly.
//!
//! With the default safety factor of 0.5 the u-update is a nonnegative
//! combination of old values, so u stays nonnegative, and the flux form
//! conserves ∫u to roundoff.

use std::sync::Arc;

use crate::diagnostics::{compute_record, face_mean, Cumulative, DiagConfig, DiagRecord, Integrands};
use crate::error::{Error, Result};
use crate::grid::{cell_grad_sq_into, GridSpec, ScalarField};
use crate::model::{v_to_w, w_to_v, DiffusionSpec, InitialData};
use crate::solver::{ImplicitOperator, SolveOptions, Workspace};

/// Face diffusivity from the two adjacent cell values of D(u).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceAverage {
    #[default]
    Arithmetic,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    #[default]
    Uv,
    Uw,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Uv => "uv",
            Formulation::Uw => "uw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub cfl_safety: f64,
    pub face_average: FaceAverage,
    pub v_solver_tol: f64,
    /// Defaults to 10 × cell count when `None`.
    pub v_solver_max_iters: Option<usize>,
    pub dt_max: f64,
    pub t_end: f64,
    pub sample_every: f64,
    /// Blow-up is suspected once sup u exceeds this factor times sup u0.
    pub overflow_factor: f64,
    pub max_steps: u64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            cfl_safety: 0.5,
            face_average: FaceAverage::Arithmetic,
            v_solver_tol: 1e-10,
            v_solver_max_iters: None,
            dt_max: f64::INFINITY,
            t_end: 1.0,
            sample_every: 0.1,
            overflow_factor: 1e6,
            max_steps: 50_000_000,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            errs.push(format!("cfl_safety must be in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.v_solver_tol > 0.0 && self.v_solver_tol.is_finite()) {
            errs.push(format!("v_solver_tol must be > 0, got {}", self.v_solver_tol));
        }
        if self.v_solver_max_iters == Some(0) {
            errs.push("v_solver_max_iters must be > 0".to_string());
        }
        if !(self.dt_max > 0.0) {
            errs.push(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            errs.push(format!("t_end must be > 0, got {}", self.t_end));
        }
        if !(self.sample_every > 0.0 && self.sample_every.is_finite()) {
            errs.push(format!("sample_every must be > 0, got {}", self.sample_every));
        }
        if !(self.overflow_factor > 1.0) {
            errs.push(format!("overflow_factor must be > 1, got {}", self.overflow_factor));
        }
        if self.max_steps == 0 {
            errs.push("max_steps must be > 0".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(errs.join("; ")))
        }
    }

    fn max_iters(&self, cells: usize) -> usize {
        self.v_solver_max_iters.unwrap_or(10 * cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub step_index: u64,
}

impl SimState {
    pub fn initial(data: &InitialData) -> Self {
        Self {
            t: 0.0,
            u: data.u0().clone(),
            v: data.v0().clone(),
            step_index: 0,
        }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.u.grid()
    }
}

/// State in (u, w) variables.
#[derive(Debug, Clone, PartialEq)]
pub struct UwState {
    pub t: f64,
    pub u: ScalarField,
    pub w: ScalarField,
    pub step_index: u64,
}

impl UwState {
    pub fn initial(data: &InitialData) -> Self {
        Self {
            t: 0.0,
            u: data.u0().clone(),
            w: data.w0(),
            step_index: 0,
        }
    }

    pub fn to_uv(&self, v0_max: f64) -> Result<SimState> {
        Ok(SimState {
            t: self.t,
            u: self.u.clone(),
            v: w_to_v(&self.w, v0_max)?,
            step_index: self.step_index,
        })
    }
}

/// Chemotactic face velocity (direction of u transport) between cells
/// `lo` and `hi` along an axis with inverse spacing `inv_h`.
#[derive(Clone, Copy)]
enum Drift<'a> {
    /// ∇v / v with the face average of v.
    FromV(&'a [f64]),
    /// −∇w.
    FromW(&'a [f64]),
}

impl Drift<'_> {
    #[inline(always)]
    fn at(&self, lo: usize, hi: usize, inv_h: f64) -> f64 {
        match *self {
            Drift::FromV(v) => 2.0 * (v[hi] - v[lo]) * inv_h / (v[lo] + v[hi]),
            Drift::FromW(w) => -(w[hi] - w[lo]) * inv_h,
        }
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default)]
pub(crate) struct Kernel {
    d_cell: Vec<f64>,
    du: Vec<f64>,
    absorption: Vec<f64>,
    rhs: Vec<f64>,
    next_u: Vec<f64>,
    next_z: Vec<f64>,
    ws: Workspace,
}

impl Kernel {
    fn load_d(&mut self, spec: &DiffusionSpec, u: &[f64]) {
        self.d_cell.clear();
        self.d_cell.extend(u.iter().map(|&x| spec.d(x)));
    }

    fn stable_dt(&self, grid: &GridSpec, cfg: &SchemeConfig, drift: Drift<'_>) -> f64 {
        let n = grid.dim() as f64;
        let mut dt_diff = f64::INFINITY;
        let mut dt_adv = f64::INFINITY;
        for a in 0..grid.dim() {
            let h = grid.spacing()[a];
            let inv_h = 1.0 / h;
            let mut d_max: f64 = 0.0;
            let mut v_max: f64 = 0.0;
            let d = &self.d_cell;
            grid.for_each_interior_face(a, |_, lo, hi| {
                d_max = d_max.max(face_mean(cfg.face_average, d[lo], d[hi]));
                v_max = v_max.max(drift.at(lo, hi, inv_h).abs());
            });
            if d_max > 0.0 {
                dt_diff = dt_diff.min(h * h / (2.0 * n * d_max));
            }
            dt_adv = dt_adv.min(h / (2.0 * n * v_max + 1e-30));
        }
        cfg.cfl_safety * dt_diff.min(dt_adv).min(cfg.dt_max)
    }

    /// du = div(D ∇u − u_upwind · drift), into `self.du`.
    fn u_rate(&mut self, grid: &GridSpec, cfg: &SchemeConfig, u: &[f64], drift: Drift<'_>) {
        self.du.clear();
        self.du.resize(u.len(), 0.0);
        let du = &mut self.du;
        let d = &self.d_cell;
        for a in 0..grid.dim() {
            let inv_h = 1.0 / grid.spacing()[a];
            let inv_h2 = inv_h * inv_h;
            grid.for_each_interior_face(a, |_, lo, hi| {
                let vel = drift.at(lo, hi, inv_h);
                let upwind = if vel > 0.0 { u[lo] } else { u[hi] };
                let flux = face_mean(cfg.face_average, d[lo], d[hi]) * (u[hi] - u[lo]) * inv_h2
                    - upwind * vel * inv_h;
                du[lo] += flux;
                du[hi] -= flux;
            });
        }
    }

    fn advance_u(&mut self, grid: &GridSpec, cfg: &SchemeConfig, u: &mut [f64], dt: f64, drift: Drift<'_>) -> Result<()> {
        self.u_rate(grid, cfg, u, drift);
        let mut max_u: f64 = 0.0;
        for (x, r) in u.iter_mut().zip(&self.du) {
            *x += dt * r;
            max_u = max_u.max(*x);
        }
        let floor = -1e-12 * max_u;
        if let Some(cell) = u.iter().position(|&x| !(x >= floor)) {
            return Err(Error::Positivity {
                field: "u",
                cell,
                value: u[cell],
            });
        }
        Ok(())
    }

    /// Implicit absorption + diffusion for v, using the pre-step u.
    fn advance_v(&mut self, grid: &GridSpec, cfg: &SchemeConfig, u_old: &[f64], v: &mut [f64], dt: f64) -> Result<()> {
        self.absorption.clear();
        self.absorption.extend(u_old.iter().map(|&x| dt * x.max(0.0)));
        let v_max = v.iter().copied().fold(0.0, f64::max);
        self.rhs.clear();
        self.rhs.extend_from_slice(v);
        let op = ImplicitOperator::new(grid, dt, &self.absorption);
        op.solve(
            &self.rhs,
            v,
            SolveOptions {
                tol: cfg.v_solver_tol,
                scale: v_max,
                max_iters: cfg.max_iters(grid.cell_count()),
                bounds: Some((0.0, v_max)),
            },
            &mut self.ws,
        )?;
        if let Some(cell) = v.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Positivity {
                field: "v",
                cell,
                value: v[cell],
            });
        }
        Ok(())
    }

    /// (I − dt Δ) w⁺ = w − dt |∇w|²_cell + dt u, with the pre-step u and w.
    fn advance_w(&mut self, grid: &GridSpec, cfg: &SchemeConfig, u_old: &[f64], w: &mut [f64], dt: f64) -> Result<()> {
        self.rhs.resize(w.len(), 0.0);
        cell_grad_sq_into(grid, w, &mut self.rhs);
        let mut scale: f64 = 0.0;
        for ((r, &wi), &ui) in self.rhs.iter_mut().zip(w.iter()).zip(u_old) {
            *r = wi - dt * *r + dt * ui.max(0.0);
            scale = scale.max(r.abs()).max(wi.abs());
        }
        self.absorption.clear();
        self.absorption.resize(w.len(), 0.0);
        let op = ImplicitOperator::new(grid, dt, &self.absorption);
        op.solve(
            &self.rhs,
            w,
            SolveOptions {
                tol: cfg.v_solver_tol,
                scale: scale.max(f64::MIN_POSITIVE),
                max_iters: cfg.max_iters(grid.cell_count()),
                bounds: None,
            },
            &mut self.ws,
        )?;
        if let Some(cell) = w.iter().position(|&x| !(x >= -1e-10)) {
            return Err(Error::Positivity {
                field: "w",
                cell,
                value: w[cell],
            });
        }
        Ok(())
    }

    /// Advances (u, z) by one step, z being v or w. On error both inputs
    /// are left untouched.
    fn step(
        &mut self,
        grid: &GridSpec,
        cfg: &SchemeConfig,
        formulation: Formulation,
        u: &mut [f64],
        z: &mut [f64],
        dt: f64,
    ) -> Result<()> {
        let mut u_new = std::mem::take(&mut self.next_u);
        let mut z_new = std::mem::take(&mut self.next_z);
        u_new.clear();
        u_new.extend_from_slice(u);
        z_new.clear();
        z_new.extend_from_slice(z);
        let res = match formulation {
            Formulation::Uv => self
                .advance_u(grid, cfg, &mut u_new, dt, Drift::FromV(z))
                .and_then(|_| self.advance_v(grid, cfg, u, &mut z_new, dt)),
            Formulation::Uw => self
                .advance_u(grid, cfg, &mut u_new, dt, Drift::FromW(z))
                .and_then(|_| self.advance_w(grid, cfg, u, &mut z_new, dt)),
        };
        if res.is_ok() {
            u.copy_from_slice(&u_new);
            z.copy_from_slice(&z_new);
        }
        self.next_u = u_new;
        self.next_z = z_new;
        res
    }
}

/// Largest admissible step for the explicit u-update:
/// `safety · min(h²/(2N·D_max), h/(2N·V_max), dt_max)`.
pub fn stable_dt(state: &SimState, spec: &DiffusionSpec, cfg: &SchemeConfig) -> f64 {
    let mut k = Kernel::default();
    k.load_d(spec, state.u.values());
    k.stable_dt(state.grid(), cfg, Drift::FromV(state.v.values()))
}

/// [`stable_dt`] for a state in (u, w) variables.
pub fn stable_dt_uw(state: &UwState, spec: &DiffusionSpec, cfg: &SchemeConfig) -> f64 {
    let mut k = Kernel::default();
    k.load_d(spec, state.u.values());
    k.stable_dt(state.u.grid(), cfg, Drift::FromW(state.w.values()))
}

const DT_SLACK: f64 = 1e-9;

fn check_dt(dt: f64, stable: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::param(format!("time step must be > 0, got {dt}")));
    }
    if dt > stable * (1.0 + DT_SLACK) {
        return Err(Error::StepSize { dt, stable });
    }
    Ok(())
}

/// One step of the (u, v) scheme.
pub fn step_uv(state: &SimState, spec: &DiffusionSpec, cfg: &SchemeConfig, dt: f64) -> Result<SimState> {
    check_dt(dt, stable_dt(state, spec, cfg))?;
    let grid = state.grid().clone();
    let mut k = Kernel::default();
    k.load_d(spec, state.u.values());
    let mut u = state.u.values().to_vec();
    let mut v = state.v.values().to_vec();
    k.step(&grid, cfg, Formulation::Uv, &mut u, &mut v, dt)?;
    Ok(SimState {
        t: state.t + dt,
        u: ScalarField::new(grid.clone(), u)?,
        v: ScalarField::new(grid, v)?,
        step_index: state.step_index + 1,
    })
}

/// One step of the (u, w) scheme.
pub fn step_uw(state: &UwState, spec: &DiffusionSpec, cfg: &SchemeConfig, dt: f64) -> Result<UwState> {
    check_dt(dt, stable_dt_uw(state, spec, cfg))?;
    let grid = state.u.grid().clone();
    let mut k = Kernel::default();
    k.load_d(spec, state.u.values());
    let mut u = state.u.values().to_vec();
    let mut w = state.w.values().to_vec();
    k.step(&grid, cfg, Formulation::Uw, &mut u, &mut w, dt)?;
    Ok(UwState {
        t: state.t + dt,
        u: ScalarField::new(grid.clone(), u)?,
        w: ScalarField::new(grid, w)?,
        step_index: state.step_index + 1,
    })
}

/// Sees the solution after every accepted step (and once at t = 0).
pub trait StepObserver {
    fn observe(&mut self, t: f64, u: &[f64], v: &[f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// sup u crossed the overflow cap; a reported outcome, not an error.
    BlowUpSuspected,
    Aborted(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowUpSuspected => "blow-up suspected",
            RunStatus::Aborted(_) => "aborted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub status: RunStatus,
    pub records: Vec<DiagRecord>,
    /// Field states at the sample times (empty unless requested).
    pub samples: Vec<SimState>,
    /// Last accepted state; on abort this is the state before the failing step.
    pub last_state: SimState,
    pub steps: u64,
    /// Maximum over all steps of sup u, and when it occurred.
    pub max_sup_u: f64,
    pub t_of_max: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub formulation: Formulation,
    pub diagnostics: DiagConfig,
    pub keep_samples: bool,
}

/// Sample times k·sample_every below t_end, then t_end.
pub fn sample_times(cfg: &SchemeConfig) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * cfg.sample_every;
        if t >= cfg.t_end * (1.0 - 1e-12) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(cfg.t_end);
    out
}

/// Integrates from the initial data to `cfg.t_end`.
///
/// Step failures (positivity, solver) end the run with an `Aborted` status
/// rather than an error; only invalid inputs return `Err`.
pub fn run(
    data: &InitialData,
    spec: &DiffusionSpec,
    cfg: &SchemeConfig,
    opts: &RunOptions,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<RunOutput> {
    cfg.validate()?;
    opts.diagnostics.validate()?;
    let grid = data.grid().clone();
    let v0_max = data.v0_max();
    let log_vmax = v0_max.ln();
    let formulation = opts.formulation;
    let diag = &opts.diagnostics;

    let mut u = data.u0().values().to_vec();
    // second field: v for uv, w for uw
    let mut z = match formulation {
        Formulation::Uv => data.v0().values().to_vec(),
        Formulation::Uw => data.w0().into_values(),
    };
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut kernel = Kernel::default();
    let mut cum = Cumulative::zeros(diag);

    let cap = cfg.overflow_factor * data.u0().max();
    let mut max_sup_u = data.u0().max();
    let mut t_of_max = 0.0;

    let to_state = |u: &[f64], z: &[f64], t: f64, steps: u64| -> Result<SimState> {
        let u = ScalarField::new(grid.clone(), u.to_vec())?;
        let second = ScalarField::new(grid.clone(), z.to_vec())?;
        let v = match formulation {
            Formulation::Uv => second,
            Formulation::Uw => w_to_v(&second, v0_max)?,
        };
        Ok(SimState {
            t,
            u,
            v,
            step_index: steps,
        })
    };
    let fill_w = |z: &[f64], w: &mut Vec<f64>| {
        w.clear();
        match formulation {
            Formulation::Uv => w.extend(z.iter().map(|&x| log_vmax - x.ln())),
            Formulation::Uw => w.extend_from_slice(z),
        }
    };
    let v_view = |z: &[f64], buf: &mut Vec<f64>| {
        if formulation == Formulation::Uw {
            buf.clear();
            buf.extend(z.iter().map(|&x| v0_max * (-x).exp()));
        }
    };

    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut vbuf = Vec::new();

    kernel.load_d(spec, &u);
    let mut w_buf = Vec::new();
    fill_w(&z, &mut w_buf);
    let mut prev = Integrands::evaluate(&grid, spec, cfg.face_average, diag, &u, &kernel.d_cell, &w_buf);

    let state0 = to_state(&u, &z, 0.0, 0)?;
    records.push(compute_record(&state0, data, spec, diag, &cum)?);
    if opts.keep_samples {
        samples.push(state0.clone());
    }
    if let Some(obs) = observer.as_deref_mut() {
        v_view(&z, &mut vbuf);
        let v = if formulation == Formulation::Uw { &vbuf[..] } else { &z[..] };
        obs.observe(0.0, &u, v);
    }

    let targets = sample_times(cfg);
    let mut next_sample = 1;
    let mut status = RunStatus::Completed;
    let mut last_state = state0;

    while next_sample < targets.len() {
        if steps >= cfg.max_steps {
            status = RunStatus::Aborted(format!("step budget of {} exhausted at t = {t}", cfg.max_steps));
            break;
        }
        let drift = match formulation {
            Formulation::Uv => Drift::FromV(&z),
            Formulation::Uw => Drift::FromW(&z),
        };
        let stable = kernel.stable_dt(&grid, cfg, drift);
        if !(stable > 1e-14 * cfg.t_end) {
            status = RunStatus::Aborted(format!("step size collapsed to {stable:e} at t = {t}"));
            break;
        }
        let target = targets[next_sample];
        let (dt, landing) = if target - t <= stable * (1.0 + DT_SLACK) {
            (target - t, true)
        } else {
            (stable, false)
        };

        if let Err(e) = kernel.step(&grid, cfg, formulation, &mut u, &mut z, dt) {
            status = RunStatus::Aborted(format!("{e} (at t = {t}, step {steps})"));
            break;
        }
        t = if landing { target } else { t + dt };
        steps += 1;

        if formulation == Formulation::Uv {
            let min_v = z.iter().copied().fold(f64::INFINITY, f64::min);
            if min_v < 1e-280 {
                last_state = to_state(&u, &z, t, steps)?;
                status = RunStatus::Aborted(format!("v underflow: min v = {min_v:e} at t = {t}"));
                break;
            }
        }

        kernel.load_d(spec, &u);
        fill_w(&z, &mut w_buf);
        let now = Integrands::evaluate(&grid, spec, cfg.face_average, diag, &u, &kernel.d_cell, &w_buf);
        cum.advance(dt, &prev, &now);
        prev = now;

        if let Some(obs) = observer.as_deref_mut() {
            v_view(&z, &mut vbuf);
            let v = if formulation == Formulation::Uw { &vbuf[..] } else { &z[..] };
            obs.observe(t, &u, v);
        }

        let sup_u = u.iter().copied().fold(0.0, f64::max);
        if sup_u > max_sup_u {
            max_sup_u = sup_u;
            t_of_max = t;
        }
        let blown = sup_u > cap || !sup_u.is_finite();
        if landing || blown {
            let state = to_state(&u, &z, t, steps)?;
            match compute_record(&state, data, spec, diag, &cum) {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    last_state = state;
                    status = RunStatus::Aborted(e.to_string());
                    break;
                }
            }
            if opts.keep_samples {
                samples.push(state.clone());
            }
            last_state = state;
            if landing {
                next_sample += 1;
            }
        }
        if blown {
            status = RunStatus::BlowUpSuspected;
            break;
        }
    }
    if last_state.step_index != steps {
        last_state = to_state(&u, &z, t, steps)?;
    }

    Ok(RunOutput {
        status,
        records,
        samples,
        last_state,
        steps,
        max_sup_u,
        t_of_max,
    })
}

/// w of a state, for callers that hold (u, v).
pub fn derive_w(state: &SimState, data: &InitialData) -> Result<ScalarField> {
    v_to_w(&state.v, data.v0_max())
}
