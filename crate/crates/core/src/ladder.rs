//! ε-shift regularization ladder and weak-form residuals.
//!
//! Each rung solves the problem with D_ε(s) = D(s + ε) from the same data on
//! the same grid. Successive rungs are compared in L¹(Ω×(0,T)) for u and
//! uniformly for v, and every rung is tested against the space-time weak
//! formulation with analytic test functions
//!
//! ```text
//! R_u = | −∫∫ u φ_t − ∫ u₀ φ(·,0) + ∫∫ ∇D̄(u)·∇φ − ∫∫ (u/v)∇v·∇φ |
//! R_v = | −∫∫ v φ_t − ∫ v₀ φ(·,0) + ∫∫ ∇v·∇φ + ∫∫ u v φ |
//! ```

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::diagnostics::DiagConfig;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{DiffusionSpec, InitialData};
use crate::snapshot::{fmt17, write_snapshot};
use crate::stepper::{run, Formulation, RunOptions, RunStatus, SchemeConfig, SimState, StepObserver};

/// φ(x, t) = amplitude · ψ(t) · ∏_a cos(k_a π x_a / L_a), with the bump
/// ψ(t) = exp(1 − 1/(1 − (t/t_cut)²)) for t < t_cut and 0 afterwards.
/// ψ(0) = 1 and ψ is smooth on [0, ∞).
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub amplitude: f64,
    pub modes: Vec<u32>,
    pub t_cut: f64,
}

impl TestFunction {
    pub fn new(amplitude: f64, modes: Vec<u32>, t_cut: f64) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::param("test function amplitude must be finite"));
        }
        if !(t_cut > 0.0 && t_cut.is_finite()) {
            return Err(Error::param(format!("test function t_cut must be > 0, got {t_cut}")));
        }
        Ok(Self {
            amplitude,
            modes,
            t_cut,
        })
    }

    fn mode(&self, axis: usize) -> u32 {
        self.modes.get(axis).copied().unwrap_or(0)
    }

    pub fn psi(&self, t: f64) -> f64 {
        let s = t / self.t_cut;
        if !(0.0..1.0).contains(&s.abs()) {
            return 0.0;
        }
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }

    pub fn psi_t(&self, t: f64) -> f64 {
        let s = t / self.t_cut;
        if !(0.0..1.0).contains(&s.abs()) {
            return 0.0;
        }
        let q = 1.0 - s * s;
        self.psi(t) * (-2.0 * s / (q * q)) / self.t_cut
    }

    fn spatial_axis(&self, grid: &GridSpec, axis: usize, x: f64) -> (f64, f64) {
        let k = self.mode(axis) as f64 * PI / grid.lengths()[axis];
        ((k * x).cos(), -k * (k * x).sin())
    }

    pub fn phi(&self, grid: &GridSpec, x: &[f64], t: f64) -> f64 {
        let space: f64 = (0..grid.dim()).map(|a| self.spatial_axis(grid, a, x[a]).0).product();
        self.amplitude * self.psi(t) * space
    }

    pub fn phi_t(&self, grid: &GridSpec, x: &[f64], t: f64) -> f64 {
        let space: f64 = (0..grid.dim()).map(|a| self.spatial_axis(grid, a, x[a]).0).product();
        self.amplitude * self.psi_t(t) * space
    }

    pub fn grad_phi(&self, grid: &GridSpec, x: &[f64], t: f64, axis: usize) -> f64 {
        let space: f64 = (0..grid.dim())
            .map(|a| {
                let (c, d) = self.spatial_axis(grid, a, x[a]);
                if a == axis {
                    d
                } else {
                    c
                }
            })
            .product();
        self.amplitude * self.psi(t) * space
    }
}

/// Unit-amplitude spatial factor of one test function sampled at cell centers
/// and interior faces (face order matches `GridSpec::for_each_interior_face`).
/// The amplitude is applied to the final residual so scaling φ scales R
/// exactly.
struct PhiTable {
    phi: TestFunction,
    cell: Vec<f64>,
    face_grad: Vec<Vec<f64>>,
}

impl PhiTable {
    fn new(grid: &GridSpec, phi: &TestFunction) -> Self {
        let cell = (0..grid.cell_count())
            .map(|i| spatial(grid, phi, &grid.cell_center(i), None))
            .collect();
        let face_grad = (0..grid.dim())
            .map(|a| {
                let mut out = Vec::with_capacity(grid.face_count(a));
                let h = grid.spacing()[a];
                grid.for_each_interior_face(a, |_, lo, _| {
                    let mut x = grid.cell_center(lo);
                    x[a] += 0.5 * h;
                    out.push(spatial(grid, phi, &x, Some(a)));
                });
                out
            })
            .collect();
        Self {
            phi: phi.clone(),
            cell,
            face_grad,
        }
    }
}

fn spatial(grid: &GridSpec, phi: &TestFunction, x: &[f64], deriv: Option<usize>) -> f64 {
    (0..grid.dim())
        .map(|a| {
            let (c, d) = phi.spatial_axis(grid, a, x[a]);
            if deriv == Some(a) {
                d
            } else {
                c
            }
        })
        .product()
}

/// Spatial integrals at one instant: I_u(t) = −ψ'(t)·a_u + ψ(t)·b_u and
/// likewise for v.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    a_u: f64,
    b_u: f64,
    a_v: f64,
    b_v: f64,
}

fn moments(grid: &GridSpec, table: &PhiTable, u: &[f64], v: &[f64], dbar: &[f64]) -> Moments {
    let vol = grid.cell_volume();
    let mut m = Moments::default();
    for (i, &x) in table.cell.iter().enumerate() {
        m.a_u += u[i] * x;
        m.a_v += v[i] * x;
        m.b_v += u[i] * v[i] * x;
    }
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let grads = &table.face_grad[a];
        let mut k = 0;
        grid.for_each_interior_face(a, |_, lo, hi| {
            let gx = grads[k];
            k += 1;
            let g_dbar = (dbar[hi] - dbar[lo]) * inv_h;
            let g_v = (v[hi] - v[lo]) * inv_h;
            let drift = (u[lo] + u[hi]) / (v[lo] + v[hi]) * g_v;
            m.b_u += (g_dbar - drift) * gx;
            m.b_v += g_v * gx;
        });
    }
    m.a_u *= vol;
    m.b_u *= vol;
    m.a_v *= vol;
    m.b_v *= vol;
    m
}

/// Accumulates both weak residuals for several test functions with a
/// trapezoid rule over whatever instants it is shown. As a [`StepObserver`]
/// it sees every time step.
pub struct WeakAccumulator {
    grid: std::sync::Arc<GridSpec>,
    spec: DiffusionSpec,
    tables: Vec<PhiTable>,
    dbar: Vec<f64>,
    last: Option<(f64, Vec<(f64, f64)>)>,
    initial: Vec<(f64, f64)>,
    sums: Vec<(f64, f64)>,
}

impl WeakAccumulator {
    pub fn new(grid: std::sync::Arc<GridSpec>, spec: &DiffusionSpec, phis: &[TestFunction]) -> Self {
        let tables = phis.iter().map(|p| PhiTable::new(&grid, p)).collect();
        Self {
            grid,
            spec: spec.clone(),
            tables,
            dbar: Vec::new(),
            last: None,
            initial: Vec::new(),
            sums: vec![(0.0, 0.0); phis.len()],
        }
    }

    pub fn push(&mut self, t: f64, u: &[f64], v: &[f64]) {
        self.dbar.clear();
        self.dbar.extend(u.iter().map(|&s| self.spec.dbar(s)));
        let now: Vec<(f64, f64)> = self
            .tables
            .iter()
            .map(|tab| {
                let m = moments(&self.grid, tab, u, v, &self.dbar);
                let (p, pt) = (tab.phi.psi(t), tab.phi.psi_t(t));
                (-pt * m.a_u + p * m.b_u, -pt * m.a_v + p * m.b_v)
            })
            .collect();
        match &self.last {
            None => {
                self.initial = self
                    .tables
                    .iter()
                    .map(|tab| {
                        let m = moments(&self.grid, tab, u, v, &self.dbar);
                        let p = tab.phi.psi(t);
                        (p * m.a_u, p * m.a_v)
                    })
                    .collect();
            }
            Some((t0, prev)) => {
                let h = 0.5 * (t - t0);
                for (s, (a, b)) in self.sums.iter_mut().zip(prev.iter().zip(&now)) {
                    s.0 += h * (a.0 + b.0);
                    s.1 += h * (a.1 + b.1);
                }
            }
        }
        self.last = Some((t, now));
    }

    /// (R_u, R_v) per test function. Errors if some φ is still supported
    /// past the last instant seen.
    pub fn residuals(&self) -> Result<Vec<(f64, f64)>> {
        let Some((t_last, _)) = &self.last else {
            return Err(Error::param("no trajectory samples"));
        };
        if let Some(tab) = self.tables.iter().find(|tab| tab.phi.t_cut > *t_last * (1.0 + 1e-12)) {
            return Err(Error::param(format!(
                "test function support ends at {} beyond the trajectory window {t_last}",
                tab.phi.t_cut
            )));
        }
        Ok(self
            .sums
            .iter()
            .zip(&self.initial)
            .zip(&self.tables)
            .map(|((s, i), tab)| {
                let c = tab.phi.amplitude.abs();
                (c * (s.0 - i.0).abs(), c * (s.1 - i.1).abs())
            })
            .collect())
    }
}

impl StepObserver for WeakAccumulator {
    fn observe(&mut self, t: f64, u: &[f64], v: &[f64]) {
        self.push(t, u, v);
    }
}

fn residuals_from_samples(trajectory: &[SimState], spec: &DiffusionSpec, phi: &TestFunction) -> Result<(f64, f64)> {
    let first = trajectory
        .first()
        .ok_or_else(|| Error::param("empty trajectory"))?;
    if first.t != 0.0 {
        return Err(Error::param("trajectory must start at t = 0"));
    }
    let mut acc = WeakAccumulator::new(first.grid().clone(), spec, std::slice::from_ref(phi));
    for s in trajectory {
        acc.push(s.t, s.u.values(), s.v.values());
    }
    Ok(acc.residuals()?[0])
}

/// R_u over the sampled trajectory (trapezoid in time over the samples).
pub fn weak_residual_u(trajectory: &[SimState], spec: &DiffusionSpec, phi: &TestFunction) -> Result<f64> {
    residuals_from_samples(trajectory, spec, phi).map(|r| r.0)
}

/// R_v over the sampled trajectory; the diffusion law does not enter.
pub fn weak_residual_v(trajectory: &[SimState], phi: &TestFunction) -> Result<f64> {
    let spec = DiffusionSpec::power(1.0, 1.0)?;
    residuals_from_samples(trajectory, &spec, phi).map(|r| r.1)
}

/// 0.1 · 2^{−k} down to 1e-4.
pub fn default_eps() -> Vec<f64> {
    (0..)
        .map(|k| 0.1 * 0.5f64.powi(k))
        .take_while(|&e| e >= 1e-4)
        .collect()
}

#[derive(Debug, Clone)]
pub struct LadderConfig {
    pub base: DiffusionSpec,
    pub eps: Vec<f64>,
    pub data: InitialData,
    /// Shared scheme; `t_end` is the horizon T.
    pub scheme: SchemeConfig,
    pub formulation: Formulation,
    pub test_functions: Vec<TestFunction>,
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::param("ladder eps list is empty"));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::param(format!("ladder eps values must be > 0, got {e}")));
        }
        if self.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::param("ladder eps values must be strictly decreasing"));
        }
        if let Some(p) = self.test_functions.iter().find(|p| p.t_cut > self.scheme.t_end) {
            return Err(Error::param(format!(
                "test function support {} exceeds the horizon {}",
                p.t_cut, self.scheme.t_end
            )));
        }
        self.scheme.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Rung {
    pub eps: f64,
    pub status: RunStatus,
    pub steps: u64,
    pub samples: Vec<SimState>,
    /// (R_u, R_v) per test function, from every time step of the run.
    pub residuals: Vec<(f64, f64)>,
}

impl Rung {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

#[derive(Debug, Clone)]
pub struct LadderReport {
    pub rungs: Vec<Rung>,
    /// d_k between rung k and k+1; `None` when either rung failed.
    pub d: Vec<Option<f64>>,
    pub e: Vec<Option<f64>>,
    pub cauchy_consistent: bool,
}

fn run_rung(cfg: &LadderConfig, eps: f64) -> Rung {
    let fail = |reason: String| Rung {
        eps,
        status: RunStatus::Aborted(reason),
        steps: 0,
        samples: Vec::new(),
        residuals: Vec::new(),
    };
    let spec = match cfg.base.shift_regularize(eps) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let opts = RunOptions {
        formulation: cfg.formulation,
        diagnostics: DiagConfig::default(),
        keep_samples: true,
    };
    let mut acc = WeakAccumulator::new(cfg.data.grid().clone(), &spec, &cfg.test_functions);
    let out = match run(&cfg.data, &spec, &cfg.scheme, &opts, Some(&mut acc)) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    let residuals = if out.status == RunStatus::Completed {
        acc.residuals().unwrap_or_default()
    } else {
        Vec::new()
    };
    Rung {
        eps,
        status: out.status,
        steps: out.steps,
        samples: out.samples,
        residuals,
    }
}

/// ‖u_a − u_b‖ in L¹(Ω×(0,T)) with trapezoid weights over the shared sample
/// times, and the sup over samples of max|v_a − v_b|.
pub fn rung_differences(a: &[SimState], b: &[SimState]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.t != y.t) {
        return Err(Error::param("rungs do not share sample times"));
    }
    let mut l1 = 0.0;
    let mut sup: f64 = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (x, y) in a.iter().zip(b) {
        let vol = x.grid().cell_volume();
        let du = vol
            * x.u
                .values()
                .iter()
                .zip(y.u.values())
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>();
        let dv = x
            .v
            .values()
            .iter()
            .zip(y.v.values())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        sup = sup.max(dv);
        if let Some((t0, f0)) = prev {
            l1 += 0.5 * (x.t - t0) * (f0 + du);
        }
        prev = Some((x.t, du));
    }
    Ok((l1, sup))
}

/// Nonincreasing up to a 10% allowance at each step; differences below
/// `floor` count as roundoff.
fn nonincreasing(seq: &[f64], floor: f64) -> bool {
    seq.windows(2).all(|w| w[1] <= 1.1 * w[0] + floor)
}

/// Runs every rung on at most `jobs` threads and compares neighbours.
pub fn run_ladder(cfg: &LadderConfig, jobs: usize) -> Result<LadderReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    let rungs: Vec<Rung> = pool.install(|| cfg.eps.par_iter().map(|&eps| run_rung(cfg, eps)).collect());

    let mut d = Vec::new();
    let mut e = Vec::new();
    for w in rungs.windows(2) {
        if w[0].completed() && w[1].completed() {
            let (dk, ek) = rung_differences(&w[0].samples, &w[1].samples)?;
            d.push(Some(dk));
            e.push(Some(ek));
        } else {
            d.push(None);
            e.push(None);
        }
    }
    let dk: Vec<f64> = d.iter().flatten().copied().collect();
    let ek: Vec<f64> = e.iter().flatten().copied().collect();
    let mass = crate::grid::integrate(cfg.data.u0())?;
    let d_floor = 1e-12 * mass * cfg.scheme.t_end;
    let e_floor = 1e-12 * cfg.data.v0_max();
    let cauchy_consistent =
        rungs.iter().all(Rung::completed) && nonincreasing(&dk, d_floor) && nonincreasing(&ek, e_floor);
    Ok(LadderReport {
        rungs,
        d,
        e,
        cauchy_consistent,
    })
}

impl LadderReport {
    /// CSV `eps,status,d_to_next,e_to_next,R_u_phi<i>,R_v_phi<i>`; empty
    /// cells where a value is undefined.
    pub fn to_csv(&self, n_phi: usize) -> String {
        let mut out = String::from("eps,status,d_to_next,e_to_next");
        for i in 0..n_phi {
            out.push_str(&format!(",R_u_phi{i}"));
        }
        for i in 0..n_phi {
            out.push_str(&format!(",R_v_phi{i}"));
        }
        out.push('\n');
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        for (k, r) in self.rungs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}",
                r.eps,
                r.status.label(),
                opt(self.d.get(k).copied().flatten()),
                opt(self.e.get(k).copied().flatten())
            ));
            for i in 0..n_phi {
                out.push_str(&format!(",{}", opt(r.residuals.get(i).map(|x| x.0))));
            }
            for i in 0..n_phi {
                out.push_str(&format!(",{}", opt(r.residuals.get(i).map(|x| x.1))));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let verdict = if self.cauchy_consistent { "PASS" } else { "FAIL" };
        let failed: Vec<String> = self
            .rungs
            .iter()
            .filter(|r| !r.completed())
            .map(|r| format!("{} ({})", r.eps, r.status.label()))
            .collect();
        let mut s = format!("{verdict} cauchy_consistent rungs={}\n", self.rungs.len());
        if !failed.is_empty() {
            s.push_str(&format!("  failed_rungs = {}\n", failed.join("; ")));
        }
        if let Some(finest) = self.rungs.iter().rev().find(|r| r.completed()) {
            s.push_str(&format!("  finest_eps = {}\n", finest.eps));
            for (i, (ru, rv)) in finest.residuals.iter().enumerate() {
                s.push_str(&format!("  R_u_phi{i} = {}\n  R_v_phi{i} = {}\n", fmt17(*ru), fmt17(*rv)));
            }
        }
        s
    }
}

/// Writes `u_<k>.chf` and `v_<k>.chf` for each sample of a rung under `dir`.
pub fn write_rung_snapshots(dir: &Path, rung: &Rung) -> Result<()> {
    for (k, s) in rung.samples.iter().enumerate() {
        write_snapshot(&dir.join(format!("u_{k:04}.chf")), &s.u, s.t)?;
        write_snapshot(&dir.join(format!("v_{k:04}.chf")), &s.v, s.t)?;
    }
    Ok(())
}

/// Directory name for a rung, `eps_<value>`.
pub fn rung_dir_name(eps: f64) -> String {
    format!("eps_{eps}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_initial, InitialSpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn unit_grid(n: usize) -> Arc<GridSpec> {
        Arc::new(GridSpec::uniform(2, n, 1.0).unwrap())
    }

    #[test]
    fn psi_is_a_bump() {
        let phi = TestFunction::new(1.0, vec![], 0.8).unwrap();
        assert_eq!(phi.psi(0.0), 1.0);
        assert_eq!(phi.psi(0.8), 0.0);
        assert_eq!(phi.psi(1.0), 0.0);
        assert_eq!(phi.psi_t(0.0), 0.0);
        assert!(phi.psi(0.79) < 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let grid = GridSpec::new(&[4, 4], &[1.0, 2.0]).unwrap();
        let phi = TestFunction::new(1.3, vec![1, 2], 1.0).unwrap();
        let x = [0.3, 0.7];
        let t = 0.4;
        let mut errs_t = Vec::new();
        let mut errs_x = Vec::new();
        for h in [1e-2, 5e-3, 2.5e-3] {
            let fd_t = (phi.phi(&grid, &x, t + h) - phi.phi(&grid, &x, t - h)) / (2.0 * h);
            errs_t.push((fd_t - phi.phi_t(&grid, &x, t)).abs());
            let xp = [x[0], x[1] + h];
            let xm = [x[0], x[1] - h];
            let fd_x = (phi.phi(&grid, &xp, t) - phi.phi(&grid, &xm, t)) / (2.0 * h);
            errs_x.push((fd_x - phi.grad_phi(&grid, &x, t, 1)).abs());
        }
        for errs in [errs_t, errs_x] {
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!(order >= 1.8, "order {order} from {errs:?}", errs = w);
            }
        }
    }

    #[test]
    fn zero_test_function_gives_zero_residual() {
        let g = unit_grid(4);
        let data = make_initial(&InitialSpec::gaussian_bump(1.0, None, 0.2, 0.1, 1.0), g).unwrap();
        let spec = DiffusionSpec::power(1.0, 2.0).unwrap();
        let cfg = SchemeConfig {
            t_end: 0.1,
            sample_every: 0.01,
            ..Default::default()
        };
        let opts = RunOptions {
            keep_samples: true,
            ..Default::default()
        };
        let out = run(&data, &spec, &cfg, &opts, None).unwrap();
        let zero = TestFunction::new(0.0, vec![1, 1], 0.1).unwrap();
        assert_eq!(weak_residual_u(&out.samples, &spec, &zero).unwrap(), 0.0);
        assert_eq!(weak_residual_v(&out.samples, &zero).unwrap(), 0.0);
    }

    #[test]
    fn support_beyond_window_is_error() {
        let g = unit_grid(4);
        let data = make_initial(&InitialSpec::constant(1.0, 1.0), g).unwrap();
        let state = SimState::initial(&data);
        let phi = TestFunction::new(1.0, vec![], 1.0).unwrap();
        let spec = DiffusionSpec::power(1.0, 2.0).unwrap();
        assert!(matches!(weak_residual_u(&[state], &spec, &phi), Err(Error::Parameter(_))));
    }

    #[test]
    fn eps_validation() {
        let g = unit_grid(4);
        let data = make_initial(&InitialSpec::constant(1.0, 1.0), g).unwrap();
        let mut cfg = LadderConfig {
            base: DiffusionSpec::power(1.0, 2.0).unwrap(),
            eps: vec![0.1, 0.1],
            data,
            scheme: SchemeConfig::default(),
            formulation: Formulation::Uv,
            test_functions: vec![],
        };
        assert!(cfg.validate().is_err());
        cfg.eps = vec![0.1, -0.05];
        assert!(cfg.validate().is_err());
        cfg.eps = vec![0.1, 0.05];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn default_eps_is_geometric() {
        let e = default_eps();
        assert_eq!(e[0], 0.1);
        assert!(e.windows(2).all(|w| w[1] == 0.5 * w[0]));
        assert!(*e.last().unwrap() >= 1e-4 && e.last().unwrap() * 0.5 < 1e-4);
    }

    #[test]
    fn homogeneous_ladder_has_zero_differences() {
        let g = unit_grid(4);
        let data = make_initial(&InitialSpec::constant(1.0, 1.0), g).unwrap();
        let cfg = LadderConfig {
            base: DiffusionSpec::power(1.0, 2.0).unwrap(),
            eps: vec![0.1, 0.05, 0.025],
            data,
            scheme: SchemeConfig {
                t_end: 0.5,
                sample_every: 0.1,
                dt_max: 0.01,
                ..Default::default()
            },
            formulation: Formulation::Uv,
            test_functions: vec![TestFunction::new(1.0, vec![0, 0], 0.5).unwrap()],
        };
        let report = run_ladder(&cfg, 2).unwrap();
        // zero up to roundoff in the v-solve
        assert!(report.d.iter().all(|d| d.unwrap() < 1e-14));
        assert!(report.e.iter().all(|e| e.unwrap() < 1e-14));
        assert!(report.cauchy_consistent);
        let again = run_ladder(&cfg, 1).unwrap();
        assert_eq!(report.to_csv(1), again.to_csv(1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn residual_is_linear_in_phi(c in 0.1f64..10.0) {
            let g = unit_grid(6);
            let data = make_initial(&InitialSpec::gaussian_bump(1.0, None, 0.2, 0.1, 1.0), g).unwrap();
            let spec = DiffusionSpec::power(1.0, 2.0).unwrap();
            let cfg = SchemeConfig { t_end: 0.05, sample_every: 0.005, ..Default::default() };
            let opts = RunOptions { keep_samples: true, ..Default::default() };
            let out = run(&data, &spec, &cfg, &opts, None).unwrap();
            let phi = TestFunction::new(1.0, vec![1, 0], 0.05).unwrap();
            let scaled = TestFunction::new(c, vec![1, 0], 0.05).unwrap();
            let r1 = weak_residual_u(&out.samples, &spec, &phi).unwrap();
            let rc = weak_residual_u(&out.samples, &spec, &scaled).unwrap();
            prop_assert!((rc - c * r1).abs() <= 1e-12 * rc.abs().max(1e-300));
        }
    }
}
