//! Diffusion laws D with D(s) ≥ δ s^{m−1}, their antiderivatives, the
//! ε-shift regularization, initial data and the v ↔ w change of variables.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionKind {
    /// D(s) = δ s^{m−1}
    Power,
    /// D(s) = δ s^{m−1} + d0
    PowerOffset { d0: f64 },
    /// D(s) = base(s + eps)
    Shifted { base: Box<DiffusionSpec>, eps: f64 },
}

/// A diffusion law from the closed family power / power + offset / shifts.
///
/// `delta` and `m` always describe the lower bound δ s^{m−1}; a shifted law
/// inherits them from its base.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    delta: f64,
    m: f64,
    kind: DiffusionKind,
}

impl DiffusionSpec {
    pub fn power(delta: f64, m: f64) -> Result<Self> {
        check_delta_m(delta, m)?;
        Ok(Self {
            delta,
            m,
            kind: DiffusionKind::Power,
        })
    }

    pub fn power_offset(delta: f64, m: f64, d0: f64) -> Result<Self> {
        check_delta_m(delta, m)?;
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::param(format!("offset d0 must be > 0, got {d0}")));
        }
        Ok(Self {
            delta,
            m,
            kind: DiffusionKind::PowerOffset { d0 },
        })
    }

    /// D_ε(s) = D(s + ε).
    pub fn shift_regularize(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::param(format!("shift eps must be > 0, got {eps}")));
        }
        Ok(Self {
            delta: self.delta,
            m: self.m,
            kind: DiffusionKind::Shifted {
                base: Box::new(self.clone()),
                eps,
            },
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    /// Same law with exponent `m` (through every shift layer).
    pub fn with_m(&self, m: f64) -> Result<Self> {
        check_delta_m(self.delta, m)?;
        let kind = match &self.kind {
            DiffusionKind::Shifted { base, eps } => DiffusionKind::Shifted {
                base: Box::new(base.with_m(m)?),
                eps: *eps,
            },
            k => k.clone(),
        };
        Ok(Self {
            delta: self.delta,
            m,
            kind,
        })
    }

    /// Total shift accumulated through nested `Shifted` layers.
    pub fn total_shift(&self) -> f64 {
        match &self.kind {
            DiffusionKind::Shifted { base, eps } => eps + base.total_shift(),
            _ => 0.0,
        }
    }

    /// True for the non-degenerate subclass, D(0) > 0.
    pub fn is_nondegenerate(&self) -> bool {
        self.d(0.0) > 0.0
    }

    pub fn eval_d(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(self.d(s))
    }

    pub fn eval_dbar(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(self.dbar(s))
    }

    /// D(s) for s ≥ 0; roundoff-negative arguments are treated as 0.
    #[inline]
    pub(crate) fn d(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.kind {
            DiffusionKind::Power => self.delta * pow_fast(s, self.m - 1.0),
            DiffusionKind::PowerOffset { d0 } => self.delta * pow_fast(s, self.m - 1.0) + d0,
            DiffusionKind::Shifted { base, eps } => base.d(s + eps),
        }
    }

    /// D̄(s) = ∫₀ˢ D(σ) dσ in closed form.
    #[inline]
    pub(crate) fn dbar(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match &self.kind {
            DiffusionKind::Power => self.delta * pow_fast(s, self.m) / self.m,
            DiffusionKind::PowerOffset { d0 } => self.delta * pow_fast(s, self.m) / self.m + d0 * s,
            DiffusionKind::Shifted { base, eps } => base.dbar(s + eps) - base.dbar(*eps),
        }
    }
}

fn check_delta_m(delta: f64, m: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param(format!("delta must be > 0, got {delta}")));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::param(format!("m must be >= 1, got {m}")));
    }
    Ok(())
}

fn check_arg(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("diffusion argument must be finite and >= 0, got {s}")))
    }
}

/// s^e with exact shortcuts for the small integer exponents the sweeps use.
#[inline]
pub(crate) fn pow_fast(s: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        s
    } else if e == 2.0 {
        s * s
    } else if e == -1.0 {
        1.0 / s
    } else if e == 0.5 {
        s.sqrt()
    } else {
        s.powf(e)
    }
}

/// w = −log(v / v0_max), cellwise.
pub fn v_to_w(v: &ScalarField, v0_max: f64) -> Result<ScalarField> {
    check_vmax(v0_max)?;
    if let Some(cell) = v.values().iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Positivity {
            field: "v",
            cell,
            value: v.values()[cell],
        });
    }
    let log_max = v0_max.ln();
    Ok(v.map(|x| log_max - x.ln()))
}

/// v = v0_max · e^{−w}, cellwise.
pub fn w_to_v(w: &ScalarField, v0_max: f64) -> Result<ScalarField> {
    check_vmax(v0_max)?;
    if let Some(cell) = w.values().iter().position(|&x| !(x >= -1e-12)) {
        return Err(Error::Positivity {
            field: "w",
            cell,
            value: w.values()[cell],
        });
    }
    Ok(w.map(|x| v0_max * (-x).exp()))
}

fn check_vmax(v0_max: f64) -> Result<()> {
    if v0_max > 0.0 && v0_max.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("v0_max must be > 0, got {v0_max}")))
    }
}

/// Spatial profile for one initial field.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// background + amplitude · exp(−|x − center|² / (2 width²)); `center`
    /// defaults to the middle of the box.
    Gaussian {
        amplitude: f64,
        center: Option<Vec<f64>>,
        width: f64,
        background: f64,
    },
    /// mean · (1 + rel_amplitude · ∏_a cos(k_a π x_a / L_a)); `k_a = 0`
    /// leaves axis `a` unmodulated.
    Perturbed {
        mean: f64,
        rel_amplitude: f64,
        modes: Vec<u32>,
    },
    /// Independent uniform draws in [lo, hi] per cell.
    Random {
        lo: f64,
        hi: f64,
    },
}

/// Recipe for (u0, v0).
///
/// Random draws come from `ChaCha8Rng::seed_from_u64(seed)`: first the u
/// profile (if random) in cell order, then the v profile, then the
/// multiplicative u-noise factors `1 + u_noise · ξ` with ξ uniform in
/// [−1, 1). The stream is fixed for a given build.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub u: Profile,
    pub v: Profile,
    pub seed: u64,
    pub u_noise: f64,
}

impl InitialSpec {
    pub fn constant(u_bar: f64, v_bar: f64) -> Self {
        Self {
            u: Profile::Constant { value: u_bar },
            v: Profile::Constant { value: v_bar },
            seed: 0,
            u_noise: 0.0,
        }
    }

    pub fn gaussian_bump(amplitude: f64, center: Option<Vec<f64>>, width: f64, background: f64, v_bar: f64) -> Self {
        Self {
            u: Profile::Gaussian {
                amplitude,
                center,
                width,
                background,
            },
            v: Profile::Constant { value: v_bar },
            seed: 0,
            u_noise: 0.0,
        }
    }

    pub fn perturbed_constant(u_bar: f64, v_bar: f64, rel_amplitude: f64, modes: Vec<u32>) -> Self {
        Self {
            u: Profile::Perturbed {
                mean: u_bar,
                rel_amplitude,
                modes: modes.clone(),
            },
            v: Profile::Perturbed {
                mean: v_bar,
                rel_amplitude,
                modes,
            },
            seed: 0,
            u_noise: 0.0,
        }
    }

    pub fn seeded_random(u_bounds: (f64, f64), v_bounds: (f64, f64), seed: u64) -> Self {
        Self {
            u: Profile::Random {
                lo: u_bounds.0,
                hi: u_bounds.1,
            },
            v: Profile::Random {
                lo: v_bounds.0,
                hi: v_bounds.1,
            },
            seed,
            u_noise: 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_u_noise(mut self, u_noise: f64) -> Self {
        self.u_noise = u_noise;
        self
    }

    /// Checks the sign constraints u0 ≥ 0 and v0 > 0 from the parameters
    /// alone, before any field is built.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let mut errs = Vec::new();
        check_profile("u", &self.u, dim, false, &mut errs);
        check_profile("v", &self.v, dim, true, &mut errs);
        if !(0.0..1.0).contains(&self.u_noise) {
            errs.push(format!("u_noise must be in [0, 1), got {}", self.u_noise));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(errs.join("; ")))
        }
    }
}

fn check_profile(name: &str, p: &Profile, dim: usize, strict: bool, errs: &mut Vec<String>) {
    let sign_ok = |x: f64| if strict { x > 0.0 } else { x >= 0.0 };
    let bound = if strict { "> 0" } else { ">= 0" };
    let finite = |x: f64| x.is_finite();
    match p {
        Profile::Constant { value } => {
            if !(finite(*value) && sign_ok(*value)) {
                errs.push(format!("{name}: constant value must be {bound}, got {value}"));
            }
        }
        Profile::Gaussian {
            amplitude,
            center,
            width,
            background,
        } => {
            if !(finite(*amplitude) && *amplitude >= 0.0) {
                errs.push(format!("{name}: gaussian amplitude must be >= 0, got {amplitude}"));
            }
            if !(finite(*background) && sign_ok(*background)) {
                errs.push(format!("{name}: gaussian background must be {bound}, got {background}"));
            }
            if !(finite(*width) && *width > 0.0) {
                errs.push(format!("{name}: gaussian width must be > 0, got {width}"));
            }
            if let Some(c) = center {
                if c.len() != dim {
                    errs.push(format!("{name}: gaussian center has {} entries, grid dim is {dim}", c.len()));
                }
            }
        }
        Profile::Perturbed {
            mean,
            rel_amplitude,
            modes,
        } => {
            if !(finite(*mean) && sign_ok(*mean)) {
                errs.push(format!("{name}: perturbed mean must be {bound}, got {mean}"));
            }
            let a = rel_amplitude.abs();
            let amp_ok = if strict { a < 1.0 } else { a <= 1.0 };
            if !(rel_amplitude.is_finite() && amp_ok) {
                errs.push(format!(
                    "{name}: relative amplitude must satisfy |a| {} 1, got {rel_amplitude}",
                    if strict { "<" } else { "<=" }
                ));
            }
            if modes.len() != dim {
                errs.push(format!("{name}: {} modes given, grid dim is {dim}", modes.len()));
            }
        }
        Profile::Random { lo, hi } => {
            if !(finite(*lo) && sign_ok(*lo)) {
                errs.push(format!("{name}: random lower bound must be {bound}, got {lo}"));
            }
            if !(finite(*hi) && hi >= lo) {
                errs.push(format!("{name}: random upper bound must be >= lower bound, got {hi}"));
            }
        }
    }
}

fn sample_profile(p: &Profile, grid: &Arc<GridSpec>, rng: &mut ChaCha8Rng) -> ScalarField {
    let dim = grid.dim();
    match p {
        Profile::Constant { value } => ScalarField::constant(grid.clone(), *value),
        Profile::Gaussian {
            amplitude,
            center,
            width,
            background,
        } => {
            let c: Vec<f64> = center
                .clone()
                .unwrap_or_else(|| grid.lengths().iter().map(|l| 0.5 * l).collect());
            let two_w2 = 2.0 * width * width;
            ScalarField::from_fn(grid.clone(), |x| {
                let r2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
                background + amplitude * (-r2 / two_w2).exp()
            })
        }
        Profile::Perturbed {
            mean,
            rel_amplitude,
            modes,
        } => {
            let lengths = grid.lengths().to_vec();
            ScalarField::from_fn(grid.clone(), |x| {
                let prod: f64 = (0..dim)
                    .map(|a| (modes[a] as f64 * std::f64::consts::PI * x[a] / lengths[a]).cos())
                    .product();
                mean * (1.0 + rel_amplitude * prod)
            })
        }
        Profile::Random { lo, hi } => {
            let values = (0..grid.cell_count())
                .map(|_| if hi > lo { rng.gen_range(*lo..*hi) } else { *lo })
                .collect();
            ScalarField::new(grid.clone(), values).expect("sized to grid")
        }
    }
}

/// Initial fields (u0, v0) and v0_max = max v0.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    u0: ScalarField,
    v0: ScalarField,
    v0_max: f64,
}

impl InitialData {
    pub fn new(u0: ScalarField, v0: ScalarField) -> Result<Self> {
        if u0.grid() != v0.grid() {
            return Err(Error::param("u0 and v0 live on different grids"));
        }
        u0.check_finite("u0")?;
        v0.check_finite("v0")?;
        if let Some(cell) = u0.values().iter().position(|&x| x < 0.0) {
            return Err(Error::Positivity {
                field: "u0",
                cell,
                value: u0.values()[cell],
            });
        }
        if let Some(cell) = v0.values().iter().position(|&x| x <= 0.0) {
            return Err(Error::Positivity {
                field: "v0",
                cell,
                value: v0.values()[cell],
            });
        }
        let v0_max = v0.max();
        Ok(Self { u0, v0, v0_max })
    }

    pub fn u0(&self) -> &ScalarField {
        &self.u0
    }

    pub fn v0(&self) -> &ScalarField {
        &self.v0
    }

    pub fn v0_max(&self) -> f64 {
        self.v0_max
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        self.u0.grid()
    }

    /// w0 = −log(v0 / v0_max).
    pub fn w0(&self) -> ScalarField {
        v_to_w(&self.v0, self.v0_max).expect("v0 > 0 by construction")
    }
}

pub fn make_initial(spec: &InitialSpec, grid: Arc<GridSpec>) -> Result<InitialData> {
    spec.validate(grid.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut u0 = sample_profile(&spec.u, &grid, &mut rng);
    let v0 = sample_profile(&spec.v, &grid, &mut rng);
    if spec.u_noise > 0.0 {
        for x in u0.values_mut() {
            *x *= 1.0 + spec.u_noise * rng.gen_range(-1.0..1.0);
        }
    }
    InitialData::new(u0, v0)
}
