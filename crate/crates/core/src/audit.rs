//! Checks of the a-priori estimates against a diagnostics series.
//!
//! Each check yields an [`AuditEntry`]; a report renders as text blocks whose
//! first line starts with `PASS` or `FAIL`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::diagnostics::DiagRecord;
use crate::grid::integrate;
use crate::model::InitialData;

pub const MASS_REL_TOL: f64 = 1e-10;
pub const MASS_ABS_TOL: f64 = 1e-14;
pub const DEFAULT_ENERGY_SLACK: f64 = 0.05;
pub const V_MAX_SLACK: f64 = 1e-12;
/// Growth functionals below this multiple of the initial mass scale are
/// treated as exact zeros.
pub const GROWTH_FLOOR: f64 = 1e-20;
/// Relative tolerance when deciding that a ratio series is nonincreasing.
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub name: String,
    pub passed: bool,
    pub t: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Largest lhs/rhs over the window (for bound checks the violation ratio).
    pub max_ratio: f64,
    /// Time of the first failing sample, if any.
    pub violation_t: Option<f64>,
    pub notes: Vec<(String, String)>,
}

impl AuditEntry {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            t: Vec::new(),
            lhs: Vec::new(),
            rhs: Vec::new(),
            max_ratio: 0.0,
            violation_t: None,
            notes: Vec::new(),
        }
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    fn render_into(&self, out: &mut String) {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} {} max_ratio={:.6e}", self.name, self.max_ratio);
        if let Some(t) = self.violation_t {
            let _ = writeln!(out, "  violation_t = {t:.6e}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(out, "  {k} = {v}");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            e.render_into(&mut out);
        }
        out
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Mass stays at its initial value: relative 1e-10, or absolute 1e-14 for
/// zero initial mass.
pub fn audit_mass(series: &[DiagRecord]) -> AuditEntry {
    let mut e = AuditEntry::new("mass_conservation");
    let Some(first) = series.first() else {
        e.passed = false;
        e.note("error", "empty series");
        return e;
    };
    let m0 = first.mass_u;
    let absolute = m0 == 0.0;
    for r in series {
        let dev = (r.mass_u - m0).abs();
        let rel = if absolute { dev } else { dev / m0.abs() };
        e.t.push(r.t);
        e.lhs.push(r.mass_u);
        e.rhs.push(m0);
        e.max_ratio = e.max_ratio.max(rel);
        let bad = if absolute { dev > MASS_ABS_TOL } else { rel > MASS_REL_TOL } || !dev.is_finite();
        if bad && e.violation_t.is_none() {
            e.violation_t = Some(r.t);
        }
    }
    e.passed = e.violation_t.is_none() && series.len() >= 2;
    e.note("mass0", format!("{m0:.17e}"));
    e.note("branch", if absolute { "absolute 1e-14" } else { "relative 1e-10" });
    if series.len() < 2 {
        e.note("error", "fewer than two samples");
    }
    e
}

/// Reference values for the energy bound: ∫w₀ and ∫u₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReference {
    pub int_w0: f64,
    pub int_u0: f64,
}

impl EnergyReference {
    pub fn from_data(data: &InitialData) -> Result<Self> {
        Ok(Self {
            int_w0: integrate(&data.w0())?,
            int_u0: integrate(data.u0())?,
        })
    }

    /// Reads the reference off the t = 0 row of a series.
    pub fn from_series(series: &[DiagRecord]) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::param("empty diagnostics series"))?;
        if first.t != 0.0 {
            return Err(Error::param(format!(
                "series must start at t = 0 to infer initial integrals, starts at {}",
                first.t
            )));
        }
        Ok(Self {
            int_w0: first.int_w,
            int_u0: first.mass_u,
        })
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.int_w0 + t * self.int_u0
    }
}

/// ∫₀ᵗ∫|∇w|² ≤ (1 + slack)(∫w₀ + t∫u₀) at every sample. Also reports the
/// budget defect |cum + ∫w(t) − ∫w₀ − t∫u₀| relative to the bound, which
/// vanishes for the continuum identity and measures scheme error.
pub fn audit_energy_w(series: &[DiagRecord], reference: EnergyReference, slack: f64) -> AuditEntry {
    let mut e = AuditEntry::new("energy_grad_w");
    let mut defect: f64 = 0.0;
    for r in series {
        let rhs = reference.bound(r.t);
        let q = ratio(r.cum_grad_w_sq, rhs);
        e.t.push(r.t);
        e.lhs.push(r.cum_grad_w_sq);
        e.rhs.push(rhs);
        e.max_ratio = e.max_ratio.max(q);
        if !(r.cum_grad_w_sq <= (1.0 + slack) * rhs) && e.violation_t.is_none() {
            e.violation_t = Some(r.t);
        }
        if rhs > 0.0 {
            defect = defect.max(budget_defect(r, reference));
        }
    }
    e.passed = e.violation_t.is_none() && !series.is_empty();
    e.note("slack", slack);
    e.note("budget_defect", format!("{defect:.6e}"));
    e
}

/// Relative defect of the identity ∫₀ᵗ∫|∇w|² + ∫w(t) = ∫w₀ + t∫u₀.
pub fn budget_defect(r: &DiagRecord, reference: EnergyReference) -> f64 {
    let rhs = reference.bound(r.t);
    ratio((r.cum_grad_w_sq + r.int_w - rhs).abs(), rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// C(1 + t)
    Linear,
    /// C(1 + t^{r+1})
    Power { r: f64 },
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Linear => 1.0 + t,
            Envelope::Power { r } => 1.0 + t.powf(r + 1.0),
        }
    }
}

/// Growth-shape check for `functional`: C* = max ratio to the envelope. Passes
/// if C* is attained in the first half of the window or the ratio is
/// nonincreasing over the last quarter. A functional whose C* stays at or
/// below `floor` is roundoff and passes.
pub fn audit_growth_envelope(
    series: &[DiagRecord],
    functional: &str,
    shape: Envelope,
    floor: f64,
) -> Result<AuditEntry> {
    if series.is_empty() {
        return Err(Error::param("growth audit needs a nonempty series"));
    }
    let values = series
        .iter()
        .map(|r| {
            r.get(functional)
                .ok_or_else(|| Error::param(format!("functional {functional} not in series")))
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    Ok(envelope_entry(functional, &times, &values, shape, floor))
}

/// Same check on raw arrays.
pub fn envelope_entry(functional: &str, times: &[f64], values: &[f64], shape: Envelope, floor: f64) -> AuditEntry {
    let label = match shape {
        Envelope::Linear => "linear".to_string(),
        Envelope::Power { r } => format!("power_r{r}"),
    };
    let mut e = AuditEntry::new(format!("growth_{functional}_{label}"));
    let ratios: Vec<f64> = times.iter().zip(values).map(|(&t, &f)| f / shape.eval(t)).collect();
    e.t = times.to_vec();
    e.lhs = values.to_vec();
    e.rhs = times.iter().map(|&t| shape.eval(t)).collect();

    let mut arg = 0;
    for (i, &q) in ratios.iter().enumerate() {
        if q > ratios[arg] {
            arg = i;
        }
    }
    let c_star = ratios.get(arg).copied().unwrap_or(0.0);
    e.max_ratio = c_star;
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let span = t1 - t0;
    let early = times[arg] <= t0 + 0.5 * span;
    let tail_start = t1 - 0.25 * span;
    let tail_monotone = ratios
        .windows(2)
        .zip(times.windows(2))
        .filter(|(_, t)| t[0] >= tail_start)
        .all(|(q, _)| q[1] <= q[0] + MONOTONE_TOL * q[0].abs().max(f64::MIN_POSITIVE));
    let negligible = c_star.abs() <= floor;
    e.passed = c_star.is_finite() && (early || tail_monotone || negligible);
    if !e.passed {
        e.violation_t = Some(times[arg]);
    }
    e.note("c_star", format!("{c_star:.6e}"));
    e.note("t_of_c_star", format!("{:.6e}", times[arg]));
    e.note("tail_nonincreasing", tail_monotone);
    if negligible {
        e.note("roundoff_floor", format!("{floor:.6e}"));
    }
    e
}

/// 0 < v ≤ v0_max(1 + 1e-12) at every sample and sup w ≤ `sup_w_cap`.
pub fn audit_pointwise_bounds(series: &[DiagRecord], v0_max: f64, sup_w_cap: f64) -> AuditEntry {
    let mut e = AuditEntry::new("pointwise_bounds");
    let upper = v0_max * (1.0 + V_MAX_SLACK);
    let mut max_sup_w: f64 = 0.0;
    let mut min_v = f64::INFINITY;
    for r in series {
        e.t.push(r.t);
        e.lhs.push(r.max_v);
        e.rhs.push(v0_max);
        e.max_ratio = e.max_ratio.max(ratio(r.max_v, v0_max));
        max_sup_w = max_sup_w.max(r.sup_w);
        min_v = min_v.min(r.min_v);
        let ok = r.min_v > 0.0 && r.max_v <= upper && r.sup_w.is_finite() && r.sup_w <= sup_w_cap;
        if !ok && e.violation_t.is_none() {
            e.violation_t = Some(r.t);
        }
    }
    e.passed = e.violation_t.is_none() && !series.is_empty();
    e.note("v0_max", format!("{v0_max:.17e}"));
    e.note("min_v", format!("{min_v:.6e}"));
    e.note("max_sup_w", format!("{max_sup_w:.6e}"));
    e.note("sup_w_cap", sup_w_cap);
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    pub energy_slack: f64,
    pub sup_w_cap: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            energy_slack: DEFAULT_ENERGY_SLACK,
            sup_w_cap: f64::INFINITY,
        }
    }
}

/// The standard battery: mass, energy, pointwise bounds, linear envelopes of
/// ∫u^{m−1}, ∫∫|∇u^{m−1}|² and the mixed term, and power envelopes of every
/// ∫‖u‖_p^r column.
pub fn audit_series(
    series: &[DiagRecord],
    reference: EnergyReference,
    v0_max: f64,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    if series.is_empty() {
        return Err(Error::param("cannot audit an empty series"));
    }
    let mut entries = vec![
        audit_mass(series),
        audit_energy_w(series, reference, opts.energy_slack),
        audit_pointwise_bounds(series, v0_max, opts.sup_w_cap),
    ];
    // roundoff level for functionals that vanish in exact arithmetic
    let floor = GROWTH_FLOOR * series[0].mass_u.abs().max(series[0].int_u_pow_m1.abs()).max(1.0);
    for f in ["int_u_pow_m1", "grad_um1_l2_cum", "mixed_cum"] {
        entries.push(audit_growth_envelope(series, f, Envelope::Linear, floor)?);
    }
    let pr: Vec<(f64, f64)> = series[0].cum_lp_pow_r.iter().map(|x| x.0).collect();
    for (p, r) in pr {
        let name = format!("cum_{p}_{r}");
        entries.push(audit_growth_envelope(series, &name, Envelope::Power { r }, floor)?);
    }
    Ok(AuditReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(t: f64) -> DiagRecord {
        DiagRecord {
            t,
            mass_u: 2.0,
            sup_u: 1.0,
            min_v: 0.5,
            max_v: 1.0,
            sup_w: 0.1,
            int_w: 1.0,
            cum_grad_w_sq: 0.0,
            int_u_pow_m1: 2.0,
            du_grad_u_l2_cum: 0.0,
            grad_um1_l2_cum: 0.0,
            mixed_cum: 0.0,
            grad_v_sup: 0.0,
            grad_logv_sup: 0.0,
            lp_norms: vec![],
            cum_lp_pow_r: vec![],
        }
    }

    fn series(n: usize, dt: f64) -> Vec<DiagRecord> {
        (0..n).map(|i| record(i as f64 * dt)).collect()
    }

    #[test]
    fn mass_passes_on_constant_and_flags_corruption() {
        let mut s = series(10, 0.1);
        assert!(audit_mass(&s).passed);
        s[4].mass_u *= 1.01;
        let e = audit_mass(&s);
        assert!(!e.passed);
        assert_eq!(e.violation_t, Some(s[4].t));
    }

    #[test]
    fn mass_zero_uses_absolute_branch() {
        let mut s = series(5, 0.1);
        for r in &mut s {
            r.mass_u = 0.0;
        }
        s[3].mass_u = 1e-15;
        assert!(audit_mass(&s).passed);
        s[3].mass_u = 1e-13;
        assert!(!audit_mass(&s).passed);
    }

    #[test]
    fn energy_inflation_fails() {
        let reference = EnergyReference { int_w0: 1.0, int_u0: 2.0 };
        let mut s = series(11, 0.1);
        for r in &mut s {
            r.cum_grad_w_sq = 0.5 * reference.bound(r.t);
            r.int_w = reference.bound(r.t) - r.cum_grad_w_sq;
        }
        let e = audit_energy_w(&s, reference, 0.05);
        assert!(e.passed);
        assert!((e.max_ratio - 0.5).abs() < 1e-12);
        for r in &mut s {
            r.cum_grad_w_sq *= 10.0;
        }
        assert!(!audit_energy_w(&s, reference, 0.05).passed);
    }

    #[test]
    fn energy_homogeneous_zero_lhs_passes() {
        let reference = EnergyReference { int_w0: 0.0, int_u0: 1.0 };
        let s = series(5, 0.25);
        let e = audit_energy_w(&s, reference, 0.05);
        assert!(e.passed);
        assert_eq!(e.max_ratio, 0.0);
    }

    #[test]
    fn envelope_cases() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let constant = vec![3.0; t.len()];
        let e = envelope_entry("f", &t, &constant, Envelope::Linear, 0.0);
        assert!(e.passed);
        assert_eq!(e.max_ratio, 3.0);

        let linear: Vec<f64> = t.iter().map(|t| 1.0 + t).collect();
        let e = envelope_entry("f", &t, &linear, Envelope::Linear, 0.0);
        assert!(e.passed);
        assert!((e.max_ratio - 1.0).abs() < 1e-15);

        let quad: Vec<f64> = t.iter().map(|t| (1.0 + t).powi(2)).collect();
        assert!(!envelope_entry("f", &t, &quad, Envelope::Linear, 0.0).passed);
    }

    #[test]
    fn envelope_roundoff_floor() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let noise: Vec<f64> = t.iter().map(|t| 1e-29 * t * t).collect();
        assert!(!envelope_entry("f", &t, &noise, Envelope::Linear, 0.0).passed);
        assert!(envelope_entry("f", &t, &noise, Envelope::Linear, 1e-20).passed);
    }

    #[test]
    fn envelope_empty_series_is_error() {
        assert!(matches!(
            audit_growth_envelope(&[], "int_u_pow_m1", Envelope::Linear, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn envelope_unknown_functional_is_error() {
        assert!(audit_growth_envelope(&series(3, 0.1), "nope", Envelope::Linear, 0.0).is_err());
    }

    #[test]
    fn pointwise_fault_injection() {
        let mut s = series(5, 0.1);
        assert!(audit_pointwise_bounds(&s, 1.0, f64::INFINITY).passed);
        s[2].max_v = 1.01;
        assert!(!audit_pointwise_bounds(&s, 1.0, f64::INFINITY).passed);
        let mut s = series(5, 0.1);
        s[1].sup_w = 5.0;
        assert!(!audit_pointwise_bounds(&s, 1.0, 4.0).passed);
        let mut s = series(5, 0.1);
        s[1].min_v = 0.0;
        assert!(!audit_pointwise_bounds(&s, 1.0, f64::INFINITY).passed);
    }

    #[test]
    fn report_lines_are_prefixed() {
        let s = series(5, 0.1);
        let reference = EnergyReference::from_series(&s).unwrap();
        let report = audit_series(&s, reference, 1.0, &AuditOptions::default()).unwrap();
        let text = report.render();
        let heads: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ') && !l.is_empty()).collect();
        assert_eq!(heads.len(), report.entries.len());
        assert!(heads.iter().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    }

    proptest! {
        #[test]
        fn envelope_sound_on_exact_shape(c in 0.01f64..100.0, r in 0.0f64..3.0) {
            let t: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
            let shape = Envelope::Power { r };
            let exact: Vec<f64> = t.iter().map(|&t| c * shape.eval(t)).collect();
            prop_assert!(envelope_entry("f", &t, &exact, shape, 0.0).passed);
            let lin: Vec<f64> = t.iter().map(|&t| c * (1.0 + t)).collect();
            prop_assert!(envelope_entry("f", &t, &lin, Envelope::Linear, 0.0).passed);
            let faster: Vec<f64> = t.iter().map(|&t| c * (1.0 + t).powi(2)).collect();
            prop_assert!(!envelope_entry("f", &t, &faster, Envelope::Linear, 0.0).passed);
        }
    }
}
