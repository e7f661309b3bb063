//! Time series of the a-priori functionals tracked along a run.
//!
//! Instantaneous entries are computed from the sampled fields. Cumulative
//! entries (`cum_*`, `*_cum`) are space-time integrals accumulated by the
//! stepper with a per-step trapezoid rule, so they do not depend on the
//! sampling cadence.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{lp_norm_unchecked, GridSpec, ScalarField};
use crate::io::write_atomic;
use crate::model::{pow_fast, v_to_w, DiffusionSpec, InitialData};
use crate::snapshot::fmt17;
use crate::stepper::{FaceAverage, SimState};

/// Which optional functionals to track.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagConfig {
    /// Exponents p for ‖u‖_{L^p}.
    pub lp: Vec<f64>,
    /// Pairs (p, r) for ∫₀ᵗ ‖u‖_{L^p}^r.
    pub pr: Vec<(f64, f64)>,
}

impl DiagConfig {
    pub fn validate(&self) -> Result<()> {
        for &p in self.lp.iter().chain(self.pr.iter().map(|(p, _)| p)) {
            if !(p >= 1.0) {
                return Err(Error::param(format!("diagnostic exponent p must be >= 1, got {p}")));
            }
        }
        if let Some((_, r)) = self.pr.iter().find(|(_, r)| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::param(format!("diagnostic exponent r must be > 0, got {r}")));
        }
        Ok(())
    }
}

/// Spatial integrands of the cumulative functionals at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Integrands {
    pub grad_w_sq: f64,
    pub du_grad_u_sq: f64,
    pub grad_um1_sq: f64,
    pub mixed: f64,
    pub lp_pow_r: Vec<f64>,
}

#[inline]
pub(crate) fn face_mean(avg: FaceAverage, a: f64, b: f64) -> f64 {
    match avg {
        FaceAverage::Arithmetic => 0.5 * (a + b),
        FaceAverage::Harmonic => {
            let s = a + b;
            if s > 0.0 {
                2.0 * a * b / s
            } else {
                0.0
            }
        }
    }
}

impl Integrands {
    /// `d_cell[i] = D(u_i)`; `w` is −log(v / v0_max).
    pub fn evaluate(
        grid: &GridSpec,
        spec: &DiffusionSpec,
        face_avg: FaceAverage,
        cfg: &DiagConfig,
        u: &[f64],
        d_cell: &[f64],
        w: &[f64],
    ) -> Self {
        let vol = grid.cell_volume();
        let m = spec.m();
        let mut out = Integrands::default();
        let um1: Vec<f64> = u.iter().map(|&x| pow_fast(x.max(0.0), m - 1.0)).collect();
        for a in 0..grid.dim() {
            let inv_h = 1.0 / grid.spacing()[a];
            grid.for_each_interior_face(a, |_, lo, hi| {
                let gw = (w[hi] - w[lo]) * inv_h;
                out.grad_w_sq += gw * gw;
                let gu = (u[hi] - u[lo]) * inv_h;
                let df = face_mean(face_avg, d_cell[lo], d_cell[hi]);
                out.du_grad_u_sq += (df * gu) * (df * gu);
                let gm = (um1[hi] - um1[lo]) * inv_h;
                out.grad_um1_sq += gm * gm;
                let uf = 0.5 * (u[lo] + u[hi]);
                if uf > 0.0 && gu != 0.0 {
                    out.mixed += df * pow_fast(uf, m - 3.0) * gu * gu;
                }
            });
        }
        out.grad_w_sq *= vol;
        out.du_grad_u_sq *= vol;
        out.grad_um1_sq *= vol;
        out.mixed *= vol;
        out.lp_pow_r = cfg
            .pr
            .iter()
            .map(|&(p, r)| lp_norm_unchecked(vol, u, p).powf(r))
            .collect();
        out
    }
}

/// Running space-time integrals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cumulative {
    pub grad_w_sq: f64,
    pub du_grad_u_l2: f64,
    pub grad_um1_l2: f64,
    pub mixed: f64,
    pub lp_pow_r: Vec<f64>,
}

impl Cumulative {
    pub fn zeros(cfg: &DiagConfig) -> Self {
        Self {
            lp_pow_r: vec![0.0; cfg.pr.len()],
            ..Default::default()
        }
    }

    /// Trapezoid increment over one interval of length `dt`.
    pub fn advance(&mut self, dt: f64, before: &Integrands, after: &Integrands) {
        let h = 0.5 * dt;
        self.grad_w_sq += h * (before.grad_w_sq + after.grad_w_sq);
        self.du_grad_u_l2 += h * (before.du_grad_u_sq + after.du_grad_u_sq);
        self.grad_um1_l2 += h * (before.grad_um1_sq + after.grad_um1_sq);
        self.mixed += h * (before.mixed + after.mixed);
        for (c, (b, a)) in self
            .lp_pow_r
            .iter_mut()
            .zip(before.lp_pow_r.iter().zip(&after.lp_pow_r))
        {
            *c += h * (b + a);
        }
    }
}

/// One time-stamped row of every tracked functional.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRecord {
    pub t: f64,
    pub mass_u: f64,
    pub sup_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub sup_w: f64,
    pub int_w: f64,
    pub cum_grad_w_sq: f64,
    pub int_u_pow_m1: f64,
    pub du_grad_u_l2_cum: f64,
    pub grad_um1_l2_cum: f64,
    pub mixed_cum: f64,
    pub grad_v_sup: f64,
    pub grad_logv_sup: f64,
    /// (p, ‖u‖_p)
    pub lp_norms: Vec<(f64, f64)>,
    /// ((p, r), ∫₀ᵗ ‖u‖_p^r)
    pub cum_lp_pow_r: Vec<((f64, f64), f64)>,
}

const FIXED_COLUMNS: [&str; 14] = [
    "t",
    "mass_u",
    "sup_u",
    "min_v",
    "max_v",
    "sup_w",
    "int_w",
    "cum_grad_w_sq",
    "int_u_pow_m1",
    "du_grad_u_l2_cum",
    "grad_um1_l2_cum",
    "mixed_cum",
    "grad_v_sup",
    "grad_logv_sup",
];

impl DiagRecord {
    fn fixed_values(&self) -> [f64; 14] {
        [
            self.t,
            self.mass_u,
            self.sup_u,
            self.min_v,
            self.max_v,
            self.sup_w,
            self.int_w,
            self.cum_grad_w_sq,
            self.int_u_pow_m1,
            self.du_grad_u_l2_cum,
            self.grad_um1_l2_cum,
            self.mixed_cum,
            self.grad_v_sup,
            self.grad_logv_sup,
        ]
    }

    /// Looks a functional up by its CSV column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        if let Some(i) = FIXED_COLUMNS.iter().position(|&c| c == name) {
            return Some(self.fixed_values()[i]);
        }
        self.lp_norms
            .iter()
            .find(|(p, _)| lp_column(*p) == name)
            .map(|(_, v)| *v)
            .or_else(|| {
                self.cum_lp_pow_r
                    .iter()
                    .find(|((p, r), _)| cum_column(*p, *r) == name)
                    .map(|(_, v)| *v)
            })
    }

    fn check_finite(&self) -> Result<()> {
        let fixed = self.fixed_values();
        let extra = self.lp_norms.iter().map(|x| x.1).chain(self.cum_lp_pow_r.iter().map(|x| x.1));
        for (i, v) in fixed.iter().copied().chain(extra).enumerate() {
            if !v.is_finite() {
                let name = FIXED_COLUMNS.get(i).copied().unwrap_or("lp/cum column");
                return Err(Error::DataIntegrity(format!(
                    "diagnostic {name} is non-finite ({v}) at t = {}",
                    self.t
                )));
            }
        }
        Ok(())
    }
}

fn lp_column(p: f64) -> String {
    format!("lp_{p}")
}

fn cum_column(p: f64, r: f64) -> String {
    format!("cum_{p}_{r}")
}

/// Builds the record for `state`. `cum` carries the space-time integrals
/// accumulated up to `state.t`.
pub fn compute_record(
    state: &SimState,
    data: &InitialData,
    spec: &DiffusionSpec,
    cfg: &DiagConfig,
    cum: &Cumulative,
) -> Result<DiagRecord> {
    let grid = state.u.grid();
    let vol = grid.cell_volume();
    let u = state.u.values();
    let v = state.v.values();
    let w = v_to_w(&state.v, data.v0_max())?;
    let m = spec.m();

    let mut grad_v_sup: f64 = 0.0;
    let mut grad_logv_sup: f64 = 0.0;
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        grid.for_each_interior_face(a, |_, lo, hi| {
            let g = (v[hi] - v[lo]) * inv_h;
            grad_v_sup = grad_v_sup.max(g.abs());
            grad_logv_sup = grad_logv_sup.max((g / (0.5 * (v[lo] + v[hi]))).abs());
        });
    }

    let record = DiagRecord {
        t: state.t,
        mass_u: vol * u.iter().sum::<f64>(),
        sup_u: state.u.max(),
        min_v: state.v.min(),
        max_v: state.v.max(),
        sup_w: w.max(),
        int_w: vol * w.values().iter().sum::<f64>(),
        cum_grad_w_sq: cum.grad_w_sq,
        int_u_pow_m1: vol * u.iter().map(|&x| pow_fast(x.max(0.0), m - 1.0)).sum::<f64>(),
        du_grad_u_l2_cum: cum.du_grad_u_l2,
        grad_um1_l2_cum: cum.grad_um1_l2,
        mixed_cum: cum.mixed,
        grad_v_sup,
        grad_logv_sup,
        lp_norms: cfg.lp.iter().map(|&p| (p, lp_norm_unchecked(vol, u, p))).collect(),
        cum_lp_pow_r: cfg.pr.iter().copied().zip(cum.lp_pow_r.iter().copied()).collect(),
    };
    record.check_finite()?;
    Ok(record)
}

/// Diagnostics CSV text: fixed columns, then `lp_<p>` and `cum_<p>_<r>`.
pub fn to_csv(series: &[DiagRecord]) -> String {
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    if let Some(first) = series.first() {
        header.extend(first.lp_norms.iter().map(|(p, _)| lp_column(*p)));
        header.extend(first.cum_lp_pow_r.iter().map(|((p, r), _)| cum_column(*p, *r)));
    }
    let mut out = header.join(",");
    out.push('\n');
    for rec in series {
        let row: Vec<String> = rec
            .fixed_values()
            .iter()
            .copied()
            .chain(rec.lp_norms.iter().map(|x| x.1))
            .chain(rec.cum_lp_pow_r.iter().map(|x| x.1))
            .map(fmt17)
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, series: &[DiagRecord]) -> Result<()> {
    write_atomic(path, to_csv(series).as_bytes())
}

pub fn from_csv(text: &str) -> Result<Vec<DiagRecord>> {
    let bad = |msg: String| Error::DataIntegrity(format!("diagnostics CSV: {msg}"));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    for col in FIXED_COLUMNS {
        if !index.contains_key(col) {
            return Err(bad(format!("missing column `{col}`")));
        }
    }
    let mut lp_cols = Vec::new();
    let mut cum_cols = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if let Some(p) = h.strip_prefix("lp_") {
            let p = p.parse::<f64>().map_err(|_| bad(format!("bad column `{h}`")))?;
            lp_cols.push((i, p));
        } else if let Some(rest) = h.strip_prefix("cum_").filter(|_| h != "cum_grad_w_sq") {
            let (p, r) = rest.split_once('_').ok_or_else(|| bad(format!("bad column `{h}`")))?;
            let p = p.parse::<f64>().map_err(|_| bad(format!("bad column `{h}`")))?;
            let r = r.parse::<f64>().map_err(|_| bad(format!("bad column `{h}`")))?;
            cum_cols.push((i, (p, r)));
        }
    }
    let mut out = Vec::new();
    for (row_no, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let vals = row
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("row {}: bad number `{s}`", row_no + 1))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != header.len() {
            return Err(bad(format!("row {} has {} fields", row_no + 1, vals.len())));
        }
        let f = |c: &str| vals[index[c]];
        out.push(DiagRecord {
            t: f("t"),
            mass_u: f("mass_u"),
            sup_u: f("sup_u"),
            min_v: f("min_v"),
            max_v: f("max_v"),
            sup_w: f("sup_w"),
            int_w: f("int_w"),
            cum_grad_w_sq: f("cum_grad_w_sq"),
            int_u_pow_m1: f("int_u_pow_m1"),
            du_grad_u_l2_cum: f("du_grad_u_l2_cum"),
            grad_um1_l2_cum: f("grad_um1_l2_cum"),
            mixed_cum: f("mixed_cum"),
            grad_v_sup: f("grad_v_sup"),
            grad_logv_sup: f("grad_logv_sup"),
            lp_norms: lp_cols.iter().map(|&(i, p)| (p, vals[i])).collect(),
            cum_lp_pow_r: cum_cols.iter().map(|&(i, pr)| (pr, vals[i])).collect(),
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<DiagRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv(&text)
}

/// ∫_Ω |∇w|² of a stored field pair, by the same face assembly the
/// stepper uses.
pub fn grad_w_sq_of(v: &ScalarField, v0_max: f64) -> Result<f64> {
    Ok(crate::grid::grad_l2_sq(&v_to_w(v, v0_max)?))
}
