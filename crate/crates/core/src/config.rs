//! Run configuration in a flat `section.key = value` format.
//!
//! Lines starting with `#` and trailing `# ...` comments are ignored; lists
//! are comma separated. Parsing collects every problem before failing, and
//! each message names the offending key.
//!
//! ```text
//! mode = run                  # run | sweep | ladder | audit
//! formulation = uv            # uv | uw
//! grid.dim = 2
//! grid.cells = 64, 64         # one value is repeated for every axis
//! grid.lengths = 4
//! model.kind = power          # power | power_offset
//! model.delta = 1
//! model.m = 2
//! initial.preset = gaussian_bump
//! initial.amplitude = 2
//! initial.width = 0.5
//! initial.v_bar = 1
//! scheme.t_end = 5
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use crate::audit::AuditOptions;
use crate::diagnostics::DiagConfig;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ladder::{default_eps, TestFunction};
use crate::model::{DiffusionSpec, InitialSpec, Profile};
use crate::stepper::{FaceAverage, Formulation, SchemeConfig};

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "formulation",
    "grid.dim",
    "grid.cells",
    "grid.lengths",
    "model.kind",
    "model.delta",
    "model.m",
    "model.d0",
    "model.eps",
    "initial.preset",
    "initial.u_bar",
    "initial.v_bar",
    "initial.amplitude",
    "initial.center",
    "initial.width",
    "initial.background",
    "initial.rel_amplitude",
    "initial.modes",
    "initial.v_rel_amplitude",
    "initial.v_modes",
    "initial.u_bounds",
    "initial.v_bounds",
    "initial.seed",
    "initial.u_noise",
    "scheme.cfl_safety",
    "scheme.face_average",
    "scheme.v_solver_tol",
    "scheme.v_solver_max_iters",
    "scheme.dt_max",
    "scheme.t_end",
    "scheme.sample_every",
    "scheme.overflow_factor",
    "scheme.max_steps",
    "diagnostics.p",
    "diagnostics.pr",
    "diagnostics.energy_slack",
    "diagnostics.sup_w_cap",
    "output.directory",
    "output.snapshots",
    "sweep.m",
    "sweep.trials",
    "ladder.eps",
    "ladder.phi_modes",
    "ladder.phi_t_cut",
    "audit.input",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Run,
    Sweep { m_values: Vec<f64>, trials: u32 },
    Ladder { eps: Vec<f64>, test_functions: Vec<TestFunction> },
    Audit { input: PathBuf },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Sweep { .. } => "sweep",
            Mode::Ladder { .. } => "ladder",
            Mode::Audit { .. } => "audit",
        }
    }
}

/// Grid, law and initial data; absent in audit mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub grid: Arc<GridSpec>,
    pub spec: DiffusionSpec,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub formulation: Formulation,
    pub simulation: Option<Simulation>,
    pub scheme: SchemeConfig,
    pub diagnostics: DiagConfig,
    pub audit: AuditOptions,
    pub output: OutputConfig,
}

struct Entry {
    line: usize,
    value: String,
}

struct Parser {
    entries: BTreeMap<String, Entry>,
    errors: Vec<String>,
}

impl Parser {
    fn new(text: &str) -> Self {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected `key = value`, got `{line}`", i + 1));
                continue;
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                errors.push(format!("line {}: unknown key `{key}`", i + 1));
                continue;
            }
            if value.is_empty() {
                errors.push(format!("line {}: `{key}` has no value", i + 1));
                continue;
            }
            if let Some(prev) = entries.get(&key) {
                errors.push(format!("line {}: `{key}` already set on line {}", i + 1, prev.line));
                continue;
            }
            entries.insert(
                key,
                Entry {
                    line: i + 1,
                    value,
                },
            );
        }
        Self { entries, errors }
    }

    fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.keys().any(|k| k.starts_with(&prefix))
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.entries.get(key).map(|e| e.value.clone())
    }

    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn typed<T>(&mut self, key: &str, expected: &str, parse: impl Fn(&str) -> Option<T>) -> Option<T> {
        let raw = self.raw(key)?;
        match parse(&raw) {
            Some(v) => Some(v),
            None => {
                self.err(format!("{key}: expected {expected}, got `{raw}`"));
                None
            }
        }
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        self.typed(key, "a number", |s| s.parse::<f64>().ok().filter(|x| !x.is_nan()))
    }

    fn u64(&mut self, key: &str) -> Option<u64> {
        self.typed(key, "a nonnegative integer", |s| s.parse::<u64>().ok())
    }

    fn bool(&mut self, key: &str) -> Option<bool> {
        self.typed(key, "true or false", |s| s.parse::<bool>().ok())
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        self.typed(key, "a comma-separated list of numbers", |s| {
            s.split(',')
                .map(|x| x.trim().parse::<f64>().ok().filter(|x| !x.is_nan()))
                .collect()
        })
    }

    fn u64_list(&mut self, key: &str) -> Option<Vec<u64>> {
        self.typed(key, "a comma-separated list of nonnegative integers", |s| {
            s.split(',').map(|x| x.trim().parse::<u64>().ok()).collect()
        })
    }

    fn required<T>(&mut self, key: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.entries.contains_key(key) {
            self.err(format!("{key} is required"));
        }
        v
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.err(msg());
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Parses and validates a configuration. On failure the error lists every
/// violation, one per line.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut p = Parser::new(text);

    let mode_name = p.raw("mode").unwrap_or_else(|| "run".into());
    if !["run", "sweep", "ladder", "audit"].contains(&mode_name.as_str()) {
        p.err(format!("mode: expected run, sweep, ladder or audit, got `{mode_name}`"));
    }
    let formulation = match p.raw("formulation").as_deref() {
        None | Some("uv") => Formulation::Uv,
        Some("uw") => Formulation::Uw,
        Some(other) => {
            p.err(format!("formulation: expected uv or uw, got `{other}`"));
            Formulation::Uv
        }
    };

    let scheme = parse_scheme(&mut p);
    let diagnostics = parse_diagnostics(&mut p);
    let audit = parse_audit_options(&mut p);
    let output = OutputConfig {
        directory: p.raw("output.directory").map(PathBuf::from).unwrap_or_else(|| "output".into()),
        snapshots: p.bool("output.snapshots").unwrap_or(false),
    };

    let needs_sim = mode_name != "audit";
    let simulation = if needs_sim {
        let mut missing = false;
        for section in ["grid", "model", "initial"] {
            if !p.has_section(section) {
                p.err(format!("{section}: block is missing (required for mode {mode_name})"));
                missing = true;
            }
        }
        if missing {
            None
        } else {
            parse_simulation(&mut p)
        }
    } else {
        None
    };

    let mode = match mode_name.as_str() {
        "sweep" => {
            let m = p.f64_list("sweep.m");
            let m_values = p.required("sweep.m", m).unwrap_or_default();
            if let Some(bad) = m_values.iter().find(|m| !(**m >= 1.0 && m.is_finite())) {
                p.err(format!("sweep.m: every m must be >= 1, got {bad}"));
            }
            let trials = p.u64("sweep.trials").unwrap_or(1);
            p.check(trials >= 1 && trials <= u32::MAX as u64, || {
                format!("sweep.trials must be >= 1, got {trials}")
            });
            Mode::Sweep {
                m_values,
                trials: trials.min(u32::MAX as u64) as u32,
            }
        }
        "ladder" => {
            let eps = p.f64_list("ladder.eps").unwrap_or_else(default_eps);
            p.check(!eps.is_empty() && eps.iter().all(|e| positive(*e)), || {
                "ladder.eps: values must be > 0".into()
            });
            p.check(eps.windows(2).all(|w| w[1] < w[0]), || {
                "ladder.eps must be strictly decreasing".into()
            });
            let t_cut = p.f64("ladder.phi_t_cut").unwrap_or(scheme.t_end);
            p.check(positive(t_cut) && t_cut <= scheme.t_end, || {
                format!("ladder.phi_t_cut must be in (0, scheme.t_end], got {t_cut}")
            });
            let modes = match p.raw("ladder.phi_modes") {
                None => vec![vec![0u32], vec![2, 2]],
                Some(raw) => {
                    let parsed: Option<Vec<Vec<u32>>> = raw
                        .split(',')
                        .map(|f| f.split(':').map(|k| k.trim().parse::<u32>().ok()).collect())
                        .collect();
                    parsed.unwrap_or_else(|| {
                        p.err(format!(
                            "ladder.phi_modes: expected comma-separated mode tuples like `0:0, 2:2`, got `{raw}`"
                        ));
                        Vec::new()
                    })
                }
            };
            let test_functions = modes
                .into_iter()
                .filter_map(|m| TestFunction::new(1.0, m, t_cut).ok())
                .collect();
            Mode::Ladder { eps, test_functions }
        }
        "audit" => {
            let input = p.raw("audit.input");
            let input = p.required("audit.input", input).map(PathBuf::from).unwrap_or_default();
            Mode::Audit { input }
        }
        _ => Mode::Run,
    };

    if !p.errors.is_empty() {
        return Err(Error::Config(p.errors.join("\n")));
    }
    Ok(RunConfig {
        mode,
        formulation,
        simulation,
        scheme,
        diagnostics,
        audit,
        output,
    })
}

fn parse_scheme(p: &mut Parser) -> SchemeConfig {
    let mut s = SchemeConfig::default();
    if let Some(x) = p.f64("scheme.cfl_safety") {
        p.check(x > 0.0 && x <= 1.0, || format!("scheme.cfl_safety must be in (0, 1], got {x}"));
        s.cfl_safety = x;
    }
    match p.raw("scheme.face_average").as_deref() {
        None | Some("arithmetic") => {}
        Some("harmonic") => s.face_average = FaceAverage::Harmonic,
        Some(other) => p.err(format!("scheme.face_average: expected arithmetic or harmonic, got `{other}`")),
    }
    if let Some(x) = p.f64("scheme.v_solver_tol") {
        p.check(positive(x), || format!("scheme.v_solver_tol must be > 0, got {x}"));
        s.v_solver_tol = x;
    }
    if let Some(x) = p.u64("scheme.v_solver_max_iters") {
        p.check(x >= 1, || "scheme.v_solver_max_iters must be >= 1".into());
        s.v_solver_max_iters = Some(x as usize);
    }
    if let Some(x) = p.f64("scheme.dt_max") {
        p.check(x > 0.0, || format!("scheme.dt_max must be > 0, got {x}"));
        s.dt_max = x;
    }
    if let Some(x) = p.f64("scheme.t_end") {
        p.check(positive(x), || format!("scheme.t_end must be > 0, got {x}"));
        s.t_end = x;
    }
    if let Some(x) = p.f64("scheme.sample_every") {
        p.check(positive(x), || format!("scheme.sample_every must be > 0, got {x}"));
        s.sample_every = x;
    }
    if let Some(x) = p.f64("scheme.overflow_factor") {
        p.check(x > 1.0, || format!("scheme.overflow_factor must be > 1, got {x}"));
        s.overflow_factor = x;
    }
    if let Some(x) = p.u64("scheme.max_steps") {
        p.check(x >= 1, || "scheme.max_steps must be >= 1".into());
        s.max_steps = x;
    }
    s
}

fn parse_diagnostics(p: &mut Parser) -> DiagConfig {
    let mut d = DiagConfig::default();
    if let Some(ps) = p.f64_list("diagnostics.p") {
        p.check(ps.iter().all(|&x| x >= 1.0), || "diagnostics.p: every p must be >= 1".into());
        d.lp = ps;
    }
    if let Some(raw) = p.raw("diagnostics.pr") {
        let parsed: Option<Vec<(f64, f64)>> = raw
            .split(',')
            .map(|pair| {
                let (a, b) = pair.split_once(':')?;
                Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
            })
            .collect();
        match parsed {
            Some(pr) => {
                p.check(pr.iter().all(|&(a, b)| a >= 1.0 && b > 0.0), || {
                    "diagnostics.pr: need p >= 1 and r > 0 in every p:r pair".into()
                });
                d.pr = pr;
            }
            None => p.err(format!("diagnostics.pr: expected comma-separated p:r pairs, got `{raw}`")),
        }
    }
    d
}

fn parse_audit_options(p: &mut Parser) -> AuditOptions {
    let mut a = AuditOptions::default();
    if let Some(x) = p.f64("diagnostics.energy_slack") {
        p.check(x >= 0.0 && x.is_finite(), || format!("diagnostics.energy_slack must be >= 0, got {x}"));
        a.energy_slack = x;
    }
    if let Some(x) = p.f64("diagnostics.sup_w_cap") {
        p.check(x > 0.0, || format!("diagnostics.sup_w_cap must be > 0, got {x}"));
        a.sup_w_cap = x;
    }
    a
}

fn per_axis<T: Clone>(p: &mut Parser, key: &str, values: Vec<T>, dim: usize) -> Option<Vec<T>> {
    match values.len() {
        1 => Some(vec![values[0].clone(); dim]),
        n if n == dim => Some(values),
        n => {
            p.err(format!("{key}: expected 1 or {dim} values for grid.dim = {dim}, got {n}"));
            None
        }
    }
}

fn parse_simulation(p: &mut Parser) -> Option<Simulation> {
    let dim = p.u64("grid.dim");
    let dim = p.required("grid.dim", dim);
    if let Some(d) = dim {
        p.check((1..=3).contains(&d), || format!("grid.dim must be 1, 2 or 3, got {d}"));
    }
    let dim = dim.filter(|d| (1..=3).contains(d)).map(|d| d as usize);
    let cells = p.u64_list("grid.cells");
    let cells = p.required("grid.cells", cells);
    let lengths = p.f64_list("grid.lengths");
    let lengths = p.required("grid.lengths", lengths);
    let grid = match (dim, cells, lengths) {
        (Some(dim), Some(c), Some(l)) => {
            let c = per_axis(p, "grid.cells", c, dim);
            let l = per_axis(p, "grid.lengths", l, dim);
            match (c, l) {
                (Some(c), Some(l)) => {
                    p.check(c.iter().all(|&n| n >= 2), || "grid.cells must be >= 2 on every axis".into());
                    p.check(l.iter().all(|&x| positive(x)), || "grid.lengths must be > 0 on every axis".into());
                    let c: Vec<usize> = c.iter().map(|&n| n as usize).collect();
                    GridSpec::new(&c, &l).ok().map(Arc::new)
                }
                _ => None,
            }
        }
        _ => None,
    };

    let spec = parse_model(p);
    let initial = parse_initial(p, grid.as_ref().map(|g| g.dim()));
    Some(Simulation {
        grid: grid?,
        spec: spec?,
        initial: initial?,
    })
}

fn parse_model(p: &mut Parser) -> Option<DiffusionSpec> {
    let delta = p.f64("model.delta");
    let delta = p.required("model.delta", delta);
    let m = p.f64("model.m");
    let m = p.required("model.m", m);
    if let Some(d) = delta {
        p.check(positive(d), || format!("model.delta must be > 0, got {d}"));
    }
    if let Some(m) = m {
        p.check(m >= 1.0 && m.is_finite(), || format!("model.m must be >= 1, got {m}"));
    }
    let kind = p.raw("model.kind").unwrap_or_else(|| "power".into());
    let d0 = p.f64("model.d0");
    let base = match kind.as_str() {
        "power" => {
            p.check(d0.is_none(), || "model.d0 is only valid with model.kind = power_offset".into());
            DiffusionSpec::power(delta?, m?).ok()
        }
        "power_offset" => {
            let d0 = p.required("model.d0", d0);
            if let Some(d0) = d0 {
                p.check(positive(d0), || format!("model.d0 must be > 0, got {d0}"));
            }
            DiffusionSpec::power_offset(delta?, m?, d0?).ok()
        }
        other => {
            p.err(format!("model.kind: expected power or power_offset, got `{other}`"));
            None
        }
    };
    match p.f64("model.eps") {
        Some(eps) => {
            p.check(positive(eps), || format!("model.eps must be > 0, got {eps}"));
            base?.shift_regularize(eps).ok()
        }
        None => base,
    }
}

fn parse_initial(p: &mut Parser, dim: Option<usize>) -> Option<InitialSpec> {
    let preset = p.raw("initial.preset");
    let preset = p.required("initial.preset", preset)?;
    let seed = p.u64("initial.seed").unwrap_or(0);
    let u_noise = p.f64("initial.u_noise").unwrap_or(0.0);
    p.check((0.0..1.0).contains(&u_noise), || {
        format!("initial.u_noise must be in [0, 1), got {u_noise}")
    });
    let nonneg = |p: &mut Parser, key: &str| -> Option<f64> {
        let v = p.f64(key);
        let v = p.required(key, v)?;
        p.check(v >= 0.0 && v.is_finite(), || format!("{key} must be >= 0, got {v}"));
        Some(v)
    };
    let pos = |p: &mut Parser, key: &str| -> Option<f64> {
        let v = p.f64(key);
        let v = p.required(key, v)?;
        p.check(positive(v), || format!("{key} must be > 0, got {v}"));
        Some(v)
    };
    let rel = |p: &mut Parser, key: &str, default: Option<f64>| -> Option<f64> {
        let v = p.f64(key).or(default);
        let v = p.required(key, v)?;
        p.check((0.0..1.0).contains(&v), || format!("{key} must be in [0, 1), got {v}"));
        Some(v)
    };
    let modes = |p: &mut Parser, key: &str| -> Option<Vec<u32>> {
        match p.u64_list(key) {
            Some(m) => Some(m.iter().map(|&k| k.min(u32::MAX as u64) as u32).collect()),
            None if p.entries.contains_key(key) => None,
            None => Some(vec![1; dim.unwrap_or(1)]),
        }
    };
    let bounds = |p: &mut Parser, key: &str, strict: bool| -> Option<(f64, f64)> {
        let v = p.f64_list(key);
        let v = p.required(key, v)?;
        if v.len() != 2 {
            p.err(format!("{key}: expected `lo, hi`, got {} values", v.len()));
            return None;
        }
        let ok = if strict { v[0] > 0.0 } else { v[0] >= 0.0 } && v[0] <= v[1] && v[1].is_finite();
        p.check(ok, || {
            format!("{key} must satisfy {} lo <= hi, got {}, {}", if strict { "0 <" } else { "0 <=" }, v[0], v[1])
        });
        Some((v[0], v[1]))
    };

    let spec = match preset.as_str() {
        "constant" => {
            let u = nonneg(p, "initial.u_bar");
            let v = pos(p, "initial.v_bar");
            InitialSpec::constant(u?, v?)
        }
        "gaussian_bump" => {
            let amplitude = nonneg(p, "initial.amplitude");
            let width = pos(p, "initial.width");
            let background = p.f64("initial.background").unwrap_or(0.0);
            p.check(background >= 0.0, || format!("initial.background must be >= 0, got {background}"));
            let v_bar = pos(p, "initial.v_bar");
            let center = p.f64_list("initial.center");
            if let (Some(c), Some(d)) = (&center, dim) {
                p.check(c.len() == d, || format!("initial.center: expected {d} coordinates, got {}", c.len()));
            }
            let v_rel = rel(p, "initial.v_rel_amplitude", Some(0.0));
            let v_modes = modes(p, "initial.v_modes");
            let mut s = InitialSpec::gaussian_bump(amplitude?, center, width?, background, v_bar?);
            let v_rel = v_rel?;
            if v_rel > 0.0 {
                s.v = Profile::Perturbed {
                    mean: v_bar?,
                    rel_amplitude: v_rel,
                    modes: v_modes?,
                };
            }
            s
        }
        "perturbed_constant" => {
            let u = nonneg(p, "initial.u_bar");
            let v = pos(p, "initial.v_bar");
            let a = rel(p, "initial.rel_amplitude", None);
            let m = modes(p, "initial.modes");
            InitialSpec::perturbed_constant(u?, v?, a?, m?)
        }
        "seeded_random" => {
            let ub = bounds(p, "initial.u_bounds", false);
            let vb = bounds(p, "initial.v_bounds", true);
            InitialSpec::seeded_random(ub?, vb?, seed)
        }
        other => {
            p.err(format!(
                "initial.preset: expected constant, gaussian_bump, perturbed_constant or seeded_random, got `{other}`"
            ));
            return None;
        }
    };
    let spec = spec.with_seed(seed).with_u_noise(u_noise);
    if let Some(d) = dim {
        if let Err(e) = spec.validate(d) {
            p.err(format!("initial: {e}"));
            return None;
        }
    }
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        grid.dim = 2
        grid.cells = 8
        grid.lengths = 1
        model.delta = 1
        model.m = 2
        initial.preset = constant
        initial.u_bar = 1
        initial.v_bar = 1
    ";

    fn errors(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Config(msg)) => msg,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.mode, Mode::Run);
        assert_eq!(cfg.formulation, Formulation::Uv);
        assert_eq!(cfg.scheme, SchemeConfig::default());
        let sim = cfg.simulation.unwrap();
        assert_eq!(sim.grid.cells(), &[8, 8]);
        assert_eq!(sim.initial, InitialSpec::constant(1.0, 1.0));
    }

    #[test]
    fn m_below_one_rejected() {
        let msg = errors(&MINIMAL.replace("model.m = 2", "model.m = 0.5"));
        assert!(msg.contains("model.m must be >= 1"), "{msg}");
    }

    #[test]
    fn delta_constraint_names_key() {
        let msg = errors(&MINIMAL.replace("model.delta = 1", "model.delta = 0"));
        assert!(msg.contains("model.delta must be > 0"), "{msg}");
    }

    #[test]
    fn reports_all_violations() {
        let text = MINIMAL.replace("model.delta = 1", "model.delta = -1").replace("grid.cells = 8", "grid.cells = x")
            + "\nbogus.key = 3\nscheme.t_end = 0\n";
        let msg = errors(&text);
        for needle in ["model.delta must be > 0", "grid.cells: expected", "unknown key `bogus.key`", "scheme.t_end must be > 0"] {
            assert!(msg.contains(needle), "missing {needle} in {msg}");
        }
    }

    #[test]
    fn missing_grid_block_named() {
        let text: String = MINIMAL.lines().filter(|l| !l.contains("grid.")).collect::<Vec<_>>().join("\n");
        let msg = errors(&text);
        assert!(msg.contains("grid"), "{msg}");
        assert!(msg.lines().any(|l| l.starts_with("grid:")), "{msg}");
    }

    #[test]
    fn sweep_mode() {
        let cfg = parse_config(&format!("{MINIMAL}\nmode = sweep\nsweep.m = 1.2, 1.5, 1.8\nsweep.trials = 3")).unwrap();
        assert_eq!(
            cfg.mode,
            Mode::Sweep {
                m_values: vec![1.2, 1.5, 1.8],
                trials: 3
            }
        );
        assert!(errors(&format!("{MINIMAL}\nmode = sweep")).contains("sweep.m is required"));
    }

    #[test]
    fn audit_mode_needs_no_grid() {
        let cfg = parse_config("mode = audit\naudit.input = diag.csv\n").unwrap();
        assert_eq!(cfg.mode, Mode::Audit { input: "diag.csv".into() });
        assert!(cfg.simulation.is_none());
    }

    #[test]
    fn ladder_defaults() {
        let cfg = parse_config(&format!("{MINIMAL}\nmode = ladder\nscheme.t_end = 2")).unwrap();
        let Mode::Ladder { eps, test_functions } = cfg.mode else { panic!() };
        assert_eq!(eps, default_eps());
        assert_eq!(test_functions.len(), 2);
        assert!(test_functions.iter().all(|p| p.t_cut == 2.0));
    }

    #[test]
    fn gaussian_with_perturbed_v() {
        let text = "
            grid.dim = 2
            grid.cells = 16, 8
            grid.lengths = 4, 2
            model.kind = power_offset
            model.delta = 1
            model.m = 2
            model.d0 = 0.1
            model.eps = 0.01
            initial.preset = gaussian_bump
            initial.amplitude = 2
            initial.width = 0.5
            initial.v_bar = 1
            initial.v_rel_amplitude = 0.3
            initial.seed = 9
            initial.u_noise = 0.05
            diagnostics.p = 2, 4
            diagnostics.pr = 2:1, 4:0.5
            formulation = uw
        ";
        let cfg = parse_config(text).unwrap();
        let sim = cfg.simulation.unwrap();
        assert_eq!(sim.initial.seed, 9);
        assert!(matches!(sim.initial.v, Profile::Perturbed { .. }));
        assert!((sim.spec.total_shift() - 0.01).abs() < 1e-15);
        assert_eq!(cfg.diagnostics.pr, vec![(2.0, 1.0), (4.0, 0.5)]);
        assert_eq!(cfg.formulation, Formulation::Uw);
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        let msg = errors(&format!("{MINIMAL}\nmodel.m = 3\njust text\n"));
        assert!(msg.contains("already set"), "{msg}");
        assert!(msg.contains("expected `key = value`"), "{msg}");
    }
}
