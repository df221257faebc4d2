//! Flat typed `key = value` scenarios. The schema below is the single source
//! of truth; `SCENARIO.md` documents it for humans.
//!
//! The canonical form lists every key (defaults filled in, absent optional
//! keys omitted) sorted by name with normalized values, one `key = value` per
//! line. The scenario hash is the SHA-256 of that text.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fracwave::dnmap::ExteriorInput;
use fracwave::forward::{Damping, NonlinearitySpec, SolverConfig};
use fracwave::inverse::{PotentialSettings, RecoverySettings};
use fracwave::lattice::io::read_mask;
use fracwave::lattice::{AxisBox, Grid, GridParams, RegionMask, ScalarField, SpaceTimeField};

use crate::error::{HarnessError, Result, SchemaIssue};
use crate::recipe::Recipe;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Int,
    Real,
    Reals,
    Boxes,
    Recipe,
    Choice(&'static [&'static str]),
    Path,
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Presence {
    Required,
    Optional,
    Default(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub presence: Presence,
    pub doc: &'static str,
}

const fn key(key: &'static str, kind: Kind, presence: Presence, doc: &'static str) -> KeySpec {
    KeySpec {
        key,
        kind,
        presence,
        doc,
    }
}

use Kind::*;
use Presence::*;

pub const PROFILES: &[&str] = &["one", "ramp", "sin2", "smoothstep"];
pub const EXPERIMENTS: &[&str] = &[
    "any",
    "simulate",
    "dnmap",
    "probe",
    "runge",
    "recover_nonlinearity",
    "recover_initial",
    "recover_potential",
];

pub const SCHEMA: &[KeySpec] = &[
    key("grid.dim", Int, Default("1"), "spatial dimension, 1 or 2"),
    key("grid.points", Int, Required, "points per axis, a power of two >= 8"),
    key("grid.box_length", Real, Required, "period L of the box [-L/2, L/2)^n"),
    key("grid.order", Real, Required, "fractional order s, positive, non-integer"),
    key("time.dt", Real, Required, "time step"),
    key("time.steps", Int, Required, "number of time steps; T = steps * dt"),
    key("mask.omega", Boxes, Optional, "interior as a union of boxes"),
    key("mask.w1", Boxes, Optional, "control window"),
    key("mask.w2", Boxes, Optional, "measurement window"),
    key("mask.import", Path, Optional, "directory with a binary mask; excludes the box keys"),
    key(
        "nonlinearity.kind",
        Choice(&["zero", "power", "linear_potential"]),
        Default("zero"),
        "f(x, u): 0, q |u|^r u or a u",
    ),
    key("nonlinearity.coefficient", Recipe, Default("zero"), "q for power, a for linear_potential; restricted to omega"),
    key("nonlinearity.r", Real, Default("1.0"), "power exponent r"),
    key("nonlinearity.integrability", Real, Optional, "claimed integrability exponent p of the coefficient"),
    key("damping.kind", Choice(&["none", "linear", "saturating"]), Default("none"), "g(x, u_t)"),
    key("damping.gamma", Recipe, Default("zero"), "damping coefficient"),
    key("damping.scale", Real, Default("1.0"), "saturation scale"),
    key("initial.u0", Recipe, Default("zero"), "initial displacement; restricted to omega"),
    key("initial.u1", Recipe, Default("zero"), "initial velocity; restricted to omega"),
    key("solver.picard_tol", Real, Default("1e-10"), "relative Picard tolerance"),
    key("solver.picard_max_iters", Int, Default("60"), "Picard iterations per slab"),
    key("solver.slab_steps", Int, Default("64"), "initial Picard slab length"),
    key("solver.cg_tol", Real, Default("1e-13"), "relative CG residual"),
    key("solver.viscous_eps", Real, Optional, "default viscosity"),
    key("input.shape", Recipe, Default("constant(value=1.0)"), "spatial shape of the exterior input, smoothed on w1"),
    key("input.profile", Choice(PROFILES), Default("sin2"), "time profile of the exterior input"),
    key("input.amplitude", Real, Default("1.0"), "amplitude of the exterior input"),
    key("simulate.drive", Choice(&["none", "input"]), Default("none"), "exterior data for simulate"),
    key("dnmap.basis", Int, Default("4"), "number of cosine inputs in the DN matrix"),
    key("probe.epsilons", Reals, Default("0.2, 0.1, 0.05, 0.025"), "linearization amplitudes, decreasing"),
    key("runge.target", Recipe, Default("constant(value=1.0)"), "control target shape on omega"),
    key("runge.target_profile", Choice(PROFILES), Default("one"), "control target time profile"),
    key("runge.alphas", Reals, Default("1e-2, 1e-4, 1e-6, 1e-8"), "control sweep, decreasing"),
    key("runge.iters", Int, Default("200"), "optimizer budget per alpha"),
    key("runge.grad_tol", Real, Default("1e-12"), "relative gradient tolerance"),
    key("recovery.epsilons", Reals, Default("0.2, 0.1, 0.05, 0.025"), "sweep amplitudes, decreasing"),
    key("recovery.runge_alpha", Real, Default("1e-8"), "control weight"),
    key("recovery.runge_iters", Int, Default("1500"), "control budget"),
    key("recovery.max_control_error", Real, Default("0.15"), "abort threshold of the control stage"),
    key("recovery.max_fit_residual", Real, Default("0.2"), "abort threshold of the slope fit, log units"),
    key("recovery.alphas", Reals, Default("1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7"), "relative Tikhonov sweep"),
    key("recovery.discrepancy_factor", Real, Default("1.5"), "discrepancy-principle factor"),
    key("recovery.inversion_iters", Int, Default("300"), "CG budget per alpha"),
    key("recovery.r_known", Real, Optional, "known exponent; skips nothing but overrides the estimate"),
    key("initial_data.alpha", Real, Default("1e-8"), "relative Tikhonov weight"),
    key("potential.alpha", Real, Default("1e-6"), "relative Tikhonov weight of the potential steps"),
    key("potential.probes", Int, Default("3"), "number of control probes"),
    key("potential.probe_alpha", Real, Default("1e-6"), "probe control weight"),
    key("potential.probe_iters", Int, Default("60"), "probe control budget"),
    key("potential.gauss_newton_steps", Int, Default("6"), "outer steps"),
    key("noise.level", Real, Default("0.0"), "relative Gaussian noise on every trace"),
    key("data.resolution", Choice(&["full", "half"]), Default("full"), "grid used by the synthetic oracle"),
    key("experiment.kind", Choice(EXPERIMENTS), Default("any"), "restricts the scenario to one subcommand"),
    key("seed", Seed, Default("0"), "seed for noise and random directions"),
];

pub fn spec_of(name: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|k| k.key == name)
}

/// Shortest round-trip decimal form.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

/// Decimal or `a/b` notation; rejects non-finite values.
pub fn parse_real(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("'{text}' is not a real number"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("'{text}' is not a real number"))?;
            a / b
        }
        None => text.parse().map_err(|_| format!("'{text}' is not a real number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("'{text}' is not finite"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(usize),
    Real(f64),
    Reals(Vec<f64>),
    Boxes(Vec<Vec<(f64, f64)>>),
    Recipe(Recipe),
    Choice(String),
    Path(String),
    Seed(u64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Seed(v) => write!(f, "{v}"),
            Value::Real(v) => f.write_str(&format_real(*v)),
            Value::Reals(vs) => f.write_str(&vs.iter().map(|v| format_real(*v)).collect::<Vec<_>>().join(", ")),
            Value::Boxes(bs) => {
                let text: Vec<String> = bs
                    .iter()
                    .map(|b| {
                        b.iter()
                            .map(|(lo, hi)| format!("{}:{}", format_real(*lo), format_real(*hi)))
                            .collect::<Vec<_>>()
                            .join(" x ")
                    })
                    .collect();
                f.write_str(&text.join(" | "))
            }
            Value::Recipe(r) => write!(f, "{r}"),
            Value::Choice(s) | Value::Path(s) => f.write_str(s),
        }
    }
}

fn parse_value(kind: Kind, text: &str) -> std::result::Result<Value, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty value".into());
    }
    match kind {
        Int => text.parse().map(Value::Int).map_err(|_| format!("'{text}' is not a non-negative integer")),
        Seed => text.parse().map(Value::Seed).map_err(|_| format!("'{text}' is not an unsigned 64-bit integer")),
        Real => parse_real(text).map(Value::Real),
        Reals => text.split(',').map(parse_real).collect::<std::result::Result<_, _>>().map(Value::Reals),
        Boxes => text
            .split('|')
            .map(|b| {
                b.split('x')
                    .map(|interval| {
                        let (lo, hi) = interval
                            .split_once(':')
                            .ok_or_else(|| format!("interval '{}' is not lo:hi", interval.trim()))?;
                        let (lo, hi) = (parse_real(lo)?, parse_real(hi)?);
                        if lo > hi {
                            return Err(format!("interval {lo}:{hi} is reversed"));
                        }
                        Ok((lo, hi))
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()
            })
            .collect::<std::result::Result<_, _>>()
            .map(Value::Boxes),
        Recipe => crate::recipe::Recipe::parse(text).map(Value::Recipe),
        Choice(options) => {
            if options.contains(&text) {
                Ok(Value::Choice(text.to_string()))
            } else {
                Err(format!("'{text}' is not one of {}", options.join(", ")))
            }
        }
        Path => Ok(Value::Path(text.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    values: BTreeMap<String, Value>,
    /// Directory against which relative paths resolve; not part of the content.
    base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut s = Self::parse(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    /// Parses and validates; every offending key is reported at once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut issues = Vec::new();
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                issues.push(SchemaIssue {
                    key: format!("line {}", n + 1),
                    problem: format!("expected 'key = value', got '{line}'"),
                });
                continue;
            };
            let k = k.trim();
            let Some(spec) = spec_of(k) else {
                issues.push(SchemaIssue {
                    key: k.to_string(),
                    problem: "unknown key".into(),
                });
                continue;
            };
            match parse_value(spec.kind, v) {
                Ok(value) => {
                    if values.insert(k.to_string(), value).is_some() {
                        issues.push(SchemaIssue {
                            key: k.to_string(),
                            problem: "given more than once".into(),
                        });
                    }
                }
                Err(problem) => issues.push(SchemaIssue {
                    key: k.to_string(),
                    problem,
                }),
            }
        }
        for spec in SCHEMA {
            if values.contains_key(spec.key) || issues.iter().any(|i| i.key == spec.key) {
                continue;
            }
            match spec.presence {
                Required => issues.push(SchemaIssue {
                    key: spec.key.to_string(),
                    problem: "required key is missing".into(),
                }),
                Default(text) => {
                    values.insert(spec.key.to_string(), parse_value(spec.kind, text).expect("schema default parses"));
                }
                Optional => {}
            }
        }
        let scenario = Self { values, base_dir: None };
        issues.extend(scenario.cross_issues());
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(HarnessError::Schema(issues))
        }
    }

    fn cross_issues(&self) -> Vec<SchemaIssue> {
        let mut issues = Vec::new();
        let mut push = |key: &str, problem: String| {
            issues.push(SchemaIssue {
                key: key.into(),
                problem,
            })
        };
        let boxes = ["mask.omega", "mask.w1", "mask.w2"];
        if self.values.contains_key("mask.import") {
            for k in boxes.iter().filter(|k| self.values.contains_key(**k)) {
                push(k, "not allowed together with mask.import".into());
            }
        } else {
            for k in boxes.iter().filter(|k| !self.values.contains_key(**k)) {
                push(k, "required unless mask.import is given".into());
            }
        }
        if let Some(Value::Int(dim)) = self.values.get("grid.dim") {
            if *dim != 1 && *dim != 2 {
                push("grid.dim", format!("must be 1 or 2, got {dim}"));
            }
            for k in boxes {
                if let Some(Value::Boxes(bs)) = self.values.get(k) {
                    if bs.iter().any(|b| b.len() != *dim) {
                        push(k, format!("every box needs {dim} interval(s)"));
                    }
                }
            }
        }
        for k in ["probe.epsilons", "runge.alphas", "recovery.epsilons", "recovery.alphas"] {
            if let Some(Value::Reals(vs)) = self.values.get(k) {
                if vs.windows(2).any(|w| w[1] >= w[0]) {
                    push(k, "must be strictly decreasing".into());
                }
            }
        }
        if let Some(Value::Real(level)) = self.values.get("noise.level") {
            if *level < 0.0 {
                push("noise.level", "must be >= 0".into());
            }
        }
        issues
    }

    /// Replaces one value, validating it against the schema.
    pub fn set(&mut self, name: &str, text: &str) -> Result<()> {
        let issue = |problem: String| {
            HarnessError::Schema(vec![SchemaIssue {
                key: name.to_string(),
                problem,
            }])
        };
        let spec = spec_of(name).ok_or_else(|| issue("unknown key".into()))?;
        let value = parse_value(spec.kind, text).map_err(issue)?;
        self.values.insert(name.to_string(), value);
        let issues = self.cross_issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Schema(issues))
        }
    }

    pub fn canonical_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// First 16 hex digits of the hash; names the output directory.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn int(&self, name: &str) -> usize {
        match self.get(name) {
            Some(Value::Int(v)) => *v,
            other => panic!("schema guarantees an integer at {name}, found {other:?}"),
        }
    }

    pub fn real(&self, name: &str) -> f64 {
        self.opt_real(name).unwrap_or_else(|| panic!("schema guarantees a real at {name}"))
    }

    pub fn opt_real(&self, name: &str) -> Option<f64> {
        match self.get(name) {
            Some(Value::Real(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn reals(&self, name: &str) -> Vec<f64> {
        match self.get(name) {
            Some(Value::Reals(v)) => v.clone(),
            other => panic!("schema guarantees a real list at {name}, found {other:?}"),
        }
    }

    pub fn recipe(&self, name: &str) -> Recipe {
        match self.get(name) {
            Some(Value::Recipe(r)) => r.clone(),
            other => panic!("schema guarantees a recipe at {name}, found {other:?}"),
        }
    }

    pub fn choice(&self, name: &str) -> &str {
        match self.get(name) {
            Some(Value::Choice(c)) => c,
            other => panic!("schema guarantees a choice at {name}, found {other:?}"),
        }
    }

    pub fn seed(&self) -> u64 {
        match self.get("seed") {
            Some(Value::Seed(s)) => *s,
            _ => 0,
        }
    }

    pub fn noise_level(&self) -> f64 {
        self.real("noise.level")
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(GridParams {
            dim: self.int("grid.dim"),
            points: self.int("grid.points"),
            box_length: self.real("grid.box_length"),
            order: self.real("grid.order"),
            dt: self.real("time.dt"),
            steps: self.int("time.steps"),
        })?)
    }

    /// Grid with half the points per axis and the same time discretization.
    pub fn coarse_grid(&self) -> Result<Grid> {
        let fine = self.grid()?;
        Ok(Grid::new(GridParams {
            points: fine.points() / 2,
            ..fine.params()
        })?)
    }

    pub fn mask(&self, grid: &Grid) -> Result<RegionMask> {
        if let Some(Value::Path(p)) = self.get("mask.import") {
            let dir = match &self.base_dir {
                Some(base) if Path::new(p).is_relative() => base.join(p),
                _ => PathBuf::from(p),
            };
            let (mask_grid, mask) = read_mask(&dir)?;
            if mask_grid.len() != grid.len() || mask_grid.box_length() != grid.box_length() {
                return Err(HarnessError::Scenario(format!(
                    "imported mask in {} was built for a different lattice",
                    dir.display()
                )));
            }
            return Ok(mask);
        }
        let boxes = |name: &str| -> Vec<AxisBox> {
            match self.get(name) {
                Some(Value::Boxes(bs)) => bs
                    .iter()
                    .map(|b| match b.as_slice() {
                        [(a, c)] => AxisBox::interval(*a, *c),
                        [(a, c), (d, e)] => AxisBox::rect([*a, *d], [*c, *e]),
                        _ => unreachable!("dimension checked by the schema"),
                    })
                    .collect(),
                _ => Vec::new(),
            }
        };
        Ok(RegionMask::from_boxes(grid, &boxes("mask.omega"), &boxes("mask.w1"), &boxes("mask.w2"))?)
    }

    fn interior_field(&self, name: &str, grid: &Grid, mask: &RegionMask) -> ScalarField {
        self.recipe(name).field(grid).restricted(mask.omega())
    }

    pub fn spec(&self, grid: &Grid, mask: &RegionMask) -> Result<NonlinearitySpec> {
        let coefficient = self.interior_field("nonlinearity.coefficient", grid, mask);
        let mut spec = match self.choice("nonlinearity.kind") {
            "power" => NonlinearitySpec::power(grid, coefficient, self.real("nonlinearity.r"))?,
            "linear_potential" => NonlinearitySpec::linear_potential(coefficient)?,
            _ => NonlinearitySpec::zero(),
        };
        if let Some(p) = self.opt_real("nonlinearity.integrability") {
            spec = spec.with_integrability(p);
        }
        let gamma = self.interior_field("damping.gamma", grid, mask);
        match self.choice("damping.kind") {
            "linear" => spec = spec.with_damping(Damping::Linear { gamma }),
            "saturating" => {
                spec = spec.with_damping(Damping::Saturating {
                    gamma,
                    scale: self.real("damping.scale"),
                })
            }
            _ => {}
        }
        Ok(spec)
    }

    /// `(u0, u1)` restricted to the interior.
    pub fn initial_data(&self, grid: &Grid, mask: &RegionMask) -> (ScalarField, ScalarField) {
        (
            self.interior_field("initial.u0", grid, mask),
            self.interior_field("initial.u1", grid, mask),
        )
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            picard_tol: self.real("solver.picard_tol"),
            picard_max_iters: self.int("solver.picard_max_iters"),
            slab_steps: self.int("solver.slab_steps"),
            cg_tol: self.real("solver.cg_tol"),
            viscous_eps: self.opt_real("solver.viscous_eps"),
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured input: shape restricted and smoothed on `w1`, times the profile.
    pub fn input(&self, grid: &Grid, mask: &RegionMask) -> Result<ExteriorInput> {
        let shape = self.recipe("input.shape").field(grid).restricted(mask.w1());
        let profile = profile(self.choice("input.profile"), grid.final_time());
        let raw = SpaceTimeField::separable(grid, &shape, profile);
        Ok(ExteriorInput::smoothed(grid, mask, &raw, self.real("input.amplitude"), "input")?)
    }

    pub fn runge_target(&self, grid: &Grid, mask: &RegionMask) -> SpaceTimeField {
        let shape = self.interior_field("runge.target", grid, mask);
        SpaceTimeField::separable(grid, &shape, profile(self.choice("runge.target_profile"), grid.final_time()))
    }

    pub fn recovery_settings(&self) -> RecoverySettings {
        let level = self.noise_level();
        RecoverySettings {
            epsilons: self.reals("recovery.epsilons"),
            runge_alpha: self.real("recovery.runge_alpha"),
            runge_iters: self.int("recovery.runge_iters"),
            max_control_error: self.real("recovery.max_control_error"),
            max_fit_residual: self.real("recovery.max_fit_residual"),
            alphas: self.reals("recovery.alphas"),
            noise_level: (level > 0.0).then_some(level),
            discrepancy_factor: self.real("recovery.discrepancy_factor"),
            inversion_iters: self.int("recovery.inversion_iters"),
        }
    }

    pub fn potential_settings(&self) -> PotentialSettings {
        PotentialSettings {
            probes: self.int("potential.probes"),
            probe_alpha: self.real("potential.probe_alpha"),
            probe_iters: self.int("potential.probe_iters"),
            initial_alpha: self.real("initial_data.alpha"),
            gauss_newton_steps: self.int("potential.gauss_newton_steps"),
            inversion_iters: self.int("recovery.inversion_iters"),
        }
    }
}

/// Time profile on `[0, T]`.
pub fn profile(name: &str, horizon: f64) -> impl Fn(f64) -> f64 {
    let kind = name.to_string();
    move |t| {
        let s = t / horizon;
        match kind.as_str() {
            "ramp" => s,
            "sin2" => (std::f64::consts::PI * s).sin().powi(2),
            "smoothstep" => s * s * (3.0 - 2.0 * s),
            _ => 1.0,
        }
    }
}
