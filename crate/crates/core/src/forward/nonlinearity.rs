//! Carathéodory nonlinearities `f(x, tau)`, Lipschitz damping `g(x, tau)` and the
//! growth/integrability checks that gate the nonlinear solver.

use serde::Serialize;

use crate::error::{check_finite, Error, Result};
use crate::lattice::{Grid, RegionMask, ScalarField};

/// Tabulated profile `f(x, tau) = coefficient(x) * profile(tau)`, linearly
/// interpolated on a sorted `tau` grid. Evaluation outside the table is refused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    coefficient: ScalarField,
    tau: Vec<f64>,
    profile: Vec<f64>,
}

impl Tabulated {
    pub fn new(coefficient: ScalarField, tau: Vec<f64>, profile: Vec<f64>) -> Result<Self> {
        if tau.len() < 3 || tau.len() != profile.len() {
            return Err(Error::InvalidArgument(
                "tabulated nonlinearity needs >= 3 matching tau/profile samples".into(),
            ));
        }
        check_finite(&tau, "tau grid")?;
        check_finite(&profile, "tabulated profile")?;
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "tau grid must be strictly increasing".into(),
            ));
        }
        if tau[0] > 0.0 || *tau.last().expect("non-empty") < 0.0 {
            return Err(Error::InvalidArgument("tau grid must contain 0".into()));
        }
        Ok(Self {
            coefficient,
            tau,
            profile,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.tau[0], *self.tau.last().expect("non-empty"))
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return Err(Error::Extrapolation {
                tau: t,
                min: lo,
                max: hi,
            });
        }
        let k = self.tau.partition_point(|&x| x <= t);
        Ok(k.clamp(1, self.tau.len() - 1) - 1)
    }

    fn profile_at(&self, t: f64) -> Result<f64> {
        let k = self.locate(t)?;
        let (t0, t1) = (self.tau[k], self.tau[k + 1]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.profile[k] * (1.0 - w) + self.profile[k + 1] * w)
    }

    fn slope_at(&self, t: f64) -> Result<f64> {
        let k = self.locate(t)?;
        Ok((self.profile[k + 1] - self.profile[k]) / (self.tau[k + 1] - self.tau[k]))
    }

    /// `int_0^t profile` by composite Simpson on a uniform partition of `[0, t]`
    /// fine enough to resolve the table.
    fn primitive_at(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        self.locate(t)?;
        let min_step = self
            .tau
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let pairs = ((t.abs() / min_step).ceil() as usize).max(1);
        let m = 2 * pairs;
        let h = t / m as f64;
        let mut acc = self.profile_at(0.0)? + self.profile_at(t)?;
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * self.profile_at(i as f64 * h)?;
        }
        Ok(acc * h / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    Zero,
    /// `f(x, tau) = q(x) |tau|^r tau` with `q >= 0`.
    Power {
        q: ScalarField,
        r: f64,
    },
    /// `f(x, tau) = a(x) tau`.
    LinearPotential {
        a: ScalarField,
    },
    Custom(Tabulated),
}

/// Lipschitz damping `g(x, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Damping {
    /// `g = gamma(x) tau`.
    Linear { gamma: ScalarField },
    /// `g = gamma(x) * scale * tanh(tau / scale)`.
    Saturating { gamma: ScalarField, scale: f64 },
}

impl Damping {
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            Damping::Linear { gamma } | Damping::Saturating { gamma, .. } => gamma.max_abs(),
        }
    }

    fn value(&self, idx: usize, tau: f64) -> f64 {
        match self {
            Damping::Linear { gamma } => gamma.values()[idx] * tau,
            Damping::Saturating { gamma, scale } => {
                gamma.values()[idx] * scale * (tau / scale).tanh()
            }
        }
    }
}

/// A validated nonlinearity together with its growth metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    r: f64,
    p: f64,
    damping: Option<Damping>,
    homogeneous: bool,
}

const HOMOGENEITY_LAMBDAS: [f64; 3] = [0.5, 2.0, 3.7];
const HOMOGENEITY_TAUS: [f64; 5] = [-1.3, -0.2, 0.05, 0.4, 1.1];

impl NonlinearitySpec {
    pub fn zero() -> Self {
        Self {
            kind: NonlinearityKind::Zero,
            r: 0.0,
            p: f64::INFINITY,
            damping: None,
            homogeneous: true,
        }
    }

    /// Power nonlinearity `q |tau|^r tau`; `q >= 0` and `r` must obey the growth
    /// restriction for the grid's dimension and order.
    pub fn power(grid: &Grid, q: ScalarField, r: f64) -> Result<Self> {
        check_finite(q.values(), "power coefficient")?;
        if q.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(
                "power coefficient q must be >= 0".into(),
            ));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power exponent must be >= 0, got {r}"
            )));
        }
        let check = growth_condition(grid, r);
        if !check.passed {
            return Err(Error::InvalidArgument(format!(
                "exponent r = {r} violates {}",
                check.threshold
            )));
        }
        let mut spec = Self {
            kind: NonlinearityKind::Power { q, r },
            r,
            p: f64::INFINITY,
            damping: None,
            homogeneous: false,
        };
        spec.homogeneous = spec.sample_homogeneity();
        Ok(spec)
    }

    pub fn linear_potential(a: ScalarField) -> Result<Self> {
        check_finite(a.values(), "potential")?;
        Ok(Self {
            kind: NonlinearityKind::LinearPotential { a },
            r: 0.0,
            p: f64::INFINITY,
            damping: None,
            homogeneous: true,
        })
    }

    /// Tabulated nonlinearity with declared growth exponent `r`.
    pub fn custom(table: Tabulated, r: f64) -> Result<Self> {
        let mut spec = Self {
            kind: NonlinearityKind::Custom(table),
            r,
            p: f64::INFINITY,
            damping: None,
            homogeneous: false,
        };
        spec.homogeneous = spec.sample_homogeneity();
        Ok(spec)
    }

    /// Claimed integrability exponent of the coefficient bounding `d f / d tau`.
    pub fn with_integrability(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = Some(damping);
        self
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn damping(&self) -> Option<&Damping> {
        self.damping.as_ref()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Zero) && self.damping.is_none()
    }

    /// Linear potential without damping; solvers treat it implicitly.
    pub fn as_linear_potential(&self) -> Option<&ScalarField> {
        match (&self.kind, &self.damping) {
            (NonlinearityKind::LinearPotential { a }, None) => Some(a),
            _ => None,
        }
    }

    fn sample_homogeneity(&self) -> bool {
        let nodes: Vec<usize> = match &self.kind {
            NonlinearityKind::Zero => return true,
            NonlinearityKind::Power { q, .. } => (0..q.len()).collect(),
            NonlinearityKind::LinearPotential { a } => (0..a.len()).collect(),
            NonlinearityKind::Custom(t) => (0..t.coefficient.len()).collect(),
        };
        let degree = self.r + 1.0;
        for &idx in &nodes {
            for &lambda in &HOMOGENEITY_LAMBDAS {
                for &tau in &HOMOGENEITY_TAUS {
                    let (Ok(lhs), Ok(base)) = (self.value(idx, lambda * tau), self.value(idx, tau))
                    else {
                        return false;
                    };
                    let rhs = lambda.powf(degree) * base;
                    let scale = lhs.abs().max(rhs.abs());
                    if scale > 0.0 && (lhs - rhs).abs() > 1e-10 * scale {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `f(x_idx, tau)`.
    pub fn value(&self, idx: usize, tau: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { q, r } => q.values()[idx] * tau.abs().powf(*r) * tau,
            NonlinearityKind::LinearPotential { a } => a.values()[idx] * tau,
            NonlinearityKind::Custom(t) => t.coefficient.values()[idx] * t.profile_at(tau)?,
        })
    }

    /// `d f / d tau (x_idx, tau)`.
    pub fn derivative(&self, idx: usize, tau: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { q, r } => {
                if *r == 0.0 {
                    q.values()[idx]
                } else {
                    q.values()[idx] * (r + 1.0) * tau.abs().powf(*r)
                }
            }
            NonlinearityKind::LinearPotential { a } => a.values()[idx],
            NonlinearityKind::Custom(t) => t.coefficient.values()[idx] * t.slope_at(tau)?,
        })
    }

    /// Primitive `F(x_idx, tau) = int_0^tau f(x_idx, rho) d rho`; closed form
    /// except for tabulated profiles (composite Simpson).
    pub fn primitive(&self, idx: usize, tau: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Power { q, r } => {
                q.values()[idx] * tau.abs().powf(r + 2.0) / (r + 2.0)
            }
            NonlinearityKind::LinearPotential { a } => 0.5 * a.values()[idx] * tau * tau,
            NonlinearityKind::Custom(t) => t.coefficient.values()[idx] * t.primitive_at(tau)?,
        })
    }

    /// `g(x_idx, tau)`, zero without damping.
    pub fn damping_value(&self, idx: usize, tau: f64) -> f64 {
        self.damping.as_ref().map_or(0.0, |d| d.value(idx, tau))
    }

    /// `f(x, u(x))` on interior nodes, zero elsewhere.
    pub(crate) fn apply_f(&self, mask: &RegionMask, u: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        if matches!(self.kind, NonlinearityKind::Zero) {
            return Ok(());
        }
        for &i in mask.omega_nodes() {
            out[i] = self.value(i, u[i])?;
        }
        Ok(())
    }

    pub(crate) fn apply_g(&self, mask: &RegionMask, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        if let Some(d) = &self.damping {
            for &i in mask.omega_nodes() {
                out[i] = d.value(i, v[i]);
            }
        }
    }

    /// `int_Omega F(x, u(x)) dx`.
    pub(crate) fn potential_integral(
        &self,
        grid: &Grid,
        mask: &RegionMask,
        u: &[f64],
    ) -> Result<f64> {
        if matches!(self.kind, NonlinearityKind::Zero) {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for &i in mask.omega_nodes() {
            acc += self.primitive(i, u[i])?;
        }
        Ok(acc * grid.cell_volume())
    }
}

/// One checked condition of the validator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub threshold: String,
    pub detail: String,
}

/// Result of [`validate_assumption`]. Failures are recorded, not raised.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
    pub homogeneous: bool,
    /// Sampled `tau` interval for tabulated kinds.
    pub sampling_coverage: Option<(f64, f64)>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn integrability_condition(grid: &Grid, p: f64) -> ConditionCheck {
    let (n, s) = (grid.dim() as f64, grid.order());
    let two_s = 2.0 * s;
    let (passed, threshold) = if (two_s - n).abs() < 1e-12 {
        (p > 2.0, "p>2".to_string())
    } else if two_s < n {
        (p >= n / s, format!("p>={}", n / s))
    } else {
        (p >= 2.0, "p>=2".to_string())
    };
    ConditionCheck {
        name: "integrability".into(),
        passed,
        threshold,
        detail: format!("claimed p = {p}, n = {n}, s = {s}"),
    }
}

fn growth_condition(grid: &Grid, r: f64) -> ConditionCheck {
    let (n, s) = (grid.dim() as f64, grid.order());
    let two_s = 2.0 * s;
    let (passed, threshold) = if two_s >= n - 1e-12 {
        (r >= 0.0 && r.is_finite(), "0<=r<inf".to_string())
    } else {
        let bound = two_s / (n - two_s);
        (r >= 0.0 && r <= bound + 1e-12, format!("0<=r<={bound}"))
    };
    ConditionCheck {
        name: "growth".into(),
        passed,
        threshold,
        detail: format!("r = {r}, n = {n}, s = {s}"),
    }
}

/// Checks the structural assumptions on `f` and `g`: (i) derivative bound with
/// the integrability and growth restrictions, (ii) `F >= -C1`, (iii) Lipschitz
/// damping. Every condition is reported; none is fatal.
pub fn validate_assumption(spec: &NonlinearitySpec, grid: &Grid) -> ValidationReport {
    let mut conditions = Vec::new();
    let mut coverage = None;

    let p_check = match spec.kind {
        NonlinearityKind::Zero => ConditionCheck {
            name: "integrability".into(),
            passed: true,
            threshold: "a=0 in L^inf".into(),
            detail: "zero nonlinearity".into(),
        },
        _ => integrability_condition(grid, spec.p),
    };
    conditions.push(p_check);
    conditions.push(growth_condition(grid, spec.r));

    let lower_bound = match &spec.kind {
        NonlinearityKind::Zero => ConditionCheck {
            name: "primitive_lower_bound".into(),
            passed: true,
            threshold: "F>=-C1".into(),
            detail: "F = 0".into(),
        },
        NonlinearityKind::Power { .. } => ConditionCheck {
            name: "primitive_lower_bound".into(),
            passed: true,
            threshold: "F>=-C1".into(),
            detail: "F = q|tau|^(r+2)/(r+2) >= 0".into(),
        },
        NonlinearityKind::LinearPotential { a } => {
            let min_a = a.values().iter().copied().fold(f64::INFINITY, f64::min);
            ConditionCheck {
                name: "primitive_lower_bound".into(),
                passed: min_a >= 0.0,
                threshold: "F>=-C1".into(),
                detail: format!("F = a tau^2/2, min a = {min_a}"),
            }
        }
        NonlinearityKind::Custom(t) => {
            let (lo, hi) = t.range();
            coverage = Some((lo, hi));
            let samples = 64;
            let mut min_f = f64::INFINITY;
            let mut at_edge = false;
            for i in 0..t.coefficient.len() {
                let mut local = Vec::with_capacity(samples + 1);
                for k in 0..=samples {
                    let tau = lo + (hi - lo) * k as f64 / samples as f64;
                    local.push(spec.primitive(i, tau).unwrap_or(f64::NAN));
                }
                let (kmin, vmin) =
                    local
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::INFINITY),
                            |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc },
                        );
                if vmin < 0.0 && (kmin == 0 || kmin == samples) {
                    at_edge = true;
                }
                min_f = min_f.min(vmin);
            }
            ConditionCheck {
                name: "primitive_lower_bound".into(),
                passed: min_f.is_finite() && !at_edge,
                threshold: "F>=-C1".into(),
                detail: format!(
                    "sampled min F = {min_f:.4e} on tau in [{lo}, {hi}]{}",
                    if at_edge {
                        "; negative minimum at table edge"
                    } else {
                        ""
                    }
                ),
            }
        }
    };
    conditions.push(lower_bound);

    let damping = match spec.damping() {
        None => ConditionCheck {
            name: "damping_lipschitz".into(),
            passed: true,
            threshold: "g Lipschitz, g(.,0) in L^2".into(),
            detail: "no damping".into(),
        },
        Some(d) => {
            let l = d.lipschitz_constant();
            ConditionCheck {
                name: "damping_lipschitz".into(),
                passed: l.is_finite(),
                threshold: "g Lipschitz, g(.,0) in L^2".into(),
                detail: format!("Lipschitz constant {l:.4e}, g(.,0) = 0"),
            }
        }
    };
    conditions.push(damping);

    ValidationReport {
        conditions,
        homogeneous: spec.homogeneous,
        sampling_coverage: coverage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridParams;

    fn grid(order: f64) -> Grid {
        Grid::new(GridParams {
            dim: 1,
            points: 16,
            box_length: 4.0,
            order,
            dt: 0.1,
            steps: 4,
        })
        .unwrap()
    }

    #[test]
    fn critical_case_rejects_p_equal_two() {
        let g = grid(0.5);
        let a = ScalarField::constant(&g, 1.0);
        let spec = NonlinearitySpec::linear_potential(a)
            .unwrap()
            .with_integrability(2.0);
        let report = validate_assumption(&spec, &g);
        let cond = report.condition("integrability").unwrap();
        assert!(!cond.passed);
        assert_eq!(cond.threshold, "p>2");
    }

    #[test]
    fn zero_nonlinearity_passes_everything() {
        let g = grid(0.5);
        let report = validate_assumption(&NonlinearitySpec::zero(), &g);
        assert!(report.all_passed());
        assert!(report.homogeneous);
    }

    #[test]
    fn subcritical_growth_bound() {
        let g = grid(0.25);
        let spec = NonlinearitySpec::power(&g, ScalarField::constant(&g, 1.0), 0.5).unwrap();
        let report = validate_assumption(&spec, &g);
        let cond = report.condition("growth").unwrap();
        assert!(cond.passed);
        assert_eq!(cond.threshold, "0<=r<=1");
        assert!(NonlinearitySpec::power(&g, ScalarField::constant(&g, 1.0), 1.5).is_err());
    }

    #[test]
    fn power_is_homogeneous_and_primitive_nonnegative() {
        let g = grid(0.75);
        let spec = NonlinearitySpec::power(&g, ScalarField::constant(&g, 2.0), 1.0).unwrap();
        assert!(spec.is_homogeneous());
        assert_eq!(spec.value(0, 0.0).unwrap(), 0.0);
        for tau in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            assert!(spec.primitive(0, tau).unwrap() >= 0.0);
        }
        // F' = f by central difference
        let h = 1e-5;
        let fd =
            (spec.primitive(0, 0.8 + h).unwrap() - spec.primitive(0, 0.8 - h).unwrap()) / (2.0 * h);
        assert!((fd - spec.value(0, 0.8).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn negative_power_coefficient_rejected() {
        let g = grid(0.75);
        assert!(NonlinearitySpec::power(&g, ScalarField::constant(&g, -1.0), 1.0).is_err());
    }

    #[test]
    fn tabulated_cubic_matches_closed_form() {
        let g = grid(0.75);
        let tau: Vec<f64> = (0..=400).map(|k| -2.0 + 0.01 * k as f64).collect();
        let profile: Vec<f64> = tau.iter().map(|t| t * t * t).collect();
        let table = Tabulated::new(ScalarField::constant(&g, 1.0), tau, profile).unwrap();
        let spec = NonlinearitySpec::custom(table, 2.0).unwrap();
        // linear interpolation of t^3 is not exactly homogeneous
        assert!(!spec.is_homogeneous());
        let f = spec.primitive(0, 1.5).unwrap();
        assert!((f - 1.5f64.powi(4) / 4.0).abs() < 1e-3);
        assert!(matches!(
            spec.value(0, 2.5),
            Err(Error::Extrapolation { .. })
        ));
        let report = validate_assumption(&spec, &g);
        assert!(report.condition("primitive_lower_bound").unwrap().passed);
        assert_eq!(report.sampling_coverage, Some((-2.0, 2.0)));
    }

    #[test]
    fn tabulated_linear_is_homogeneous_degree_one() {
        let g = grid(0.75);
        let tau = vec![-10.0, 0.0, 10.0];
        let profile = vec![-10.0, 0.0, 10.0];
        let table = Tabulated::new(ScalarField::constant(&g, 1.0), tau, profile).unwrap();
        let spec = NonlinearitySpec::custom(table, 0.0).unwrap();
        assert!(spec.is_homogeneous());
    }

    #[test]
    fn negative_potential_flags_primitive_bound() {
        let g = grid(0.75);
        let spec = NonlinearitySpec::linear_potential(ScalarField::constant(&g, -1.0)).unwrap();
        let report = validate_assumption(&spec, &g);
        assert!(!report.condition("primitive_lower_bound").unwrap().passed);
    }
}
