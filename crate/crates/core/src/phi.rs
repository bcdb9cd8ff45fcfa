//! Generator functions `φ_γ` indexing the norm-based Bregman family.
//!
//! A generator must be strictly increasing and convex on `(0, ∞)`. The
//! divergence built from it is `(φ_γ(‖q‖) − φ_γ(‖p‖))/γ − φ'_γ(‖p‖)(…)`, so
//! each kind supplies its value, first and second `z`-derivatives and the
//! derivative in `γ` (needed by the `γ → 0` branch).
//!
//! | kind | `φ_γ(z)` |
//! |------|----------|
//! | identity | `z` |
//! | density power | `z^{1+γ}` |
//! | power κ | `z^κ`, `κ ≥ 1` |
//! | bridge | `[(λ1 + λ2 z^{1+γ})^{1/(1+γ)} − λ1^{1/(1+γ)}] / λ2` |
//! | combined | `[(λ1 + λ2 z^{1+γ})^{κ/(1+γ)} − λ1^{κ/(1+γ)}] / λ2` |
//! | mixture | `t z^{1+γ} + (1 − t) z` |

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};

/// Below this `λ2` the bridge forms are replaced by their `λ2 → 0` limit,
/// a constant multiple of `z^{1+γ}`.
pub const LAMBDA2_EPS: f64 = 1e-10;

/// Step for finite differences in `γ` (custom generators only).
pub const GAMMA_STEP: f64 = 1e-6;

/// Default tolerance on `φ''` when checking convexity on a grid.
pub const TOL_CONVEX: f64 = 1e-12;

/// A function of `(z, γ)`.
pub type PhiFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied generator. Callbacks receive `(z, γ)` so a custom family may
/// depend on `γ` in any way it likes.
#[derive(Clone)]
pub struct CustomPhi {
    pub name: String,
    pub value: PhiFn,
    pub deriv: PhiFn,
    pub second_deriv: PhiFn,
    /// `∂φ_γ(z)/∂γ`; a central difference in `γ` is used when absent.
    pub gamma_deriv: Option<PhiFn>,
    /// Path `γ ↦ α_γ` of an internal parameter, checked for a finite limit.
    pub parameter_path: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl CustomPhi {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        second_deriv: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomPhi {
            name: name.into(),
            value: Arc::new(value),
            deriv: Arc::new(deriv),
            second_deriv: Arc::new(second_deriv),
            gamma_deriv: None,
            parameter_path: None,
        }
    }

    pub fn with_gamma_deriv(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.gamma_deriv = Some(Arc::new(f));
        self
    }

    pub fn with_parameter_path(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.parameter_path = Some(Arc::new(f));
        self
    }
}

impl fmt::Debug for CustomPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPhi").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum PhiKind {
    Identity,
    DensityPower,
    PowerKappa { kappa: f64 },
    Bridge { lambda1: f64, lambda2: f64 },
    CombinedBridgePower { lambda1: f64, lambda2: f64, kappa: f64 },
    Mixture { t: f64 },
    Custom(CustomPhi),
}

impl PhiKind {
    pub fn name(&self) -> &str {
        match self {
            PhiKind::Identity => "identity",
            PhiKind::DensityPower => "density_power",
            PhiKind::PowerKappa { .. } => "power_kappa",
            PhiKind::Bridge { .. } => "bridge",
            PhiKind::CombinedBridgePower { .. } => "combined",
            PhiKind::Mixture { .. } => "mixture",
            PhiKind::Custom(c) => &c.name,
        }
    }

    /// Parameters as `key=value` pairs joined by `;`.
    pub fn params_string(&self) -> String {
        match self {
            PhiKind::Identity | PhiKind::DensityPower | PhiKind::Custom(_) => String::new(),
            PhiKind::PowerKappa { kappa } => format!("kappa={kappa}"),
            PhiKind::Bridge { lambda1, lambda2 } => format!("lambda1={lambda1};lambda2={lambda2}"),
            PhiKind::CombinedBridgePower { lambda1, lambda2, kappa } => {
                format!("lambda1={lambda1};lambda2={lambda2};kappa={kappa}")
            }
            PhiKind::Mixture { t } => format!("t={t}"),
        }
    }

    pub fn validate_params(&self) -> Result<()> {
        let check_lambdas = |l1: f64, l2: f64| -> Result<()> {
            if !(l1 >= 0.0 && l1.is_finite()) || !(l2 >= 0.0 && l2.is_finite()) {
                return param(format!("lambda1 and lambda2 must be finite and >= 0 (got {l1}, {l2})"));
            }
            if l1 == 0.0 && l2 == 0.0 {
                return param("lambda1 and lambda2 cannot both be zero");
            }
            if l1 == 0.0 && l2 < LAMBDA2_EPS {
                return param("lambda2 must be at least 1e-10 when lambda1 = 0");
            }
            Ok(())
        };
        let check_kappa = |k: f64| -> Result<()> {
            if !(k >= 1.0 && k.is_finite()) {
                return param(format!("kappa must be finite and >= 1 (got {k})"));
            }
            Ok(())
        };
        match *self {
            PhiKind::PowerKappa { kappa } => check_kappa(kappa),
            PhiKind::Bridge { lambda1, lambda2 } => check_lambdas(lambda1, lambda2),
            PhiKind::CombinedBridgePower { lambda1, lambda2, kappa } => {
                check_lambdas(lambda1, lambda2)?;
                check_kappa(kappa)
            }
            PhiKind::Mixture { t } => {
                if !(0.0..=1.0).contains(&t) {
                    return param(format!("mixture weight t must lie in [0, 1] (got {t})"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// A generator together with its power parameter `γ`.
#[derive(Debug, Clone)]
pub struct PhiSpec {
    kind: PhiKind,
    gamma: f64,
}

// Generic bridge `[(λ1 + λ2 z^{1+γ})^a − λ1^a] / λ2`; `a = 1/(1+γ)` for the
// plain bridge and `κ/(1+γ)` for the combined family.
#[derive(Debug, Clone, Copy)]
struct PowerBridge {
    l1: f64,
    l2: f64,
    a: f64,
    gamma: f64,
}

impl PowerBridge {
    fn limit(&self) -> bool {
        self.l1 > 0.0 && self.l2 < LAMBDA2_EPS
    }

    fn u(&self, z: f64) -> f64 {
        self.l1 + self.l2 * z.powf(1.0 + self.gamma)
    }

    fn value(&self, z: f64) -> f64 {
        let PowerBridge { l1, l2, a, gamma } = *self;
        let zp = z.powf(1.0 + gamma);
        if self.limit() {
            a * l1.powf(a - 1.0) * zp
        } else if l1 > 0.0 {
            // expm1/ln1p form avoids cancellation for small λ2 z^{1+γ}/λ1
            let w = l2 * zp / l1;
            l1.powf(a) * (a * w.ln_1p()).exp_m1() / l2
        } else {
            (l2 * zp).powf(a) / l2
        }
    }

    fn deriv(&self, z: f64) -> f64 {
        let c = self.a * (1.0 + self.gamma);
        let u = if self.limit() { self.l1 } else { self.u(z) };
        c * u.powf(self.a - 1.0) * z.powf(self.gamma)
    }

    fn second_deriv(&self, z: f64) -> f64 {
        let PowerBridge { l2, a, gamma, .. } = *self;
        let c = a * (1.0 + gamma);
        if self.limit() {
            return c * gamma * self.l1.powf(a - 1.0) * z.powf(gamma - 1.0);
        }
        let u = self.u(z);
        let curvature = if gamma == 0.0 { 0.0 } else { gamma * u.powf(a - 1.0) * z.powf(gamma - 1.0) };
        c * ((a - 1.0) * u.powf(a - 2.0) * l2 * (1.0 + gamma) * z.powf(2.0 * gamma) + curvature)
    }

    fn gamma_deriv(&self, z: f64) -> f64 {
        let PowerBridge { l1, l2, a, gamma } = *self;
        let da = -a / (1.0 + gamma);
        let zp = z.powf(1.0 + gamma);
        let ln_z = z.ln();
        if self.limit() {
            let base = l1.powf(a - 1.0);
            return da * base * (1.0 + a * l1.ln()) * zp + a * base * zp * ln_z;
        }
        let u = self.u(z);
        let explicit = a * u.powf(a - 1.0) * zp * ln_z;
        let via_exponent = if l1 > 0.0 {
            let w = l2 * zp / l1;
            let lw = w.ln_1p();
            l1.powf(a) * (l1.ln() * (a * lw).exp_m1() + (1.0 + w).powf(a) * lw) / l2
        } else {
            u.powf(a) * u.ln() / l2
        };
        da * via_exponent + explicit
    }
}

impl PhiSpec {
    pub fn new(kind: PhiKind, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return param(format!("gamma must be finite and >= 0 (got {gamma})"));
        }
        kind.validate_params()?;
        Ok(PhiSpec { kind, gamma })
    }

    pub fn identity(gamma: f64) -> Self {
        PhiSpec { kind: PhiKind::Identity, gamma }
    }

    pub fn density_power(gamma: f64) -> Self {
        PhiSpec { kind: PhiKind::DensityPower, gamma }
    }

    pub fn kind(&self) -> &PhiKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same generator at another `γ`.
    pub fn at_gamma(&self, gamma: f64) -> Result<Self> {
        PhiSpec::new(self.kind.clone(), gamma)
    }

    fn bridge(&self) -> Option<PowerBridge> {
        let g = self.gamma;
        match self.kind {
            PhiKind::Bridge { lambda1, lambda2 } => {
                Some(PowerBridge { l1: lambda1, l2: lambda2, a: 1.0 / (1.0 + g), gamma: g })
            }
            PhiKind::CombinedBridgePower { lambda1, lambda2, kappa } => {
                Some(PowerBridge { l1: lambda1, l2: lambda2, a: kappa / (1.0 + g), gamma: g })
            }
            _ => None,
        }
    }

    fn check_z(z: f64) -> Result<()> {
        if !(z > 0.0) || !z.is_finite() {
            return domain(format!("phi is defined for z > 0 (got {z})"));
        }
        Ok(())
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        Ok(self.value_unchecked(z))
    }

    pub fn deriv(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        Ok(self.deriv_unchecked(z))
    }

    pub fn second_deriv(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        Ok(self.second_deriv_unchecked(z))
    }

    /// `∂φ_γ(z)/∂γ` at this spec's `γ`.
    pub fn gamma_deriv(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        Ok(self.gamma_deriv_unchecked(z))
    }

    pub(crate) fn value_unchecked(&self, z: f64) -> f64 {
        let g = self.gamma;
        match &self.kind {
            PhiKind::Identity => z,
            PhiKind::DensityPower => z.powf(1.0 + g),
            PhiKind::PowerKappa { kappa } => z.powf(*kappa),
            PhiKind::Mixture { t } => t * z.powf(1.0 + g) + (1.0 - t) * z,
            PhiKind::Custom(c) => (c.value)(z, g),
            _ => self.bridge().unwrap().value(z),
        }
    }

    pub(crate) fn deriv_unchecked(&self, z: f64) -> f64 {
        let g = self.gamma;
        match &self.kind {
            PhiKind::Identity => 1.0,
            PhiKind::DensityPower => (1.0 + g) * z.powf(g),
            PhiKind::PowerKappa { kappa } => kappa * z.powf(kappa - 1.0),
            PhiKind::Mixture { t } => t * (1.0 + g) * z.powf(g) + (1.0 - t),
            PhiKind::Custom(c) => (c.deriv)(z, g),
            _ => self.bridge().unwrap().deriv(z),
        }
    }

    pub(crate) fn second_deriv_unchecked(&self, z: f64) -> f64 {
        let g = self.gamma;
        match &self.kind {
            PhiKind::Identity => 0.0,
            PhiKind::DensityPower => g * (1.0 + g) * z.powf(g - 1.0),
            PhiKind::PowerKappa { kappa } => kappa * (kappa - 1.0) * z.powf(kappa - 2.0),
            PhiKind::Mixture { t } => t * g * (1.0 + g) * z.powf(g - 1.0),
            PhiKind::Custom(c) => (c.second_deriv)(z, g),
            _ => self.bridge().unwrap().second_deriv(z),
        }
    }

    pub(crate) fn gamma_deriv_unchecked(&self, z: f64) -> f64 {
        let g = self.gamma;
        match &self.kind {
            PhiKind::Identity | PhiKind::PowerKappa { .. } => 0.0,
            PhiKind::DensityPower => z.powf(1.0 + g) * z.ln(),
            PhiKind::Mixture { t } => t * z.powf(1.0 + g) * z.ln(),
            PhiKind::Custom(c) => match &c.gamma_deriv {
                Some(f) => f(z, g),
                None => {
                    let h = GAMMA_STEP;
                    let v = |gg: f64| (c.value)(z, gg);
                    if g >= h {
                        (v(g + h) - v(g - h)) / (2.0 * h)
                    } else {
                        // one-sided, second order
                        (-3.0 * v(g) + 4.0 * v(g + h) - v(g + 2.0 * h)) / (2.0 * h)
                    }
                }
            },
            _ => self.bridge().unwrap().gamma_deriv(z),
        }
    }

    /// `φ_0(1)`.
    pub fn value_at_one_gamma_zero(&self) -> f64 {
        PhiSpec { kind: self.kind.clone(), gamma: 0.0 }.value_unchecked(1.0)
    }

    /// `φ'_0(1)`, the factor multiplying KL in the `γ → 0` limit.
    pub fn deriv_at_one_gamma_zero(&self) -> f64 {
        PhiSpec { kind: self.kind.clone(), gamma: 0.0 }.deriv_unchecked(1.0)
    }

    /// `∂φ_γ(1)/∂γ` at `γ = 0`.
    pub fn gamma_deriv_at_one_gamma_zero(&self) -> f64 {
        PhiSpec { kind: self.kind.clone(), gamma: 0.0 }.gamma_deriv_unchecked(1.0)
    }

    pub fn to_record(&self) -> Result<PhiRecord> {
        let kind = match self.kind {
            PhiKind::Identity => PhiKindRecord::Identity,
            PhiKind::DensityPower => PhiKindRecord::DensityPower,
            PhiKind::PowerKappa { kappa } => PhiKindRecord::PowerKappa { kappa },
            PhiKind::Bridge { lambda1, lambda2 } => PhiKindRecord::Bridge { lambda1, lambda2 },
            PhiKind::CombinedBridgePower { lambda1, lambda2, kappa } => {
                PhiKindRecord::Combined { lambda1, lambda2, kappa }
            }
            PhiKind::Mixture { t } => PhiKindRecord::Mixture { t },
            PhiKind::Custom(_) => return param("custom generators cannot be serialized"),
        };
        Ok(PhiRecord { kind, gamma: self.gamma })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&self.to_record()?).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: PhiRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("phi spec: {e}")))?;
        record.into_spec()
    }

    /// Parses `kind=bridge,lambda1=0.3,lambda2=0.7[,gamma=0.5]` (`;` also
    /// accepted as separator).
    pub fn from_inline(text: &str) -> Result<Self> {
        let mut map = serde_json::Map::new();
        for item in text.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("phi spec: expected key=value, got '{item}'")))?;
            let (key, val) = (key.trim(), val.trim());
            let json_val = if key == "kind" {
                serde_json::Value::String(val.to_string())
            } else {
                let x: f64 = val
                    .parse()
                    .map_err(|_| Error::Parse(format!("phi spec: field '{key}' is not a number: '{val}'")))?;
                serde_json::json!(x)
            };
            map.insert(key.to_string(), json_val);
        }
        let record: PhiRecord = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Parse(format!("phi spec: {e}")))?;
        record.into_spec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiKindRecord {
    Identity,
    DensityPower,
    PowerKappa { kappa: f64 },
    Bridge { lambda1: f64, lambda2: f64 },
    Combined { lambda1: f64, lambda2: f64, kappa: f64 },
    Mixture { t: f64 },
}

/// Serialized form: `{"kind": "bridge", "lambda1": 0.3, "lambda2": 0.7, "gamma": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiRecord {
    #[serde(flatten)]
    pub kind: PhiKindRecord,
    #[serde(default)]
    pub gamma: f64,
}

impl PhiRecord {
    pub fn into_spec(self) -> Result<PhiSpec> {
        let kind = match self.kind {
            PhiKindRecord::Identity => PhiKind::Identity,
            PhiKindRecord::DensityPower => PhiKind::DensityPower,
            PhiKindRecord::PowerKappa { kappa } => PhiKind::PowerKappa { kappa },
            PhiKindRecord::Bridge { lambda1, lambda2 } => PhiKind::Bridge { lambda1, lambda2 },
            PhiKindRecord::Combined { lambda1, lambda2, kappa } => {
                PhiKind::CombinedBridgePower { lambda1, lambda2, kappa }
            }
            PhiKindRecord::Mixture { t } => PhiKind::Mixture { t },
        };
        PhiSpec::new(kind, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    NotIncreasing,
    NotConvex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFailure {
    pub z: f64,
    pub violation: Violation,
    /// The offending derivative value.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub failures: Vec<GridFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn count(&self, violation: Violation) -> usize {
        self.failures.iter().filter(|f| f.violation == violation).count()
    }
}

/// Checks `φ' > 0` and `φ'' ≥ −tol_convex` at each grid point.
pub fn validate_phi(spec: &PhiSpec, grid: &[f64], tol_convex: f64) -> Result<ValidationReport> {
    if grid.is_empty() {
        return param("validation grid is empty");
    }
    if grid.iter().any(|z| !(*z > 0.0) || !z.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return param("validation grid must be positive and strictly increasing");
    }
    let mut report = ValidationReport::default();
    for &z in grid {
        let d1 = spec.deriv_unchecked(z);
        if !(d1 > 0.0) {
            report.failures.push(GridFailure { z, violation: Violation::NotIncreasing, value: d1 });
        }
        let d2 = spec.second_deriv_unchecked(z);
        if !(d2 >= -tol_convex) {
            report.failures.push(GridFailure { z, violation: Violation::NotConvex, value: d2 });
        }
    }
    Ok(report)
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Sequence of `γ` values used for limit checks.
pub const LIMIT_GAMMAS: [f64; 7] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSequence {
    pub quantity: &'static str,
    pub target: f64,
    /// `(γ, value)` along [`LIMIT_GAMMAS`].
    pub values: Vec<(f64, f64)>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLimit {
    pub at_1e3: f64,
    pub at_1e6: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub sequences: Vec<LimitSequence>,
    /// `None` when the generator has no `γ`-dependent parameter.
    pub parameter: Option<ParameterLimit>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.sequences.iter().all(|s| s.converged)
            && self.parameter.as_ref().is_none_or(|p| p.converged)
    }
}

/// Follows `φ_γ(‖q‖_{1+γ})`, `φ'_γ(‖q‖_{1+γ})` and `∂φ_γ/∂γ` at `z = ‖q‖_{1+γ}`
/// as `γ → 0` and compares them with `φ_0(1)`, `φ'_0(1)` and
/// `∂φ_γ(1)/∂γ|_{γ=0}`. Also checks that a `γ`-dependent parameter settles.
pub fn assumption_limits_check(
    spec: &PhiSpec,
    q_norm_path: &dyn Fn(f64) -> f64,
) -> Result<AssumptionReport> {
    const LIMIT_TOL: f64 = 1e-5;
    let at_zero = spec.at_gamma(0.0)?;
    let targets = [
        ("phi", at_zero.value_unchecked(1.0)),
        ("phi_prime", at_zero.deriv_unchecked(1.0)),
        ("dphi_dgamma", at_zero.gamma_deriv_unchecked(1.0)),
    ];
    let mut sequences = Vec::with_capacity(3);
    for (idx, (quantity, target)) in targets.into_iter().enumerate() {
        let mut values = Vec::with_capacity(LIMIT_GAMMAS.len());
        for &g in &LIMIT_GAMMAS {
            let s = spec.at_gamma(g)?;
            let z = q_norm_path(g);
            let v = match idx {
                0 => s.value_unchecked(z),
                1 => s.deriv_unchecked(z),
                _ => s.gamma_deriv_unchecked(z),
            };
            values.push((g, v));
        }
        let last = values.last().unwrap().1;
        let converged = target.is_finite()
            && values.iter().all(|(_, v)| v.is_finite())
            && (last - target).abs() <= LIMIT_TOL * (1.0 + target.abs());
        sequences.push(LimitSequence { quantity, target, values, converged });
    }
    let parameter = match &spec.kind {
        PhiKind::Custom(CustomPhi { parameter_path: Some(path), .. }) => {
            let (a, b) = (path(1e-3), path(1e-6));
            let converged = a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-2 * (1.0 + a.abs());
            Some(ParameterLimit { at_1e3: a, at_1e6: b, converged })
        }
        _ => None,
    };
    Ok(AssumptionReport { sequences, parameter })
}
