//! Cross-entropies and divergences between two densities.
//!
//! Every family is written as a closed formula in three primitives:
//! `A = ⟨q p^γ⟩`, `M = ⟨p^{1+γ}⟩` and (on the `γ = 0` branches)
//! `⟨q log p⟩`. A divergence is always `d(q, p) − d(q, q)` computed through
//! the same cross-entropy path, so `D(p, p)` is exactly zero.
//!
//! The bridge-type families are evaluated in `ln_1p`/`exp_m1` form when
//! `λ1 > 0`, which keeps them accurate as `λ2 → 0`; below
//! [`LAMBDA2_EPS`] they switch to the analytic limit.

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{domain, param, Error, Result};
use crate::phi::{log_grid, PhiKind, PhiKindRecord, PhiRecord, PhiSpec, LAMBDA2_EPS};
use crate::quadrature::{integrate_with_breaks, QuadConfig};
use crate::GAMMA_SWITCH;

/// Generator `v` of the functional density power family; `w(x) = v(e^x)`
/// must be increasing and convex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VSpec {
    Linear,
    Log,
    /// `(z^ζ − 1)/ζ`, the log at `ζ = 0`.
    LnZeta { zeta: f64 },
    /// `log(λ1 + λ2 z)/λ2`.
    BridgeLog { lambda1: f64, lambda2: f64 },
}

impl VSpec {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            VSpec::Linear => z,
            VSpec::Log => z.ln(),
            VSpec::LnZeta { zeta } => {
                if zeta == 0.0 {
                    z.ln()
                } else {
                    (zeta * z.ln()).exp_m1() / zeta
                }
            }
            VSpec::BridgeLog { lambda1, lambda2 } => (lambda1 + lambda2 * z).ln() / lambda2,
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match *self {
            VSpec::Linear => 1.0,
            VSpec::Log => 1.0 / z,
            VSpec::LnZeta { zeta } => z.powf(zeta - 1.0),
            VSpec::BridgeLog { lambda1, lambda2 } => 1.0 / (lambda1 + lambda2 * z),
        }
    }

    pub fn second_deriv(&self, z: f64) -> f64 {
        match *self {
            VSpec::Linear => 0.0,
            VSpec::Log => -1.0 / (z * z),
            VSpec::LnZeta { zeta } => (zeta - 1.0) * z.powf(zeta - 2.0),
            VSpec::BridgeLog { lambda1, lambda2 } => -lambda2 / (lambda1 + lambda2 * z).powi(2),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VSpec::Linear => "linear",
            VSpec::Log => "log",
            VSpec::LnZeta { .. } => "ln_zeta",
            VSpec::BridgeLog { .. } => "bridge_log",
        }
    }

    fn params_string(&self) -> String {
        match self {
            VSpec::Linear | VSpec::Log => String::new(),
            VSpec::LnZeta { zeta } => format!("zeta={zeta}"),
            VSpec::BridgeLog { lambda1, lambda2 } => format!("lambda1={lambda1};lambda2={lambda2}"),
        }
    }

    /// Parameter ranges, then `w' > 0` and `w'' ≥ −1e-12` on `x ∈ [−7, 5]`.
    pub fn validate(&self) -> Result<()> {
        match *self {
            VSpec::LnZeta { zeta } if !(0.0..=1.0).contains(&zeta) => {
                return param(format!("zeta must lie in [0, 1] (got {zeta})"))
            }
            VSpec::BridgeLog { lambda1, lambda2 }
                if !(lambda1 >= 0.0 && lambda1.is_finite()) || !(lambda2 > 0.0 && lambda2.is_finite()) =>
            {
                return param(format!("bridge_log needs lambda1 >= 0 and lambda2 > 0 (got {lambda1}, {lambda2})"))
            }
            _ => {}
        }
        for z in log_grid(1e-3, 100.0, 120) {
            let w1 = self.deriv(z) * z;
            let w2 = self.second_deriv(z) * z * z + w1;
            if !(w1 > 0.0) || !(w2 >= -1e-12 * (1.0 + w1.abs())) {
                return param(format!("v = {self:?}: w(x) = v(e^x) is not increasing and convex at e^x = {z}"));
            }
        }
        Ok(())
    }
}

/// `H` of the Hölder family: `H(z) ≥ −z^{1+γ}` and `H(1) = −1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    /// `γ − (1+γ) z`
    DpLinear,
    /// `−z^{1+γ}`
    PowerLower,
    /// `−κ^{(1+γ)/κ} |z − 1 + 1/κ|^{(1+γ)/κ} sign(z − 1 + 1/κ)`
    BregmanHolder { kappa: f64 },
}

impl HSpec {
    pub fn value(&self, z: f64, gamma: f64) -> f64 {
        match *self {
            HSpec::DpLinear => gamma - (1.0 + gamma) * z,
            HSpec::PowerLower => -z.powf(1.0 + gamma),
            HSpec::BregmanHolder { kappa } => {
                let e = (1.0 + gamma) / kappa;
                let s = z - 1.0 + 1.0 / kappa;
                -kappa.powf(e) * s.abs().powf(e) * s.signum()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HSpec::DpLinear => "dp_linear",
            HSpec::PowerLower => "power_lower",
            HSpec::BregmanHolder { .. } => "bregman_holder",
        }
    }

    fn params_string(&self) -> String {
        match self {
            HSpec::BregmanHolder { kappa } => format!("kappa={kappa}"),
            _ => String::new(),
        }
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if let HSpec::BregmanHolder { kappa } = *self {
            if !(kappa >= 1.0 && kappa.is_finite()) {
                return param(format!("kappa must be >= 1 (got {kappa})"));
            }
        }
        if (self.value(1.0, gamma) + 1.0).abs() > 1e-12 {
            return param(format!("H = {self:?} violates H(1) = -1"));
        }
        let grid = std::iter::once(0.0).chain(log_grid(1e-4, 100.0, 200));
        for z in grid {
            let lower = -z.powf(1.0 + gamma);
            if self.value(z, gamma) < lower - 1e-12 * (1.0 + lower.abs()) {
                return param(format!("H = {self:?} drops below -z^(1+gamma) at z = {z}"));
            }
        }
        Ok(())
    }
}

/// Which cross-entropy/divergence to evaluate.
#[derive(Debug, Clone)]
pub enum Family {
    NbDpd(PhiKind),
    Dpd,
    Psd,
    LogGamma,
    Bhd { kappa: f64 },
    BdpdPs { lambda1: f64, lambda2: f64 },
    BdpdLog { lambda1: f64, lambda2: f64 },
    Combined { lambda1: f64, lambda2: f64, kappa: f64 },
    Mixture { t: f64 },
    Fdpd(VSpec),
    Hd(HSpec),
    Kl,
}

fn check_lambdas(l1: f64, l2: f64) -> Result<()> {
    PhiKind::Bridge { lambda1: l1, lambda2: l2 }.validate_params()
}

fn check_kappa(kappa: f64) -> Result<()> {
    PhiKind::PowerKappa { kappa }.validate_params()
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::NbDpd(_) => "nb_dpd",
            Family::Dpd => "dpd",
            Family::Psd => "psd",
            Family::LogGamma => "log_gamma",
            Family::Bhd { .. } => "bhd",
            Family::BdpdPs { .. } => "bdpd_ps",
            Family::BdpdLog { .. } => "bdpd_log",
            Family::Combined { .. } => "combined",
            Family::Mixture { .. } => "mixture",
            Family::Fdpd(_) => "fdpd",
            Family::Hd(_) => "hd",
            Family::Kl => "kl",
        }
    }

    /// `key=value` pairs joined by `;`, for CSV output.
    pub fn params_string(&self) -> String {
        match self {
            Family::NbDpd(kind) => {
                let p = kind.params_string();
                if p.is_empty() {
                    format!("phi={}", kind.name())
                } else {
                    format!("phi={};{p}", kind.name())
                }
            }
            Family::Bhd { kappa } => format!("kappa={kappa}"),
            Family::BdpdPs { lambda1, lambda2 } | Family::BdpdLog { lambda1, lambda2 } => {
                format!("lambda1={lambda1};lambda2={lambda2}")
            }
            Family::Combined { lambda1, lambda2, kappa } => {
                format!("lambda1={lambda1};lambda2={lambda2};kappa={kappa}")
            }
            Family::Mixture { t } => format!("t={t}"),
            Family::Fdpd(v) => {
                let p = v.params_string();
                if p.is_empty() { format!("v={}", v.name()) } else { format!("v={};{p}", v.name()) }
            }
            Family::Hd(h) => {
                let p = h.params_string();
                if p.is_empty() { format!("h={}", h.name()) } else { format!("h={};{p}", h.name()) }
            }
            Family::Dpd | Family::Psd | Family::LogGamma | Family::Kl => String::new(),
        }
    }

    fn has_zero_branch(&self) -> bool {
        matches!(self, Family::NbDpd(_) | Family::Fdpd(_) | Family::Kl)
    }

    /// Whether `γ` falls on the analytic Shannon branch for this family.
    pub fn uses_log_branch(&self, gamma: f64) -> bool {
        matches!(self, Family::Kl) || (self.has_zero_branch() && gamma <= GAMMA_SWITCH)
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return param(format!("gamma must be finite and >= 0 (got {gamma})"));
        }
        if !self.has_zero_branch() && gamma <= 0.0 {
            return param(format!("{} requires gamma > 0", self.name()));
        }
        match self {
            Family::NbDpd(kind) => kind.validate_params(),
            Family::Bhd { kappa } => check_kappa(*kappa),
            Family::BdpdPs { lambda1, lambda2 } | Family::BdpdLog { lambda1, lambda2 } => {
                check_lambdas(*lambda1, *lambda2)
            }
            Family::Combined { lambda1, lambda2, kappa } => {
                check_lambdas(*lambda1, *lambda2)?;
                check_kappa(*kappa)
            }
            Family::Mixture { t } => PhiKind::Mixture { t: *t }.validate_params(),
            Family::Fdpd(v) => v.validate(),
            Family::Hd(h) => h.validate(gamma),
            _ => Ok(()),
        }
    }

    /// Cross-entropy from precomputed primitives.
    pub fn cross_entropy(&self, t: &CrossTerms) -> Result<f64> {
        let g = t.gamma;
        if self.uses_log_branch(g) {
            let qlp = t.q_log_p.ok_or_else(|| Error::Parameter("log term was not computed".into()))?;
            return Ok(match self {
                Family::NbDpd(kind) => {
                    let s = PhiSpec::new(kind.clone(), 0.0)?;
                    -s.deriv_at_one_gamma_zero() * qlp - s.gamma_deriv_at_one_gamma_zero()
                }
                Family::Fdpd(v) => -v.deriv(1.0) * qlp,
                _ => -qlp,
            });
        }
        let (a, m) = (t.qp, t.p_power);
        let value = match self {
            Family::NbDpd(kind) => nb_dpce_terms(&PhiSpec::new(kind.clone(), g)?, a, m),
            Family::Dpd => dpce_terms(a, m, g),
            Family::Psd => psce_terms(a, m, g),
            Family::LogGamma => {
                if !(a > 0.0) {
                    return domain("log-gamma cross-entropy needs <q p^gamma> > 0");
                }
                -(1.0 + g) / g * a.ln() + m.ln()
            }
            Family::Bhd { kappa } => bhce_terms(a, m, g, *kappa),
            Family::BdpdPs { lambda1, lambda2 } => psbdpce_terms(a, m, g, *lambda1, *lambda2),
            Family::BdpdLog { lambda1, lambda2 } => {
                if *lambda1 == 0.0 && !(a > 0.0) {
                    return domain("log-type bridge cross-entropy needs <q p^gamma> > 0 when lambda1 = 0");
                }
                log_bdpce_terms(a, m, g, *lambda1, *lambda2)
            }
            Family::Combined { lambda1, lambda2, kappa } => {
                combined_terms(a, m, g, *lambda1, *lambda2, *kappa)
            }
            Family::Mixture { t: w } => w * dpce_terms(a, m, g) + (1.0 - w) * psce_terms(a, m, g),
            Family::Fdpd(v) => {
                if matches!(v, VSpec::Log | VSpec::LnZeta { zeta: 0.0 }) && !(a > 0.0) {
                    return domain("FDPCE with a log generator needs <q p^gamma> > 0");
                }
                -(1.0 + g) / g * v.value(a) + v.value(1.0) / g + v.value(m)
            }
            Family::Hd(h) => h.value(a / m, g) * m / g + 1.0 / g,
            Family::Kl => unreachable!("kl always takes the log branch"),
        };
        Ok(value)
    }

    pub fn to_record(&self) -> Result<FamilyRecord> {
        Ok(match self {
            Family::NbDpd(kind) => {
                FamilyRecord::NbDpd { phi: PhiSpec::new(kind.clone(), 0.0)?.to_record()?.kind }
            }
            Family::Dpd => FamilyRecord::Dpd,
            Family::Psd => FamilyRecord::Psd,
            Family::LogGamma => FamilyRecord::LogGamma,
            Family::Bhd { kappa } => FamilyRecord::Bhd { kappa: *kappa },
            Family::BdpdPs { lambda1, lambda2 } => FamilyRecord::BdpdPs { lambda1: *lambda1, lambda2: *lambda2 },
            Family::BdpdLog { lambda1, lambda2 } => FamilyRecord::BdpdLog { lambda1: *lambda1, lambda2: *lambda2 },
            Family::Combined { lambda1, lambda2, kappa } => {
                FamilyRecord::Combined { lambda1: *lambda1, lambda2: *lambda2, kappa: *kappa }
            }
            Family::Mixture { t } => FamilyRecord::Mixture { t: *t },
            Family::Fdpd(v) => FamilyRecord::Fdpd { v: *v },
            Family::Hd(h) => FamilyRecord::Hd { h: *h },
            Family::Kl => FamilyRecord::Kl,
        })
    }
}

/// Serialized family selector, e.g. `{"family": "bdpd_ps", "lambda1": 0.3, "lambda2": 0.7}`
/// or `{"family": "nb_dpd", "phi": {"kind": "mixture", "t": 0.5}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyRecord {
    NbDpd { phi: PhiKindRecord },
    Dpd,
    Psd,
    LogGamma,
    Bhd { kappa: f64 },
    BdpdPs { lambda1: f64, lambda2: f64 },
    BdpdLog { lambda1: f64, lambda2: f64 },
    Combined { lambda1: f64, lambda2: f64, kappa: f64 },
    Mixture { t: f64 },
    Fdpd { v: VSpec },
    Hd { h: HSpec },
    Kl,
}

impl FamilyRecord {
    pub fn into_family(self) -> Result<Family> {
        Ok(match self {
            FamilyRecord::NbDpd { phi } => {
                Family::NbDpd(PhiRecord { kind: phi, gamma: 0.0 }.into_spec()?.kind().clone())
            }
            FamilyRecord::Dpd => Family::Dpd,
            FamilyRecord::Psd => Family::Psd,
            FamilyRecord::LogGamma => Family::LogGamma,
            FamilyRecord::Bhd { kappa } => Family::Bhd { kappa },
            FamilyRecord::BdpdPs { lambda1, lambda2 } => Family::BdpdPs { lambda1, lambda2 },
            FamilyRecord::BdpdLog { lambda1, lambda2 } => Family::BdpdLog { lambda1, lambda2 },
            FamilyRecord::Combined { lambda1, lambda2, kappa } => Family::Combined { lambda1, lambda2, kappa },
            FamilyRecord::Mixture { t } => Family::Mixture { t },
            FamilyRecord::Fdpd { v } => Family::Fdpd(v),
            FamilyRecord::Hd { h } => Family::Hd(h),
            FamilyRecord::Kl => Family::Kl,
        })
    }
}

// ---------------------------------------------------------------------------
// Closed forms in A = <q p^γ>, M = <p^{1+γ}>.

pub(crate) fn nb_dpce_terms(phi: &PhiSpec, a: f64, m: f64) -> f64 {
    let g = phi.gamma();
    let norm = m.powf(1.0 / (1.0 + g));
    -(phi.value_unchecked(norm) - phi.value_at_one_gamma_zero()) / g
        - phi.deriv_unchecked(norm) * (a - m) / (g * norm.powf(g))
}

fn dpce_terms(a: f64, m: f64, g: f64) -> f64 {
    -(1.0 + g) / g * a + 1.0 / g + m
}

fn psce_terms(a: f64, m: f64, g: f64) -> f64 {
    -a / (g * m.powf(g / (1.0 + g))) + 1.0 / g
}

fn bhce_terms(a: f64, m: f64, g: f64, kappa: f64) -> f64 {
    kappa / g * m.powf(kappa / (1.0 + g)) * (1.0 - 1.0 / kappa - a / m) + 1.0 / g
}

fn psbdpce_terms(a: f64, m: f64, g: f64, l1: f64, l2: f64) -> f64 {
    let alpha = 1.0 / (1.0 + g);
    if l1 > 0.0 && l2 < LAMBDA2_EPS {
        return l1.powf(-g / (1.0 + g)) / (1.0 + g) * dpce_terms(a, m, g);
    }
    if l1 == 0.0 {
        return -1.0 / (l2 * g) * (l2 * a / (l2 * m).powf(g / (1.0 + g)) - l2.powf(alpha));
    }
    // (l1 + l2 A)(l1 + l2 M)^{-γ/(1+γ)} − (l1 + l2)^{1/(1+γ)} = l1^α (e^x − e^y)
    let x = (l2 * a / l1).ln_1p() - g / (1.0 + g) * (l2 * m / l1).ln_1p();
    let y = alpha * (l2 / l1).ln_1p();
    -l1.powf(alpha) * y.exp() * (x - y).exp_m1() / (l2 * g)
}

pub(crate) fn log_bdpce_terms(a: f64, m: f64, g: f64, l1: f64, l2: f64) -> f64 {
    if l1 > 0.0 && l2 < LAMBDA2_EPS {
        return dpce_terms(a, m, g) / l1;
    }
    if l1 == 0.0 {
        return -(1.0 + g) / (l2 * g) * (l2 * a).ln() + (l2 * m).ln() / l2 + l2.ln() / (l2 * g);
    }
    // the log(l1) parts cancel exactly
    (-(1.0 + g) / g * (l2 * a / l1).ln_1p() + (l2 * m / l1).ln_1p() + (l2 / l1).ln_1p() / g) / l2
}

fn combined_terms(a: f64, m: f64, g: f64, l1: f64, l2: f64, kappa: f64) -> f64 {
    let b = kappa / (1.0 + g);
    if l1 > 0.0 && l2 < LAMBDA2_EPS {
        return kappa * l1.powf(b - 1.0) / (1.0 + g) * dpce_terms(a, m, g);
    }
    if l1 == 0.0 {
        return kappa / (l2 * g) * (l2 * m).powf(b) * (1.0 - 1.0 / kappa - a / m) + l2.powf(b) / (l2 * g);
    }
    // (κ−1)U^b − κU^{b−1}V + W^b with U = l1 + l2 M, V = l1 + l2 A, W = l1 + l2;
    // the O(1) parts cancel, leaving expm1 terms.
    let u = (l2 * m / l1).ln_1p();
    let v = (l2 * a / l1).ln_1p();
    let w = (l2 / l1).ln_1p();
    let bracket = (kappa - 1.0) * (b * u).exp_m1() - kappa * ((b - 1.0) * u + v).exp_m1() + (b * w).exp_m1();
    l1.powf(b) * bracket / (l2 * g)
}

/// `ξ(z)` mapping the PS-type bridge cross-entropy to the log-type one.
pub fn xi_transform(z: f64, lambda1: f64, lambda2: f64, gamma: f64) -> Result<f64> {
    check_lambdas(lambda1, lambda2)?;
    if !(gamma > 0.0) {
        return param("xi transform requires gamma > 0");
    }
    let arg = -lambda2 * gamma * z + (lambda1 + lambda2).powf(1.0 / (1.0 + gamma));
    if !(arg > 0.0) {
        return domain(format!("xi transform: log argument {arg} is not positive"));
    }
    Ok(-(1.0 + gamma) / (lambda2 * gamma) * arg.ln() + (lambda1 + lambda2).ln() / (lambda2 * gamma))
}

// ---------------------------------------------------------------------------
// Primitives.

/// The integrals a cross-entropy needs, for one ordered pair `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossTerms {
    pub gamma: f64,
    /// `⟨q p^γ⟩`
    pub qp: f64,
    /// `⟨p^{1+γ}⟩`
    pub p_power: f64,
    /// `⟨q log p⟩`, present when a Shannon branch was requested.
    pub q_log_p: Option<f64>,
    /// Largest quadrature error estimate among the integrals.
    pub error: f64,
}

fn joint_window(q: &DensityModel, p: &DensityModel, cfg: &QuadConfig) -> Result<(QuadConfig, Vec<f64>)> {
    let (ql, qh) = q.truncation();
    let (pl, ph) = p.truncation();
    let cfg = cfg.clone().with_interval(ql.min(pl), qh.max(ph))?;
    let mut breaks = q.breakpoints();
    breaks.extend(p.breakpoints());
    breaks.extend([ql, qh, pl, ph]);
    Ok((cfg, breaks))
}

/// `⟨q p^γ⟩` by quadrature over the union of both truncation windows.
pub fn cross_power(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<(f64, f64)> {
    let (cfg, breaks) = joint_window(q, p, cfg)?;
    integrate_with_breaks(
        |x| {
            let lq = q.log_density(x);
            let lp = p.log_density(x);
            if lq == f64::NEG_INFINITY || lp == f64::NEG_INFINITY {
                0.0
            } else {
                (lq + gamma * lp).exp()
            }
        },
        &cfg,
        &breaks,
    )
    .into_result()
}

/// `⟨q log p⟩` over `q`'s window; fails if `p` vanishes where `q` has mass.
pub fn cross_log(q: &DensityModel, p: &DensityModel, cfg: &QuadConfig) -> Result<(f64, f64)> {
    let (lo, hi) = q.truncation();
    let cfg = cfg.clone().with_interval(lo, hi)?;
    let mut breaks = q.breakpoints();
    breaks.extend(p.breakpoints());
    let mut singular = false;
    let out = integrate_with_breaks(
        |x| {
            let lq = q.log_density(x);
            if lq == f64::NEG_INFINITY {
                return 0.0;
            }
            let lp = p.log_density(x);
            if lp == f64::NEG_INFINITY {
                return f64::NAN;
            }
            lq.exp() * lp
        },
        &cfg,
        &breaks,
    );
    if out.value.is_nan() {
        singular = true;
    }
    if singular {
        return domain("q is not absolutely continuous with respect to p");
    }
    out.into_result()
}

impl CrossTerms {
    pub fn compute(
        q: &DensityModel,
        p: &DensityModel,
        gamma: f64,
        need_log: bool,
        cfg: &QuadConfig,
    ) -> Result<Self> {
        let mut error: f64 = 0.0;
        let q_log_p = if need_log {
            let (v, e) = cross_log(q, p, cfg)?;
            error = error.max(e);
            Some(v)
        } else {
            None
        };
        let (qp, p_power) = if gamma > 0.0 && !(need_log && gamma <= GAMMA_SWITCH) {
            let (a, e) = cross_power(q, p, gamma, cfg)?;
            let pm = p.power_moments(gamma, cfg)?;
            error = error.max(e).max(pm.error);
            (a, pm.m0)
        } else {
            (1.0, 1.0)
        };
        Ok(CrossTerms { gamma, qp, p_power, q_log_p, error })
    }
}

/// Cross-entropy and divergence for one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub cross_entropy: f64,
    pub divergence: f64,
    pub quad_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    CrossEntropy,
    Divergence,
}

#[derive(Debug, Clone)]
pub struct DivergenceRequest {
    pub q: DensityModel,
    pub p: DensityModel,
    pub gamma: f64,
    pub family: Family,
    pub quantity: Quantity,
}

impl DivergenceRequest {
    pub fn evaluate(&self, cfg: &QuadConfig) -> Result<f64> {
        let e = evaluate(&self.q, &self.p, &self.family, self.gamma, cfg)?;
        Ok(match self.quantity {
            Quantity::CrossEntropy => e.cross_entropy,
            Quantity::Divergence => e.divergence,
        })
    }
}

/// `d(q, p)` alone.
pub fn cross_entropy(
    q: &DensityModel,
    p: &DensityModel,
    family: &Family,
    gamma: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    family.validate(gamma)?;
    let terms = CrossTerms::compute(q, p, gamma, family.uses_log_branch(gamma), cfg)?;
    family.cross_entropy(&terms)
}

/// `d(q, p)` and `D(q, p) = d(q, p) − d(q, q)`.
pub fn evaluate(
    q: &DensityModel,
    p: &DensityModel,
    family: &Family,
    gamma: f64,
    cfg: &QuadConfig,
) -> Result<Evaluation> {
    family.validate(gamma)?;
    let need_log = family.uses_log_branch(gamma);
    let tp = CrossTerms::compute(q, p, gamma, need_log, cfg)?;
    let tq = CrossTerms::compute(q, q, gamma, need_log, cfg)?;
    let ce = family.cross_entropy(&tp)?;
    let self_ce = family.cross_entropy(&tq)?;
    Ok(Evaluation { cross_entropy: ce, divergence: ce - self_ce, quad_error: tp.error.max(tq.error) })
}

pub fn divergence(
    q: &DensityModel,
    p: &DensityModel,
    family: &Family,
    gamma: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    Ok(evaluate(q, p, family, gamma, cfg)?.divergence)
}

// Named entry points.

pub fn nb_dpce(q: &DensityModel, p: &DensityModel, phi: &PhiKind, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::NbDpd(phi.clone()), gamma, cfg)
}

pub fn nb_dpd(q: &DensityModel, p: &DensityModel, phi: &PhiKind, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::NbDpd(phi.clone()), gamma, cfg)
}

pub fn dpce(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Dpd, gamma, cfg)
}

pub fn dpd(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::Dpd, gamma, cfg)
}

pub fn psce(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Psd, gamma, cfg)
}

pub fn psd(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::Psd, gamma, cfg)
}

pub fn log_gamma_ce(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::LogGamma, gamma, cfg)
}

pub fn log_gamma_div(q: &DensityModel, p: &DensityModel, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::LogGamma, gamma, cfg)
}

pub fn kl(q: &DensityModel, p: &DensityModel, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::Kl, 0.0, cfg)
}

pub fn bhce(q: &DensityModel, p: &DensityModel, kappa: f64, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Bhd { kappa }, gamma, cfg)
}

pub fn psbdpce(q: &DensityModel, p: &DensityModel, lambda1: f64, lambda2: f64, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::BdpdPs { lambda1, lambda2 }, gamma, cfg)
}

pub fn log_bdpce(q: &DensityModel, p: &DensityModel, lambda1: f64, lambda2: f64, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::BdpdLog { lambda1, lambda2 }, gamma, cfg)
}

pub fn combined_ce(
    q: &DensityModel,
    p: &DensityModel,
    lambda1: f64,
    lambda2: f64,
    kappa: f64,
    gamma: f64,
    cfg: &QuadConfig,
) -> Result<f64> {
    cross_entropy(q, p, &Family::Combined { lambda1, lambda2, kappa }, gamma, cfg)
}

pub fn mixture_ce(q: &DensityModel, p: &DensityModel, t: f64, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Mixture { t }, gamma, cfg)
}

pub fn fdpce(q: &DensityModel, p: &DensityModel, v: VSpec, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Fdpd(v), gamma, cfg)
}

pub fn fdpd(q: &DensityModel, p: &DensityModel, v: VSpec, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::Fdpd(v), gamma, cfg)
}

pub fn hce(q: &DensityModel, p: &DensityModel, h: HSpec, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    cross_entropy(q, p, &Family::Hd(h), gamma, cfg)
}

pub fn hd(q: &DensityModel, p: &DensityModel, h: HSpec, gamma: f64, cfg: &QuadConfig) -> Result<f64> {
    divergence(q, p, &Family::Hd(h), gamma, cfg)
}
