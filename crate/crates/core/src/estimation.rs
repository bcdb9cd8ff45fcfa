//! Empirical NB-DPCE loss, the estimating function ψ and the M-estimation solver.

use nalgebra::{DMatrix, DVector};

use crate::density::{DensityModel, ModelFamily, PowerMoments};
use crate::divergence::nb_dpce_terms;
use crate::error::{param, Error, Result};
use crate::phi::PhiSpec;
use crate::quadrature::QuadConfig;
use crate::GAMMA_SWITCH;

/// The plug-in loss `d(q̂, p_θ)` with `q̂` the empirical distribution of `data`.
#[derive(Debug, Clone)]
pub struct EmpiricalLossSpec {
    pub data: Vec<f64>,
    pub family: ModelFamily,
    pub phi: PhiSpec,
    pub quad: QuadConfig,
}

impl EmpiricalLossSpec {
    pub fn new(data: Vec<f64>, family: ModelFamily, phi: PhiSpec) -> Result<Self> {
        let spec = EmpiricalLossSpec { data, family, phi, quad: QuadConfig::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gamma(&self) -> f64 {
        self.phi.gamma()
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return param("dataset is empty");
        }
        if let Some(x) = self.data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {x}")));
        }
        if self.family == ModelFamily::Exponential {
            if let Some(x) = self.data.iter().find(|x| **x < 0.0) {
                return Err(Error::Domain(format!("observation {x} is outside the exponential support")));
            }
        }
        self.phi.kind().validate_params()
    }

    fn on_log_branch(&self) -> bool {
        self.gamma() <= GAMMA_SWITCH
    }

    fn mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.data.iter().map(|&x| f(x)).sum::<f64>() / self.data.len() as f64
    }
}

/// Loss at `θ` (log-scale coordinates, see [`ModelFamily::model`]).
pub fn empirical_loss(spec: &EmpiricalLossSpec, theta: &[f64]) -> Result<f64> {
    let model = spec.family.model(theta)?;
    if spec.on_log_branch() {
        let mean_log = spec.mean(|x| model.log_density(x));
        return Ok(-spec.phi.deriv_at_one_gamma_zero() * mean_log - spec.phi.gamma_deriv_at_one_gamma_zero());
    }
    let g = spec.gamma();
    let a = spec.mean(|x| (g * model.log_density(x)).exp());
    let m = model.power_moments(g, &spec.quad)?;
    Ok(nb_dpce_terms(&spec.phi, a, m.m0))
}

/// ψ(·, θ) for a fixed model and generator, with its moments precomputed.
#[derive(Debug, Clone)]
pub struct PsiFunction {
    model: DensityModel,
    gamma: f64,
    moments: PowerMoments,
    /// `‖p‖φ''(‖p‖) − γφ'(‖p‖)`
    curvature: f64,
    /// `γφ'(‖p‖)⟨p^{1+γ}⟩`
    slope: f64,
    /// `φ'_0(1)`, used on the `γ = 0` branch.
    shannon_scale: f64,
    phi_second: f64,
}

impl PsiFunction {
    pub fn new(model: &DensityModel, phi: &PhiSpec, cfg: &QuadConfig) -> Result<Self> {
        if model.family().is_none() {
            return param("psi needs a parametric model with a score");
        }
        let g = phi.gamma();
        let moments = model.power_moments(g, cfg)?;
        let norm = moments.norm;
        let d1 = phi.deriv(norm)?;
        let d2 = phi.second_deriv(norm)?;
        Ok(PsiFunction {
            model: model.clone(),
            gamma: g,
            curvature: norm * d2 - g * d1,
            slope: g * d1 * moments.m0,
            shannon_scale: phi.deriv_at_one_gamma_zero(),
            phi_second: d2,
            moments,
        })
    }

    pub fn moments(&self) -> &PowerMoments {
        &self.moments
    }

    pub fn dim(&self) -> usize {
        self.moments.m1.len()
    }

    pub fn on_log_branch(&self) -> bool {
        self.gamma <= GAMMA_SWITCH
    }

    /// `ψ(x, θ)`; on the `γ = 0` branch this is `−φ'_0(1) s_θ(x)`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let s = self.model.score_unchecked(x);
        if self.on_log_branch() {
            return s.iter().map(|si| -self.shannon_scale * si).collect();
        }
        let lp = self.model.log_density(x);
        let pg = if lp == f64::NEG_INFINITY { 0.0 } else { (self.gamma * lp).exp() };
        let m0 = self.moments.m0;
        self.moments
            .m1
            .iter()
            .zip(&s)
            .map(|(&m1, &si)| {
                let ps = if pg == 0.0 { 0.0 } else { pg * si };
                -m1 * self.curvature * (pg - m0) - self.slope * (ps - m1)
            })
            .collect()
    }

    /// `lim_{x→∞} ψ(x, θ) = ⟨p^{1+γ}⟩⟨p^{1+γ}s⟩‖p‖φ''(‖p‖)`.
    pub fn tail_limit(&self) -> Vec<f64> {
        let m = &self.moments;
        m.m1.iter().map(|m1| m.m0 * m1 * m.norm * self.phi_second).collect()
    }

    /// Factor `c` with `mean ψ = c ∇loss`: `γ‖p‖^{1+2γ}`, or 1 on the `γ = 0` branch.
    pub fn gradient_scale(&self) -> f64 {
        if self.on_log_branch() {
            1.0
        } else {
            self.gamma * self.moments.norm.powf(1.0 + 2.0 * self.gamma)
        }
    }
}

/// `ψ(x, θ)` for a single observation.
pub fn psi(x: f64, theta: &[f64], family: ModelFamily, phi: &PhiSpec) -> Result<Vec<f64>> {
    let model = family.model(theta)?;
    Ok(PsiFunction::new(&model, phi, &QuadConfig::default())?.eval(x))
}

/// `(1/n) Σ ψ(xᵢ, θ)` together with the gradient scale at `θ`.
pub fn mean_psi(spec: &EmpiricalLossSpec, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
    let model = spec.family.model(theta)?;
    let f = PsiFunction::new(&model, &spec.phi, &spec.quad)?;
    let mut acc = vec![0.0; f.dim()];
    for &x in &spec.data {
        for (a, v) in acc.iter_mut().zip(f.eval(x)) {
            *a += v;
        }
    }
    let n = spec.data.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok((acc, f.gradient_scale()))
}

/// Mean of the bilinear estimating function for the log-type bridge
/// generator `v(z) = log(λ1 + λ2 z)/λ2`:
/// `ψ(x) = −p^γ s (λ1 + λ2⟨p^{1+γ}⟩) + ⟨p^{1+γ}s⟩(λ1 + λ2 p^γ)`.
pub fn bridge_log_mean_psi(
    data: &[f64],
    family: ModelFamily,
    theta: &[f64],
    lambda1: f64,
    lambda2: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return param("the bridge estimating function needs gamma > 0");
    }
    let model = family.model(theta)?;
    let m = model.power_moments(gamma, &QuadConfig::default())?;
    let mut acc = vec![0.0; m.m1.len()];
    for &x in data {
        let pg = (gamma * model.log_density(x)).exp();
        for (a, (si, m1)) in acc.iter_mut().zip(model.score_unchecked(x).iter().zip(&m.m1)) {
            *a += -pg * si * (lambda1 + lambda2 * m.m0) + m1 * (lambda1 + lambda2 * pg);
        }
    }
    let n = data.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Median/MAD for the Gaussian, `1/mean` for the Exponential.
    Auto,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol_root: f64,
    pub max_iter: usize,
    pub jacobian_step: f64,
    pub max_halvings: usize,
    /// Perturbation of the restarts tried when the first run fails; 0 disables them.
    pub restart_perturbation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol_root: 1e-8, max_iter: 200, jacobian_step: 1e-6, max_halvings: 30, restart_perturbation: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub psi_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub theta_hat: Vec<f64>,
    pub iterations: usize,
    pub mean_psi_norm: f64,
    pub converged: bool,
    pub loss: f64,
    pub trace: Vec<TraceEntry>,
    /// Iterations that fell back to a gradient step.
    pub fallback_steps: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Robust starting point.
pub fn auto_init(data: &[f64], family: ModelFamily) -> Result<Vec<f64>> {
    if data.is_empty() {
        return param("dataset is empty");
    }
    match family {
        ModelFamily::Gaussian => {
            let mut xs = data.to_vec();
            xs.sort_by(f64::total_cmp);
            let med = median(&xs);
            let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let mut scale = 1.4826 * median(&dev);
            if !(scale > 0.0) {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                scale = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            }
            if !(scale > 0.0) {
                scale = 1.0;
            }
            Ok(vec![med, scale.ln()])
        }
        ModelFamily::Exponential => {
            let mean = data.iter().sum::<f64>() / data.len() as f64;
            if !(mean > 0.0) {
                return param("exponential data must have a positive mean");
            }
            Ok(vec![-mean.ln()])
        }
    }
}

fn jacobian(spec: &EmpiricalLossSpec, theta: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mut j = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[k] += h;
        dn[k] -= h;
        let (fu, _) = mean_psi(spec, &up)?;
        let (fd, _) = mean_psi(spec, &dn)?;
        for i in 0..d {
            j[(i, k)] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn step_to(theta: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    theta.iter().zip(dir).map(|(a, b)| a + t * b).collect()
}

/// Loss at a trial point; parameters that leave the model domain count as +∞.
fn trial_loss(spec: &EmpiricalLossSpec, theta: &[f64]) -> f64 {
    match empirical_loss(spec, theta) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    }
}

fn backtrack(spec: &EmpiricalLossSpec, theta: &[f64], dir: &[f64], loss: f64, opts: &SolverOptions) -> Option<(Vec<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..=opts.max_halvings {
        let cand = step_to(theta, dir, t);
        let l = trial_loss(spec, &cand);
        if l <= loss + 1e-12 {
            return Some((cand, l));
        }
        t *= 0.5;
    }
    None
}

fn newton(spec: &EmpiricalLossSpec, init: Vec<f64>, opts: &SolverOptions) -> Result<EstimationResult> {
    let mut theta = init;
    let mut loss = empirical_loss(spec, &theta)?;
    let (mut f, mut scale) = mean_psi(spec, &theta)?;
    let mut trace = vec![TraceEntry { theta: theta.clone(), loss, psi_norm: norm(&f) }];
    let mut fallback_steps = 0;
    let mut iterations = 0;
    while norm(&f) > opts.tol_root && iterations < opts.max_iter {
        iterations += 1;
        let j = jacobian(spec, &theta, opts.jacobian_step)?;
        let newton_dir = j
            .lu()
            .solve(&DVector::from_column_slice(&f))
            .map(|v| v.iter().map(|x| -x).collect::<Vec<f64>>())
            .filter(|v| v.iter().all(|x| x.is_finite()));
        let accepted = newton_dir.and_then(|dir| backtrack(spec, &theta, &dir, loss, opts)).or_else(|| {
            fallback_steps += 1;
            let grad: Vec<f64> = f.iter().map(|v| -v / scale).collect();
            backtrack(spec, &theta, &grad, loss, opts)
        });
        let Some((next, next_loss)) = accepted else { break };
        theta = next;
        loss = next_loss;
        (f, scale) = mean_psi(spec, &theta)?;
        trace.push(TraceEntry { theta: theta.clone(), loss, psi_norm: norm(&f) });
    }
    let psi_norm = norm(&f);
    Ok(EstimationResult {
        theta_hat: theta,
        iterations,
        mean_psi_norm: psi_norm,
        converged: psi_norm <= opts.tol_root,
        loss,
        trace,
        fallback_steps,
    })
}

fn better(a: &EstimationResult, b: &EstimationResult) -> bool {
    match (a.converged, b.converged) {
        (true, false) => true,
        (false, true) => false,
        _ => a.loss < b.loss,
    }
}

/// Solves `(1/n) Σ ψ(xᵢ, θ) = 0` by damped Newton with a loss-decrease guard.
pub fn solve(spec: &EmpiricalLossSpec, init: &Init, opts: &SolverOptions) -> Result<EstimationResult> {
    spec.validate()?;
    let start = match init {
        Init::Auto => auto_init(&spec.data, spec.family)?,
        Init::Given(t) => {
            if t.len() != spec.family.dim() {
                return param(format!("init has {} components, model needs {}", t.len(), spec.family.dim()));
            }
            t.clone()
        }
    };
    let mut best = newton(spec, start.clone(), opts)?;
    if best.converged || opts.restart_perturbation == 0.0 {
        return Ok(best);
    }
    let d = start.len();
    let e = opts.restart_perturbation;
    let offsets: [Vec<f64>; 3] = [
        vec![e; d],
        vec![-e; d],
        (0..d).map(|k| if d == 1 { 2.0 * e } else if k % 2 == 0 { e } else { -e }).collect(),
    ];
    for off in offsets {
        let cand = step_to(&start, &off, 1.0);
        if let Ok(r) = newton(spec, cand, opts) {
            if better(&r, &best) {
                best = r;
            }
        }
    }
    Ok(best)
}
