//! Parametric densities on the real line, their scores, and the powered
//! integrals `⟨p^{1+γ}⟩`, `⟨p^{1+γ} s_θ⟩` every divergence consumes.
//!
//! Scale parameters live in log space: a Gaussian is parameterized by
//! `θ = (μ, log σ)` and an exponential by `θ = (log rate)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadConfig};

/// Half-width of the Gaussian truncation window, in standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 12.0;
/// Upper truncation of the exponential, in units of `1/rate`.
pub const EXPONENTIAL_TRUNCATION: f64 = 50.0;

const GRID_NORM_TOL: f64 = 1e-8;

/// Piecewise-linear density on a grid, normalized so the trapezoid rule
/// (exact for the interpolant) integrates to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    xs: Vec<f64>,
    ys: Vec<f64>,
    cumulative: Vec<f64>,
}

impl GridDensity {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return param("grid density needs at least two points and matching value count");
        }
        if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
            return param("grid points must be finite and strictly increasing");
        }
        if ys.iter().any(|y| !(*y >= 0.0) || !y.is_finite()) {
            return param("grid density values must be finite and nonnegative");
        }
        let area = trapezoid(&xs, &ys);
        if !(area > 0.0) {
            return param("grid density has zero mass");
        }
        let ys: Vec<f64> = ys.into_iter().map(|y| y / area).collect();
        let mut cumulative = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 1..xs.len() {
            acc += 0.5 * (ys[i - 1] + ys[i]) * (xs[i] - xs[i - 1]);
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > GRID_NORM_TOL {
            return Err(Error::Domain(format!("grid density normalization off by {:e}", acc - 1.0)));
        }
        Ok(GridDensity { xs, ys, cumulative })
    }

    /// Tabulates `f` on `n` equally spaced points of `[lo, hi]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return param("tabulation needs n >= 2 and lo < hi");
        }
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        GridDensity::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let i = match self.xs.partition_point(|&g| g <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let t = (x - x0) / (x1 - x0);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        let n = self.xs.len();
        let total = self.cumulative[n - 1];
        let r = u * total;
        let i = self.cumulative.partition_point(|&c| c <= r).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let h = x1 - x0;
        let rem = r - self.cumulative[i];
        let slope = (y1 - y0) / h;
        let t = if slope.abs() < 1e-14 * (y0 + y1).max(1e-300) {
            if y0 > 0.0 { rem / y0 } else { 0.0 }
        } else {
            let disc = (y0 * y0 + 2.0 * slope * rem).max(0.0);
            (disc.sqrt() - y0) / slope
        };
        (x0 + t.clamp(0.0, h)).min(x1)
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityModel {
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Grid(GridDensity),
}

/// Families whose parameters can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gaussian,
    Exponential,
}

impl ModelFamily {
    pub fn dim(self) -> usize {
        match self {
            ModelFamily::Gaussian => 2,
            ModelFamily::Exponential => 1,
        }
    }

    /// Builds the model at `θ` in log-scale coordinates.
    pub fn model(self, theta: &[f64]) -> Result<DensityModel> {
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) {
            return param(format!("{self:?} expects {} finite parameters, got {theta:?}", self.dim()));
        }
        match self {
            ModelFamily::Gaussian => DensityModel::gaussian(theta[0], theta[1].exp()),
            ModelFamily::Exponential => DensityModel::exponential(theta[0].exp()),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ModelFamily::Gaussian),
            "exponential" => Ok(ModelFamily::Exponential),
            other => Err(Error::Parse(format!("unknown model family '{other}'"))),
        }
    }

    pub fn coordinate_names(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Gaussian => &["mu", "log_sigma"],
            ModelFamily::Exponential => &["log_rate"],
        }
    }
}

/// `⟨p^{1+γ}⟩`, `⟨p^{1+γ} s_θ⟩` and `‖p‖_{1+γ}` at a fixed `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMoments {
    pub gamma: f64,
    pub m0: f64,
    pub m1: Vec<f64>,
    pub norm: f64,
    /// Quadrature error estimate; zero for closed forms.
    pub error: f64,
}

impl PowerMoments {
    fn new(gamma: f64, m0: f64, m1: Vec<f64>, error: f64) -> Self {
        PowerMoments { gamma, m0, m1, norm: m0.powf(1.0 / (1.0 + gamma)), error }
    }
}

impl DensityModel {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return param(format!("gaussian needs finite mu and sigma > 0 (got {mu}, {sigma})"));
        }
        Ok(DensityModel::Gaussian { mu, sigma })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return param(format!("exponential rate must be > 0 (got {rate})"));
        }
        Ok(DensityModel::Exponential { rate })
    }

    pub fn family(&self) -> Option<ModelFamily> {
        match self {
            DensityModel::Gaussian { .. } => Some(ModelFamily::Gaussian),
            DensityModel::Exponential { .. } => Some(ModelFamily::Exponential),
            DensityModel::Grid(_) => None,
        }
    }

    /// Free parameters `θ` (empty for grid densities).
    pub fn params(&self) -> Vec<f64> {
        match self {
            DensityModel::Gaussian { mu, sigma } => vec![*mu, sigma.ln()],
            DensityModel::Exponential { rate } => vec![rate.ln()],
            DensityModel::Grid(_) => Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.family().map_or(0, ModelFamily::dim)
    }

    pub fn in_support(&self, x: f64) -> bool {
        match self {
            DensityModel::Gaussian { .. } => x.is_finite(),
            DensityModel::Exponential { .. } => x >= 0.0 && x.is_finite(),
            DensityModel::Grid(g) => x >= g.xs[0] && x <= *g.xs.last().unwrap(),
        }
    }

    fn check_support(&self, x: f64) -> Result<()> {
        if self.in_support(x) {
            Ok(())
        } else {
            domain(format!("x = {x} is outside the support of {}", self.describe()))
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(self.density(x))
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        self.check_support(x)?;
        Ok(self.log_density(x))
    }

    /// `∂ log p_θ(x) / ∂θ` in log-scale coordinates.
    pub fn score(&self, x: f64) -> Result<Vec<f64>> {
        self.check_support(x)?;
        Ok(self.score_unchecked(x))
    }

    /// Density extended by zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            DensityModel::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            DensityModel::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            DensityModel::Grid(g) => g.eval(x),
        }
    }

    /// Log-density, `-∞` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            DensityModel::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
            }
            DensityModel::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            DensityModel::Grid(g) => g.eval(x).ln(),
        }
    }

    pub(crate) fn score_unchecked(&self, x: f64) -> Vec<f64> {
        match self {
            DensityModel::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                vec![z / sigma, z * z - 1.0]
            }
            DensityModel::Exponential { rate } => vec![1.0 - rate * x],
            DensityModel::Grid(_) => Vec::new(),
        }
    }

    /// Finite window carrying all but a negligible fraction of `p^{1+γ}`.
    pub fn truncation(&self) -> (f64, f64) {
        match self {
            DensityModel::Gaussian { mu, sigma } => {
                (mu - GAUSSIAN_TRUNCATION * sigma, mu + GAUSSIAN_TRUNCATION * sigma)
            }
            DensityModel::Exponential { rate } => (0.0, EXPONENTIAL_TRUNCATION / rate),
            DensityModel::Grid(g) => (g.xs[0], *g.xs.last().unwrap()),
        }
    }

    /// Natural panel boundaries for quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DensityModel::Gaussian { mu, sigma } => [-8.0, -5.0, -3.0, -1.5, 0.0, 1.5, 3.0, 5.0, 8.0]
                .iter()
                .map(|k| mu + k * sigma)
                .collect(),
            DensityModel::Exponential { rate } => {
                [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0].iter().map(|k| k / rate).collect()
            }
            DensityModel::Grid(g) => g.xs.clone(),
        }
    }

    /// Powered moments, closed form for the analytic families.
    pub fn power_moments(&self, gamma: f64, cfg: &QuadConfig) -> Result<PowerMoments> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return param(format!("gamma must be finite and >= 0 (got {gamma})"));
        }
        match self {
            DensityModel::Gaussian { sigma, .. } => {
                let m0 = (2.0 * PI * sigma * sigma).powf(-gamma / 2.0) / (1.0 + gamma).sqrt();
                Ok(PowerMoments::new(gamma, m0, vec![0.0, -gamma * m0 / (1.0 + gamma)], 0.0))
            }
            DensityModel::Exponential { rate } => {
                let m0 = rate.powf(gamma) / (1.0 + gamma);
                Ok(PowerMoments::new(gamma, m0, vec![gamma * m0 / (1.0 + gamma)], 0.0))
            }
            DensityModel::Grid(_) => self.power_moments_quadrature(gamma, cfg),
        }
    }

    /// Powered moments by adaptive quadrature over [`Self::truncation`].
    pub fn power_moments_quadrature(&self, gamma: f64, cfg: &QuadConfig) -> Result<PowerMoments> {
        let (lo, hi) = self.truncation();
        let cfg = cfg.clone().with_interval(lo, hi)?;
        let breaks = self.breakpoints();
        let (m0, mut err) =
            integrate_with_breaks(|x| self.density(x).powf(1.0 + gamma), &cfg, &breaks).into_result()?;
        let mut m1 = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let (v, e) = integrate_with_breaks(
                |x| {
                    let p = self.density(x);
                    if p == 0.0 {
                        0.0
                    } else {
                        p.powf(1.0 + gamma) * self.score_unchecked(x)[j]
                    }
                },
                &cfg,
                &breaks,
            )
            .into_result()?;
            m1.push(v);
            err = err.max(e);
        }
        if !(m0 > 0.0) {
            return domain("powered moment <p^{1+gamma}> is not positive");
        }
        Ok(PowerMoments::new(gamma, m0, m1, err))
    }

    pub fn describe(&self) -> String {
        match self {
            DensityModel::Gaussian { mu, sigma } => format!("gaussian(mu={mu}, sigma={sigma})"),
            DensityModel::Exponential { rate } => format!("exponential(rate={rate})"),
            DensityModel::Grid(g) => format!("grid({} points)", g.xs.len()),
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DensityModel::Gaussian { mu, sigma } => Normal::new(*mu, *sigma).unwrap().sample(rng),
            DensityModel::Exponential { rate } => Exp::new(*rate).unwrap().sample(rng),
            DensityModel::Grid(g) => g.inverse_cdf(rng.gen::<f64>()),
        }
    }

    /// `n` i.i.d. draws; the same seed always yields the same data.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return param("sample size must be at least 1");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.draw(&mut rng)).collect())
    }

    /// Draws from `(1 − ε) p + ε c`. Model draws consume the same stream as
    /// [`Self::sample`], so `ε = 0` reproduces it exactly.
    pub fn sample_contaminated(
        &self,
        contaminant: &DensityModel,
        epsilon: f64,
        n: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&epsilon) {
            return param(format!("contamination fraction must lie in [0, 1) (got {epsilon})"));
        }
        if n == 0 {
            return param("sample size must be at least 1");
        }
        let mut main = ChaCha8Rng::seed_from_u64(seed);
        let mut aux = ChaCha8Rng::seed_from_u64(seed);
        aux.set_stream(1);
        Ok((0..n)
            .map(|_| {
                if aux.gen::<f64>() < epsilon {
                    contaminant.draw(&mut aux)
                } else {
                    self.draw(&mut main)
                }
            })
            .collect())
    }

    pub fn to_record(&self) -> ModelRecord {
        match self {
            DensityModel::Gaussian { mu, sigma } => ModelRecord::Gaussian { mu: *mu, sigma: *sigma },
            DensityModel::Exponential { rate } => ModelRecord::Exponential { rate: *rate },
            DensityModel::Grid(g) => ModelRecord::Grid { x: g.xs.clone(), density: g.ys.clone() },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ModelRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model spec: {e}")))?;
        record.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("model records always serialize")
    }
}

/// Serialized form, e.g. `{"family": "gaussian", "mu": 0.0, "sigma": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRecord {
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Grid { x: Vec<f64>, density: Vec<f64> },
}

impl ModelRecord {
    pub fn into_model(self) -> Result<DensityModel> {
        match self {
            ModelRecord::Gaussian { mu, sigma } => DensityModel::gaussian(mu, sigma),
            ModelRecord::Exponential { rate } => DensityModel::exponential(rate),
            ModelRecord::Grid { x, density } => Ok(DensityModel::Grid(GridDensity::new(x, density)?)),
        }
    }
}
