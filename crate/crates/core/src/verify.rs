//! Built-in identity suite: every reduction between the families, checked
//! numerically on seeded random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::{DensityModel, ModelFamily};
use crate::divergence::{
    cross_entropy, divergence, kl, log_bdpce_terms, xi_transform, CrossTerms, Family, HSpec, VSpec,
};
use crate::error::Result;
use crate::estimation::{bridge_log_mean_psi, empirical_loss, mean_psi, solve, EmpiricalLossSpec, Init, SolverOptions};
use crate::phi::{PhiKind, PhiSpec};
use crate::quadrature::QuadConfig;

/// `count` Gaussian pairs `(q, p)` with `μ ~ U(−1, 1)`, `σ ~ U(0.6, 1.8)`.
pub fn random_gaussian_pairs(count: usize, seed: u64) -> Vec<(DensityModel, DensityModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        DensityModel::gaussian(rng.gen_range(-1.0..1.0), rng.gen_range(0.6..1.8)).expect("valid parameters")
    };
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

/// The five generators used throughout the robustness checks.
pub fn standard_phi_kinds() -> Vec<PhiKind> {
    vec![
        PhiKind::Identity,
        PhiKind::DensityPower,
        PhiKind::PowerKappa { kappa: 2.0 },
        PhiKind::Bridge { lambda1: 0.5, lambda2: 0.5 },
        PhiKind::Mixture { t: 0.5 },
    ]
}

/// Every family at representative parameters.
pub fn all_families() -> Vec<Family> {
    let mut v: Vec<Family> = standard_phi_kinds().into_iter().map(Family::NbDpd).collect();
    v.extend([
        Family::Dpd,
        Family::Psd,
        Family::LogGamma,
        Family::Bhd { kappa: 2.0 },
        Family::BdpdPs { lambda1: 0.3, lambda2: 0.7 },
        Family::BdpdLog { lambda1: 0.4, lambda2: 0.6 },
        Family::Combined { lambda1: 0.3, lambda2: 0.7, kappa: 1.7 },
        Family::Mixture { t: 0.5 },
        Family::Fdpd(VSpec::Linear),
        Family::Fdpd(VSpec::Log),
        Family::Fdpd(VSpec::LnZeta { zeta: 0.5 }),
        Family::Fdpd(VSpec::BridgeLog { lambda1: 0.4, lambda2: 0.6 }),
        Family::Hd(HSpec::DpLinear),
        Family::Hd(HSpec::PowerLower),
        Family::Hd(HSpec::BregmanHolder { kappa: 2.0 }),
    ]);
    v
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub pairs: usize,
    pub seed: u64,
    /// Added to `λ2` on the left-hand side of the bridge identities.
    pub lambda2_perturbation: f64,
    pub quad: QuadConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { pairs: 20, seed: 2024, lambda2_perturbation: 0.0, quad: QuadConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub name: String,
    /// Largest discrepancy seen (relative unless the row says otherwise).
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

struct Row {
    name: String,
    tol: f64,
    worst: f64,
    passed: bool,
}

impl Row {
    fn new(name: &str, tol: f64) -> Self {
        Row { name: name.to_string(), tol, worst: 0.0, passed: true }
    }

    fn rel(&mut self, a: f64, b: f64) {
        let diff = (a - b).abs();
        let scale = a.abs().max(b.abs());
        self.worst = self.worst.max(if scale > 0.0 { diff / scale } else { diff });
        if !(diff <= self.tol * scale + 1e-14) {
            self.passed = false;
        }
    }

    fn abs(&mut self, err: f64) {
        self.worst = self.worst.max(err);
        if !(err <= self.tol) {
            self.passed = false;
        }
    }

    fn flag(&mut self, ok: bool) {
        if !ok {
            self.passed = false;
            self.worst = self.worst.max(1.0);
        }
    }

    fn done(self) -> VerifyRow {
        VerifyRow { name: self.name, worst: self.worst, tolerance: self.tol, passed: self.passed }
    }
}

/// Three-level Richardson extrapolation of `h ↦ f(h)` to `h = 0`.
pub fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let (a, b, c) = (f(h), f(h / 2.0), f(h / 4.0));
    (4.0 * (2.0 * c - b) - (2.0 * b - a)) / 3.0
}

/// Runs the divergence identities; see [`run_verification`].
pub fn verify_divergences(opts: &VerifyOptions) -> Result<Vec<VerifyRow>> {
    let cfg = &opts.quad;
    let pairs = random_gaussian_pairs(opts.pairs, opts.seed);
    let dl = opts.lambda2_perturbation;
    let gammas = [0.25, 0.5, 1.0];
    let ce = |f: &Family, q: &DensityModel, p: &DensityModel, g: f64| cross_entropy(q, p, f, g, cfg);
    let dv = |f: &Family, q: &DensityModel, p: &DensityModel, g: f64| divergence(q, p, f, g, cfg);

    let names = [
        "bhce(kappa=1+gamma) = dpce",
        "bhce(kappa=1) = psce",
        "psbdpce(lambda1=0) = lambda2^(-gamma/(1+gamma)) psce",
        "psbdpce(lambda2->0) = lambda1^(-gamma/(1+gamma))/(1+gamma) dpce",
        "combined(lambda1=0) = lambda2^(kappa/(1+gamma)-1) bhce",
        "combined(lambda2->0) = kappa lambda1^(kappa/(1+gamma)-1)/(1+gamma) dpce",
        "combined(kappa=1+gamma) = dpce",
        "combined(kappa=1) = psbdpce",
        "mixture = t dpce + (1-t) psce",
        "log_bdpce(lambda1=0) = log_gamma_ce/lambda2",
        "log_bdpce(lambda2->0) = dpce/lambda1",
        "fdpd(bridge_log) = log-type bdpd",
        "fdpd(log) = log-gamma divergence",
        "hce(power_lower) = -A^(1+gamma)/M^gamma/gamma + 1/gamma",
        "nb_dpce(density_power) = dpce",
        "nb_dpce(identity) = psce",
        "nb_dpce(power_kappa) = bhce",
        "nb_dpd(bridge) = ps-type bdpd",
        "nb_dpd(combined) = combined divergence",
        "fdpce(linear) = dpce",
        "hce(dp_linear) = dpce",
    ];
    let mut rows: Vec<Row> = names.iter().map(|n| Row::new(n, 1e-8)).collect();
    let mut zeta_row = Row::new("fdpce(ln_zeta, zeta=1-1e-8) ~ dpce (absolute)", 1e-6);
    let mut xi_row = Row::new("log_bdpce = xi(psbdpce) (absolute)", 1e-10);

    let (l1, l2, kappa, t) = (0.6, 2.0, 1.8, 0.35);
    for (q, p) in &pairs {
        for &g in &gammas {
            let dp = ce(&Family::Dpd, q, p, g)?;
            let ps = ce(&Family::Psd, q, p, g)?;
            let lg = ce(&Family::LogGamma, q, p, g)?;
            let bh = ce(&Family::Bhd { kappa }, q, p, g)?;
            let terms = CrossTerms::compute(q, p, g, false, cfg)?;
            let mut i = 0;
            let mut check = |a: f64, b: f64| {
                rows[i].rel(a, b);
                i += 1;
            };
            check(ce(&Family::Bhd { kappa: 1.0 + g }, q, p, g)?, dp);
            check(ce(&Family::Bhd { kappa: 1.0 }, q, p, g)?, ps);
            check(ce(&Family::BdpdPs { lambda1: 0.0, lambda2: l2 + dl }, q, p, g)?, l2.powf(-g / (1.0 + g)) * ps);
            let lim = richardson(|h| terms_ce(&Family::BdpdPs { lambda1: l1, lambda2: h + dl }, &terms), 1e-4);
            check(lim, l1.powf(-g / (1.0 + g)) / (1.0 + g) * dp);
            check(
                ce(&Family::Combined { lambda1: 0.0, lambda2: l2 + dl, kappa }, q, p, g)?,
                l2.powf(kappa / (1.0 + g) - 1.0) * bh,
            );
            let lim = richardson(|h| terms_ce(&Family::Combined { lambda1: l1, lambda2: h + dl, kappa }, &terms), 1e-4);
            check(lim, kappa * l1.powf(kappa / (1.0 + g) - 1.0) / (1.0 + g) * dp);
            check(ce(&Family::Combined { lambda1: 0.3, lambda2: 0.7 + dl, kappa: 1.0 + g }, q, p, g)?, dp);
            check(
                ce(&Family::Combined { lambda1: 0.3, lambda2: 0.7 + dl, kappa: 1.0 }, q, p, g)?,
                ce(&Family::BdpdPs { lambda1: 0.3, lambda2: 0.7 }, q, p, g)?,
            );
            check(ce(&Family::NbDpd(PhiKind::Mixture { t }), q, p, g)?, t * dp + (1.0 - t) * ps);
            check(ce(&Family::BdpdLog { lambda1: 0.0, lambda2: l2 + dl }, q, p, g)?, lg / l2);
            let lim = richardson(|h| terms_ce(&Family::BdpdLog { lambda1: l1, lambda2: h + dl }, &terms), 1e-4);
            check(lim, dp / l1);
            check(
                dv(&Family::Fdpd(VSpec::BridgeLog { lambda1: 0.4, lambda2: 0.6 + dl }), q, p, g)?,
                dv(&Family::BdpdLog { lambda1: 0.4, lambda2: 0.6 }, q, p, g)?,
            );
            check(dv(&Family::Fdpd(VSpec::Log), q, p, g)?, dv(&Family::LogGamma, q, p, g)?);
            check(
                ce(&Family::Hd(HSpec::PowerLower), q, p, g)?,
                -terms.qp.powf(1.0 + g) / (g * terms.p_power.powf(g)) + 1.0 / g,
            );
            check(ce(&Family::NbDpd(PhiKind::DensityPower), q, p, g)?, dp);
            check(ce(&Family::NbDpd(PhiKind::Identity), q, p, g)?, ps);
            check(ce(&Family::NbDpd(PhiKind::PowerKappa { kappa }), q, p, g)?, bh);
            check(
                dv(&Family::NbDpd(PhiKind::Bridge { lambda1: 0.3, lambda2: 0.7 + dl }), q, p, g)?,
                dv(&Family::BdpdPs { lambda1: 0.3, lambda2: 0.7 }, q, p, g)?,
            );
            check(
                dv(&Family::NbDpd(PhiKind::CombinedBridgePower { lambda1: 0.3, lambda2: 0.7 + dl, kappa }), q, p, g)?,
                dv(&Family::Combined { lambda1: 0.3, lambda2: 0.7, kappa }, q, p, g)?,
            );
            check(ce(&Family::Fdpd(VSpec::Linear), q, p, g)?, dp);
            check(ce(&Family::Hd(HSpec::DpLinear), q, p, g)?, dp);

            zeta_row.abs((ce(&Family::Fdpd(VSpec::LnZeta { zeta: 1.0 - 1e-8 }), q, p, g)? - dp).abs());
        }
        let (xl1, xl2, g) = (0.4, 0.6, 0.5);
        let z = ce(&Family::BdpdPs { lambda1: xl1, lambda2: xl2 + dl }, q, p, g)?;
        let lhs = ce(&Family::BdpdLog { lambda1: xl1, lambda2: xl2 }, q, p, g)?;
        xi_row.abs((lhs - xi_transform(z, xl1, xl2, g)?).abs());
    }

    let mut out: Vec<VerifyRow> = rows.into_iter().map(Row::done).collect();
    out.push(zeta_row.done());
    out.push(xi_row.done());

    let mut argmin_row = Row::new("argmin agreement: psce, log_gamma_ce, psbdpce(lambda1=0), log/ps bdpce", 0.0);
    let q = DensityModel::gaussian(0.3, 1.0)?;
    let grid: Vec<DensityModel> =
        (0..201).map(|k| DensityModel::gaussian(-1.7 + 0.02 * k as f64, 1.0)).collect::<Result<_>>()?;
    let fams = [
        Family::Psd,
        Family::LogGamma,
        Family::BdpdPs { lambda1: 0.0, lambda2: 2.0 + dl },
        Family::BdpdPs { lambda1: 0.4, lambda2: 0.6 },
        Family::BdpdLog { lambda1: 0.4, lambda2: 0.6 },
    ];
    let mut idx = Vec::new();
    for f in &fams {
        let mut best = (0, f64::INFINITY);
        for (k, p) in grid.iter().enumerate() {
            let v = ce(f, &q, p, 0.5)?;
            if v < best.1 {
                best = (k, v);
            }
        }
        idx.push(best.0);
    }
    argmin_row.flag(idx.iter().all(|&k| k == idx[0]));
    out.push(argmin_row.done());

    let mut cont = Row::new("|nb_dpd(gamma=1e-6) - phi'_0(1) KL| (absolute)", 1e-4);
    for (q, p) in pairs.iter().take(10) {
        let k = kl(q, p, cfg)?;
        for kind in [PhiKind::Identity, PhiKind::DensityPower] {
            cont.abs((dv(&Family::NbDpd(kind), q, p, 1e-6)? - k).abs());
        }
    }
    out.push(cont.done());

    let mut nonneg = Row::new("divergence >= -1e-10 and D(p,p) = 0 (absolute)", 1e-10);
    for (q, p) in &pairs {
        for f in all_families() {
            for g in [0.1, 0.5, 1.0] {
                nonneg.abs((-dv(&f, q, p, g)?).max(0.0));
                nonneg.abs(dv(&f, p, p, g)?.abs());
            }
        }
    }
    out.push(nonneg.done());
    Ok(out)
}

fn terms_ce(f: &Family, t: &CrossTerms) -> f64 {
    f.cross_entropy(t).unwrap_or(f64::NAN)
}

/// Runs the estimation identities; see [`run_verification`].
pub fn verify_estimation(opts: &VerifyOptions) -> Result<Vec<VerifyRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let mut grad = Row::new("mean psi = gamma ||p||^(1+2gamma) grad loss", 1e-5);
    let mut monotone = Row::new("loss nonincreasing along solver trace", 1e-12);
    for case in 0..opts.pairs {
        let truth = DensityModel::gaussian(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0))?;
        let data = truth.sample(200, opts.seed.wrapping_add(case as u64))?;
        let theta = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)];
        for kind in standard_phi_kinds() {
            for g in [0.1, 0.5, 1.0] {
                let spec = EmpiricalLossSpec::new(data.clone(), ModelFamily::Gaussian, PhiSpec::new(kind.clone(), g)?)?;
                let (mp, scale) = mean_psi(&spec, &theta)?;
                let fd = fd_gradient(|t| empirical_loss(&spec, t), &theta)?;
                let num: f64 = mp.iter().zip(&fd).map(|(a, b)| (a / scale - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
                grad.abs(num / den);
            }
        }
        if case < 5 {
            let kind = standard_phi_kinds()[case % 5].clone();
            let spec = EmpiricalLossSpec::new(data.clone(), ModelFamily::Gaussian, PhiSpec::new(kind, 0.5)?)?;
            let r = solve(&spec, &Init::Given(vec![theta[0] + 1.0, theta[1] - 0.5]), &SolverOptions::default())?;
            for w in r.trace.windows(2) {
                monotone.abs((w[1].loss - w[0].loss).max(0.0));
            }
            monotone.flag(r.converged);
        }
    }

    let mut bilinear = Row::new("bridge-log bilinear estimating equation = scaled loss gradient", 1e-6);
    let (l1, l2) = (0.4, 0.6);
    for (k, g) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let data = DensityModel::gaussian(0.3, 1.2)?.sample(400, opts.seed.wrapping_add(100 + k as u64))?;
        let theta = [0.1, 0.3];
        let mean_pg = |t: &[f64]| -> Result<(f64, f64)> {
            let m = ModelFamily::Gaussian.model(t)?;
            let a = data.iter().map(|&x| (g * m.log_density(x)).exp()).sum::<f64>() / data.len() as f64;
            Ok((a, m.power_moments(g, &opts.quad)?.m0))
        };
        let fd = fd_gradient(|t| mean_pg(t).map(|(a, m0)| log_bdpce_terms(a, m0, g, l1, l2)), &theta)?;
        let (a, m0) = mean_pg(&theta)?;
        let factor = (l1 + l2 * a) * (l1 + l2 * m0) / (1.0 + g);
        let got = bridge_log_mean_psi(&data, ModelFamily::Gaussian, &theta, l1, l2, g)?;
        for (x, y) in got.iter().zip(&fd) {
            bilinear.rel(*x, y * factor);
        }
    }

    let mut equiv = Row::new("identity-phi solve = log-gamma grid argmin (grid steps)", 1.0);
    let g = 0.5;
    let data = DensityModel::gaussian(0.7, 1.0)?.sample(2_000, opts.seed.wrapping_add(7))?;
    let spec = EmpiricalLossSpec::new(data.clone(), ModelFamily::Gaussian, PhiSpec::identity(g))?;
    let r = solve(&spec, &Init::Auto, &SolverOptions::default())?;
    let sigma = r.theta_hat[1].exp();
    let step = 1e-3;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..2001 {
        let mu = -0.3 + step * k as f64;
        let m = DensityModel::gaussian(mu, sigma)?;
        let a = data.iter().map(|&x| (g * m.log_density(x)).exp()).sum::<f64>() / data.len() as f64;
        let v = -(1.0 + g) / g * a.ln() + m.power_moments(g, &opts.quad)?.m0.ln();
        if v < best.1 {
            best = (mu, v);
        }
    }
    equiv.abs((best.0 - r.theta_hat[0]).abs() / step);
    equiv.flag(r.converged);

    Ok(vec![grad.done(), monotone.done(), bilinear.done(), equiv.done()])
}

fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, theta: &[f64]) -> Result<Vec<f64>> {
    let h = 1e-5;
    (0..theta.len())
        .map(|k| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += h;
            dn[k] -= h;
            Ok((f(&up)? - f(&dn)?) / (2.0 * h))
        })
        .collect()
}

/// All identities; the suite passes iff every row passes.
pub fn run_verification(opts: &VerifyOptions) -> Result<Vec<VerifyRow>> {
    let mut rows = verify_divergences(opts)?;
    rows.extend(verify_estimation(opts)?);
    Ok(rows)
}
