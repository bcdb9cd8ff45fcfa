//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line even when the run succeeds.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nbdpd_core::divergence::{divergence, kl, log_bdpce, nb_dpd, psbdpce, xi_transform};
use nbdpd_core::estimation::{empirical_loss, mean_psi, solve, EmpiricalLossSpec, Init, PsiFunction, SolverOptions};
use nbdpd_core::robustness::{
    contamination_experiment, default_grid, influence_curve, Classification, ContaminationConfig, EstimatorSpec,
};
use nbdpd_core::verify::{all_families, random_gaussian_pairs, run_verification, standard_phi_kinds, VerifyOptions};
use nbdpd_core::{integrate, DensityModel, ModelFamily, PhiKind, PhiSpec, QuadConfig, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1729;

type Criterion = (&'static str, fn() -> Result<Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { passed, detail: detail.into() })
}

fn quad() -> QuadConfig {
    QuadConfig::default()
}

fn axioms() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = quad();
    let (mut worst_neg, mut worst_self) = (0.0f64, 0.0f64);
    let families = all_families();
    for (q, p) in random_gaussian_pairs(100, SEED) {
        for f in &families {
            for g in [0.1, 0.5, 1.0] {
                worst_neg = worst_neg.max(-divergence(&q, &p, f, g, &cfg)?);
                worst_self = worst_self.max(divergence(&p, &p, f, g, &cfg)?.abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_neg <= 1e-10 && worst_self <= 1e-12 && elapsed <= Duration::from_secs(300),
        format!(
            "{} families, min D = {:.3e}, max |D(p,p)| = {:.3e}, {:.1}s",
            families.len(),
            -worst_neg,
            worst_self,
            elapsed.as_secs_f64()
        ),
    )
}

fn shannon_limit() -> Result<Outcome> {
    let cfg = quad();
    let mut ok = true;
    let (mut worst_ratio, mut worst_last) = (f64::INFINITY, 0.0f64);
    for (q, p) in random_gaussian_pairs(10, SEED + 1) {
        let k = kl(&q, &p, &cfg)?;
        for kind in [PhiKind::Identity, PhiKind::DensityPower] {
            let factor = PhiSpec::new(kind.clone(), 0.5)?.deriv_at_one_gamma_zero();
            let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&g| Ok((nb_dpd(&q, &p, &kind, g, &cfg)? - factor * k).abs()))
                .collect::<Result<_>>()?;
            for w in errs.windows(2) {
                worst_ratio = worst_ratio.min(w[0] / w[1]);
                ok &= w[0] >= 5.0 * w[1];
            }
            worst_last = worst_last.max(errs[2]);
            ok &= errs[2] <= 1e-4;
        }
    }
    outcome(ok, format!("smallest decade ratio {worst_ratio:.2}, worst error at 1e-4 = {worst_last:.3e}"))
}

fn reductions() -> Result<Outcome> {
    let rows = run_verification(&VerifyOptions { pairs: 20, seed: SEED + 2, ..VerifyOptions::default() })?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let status = Command::new(env!("CARGO_BIN_EXE_nbdpd")).arg("verify").output().expect("binary runs").status;
    outcome(
        failed.is_empty() && status.success(),
        format!("{} checks, failed {:?}, nbdpd verify exit {:?}", rows.len(), failed, status.code()),
    )
}

fn xi_equivalence() -> Result<Outcome> {
    let cfg = quad();
    let (l1, l2) = (0.4, 0.6);
    let mut worst = 0.0f64;
    for (q, p) in random_gaussian_pairs(20, SEED + 3) {
        for g in [0.1, 0.5, 1.0] {
            let z = psbdpce(&q, &p, l1, l2, g, &cfg)?;
            worst = worst.max((log_bdpce(&q, &p, l1, l2, g, &cfg)? - xi_transform(z, l1, l2, g)?).abs());
        }
    }
    let q = DensityModel::gaussian(0.25, 1.1)?;
    let g = 0.5;
    let mut best_ps = (0, f64::INFINITY);
    let mut best_log = (0, f64::INFINITY);
    for k in 0..201 {
        let p = DensityModel::gaussian(-1.75 + 0.02 * k as f64, 1.1)?;
        let a = psbdpce(&q, &p, l1, l2, g, &cfg)?;
        let b = log_bdpce(&q, &p, l1, l2, g, &cfg)?;
        if a < best_ps.1 {
            best_ps = (k, a);
        }
        if b < best_log.1 {
            best_log = (k, b);
        }
    }
    outcome(
        worst <= 1e-10 && best_ps.0 == best_log.0,
        format!("max pointwise gap {worst:.3e}, argmin index {} vs {}", best_ps.0, best_log.0),
    )
}

fn fd_gradient(spec: &EmpiricalLossSpec, theta: &[f64]) -> Result<Vec<f64>> {
    let h = 1e-5;
    (0..theta.len())
        .map(|k| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[k] += h;
            dn[k] -= h;
            Ok((empirical_loss(spec, &up)? - empirical_loss(spec, &dn)?) / (2.0 * h))
        })
        .collect()
}

fn psi_gradient() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let truth = DensityModel::gaussian(rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0))?;
        let data = truth.sample(200, SEED + 100 + case)?;
        let theta = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)];
        let g = [0.1, 0.5, 1.0][case as usize % 3];
        for kind in standard_phi_kinds() {
            let spec = EmpiricalLossSpec::new(data.clone(), ModelFamily::Gaussian, PhiSpec::new(kind, g)?)?;
            let (mp, scale) = mean_psi(&spec, &theta)?;
            let fd = fd_gradient(&spec, &theta)?;
            let num = mp.iter().zip(&fd).map(|(a, b)| (a - scale * b).powi(2)).sum::<f64>().sqrt();
            let den = fd.iter().map(|b| (scale * b).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
    }
    outcome(worst <= 1e-5, format!("worst relative gap {worst:.3e} over 100 cases"))
}

fn mle_recovery() -> Result<Outcome> {
    let data = DensityModel::gaussian(1.5, 2.5)?.sample(10_000, SEED + 5)?;
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let log_sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().ln();
    let spec = EmpiricalLossSpec::new(data, ModelFamily::Gaussian, PhiSpec::identity(1e-9))?;
    let r = solve(&spec, &Init::Auto, &SolverOptions::default())?;
    let (e0, e1) = ((r.theta_hat[0] - mean).abs(), (r.theta_hat[1] - log_sd).abs());
    outcome(r.converged && e0 <= 1e-4 && e1 <= 1e-4, format!("|d mu| = {e0:.2e}, |d log sigma| = {e1:.2e}"))
}

fn redescending() -> Result<Outcome> {
    let cfg = quad();
    let (mu, sigma, g) = (0.3, 1.4, 0.5);
    let model = DensityModel::gaussian(mu, sigma)?;
    let grid = default_grid(&model)?;
    let x_far = mu + 12.0 * sigma;
    let mut ok = true;
    let mut notes = Vec::new();
    for kind in standard_phi_kinds() {
        let phi = PhiSpec::new(kind.clone(), g)?;
        let curve = influence_curve(&model, &phi, &grid, &cfg)?;
        let want = if matches!(kind, PhiKind::Identity) {
            Classification::Redescending
        } else {
            Classification::BoundedNonzero
        };
        ok &= curve.classification[1] == want;

        let m = model.power_moments(g, &cfg)?;
        let limit = m.m0 * m.m1[1] * m.norm * phi.second_deriv(m.norm)?;
        let at_far = PsiFunction::new(&model, &phi, &cfg)?.eval(x_far)[1];
        let gap = (at_far - limit).abs();
        ok &= gap <= 1e-6 * (1.0 + limit.abs());
        notes.push(format!("{}={} gap {gap:.1e}", kind.name(), curve.classification[1].as_str()));
    }
    outcome(ok, notes.join(", "))
}

fn boundedness() -> Result<Outcome> {
    let cfg = quad();
    let model = DensityModel::gaussian(0.0, 1.0)?;
    let grid = default_grid(&model)?;
    let mut kinds = standard_phi_kinds();
    kinds.push(PhiKind::CombinedBridgePower { lambda1: 0.3, lambda2: 0.7, kappa: 1.7 });
    let (mut ok, mut worst_slope, mut largest) = (true, 0.0f64, 0.0f64);
    for kind in kinds {
        let curve = influence_curve(&model, &PhiSpec::new(kind, 0.5)?, &grid, &cfg)?;
        for k in 0..curve.psi_values[0].len() {
            let (max, slope) = (curve.max_abs(k), curve.tail_slope(k).abs());
            ok &= max.is_finite() && slope < 1e-9;
            worst_slope = worst_slope.max(slope);
            largest = largest.max(max);
        }
    }
    outcome(ok, format!("largest max|psi| {largest:.3e}, steepest tail slope {worst_slope:.2e}"))
}

fn contamination() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = ContaminationConfig {
        true_model: DensityModel::gaussian(0.0, 1.0)?,
        contaminant: DensityModel::gaussian(8.0, 1.0)?,
        epsilon: 0.2,
        n: 2000,
        replicates: 50,
        estimators: vec![
            EstimatorSpec { name: "gamma".into(), phi: PhiKind::Identity, gamma: 0.5 },
            EstimatorSpec { name: "dpd".into(), phi: PhiKind::DensityPower, gamma: 0.5 },
            EstimatorSpec { name: "mle".into(), phi: PhiKind::Identity, gamma: 1e-9 },
        ],
        master_seed: SEED + 6,
    };
    let reports = contamination_experiment(&cfg)?;
    let bias: Vec<f64> = reports.iter().map(|r| r.bias[0].abs()).collect();
    let se: Vec<f64> = reports.iter().map(|r| r.sd[0] / (r.replicates as f64).sqrt()).collect();
    let scale_bias: Vec<f64> = reports.iter().map(|r| r.bias[1]).collect();
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    let elapsed = start.elapsed();
    outcome(
        bias[0] < bias[1] && bias[1] < bias[2] && elapsed <= Duration::from_secs(600),
        format!(
            "|bias_mu| gamma {:.4} (se {:.4}), dpd {:.4} (se {:.4}), mle {:.4}; \
             bias_log_sigma gamma {:.4}, dpd {:.4}, mle {:.4}; {failures} solver failures, {:.1}s",
            bias[0],
            se[0],
            bias[1],
            se[1],
            bias[2],
            scale_bias[0],
            scale_bias[1],
            scale_bias[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn closed_form_moments() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for (mu, sigma) in [(0.0, 1.0), (-0.7, 0.4), (2.0, 3.0)] {
        let model = DensityModel::gaussian(mu, sigma)?;
        let (lo, hi) = model.truncation();
        let qcfg = QuadConfig::new(lo, hi)?;
        for g in [0.1, 0.5, 1.0, 2.0] {
            let closed = model.power_moments(g, &qcfg)?.m0;
            let (numeric, _) = integrate(|x| model.density(x).powf(1.0 + g), &qcfg).into_result()?;
            worst = worst.max((closed - numeric).abs() / closed);
        }
    }
    outcome(worst <= 1e-10, format!("worst relative gap {worst:.3e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("divergence axioms", axioms),
        ("gamma -> 0 limit is phi'_0(1) KL", shannon_limit),
        ("reduction identities", reductions),
        ("xi equivalence", xi_equivalence),
        ("psi / loss-gradient consistency", psi_gradient),
        ("MLE recovery at gamma = 1e-9", mle_recovery),
        ("redescending only for identity phi", redescending),
        ("bounded psi with flat tail", boundedness),
        ("contamination bias ordering", contamination),
        ("closed-form <p^(1+gamma)> vs quadrature", closed_form_moments),
    ];
    let mut all = true;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= passed;
        println!("{} criterion {:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" }, k + 1);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
