//! Influence curves and contamination experiments.
//!
//! Influence is reported in proportional form: the curve is `ψ(x_o, θ)`
//! itself, without the inverse sensitivity matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityModel, ModelFamily, ModelRecord};
use crate::error::{param, Error, Result};
use crate::estimation::{solve, EmpiricalLossSpec, Init, PsiFunction, SolverOptions};
use crate::phi::{PhiKind, PhiRecord, PhiSpec};
use crate::quadrature::QuadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Redescending,
    BoundedNonzero,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Redescending => "redescending",
            Classification::BoundedNonzero => "bounded_nonzero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceCurve {
    pub x_grid: Vec<f64>,
    /// One row per grid point, one column per parameter coordinate.
    pub psi_values: Vec<Vec<f64>>,
    pub tail_limit: Vec<f64>,
    pub classification: Vec<Classification>,
    pub coordinate_names: Vec<String>,
}

impl InfluenceCurve {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.psi_values.iter().map(|row| row[k]).collect()
    }

    pub fn max_abs(&self, k: usize) -> f64 {
        self.column(k).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|Δψ/Δx|` over the last tenth of the grid.
    pub fn tail_slope(&self, k: usize) -> f64 {
        let col = self.column(k);
        let n = col.len();
        let start = n - (n / 10).max(2);
        (start + 1..n)
            .map(|i| ((col[i] - col[i - 1]) / (self.x_grid[i] - self.x_grid[i - 1])).abs())
            .fold(0.0, f64::max)
    }
}

/// `x_o` grid probing the right tail: `μ + σ·{0, 0.25, …, 12}` for the Gaussian,
/// `{0, 0.25, …, 50}/rate` for the Exponential.
pub fn default_grid(model: &DensityModel) -> Result<Vec<f64>> {
    match model {
        DensityModel::Gaussian { mu, sigma } => Ok((0..=48).map(|k| mu + sigma * 0.25 * k as f64).collect()),
        DensityModel::Exponential { rate } => Ok((0..=200).map(|k| 0.25 * k as f64 / rate).collect()),
        DensityModel::Grid(_) => param("influence curves need a parametric model"),
    }
}

/// Evaluates ψ over `x_grid` and classifies each coordinate.
pub fn influence_curve(model: &DensityModel, phi: &PhiSpec, x_grid: &[f64], cfg: &QuadConfig) -> Result<InfluenceCurve> {
    if !(phi.gamma() > 0.0) {
        return param("influence curves require gamma > 0");
    }
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return param("x grid must be strictly increasing with at least two points");
    }
    let family = model.family().ok_or_else(|| Error::Parameter("influence curves need a parametric model".into()))?;
    let f = PsiFunction::new(model, phi, cfg)?;
    let psi_values: Vec<Vec<f64>> = x_grid.iter().map(|&x| f.eval(x)).collect();
    let tail_limit = f.tail_limit();
    let classification = (0..f.dim())
        .map(|k| {
            let scale = psi_values.iter().fold(0.0f64, |m, r| m.max(r[k].abs()));
            let end = psi_values.last().unwrap()[k].abs();
            if tail_limit[k].abs() < 1e-12 * scale && end < 1e-6 * scale {
                Classification::Redescending
            } else {
                Classification::BoundedNonzero
            }
        })
        .collect();
    Ok(InfluenceCurve {
        x_grid: x_grid.to_vec(),
        psi_values,
        tail_limit,
        classification,
        coordinate_names: family.coordinate_names().iter().map(|s| s.to_string()).collect(),
    })
}

/// One estimator in a contamination experiment.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub name: String,
    pub phi: PhiKind,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct ContaminationConfig {
    pub true_model: DensityModel,
    pub contaminant: DensityModel,
    pub epsilon: f64,
    pub n: usize,
    pub replicates: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationReport {
    pub estimator: String,
    pub phi: String,
    pub gamma: f64,
    pub epsilon: f64,
    pub replicates: usize,
    pub theta_true: Vec<f64>,
    /// `None` where the solver did not converge.
    pub theta_hats: Vec<Option<Vec<f64>>>,
    pub bias: Vec<f64>,
    pub sd: Vec<f64>,
    pub failures: usize,
}

/// SplitMix64 step; decorrelates replicate seeds from a master seed.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ContaminationConfig {
    pub fn validate(&self) -> Result<ModelFamily> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return param(format!("epsilon must lie in [0, 1) (got {})", self.epsilon));
        }
        if self.replicates == 0 || self.n == 0 {
            return param("replicates and n must be at least 1");
        }
        if self.estimators.is_empty() {
            return param("no estimators given");
        }
        for e in &self.estimators {
            PhiSpec::new(e.phi.clone(), e.gamma)?;
        }
        self.true_model.family().ok_or_else(|| Error::Parameter("true model must be parametric".into()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ContaminationRecord =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        rec.into_config()
    }
}

fn mean_sd(values: &[&Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let m = values.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|k| values.iter().map(|v| v[k]).sum::<f64>() / m).collect();
    let sd = (0..dim)
        .map(|k| {
            if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            }
        })
        .collect();
    (mean, sd)
}

/// Runs every estimator on `replicates` contaminated samples.
pub fn contamination_experiment(cfg: &ContaminationConfig) -> Result<Vec<ContaminationReport>> {
    let family = cfg.validate()?;
    let theta_true = match &cfg.true_model {
        DensityModel::Gaussian { mu, sigma } => vec![*mu, sigma.ln()],
        DensityModel::Exponential { rate } => vec![rate.ln()],
        DensityModel::Grid(_) => unreachable!("validated above"),
    };
    let opts = SolverOptions::default();
    let per_replicate: Vec<Vec<Option<Vec<f64>>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<Vec<f64>>>> {
            let seed = replicate_seed(cfg.master_seed, r as u64);
            let data = cfg.true_model.sample_contaminated(&cfg.contaminant, cfg.epsilon, cfg.n, seed)?;
            cfg.estimators
                .iter()
                .map(|e| {
                    let spec = EmpiricalLossSpec::new(data.clone(), family, PhiSpec::new(e.phi.clone(), e.gamma)?)?;
                    Ok(match solve(&spec, &Init::Auto, &opts) {
                        Ok(res) if res.converged => Some(res.theta_hat),
                        Ok(_) => None,
                        Err(err) if err.is_numerical() => None,
                        Err(err) => return Err(err),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let theta_hats: Vec<Option<Vec<f64>>> = per_replicate.iter().map(|row| row[j].clone()).collect();
            let ok: Vec<&Vec<f64>> = theta_hats.iter().flatten().collect();
            let dim = theta_true.len();
            let (bias, sd) = if ok.is_empty() {
                (vec![f64::NAN; dim], vec![f64::NAN; dim])
            } else {
                let (mean, sd) = mean_sd(&ok, dim);
                (mean.iter().zip(&theta_true).map(|(m, t)| m - t).collect(), sd)
            };
            let phi_desc = match e.phi.params_string() {
                p if p.is_empty() => e.phi.name().to_string(),
                p => format!("{};{p}", e.phi.name()),
            };
            ContaminationReport {
                estimator: e.name.clone(),
                phi: phi_desc,
                gamma: e.gamma,
                epsilon: cfg.epsilon,
                replicates: cfg.replicates,
                theta_true: theta_true.clone(),
                failures: theta_hats.iter().filter(|t| t.is_none()).count(),
                theta_hats,
                bias,
                sd,
            }
        })
        .collect())
}

/// Serialized experiment, e.g.
/// `{"true_model": {...}, "contaminant": {...}, "epsilon": 0.2, "n": 2000,
///   "replicates": 50, "master_seed": 7,
///   "estimators": [{"name": "gamma", "phi": {"kind": "identity"}, "gamma": 0.5}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationRecord {
    pub true_model: ModelRecord,
    pub contaminant: ModelRecord,
    pub epsilon: f64,
    pub n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub estimators: Vec<EstimatorRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorRecord {
    pub name: String,
    pub phi: PhiRecord,
    pub gamma: f64,
}

impl ContaminationRecord {
    pub fn into_config(self) -> Result<ContaminationConfig> {
        let estimators = self
            .estimators
            .into_iter()
            .map(|e| {
                let spec = e.phi.into_spec()?;
                Ok(EstimatorSpec { name: e.name, phi: spec.kind().clone(), gamma: e.gamma })
            })
            .collect::<Result<_>>()?;
        let cfg = ContaminationConfig {
            true_model: self.true_model.into_model()?,
            contaminant: self.contaminant.into_model()?,
            epsilon: self.epsilon,
            n: self.n,
            replicates: self.replicates,
            estimators,
            master_seed: self.master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds() -> Vec<PhiKind> {
        vec![
            PhiKind::Identity,
            PhiKind::DensityPower,
            PhiKind::PowerKappa { kappa: 2.0 },
            PhiKind::Bridge { lambda1: 0.5, lambda2: 0.5 },
            PhiKind::Mixture { t: 0.5 },
            PhiKind::CombinedBridgePower { lambda1: 0.3, lambda2: 0.7, kappa: 1.5 },
        ]
    }

    fn curve(kind: PhiKind) -> InfluenceCurve {
        let m = DensityModel::gaussian(0.5, 1.5).unwrap();
        influence_curve(&m, &PhiSpec::new(kind, 0.5).unwrap(), &default_grid(&m).unwrap(), &QuadConfig::default()).unwrap()
    }

    #[test]
    fn only_the_linear_generator_redescends_on_scale() {
        for kind in kinds() {
            let c = curve(kind.clone());
            let expect = if matches!(kind, PhiKind::Identity) { Classification::Redescending } else { Classification::BoundedNonzero };
            assert_eq!(c.classification[1], expect, "{kind:?}");
            assert_eq!(c.classification[0], Classification::Redescending, "{kind:?}");
            assert_eq!(c.tail_limit[0], 0.0);
        }
    }

    #[test]
    fn tail_matches_analytic_limit() {
        for kind in kinds() {
            let c = curve(kind.clone());
            let end = c.psi_values.last().unwrap();
            for (e, t) in end.iter().zip(&c.tail_limit) {
                assert!((e - t).abs() < 1e-6 * (1.0 + t.abs()), "{kind:?}");
            }
            assert!(c.max_abs(1).is_finite());
            assert!(c.tail_slope(1) < 1e-9, "{kind:?} {}", c.tail_slope(1));
        }
    }

    #[test]
    fn density_power_tail_has_closed_form() {
        let g = 0.5;
        let m = DensityModel::gaussian(0.0, 1.0).unwrap();
        let mom = m.power_moments(g, &QuadConfig::default()).unwrap();
        let c = influence_curve(&m, &PhiSpec::density_power(g), &default_grid(&m).unwrap(), &QuadConfig::default()).unwrap();
        let n = mom.norm;
        let expect = mom.m0 * mom.m1[1] * n * g * (1.0 + g) * n.powf(g - 1.0);
        assert!((c.tail_limit[1] - expect).abs() < 1e-15);
        assert!(expect != 0.0);
    }

    #[test]
    fn exponential_curves() {
        let m = DensityModel::exponential(1.3).unwrap();
        let grid = default_grid(&m).unwrap();
        let c = influence_curve(&m, &PhiSpec::identity(0.5), &grid, &QuadConfig::default()).unwrap();
        assert_eq!(c.classification, vec![Classification::Redescending]);
        let c = influence_curve(&m, &PhiSpec::density_power(0.5), &grid, &QuadConfig::default()).unwrap();
        assert_eq!(c.classification, vec![Classification::BoundedNonzero]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = DensityModel::gaussian(0.0, 1.0).unwrap();
        assert!(influence_curve(&m, &PhiSpec::identity(0.0), &[0.0, 1.0], &QuadConfig::default()).is_err());
        assert!(influence_curve(&m, &PhiSpec::identity(0.5), &[1.0, 0.0], &QuadConfig::default()).is_err());
    }

    fn experiment(eps: f64, replicates: usize, seed: u64) -> ContaminationConfig {
        ContaminationConfig {
            true_model: DensityModel::gaussian(0.0, 1.0).unwrap(),
            contaminant: DensityModel::gaussian(8.0, 0.5).unwrap(),
            epsilon: eps,
            n: 500,
            replicates,
            estimators: vec![
                EstimatorSpec { name: "gamma".into(), phi: PhiKind::Identity, gamma: 0.5 },
                EstimatorSpec { name: "dpd".into(), phi: PhiKind::DensityPower, gamma: 0.5 },
                EstimatorSpec { name: "mle".into(), phi: PhiKind::Identity, gamma: 1e-9 },
            ],
            master_seed: seed,
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let a = contamination_experiment(&experiment(0.1, 6, 3)).unwrap();
        let b = contamination_experiment(&experiment(0.1, 6, 3)).unwrap();
        assert_eq!(a, b);
        let c = contamination_experiment(&experiment(0.1, 6, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clean_data_is_unbiased() {
        let reps = 20;
        for r in contamination_experiment(&experiment(0.0, reps, 11)).unwrap() {
            assert_eq!(r.failures, 0);
            for k in 0..2 {
                assert!(r.bias[k].abs() < 3.0 * r.sd[k] / (reps as f64).sqrt() + 1e-12, "{} {:?} {:?}", r.estimator, r.bias, r.sd);
            }
        }
    }

    #[test]
    fn single_replicate_equals_single_solve() {
        let cfg = experiment(0.2, 1, 5);
        let reports = contamination_experiment(&cfg).unwrap();
        let data = cfg.true_model.sample_contaminated(&cfg.contaminant, 0.2, cfg.n, replicate_seed(5, 0)).unwrap();
        let spec = EmpiricalLossSpec::new(data, ModelFamily::Gaussian, PhiSpec::density_power(0.5)).unwrap();
        let r = solve(&spec, &Init::Auto, &SolverOptions::default()).unwrap();
        assert_eq!(reports[1].theta_hats[0].as_ref().unwrap(), &r.theta_hat);
        assert_eq!(reports[1].bias, vec![r.theta_hat[0], r.theta_hat[1]]);
    }

    #[test]
    fn heavy_contamination_hurts_the_mle_most() {
        let reports = contamination_experiment(&experiment(0.2, 10, 1)).unwrap();
        let mle = reports[2].bias[0].abs();
        assert!(mle > 1.0);
        assert!(reports[0].bias[0].abs() < 0.1 && reports[1].bias[0].abs() < 0.1);
    }

    #[test]
    fn config_from_json() {
        let text = r#"{
            "true_model": {"family": "gaussian", "mu": 0.0, "sigma": 1.0},
            "contaminant": {"family": "gaussian", "mu": 8.0, "sigma": 0.5},
            "epsilon": 0.2, "n": 100, "replicates": 2, "master_seed": 9,
            "estimators": [{"name": "g", "phi": {"kind": "identity"}, "gamma": 0.5}]
        }"#;
        let cfg = ContaminationConfig::from_json(text).unwrap();
        assert_eq!(cfg.estimators.len(), 1);
        assert!(ContaminationConfig::from_json(&text.replace("0.2,", "1.5,")).is_err());
        assert!(ContaminationConfig::from_json("{").is_err());
    }
}
