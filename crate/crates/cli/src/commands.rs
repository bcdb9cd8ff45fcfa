//! Command implementations; each produces a CSV table.

use anyhow::{bail, Result};
use nbdpd_core::divergence::evaluate;
use nbdpd_core::estimation::{solve, EmpiricalLossSpec, Init, SolverOptions};
use nbdpd_core::robustness::{contamination_experiment, default_grid, influence_curve, ContaminationRecord};
use nbdpd_core::verify::{run_verification, VerifyOptions};
use nbdpd_core::QuadConfig;
use serde_json::Value;

use crate::config::{
    from_value, load_data, model_of, phi_spec, set_path, DivergenceConfig, EstimateConfig, InfluenceConfig, SweepConfig,
};

pub struct Context {
    pub quad: QuadConfig,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Set when a numerical procedure did not converge (exit code 2).
    pub not_converged: bool,
    /// Set when a verification row failed.
    pub failed: bool,
}

/// Shortest round-trip representation; exponent form for very small or large magnitudes.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn strings<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Vec<String> {
    items.into_iter().map(Into::into).collect()
}

pub fn run_divergence(cfg: &DivergenceConfig, ctx: &Context) -> Result<Table> {
    let family = cfg.family.clone().into_family()?;
    let q = model_of(&cfg.q)?;
    let p = model_of(&cfg.p)?;
    let e = evaluate(&q, &p, &family, cfg.gamma, &ctx.quad)?;
    Ok(Table {
        header: strings(["family", "gamma", "params", "cross_entropy", "divergence", "quad_error"]),
        rows: vec![vec![
            family.name().to_string(),
            num(cfg.gamma),
            family.params_string(),
            num(e.cross_entropy),
            num(e.divergence),
            num(e.quad_error),
        ]],
        ..Table::default()
    })
}

pub fn run_estimate(cfg: &EstimateConfig, ctx: &Context) -> Result<Table> {
    let data = load_data(&cfg.data)?;
    let mut spec = EmpiricalLossSpec::new(data, cfg.model, phi_spec(&cfg.phi, cfg.gamma)?)?;
    spec.quad = ctx.quad.clone();
    let init = match &cfg.init {
        Some(t) => Init::Given(t.clone()),
        None => Init::Auto,
    };
    let r = solve(&spec, &init, &SolverOptions::default())?;
    let mut header = strings(cfg.model.coordinate_names().iter().copied());
    header.extend(strings(["iterations", "mean_psi_norm", "converged"]));
    let mut row: Vec<String> = r.theta_hat.iter().map(|v| num(*v)).collect();
    row.extend([r.iterations.to_string(), num(r.mean_psi_norm), r.converged.to_string()]);
    Ok(Table { header, rows: vec![row], not_converged: !r.converged, failed: false })
}

pub fn run_influence(cfg: &InfluenceConfig, ctx: &Context) -> Result<Table> {
    let model = model_of(&cfg.model)?;
    let grid = match &cfg.grid {
        Some(g) => g.points()?,
        None => default_grid(&model)?,
    };
    let c = influence_curve(&model, &phi_spec(&cfg.phi, cfg.gamma)?, &grid, &ctx.quad)?;
    let names = &c.coordinate_names;
    let mut header = vec!["x_o".to_string()];
    header.extend(names.iter().map(|n| format!("psi_{n}")));
    header.extend(names.iter().map(|n| format!("tail_limit_{n}")));
    header.extend(names.iter().map(|n| format!("classification_{n}")));
    let rows = c
        .x_grid
        .iter()
        .zip(&c.psi_values)
        .map(|(x, psi)| {
            let mut row = vec![num(*x)];
            row.extend(psi.iter().map(|v| num(*v)));
            row.extend(c.tail_limit.iter().map(|v| num(*v)));
            row.extend(c.classification.iter().map(|k| k.as_str().to_string()));
            row
        })
        .collect();
    Ok(Table { header, rows, ..Table::default() })
}

pub fn run_contaminate(rec: &ContaminationRecord, ctx: &Context) -> Result<Table> {
    let mut rec = rec.clone();
    if let Some(seed) = ctx.seed {
        rec.master_seed = seed;
    }
    let cfg = rec.into_config()?;
    let family = cfg.true_model.family().expect("validated parametric model");
    let reports = contamination_experiment(&cfg)?;
    let mut header = strings(["estimator", "phi", "gamma", "epsilon", "replicates", "failures", "statistic"]);
    header.extend(strings(family.coordinate_names().iter().copied()));
    let mut rows = Vec::new();
    let mut not_converged = false;
    for r in &reports {
        not_converged |= r.failures == r.replicates;
        for (stat, values) in [("bias", &r.bias), ("sd", &r.sd)] {
            let mut row = vec![
                r.estimator.clone(),
                r.phi.clone(),
                num(r.gamma),
                num(r.epsilon),
                r.replicates.to_string(),
                r.failures.to_string(),
                stat.to_string(),
            ];
            row.extend(values.iter().map(|v| num(*v)));
            rows.push(row);
        }
    }
    Ok(Table { header, rows, not_converged, failed: false })
}

pub fn run_verify(pairs: usize, perturb_lambda2: f64, ctx: &Context) -> Result<Table> {
    let mut opts = VerifyOptions { pairs, lambda2_perturbation: perturb_lambda2, quad: ctx.quad.clone(), ..Default::default() };
    if let Some(seed) = ctx.seed {
        opts.seed = seed;
    }
    let rows = run_verification(&opts)?;
    Ok(Table {
        header: strings(["check", "worst", "tolerance", "status"]),
        failed: rows.iter().any(|r| !r.passed),
        rows: rows
            .into_iter()
            .map(|r| vec![r.name, format!("{:.3e}", r.worst), format!("{:e}", r.tolerance), if r.passed { "pass" } else { "FAIL" }.into()])
            .collect(),
        not_converged: false,
    })
}

/// Runs one command from its JSON config.
pub fn run_value(command: &str, config: Value, ctx: &Context) -> Result<Table> {
    match command {
        "divergence" => run_divergence(&from_value(config, "divergence config")?, ctx),
        "estimate" => run_estimate(&from_value(config, "estimate config")?, ctx),
        "influence" => run_influence(&from_value(config, "influence config")?, ctx),
        "contaminate" => run_contaminate(&from_value(config, "contaminate config")?, ctx),
        other => bail!(nbdpd_core::Error::Parse(format!("sweep: unknown command '{other}'"))),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cartesian product of the grid axes (last axis fastest), one block of rows per point.
pub fn run_sweep(cfg: &SweepConfig, ctx: &Context) -> Result<Table> {
    if cfg.grid.iter().any(|a| a.values.is_empty()) {
        bail!(nbdpd_core::Error::Parse("sweep: every grid axis needs at least one value".into()));
    }
    let total: usize = cfg.grid.iter().map(|a| a.values.len()).product();
    let mut results = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let mut picks = vec![0; cfg.grid.len()];
        for (k, axis) in cfg.grid.iter().enumerate().rev() {
            picks[k] = rem % axis.values.len();
            rem /= axis.values.len();
        }
        let mut config = cfg.base.clone();
        let mut labels = Vec::new();
        let mut setup = Ok(());
        for (axis, &i) in cfg.grid.iter().zip(&picks) {
            labels.push(cell(&axis.values[i]));
            if let Err(e) = set_path(&mut config, &axis.path, axis.values[i].clone()) {
                setup = Err(e);
            }
        }
        let outcome = setup.and_then(|_| run_value(&cfg.command, config, ctx));
        results.push((labels, outcome));
    }

    let inner = results.iter().find_map(|(_, r)| r.as_ref().ok().map(|t| t.header.clone())).unwrap_or_default();
    let mut header = vec!["point".to_string()];
    header.extend(cfg.grid.iter().map(|a| a.path.clone()));
    header.extend(inner.iter().cloned());
    header.push("status".into());
    let mut rows = Vec::new();
    for (i, (labels, outcome)) in results.into_iter().enumerate() {
        let prefix = |row: Vec<String>, status: String| {
            let mut r = vec![i.to_string()];
            r.extend(labels.iter().cloned());
            r.extend(row);
            r.push(status);
            r
        };
        match outcome {
            Ok(t) => {
                let status = if t.not_converged { "not_converged" } else { "ok" }.to_string();
                for row in t.rows {
                    rows.push(prefix(row, status.clone()));
                }
            }
            Err(e) => rows.push(prefix(vec![String::new(); inner.len()], format!("error: {e:#}"))),
        }
    }
    Ok(Table { header, rows, ..Table::default() })
}
