//! `nbdpd`: divergence tables, estimation, influence curves, contamination
//! experiments, parameter sweeps and the identity suite.
//!
//! Exit codes: 0 success, 1 invalid input or failed verification,
//! 2 numerical non-convergence.

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _, Result};
use clap::{Parser, Subcommand};
use nbdpd_core::QuadConfig;
use serde_json::{json, Value};

use commands::{Context, Table};
use config::{
    family_arg, model_arg, parse_json, phi_arg, read_text, DataSource, DivergenceConfig, EstimateConfig, GridSpec,
    InfluenceConfig, SweepConfig,
};

#[derive(Parser)]
#[command(name = "nbdpd", version, about = "Norm-based Bregman density power divergences")]
struct Cli {
    /// Write CSV here (plus `<out>.meta.json`) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the master seed of seeded commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Absolute and relative quadrature tolerance.
    #[arg(long, global = true, default_value_t = 1e-10)]
    quad_tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-entropy and divergence between two models.
    Divergence {
        /// JSON config with q, p, family, gamma (replaces the flags below).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model file, inline JSON, or `family=gaussian,mu=0,sigma=1`.
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        p: Option<String>,
        /// nb_dpd, dpd, psd, log_gamma, bhd, bdpd_ps, bdpd_log, combined, mixture, fdpd, hd, kl.
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Family parameters, e.g. `lambda1=0.3,lambda2=0.7`; `v=<kind>` for fdpd, `h=<kind>` for hd.
        #[arg(long)]
        params: Option<String>,
        /// Generator for nb_dpd: file, inline JSON, or `kind=bridge,lambda1=0.5,lambda2=0.5`.
        #[arg(long)]
        phi: Option<String>,
    },
    /// M-estimation by solving the estimating equation.
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One-column CSV of observations.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "gaussian")]
        model: String,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Comma-separated starting point in (mu, log_sigma) or (log_rate).
        #[arg(long)]
        init: Option<String>,
    },
    /// ψ over a grid of outlier locations with its tail limit.
    Influence {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        /// `lo:hi:n`; defaults to mu + sigma*{0, 0.25, ..., 12}.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Bias of several estimators under contamination.
    Contaminate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cartesian grid over any field of another command's config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Checks every reduction identity; exit 0 iff all pass.
    Verify {
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        /// Added to lambda2 on one side of the bridge identities (sensitivity check).
        #[arg(long, default_value_t = 0.0)]
        perturb_lambda2: f64,
    },
}

fn missing(flag: &str) -> anyhow::Error {
    anyhow!(nbdpd_core::Error::Parse(format!("missing --{flag} (or give --config)")))
}

fn config_or<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>, what: &str, build: impl FnOnce() -> Result<T>) -> Result<T> {
    match path {
        Some(p) => parse_json(&read_text(p)?, what),
        None => build(),
    }
}

fn parse_init(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!(nbdpd_core::Error::Parse(format!("--init: '{s}' is not a number")))))
        .collect()
}

/// Returns the table and the resolved config embedded in the metadata.
fn dispatch(cli: &Cli, ctx: &Context) -> Result<(Table, &'static str, Value)> {
    Ok(match &cli.command {
        Command::Divergence { config, q, p, family, gamma, params, phi } => {
            let cfg: DivergenceConfig = config_or(config, "divergence config", || {
                Ok(DivergenceConfig {
                    q: model_arg(q.as_deref().ok_or_else(|| missing("q"))?)?,
                    p: model_arg(p.as_deref().ok_or_else(|| missing("p"))?)?,
                    family: family_arg(family.as_deref().ok_or_else(|| missing("family"))?, params.as_deref(), phi.as_deref())?,
                    gamma: gamma.ok_or_else(|| missing("gamma"))?,
                })
            })?;
            (commands::run_divergence(&cfg, ctx)?, "divergence", serde_json::to_value(&cfg)?)
        }
        Command::Estimate { config, data, model, phi, gamma, init } => {
            let cfg: EstimateConfig = config_or(config, "estimate config", || {
                Ok(EstimateConfig {
                    data: DataSource::Path(data.as_ref().ok_or_else(|| missing("data"))?.display().to_string()),
                    model: nbdpd_core::ModelFamily::parse(model)?,
                    phi: phi_arg(phi.as_deref().ok_or_else(|| missing("phi"))?)?,
                    gamma: gamma.ok_or_else(|| missing("gamma"))?,
                    init: init.as_deref().map(parse_init).transpose()?,
                })
            })?;
            (commands::run_estimate(&cfg, ctx)?, "estimate", serde_json::to_value(&cfg)?)
        }
        Command::Influence { config, model, phi, gamma, grid } => {
            let cfg: InfluenceConfig = config_or(config, "influence config", || {
                Ok(InfluenceConfig {
                    model: model_arg(model.as_deref().ok_or_else(|| missing("model"))?)?,
                    phi: phi_arg(phi.as_deref().ok_or_else(|| missing("phi"))?)?,
                    gamma: gamma.ok_or_else(|| missing("gamma"))?,
                    grid: grid.as_deref().map(GridSpec::parse).transpose()?,
                })
            })?;
            (commands::run_influence(&cfg, ctx)?, "influence", serde_json::to_value(&cfg)?)
        }
        Command::Contaminate { config } => {
            let rec: nbdpd_core::robustness::ContaminationRecord = parse_json(&read_text(config)?, "contaminate config")?;
            (commands::run_contaminate(&rec, ctx)?, "contaminate", serde_json::to_value(&rec)?)
        }
        Command::Sweep { config } => {
            let cfg: SweepConfig = parse_json(&read_text(config)?, "sweep config")?;
            (commands::run_sweep(&cfg, ctx)?, "sweep", serde_json::to_value(&cfg)?)
        }
        Command::Verify { pairs, perturb_lambda2 } => (
            commands::run_verify(*pairs, *perturb_lambda2, ctx)?,
            "verify",
            json!({"pairs": pairs, "perturb_lambda2": perturb_lambda2}),
        ),
    })
}

fn write_csv(table: &Table, sink: Box<dyn Write>) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn emit(cli: &Cli, table: &Table, command: &str, config: Value) -> Result<()> {
    let meta = json!({
        "tool": "nbdpd",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": cli.seed,
        "quad_tol": cli.quad_tol,
        "config": config,
    });
    match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(table, Box::new(std::io::BufWriter::new(file)))?;
            let mut meta_path = path.clone().into_os_string();
            meta_path.push(".meta.json");
            std::fs::write(Path::new(&meta_path), serde_json::to_string_pretty(&meta)? + "\n")?;
        }
        None => {
            write_csv(table, Box::new(std::io::stdout().lock()))?;
            eprintln!("# {meta}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<nbdpd_core::Error>())
        .any(nbdpd_core::Error::is_numerical);
    if numerical {
        2
    } else {
        1
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let quad = QuadConfig::default().with_tolerances(cli.quad_tol, cli.quad_tol)?;
    let ctx = Context { quad, seed: cli.seed };
    let (table, command, config) = dispatch(cli, &ctx)?;
    emit(cli, &table, command, config)?;
    Ok(if table.not_converged {
        eprintln!("nbdpd: numerical procedure did not converge");
        2
    } else if table.failed {
        eprintln!("nbdpd: verification failed");
        1
    } else {
        0
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("nbdpd: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
