use std::path::Path;
use std::process::{Command, Output};

use nbdpd_core::dataset::write_dataset;
use nbdpd_core::DensityModel;

fn nbdpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbdpd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn table(o: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let text = stdout(o);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"))
}

const N01: &str = "family=gaussian,mu=0,sigma=1";
const N11: &str = "family=gaussian,mu=1,sigma=1";

#[test]
fn divergence_of_identical_models_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    std::fs::write(&model, r#"{"family": "gaussian", "mu": 0.4, "sigma": 1.3}"#).unwrap();
    let m = model.to_str().unwrap();
    for (family, extra) in [("dpd", None), ("bdpd_ps", Some("lambda1=0.3,lambda2=0.7")), ("hd", Some("h=bregman_holder,kappa=2"))] {
        let mut args = vec!["divergence", "--q", m, "--p", m, "--family", family, "--gamma", "0.5"];
        if let Some(p) = extra {
            args.extend(["--params", p]);
        }
        let o = nbdpd(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let (h, rows) = table(&o);
        assert_eq!(h, ["family", "gamma", "params", "cross_entropy", "divergence", "quad_error"]);
        let d: f64 = rows[0][col(&h, "divergence")].parse().unwrap();
        assert!(d.abs() <= 1e-12);
    }
}

#[test]
fn divergence_shannon_branch_gives_kl() {
    let o = nbdpd(&["divergence", "--q", N01, "--p", N11, "--family", "nb_dpd", "--phi", "kind=identity", "--gamma", "1e-9"]);
    assert!(o.status.success());
    let (h, rows) = table(&o);
    assert_eq!(rows[0][col(&h, "gamma")], "1e-9");
    let d: f64 = rows[0][col(&h, "divergence")].parse().unwrap();
    assert!((d - 0.5).abs() < 1e-10);
}

#[test]
fn exit_codes() {
    let o = nbdpd(&["divergence", "--q", N01, "--p", N11, "--family", "dpd", "--gamma", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nbdpd(&["divergence", "--q", N01, "--p", N11, "--family", "bhd", "--params", "kappa=0.5", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nbdpd(&["divergence", "--q", N01, "--p", N11, "--family", "nope", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nbdpd(&["divergence", "--q", N01, "--family", "dpd", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nbdpd(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = nbdpd(&["--quad-tol", "1e-300", "divergence", "--q", N01, "--p", "family=gaussian,mu=1,sigma=2", "--family", "dpd", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"q\": {\"family\": \"gaussian\", \"mu\": 0, \"sigma\": 1},\n  \"p\": oops\n}").unwrap();
    let o = nbdpd(&["divergence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    std::fs::write(&cfg, r#"{"q": {"family": "gaussian", "mu": 0, "sigma": 1}, "p": {"family": "gaussian", "mu": 0, "sigma": 1}, "family": {"family": "dpd"}, "gama": 1}"#).unwrap();
    let o = nbdpd(&["divergence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));
}

fn write_sample(dir: &Path, model: &DensityModel, n: usize, seed: u64) -> (String, Vec<f64>) {
    let data = model.sample(n, seed).unwrap();
    let path = dir.join("data.csv");
    write_dataset(&path, &data).unwrap();
    (path.to_str().unwrap().to_string(), data)
}

#[test]
fn estimate_reproduces_mle() {
    let dir = tempfile::tempdir().unwrap();
    let (path, data) = write_sample(dir.path(), &DensityModel::gaussian(2.0, 3.0).unwrap(), 10_000, 12);
    let o = nbdpd(&["estimate", "--data", &path, "--model", "gaussian", "--phi", "kind=identity", "--gamma", "1e-9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&o);
    assert_eq!(h, ["mu", "log_sigma", "iterations", "mean_psi_norm", "converged"]);
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let sd = (data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mu: f64 = rows[0][0].parse().unwrap();
    let ls: f64 = rows[0][1].parse().unwrap();
    assert!((mu - mean).abs() < 1e-4 && (ls - sd.ln()).abs() < 1e-4);
    assert_eq!(rows[0][4], "true");
}

#[test]
fn estimate_with_init_and_inline_json_phi() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_sample(dir.path(), &DensityModel::exponential(2.0).unwrap(), 5_000, 3);
    let o = nbdpd(&[
        "estimate", "--data", &path, "--model", "exponential", "--phi", r#"{"kind": "bridge", "lambda1": 0.5, "lambda2": 0.5}"#,
        "--gamma", "0.5", "--init", "0.1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&o);
    assert_eq!(h[0], "log_rate");
    let lr: f64 = rows[0][0].parse().unwrap();
    assert!((lr - 2f64.ln()).abs() < 0.05);
}

#[test]
fn influence_curve_csv() {
    let o = nbdpd(&["influence", "--model", N01, "--phi", "kind=identity", "--gamma", "0.5", "--grid", "0:12:49"]);
    assert!(o.status.success());
    let (h, rows) = table(&o);
    assert_eq!(
        h,
        ["x_o", "psi_mu", "psi_log_sigma", "tail_limit_mu", "tail_limit_log_sigma", "classification_mu", "classification_log_sigma"]
    );
    assert_eq!(rows.len(), 49);
    assert_eq!(rows[0][col(&h, "classification_log_sigma")], "redescending");
    let o = nbdpd(&["influence", "--model", N01, "--phi", "kind=density_power", "--gamma", "0.5"]);
    let (h, rows) = table(&o);
    assert_eq!(rows[0][col(&h, "classification_log_sigma")], "bounded_nonzero");
}

fn experiment_config(dir: &Path, seed: u64) -> String {
    let path = dir.join(format!("exp{seed}.json"));
    std::fs::write(
        &path,
        format!(
            r#"{{
  "true_model": {{"family": "gaussian", "mu": 0.0, "sigma": 1.0}},
  "contaminant": {{"family": "gaussian", "mu": 8.0, "sigma": 0.5}},
  "epsilon": 0.1, "n": 300, "replicates": 5, "master_seed": {seed},
  "estimators": [
    {{"name": "gamma_div", "phi": {{"kind": "identity"}}, "gamma": 0.5}},
    {{"name": "mle", "phi": {{"kind": "identity"}}, "gamma": 1e-9}}
  ]
}}"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn contaminate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = experiment_config(dir.path(), 7);
    let a = nbdpd(&["contaminate", "--config", &cfg]);
    let b = nbdpd(&["contaminate", "--config", &cfg]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let (h, rows) = table(&a);
    assert_eq!(h, ["estimator", "phi", "gamma", "epsilon", "replicates", "failures", "statistic", "mu", "log_sigma"]);
    assert_eq!(rows.len(), 4);
    let c = nbdpd(&["--seed", "8", "contaminate", "--config", &cfg]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn out_flag_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let o = nbdpd(&["--out", out.to_str().unwrap(), "divergence", "--q", N01, "--p", N11, "--family", "kl", "--gamma", "0"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("family,gamma,params,cross_entropy,divergence,quad_error\n"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "divergence");
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["family"]["family"], "kl");
}

fn sweep(dir: &Path, body: &str) -> Output {
    let path = dir.join("sweep.json");
    std::fs::write(&path, body).unwrap();
    nbdpd(&["sweep", "--config", path.to_str().unwrap()])
}

#[test]
fn one_point_sweep_equals_single_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        r#"{"command": "divergence",
            "base": {"q": {"family": "gaussian", "mu": 0, "sigma": 1}, "p": {"family": "gaussian", "mu": 1, "sigma": 1},
                     "family": {"family": "bdpd_ps", "lambda1": 0.3, "lambda2": 0.7}},
            "grid": [{"path": "gamma", "values": [0.5]}]}"#,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&o);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&h, "status")], "ok");
    let single = nbdpd(&["divergence", "--q", N01, "--p", N11, "--family", "bdpd_ps", "--params", "lambda1=0.3,lambda2=0.7", "--gamma", "0.5"]);
    let (sh, srows) = table(&single);
    for (k, name) in sh.iter().enumerate() {
        assert_eq!(rows[0][col(&h, name)], srows[0][k], "{name}");
    }
}

#[test]
fn gamma_sweep_converges_to_kl() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        r#"{"command": "divergence",
            "base": {"q": {"family": "gaussian", "mu": 0, "sigma": 1}, "p": {"family": "gaussian", "mu": 1, "sigma": 1.5},
                     "family": {"family": "nb_dpd", "phi": {"kind": "identity"}}},
            "grid": [{"path": "gamma", "values": [1e-2, 1e-3, 1e-4]}]}"#,
    );
    let (h, rows) = table(&o);
    let kl = (1.5f64).ln() + (1.0 + 1.0) / (2.0 * 2.25) - 0.5;
    let errs: Vec<f64> = rows.iter().map(|r| (r[col(&h, "divergence")].parse::<f64>().unwrap() - kl).abs()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn epsilon_sweep_mle_bias_grows() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        r#"{"command": "contaminate",
            "base": {"true_model": {"family": "gaussian", "mu": 0, "sigma": 1},
                     "contaminant": {"family": "gaussian", "mu": 8, "sigma": 0.5},
                     "n": 500, "replicates": 10, "master_seed": 3,
                     "estimators": [{"name": "mle", "phi": {"kind": "identity"}, "gamma": 1e-9}]},
            "grid": [{"path": "epsilon", "values": [0.0, 0.05, 0.1, 0.2]}]}"#,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = table(&o);
    let bias: Vec<f64> = rows
        .iter()
        .filter(|r| r[col(&h, "statistic")] == "bias")
        .map(|r| r[col(&h, "mu")].parse::<f64>().unwrap().abs())
        .collect();
    assert_eq!(bias.len(), 4);
    assert!(bias.windows(2).all(|w| w[1] >= w[0]), "{bias:?}");
}

#[test]
fn sweep_records_point_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep(
        dir.path(),
        r#"{"command": "divergence",
            "base": {"q": {"family": "gaussian", "mu": 0, "sigma": 1}, "p": {"family": "gaussian", "mu": 1, "sigma": 1},
                     "family": {"family": "bhd", "kappa": 2}, "gamma": 0.5},
            "grid": [{"path": "family.kappa", "values": [2, 0.5, 3]}]}"#,
    );
    assert!(o.status.success());
    let (h, rows) = table(&o);
    let status: Vec<&str> = rows.iter().map(|r| r[col(&h, "status")].as_str()).collect();
    assert_eq!(status[0], "ok");
    assert!(status[1].starts_with("error"));
    assert_eq!(status[2], "ok");
    assert_eq!(rows[1][col(&h, "family.kappa")], "0.5");
}

#[test]
fn verify_passes_and_detects_perturbation() {
    let o = nbdpd(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let (h, rows) = table(&o);
    assert_eq!(h, ["check", "worst", "tolerance", "status"]);
    assert!(rows.iter().all(|r| r[3] == "pass"));
    let o = nbdpd(&["verify", "--pairs", "3", "--perturb-lambda2", "1e-3"]);
    assert_eq!(o.status.code(), Some(1));
    let (_, rows) = table(&o);
    let failed: Vec<&str> = rows.iter().filter(|r| r[3] == "FAIL").map(|r| r[0].as_str()).collect();
    assert!(failed.contains(&"psbdpce(lambda1=0) = lambda2^(-gamma/(1+gamma)) psce"));
    assert!(!failed.contains(&"bhce(kappa=1) = psce"));
}
