//! Config records and the argument forms that build them.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nbdpd_core::density::ModelRecord;
use nbdpd_core::divergence::FamilyRecord;
use nbdpd_core::phi::PhiKindRecord;
use nbdpd_core::{DensityModel, ModelFamily, PhiSpec};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceConfig {
    pub q: ModelRecord,
    pub p: ModelRecord,
    pub family: FamilyRecord,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: DataSource,
    pub model: ModelFamily,
    pub phi: PhiKindRecord,
    pub gamma: f64,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    /// Parses `lo:hi:n`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("grid must look like lo:hi:n, got '{text}'");
        }
        let num = |s: &str, what: &str| s.trim().parse::<f64>().map_err(|_| anyhow!("grid {what} '{s}' is not a number"));
        let n: usize = parts[2].trim().parse().map_err(|_| anyhow!("grid size '{}' is not a positive integer", parts[2]))?;
        Ok(GridSpec { lo: num(parts[0], "lower bound")?, hi: num(parts[1], "upper bound")?, n })
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        if self.n < 2 || !self.lo.is_finite() || !self.hi.is_finite() || self.hi <= self.lo {
            bail!("grid needs hi > lo and at least 2 points");
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        Ok((0..self.n).map(|k| self.lo + step * k as f64).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfluenceConfig {
    pub model: ModelRecord,
    pub phi: PhiKindRecord,
    pub gamma: f64,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    /// Dotted path into `base`, e.g. `gamma` or `family.lambda2`.
    pub path: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `divergence`, `estimate`, `influence` or `contaminate`.
    pub command: String,
    pub base: Value,
    pub grid: Vec<GridAxis>,
}

pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| anyhow!(nbdpd_core::Error::Parse(format!("{what}: {e}"))))
}

pub fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| anyhow!(nbdpd_core::Error::Parse(format!("{what}: {e}"))))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(nbdpd_core::Error::from)
        .with_context(|| format!("reading {}", path.display()))
}

/// Splits `a=1,b=x` (`;` also accepted) into a JSON object; numeric values
/// become numbers.
pub fn key_values(text: &str, what: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for item in text.split([',', ';']).map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!(nbdpd_core::Error::Parse(format!("{what}: expected key=value, got '{item}'"))))?;
        let v = v.trim();
        let val = match v.parse::<f64>() {
            Ok(x) => serde_json::json!(x),
            Err(_) => Value::String(v.to_string()),
        };
        map.insert(k.trim().to_string(), val);
    }
    Ok(map)
}

/// A JSON value given as a file path, inline JSON, or `key=value` list.
fn structured_arg(arg: &str, what: &str) -> Result<Value> {
    let path = Path::new(arg);
    let text = if path.is_file() { read_text(path)? } else { arg.to_string() };
    if text.trim_start().starts_with('{') {
        parse_json(&text, what)
    } else {
        Ok(Value::Object(key_values(&text, what)?))
    }
}

pub fn model_arg(arg: &str) -> Result<ModelRecord> {
    let rec: ModelRecord = from_value(structured_arg(arg, "model spec")?, "model spec")?;
    rec.clone().into_model()?;
    Ok(rec)
}

pub fn phi_arg(arg: &str) -> Result<PhiKindRecord> {
    let mut v = structured_arg(arg, "phi spec")?;
    if let Value::Object(m) = &mut v {
        m.remove("gamma");
    }
    from_value(v, "phi spec")
}

pub fn phi_spec(kind: &PhiKindRecord, gamma: f64) -> Result<PhiSpec> {
    Ok(nbdpd_core::phi::PhiRecord { kind: kind.clone(), gamma }.into_spec()?)
}

/// Builds a family record from `--family`, `--params` and `--phi`.
/// `fdpd` takes `v=<kind>` and `hd` takes `h=<kind>` inside the params list.
pub fn family_arg(name: &str, params: Option<&str>, phi: Option<&str>) -> Result<FamilyRecord> {
    let mut obj = match params {
        Some(p) => key_values(p, "family params")?,
        None => Map::new(),
    };
    let nested = match name {
        "fdpd" => Some("v"),
        "hd" => Some("h"),
        _ => None,
    };
    if let Some(key) = nested {
        let kind = obj
            .remove(key)
            .ok_or_else(|| anyhow!(nbdpd_core::Error::Parse(format!("family {name} needs {key}=<kind> in --params"))))?;
        let mut inner = std::mem::take(&mut obj);
        inner.insert("kind".into(), kind);
        obj.insert(key.into(), Value::Object(inner));
    }
    if name == "nb_dpd" {
        let phi = phi.ok_or_else(|| anyhow!(nbdpd_core::Error::Parse("family nb_dpd needs --phi".into())))?;
        obj.insert("phi".into(), serde_json::to_value(phi_arg(phi)?)?);
    } else if phi.is_some() {
        bail!(nbdpd_core::Error::Parse(format!("--phi only applies to nb_dpd, not {name}")));
    }
    obj.insert("family".into(), Value::String(name.to_string()));
    from_value(Value::Object(obj), "family")
}

pub fn load_data(src: &DataSource) -> Result<Vec<f64>> {
    match src {
        DataSource::Path(p) => Ok(nbdpd_core::dataset::read_dataset(Path::new(p))?),
        DataSource::Values(v) => Ok(v.clone()),
    }
}

pub fn model_of(rec: &ModelRecord) -> Result<DensityModel> {
    Ok(rec.clone().into_model()?)
}

/// Sets `root[path] = value` for a dotted path, creating objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!(nbdpd_core::Error::Parse(format!("sweep path '{path}' does not lead through objects"))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split always yields at least one key")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_from_flags() {
        let f = family_arg("bdpd_ps", Some("lambda1=0.3,lambda2=0.7"), None).unwrap();
        assert_eq!(f, FamilyRecord::BdpdPs { lambda1: 0.3, lambda2: 0.7 });
        let f = family_arg("fdpd", Some("v=ln_zeta,zeta=0.5"), None).unwrap();
        assert!(matches!(f, FamilyRecord::Fdpd { .. }));
        let f = family_arg("nb_dpd", None, Some("kind=bridge,lambda1=0.5,lambda2=0.5")).unwrap();
        assert!(matches!(f, FamilyRecord::NbDpd { .. }));
        assert!(family_arg("nb_dpd", None, None).is_err());
        assert!(family_arg("dpd", None, Some("kind=identity")).is_err());
        assert!(family_arg("bhd", Some("kapa=2"), None).is_err());
    }

    #[test]
    fn models_inline() {
        assert_eq!(model_arg("family=gaussian,mu=1,sigma=2").unwrap(), ModelRecord::Gaussian { mu: 1.0, sigma: 2.0 });
        assert!(model_arg(r#"{"family":"exponential","rate":-1}"#).is_err());
    }

    #[test]
    fn dotted_paths() {
        let mut v = serde_json::json!({"family": {"family": "bhd", "kappa": 1.0}});
        set_path(&mut v, "family.kappa", serde_json::json!(3.0)).unwrap();
        set_path(&mut v, "gamma", serde_json::json!(0.5)).unwrap();
        assert_eq!(v["family"]["kappa"], 3.0);
        assert_eq!(v["gamma"], 0.5);
        assert!(set_path(&mut v, "gamma.x", serde_json::json!(1)).is_err());
    }

    #[test]
    fn grid_specs() {
        let g = GridSpec::parse("0:12:49").unwrap();
        assert_eq!(g.points().unwrap().len(), 49);
        assert!(GridSpec::parse("0:1").is_err());
        assert!(GridSpec::parse("1:0:5").unwrap().points().is_err());
    }
}
