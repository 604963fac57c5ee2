//! JSON system descriptions.
//!
//! ```json
//! {
//!   "dimension": 2, "p": 2,
//!   "bounding_box": [[-4, -4], [4, 4]],
//!   "flows": [{"field": ["-x2", "x1"], "T": 3.14, "integrator": {"rtol": 1e-10, "atol": 1e-12}}, ...],
//!   "regions": [{"f": "1 - x1^2 - x2^2", "lambda": 0.0}, ...],
//!   "lambda_p": 0.0,
//!   "beta": 1
//! }
//! ```

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::dynamics::{Flow, IntegratorSettings, VectorField};
use crate::expr::{parse, ExprError, Expression};
use crate::geometry::{BoundingBox, Region, RelaySystem};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    /// Key path such as `regions[1].f`; empty for document-level problems.
    pub path: String,
    pub reason: String,
    /// Character offset of an expression syntax error.
    pub position: Option<usize>,
}

impl ConfigError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            reason: reason.into(),
            position: None,
        }
    }
}

/// A loaded system and the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub system: RelaySystem,
    pub raw: Vec<u8>,
}

fn get<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value, ConfigError> {
    v.get(key)
        .ok_or_else(|| ConfigError::new(join(path, key), "missing key"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize, ConfigError> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| ConfigError::new(path, "expected a non-negative integer"))
}

fn as_f64(v: &Value, path: &str) -> Result<f64, ConfigError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ConfigError::new(path, "expected a finite number"))
}

fn as_array<'a>(v: &'a Value, path: &str, len: usize) -> Result<&'a Vec<Value>, ConfigError> {
    let a = v
        .as_array()
        .ok_or_else(|| ConfigError::new(path, "expected an array"))?;
    if a.len() != len {
        return Err(ConfigError::new(
            path,
            format!("expected {len} entries, found {}", a.len()),
        ));
    }
    Ok(a)
}

fn expression(v: &Value, path: &str, n: usize) -> Result<Expression, ConfigError> {
    let text = v
        .as_str()
        .ok_or_else(|| ConfigError::new(path, "expected an expression string"))?;
    parse(text, n).map_err(|e| {
        let position = match &e {
            ExprError::Syntax { position, .. } => Some(*position),
            ExprError::UnknownVariable { position, .. } => Some(*position),
            ExprError::Eval(_) => None,
        };
        ConfigError {
            path: path.to_string(),
            reason: e.to_string(),
            position,
        }
    })
}

/// Builds a system from a parsed JSON document.
pub fn from_value(doc: &Value) -> Result<RelaySystem, ConfigError> {
    if !doc.is_object() {
        return Err(ConfigError::new("", "expected a JSON object"));
    }
    let n = as_usize(get(doc, "dimension", "")?, "dimension")?;
    let p = as_usize(get(doc, "p", "")?, "p")?;
    if n < 2 {
        return Err(ConfigError::new("dimension", "must be at least 2"));
    }
    if p < 2 {
        return Err(ConfigError::new("p", "must be at least 2"));
    }

    let bb = as_array(get(doc, "bounding_box", "")?, "bounding_box", 2)?;
    let mut corners = Vec::new();
    for (c, corner) in bb.iter().enumerate() {
        let path = format!("bounding_box[{c}]");
        let vals = as_array(corner, &path, n)?
            .iter()
            .enumerate()
            .map(|(j, x)| as_f64(x, &format!("{path}[{j}]")))
            .collect::<Result<Vec<f64>, _>>()?;
        corners.push(vals);
    }
    let hi = corners.pop().expect("two corners");
    let lo = corners.pop().expect("two corners");
    let bbox = BoundingBox::new(lo, hi).map_err(|e| ConfigError::new("bounding_box", e.to_string()))?;

    let mut flows = Vec::with_capacity(p);
    for (k, fv) in as_array(get(doc, "flows", "")?, "flows", p)?.iter().enumerate() {
        let path = format!("flows[{k}]");
        let field_path = format!("{path}.field");
        let comps = as_array(get(fv, "field", &path)?, &field_path, n)?
            .iter()
            .enumerate()
            .map(|(j, e)| expression(e, &format!("{field_path}[{j}]"), n))
            .collect::<Result<Vec<_>, _>>()?;
        let horizon = as_f64(get(fv, "T", &path)?, &join(&path, "T"))?;
        if !(horizon > 0.0) {
            return Err(ConfigError::new(join(&path, "T"), "must be positive"));
        }
        let mut settings = IntegratorSettings::default();
        if let Some(iv) = fv.get("integrator") {
            let ip = join(&path, "integrator");
            if let Some(r) = iv.get("rtol") {
                settings.rtol = as_f64(r, &join(&ip, "rtol"))?;
            }
            if let Some(a) = iv.get("atol") {
                settings.atol = as_f64(a, &join(&ip, "atol"))?;
            }
        }
        let field = VectorField::new(comps, k + 1).map_err(|e| ConfigError::new(&field_path, e.to_string()))?;
        flows.push(Flow::new(field, horizon, settings).map_err(|e| ConfigError::new(&path, e.to_string()))?);
    }

    let mut regions = Vec::with_capacity(p);
    for (i, rv) in as_array(get(doc, "regions", "")?, "regions", p)?.iter().enumerate() {
        let path = format!("regions[{i}]");
        let f = expression(get(rv, "f", &path)?, &join(&path, "f"), n)?;
        let mut region = Region::new(f, i);
        if let Some(l) = rv.get("lambda") {
            region = region.with_lambda(as_f64(l, &join(&path, "lambda"))?);
        }
        regions.push(region);
    }
    let lambda_p = match doc.get("lambda_p") {
        Some(v) => as_f64(v, "lambda_p")?,
        None => regions[0].lambda,
    };
    let beta = match doc.get("beta") {
        Some(Value::Null) | None => None,
        Some(v) => {
            let b = as_usize(v, "beta")?;
            if b > p {
                return Err(ConfigError::new("beta", format!("must be in 0..={p}")));
            }
            Some(b)
        }
    };
    RelaySystem::new(flows, regions, lambda_p, beta, bbox).map_err(|e| ConfigError::new("", e.to_string()))
}

pub fn from_str(text: &str) -> Result<RelaySystem, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("", format!("invalid JSON: {e}")))?;
    from_value(&doc)
}

/// Reads and builds a system from a JSON file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let raw = std::fs::read(path).map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&raw).map_err(|_| ConfigError::new("", "file is not UTF-8"))?;
    Ok(LoadedConfig {
        system: from_str(text)?,
        raw,
    })
}
