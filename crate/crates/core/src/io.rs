//! JSON file formats for tensors, decompositions and multilinear maps.
//!
//! ```json
//! { "factors": [{"dim": 2, "norm": "ellp", "p": 2}], "coeffs": [1, 0] }
//! ```
//!
//! `p` is a number or the string `"inf"`. A factor may carry `"weights"`.
//! A tensor file may give `"terms"` (a decomposition) instead of `"coeffs"`.
//! A map file adds a `"codomain"` factor; its coefficients are indexed by
//! the domain multi-index followed by the output coordinate.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ideal::MultilinearMap;
use crate::spaces::{Exponent, NormedSpace};
use crate::tensors::{Decomposition, Tensor, TensorSpace, Term};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorSpec {
    pub dim: usize,
    #[serde(default = "default_norm")]
    pub norm: String,
    #[serde(default = "default_p")]
    pub p: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn default_norm() -> String {
    "ellp".into()
}

fn default_p() -> Value {
    Value::from(2.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermSpec {
    pub lambda: f64,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorFile {
    pub factors: Vec<FactorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codomain: Option<FactorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<TermSpec>>,
}

/// What a tensor-or-map file decodes to.
#[derive(Clone, Debug)]
pub enum Input {
    Tensor(Tensor),
    Map(MultilinearMap),
}

pub fn parse_exponent(v: &Value) -> Result<Exponent> {
    match v {
        Value::Number(n) => Exponent::new(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinity),
            other => Exponent::new(
                other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad exponent {s:?}")))?,
            ),
        },
        _ => Err(Error::InvalidArgument(format!("bad exponent {v}"))),
    }
}

fn exponent_value(p: Exponent) -> Value {
    if p.is_infinite() {
        Value::from("inf")
    } else {
        Value::from(p.value())
    }
}

impl FactorSpec {
    pub fn to_space(&self) -> Result<NormedSpace> {
        match self.norm.as_str() {
            "scalar" => Ok(NormedSpace::scalar()),
            "ellp" => {
                let p = parse_exponent(&self.p)?;
                match &self.weights {
                    Some(w) => {
                        if w.len() != self.dim {
                            return Err(Error::DimensionMismatch { expected: self.dim, found: w.len() });
                        }
                        if p.is_infinite() {
                            NormedSpace::weighted(f64::INFINITY, w.clone())
                        } else {
                            NormedSpace::weighted(p.value(), w.clone())
                        }
                    }
                    None => NormedSpace::with_exponent(self.dim, p),
                }
            }
            other => Err(Error::Unsupported(format!("norm kind {other:?}"))),
        }
    }

    pub fn from_space(s: &NormedSpace) -> Self {
        FactorSpec {
            dim: s.dim(),
            norm: "ellp".into(),
            p: exponent_value(s.p()),
            weights: s.weights().map(|w| w.to_vec()),
        }
    }
}

fn spaces(specs: &[FactorSpec]) -> Result<Vec<NormedSpace>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("at least one factor is required".into()));
    }
    specs.iter().map(FactorSpec::to_space).collect()
}

fn decomposition(terms: &[TermSpec]) -> Decomposition {
    Decomposition {
        terms: terms
            .iter()
            .map(|t| Term { lambda: t.lambda, vectors: t.vectors.clone() })
            .collect(),
    }
}

impl TensorFile {
    pub fn decode(&self) -> Result<Input> {
        let domain = spaces(&self.factors)?;
        match &self.codomain {
            Some(c) => {
                let coeffs = self
                    .coeffs
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("a map file needs \"coeffs\"".into()))?;
                Ok(Input::Map(MultilinearMap::new(domain, c.to_space()?, coeffs)?))
            }
            None => {
                let space = TensorSpace::new(domain)?;
                let t = match (&self.coeffs, &self.terms) {
                    (Some(c), None) => Tensor::new(space, c.clone())?,
                    (None, Some(t)) => decomposition(t).to_tensor(&space)?,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "exactly one of \"coeffs\" and \"terms\" is required".into(),
                        ))
                    }
                };
                Ok(Input::Tensor(t))
            }
        }
    }

    pub fn from_tensor(z: &Tensor) -> Self {
        TensorFile {
            factors: z.space().factors().iter().map(FactorSpec::from_space).collect(),
            codomain: None,
            coeffs: Some(z.coeffs().to_vec()),
            terms: None,
        }
    }

    pub fn from_map(a: &MultilinearMap) -> Self {
        TensorFile {
            factors: a.domain().iter().map(FactorSpec::from_space).collect(),
            codomain: Some(FactorSpec::from_space(a.codomain())),
            coeffs: Some(a.coeffs().to_vec()),
            terms: None,
        }
    }
}

pub fn parse_input(text: &str) -> Result<Input> {
    let file: TensorFile = serde_json::from_str(text)?;
    file.decode()
}

pub fn parse_tensor(text: &str) -> Result<Tensor> {
    match parse_input(text)? {
        Input::Tensor(t) => Ok(t),
        Input::Map(_) => Err(Error::InvalidArgument("expected a tensor, found a map".into())),
    }
}

pub fn tensor_to_json(z: &Tensor) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TensorFile::from_tensor(z))?)
}

pub fn map_to_json(a: &MultilinearMap) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TensorFile::from_map(a))?)
}

pub fn decomposition_to_json(d: &Decomposition) -> Result<String> {
    let terms: Vec<TermSpec> = d
        .terms
        .iter()
        .map(|t| TermSpec { lambda: t.lambda, vectors: t.vectors.clone() })
        .collect();
    Ok(serde_json::to_string_pretty(&serde_json::json!({ "terms": terms }))?)
}
