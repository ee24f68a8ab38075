//! Request and response types of the query service, and the handlers that
//! answer them. The CLI and the HTTP server both go through these.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bbn::{BbnModel, BbnStructure, CptFallback, Evidence, Navigation, Posterior, Recommendation};
use crate::discretize::DiscretizationScheme;
use crate::error::{Error, Result};
use crate::sensitivity::{ScreeningReport, SensitivityResult};
use crate::space::{DesignSpace, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub structure: BbnStructure,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<DesignSpace>,
    pub bins: DiscretizationScheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningReport>,
    pub n_rows: usize,
    pub alpha: f64,
    pub fallback: CptFallback,
    pub config_hash: String,
}

pub fn model_summary(model: &BbnModel) -> ModelSummary {
    ModelSummary {
        structure: model.structure.clone(),
        space: model.metadata.space.clone(),
        bins: model.scheme.clone(),
        screening: model.metadata.screening.clone(),
        n_rows: model.metadata.n_rows,
        alpha: model.metadata.alpha,
        fallback: model.metadata.fallback,
        config_hash: model.metadata.config_hash.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub sensitivity: SensitivityResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningReport>,
}

pub fn sensitivity(model: &BbnModel) -> Result<SensitivitySummary> {
    let sensitivity = model
        .metadata
        .sensitivity
        .clone()
        .ok_or_else(|| Error::InvalidConfig("model carries no sensitivity results".into()))?;
    Ok(SensitivitySummary {
        sensitivity,
        screening: model.metadata.screening.clone(),
    })
}

pub fn bins(model: &BbnModel) -> DiscretizationScheme {
    model.scheme.clone()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRequest {
    #[serde(default)]
    pub evidence: Evidence,
    /// Defaults to every node without hard evidence.
    #[serde(default)]
    pub query: Option<Vec<String>>,
}

pub fn infer(model: &BbnModel, req: &InferRequest) -> Result<Posterior> {
    let query = match &req.query {
        Some(q) => q.clone(),
        None => model
            .structure
            .input_nodes
            .iter()
            .chain(&model.structure.output_nodes)
            .filter(|n| !req.evidence.hard.contains_key(*n))
            .cloned()
            .collect(),
    };
    model.infer(&req.evidence, &query)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigateRequest {
    /// Desired output ranges `[lo, hi]` in physical units.
    pub targets: IndexMap<String, [f64; 2]>,
    /// Inputs held at physical values (numbers, or category labels).
    #[serde(default)]
    pub fixed: IndexMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavigateResponse {
    pub posteriors: IndexMap<String, Vec<f64>>,
    pub evidence_probability: f64,
    pub recommendations: IndexMap<String, Recommendation>,
    /// Target bin sets the ranges resolved to.
    pub target_bins: IndexMap<String, Vec<usize>>,
    /// Fixed values outside their fitted range, clamped to the edge bin.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub clamped: Vec<String>,
}

pub fn navigate(model: &BbnModel, req: &NavigateRequest) -> Result<NavigateResponse> {
    let mut target_bins = IndexMap::new();
    for (name, [lo, hi]) in &req.targets {
        target_bins.insert(name.clone(), model.bins_for_range(name, *lo, *hi)?);
    }
    let mut fixed = IndexMap::new();
    let mut clamped = Vec::new();
    for (name, value) in &req.fixed {
        let lookup = model.bin_of_value(name, value)?;
        if lookup.out_of_range {
            clamped.push(name.clone());
        }
        fixed.insert(name.clone(), lookup.bin);
    }
    let Navigation {
        posteriors,
        evidence_probability,
        recommendations,
    } = model.navigate(&target_bins, &fixed)?;
    Ok(NavigateResponse {
        posteriors,
        evidence_probability,
        recommendations,
        target_bins,
        clamped,
    })
}

/// Client-facing classification of a library error.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request is malformed or names unknown things.
    BadRequest,
    /// Well-formed, but the evidence is impossible under the model.
    Unprocessable,
    /// The requested resource is absent from this model.
    NotFound,
    Internal,
}

pub fn classify(e: &Error) -> ErrorClass {
    match e {
        Error::UnknownVariable(_)
        | Error::InvalidEvidence(_)
        | Error::OutOfRange { .. }
        | Error::BinIndex { .. }
        | Error::IncompleteAssignment(_)
        | Error::ArityMismatch(_)
        | Error::Json(_) => ErrorClass::BadRequest,
        Error::InconsistentEvidence | Error::StateSpaceTooLarge { .. } => ErrorClass::Unprocessable,
        Error::InvalidConfig(_) => ErrorClass::NotFound,
        _ => ErrorClass::Internal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shapes() {
        let r: InferRequest =
            serde_json::from_str(r#"{"evidence":{"hard":{"a":1},"soft":{"y":[0,1]}},"query":["y"]}"#).unwrap();
        assert_eq!(r.evidence.hard["a"], 1);
        assert_eq!(r.evidence.soft["y"], vec![0, 1]);
        let empty: InferRequest = serde_json::from_str("{}").unwrap();
        assert!(empty.query.is_none());
        assert!(serde_json::from_str::<InferRequest>(r#"{"evidense":{}}"#).is_err());
        let n: NavigateRequest =
            serde_json::from_str(r#"{"targets":{"beng3":[60,80]},"fixed":{"A_floor":120,"system_type":"heat_pump"}}"#)
                .unwrap();
        assert_eq!(n.targets["beng3"], [60.0, 80.0]);
        assert_eq!(n.fixed["system_type"], Value::Label("heat_pump".into()));
        assert_eq!(n.fixed["A_floor"], Value::Real(120.0));
    }
}
