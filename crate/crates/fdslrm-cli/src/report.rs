//! JSON report emitted by `fdslrm fit` (schema `fdslrm-report/1`).

use fdslrm::{EstimationResult, ModelConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "fdslrm-report/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    /// Echo of the model configuration; re-parses to the fitted model.
    pub model: ModelConfig,
    pub n: usize,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub estimate: Vec<f64>,
    /// Euclidean norm of the estimate vector.
    pub norm: f64,
    pub time_ns: u128,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negative: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub boundary_tie: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_pattern: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systems_tried: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    /// Stage-one method of an EBLUP-NE run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Shrinkage factors of an EBLUP-NE run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
}

pub fn norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl MethodReport {
    pub fn from_result(res: &EstimationResult<f64>, time_ns: u128) -> Self {
        MethodReport {
            method: res.method.name().to_string(),
            estimate: res.estimate.clone(),
            norm: norm(&res.estimate),
            time_ns,
            negative: res.has_negative,
            degenerate: res.degenerate,
            boundary_tie: res.boundary_tie,
            active_pattern: res.active_pattern.clone(),
            systems_tried: res.systems_tried,
            log_likelihood: res.log_likelihood,
            initial: None,
            rho: None,
        }
    }
}
