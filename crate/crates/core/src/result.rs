//! Result records shared by every engine.

use serde::Serialize;

use crate::model::{Degree, DomainBox};

/// Which computation produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Gradient integral without the `4^d` factor.
    ClosedIntegral,
    /// Gradient integral, expectation over Z, times `4^d`.
    ClosedIntegralNormalized,
    /// Weighted integral over Z with `f_Z^r`.
    WeightedExpectation,
    VariationalOracle,
    Signed,
    SignedNormalized,
    ChangeOfVariables,
    Discrete,
    DiscreteOracle,
    GridRefinement,
    DataDriven,
}

/// A computed effect with enough metadata to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeaceResult {
    pub value: f64,
    pub degree: f64,
    pub method: Method,
    pub err_estimate: f64,
    /// Boxes actually integrated (after truncation); empty for discrete models.
    pub domain: Vec<DomainBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PeaceResult {
    pub fn new(value: f64, d: Degree, method: Method) -> Self {
        PeaceResult {
            value,
            degree: d.value(),
            method,
            err_estimate: 0.0,
            domain: Vec::new(),
            stderr: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_err(mut self, err: f64) -> Self {
        self.err_estimate = err;
        self
    }

    pub fn with_domain(mut self, domain: Vec<DomainBox>) -> Self {
        self.domain = domain;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}
