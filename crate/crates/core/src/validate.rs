//! Syntactic checks: JSON parse, OpenAPI 3.0 meta-schema, warning counts.

use std::sync::OnceLock;

use jsonschema::Validator;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

/// OpenAPI 3.0 meta-schema, release 2021-09-28.
pub const META_SCHEMA_VERSION: &str = "2021-09-28";
const META_SCHEMA: &str = include_str!("../schemas/oas-3.0-2021-09-28.json");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidateError {
    #[error("no documents to summarize")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub json_pointer: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub is_valid_json: bool,
    pub is_valid_oas: bool,
    pub warnings: Vec<Warning>,
    pub warning_count: usize,
    /// Parse error for invalid JSON.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntaxSummary {
    pub n_docs: usize,
    pub valid_json_ratio: f64,
    pub valid_oas_ratio: f64,
    pub avg_warnings: f64,
}

fn validator() -> &'static Validator {
    static V: OnceLock<Validator> = OnceLock::new();
    V.get_or_init(|| {
        let schema: Value = serde_json::from_str(META_SCHEMA).expect("bundled meta-schema is JSON");
        jsonschema::draft4::new(&schema).expect("bundled meta-schema compiles")
    })
}

pub fn check_value(doc: &Value) -> ValidationReport {
    let warnings: Vec<Warning> = validator()
        .iter_errors(doc)
        .map(|e| Warning { json_pointer: e.instance_path.as_str().to_string(), message: e.to_string() })
        .collect();
    ValidationReport {
        is_valid_json: true,
        is_valid_oas: warnings.is_empty(),
        warning_count: warnings.len(),
        warnings,
        json_error: None,
    }
}

pub fn check_document(text: &str) -> ValidationReport {
    match serde_json::from_str::<Value>(text) {
        Ok(v) => check_value(&v),
        Err(e) => ValidationReport {
            is_valid_json: false,
            is_valid_oas: false,
            warnings: Vec::new(),
            warning_count: 0,
            json_error: Some(e.to_string()),
        },
    }
}

/// Ratios over all documents; warnings averaged over JSON-valid ones only.
pub fn summarize(reports: &[ValidationReport]) -> Result<SyntaxSummary, ValidateError> {
    if reports.is_empty() {
        return Err(ValidateError::EmptyCorpus);
    }
    let n = reports.len() as f64;
    let json_ok: Vec<&ValidationReport> = reports.iter().filter(|r| r.is_valid_json).collect();
    let avg_warnings = if json_ok.is_empty() {
        0.0
    } else {
        json_ok.iter().map(|r| r.warning_count as f64).sum::<f64>() / json_ok.len() as f64
    };
    Ok(SyntaxSummary {
        n_docs: reports.len(),
        valid_json_ratio: json_ok.len() as f64 / n,
        valid_oas_ratio: reports.iter().filter(|r| r.is_valid_oas).count() as f64 / n,
        avg_warnings,
    })
}
