//! Response enrichment schemas.

use serde_json::Value;

use super::EnrichError;
use crate::builder::JsonSchemaNode;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseEnrichmentSchema {
    pub root: JsonSchemaNode,
}

/// Removes a surrounding Markdown code fence (with optional language tag).
pub fn strip_code_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

pub fn parse_response_schema(text: &str) -> Result<ResponseEnrichmentSchema, EnrichError> {
    let v: Value =
        serde_json::from_str(strip_code_fences(text)).map_err(|e| EnrichError::MalformedSchema(e.to_string()))?;
    let root = JsonSchemaNode::from_value(&v).map_err(EnrichError::MalformedSchema)?;
    Ok(ResponseEnrichmentSchema { root })
}
