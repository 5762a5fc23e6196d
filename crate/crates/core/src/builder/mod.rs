//! Base document construction: skeleton, example segmentation, schema
//! inference and embedding.

mod oas;
mod schema;
mod segment;
mod skeleton;

use thiserror::Error;

pub use oas::{
    build_base_oas, build_base_oas_with_body, param_key, OasDocument, Operation, ParamLocation, Parameter, Provenance,
    RequestBody, ResponseSpec, SecurityScheme,
};
pub use schema::{aggregate_segments, infer_primitive, infer_value, JsonSchemaNode, MergeWarning, SchemaType};
pub use segment::{segment_example, Segment, DEFAULT_LINE_THRESHOLD};
pub use skeleton::{
    generate_skeleton, match_template, template_candidates, OasSkeleton, SkeletonParameter, OPENAPI_VERSION,
};

use crate::gateway::{build_prompt, Gateway, GatewayError, TaskKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("line threshold must be at least 1")]
    InvalidThreshold,
    #[error("example is not JSON: {0}")]
    NotJson(String),
    #[error("inconsistent segment prefixes: {0}")]
    InconsistentPrefixes(String),
    #[error("schema generation failed: {0}")]
    Generation(String),
}

impl From<GatewayError> for BuildError {
    fn from(e: GatewayError) -> Self {
        BuildError::Generation(e.to_string())
    }
}

fn parse_generated(text: &str) -> Result<JsonSchemaNode, BuildError> {
    crate::enrich::parse_response_schema(text).map(|s| s.root).map_err(|e| BuildError::Generation(e.to_string()))
}

/// Schema for one segment through the gateway.
pub fn infer_schema(segment: &Segment, gateway: &Gateway) -> Result<JsonSchemaNode, BuildError> {
    let job = gateway.job(TaskKind::Schema, build_prompt(TaskKind::Schema, &[], &segment.text), segment.text.clone());
    parse_generated(&gateway.run(&job)?)
}

/// Segments `json_text`, infers every segment (concurrently, within the
/// gateway's bound) and aggregates the parts.
pub fn infer_document(
    json_text: &str,
    line_threshold: usize,
    gateway: &Gateway,
) -> Result<(JsonSchemaNode, Vec<MergeWarning>), BuildError> {
    let segments = segment_example(json_text, line_threshold)?;
    let jobs: Vec<_> = segments
        .iter()
        .map(|s| gateway.job(TaskKind::Schema, build_prompt(TaskKind::Schema, &[], &s.text), s.text.clone()))
        .collect();
    let mut parts = Vec::with_capacity(segments.len());
    for (seg, out) in segments.iter().zip(gateway.run_all(&jobs)) {
        parts.push((seg.json_pointer_prefix.clone(), parse_generated(&out?)?));
    }
    aggregate_segments(&parts)
}
