//! Frozen prompt templates.

use super::{IclExample, TaskKind};

const SKELETON: &str = "Read the HTTP request example below and describe the endpoint it calls. \
Answer with one JSON object with the keys openapi_version, title, version, servers, path, method, \
security_schemes, parameters, has_request_body and request_media_type. Each parameter has the keys \
name, location (path, query or header), schema_type and required.";

const SCHEMA: &str = "Write an OpenAPI 3.0 schema object in JSON that describes the JSON fragment below. \
Use the types object, array, string, number, integer and boolean. Mark null values with nullable. \
List every observed key of an object in its required list. Answer with the schema only.";

const REQUEST_ENRICHMENT: &str = "Extract every request parameter documented in the HTML below. \
Answer with a TSV table whose first line is the header name\ttype\trequired\tlocation\tdescription \
and with one row per parameter. type is one of string, integer, number, boolean, array or object. \
required is true or false. location is one of path, query, header or body. Copy the description \
from the documentation. Only list parameters whose names appear in the HTML.";

const RESPONSE_ENRICHMENT: &str = "Describe the response body documented in the HTML below as an \
OpenAPI 3.0 schema object in JSON. Nest objects with properties, give every object its own required \
list and copy each field description. Only include fields whose names appear in the HTML.";

pub fn instruction(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Skeleton => SKELETON,
        TaskKind::Schema => SCHEMA,
        TaskKind::RequestEnrichment => REQUEST_ENRICHMENT,
        TaskKind::ResponseEnrichment => RESPONSE_ENRICHMENT,
    }
}

/// Instruction, then one demonstration per example in the given order,
/// then the new input followed by the output cue.
pub fn build_prompt(task: TaskKind, icl: &[&IclExample], input_payload: &str) -> String {
    let mut out = String::new();
    out.push_str(instruction(task));
    out.push_str("\n\n");
    for (i, ex) in icl.iter().enumerate() {
        out.push_str(&format!(
            "### Example {}\nInput:\n{}\nOutput:\n{}\n\n",
            i + 1,
            ex.input_html.trim(),
            ex.expected_output.trim()
        ));
    }
    out.push_str(&format!("### Task\nInput:\n{}\nOutput:\n", input_payload.trim()));
    out
}
