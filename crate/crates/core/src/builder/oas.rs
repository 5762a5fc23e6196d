//! The single-endpoint OpenAPI document under construction.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::schema::{JsonSchemaNode, SchemaType};
use super::skeleton::OasSkeleton;
use crate::extractor::HttpMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    Body,
}

impl ParamLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamLocation::Path => "path",
            ParamLocation::Query => "query",
            ParamLocation::Header => "header",
            ParamLocation::Body => "body",
        }
    }

    /// Lenient parse of a generated location cell.
    pub fn normalize(s: &str) -> Option<ParamLocation> {
        let s = s.trim().to_ascii_lowercase();
        let loc = match s.as_str() {
            "path" | "url" | "path parameter" | "uri" => ParamLocation::Path,
            "query" | "querystring" | "query string" | "query parameter" | "url query" => ParamLocation::Query,
            "header" | "headers" | "http header" => ParamLocation::Header,
            "body" | "json" | "form" | "formdata" | "form data" | "request body" | "payload" | "json body" => {
                ParamLocation::Body
            }
            _ => return None,
        };
        Some(loc)
    }
}

impl fmt::Display for ParamLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum SecurityScheme {
    Http {
        scheme: String,
    },
    ApiKey {
        name: String,
        #[serde(rename = "in")]
        location: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Base,
    Enrichment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub location: ParamLocation,
    pub required: bool,
    pub schema: JsonSchemaNode,
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestBody {
    pub media_type: String,
    pub schema: JsonSchemaNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSpec {
    pub description: String,
    /// JSON schema of the body; absent for non-JSON or empty bodies.
    pub schema: Option<JsonSchemaNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operation {
    pub parameters: Vec<Parameter>,
    pub request_body: Option<RequestBody>,
    pub responses: IndexMap<String, ResponseSpec>,
    pub security: Vec<String>,
}

impl Operation {
    /// Status key of the response that carries the documented payload.
    pub fn primary_status(&self) -> Option<&str> {
        self.responses
            .keys()
            .map(String::as_str)
            .find(|s| s.starts_with('2'))
            .or_else(|| self.responses.keys().next().map(String::as_str))
    }

    pub fn primary_response_schema_mut(&mut self) -> Option<&mut JsonSchemaNode> {
        let key = self.primary_status()?.to_string();
        self.responses.get_mut(&key)?.schema.as_mut()
    }
}

/// One endpoint's OpenAPI document plus per-field provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct OasDocument {
    pub openapi: String,
    pub title: String,
    pub version: String,
    pub servers: Vec<String>,
    pub path: String,
    pub method: HttpMethod,
    pub operation: Operation,
    pub security_schemes: IndexMap<String, SecurityScheme>,
    /// Keys are `param:<in>:<name>:<field>`, `body:<dotted>:<field>` or
    /// `response:<dotted>:<field>`.
    pub provenance: BTreeMap<String, Provenance>,
}

pub fn param_key(loc: ParamLocation, name: &str, field: &str) -> String {
    format!("param:{loc}:{name}:{field}")
}

impl OasDocument {
    /// Stable output file stem: `<method>_<sanitized-path>`.
    pub fn file_stem(&self) -> String {
        let mut s = String::new();
        for c in self.path.chars() {
            if c.is_ascii_alphanumeric() {
                s.push(c.to_ascii_lowercase());
            } else if !s.ends_with('_') {
                s.push('_');
            }
        }
        let s = s.trim_matches('_');
        let s = if s.is_empty() { "root" } else { s };
        format!("{}_{}", self.method, s)
    }

    /// Marks every present field as `base` unless already marked.
    pub fn mark_all(&mut self, origin: Provenance) {
        let mut keys = Vec::new();
        for p in &self.operation.parameters {
            keys.push(param_key(p.location, &p.name, "type"));
            keys.push(param_key(p.location, &p.name, "location"));
            keys.push(param_key(p.location, &p.name, "required"));
            if p.description.is_some() {
                keys.push(param_key(p.location, &p.name, "description"));
            }
        }
        if let Some(body) = &self.operation.request_body {
            schema_keys("body", &body.schema, &mut keys);
        }
        if let Some(status) = self.operation.primary_status() {
            if let Some(schema) = &self.operation.responses[status].schema {
                schema_keys("response", schema, &mut keys);
            }
        }
        for k in keys {
            self.provenance.entry(k).or_insert(origin);
        }
    }

    pub fn to_value(&self) -> Value {
        let mut op = Map::new();
        if !self.operation.parameters.is_empty() {
            let params: Vec<Value> = self.operation.parameters.iter().map(parameter_value).collect();
            op.insert("parameters".into(), Value::Array(params));
        }
        if let Some(body) = &self.operation.request_body {
            op.insert(
                "requestBody".into(),
                json!({"required": true, "content": {body.media_type.clone(): {"schema": body.schema.to_value()}}}),
            );
        }
        let mut responses = Map::new();
        for (status, r) in &self.operation.responses {
            let mut rv = Map::new();
            rv.insert("description".into(), Value::String(r.description.clone()));
            if let Some(schema) = &r.schema {
                rv.insert("content".into(), json!({"application/json": {"schema": schema.to_value()}}));
            }
            responses.insert(status.clone(), Value::Object(rv));
        }
        op.insert("responses".into(), Value::Object(responses));
        if !self.operation.security.is_empty() {
            let sec: Vec<Value> = self.operation.security.iter().map(|s| json!({s.clone(): []})).collect();
            op.insert("security".into(), Value::Array(sec));
        }

        let mut root = Map::new();
        root.insert("openapi".into(), Value::String(self.openapi.clone()));
        root.insert("info".into(), json!({"title": self.title, "version": self.version}));
        if !self.servers.is_empty() {
            let servers: Vec<Value> = self.servers.iter().map(|s| json!({"url": s})).collect();
            root.insert("servers".into(), Value::Array(servers));
        }
        root.insert("paths".into(), json!({self.path.clone(): {self.method.as_str(): Value::Object(op)}}));
        if !self.security_schemes.is_empty() {
            let schemes = serde_json::to_value(&self.security_schemes).expect("security schemes serialize");
            root.insert("components".into(), json!({"securitySchemes": schemes}));
        }
        if !self.provenance.is_empty() {
            let prov = serde_json::to_value(&self.provenance).expect("provenance serializes");
            root.insert("x-provenance".into(), prov);
        }
        Value::Object(root)
    }

    /// Canonical 2-space JSON with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn to_yaml_string(&self) -> String {
        serde_yaml::to_string(&self.to_value()).expect("document serializes")
    }
}

fn schema_keys(side: &str, schema: &JsonSchemaNode, out: &mut Vec<String>) {
    fn walk(side: &str, node: &JsonSchemaNode, prefix: &str, out: &mut Vec<String>) {
        let obj = node.object_view();
        for (k, child) in &obj.properties {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if child.schema_type.is_some() {
                out.push(format!("{side}:{path}:type"));
            }
            out.push(format!("{side}:{path}:required"));
            if child.description.is_some() {
                out.push(format!("{side}:{path}:description"));
            }
            walk(side, child, &path, out);
        }
    }
    walk(side, schema, "", out);
}

fn parameter_value(p: &Parameter) -> Value {
    let mut m = Map::new();
    m.insert("name".into(), Value::String(p.name.clone()));
    m.insert("in".into(), Value::String(p.location.as_str().into()));
    if let Some(d) = &p.description {
        m.insert("description".into(), Value::String(d.clone()));
    }
    if p.required || p.location == ParamLocation::Path {
        m.insert("required".into(), Value::Bool(true));
    }
    m.insert("schema".into(), p.schema.to_value());
    Value::Object(m)
}

fn form_schema(body: &str) -> JsonSchemaNode {
    let mut node = JsonSchemaNode::of_type(SchemaType::Object);
    for (k, v) in url::form_urlencoded::parse(body.as_bytes()) {
        if !node.properties.contains_key(k.as_ref()) {
            node.properties.insert(k.to_string(), JsonSchemaNode::of_type(super::schema::infer_primitive(&v)));
            node.required.push(k.to_string());
        }
    }
    node
}

/// Embeds request/response schemas into the skeleton. Returns the document
/// and any warnings (e.g. a body schema supplied for a GET).
pub fn build_base_oas(
    skeleton: &OasSkeleton,
    request_schema: Option<JsonSchemaNode>,
    response_schema: Option<JsonSchemaNode>,
    response_status: Option<u16>,
) -> (OasDocument, Vec<String>) {
    build_base_oas_with_body(skeleton, request_schema, None, response_schema, response_status)
}

/// Like [`build_base_oas`], additionally taking the raw body text so
/// non-JSON bodies (form encoded, plain text) still get a schema.
pub fn build_base_oas_with_body(
    skeleton: &OasSkeleton,
    request_schema: Option<JsonSchemaNode>,
    raw_body: Option<&str>,
    response_schema: Option<JsonSchemaNode>,
    response_status: Option<u16>,
) -> (OasDocument, Vec<String>) {
    let mut warnings = Vec::new();
    let parameters = skeleton
        .parameters
        .iter()
        .map(|p| Parameter {
            name: p.name.clone(),
            location: p.location,
            required: p.required || p.location == ParamLocation::Path,
            schema: JsonSchemaNode::of_type(p.schema_type),
            description: None,
        })
        .collect();

    let request_body = if matches!(skeleton.method, HttpMethod::Get | HttpMethod::Head) {
        if request_schema.is_some() || skeleton.has_request_body {
            warnings.push(format!("ignoring request body on {} operation", skeleton.method));
        }
        None
    } else {
        match (&skeleton.request_media_type, request_schema) {
            (Some(media), Some(schema)) => Some(RequestBody { media_type: media.clone(), schema }),
            (Some(media), None) => {
                let schema = match (media.as_str(), raw_body) {
                    ("application/x-www-form-urlencoded", Some(b)) => form_schema(b),
                    _ => JsonSchemaNode::of_type(SchemaType::String),
                };
                Some(RequestBody { media_type: media.clone(), schema })
            }
            (None, Some(_)) => {
                warnings.push("request schema supplied but the example has no body; ignoring it".into());
                None
            }
            (None, None) => None,
        }
    };

    let status = match response_status {
        Some(s) if (400..600).contains(&s) => s.to_string(),
        _ => "200".to_string(),
    };
    let description = if status.starts_with('2') { "Successful response" } else { "Error response" };
    let mut responses = IndexMap::new();
    responses.insert(status, ResponseSpec { description: description.to_string(), schema: response_schema });

    let mut doc = OasDocument {
        openapi: skeleton.openapi_version.clone(),
        title: skeleton.title.clone(),
        version: skeleton.version.clone(),
        servers: skeleton.servers.clone(),
        path: skeleton.path.clone(),
        method: skeleton.method,
        operation: Operation {
            parameters,
            request_body,
            responses,
            security: skeleton.security_schemes.keys().cloned().collect(),
        },
        security_schemes: skeleton.security_schemes.clone(),
        provenance: BTreeMap::new(),
    };
    doc.mark_all(Provenance::Base);
    (doc, warnings)
}
