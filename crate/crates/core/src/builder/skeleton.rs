//! Skeleton generation from a parsed request example.

use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::oas::{ParamLocation, SecurityScheme};
use super::schema::{infer_primitive, SchemaType};
use crate::extractor::{HttpMethod, ParsedRequest};

pub const OPENAPI_VERSION: &str = "3.0.3";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonParameter {
    pub name: String,
    pub location: ParamLocation,
    pub schema_type: SchemaType,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OasSkeleton {
    pub openapi_version: String,
    pub title: String,
    pub version: String,
    pub servers: Vec<String>,
    pub path: String,
    pub method: HttpMethod,
    pub security_schemes: IndexMap<String, SecurityScheme>,
    pub parameters: Vec<SkeletonParameter>,
    pub has_request_body: bool,
    /// Media type of the example body, when there is one.
    pub request_media_type: Option<String>,
}

impl OasSkeleton {
    pub fn check(&self) -> Result<(), String> {
        if !self.path.starts_with('/') {
            return Err(format!("path `{}` must start with /", self.path));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if p.name.is_empty() {
                return Err("parameter with empty name".into());
            }
            if p.location == ParamLocation::Body {
                return Err(format!("parameter `{}` cannot live in the body", p.name));
            }
            if !seen.insert((p.name.as_str(), p.location)) {
                return Err(format!("duplicate parameter `{}` in {}", p.name, p.location));
            }
        }
        if self.has_request_body != self.request_media_type.is_some() {
            return Err("has_request_body disagrees with request_media_type".into());
        }
        Ok(())
    }
}

/// Headers that OpenAPI describes elsewhere (content negotiation, auth) or
/// that only describe the transport.
const TRANSPORT_HEADERS: &[&str] = &[
    "content-type",
    "accept",
    "content-length",
    "host",
    "user-agent",
    "authorization",
    "accept-encoding",
    "connection",
];

static PATH_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?:https?://[^\s/"'<>]+)?(/[^\s"'<>,;()\[\]]*)"#).unwrap());

fn is_api_key_header(name: &str) -> bool {
    let n = name.to_ascii_lowercase();
    ["api-key", "apikey", "api_key", "auth-token", "access-token", "x-token"].iter().any(|k| n.contains(k))
}

fn template_name(seg: &str) -> Option<&str> {
    if let Some(inner) = seg.strip_prefix('{').and_then(|s| s.strip_suffix('}')) {
        return Some(inner).filter(|s| !s.is_empty());
    }
    seg.strip_prefix(':').filter(|s| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_'))
}

fn segments(path: &str) -> Vec<&str> {
    path.trim_end_matches('/').split('/').skip(1).collect()
}

/// Matches a documented template such as `/info/{id}` or `/info/:id`
/// against a concrete path. Returns the normalized template and the bound
/// values when at least one segment is templated.
pub fn match_template(template: &str, concrete: &str) -> Option<(String, Vec<(String, String)>)> {
    let t = segments(template.split('?').next().unwrap_or(template));
    let c = segments(concrete);
    if t.len() != c.len() || t.is_empty() {
        return None;
    }
    let mut bound = Vec::new();
    let mut out = String::new();
    for (ts, cs) in t.iter().zip(&c) {
        out.push('/');
        match template_name(ts) {
            Some(name) => {
                out.push_str(&format!("{{{name}}}"));
                bound.push((name.to_string(), cs.to_string()));
            }
            None if ts == cs => out.push_str(ts),
            None => return None,
        }
    }
    (!bound.is_empty()).then_some((out, bound))
}

/// Path templates found in free text, in order of appearance.
pub fn template_candidates(text: &str) -> Vec<String> {
    PATH_TOKEN
        .captures_iter(text)
        .map(|c| c[1].trim_end_matches(['.', ':', '?']).to_string())
        .filter(|p| p.contains('{') || p.contains("/:"))
        .collect()
}

/// Builds the skeleton. `template_hints` are documentation texts searched
/// for a path template matching the example path; the example's own path
/// is consulted first.
pub fn generate_skeleton(request: &ParsedRequest, template_hints: &[&str]) -> OasSkeleton {
    let mut path = request.path.clone();
    if path.is_empty() {
        path.push('/');
    }
    let mut parameters: Vec<SkeletonParameter> = Vec::new();
    let push = |params: &mut Vec<SkeletonParameter>, p: SkeletonParameter| {
        if !params.iter().any(|q| q.name == p.name && q.location == p.location) {
            params.push(p);
        }
    };

    let own: Vec<(String, String)> =
        segments(&path).into_iter().filter_map(|s| template_name(s).map(|n| (n.to_string(), s.to_string()))).collect();
    if !own.is_empty() {
        let (templated, _) = match_template(&path, &path).expect("path matches itself");
        path = templated;
        for (name, _) in own {
            push(
                &mut parameters,
                SkeletonParameter {
                    name,
                    location: ParamLocation::Path,
                    schema_type: SchemaType::String,
                    required: true,
                },
            );
        }
    } else if let Some((templated, bound)) =
        template_hints.iter().flat_map(|h| template_candidates(h)).find_map(|cand| match_template(&cand, &path))
    {
        path = templated;
        for (name, value) in bound {
            push(
                &mut parameters,
                SkeletonParameter {
                    name,
                    location: ParamLocation::Path,
                    schema_type: infer_primitive(&value),
                    required: true,
                },
            );
        }
    }

    for (name, value) in &request.query_params {
        push(
            &mut parameters,
            SkeletonParameter {
                name: name.clone(),
                location: ParamLocation::Query,
                schema_type: infer_primitive(value),
                required: false,
            },
        );
    }

    let mut security_schemes = IndexMap::new();
    for (name, value) in &request.header_params {
        let lower = name.to_ascii_lowercase();
        if lower == "authorization" {
            let scheme = value.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
            let (key, s) = match scheme.as_str() {
                "bearer" => ("bearerAuth", SecurityScheme::Http { scheme: "bearer".into() }),
                "basic" => ("basicAuth", SecurityScheme::Http { scheme: "basic".into() }),
                _ => ("apiKeyAuth", SecurityScheme::ApiKey { name: name.clone(), location: "header".into() }),
            };
            security_schemes.insert(key.to_string(), s);
        } else if is_api_key_header(name) {
            security_schemes.insert(
                "apiKeyAuth".to_string(),
                SecurityScheme::ApiKey { name: name.clone(), location: "header".into() },
            );
        } else if !TRANSPORT_HEADERS.contains(&lower.as_str()) {
            push(
                &mut parameters,
                SkeletonParameter {
                    name: name.clone(),
                    location: ParamLocation::Header,
                    schema_type: infer_primitive(value),
                    required: false,
                },
            );
        }
    }

    let request_media_type = request.body.as_ref().map(|body| {
        if request.body_is_json {
            "application/json".to_string()
        } else if body.contains('=') && !body.contains(char::is_whitespace) {
            "application/x-www-form-urlencoded".to_string()
        } else {
            "text/plain".to_string()
        }
    });

    let title = url::Url::parse(&request.server)
        .ok()
        .and_then(|u| u.host_str().map(|h| format!("{h} API")))
        .unwrap_or_else(|| "API".to_string());

    OasSkeleton {
        openapi_version: OPENAPI_VERSION.to_string(),
        title,
        version: "1.0.0".to_string(),
        servers: if request.server.is_empty() { Vec::new() } else { vec![request.server.clone()] },
        path,
        method: request.method,
        security_schemes,
        parameters,
        has_request_body: request_media_type.is_some(),
        request_media_type,
    }
}
