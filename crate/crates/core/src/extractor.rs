//! Example-style documentation: cURL / HTTP-line requests, JSON responses,
//! and their pairing by DOM proximity.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use percent_encoding::percent_decode_str;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::ingest::{DomTree, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("malformed request example: {0}")]
    MalformedExample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
    Head,
    Options,
}

impl HttpMethod {
    pub const ALL: [HttpMethod; 7] = [
        HttpMethod::Get,
        HttpMethod::Post,
        HttpMethod::Put,
        HttpMethod::Patch,
        HttpMethod::Delete,
        HttpMethod::Head,
        HttpMethod::Options,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "get",
            HttpMethod::Post => "post",
            HttpMethod::Put => "put",
            HttpMethod::Patch => "patch",
            HttpMethod::Delete => "delete",
            HttpMethod::Head => "head",
            HttpMethod::Options => "options",
        }
    }

    pub fn allows_body(self) -> bool {
        !matches!(self, HttpMethod::Get | HttpMethod::Head | HttpMethod::Delete | HttpMethod::Options)
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HttpMethod {
    type Err = ExtractError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HttpMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ExtractError::MalformedExample(format!("unsupported method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRequest {
    pub method: HttpMethod,
    /// `scheme://authority`, empty when the example names no host.
    pub server: String,
    pub path: String,
    pub query_params: Vec<(String, String)>,
    pub header_params: Vec<(String, String)>,
    pub body: Option<String>,
    pub body_is_json: bool,
}

impl ParsedRequest {
    /// Rebuilds the request URL from its parts.
    pub fn url(&self) -> String {
        let mut url = format!("{}{}", self.server, self.path);
        if !self.query_params.is_empty() {
            let query = url::form_urlencoded::Serializer::new(String::new()).extend_pairs(&self.query_params).finish();
            url.push('?');
            url.push_str(&query);
        }
        url
    }

    pub fn body_json(&self) -> Option<Value> {
        if !self.body_is_json {
            return None;
        }
        self.body.as_deref().and_then(|b| serde_json::from_str(b).ok())
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.header_params.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestExample {
    pub node_id: NodeId,
    pub raw_text: String,
    pub parsed: ParsedRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseExample {
    pub node_id: NodeId,
    /// Body text with any HTTP status preamble removed.
    pub raw_text: String,
    pub is_json: bool,
    pub status: Option<u16>,
}

impl ResponseExample {
    pub fn json(&self) -> Option<Value> {
        if self.is_json {
            serde_json::from_str(&self.raw_text).ok()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointExamplePair {
    pub request: RequestExample,
    pub response: Option<ResponseExample>,
}

static CURL_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:\$[ \t]*)?curl\b").unwrap());
static METHOD_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(GET|POST|PUT|PATCH|DELETE|HEAD|OPTIONS)[ \t]+(https?://\S+|/\S*)(?:[ \t]+HTTP/[\d.]+)?[ \t]*$")
        .unwrap()
});
static STATUS_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^HTTP/\d(?:\.\d)?[ \t]+(\d{3})\b").unwrap());
static CONTINUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\\[ \t]*\r?\n").unwrap());

/// Parses a cURL command or a `METHOD URL` request line.
pub fn parse_curl(text: &str) -> Result<ParsedRequest, ExtractError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ExtractError::MalformedExample("empty example".into()));
    }
    if let Some(m) = CURL_START.find(trimmed) {
        return parse_curl_command(&trimmed[m.start()..]);
    }
    let first = trimmed.lines().next().unwrap_or_default().trim();
    if METHOD_LINE.is_match(first) {
        return parse_http_message(trimmed);
    }
    Err(ExtractError::MalformedExample("neither a curl command nor a request line".into()))
}

const FLAGS_WITH_VALUE: &[&str] = &[
    "-o",
    "--output",
    "-A",
    "--user-agent",
    "-b",
    "--cookie",
    "-c",
    "--cookie-jar",
    "-e",
    "--referer",
    "-m",
    "--max-time",
    "--connect-timeout",
    "-T",
    "--upload-file",
    "-x",
    "--proxy",
    "--cacert",
    "--cert",
    "--key",
    "-w",
    "--write-out",
    "-r",
    "--range",
    "--retry",
    "-K",
    "--config",
    "-E",
    "--resolve",
    "--limit-rate",
    "--max-redirs",
];
const DATA_FLAGS: &[&str] =
    &["-d", "--data", "--data-raw", "--data-binary", "--data-ascii", "--data-urlencode", "--json"];
const FORM_FLAGS: &[&str] = &["-F", "--form"];

fn parse_curl_command(text: &str) -> Result<ParsedRequest, ExtractError> {
    let malformed = |m: &str| ExtractError::MalformedExample(m.to_string());
    let joined = CONTINUATION.replace_all(text, " ");
    let joined = joined.trim_start().trim_start_matches('$').trim_start();
    let tokens = shlex::split(joined).ok_or_else(|| malformed("unbalanced quoting"))?;
    let mut it = tokens.into_iter();
    if it.next().as_deref() != Some("curl") {
        return Err(malformed("missing curl token"));
    }

    let mut method: Option<String> = None;
    let mut headers = Vec::new();
    let mut data: Vec<String> = Vec::new();
    let mut url: Option<String> = None;
    let mut get_mode = false;
    let mut head_mode = false;

    let take = |it: &mut std::vec::IntoIter<String>, flag: &str| {
        it.next().ok_or_else(|| ExtractError::MalformedExample(format!("flag {flag} needs a value")))
    };

    while let Some(tok) = it.next() {
        if matches!(tok.as_str(), "|" | "&&" | ";" | "||") {
            break;
        }
        let (flag, inline) = split_flag(&tok);
        match flag {
            "-X" | "--request" => method = Some(inline.map_or_else(|| take(&mut it, flag), Ok)?),
            "-H" | "--header" => {
                let h = inline.map_or_else(|| take(&mut it, flag), Ok)?;
                if let Some((k, v)) = h.split_once(':') {
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            "-u" | "--user" => {
                let cred = inline.map_or_else(|| take(&mut it, flag), Ok)?;
                headers.push(("Authorization".to_string(), format!("Basic {cred}")));
            }
            "--url" => url = Some(inline.map_or_else(|| take(&mut it, flag), Ok)?),
            "-G" | "--get" => get_mode = true,
            "-I" | "--head" => head_mode = true,
            f if DATA_FLAGS.contains(&f) => {
                data.push(inline.map_or_else(|| take(&mut it, flag), Ok)?);
                if f == "--json" {
                    headers.push(("Content-Type".into(), "application/json".into()));
                }
            }
            f if FORM_FLAGS.contains(&f) => data.push(inline.map_or_else(|| take(&mut it, flag), Ok)?),
            f if FLAGS_WITH_VALUE.contains(&f) => {
                if inline.is_none() {
                    take(&mut it, flag)?;
                }
            }
            _ if tok.starts_with('-') && tok.len() > 1 => {}
            _ => {
                if url.is_none() {
                    url = Some(tok);
                }
            }
        }
    }

    let url = url.ok_or_else(|| malformed("no URL in curl command"))?;
    let method = match method {
        Some(m) => m.parse()?,
        None if head_mode => HttpMethod::Head,
        None if !data.is_empty() && !get_mode => HttpMethod::Post,
        None => HttpMethod::Get,
    };
    let (server, path, mut query) = split_url(&url)?;
    let body = if data.is_empty() {
        None
    } else if get_mode {
        for d in &data {
            query.extend(url::form_urlencoded::parse(d.as_bytes()).into_owned());
        }
        None
    } else {
        Some(data.join("&"))
    };
    Ok(finish(method, server, path, query, headers, body))
}

/// Splits `-XPOST`, `--request=POST` and `-H'..'` into flag and value.
fn split_flag(tok: &str) -> (&str, Option<String>) {
    if let Some(rest) = tok.strip_prefix("--") {
        if let Some((f, v)) = rest.split_once('=') {
            return (&tok[..f.len() + 2], Some(v.to_string()));
        }
        return (tok, None);
    }
    let attached = ["-X", "-H", "-d", "-u", "-F"];
    for f in attached {
        if tok.len() > 2 && tok.starts_with(f) {
            return (f, Some(tok[2..].to_string()));
        }
    }
    (tok, None)
}

fn parse_http_message(text: &str) -> Result<ParsedRequest, ExtractError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default().trim();
    let caps = METHOD_LINE.captures(first).ok_or_else(|| ExtractError::MalformedExample("bad request line".into()))?;
    let method: HttpMethod = caps[1].parse()?;
    let target = caps[2].to_string();

    let mut headers = Vec::new();
    let mut body_lines = Vec::new();
    let mut in_body = false;
    for line in lines {
        if in_body {
            body_lines.push(line);
        } else if line.trim().is_empty() {
            in_body = true;
        } else if let Some((k, v)) = line.split_once(':').filter(|(k, _)| !k.trim().contains(' ')) {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        } else {
            in_body = true;
            body_lines.push(line);
        }
    }
    let body = Some(body_lines.join("\n").trim().to_string()).filter(|b| !b.is_empty());

    let (server, path, query) = if target.starts_with('/') {
        let host = headers.iter().find(|(k, _)| k.eq_ignore_ascii_case("host")).map(|(_, v)| v.clone());
        match host {
            Some(h) => split_url(&format!("https://{h}{target}"))?,
            None => {
                let (_, path, query) = split_url(&format!("http://placeholder.invalid{target}"))?;
                (String::new(), path, query)
            }
        }
    } else {
        split_url(&target)?
    };
    headers.retain(|(k, _)| !k.eq_ignore_ascii_case("host"));
    Ok(finish(method, server, path, query, headers, body))
}

type UrlParts = (String, String, Vec<(String, String)>);

fn split_url(raw: &str) -> Result<UrlParts, ExtractError> {
    let with_scheme = if raw.contains("://") { raw.to_string() } else { format!("http://{raw}") };
    let url = Url::parse(&with_scheme).map_err(|e| ExtractError::MalformedExample(format!("bad url `{raw}`: {e}")))?;
    let host = url.host_str().ok_or_else(|| ExtractError::MalformedExample(format!("url `{raw}` has no host")))?;
    let server = match url.port() {
        Some(p) => format!("{}://{}:{}", url.scheme(), host, p),
        None => format!("{}://{}", url.scheme(), host),
    };
    let path = percent_decode_str(url.path()).decode_utf8_lossy().into_owned();
    let query = url.query_pairs().into_owned().collect();
    Ok((server, path, query))
}

fn finish(
    method: HttpMethod,
    server: String,
    path: String,
    query_params: Vec<(String, String)>,
    header_params: Vec<(String, String)>,
    body: Option<String>,
) -> ParsedRequest {
    let body_is_json = body
        .as_deref()
        .and_then(|b| serde_json::from_str::<Value>(b).ok())
        .is_some_and(|v| v.is_object() || v.is_array());
    ParsedRequest { method, server, path, query_params, header_params, body, body_is_json }
}

fn code_like_nodes(tree: &DomTree) -> impl Iterator<Item = NodeId> + '_ {
    tree.nodes()
        .filter(|n| n.visible)
        .filter(move |n| {
            n.tag == "pre"
                || (n.tag == "code"
                    && !tree.ancestors(n.node_id).any(|a| matches!(tree.node(a).tag.as_str(), "pre" | "code")))
        })
        .map(|n| n.node_id)
}

fn detect_request(tree: &DomTree, id: NodeId) -> Option<RequestExample> {
    let text = tree.raw_text(id);
    let trimmed = text.trim();
    let start = if let Some(m) = CURL_START.find(trimmed) {
        m.start()
    } else {
        let first = trimmed.lines().next()?.trim();
        // inline `GET /path` mentions are endpoint labels, not examples
        let is_block = tree.node(id).tag == "pre";
        if !METHOD_LINE.is_match(first) || !(is_block || first.contains("://") || first.contains("HTTP/")) {
            return None;
        }
        0
    };
    let raw_text = trimmed[start..].to_string();
    let parsed = parse_curl(&raw_text).ok()?;
    Some(RequestExample { node_id: id, raw_text, parsed })
}

/// Code-like elements whose text is a parseable cURL or HTTP request.
pub fn find_request_examples(tree: &DomTree) -> Vec<RequestExample> {
    code_like_nodes(tree).filter_map(|id| detect_request(tree, id)).collect()
}

/// Splits an optional `HTTP/1.1 200 OK` preamble (and its headers) from a body.
pub fn strip_status_preamble(text: &str) -> (Option<u16>, &str) {
    let trimmed = text.trim();
    let Some(caps) = STATUS_LINE.captures(trimmed) else { return (None, trimmed) };
    let status = caps[1].parse().ok();
    let mut offset = 0;
    let mut first = true;
    for line in trimmed.split_inclusive('\n') {
        let l = line.trim();
        let is_header =
            !first && l.split_once(':').is_some_and(|(k, _)| !k.is_empty() && !k.contains([' ', '{', '[', '"']));
        if first || is_header {
            offset += line.len();
            first = false;
            continue;
        }
        if l.is_empty() {
            offset += line.len();
        }
        break;
    }
    (status, trimmed[offset.min(trimmed.len())..].trim())
}

fn detect_response(tree: &DomTree, id: NodeId) -> Option<ResponseExample> {
    let text = tree.raw_text(id);
    let (status, body) = strip_status_preamble(&text);
    if body.is_empty() {
        return None;
    }
    let is_json = serde_json::from_str::<Value>(body).is_ok_and(|v| v.is_object() || v.is_array());
    let looks_xml = body.starts_with('<');
    if !is_json && status.is_none() && !looks_xml {
        return None;
    }
    Some(ResponseExample { node_id: id, raw_text: body.to_string(), is_json, status })
}

/// Code-like elements holding a response body (JSON, or a non-JSON body
/// behind an explicit status line / XML), excluding request examples.
pub fn find_response_examples(tree: &DomTree) -> Vec<ResponseExample> {
    code_like_nodes(tree)
        .filter(|&id| detect_request(tree, id).is_none())
        .filter_map(|id| detect_response(tree, id))
        .collect()
}

/// Greedy nearest-response pairing in request document order. Distance is
/// the edge count between nodes; ties prefer responses after the request,
/// then the smaller node id.
pub fn pair_examples(
    tree: &DomTree,
    requests: &[RequestExample],
    responses: &[ResponseExample],
) -> Vec<EndpointExamplePair> {
    let mut ordered: Vec<&RequestExample> = requests.iter().collect();
    ordered.sort_by_key(|r| r.node_id);
    let mut used = vec![false; responses.len()];
    ordered
        .into_iter()
        .map(|req| {
            let best = responses
                .iter()
                .enumerate()
                .filter(|(i, resp)| !used[*i] && resp.node_id != req.node_id)
                .min_by_key(|(_, resp)| {
                    (tree.distance(req.node_id, resp.node_id), resp.node_id < req.node_id, resp.node_id)
                })
                .map(|(i, _)| i);
            let response = best.map(|i| {
                used[i] = true;
                responses[i].clone()
            });
            EndpointExamplePair { request: req.clone(), response }
        })
        .collect()
}

/// Full extraction: detect, then pair.
pub fn extract_pairs(tree: &DomTree) -> Vec<EndpointExamplePair> {
    let requests = find_request_examples(tree);
    let responses = find_response_examples(tree);
    pair_examples(tree, &requests, &responses)
}
