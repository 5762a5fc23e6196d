//! Deterministic offline stand-in for a text generator.
//!
//! Skeleton and schema tasks delegate to the builder. Enrichment tasks read
//! parameter tables (`table` or `dl`) out of the cleaned scope HTML.

use super::{GatewayError, GenerationJob, TaskKind, TextGenerator};
use crate::builder::{generate_skeleton, infer_value, JsonSchemaNode, ParamLocation, SchemaType};
use crate::enrich::{map_header, parse_bool, Column, EnrichmentTable, ParameterRow};
use crate::extractor::parse_curl;
use crate::ingest::{normalize_whitespace, parse_dom, DomTree, NodeId};

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceOracle;

impl TextGenerator for ReferenceOracle {
    fn complete(&self, job: &GenerationJob) -> Result<String, GatewayError> {
        reference_oracle(job.task, &job.input_payload)
    }
}

const PATHS_MARKER: &str = "\n\nDocumented paths:\n";

/// Payload for the skeleton task: the raw request example, then any path
/// templates found in the documentation, one per line.
pub fn skeleton_payload(request_text: &str, documented_paths: &[String]) -> String {
    let mut s = request_text.trim().to_string();
    if !documented_paths.is_empty() {
        s.push_str(PATHS_MARKER);
        s.push_str(&documented_paths.join("\n"));
    }
    s
}

pub fn split_skeleton_payload(payload: &str) -> (&str, Vec<&str>) {
    match payload.split_once(PATHS_MARKER) {
        Some((req, paths)) => (req, paths.lines().map(str::trim).filter(|l| !l.is_empty()).collect()),
        None => (payload, Vec::new()),
    }
}

pub fn reference_oracle(task: TaskKind, input_payload: &str) -> Result<String, GatewayError> {
    match task {
        TaskKind::Skeleton => {
            let (req, hints) = split_skeleton_payload(input_payload);
            let parsed = parse_curl(req).map_err(|e| GatewayError::OracleUnsupported(e.to_string()))?;
            let sk = generate_skeleton(&parsed, &hints);
            Ok(serde_json::to_string_pretty(&sk).expect("skeleton serializes"))
        }
        TaskKind::Schema => {
            let v: serde_json::Value = serde_json::from_str(input_payload)
                .map_err(|e| GatewayError::OracleUnsupported(format!("schema input is not JSON: {e}")))?;
            Ok(serde_json::to_string_pretty(&infer_value(&v).to_value()).expect("schema serializes"))
        }
        TaskKind::RequestEnrichment => {
            let rows = doc_rows(input_payload)?.into_iter().filter(|r| !r.response).map(|r| r.row).collect::<Vec<_>>();
            if rows.is_empty() {
                return Err(GatewayError::OracleUnsupported("no request parameter table in scope".into()));
            }
            Ok(EnrichmentTable { header: Vec::new(), rows }.to_tsv())
        }
        TaskKind::ResponseEnrichment => {
            let rows = doc_rows(input_payload)?.into_iter().filter(|r| r.response).map(|r| r.row).collect::<Vec<_>>();
            if rows.is_empty() {
                return Err(GatewayError::OracleUnsupported("no response field table in scope".into()));
            }
            Ok(serde_json::to_string_pretty(&rows_to_schema(&rows).to_value()).expect("schema serializes"))
        }
    }
}

struct DocRow {
    row: ParameterRow,
    response: bool,
}

const SECTION_TITLES: &[&str] = &[
    "parameters",
    "query parameters",
    "path parameters",
    "header parameters",
    "headers",
    "request body",
    "body parameters",
    "request",
    "arguments",
    "response",
    "responses",
    "response body",
    "response fields",
    "returns",
];

fn is_heading(tree: &DomTree, id: NodeId) -> bool {
    let n = tree.node(id);
    if matches!(n.tag.as_str(), "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "caption") {
        return true;
    }
    let t = tree.visible_text(id).to_lowercase();
    let t = t.trim().trim_end_matches(':').trim();
    !matches!(n.tag.as_str(), "table" | "dl" | "html" | "body") && SECTION_TITLES.contains(&t)
}

fn section_is_response(section: &str) -> bool {
    ["response", "returns", "return value", "output"].iter().any(|k| section.contains(k))
}

fn section_location(section: &str) -> Option<ParamLocation> {
    if section.contains("query") {
        Some(ParamLocation::Query)
    } else if section.contains("path") {
        Some(ParamLocation::Path)
    } else if section.contains("header") {
        Some(ParamLocation::Header)
    } else if section.contains("body") || section.contains("form") {
        Some(ParamLocation::Body)
    } else {
        None
    }
}

fn doc_rows(html: &str) -> Result<Vec<DocRow>, GatewayError> {
    let tree = parse_dom(html).map_err(|e| GatewayError::OracleUnsupported(e.to_string()))?;
    let mut section = String::new();
    let mut out = Vec::new();
    let mut skip_until = 0;
    for n in tree.nodes() {
        if n.node_id < skip_until || !n.visible {
            continue;
        }
        match n.tag.as_str() {
            "table" => {
                let caption = n
                    .children
                    .iter()
                    .find(|c| tree.node(**c).tag == "caption")
                    .map(|c| tree.visible_text(*c).to_lowercase());
                let sec = caption.unwrap_or_else(|| section.clone());
                table_rows(&tree, n.node_id, &sec, &mut out);
                skip_until = tree.subtree(n.node_id).end;
            }
            "dl" => {
                dl_rows(&tree, n.node_id, &section, &mut out);
                skip_until = tree.subtree(n.node_id).end;
            }
            _ if is_heading(&tree, n.node_id) => {
                section = tree.visible_text(n.node_id).to_lowercase();
                skip_until = tree.subtree(n.node_id).end;
            }
            _ => {}
        }
    }
    Ok(out)
}

fn clean_name(token: &str) -> Option<String> {
    let t = token.trim().trim_matches(|c| matches!(c, '`' | '"' | '\'' | '*' | ':' | ',')).trim_end_matches("[]");
    let ok = !t.is_empty()
        && t.chars().any(|c| c.is_alphabetic())
        && t.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '$' | '@' | '[' | ']'));
    ok.then(|| t.to_string())
}

/// Splits a name cell such as "limit (integer, optional)" into the name
/// and whatever type/required hints follow it.
fn name_and_hints(cell: &str) -> Option<(String, Option<SchemaType>, Option<bool>)> {
    let mut tokens = cell.split_whitespace();
    let name = clean_name(tokens.next()?)?;
    let mut ty = None;
    let mut req = None;
    for tok in tokens {
        let w = tok.trim_matches(|c: char| !c.is_ascii_alphanumeric());
        if req.is_none() {
            req = parse_bool(w).filter(|_| matches!(w.to_ascii_lowercase().as_str(), "required" | "optional"));
        }
        if ty.is_none() {
            ty = SchemaType::normalize(w);
        }
    }
    Some((name, ty, req))
}

fn cell_texts(tree: &DomTree, tr: NodeId) -> (Vec<String>, bool) {
    let cells: Vec<NodeId> =
        tree.node(tr).children.iter().copied().filter(|c| matches!(tree.node(*c).tag.as_str(), "td" | "th")).collect();
    let all_th = !cells.is_empty() && cells.iter().all(|c| tree.node(*c).tag == "th");
    (cells.iter().map(|c| tree.visible_text(*c)).collect(), all_th)
}

fn table_rows(tree: &DomTree, table: NodeId, section: &str, out: &mut Vec<DocRow>) {
    let rows: Vec<NodeId> = tree
        .subtree(table)
        .filter(|&i| {
            tree.node(i).tag == "tr" && tree.ancestors(i).find(|a| tree.node(*a).tag == "table") == Some(table)
        })
        .collect();
    let Some(&first) = rows.first() else {
        return;
    };
    let (first_cells, all_th) = cell_texts(tree, first);
    let in_thead = tree.ancestors(first).any(|a| tree.node(a).tag == "thead");
    let mapped: Vec<Option<Column>> = first_cells.iter().map(|c| map_header(c)).collect();
    let has_header = all_th || in_thead || mapped.contains(&Some(Column::Name));
    let (columns, data) = if has_header {
        if !mapped.contains(&Some(Column::Name)) {
            return;
        }
        (mapped, &rows[1..])
    } else {
        let positional: &[Column] = match first_cells.len() {
            0 | 1 => &[Column::Name],
            2 => &[Column::Name, Column::Description],
            3 => &[Column::Name, Column::Type, Column::Description],
            4 => &[Column::Name, Column::Type, Column::Required, Column::Description],
            _ => &[Column::Name, Column::Type, Column::Required, Column::Location, Column::Description],
        };
        (positional.iter().map(|c| Some(*c)).collect(), &rows[..])
    };
    let col = |want: Column| columns.iter().position(|c| *c == Some(want));
    let response = section_is_response(section);
    for &tr in data {
        let (cells, _) = cell_texts(tree, tr);
        let get = |i: Option<usize>| i.and_then(|i| cells.get(i)).map(|s| s.trim()).filter(|s| !s.is_empty());
        let Some((name, hint_ty, hint_req)) = get(col(Column::Name)).and_then(name_and_hints) else {
            continue;
        };
        let row = ParameterRow {
            name,
            schema_type: get(col(Column::Type)).and_then(SchemaType::normalize).or(hint_ty),
            required: get(col(Column::Required)).and_then(parse_bool).or(hint_req),
            location: get(col(Column::Location))
                .and_then(ParamLocation::normalize)
                .or_else(|| section_location(section)),
            description: get(col(Column::Description)).map(normalize_whitespace),
        };
        out.push(DocRow { row, response });
    }
}

fn dl_rows(tree: &DomTree, dl: NodeId, section: &str, out: &mut Vec<DocRow>) {
    let response = section_is_response(section);
    let kids = &tree.node(dl).children;
    for (i, &dt) in kids.iter().enumerate() {
        if tree.node(dt).tag != "dt" {
            continue;
        }
        let Some((name, ty, mut req)) = name_and_hints(&tree.visible_text(dt)) else {
            continue;
        };
        let dd = kids.get(i + 1).copied().filter(|d| tree.node(*d).tag == "dd");
        let mut description = dd.map(|d| tree.visible_text(d)).filter(|s| !s.is_empty());
        if let Some(d) = &description {
            let first = d.split_whitespace().next().unwrap_or("").trim_matches(|c: char| !c.is_ascii_alphanumeric());
            if req.is_none() && matches!(first.to_ascii_lowercase().as_str(), "required" | "optional") {
                req = parse_bool(first);
                let rest = d[d.find(char::is_whitespace).unwrap_or(d.len())..].trim().to_string();
                description = Some(rest).filter(|s| !s.is_empty());
            }
        }
        let row =
            ParameterRow { name, schema_type: ty, required: req, location: section_location(section), description };
        out.push(DocRow { row, response });
    }
}

/// Nests dotted row names into an object schema.
fn rows_to_schema(rows: &[ParameterRow]) -> JsonSchemaNode {
    let mut root = JsonSchemaNode::of_type(SchemaType::Object);
    for r in rows {
        let segs: Vec<&str> = r.name.split('.').map(|s| s.trim_end_matches("[]")).filter(|s| !s.is_empty()).collect();
        let Some((last, parents)) = segs.split_last() else {
            continue;
        };
        let mut node = &mut root;
        for p in parents {
            let obj = container(node);
            node = obj.properties.entry(p.to_string()).or_insert_with(|| JsonSchemaNode::of_type(SchemaType::Object));
        }
        let obj = container(node);
        let entry = obj.properties.entry(last.to_string()).or_default();
        if entry.schema_type.is_none() || entry.schema_type == Some(SchemaType::Object) && r.schema_type.is_some() {
            if let Some(t) = r.schema_type {
                let props = std::mem::take(&mut entry.properties);
                let req = std::mem::take(&mut entry.required);
                *entry = JsonSchemaNode { description: entry.description.take(), ..JsonSchemaNode::of_type(t) };
                if !props.is_empty() {
                    let target = container(entry);
                    target.properties = props;
                    target.required = req;
                }
            }
        }
        if r.description.is_some() {
            entry.description.clone_from(&r.description);
        }
        if r.required == Some(true) && !obj.required.iter().any(|k| k == last) {
            obj.required.push(last.to_string());
        }
    }
    root
}

/// The object that children of `node` live in; arrays get an object item
/// schema on demand.
fn container(node: &mut JsonSchemaNode) -> &mut JsonSchemaNode {
    match node.schema_type {
        Some(SchemaType::Array) => {
            let items = node.items.get_or_insert_with(Box::default);
            if items.schema_type.is_none() || items.schema_type == Some(SchemaType::Array) {
                if items.schema_type.is_none() {
                    items.schema_type = Some(SchemaType::Object);
                }
                return container(items);
            }
            items
        }
        None => {
            node.schema_type = Some(SchemaType::Object);
            node
        }
        _ => node,
    }
}
