//! Drops generated names that never occur in the prompted input.

use serde::Serialize;

use super::{EnrichmentTable, ResponseEnrichmentSchema};
use crate::builder::JsonSchemaNode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FilterAudit {
    /// `request` or `response`.
    pub side: String,
    /// Flat name or dotted path that was removed.
    pub name: String,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn token_in(token: &str, haystack_lower: &str) -> bool {
    let needle = token.to_lowercase();
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack_lower[from..].find(&needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack_lower[..start].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = haystack_lower[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + haystack_lower[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// True when every dotted segment of `name` occurs as a whole token in one
/// of the scope texts (case-insensitive).
pub fn name_in_scope(name: &str, scope_texts: &[&str]) -> bool {
    let lowered: Vec<String> = scope_texts.iter().map(|t| t.to_lowercase()).collect();
    let segments: Vec<&str> = name.split('.').map(|s| s.trim_end_matches("[]")).collect();
    !segments.is_empty() && segments.iter().all(|seg| lowered.iter().any(|h| token_in(seg, h)))
}

pub fn filter_table(table: &EnrichmentTable, scope_texts: &[&str]) -> (EnrichmentTable, Vec<FilterAudit>) {
    let mut audit = Vec::new();
    let rows = table
        .rows
        .iter()
        .filter(|r| {
            let keep = name_in_scope(&r.name, scope_texts);
            if !keep {
                audit.push(FilterAudit { side: "request".into(), name: r.name.clone() });
            }
            keep
        })
        .cloned()
        .collect();
    (EnrichmentTable { header: table.header.clone(), rows }, audit)
}

pub fn filter_schema(
    schema: &ResponseEnrichmentSchema,
    scope_texts: &[&str],
) -> (ResponseEnrichmentSchema, Vec<FilterAudit>) {
    let lowered: Vec<String> = scope_texts.iter().map(|t| t.to_lowercase()).collect();
    let mut root = schema.root.clone();
    let mut audit = Vec::new();
    prune(&mut root, "", &lowered, &mut audit);
    (ResponseEnrichmentSchema { root }, audit)
}

fn prune(node: &mut JsonSchemaNode, prefix: &str, lowered: &[String], audit: &mut Vec<FilterAudit>) {
    let obj = node.object_view_mut();
    let mut removed = Vec::new();
    obj.properties.retain(|k, _| {
        let keep = lowered.iter().any(|h| token_in(k.trim_end_matches("[]"), h));
        if !keep {
            removed.push(k.clone());
        }
        keep
    });
    for k in removed {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        audit.push(FilterAudit { side: "response".into(), name: path });
        obj.required.retain(|r| *r != k);
    }
    for (k, child) in obj.properties.iter_mut() {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        prune(child, &path, lowered, audit);
    }
}
