//! Request enrichment tables.

use super::response::strip_code_fences;
use super::EnrichError;
use crate::builder::{ParamLocation, SchemaType};
use crate::ingest::normalize_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Name,
    Type,
    Required,
    Location,
    Description,
}

/// Maps a generated column title to a canonical column. Checked in an
/// order that lets "parameter type" land on `Type`, not `Name`.
pub fn map_header(cell: &str) -> Option<Column> {
    let c: String =
        cell.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric() || *c == ' ').collect();
    let c = c.trim();
    if c.is_empty() || c.split_whitespace().count() > 3 {
        return None;
    }
    let has = |keys: &[&str]| keys.iter().any(|k| c.contains(k));
    if has(&["desc", "explanation", "detail", "note", "comment", "meaning", "summary"]) {
        Some(Column::Description)
    } else if has(&["requir", "mandatory", "optional", "necessary"]) {
        Some(Column::Required)
    } else if c == "in" || has(&["locat", "where", "position", "placement", "source"]) {
        Some(Column::Location)
    } else if has(&["type", "format", "kind", "datatype"]) {
        Some(Column::Type)
    } else if has(&["name", "param", "field", "key", "attribute", "property", "argument"]) {
        Some(Column::Name)
    } else {
        None
    }
}

pub fn parse_bool(cell: &str) -> Option<bool> {
    let c = cell.trim().trim_matches(|c: char| !c.is_ascii_alphanumeric()).to_ascii_lowercase();
    match c.as_str() {
        "yes" | "y" | "true" | "required" | "mandatory" => Some(true),
        "no" | "n" | "false" | "optional" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterRow {
    pub name: String,
    pub schema_type: Option<SchemaType>,
    pub required: Option<bool>,
    pub location: Option<ParamLocation>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EnrichmentTable {
    /// Column titles as generated.
    pub header: Vec<String>,
    pub rows: Vec<ParameterRow>,
}

fn clean_name(cell: &str) -> String {
    cell.trim().trim_matches(|c| matches!(c, '`' | '"' | '\'' | '*')).trim().to_string()
}

/// Parses a generated TSV table. The first line holding a tab is the
/// header and must name a parameter-name column; later lines are rows.
pub fn parse_request_tsv(text: &str) -> Result<EnrichmentTable, EnrichError> {
    let body = strip_code_fences(text);
    let mut lines = body.lines().filter(|l| !l.trim().is_empty()).skip_while(|l| !l.contains('\t'));
    let header_line = lines.next().ok_or_else(|| EnrichError::MalformedTsv("no tab-separated header".into()))?;
    let header: Vec<String> = header_line.split('\t').map(|s| s.trim().to_string()).collect();
    let columns: Vec<Option<Column>> = header.iter().map(|h| map_header(h)).collect();
    let name_col = columns
        .iter()
        .position(|c| *c == Some(Column::Name))
        .ok_or_else(|| EnrichError::MalformedTsv(format!("header `{}` has no name column", header_line.trim())))?;
    let col = |want: Column| columns.iter().position(|c| *c == Some(want));
    let (type_col, req_col, loc_col, desc_col) =
        (col(Column::Type), col(Column::Required), col(Column::Location), col(Column::Description));

    let mut rows: Vec<ParameterRow> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split('\t').collect();
        let cell = |i: Option<usize>| i.and_then(|i| cells.get(i)).map(|s| s.trim()).filter(|s| !s.is_empty());
        let name = match cell(Some(name_col)).map(clean_name) {
            Some(n) if !n.is_empty() && !n.contains(char::is_whitespace) => n,
            _ => continue,
        };
        let row = ParameterRow {
            schema_type: cell(type_col).and_then(SchemaType::normalize),
            required: cell(req_col).and_then(parse_bool),
            location: cell(loc_col).and_then(ParamLocation::normalize),
            description: cell(desc_col).map(normalize_whitespace).filter(|d| !d.is_empty()),
            name,
        };
        let dup = rows.iter().any(|r| r.name.eq_ignore_ascii_case(&row.name) && r.location == row.location);
        if !dup {
            rows.push(row);
        }
    }
    if rows.is_empty() {
        return Err(EnrichError::MalformedTsv("no parseable data rows".into()));
    }
    Ok(EnrichmentTable { header, rows })
}

impl EnrichmentTable {
    /// Canonical TSV rendering with all five columns.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\ttype\trequired\tlocation\tdescription\n");
        for r in &self.rows {
            let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                clean(&r.name),
                r.schema_type.map(|t| t.as_str()).unwrap_or(""),
                r.required.map(|b| if b { "true" } else { "false" }).unwrap_or(""),
                r.location.map(|l| l.as_str()).unwrap_or(""),
                clean(r.description.as_deref().unwrap_or("")),
            ));
        }
        out
    }
}
