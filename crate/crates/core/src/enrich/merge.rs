//! Field-precedence merge of enrichment data into a base document.
//!
//! Description and required come from the enrichment when it has them;
//! type and location stay as the base has them. Names only the enrichment
//! knows are added.

use super::{EnrichmentTable, ParameterRow, ResponseEnrichmentSchema};
use crate::builder::{
    param_key, JsonSchemaNode, OasDocument, ParamLocation, Parameter, Provenance, RequestBody, ResponseSpec, SchemaType,
};
use crate::extractor::HttpMethod;

pub fn merge(
    base: &OasDocument,
    req: Option<&EnrichmentTable>,
    resp: Option<&ResponseEnrichmentSchema>,
) -> OasDocument {
    let mut doc = base.clone();
    if let Some(table) = req {
        for row in &table.rows {
            merge_row(&mut doc, row);
        }
    }
    if let Some(schema) = resp {
        merge_response(&mut doc, schema);
    }
    doc
}

fn default_location(method: HttpMethod) -> ParamLocation {
    if matches!(method, HttpMethod::Get | HttpMethod::Head | HttpMethod::Delete | HttpMethod::Options) {
        ParamLocation::Query
    } else {
        ParamLocation::Body
    }
}

fn mark(doc: &mut OasDocument, key: String) {
    doc.provenance.insert(key, Provenance::Enrichment);
}

fn merge_row(doc: &mut OasDocument, row: &ParameterRow) {
    let body_first = row.location == Some(ParamLocation::Body);
    if !body_first && merge_into_param(doc, row) {
        return;
    }
    if merge_into_body(doc, row) {
        return;
    }
    if body_first && merge_into_param(doc, row) {
        return;
    }
    add_row(doc, row);
}

fn merge_into_param(doc: &mut OasDocument, row: &ParameterRow) -> bool {
    let params = &doc.operation.parameters;
    let idx = params
        .iter()
        .position(|p| p.name.eq_ignore_ascii_case(&row.name) && Some(p.location) == row.location)
        .or_else(|| params.iter().position(|p| p.name.eq_ignore_ascii_case(&row.name)));
    let Some(i) = idx else {
        return false;
    };
    let p = &mut doc.operation.parameters[i];
    let (loc, name) = (p.location, p.name.clone());
    let mut touched = Vec::new();
    if let Some(d) = &row.description {
        p.description = Some(d.clone());
        touched.push("description");
    }
    if let Some(r) = row.required {
        p.required = r;
        touched.push("required");
    }
    if p.schema.schema_type.is_none() {
        if let Some(t) = row.schema_type {
            p.schema = JsonSchemaNode::of_type(t);
            touched.push("type");
        }
    }
    for f in touched {
        mark(doc, param_key(loc, &name, f));
    }
    true
}

/// Finds a top-level (or dotted) body property by case-insensitive name.
fn body_property_path(schema: &JsonSchemaNode, name: &str) -> Option<Vec<String>> {
    let mut node = schema;
    let mut path = Vec::new();
    for seg in name.split('.') {
        let obj = node.object_view();
        let (k, child) = obj.properties.iter().find(|(k, _)| k.eq_ignore_ascii_case(seg))?;
        path.push(k.clone());
        node = child;
    }
    Some(path)
}

fn node_at_mut<'a>(root: &'a mut JsonSchemaNode, path: &'a [String]) -> Option<(&'a mut JsonSchemaNode, &'a str)> {
    let (last, parents) = path.split_last()?;
    let mut node = root;
    for seg in parents {
        node = node.object_view_mut().properties.get_mut(seg)?;
    }
    Some((node.object_view_mut(), last.as_str()))
}

fn merge_into_body(doc: &mut OasDocument, row: &ParameterRow) -> bool {
    let Some(body) = doc.operation.request_body.as_mut() else {
        return false;
    };
    let Some(path) = body_property_path(&body.schema, &row.name) else {
        return false;
    };
    let dotted = path.join(".");
    let (parent, key) = node_at_mut(&mut body.schema, &path).expect("path was just resolved");
    let mut touched = Vec::new();
    if let Some(r) = row.required {
        set_required(parent, key, r);
        touched.push("required");
    }
    let child = parent.properties.get_mut(key).expect("path was just resolved");
    if let Some(d) = &row.description {
        child.description = Some(d.clone());
        touched.push("description");
    }
    if child.schema_type.is_none() {
        if let Some(t) = row.schema_type {
            *child = JsonSchemaNode { description: child.description.clone(), ..JsonSchemaNode::of_type(t) };
            touched.push("type");
        }
    }
    for f in touched {
        mark(doc, format!("body:{dotted}:{f}"));
    }
    true
}

fn set_required(parent: &mut JsonSchemaNode, key: &str, required: bool) {
    let present = parent.required.iter().any(|r| r == key);
    if required && !present {
        parent.required.push(key.to_string());
    } else if !required && present {
        parent.required.retain(|r| r != key);
    }
}

fn add_row(doc: &mut OasDocument, row: &ParameterRow) {
    let mut loc = row.location.unwrap_or_else(|| default_location(doc.method));
    if loc == ParamLocation::Body && matches!(doc.method, HttpMethod::Get | HttpMethod::Head) {
        loc = ParamLocation::Query;
    }
    let schema_type = row.schema_type.unwrap_or(SchemaType::String);
    if loc == ParamLocation::Body {
        let body = doc.operation.request_body.get_or_insert_with(|| RequestBody {
            media_type: "application/json".into(),
            schema: JsonSchemaNode::of_type(SchemaType::Object),
        });
        let root = body.schema.object_view_mut();
        if root.schema_type != Some(SchemaType::Object) {
            // a plain-text body cannot take named fields
            return;
        }
        let name = row.name.clone();
        let mut node = JsonSchemaNode::of_type(schema_type);
        node.description.clone_from(&row.description);
        root.properties.insert(name.clone(), node);
        if row.required == Some(true) {
            root.required.push(name.clone());
        }
        for f in ["type", "required", "description"] {
            if f != "description" || row.description.is_some() {
                mark(doc, format!("body:{name}:{f}"));
            }
        }
        return;
    }
    let required = row.required.unwrap_or(loc == ParamLocation::Path);
    doc.operation.parameters.push(Parameter {
        name: row.name.clone(),
        location: loc,
        required,
        schema: JsonSchemaNode::of_type(schema_type),
        description: row.description.clone(),
    });
    for f in ["type", "location", "required", "description"] {
        if f != "description" || row.description.is_some() {
            mark(doc, param_key(loc, &row.name, f));
        }
    }
}

fn merge_response(doc: &mut OasDocument, enrichment: &ResponseEnrichmentSchema) {
    let mut marks = Vec::new();
    match doc.operation.primary_response_schema_mut() {
        Some(base) => merge_schema(base, &enrichment.root, "", &mut marks),
        None => {
            let status = doc.operation.primary_status().unwrap_or("200").to_string();
            let entry = doc
                .operation
                .responses
                .entry(status)
                .or_insert_with(|| ResponseSpec { description: "Successful response".into(), schema: None });
            let mut root = JsonSchemaNode::default();
            merge_schema(&mut root, &enrichment.root, "", &mut marks);
            entry.schema = Some(root);
        }
    }
    for k in marks {
        mark(doc, k);
    }
}

fn merge_schema(base: &mut JsonSchemaNode, enr: &JsonSchemaNode, prefix: &str, marks: &mut Vec<String>) {
    if base.schema_type.is_none() && enr.schema_type.is_some() {
        base.schema_type = enr.schema_type;
        if base.schema_type == Some(SchemaType::Array) && base.items.is_none() {
            base.items = Some(Box::default());
        }
        if !prefix.is_empty() {
            marks.push(format!("response:{prefix}:type"));
        }
    }
    if let Some(d) = &enr.description {
        base.description = Some(d.clone());
        if !prefix.is_empty() {
            marks.push(format!("response:{prefix}:description"));
        }
    }
    // step through arrays on both sides
    if base.schema_type == Some(SchemaType::Array) && enr.schema_type == Some(SchemaType::Array) {
        if let (Some(bi), Some(ei)) = (base.items.as_deref_mut(), enr.items.as_deref()) {
            merge_schema_children(bi, ei, prefix, marks);
            return;
        }
    }
    let enr_obj = enr.object_view();
    let base_obj = base.object_view_mut();
    if base_obj.schema_type.is_none() && enr_obj.schema_type == Some(SchemaType::Object) {
        base_obj.schema_type = Some(SchemaType::Object);
    }
    merge_schema_children(base_obj, enr_obj, prefix, marks);
}

fn merge_schema_children(base: &mut JsonSchemaNode, enr: &JsonSchemaNode, prefix: &str, marks: &mut Vec<String>) {
    if enr.properties.is_empty() && enr.required.is_empty() {
        if base.schema_type.is_none() {
            base.schema_type = enr.schema_type;
        }
        if let Some(d) = &enr.description {
            base.description.get_or_insert_with(|| d.clone());
        }
        return;
    }
    if base.schema_type != Some(SchemaType::Object) && base.schema_type.is_some() {
        // base says this is a scalar; its type wins and there are no fields to merge
        return;
    }
    base.schema_type = Some(SchemaType::Object);
    for (k, e_child) in &enr.properties {
        let existing = base.properties.keys().find(|bk| bk.eq_ignore_ascii_case(k)).cloned();
        let key = existing.unwrap_or_else(|| k.clone());
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match base.properties.get_mut(&key) {
            Some(b_child) => merge_schema(b_child, e_child, &path, marks),
            None => {
                base.properties.insert(key.clone(), e_child.clone());
                added_marks(e_child, &path, marks);
            }
        }
    }
    if !enr.required.is_empty() {
        let mut required: Vec<String> = Vec::new();
        for r in &enr.required {
            if let Some(k) = base.properties.keys().find(|bk| bk.eq_ignore_ascii_case(r)) {
                if !required.contains(k) {
                    required.push(k.clone());
                }
            }
        }
        if required != base.required {
            for k in base.properties.keys() {
                let was = base.required.contains(k);
                let now = required.contains(k);
                if was != now {
                    let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    marks.push(format!("response:{path}:required"));
                }
            }
            base.required = required;
        }
    }
}

fn added_marks(node: &JsonSchemaNode, path: &str, marks: &mut Vec<String>) {
    if node.schema_type.is_some() {
        marks.push(format!("response:{path}:type"));
    }
    marks.push(format!("response:{path}:required"));
    if node.description.is_some() {
        marks.push(format!("response:{path}:description"));
    }
    for (k, child) in &node.object_view().properties {
        added_marks(child, &format!("{path}.{k}"), marks);
    }
}
