//! Semantic comparison of generated documents against ground truth.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::builder::SchemaType;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("{method} {path} is not in the document")]
    SelectorMiss { path: String, method: String },
    #[error("no matched pairs carry this field")]
    NoEligiblePairs,
    #[error("no cases to evaluate")]
    EmptyCorpus,
    #[error("cannot load {0}")]
    Load(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Request,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Required,
    Type,
    Location,
}

const METHODS: &[&str] = &["get", "put", "post", "delete", "options", "head", "patch", "trace"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Selector {
    pub path: String,
    pub method: String,
}

impl Selector {
    pub fn new(path: &str, method: &str) -> Self {
        Selector { path: path.to_string(), method: method.to_ascii_lowercase() }
    }

    /// Path with template names erased, for matching `{id}` to `{user_id}`.
    fn key(&self) -> (String, String) {
        let path: Vec<String> = self
            .path
            .trim_end_matches('/')
            .split('/')
            .map(|s| if s.starts_with('{') && s.ends_with('}') { "{}".to_string() } else { s.to_ascii_lowercase() })
            .collect();
        (path.join("/"), self.method.clone())
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}", self.method.to_ascii_uppercase(), self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamInfo {
    /// Flat name (request) or dotted path (response).
    pub name: String,
    pub location: Option<String>,
    pub required: Option<bool>,
    pub schema_type: Option<String>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParamMatchSet {
    pub matched: Vec<(ParamInfo, ParamInfo)>,
    pub pred_only: Vec<ParamInfo>,
    pub truth_only: Vec<ParamInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Every (path, method) operation in a document.
pub fn endpoints(doc: &Value) -> Vec<Selector> {
    let mut out = Vec::new();
    if let Some(paths) = doc.get("paths").and_then(Value::as_object) {
        for (p, item) in paths {
            if let Some(item) = item.as_object() {
                for m in item.keys().filter(|k| METHODS.contains(&k.as_str())) {
                    out.push(Selector::new(p, m));
                }
            }
        }
    }
    out
}

fn resolve<'a>(root: &'a Value, v: &'a Value) -> &'a Value {
    let mut cur = v;
    for _ in 0..32 {
        match cur.get("$ref").and_then(Value::as_str).and_then(|r| r.strip_prefix('#')) {
            Some(pointer) => match root.pointer(pointer) {
                Some(t) => cur = t,
                None => return cur,
            },
            None => return cur,
        }
    }
    cur
}

fn find_operation<'a>(doc: &'a Value, sel: &Selector) -> Option<(&'a Value, &'a Value)> {
    let want = sel.key();
    let paths = doc.get("paths")?.as_object()?;
    for (p, item) in paths {
        let item = resolve(doc, item);
        for (m, op) in item.as_object()? {
            if METHODS.contains(&m.as_str()) && Selector::new(p, m).key() == want {
                return Some((item, op));
            }
        }
    }
    None
}

pub fn normalize_type(t: &str) -> Option<String> {
    SchemaType::normalize(t).map(|t| t.as_str().to_string())
}

fn schema_type_of(root: &Value, schema: &Value) -> Option<String> {
    let s = resolve(root, schema);
    match s.get("type") {
        Some(Value::String(t)) => normalize_type(t),
        _ if s.get("properties").is_some() => Some("object".into()),
        _ => None,
    }
}

fn text(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_string)
}

fn media_schema<'a>(root: &'a Value, holder: &'a Value) -> Option<&'a Value> {
    let content = resolve(root, holder).get("content")?.as_object()?;
    let pick = content.iter().find(|(k, _)| k.contains("json")).or_else(|| content.iter().next()).map(|(_, v)| v)?;
    pick.get("schema").map(|s| resolve(root, s))
}

fn request_params(doc: &Value, path_item: &Value, op: &Value) -> Vec<ParamInfo> {
    let mut out: Vec<ParamInfo> = Vec::new();
    let lists = [op.get("parameters"), path_item.get("parameters")];
    for list in lists.into_iter().flatten().filter_map(Value::as_array) {
        for p in list {
            let p = resolve(doc, p);
            let Some(name) = text(p, "name") else { continue };
            let location = text(p, "in");
            if out.iter().any(|q| q.name == name && q.location == location) {
                continue;
            }
            out.push(ParamInfo {
                required: Some(p.get("required").and_then(Value::as_bool).unwrap_or(false)),
                schema_type: p.get("schema").and_then(|s| schema_type_of(doc, s)),
                description: text(p, "description"),
                location,
                name,
            });
        }
    }
    if let Some(schema) = op.get("requestBody").and_then(|b| media_schema(doc, b)) {
        let required: Vec<&str> = schema
            .get("required")
            .and_then(Value::as_array)
            .map(|r| r.iter().filter_map(Value::as_str).collect())
            .unwrap_or_default();
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (k, v) in props {
                let v = resolve(doc, v);
                out.push(ParamInfo {
                    name: k.clone(),
                    location: Some("body".into()),
                    required: Some(required.contains(&k.as_str())),
                    schema_type: schema_type_of(doc, v),
                    description: text(v, "description"),
                });
            }
        }
    }
    out
}

fn walk_response(doc: &Value, schema: &Value, prefix: &str, out: &mut Vec<ParamInfo>, depth: usize) {
    let mut s = resolve(doc, schema);
    while s.get("type").and_then(Value::as_str) == Some("array") {
        match s.get("items") {
            Some(i) => s = resolve(doc, i),
            None => return,
        }
    }
    if depth > 16 {
        return;
    }
    let required: Vec<&str> = s
        .get("required")
        .and_then(Value::as_array)
        .map(|r| r.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    if let Some(props) = s.get("properties").and_then(Value::as_object) {
        for (k, v) in props {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            let rv = resolve(doc, v);
            out.push(ParamInfo {
                name: path.clone(),
                location: None,
                required: Some(required.contains(&k.as_str())),
                schema_type: schema_type_of(doc, rv),
                description: text(rv, "description"),
            });
            walk_response(doc, rv, &path, out, depth + 1);
        }
    }
}

fn response_params(doc: &Value, op: &Value) -> Vec<ParamInfo> {
    let Some(responses) = op.get("responses").and_then(Value::as_object) else {
        return Vec::new();
    };
    let mut codes: Vec<&String> = responses.keys().filter(|k| k.starts_with('2')).collect();
    codes.sort();
    let chosen = codes.first().map(|c| &responses[*c]).or_else(|| responses.get("default"));
    let mut out = Vec::new();
    if let Some(schema) = chosen.and_then(|r| media_schema(doc, r)) {
        walk_response(doc, schema, "", &mut out, 0);
    }
    out
}

/// Parameters of one side of one operation.
pub fn extract_params(doc: &Value, sel: &Selector, side: Side) -> Result<Vec<ParamInfo>, EvalError> {
    let (item, op) = find_operation(doc, sel)
        .ok_or_else(|| EvalError::SelectorMiss { path: sel.path.clone(), method: sel.method.clone() })?;
    Ok(match side {
        Side::Request => request_params(doc, item, op),
        Side::Response => response_params(doc, op),
    })
}

/// One-to-one matching on case-folded names, in prediction order.
pub fn match_param_lists(pred: Vec<ParamInfo>, truth: Vec<ParamInfo>) -> ParamMatchSet {
    let mut truth: Vec<Option<ParamInfo>> = truth.into_iter().map(Some).collect();
    let mut set = ParamMatchSet::default();
    for p in pred {
        let key = p.name.to_lowercase();
        match truth.iter_mut().find(|t| t.as_ref().is_some_and(|t| t.name.to_lowercase() == key)) {
            Some(slot) => set.matched.push((p, slot.take().expect("slot checked"))),
            None => set.pred_only.push(p),
        }
    }
    set.truth_only = truth.into_iter().flatten().collect();
    set
}

pub fn match_params(pred: &Value, truth: &Value, sel: &Selector, side: Side) -> Result<ParamMatchSet, EvalError> {
    let t = extract_params(truth, sel, side)?;
    let p = extract_params(pred, sel, side)?;
    Ok(match_param_lists(p, t))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf1(m: &ParamMatchSet) -> Prf1 {
    let precision = ratio(m.matched.len(), m.matched.len() + m.pred_only.len());
    let recall = ratio(m.matched.len(), m.matched.len() + m.truth_only.len());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf1 { precision, recall, f1 }
}

/// Share of matched pairs agreeing on `field`, counting only pairs where
/// the truth states it.
pub fn field_precision(m: &ParamMatchSet, field: Field) -> Result<f64, EvalError> {
    let mut eligible = 0;
    let mut equal = 0;
    for (p, t) in &m.matched {
        let agree = match field {
            Field::Required => t.required.map(|tv| p.required == Some(tv)),
            Field::Type => t
                .schema_type
                .as_deref()
                .and_then(normalize_type)
                .map(|tv| p.schema_type.as_deref().and_then(normalize_type).as_deref() == Some(tv.as_str())),
            Field::Location => {
                t.location.as_ref().map(|tv| p.location.as_ref().is_some_and(|pv| pv.eq_ignore_ascii_case(tv)))
            }
        };
        if let Some(a) = agree {
            eligible += 1;
            equal += usize::from(a);
        }
    }
    if eligible == 0 {
        Err(EvalError::NoEligiblePairs)
    } else {
        Ok(equal as f64 / eligible as f64)
    }
}

fn term_frequencies(s: &str) -> HashMap<String, f64> {
    let mut tf = HashMap::new();
    for tok in s.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *tf.entry(tok.to_string()).or_insert(0.0) += 1.0;
    }
    tf
}

/// Cosine of term-frequency vectors over lowercase alphanumeric tokens.
pub fn description_similarity(pred: &str, truth: &str) -> f64 {
    let (a, b) = (term_frequencies(pred), term_frequencies(truth));
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na2: f64 = a.values().map(|x| x * x).sum();
    let nb2: f64 = b.values().map(|x| x * x).sum();
    // one root keeps identical texts at exactly 1
    (dot / (na2 * nb2).sqrt()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SideMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub required_precision: Option<f64>,
    pub type_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location_precision: Option<f64>,
    pub desc_similarity: Option<f64>,
}

fn side_metrics(m: &ParamMatchSet, side: Side) -> SideMetrics {
    let p = prf1(m);
    let sims: Vec<f64> = m
        .matched
        .iter()
        .filter_map(|(p, t)| {
            t.description.as_ref().map(|td| description_similarity(p.description.as_deref().unwrap_or(""), td))
        })
        .collect();
    SideMetrics {
        precision: p.precision,
        recall: p.recall,
        f1: p.f1,
        required_precision: field_precision(m, Field::Required).ok(),
        type_precision: field_precision(m, Field::Type).ok(),
        location_precision: match side {
            Side::Request => field_precision(m, Field::Location).ok(),
            Side::Response => None,
        },
        desc_similarity: (!sims.is_empty()).then(|| sims.iter().sum::<f64>() / sims.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub predicted: Value,
    pub truth: Value,
    pub selector: Selector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseMetrics {
    pub selector: Selector,
    pub request: SideMetrics,
    pub response: SideMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_cases: usize,
    pub request: SideMetrics,
    pub response: SideMetrics,
    pub cases: Vec<CaseMetrics>,
}

pub fn evaluate_case(case: &EvalCase) -> Result<CaseMetrics, EvalError> {
    let pred_req = extract_params(&case.predicted, &case.selector, Side::Request).unwrap_or_default();
    let pred_resp = extract_params(&case.predicted, &case.selector, Side::Response).unwrap_or_default();
    let truth_req = extract_params(&case.truth, &case.selector, Side::Request)?;
    let truth_resp = extract_params(&case.truth, &case.selector, Side::Response)?;
    Ok(CaseMetrics {
        selector: case.selector.clone(),
        request: side_metrics(&match_param_lists(pred_req, truth_req), Side::Request),
        response: side_metrics(&match_param_lists(pred_resp, truth_resp), Side::Response),
    })
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn macro_average(items: &[SideMetrics]) -> SideMetrics {
    let n = items.len() as f64;
    SideMetrics {
        precision: items.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: items.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: items.iter().map(|m| m.f1).sum::<f64>() / n,
        required_precision: mean_opt(items.iter().map(|m| m.required_precision)),
        type_precision: mean_opt(items.iter().map(|m| m.type_precision)),
        location_precision: mean_opt(items.iter().map(|m| m.location_precision)),
        desc_similarity: mean_opt(items.iter().map(|m| m.desc_similarity)),
    }
}

/// Per-case metrics, macro-averaged. A prediction without the selected
/// operation scores as an empty prediction.
pub fn e2e_report(cases: &[EvalCase]) -> Result<MetricsReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let per_case: Vec<CaseMetrics> = cases.iter().map(evaluate_case).collect::<Result<_, _>>()?;
    let req: Vec<SideMetrics> = per_case.iter().map(|c| c.request).collect();
    let resp: Vec<SideMetrics> = per_case.iter().map(|c| c.response).collect();
    Ok(MetricsReport {
        n_cases: per_case.len(),
        request: macro_average(&req),
        response: macro_average(&resp),
        cases: per_case,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Markdown table with request and response P/R/F1/Sim blocks, one row per
/// pipeline variant.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from(
        "| Variant | Req P | Req R | Req F1 | Req Sim | Resp P | Resp R | Resp F1 | Resp Sim |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for (label, r) in rows {
        let (q, s) = (&r.request, &r.response);
        out.push_str(&format!(
            "| {label} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            cell(Some(q.precision)),
            cell(Some(q.recall)),
            cell(Some(q.f1)),
            cell(q.desc_similarity),
            cell(Some(s.precision)),
            cell(Some(s.recall)),
            cell(Some(s.f1)),
            cell(s.desc_similarity),
        ));
    }
    out
}

/// Reads a JSON or YAML specification.
pub fn load_spec(path: &Path) -> Result<Value, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Load(format!("{}: {e}", path.display())))?;
    let is_yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
    if is_yaml {
        serde_yaml::from_str(&text).map_err(|e| EvalError::Load(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| EvalError::Load(format!("{}: {e}", path.display())))
    }
}

fn spec_files(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| EvalError::Load(format!("{}: {e}", dir.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "yaml" | "yml")))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPairing {
    pub cases: Vec<EvalCase>,
    /// Truth operations no prediction covers (scored as empty predictions).
    pub missing: Vec<Selector>,
    /// Predicted operations absent from the truth (not scored).
    pub unmatched_predictions: Vec<Selector>,
}

/// Pairs every truth operation with the prediction file that contains it.
pub fn cases_from_dirs(pred_dir: &Path, truth_dir: &Path) -> Result<CorpusPairing, EvalError> {
    let preds: Vec<Value> = spec_files(pred_dir)?.iter().map(|p| load_spec(p)).collect::<Result<_, _>>()?;
    let mut index: HashMap<(String, String), (usize, Selector)> = HashMap::new();
    for (i, doc) in preds.iter().enumerate() {
        for sel in endpoints(doc) {
            index.entry(sel.key()).or_insert((i, sel));
        }
    }
    let mut used = std::collections::HashSet::new();
    let mut cases = Vec::new();
    let mut missing = Vec::new();
    for path in spec_files(truth_dir)? {
        let truth = load_spec(&path)?;
        for sel in endpoints(&truth) {
            let predicted = match index.get(&sel.key()) {
                Some((i, _)) => {
                    used.insert(sel.key());
                    preds[*i].clone()
                }
                None => {
                    missing.push(sel.clone());
                    Value::Object(Default::default())
                }
            };
            cases.push(EvalCase { predicted, truth: truth.clone(), selector: sel });
        }
    }
    let mut unmatched_predictions: Vec<Selector> =
        index.into_iter().filter(|(k, _)| !used.contains(k)).map(|(_, (_, s))| s).collect();
    unmatched_predictions.sort();
    Ok(CorpusPairing { cases, missing, unmatched_predictions })
}
