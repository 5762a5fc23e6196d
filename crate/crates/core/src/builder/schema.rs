//! JSON schema nodes, example-driven inference and segment aggregation.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::BuildError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaType {
    Object,
    Array,
    String,
    Number,
    Integer,
    Boolean,
}

impl SchemaType {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaType::Object => "object",
            SchemaType::Array => "array",
            SchemaType::String => "string",
            SchemaType::Number => "number",
            SchemaType::Integer => "integer",
            SchemaType::Boolean => "boolean",
        }
    }

    /// Lenient name lookup accepting common synonyms (`int`, `bool`, `float`...).
    pub fn normalize(name: &str) -> Option<SchemaType> {
        let n = name.trim().trim_matches(|c| c == '`' || c == '"').to_ascii_lowercase();
        if n.ends_with("[]") {
            return Some(SchemaType::Array);
        }
        let head = n.split(|c: char| !c.is_ascii_alphanumeric()).find(|s| !s.is_empty()).unwrap_or("");
        let t = match head {
            "object" | "dict" | "map" | "hash" | "json" | "struct" => SchemaType::Object,
            "array" | "list" | "vec" => SchemaType::Array,
            "string" | "str" | "text" | "char" | "date" | "datetime" | "timestamp" | "uuid" | "enum" | "email"
            | "url" | "uri" => SchemaType::String,
            "number" | "float" | "double" | "decimal" | "real" | "numeric" | "float32" | "float64" => {
                SchemaType::Number
            }
            "integer" | "int" | "int32" | "int64" | "long" | "short" | "uint" | "i32" | "i64" | "u32" | "u64" => {
                SchemaType::Integer
            }
            "boolean" | "bool" => SchemaType::Boolean,
            _ => return None,
        };
        Some(t)
    }
}

impl fmt::Display for SchemaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemaType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object" => Ok(SchemaType::Object),
            "array" => Ok(SchemaType::Array),
            "string" => Ok(SchemaType::String),
            "number" => Ok(SchemaType::Number),
            "integer" => Ok(SchemaType::Integer),
            "boolean" => Ok(SchemaType::Boolean),
            other => Err(format!("unknown schema type `{other}`")),
        }
    }
}

/// Type of a scalar written as text (query values, header values).
pub fn infer_primitive(raw: &str) -> SchemaType {
    let s = raw.trim();
    if matches!(s, "true" | "false") {
        SchemaType::Boolean
    } else if !s.is_empty() && s.parse::<i64>().is_ok() && !(s.len() > 1 && s.starts_with('0')) {
        SchemaType::Integer
    } else if s.parse::<f64>().is_ok_and(|f| f.is_finite()) && s.contains('.') {
        SchemaType::Number
    } else {
        SchemaType::String
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JsonSchemaNode {
    pub schema_type: Option<SchemaType>,
    pub properties: IndexMap<String, JsonSchemaNode>,
    pub items: Option<Box<JsonSchemaNode>>,
    pub required: Vec<String>,
    pub nullable: bool,
    pub description: Option<String>,
}

impl JsonSchemaNode {
    pub fn of_type(t: SchemaType) -> Self {
        let mut node = JsonSchemaNode { schema_type: Some(t), ..Default::default() };
        if t == SchemaType::Array {
            node.items = Some(Box::default());
        }
        node
    }

    pub fn is_object(&self) -> bool {
        self.schema_type == Some(SchemaType::Object)
    }

    /// Serializes to an OpenAPI 3.0 schema object with a stable key order.
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        if let Some(t) = self.schema_type {
            m.insert("type".into(), Value::String(t.as_str().into()));
        }
        if self.nullable {
            m.insert("nullable".into(), Value::Bool(true));
        }
        if let Some(d) = &self.description {
            m.insert("description".into(), Value::String(d.clone()));
        }
        if self.is_object() || !self.properties.is_empty() {
            let props: Map<String, Value> = self.properties.iter().map(|(k, v)| (k.clone(), v.to_value())).collect();
            m.insert("properties".into(), Value::Object(props));
        }
        if !self.required.is_empty() {
            m.insert("required".into(), self.required.iter().cloned().map(Value::String).collect());
        }
        if let Some(items) = &self.items {
            m.insert("items".into(), items.to_value());
        }
        Value::Object(m)
    }

    /// Parses and checks a schema object: known types only, `properties`
    /// only on objects, `items` only on arrays, `required` naming existing
    /// properties.
    pub fn from_value(v: &Value) -> Result<JsonSchemaNode, String> {
        Self::from_value_at(v, "")
    }

    fn from_value_at(v: &Value, at: &str) -> Result<JsonSchemaNode, String> {
        let obj = v.as_object().ok_or_else(|| format!("{at}: schema must be an object"))?;
        let schema_type = match obj.get("type") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.parse::<SchemaType>().map_err(|e| format!("{at}: {e}"))?),
            Some(other) => return Err(format!("{at}: type must be a string, got {other}")),
        };
        let properties = match obj.get("properties") {
            None => IndexMap::new(),
            Some(Value::Object(p)) => p
                .iter()
                .map(|(k, v)| Ok((k.clone(), Self::from_value_at(v, &format!("{at}/{k}"))?)))
                .collect::<Result<_, String>>()?,
            Some(_) => return Err(format!("{at}: properties must be an object")),
        };
        // a bare `properties` block implies an object
        let schema_type = match schema_type {
            None if !properties.is_empty() => Some(SchemaType::Object),
            t => t,
        };
        if !properties.is_empty() && schema_type != Some(SchemaType::Object) {
            return Err(format!("{at}: properties on a non-object schema"));
        }
        let items = match obj.get("items") {
            None => None,
            Some(i) => Some(Box::new(Self::from_value_at(i, &format!("{at}/items"))?)),
        };
        if items.is_some() && schema_type != Some(SchemaType::Array) {
            return Err(format!("{at}: items on a non-array schema"));
        }
        let items = if schema_type == Some(SchemaType::Array) { items.or_else(|| Some(Box::default())) } else { items };
        let required = match obj.get("required") {
            None => Vec::new(),
            Some(Value::Array(r)) => r
                .iter()
                .map(|x| {
                    x.as_str().map(str::to_string).ok_or_else(|| format!("{at}: required entries must be strings"))
                })
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(format!("{at}: required must be an array")),
        };
        if let Some(missing) = required.iter().find(|r| !properties.contains_key(*r)) {
            return Err(format!("{at}: required name `{missing}` is not a property"));
        }
        let nullable = obj.get("nullable").and_then(Value::as_bool).unwrap_or(false);
        let description = obj.get("description").and_then(Value::as_str).map(str::to_string);
        Ok(JsonSchemaNode { schema_type, properties, items, required, nullable, description })
    }

    /// Node at a dotted path, descending through array items transparently.
    pub fn lookup(&self, dotted: &[&str]) -> Option<&JsonSchemaNode> {
        let mut node = self;
        for seg in dotted {
            node = node.object_view();
            node = node.properties.get(*seg)?;
        }
        Some(node)
    }

    /// The object a dotted path would step into: self, or the innermost
    /// array item schema.
    pub fn object_view(&self) -> &JsonSchemaNode {
        let mut node = self;
        while node.schema_type == Some(SchemaType::Array) {
            match &node.items {
                Some(i) => node = i,
                None => break,
            }
        }
        node
    }

    // if-let here trips the borrow checker on the fallthrough `self`
    #[allow(clippy::unnecessary_unwrap)]
    pub fn object_view_mut(&mut self) -> &mut JsonSchemaNode {
        if self.schema_type == Some(SchemaType::Array) && self.items.is_some() {
            return self.items.as_mut().unwrap().object_view_mut();
        }
        self
    }

    /// All dotted property paths, parents before children.
    pub fn dotted_paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(node: &JsonSchemaNode, prefix: &str, out: &mut Vec<String>) {
            for (k, child) in &node.object_view().properties {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(path.clone());
                walk(child, &path, out);
            }
        }
        walk(self, "", &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Unknown,
    Null,
    Bool,
    Int,
    Num,
    Str,
    Array(Box<Inferred>),
    Object(IndexMap<String, Inferred>, Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
struct Inferred {
    shape: Shape,
    nullable: bool,
}

fn observe(v: &Value) -> Inferred {
    let shape = match v {
        Value::Null => Shape::Null,
        Value::Bool(_) => Shape::Bool,
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0 && f.abs() < 9.0e15) {
                Shape::Int
            } else {
                Shape::Num
            }
        }
        Value::String(_) => Shape::Str,
        Value::Array(items) => {
            let unified = items.iter().map(observe).fold(Inferred { shape: Shape::Unknown, nullable: false }, unify);
            Shape::Array(Box::new(unified))
        }
        Value::Object(m) => {
            Shape::Object(m.iter().map(|(k, v)| (k.clone(), observe(v))).collect(), m.keys().cloned().collect())
        }
    };
    Inferred { nullable: matches!(shape, Shape::Null), shape }
}

/// Unifies two observations. Integers widen to numbers; any other kind
/// clash keeps the first-seen kind.
fn unify(a: Inferred, b: Inferred) -> Inferred {
    let nullable = a.nullable || b.nullable;
    let shape = match (a.shape, b.shape) {
        (Shape::Unknown, s) | (s, Shape::Unknown) => s,
        (Shape::Null, s) | (s, Shape::Null) => s,
        (Shape::Int, Shape::Num) | (Shape::Num, Shape::Int) => Shape::Num,
        (Shape::Array(x), Shape::Array(y)) => Shape::Array(Box::new(unify(*x, *y))),
        (Shape::Object(mut pa, ra), Shape::Object(pb, rb)) => {
            for (k, vb) in pb {
                match pa.shift_remove_full(&k) {
                    Some((idx, _, va)) => {
                        pa.shift_insert(idx, k, unify(va, vb));
                    }
                    None => {
                        pa.insert(k, vb);
                    }
                }
            }
            let required = ra.into_iter().filter(|k| rb.contains(k)).collect();
            Shape::Object(pa, required)
        }
        (s, _) => s,
    };
    Inferred { shape, nullable }
}

fn finalize(inf: Inferred) -> JsonSchemaNode {
    let mut node = JsonSchemaNode { nullable: inf.nullable, ..Default::default() };
    match inf.shape {
        Shape::Unknown => {}
        Shape::Null => node.schema_type = Some(SchemaType::String),
        Shape::Bool => node.schema_type = Some(SchemaType::Boolean),
        Shape::Int => node.schema_type = Some(SchemaType::Integer),
        Shape::Num => node.schema_type = Some(SchemaType::Number),
        Shape::Str => node.schema_type = Some(SchemaType::String),
        Shape::Array(items) => {
            node.schema_type = Some(SchemaType::Array);
            node.items = Some(Box::new(finalize(*items)));
        }
        Shape::Object(props, required) => {
            node.schema_type = Some(SchemaType::Object);
            node.properties = props.into_iter().map(|(k, v)| (k, finalize(v))).collect();
            node.required = required;
        }
    }
    node
}

/// Deterministic schema inference from one example value.
pub fn infer_value(v: &Value) -> JsonSchemaNode {
    finalize(observe(v))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeWarning {
    pub pointer: String,
    pub message: String,
}

fn parse_pointer(prefix: &str) -> Result<Vec<String>, BuildError> {
    if prefix.is_empty() {
        return Ok(Vec::new());
    }
    let rest = prefix
        .strip_prefix('/')
        .ok_or_else(|| BuildError::InconsistentPrefixes(format!("`{prefix}` is not a JSON pointer")))?;
    Ok(rest.split('/').map(|t| t.replace("~1", "/").replace("~0", "~")).collect())
}

pub(crate) fn escape_pointer_token(t: &str) -> String {
    t.replace('~', "~0").replace('/', "~1")
}

/// Grafts per-segment schemas back into one document schema.
pub fn aggregate_segments(
    parts: &[(String, JsonSchemaNode)],
) -> Result<(JsonSchemaNode, Vec<MergeWarning>), BuildError> {
    let mut root: Option<JsonSchemaNode> = None;
    let mut warnings = Vec::new();
    for (prefix, schema) in parts {
        let tokens = parse_pointer(prefix)?;
        if tokens.is_empty() {
            match root.as_mut() {
                None => root = Some(schema.clone()),
                Some(r) => merge_into(r, schema, "", &mut warnings),
            }
            continue;
        }
        let mut node = root.get_or_insert_with(|| JsonSchemaNode::of_type(SchemaType::Object));
        let mut at = String::new();
        for tok in &tokens {
            match node.schema_type {
                None if node.items.is_none() => node.schema_type = Some(SchemaType::Object),
                Some(SchemaType::Object) => {}
                _ => {
                    return Err(BuildError::InconsistentPrefixes(format!(
                        "`{prefix}` passes through non-object schema at `{at}`"
                    )))
                }
            }
            if !node.properties.contains_key(tok) {
                node.properties.insert(tok.clone(), JsonSchemaNode::of_type(SchemaType::Object));
                node.required.push(tok.clone());
            }
            at.push('/');
            at.push_str(&escape_pointer_token(tok));
            node = node.properties.get_mut(tok).expect("just inserted");
        }
        if matches!(node.schema_type, Some(t) if t != SchemaType::Object) {
            return Err(BuildError::InconsistentPrefixes(format!("`{prefix}` points at a non-object schema")));
        }
        merge_into(node, schema, &at, &mut warnings);
    }
    let root = root.ok_or_else(|| BuildError::InconsistentPrefixes("no parts to aggregate".into()))?;
    Ok((root, warnings))
}

fn merge_into(into: &mut JsonSchemaNode, other: &JsonSchemaNode, at: &str, warnings: &mut Vec<MergeWarning>) {
    match (into.schema_type, other.schema_type) {
        (None, t) => into.schema_type = t,
        (Some(a), Some(b)) if a != b => {
            warnings.push(MergeWarning {
                pointer: at.to_string(),
                message: format!("conflicting types {a} and {b}; keeping {a}"),
            });
            return;
        }
        _ => {}
    }
    into.nullable |= other.nullable;
    if into.description.is_none() {
        into.description.clone_from(&other.description);
    }
    for (k, v) in &other.properties {
        let child_at = format!("{at}/{}", escape_pointer_token(k));
        match into.properties.get_mut(k) {
            Some(existing) if existing == v => {}
            Some(existing) => merge_into(existing, v, &child_at, warnings),
            None => {
                into.properties.insert(k.clone(), v.clone());
            }
        }
    }
    for r in &other.required {
        if !into.required.contains(r) {
            into.required.push(r.clone());
        }
    }
    match (&mut into.items, &other.items) {
        (Some(a), Some(b)) => merge_into(a, b, &format!("{at}/items"), warnings),
        (None, Some(b)) => into.items = Some(b.clone()),
        _ => {}
    }
}
