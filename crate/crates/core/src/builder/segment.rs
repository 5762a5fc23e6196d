//! Line-threshold segmentation of large JSON examples.

use serde_json::{Map, Value};

use super::schema::escape_pointer_token;
use super::BuildError;

pub const DEFAULT_LINE_THRESHOLD: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub index: usize,
    /// Pretty-printed, self-contained JSON text.
    pub text: String,
    /// JSON pointer of the object this fragment belongs to ("" = root).
    pub json_pointer_prefix: String,
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializing a Value cannot fail")
}

fn line_count(v: &Value) -> usize {
    pretty(v).lines().count()
}

/// Splits the pretty-printed (2-space) document at object-key boundaries so
/// each segment stays within `line_threshold` lines where possible. A value
/// that cannot be split further (arrays, scalars, empty objects) becomes its
/// own oversized segment; non-empty objects are split recursively under
/// their own pointer prefix.
pub fn segment_example(json_text: &str, line_threshold: usize) -> Result<Vec<Segment>, BuildError> {
    if line_threshold == 0 {
        return Err(BuildError::InvalidThreshold);
    }
    let value: Value = serde_json::from_str(json_text).map_err(|e| BuildError::NotJson(e.to_string()))?;
    let mut raw = Vec::new();
    split(&value, String::new(), line_threshold, &mut raw);
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(index, (prefix, v))| Segment { index, text: pretty(&v), json_pointer_prefix: prefix })
        .collect())
}

fn split(value: &Value, prefix: String, threshold: usize, out: &mut Vec<(String, Value)>) {
    let obj = match value {
        Value::Object(o) if !o.is_empty() && line_count(value) > threshold => o,
        _ => {
            out.push((prefix, value.clone()));
            return;
        }
    };
    let mut chunk = Map::new();
    let mut chunk_lines = 2;
    let flush = |chunk: &mut Map<String, Value>, chunk_lines: &mut usize, out: &mut Vec<(String, Value)>| {
        if !chunk.is_empty() {
            out.push((prefix.clone(), Value::Object(std::mem::take(chunk))));
        }
        *chunk_lines = 2;
    };
    for (k, v) in obj {
        let entry = line_count(v);
        if 2 + entry > threshold {
            flush(&mut chunk, &mut chunk_lines, out);
            match v {
                Value::Object(inner) if !inner.is_empty() => {
                    split(v, format!("{prefix}/{}", escape_pointer_token(k)), threshold, out)
                }
                _ => {
                    let mut single = Map::new();
                    single.insert(k.clone(), v.clone());
                    out.push((prefix.clone(), Value::Object(single)));
                }
            }
            continue;
        }
        if chunk_lines + entry > threshold {
            flush(&mut chunk, &mut chunk_lines, out);
        }
        chunk.insert(k.clone(), v.clone());
        chunk_lines += entry;
    }
    flush(&mut chunk, &mut chunk_lines, out);
}
