//! Independent reference implementations and random inputs.

use std::collections::{BTreeSet, HashSet};

use docs2oas_core::ingest::{DomTree, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

// ---------------------------------------------------------------------
// JSON documents

const KEYS: &[&str] = &["id", "name", "tags", "meta", "value", "items", "owner", "count", "flag", "note"];

pub fn random_json(rng: &mut ChaCha8Rng) -> Value {
    let mut budget = 60usize;
    let mut v = random_value(rng, 0, &mut budget);
    if !v.is_object() && rng.random_bool(0.7) {
        v = json!({ "root": v });
    }
    v
}

fn random_scalar(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..6) {
        0 => Value::Null,
        1 => json!(rng.random_bool(0.5)),
        2 => json!(rng.random_range(-1000..1000)),
        3 => json!(rng.random_range(-500..500) as f64 + 0.5),
        _ => json!(["a", "bolt", "x y", "", "42"][rng.random_range(0..5)]),
    }
}

fn random_value(rng: &mut ChaCha8Rng, depth: usize, budget: &mut usize) -> Value {
    let container = depth < 4 && rng.random_bool(if depth == 0 { 0.95 } else { 0.5 });
    if !container {
        return random_scalar(rng);
    }
    if rng.random_bool(0.65) {
        let mut m = Map::new();
        for _ in 0..rng.random_range(0..=5) {
            if *budget == 0 {
                break;
            }
            let k = KEYS[rng.random_range(0..KEYS.len())];
            if m.contains_key(k) {
                continue;
            }
            *budget -= 1;
            m.insert(k.to_string(), random_value(rng, depth + 1, budget));
        }
        Value::Object(m)
    } else {
        Value::Array((0..rng.random_range(0..=4)).map(|_| random_value(rng, depth + 1, budget)).collect())
    }
}

pub fn key_count(v: &Value) -> usize {
    match v {
        Value::Object(m) => m.len() + m.values().map(key_count).sum::<usize>(),
        Value::Array(a) => a.iter().map(key_count).sum(),
        _ => 0,
    }
}

pub fn depth(v: &Value) -> usize {
    match v {
        Value::Object(m) => 1 + m.values().map(depth).max().unwrap_or(0),
        Value::Array(a) => 1 + a.iter().map(depth).max().unwrap_or(0),
        _ => 0,
    }
}

// ---------------------------------------------------------------------
// Type inference by flattening: every value is recorded under its path
// (keys, with "[]" for array items) in document order, and each path's
// schema is read off its observation list.

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Null,
    Bool,
    Int,
    Num,
    Str,
    Arr,
    Obj,
}

fn kind(v: &Value) -> Kind {
    match v {
        Value::Null => Kind::Null,
        Value::Bool(_) => Kind::Bool,
        Value::Number(n) => {
            let f = n.as_f64().unwrap_or(0.0);
            if n.is_i64() || n.is_u64() || (f.fract() == 0.0 && f.abs() < 9.0e15) {
                Kind::Int
            } else {
                Kind::Num
            }
        }
        Value::String(_) => Kind::Str,
        Value::Array(_) => Kind::Arr,
        Value::Object(_) => Kind::Obj,
    }
}

fn flatten<'a>(v: &'a Value, path: &mut Vec<String>, out: &mut Vec<(Vec<String>, &'a Value)>) {
    out.push((path.clone(), v));
    match v {
        Value::Object(m) => {
            for (k, c) in m {
                path.push(format!(".{k}"));
                flatten(c, path, out);
                path.pop();
            }
        }
        Value::Array(a) => {
            for c in a {
                path.push("[]".into());
                flatten(c, path, out);
                path.pop();
            }
        }
        _ => {}
    }
}

fn schema_at(obs: &[(Vec<String>, &Value)], path: &[String]) -> Value {
    let here: Vec<&Value> = obs.iter().filter(|(p, _)| p.as_slice() == path).map(|(_, v)| *v).collect();
    let kinds: Vec<Kind> = here.iter().map(|v| kind(v)).collect();
    let nullable = kinds.contains(&Kind::Null);
    let first = kinds.iter().copied().find(|k| *k != Kind::Null);
    let mut m = Map::new();
    let ty = match first {
        None if nullable => Some("string"),
        None => None,
        Some(Kind::Int) | Some(Kind::Num) if kinds.contains(&Kind::Num) => Some("number"),
        Some(Kind::Int) => Some("integer"),
        Some(Kind::Bool) => Some("boolean"),
        Some(Kind::Str) => Some("string"),
        Some(Kind::Arr) => Some("array"),
        Some(Kind::Obj) => Some("object"),
        Some(Kind::Null) => unreachable!(),
        Some(Kind::Num) => Some("number"),
    };
    if let Some(t) = ty {
        m.insert("type".into(), json!(t));
    }
    if nullable {
        m.insert("nullable".into(), json!(true));
    }
    match first {
        Some(Kind::Obj) => {
            let objects: Vec<&Map<String, Value>> = here.iter().filter_map(|v| v.as_object()).collect();
            let mut keys: Vec<String> = Vec::new();
            for o in &objects {
                for k in o.keys() {
                    if !keys.contains(k) {
                        keys.push(k.clone());
                    }
                }
            }
            let mut props = Map::new();
            for k in &keys {
                let mut child = path.to_vec();
                child.push(format!(".{k}"));
                props.insert(k.clone(), schema_at(obs, &child));
            }
            m.insert("properties".into(), Value::Object(props));
            let required: Vec<Value> =
                objects[0].keys().filter(|k| objects.iter().all(|o| o.contains_key(*k))).map(|k| json!(k)).collect();
            if !required.is_empty() {
                m.insert("required".into(), Value::Array(required));
            }
        }
        Some(Kind::Arr) => {
            let mut child = path.to_vec();
            child.push("[]".into());
            m.insert("items".into(), schema_at(obs, &child));
        }
        _ => {}
    }
    Value::Object(m)
}

pub fn brute_force_schema(v: &Value) -> Value {
    let mut obs = Vec::new();
    flatten(v, &mut Vec::new(), &mut obs);
    schema_at(&obs, &[])
}

// ---------------------------------------------------------------------
// Multi-request DOMs

enum Frag {
    El(&'static str, Vec<Frag>),
    Text(&'static str, String),
    Pair(usize),
}

fn filler(rng: &mut ChaCha8Rng) -> Frag {
    match rng.random_range(0..4) {
        0 => Frag::Text("p", format!("Paragraph {}", rng.random_range(0..100))),
        1 => Frag::Text("h3", format!("Heading {}", rng.random_range(0..100))),
        2 => Frag::El("ul", vec![Frag::Text("li", "one".into()), Frag::Text("li", "two".into())]),
        _ => Frag::El(
            "table",
            vec![Frag::El("tr", vec![Frag::Text("td", "limit".into()), Frag::Text("td", "Max items".into())])],
        ),
    }
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize) -> Frag {
    let tag = ["div", "section", "article", "div"][rng.random_range(0..4)];
    let n = rng.random_range(1..=4);
    let children = (0..n)
        .map(|_| if depth < 3 && rng.random_bool(0.55) { random_tree(rng, depth + 1) } else { filler(rng) })
        .collect();
    Frag::El(tag, children)
}

fn is_container(f: &Frag) -> bool {
    matches!(f, Frag::El(tag, _) if !matches!(*tag, "ul" | "table" | "tr"))
}

fn count_containers(f: &Frag) -> usize {
    match f {
        Frag::El(_, children) => is_container(f) as usize + children.iter().map(count_containers).sum::<usize>(),
        _ => 0,
    }
}

/// Inserts `frag` at child position `at` (clamped) of the `k`-th container
/// in preorder. Returns true once placed.
fn insert_nth(f: &mut Frag, k: &mut usize, at: usize, frag: &mut Option<Frag>) -> bool {
    let container = is_container(f);
    let Frag::El(_, children) = f else { return false };
    if container {
        if *k == 0 {
            let at = at.min(children.len());
            children.insert(at, frag.take().expect("placed once"));
            return true;
        }
        *k -= 1;
    }
    children.iter_mut().any(|c| insert_nth(c, k, at, frag))
}

fn render(f: &Frag, out: &mut String) {
    match f {
        Frag::El(tag, children) => {
            out.push_str(&format!("<{tag}>"));
            children.iter().for_each(|c| render(c, out));
            out.push_str(&format!("</{tag}>"));
        }
        Frag::Text(tag, t) => out.push_str(&format!("<{tag}>{t}</{tag}>")),
        Frag::Pair(i) => out.push_str(&format!(
            "<pre>curl https://api.test/v1/thing{i}?limit=5</pre><pre>{{\"id\": {i}, \"name\": \"n{i}\"}}</pre>"
        )),
    }
}

/// A random nested page with `pairs` request/response examples planted at
/// random positions.
pub fn multi_pair_dom(rng: &mut ChaCha8Rng, pairs: usize) -> String {
    let mut root = Frag::El("main", (0..rng.random_range(2..=4)).map(|_| random_tree(rng, 1)).collect());
    for i in 0..pairs {
        let mut k = rng.random_range(0..count_containers(&root));
        let at = rng.random_range(0..=4);
        let placed = insert_nth(&mut root, &mut k, at, &mut Some(Frag::Pair(i)));
        assert!(placed);
    }
    let mut html = String::from("<html><body>");
    render(&root, &mut html);
    html.push_str("</body></html>");
    html
}

/// Scope by exhaustive enumeration: of all nodes below the body that
/// contain `target` and no other request, the outermost; then its later
/// siblings up to the first one containing another request.
pub fn multi_scope_oracle(tree: &DomTree, target: NodeId, requests: &[NodeId]) -> Vec<NodeId> {
    let body = tree.body().expect("page has a body");
    let others: Vec<NodeId> = requests.iter().copied().filter(|&r| r != target).collect();
    let clean = |a: NodeId| others.iter().all(|&o| !tree.contains(a, o));
    let anchor = tree
        .nodes()
        .map(|n| n.node_id)
        .filter(|&a| a != body && tree.contains(body, a) && tree.contains(a, target) && clean(a))
        .min_by_key(|&a| tree.node(a).depth)
        .expect("the request itself qualifies");
    let mut out = vec![anchor];
    let parent = tree.node(anchor).parent_id;
    let mut siblings: Vec<NodeId> =
        tree.nodes().filter(|n| n.parent_id == parent && n.node_id > anchor).map(|n| n.node_id).collect();
    siblings.sort_unstable();
    for s in siblings {
        if !clean(s) {
            break;
        }
        out.push(s);
    }
    out
}

// ---------------------------------------------------------------------
// Single-request DOMs with planted parameter tables

pub struct SinglePage {
    pub html: String,
    pub names: Vec<String>,
}

const PARAM_NAMES: &[&str] = &["limit", "cursor", "sort", "region", "status", "expand"];

/// One example for GET /v1/things plus planted sections: some naming the
/// endpoint with a parameter table, some tables without the endpoint,
/// and unrelated endpoints.
pub fn single_pair_dom(rng: &mut ChaCha8Rng) -> SinglePage {
    let mut names: Vec<&str> = PARAM_NAMES.to_vec();
    names.shuffle(rng);
    let used: Vec<&str> = names[..rng.random_range(2..=5)].to_vec();
    let query: Vec<String> = used.iter().map(|n| format!("{n}=1")).collect();
    let example =
        format!("<pre>curl \"https://api.test/v1/things?{}\"</pre><pre>{{\"id\": 3}}</pre>", query.join("&amp;"));
    let mut sections: Vec<String> = Vec::new();
    for i in 0..rng.random_range(1..=3) {
        let mut hits: Vec<&&str> = used.iter().filter(|_| rng.random_bool(0.6)).collect();
        if i == 0 && hits.is_empty() {
            hits.push(&used[0]);
        }
        let rows: String = hits.iter().map(|n| format!("<tr><td>{n}</td><td>Filter.</td></tr>")).collect();
        let mention = if rng.random_bool(0.7) { "GET /v1/things" } else { "/v1/things" };
        sections.push(format!("<section><h2>Things</h2><p><code>{mention}</code></p><table>{rows}</table></section>"));
    }
    for _ in 0..rng.random_range(0..=2) {
        let n = used[rng.random_range(0..used.len())];
        sections.push(format!("<div><table><tr><td>{n}</td><td>Elsewhere.</td></tr></table></div>"));
    }
    if rng.random_bool(0.5) {
        sections.push("<section><p><code>POST /v2/other</code></p><ul><li>limit</li></ul></section>".into());
    }
    sections.shuffle(rng);
    let at = rng.random_range(0..=sections.len());
    sections.insert(at, example);
    let mut inner = sections.join("");
    if rng.random_bool(0.5) {
        inner = format!("<div class=\"wrap\">{inner}</div>");
    }
    SinglePage {
        html: format!("<html><body><main>{inner}</main></body></html>"),
        names: used.iter().map(|s| s.to_string()).chain(std::iter::once("id".to_string())).collect(),
    }
}

/// Every node below the body that strictly contains a parameter-like leaf
/// and contains a leaf naming the endpoint, keeping only the innermost
/// ones, ranked by distinct parameter names then method mention. Returns
/// the top-ranked set.
pub fn single_scope_oracle(
    tree: &DomTree,
    names: &[String],
    headers: &[&str],
    path: &str,
    method: &str,
    excluded: &[NodeId],
) -> BTreeSet<NodeId> {
    let body = tree.body().expect("page has a body");
    let names: HashSet<String> = names.iter().map(|n| n.to_lowercase()).collect();
    let leaves: Vec<NodeId> = tree
        .nodes()
        .filter(|n| n.visible && n.children.is_empty() && tree.contains(body, n.node_id))
        .map(|n| n.node_id)
        .filter(|&l| !excluded.iter().any(|&x| tree.contains(x, l)))
        .collect();
    let key = |l: NodeId| tree.raw_text(l).trim().trim_end_matches(':').trim().to_lowercase();
    let is_param = |l: NodeId| names.contains(&key(l)) || headers.contains(&key(l).as_str());
    let is_endpoint =
        |l: NodeId| tree.raw_text(l).split_whitespace().any(|t| t.trim_matches(|c| matches!(c, '"' | '`')) == path);
    let qualifies = |x: NodeId| {
        leaves.iter().any(|&l| x != l && tree.contains(x, l) && is_param(l))
            && leaves.iter().any(|&l| tree.contains(x, l) && is_endpoint(l))
    };
    let q: Vec<NodeId> =
        tree.nodes().map(|n| n.node_id).filter(|&x| x != body && tree.contains(body, x) && qualifies(x)).collect();
    let minimal: Vec<NodeId> =
        q.iter().copied().filter(|&x| !q.iter().any(|&y| y != x && tree.contains(x, y))).collect();
    let rank = |x: NodeId| {
        let inside: Vec<NodeId> = leaves.iter().copied().filter(|&l| tree.contains(x, l)).collect();
        let hits: HashSet<String> = inside.iter().map(|&l| key(l)).filter(|k| names.contains(k)).collect();
        let method_hit = inside
            .iter()
            .any(|&l| tree.raw_text(l).split_whitespace().next().is_some_and(|t| t.eq_ignore_ascii_case(method)));
        (hits.len(), method_hit)
    };
    let Some(best) = minimal.iter().map(|&x| rank(x)).max() else {
        return BTreeSet::new();
    };
    minimal.into_iter().filter(|&x| rank(x) == best).collect()
}
