//! Locating, ranking and trimming the part of a page that documents one
//! endpoint.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::enrich::name_in_scope;
use crate::extractor::EndpointExamplePair;
use crate::ingest::{parse_dom, Content, DomTree, NodeId};

pub const DEFAULT_SCOPE_BUDGET: usize = 12_000;

/// Leaf texts that announce a parameter listing.
pub const PARAMETER_HEADERS: &[&str] =
    &["parameters", "query parameters", "path parameters", "request body", "response", "headers"];

/// Further listing titles kept when cleaning a scope, so that tables
/// below them keep their request/response context.
const LISTING_TITLES: &[&str] = &[
    "header parameters",
    "body parameters",
    "form parameters",
    "arguments",
    "request",
    "responses",
    "response body",
    "response fields",
    "returns",
];

const TABLE_LIKE: &[&str] = &["table", "thead", "tbody", "tr", "dl"];

const VOID_TAGS: &[&str] =
    &["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr"];

const SKIPPED_HEADERS: &[&str] = &[
    "accept",
    "authorization",
    "content-type",
    "content-length",
    "host",
    "user-agent",
    "accept-encoding",
    "connection",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScopeError {
    #[error("request node {0} is not in the tree")]
    ScopeNotFound(NodeId),
    #[error("no scope candidates")]
    NoCandidates,
    #[error("scope needs at least {needed} characters but the budget is {budget}")]
    BudgetImpossible { needed: usize, budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScopeCandidate {
    pub anchor_node_id: NodeId,
    pub rank_param_hits: usize,
    pub rank_method_hit: bool,
    pub subtree_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeOrigin {
    MultiRequest,
    SingleRequest,
    /// No candidate was found; the whole body is used.
    BodyFallback,
}

impl ScopeOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeOrigin::MultiRequest => "multi-request",
            ScopeOrigin::SingleRequest => "single-request",
            ScopeOrigin::BodyFallback => "body-fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnrichmentScope {
    pub node_ids: Vec<NodeId>,
    pub origin: ScopeOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessedScope {
    pub cleaned_html: String,
    pub visible_text: String,
    pub retained_param_names: Vec<String>,
}

fn collect_keys(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                out.push(k.clone());
                collect_keys(child, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|i| collect_keys(i, out)),
        _ => {}
    }
}

/// Parameter names the examples attest: query and header names plus every
/// key of the JSON request and response bodies.
pub fn example_param_names(pair: &EndpointExamplePair) -> Vec<String> {
    let req = &pair.request.parsed;
    let mut names: Vec<String> = req.query_params.iter().map(|(k, _)| k.clone()).collect();
    names.extend(
        req.header_params
            .iter()
            .filter(|(k, _)| !SKIPPED_HEADERS.contains(&k.to_ascii_lowercase().as_str()))
            .map(|(k, _)| k.clone()),
    );
    if let Some(body) = req.body_json() {
        collect_keys(&body, &mut names);
    } else if let Some(body) = &req.body {
        if body.contains('=') && !body.contains(char::is_whitespace) {
            names.extend(url::form_urlencoded::parse(body.as_bytes()).map(|(k, _)| k.into_owned()));
        }
    }
    if let Some(v) = pair.response.as_ref().and_then(|r| r.json()) {
        collect_keys(&v, &mut names);
    }
    let mut seen = HashSet::new();
    names.retain(|n| !n.is_empty() && seen.insert(n.to_lowercase()));
    names
}

fn body_or_root(tree: &DomTree) -> NodeId {
    tree.body().unwrap_or(tree.root().node_id)
}

/// Highest ancestor of the target request holding no other request; when
/// it has following siblings before the next request, the scope is that
/// sibling run (the next request's ancestor itself excluded).
pub fn find_scope_multi(
    tree: &DomTree,
    target: &EndpointExamplePair,
    all_pairs: &[EndpointExamplePair],
) -> Result<EnrichmentScope, ScopeError> {
    let req = target.request.node_id;
    if tree.get(req).is_none() {
        return Err(ScopeError::ScopeNotFound(req));
    }
    let others: Vec<NodeId> =
        all_pairs.iter().map(|p| p.request.node_id).filter(|&id| id != req && tree.get(id).is_some()).collect();
    let body = body_or_root(tree);
    let holds_other = |x: NodeId| others.iter().any(|&o| tree.contains(x, o));

    let mut anchor = req;
    for a in tree.ancestors(req) {
        if a == body || !tree.contains(body, a) || holds_other(a) {
            break;
        }
        anchor = a;
    }
    let mut node_ids = vec![anchor];
    if let Some(parent) = tree.node(anchor).parent_id {
        let siblings = &tree.node(parent).children;
        let pos = siblings.iter().position(|&s| s == anchor).expect("child of its parent");
        for &s in &siblings[pos + 1..] {
            if holds_other(s) {
                break;
            }
            node_ids.push(s);
        }
    }
    Ok(EnrichmentScope { node_ids, origin: ScopeOrigin::MultiRequest })
}

fn leaf_key(text: &str) -> String {
    text.trim().trim_end_matches(':').trim().to_lowercase()
}

fn is_template(seg: &str) -> bool {
    (seg.starts_with('{') && seg.ends_with('}')) || (seg.starts_with(':') && seg.len() > 1)
}

/// Path-like tokens in free text: absolute URLs reduced to their path, and
/// tokens starting with `/`.
fn path_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|tok| {
            let tok = tok.trim_matches(|c| matches!(c, '"' | '\'' | '`' | '(' | ')' | ',' | ';' | '.'));
            let path = match tok.find("://") {
                Some(i) => {
                    let rest = &tok[i + 3..];
                    &rest[rest.find('/')?..]
                }
                None if tok.starts_with('/') => tok,
                None => return None,
            };
            let path = path.split(['?', '#']).next().unwrap_or(path).trim_end_matches(':');
            Some(path.to_string())
        })
        .collect()
}

/// True when two paths agree segment by segment, templates matching
/// anything.
fn paths_match(a: &str, b: &str) -> bool {
    let sa: Vec<&str> = a.trim_end_matches('/').split('/').collect();
    let sb: Vec<&str> = b.trim_end_matches('/').split('/').collect();
    sa.len() == sb.len() && sa.iter().zip(&sb).all(|(x, y)| x == y || is_template(x) || is_template(y))
}

fn mentions_endpoint(text: &str, path: &str) -> bool {
    path_tokens(text).iter().any(|p| paths_match(p, path))
}

fn example_nodes(pair: &EndpointExamplePair) -> Vec<NodeId> {
    let mut v = vec![pair.request.node_id];
    if let Some(r) = &pair.response {
        v.push(r.node_id);
    }
    v
}

fn leaves<'a>(tree: &'a DomTree, within: NodeId, skip: &'a [NodeId]) -> impl Iterator<Item = NodeId> + 'a {
    tree.subtree(within).filter(move |&i| {
        let n = tree.node(i);
        n.visible && n.is_leaf() && !skip.iter().any(|&s| tree.contains(s, i))
    })
}

/// Anchors reachable from parameter-like leaves: the first ancestor of each
/// such leaf whose subtree also holds a leaf naming the endpoint path.
pub fn find_candidates_single(tree: &DomTree, target: &EndpointExamplePair) -> Vec<ScopeCandidate> {
    let body = body_or_root(tree);
    let skip = example_nodes(target);
    let names: HashSet<String> = example_param_names(target).iter().map(|n| n.to_lowercase()).collect();
    let path = &target.request.parsed.path;
    let method = target.request.parsed.method.as_str();

    let all_leaves: Vec<NodeId> = leaves(tree, body, &skip).collect();
    let endpoint_leaves: Vec<NodeId> =
        all_leaves.iter().copied().filter(|&l| mentions_endpoint(&tree.raw_text(l), path)).collect();
    let param_leaves = all_leaves.iter().copied().filter(|&l| {
        let k = leaf_key(&tree.raw_text(l));
        names.contains(&k) || PARAMETER_HEADERS.contains(&k.as_str())
    });

    let mut anchors: Vec<NodeId> = Vec::new();
    for leaf in param_leaves {
        let found = tree
            .ancestors(leaf)
            .take_while(|&a| a != body && tree.contains(body, a))
            .find(|&a| endpoint_leaves.iter().any(|&e| tree.contains(a, e)));
        if let Some(a) = found {
            if !anchors.contains(&a) {
                anchors.push(a);
            }
        }
    }
    anchors.sort_unstable();
    anchors
        .into_iter()
        .map(|a| {
            let inside: Vec<NodeId> = all_leaves.iter().copied().filter(|&l| tree.contains(a, l)).collect();
            let hits: HashSet<String> =
                inside.iter().map(|&l| leaf_key(&tree.raw_text(l))).filter(|k| names.contains(k)).collect();
            let method_hit = inside
                .iter()
                .any(|&l| tree.raw_text(l).split_whitespace().next().is_some_and(|t| t.eq_ignore_ascii_case(method)));
            ScopeCandidate {
                anchor_node_id: a,
                rank_param_hits: hits.len(),
                rank_method_hit: method_hit,
                subtree_size: tree.subtree(a).len(),
            }
        })
        .collect()
}

/// Drops candidates that are ancestors of other candidates, then picks the
/// best by (parameter hits, method hit); ties are broken with a ChaCha8
/// generator seeded by `seed`.
pub fn rank_and_select(
    tree: &DomTree,
    candidates: &[ScopeCandidate],
    seed: u64,
) -> Result<EnrichmentScope, ScopeError> {
    let mut survivors: Vec<ScopeCandidate> = candidates
        .iter()
        .copied()
        .filter(|c| {
            !candidates
                .iter()
                .any(|o| o.anchor_node_id != c.anchor_node_id && tree.is_ancestor(c.anchor_node_id, o.anchor_node_id))
        })
        .collect();
    if survivors.is_empty() {
        return Err(ScopeError::NoCandidates);
    }
    survivors.sort_by(|a, b| {
        (b.rank_param_hits, b.rank_method_hit)
            .cmp(&(a.rank_param_hits, a.rank_method_hit))
            .then(a.anchor_node_id.cmp(&b.anchor_node_id))
    });
    let top = (survivors[0].rank_param_hits, survivors[0].rank_method_hit);
    let tied = survivors.iter().take_while(|c| (c.rank_param_hits, c.rank_method_hit) == top).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = survivors[rng.random_range(0..tied)];
    Ok(EnrichmentScope { node_ids: vec![pick.anchor_node_id], origin: ScopeOrigin::SingleRequest })
}

/// Scope for `target`, choosing the multi- or single-request procedure by
/// the number of pairs on the page and falling back to the body.
pub fn find_scope(
    tree: &DomTree,
    target: &EndpointExamplePair,
    all_pairs: &[EndpointExamplePair],
    seed: u64,
) -> Result<EnrichmentScope, ScopeError> {
    if all_pairs.len() >= 2 {
        return find_scope_multi(tree, target, all_pairs);
    }
    let candidates = find_candidates_single(tree, target);
    match rank_and_select(tree, &candidates, seed) {
        Ok(s) => Ok(s),
        Err(ScopeError::NoCandidates) => {
            Ok(EnrichmentScope { node_ids: vec![body_or_root(tree)], origin: ScopeOrigin::BodyFallback })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Node(NodeId),
    Text(usize, usize),
}

struct Cleaner<'a> {
    tree: &'a DomTree,
    excluded: Vec<NodeId>,
    names: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Cleaner<'_> {
    fn is_excluded(&self, id: NodeId) -> bool {
        !self.tree.node(id).visible || self.excluded.contains(&id)
    }

    fn render_node(&self, id: NodeId, out: &mut String) {
        if self.is_excluded(id) {
            return;
        }
        let n = self.tree.node(id);
        // the parser inserts tbody on its own; it carries no information
        let wrap = n.tag != "tbody";
        if wrap {
            out.push('<');
            out.push_str(&n.tag);
            out.push('>');
        }
        if VOID_TAGS.contains(&n.tag.as_str()) {
            return;
        }
        for c in &n.content {
            match c {
                Content::Text(t) => out.push_str(&escape(t)),
                Content::Element(cid) => self.render_node(*cid, out),
            }
        }
        if wrap {
            out.push_str("</");
            out.push_str(&n.tag);
            out.push('>');
        }
    }

    fn unit_text(&self, parent: NodeId, index: usize) -> &str {
        match &self.tree.node(parent).content[index] {
            Content::Text(t) => t,
            Content::Element(_) => "",
        }
    }

    fn render_unit(&self, u: Unit, out: &mut String) {
        match u {
            Unit::Node(id) => self.render_node(id, out),
            Unit::Text(parent, i) => out.push_str(&escape(self.unit_text(parent, i))),
        }
    }

    fn visible_of(&self, u: Unit) -> String {
        match u {
            Unit::Node(id) => {
                let mut s = String::new();
                self.render_node(id, &mut s);
                parse_dom(&s).ok().and_then(|t| t.body().map(|b| t.visible_text(b))).unwrap_or_default()
            }
            Unit::Text(parent, i) => self.unit_text(parent, i).to_string(),
        }
    }

    fn score(&self, u: Unit) -> usize {
        let text = self.visible_of(u);
        let mut score = self.names.iter().filter(|n| name_in_scope(n, &[&text])).count();
        if let Unit::Node(id) = u {
            let table_like = self
                .tree
                .subtree(id)
                .any(|i| !self.is_excluded(i) && TABLE_LIKE.contains(&self.tree.node(i).tag.as_str()));
            if table_like {
                score += 2;
            }
            let key = leaf_key(&text);
            if PARAMETER_HEADERS.contains(&key.as_str()) || LISTING_TITLES.contains(&key.as_str()) {
                score += 1;
            }
        }
        score
    }

    fn children_units(&self, id: NodeId) -> Vec<Unit> {
        self.tree
            .node(id)
            .content
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                Content::Element(cid) if !self.is_excluded(*cid) => Some(Unit::Node(*cid)),
                Content::Text(t) if !t.trim().is_empty() => Some(Unit::Text(id, i)),
                _ => None,
            })
            .collect()
    }

    fn render(&self, wrappers: &[NodeId], units: &[Unit]) -> String {
        let mut out = String::new();
        for w in wrappers {
            out.push_str(&format!("<{}>", self.tree.node(*w).tag));
        }
        for u in units {
            self.render_unit(*u, &mut out);
        }
        for w in wrappers.iter().rev() {
            out.push_str(&format!("</{}>", self.tree.node(*w).tag));
        }
        out
    }
}

/// Removes the examples and low-relevance children, strips attributes and
/// trims the result to `char_budget` characters.
pub fn preprocess_scope(
    tree: &DomTree,
    scope: &EnrichmentScope,
    pair: &EndpointExamplePair,
    char_budget: usize,
) -> Result<ProcessedScope, ScopeError> {
    let request_text = pair.request.raw_text.trim().to_string();
    let mut excluded = example_nodes(pair);
    for n in tree.nodes() {
        if !request_text.is_empty() && tree.raw_text(n.node_id).trim() == request_text {
            excluded.push(n.node_id);
        }
    }
    let names = example_param_names(pair);
    let cleaner = Cleaner { tree, excluded, names };

    let (mut wrappers, mut units) = match scope.node_ids.as_slice() {
        [single] => (vec![*single], cleaner.children_units(*single)),
        many => (Vec::new(), many.iter().copied().filter(|&i| !cleaner.is_excluded(i)).map(Unit::Node).collect()),
    };
    let html = loop {
        let scores: Vec<usize> = units.iter().map(|u| cleaner.score(*u)).collect();
        if scores.iter().any(|&s| s > 0) {
            let kept: Vec<Unit> = units.iter().zip(&scores).filter(|(_, s)| **s > 0).map(|(u, _)| *u).collect();
            units = kept;
        }
        let mut scores: Vec<usize> = units.iter().map(|u| cleaner.score(*u)).collect();
        let mut html = cleaner.render(&wrappers, &units);
        while html.chars().count() > char_budget && units.len() > 1 {
            let (drop, _) = scores.iter().enumerate().rev().min_by_key(|(_, s)| **s).expect("non-empty");
            units.remove(drop);
            scores.remove(drop);
            html = cleaner.render(&wrappers, &units);
        }
        if html.chars().count() <= char_budget {
            break html;
        }
        match units.first() {
            Some(Unit::Node(id)) if !cleaner.children_units(*id).is_empty() => {
                wrappers.push(*id);
                units = cleaner.children_units(*id);
            }
            _ => return Err(ScopeError::BudgetImpossible { needed: html.chars().count(), budget: char_budget }),
        }
    };
    let html = if request_text.is_empty() { html } else { html.replace(&request_text, "") };
    let visible_text = parse_dom(&html).ok().and_then(|t| t.body().map(|b| t.visible_text(b))).unwrap_or_default();
    let retained_param_names = cleaner.names.iter().filter(|n| name_in_scope(n, &[&visible_text])).cloned().collect();
    Ok(ProcessedScope { cleaned_html: html, visible_text, retained_param_names })
}
