//! Page loading, DOM construction and tag histograms.
//!
//! The DOM is stored as a flat arena in pre-order, so a node id doubles as
//! its document position and subtree membership is a range check.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, SystemTime};

use scraper::{Html, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node inside a [`DomTree`]. Ids follow pre-order.
pub type NodeId = usize;

const NON_VISIBLE_TAGS: &[&str] = &["script", "style", "noscript", "template"];

const INLINE_TAGS: &[&str] = &[
    "a", "abbr", "b", "bdi", "bdo", "cite", "code", "data", "dfn", "em", "i", "kbd", "mark", "q", "s", "samp", "small",
    "span", "strong", "sub", "sup", "time", "u", "var", "wbr",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source unreachable: {uri}: {reason}")]
    SourceUnreachable { uri: String, reason: String },
    #[error("document is empty: {0}")]
    EmptyDocument(String),
    #[error("no element could be recovered from the markup")]
    ParseFailure,
    #[error("cannot compare an empty tag histogram")]
    DegenerateHistogram,
}

#[derive(Debug, Clone)]
pub struct DocumentSnapshot {
    pub source_uri: String,
    pub fetched_at: SystemTime,
    pub raw_html: String,
}

/// Reads a page from disk or over http(s). No scripts are executed, so
/// pages that need interaction must be supplied as pre-rendered snapshots.
pub fn load_snapshot(source: &str, fetch_timeout: Duration) -> Result<DocumentSnapshot, IngestError> {
    let bytes = if source.starts_with("http://") || source.starts_with("https://") {
        fetch_url(source, fetch_timeout)?
    } else {
        let path = source.strip_prefix("file://").unwrap_or(source);
        std::fs::read(Path::new(path))
            .map_err(|e| IngestError::SourceUnreachable { uri: source.to_string(), reason: e.to_string() })?
    };
    if bytes.is_empty() {
        return Err(IngestError::EmptyDocument(source.to_string()));
    }
    Ok(DocumentSnapshot {
        source_uri: source.to_string(),
        fetched_at: SystemTime::now(),
        raw_html: String::from_utf8_lossy(&bytes).into_owned(),
    })
}

fn fetch_url(url: &str, timeout: Duration) -> Result<Vec<u8>, IngestError> {
    let unreachable = |reason: String| IngestError::SourceUnreachable { uri: url.to_string(), reason };
    let client =
        reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| unreachable(e.to_string()))?;
    let resp = client.get(url).send().map_err(|e| unreachable(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(unreachable(format!("http status {}", resp.status())));
    }
    resp.bytes().map(|b| b.to_vec()).map_err(|e| unreachable(e.to_string()))
}

/// A piece of an element's content, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Content {
    Text(String),
    Element(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomNode {
    pub node_id: NodeId,
    pub parent_id: Option<NodeId>,
    pub tag: String,
    pub attributes: Vec<(String, String)>,
    /// Text owned directly by this element, excluding descendants.
    pub text: String,
    pub children: Vec<NodeId>,
    pub content: Vec<Content>,
    /// False for script/style content and everything below it.
    pub visible: bool,
    pub depth: usize,
    subtree_end: NodeId,
}

impl DomNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    nodes: Vec<DomNode>,
}

/// Error-tolerant HTML5 parse into an arena tree rooted at `<html>`.
pub fn parse_dom(raw_html: &str) -> Result<DomTree, IngestError> {
    if raw_html.trim().is_empty() {
        return Err(IngestError::ParseFailure);
    }
    let html = Html::parse_document(raw_html);
    let root = html.root_element();
    let mut nodes = Vec::new();
    build(*root, None, 0, true, &mut nodes);
    if nodes.is_empty() {
        return Err(IngestError::ParseFailure);
    }
    Ok(DomTree { nodes })
}

fn build(
    node: ego_tree::NodeRef<'_, Node>,
    parent: Option<NodeId>,
    depth: usize,
    parent_visible: bool,
    out: &mut Vec<DomNode>,
) -> Option<NodeId> {
    let Node::Element(el) = node.value() else { return None };
    let id = out.len();
    let tag = el.name().to_ascii_lowercase();
    let visible = parent_visible && !NON_VISIBLE_TAGS.contains(&tag.as_str());
    out.push(DomNode {
        node_id: id,
        parent_id: parent,
        attributes: el.attrs().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        tag,
        text: String::new(),
        children: Vec::new(),
        content: Vec::new(),
        visible,
        depth,
        subtree_end: id + 1,
    });
    let mut own_text = String::new();
    let mut children = Vec::new();
    let mut content = Vec::new();
    for child in node.children() {
        match child.value() {
            Node::Text(t) => {
                own_text.push_str(t);
                match content.last_mut() {
                    Some(Content::Text(prev)) => prev.push_str(t),
                    _ => content.push(Content::Text(t.to_string())),
                }
            }
            Node::Element(_) => {
                if let Some(cid) = build(child, Some(id), depth + 1, visible, out) {
                    children.push(cid);
                    content.push(Content::Element(cid));
                }
            }
            _ => {}
        }
    }
    let end = out.len();
    let n = &mut out[id];
    n.text = own_text;
    n.children = children;
    n.content = content;
    n.subtree_end = end;
    Some(id)
}

impl DomTree {
    pub fn root(&self) -> &DomNode {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&DomNode> {
        self.nodes.get(id)
    }

    /// Panics on an id from another tree.
    pub fn node(&self, id: NodeId) -> &DomNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DomNode> {
        self.nodes.iter()
    }

    /// Ids of `id` and all of its descendants, in document order.
    pub fn subtree(&self, id: NodeId) -> std::ops::Range<NodeId> {
        id..self.nodes[id].subtree_end
    }

    /// True when `inner` lies in the subtree rooted at `outer` (inclusive).
    pub fn contains(&self, outer: NodeId, inner: NodeId) -> bool {
        self.subtree(outer).contains(&inner)
    }

    /// True when `a` is a strict ancestor of `b`.
    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.contains(a, b)
    }

    /// Ancestors of `id` from its parent upwards.
    pub fn ancestors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        std::iter::successors(self.nodes[id].parent_id, move |&p| self.nodes[p].parent_id)
    }

    pub fn body(&self) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.tag == "body").map(|n| n.node_id)
    }

    /// Number of edges on the tree path between two nodes.
    pub fn distance(&self, a: NodeId, b: NodeId) -> usize {
        let (mut x, mut y) = (a, b);
        while self.nodes[x].depth > self.nodes[y].depth {
            x = self.nodes[x].parent_id.expect("deeper node has a parent");
        }
        while self.nodes[y].depth > self.nodes[x].depth {
            y = self.nodes[y].parent_id.expect("deeper node has a parent");
        }
        while x != y {
            x = self.nodes[x].parent_id.expect("nodes share a root");
            y = self.nodes[y].parent_id.expect("nodes share a root");
        }
        self.nodes[a].depth + self.nodes[b].depth - 2 * self.nodes[x].depth
    }

    /// Visible text of the subtree, concatenated exactly as written.
    /// Suited to code blocks where markup only adds highlighting.
    pub fn raw_text(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_raw(id, &mut out);
        out
    }

    fn collect_raw(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        if !n.visible {
            return;
        }
        for c in &n.content {
            match c {
                Content::Text(t) => out.push_str(t),
                Content::Element(cid) => self.collect_raw(*cid, out),
            }
        }
    }

    /// Visible text with block boundaries turned into spaces and
    /// whitespace runs collapsed.
    pub fn visible_text(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_visible(id, &mut out);
        normalize_whitespace(&out)
    }

    fn collect_visible(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        if !n.visible {
            return;
        }
        let block = !INLINE_TAGS.contains(&n.tag.as_str());
        if block {
            out.push(' ');
        }
        for c in &n.content {
            match c {
                Content::Text(t) => out.push_str(t),
                Content::Element(cid) => self.collect_visible(*cid, out),
            }
        }
        if block {
            out.push(' ');
        }
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagHistogram {
    pub counts: BTreeMap<String, u64>,
}

impl TagHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Histogram of an HTML fragment, ignoring the html/head/body wrappers
    /// the parser adds around it.
    pub fn of_fragment(html: &str) -> TagHistogram {
        let Ok(tree) = parse_dom(html) else { return TagHistogram::default() };
        let mut hist = TagHistogram::default();
        if let Some(body) = tree.body() {
            for &child in &tree.node(body).children {
                hist.add_subtree(&tree, child);
            }
        }
        hist
    }

    fn add_subtree(&mut self, tree: &DomTree, id: NodeId) {
        for n in tree.subtree(id).map(|i| tree.node(i)) {
            if n.visible {
                *self.counts.entry(n.tag.clone()).or_insert(0) += 1;
            }
        }
    }
}

/// Counts visible element tags in the subtree rooted at `fragment`.
pub fn tag_frequency(tree: &DomTree, fragment: NodeId) -> TagHistogram {
    let mut hist = TagHistogram::default();
    hist.add_subtree(tree, fragment);
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMetric {
    #[default]
    Cosine,
    KlDivergence,
}

impl std::str::FromStr for SimilarityMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Self::Cosine),
            "kl" | "kl-divergence" => Ok(Self::KlDivergence),
            other => Err(format!("unknown similarity metric `{other}`")),
        }
    }
}

const KL_SMOOTHING: f64 = 1e-9;

/// Cosine similarity in [0, 1], or KL divergence D(a || b) >= 0.
pub fn histogram_similarity(a: &TagHistogram, b: &TagHistogram, metric: SimilarityMetric) -> Result<f64, IngestError> {
    if a.is_empty() || b.is_empty() {
        return Err(IngestError::DegenerateHistogram);
    }
    let vocab: std::collections::BTreeSet<&String> = a.counts.keys().chain(b.counts.keys()).collect();
    let get = |h: &TagHistogram, t: &String| h.counts.get(t).copied().unwrap_or(0) as f64;
    match metric {
        SimilarityMetric::Cosine => {
            let dot: f64 = vocab.iter().map(|t| get(a, t) * get(b, t)).sum();
            let na = a.counts.values().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
            let nb = b.counts.values().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
            Ok((dot / (na * nb)).clamp(0.0, 1.0))
        }
        SimilarityMetric::KlDivergence => {
            let smoothed = |h: &TagHistogram| -> Vec<f64> {
                let raw: Vec<f64> = vocab.iter().map(|t| get(h, t) + KL_SMOOTHING).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            };
            let (p, q) = (smoothed(a), smoothed(b));
            let kl: f64 = p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum();
            Ok(kl.max(0.0))
        }
    }
}
