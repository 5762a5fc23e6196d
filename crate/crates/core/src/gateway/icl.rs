//! Labeled in-context examples and similarity-based selection.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{GatewayError, TaskKind};
use crate::ingest::{histogram_similarity, SimilarityMetric, TagHistogram};

#[derive(Debug, Clone, PartialEq)]
pub struct IclExample {
    pub example_id: String,
    pub task: TaskKind,
    pub input_html: String,
    pub expected_output: String,
    pub histogram: TagHistogram,
    /// Hex SHA-256 of the trimmed input, used for leave-one-out.
    pub content_hash: String,
    pub source: Option<String>,
}

impl IclExample {
    pub fn new(
        example_id: impl Into<String>,
        task: TaskKind,
        input_html: impl Into<String>,
        expected_output: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let example_id = example_id.into();
        let input_html = input_html.into();
        let expected_output = expected_output.into();
        task.validate_output(&expected_output)
            .map_err(|e| GatewayError::Library(format!("example `{example_id}` has an invalid output: {e}")))?;
        Ok(IclExample {
            histogram: TagHistogram::of_fragment(&input_html),
            content_hash: content_hash(&input_html),
            example_id,
            task,
            input_html,
            expected_output,
            source: None,
        })
    }
}

pub fn content_hash(text: &str) -> String {
    Sha256::digest(text.trim().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IclLibrary {
    examples: Vec<IclExample>,
}

#[derive(Deserialize)]
struct Meta {
    task: TaskKind,
    source: Option<String>,
}

impl IclLibrary {
    pub fn new(examples: Vec<IclExample>) -> Result<Self, GatewayError> {
        let mut ids = HashSet::new();
        for e in &examples {
            if !ids.insert(e.example_id.as_str()) {
                return Err(GatewayError::Library(format!("duplicate example id `{}`", e.example_id)));
            }
        }
        Ok(IclLibrary { examples })
    }

    /// Loads one example per subdirectory (`input.html`, `output.tsv` or
    /// `output.json`, `meta.toml`). Directory names are the example ids.
    pub fn load(dir: &Path) -> Result<Self, GatewayError> {
        let err = |p: &Path, e: &dyn std::fmt::Display| GatewayError::Library(format!("{}: {e}", p.display()));
        let mut dirs: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| err(dir, &e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut examples = Vec::new();
        for d in dirs {
            let id = d.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let meta_path = d.join("meta.toml");
            let meta: Meta = toml::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| err(&meta_path, &e))?)
                .map_err(|e| err(&meta_path, &e))?;
            let input_path = d.join("input.html");
            let input = std::fs::read_to_string(&input_path).map_err(|e| err(&input_path, &e))?;
            let output_path = ["output.tsv", "output.json"]
                .iter()
                .map(|n| d.join(n))
                .find(|p| p.exists())
                .ok_or_else(|| GatewayError::Library(format!("{}: no output.tsv or output.json", d.display())))?;
            let output = std::fs::read_to_string(&output_path).map_err(|e| err(&output_path, &e))?;
            let mut ex = IclExample::new(id, meta.task, input, output.trim_end().to_string())?;
            ex.source = meta.source;
            examples.push(ex);
        }
        IclLibrary::new(examples)
    }

    pub fn examples(&self) -> &[IclExample] {
        &self.examples
    }

    pub fn for_task(&self, task: TaskKind) -> impl Iterator<Item = &IclExample> {
        self.examples.iter().filter(move |e| e.task == task)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Similarity used for ranking; higher is better for both metrics. A
/// degenerate (empty) histogram on either side scores lowest.
fn score(input: &TagHistogram, ex: &IclExample, metric: SimilarityMetric) -> f64 {
    match histogram_similarity(input, &ex.histogram, metric) {
        Ok(s) => match metric {
            SimilarityMetric::Cosine => s,
            SimilarityMetric::KlDivergence => -s,
        },
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Top-`k` examples for `task`, most similar first, ties broken by id.
/// With `exclude_hash` set, an example whose input hashes to it is never
/// returned.
pub fn select_icl_examples<'a>(
    input: &TagHistogram,
    library: &'a IclLibrary,
    task: TaskKind,
    k: usize,
    metric: SimilarityMetric,
    exclude_hash: Option<&str>,
) -> Result<Vec<&'a IclExample>, GatewayError> {
    let k = k.max(1);
    let mut scored: Vec<(f64, &IclExample)> = library
        .for_task(task)
        .filter(|e| exclude_hash != Some(e.content_hash.as_str()))
        .map(|e| (score(input, e, metric), e))
        .collect();
    if scored.is_empty() {
        return Err(GatewayError::EmptyLibrary(task));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.example_id.cmp(&b.1.example_id)));
    if scored.len() < k {
        tracing::warn!(task = %task, available = scored.len(), k, "fewer in-context examples than requested");
    }
    Ok(scored.into_iter().take(k).map(|(_, e)| e).collect())
}
