//! End-to-end run: page in, one OpenAPI document per endpoint out.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{
    build_base_oas_with_body, generate_skeleton, infer_document, infer_value, template_candidates, JsonSchemaNode,
    OasDocument, OasSkeleton, DEFAULT_LINE_THRESHOLD,
};
use crate::enrich::{
    filter_schema, filter_table, merge, parse_request_tsv, parse_response_schema, strip_code_fences, EnrichmentTable,
    FilterAudit, ResponseEnrichmentSchema,
};
use crate::extractor::{extract_pairs, EndpointExamplePair};
use crate::gateway::{
    build_prompt, select_icl_examples, skeleton_payload, Decoding, Gateway, GatewayError, IclExample, IclLibrary,
    ProviderConfig, TaskKind, DEFAULT_ICL_K, DEFAULT_PARALLELISM,
};
use crate::ingest::{load_snapshot, parse_dom, DomTree, SimilarityMetric, TagHistogram};
use crate::scope::{find_scope, preprocess_scope, ScopeOrigin, DEFAULT_SCOPE_BUDGET};
use crate::validate::{check_value, summarize, SyntaxSummary, ValidationReport};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Yaml,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Yaml => "yaml",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "yaml" | "yml" => Ok(OutputFormat::Yaml),
            other => Err(format!("unknown output format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub icl_path: Option<PathBuf>,
    pub icl_k: usize,
    pub icl_metric: SimilarityMetric,
    pub line_threshold: usize,
    pub scope_budget: usize,
    pub seed: u64,
    pub enrichment_enabled: bool,
    pub output_format: OutputFormat,
    /// Pages processed concurrently.
    pub jobs: usize,
    /// Gateway jobs in flight per page.
    pub parallelism: usize,
    /// Seconds allowed for fetching a remote page.
    pub fetch_timeout: u64,
    pub decoding: Decoding,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            provider: ProviderConfig::default(),
            icl_path: None,
            icl_k: DEFAULT_ICL_K,
            icl_metric: SimilarityMetric::Cosine,
            line_threshold: DEFAULT_LINE_THRESHOLD,
            scope_budget: DEFAULT_SCOPE_BUDGET,
            seed: 0,
            enrichment_enabled: true,
            output_format: OutputFormat::Json,
            jobs: 1,
            parallelism: DEFAULT_PARALLELISM,
            fetch_timeout: 30,
            decoding: Decoding::default(),
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let positive = [
            ("icl_k", self.icl_k as u64),
            ("line_threshold", self.line_threshold as u64),
            ("scope_budget", self.scope_budget as u64),
            ("jobs", self.jobs as u64),
            ("parallelism", self.parallelism as u64),
            ("fetch_timeout", self.fetch_timeout),
            ("provider.request_timeout", self.provider.request_timeout),
            ("provider.max_retries", u64::from(self.provider.max_retries)),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        self.provider.check().map_err(|e| PipelineError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageError {
    pub stage: String,
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentEntry {
    pub file: String,
    pub path: String,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope_origin: Option<ScopeOrigin>,
    pub enriched: bool,
    pub hallucinations_filtered: Vec<FilterAudit>,
    pub is_valid_oas: bool,
    pub warning_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageReport {
    pub source: String,
    pub endpoints_found: usize,
    pub pairs_formed: usize,
    pub documents: Vec<DocumentEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub endpoints_found: usize,
    pub pairs_formed: usize,
    pub scope_origins: BTreeMap<String, usize>,
    pub hallucinations_filtered: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<SyntaxSummary>,
    pub all_valid: bool,
    pub pages: Vec<PageReport>,
    pub errors: Vec<StageError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedDocument {
    pub file_name: String,
    pub document: OasDocument,
    pub content: String,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub documents: Vec<EmittedDocument>,
    pub report: RunReport,
}

impl RunOutput {
    /// Exit status contract: success only when every document validates and
    /// no page failed.
    pub fn succeeded(&self) -> bool {
        self.report.all_valid && self.report.errors.is_empty() && !self.documents.is_empty()
    }
}

/// Gateway, demonstration library and settings shared by every page.
#[derive(Debug)]
pub struct Pipeline {
    config: RunConfig,
    gateway: Gateway,
    library: Option<IclLibrary>,
}

struct PageOutcome {
    docs: Vec<(OasDocument, DocumentEntry)>,
    report: PageReport,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.check()?;
        let gateway = Gateway::from_config(&config.provider, config.decoding.clone(), config.parallelism)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let library = match &config.icl_path {
            Some(p) => Some(IclLibrary::load(p).map_err(|e| PipelineError::Config(e.to_string()))?),
            None => None,
        };
        Ok(Pipeline { config, gateway, library })
    }

    /// Uses a caller-supplied gateway, e.g. a custom provider.
    pub fn with_gateway(
        config: RunConfig,
        gateway: Gateway,
        library: Option<IclLibrary>,
    ) -> Result<Self, PipelineError> {
        config.check()?;
        Ok(Pipeline { config, gateway, library })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Processes every source (file path or URL) and assembles the report.
    pub fn run(&self, sources: &[String]) -> RunOutput {
        let outcomes = self.run_pages(sources);
        self.assemble(sources, outcomes)
    }

    /// Runs one page given as markup, without touching the filesystem.
    pub fn run_html(&self, source: &str, html: &str) -> RunOutput {
        let outcome = parse_dom(html).map(|tree| self.run_tree(source, &tree)).map_err(|e| StageError {
            stage: "ingest".into(),
            source: source.into(),
            message: e.to_string(),
        });
        self.assemble(&[source.to_string()], vec![outcome])
    }

    fn assemble(&self, sources: &[String], outcomes: Vec<Result<PageOutcome, StageError>>) -> RunOutput {
        let mut documents = Vec::new();
        let mut pages = Vec::new();
        let mut errors = Vec::new();
        let mut taken: BTreeMap<String, usize> = BTreeMap::new();
        for (source, outcome) in sources.iter().zip(outcomes) {
            match outcome {
                Ok(mut page) => {
                    for (doc, entry) in page.docs.iter_mut() {
                        let emitted = self.emit(doc, &mut taken);
                        entry.file = emitted.file_name.clone();
                        entry.is_valid_oas = emitted.validation.is_valid_oas;
                        entry.warning_count = emitted.validation.warning_count;
                        documents.push(emitted);
                    }
                    page.report.documents = page.docs.into_iter().map(|(_, e)| e).collect();
                    pages.push(page.report);
                }
                Err(e) => errors.push(StageError { source: source.clone(), ..e }),
            }
        }
        let mut scope_origins = BTreeMap::new();
        let mut hallucinations = 0;
        for d in pages.iter().flat_map(|p| &p.documents) {
            if let Some(o) = d.scope_origin {
                *scope_origins.entry(o.as_str().to_string()).or_insert(0) += 1;
            }
            hallucinations += d.hallucinations_filtered.len();
        }
        let reports: Vec<ValidationReport> = documents.iter().map(|d| d.validation.clone()).collect();
        let report = RunReport {
            endpoints_found: pages.iter().map(|p| p.endpoints_found).sum(),
            pairs_formed: pages.iter().map(|p| p.pairs_formed).sum(),
            scope_origins,
            hallucinations_filtered: hallucinations,
            validation: summarize(&reports).ok(),
            all_valid: reports.iter().all(|r| r.is_valid_oas),
            pages,
            errors,
        };
        RunOutput { documents, report }
    }

    fn run_pages(&self, sources: &[String]) -> Vec<Result<PageOutcome, StageError>> {
        let jobs = self.config.jobs.max(1);
        if jobs == 1 || sources.len() <= 1 {
            return sources.iter().map(|s| self.run_page(s)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: std::sync::Mutex<Vec<Option<Result<PageOutcome, StageError>>>> =
            std::sync::Mutex::new((0..sources.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..jobs.min(sources.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= sources.len() {
                        break;
                    }
                    let r = self.run_page(&sources[i]);
                    slots.lock().expect("page slots")[i] = Some(r);
                });
            }
        });
        slots.into_inner().expect("page slots").into_iter().map(|r| r.expect("every page ran")).collect()
    }

    fn emit(&self, doc: &OasDocument, taken: &mut BTreeMap<String, usize>) -> EmittedDocument {
        let value = doc.to_value();
        let validation = check_value(&value);
        let stem = doc.file_stem();
        let n = taken.entry(stem.clone()).or_insert(0);
        *n += 1;
        let stem = if *n == 1 { stem } else { format!("{stem}_{n}") };
        let ext = self.config.output_format.extension();
        let mut file_name = format!("{stem}.oas.{ext}");
        if !validation.is_valid_oas {
            file_name.push_str(".partial");
        }
        let content = match self.config.output_format {
            OutputFormat::Json => doc.to_json_string(),
            OutputFormat::Yaml => doc.to_yaml_string(),
        };
        EmittedDocument { file_name, document: doc.clone(), content, validation }
    }

    fn run_page(&self, source: &str) -> Result<PageOutcome, StageError> {
        let fail = |stage: &str, e: String| StageError { stage: stage.into(), source: source.into(), message: e };
        let snapshot = load_snapshot(source, Duration::from_secs(self.config.fetch_timeout))
            .map_err(|e| fail("ingest", e.to_string()))?;
        let tree = parse_dom(&snapshot.raw_html).map_err(|e| fail("ingest", e.to_string()))?;
        Ok(self.run_tree(source, &tree))
    }

    /// Runs the per-page stages on an already parsed page.
    fn run_tree(&self, source: &str, tree: &DomTree) -> PageOutcome {
        let pairs = extract_pairs(tree);
        let mut report = PageReport {
            source: source.to_string(),
            endpoints_found: pairs.len(),
            pairs_formed: pairs.iter().filter(|p| p.response.is_some()).count(),
            documents: Vec::new(),
            warnings: Vec::new(),
        };
        if pairs.is_empty() {
            report.warnings.push("no request examples found".into());
        }
        let mut docs = Vec::new();
        for (i, pair) in pairs.iter().enumerate() {
            let mut warn = |m: String| report.warnings.push(format!("endpoint {}: {m}", i + 1));
            docs.push(self.run_endpoint(tree, pair, &pairs, &mut warn));
        }
        PageOutcome { docs, report }
    }

    fn run_endpoint(
        &self,
        tree: &DomTree,
        pair: &EndpointExamplePair,
        all: &[EndpointExamplePair],
        warn: &mut dyn FnMut(String),
    ) -> (OasDocument, DocumentEntry) {
        let scope = match find_scope(tree, pair, all, self.config.seed) {
            Ok(s) => Some(s),
            Err(e) => {
                warn(format!("scope: {e}"));
                None
            }
        };
        let mut hints: Vec<String> = Vec::new();
        for n in scope.iter().flat_map(|s| &s.node_ids) {
            for t in template_candidates(&tree.visible_text(*n)) {
                if !hints.contains(&t) {
                    hints.push(t);
                }
            }
        }
        let skeleton = self.skeleton(pair, &hints, warn);
        let request_schema = pair
            .request
            .parsed
            .body_json()
            .map(|_| self.schema(pair.request.parsed.body.as_deref().unwrap_or_default(), "request", warn));
        let response = pair.response.as_ref();
        let response_schema = response.filter(|r| r.is_json).map(|r| self.schema(&r.raw_text, "response", warn));
        let raw_body = if pair.request.parsed.body_is_json { None } else { pair.request.parsed.body.as_deref() };
        let (mut doc, build_warnings) = build_base_oas_with_body(
            &skeleton,
            request_schema,
            raw_body,
            response_schema,
            response.and_then(|r| r.status),
        );
        build_warnings.into_iter().for_each(|w| warn(format!("builder: {w}")));

        let mut entry = DocumentEntry {
            file: String::new(),
            path: doc.path.clone(),
            method: doc.method.as_str().to_string(),
            scope_origin: scope.as_ref().map(|s| s.origin),
            enriched: false,
            hallucinations_filtered: Vec::new(),
            is_valid_oas: false,
            warning_count: 0,
        };
        if !self.config.enrichment_enabled {
            return (doc, entry);
        }
        let Some(scope) = scope else { return (doc, entry) };
        let processed = match preprocess_scope(tree, &scope, pair, self.config.scope_budget) {
            Ok(p) => p,
            Err(e) => {
                warn(format!("enrichment skipped: {e}"));
                return (doc, entry);
            }
        };
        let hist = TagHistogram::of_fragment(&processed.cleaned_html);
        let tasks = [TaskKind::RequestEnrichment, TaskKind::ResponseEnrichment];
        let jobs: Vec<_> = tasks
            .iter()
            .map(|&t| {
                let demos = self.demonstrations(&hist, t);
                self.gateway.job(t, build_prompt(t, &demos, &processed.cleaned_html), processed.cleaned_html.clone())
            })
            .collect();
        let outputs = self.gateway.run_all(&jobs);
        let scope_texts = [processed.visible_text.as_str()];
        let mut table: Option<EnrichmentTable> = None;
        let mut schema: Option<ResponseEnrichmentSchema> = None;
        for (task, out) in tasks.iter().zip(outputs) {
            let text = match out {
                Ok(t) => t,
                Err(GatewayError::OracleUnsupported(m)) => {
                    tracing::debug!(task = %task, "{m}");
                    continue;
                }
                Err(e) => {
                    warn(format!("{task} skipped: {e}"));
                    continue;
                }
            };
            match task {
                TaskKind::RequestEnrichment => match parse_request_tsv(&text) {
                    Ok(t) => {
                        let (kept, audit) = filter_table(&t, &scope_texts);
                        entry.hallucinations_filtered.extend(audit);
                        table = (!kept.rows.is_empty()).then_some(kept);
                    }
                    Err(e) => warn(format!("{task} skipped: {e}")),
                },
                _ => match parse_response_schema(&text) {
                    Ok(s) => {
                        let (kept, audit) = filter_schema(&s, &scope_texts);
                        entry.hallucinations_filtered.extend(audit);
                        schema = Some(kept);
                    }
                    Err(e) => warn(format!("{task} skipped: {e}")),
                },
            }
        }
        if table.is_some() || schema.is_some() {
            doc = merge(&doc, table.as_ref(), schema.as_ref());
            entry.enriched = true;
        }
        (doc, entry)
    }

    fn demonstrations(&self, hist: &TagHistogram, task: TaskKind) -> Vec<&IclExample> {
        let Some(lib) = &self.library else { return Vec::new() };
        select_icl_examples(hist, lib, task, self.config.icl_k, self.config.icl_metric, None).unwrap_or_default()
    }

    fn skeleton(&self, pair: &EndpointExamplePair, hints: &[String], warn: &mut dyn FnMut(String)) -> OasSkeleton {
        let payload = skeleton_payload(&pair.request.raw_text, hints);
        let job = self.gateway.job(TaskKind::Skeleton, build_prompt(TaskKind::Skeleton, &[], &payload), payload);
        let generated = self.gateway.run(&job).and_then(|out| {
            serde_json::from_str::<OasSkeleton>(strip_code_fences(&out))
                .map_err(|e| GatewayError::ProviderError(format!("skeleton output: {e}")))
        });
        match generated {
            Ok(s) if s.check().is_ok() => s,
            Ok(_) | Err(_) => {
                if let Err(e) = &generated {
                    warn(format!("skeleton generation failed, using local rules: {e}"));
                } else {
                    warn("skeleton output violated invariants, using local rules".into());
                }
                let refs: Vec<&str> = hints.iter().map(String::as_str).collect();
                generate_skeleton(&pair.request.parsed, &refs)
            }
        }
    }

    fn schema(&self, json_text: &str, side: &str, warn: &mut dyn FnMut(String)) -> JsonSchemaNode {
        match infer_document(json_text, self.config.line_threshold, &self.gateway) {
            Ok((schema, merge_warnings)) => {
                for w in merge_warnings {
                    warn(format!("{side} schema at `{}`: {}", w.pointer, w.message));
                }
                schema
            }
            Err(e) => {
                warn(format!("{side} schema generation failed, using local rules: {e}"));
                serde_json::from_str(json_text).map(|v| infer_value(&v)).unwrap_or_default()
            }
        }
    }
}
