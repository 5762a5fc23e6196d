//! Text-generation boundary: provider configuration, prompt assembly with
//! in-context examples, and validated generation with retries.

mod icl;
mod oracle;
mod prompt;
mod remote;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use icl::{content_hash, select_icl_examples, IclExample, IclLibrary};
pub use oracle::{reference_oracle, skeleton_payload, split_skeleton_payload, ReferenceOracle};
pub use prompt::{build_prompt, instruction};
pub use remote::RemoteHttpProvider;

pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_ICL_K: usize = 3;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("no output passed validation after {attempts} attempt(s): {last_error}")]
    ValidationExhausted { attempts: u32, last_error: String },
    #[error("in-context library has no examples for task {0}")]
    EmptyLibrary(TaskKind),
    #[error("reference oracle cannot handle this input: {0}")]
    OracleUnsupported(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
    #[error("cannot load in-context library: {0}")]
    Library(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Skeleton,
    Schema,
    RequestEnrichment,
    ResponseEnrichment,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Skeleton => "skeleton",
            TaskKind::Schema => "schema",
            TaskKind::RequestEnrichment => "request-enrichment",
            TaskKind::ResponseEnrichment => "response-enrichment",
        }
    }

    /// Checks a generated output for this task. The enrichment checks are
    /// the same parsers the merge step uses.
    pub fn validate_output(self, text: &str) -> Result<(), String> {
        match self {
            TaskKind::Skeleton => {
                let sk: crate::builder::OasSkeleton =
                    serde_json::from_str(crate::enrich::strip_code_fences(text)).map_err(|e| e.to_string())?;
                sk.check()
            }
            TaskKind::Schema => crate::enrich::parse_response_schema(text).map(|_| ()).map_err(|e| e.to_string()),
            TaskKind::RequestEnrichment => {
                crate::enrich::parse_request_tsv(text).map(|_| ()).map_err(|e| e.to_string())
            }
            TaskKind::ResponseEnrichment => {
                crate::enrich::parse_response_schema(text).map(|_| ()).map_err(|e| e.to_string())
            }
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [TaskKind::Skeleton, TaskKind::Schema, TaskKind::RequestEnrichment, TaskKind::ResponseEnrichment]
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Decoding {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding { max_new_tokens: 2048, temperature: 0.0, stop_sequences: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationJob {
    pub task: TaskKind,
    pub prompt: String,
    /// The task input without instructions or demonstrations.
    pub input_payload: String,
    pub decoding: Decoding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteHttp,
    #[default]
    ReferenceOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    /// Name of the environment variable holding the API token.
    pub auth_env_var: Option<String>,
    pub request_timeout: u64,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::ReferenceOracle,
            endpoint: None,
            model_name: None,
            auth_env_var: None,
            request_timeout: 60,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl ProviderConfig {
    pub fn check(&self) -> Result<(), GatewayError> {
        if self.kind == ProviderKind::RemoteHttp && (self.endpoint.is_none() || self.model_name.is_none()) {
            return Err(GatewayError::Config("remote-http needs both endpoint and model_name".into()));
        }
        Ok(())
    }
}

pub trait TextGenerator: Send + Sync {
    fn complete(&self, job: &GenerationJob) -> Result<String, GatewayError>;
}

/// Runs `job` until an output passes `validator`, for at most
/// `max_attempts` submissions of the unchanged prompt. Provider failures
/// abort immediately.
pub fn generate(
    provider: &dyn TextGenerator,
    job: &GenerationJob,
    validator: &dyn Fn(&str) -> Result<(), String>,
    max_attempts: u32,
) -> Result<String, GatewayError> {
    let attempts = max_attempts.max(1);
    let mut last_error = String::new();
    for attempt in 1..=attempts {
        let out = provider.complete(job)?;
        match validator(&out) {
            Ok(()) => return Ok(out),
            Err(e) => {
                tracing::debug!(task = %job.task, attempt, error = %e, "generation failed validation");
                last_error = e;
            }
        }
    }
    Err(GatewayError::ValidationExhausted { attempts, last_error })
}

/// A configured provider with its retry budget and concurrency bound.
pub struct Gateway {
    generator: Box<dyn TextGenerator>,
    max_retries: u32,
    parallelism: usize,
    decoding: Decoding,
    is_reference: bool,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("max_retries", &self.max_retries)
            .field("parallelism", &self.parallelism)
            .field("is_reference", &self.is_reference)
            .finish()
    }
}

impl Gateway {
    pub fn from_config(config: &ProviderConfig, decoding: Decoding, parallelism: usize) -> Result<Self, GatewayError> {
        config.check()?;
        let (generator, is_reference): (Box<dyn TextGenerator>, bool) = match config.kind {
            ProviderKind::ReferenceOracle => (Box::new(ReferenceOracle), true),
            ProviderKind::RemoteHttp => (
                Box::new(RemoteHttpProvider::new(
                    config.endpoint.clone().unwrap_or_default(),
                    config.model_name.clone().unwrap_or_default(),
                    config.auth_env_var.as_deref(),
                    Duration::from_secs(config.request_timeout),
                )?),
                false,
            ),
        };
        Ok(Gateway {
            generator,
            max_retries: config.max_retries,
            parallelism: parallelism.max(1),
            decoding,
            is_reference,
        })
    }

    pub fn reference() -> Self {
        Gateway {
            generator: Box::new(ReferenceOracle),
            max_retries: DEFAULT_MAX_RETRIES,
            parallelism: DEFAULT_PARALLELISM,
            decoding: Decoding::default(),
            is_reference: true,
        }
    }

    pub fn with_generator(generator: Box<dyn TextGenerator>, max_retries: u32, parallelism: usize) -> Self {
        Gateway {
            generator,
            max_retries,
            parallelism: parallelism.max(1),
            decoding: Decoding::default(),
            is_reference: false,
        }
    }

    pub fn is_reference(&self) -> bool {
        self.is_reference
    }

    pub fn decoding(&self) -> &Decoding {
        &self.decoding
    }

    pub fn job(&self, task: TaskKind, prompt: String, input_payload: String) -> GenerationJob {
        GenerationJob { task, prompt, input_payload, decoding: self.decoding.clone() }
    }

    /// Generates with the task's own output validator.
    pub fn run(&self, job: &GenerationJob) -> Result<String, GatewayError> {
        let task = job.task;
        generate(self.generator.as_ref(), job, &|out| task.validate_output(out), self.max_retries)
    }

    /// Runs independent jobs with at most `parallelism` in flight; results
    /// keep the input order.
    pub fn run_all(&self, jobs: &[GenerationJob]) -> Vec<Result<String, GatewayError>> {
        if jobs.len() <= 1 || self.parallelism == 1 {
            return jobs.iter().map(|j| self.run(j)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<String, GatewayError>>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..self.parallelism.min(jobs.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= jobs.len() {
                        break;
                    }
                    let r = self.run(&jobs[i]);
                    results.lock().expect("result lock")[i] = Some(r);
                });
            }
        });
        results.into_inner().expect("result lock").into_iter().map(|r| r.expect("every job ran")).collect()
    }
}
