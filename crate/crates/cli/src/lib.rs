//! `docs2oas` commands: generate, validate, evaluate.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use docs2oas_core::evaluate::{cases_from_dirs, e2e_report, render_table, MetricsReport};
use docs2oas_core::gateway::ProviderKind;
use docs2oas_core::ingest::SimilarityMetric;
use docs2oas_core::pipeline::{OutputFormat, Pipeline, RunConfig};
use docs2oas_core::validate::{check_document, check_value, summarize, ValidationReport};

/// Everything emitted is valid.
pub const EXIT_OK: u8 = 0;
/// Some document is invalid, or a page failed.
pub const EXIT_INVALID: u8 = 1;
/// Bad arguments, bad configuration or nothing to process.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "docs2oas", version, about = "Turn HTML API documentation into OpenAPI 3.0 documents")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

// parsed once per process, boxing buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one OpenAPI document per endpoint found in the input pages.
    Generate(GenerateArgs),
    /// Check documents against the OpenAPI 3.0 meta-schema.
    Validate(ValidateArgs),
    /// Compare generated documents with ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    /// Page to process: a file path or an http(s) URL. Repeatable.
    #[arg(short, long = "input", required = true)]
    pub inputs: Vec<String>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    pub out: PathBuf,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seconds allowed for fetching a remote page.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// reference-oracle or remote-http.
    #[arg(long)]
    pub provider: Option<String>,
    /// URL of the remote generation service.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the remote service.
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the provider token.
    #[arg(long)]
    pub auth_env: Option<String>,
    /// Seconds allowed for one provider request.
    #[arg(long)]
    pub request_timeout: Option<u64>,
    /// Generation attempts per job before giving up.
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Lines per segment when splitting large JSON examples.
    #[arg(long)]
    pub line_threshold: Option<usize>,
    /// Character budget for the documentation passed to enrichment.
    #[arg(long)]
    pub scope_budget: Option<usize>,
    /// Seed for tie-breaking between equally ranked scopes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Build base documents only.
    #[arg(long)]
    pub no_enrichment: bool,
    /// json or yaml.
    #[arg(long)]
    pub format: Option<String>,
    /// Directory of labeled in-context examples.
    #[arg(long)]
    pub icl_path: Option<PathBuf>,
    /// In-context examples per prompt.
    #[arg(long)]
    pub icl_k: Option<usize>,
    /// cosine or kl.
    #[arg(long)]
    pub icl_metric: Option<String>,
    /// Pages processed concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Documents to check (JSON or YAML).
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Directory of generated documents.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth documents (JSON or YAML).
    #[arg(long)]
    pub truth: PathBuf,
    /// Documents generated without enrichment, reported as a second row.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(args: &GenerateArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<RunConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = &args.provider {
        c.provider.kind = match p.as_str() {
            "reference-oracle" | "reference" => ProviderKind::ReferenceOracle,
            "remote-http" | "remote" => ProviderKind::RemoteHttp,
            other => bail!("unknown provider `{other}`"),
        };
    }
    if args.endpoint.is_some() {
        c.provider.endpoint.clone_from(&args.endpoint);
    }
    if args.model.is_some() {
        c.provider.model_name.clone_from(&args.model);
    }
    if args.auth_env.is_some() {
        c.provider.auth_env_var.clone_from(&args.auth_env);
    }
    if let Some(v) = args.request_timeout {
        c.provider.request_timeout = v;
    }
    if let Some(v) = args.max_retries {
        c.provider.max_retries = v;
    }
    if let Some(v) = args.timeout {
        c.fetch_timeout = v;
    }
    if let Some(v) = args.line_threshold {
        c.line_threshold = v;
    }
    if let Some(v) = args.scope_budget {
        c.scope_budget = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if args.no_enrichment {
        c.enrichment_enabled = false;
    }
    if let Some(f) = &args.format {
        c.output_format = f.parse::<OutputFormat>().map_err(anyhow::Error::msg)?;
    }
    if args.icl_path.is_some() {
        c.icl_path.clone_from(&args.icl_path);
    }
    if let Some(v) = args.icl_k {
        c.icl_k = v;
    }
    if let Some(m) = &args.icl_metric {
        c.icl_metric = m.parse::<SimilarityMetric>().map_err(anyhow::Error::msg)?;
    }
    if let Some(v) = args.jobs {
        c.jobs = v;
    }
    c.check()?;
    Ok(c)
}

/// Writes one file per endpoint plus `report.json` into `args.out`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<u8> {
    let config = resolve_config(args)?;
    let pipeline = Pipeline::new(config)?;
    let output = pipeline.run(&args.inputs);
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for d in &output.documents {
        let path = args.out.join(&d.file_name);
        std::fs::write(&path, &d.content).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = serde_json::to_string_pretty(&output.report)? + "\n";
    std::fs::write(args.out.join("report.json"), &report)?;

    for e in &output.report.errors {
        eprintln!("{} failed at {}: {}", e.source, e.stage, e.message);
    }
    let valid = output.documents.iter().filter(|d| d.validation.is_valid_oas).count();
    println!(
        "{} endpoints, {} paired, {}/{} documents valid, {} hallucinated names filtered -> {}",
        output.report.endpoints_found,
        output.report.pairs_formed,
        valid,
        output.documents.len(),
        output.report.hallucinations_filtered,
        args.out.display()
    );
    Ok(if output.succeeded() { EXIT_OK } else { EXIT_INVALID })
}

fn validate_file(path: &Path) -> Result<ValidationReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_yaml = matches!(path.extension().and_then(|e| e.to_str()), Some("yaml" | "yml"));
    if !is_yaml {
        return Ok(check_document(&text));
    }
    Ok(match serde_yaml::from_str::<serde_json::Value>(&text) {
        Ok(v) => check_value(&v),
        Err(e) => ValidationReport {
            is_valid_json: false,
            is_valid_oas: false,
            warnings: Vec::new(),
            warning_count: 0,
            json_error: Some(e.to_string()),
        },
    })
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<u8> {
    let mut files = serde_json::Map::new();
    let mut reports = Vec::new();
    for f in &args.files {
        let r = validate_file(f)?;
        files.insert(f.display().to_string(), serde_json::to_value(&r)?);
        reports.push(r);
    }
    let summary = summarize(&reports)?;
    let out = serde_json::json!({ "summary": summary, "files": files });
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(if reports.iter().all(|r| r.is_valid_oas) { EXIT_OK } else { EXIT_INVALID })
}

fn evaluate_dir(pred: &Path, truth: &Path) -> Result<(MetricsReport, serde_json::Value)> {
    let pairing = cases_from_dirs(pred, truth)?;
    let report = e2e_report(&pairing.cases)?;
    let extra = serde_json::json!({
        "missing": pairing.missing.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "unmatched_predictions": pairing.unmatched_predictions.iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    Ok((report, extra))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<u8> {
    let (with, extra) = evaluate_dir(&args.pred, &args.truth)?;
    let baseline = match &args.baseline {
        Some(b) => Some(evaluate_dir(b, &args.truth)?.0),
        None => None,
    };
    let mut rows = vec![("with enrichment", &with)];
    if let Some(b) = &baseline {
        rows.push(("without enrichment", b));
    }
    let table = render_table(&rows);
    print!("{table}");
    if let Some(p) = &args.out {
        let mut out = serde_json::json!({ "with_enrichment": with, "pairing": extra, "table": table });
        if let Some(b) = &baseline {
            out["without_enrichment"] = serde_json::to_value(b)?;
        }
        std::fs::write(p, serde_json::to_string_pretty(&out)? + "\n")?;
    }
    Ok(EXIT_OK)
}
