//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits non-zero when any fails.

mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use docs2oas_cli::{cmd_generate, resolve_config, GenerateArgs, EXIT_OK};
use docs2oas_core::builder::{
    infer_document, infer_schema, JsonSchemaNode, OasDocument, Operation, ParamLocation, Parameter, RequestBody,
    ResponseSpec, SchemaType, Segment,
};
use docs2oas_core::enrich::{
    filter_schema, filter_table, merge, parse_request_tsv, parse_response_schema, EnrichmentTable, ParameterRow,
    ResponseEnrichmentSchema,
};
use docs2oas_core::evaluate::{
    cases_from_dirs, description_similarity, e2e_report, evaluate_case, field_precision, prf1, EvalCase, Field,
    ParamInfo, ParamMatchSet, SideMetrics,
};
use docs2oas_core::extractor::{extract_pairs, HttpMethod};
use docs2oas_core::gateway::{
    content_hash, reference_oracle, select_icl_examples, Gateway, GatewayError, GenerationJob, IclExample, IclLibrary,
    TaskKind, TextGenerator,
};
use docs2oas_core::ingest::{parse_dom, SimilarityMetric, TagHistogram};
use docs2oas_core::pipeline::Pipeline;
use docs2oas_core::scope::{find_candidates_single, find_scope_multi, rank_and_select, PARAMETER_HEADERS};
use docs2oas_core::validate::check_document;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Verdict = Result<String, String>;

const SEED: u64 = 20_240_611;

fn icl_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/icl")
}

/// Pages and ground truth written once, shared by the corpus criteria.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    pages: Vec<corpus::Page>,
    inputs: Vec<String>,
    truth: PathBuf,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().expect("tempdir");
        let root = dir.path().to_path_buf();
        let pages = corpus::corpus(SEED);
        let (html, truth) = (root.join("pages"), root.join("truth"));
        std::fs::create_dir_all(&html).unwrap();
        std::fs::create_dir_all(&truth).unwrap();
        let mut inputs = Vec::new();
        for p in &pages {
            let f = html.join(format!("{}.html", p.file_stem));
            std::fs::write(&f, corpus::render(p)).unwrap();
            inputs.push(f.display().to_string());
            let t = serde_json::to_string_pretty(&corpus::truth(p)).unwrap();
            std::fs::write(truth.join(format!("{}.json", p.file_stem)), t).unwrap();
        }
        if std::env::var_os("ACCEPTANCE_KEEP").is_some() {
            eprintln!("keeping work directory {}", root.display());
            std::mem::forget(dir);
            let dir = tempfile::tempdir().expect("tempdir");
            return Fixture { _dir: dir, root, pages, inputs, truth };
        }
        Fixture { _dir: dir, root, pages, inputs, truth }
    }

    fn args(&self, out: &str) -> GenerateArgs {
        GenerateArgs {
            inputs: self.inputs.clone(),
            out: self.root.join(out),
            icl_path: Some(icl_dir()),
            seed: Some(7),
            ..Default::default()
        }
    }

    fn generate(&self, out: &str, tweak: impl FnOnce(&mut GenerateArgs)) -> Result<(PathBuf, u8, Duration), String> {
        let mut args = self.args(out);
        tweak(&mut args);
        let t = Instant::now();
        let code = cmd_generate(&args).map_err(|e| format!("{e:#}"))?;
        Ok((args.out, code, t.elapsed()))
    }
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------

fn c1_pipeline_soundness(fx: &Fixture) -> Verdict {
    let n_pages = fx.pages.len();
    let n_endpoints: usize = fx.pages.iter().map(|p| p.endpoints.len()).sum();
    let singles = fx.pages.iter().filter(|p| p.endpoints.len() == 1).count();
    ensure(n_pages >= 10 && n_endpoints >= 20 && singles > 0 && singles < n_pages, || {
        format!("corpus too small: {n_pages} pages, {n_endpoints} endpoints, {singles} single-endpoint")
    })?;
    let (out, code, elapsed) = fx.generate("c1", |_| {})?;
    let files = read_outputs(&out);
    let docs: Vec<(&String, &Vec<u8>)> = files.iter().filter(|(n, _)| *n != "report.json").collect();
    ensure(docs.len() == n_endpoints, || format!("{} documents for {n_endpoints} endpoints", docs.len()))?;
    let mut bad = Vec::new();
    for (name, bytes) in &docs {
        let r = check_document(&String::from_utf8_lossy(bytes));
        if name.contains(".partial") || !r.is_valid_json || !r.is_valid_oas || r.warning_count != 0 {
            bad.push(format!("{name} ({} warnings)", r.warning_count));
        }
    }
    ensure(bad.is_empty(), || format!("invalid documents: {}", bad.join(", ")))?;
    ensure(code == EXIT_OK, || format!("exit code {code}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{n_pages} pages, {} documents, valid json 1, valid oas 1, warnings 0, {:.2}s",
        docs.len(),
        elapsed.as_secs_f64()
    ))
}

fn random_documents() -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut docs = Vec::new();
    while docs.len() < 200 {
        let v = oracles::random_json(&mut rng);
        if oracles::depth(&v) <= 4 && oracles::key_count(&v) <= 60 {
            docs.push(v);
        }
    }
    docs
}

fn whole(v: &Value) -> Segment {
    Segment { index: 0, text: serde_json::to_string_pretty(v).unwrap(), json_pointer_prefix: String::new() }
}

fn c2_schema_oracle(docs: &[Value]) -> Verdict {
    let gw = Gateway::reference();
    let mut mismatches = 0;
    let mut first = None;
    for (i, d) in docs.iter().enumerate() {
        let got = infer_schema(&whole(d), &gw).map_err(|e| format!("doc {i}: {e}"))?;
        let got = serde_json::to_string(&got.to_value()).unwrap();
        let want = serde_json::to_string(&oracles::brute_force_schema(d)).unwrap();
        if got != want {
            mismatches += 1;
            first.get_or_insert(format!("doc {i}: got {got} want {want}"));
        }
    }
    ensure(mismatches == 0, || format!("{mismatches}/200 differ; {}", first.unwrap_or_default()))?;
    Ok(format!("{} documents, 0 mismatches", docs.len()))
}

fn c3_segmentation(docs: &[Value]) -> Verdict {
    let gw = Gateway::reference();
    let mut mismatches = 0;
    let mut first = None;
    let mut max_segments = 0;
    for (i, d) in docs.iter().enumerate() {
        let text = serde_json::to_string_pretty(d).unwrap();
        let want = infer_schema(&whole(d), &gw).map_err(|e| format!("doc {i}: {e}"))?;
        for t in [1, 5, 40] {
            let n = segment_count(&text, t);
            max_segments = max_segments.max(n);
            let (got, _) = infer_document(&text, t, &gw).map_err(|e| format!("doc {i} t={t}: {e}"))?;
            if got != want {
                mismatches += 1;
                first.get_or_insert(format!("doc {i} t={t}: got {} want {}", got.to_value(), want.to_value()));
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches}/600 differ; {}", first.unwrap_or_default()))?;
    Ok(format!("{} documents x 3 thresholds, 0 mismatches, up to {max_segments} segments", docs.len()))
}

fn segment_count(text: &str, t: usize) -> usize {
    docs2oas_core::builder::segment_example(text, t).map(|s| s.len()).unwrap_or(0)
}

fn c4_scope() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let mut checked = 0;
    for case in 0..50 {
        let planted = rng.random_range(2..=5);
        let html = oracles::multi_pair_dom(&mut rng, planted);
        let tree = parse_dom(&html).map_err(|e| e.to_string())?;
        let pairs = extract_pairs(&tree);
        ensure(pairs.len() == planted, || format!("multi case {case}: {} of {planted} pairs found", pairs.len()))?;
        let requests: Vec<_> = pairs.iter().map(|p| p.request.node_id).collect();
        for p in &pairs {
            let got = find_scope_multi(&tree, p, &pairs).map_err(|e| e.to_string())?.node_ids;
            let want = oracles::multi_scope_oracle(&tree, p.request.node_id, &requests);
            ensure(got == want, || format!("multi case {case}: got {got:?} want {want:?}\n{html}"))?;
            checked += 1;
        }
    }
    let mut hits = 0;
    let mut ties = 0;
    for case in 0..50 {
        let page = oracles::single_pair_dom(&mut rng);
        let tree = parse_dom(&page.html).map_err(|e| e.to_string())?;
        let pairs = extract_pairs(&tree);
        ensure(pairs.len() == 1, || format!("single case {case}: {} pairs found", pairs.len()))?;
        let pair = &pairs[0];
        let mut excluded = vec![pair.request.node_id];
        excluded.extend(pair.response.as_ref().map(|r| r.node_id));
        let want = oracles::single_scope_oracle(&tree, &page.names, PARAMETER_HEADERS, "/v1/things", "get", &excluded);
        let seed = rng.random::<u64>();
        let candidates = find_candidates_single(&tree, pair);
        let pick = rank_and_select(&tree, &candidates, seed).map_err(|e| format!("single case {case}: {e}"))?;
        let again = rank_and_select(&tree, &candidates, seed).map_err(|e| e.to_string())?;
        ensure(pick == again, || format!("single case {case}: selection not reproducible"))?;
        if want.len() > 1 {
            ties += 1;
        }
        if pick.node_ids.len() == 1 && want.contains(&pick.node_ids[0]) {
            hits += 1;
        }
    }
    ensure(hits == 50, || format!("single-request pick in oracle top set {hits}/50"))?;
    Ok(format!("multi {checked}/{checked} scopes match; single {hits}/50 top-ranked ({ties} with ties)"))
}

/// Exact ranking: cosine(q, a) > cosine(q, b) iff dot_a^2 |b|^2 > dot_b^2 |a|^2.
fn brute_force_ranking<'a>(q: &TagHistogram, pool: &[&'a IclExample], k: usize) -> Vec<&'a str> {
    let dot = |e: &IclExample| -> u128 {
        q.counts.iter().map(|(t, c)| *c as u128 * e.histogram.counts.get(t).copied().unwrap_or(0) as u128).sum()
    };
    let norm = |e: &IclExample| -> u128 { e.histogram.counts.values().map(|&c| c as u128 * c as u128).sum() };
    let mut v: Vec<(&IclExample, u128, u128)> = pool.iter().map(|e| (*e, dot(e), norm(e))).collect();
    v.sort_by(|a, b| {
        let lhs = b.1 * b.1 * a.2;
        let rhs = a.1 * a.1 * b.2;
        lhs.cmp(&rhs).then_with(|| a.0.example_id.cmp(&b.0.example_id))
    });
    v.into_iter().take(k).map(|(e, _, _)| e.example_id.as_str()).collect()
}

fn random_fragment(rng: &mut ChaCha8Rng) -> String {
    let parts = [
        "<table><tr><th>Name</th><th>Type</th></tr><tr><td>limit</td><td>integer</td></tr></table>",
        "<dl><dt>cursor</dt><dd>Opaque pointer.</dd></dl>",
        "<p>Returns a page of results.</p>",
        "<pre><code>{\"id\": 1}</code></pre>",
        "<ul><li><code>id</code> string</li><li><code>name</code> string</li></ul>",
        "<h3>Query parameters</h3>",
        "<h3>Response</h3>",
        "<div><span>field</span><em>required</em></div>",
        "<table><tr><td>a</td></tr><tr><td>b</td></tr><tr><td>c</td></tr></table>",
    ];
    (0..rng.random_range(1..=6)).map(|_| *parts.choose(rng).unwrap()).collect::<Vec<_>>().join("\n")
}

fn c5_icl() -> Verdict {
    let lib = IclLibrary::load(&icl_dir()).map_err(|e| e.to_string())?;
    ensure(lib.len() == 15, || format!("library holds {} examples", lib.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 5);
    let tasks = [TaskKind::RequestEnrichment, TaskKind::ResponseEnrichment];
    let mut comparisons = 0;
    for q in 0..30 {
        let frag = random_fragment(&mut rng);
        let h = TagHistogram::of_fragment(&frag);
        for task in tasks {
            let pool: Vec<&IclExample> = lib.for_task(task).collect();
            for k in [3, pool.len()] {
                let got: Vec<&str> = select_icl_examples(&h, &lib, task, k, SimilarityMetric::Cosine, None)
                    .map_err(|e| e.to_string())?
                    .iter()
                    .map(|e| e.example_id.as_str())
                    .collect();
                let want = brute_force_ranking(&h, &pool, k);
                ensure(got == want, || format!("query {q} {task} k={k}: got {got:?} want {want:?}"))?;
                comparisons += 1;
            }
        }
    }
    let mut held_out = 0;
    for ex in lib.examples() {
        let h = TagHistogram::of_fragment(&ex.input_html);
        let hash = content_hash(&ex.input_html);
        let pool: Vec<&IclExample> = lib.for_task(ex.task).filter(|e| e.example_id != ex.example_id).collect();
        let got: Vec<&str> =
            select_icl_examples(&h, &lib, ex.task, pool.len() + 1, SimilarityMetric::Cosine, Some(&hash))
                .map_err(|e| e.to_string())?
                .iter()
                .map(|e| e.example_id.as_str())
                .collect();
        ensure(!got.contains(&ex.example_id.as_str()), || format!("held-out {} returned", ex.example_id))?;
        let want = brute_force_ranking(&h, &pool, pool.len());
        ensure(got == want, || format!("leave-one-out {}: got {got:?} want {want:?}", ex.example_id))?;
        held_out += 1;
    }
    Ok(format!("{comparisons} rankings match over 30 queries; {held_out} held-out examples never returned"))
}

fn info(name: &str) -> ParamInfo {
    ParamInfo { name: name.into(), location: None, required: None, schema_type: None, description: None }
}

fn set(matched: usize, pred_only: usize, truth_only: usize) -> ParamMatchSet {
    let n = |p: &str, i: usize| info(&format!("{p}{i}"));
    ParamMatchSet {
        matched: (0..matched).map(|i| (n("m", i), n("m", i))).collect(),
        pred_only: (0..pred_only).map(|i| n("p", i)).collect(),
        truth_only: (0..truth_only).map(|i| n("t", i)).collect(),
    }
}

fn pairs_with(f: impl Fn(&mut ParamInfo, &str), rows: &[(&str, &str)]) -> ParamMatchSet {
    let matched = rows
        .iter()
        .enumerate()
        .map(|(i, (p, t))| {
            let (mut a, mut b) = (info(&format!("f{i}")), info(&format!("f{i}")));
            f(&mut a, p);
            f(&mut b, t);
            (a, b)
        })
        .collect();
    ParamMatchSet { matched, pred_only: Vec::new(), truth_only: Vec::new() }
}

fn opt(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn set_required(p: &mut ParamInfo, s: &str) {
    p.required = match s {
        "y" => Some(true),
        "n" => Some(false),
        _ => None,
    };
}

fn all_ones(m: &SideMetrics, side: &str, need_location: bool) -> Result<(), String> {
    let fields = [
        ("precision", Some(m.precision)),
        ("recall", Some(m.recall)),
        ("f1", Some(m.f1)),
        ("required", m.required_precision),
        ("type", m.type_precision),
        ("description", m.desc_similarity),
    ];
    for (name, v) in fields {
        ensure(v == Some(1.0), || format!("{side} {name} = {v:?}"))?;
    }
    if need_location {
        ensure(m.location_precision == Some(1.0), || format!("{side} location = {:?}", m.location_precision))?;
    }
    Ok(())
}

fn c6_metrics(fx: &Fixture) -> Verdict {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let mut n = 0;
    let prf_cases = [
        ((3, 0, 0), (1.0, 1.0, 1.0)),
        ((1, 1, 1), (0.5, 0.5, 0.5)),
        ((0, 0, 2), (0.0, 0.0, 0.0)),
        ((0, 2, 0), (0.0, 0.0, 0.0)),
        ((0, 0, 0), (0.0, 0.0, 0.0)),
        ((2, 1, 0), (2.0 / 3.0, 1.0, 0.8)),
        ((1, 0, 3), (1.0, 0.25, 0.4)),
        ((3, 1, 2), (0.75, 0.6, 2.0 / 3.0)),
    ];
    for ((m, p, t), (ep, er, ef)) in prf_cases {
        let got = prf1(&set(m, p, t));
        ensure(close(got.precision, ep) && close(got.recall, er) && close(got.f1, ef), || {
            format!("prf1({m},{p},{t}) = {got:?}")
        })?;
        let swapped = prf1(&set(m, t, p));
        ensure(swapped.precision == got.recall && swapped.recall == got.precision && swapped.f1 == got.f1, || {
            format!("swap of ({m},{p},{t}) gave {swapped:?} from {got:?}")
        })?;
        n += 1;
    }
    let typ = |p: &mut ParamInfo, s: &str| p.schema_type = opt(s);
    let loc = |p: &mut ParamInfo, s: &str| p.location = opt(s);
    let field_cases: [(ParamMatchSet, Field, f64); 6] = [
        (pairs_with(set_required, &[("y", "y"), ("n", "y"), ("", "n")]), Field::Required, 1.0 / 3.0),
        (pairs_with(set_required, &[("y", ""), ("y", "y"), ("n", "n")]), Field::Required, 1.0),
        (
            pairs_with(typ, &[("integer", "integer"), ("string", "number"), ("boolean", "boolean"), ("", "string")]),
            Field::Type,
            0.5,
        ),
        (
            pairs_with(typ, &[("int", "integer"), ("str", "string"), ("float", "number"), ("bool", "string")]),
            Field::Type,
            0.75,
        ),
        (
            pairs_with(loc, &[("Query", "query"), ("header", "query"), ("", "path"), ("query", "")]),
            Field::Location,
            1.0 / 3.0,
        ),
        (pairs_with(loc, &[("PATH", "path"), ("header", "Header")]), Field::Location, 1.0),
    ];
    for (i, (set, field, want)) in field_cases.iter().enumerate() {
        let got = field_precision(set, *field).map_err(|e| format!("field case {i}: {e}"))?;
        ensure(close(got, *want), || format!("field case {i}: {got} want {want}"))?;
        n += 1;
    }
    let sim_cases = [
        ("Maximum number of results.", "maximum NUMBER of results", 1.0),
        ("alpha beta", "gamma", 0.0),
        ("limit results", "limit results page", 2.0 / 6f64.sqrt()),
        ("limit limit results", "limit results results", 0.8),
        ("Limit, results.", "limit LIMIT results", 3.0 / 10f64.sqrt()),
        ("", "Some text", 0.0),
    ];
    for (a, b, want) in sim_cases {
        let got = description_similarity(a, b);
        ensure(close(got, want) && description_similarity(b, a) == got, || {
            format!("similarity({a:?}, {b:?}) = {got} want {want}")
        })?;
        n += 1;
    }

    // swap at corpus level, on base-only documents so some scores are below 1
    let (base_dir, _, _) = fx.generate("c6_base", |a| a.no_enrichment = true)?;
    let pairing = cases_from_dirs(&base_dir, &fx.truth).map_err(|e| e.to_string())?;
    let mut below_one = 0;
    for case in &pairing.cases {
        let fwd = evaluate_case(case).map_err(|e| e.to_string())?;
        let back = evaluate_case(&EvalCase {
            predicted: case.truth.clone(),
            truth: case.predicted.clone(),
            selector: case.selector.clone(),
        })
        .map_err(|e| e.to_string())?;
        for (f, b, side) in [(&fwd.request, &back.request, "request"), (&fwd.response, &back.response, "response")] {
            ensure(f.precision == b.recall && f.recall == b.precision && f.f1 == b.f1, || {
                format!(
                    "{} {side}: swap gave P/R {}/{} from {}/{}",
                    case.selector, b.precision, b.recall, f.precision, f.recall
                )
            })?;
            below_one += usize::from(f.precision < 1.0 || f.recall < 1.0);
        }
    }

    // closed loop
    let out = fx.root.join("c1");
    let out = if out.exists() { out } else { fx.generate("c6_full", |_| {})?.0 };
    let pairing = cases_from_dirs(&out, &fx.truth).map_err(|e| e.to_string())?;
    ensure(pairing.missing.is_empty(), || format!("unpredicted endpoints: {:?}", pairing.missing))?;
    ensure(pairing.unmatched_predictions.is_empty(), || {
        format!("predictions without truth: {:?}", pairing.unmatched_predictions)
    })?;
    let report = e2e_report(&pairing.cases).map_err(|e| e.to_string())?;
    for c in &report.cases {
        all_ones(&c.request, &format!("{} request", c.selector), false)
            .and_then(|_| all_ones(&c.response, &format!("{} response", c.selector), false))?;
    }
    all_ones(&report.request, "request", true)?;
    all_ones(&report.response, "response", false)?;
    Ok(format!(
        "{n} crafted cases within 1e-9; swap exact on {} cases ({below_one} side scores below 1); closed loop all 1.0 over {} endpoints",
        pairing.cases.len(),
        report.n_cases
    ))
}

const TYPES: [SchemaType; 4] = [SchemaType::String, SchemaType::Integer, SchemaType::Boolean, SchemaType::Number];
const PARAM_POOL: &[&str] = &["limit", "cursor", "sort", "region", "status", "expand", "page", "filter"];
const BODY_POOL: &[&str] = &["title", "amount", "currency", "email", "notes", "color", "size"];
const RESP_POOL: &[&str] = &["id", "name", "created", "owner", "total", "count"];

fn maybe<T>(rng: &mut ChaCha8Rng, v: T) -> Option<T> {
    rng.random_bool(0.5).then_some(v)
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> Vec<&'a str> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(rng.random_range(1..=pool.len()));
    v
}

fn scalar(rng: &mut ChaCha8Rng, desc: Option<String>) -> JsonSchemaNode {
    JsonSchemaNode { description: desc, ..JsonSchemaNode::of_type(*TYPES.choose(rng).unwrap()) }
}

fn object(rng: &mut ChaCha8Rng, names: &[&str], tag: &str) -> JsonSchemaNode {
    let mut o = JsonSchemaNode::of_type(SchemaType::Object);
    for n in names {
        let d = maybe(rng, format!("{tag} {n}"));
        o.properties.insert(n.to_string(), scalar(rng, d));
        if rng.random_bool(0.5) {
            o.required.push(n.to_string());
        }
    }
    o
}

fn random_merge_case(rng: &mut ChaCha8Rng) -> (OasDocument, EnrichmentTable, ResponseEnrichmentSchema) {
    let locations = [ParamLocation::Path, ParamLocation::Query, ParamLocation::Header];
    let params: Vec<Parameter> = pick(rng, PARAM_POOL)
        .into_iter()
        .map(|n| Parameter {
            name: n.into(),
            location: *locations.choose(rng).unwrap(),
            required: rng.random_bool(0.5),
            schema: JsonSchemaNode::of_type(*TYPES.choose(rng).unwrap()),
            description: maybe(rng, format!("base {n}")),
        })
        .collect();
    let body_names = pick(rng, BODY_POOL);
    let resp_names = pick(rng, RESP_POOL);
    let body = object(rng, &body_names, "base");
    let resp = object(rng, &resp_names, "base");
    let doc = OasDocument {
        openapi: "3.0.3".into(),
        title: "t".into(),
        version: "1".into(),
        servers: vec!["https://api.test".into()],
        path: "/v1/x".into(),
        method: *[HttpMethod::Post, HttpMethod::Patch, HttpMethod::Put].choose(rng).unwrap(),
        operation: Operation {
            parameters: params.clone(),
            request_body: Some(RequestBody { media_type: "application/json".into(), schema: body }),
            responses: [("200".to_string(), ResponseSpec { description: "OK".into(), schema: Some(resp) })]
                .into_iter()
                .collect(),
            security: Vec::new(),
        },
        security_schemes: Default::default(),
        provenance: Default::default(),
    };
    let row_locations = [
        None,
        Some(ParamLocation::Path),
        Some(ParamLocation::Query),
        Some(ParamLocation::Header),
        Some(ParamLocation::Body),
    ];
    let mut names: Vec<&str> = params.iter().map(|p| p.name.as_str()).chain(body_names.iter().copied()).collect();
    names.shuffle(rng);
    names.truncate(rng.random_range(0..=names.len()));
    let rows = names
        .into_iter()
        .map(|n| {
            let (ty, req) = (*TYPES.choose(rng).unwrap(), rng.random_bool(0.5));
            ParameterRow {
                name: n.to_string(),
                schema_type: maybe(rng, ty),
                required: maybe(rng, req),
                location: *row_locations.choose(rng).unwrap(),
                description: maybe(rng, format!("enriched {n}")),
            }
        })
        .collect();
    let enriched_names = pick(rng, &resp_names);
    let mut enr = object(rng, &enriched_names, "enriched");
    if rng.random_bool(0.4) {
        enr.required.clear();
    }
    (doc, EnrichmentTable { header: Vec::new(), rows }, ResponseEnrichmentSchema { root: enr })
}

fn check_merge(base: &OasDocument, t: &EnrichmentTable, s: &ResponseEnrichmentSchema) -> Result<(), String> {
    let merged = merge(base, Some(t), Some(s));
    let row = |n: &str| t.rows.iter().find(|r| r.name == n);
    ensure(merged.operation.parameters.len() == base.operation.parameters.len(), || "parameter added".into())?;
    for (b, m) in base.operation.parameters.iter().zip(&merged.operation.parameters) {
        ensure(m.location == b.location && m.schema.schema_type == b.schema.schema_type, || {
            format!("param {} type/location changed", b.name)
        })?;
        let r = row(&b.name);
        let want_desc = r.and_then(|r| r.description.clone()).or(b.description.clone());
        let want_req = r.and_then(|r| r.required).unwrap_or(b.required);
        ensure(m.description == want_desc && m.required == want_req, || format!("param {} precedence", b.name))?;
    }
    let bb = &base.operation.request_body.as_ref().unwrap().schema;
    let mb = &merged.operation.request_body.as_ref().unwrap().schema;
    ensure(bb.properties.len() == mb.properties.len(), || "body property added".into())?;
    for (k, b) in &bb.properties {
        let m = &mb.properties[k];
        ensure(m.schema_type == b.schema_type, || format!("body {k} type changed"))?;
        let r = row(k);
        let want_desc = r.and_then(|r| r.description.clone()).or(b.description.clone());
        let want_req = r.and_then(|r| r.required).unwrap_or(bb.required.contains(k));
        ensure(m.description == want_desc && mb.required.contains(k) == want_req, || format!("body {k} precedence"))?;
    }
    let br = base.operation.responses["200"].schema.as_ref().unwrap();
    let mr = merged.operation.responses["200"].schema.as_ref().unwrap();
    for (k, b) in &br.properties {
        let m = &mr.properties[k];
        ensure(m.schema_type == b.schema_type, || format!("response {k} type changed"))?;
        let want = s.root.properties.get(k).and_then(|e| e.description.clone()).or(b.description.clone());
        ensure(m.description == want, || format!("response {k} description"))?;
    }
    let want_required = if s.root.required.is_empty() { &br.required } else { &s.root.required };
    ensure(&mr.required == want_required, || format!("response required {:?} want {want_required:?}", mr.required))?;
    ensure(merge(&merged, Some(t), Some(s)) == merged, || "merge is not idempotent".into())
}

fn c7_merge() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    for i in 0..100 {
        let (base, t, s) = random_merge_case(&mut rng);
        check_merge(&base, &t, &s).map_err(|e| format!("case {i}: {e}"))?;
    }
    Ok("100 randomized cases: type/location kept, description/required adopted, idempotent".into())
}

const IN_SCOPE: &[&str] = &["limit", "cursor", "created_at", "owner", "email", "total", "status", "region"];

fn planted_name(rng: &mut ChaCha8Rng) -> String {
    let tail: String = (0..7).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
    format!("zq{tail}")
}

fn c8_filter(fx: &Fixture) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 8);
    let (mut planted, mut removed_planted, mut kept_in_scope, mut in_scope_total) = (0, 0, 0, 0);
    for _ in 0..50 {
        let names = pick(&mut rng, IN_SCOPE);
        let scope = format!(
            "<table><tr><th>Name</th></tr>{}</table><p>owner.email is the contact.</p>",
            names.iter().map(|n| format!("<tr><td>{n}</td><td>The {n}.</td></tr>")).collect::<String>()
        );
        let ghosts: Vec<String> = (0..rng.random_range(1..=4)).map(|_| planted_name(&mut rng)).collect();
        let mut rows: Vec<ParameterRow> = names
            .iter()
            .map(|n| n.to_string())
            .chain(std::iter::once("owner.email".to_string()))
            .chain(ghosts.iter().cloned())
            .map(|n| ParameterRow { name: n, schema_type: None, required: None, location: None, description: None })
            .collect();
        rows.shuffle(&mut rng);
        let (kept, _) = filter_table(&EnrichmentTable { header: Vec::new(), rows }, &[scope.as_str()]);
        let kept_names: BTreeSet<&str> = kept.rows.iter().map(|r| r.name.as_str()).collect();
        planted += ghosts.len();
        removed_planted += ghosts.iter().filter(|g| !kept_names.contains(g.as_str())).count();
        in_scope_total += names.len() + 1;
        kept_in_scope += names.iter().filter(|n| kept_names.contains(*n)).count();
        kept_in_scope += usize::from(kept_names.contains("owner.email"));

        let mut root = JsonSchemaNode::of_type(SchemaType::Object);
        for n in &names {
            root.properties.insert(n.to_string(), JsonSchemaNode::of_type(SchemaType::String));
        }
        let mut owner = JsonSchemaNode::of_type(SchemaType::Object);
        owner.properties.insert("email".into(), JsonSchemaNode::of_type(SchemaType::String));
        let ghost = planted_name(&mut rng);
        owner.properties.insert(ghost.clone(), JsonSchemaNode::of_type(SchemaType::String));
        root.properties.insert("owner".into(), owner);
        for g in &ghosts {
            root.properties.insert(format!("{g}x"), JsonSchemaNode::of_type(SchemaType::Integer));
        }
        let (kept, audit) = filter_schema(&ResponseEnrichmentSchema { root }, &[scope.as_str()]);
        let paths = kept.root.dotted_paths();
        planted += ghosts.len() + 1;
        removed_planted += ghosts.iter().filter(|g| !paths.contains(&format!("{g}x"))).count();
        removed_planted += usize::from(!paths.contains(&format!("owner.{ghost}")));
        in_scope_total += names.len() + 2;
        kept_in_scope += names.iter().filter(|n| paths.contains(&n.to_string())).count();
        kept_in_scope += ["owner", "owner.email"].iter().filter(|p| paths.contains(&p.to_string())).count();
        ensure(audit.len() == ghosts.len() + 1, || {
            format!("audit lists {} of {} removals", audit.len(), ghosts.len() + 1)
        })?;
    }
    ensure(removed_planted == planted, || format!("removed {removed_planted}/{planted} planted names"))?;
    ensure(kept_in_scope == in_scope_total, || format!("kept {kept_in_scope}/{in_scope_total} in-scope names"))?;

    // end to end: a generator that hallucinates on top of the reference oracle
    let generator = Hallucinating { planted: Mutex::new(Vec::new()), rng: Mutex::new(ChaCha8Rng::seed_from_u64(SEED)) };
    let shared = std::sync::Arc::new(generator);
    let config = resolve_config(&fx.args("unused")).map_err(|e| format!("{e:#}"))?;
    let library = IclLibrary::load(&icl_dir()).map_err(|e| e.to_string())?;
    let gateway = Gateway::with_generator(Box::new(SharedGen(shared.clone())), config.provider.max_retries, 4);
    let pipeline = Pipeline::with_gateway(config, gateway, Some(library)).map_err(|e| e.to_string())?;
    let output = pipeline.run(&fx.inputs);
    let names = shared.planted.lock().unwrap().clone();
    ensure(!names.is_empty(), || "nothing was planted".into())?;
    ensure(output.report.hallucinations_filtered == names.len(), || {
        format!("report counts {} filtered, {} planted", output.report.hallucinations_filtered, names.len())
    })?;
    let leaked: Vec<&String> =
        names.iter().filter(|n| output.documents.iter().any(|d| d.content.contains(n.as_str()))).collect();
    ensure(leaked.is_empty(), || format!("planted names in output: {leaked:?}"))?;
    let reference = fx.root.join("c1");
    if reference.exists() {
        for d in &output.documents {
            let clean = std::fs::read_to_string(reference.join(&d.file_name)).unwrap_or_default();
            ensure(clean == d.content, || format!("{} differs from the clean run", d.file_name))?;
        }
    }
    Ok(format!(
        "fixtures: {removed_planted}/{planted} planted removed, {kept_in_scope}/{in_scope_total} in-scope kept; pipeline: {} planted, {} filtered, documents equal the clean run",
        names.len(),
        output.report.hallucinations_filtered
    ))
}

struct Hallucinating {
    planted: Mutex<Vec<String>>,
    rng: Mutex<ChaCha8Rng>,
}

struct SharedGen(std::sync::Arc<Hallucinating>);

impl TextGenerator for SharedGen {
    fn complete(&self, job: &GenerationJob) -> Result<String, GatewayError> {
        let out = reference_oracle(job.task, &job.input_payload)?;
        let h = &self.0;
        let name = planted_name(&mut h.rng.lock().unwrap());
        let text = match job.task {
            TaskKind::RequestEnrichment => {
                let mut t = parse_request_tsv(&out).map_err(|e| GatewayError::OracleUnsupported(e.to_string()))?;
                t.rows.push(ParameterRow {
                    name: name.clone(),
                    schema_type: Some(SchemaType::String),
                    required: Some(false),
                    location: None,
                    description: Some("Not documented anywhere.".into()),
                });
                t.to_tsv()
            }
            TaskKind::ResponseEnrichment => {
                let mut s = parse_response_schema(&out).map_err(|e| GatewayError::OracleUnsupported(e.to_string()))?;
                s.root.object_view_mut().properties.insert(name.clone(), JsonSchemaNode::of_type(SchemaType::String));
                serde_json::to_string_pretty(&s.root.to_value()).unwrap()
            }
            _ => return Ok(out),
        };
        h.planted.lock().unwrap().push(name);
        Ok(text)
    }
}

fn c9_determinism(fx: &Fixture) -> Verdict {
    let (a, _, _) = fx.generate("c9_a", |_| {})?;
    let (b, _, _) = fx.generate("c9_b", |a| a.jobs = Some(4))?;
    let (fa, fb) = (read_outputs(&a), read_outputs(&b));
    ensure(fa.keys().eq(fb.keys()), || "different file sets".into())?;
    let diff: Vec<&String> = fa.iter().filter(|(k, v)| fb[*k] != **v).map(|(k, _)| k).collect();
    ensure(diff.is_empty(), || format!("differing files: {diff:?}"))?;
    Ok(format!("{} files byte-identical across two runs", fa.len()))
}

fn main() {
    let fx = Fixture::new();
    let docs = random_documents();
    let criteria: Vec<(u8, Box<dyn Fn() -> Verdict + '_>)> = vec![
        (1, Box::new(|| c1_pipeline_soundness(&fx))),
        (2, Box::new(|| c2_schema_oracle(&docs))),
        (3, Box::new(|| c3_segmentation(&docs))),
        (4, Box::new(c4_scope)),
        (5, Box::new(c5_icl)),
        (6, Box::new(|| c6_metrics(&fx))),
        (7, Box::new(c7_merge)),
        (8, Box::new(|| c8_filter(&fx))),
        (9, Box::new(|| c9_determinism(&fx))),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match verdict {
            Ok(detail) => println!("criterion {n}: PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
