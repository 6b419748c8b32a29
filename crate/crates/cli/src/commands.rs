use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use hirec_core::eval::{
    ablation_suite, cases_to_jsonl, evaluate as run_evaluation, generate_eval_cases, load_cases,
    render_ablation_table, render_report, CaseRow, EvalCase,
};
use hirec_core::kb::{generate_synthetic_corpus, ingest as ingest_file, ingest_str, index_knowledge_base};
use hirec_core::pipeline::{explain, Engine, PipelineError};
use hirec_core::{PatientQuery, VectorIndex};
use serde::Serialize;
use serde_json::json;

use crate::config::CliConfig;
use crate::{
    server, CliError, EvalArgs, GenCorpusArgs, IngestArgs, PipelineFlags, RecommendArgs, ServeArgs,
    EXIT_BACKEND, EXIT_OK,
};

/// Documents saved next to an index snapshot.
pub fn sidecar_path(index: &Path) -> PathBuf {
    let mut s = index.as_os_str().to_os_string();
    s.push(".docs.jsonl");
    PathBuf::from(s)
}

/// Applies command-line overrides (highest precedence) and validates.
pub fn apply_flags(cfg: &mut CliConfig, flags: &PipelineFlags) -> Result<(), CliError> {
    if flags.no_memory {
        cfg.ablation.memory_enabled = false;
    }
    if flags.no_department_layer {
        cfg.ablation.department_layer_enabled = false;
    }
    if flags.single_kb {
        cfg.ablation.dual_kb_enabled = false;
    }
    let p = &mut cfg.pipeline;
    if let Some(k) = flags.top_k {
        p.root_top_k = k;
        p.dept_top_k = k;
    }
    if let Some(k) = flags.root_top_k {
        p.root_top_k = k;
    }
    if let Some(k) = flags.dept_top_k {
        p.dept_top_k = k;
    }
    if let Some(n) = flags.max_departments {
        p.max_departments = n;
    }
    if let Some(n) = flags.max_recommendations {
        p.max_recommendations = n;
    }
    if let Some(w) = flags.min_weight {
        p.min_weight = w;
    }
    cfg.validate()
        .map_err(|e| CliError::input("INVALID_CONFIG", e.to_string()))
}

fn required(arg: Option<&PathBuf>, fallback: Option<&PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    arg.or(fallback)
        .cloned()
        .ok_or_else(|| CliError::input("MISSING_ARGUMENT", format!("--{name} is required (or set it in the config)")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Human output: stdout normally, stderr when stdout carries JSON.
fn human(json_mode: bool, text: &str) {
    if json_mode {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<i32, CliError> {
    if args.departments.is_empty() || args.departments.iter().any(|d| d.trim().is_empty()) {
        return Err(CliError::input("INVALID_ARGUMENT", "--departments must list non-empty names"));
    }
    if args.items == 0 {
        return Err(CliError::input("INVALID_ARGUMENT", "--items must be positive"));
    }
    let depts: Vec<&str> = args.departments.iter().map(String::as_str).collect();
    let corpus = generate_synthetic_corpus(args.seed, &depts, args.items);
    write_file(&args.out, &corpus.kb.to_jsonl())?;
    let mut summary = json!({
        "documents": corpus.kb.len(),
        "departments": corpus.kb.department_set(),
        "out": args.out,
    });
    if let Some(path) = &args.cases_out {
        let cases = generate_eval_cases(&corpus, args.cases, args.cases_seed.unwrap_or(args.seed));
        write_file(path, &cases_to_jsonl(&cases))?;
        summary["cases"] = json!(cases.len());
        summary["cases_out"] = json!(path);
    }
    if args.json {
        print!("{}", to_json(&summary));
    }
    human(
        args.json,
        &format!("wrote {} documents to {}\n", corpus.kb.len(), args.out.display()),
    );
    Ok(EXIT_OK)
}

pub fn ingest(cfg: &CliConfig, args: &IngestArgs) -> Result<i32, CliError> {
    let kb_path = required(args.kb.as_ref(), cfg.paths.kb.as_ref(), "kb")?;
    let index_path = required(args.index.as_ref(), cfg.paths.index.as_ref(), "index")?;
    cfg.validate()
        .map_err(|e| CliError::input("INVALID_CONFIG", e.to_string()))?;
    let report = ingest_file(&kb_path)
        .map_err(|e| CliError::input(e.code(), format!("{}: {e}", kb_path.display())))?;
    for w in report.kb.warnings() {
        eprintln!("warning: {w}");
    }
    if !report.is_clean() {
        for e in &report.rejected {
            eprintln!("{e} ({})", e.code());
        }
        if args.json {
            let rejected: Vec<_> = report
                .rejected
                .iter()
                .map(|e| json!({"line": e.line(), "code": e.code(), "message": e.to_string()}))
                .collect();
            print!("{}", to_json(&json!({"indexed": 0, "rejected": rejected})));
        }
        return Err(CliError::input(
            "INVALID_DOCUMENTS",
            format!("{} of {} records rejected; nothing written", report.rejected.len(), report.lines),
        ));
    }
    if report.kb.is_empty() {
        return Err(CliError::input("EMPTY_KB", format!("{} has no documents", kb_path.display())));
    }
    let embedder = cfg
        .build_embedder(cfg.embedder.dimension)
        .map_err(|e| CliError::input("INVALID_CONFIG", e.to_string()))?;
    let index = index_knowledge_base(&report.kb, embedder.as_ref(), cfg.embedder.dimension).map_err(|e| {
        CliError::backend("EMBEDDING_FAILED", e.to_string())
    })?;
    index
        .save(&index_path)
        .map_err(|e| CliError::io(format!("{}: {e}", index_path.display())))?;
    let docs_path = sidecar_path(&index_path);
    write_file(&docs_path, &report.kb.to_jsonl())?;
    if args.json {
        print!(
            "{}",
            to_json(&json!({
                "indexed": index.len(),
                "dimension": index.dimension(),
                "index": index_path,
                "documents": docs_path,
                "rejected": [],
            }))
        );
    }
    human(args.json, &format!("indexed {} documents\n", index.len()));
    Ok(EXIT_OK)
}

/// Loads the index snapshot and its document sidecar and wires the
/// configured backends.
pub fn load_engine(cfg: &CliConfig, index_path: &Path) -> Result<Engine, CliError> {
    if !index_path.exists() {
        return Err(CliError::input(
            "INDEX_NOT_FOUND",
            format!("{} does not exist; run `hirec ingest` first", index_path.display()),
        ));
    }
    let index = VectorIndex::load(index_path)
        .map_err(|e| CliError::input(e.code(), format!("{}: {e}", index_path.display())))?;
    let docs_path = sidecar_path(index_path);
    let text = fs::read_to_string(&docs_path)
        .map_err(|e| CliError::input("DOCUMENTS_NOT_FOUND", format!("{}: {e}", docs_path.display())))?;
    let report = ingest_str(&text);
    if let Some(e) = report.rejected.first() {
        return Err(CliError::input(e.code(), format!("{}: {e}", docs_path.display())));
    }
    let embedder = cfg
        .build_embedder(index.dimension())
        .map_err(|e| CliError::input("INVALID_CONFIG", e.to_string()))?;
    Engine::new(
        report.kb.into(),
        index.into(),
        embedder,
        cfg.build_reasoner(),
        cfg.build_weigher(),
    )
    .map_err(|e| CliError::input(e.code(), e.to_string()))
}

pub fn pipeline_error(e: &PipelineError) -> CliError {
    if e.is_input_error() {
        CliError::input(e.code(), e.to_string())
    } else {
        CliError::backend(e.code(), e.to_string())
    }
}

fn parse_query(text: &str) -> Result<PatientQuery, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::input("MALFORMED_QUERY", e.to_string()))
}

fn read_query(args: &RecommendArgs) -> Result<PatientQuery, CliError> {
    if let Some(text) = &args.query_json {
        return parse_query(text);
    }
    if let Some(path) = &args.query_file {
        let text = if path.as_os_str() == "-" {
            let mut s = String::new();
            io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| CliError::input("MALFORMED_QUERY", format!("stdin: {e}")))?;
            s
        } else {
            fs::read_to_string(path)
                .map_err(|e| CliError::input("QUERY_NOT_FOUND", format!("{}: {e}", path.display())))?
        };
        return parse_query(&text);
    }
    let Some(symptoms) = &args.symptoms else {
        return Err(CliError::input(
            "MISSING_ARGUMENT",
            "give the query with --query-json, --query-file or --symptoms",
        ));
    };
    let mut q = PatientQuery::new(symptoms.clone()).with_history(args.history.clone());
    q.age = args.age;
    q.sex = args.sex;
    Ok(q)
}

pub fn recommend(mut cfg: CliConfig, args: &RecommendArgs) -> Result<i32, CliError> {
    apply_flags(&mut cfg, &args.pipeline)?;
    let index_path = required(args.index.as_ref(), cfg.paths.index.as_ref(), "index")?;
    let query = read_query(args)?;
    query
        .validate()
        .map_err(|e| CliError::input(e.code(), e.to_string()))?;
    let engine = load_engine(&cfg, &index_path)?;
    let mut result = engine
        .recommend(&query, &cfg.ablation, &cfg.pipeline)
        .map_err(|e| pipeline_error(&e))?;
    if args.omit_timings {
        result.clear_timings();
    }
    let mut out = io::stdout().lock();
    out.write_all(to_json(&result).as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(format!("stdout: {e}")))?;
    if args.explain {
        eprint!("{}", explain(&result));
    }
    Ok(EXIT_OK)
}

fn eval_inputs(mut cfg: CliConfig, args: &EvalArgs) -> Result<(CliConfig, Engine, Vec<EvalCase>), CliError> {
    apply_flags(&mut cfg, &args.pipeline)?;
    let index_path = required(args.index.as_ref(), cfg.paths.index.as_ref(), "index")?;
    let cases_path = required(args.cases.as_ref(), cfg.paths.cases.as_ref(), "cases")?;
    let cases = load_cases(&cases_path)
        .map_err(|e| CliError::input(e.code(), format!("{}: {e}", cases_path.display())))?;
    let engine = load_engine(&cfg, &index_path)?;
    Ok((cfg, engine, cases))
}

fn report_failures(rows: &[CaseRow]) {
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("case {} failed: {}", row.id, row.error.as_deref().unwrap_or_default());
    }
}

fn finish<T: Serialize>(args: &EvalArgs, report: &T, table: &str, ok_cases: usize) -> Result<i32, CliError> {
    let body = to_json(report);
    if let Some(out) = &args.out {
        write_file(out, &body)?;
    }
    if args.json {
        print!("{body}");
    }
    human(args.json, table);
    if ok_cases == 0 {
        return Err(CliError {
            exit: EXIT_BACKEND,
            code: "ALL_CASES_FAILED",
            message: "no case produced a result".into(),
        });
    }
    Ok(EXIT_OK)
}

pub fn evaluate(cfg: CliConfig, args: &EvalArgs) -> Result<i32, CliError> {
    let (cfg, engine, cases) = eval_inputs(cfg, args)?;
    let report = run_evaluation(&cases, &engine, &cfg.ablation, &cfg.pipeline)
        .map_err(|e| CliError::input(e.code(), e.to_string()))?;
    report_failures(&report.per_case);
    finish(args, &report, &render_report(&report), report.cases_ok())
}

pub fn ablate(cfg: CliConfig, args: &EvalArgs) -> Result<i32, CliError> {
    let (cfg, engine, cases) = eval_inputs(cfg, args)?;
    let report = ablation_suite(&cases, &engine, &cfg.pipeline)
        .map_err(|e| CliError::input(e.code(), e.to_string()))?;
    report_failures(&report.rows[0].report.per_case);
    let ok = report.rows.iter().map(|r| r.report.cases_ok()).min().unwrap_or(0);
    finish(args, &report, &render_ablation_table(&report), ok)
}

pub fn serve(mut cfg: CliConfig, args: &ServeArgs) -> Result<i32, CliError> {
    apply_flags(&mut cfg, &args.pipeline)?;
    let index_path = required(args.index.as_ref(), cfg.paths.index.as_ref(), "index")?;
    let bind = args.bind.clone().unwrap_or_else(|| cfg.server.bind.clone());
    let engine = load_engine(&cfg, &index_path)?;
    let state = server::AppState {
        engine,
        config: cfg.ablation,
        params: cfg.pipeline,
        omit_timings: args.omit_timings,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| CliError::io(format!("bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| CliError::io(e.to_string()))?;
        eprintln!("listening on http://{addr}");
        server::serve(listener, state, shutdown_signal())
            .await
            .map_err(|e| CliError::io(format!("server: {e}")))
    })?;
    Ok(EXIT_OK)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
}
