use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use interfere_core::annotation::{build_tasks, TaskKind, TaskSource};
use interfere_core::augment::{AugmentConfig, Augmenter};
use interfere_core::corpus::import::{attach_fusedchat, import_multiwoz, ImportStats};
use interfere_core::corpus::{load_corpus, Corpus, Flavor, Provenance, Split};
use interfere_core::gateway::{CompletionBackend, Gateway, HttpBackend, HttpConfig, MockBackend, RetryPolicy};
use interfere_core::metrics::{
    dataset_stats, evaluate_corpus, load_annotations, rank_aggregate, rating_summary, AnnotationRecord,
};
use interfere_core::prompts::{PromptKit, DEFAULT_EXEMPLARS};
use interfere_core::simpletod::Predictions;
use interfere_core::text::ValueNormalizer;
use interfere_core::VenueDatabase;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{config_hash, optional, require, FileConfig};
use crate::{AgreementArgs, AugmentArgs, Cli, Command, EvaluateArgs, ImportArgs, ServeArgs, StatsArgs, TasksArgs};

/// The run finished but accepted too few dialogues.
#[derive(Debug)]
pub struct BelowFloor;

impl std::fmt::Display for BelowFloor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("acceptance rate below the configured floor")
    }
}

impl std::error::Error for BelowFloor {}

struct Ctx {
    seed: Option<u64>,
    file: FileConfig,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.or(self.file.seed).unwrap_or(0)
    }

    fn split(&self, flag: &Option<String>) -> Result<Split> {
        let s = flag.clone().or_else(|| self.file.split.clone()).unwrap_or_else(|| "test".into());
        s.parse().map_err(anyhow::Error::msg)
    }

    fn provenance(&self, command: &str, hash: &str, seed: Option<u64>) -> Provenance {
        Provenance {
            command: command.to_string(),
            config_hash: hash.to_string(),
            seed,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Ctx { seed: cli.seed, file };
    match cli.command {
        Command::Import(a) => import(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Stats(a) => stats(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Tasks(a) => tasks(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
        Command::Agreement(a) => agreement(&ctx, a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn import(ctx: &Ctx, a: ImportArgs) -> Result<()> {
    let db = optional(a.db, &ctx.file.db, "db")?;
    let hash = config_hash(&json!({
        "command": "import",
        "multiwoz": a.multiwoz,
        "fusedchat": a.fusedchat,
        "db": db,
    }));
    let venue = db.as_deref().map(VenueDatabase::load).transpose()?;
    let mut stats = ImportStats::default();
    let mut splits = import_multiwoz(&a.multiwoz, venue.as_ref(), &mut stats)?;
    let mut files = Vec::new();
    let prov = ctx.provenance("import", &hash, ctx.seed);
    for (split, dialogues) in &splits {
        let mut c = Corpus::new(Flavor::Multiwoz, *split, dialogues.clone());
        c.provenance = Some(prov.clone());
        files.push(c.save(&a.out.join("multiwoz"))?);
    }
    if let Some(fc) = &a.fusedchat {
        attach_fusedchat(fc, &mut splits, &mut stats)?;
        for (split, dialogues) in splits {
            let mut c = Corpus::new(Flavor::Fusedchat, split, dialogues);
            c.provenance = Some(prov.clone());
            files.push(c.save(&a.out.join("fusedchat"))?);
        }
    }
    print_json(&json!({ "config_hash": hash, "files": files, "stats": stats }));
    Ok(())
}

fn backend(spec: &str, http: HttpConfig) -> Result<Arc<dyn CompletionBackend>> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Arc::new(MockBackend::load(Path::new(path))?));
    }
    if spec == "http" {
        return Ok(Arc::new(HttpBackend::new(http.apply_env())));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
        return Ok(Arc::new(HttpBackend::new(http.apply_env().with_endpoint(&url))));
    }
    bail!("--backend must be `mock:<transcript.json>`, `http` or `http:<url>`, got `{spec}`")
}

fn augment(ctx: &Ctx, a: AugmentArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, &ctx.file.corpus, "corpus")?;
    let split = ctx.split(&a.split)?;
    let db_dir = optional(a.db, &ctx.file.db, "db")?;
    let templates = optional(a.templates, &ctx.file.templates, "templates")?;
    let spec = a
        .backend
        .or_else(|| ctx.file.backend.clone())
        .context("--backend is required (or set `backend` in the config file)")?;
    let mut cfg: AugmentConfig = ctx.file.augment.clone().unwrap_or_default();
    if let Some(r) = a.retries {
        cfg.retries = r;
    }
    if let Some(t) = a.threshold {
        cfg.filter.levenshtein_threshold = t;
    }
    if let Some(f) = a.acceptance_floor {
        cfg.acceptance_floor = f;
    }
    cfg.validate()?;
    let retry: RetryPolicy = ctx.file.retry.unwrap_or_default();
    let http = ctx.file.http.clone().unwrap_or_default();
    let concurrency = a.concurrency.or(ctx.file.concurrency).unwrap_or(4).max(1);
    let seed = ctx.seed();

    let kit = match &templates {
        Some(dir) => PromptKit::load(dir, DEFAULT_EXEMPLARS)?,
        None => PromptKit::builtin(),
    };
    let hash = config_hash(&json!({
        "command": "augment",
        "corpus": corpus_dir,
        "split": split,
        "db": db_dir,
        "templates": kit.fingerprint(),
        "backend": spec,
        "augment": cfg,
        "retry": retry,
        "seed": seed,
    }));
    let corpus = load_corpus(&corpus_dir, Flavor::Fusedchat, split)?;
    let db = db_dir.as_deref().map(VenueDatabase::load).transpose()?;
    let gateway = Gateway::new(backend(&spec, http)?, retry, concurrency);
    let augmenter = Augmenter::new(&gateway, &kit, cfg, seed)?.with_config_hash(&hash);
    let (mut out, report) = augmenter.run(&corpus, db.as_ref())?;
    out.provenance = Some(ctx.provenance("augment", &hash, Some(seed)));
    let corpus_path = out.save(&a.out)?;
    let report_path = a.out.join("run_report.json");
    write_json(&report_path, &report)?;
    print_json(&json!({
        "config_hash": hash,
        "seed": seed,
        "counts": report.counts,
        "acceptance_rate": report.acceptance_rate,
        "corpus": corpus_path,
        "report": report_path,
    }));
    if !report.meets_floor() {
        return Err(anyhow::Error::new(BelowFloor).context(format!(
            "acceptance rate {:.3} is below the floor {:.3}",
            report.acceptance_rate, report.config.acceptance_floor
        )));
    }
    Ok(())
}

fn stats(ctx: &Ctx, a: StatsArgs) -> Result<()> {
    let corpus_dir = require(a.corpus, &ctx.file.corpus, "corpus")?;
    let baseline_dir = require(a.baseline, &ctx.file.baseline, "baseline")?;
    let split = ctx.split(&a.split)?;
    let hash = config_hash(&json!({
        "command": "stats",
        "corpus": corpus_dir,
        "baseline": baseline_dir,
        "split": split,
    }));
    let corpus = load_corpus(&corpus_dir, Flavor::Fusedchat, split)?;
    let baseline = load_corpus(&baseline_dir, Flavor::Multiwoz, split)?;
    let stats = dataset_stats(&corpus, &baseline);
    let out = json!({
        "schema": "interfere.stats/v1",
        "provenance": ctx.provenance("stats", &hash, ctx.seed),
        "stats": stats,
    });
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    print!("{}", stats.to_table());
    Ok(())
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let preds_path = require(a.predictions, &ctx.file.predictions, "predictions")?;
    let corpus_dir = require(a.corpus, &ctx.file.corpus, "corpus")?;
    let db_dir = require(a.db, &ctx.file.db, "db")?;
    let split = ctx.split(&a.split)?;
    let hash = config_hash(&json!({
        "command": "evaluate",
        "predictions": preds_path,
        "corpus": corpus_dir,
        "db": db_dir,
        "split": split,
    }));
    let corpus = load_corpus(&corpus_dir, Flavor::Multiwoz, split)?;
    let db = VenueDatabase::load(&db_dir)?;
    let preds = Predictions::load(&preds_path)?;
    let report = evaluate_corpus(&corpus.dialogues, &preds, &db, &ValueNormalizer::default())?;
    let out = json!({
        "schema": "interfere.metrics/v1",
        "provenance": ctx.provenance("evaluate", &hash, ctx.seed),
        "skipped_prediction_items": preds.skipped_items,
        "report": report,
    });
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn tasks(ctx: &Ctx, a: TasksArgs) -> Result<()> {
    let kind: TaskKind = a.kind.parse().map_err(anyhow::Error::msg)?;
    let corpus_dir = require(a.corpus, &ctx.file.corpus, "corpus")?;
    let split = ctx.split(&a.split)?;
    let sample = a.sample.or(ctx.file.sample).context("--sample is required")?;
    let seed = ctx.seed();
    let mut systems: BTreeMap<String, PathBuf> = BTreeMap::new();
    for s in &a.systems {
        let (name, path) = s.split_once('=').with_context(|| format!("--system expects NAME=FILE, got `{s}`"))?;
        if systems.insert(name.to_string(), PathBuf::from(path)).is_some() {
            bail!("--system {name} given twice");
        }
    }
    if kind == TaskKind::Rating && !systems.is_empty() {
        bail!("--system only applies to ranking tasks");
    }
    let hash = config_hash(&json!({
        "command": "tasks",
        "kind": kind,
        "corpus": corpus_dir,
        "split": split,
        "systems": systems,
        "sample": sample,
        "seed": seed,
    }));
    let corpus = load_corpus(&corpus_dir, Flavor::Fusedchat, split)?;
    let loaded: BTreeMap<String, Predictions> = systems
        .iter()
        .map(|(name, path)| Ok((name.clone(), Predictions::load(path)?)))
        .collect::<Result<_>>()?;
    let source = match kind {
        TaskKind::Rating => TaskSource::Rating(&corpus),
        TaskKind::Ranking => TaskSource::Ranking {
            corpus: &corpus,
            systems: &loaded,
        },
    };
    let mut file = build_tasks(source, sample, seed)?;
    file.config_hash = Some(hash.clone());
    file.save(&a.out)?;
    print_json(&json!({
        "config_hash": hash,
        "seed": seed,
        "kind": kind,
        "tasks": file.tasks.len(),
        "population": file.population,
        "out": a.out,
    }));
    Ok(())
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let tasks = require(a.tasks, &ctx.file.tasks, "tasks")?;
    let results = a
        .results
        .or_else(|| ctx.file.results.clone())
        .context("--results is required (or set `results` in the config file)")?;
    let port = a.port.or(ctx.file.port).unwrap_or(8000);
    let addr: SocketAddr = format!("{}:{port}", a.host).parse().context("--host/--port")?;
    let state = interfere_server::AppState::open(&tasks, &results)?;
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("serving {} on http://{addr}", tasks.display());
    runtime.block_on(interfere_server::serve(state, addr, a.static_dir))?;
    Ok(())
}

fn agreement(ctx: &Ctx, a: AgreementArgs) -> Result<()> {
    let path = require(a.annotations, &ctx.file.annotations, "annotations")?;
    let hash = config_hash(&json!({ "command": "agreement", "annotations": path }));
    let records = load_annotations(&path)?;
    let mut ratings = Vec::new();
    let mut rankings = Vec::new();
    for r in records {
        match r {
            AnnotationRecord::Rating(r) => ratings.push(r),
            AnnotationRecord::Ranking(r) => rankings.push(r),
        }
    }
    if ratings.is_empty() && rankings.is_empty() {
        bail!("{} holds no annotation records", path.display());
    }
    let rating = (!ratings.is_empty()).then(|| rating_summary(&ratings)).transpose()?;
    let ranking = (!rankings.is_empty()).then(|| rank_aggregate(&rankings)).transpose()?;

    let mut table = String::new();
    if let Some(qs) = &rating {
        table.push_str(&format!("{:<4} {:>10} {:>10} {:>10} {:>8}\n", "", "not at all", "somewhat", "fully", "kappa"));
        for q in qs {
            table.push_str(&format!(
                "{:<4} {:>9.1}% {:>9.1}% {:>9.1}% {:>8.3}\n",
                q.question, q.not_at_all, q.somewhat, q.fully, q.kappa
            ));
        }
    }
    if let Some(systems) = &ranking {
        let width = systems.keys().map(String::len).max().unwrap_or(6).max(6);
        table.push_str(&format!("{:<width$} {:>16} {:>16} {:>16} {:>14}\n", "system", "#1", "#2", "#3", "mean rank"));
        for (name, s) in systems {
            let cell = |k: usize| format!("{:.2}% ±{:.2}", s.distribution[k], s.distribution_std[k]);
            table.push_str(&format!(
                "{name:<width$} {:>16} {:>16} {:>16} {:>14}\n",
                cell(0),
                cell(1),
                cell(2),
                format!("{:.2} ±{:.2}", s.mean_rank, s.mean_rank_std)
            ));
        }
    }
    let out = json!({
        "schema": "interfere.agreement/v1",
        "provenance": ctx.provenance("agreement", &hash, ctx.seed),
        "rating": rating,
        "ranking": ranking,
    });
    if let Some(p) = &a.out {
        write_json(p, &out)?;
    }
    print!("{table}");
    Ok(())
}
