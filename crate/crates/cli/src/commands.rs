use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use llm_planner::backend::{
    ConcurrencyLimited, HttpBackend, HttpBackendConfig, LlmBackend, RecordingBackend, ReplayBackend, ScriptedBackend,
    TokenIdTokenizer, TokenizerRef, WhitespaceTokenizer,
};
use llm_planner::controller::EpisodeError;
use llm_planner::dataset::{load_dataset, stratified_sample, write_dataset};
use llm_planner::eval::{
    compute_report, compute_static_report, config_fingerprint, episodes_csv, loocv as rank_variants,
    oracle_executed_rate, run_episodes, sweep, sweep_csv, StaticPrediction, Variant,
};
use llm_planner::http::HttpClient;
use llm_planner::planner::{ExampleSelector, HighLevelPlanner, LlmPlanner, PlanLog, PlannerError, PlannerState};
use llm_planner::prompting::PlanningMode;
use llm_planner::retriever::{CachedEmbedder, EmbeddingProvider, HttpEmbedder, LexicalEmbedder};
use llm_planner::sim::Scene;
use llm_planner::suite::Assets;
use llm_planner::types::TaskInstance;
use serde::{Deserialize, Serialize};

use crate::config::{BackendSpec, ProviderKind, RunConfig};
use crate::{EvalStaticArgs, GenAssetsArgs, LoocvArgs, PlanArgs, RunArgs, SampleArgs};

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean = 0,
    /// Some episodes failed or some items could not be planned.
    Failures = 1,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Backend(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Backend(m) => write!(f, "backend: {m}"),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    load_dataset(path).map_err(usage)
}

fn resolve(args: &PlanArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(args.config.as_deref()).map_err(CliError::Usage)?;
    if let Some(b) = &args.backend {
        cfg.backend.spec = b.clone();
    }
    if let Some(p) = &args.train {
        cfg.data.train = p.clone();
    }
    if let Some(k) = args.k {
        cfg.prompt.k = k;
    }
    if let Some(b) = args.logit_bias {
        cfg.prompt.logit_bias_value = b;
    }
    if let Some(t) = args.temperature {
        cfg.prompt.temperature = t;
    }
    if args.use_steps {
        cfg.prompt.use_steps = true;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.episode.seed = cfg.seed;
    Ok(cfg)
}

fn tokenizer(cfg: &RunConfig) -> Result<TokenizerRef, CliError> {
    match &cfg.backend.tokenizer {
        None => Ok(Arc::new(WhitespaceTokenizer)),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let tok = TokenIdTokenizer::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Ok(Arc::new(tok))
        }
    }
}

fn http_backend(cfg: &RunConfig) -> Result<HttpBackend, CliError> {
    let missing = |key: &str| usage(format!("backend `http` needs backend.{key} in the config file"));
    let config = HttpBackendConfig {
        endpoint: cfg.backend.endpoint.clone().ok_or_else(|| missing("endpoint"))?,
        model: cfg.backend.model.clone().ok_or_else(|| missing("model"))?,
        retry: cfg.backend.retry.clone(),
        max_concurrency: cfg.backend.max_concurrency,
    };
    let backend = HttpBackend::from_env(config).map_err(|e| CliError::Backend(e.to_string()))?;
    Ok(backend.with_tokenizer(tokenizer(cfg)?))
}

fn build_backend<'a>(
    cfg: &RunConfig,
    known: impl IntoIterator<Item = &'a TaskInstance>,
) -> Result<Arc<dyn LlmBackend>, CliError> {
    let inner: Box<dyn LlmBackend> = match &cfg.backend.spec {
        BackendSpec::Oracle => Box::new(ScriptedBackend::oracle(known)),
        BackendSpec::Scripted(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let name = format!("scripted:{}", path.display());
            Box::new(ScriptedBackend::from_json(name, &text).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        BackendSpec::Http => Box::new(http_backend(cfg)?),
        BackendSpec::Replay(dir) => Box::new(ReplayBackend::new(dir, tokenizer(cfg)?)),
        BackendSpec::Record(dir) => Box::new(
            RecordingBackend::new(http_backend(cfg)?, dir)
                .map_err(|e| usage(format!("cannot use {}: {e}", dir.display())))?,
        ),
    };
    Ok(Arc::new(ConcurrencyLimited::new(inner, cfg.jobs)))
}

fn knn_selector(cfg: &RunConfig) -> Result<ExampleSelector, CliError> {
    let r = &cfg.retriever;
    let provider: Box<dyn EmbeddingProvider> = match r.provider {
        ProviderKind::Lexical => Box::new(LexicalEmbedder::new(r.dimension)),
        ProviderKind::Http => {
            let endpoint = r.endpoint.clone().ok_or_else(|| usage("retriever.endpoint is required for http"))?;
            let model = r.model.clone().ok_or_else(|| usage("retriever.model is required for http"))?;
            let client = HttpClient::from_env(endpoint, cfg.backend.retry.clone()).map_err(|e| CliError::Backend(e.to_string()))?;
            Box::new(HttpEmbedder::new(client, model))
        }
    };
    match &r.cache {
        None => Ok(ExampleSelector::knn(provider)),
        Some(path) => {
            let cached = CachedEmbedder::with_file(provider, path)
                .map_err(|e| usage(format!("cannot use cache {}: {e}", path.display())))?;
            Ok(ExampleSelector::Knn(Arc::new(cached)))
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_fingerprint: String,
    versions: BTreeMap<&'static str, &'static str>,
    backend: String,
    config: &'a RunConfig,
    outputs: Vec<&'a str>,
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig, backend: &str, outputs: &[&str]) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        config_fingerprint: config_fingerprint(cfg),
        versions: BTreeMap::from([
            ("llm-planner", llm_planner::VERSION),
            ("llm-planner-cli", env!("CARGO_PKG_VERSION")),
        ]),
        backend: backend.to_string(),
        config: cfg,
        outputs: outputs.to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write(&out.join("manifest.json"), &text)
}

pub fn sample(a: &SampleArgs) -> Result<Outcome, CliError> {
    let data = load(&a.data)?;
    let chosen = stratified_sample(&data, a.n, a.seed).map_err(usage)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    write_dataset(&a.out, &chosen).map_err(usage)?;
    eprintln!("wrote {} of {} tasks to {}", chosen.len(), data.len(), a.out.display());
    Ok(Outcome::Clean)
}

pub fn eval_static(a: &EvalStaticArgs) -> Result<Outcome, CliError> {
    let mut cfg = resolve(&a.plan)?;
    if let Some(p) = &a.test {
        cfg.data.tasks = p.clone();
    }
    cfg.prompt.mode = PlanningMode::Static;
    cfg.validate().map_err(CliError::Usage)?;
    let out = &a.plan.out;
    let train = load(&cfg.data.train)?;
    let test = load(&cfg.data.tasks)?;
    let backend = build_backend(&cfg, test.iter().chain(&train))?;
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let log = Arc::new(PlanLog::create(out.join("plan_log.jsonl")).map_err(usage)?);
    let planner = LlmPlanner::new(train, knn_selector(&cfg)?, backend.clone(), cfg.prompt.clone()).with_log(log);

    let mut predictions = Vec::with_capacity(test.len());
    let mut backend_faults = Vec::new();
    for task in &test {
        let mut state = PlannerState::new(task.id.clone(), task.instruction.clone());
        let prediction = match planner.plan(&mut state) {
            Ok(plan) => StaticPrediction { task_id: task.id.clone(), plan: Some(plan), error: None },
            Err(e) => {
                eprintln!("{}: {e}", task.id);
                if matches!(e, PlannerError::Backend(_)) {
                    backend_faults.push(format!("{}: {e}", task.id));
                }
                StaticPrediction { task_id: task.id.clone(), plan: None, error: Some(e.to_string()) }
            }
        };
        predictions.push(prediction);
    }
    let report = compute_static_report(&predictions, &test, config_fingerprint(&cfg)).map_err(usage)?;
    let lines: String = predictions
        .iter()
        .map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n")
        .collect();
    write(&out.join("predictions.jsonl"), &lines)?;
    write(&out.join("report.json"), &(report.to_json() + "\n"))?;
    write_manifest(out, "eval-static", &cfg, &backend.id(), &["predictions.jsonl", "report.json", "plan_log.jsonl"])?;
    print!("{}", report.to_table());
    if !backend_faults.is_empty() {
        return Err(CliError::Backend(backend_faults.join("; ")));
    }
    let faulted = predictions.iter().any(|p| p.error.is_some());
    Ok(if faulted { Outcome::Failures } else { Outcome::Clean })
}

pub fn run(a: &RunArgs) -> Result<Outcome, CliError> {
    let mut cfg = resolve(&a.plan)?;
    if let Some(p) = &a.tasks {
        cfg.data.tasks = p.clone();
    }
    if let Some(p) = &a.scenes {
        cfg.data.scenes = p.clone();
    }
    if a.static_mode {
        cfg.episode.dynamic = false;
    } else if a.dynamic {
        cfg.episode.dynamic = true;
    }
    if let Some(n) = a.replan_interval {
        cfg.episode.replan_interval = n;
    }
    cfg.prompt.mode = if cfg.episode.dynamic { PlanningMode::Dynamic } else { PlanningMode::Static };
    cfg.validate().map_err(CliError::Usage)?;
    let out = &a.plan.out;
    let train = load(&cfg.data.train)?;
    let tasks = load(&cfg.data.tasks)?;
    let scenes = Scene::load_dir(&cfg.data.scenes).map_err(usage)?;
    for task in &tasks {
        let scene = scenes
            .get(&task.scene_id)
            .ok_or_else(|| usage(format!("task {} needs scene {} which is not in {}", task.id, task.scene_id, cfg.data.scenes.display())))?;
        scene.check_task(task).map_err(usage)?;
    }
    let backend = build_backend(&cfg, tasks.iter().chain(&train))?;
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let log = Arc::new(PlanLog::create(out.join("plan_log.jsonl")).map_err(usage)?);
    let planner = LlmPlanner::new(train, knn_selector(&cfg)?, backend.clone(), cfg.prompt.clone()).with_log(log);

    let mut summaries = Vec::with_capacity(tasks.len());
    let mut backend_faults = Vec::new();
    for (task, result) in tasks.iter().zip(run_episodes(&tasks, &scenes, &planner, &cfg.episode, cfg.jobs)) {
        let trace = match result {
            Ok(trace) => trace,
            Err(EpisodeError::Component { trace, error }) => {
                backend_faults.push(format!("{}: {error}", task.id));
                *trace
            }
            Err(e) => return Err(usage(e)),
        };
        write(&out.join("traces").join(format!("{}.jsonl", task.id)), &trace.to_jsonl())?;
        summaries.push(trace.summary);
    }
    let mut report = compute_report(&summaries, &tasks, config_fingerprint(&cfg)).map_err(usage)?;
    report.diagnostic_oracle_executed = Some(oracle_executed_rate(&tasks, &scenes, &cfg.episode));
    write(&out.join("report.json"), &(report.to_json() + "\n"))?;
    write(&out.join("episodes.csv"), &episodes_csv(&summaries, &tasks).map_err(usage)?)?;
    write_manifest(
        out,
        "run",
        &cfg,
        &backend.id(),
        &["report.json", "episodes.csv", "traces/", "plan_log.jsonl"],
    )?;
    print!("{}", report.to_table());
    if !backend_faults.is_empty() {
        return Err(CliError::Backend(backend_faults.join("; ")));
    }
    let failed = summaries.iter().any(|s| !s.success);
    Ok(if failed { Outcome::Failures } else { Outcome::Clean })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VariantsFile {
    variant: Vec<Variant>,
}

fn load_variants(path: Option<&Path>, cfg: &RunConfig) -> Result<Vec<Variant>, CliError> {
    let Some(path) = path else {
        let base = cfg.prompt.clone();
        return Ok(vec![
            Variant::new("goal-only", llm_planner::prompting::PromptConfig { use_steps: false, ..base.clone() }),
            Variant::new("with-steps", llm_planner::prompting::PromptConfig { use_steps: true, ..base }),
        ]);
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let file: VariantsFile = toml::from_str(&text).map_err(|e| usage(format!("invalid variants {}: {e}", path.display())))?;
    if file.variant.is_empty() {
        return Err(usage(format!("{} declares no variants", path.display())));
    }
    for v in &file.variant {
        v.prompt.validate().map_err(|e| usage(format!("variant {}: {e}", v.name)))?;
    }
    Ok(file.variant)
}

#[derive(Serialize)]
struct LoocvOutput<'a> {
    ranking: &'a [llm_planner::eval::VariantScore],
    sweep: &'a [llm_planner::eval::SweepCell],
}

pub fn loocv(a: &LoocvArgs) -> Result<Outcome, CliError> {
    let mut cfg = resolve(&a.plan)?;
    cfg.prompt.mode = PlanningMode::Static;
    cfg.validate().map_err(CliError::Usage)?;
    let out = &a.plan.out;
    let train = load(&cfg.data.train)?;
    if train.len() < 2 {
        return Err(usage("leave-one-out needs at least two training examples"));
    }
    let variants = load_variants(a.variants.as_deref(), &cfg)?;
    let backend = build_backend(&cfg, &train)?;
    let knn = knn_selector(&cfg)?;
    let factory = |v: &Variant, fold: Vec<TaskInstance>| -> Box<dyn HighLevelPlanner> {
        let selector = match v.selector {
            llm_planner::eval::SelectorMode::Knn => knn.clone(),
            llm_planner::eval::SelectorMode::Random => ExampleSelector::Random { seed: v.seed },
        };
        Box::new(LlmPlanner::new(fold, selector, backend.clone(), v.prompt.clone()))
    };
    let ranking = rank_variants(&train, &variants, &factory, cfg.jobs);
    let best = ranking[0].name.clone();
    let base = variants.iter().find(|v| v.name == best).expect("ranked variant exists");
    let cells = sweep(&train, base, &a.ks, &a.train_sizes, cfg.seed, &factory, cfg.jobs).map_err(usage)?;

    let output = LoocvOutput { ranking: &ranking, sweep: &cells };
    write(&out.join("loocv.json"), &(serde_json::to_string_pretty(&output).expect("serializes") + "\n"))?;
    write(&out.join("sweep.csv"), &sweep_csv(&cells))?;
    write_manifest(out, "loocv", &cfg, &backend.id(), &["loocv.json", "sweep.csv"])?;

    println!("{:<4} {:<32} {:>8} {:>12} {:>7}", "rank", "variant", "score", "correct", "faults");
    for (i, s) in ranking.iter().enumerate() {
        let correct = format!("{}/{}", s.correct, s.folds);
        println!("{:<4} {:<32} {:>8.4} {:>12} {:>7}", i + 1, s.name, s.score, correct, s.faults.len());
    }
    println!();
    println!("{:>4} {:>10} {:>8}", "k", "train", "score");
    for c in &cells {
        println!("{:>4} {:>10} {:>8.4}", c.k, c.train_size, c.score);
    }
    let faulted = ranking.iter().any(|s| !s.faults.is_empty()) || cells.iter().any(|c| c.faults > 0);
    Ok(if faulted { Outcome::Failures } else { Outcome::Clean })
}

pub fn gen_assets(a: &GenAssetsArgs) -> Result<Outcome, CliError> {
    let assets = Assets::generate();
    assets.write(&a.out).map_err(|e| usage(format!("cannot write {}: {e}", a.out.display())))?;
    let files = assets.files().len();
    eprintln!("wrote {files} files under {}", PathBuf::from(&a.out).display());
    Ok(Outcome::Clean)
}
