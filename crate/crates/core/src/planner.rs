//! High-level planning: retrieve examples, build the prompt, query the
//! language model and parse its continuation.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, CompletionRequest, LlmBackend, TokenizerError};
use crate::hlp::{parse_hlp_with, ParseError};
use crate::prompting::{build_prompt, ExampleOrder, PlanningContext, PlanningMode, PromptConfig};
use crate::retriever::{knn_retrieve, CachedEmbedder, EmbeddingProvider, RetrievalError};
use crate::types::{HighLevelPlan, Instruction, ObjectClass, ObjectVocabulary, Subgoal, TaskInstance};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("unparseable completion {raw:?}: {error}")]
    Parse { error: ParseError, raw: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

/// Per-episode planner inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub episode_id: String,
    pub instruction: Instruction,
    /// Append-only.
    completed: HighLevelPlan,
    /// Grows monotonically.
    observed: BTreeSet<ObjectClass>,
    /// Environment step at which the next plan is requested.
    pub t: u64,
    replan_count: u32,
    calls: u32,
}

impl PlannerState {
    pub fn new(episode_id: impl Into<String>, instruction: Instruction) -> Self {
        Self {
            episode_id: episode_id.into(),
            instruction,
            completed: HighLevelPlan::empty(),
            observed: BTreeSet::new(),
            t: 0,
            replan_count: 0,
            calls: 0,
        }
    }

    pub fn completed(&self) -> &HighLevelPlan {
        &self.completed
    }

    pub fn observed(&self) -> &BTreeSet<ObjectClass> {
        &self.observed
    }

    pub fn replan_count(&self) -> u32 {
        self.replan_count
    }

    pub fn calls(&self) -> u32 {
        self.calls
    }

    pub fn push_completed(&mut self, subgoal: Subgoal) {
        self.completed.push(subgoal);
    }

    pub fn observe<'a>(&mut self, classes: impl IntoIterator<Item = &'a ObjectClass>) {
        self.observed.extend(classes.into_iter().cloned());
    }

    fn count_call(&mut self) {
        if self.calls > 0 {
            self.replan_count += 1;
        }
        self.calls += 1;
    }
}

pub trait HighLevelPlanner: Send + Sync {
    fn id(&self) -> String;

    /// The plan continuing `state.completed()`; the episode's full plan is
    /// the completed prefix followed by the result.
    fn plan(&self, state: &mut PlannerState) -> Result<HighLevelPlan, PlannerError>;
}

#[derive(Clone)]
pub enum ExampleSelector {
    /// Nearest neighbours of the instruction.
    Knn(Arc<dyn EmbeddingProvider>),
    /// Uniform draw seeded by `(seed, instruction)`.
    Random { seed: u64 },
}

impl ExampleSelector {
    /// Nearest neighbours with embeddings memoized for the planner's life.
    pub fn knn<P: EmbeddingProvider + 'static>(provider: P) -> Self {
        ExampleSelector::Knn(Arc::new(CachedEmbedder::in_memory(provider)))
    }

    fn name(&self) -> String {
        match self {
            ExampleSelector::Knn(p) => format!("knn[{}]", p.id()),
            ExampleSelector::Random { seed } => format!("random[{seed}]"),
        }
    }

    /// Selected examples, nearest last for kNN.
    pub fn select<'c>(
        &self,
        query: &Instruction,
        corpus: &'c [TaskInstance],
        k: usize,
        use_steps: bool,
    ) -> Result<Vec<&'c TaskInstance>, RetrievalError> {
        let k = k.min(corpus.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        match self {
            ExampleSelector::Knn(p) => knn_retrieve(query, corpus, k, p.as_ref(), use_steps),
            ExampleSelector::Random { seed } => {
                let digest = Sha256::digest(query.query_text(use_steps).as_bytes());
                let mut bytes = [0u8; 8];
                bytes.copy_from_slice(&digest[..8]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(bytes));
                Ok(corpus.choose_multiple(&mut rng, k).collect())
            }
        }
    }
}

#[derive(Serialize)]
struct PlanLogRecord<'a> {
    episode_id: &'a str,
    t: u64,
    prompt_hash: String,
    raw_completion: Option<&'a str>,
    parsed_plan: Option<String>,
    error: Option<String>,
    latency_ms: u128,
}

/// JSONL log with one record per completion request.
pub struct PlanLog {
    out: Mutex<BufWriter<fs::File>>,
}

impl PlanLog {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(BufWriter::new(f)) })
    }

    fn append(&self, rec: &PlanLogRecord<'_>) {
        let mut out = self.out.lock().unwrap();
        let line = serde_json::to_string(rec).expect("log record serializes");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            log::warn!("plan log write failed: {e}");
        }
    }
}

/// Few-shot planner over a language-model backend.
pub struct LlmPlanner {
    corpus: Arc<Vec<TaskInstance>>,
    selector: ExampleSelector,
    backend: Arc<dyn LlmBackend>,
    config: PromptConfig,
    vocabulary: ObjectVocabulary,
    /// Extra attempts with the same prompt when the completion fails to parse.
    parse_retries: u32,
    log: Option<Arc<PlanLog>>,
}

impl LlmPlanner {
    pub fn new(
        corpus: impl Into<Arc<Vec<TaskInstance>>>,
        selector: ExampleSelector,
        backend: Arc<dyn LlmBackend>,
        config: PromptConfig,
    ) -> Self {
        Self {
            corpus: corpus.into(),
            selector,
            backend,
            config,
            vocabulary: ObjectVocabulary::builtin().clone(),
            parse_retries: 1,
            log: None,
        }
    }

    pub fn with_vocabulary(mut self, vocabulary: ObjectVocabulary) -> Self {
        self.vocabulary = vocabulary;
        self
    }

    pub fn with_parse_retries(mut self, retries: u32) -> Self {
        self.parse_retries = retries;
        self
    }

    pub fn with_log(mut self, log: Arc<PlanLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn config(&self) -> &PromptConfig {
        &self.config
    }

    pub fn corpus(&self) -> &[TaskInstance] {
        &self.corpus
    }

    /// The request `plan` would send for `state`.
    pub fn request(&self, state: &PlannerState) -> Result<CompletionRequest, PlannerError> {
        let mut examples =
            self.selector
                .select(&state.instruction, &self.corpus, self.config.k, self.config.use_steps)?;
        if self.config.example_order == ExampleOrder::NearestFirst {
            examples.reverse();
        }
        let observed: Vec<ObjectClass> = match self.config.mode {
            PlanningMode::Dynamic => state.observed.iter().cloned().collect(),
            PlanningMode::Static => Vec::new(),
        };
        let ctx = PlanningContext::new(state.instruction.clone(), state.completed.clone(), observed);
        let tokenizer = self.backend.tokenizer();
        let spec = build_prompt(&ctx, &examples, &self.config, tokenizer.as_ref(), &self.vocabulary)?;
        Ok(spec.into())
    }
}

impl HighLevelPlanner for LlmPlanner {
    fn id(&self) -> String {
        format!("llm[{}; {}]", self.backend.id(), self.selector.name())
    }

    fn plan(&self, state: &mut PlannerState) -> Result<HighLevelPlan, PlannerError> {
        state.count_call();
        let req = self.request(state)?;
        let prompt_hash = req.hash();
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            let result = self.backend.complete(&req);
            let latency_ms = started.elapsed().as_millis();
            let (raw, parsed) = match &result {
                Ok(raw) => (Some(raw.as_str()), Some(parse_hlp_with(raw, &self.vocabulary))),
                Err(_) => (None, None),
            };
            if let Some(log) = &self.log {
                log.append(&PlanLogRecord {
                    episode_id: &state.episode_id,
                    t: state.t,
                    prompt_hash: prompt_hash.clone(),
                    raw_completion: raw,
                    parsed_plan: parsed.as_ref().and_then(|p| p.as_ref().ok()).map(|p| p.to_string()),
                    error: match (&result, &parsed) {
                        (Err(e), _) => Some(e.to_string()),
                        (_, Some(Err(e))) => Some(e.to_string()),
                        _ => None,
                    },
                    latency_ms,
                });
            }
            let raw = result?;
            match parsed.expect("completion present") {
                Ok(plan) => return Ok(plan),
                Err(error) if attempt >= self.parse_retries => return Err(PlannerError::Parse { error, raw }),
                Err(_) => attempt += 1,
            }
        }
    }
}

/// A from-scratch plan with no observations in the prompt.
pub fn static_plan(
    instruction: &Instruction,
    corpus: impl Into<Arc<Vec<TaskInstance>>>,
    selector: ExampleSelector,
    backend: Arc<dyn LlmBackend>,
    config: &PromptConfig,
) -> Result<HighLevelPlan, PlannerError> {
    let config = PromptConfig { mode: PlanningMode::Static, ..config.clone() };
    let planner = LlmPlanner::new(corpus, selector, backend, config);
    planner.plan(&mut PlannerState::new("static", instruction.clone()))
}

/// Returns a fixed sequence of plans, one per call, then empty plans.
pub struct FixedPlanner {
    plans: Vec<HighLevelPlan>,
}

impl FixedPlanner {
    pub fn new(plans: Vec<HighLevelPlan>) -> Self {
        Self { plans }
    }
}

impl HighLevelPlanner for FixedPlanner {
    fn id(&self) -> String {
        "fixed".into()
    }

    fn plan(&self, state: &mut PlannerState) -> Result<HighLevelPlan, PlannerError> {
        let i = state.calls as usize;
        state.count_call();
        Ok(self.plans.get(i).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};
    use crate::hlp::parse_hlp;
    use crate::retriever::LexicalEmbedder;
    use crate::types::TaskType;

    const COOK: &str = "Navigation Potato, PickupObject Potato, Navigation Microwave, OpenObject Microwave, PutObject Microwave, ToggleOnObject Microwave, ToggleOffObject Microwave";

    fn corpus(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| TaskInstance {
                id: format!("ex{i:03}"),
                task_type: TaskType::ALL[i % 7],
                instruction: Instruction::new(format!("put apple {i} in the fridge")),
                gold_hlp: parse_hlp("Navigation Apple, PickupObject Apple, Navigation Fridge").unwrap(),
                scene_id: "s".into(),
                goal_conditions: vec![],
            })
            .collect()
    }

    fn rule(completed: &str, visible: &[&str], continuation: &str) -> ScriptRule {
        ScriptRule {
            goal: "cook a potato".into(),
            completed: Some(completed.into()),
            requires_visible: visible.iter().map(|s| s.to_string()).collect(),
            prompt_contains: None,
            continuation: continuation.into(),
        }
    }

    fn planner(rules: Vec<ScriptRule>, mode: PlanningMode) -> LlmPlanner {
        LlmPlanner::new(
            corpus(100),
            ExampleSelector::knn(LexicalEmbedder::default()),
            Arc::new(ScriptedBackend::new("t", rules)),
            PromptConfig { mode, ..Default::default() },
        )
    }

    #[test]
    fn initial_plan_then_grounded_replan() {
        let p = planner(
            vec![
                rule("", &[], COOK),
                rule("Navigation Potato", &["Fridge"], "Navigation Fridge, OpenObject Fridge, PickupObject Potato"),
            ],
            PlanningMode::Dynamic,
        );
        let mut s = PlannerState::new("e", Instruction::new("cook a potato"));
        assert_eq!(p.plan(&mut s).unwrap(), parse_hlp(COOK).unwrap());
        assert_eq!(s.replan_count(), 0);
        s.push_completed(parse_hlp("Navigation Potato").unwrap().0[0].clone());
        s.observe([&ObjectClass::new("Fridge")]);
        let cont = p.plan(&mut s).unwrap();
        assert_eq!(cont.subgoals()[..2], parse_hlp("Navigation Fridge, OpenObject Fridge").unwrap().0[..]);
        assert_eq!(s.replan_count(), 1);
    }

    #[test]
    fn empty_completion_is_a_parse_error() {
        let p = planner(vec![rule("", &[], "")], PlanningMode::Dynamic);
        let err = p.plan(&mut PlannerState::new("e", Instruction::new("cook a potato"))).unwrap_err();
        assert!(matches!(err, PlannerError::Parse { error: ParseError::EmptyPlan, .. }), "{err:?}");
    }

    #[test]
    fn static_prompt_has_nine_examples_and_no_grounding() {
        let p = planner(vec![rule("", &[], COOK)], PlanningMode::Static);
        let mut s = PlannerState::new("e", Instruction::new("cook a potato"));
        s.observe([&ObjectClass::new("Fridge")]);
        let req = p.request(&s).unwrap();
        assert_eq!(req.prompt.matches("Task description:").count(), 10);
        assert!(!req.prompt.contains("Visible objects"));
        let backend: Arc<dyn LlmBackend> = Arc::new(ScriptedBackend::new("t", vec![rule("", &[], COOK)]));
        let a = static_plan(&s.instruction, corpus(100), ExampleSelector::knn(LexicalEmbedder::default()), backend.clone(), &PromptConfig::default()).unwrap();
        let b = static_plan(&s.instruction, corpus(100), ExampleSelector::knn(LexicalEmbedder::default()), backend, &PromptConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, p.plan(&mut PlannerState::new("e", Instruction::new("cook a potato"))).unwrap());
    }

    #[test]
    fn random_selector_is_seeded() {
        let c = corpus(50);
        let q = Instruction::new("wash a mug");
        let a = ExampleSelector::Random { seed: 3 }.select(&q, &c, 9, false).unwrap();
        let b = ExampleSelector::Random { seed: 3 }.select(&q, &c, 9, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|t| &t.id).collect::<BTreeSet<_>>().len(), 9);
    }

    #[test]
    fn plan_log_records_each_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plans.jsonl");
        let p = planner(vec![rule("", &[], "Fly Away")], PlanningMode::Dynamic).with_log(Arc::new(PlanLog::create(&path).unwrap()));
        assert!(p.plan(&mut PlannerState::new("ep1", Instruction::new("cook a potato"))).is_err());
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2, "one retry after the parse failure");
        assert_eq!(lines[0]["episode_id"], "ep1");
        assert_eq!(lines[0]["raw_completion"], "Fly Away");
        assert!(lines[0]["parsed_plan"].is_null());
    }
}
