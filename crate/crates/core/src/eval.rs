//! Metrics, reports and leave-one-out prompt selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{run_episode, EpisodeConfig, EpisodeError, EpisodeSummary, EpisodeTrace};
use crate::dataset::stratified_sample;
use crate::planner::{FixedPlanner, HighLevelPlanner, PlannerState};
use crate::prompting::PromptConfig;
use crate::sim::Scene;
use crate::types::{HighLevelPlan, TaskInstance, TaskType};

/// 1 iff the plans are identical.
pub fn hlp_accuracy_static(predicted: &HighLevelPlan, gold: &HighLevelPlan) -> u8 {
    u8::from(predicted == gold)
}

/// Upper-bound hit: a non-empty executed sequence that is a prefix of gold.
pub fn executed_prefix_hit(executed: &HighLevelPlan, gold: &HighLevelPlan) -> u8 {
    u8::from(!executed.is_empty() && executed.is_prefix_of(gold))
}

/// Per-episode `(lower, upper)` contributions. The upper contribution is
/// never below the lower one.
pub fn dynamic_hits(summary: &EpisodeSummary, gold: &HighLevelPlan) -> (u8, u8) {
    let lower = hlp_accuracy_static(&summary.full_predicted_hlp, gold);
    let upper = executed_prefix_hit(&summary.executed_hlp, gold).max(lower);
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn hlp_accuracy_dynamic(episodes: &[(&EpisodeSummary, &HighLevelPlan)]) -> DynamicBounds {
    if episodes.is_empty() {
        return DynamicBounds { lower: 0.0, upper: 0.0 };
    }
    let (lo, up) = episodes.iter().fold((0u32, 0u32), |(lo, up), (s, g)| {
        let (l, u) = dynamic_hits(s, g);
        (lo + l as u32, up + u as u32)
    });
    let n = episodes.len() as f64;
    DynamicBounds { lower: lo as f64 / n, upper: up as f64 / n }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sr: Option<f64>,
    /// Satisfied over total goal conditions, summed across episodes.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hlp_acc_static: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hlp_acc_dynamic: Option<DynamicBounds>,
}

pub const UPPER_BOUND_NOTE: &str = "hlp_acc_dynamic.upper scores an episode 1 when its executed subgoals form a \
non-empty prefix of the gold plan (or its full predicted plan matches gold), else 0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_task_type: BTreeMap<TaskType, Metrics>,
    pub config_fingerprint: String,
    /// Success rate when executing the gold plans directly. A simulator
    /// diagnostic, not a planner metric.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic_oracle_executed: Option<f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("trace and task ids differ: missing traces {missing:?}, unknown traces {unknown:?}")]
    MismatchedIds { missing: Vec<String>, unknown: Vec<String> },
}

/// SHA-256 of the canonical JSON of `config`.
pub fn config_fingerprint<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

fn align<'t, T>(
    items: &'t [T],
    id: impl Fn(&T) -> &str,
    tasks: &'t [TaskInstance],
) -> Result<Vec<(&'t T, &'t TaskInstance)>, EvalError> {
    let by_id: HashMap<&str, &TaskInstance> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let seen: BTreeSet<&str> = items.iter().map(&id).collect();
    let unknown: Vec<String> = seen.iter().filter(|i| !by_id.contains_key(*i)).map(|s| s.to_string()).collect();
    let missing: Vec<String> = tasks.iter().filter(|t| !seen.contains(t.id.as_str())).map(|t| t.id.clone()).collect();
    if !unknown.is_empty() || !missing.is_empty() || seen.len() != items.len() {
        return Err(EvalError::MismatchedIds { missing, unknown });
    }
    Ok(items.iter().map(|x| (x, by_id[id(x)])).collect())
}

fn episode_metrics(rows: &[(&EpisodeSummary, &TaskInstance)]) -> Metrics {
    let n = rows.len();
    if n == 0 {
        return Metrics::default();
    }
    let successes = rows.iter().filter(|(s, _)| s.success).count();
    let satisfied: usize = rows.iter().map(|(s, _)| s.gc_satisfied).sum();
    let total: usize = rows.iter().map(|(s, _)| s.gc_total).sum();
    let pairs: Vec<(&EpisodeSummary, &HighLevelPlan)> = rows.iter().map(|(s, t)| (*s, &t.gold_hlp)).collect();
    Metrics {
        episodes: n,
        sr: Some(successes as f64 / n as f64),
        gc: Some(if total == 0 { 0.0 } else { satisfied as f64 / total as f64 }),
        hlp_acc_static: None,
        hlp_acc_dynamic: Some(hlp_accuracy_dynamic(&pairs)),
    }
}

fn by_type<'a, T>(rows: &[(&'a T, &'a TaskInstance)]) -> BTreeMap<TaskType, Vec<(&'a T, &'a TaskInstance)>> {
    let mut groups: BTreeMap<TaskType, Vec<_>> = BTreeMap::new();
    for &(x, t) in rows {
        groups.entry(t.task_type).or_default().push((x, t));
    }
    groups
}

/// SR, GC and dynamic plan-accuracy bounds over episode summaries.
pub fn compute_report(
    summaries: &[EpisodeSummary],
    tasks: &[TaskInstance],
    fingerprint: impl Into<String>,
) -> Result<MetricReport, EvalError> {
    let rows = align(summaries, |s| s.task_id.as_str(), tasks)?;
    Ok(MetricReport {
        overall: episode_metrics(&rows),
        per_task_type: by_type(&rows).into_iter().map(|(k, v)| (k, episode_metrics(&v))).collect(),
        config_fingerprint: fingerprint.into(),
        diagnostic_oracle_executed: None,
        notes: vec![UPPER_BOUND_NOTE.into()],
    })
}

/// A static prediction; `None` when planning failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPrediction {
    pub task_id: String,
    pub plan: Option<HighLevelPlan>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

fn static_metrics(rows: &[(&StaticPrediction, &TaskInstance)]) -> Metrics {
    let hits = rows
        .iter()
        .filter(|(p, t)| p.plan.as_ref().is_some_and(|plan| hlp_accuracy_static(plan, &t.gold_hlp) == 1))
        .count();
    Metrics {
        episodes: rows.len(),
        hlp_acc_static: Some(if rows.is_empty() { 0.0 } else { hits as f64 / rows.len() as f64 }),
        ..Default::default()
    }
}

/// Exact-match plan accuracy; failed predictions count as misses.
pub fn compute_static_report(
    predictions: &[StaticPrediction],
    tasks: &[TaskInstance],
    fingerprint: impl Into<String>,
) -> Result<MetricReport, EvalError> {
    let rows = align(predictions, |p| p.task_id.as_str(), tasks)?;
    Ok(MetricReport {
        overall: static_metrics(&rows),
        per_task_type: by_type(&rows).into_iter().map(|(k, v)| (k, static_metrics(&v))).collect(),
        config_fingerprint: fingerprint.into(),
        diagnostic_oracle_executed: None,
        notes: Vec::new(),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned-column table, one row per task type plus the total.
    pub fn to_table(&self) -> String {
        let header = ["split", "n", "SR", "GC", "HLP static", "HLP dyn lower", "HLP dyn upper"];
        let row = |name: &str, m: &Metrics| {
            vec![
                name.to_string(),
                m.episodes.to_string(),
                fmt_opt(m.sr),
                fmt_opt(m.gc),
                fmt_opt(m.hlp_acc_static),
                fmt_opt(m.hlp_acc_dynamic.map(|b| b.lower)),
                fmt_opt(m.hlp_acc_dynamic.map(|b| b.upper)),
            ]
        };
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        rows.extend(self.per_task_type.iter().map(|(t, m)| row(t.as_str(), m)));
        rows.push(row("all", &self.overall));
        let widths: Vec<usize> = (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap()).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        if let Some(d) = self.diagnostic_oracle_executed {
            let _ = writeln!(out, "diagnostic (not a planner metric): gold plans executed SR {d:.4}");
        }
        out
    }
}

/// One CSV row per episode.
pub fn episodes_csv(summaries: &[EpisodeSummary], tasks: &[TaskInstance]) -> Result<String, EvalError> {
    let rows = align(summaries, |s| s.task_id.as_str(), tasks)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "task_id", "task_type", "success", "gc_satisfied", "gc_total", "steps", "replans", "end_reason", "hlp_lower", "hlp_upper",
    ])
    .expect("in-memory write");
    for (s, t) in rows {
        let (lo, up) = dynamic_hits(s, &t.gold_hlp);
        w.write_record([
            s.task_id.clone(),
            s.task_type.to_string(),
            s.success.to_string(),
            s.gc_satisfied.to_string(),
            s.gc_total.to_string(),
            s.steps.to_string(),
            s.replans.to_string(),
            format!("{:?}", s.end_reason),
            lo.to_string(),
            up.to_string(),
        ])
        .expect("in-memory write");
    }
    Ok(String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"))
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool")
}

/// Runs every task in its scene, in task order.
pub fn run_episodes(
    tasks: &[TaskInstance],
    scenes: &BTreeMap<String, Scene>,
    planner: &dyn HighLevelPlanner,
    cfg: &EpisodeConfig,
    jobs: usize,
) -> Vec<Result<EpisodeTrace, EpisodeError>> {
    pool(jobs).install(|| {
        tasks
            .par_iter()
            .map(|t| {
                let scene = scenes.get(&t.scene_id).ok_or_else(|| EpisodeError::SceneMismatch {
                    task: t.id.clone(),
                    expected: t.scene_id.clone(),
                    got: "<none>".into(),
                })?;
                run_episode(t, scene, planner, cfg)
            })
            .collect()
    })
}

/// Success rate of executing each task's gold plan without re-planning.
pub fn oracle_executed_rate(tasks: &[TaskInstance], scenes: &BTreeMap<String, Scene>, cfg: &EpisodeConfig) -> f64 {
    if tasks.is_empty() {
        return 0.0;
    }
    let cfg = EpisodeConfig { dynamic: false, ..cfg.clone() };
    let ok = tasks
        .iter()
        .filter(|t| {
            let planner = FixedPlanner::new(vec![t.gold_hlp.clone()]);
            scenes
                .get(&t.scene_id)
                .and_then(|s| run_episode(t, s, &planner, &cfg).ok())
                .is_some_and(|tr| tr.summary.success)
        })
        .count();
    ok as f64 / tasks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    #[default]
    Knn,
    Random,
}

/// A named prompt configuration to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub selector: SelectorMode,
    #[serde(default)]
    pub seed: u64,
}

impl Variant {
    pub fn new(name: impl Into<String>, prompt: PromptConfig) -> Self {
        Self { name: name.into(), prompt, selector: SelectorMode::Knn, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFault {
    pub example_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub name: String,
    pub score: f64,
    pub correct: usize,
    pub folds: usize,
    pub faults: Vec<FoldFault>,
}

/// Builds a planner for one variant over one training fold.
pub trait PlannerFactory: Sync {
    fn build(&self, variant: &Variant, train: Vec<TaskInstance>) -> Box<dyn HighLevelPlanner>;
}

impl<F> PlannerFactory for F
where
    F: Fn(&Variant, Vec<TaskInstance>) -> Box<dyn HighLevelPlanner> + Sync,
{
    fn build(&self, variant: &Variant, train: Vec<TaskInstance>) -> Box<dyn HighLevelPlanner> {
        self(variant, train)
    }
}

/// Leave-one-out plan accuracy of one variant.
pub fn loocv_score(corpus: &[TaskInstance], variant: &Variant, factory: &dyn PlannerFactory, jobs: usize) -> VariantScore {
    let outcomes: Vec<Result<bool, FoldFault>> = pool(jobs).install(|| {
        (0..corpus.len())
            .into_par_iter()
            .map(|i| {
                let held = &corpus[i];
                let train: Vec<TaskInstance> =
                    corpus.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
                let planner = factory.build(variant, train);
                let mut state = PlannerState::new(held.id.clone(), held.instruction.clone());
                planner
                    .plan(&mut state)
                    .map(|p| hlp_accuracy_static(&p, &held.gold_hlp) == 1)
                    .map_err(|e| FoldFault { example_id: held.id.clone(), error: e.to_string() })
            })
            .collect()
    });
    let correct = outcomes.iter().filter(|o| matches!(o, Ok(true))).count();
    let faults = outcomes.into_iter().filter_map(Result::err).collect();
    VariantScore {
        name: variant.name.clone(),
        score: if corpus.is_empty() { 0.0 } else { correct as f64 / corpus.len() as f64 },
        correct,
        folds: corpus.len(),
        faults,
    }
}

/// Scores every variant and ranks them by score; ties keep declaration order.
pub fn loocv(corpus: &[TaskInstance], variants: &[Variant], factory: &dyn PlannerFactory, jobs: usize) -> Vec<VariantScore> {
    assert!(corpus.len() >= 2, "leave-one-out needs at least two examples");
    let mut scores: Vec<VariantScore> = variants.iter().map(|v| loocv_score(corpus, v, factory, jobs)).collect();
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    scores
}

/// Leave-one-out accuracy with the example selector set to `mode`.
pub fn knn_ablation(
    corpus: &[TaskInstance],
    base: &Variant,
    mode: SelectorMode,
    seed: u64,
    factory: &dyn PlannerFactory,
    jobs: usize,
) -> VariantScore {
    let variant = Variant {
        name: format!("{}[{mode:?}]", base.name),
        selector: mode,
        seed,
        ..base.clone()
    };
    loocv_score(corpus, &variant, factory, jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub train_size: usize,
    pub score: f64,
    pub faults: usize,
}

/// Leave-one-out accuracy over the grid `ks × train_sizes`. Each training
/// subset is a stratified sample of `corpus` drawn with `seed`.
pub fn sweep(
    corpus: &[TaskInstance],
    base: &Variant,
    ks: &[usize],
    train_sizes: &[usize],
    seed: u64,
    factory: &dyn PlannerFactory,
    jobs: usize,
) -> Result<Vec<SweepCell>, crate::dataset::DatasetError> {
    let mut cells = Vec::new();
    for &n in train_sizes {
        let subset = stratified_sample(corpus, n.min(corpus.len()), seed)?;
        for &k in ks {
            let variant = Variant {
                name: format!("{}[k={k},n={n}]", base.name),
                prompt: PromptConfig { k, ..base.prompt.clone() },
                ..base.clone()
            };
            let s = loocv_score(&subset, &variant, factory, jobs);
            cells.push(SweepCell { k, train_size: n, score: s.score, faults: s.faults.len() });
        }
    }
    Ok(cells)
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
