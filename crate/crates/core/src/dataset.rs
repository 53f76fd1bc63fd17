//! JSONL task datasets and stratified sub-sampling.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::GoalCondition;
use crate::types::{
    HighLevelAction, HighLevelPlan, Instruction, ObjectVocabulary, Subgoal, TaskInstance, TaskType,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {cause}")]
    MalformedRecord { line: usize, cause: RecordError },
    #[error("stratum {0} is empty")]
    InsufficientData(TaskType),
    #[error("requested {requested} samples from {available} records")]
    TooFewRecords { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unknown task type {0:?}")]
    UnknownTaskType(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("empty id")]
    EmptyId,
    #[error("empty goal instruction")]
    EmptyGoal,
    #[error("empty gold plan")]
    EmptyGoldPlan,
    #[error("empty scene id")]
    EmptySceneId,
    #[error("no goal conditions")]
    NoGoalConditions,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubgoalRecord {
    action: String,
    object: String,
}

/// On-disk form of one dataset line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    id: String,
    task_type: String,
    goal: String,
    steps: Option<Vec<String>>,
    gold_hlp: Vec<SubgoalRecord>,
    scene_id: String,
    goal_conditions: Vec<GoalCondition>,
}

impl TaskRecord {
    fn into_instance(self, vocab: &ObjectVocabulary) -> Result<TaskInstance, RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyId);
        }
        let task_type =
            TaskType::parse(&self.task_type).ok_or(RecordError::UnknownTaskType(self.task_type))?;
        if self.goal.trim().is_empty() {
            return Err(RecordError::EmptyGoal);
        }
        let gold = self
            .gold_hlp
            .into_iter()
            .map(|s| {
                let action = HighLevelAction::parse(&s.action)
                    .ok_or_else(|| RecordError::UnknownAction(s.action.clone()))?;
                let object = vocab
                    .resolve(&s.object)
                    .ok_or_else(|| RecordError::UnknownObject(s.object.clone()))?;
                Ok(Subgoal::new(action, object))
            })
            .collect::<Result<HighLevelPlan, RecordError>>()?;
        if gold.is_empty() {
            return Err(RecordError::EmptyGoldPlan);
        }
        if self.scene_id.trim().is_empty() {
            return Err(RecordError::EmptySceneId);
        }
        if self.goal_conditions.is_empty() {
            return Err(RecordError::NoGoalConditions);
        }
        Ok(TaskInstance {
            id: self.id,
            task_type,
            instruction: Instruction {
                goal: self.goal,
                steps: self.steps,
            },
            gold_hlp: gold,
            scene_id: self.scene_id,
            goal_conditions: self.goal_conditions,
        })
    }

    fn from_instance(task: &TaskInstance) -> Self {
        Self {
            id: task.id.clone(),
            task_type: task.task_type.as_str().to_string(),
            goal: task.instruction.goal.clone(),
            steps: task.instruction.steps.clone(),
            gold_hlp: task
                .gold_hlp
                .subgoals()
                .iter()
                .map(|s| SubgoalRecord {
                    action: s.action.as_str().to_string(),
                    object: s.object.as_str().to_string(),
                })
                .collect(),
            scene_id: task.scene_id.clone(),
            goal_conditions: task.goal_conditions.clone(),
        }
    }
}

/// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str, vocab: &ObjectVocabulary) -> Result<Vec<TaskInstance>, DatasetError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |cause| DatasetError::MalformedRecord {
            line: idx + 1,
            cause,
        };
        let record: TaskRecord =
            serde_json::from_str(line).map_err(|e| malformed(RecordError::Json(e.to_string())))?;
        let task = record.into_instance(vocab).map_err(malformed)?;
        if !seen.insert(task.id.clone()) {
            return Err(malformed(RecordError::DuplicateId(task.id)));
        }
        out.push(task);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<TaskInstance>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, ObjectVocabulary::builtin())
}

/// Serializes tasks as JSONL, one record per line.
pub fn dataset_to_jsonl(tasks: &[TaskInstance]) -> String {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&serde_json::to_string(&TaskRecord::from_instance(task)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, tasks: &[TaskInstance]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(dataset_to_jsonl(tasks).as_bytes()).map_err(io)
}

/// Per-type sample sizes: proportional allocation by largest remainder, with
/// every present type receiving at least one sample once `n >= 7`.
fn allocate(sizes: &BTreeMap<TaskType, usize>, n: usize) -> BTreeMap<TaskType, usize> {
    let total: usize = sizes.values().sum();
    let mut quota: BTreeMap<TaskType, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&ty, &size) in sizes {
        let exact = n * size;
        quota.insert(ty, exact / total);
        remainders.push((exact % total, ty));
    }
    let assigned: usize = quota.values().sum();
    // Largest remainder first; ties go to the earlier task type.
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, ty) in remainders.iter().take(n - assigned) {
        *quota.get_mut(&ty).unwrap() += 1;
    }
    if n >= TaskType::ALL.len() {
        for ty in TaskType::ALL {
            if quota.get(&ty) == Some(&0) {
                // Take one from the type with the largest quota (earliest on ties).
                let donor = quota
                    .iter()
                    .filter(|(_, &q)| q > 1)
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .map(|(&t, _)| t);
                if let Some(donor) = donor {
                    *quota.get_mut(&donor).unwrap() -= 1;
                    *quota.get_mut(&ty).unwrap() += 1;
                }
            }
        }
    }
    quota
}

/// Draws `n` tasks with per-type counts proportional to the input. The
/// result keeps the input order and is fully determined by `(data, n, seed)`.
pub fn stratified_sample(
    data: &[TaskInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<TaskInstance>, DatasetError> {
    if n > data.len() {
        return Err(DatasetError::TooFewRecords {
            requested: n,
            available: data.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut strata: BTreeMap<TaskType, Vec<usize>> = BTreeMap::new();
    for (i, task) in data.iter().enumerate() {
        strata.entry(task.task_type).or_default().push(i);
    }
    if n >= TaskType::ALL.len() {
        if let Some(&missing) = TaskType::ALL.iter().find(|t| !strata.contains_key(t)) {
            return Err(DatasetError::InsufficientData(missing));
        }
    }
    let sizes = strata.iter().map(|(&t, v)| (t, v.len())).collect();
    let quota = allocate(&sizes, n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for (ty, mut members) in strata {
        members.shuffle(&mut rng);
        chosen.extend(members.into_iter().take(quota[&ty]));
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| data[i].clone()).collect())
}
