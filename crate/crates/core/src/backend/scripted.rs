use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{truncate_at_stop, BackendError, CompletionRequest, LlmBackend, TokenizerRef, WhitespaceTokenizer};
use crate::hlp::{parse_hlp, serialize_hlp};
use crate::types::{HighLevelPlan, TaskInstance};

/// The test block of a prompt: the last `Task description:` and the fields
/// after it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptQuery {
    pub goal: String,
    pub completed: String,
    /// Lowercased as rendered.
    pub visible: BTreeSet<String>,
}

pub fn parse_prompt_query(prompt: &str) -> Option<PromptQuery> {
    let start = prompt.rfind("Task description:")?;
    let mut lines = prompt[start..].lines();
    let goal = lines.next()?.trim_start_matches("Task description:").trim().to_string();
    let mut q = PromptQuery { goal, ..Default::default() };
    for l in lines {
        if let Some(rest) = l.strip_prefix("Completed plans:") {
            q.completed = rest.trim().to_string();
        } else if let Some(rest) = l.strip_prefix("Visible objects are") {
            q.visible = rest
                .split(',')
                .map(|s| s.trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect();
        }
    }
    Some(q)
}

/// One scripted response. `completed: None` matches any completed prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub goal: String,
    #[serde(default)]
    pub completed: Option<String>,
    #[serde(default)]
    pub requires_visible: Vec<String>,
    #[serde(default)]
    pub prompt_contains: Option<String>,
    pub continuation: String,
}

impl ScriptRule {
    fn matches(&self, q: &PromptQuery, completed: &Option<HighLevelPlan>, prompt: &str) -> bool {
        if let Some(want) = &self.completed {
            let same = match (parse_hlp(want), completed) {
                (Ok(w), Some(c)) => &w == c,
                _ => want.trim() == q.completed,
            };
            if !same {
                return false;
            }
        }
        self.requires_visible.iter().all(|o| q.visible.contains(&o.to_lowercase()))
            && self.prompt_contains.as_ref().is_none_or(|s| prompt.contains(s.as_str()))
    }
}

/// Deterministic rule table keyed on the test block of the prompt. Rules
/// for a goal are tried in declaration order.
#[derive(Clone)]
pub struct ScriptedBackend {
    name: String,
    rules: HashMap<String, Vec<ScriptRule>>,
    tokenizer: TokenizerRef,
}

fn goal_key(goal: &str) -> String {
    goal.trim().to_lowercase()
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        let mut by_goal: HashMap<String, Vec<ScriptRule>> = HashMap::new();
        for r in rules {
            by_goal.entry(goal_key(&r.goal)).or_default().push(r);
        }
        Self {
            name: name.into(),
            rules: by_goal,
            tokenizer: Arc::new(WhitespaceTokenizer),
        }
    }

    /// Rules from a JSON array.
    pub fn from_json(name: impl Into<String>, text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(name, serde_json::from_str(text)?))
    }

    /// For every task and every prefix of its gold plan, the rest of the
    /// gold plan. Tasks sharing a goal text keep the first task's plan.
    pub fn oracle<'a>(tasks: impl IntoIterator<Item = &'a TaskInstance>) -> Self {
        let mut rules = Vec::new();
        let mut seen = BTreeSet::new();
        for t in tasks {
            if !seen.insert(goal_key(&t.instruction.goal)) {
                continue;
            }
            let gold = t.gold_hlp.subgoals();
            for i in 0..=gold.len() {
                rules.push(ScriptRule {
                    goal: t.instruction.goal.clone(),
                    completed: Some(serialize_hlp(&HighLevelPlan::new(gold[..i].to_vec()))),
                    requires_visible: vec![],
                    prompt_contains: None,
                    continuation: serialize_hlp(&HighLevelPlan::new(gold[i..].to_vec())),
                });
            }
        }
        Self::new("oracle", rules)
    }

    pub fn rule_count(&self) -> usize {
        self.rules.values().map(Vec::len).sum()
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        format!("scripted:{}", self.name)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        if req.prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let q = parse_prompt_query(&req.prompt).unwrap_or_default();
        let completed = parse_hlp(&q.completed).ok().or_else(|| q.completed.is_empty().then(HighLevelPlan::empty));
        let hit = self
            .rules
            .get(&goal_key(&q.goal))
            .and_then(|rules| rules.iter().find(|r| r.matches(&q, &completed, &req.prompt)));
        match hit {
            Some(r) => Ok(truncate_at_stop(&r.continuation, &req.stop).to_string()),
            None => Err(BackendError::NoRuleMatched { goal: q.goal, completed: q.completed }),
        }
    }

    fn tokenizer(&self) -> TokenizerRef {
        self.tokenizer.clone()
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
