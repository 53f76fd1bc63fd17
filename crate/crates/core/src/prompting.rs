//! Prompt text and logit-bias construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::{Tokenizer, TokenizerError};
use crate::hlp::serialize_hlp;
use crate::types::{HighLevelAction, HighLevelPlan, Instruction, ObjectClass, ObjectVocabulary, TaskInstance};

pub const TASK_INTRODUCTION: &str =
    "Create a high-level plan for completing a household task using the allowed actions and visible objects.";
pub const RETRIEVAL_MESSAGE: &str = "Next plan:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleOrder {
    /// Most similar example adjacent to the test block.
    #[default]
    NearestLast,
    NearestFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanningMode {
    /// One plan up front, no observations in the prompt.
    Static,
    /// Observed objects in the prompt and re-planning during execution.
    #[default]
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    pub use_steps: bool,
    pub k: usize,
    pub example_order: ExampleOrder,
    pub mode: PlanningMode,
    pub logit_bias_value: f64,
    pub allowed_actions: Vec<HighLevelAction>,
    pub temperature: f64,
    pub stop_sequence: String,
    pub max_tokens: u32,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            use_steps: false,
            k: 9,
            example_order: ExampleOrder::NearestLast,
            mode: PlanningMode::Dynamic,
            logit_bias_value: 0.1,
            allowed_actions: HighLevelAction::ALL.to_vec(),
            temperature: 0.0,
            stop_sequence: "\n".into(),
            max_tokens: 128,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.logit_bias_value >= 0.0 && self.logit_bias_value.is_finite()) {
            return Err(format!("logit_bias_value must be finite and >= 0, got {}", self.logit_bias_value));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        if self.allowed_actions.is_empty() {
            return Err("allowed_actions is empty".into());
        }
        if self.stop_sequence.is_empty() {
            return Err("stop_sequence is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningContext {
    pub instruction: Instruction,
    pub completed: HighLevelPlan,
    /// Sorted, deduplicated.
    pub observed_objects: Vec<ObjectClass>,
}

impl PlanningContext {
    pub fn new(instruction: Instruction, completed: HighLevelPlan, observed: impl IntoIterator<Item = ObjectClass>) -> Self {
        let observed_objects: BTreeSet<ObjectClass> = observed.into_iter().collect();
        Self {
            instruction,
            completed,
            observed_objects: observed_objects.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub text: String,
    pub logit_bias: BTreeMap<String, f64>,
    pub temperature: f64,
    pub stop: String,
    pub max_tokens: u32,
}

fn render_objects(objects: &[ObjectClass]) -> String {
    objects
        .iter()
        .map(|o| o.as_str().to_lowercase())
        .collect::<Vec<_>>()
        .join(", ")
}

/// `label` followed by `value`, with no trailing space when `value` is empty.
fn line(out: &mut String, label: &str, value: &str) {
    if value.is_empty() {
        let _ = writeln!(out, "{label}");
    } else {
        let _ = writeln!(out, "{label} {value}");
    }
}

fn task_block(out: &mut String, instruction: &Instruction, use_steps: bool) {
    line(out, "Task description:", &instruction.goal);
    if use_steps {
        if let Some(steps) = instruction.steps_line() {
            line(out, "Step-by-step instructions:", &steps);
        }
    }
}

/// Renders the prompt text only.
pub fn render_prompt(ctx: &PlanningContext, examples: &[&TaskInstance], cfg: &PromptConfig) -> String {
    let mut out = String::new();
    let actions: Vec<&str> = cfg.allowed_actions.iter().map(|a| a.as_str()).collect();
    let _ = write!(out, "{TASK_INTRODUCTION}\n\nAllowed actions are {}\n\n", actions.join(", "));
    for ex in examples {
        task_block(&mut out, &ex.instruction, cfg.use_steps);
        line(&mut out, "Completed plans:", "");
        line(&mut out, RETRIEVAL_MESSAGE, &serialize_hlp(&ex.gold_hlp));
        out.push('\n');
    }
    task_block(&mut out, &ctx.instruction, cfg.use_steps);
    line(&mut out, "Completed plans:", &serialize_hlp(&ctx.completed));
    if cfg.mode == PlanningMode::Dynamic {
        line(&mut out, "Visible objects are", &render_objects(&ctx.observed_objects));
    }
    out.push_str(RETRIEVAL_MESSAGE);
    out
}

/// Every token of the allowed actions and of the objects in scope maps to
/// `cfg.logit_bias_value`. In scope means the observed objects in dynamic
/// mode and the whole vocabulary in static mode.
pub fn build_logit_bias(
    ctx: &PlanningContext,
    cfg: &PromptConfig,
    tokenizer: &dyn Tokenizer,
    vocabulary: &ObjectVocabulary,
) -> Result<BTreeMap<String, f64>, TokenizerError> {
    let objects: Vec<&ObjectClass> = match cfg.mode {
        PlanningMode::Dynamic => ctx.observed_objects.iter().collect(),
        PlanningMode::Static => vocabulary.classes().iter().collect(),
    };
    let names = cfg
        .allowed_actions
        .iter()
        .map(|a| a.as_str())
        .chain(objects.into_iter().map(|o| o.as_str()));
    let mut bias = BTreeMap::new();
    for name in names {
        for token in tokenizer.tokenize(name)? {
            bias.insert(token, cfg.logit_bias_value);
        }
    }
    Ok(bias)
}

pub fn build_prompt(
    ctx: &PlanningContext,
    examples: &[&TaskInstance],
    cfg: &PromptConfig,
    tokenizer: &dyn Tokenizer,
    vocabulary: &ObjectVocabulary,
) -> Result<PromptSpec, TokenizerError> {
    Ok(PromptSpec {
        text: render_prompt(ctx, examples, cfg),
        logit_bias: build_logit_bias(ctx, cfg, tokenizer, vocabulary)?,
        temperature: cfg.temperature,
        stop: cfg.stop_sequence.clone(),
        max_tokens: cfg.max_tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::WhitespaceTokenizer;
    use crate::hlp::parse_hlp;
    use crate::types::TaskType;

    fn ctx(goal: &str) -> PlanningContext {
        PlanningContext::new(Instruction::new(goal), HighLevelPlan::empty(), [])
    }

    #[test]
    fn zero_examples_cook_a_potato() {
        let text = render_prompt(&ctx("cook a potato"), &[], &PromptConfig::default());
        assert!(text.starts_with(TASK_INTRODUCTION));
        assert!(text.contains("\nTask description: cook a potato\n"));
        assert!(text.ends_with("\nNext plan:"));
        assert!(text.contains(
            "Allowed actions are Navigation, PickupObject, PutObject, OpenObject, CloseObject, ToggleOnObject, ToggleOffObject, SliceObject\n"
        ));
    }

    #[test]
    fn steps_line_only_when_enabled() {
        let mut c = ctx("put a mug in the cabinet");
        c.instruction = Instruction::with_steps("put a mug in the cabinet", vec!["Go to the mug.".into(), "Pick it up".into()]);
        let cfg = PromptConfig::default();
        assert!(!render_prompt(&c, &[], &cfg).contains("Step-by-step"));
        let cfg = PromptConfig { use_steps: true, ..cfg };
        assert!(render_prompt(&c, &[], &cfg).contains("\nStep-by-step instructions: Go to the mug. Pick it up\n"));
    }

    #[test]
    fn visible_objects_only_in_dynamic_mode() {
        let c = PlanningContext::new(
            Instruction::new("g"),
            parse_hlp("Navigation Fridge").unwrap(),
            [ObjectClass::new("SinkBasin"), ObjectClass::new("Fridge"), ObjectClass::new("Fridge")],
        );
        let dynamic = render_prompt(&c, &[], &PromptConfig::default());
        assert!(dynamic.ends_with("Completed plans: Navigation Fridge\nVisible objects are fridge, sinkbasin\nNext plan:"));
        let stat = render_prompt(&c, &[], &PromptConfig { mode: PlanningMode::Static, ..Default::default() });
        assert!(!stat.contains("Visible objects"));
        let empty = render_prompt(&ctx("g"), &[], &PromptConfig::default());
        assert!(empty.ends_with("Completed plans:\nVisible objects are\nNext plan:"));
    }

    #[test]
    fn examples_show_full_gold_as_next_plan() {
        let ex = TaskInstance {
            id: "e1".into(),
            task_type: TaskType::PickAndPlace,
            instruction: Instruction::new("put an apple in the fridge"),
            gold_hlp: parse_hlp("Navigation Apple, PickupObject Apple").unwrap(),
            scene_id: "s".into(),
            goal_conditions: vec![],
        };
        let text = render_prompt(&ctx("q"), &[&ex], &PromptConfig::default());
        assert!(text.contains(
            "Task description: put an apple in the fridge\nCompleted plans:\nNext plan: Navigation Apple, PickupObject Apple\n\nTask description: q\n"
        ));
        assert_eq!(text.matches(RETRIEVAL_MESSAGE).count(), 2);
    }

    #[test]
    fn logit_bias_key_sets() {
        let tok = WhitespaceTokenizer;
        let vocab = ObjectVocabulary::builtin();
        let cfg = PromptConfig::default();
        let c = PlanningContext::new(Instruction::new("g"), HighLevelPlan::empty(), [ObjectClass::new("Fridge")]);
        let bias = build_logit_bias(&c, &cfg, &tok, vocab).unwrap();
        let mut expected: BTreeMap<String, f64> =
            HighLevelAction::ALL.iter().map(|a| (a.as_str().to_string(), 0.1)).collect();
        expected.insert("Fridge".into(), 0.1);
        assert_eq!(bias, expected);

        assert_eq!(build_logit_bias(&ctx("g"), &cfg, &tok, vocab).unwrap().len(), 8);

        let thirty = ObjectVocabulary::new(vocab.classes().iter().take(30).map(|c| c.as_str().to_string()));
        let stat = PromptConfig { mode: PlanningMode::Static, ..cfg };
        assert_eq!(build_logit_bias(&c, &stat, &tok, &thirty).unwrap().len(), 38);
    }
}
