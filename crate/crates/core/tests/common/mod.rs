//! Prompt cases shared by the golden-file tests and the acceptance suite.

use std::path::{Path, PathBuf};

use llm_planner::dataset::load_dataset;
use llm_planner::hlp::parse_hlp;
use llm_planner::planner::ExampleSelector;
use llm_planner::prompting::{render_prompt, PlanningContext, PlanningMode, PromptConfig};
use llm_planner::retriever::LexicalEmbedder;
use llm_planner::sim::GoalCondition;
use llm_planner::types::{HighLevelPlan, Instruction, ObjectClass, TaskInstance, TaskType};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/prompts").join(format!("{name}.txt"))
}

pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn example(goal: &str, steps: &[&str], plan: &str) -> TaskInstance {
    TaskInstance {
        id: goal.replace(' ', "_"),
        task_type: TaskType::PickAndPlace,
        instruction: Instruction::with_steps(goal, steps.iter().map(|s| s.to_string()).collect()),
        gold_hlp: parse_hlp(plan).unwrap(),
        scene_id: "s".into(),
        goal_conditions: vec![GoalCondition::ObjectSliced { object: ObjectClass::new("Apple") }],
    }
}

fn two_examples() -> Vec<TaskInstance> {
    vec![
        example(
            "put a mug in the cabinet",
            &["Go to the mug.", "Pick up the mug.", "Go to the cabinet.", "Open the cabinet.", "Put it in the cabinet."],
            "Navigation Mug, PickupObject Mug, Navigation Cabinet, OpenObject Cabinet, PutObject Cabinet",
        ),
        example(
            "heat an apple and leave it on the counter",
            &["Go to the apple.", "Pick up the apple.", "Go to the microwave.", "Heat it.", "Put it on the counter."],
            "Navigation Apple, PickupObject Apple, Navigation Microwave, OpenObject Microwave, PutObject Microwave, \
             CloseObject Microwave, ToggleOnObject Microwave, ToggleOffObject Microwave, OpenObject Microwave, \
             PickupObject Apple, Navigation CounterTop, PutObject CounterTop",
        ),
    ]
}

fn cook() -> Instruction {
    Instruction::with_steps(
        "cook a potato",
        vec!["Find a potato.".into(), "Put it in the microwave.".into(), "Turn the microwave on and off.".into()],
    )
}

fn cfg(mode: PlanningMode, use_steps: bool) -> PromptConfig {
    PromptConfig { mode, use_steps, ..Default::default() }
}

fn render(ctx: PlanningContext, examples: &[TaskInstance], mode: PlanningMode, use_steps: bool) -> String {
    let refs: Vec<&TaskInstance> = examples.iter().collect();
    render_prompt(&ctx, &refs, &cfg(mode, use_steps))
}

/// (fixture name, rendered prompt) for every golden case.
pub fn prompt_cases() -> Vec<(&'static str, String)> {
    let empty = || PlanningContext::new(cook(), HighLevelPlan::empty(), []);
    let replan = PlanningContext::new(
        cook(),
        parse_hlp("Navigation Potato, PickupObject Potato").unwrap(),
        ["Microwave", "Fridge", "CounterTop", "Potato", "Fridge"].map(ObjectClass::new),
    );

    let train = load_dataset(&assets_dir().join("train.jsonl")).unwrap();
    let instruction = Instruction::new("put a chilled tomato on the dining table");
    let selector = ExampleSelector::knn(LexicalEmbedder::default());
    let nine: Vec<TaskInstance> = selector.select(&instruction, &train, 9, false).unwrap().into_iter().cloned().collect();
    assert_eq!(nine.len(), 9);
    let grounded = PlanningContext::new(instruction, HighLevelPlan::empty(), ["DiningTable", "Fridge"].map(ObjectClass::new));

    vec![
        ("static_goal_only", render(empty(), &two_examples(), PlanningMode::Static, false)),
        ("static_with_steps", render(empty(), &two_examples(), PlanningMode::Static, true)),
        ("dynamic_initial_no_objects", render(empty(), &[], PlanningMode::Dynamic, false)),
        (
            "dynamic_replan_with_completed_and_visible",
            render(replan, &two_examples(), PlanningMode::Dynamic, true),
        ),
        ("dynamic_nine_retrieved_examples", render(grounded, &nine, PlanningMode::Dynamic, false)),
    ]
}
