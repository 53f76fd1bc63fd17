//! Domain types shared by every stage of the pipeline: high-level actions,
//! object classes, subgoals, plans, instructions and task instances.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sim::GoalCondition;

/// The abstract actions a high-level plan may use: one navigation action
/// and seven object interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HighLevelAction {
    Navigation,
    PickupObject,
    PutObject,
    OpenObject,
    CloseObject,
    ToggleOnObject,
    ToggleOffObject,
    SliceObject,
}

impl HighLevelAction {
    pub const ALL: [HighLevelAction; 8] = [
        HighLevelAction::Navigation,
        HighLevelAction::PickupObject,
        HighLevelAction::PutObject,
        HighLevelAction::OpenObject,
        HighLevelAction::CloseObject,
        HighLevelAction::ToggleOnObject,
        HighLevelAction::ToggleOffObject,
        HighLevelAction::SliceObject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HighLevelAction::Navigation => "Navigation",
            HighLevelAction::PickupObject => "PickupObject",
            HighLevelAction::PutObject => "PutObject",
            HighLevelAction::OpenObject => "OpenObject",
            HighLevelAction::CloseObject => "CloseObject",
            HighLevelAction::ToggleOnObject => "ToggleOnObject",
            HighLevelAction::ToggleOffObject => "ToggleOffObject",
            HighLevelAction::SliceObject => "SliceObject",
        }
    }

    /// Case-insensitive, whitespace-trimmed lookup.
    pub fn parse(name: &str) -> Option<Self> {
        let name = name.trim();
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(name))
    }

    pub fn is_interaction(self) -> bool {
        self != HighLevelAction::Navigation
    }
}

impl fmt::Display for HighLevelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HighLevelAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s).ok_or_else(|| s.to_string())
    }
}

impl Serialize for HighLevelAction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for HighLevelAction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Self::parse(&raw)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown action {raw:?}")))
    }
}

/// A canonical CamelCase object class name such as `Fridge` or `GarbageCan`.
///
/// Values are normally obtained through an [`ObjectVocabulary`] so that
/// spelling and case are canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectClass(String);

impl ObjectClass {
    /// Wraps a name verbatim. Prefer [`ObjectVocabulary::resolve`] for user
    /// or model supplied text.
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Human-readable lowercase words, e.g. `GarbageCan` -> `garbage can`.
    pub fn natural_name(&self) -> String {
        let mut out = String::new();
        for (i, ch) in self.0.chars().enumerate() {
            if ch.is_uppercase() && i > 0 {
                out.push(' ');
            }
            out.extend(ch.to_lowercase());
        }
        out
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const BUILTIN_CLASSES: &[&str] = &[
    "AlarmClock", "Apple", "ArmChair", "Bathtub", "BathtubBasin", "Bed", "Book", "Bowl", "Box",
    "Bread", "ButterKnife", "Cabinet", "Candle", "Cart", "CellPhone", "Cloth", "CoffeeMachine",
    "CoffeeTable", "CounterTop", "CreditCard", "Cup", "Desk", "DeskLamp", "DiningTable",
    "DishSponge", "Drawer", "Dresser", "Egg", "Faucet", "FloorLamp", "Fork", "Fridge",
    "GarbageCan", "GlassBottle", "HandTowel", "Kettle", "KeyChain", "Knife", "Ladle", "Laptop",
    "Lettuce", "Microwave", "Mug", "Newspaper", "Ottoman", "Pan", "Pen", "Pencil", "PepperShaker",
    "Pillow", "Plate", "Plunger", "Pot", "Potato", "RecycleBin", "RemoteControl", "SaltShaker",
    "Shelf", "SideTable", "Sink", "SinkBasin", "Sofa", "Spatula", "Spoon", "SprayBottle", "Statue",
    "StoveBurner", "TableLamp", "TissueBox", "Toilet", "ToiletPaper", "Tomato", "Vase", "Watch",
    "WateringCan", "WineBottle",
];

/// Registry of known object classes with case-insensitive lookup.
#[derive(Debug, Clone)]
pub struct ObjectVocabulary {
    classes: Vec<ObjectClass>,
    by_key: HashMap<String, usize>,
}

impl ObjectVocabulary {
    /// Builds a vocabulary; duplicate names (ignoring case) are collapsed to
    /// the first spelling.
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut classes = Vec::new();
        let mut by_key = HashMap::new();
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                continue;
            }
            let key = name.to_lowercase();
            if by_key.contains_key(&key) {
                continue;
            }
            by_key.insert(key, classes.len());
            classes.push(ObjectClass::new(name));
        }
        classes.sort();
        let by_key = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str().to_lowercase(), i))
            .collect();
        Self { classes, by_key }
    }

    /// The household object vocabulary bundled with the simulator.
    pub fn builtin() -> &'static ObjectVocabulary {
        static VOCAB: OnceLock<ObjectVocabulary> = OnceLock::new();
        VOCAB.get_or_init(|| ObjectVocabulary::new(BUILTIN_CLASSES))
    }

    pub fn resolve(&self, name: &str) -> Option<ObjectClass> {
        self.by_key
            .get(&name.trim().to_lowercase())
            .map(|&i| self.classes[i].clone())
    }

    pub fn contains(&self, class: &ObjectClass) -> bool {
        self.resolve(class.as_str()).as_ref() == Some(class)
    }

    /// All classes, sorted by canonical name.
    pub fn classes(&self) -> &[ObjectClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// One `(high-level action, object)` step of a plan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub action: HighLevelAction,
    pub object: ObjectClass,
}

impl Subgoal {
    pub fn new(action: HighLevelAction, object: ObjectClass) -> Self {
        Self { action, object }
    }
}

impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.action, self.object)
    }
}

/// An ordered sequence of subgoals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HighLevelPlan(pub Vec<Subgoal>);

impl HighLevelPlan {
    pub fn new(subgoals: Vec<Subgoal>) -> Self {
        Self(subgoals)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn subgoals(&self) -> &[Subgoal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, subgoal: Subgoal) {
        self.0.push(subgoal);
    }

    pub fn is_prefix_of(&self, other: &HighLevelPlan) -> bool {
        other.0.starts_with(&self.0)
    }

    /// `self ++ rest`.
    pub fn concat(&self, rest: &HighLevelPlan) -> HighLevelPlan {
        let mut out = self.0.clone();
        out.extend(rest.0.iter().cloned());
        HighLevelPlan(out)
    }

    /// Every object class mentioned by the plan.
    pub fn objects(&self) -> impl Iterator<Item = &ObjectClass> {
        self.0.iter().map(|s| &s.object)
    }
}

impl fmt::Display for HighLevelPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::hlp::serialize_hlp(self))
    }
}

impl FromIterator<Subgoal> for HighLevelPlan {
    fn from_iter<T: IntoIterator<Item = Subgoal>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A goal instruction with optional step-by-step instructions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub goal: String,
    #[serde(default)]
    pub steps: Option<Vec<String>>,
}

impl Instruction {
    pub fn new(goal: impl Into<String>) -> Self {
        Self {
            goal: goal.into(),
            steps: None,
        }
    }

    pub fn with_steps(goal: impl Into<String>, steps: Vec<String>) -> Self {
        Self {
            goal: goal.into(),
            steps: Some(steps),
        }
    }

    /// Step-by-step instructions joined into a single line, or `None` when
    /// the instruction has none.
    pub fn steps_line(&self) -> Option<String> {
        let steps = self.steps.as_ref()?;
        let sentences: Vec<&str> = steps
            .iter()
            .map(|s| s.trim().trim_end_matches('.').trim_end())
            .filter(|s| !s.is_empty())
            .collect();
        if sentences.is_empty() {
            None
        } else {
            Some(sentences.join(". "))
        }
    }

    /// Text used for similarity search: the goal, optionally followed by the
    /// step-by-step instructions.
    pub fn query_text(&self, use_steps: bool) -> String {
        match (use_steps, self.steps_line()) {
            (true, Some(steps)) => format!("{} {}", self.goal.trim(), steps),
            _ => self.goal.trim().to_string(),
        }
    }
}

/// The seven household task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskType {
    PickAndPlace,
    StackAndPlace,
    PlaceTwo,
    Examine,
    HeatAndPlace,
    CoolAndPlace,
    CleanAndPlace,
}

impl TaskType {
    pub const ALL: [TaskType; 7] = [
        TaskType::PickAndPlace,
        TaskType::StackAndPlace,
        TaskType::PlaceTwo,
        TaskType::Examine,
        TaskType::HeatAndPlace,
        TaskType::CoolAndPlace,
        TaskType::CleanAndPlace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::PickAndPlace => "PickAndPlace",
            TaskType::StackAndPlace => "StackAndPlace",
            TaskType::PlaceTwo => "PlaceTwo",
            TaskType::Examine => "Examine",
            TaskType::HeatAndPlace => "HeatAndPlace",
            TaskType::CoolAndPlace => "CoolAndPlace",
            TaskType::CleanAndPlace => "CleanAndPlace",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == name.trim())
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One paired `(instruction, plan)` example together with the information
/// needed to run it in the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task_type: TaskType,
    pub instruction: Instruction,
    pub gold_hlp: HighLevelPlan,
    pub scene_id: String,
    pub goal_conditions: Vec<GoalCondition>,
}
