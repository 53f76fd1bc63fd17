//! Deterministic generator for the checked-in scenes, training corpus,
//! evaluation suite and grounding scenarios under `assets/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backend::ScriptRule;
use crate::dataset::dataset_to_jsonl;
use crate::hlp::{parse_hlp, serialize_hlp};
use crate::sim::{Facing, GoalCondition, ObjectSpec, Scene, StartPose, SCENE_FORMAT};
use crate::types::{HighLevelAction, HighLevelPlan, Instruction, ObjectClass, Subgoal, TaskInstance, TaskType};

pub const SCENE_COUNT: usize = 14;
pub const TRAIN_PER_TYPE: usize = 100;
const SIZE: i32 = 10;
const SCENE_SEED: u64 = 0x5ce4e;
const TRAIN_SEED: u64 = 0x7a41;
const SUITE_SEED: u64 = 0x5017e;

const SURFACES: &[&str] = &["CounterTop", "DiningTable", "Shelf", "SideTable", "Desk"];
const CLOSED: &[&str] = &["Cabinet", "Drawer", "Fridge"];

/// (class, instances, sliceable, receptacle)
const PORTABLES: &[(&str, usize, bool, bool)] = &[
    ("Apple", 2, true, false),
    ("Potato", 1, true, false),
    ("Tomato", 1, true, false),
    ("Bread", 1, true, false),
    ("Lettuce", 1, true, false),
    ("Egg", 1, false, false),
    ("Mug", 1, false, true),
    ("Cup", 1, false, true),
    ("Bowl", 1, false, true),
    ("Plate", 1, false, true),
    ("Knife", 1, false, false),
    ("Book", 2, false, false),
    ("Pen", 2, false, false),
    ("CellPhone", 1, false, false),
    ("KeyChain", 1, false, false),
    ("Watch", 1, false, false),
    ("RemoteControl", 1, false, false),
    ("CreditCard", 1, false, false),
    ("Spoon", 1, false, false),
];

/// Hidden distractors, one per closed container.
const HIDDEN: &[(&str, &str)] = &[("Fridge", "WineBottle"), ("Cabinet", "Vase"), ("Drawer", "Spatula")];

#[derive(Debug, Clone)]
pub struct Assets {
    pub scenes: Vec<Scene>,
    pub train: Vec<TaskInstance>,
    pub suite: Vec<TaskInstance>,
    pub scenario_scenes: Vec<Scene>,
    pub scenario_tasks: Vec<TaskInstance>,
    /// Grounded rules precede the naive ones they shadow.
    pub scenario_rules: Vec<ScriptRule>,
}

impl Assets {
    pub fn generate() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(SCENE_SEED);
        let layouts: Vec<Layout> = (0..SCENE_COUNT).map(|i| Layout::generate(i + 1, &mut rng)).collect();
        let (scenario_scenes, scenario_tasks, scenario_rules) = scenarios();
        Assets {
            scenes: layouts.iter().map(|l| l.scene.clone()).collect(),
            train: train_tasks(&layouts),
            suite: suite_tasks(&layouts),
            scenario_scenes,
            scenario_tasks,
            scenario_rules,
        }
    }

    /// Relative path and contents of every asset file.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        let mut out = Vec::new();
        for scene in &self.scenes {
            out.push((Path::new("scenes").join(format!("{}.json", scene.id)), scene.to_json() + "\n"));
        }
        out.push(("train.jsonl".into(), dataset_to_jsonl(&self.train)));
        out.push(("tasks.jsonl".into(), dataset_to_jsonl(&self.suite)));
        for scene in &self.scenario_scenes {
            out.push((
                Path::new("scenarios/scenes").join(format!("{}.json", scene.id)),
                scene.to_json() + "\n",
            ));
        }
        out.push(("scenarios/tasks.jsonl".into(), dataset_to_jsonl(&self.scenario_tasks)));
        out.push((
            "scenarios/rules.json".into(),
            serde_json::to_string_pretty(&self.scenario_rules).expect("rules serialize") + "\n",
        ));
        out
    }

    pub fn write(&self, root: &Path) -> io::Result<()> {
        for (rel, text) in self.files() {
            let path = root.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        Ok(())
    }

    pub fn scene_map(&self) -> BTreeMap<String, Scene> {
        self.scenes.iter().map(|s| (s.id.clone(), s.clone())).collect()
    }
}

/// A generated scene plus the facts task sampling needs.
struct Layout {
    scene: Scene,
    lamp: &'static str,
    /// Portable class -> container class of each instance.
    portables: BTreeMap<&'static str, Vec<&'static str>>,
}

impl Layout {
    fn generate(index: usize, rng: &mut ChaCha8Rng) -> Layout {
        let mut grid: Vec<Vec<char>> = (0..SIZE)
            .map(|r| {
                (0..SIZE)
                    .map(|c| if r == 0 || c == 0 || r == SIZE - 1 || c == SIZE - 1 { '#' } else { '.' })
                    .collect()
            })
            .collect();
        let obstacles: &[(i32, i32)] = match index % 4 {
            0 => &[],
            1 => &[(4, 4), (4, 5), (5, 4), (5, 5)],
            2 => &[(4, 3), (4, 4), (4, 5), (4, 6)],
            _ => &[(3, 5), (4, 5), (5, 5), (6, 5)],
        };
        for &(r, c) in obstacles {
            grid[r as usize][c as usize] = '#';
        }

        let mut slots: Vec<(i32, i32)> = (1..SIZE - 1)
            .flat_map(|i| [(0, i), (SIZE - 1, i), (i, 0), (i, SIZE - 1)])
            .collect();
        slots.shuffle(rng);
        let mut slots = slots.into_iter();
        let lamp = *["DeskLamp", "FloorLamp"].choose(rng).expect("non-empty");

        let mut objects = Vec::new();
        let mut surface_ids = Vec::new();
        let mut place = |spec: ObjectSpec, objects: &mut Vec<ObjectSpec>| {
            let (r, c) = slots.next().expect("enough wall slots");
            objects.push(spec.at(r, c));
        };
        for (class, n) in [("CounterTop", 2), ("DiningTable", 1), ("Shelf", 1), ("SideTable", 1), ("Desk", 1)] {
            for i in 1..=n {
                let id = format!("{class}_{i}");
                surface_ids.push((id.clone(), class));
                place(ObjectSpec::new(id, class).receptacle(), &mut objects);
            }
        }
        for class in CLOSED {
            let hidden = HIDDEN.iter().find(|(c, _)| c == class).map(|(_, h)| format!("{h}_1"));
            let spec = ObjectSpec::new(format!("{class}_1"), class).receptacle().openable(false);
            place(spec.containing(hidden), &mut objects);
        }
        place(
            ObjectSpec::new("Microwave_1", "Microwave").receptacle().openable(false).toggleable(false),
            &mut objects,
        );
        place(ObjectSpec::new(format!("{lamp}_1"), lamp).toggleable(false), &mut objects);
        place(ObjectSpec::new("GarbageCan_1", "GarbageCan").receptacle(), &mut objects);
        place(ObjectSpec::new("SinkBasin_1", "SinkBasin").receptacle(), &mut objects);
        let sink = objects.last().expect("just placed");
        let faucet = ObjectSpec::new("Faucet_1", "Faucet").toggleable(false);
        objects.push(faucet.at(sink.row.expect("placed"), sink.col.expect("placed")));

        let mut portable_specs = Vec::new();
        for &(class, n, sliceable, receptacle) in PORTABLES {
            for i in 1..=n {
                let mut spec = ObjectSpec::new(format!("{class}_{i}"), class).pickupable();
                if sliceable {
                    spec = spec.sliceable();
                }
                if receptacle {
                    spec = spec.receptacle();
                }
                portable_specs.push((class, spec));
            }
        }
        portable_specs.shuffle(rng);
        let mut portables: BTreeMap<&'static str, Vec<&'static str>> = BTreeMap::new();
        for (i, (class, spec)) in portable_specs.iter().enumerate() {
            let (surface, surface_class) = &surface_ids[i % surface_ids.len()];
            let holder = objects.iter_mut().find(|o| &o.id == surface).expect("surface exists");
            holder.contents.push(spec.id.clone());
            portables.entry(class).or_default().push(surface_class);
        }
        objects.extend(portable_specs.into_iter().map(|(_, s)| s));
        for (_, hidden) in HIDDEN {
            objects.push(ObjectSpec::new(format!("{hidden}_1"), hidden).pickupable());
        }

        let free: Vec<(i32, i32)> = (2..SIZE - 2)
            .flat_map(|r| (2..SIZE - 2).map(move |c| (r, c)))
            .filter(|&(r, c)| grid[r as usize][c as usize] == '.')
            .collect();
        let (row, col) = *free.choose(rng).expect("free cell");
        let facing = *Facing::ALL.choose(rng).expect("non-empty");
        let scene = Scene {
            format: SCENE_FORMAT,
            id: format!("kitchen_{index:02}"),
            grid: grid.into_iter().map(|r| r.into_iter().collect()).collect(),
            agent_start: StartPose { row, col, facing },
            objects,
        };
        Layout {
            scene,
            lamp,
            portables,
        }
    }

    fn containers(&self, class: &str) -> &[&'static str] {
        self.portables.get(class).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn display(class: &str) -> String {
    match class {
        "CounterTop" => "counter".into(),
        "SinkBasin" => "sink".into(),
        "RemoteControl" => "remote".into(),
        "KeyChain" => "keys".into(),
        other => ObjectClass::new(other).natural_name(),
    }
}

fn plural(class: &str) -> String {
    let name = display(class);
    if name.ends_with('o') {
        format!("{name}es")
    } else {
        format!("{name}s")
    }
}

fn indefinite(class: &str) -> String {
    let name = display(class);
    if class == "KeyChain" {
        return "the keys".into();
    }
    let article = if name.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!("{article} {name}")
}

fn prep(class: &str) -> &'static str {
    match class {
        "Cabinet" | "Drawer" | "Fridge" | "GarbageCan" | "SinkBasin" | "Microwave" | "Bowl" | "Mug" | "Cup" => "in",
        _ => "on",
    }
}

fn sg(action: HighLevelAction, class: &str) -> Subgoal {
    Subgoal::new(action, ObjectClass::new(class))
}

struct Draft {
    goal: String,
    plan: Vec<Subgoal>,
    goals: Vec<GoalCondition>,
}

impl Draft {
    fn new(goal: String) -> Self {
        Draft {
            goal,
            plan: Vec::new(),
            goals: Vec::new(),
        }
    }

    fn push(&mut self, action: HighLevelAction, class: &str) -> &mut Self {
        self.plan.push(sg(action, class));
        self
    }

    fn fetch(&mut self, class: &str) -> &mut Self {
        self.push(HighLevelAction::Navigation, class).push(HighLevelAction::PickupObject, class)
    }

    fn deliver(&mut self, receptacle: &str, open: bool) -> &mut Self {
        self.push(HighLevelAction::Navigation, receptacle);
        if open && CLOSED.contains(&receptacle) {
            self.push(HighLevelAction::OpenObject, receptacle);
        }
        self.push(HighLevelAction::PutObject, receptacle)
    }
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty choice")
}

fn in_receptacle(object: &str, receptacle: &str) -> GoalCondition {
    GoalCondition::ObjectInReceptacle {
        object: ObjectClass::new(object),
        receptacle: ObjectClass::new(receptacle),
    }
}

/// Receptacles from `candidates` that hold no instance of `object` yet.
fn targets<'a>(layout: &Layout, object: &str, candidates: &[&'a str]) -> Vec<&'a str> {
    let held: BTreeSet<&str> = layout.containers(object).iter().copied().collect();
    candidates.iter().copied().filter(|c| !held.contains(c)).collect()
}

fn with_fill(template: &str, fill: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in fill {
        out = out.replace(key, value);
    }
    out
}

fn draft_task(layout: &Layout, task_type: TaskType, rng: &mut ChaCha8Rng) -> Draft {
    use HighLevelAction::*;
    let mut receptacles: Vec<&str> = SURFACES.to_vec();
    match task_type {
        TaskType::PickAndPlace => {
            if rng.gen_bool(0.3) {
                let o = pick(rng, &["Apple", "Potato", "Tomato", "Bread", "Lettuce"]);
                let r = pick(rng, &targets(layout, o, SURFACES));
                let fill = [("{o}", display(o)), ("{p}", prep(r).into()), ("{r}", display(r))];
                let t = pick(
                    rng,
                    &[
                        "put a slice of {o} {p} the {r}",
                        "slice the {o} and place it {p} the {r}",
                        "cut up the {o} and put it {p} the {r}",
                    ],
                );
                let mut d = Draft::new(with_fill(t, &fill));
                d.fetch("Knife")
                    .push(Navigation, o)
                    .push(SliceObject, o)
                    .deliver("CounterTop", false)
                    .fetch(o)
                    .deliver(r, true);
                d.goals = vec![GoalCondition::ObjectSliced { object: ObjectClass::new(o) }, in_receptacle(o, r)];
                return d;
            }
            let o = pick(
                rng,
                &[
                    "Apple", "Potato", "Tomato", "Mug", "Cup", "Book", "CellPhone", "KeyChain", "Watch", "Pen",
                    "RemoteControl", "CreditCard", "Egg", "Spoon",
                ],
            );
            receptacles.extend(CLOSED);
            receptacles.push("GarbageCan");
            let r = pick(rng, &targets(layout, o, &receptacles));
            let fill = [
                ("{a}", indefinite(o)),
                ("{o}", display(o)),
                ("{p}", prep(r).into()),
                ("{r}", display(r)),
            ];
            let t = pick(
                rng,
                &[
                    "put {a} {p} the {r}",
                    "place {a} {p} the {r}",
                    "move the {o} to the {r}",
                    "pick up the {o} and put it {p} the {r}",
                ],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            d.fetch(o).deliver(r, true);
            d.goals = vec![in_receptacle(o, r)];
            d
        }
        TaskType::StackAndPlace => {
            let m = pick(rng, &["Bowl", "Plate"]);
            let o = pick(rng, &["Apple", "Potato", "Tomato", "Egg", "Spoon", "KeyChain", "Watch", "Pen", "CreditCard"]);
            receptacles.push("Cabinet");
            let r = pick(rng, &targets(layout, m, &receptacles));
            let fill = [
                ("{a}", indefinite(o)),
                ("{o}", display(o)),
                ("{m}", display(m)),
                ("{p}", prep(r).into()),
                ("{r}", display(r)),
            ];
            let t = pick(
                rng,
                &[
                    "put {a} {mp} the {m} and move it to the {r}",
                    "place the {m} with the {o} {p} the {r}",
                    "put the {o} {mp} a {m} {p} the {r}",
                ],
            );
            let mp = if m == "Plate" { "on" } else { "in" };
            let mut d = Draft::new(with_fill(&t.replace("{mp}", mp), &fill));
            d.fetch(o).deliver(m, false).push(PickupObject, m).deliver(r, true);
            d.goals = vec![in_receptacle(o, m), in_receptacle(m, r)];
            d
        }
        TaskType::PlaceTwo => {
            let o = pick(rng, &["Apple", "Book", "Pen"]);
            receptacles.extend(["GarbageCan", "Cabinet", "Drawer"]);
            let r = pick(rng, &targets(layout, o, &receptacles));
            let fill = [("{os}", plural(o)), ("{p}", prep(r).into()), ("{r}", display(r))];
            let t = pick(
                rng,
                &["put two {os} {p} the {r}", "place both {os} {p} the {r}", "move two {os} to the {r}"],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            d.fetch(o).deliver(r, true).fetch(o).deliver(r, false);
            d.goals = vec![GoalCondition::TwoObjectsInReceptacle {
                object: ObjectClass::new(o),
                receptacle: ObjectClass::new(r),
            }];
            d
        }
        TaskType::Examine => {
            let o = pick(
                rng,
                &["Book", "CellPhone", "Watch", "KeyChain", "RemoteControl", "CreditCard", "Pen", "Mug", "Cup", "Bowl"],
            );
            let lamp = layout.lamp;
            let fill = [("{a}", indefinite(o)), ("{o}", display(o)), ("{l}", display(lamp))];
            let t = pick(
                rng,
                &[
                    "examine {a} under the {l}",
                    "look at the {o} in the light of the {l}",
                    "pick up the {o} and turn on the {l}",
                    "inspect {a} by the light of the {l}",
                ],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            d.fetch(o).push(Navigation, lamp).push(ToggleOnObject, lamp);
            d.goals = vec![
                GoalCondition::ObjectExaminedUnderLamp { object: ObjectClass::new(o) },
                GoalCondition::ObjectToggledOn { object: ObjectClass::new(lamp) },
            ];
            d
        }
        TaskType::HeatAndPlace => {
            let o = pick(rng, &["Apple", "Potato", "Tomato", "Egg", "Bread", "Mug", "Cup", "Plate"]);
            let r = pick(rng, &targets(layout, o, SURFACES));
            let fill = [
                ("{a}", indefinite(o)),
                ("{o}", display(o)),
                ("{p}", prep(r).into()),
                ("{r}", display(r)),
            ];
            let t = pick(
                rng,
                &[
                    "put a heated {o} {p} the {r}",
                    "warm up the {o} and place it {p} the {r}",
                    "microwave the {o} then put it {p} the {r}",
                    "heat {a} and leave it {p} the {r}",
                ],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            let mw = "Microwave";
            d.fetch(o)
                .push(Navigation, mw)
                .push(OpenObject, mw)
                .push(PutObject, mw)
                .push(CloseObject, mw)
                .push(ToggleOnObject, mw)
                .push(ToggleOffObject, mw)
                .push(OpenObject, mw)
                .push(PickupObject, o)
                .deliver(r, false);
            d.goals = vec![GoalCondition::ObjectHeated { object: ObjectClass::new(o) }, in_receptacle(o, r)];
            d
        }
        TaskType::CoolAndPlace => {
            let o = pick(rng, &["Apple", "Potato", "Tomato", "Lettuce", "Bread", "Egg", "Mug", "Cup"]);
            let r = pick(rng, &targets(layout, o, SURFACES));
            let fill = [
                ("{a}", indefinite(o)),
                ("{o}", display(o)),
                ("{p}", prep(r).into()),
                ("{r}", display(r)),
            ];
            let t = pick(
                rng,
                &[
                    "put a chilled {o} {p} the {r}",
                    "cool the {o} in the fridge and put it {p} the {r}",
                    "place a cold {o} {p} the {r}",
                    "chill {a} and set it {p} the {r}",
                ],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            let f = "Fridge";
            d.fetch(o)
                .push(Navigation, f)
                .push(OpenObject, f)
                .push(PutObject, f)
                .push(CloseObject, f)
                .push(OpenObject, f)
                .push(PickupObject, o)
                .deliver(r, false);
            d.goals = vec![GoalCondition::ObjectCooled { object: ObjectClass::new(o) }, in_receptacle(o, r)];
            d
        }
        TaskType::CleanAndPlace => {
            let o = pick(rng, &["Apple", "Tomato", "Potato", "Lettuce", "Mug", "Cup", "Plate", "Bowl", "Spoon"]);
            receptacles.push("Cabinet");
            let r = pick(rng, &targets(layout, o, &receptacles));
            let fill = [
                ("{a}", indefinite(o)),
                ("{o}", display(o)),
                ("{p}", prep(r).into()),
                ("{r}", display(r)),
            ];
            let t = pick(
                rng,
                &[
                    "put a clean {o} {p} the {r}",
                    "rinse the {o} in the sink and place it {p} the {r}",
                    "wash {a} and put it {p} the {r}",
                ],
            );
            let mut d = Draft::new(with_fill(t, &fill));
            d.fetch(o)
                .deliver("SinkBasin", false)
                .push(ToggleOnObject, "Faucet")
                .push(ToggleOffObject, "Faucet")
                .push(PickupObject, o)
                .deliver(r, true);
            d.goals = vec![GoalCondition::ObjectCleaned { object: ObjectClass::new(o) }, in_receptacle(o, r)];
            d
        }
    }
}

fn step_sentence(subgoal: &Subgoal, rng: &mut ChaCha8Rng) -> String {
    use HighLevelAction::*;
    let x = display(subgoal.object.as_str());
    match subgoal.action {
        Navigation => {
            let t = pick(rng, &["Go to the {x}.", "Walk over to the {x}.", "Turn and head to the {x}."]);
            t.replace("{x}", &x)
        }
        PickupObject => format!("Pick up the {x}."),
        PutObject => format!("Put it {} the {x}.", prep(subgoal.object.as_str())),
        OpenObject => format!("Open the {x}."),
        CloseObject => format!("Close the {x}."),
        ToggleOnObject => format!("Turn on the {x}."),
        ToggleOffObject => format!("Turn off the {x}."),
        SliceObject => format!("Slice the {x} with the knife."),
    }
}

fn finish(id: String, task_type: TaskType, scene_id: &str, draft: Draft, rng: &mut ChaCha8Rng) -> TaskInstance {
    let steps = draft.plan.iter().map(|s| step_sentence(s, rng)).collect();
    TaskInstance {
        id,
        task_type,
        instruction: Instruction::with_steps(draft.goal, steps),
        gold_hlp: HighLevelPlan::new(draft.plan),
        scene_id: scene_id.to_string(),
        goal_conditions: draft.goals,
    }
}

fn type_slug(t: TaskType) -> &'static str {
    match t {
        TaskType::PickAndPlace => "pick",
        TaskType::StackAndPlace => "stack",
        TaskType::PlaceTwo => "two",
        TaskType::Examine => "examine",
        TaskType::HeatAndPlace => "heat",
        TaskType::CoolAndPlace => "cool",
        TaskType::CleanAndPlace => "clean",
    }
}

fn train_tasks(layouts: &[Layout]) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(TRAIN_SEED);
    let mut out = Vec::new();
    for task_type in TaskType::ALL {
        for i in 0..TRAIN_PER_TYPE {
            let layout = layouts.choose(&mut rng).expect("scenes exist");
            let draft = draft_task(layout, task_type, &mut rng);
            let id = format!("train_{}_{i:03}", type_slug(task_type));
            out.push(finish(id, task_type, &layout.scene.id, draft, &mut rng));
        }
    }
    out
}

/// One task per (scene, type). Goal texts are unique so a goal-keyed oracle
/// is unambiguous.
fn suite_tasks(layouts: &[Layout]) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, layout) in layouts.iter().enumerate() {
        for task_type in TaskType::ALL {
            let draft = loop {
                let d = draft_task(layout, task_type, &mut rng);
                if seen.insert(d.goal.clone()) {
                    break d;
                }
            };
            let id = format!("suite_{:02}_{}", i + 1, type_slug(task_type));
            out.push(finish(id, task_type, &layout.scene.id, draft, &mut rng));
        }
    }
    out
}

fn plan(text: &str) -> HighLevelPlan {
    parse_hlp(text).expect("scenario plan parses")
}

/// Two rooms joined by a doorway in row 2. The agent starts in the west room;
/// objects on the east room's walls are out of the first observation.
fn two_rooms() -> Vec<String> {
    ["#########", "#...#...#", "#.......#", "#...#...#", "#########"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn scenario_scene(id: &str, objects: Vec<ObjectSpec>) -> Scene {
    Scene {
        format: SCENE_FORMAT,
        id: id.into(),
        grid: two_rooms(),
        agent_start: StartPose {
            row: 2,
            col: 1,
            facing: Facing::W,
        },
        objects,
    }
}

struct Scenario {
    scene: Scene,
    task_type: TaskType,
    goal: &'static str,
    naive: &'static str,
    goals: Vec<GoalCondition>,
    /// (completed prefix, required visible class, grounded continuation)
    grounded: (&'static str, &'static str, &'static str),
    /// Naive continuations for prefixes reached before grounding.
    naive_rules: Vec<(&'static str, &'static str)>,
}

fn scenarios() -> (Vec<Scene>, Vec<TaskInstance>, Vec<ScriptRule>) {
    let list = vec![
        Scenario {
            scene: scenario_scene(
                "grounding_fridge_potato",
                vec![
                    ObjectSpec::new("Microwave_1", "Microwave")
                        .receptacle()
                        .openable(false)
                        .toggleable(false)
                        .at(0, 2),
                    ObjectSpec::new("CounterTop_1", "CounterTop").receptacle().at(4, 2),
                    ObjectSpec::new("Fridge_1", "Fridge").receptacle().openable(false).at(0, 7).containing(["Potato_1"]),
                    ObjectSpec::new("Potato_1", "Potato").pickupable().sliceable(),
                    ObjectSpec::new("SinkBasin_1", "SinkBasin").receptacle().at(4, 6),
                ],
            ),
            task_type: TaskType::HeatAndPlace,
            goal: "cook a potato",
            naive: "Navigation Potato, PickupObject Potato, Navigation Microwave, OpenObject Microwave, \
                    PutObject Microwave, ToggleOnObject Microwave, ToggleOffObject Microwave",
            goals: vec![
                GoalCondition::ObjectHeated { object: ObjectClass::new("Potato") },
                in_receptacle("Potato", "Microwave"),
            ],
            grounded: (
                "",
                "Fridge",
                "Navigation Fridge, OpenObject Fridge, PickupObject Potato, Navigation Microwave, \
                 OpenObject Microwave, PutObject Microwave, ToggleOnObject Microwave, ToggleOffObject Microwave",
            ),
            naive_rules: vec![(
                "",
                "Navigation Potato, PickupObject Potato, Navigation Microwave, OpenObject Microwave, \
                 PutObject Microwave, ToggleOnObject Microwave, ToggleOffObject Microwave",
            )],
        },
        Scenario {
            scene: scenario_scene(
                "grounding_cabinet_mug",
                vec![
                    ObjectSpec::new("Desk_1", "Desk").receptacle().at(0, 1),
                    ObjectSpec::new("Cabinet_1", "Cabinet").receptacle().openable(false).at(4, 7).containing(["Mug_1"]),
                    ObjectSpec::new("Mug_1", "Mug").pickupable().receptacle(),
                    ObjectSpec::new("Shelf_1", "Shelf").receptacle().at(0, 3),
                ],
            ),
            task_type: TaskType::PickAndPlace,
            goal: "put a mug on the desk",
            naive: "Navigation Mug, PickupObject Mug, Navigation Desk, PutObject Desk",
            goals: vec![in_receptacle("Mug", "Desk")],
            grounded: (
                "",
                "Cabinet",
                "Navigation Cabinet, OpenObject Cabinet, PickupObject Mug, Navigation Desk, PutObject Desk",
            ),
            naive_rules: vec![("", "Navigation Mug, PickupObject Mug, Navigation Desk, PutObject Desk")],
        },
        Scenario {
            scene: scenario_scene(
                "grounding_recycle_bin",
                vec![
                    ObjectSpec::new("SideTable_1", "SideTable").receptacle().at(1, 0).containing(["Newspaper_1"]),
                    ObjectSpec::new("Newspaper_1", "Newspaper").pickupable(),
                    ObjectSpec::new("RecycleBin_1", "RecycleBin").receptacle().at(3, 8),
                    ObjectSpec::new("Shelf_1", "Shelf").receptacle().at(4, 2),
                ],
            ),
            task_type: TaskType::PickAndPlace,
            goal: "throw the newspaper away",
            naive: "Navigation Newspaper, PickupObject Newspaper, Navigation GarbageCan, PutObject GarbageCan",
            goals: vec![in_receptacle("Newspaper", "RecycleBin")],
            grounded: (
                "Navigation Newspaper, PickupObject Newspaper",
                "RecycleBin",
                "Navigation RecycleBin, PutObject RecycleBin",
            ),
            naive_rules: vec![
                (
                    "",
                    "Navigation Newspaper, PickupObject Newspaper, Navigation GarbageCan, PutObject GarbageCan",
                ),
                ("Navigation Newspaper, PickupObject Newspaper", "Navigation GarbageCan, PutObject GarbageCan"),
            ],
        },
    ];

    let mut scenes = Vec::new();
    let mut tasks = Vec::new();
    let mut grounded_rules = Vec::new();
    let mut naive_rules = Vec::new();
    for s in list {
        let gold = plan(s.naive);
        let steps = gold.subgoals().iter().map(|g| format!("{} the {}.", g.action.as_str(), display(g.object.as_str()))).collect();
        tasks.push(TaskInstance {
            id: s.scene.id.clone(),
            task_type: s.task_type,
            instruction: Instruction::with_steps(s.goal, steps),
            gold_hlp: gold,
            scene_id: s.scene.id.clone(),
            goal_conditions: s.goals,
        });
        let (completed, visible, continuation) = s.grounded;
        grounded_rules.push(ScriptRule {
            goal: s.goal.into(),
            completed: Some(completed.into()),
            requires_visible: vec![visible.into()],
            prompt_contains: None,
            continuation: serialize_hlp(&plan(continuation)),
        });
        for (completed, continuation) in s.naive_rules {
            naive_rules.push(ScriptRule {
                goal: s.goal.into(),
                completed: Some(completed.into()),
                requires_visible: Vec::new(),
                prompt_contains: None,
                continuation: serialize_hlp(&plan(continuation)),
            });
        }
        scenes.push(s.scene);
    }
    grounded_rules.extend(naive_rules);
    (scenes, tasks, grounded_rules)
}
