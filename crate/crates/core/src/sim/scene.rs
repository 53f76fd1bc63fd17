//! Scene files: an occupancy grid, an object table and the agent's start pose.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::goal::GoalCondition;
use super::grid::{Cell, Facing, Grid, Pose};
use super::world::{ObjectId, ObjectInstance, WorldState};
use crate::types::{ObjectClass, ObjectVocabulary, TaskInstance};

pub const SCENE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scene JSON: {0}")]
    Json(String),
    #[error("unsupported scene format {0}")]
    Format(u32),
    #[error("scene {scene}: {message}")]
    Invalid { scene: String, message: String },
    #[error("task {task} cannot be completed in scene {scene}: {message}")]
    Unsatisfiable {
        task: String,
        scene: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub row: i32,
    pub col: i32,
    pub facing: Facing,
}

/// One row of a scene's object table. Objects listed in another object's
/// `contents` take their position from the container and omit `row`/`col`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub class: ObjectClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col: Option<i32>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub pickupable: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub receptacle: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub openable: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub open: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub toggleable: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub on: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub sliceable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contents: Vec<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl ObjectSpec {
    pub fn new(id: impl Into<String>, class: &str) -> Self {
        Self {
            id: id.into(),
            class: ObjectClass::new(class),
            ..Default::default()
        }
    }

    pub fn at(mut self, row: i32, col: i32) -> Self {
        self.row = Some(row);
        self.col = Some(col);
        self
    }

    pub fn pickupable(mut self) -> Self {
        self.pickupable = true;
        self
    }

    pub fn receptacle(mut self) -> Self {
        self.receptacle = true;
        self
    }

    pub fn openable(mut self, open: bool) -> Self {
        self.openable = true;
        self.open = open;
        self
    }

    pub fn toggleable(mut self, on: bool) -> Self {
        self.toggleable = true;
        self.on = on;
        self
    }

    pub fn sliceable(mut self) -> Self {
        self.sliceable = true;
        self
    }

    pub fn containing<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        self.contents.extend(ids.into_iter().map(Into::into));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub format: u32,
    pub id: String,
    pub grid: Vec<String>,
    pub agent_start: StartPose,
    pub objects: Vec<ObjectSpec>,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| SceneError::Json(e.to_string()))?;
        if scene.format != SCENE_FORMAT {
            return Err(SceneError::Format(scene.format));
        }
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Loads every `*.json` scene in a directory, keyed by scene id.
    pub fn load_dir(dir: &Path) -> Result<BTreeMap<String, Scene>, SceneError> {
        let io = |source| SceneError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut scenes = BTreeMap::new();
        for path in paths {
            let scene = Scene::load(&path)?;
            scenes.insert(scene.id.clone(), scene);
        }
        Ok(scenes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn grid(&self) -> Result<Grid, SceneError> {
        Grid::from_rows(&self.grid).map_err(|message| self.invalid(message))
    }

    fn invalid(&self, message: impl Into<String>) -> SceneError {
        SceneError::Invalid {
            scene: self.id.clone(),
            message: message.into(),
        }
    }

    /// Structural checks; also run by [`Scene::from_json`].
    pub fn validate(&self) -> Result<(), SceneError> {
        self.initial_state().map(|_| ())
    }

    /// Object classes present in the scene.
    pub fn classes(&self) -> BTreeSet<ObjectClass> {
        self.objects.iter().map(|o| o.class.clone()).collect()
    }

    /// Builds the initial world state, validating the scene on the way.
    pub fn initial_state(&self) -> Result<WorldState, SceneError> {
        let grid = self.grid()?;
        let start = Cell::new(self.agent_start.row, self.agent_start.col);
        if !grid.is_walkable(start) {
            return Err(self.invalid(format!("agent start {start} is not walkable")));
        }
        let vocab = ObjectVocabulary::builtin();
        let mut objects: BTreeMap<ObjectId, ObjectInstance> = BTreeMap::new();
        for spec in &self.objects {
            if spec.id.trim().is_empty() {
                return Err(self.invalid("object with empty id"));
            }
            if vocab.resolve(spec.class.as_str()).as_ref() != Some(&spec.class) {
                return Err(self.invalid(format!("unknown object class {}", spec.class)));
            }
            if spec.open && !spec.openable {
                return Err(self.invalid(format!("{} is open but not openable", spec.id)));
            }
            if spec.on && !spec.toggleable {
                return Err(self.invalid(format!("{} is on but not toggleable", spec.id)));
            }
            if !spec.contents.is_empty() && !spec.receptacle {
                return Err(self.invalid(format!("{} has contents but is not a receptacle", spec.id)));
            }
            let id = ObjectId::new(spec.id.clone());
            let instance = ObjectInstance {
                id: id.clone(),
                class: spec.class.clone(),
                position: Cell::new(spec.row.unwrap_or(-1), spec.col.unwrap_or(-1)),
                pickupable: spec.pickupable,
                is_receptacle: spec.receptacle,
                openable: spec.openable,
                open: spec.open,
                toggleable: spec.toggleable,
                on: spec.on,
                sliceable: spec.sliceable,
                sliced: false,
                heated: false,
                cooled: false,
                cleaned: false,
                container_of: spec.contents.iter().cloned().map(ObjectId::new).collect(),
                inside_of: None,
                cycle: Vec::new(),
            };
            if objects.insert(id, instance).is_some() {
                return Err(self.invalid(format!("duplicate object id {}", spec.id)));
            }
        }
        // Link containment.
        let links: Vec<(ObjectId, ObjectId)> = objects
            .values()
            .flat_map(|o| o.container_of.iter().map(move |c| (o.id.clone(), c.clone())))
            .collect();
        for (container, content) in links {
            let Some(obj) = objects.get_mut(&content) else {
                return Err(self.invalid(format!("{container} contains unknown object {content}")));
            };
            if let Some(prev) = &obj.inside_of {
                return Err(self.invalid(format!("{content} is inside both {prev} and {container}")));
            }
            obj.inside_of = Some(container);
        }
        // Positions: roots need explicit in-bounds cells; contents inherit.
        for spec in &self.objects {
            let id = ObjectId::new(spec.id.clone());
            let contained = objects[&id].inside_of.is_some();
            match (contained, spec.row, spec.col) {
                (false, Some(r), Some(c)) => {
                    if !grid.in_bounds(Cell::new(r, c)) {
                        return Err(self.invalid(format!("{} at ({r}, {c}) is out of bounds", spec.id)));
                    }
                }
                (false, _, _) => return Err(self.invalid(format!("{} has no position", spec.id))),
                (true, None, None) => {}
                (true, _, _) => {
                    return Err(self.invalid(format!(
                        "{} is contained and must not declare a position",
                        spec.id
                    )))
                }
            }
        }
        let roots: Vec<ObjectId> = objects
            .values()
            .filter(|o| o.inside_of.is_none())
            .map(|o| o.id.clone())
            .collect();
        let mut placed = 0;
        for root in roots {
            let cell = objects[&root].position;
            let budget = objects.len();
            placed += WorldState::place_tree(&mut objects, &root, cell, budget)
                .ok_or_else(|| self.invalid("containment cycle"))?;
        }
        if placed != objects.len() {
            return Err(self.invalid("containment cycle"));
        }
        let state = WorldState::from_parts(self.id.clone(), grid, objects, Pose::new(start, self.agent_start.facing));
        state
            .check_invariants()
            .map_err(|m| self.invalid(m))?;
        Ok(state)
    }

    /// Static reachability check: the scene contains everything the task's
    /// goal conditions refer to.
    pub fn check_task(&self, task: &TaskInstance) -> Result<(), SceneError> {
        let unsat = |message: String| SceneError::Unsatisfiable {
            task: task.id.clone(),
            scene: self.id.clone(),
            message,
        };
        if task.scene_id != self.id {
            return Err(unsat(format!("task refers to scene {}", task.scene_id)));
        }
        let classes = self.classes();
        let has = |name: &str| classes.contains(&ObjectClass::new(name));
        let count = |class: &ObjectClass| self.objects.iter().filter(|o| &o.class == class).count();
        for cond in &task.goal_conditions {
            for class in cond.classes() {
                if !classes.contains(class) {
                    return Err(unsat(format!("no {class} in scene")));
                }
            }
            match cond {
                GoalCondition::ObjectHeated { .. } if !has("Microwave") => {
                    return Err(unsat("heating needs a Microwave".into()))
                }
                GoalCondition::ObjectCooled { .. } if !has("Fridge") => {
                    return Err(unsat("cooling needs a Fridge".into()))
                }
                GoalCondition::ObjectCleaned { .. } if !(has("SinkBasin") && has("Faucet")) => {
                    return Err(unsat("cleaning needs a SinkBasin and a Faucet".into()))
                }
                GoalCondition::ObjectSliced { .. } if !has("Knife") => {
                    return Err(unsat("slicing needs a Knife".into()))
                }
                GoalCondition::ObjectExaminedUnderLamp { .. }
                    if !super::goal::LAMP_CLASSES.iter().any(|l| has(l)) =>
                {
                    return Err(unsat("examining needs a lamp".into()))
                }
                GoalCondition::TwoObjectsInReceptacle { object, .. } if count(object) < 2 => {
                    return Err(unsat(format!("fewer than two {object} in scene")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
