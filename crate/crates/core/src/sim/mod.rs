//! Deterministic gridworld household simulator.
//!
//! The world is an occupancy grid with objects that can be opened, toggled,
//! sliced, picked up and put into receptacles. Heating, cooling and
//! cleaning happen through appliance cycles: contents of a `Microwave` are
//! heated across a ToggleOn/ToggleOff cycle, contents of a `Fridge` are
//! cooled across a Close/Open cycle, and contents of a `SinkBasin` are
//! cleaned across a ToggleOn/ToggleOff cycle of a `Faucet` in the same cell.

mod goal;
mod grid;
mod observe;
mod scene;
mod world;

pub use goal::{check_goal, GoalCondition, GoalStatus, LAMP_CLASSES};
pub use grid::{Cell, Facing, Grid, Pose};
pub use observe::{DetectionNoise, Observation, VisibleObject};
pub use scene::{ObjectSpec, Scene, SceneError, StartPose, SCENE_FORMAT};
pub use world::{ActionOutcome, FailureReason, ObjectId, ObjectInstance, PrimitiveAction, WorldState};
