use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Cell, Pose};
use super::world::{ObjectId, ObjectInstance, WorldState};
use crate::types::ObjectClass;

/// What the agent perceives of one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleObject {
    pub id: ObjectId,
    pub class: ObjectClass,
    pub cell: Cell,
    pub pickupable: bool,
    pub is_receptacle: bool,
    pub openable: bool,
    pub open: bool,
    pub toggleable: bool,
    pub on: bool,
    pub sliceable: bool,
    pub sliced: bool,
}

impl From<&ObjectInstance> for VisibleObject {
    fn from(o: &ObjectInstance) -> Self {
        Self {
            id: o.id.clone(),
            class: o.class.clone(),
            cell: o.position,
            pickupable: o.pickupable,
            is_receptacle: o.is_receptacle,
            openable: o.openable,
            open: o.open,
            toggleable: o.toggleable,
            on: o.on,
            sliceable: o.sliceable,
            sliced: o.sliced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    /// Sorted by id. The held object is reported separately.
    pub visible: Vec<VisibleObject>,
    pub held: Option<VisibleObject>,
}

impl Observation {
    pub fn classes(&self) -> impl Iterator<Item = &ObjectClass> {
        self.visible.iter().map(|v| &v.class)
    }
}

/// Seeded false-negative detector noise: each visible object is dropped
/// independently with probability `p_false_negative`.
#[derive(Debug, Clone)]
pub struct DetectionNoise {
    p_false_negative: f64,
    rng: ChaCha8Rng,
}

impl DetectionNoise {
    pub fn none() -> Self {
        Self::new(0.0, 0)
    }

    pub fn new(p_false_negative: f64, seed: u64) -> Self {
        Self {
            p_false_negative: p_false_negative.clamp(0.0, 1.0),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn drops(&mut self) -> bool {
        self.p_false_negative > 0.0 && self.rng.gen_bool(self.p_false_negative)
    }
}

impl WorldState {
    /// Objects within Chebyshev distance `radius` of the agent with a clear
    /// line of sight, excluding contents of closed containers and the held
    /// object.
    pub fn observe(&self, radius: i32, noise: &mut DetectionNoise) -> Observation {
        let pose = self.agent();
        let held = self.held();
        let mut visible = Vec::new();
        for obj in self.objects() {
            if Some(&obj.id) == held
                || obj.position.chebyshev(pose.cell) > radius
                || self.is_enclosed(&obj.id)
                || !self.grid().line_of_sight(pose.cell, obj.position)
            {
                continue;
            }
            if noise.drops() {
                continue;
            }
            visible.push(VisibleObject::from(obj));
        }
        Observation {
            pose,
            visible,
            held: self.held_object().map(VisibleObject::from),
        }
    }
}
