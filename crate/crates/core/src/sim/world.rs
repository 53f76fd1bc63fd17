//! Mutable world state and primitive-action dynamics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, Grid, Pose};
use crate::types::ObjectClass;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub class: ObjectClass,
    pub position: Cell,
    pub pickupable: bool,
    pub is_receptacle: bool,
    pub openable: bool,
    pub open: bool,
    pub toggleable: bool,
    pub on: bool,
    pub sliceable: bool,
    pub sliced: bool,
    pub heated: bool,
    pub cooled: bool,
    pub cleaned: bool,
    pub container_of: Vec<ObjectId>,
    pub inside_of: Option<ObjectId>,
    /// Contents captured when a heating, cooling or cleaning cycle started.
    pub cycle: Vec<ObjectId>,
}

impl ObjectInstance {
    fn is(&self, class: &str) -> bool {
        self.class.as_str() == class
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimitiveAction {
    MoveAhead,
    RotateLeft,
    RotateRight,
    Pickup(ObjectId),
    /// Put the held object into the given receptacle.
    Put(ObjectId),
    Open(ObjectId),
    Close(ObjectId),
    ToggleOn(ObjectId),
    ToggleOff(ObjectId),
    Slice(ObjectId),
}

impl PrimitiveAction {
    pub fn target(&self) -> Option<&ObjectId> {
        match self {
            PrimitiveAction::MoveAhead | PrimitiveAction::RotateLeft | PrimitiveAction::RotateRight => None,
            PrimitiveAction::Pickup(id)
            | PrimitiveAction::Put(id)
            | PrimitiveAction::Open(id)
            | PrimitiveAction::Close(id)
            | PrimitiveAction::ToggleOn(id)
            | PrimitiveAction::ToggleOff(id)
            | PrimitiveAction::Slice(id) => Some(id),
        }
    }

    pub fn is_interaction(&self) -> bool {
        self.target().is_some()
    }
}

impl fmt::Display for PrimitiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimitiveAction::MoveAhead => f.write_str("MoveAhead"),
            PrimitiveAction::RotateLeft => f.write_str("RotateLeft"),
            PrimitiveAction::RotateRight => f.write_str("RotateRight"),
            PrimitiveAction::Pickup(id) => write!(f, "Pickup({id})"),
            PrimitiveAction::Put(id) => write!(f, "Put({id})"),
            PrimitiveAction::Open(id) => write!(f, "Open({id})"),
            PrimitiveAction::Close(id) => write!(f, "Close({id})"),
            PrimitiveAction::ToggleOn(id) => write!(f, "ToggleOn({id})"),
            PrimitiveAction::ToggleOff(id) => write!(f, "ToggleOff({id})"),
            PrimitiveAction::Slice(id) => write!(f, "Slice({id})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    Blocked,
    UnknownObject,
    NotReachable,
    Contained,
    HandsFull,
    HandsEmpty,
    IsHeld,
    NotPickupable,
    NotReceptacle,
    ReceptacleClosed,
    WouldNest,
    NotOpenable,
    AlreadyOpen,
    AlreadyClosed,
    NotToggleable,
    AlreadyOn,
    AlreadyOff,
    NotSliceable,
    AlreadySliced,
    NoKnife,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionOutcome {
    Success,
    Failure(FailureReason),
}

impl ActionOutcome {
    pub fn is_success(self) -> bool {
        self == ActionOutcome::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub scene_id: String,
    grid: Grid,
    objects: BTreeMap<ObjectId, ObjectInstance>,
    agent: Pose,
    held: Option<ObjectId>,
    /// Number of successful transitions.
    t: u64,
}

impl WorldState {
    pub(crate) fn from_parts(
        scene_id: String,
        grid: Grid,
        objects: BTreeMap<ObjectId, ObjectInstance>,
        agent: Pose,
    ) -> Self {
        Self {
            scene_id,
            grid,
            objects,
            agent,
            held: None,
            t: 0,
        }
    }

    /// Sets the position of `root` and everything inside it. Returns the
    /// number of objects placed, or `None` if more than `budget` objects
    /// would be visited (a containment cycle).
    pub(crate) fn place_tree(
        objects: &mut BTreeMap<ObjectId, ObjectInstance>,
        root: &ObjectId,
        cell: Cell,
        budget: usize,
    ) -> Option<usize> {
        let mut stack = vec![root.clone()];
        let mut placed = 0;
        while let Some(id) = stack.pop() {
            placed += 1;
            if placed > budget {
                return None;
            }
            let obj = objects.get_mut(&id)?;
            obj.position = cell;
            stack.extend(obj.container_of.iter().cloned());
        }
        Some(placed)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn agent(&self) -> Pose {
        self.agent
    }

    pub fn held(&self) -> Option<&ObjectId> {
        self.held.as_ref()
    }

    pub fn held_object(&self) -> Option<&ObjectInstance> {
        self.held.as_ref().and_then(|id| self.objects.get(id))
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn object(&self, id: &ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(id)
    }

    /// Objects in id order.
    pub fn objects(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Canonical byte form used for determinism and purity checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("world state serializes")
    }

    /// True when the object sits inside a closed container at any depth.
    pub fn is_enclosed(&self, id: &ObjectId) -> bool {
        let mut current = self.objects.get(id).and_then(|o| o.inside_of.clone());
        let mut depth = 0;
        while let Some(c) = current {
            let Some(container) = self.objects.get(&c) else {
                return false;
            };
            if container.openable && !container.open {
                return true;
            }
            depth += 1;
            if depth > self.objects.len() {
                return false;
            }
            current = container.inside_of.clone();
        }
        false
    }

    /// True when `inner` is `outer` or lies inside it at any depth.
    fn is_within(&self, inner: &ObjectId, outer: &ObjectId) -> bool {
        let mut current = Some(inner.clone());
        let mut depth = 0;
        while let Some(c) = current {
            if &c == outer {
                return true;
            }
            depth += 1;
            if depth > self.objects.len() {
                return false;
            }
            current = self.objects.get(&c).and_then(|o| o.inside_of.clone());
        }
        false
    }

    fn reachable(&self, obj: &ObjectInstance) -> bool {
        obj.position == self.agent.cell || obj.position == self.agent.faced_cell()
    }

    /// Checks every precondition without mutating anything.
    fn check(&self, action: &PrimitiveAction) -> Result<(), FailureReason> {
        use FailureReason::*;
        let Some(id) = action.target() else {
            if *action == PrimitiveAction::MoveAhead && !self.grid.is_walkable(self.agent.faced_cell()) {
                return Err(Blocked);
            }
            return Ok(());
        };
        let obj = self.objects.get(id).ok_or(UnknownObject)?;
        if self.held.as_ref() == Some(id) {
            return Err(IsHeld);
        }
        if !self.reachable(obj) {
            return Err(NotReachable);
        }
        if self.is_enclosed(id) {
            return Err(Contained);
        }
        match action {
            PrimitiveAction::Pickup(_) => {
                if self.held.is_some() {
                    return Err(HandsFull);
                }
                if !obj.pickupable {
                    return Err(NotPickupable);
                }
            }
            PrimitiveAction::Put(_) => {
                let held = self.held.as_ref().ok_or(HandsEmpty)?;
                if !obj.is_receptacle {
                    return Err(NotReceptacle);
                }
                if obj.openable && !obj.open {
                    return Err(ReceptacleClosed);
                }
                if self.is_within(id, held) {
                    return Err(WouldNest);
                }
            }
            PrimitiveAction::Open(_) | PrimitiveAction::Close(_) => {
                if !obj.openable {
                    return Err(NotOpenable);
                }
                let opening = matches!(action, PrimitiveAction::Open(_));
                if opening && obj.open {
                    return Err(AlreadyOpen);
                }
                if !opening && !obj.open {
                    return Err(AlreadyClosed);
                }
            }
            PrimitiveAction::ToggleOn(_) | PrimitiveAction::ToggleOff(_) => {
                if !obj.toggleable {
                    return Err(NotToggleable);
                }
                let switching_on = matches!(action, PrimitiveAction::ToggleOn(_));
                if switching_on && obj.on {
                    return Err(AlreadyOn);
                }
                if !switching_on && !obj.on {
                    return Err(AlreadyOff);
                }
            }
            PrimitiveAction::Slice(_) => {
                if !obj.sliceable {
                    return Err(NotSliceable);
                }
                if obj.sliced {
                    return Err(AlreadySliced);
                }
                if !self.held_object().is_some_and(|h| h.is("Knife")) {
                    return Err(NoKnife);
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Applies one primitive action. A failure leaves the state untouched.
    pub fn step(&mut self, action: &PrimitiveAction) -> ActionOutcome {
        if let Err(reason) = self.check(action) {
            return ActionOutcome::Failure(reason);
        }
        match action {
            PrimitiveAction::MoveAhead => {
                self.agent.cell = self.agent.faced_cell();
                if let Some(held) = self.held.clone() {
                    let n = self.objects.len();
                    Self::place_tree(&mut self.objects, &held, self.agent.cell, n);
                }
            }
            PrimitiveAction::RotateLeft => self.agent.facing = self.agent.facing.left(),
            PrimitiveAction::RotateRight => self.agent.facing = self.agent.facing.right(),
            PrimitiveAction::Pickup(id) => {
                if let Some(container) = self.objects[id].inside_of.clone() {
                    self.objects.get_mut(&container).unwrap().container_of.retain(|c| c != id);
                }
                self.objects.get_mut(id).unwrap().inside_of = None;
                let n = self.objects.len();
                Self::place_tree(&mut self.objects, id, self.agent.cell, n);
                self.held = Some(id.clone());
            }
            PrimitiveAction::Put(receptacle) => {
                let held = self.held.take().unwrap();
                let cell = self.objects[receptacle].position;
                self.objects.get_mut(receptacle).unwrap().container_of.push(held.clone());
                self.objects.get_mut(&held).unwrap().inside_of = Some(receptacle.clone());
                let n = self.objects.len();
                Self::place_tree(&mut self.objects, &held, cell, n);
            }
            PrimitiveAction::Open(id) => {
                let obj = self.objects.get_mut(id).unwrap();
                obj.open = true;
                // Fridge contents kept inside since the last close are cooled.
                let cooled = if obj.is("Fridge") {
                    finish_cycle(obj)
                } else {
                    Vec::new()
                };
                for c in cooled {
                    self.objects.get_mut(&c).unwrap().cooled = true;
                }
            }
            PrimitiveAction::Close(id) => {
                let obj = self.objects.get_mut(id).unwrap();
                obj.open = false;
                if obj.is("Fridge") {
                    obj.cycle = obj.container_of.clone();
                }
            }
            PrimitiveAction::ToggleOn(id) => {
                let cell = self.objects[id].position;
                let sink_contents = if self.objects[id].is("Faucet") {
                    self.sink_contents(cell)
                } else {
                    Vec::new()
                };
                let obj = self.objects.get_mut(id).unwrap();
                obj.on = true;
                if obj.is("Microwave") {
                    obj.cycle = obj.container_of.clone();
                } else if obj.is("Faucet") {
                    obj.cycle = sink_contents;
                }
            }
            PrimitiveAction::ToggleOff(id) => {
                let cell = self.objects[id].position;
                let is_faucet = self.objects[id].is("Faucet");
                let sink_contents: BTreeSet<ObjectId> = if is_faucet {
                    self.sink_contents(cell).into_iter().collect()
                } else {
                    BTreeSet::new()
                };
                let obj = self.objects.get_mut(id).unwrap();
                obj.on = false;
                if obj.is("Microwave") {
                    for c in finish_cycle(obj) {
                        self.objects.get_mut(&c).unwrap().heated = true;
                    }
                } else if is_faucet {
                    let cycle = std::mem::take(&mut obj.cycle);
                    for c in cycle.into_iter().filter(|c| sink_contents.contains(c)) {
                        self.objects.get_mut(&c).unwrap().cleaned = true;
                    }
                }
            }
            PrimitiveAction::Slice(id) => self.objects.get_mut(id).unwrap().sliced = true,
        }
        self.t += 1;
        ActionOutcome::Success
    }

    /// Direct contents of every SinkBasin in `cell`.
    fn sink_contents(&self, cell: Cell) -> Vec<ObjectId> {
        self.objects
            .values()
            .filter(|o| o.is("SinkBasin") && o.position == cell)
            .flat_map(|o| o.container_of.iter().cloned())
            .collect()
    }

    /// Structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.grid.is_walkable(self.agent.cell) {
            return Err(format!("agent on blocked cell {}", self.agent.cell));
        }
        if let Some(h) = &self.held {
            let obj = self.objects.get(h).ok_or_else(|| format!("held object {h} missing"))?;
            if obj.inside_of.is_some() {
                return Err(format!("held object {h} is inside a container"));
            }
            if obj.position != self.agent.cell {
                return Err(format!("held object {h} is not with the agent"));
            }
        }
        for obj in self.objects.values() {
            if obj.open && !obj.openable {
                return Err(format!("{} open but not openable", obj.id));
            }
            if obj.on && !obj.toggleable {
                return Err(format!("{} on but not toggleable", obj.id));
            }
            if !obj.container_of.is_empty() && !obj.is_receptacle {
                return Err(format!("{} has contents but is not a receptacle", obj.id));
            }
            if let Some(c) = &obj.inside_of {
                let container = self
                    .objects
                    .get(c)
                    .ok_or_else(|| format!("{} inside missing {c}", obj.id))?;
                if !container.container_of.contains(&obj.id) {
                    return Err(format!("{c} does not list {}", obj.id));
                }
                if container.position != obj.position {
                    return Err(format!("{} not at its container's cell", obj.id));
                }
            } else if !self.grid.in_bounds(obj.position) {
                return Err(format!("{} out of bounds", obj.id));
            }
            for content in &obj.container_of {
                let inner = self
                    .objects
                    .get(content)
                    .ok_or_else(|| format!("{} lists missing {content}", obj.id))?;
                if inner.inside_of.as_ref() != Some(&obj.id) {
                    return Err(format!("{content} listed by {} but inside {:?}", obj.id, inner.inside_of));
                }
            }
            // Acyclic: the chain of containers terminates.
            let mut depth = 0;
            let mut current = obj.inside_of.clone();
            while let Some(c) = current {
                depth += 1;
                if depth > self.objects.len() {
                    return Err(format!("containment cycle through {}", obj.id));
                }
                current = self.objects[&c].inside_of.clone();
            }
        }
        Ok(())
    }
}

/// Ends a cycle: returns the objects still inside that were inside when the
/// cycle began.
fn finish_cycle(obj: &mut ObjectInstance) -> Vec<ObjectId> {
    let cycle = std::mem::take(&mut obj.cycle);
    cycle
        .into_iter()
        .filter(|c| obj.container_of.contains(c))
        .collect()
}
