//! Low-level planner: turns one subgoal at a time into primitive actions.
//!
//! Navigation subgoals head for the nearest known instance of the target
//! class along a shortest path in pose space (cell plus facing), exploring
//! the nearest unvisited cell while no instance is known. Interaction
//! subgoals act on an instance in the faced cell or the agent's own cell.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::sim::{
    ActionOutcome, Cell, FailureReason, Grid, ObjectId, Observation, Pose, PrimitiveAction,
    VisibleObject,
};
use crate::types::{HighLevelAction, ObjectClass, Subgoal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubgoalFailure {
    /// Nothing left to explore and no reachable instance of the target.
    Unreachable,
    /// No instance of the target in the faced cell or the agent's cell.
    NotAtTarget,
    /// Instances are at hand but none admits the interaction.
    PreconditionUnmet,
    /// The simulator rejected the emitted interaction.
    ActionFailed(FailureReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Act(PrimitiveAction),
    SubgoalDone,
    SubgoalFailed(SubgoalFailure),
}

#[derive(Debug, Clone)]
struct KnownObject {
    class: ObjectClass,
    cell: Cell,
}

/// Breadth-first distances over poses from one start pose.
pub struct PoseBfs<'g> {
    grid: &'g Grid,
    dist: Vec<u32>,
    /// Predecessor pose index and the action that led here.
    parent: Vec<Option<(usize, PrimitiveAction)>>,
    start: usize,
}

const UNREACHED: u32 = u32::MAX;

impl<'g> PoseBfs<'g> {
    pub fn new(grid: &'g Grid, start: Pose) -> Self {
        let n = grid.pose_count();
        let mut dist = vec![UNREACHED; n];
        let mut parent = vec![None; n];
        let start_idx = grid.pose_index(start).expect("start pose in bounds");
        dist[start_idx] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(pose) = queue.pop_front() {
            let here = grid.pose_index(pose).unwrap();
            let d = dist[here];
            let ahead = pose.faced_cell();
            let moves = [
                (grid.is_walkable(ahead).then(|| Pose::new(ahead, pose.facing)), PrimitiveAction::MoveAhead),
                (Some(Pose::new(pose.cell, pose.facing.left())), PrimitiveAction::RotateLeft),
                (Some(Pose::new(pose.cell, pose.facing.right())), PrimitiveAction::RotateRight),
            ];
            for (next, action) in moves {
                let Some(next) = next else { continue };
                let i = grid.pose_index(next).unwrap();
                if dist[i] == UNREACHED {
                    dist[i] = d + 1;
                    parent[i] = Some((here, action));
                    queue.push_back(next);
                }
            }
        }
        Self {
            grid,
            dist,
            parent,
            start: start_idx,
        }
    }

    pub fn distance(&self, pose: Pose) -> Option<u32> {
        let d = self.dist[self.grid.pose_index(pose)?];
        (d != UNREACHED).then_some(d)
    }

    /// Shortest distance to a pose from which `target` is the faced cell.
    pub fn facing_distance(&self, target: Cell) -> Option<(u32, Pose)> {
        facing_poses(self.grid, target)
            .filter_map(|p| self.distance(p).map(|d| (d, p)))
            .min()
    }

    /// Shortest distance to any pose standing on `cell`.
    pub fn cell_distance(&self, cell: Cell) -> Option<(u32, Pose)> {
        crate::sim::Facing::ALL
            .into_iter()
            .map(|f| Pose::new(cell, f))
            .filter_map(|p| self.distance(p).map(|d| (d, p)))
            .min()
    }

    /// First action on the recorded shortest path to `goal`.
    pub fn first_action(&self, goal: Pose) -> Option<PrimitiveAction> {
        let mut idx = self.grid.pose_index(goal)?;
        if self.dist[idx] == UNREACHED || idx == self.start {
            return None;
        }
        loop {
            let (prev, action) = self.parent[idx].clone()?;
            if prev == self.start {
                return Some(action);
            }
            idx = prev;
        }
    }
}

/// Walkable poses whose faced cell is `target`.
pub fn facing_poses(grid: &Grid, target: Cell) -> impl Iterator<Item = Pose> + '_ {
    crate::sim::Facing::ALL.into_iter().filter_map(move |f| {
        // Stand on the opposite side, facing f.
        let (dr, dc) = f.delta();
        let stand = Cell::new(target.row - dr, target.col - dc);
        grid.is_walkable(stand).then(|| Pose::new(stand, f))
    })
}

/// Per-episode low-level planner state: visited cells, remembered object
/// locations and objects the agent has put down itself.
#[derive(Debug, Clone)]
pub struct LowLevelPlanner {
    grid: Grid,
    pose: Pose,
    visited: Vec<bool>,
    known: BTreeMap<ObjectId, KnownObject>,
    placed: BTreeSet<ObjectId>,
    held: Option<VisibleObject>,
    /// Emitted interaction and the object held when it was emitted.
    pending: Option<(PrimitiveAction, Option<ObjectId>)>,
}

impl LowLevelPlanner {
    pub fn new(grid: Grid, start: Pose) -> Self {
        let mut visited = vec![false; grid.cell_count()];
        if let Some(i) = grid.index(start.cell) {
            visited[i] = true;
        }
        Self {
            grid,
            pose: start,
            visited,
            known: BTreeMap::new(),
            placed: BTreeSet::new(),
            held: None,
            pending: None,
        }
    }

    /// Folds an observation into the planner's memory.
    pub fn update(&mut self, obs: &Observation) {
        self.pose = obs.pose;
        if let Some(i) = self.grid.index(obs.pose.cell) {
            self.visited[i] = true;
        }
        for v in &obs.visible {
            self.known.insert(
                v.id.clone(),
                KnownObject {
                    class: v.class.clone(),
                    cell: v.cell,
                },
            );
        }
        self.held = obs.held.clone();
    }

    pub fn is_visited(&self, cell: Cell) -> bool {
        self.grid.index(cell).is_some_and(|i| self.visited[i])
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    /// Records the simulator's response to the last emitted action. Returns
    /// the decision for the current interaction subgoal once its action has
    /// been executed.
    pub fn record_outcome(&mut self, action: &PrimitiveAction, outcome: ActionOutcome) -> Option<Decision> {
        let Some((pending, held)) = self.pending.take().filter(|(p, _)| p == action) else {
            return match outcome {
                ActionOutcome::Failure(r) => Some(Decision::SubgoalFailed(SubgoalFailure::ActionFailed(r))),
                ActionOutcome::Success => None,
            };
        };
        match outcome {
            ActionOutcome::Success => {
                if let (PrimitiveAction::Put(_), Some(held)) = (pending, held) {
                    self.placed.insert(held);
                }
                Some(Decision::SubgoalDone)
            }
            ActionOutcome::Failure(r) => Some(Decision::SubgoalFailed(SubgoalFailure::ActionFailed(r))),
        }
    }

    /// Forgets any in-flight interaction, e.g. after a re-plan.
    pub fn reset_subgoal(&mut self) {
        self.pending = None;
    }

    pub fn next_action(&mut self, subgoal: &Subgoal, obs: &Observation) -> Decision {
        self.update(obs);
        match subgoal.action {
            HighLevelAction::Navigation => self.navigate(&subgoal.object),
            action => self.interact(action, &subgoal.object, obs),
        }
    }

    fn navigate(&self, target: &ObjectClass) -> Decision {
        let bfs = PoseBfs::new(&self.grid, self.pose);
        let held = self.held.as_ref().map(|h| &h.id);
        let nearest = |placed: bool| {
            self.known
                .iter()
                .filter(|(id, k)| &k.class == target && Some(*id) != held && self.placed.contains(*id) == placed)
                .filter_map(|(id, k)| bfs.facing_distance(k.cell).map(|(d, goal)| (d, id.clone(), goal)))
                .min()
        };
        let chosen = nearest(false).or_else(|| {
            // Objects the agent put down itself are a last resort.
            if self.frontier_goal(&bfs).is_some() {
                None
            } else {
                nearest(true)
            }
        });
        if let Some((dist, _, goal)) = chosen {
            if dist == 0 {
                return Decision::SubgoalDone;
            }
            return Decision::Act(bfs.first_action(goal).expect("reachable goal has a path"));
        }
        match self.frontier_goal(&bfs) {
            Some(goal) => Decision::Act(bfs.first_action(goal).expect("frontier cell has a path")),
            None => Decision::SubgoalFailed(SubgoalFailure::Unreachable),
        }
    }

    /// Pose on the nearest unvisited reachable cell; ties go to the smallest
    /// `(row, col)`.
    fn frontier_goal(&self, bfs: &PoseBfs<'_>) -> Option<Pose> {
        self.grid
            .walkable_cells()
            .filter(|&c| !self.is_visited(c))
            .filter_map(|c| bfs.cell_distance(c).map(|(d, p)| (d, c, p)))
            .min_by_key(|&(d, c, _)| (d, c))
            .map(|(_, _, p)| p)
    }

    fn interact(&mut self, action: HighLevelAction, target: &ObjectClass, obs: &Observation) -> Decision {
        let faced = obs.pose.faced_cell();
        let held = obs.held.as_ref();
        let mut at_hand: Vec<&VisibleObject> = obs
            .visible
            .iter()
            .filter(|v| &v.class == target && (v.cell == faced || v.cell == obs.pose.cell))
            .collect();
        if at_hand.is_empty() {
            return Decision::SubgoalFailed(SubgoalFailure::NotAtTarget);
        }
        at_hand.sort_by_key(|v| (self.placed.contains(&v.id), v.id.clone()));
        let admissible = |v: &&VisibleObject| match action {
            HighLevelAction::PickupObject => held.is_none() && v.pickupable,
            HighLevelAction::PutObject => {
                held.is_some_and(|h| h.id != v.id) && v.is_receptacle && (!v.openable || v.open)
            }
            HighLevelAction::OpenObject => v.openable && !v.open,
            HighLevelAction::CloseObject => v.openable && v.open,
            HighLevelAction::ToggleOnObject => v.toggleable && !v.on,
            HighLevelAction::ToggleOffObject => v.toggleable && v.on,
            HighLevelAction::SliceObject => {
                v.sliceable && !v.sliced && held.is_some_and(|h| h.class.as_str() == "Knife")
            }
            HighLevelAction::Navigation => unreachable!(),
        };
        let Some(obj) = at_hand.into_iter().find(admissible) else {
            return Decision::SubgoalFailed(SubgoalFailure::PreconditionUnmet);
        };
        let id = obj.id.clone();
        let primitive = match action {
            HighLevelAction::PickupObject => PrimitiveAction::Pickup(id),
            HighLevelAction::PutObject => PrimitiveAction::Put(id),
            HighLevelAction::OpenObject => PrimitiveAction::Open(id),
            HighLevelAction::CloseObject => PrimitiveAction::Close(id),
            HighLevelAction::ToggleOnObject => PrimitiveAction::ToggleOn(id),
            HighLevelAction::ToggleOffObject => PrimitiveAction::ToggleOff(id),
            HighLevelAction::SliceObject => PrimitiveAction::Slice(id),
            HighLevelAction::Navigation => unreachable!(),
        };
        self.pending = Some((primitive.clone(), held.map(|h| h.id.clone())));
        Decision::Act(primitive)
    }

    /// ASCII dump of the visited map: `A` agent, `v` visited, `.` unvisited,
    /// `#` blocked.
    pub fn visited_map(&self) -> String {
        let mut out = String::new();
        for r in 0..self.grid.height() {
            for c in 0..self.grid.width() {
                let cell = Cell::new(r, c);
                out.push(if cell == self.pose.cell {
                    'A'
                } else if !self.grid.is_walkable(cell) {
                    '#'
                } else if self.is_visited(cell) {
                    'v'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}
