use serde::{Deserialize, Serialize};

use super::world::WorldState;
use crate::types::ObjectClass;

/// Object classes that count as a light source for examining objects.
pub const LAMP_CLASSES: &[&str] = &["DeskLamp", "FloorLamp", "TableLamp"];

/// A required world-state change. Each predicate is satisfied by any
/// instance of the named class(es).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "predicate")]
pub enum GoalCondition {
    ObjectInReceptacle {
        object: ObjectClass,
        receptacle: ObjectClass,
    },
    ObjectSliced {
        object: ObjectClass,
    },
    ObjectHeated {
        object: ObjectClass,
    },
    ObjectCooled {
        object: ObjectClass,
    },
    ObjectCleaned {
        object: ObjectClass,
    },
    ObjectToggledOn {
        object: ObjectClass,
    },
    TwoObjectsInReceptacle {
        object: ObjectClass,
        receptacle: ObjectClass,
    },
    /// Held while some lamp is switched on.
    ObjectExaminedUnderLamp {
        object: ObjectClass,
    },
}

impl GoalCondition {
    pub fn classes(&self) -> Vec<&ObjectClass> {
        match self {
            GoalCondition::ObjectInReceptacle { object, receptacle }
            | GoalCondition::TwoObjectsInReceptacle { object, receptacle } => vec![object, receptacle],
            GoalCondition::ObjectSliced { object }
            | GoalCondition::ObjectHeated { object }
            | GoalCondition::ObjectCooled { object }
            | GoalCondition::ObjectCleaned { object }
            | GoalCondition::ObjectToggledOn { object }
            | GoalCondition::ObjectExaminedUnderLamp { object } => vec![object],
        }
    }

    pub fn is_satisfied(&self, world: &WorldState) -> bool {
        fn of_class<'a>(
            world: &'a WorldState,
            class: &'a ObjectClass,
        ) -> impl Iterator<Item = &'a super::ObjectInstance> {
            world.objects().filter(move |o| &o.class == class)
        }
        let in_receptacle = |object: &ObjectClass, receptacle: &ObjectClass| {
            of_class(world, object)
                .filter(|o| {
                    o.inside_of
                        .as_ref()
                        .and_then(|c| world.object(c))
                        .is_some_and(|c| &c.class == receptacle)
                })
                .count()
        };
        match self {
            GoalCondition::ObjectInReceptacle { object, receptacle } => {
                in_receptacle(object, receptacle) >= 1
            }
            GoalCondition::TwoObjectsInReceptacle { object, receptacle } => {
                in_receptacle(object, receptacle) >= 2
            }
            GoalCondition::ObjectSliced { object } => of_class(world, object).any(|o| o.sliced),
            GoalCondition::ObjectHeated { object } => of_class(world, object).any(|o| o.heated),
            GoalCondition::ObjectCooled { object } => of_class(world, object).any(|o| o.cooled),
            GoalCondition::ObjectCleaned { object } => of_class(world, object).any(|o| o.cleaned),
            GoalCondition::ObjectToggledOn { object } => of_class(world, object).any(|o| o.on),
            GoalCondition::ObjectExaminedUnderLamp { object } => {
                world.held_object().is_some_and(|h| &h.class == object)
                    && world
                        .objects()
                        .any(|o| o.on && LAMP_CLASSES.contains(&o.class.as_str()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalStatus {
    pub satisfied: usize,
    pub total: usize,
    pub success: bool,
}

/// Counts satisfied conditions. `success` holds iff every condition is met.
pub fn check_goal(world: &WorldState, conditions: &[GoalCondition]) -> GoalStatus {
    let satisfied = conditions.iter().filter(|c| c.is_satisfied(world)).count();
    GoalStatus {
        satisfied,
        total: conditions.len(),
        success: satisfied == conditions.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{ObjectSpec, Scene, StartPose};
    use crate::sim::{Facing, ObjectId, PrimitiveAction};

    fn bread_scene() -> WorldState {
        Scene {
            format: 1,
            id: "b".into(),
            grid: vec!["###".into(), "#.#".into(), "###".into()],
            agent_start: StartPose { row: 1, col: 1, facing: Facing::N },
            objects: vec![
                ObjectSpec::new("CounterTop_1", "CounterTop").at(0, 1).receptacle().containing(["Bread_1", "Knife_1"]),
                ObjectSpec::new("Bread_1", "Bread").pickupable().sliceable(),
                ObjectSpec::new("Knife_1", "Knife").pickupable(),
                ObjectSpec::new("DeskLamp_1", "DeskLamp").at(1, 2).toggleable(false),
            ],
        }
        .initial_state()
        .unwrap()
    }

    fn c(s: &str) -> ObjectClass {
        ObjectClass::new(s)
    }

    #[test]
    fn sliced_but_not_heated_bread() {
        let mut w = bread_scene();
        w.step(&PrimitiveAction::Pickup(ObjectId::new("Knife_1")));
        w.step(&PrimitiveAction::Slice(ObjectId::new("Bread_1")));
        let conds = [
            GoalCondition::ObjectSliced { object: c("Bread") },
            GoalCondition::ObjectHeated { object: c("Bread") },
        ];
        assert_eq!(
            check_goal(&w, &conds),
            GoalStatus { satisfied: 1, total: 2, success: false }
        );
        assert!(check_goal(&w, &conds[..1]).success);
    }

    #[test]
    fn receptacle_and_lamp_predicates() {
        let mut w = bread_scene();
        let on_counter = GoalCondition::ObjectInReceptacle { object: c("Bread"), receptacle: c("CounterTop") };
        let two = GoalCondition::TwoObjectsInReceptacle { object: c("Bread"), receptacle: c("CounterTop") };
        let examined = GoalCondition::ObjectExaminedUnderLamp { object: c("Knife") };
        assert!(on_counter.is_satisfied(&w));
        assert!(!two.is_satisfied(&w));
        w.step(&PrimitiveAction::Pickup(ObjectId::new("Knife_1")));
        assert!(!examined.is_satisfied(&w));
        w.step(&PrimitiveAction::RotateRight);
        w.step(&PrimitiveAction::ToggleOn(ObjectId::new("DeskLamp_1")));
        assert!(examined.is_satisfied(&w));
        assert!(GoalCondition::ObjectToggledOn { object: c("DeskLamp") }.is_satisfied(&w));
    }

    #[test]
    fn json_form() {
        let g = GoalCondition::ObjectInReceptacle { object: c("Apple"), receptacle: c("Fridge") };
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"predicate":"ObjectInReceptacle","object":"Apple","receptacle":"Fridge"}"#);
        assert_eq!(serde_json::from_str::<GoalCondition>(&json).unwrap(), g);
        assert!(serde_json::from_str::<GoalCondition>(r#"{"predicate":"ObjectInReceptacle","object":"Apple"}"#).is_err());
    }
}
