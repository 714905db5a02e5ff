use serde::{Deserialize, Serialize};

use crate::environment::TaskId;

/// What happened during a step. Shaping tags carry the improvement of a potential as
/// their magnitude; the rest carry 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventTag {
    /// Task 1: the hand axis turned toward the grasp direction (degrees gained).
    DirectionApproach,
    /// Task 1: the hand moved toward the grasp ray (centimeters gained).
    PositionApproach,
    /// Task 1: the alignment angle dropped below its threshold this step.
    ReachedDirection,
    /// Task 2: the hand moved toward the grasp point (centimeters gained).
    GraspPointApproach,
    /// Task 2: the hand left the alignment corridor.
    MisalignedDuringTask2,
    /// Task 3: closure progress while at the grasp point (fraction gained).
    HandClosedAtGraspPoint,
    StepLimit,
    Collision,
    DriftAway,
    TaskSuccess(TaskId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub tag: EventTag,
    pub magnitude: f64,
}

impl RewardEvent {
    pub fn new(tag: EventTag, magnitude: f64) -> Self {
        Self { tag, magnitude }
    }

    pub fn flag(tag: EventTag) -> Self {
        Self::new(tag, 1.0)
    }
}
