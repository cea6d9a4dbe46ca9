use crate::numkit::SeededRng;

use super::{reward, Embodiment, WorldState, HALF_SIDE};

/// Reward at which the expert stops pushing.
pub(crate) const EXPERT_DONE_IOU: f64 = 0.92;
/// Distance behind the block centre where a push starts.
const APPROACH_OFFSET: f64 = 0.13;
/// Lateral offset of the detour lane used to get around the block.
const LANE_OFFSET: f64 = 0.17;
const LANE_BAND: f64 = 0.15;
const ALIGN_TOL: f64 = 0.01;
const JITTER: f64 = 0.005;

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Next agent waypoint of the stateless two-phase pushing expert.
///
/// Phase one brings the agent to the approach point on the block's far side
/// from the goal, detouring around the block along a lane when needed.
/// Phase two pushes along the block-to-goal line until the agent sits one
/// half-side short of the goal centre. Navigation waypoints get bounded
/// jitter from `rng`; pushes are exact. The waypoint is always within one
/// step's reach of the agent.
pub fn scripted_expert(state: &WorldState, rng: Option<&mut SeededRng>) -> [f64; 2] {
    let [ax, ay] = state.agent;
    let [bx, by] = state.block;
    if reward(state) >= EXPERT_DONE_IOU {
        return state.agent;
    }
    let s = sign(state.goal[0] - bx);
    // Positive when the agent is on the far side of the block from the goal.
    let behind = s * (bx - ax);
    let dy = ay - by;

    let (target, navigating) = if dy.abs() < ALIGN_TOL && behind > 0.0 && behind <= APPROACH_OFFSET + 0.01 {
        ([state.goal[0] - s * HALF_SIDE, by], false)
    } else if behind >= 0.11 {
        ([bx - s * APPROACH_OFFSET, by], true)
    } else if dy.abs() < LANE_BAND {
        ([ax, by + sign(dy) * LANE_OFFSET], true)
    } else {
        ([bx - s * APPROACH_OFFSET, ay], true)
    };
    let target = match (navigating, rng) {
        (true, Some(rng)) => [
            target[0] + rng.range(-JITTER, JITTER),
            target[1] + rng.range(-JITTER, JITTER),
        ],
        _ => target,
    };
    let v_max = Embodiment::of(state.domain).v_max;
    let (dx, dy) = (target[0] - ax, target[1] - ay);
    let dist = (dx * dx + dy * dy).sqrt();
    let reach = if dist <= v_max {
        target
    } else {
        [ax + dx * v_max / dist, ay + dy * v_max / dist]
    };
    [reach[0].clamp(0.0, 1.0), reach[1].clamp(0.0, 1.0)]
}
