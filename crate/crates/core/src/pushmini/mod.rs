//! Two-embodiment planar pushing benchmark.
//!
//! A point pusher moves an axis-aligned square block (side 0.2) towards an
//! equally sized goal square inside the unit square. The source pusher is
//! fast with full push gain; the target pusher is half as fast and transfers
//! only 70 % of its penetration to the block. Each embodiment reports its
//! state in its own observation layout. Variants change the background code
//! (appearance gap) and whether the goal sits left of the block (mirrored,
//! needs a different motion).

mod dataset;
mod eval;
mod expert;

pub use dataset::{
    generate_dataset, generate_episode, load_dataset_dir, read_episodes, write_episodes, DatasetFiles, DatasetSpec,
    DomainDataset, Episode, EpisodeRecord, NormBundle, DATASET_SCHEMA_VERSION,
};
pub use eval::{
    evaluate, reference_seeds, rollout, EvalResult, EvalSetting, ExpertPolicy, ModelPolicy, Policy, RolloutRecord,
};
pub use expert::scripted_expert;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::numkit::{SeededRng, Stream};

pub const SQUARE_SIDE: f64 = 0.2;
pub const HALF_SIDE: f64 = SQUARE_SIDE / 2.0;
pub const HORIZON: usize = 16;
pub const ACTION_DIM: usize = 2;
pub const EXECUTE_STEPS: usize = 8;
pub const EPISODE_CAP: usize = 200;
pub const SUCCESS_IOU: f64 = 0.9;
pub const OBS_DIM: usize = 10;
/// Columns of the background code in both layouts.
pub const SCENE_COLUMNS: [usize; 2] = [6, 7];
/// Columns fed to the embodiment stems.
pub const EMBODIMENT_COLUMNS: [usize; 8] = [0, 1, 2, 3, 4, 5, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Purple,
    PurpleMirrored,
    WhiteMirrored,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Base,
        Variant::Purple,
        Variant::PurpleMirrored,
        Variant::WhiteMirrored,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Purple => "purple",
            Variant::PurpleMirrored => "purple_mirrored",
            Variant::WhiteMirrored => "white_mirrored",
        }
    }

    pub fn is_mirrored(self) -> bool {
        matches!(self, Variant::PurpleMirrored | Variant::WhiteMirrored)
    }

    pub fn is_purple(self) -> bool {
        matches!(self, Variant::Purple | Variant::PurpleMirrored)
    }

    pub fn background_code(self) -> [f64; 2] {
        if self.is_purple() {
            [0.0, 1.0]
        } else {
            [1.0, 0.0]
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::parse("variant", format!("unknown variant {s:?}")))
    }
}

/// Embodiment constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embodiment {
    pub v_max: f64,
    pub push_gain: f64,
}

impl Embodiment {
    pub fn of(domain: Domain) -> Self {
        match domain {
            Domain::Source => Embodiment {
                v_max: 0.04,
                push_gain: 1.0,
            },
            Domain::Target => Embodiment {
                v_max: 0.02,
                push_gain: 0.7,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent: [f64; 2],
    pub block: [f64; 2],
    pub goal: [f64; 2],
    pub variant: Variant,
    pub domain: Domain,
    pub step: usize,
    /// Per-episode nuisance features: source pad noise or target distractor.
    pub extra: [f64; 2],
}

/// Outcome of one [`step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    /// The commanded target lay outside the unit square and was clamped.
    pub clamped: bool,
}

fn clamp_center(c: f64) -> f64 {
    c.clamp(HALF_SIDE, 1.0 - HALF_SIDE)
}

fn inside_block(p: [f64; 2], block: [f64; 2]) -> bool {
    (p[0] - block[0]).abs() < HALF_SIDE && (p[1] - block[1]).abs() < HALF_SIDE
}

impl WorldState {
    /// Initial state for `seed`: block centre in `[0.35, 0.65] x [0.3, 0.7]`,
    /// goal displaced horizontally by `d ∈ [0.15, 0.25]` (right for
    /// unmirrored variants, left for mirrored ones), agent uniform outside
    /// the block.
    pub fn reset(domain: Domain, variant: Variant, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, Stream::Environment);
        let block = [rng.range(0.35, 0.65), rng.range(0.3, 0.7)];
        let d = rng.range(0.15, 0.25);
        let side = if variant.is_mirrored() { -1.0 } else { 1.0 };
        let goal = [block[0] + side * d, block[1]];
        let mut agent = [rng.range(0.05, 0.95), rng.range(0.05, 0.95)];
        while inside_block(agent, block) {
            agent = [rng.range(0.05, 0.95), rng.range(0.05, 0.95)];
        }
        let extra = [rng.uniform(), rng.uniform()];
        WorldState {
            agent,
            block,
            goal,
            variant,
            domain,
            step: 0,
            extra,
        }
    }
}

/// Advances the world by one control step towards `agent_target`.
///
/// The agent moves straight towards the (clamped) target by at most
/// `v_max`. If it ends inside the block, the block is displaced along the
/// axis of least penetration by `gain` times the penetration depth and then
/// clamped to stay inside the unit square.
pub fn step(state: &WorldState, agent_target: [f64; 2]) -> StepOutcome {
    let emb = Embodiment::of(state.domain);
    let target = [agent_target[0].clamp(0.0, 1.0), agent_target[1].clamp(0.0, 1.0)];
    let clamped = target != agent_target;
    let (dx, dy) = (target[0] - state.agent[0], target[1] - state.agent[1]);
    let dist = (dx * dx + dy * dy).sqrt();
    let agent = if dist <= emb.v_max {
        target
    } else {
        let s = emb.v_max / dist;
        [state.agent[0] + dx * s, state.agent[1] + dy * s]
    };

    let mut block = state.block;
    if inside_block(agent, block) {
        let off = [agent[0] - block[0], agent[1] - block[1]];
        let pen = [HALF_SIDE - off[0].abs(), HALF_SIDE - off[1].abs()];
        // The block is pushed away from the agent along the shallower axis.
        let axis = if pen[0] <= pen[1] { 0 } else { 1 };
        let dir = if off[axis] > 0.0 { -1.0 } else { 1.0 };
        block[axis] = clamp_center(block[axis] + dir * emb.push_gain * pen[axis]);
    }
    StepOutcome {
        state: WorldState {
            agent,
            block,
            step: state.step + 1,
            ..*state
        },
        clamped,
    }
}

/// Intersection over union of two axis-aligned squares of side
/// [`SQUARE_SIDE`] with the given centres.
pub fn square_iou(a: [f64; 2], b: [f64; 2]) -> f64 {
    let overlap = |u: f64, v: f64| (SQUARE_SIDE - (u - v).abs()).max(0.0);
    let inter = overlap(a[0], b[0]) * overlap(a[1], b[1]);
    let area = SQUARE_SIDE * SQUARE_SIDE;
    inter / (2.0 * area - inter)
}

pub fn reward(state: &WorldState) -> f64 {
    square_iou(state.block, state.goal)
}

/// Feature vector in the layout of `state.domain`.
///
/// Source: `[agent, block, goal, bg, pad]`; target:
/// `[goal, agent, block, bg, distractor]`.
pub fn observe(state: &WorldState) -> [f64; OBS_DIM] {
    let [a, b, g, bg, e] = [
        state.agent,
        state.block,
        state.goal,
        state.variant.background_code(),
        state.extra,
    ];
    match state.domain {
        Domain::Source => [a[0], a[1], b[0], b[1], g[0], g[1], bg[0], bg[1], e[0], e[1]],
        Domain::Target => [g[0], g[1], a[0], a[1], b[0], b[1], bg[0], bg[1], e[0], e[1]],
    }
}

/// Fields recovered from an observation in its own domain's layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedObservation {
    pub agent: [f64; 2],
    pub block: [f64; 2],
    pub goal: [f64; 2],
    pub background: [f64; 2],
    pub extra: [f64; 2],
}

pub fn decode_observation(domain: Domain, obs: &[f64]) -> Result<DecodedObservation> {
    if obs.len() != OBS_DIM {
        return Err(Error::shape(format!(
            "observation has {} values, expected {OBS_DIM}",
            obs.len()
        )));
    }
    let p = |k: usize| [obs[k], obs[k + 1]];
    let (agent, block, goal) = match domain {
        Domain::Source => (p(0), p(2), p(4)),
        Domain::Target => (p(2), p(4), p(0)),
    };
    Ok(DecodedObservation {
        agent,
        block,
        goal,
        background: p(6),
        extra: p(8),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(domain: Domain, agent: [f64; 2], block: [f64; 2]) -> WorldState {
        WorldState {
            agent,
            block,
            goal: [0.8, 0.5],
            variant: Variant::Base,
            domain,
            step: 0,
            extra: [0.0, 0.0],
        }
    }

    #[test]
    fn far_agent_leaves_block() {
        let s = state(Domain::Source, [0.1, 0.1], [0.5, 0.5]);
        let out = step(&s, [0.12, 0.1]);
        assert_eq!(out.state.block, s.block);
        assert_eq!(out.state.agent, [0.12, 0.1]);
    }

    #[test]
    fn overlap_moves_block_by_gain() {
        // Agent ends 0.01 inside the left face.
        let delta = 0.01;
        for (domain, gain) in [(Domain::Source, 1.0), (Domain::Target, 0.7)] {
            let s = state(domain, [0.4 - 0.005, 0.5], [0.5, 0.5]);
            let out = step(&s, [0.4 + delta, 0.5]);
            assert!((out.state.agent[0] - (0.4 + delta)).abs() < 1e-12);
            assert!((out.state.block[0] - (0.5 + gain * delta)).abs() < 1e-12);
            assert_eq!(out.state.block[1], 0.5);
        }
    }

    #[test]
    fn speed_is_capped() {
        let s = state(Domain::Target, [0.1, 0.1], [0.5, 0.5]);
        let out = step(&s, [0.9, 0.1]);
        assert!((out.state.agent[0] - 0.12).abs() < 1e-12);
        assert!(!out.clamped);
        assert!(step(&s, [1.5, 0.1]).clamped);
    }

    #[test]
    fn iou_closed_forms() {
        assert_eq!(square_iou([0.5, 0.5], [0.5, 0.5]), 1.0);
        assert_eq!(square_iou([0.2, 0.2], [0.7, 0.7]), 0.0);
        assert!((square_iou([0.5, 0.5], [0.6, 0.5]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn observation_round_trip() {
        for domain in [Domain::Source, Domain::Target] {
            let s = WorldState::reset(domain, Variant::PurpleMirrored, 11);
            let d = decode_observation(domain, &observe(&s)).unwrap();
            assert_eq!((d.agent, d.block, d.goal, d.extra), (s.agent, s.block, s.goal, s.extra));
            assert_eq!(d.background, [0.0, 1.0]);
        }
    }

    #[test]
    fn reset_respects_variant_geometry() {
        for seed in 0..200 {
            let base = WorldState::reset(Domain::Target, Variant::Base, seed);
            let mirrored = WorldState::reset(Domain::Target, Variant::WhiteMirrored, seed);
            assert!(base.goal[0] > base.block[0]);
            assert!(mirrored.goal[0] < mirrored.block[0]);
            for s in [base, mirrored] {
                assert!(!inside_block(s.agent, s.block));
                for c in s.block.iter().chain(&s.goal) {
                    assert!((HALF_SIDE..=1.0 - HALF_SIDE).contains(c));
                }
            }
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("mirrored".parse::<Variant>().is_err());
    }
}
