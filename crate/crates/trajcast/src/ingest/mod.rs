//! Trajectory dataset ingestion: record parsing, clip segmentation,
//! synthetic scene generation and the canonical clip file format.

mod apolloscape;
mod clipfile;
mod csvio;
mod segment;
mod synth;

pub use apolloscape::parse_apolloscape;
pub use clipfile::{read_clips, read_clips_from, write_clips, write_clips_to, CLIP_SCHEMA_VERSION};
pub use csvio::parse_generic_csv;
pub use segment::{downsample, segment_clips, split_train_val, ReferencePolicy, SegmentConfig};
pub use synth::{synth_scenes, MotionFamily, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-way agent taxonomy used by the urban trajectory datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    SmallVehicle,
    BigVehicle,
    Pedestrian,
    MotorcyclistBicyclist,
    Other,
}

impl AgentType {
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(AgentType::SmallVehicle),
            2 => Some(AgentType::BigVehicle),
            3 => Some(AgentType::Pedestrian),
            4 => Some(AgentType::MotorcyclistBicyclist),
            5 => Some(AgentType::Other),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            AgentType::SmallVehicle => 1,
            AgentType::BigVehicle => 2,
            AgentType::Pedestrian => 3,
            AgentType::MotorcyclistBicyclist => 4,
            AgentType::Other => 5,
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "small_vehicle" => Some(AgentType::SmallVehicle),
            "big_vehicle" => Some(AgentType::BigVehicle),
            "pedestrian" => Some(AgentType::Pedestrian),
            "motorcyclist_bicyclist" => Some(AgentType::MotorcyclistBicyclist),
            "other" => Some(AgentType::Other),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentType::SmallVehicle => "small_vehicle",
            AgentType::BigVehicle => "big_vehicle",
            AgentType::Pedestrian => "pedestrian",
            AgentType::MotorcyclistBicyclist => "motorcyclist_bicyclist",
            AgentType::Other => "other",
        }
    }
}

/// Coordinate unit a dataset is expressed in; travels with clips so metric
/// reports can state it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Feet,
    Meters,
    Units,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::Feet => "feet",
            Unit::Meters => "meters",
            Unit::Units => "units",
        };
        f.write_str(s)
    }
}

/// One observation of one agent at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentRecord {
    pub frame_id: i64,
    pub agent_id: i64,
    pub agent_type: AgentType,
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    pub heading: Option<f64>,
}

/// A parse problem at a specific input line or row.
#[derive(Clone, Debug)]
pub struct LineError {
    pub line: usize,
    pub msg: String,
}

/// Records plus recoverable per-line failures (non-strict parsing).
#[derive(Clone, Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<AgentRecord>,
    pub errors: Vec<LineError>,
}

/// One training/evaluation sample: every agent's positions over
/// `t_history + t_future` frames, with a validity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneClip {
    pub scene_id: u64,
    /// Source sequence, for leakage-free train/val splits.
    pub sequence_id: u64,
    pub agent_ids: Vec<i64>,
    pub agent_types: Vec<AgentType>,
    /// `n × (t_history + t_future)` positions; entries at mask-false frames
    /// are fill values and carry no meaning.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// True where the agent was actually observed (and inside the scene
    /// window used at segmentation time).
    pub mask: Vec<Vec<bool>>,
    pub t_history: usize,
    pub frame_rate: f64,
    pub origin_frame: i64,
    pub unit: Unit,
}

impl SceneClip {
    pub fn num_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn total_steps(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn t_future(&self) -> usize {
        self.total_steps().saturating_sub(self.t_history)
    }

    /// Index of the last history frame.
    pub fn last_history_index(&self) -> usize {
        self.t_history - 1
    }

    /// Structural invariants every clip must satisfy.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_agents();
        if n == 0 {
            return Err(Error::Data("clip has no agents".into()));
        }
        if self.t_history < 2 {
            return Err(Error::Data(format!(
                "clip needs t_history >= 2, got {}",
                self.t_history
            )));
        }
        let total = self.total_steps();
        if total <= self.t_history {
            return Err(Error::Data(format!(
                "clip has {total} steps but t_history is {}",
                self.t_history
            )));
        }
        if self.agent_types.len() != n || self.positions.len() != n || self.mask.len() != n {
            return Err(Error::Data("clip field lengths disagree".into()));
        }
        let last = self.last_history_index();
        for (i, (pos, mask)) in self.positions.iter().zip(&self.mask).enumerate() {
            if pos.len() != total || mask.len() != total {
                return Err(Error::Data(format!("agent {i} has a ragged frame axis")));
            }
            if !mask[last] {
                return Err(Error::Data(format!(
                    "agent {} unobserved at the last history frame",
                    self.agent_ids[i]
                )));
            }
            for (t, (p, m)) in pos.iter().zip(mask).enumerate() {
                if *m && !(p[0].is_finite() && p[1].is_finite()) {
                    return Err(Error::Data(format!(
                        "agent {} has a non-finite position at frame {t}",
                        self.agent_ids[i]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reference point for the spatial window: centroid of the agents
    /// observed at the last history frame.
    pub fn centroid_at_last_history(&self) -> [f64; 2] {
        let last = self.last_history_index();
        let mut acc = [0.0, 0.0];
        let mut count = 0usize;
        for (pos, mask) in self.positions.iter().zip(&self.mask) {
            if mask[last] {
                acc[0] += pos[last][0];
                acc[1] += pos[last][1];
                count += 1;
            }
        }
        if count > 0 {
            acc[0] /= count as f64;
            acc[1] /= count as f64;
        }
        acc
    }
}

/// True when `p` lies inside the axis-aligned box of half-width `half`
/// around `reference`.
pub fn within_window(p: [f64; 2], reference: [f64; 2], half: f64) -> bool {
    (p[0] - reference[0]).abs() <= half && (p[1] - reference[1]).abs() <= half
}

/// Count mask-true frames whose position falls outside the window.
pub fn window_violations(clip: &SceneClip, reference: [f64; 2], half: f64) -> usize {
    clip.positions
        .iter()
        .zip(&clip.mask)
        .flat_map(|(pos, mask)| pos.iter().zip(mask))
        .filter(|(p, m)| **m && !within_window(**p, reference, half))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_clip() -> SceneClip {
        SceneClip {
            scene_id: 0,
            sequence_id: 0,
            agent_ids: vec![7],
            agent_types: vec![AgentType::Pedestrian],
            positions: vec![vec![[0.0, 0.0], [1.0, 0.5], [2.0, 1.0], [3.0, 1.5]]],
            mask: vec![vec![true; 4]],
            t_history: 2,
            frame_rate: 2.0,
            origin_frame: 0,
            unit: Unit::Units,
        }
    }

    #[test]
    fn valid_clip_passes() {
        tiny_clip().validate().unwrap();
    }

    #[test]
    fn missing_last_history_frame_is_rejected() {
        let mut clip = tiny_clip();
        clip.mask[0][1] = false;
        assert!(clip.validate().is_err());
    }

    #[test]
    fn short_history_is_rejected() {
        let mut clip = tiny_clip();
        clip.t_history = 1;
        assert!(clip.validate().is_err());
    }

    #[test]
    fn type_codes_round_trip() {
        for code in 1..=5 {
            let ty = AgentType::from_code(code).unwrap();
            assert_eq!(ty.code(), code);
            assert_eq!(AgentType::from_name(ty.name()), Some(ty));
        }
        assert!(AgentType::from_code(0).is_none());
        assert!(AgentType::from_code(6).is_none());
    }
}
