//! Constant-velocity extrapolation baseline.

use crate::error::{Error, Result};
use crate::ingest::SceneClip;
use crate::model::PredictionResult;
use crate::preprocess::to_velocity;

/// Extrapolate every agent with its trailing velocity for the clip's future
/// horizon. `window` averages the last `window` observed velocity steps
/// (1 reproduces exactly the rollout of a zeroed-readout residual decoder).
pub fn cv_baseline(clip: &SceneClip, window: usize) -> Result<PredictionResult> {
    if window == 0 {
        return Err(Error::Parameter("cv window must be >= 1".into()));
    }
    let input = to_velocity(clip)?;
    let t_h = clip.t_history;
    let t_f = clip.t_future();
    let n = clip.num_agents();
    let values = input.values.value();
    let window = window.min(t_h - 1);

    let mut velocities = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = [0.0, 0.0];
        // Velocity columns 1..t_h hold first differences; column 0 is the
        // front pad.
        for t in (t_h - window)..t_h {
            let base = (i * t_h + t) * 2;
            v[0] += values[base];
            v[1] += values[base + 1];
        }
        v[0] /= window as f64;
        v[1] /= window as f64;

        let mut p = input.last_positions[i];
        let mut agent_pos = Vec::with_capacity(t_f);
        for _ in 0..t_f {
            p[0] += v[0];
            p[1] += v[1];
            agent_pos.push(p);
        }
        velocities.push(vec![v; t_f]);
        positions.push(agent_pos);
    }
    Ok(PredictionResult {
        velocities,
        positions,
        per_member_velocities: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AgentType, Unit};

    fn clip(positions: Vec<Vec<[f64; 2]>>, t_history: usize) -> SceneClip {
        let n = positions.len();
        let total = positions[0].len();
        SceneClip {
            scene_id: 0,
            sequence_id: 0,
            agent_ids: (1..=n as i64).collect(),
            agent_types: vec![AgentType::SmallVehicle; n],
            positions,
            mask: vec![vec![true; total]; n],
            t_history,
            frame_rate: 2.0,
            origin_frame: 0,
            unit: Unit::Units,
        }
    }

    #[test]
    fn linear_extrapolation_from_last_velocity() {
        let c = clip(
            vec![vec![
                [3.0, 5.0],
                [4.0, 5.0],
                [5.0, 5.0],
                [0.0, 0.0],
                [0.0, 0.0],
            ]],
            3,
        );
        let result = cv_baseline(&c, 1).unwrap();
        assert_eq!(result.positions[0], vec![[6.0, 5.0], [7.0, 5.0]]);
    }

    #[test]
    fn stationary_agent_stays_put() {
        let c = clip(vec![vec![[2.0, 2.0]; 6]], 3);
        let result = cv_baseline(&c, 1).unwrap();
        assert!(result.positions[0].iter().all(|p| *p == [2.0, 2.0]));
    }

    #[test]
    fn averaged_window_smooths_the_last_steps() {
        // Velocities: (1,0) then (3,0); window 2 averages to (2,0).
        let c = clip(
            vec![vec![[0.0, 0.0], [1.0, 0.0], [4.0, 0.0], [0.0, 0.0]]],
            3,
        );
        let result = cv_baseline(&c, 2).unwrap();
        assert_eq!(result.positions[0], vec![[6.0, 0.0]]);
        assert!(cv_baseline(&c, 0).is_err());
    }

    #[test]
    fn unobserved_trailing_step_extrapolates_as_stationary() {
        let mut c = clip(
            vec![vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [9.0, 9.0]]],
            3,
        );
        c.mask[0][1] = false; // breaks both velocity pairs in history
        c.mask[0][0] = false;
        let result = cv_baseline(&c, 1).unwrap();
        assert_eq!(result.positions[0], vec![[2.0, 0.0]]);
    }
}
