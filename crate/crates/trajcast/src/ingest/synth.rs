//! Synthetic multi-agent scene generation.
//!
//! Motion families cover straight constant-velocity travel, constant
//! acceleration, constant-radius turns, lane changes (lateral sinusoid) and
//! interaction-coupled leader/follower pairs where the follower replays the
//! leader's path with a fixed delay. Coupled pairs are what make a set
//! "interaction rich": the follower's future is readable from the leader's
//! observed history but not from the follower's own.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{within_window, AgentType, SceneClip, Unit};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionFamily {
    ConstantVelocity,
    ConstantAcceleration,
    Turn,
    LaneChange,
    Coupled,
}

impl std::str::FromStr for MotionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv" | "constant_velocity" => Ok(MotionFamily::ConstantVelocity),
            "ca" | "constant_acceleration" => Ok(MotionFamily::ConstantAcceleration),
            "turn" => Ok(MotionFamily::Turn),
            "lane" | "lane_change" => Ok(MotionFamily::LaneChange),
            "coupled" => Ok(MotionFamily::Coupled),
            other => Err(Error::Parameter(format!("unknown motion family {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenes: usize,
    pub agents_min: usize,
    pub agents_max: usize,
    pub families: Vec<MotionFamily>,
    pub t_history: usize,
    pub t_future: usize,
    pub frame_rate: f64,
    /// Gaussian position jitter, in scene units.
    pub noise_sigma: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Initial positions are drawn from this box around the origin.
    pub spawn_half_width: f64,
    /// Scene window half-width; frames outside it get masked off.
    pub window_half_width: f64,
    pub accel_max: f64,
    pub turn_radius_min: f64,
    pub turn_radius_max: f64,
    pub lane_amplitude: f64,
    /// Follower delay (in steps) behind its leader in coupled pairs.
    pub couple_delay_steps: usize,
    /// Heading wiggle amplitude (radians) of coupled leaders.
    pub couple_wiggle: f64,
    /// Randomize agent slot order so models cannot memorize slot roles.
    pub shuffle_agents: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            scenes: 12,
            agents_min: 2,
            agents_max: 4,
            families: vec![MotionFamily::ConstantVelocity],
            t_history: 6,
            t_future: 6,
            frame_rate: 2.0,
            noise_sigma: 0.0,
            speed_min: 0.5,
            speed_max: 2.5,
            spawn_half_width: 30.0,
            window_half_width: 90.0,
            accel_max: 0.4,
            turn_radius_min: 8.0,
            turn_radius_max: 25.0,
            lane_amplitude: 2.0,
            couple_delay_steps: 6,
            couple_wiggle: 0.9,
            shuffle_agents: true,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.agents_min == 0 || self.agents_min > self.agents_max {
            return Err(Error::Parameter(format!(
                "agent count range [{}, {}] is invalid",
                self.agents_min, self.agents_max
            )));
        }
        if self.families.is_empty() {
            return Err(Error::Parameter("no motion families enabled".into()));
        }
        if self.t_history < 2 || self.t_future < 1 {
            return Err(Error::Parameter(format!(
                "need t_history >= 2 and t_future >= 1, got {}/{}",
                self.t_history, self.t_future
            )));
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max) {
            return Err(Error::Parameter("speed range is invalid".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Parameter("noise sigma must be >= 0".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Parameter("frame rate must be positive".into()));
        }
        if self.turn_radius_min <= 0.0 || self.turn_radius_min > self.turn_radius_max {
            return Err(Error::Parameter("turn radius range is invalid".into()));
        }
        if self.couple_delay_steps == 0 {
            return Err(Error::Parameter("couple delay must be >= 1 step".into()));
        }
        Ok(())
    }
}

fn type_speed_factor(ty: AgentType) -> f64 {
    match ty {
        AgentType::SmallVehicle => 1.0,
        AgentType::BigVehicle => 0.8,
        AgentType::Pedestrian => 0.25,
        AgentType::MotorcyclistBicyclist => 0.5,
        AgentType::Other => 0.6,
    }
}

fn sample_type(rng: &mut ChaCha8Rng) -> AgentType {
    let roll: f64 = rng.gen();
    if roll < 0.45 {
        AgentType::SmallVehicle
    } else if roll < 0.55 {
        AgentType::BigVehicle
    } else if roll < 0.80 {
        AgentType::Pedestrian
    } else {
        AgentType::MotorcyclistBicyclist
    }
}

struct AgentDraft {
    agent_type: AgentType,
    positions: Vec<[f64; 2]>,
}

/// Straight path at constant speed. Accumulates one fixed step per frame so
/// first differences (and cumulative-sum reconstructions) are bit-exact.
fn path_cv(p0: [f64; 2], heading: f64, speed: f64, dt: f64, steps: usize) -> Vec<[f64; 2]> {
    let step = [heading.cos() * speed * dt, heading.sin() * speed * dt];
    let mut pos = p0;
    (0..steps)
        .map(|_| {
            let here = pos;
            pos[0] += step[0];
            pos[1] += step[1];
            here
        })
        .collect()
}

fn path_ca(
    p0: [f64; 2],
    heading: f64,
    speed: f64,
    accel: f64,
    dt: f64,
    steps: usize,
) -> Vec<[f64; 2]> {
    let (ux, uy) = (heading.cos(), heading.sin());
    let mut out = Vec::with_capacity(steps);
    let mut pos = p0;
    let mut v = speed;
    for _ in 0..steps {
        out.push(pos);
        pos[0] += ux * v * dt;
        pos[1] += uy * v * dt;
        v = (v + accel * dt).max(0.05);
    }
    out
}

fn path_turn(
    p0: [f64; 2],
    heading: f64,
    speed: f64,
    radius: f64,
    clockwise: bool,
    dt: f64,
    steps: usize,
) -> Vec<[f64; 2]> {
    let side = if clockwise { -1.0 } else { 1.0 };
    // Circle center sits perpendicular to the heading.
    let normal = heading + side * std::f64::consts::FRAC_PI_2;
    let center = [p0[0] + radius * normal.cos(), p0[1] + radius * normal.sin()];
    let phi0 = (p0[1] - center[1]).atan2(p0[0] - center[0]);
    let omega = side * speed / radius;
    (0..steps)
        .map(|s| {
            let phi = phi0 + omega * s as f64 * dt;
            [
                center[0] + radius * phi.cos(),
                center[1] + radius * phi.sin(),
            ]
        })
        .collect()
}

fn path_lane_change(
    p0: [f64; 2],
    heading: f64,
    speed: f64,
    amplitude: f64,
    dt: f64,
    steps: usize,
) -> Vec<[f64; 2]> {
    let (ux, uy) = (heading.cos(), heading.sin());
    let (nx, ny) = (-uy, ux);
    (0..steps)
        .map(|s| {
            let d = speed * s as f64 * dt;
            let lat = amplitude * (2.0 * std::f64::consts::PI * s as f64 / steps as f64).sin();
            [p0[0] + ux * d + nx * lat, p0[1] + uy * d + ny * lat]
        })
        .collect()
}

/// Leader path with a sinusoidal heading wiggle, integrated step by step.
fn path_wiggle(
    p0: [f64; 2],
    heading: f64,
    speed: f64,
    wiggle: f64,
    period: usize,
    phase: f64,
    dt: f64,
    steps: usize,
) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(steps);
    let mut pos = p0;
    for s in 0..steps {
        out.push(pos);
        let theta = heading
            + wiggle * (2.0 * std::f64::consts::PI * s as f64 / period as f64 + phase).sin();
        pos[0] += speed * dt * theta.cos();
        pos[1] += speed * dt * theta.sin();
    }
    out
}

/// Generate deterministic clips for `cfg`; identical seeds give identical
/// clip sets.
pub fn synth_scenes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SceneClip>> {
    cfg.validate()?;
    let total = cfg.t_history + cfg.t_future;
    let dt = 1.0 / cfg.frame_rate;
    let mut clips = Vec::with_capacity(cfg.scenes);

    for scene in 0..cfg.scenes {
        let n = rng.gen_range(cfg.agents_min..=cfg.agents_max);
        let mut drafts: Vec<AgentDraft> = Vec::with_capacity(n);
        while drafts.len() < n {
            let family = *cfg.families.choose(rng).expect("validated non-empty");
            let agent_type = sample_type(rng);
            let speed =
                rng.gen_range(cfg.speed_min..=cfg.speed_max) * type_speed_factor(agent_type);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let p0 = [
                rng.gen_range(-cfg.spawn_half_width..=cfg.spawn_half_width),
                rng.gen_range(-cfg.spawn_half_width..=cfg.spawn_half_width),
            ];
            match family {
                MotionFamily::ConstantVelocity => drafts.push(AgentDraft {
                    agent_type,
                    positions: path_cv(p0, heading, speed, dt, total),
                }),
                MotionFamily::ConstantAcceleration => {
                    let accel = rng.gen_range(-cfg.accel_max..=cfg.accel_max);
                    drafts.push(AgentDraft {
                        agent_type,
                        positions: path_ca(p0, heading, speed, accel, dt, total),
                    });
                }
                MotionFamily::Turn => {
                    let radius = rng.gen_range(cfg.turn_radius_min..=cfg.turn_radius_max);
                    let clockwise = rng.gen::<bool>();
                    drafts.push(AgentDraft {
                        agent_type,
                        positions: path_turn(p0, heading, speed, radius, clockwise, dt, total),
                    });
                }
                MotionFamily::LaneChange => drafts.push(AgentDraft {
                    agent_type,
                    positions: path_lane_change(p0, heading, speed, cfg.lane_amplitude, dt, total),
                }),
                MotionFamily::Coupled => {
                    if drafts.len() + 2 > n {
                        // No room for a pair; fall back to a plain agent.
                        drafts.push(AgentDraft {
                            agent_type,
                            positions: path_cv(p0, heading, speed, dt, total),
                        });
                        continue;
                    }
                    let delay = cfg.couple_delay_steps;
                    let period = (total + delay).max(4);
                    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                    let speed = speed.max(0.8 * cfg.speed_min.max(0.5));
                    let ext = path_wiggle(
                        p0,
                        heading,
                        speed,
                        cfg.couple_wiggle,
                        period,
                        phase,
                        dt,
                        total + delay,
                    );
                    let leader: Vec<[f64; 2]> = (0..total).map(|s| ext[s + delay]).collect();
                    let (nx, ny) = (-heading.sin(), heading.cos());
                    let lateral = rng.gen_range(1.0..2.0);
                    let follower: Vec<[f64; 2]> = (0..total)
                        .map(|s| [ext[s][0] + nx * lateral, ext[s][1] + ny * lateral])
                        .collect();
                    drafts.push(AgentDraft {
                        agent_type,
                        positions: leader,
                    });
                    drafts.push(AgentDraft {
                        agent_type: sample_type(rng),
                        positions: follower,
                    });
                }
            }
        }

        if cfg.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, cfg.noise_sigma)
                .map_err(|e| Error::Parameter(format!("noise sigma: {e}")))?;
            for draft in drafts.iter_mut() {
                for p in draft.positions.iter_mut() {
                    p[0] += normal.sample(rng);
                    p[1] += normal.sample(rng);
                }
            }
        }

        if cfg.shuffle_agents {
            drafts.shuffle(rng);
        }

        // Window masking around the last-history centroid, then drop agents
        // that lost their last-history frame.
        let last = cfg.t_history - 1;
        let mut centroid = [0.0, 0.0];
        for d in &drafts {
            centroid[0] += d.positions[last][0];
            centroid[1] += d.positions[last][1];
        }
        centroid[0] /= drafts.len() as f64;
        centroid[1] /= drafts.len() as f64;

        let mut agent_ids = Vec::new();
        let mut agent_types = Vec::new();
        let mut positions = Vec::new();
        let mut mask = Vec::new();
        for (idx, draft) in drafts.into_iter().enumerate() {
            let m: Vec<bool> = draft
                .positions
                .iter()
                .map(|p| within_window(*p, centroid, cfg.window_half_width))
                .collect();
            if !m[last] {
                continue;
            }
            agent_ids.push(idx as i64 + 1);
            agent_types.push(draft.agent_type);
            positions.push(draft.positions);
            mask.push(m);
        }
        if agent_ids.is_empty() {
            continue;
        }

        let clip = SceneClip {
            scene_id: scene as u64,
            sequence_id: scene as u64,
            agent_ids,
            agent_types,
            positions,
            mask,
            t_history: cfg.t_history,
            frame_rate: cfg.frame_rate,
            origin_frame: 0,
            unit: Unit::Units,
        };
        debug_assert!(clip.validate().is_ok());
        clips.push(clip);
    }
    Ok(clips)
}
