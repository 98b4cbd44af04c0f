//! Sliding-window clip segmentation, frame downsampling and
//! sequence-granularity train/validation splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{within_window, AgentRecord, AgentType, SceneClip, Unit};
use crate::error::{Error, Result};

/// How the spatial window's reference point is chosen at the last history
/// frame of each window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferencePolicy {
    /// Centroid of all agents present at the last history frame.
    Centroid,
    /// A designated agent; windows where it is absent produce no clip.
    Agent(i64),
}

#[derive(Clone, Debug)]
pub struct SegmentConfig {
    pub t_history: usize,
    pub t_future: usize,
    pub stride: usize,
    /// Half-width of the axis-aligned scene window.
    pub window_half_width: f64,
    pub reference: ReferencePolicy,
    pub frame_rate: f64,
    pub unit: Unit,
}

impl SegmentConfig {
    fn validate(&self) -> Result<()> {
        if self.t_history < 2 || self.t_future < 1 {
            return Err(Error::Parameter(format!(
                "segmentation needs t_history >= 2 and t_future >= 1, got {}/{}",
                self.t_history, self.t_future
            )));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be >= 1".into()));
        }
        if !(self.window_half_width > 0.0) {
            return Err(Error::Parameter(
                "window half width must be positive".into(),
            ));
        }
        Ok(())
    }
}

type FrameIndex<'a> = BTreeMap<i64, BTreeMap<i64, &'a AgentRecord>>;

fn index_by_frame(records: &[AgentRecord]) -> FrameIndex<'_> {
    let mut index: FrameIndex = BTreeMap::new();
    for rec in records {
        index
            .entry(rec.frame_id)
            .or_default()
            .insert(rec.agent_id, rec);
    }
    index
}

/// Cut one sequence of records into sliding-window clips.
///
/// Agents absent at the window's last history frame are dropped; agents
/// outside the window around the reference point at that frame are dropped;
/// remaining agents get frames outside the window masked off. A sequence
/// shorter than one window yields no clips.
pub fn segment_clips(
    records: &[AgentRecord],
    cfg: &SegmentConfig,
    sequence_id: u64,
    next_scene_id: &mut u64,
) -> Result<Vec<SceneClip>> {
    cfg.validate()?;
    let index = index_by_frame(records);
    let total = cfg.t_history + cfg.t_future;
    let (Some(&f_min), Some(&f_max)) = (index.keys().next(), index.keys().next_back()) else {
        return Ok(Vec::new());
    };
    let span = (f_max - f_min + 1) as usize;
    if span < total {
        return Ok(Vec::new());
    }

    let mut clips = Vec::new();
    let mut start = f_min;
    while start + total as i64 - 1 <= f_max {
        let last_hist = start + cfg.t_history as i64 - 1;
        if let Some(clip) = build_window(&index, cfg, start, last_hist, total, sequence_id, {
            *next_scene_id
        }) {
            clips.push(clip);
            *next_scene_id += 1;
        }
        start += cfg.stride as i64;
    }
    Ok(clips)
}

fn build_window(
    index: &FrameIndex,
    cfg: &SegmentConfig,
    start: i64,
    last_hist: i64,
    total: usize,
    sequence_id: u64,
    scene_id: u64,
) -> Option<SceneClip> {
    let at_last = index.get(&last_hist)?;
    if at_last.is_empty() {
        return None;
    }
    let reference = match cfg.reference {
        ReferencePolicy::Centroid => {
            let mut acc = [0.0, 0.0];
            for rec in at_last.values() {
                acc[0] += rec.x;
                acc[1] += rec.y;
            }
            [acc[0] / at_last.len() as f64, acc[1] / at_last.len() as f64]
        }
        ReferencePolicy::Agent(id) => {
            let rec = at_last.get(&id)?;
            [rec.x, rec.y]
        }
    };

    let mut agent_ids = Vec::new();
    let mut agent_types: Vec<AgentType> = Vec::new();
    for (&id, rec) in at_last.iter() {
        if within_window([rec.x, rec.y], reference, cfg.window_half_width) {
            agent_ids.push(id);
            agent_types.push(rec.agent_type);
        }
    }
    if agent_ids.is_empty() {
        return None;
    }

    let mut positions = vec![vec![[0.0, 0.0]; total]; agent_ids.len()];
    let mut mask = vec![vec![false; total]; agent_ids.len()];
    for (slot, &id) in agent_ids.iter().enumerate() {
        for t in 0..total {
            let frame = start + t as i64;
            if let Some(rec) = index.get(&frame).and_then(|m| m.get(&id)) {
                let p = [rec.x, rec.y];
                if within_window(p, reference, cfg.window_half_width) {
                    positions[slot][t] = p;
                    mask[slot][t] = true;
                }
            }
        }
    }

    Some(SceneClip {
        scene_id,
        sequence_id,
        agent_ids,
        agent_types,
        positions,
        mask,
        t_history: cfg.t_history,
        frame_rate: cfg.frame_rate,
        origin_frame: start,
        unit: cfg.unit,
    })
}

/// Keep every `factor`-th frame (counted from the earliest frame present)
/// and renumber frames consecutively.
pub fn downsample(records: &[AgentRecord], factor: usize) -> Result<Vec<AgentRecord>> {
    if factor == 0 {
        return Err(Error::Parameter("downsample factor must be >= 1".into()));
    }
    if factor == 1 || records.is_empty() {
        return Ok(records.to_vec());
    }
    let f_min = records.iter().map(|r| r.frame_id).min().unwrap();
    let mut kept: Vec<AgentRecord> = records
        .iter()
        .filter(|r| (r.frame_id - f_min).rem_euclid(factor as i64) == 0)
        .cloned()
        .map(|mut r| {
            r.frame_id = (r.frame_id - f_min) / factor as i64;
            r
        })
        .collect();
    kept.sort_by_key(|r| (r.frame_id, r.agent_id));
    Ok(kept)
}

/// Split clips into (train, val) with no sequence appearing on both sides.
pub fn split_train_val<R: Rng>(
    clips: Vec<SceneClip>,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<SceneClip>, Vec<SceneClip>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut sequences: Vec<u64> = clips.iter().map(|c| c.sequence_id).collect();
    sequences.sort_unstable();
    sequences.dedup();
    if sequences.len() < 2 {
        // A single sequence cannot be split without leakage.
        return Ok((clips, Vec::new()));
    }
    sequences.shuffle(rng);
    let raw = (fraction * sequences.len() as f64).round() as usize;
    let k = raw.clamp(1, sequences.len() - 1);
    let val_ids: std::collections::BTreeSet<u64> = sequences[..k].iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for clip in clips {
        if val_ids.contains(&clip.sequence_id) {
            val.push(clip);
        } else {
            train.push(clip);
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(frame: i64, id: i64, x: f64, y: f64) -> AgentRecord {
        AgentRecord {
            frame_id: frame,
            agent_id: id,
            agent_type: AgentType::SmallVehicle,
            x,
            y,
            z: None,
            length: None,
            width: None,
            height: None,
            heading: None,
        }
    }

    fn cfg(t_h: usize, t_f: usize, window: f64) -> SegmentConfig {
        SegmentConfig {
            t_history: t_h,
            t_future: t_f,
            stride: 1,
            window_half_width: window,
            reference: ReferencePolicy::Centroid,
            frame_rate: 5.0,
            unit: Unit::Feet,
        }
    }

    #[test]
    fn full_presence_yields_one_clip_with_full_mask() {
        let records: Vec<AgentRecord> = (1..=8).map(|f| rec(f, 1, f as f64, 0.0)).collect();
        let mut next_id = 0;
        let clips = segment_clips(&records, &cfg(3, 5, 90.0), 0, &mut next_id).unwrap();
        assert_eq!(clips.len(), 1);
        assert!(clips[0].mask[0].iter().all(|m| *m));
        assert_eq!(clips[0].origin_frame, 1);
        clips[0].validate().unwrap();
    }

    #[test]
    fn agent_absent_at_last_history_frame_is_excluded() {
        let mut records: Vec<AgentRecord> = (1..=8).map(|f| rec(f, 1, f as f64, 0.0)).collect();
        // Second agent misses frame 3 (the last history frame of the only window).
        for f in (1..=8).filter(|f| *f != 3) {
            records.push(rec(f, 2, f as f64, 5.0));
        }
        let mut next_id = 0;
        let clips = segment_clips(&records, &cfg(3, 5, 90.0), 0, &mut next_id).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].agent_ids, vec![1]);
    }

    #[test]
    fn distant_agent_outside_window_of_reference_agent_is_dropped() {
        let mut records = Vec::new();
        for f in 1..=8 {
            records.push(rec(f, 1, 0.0, 0.0));
            records.push(rec(f, 2, 200.0, 0.0));
        }
        let mut seg = cfg(3, 5, 90.0);
        seg.reference = ReferencePolicy::Agent(1);
        let mut next_id = 0;
        let clips = segment_clips(&records, &seg, 0, &mut next_id).unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].agent_ids, vec![1]);
    }

    #[test]
    fn short_sequence_yields_no_clips() {
        let records: Vec<AgentRecord> = (1..=5).map(|f| rec(f, 1, 0.0, 0.0)).collect();
        let mut next_id = 0;
        let clips = segment_clips(&records, &cfg(3, 5, 90.0), 0, &mut next_id).unwrap();
        assert!(clips.is_empty());
    }

    #[test]
    fn missing_intermediate_frames_are_mask_marked() {
        let records: Vec<AgentRecord> = (1..=8)
            .filter(|f| *f != 2)
            .map(|f| rec(f, 1, f as f64, 0.0))
            .collect();
        let mut next_id = 0;
        let clips = segment_clips(&records, &cfg(3, 5, 90.0), 0, &mut next_id).unwrap();
        assert_eq!(clips.len(), 1);
        assert!(!clips[0].mask[0][1]);
        assert!(clips[0].mask[0][0] && clips[0].mask[0][2]);
    }

    #[test]
    fn downsample_keeps_every_factor_th_frame() {
        let records: Vec<AgentRecord> = (0..10).map(|f| rec(f, 1, f as f64, 0.0)).collect();
        let out = downsample(&records, 2).unwrap();
        assert_eq!(out.len(), 5);
        let frames: Vec<i64> = out.iter().map(|r| r.frame_id).collect();
        assert_eq!(frames, vec![0, 1, 2, 3, 4]);
        let xs: Vec<f64> = out.iter().map(|r| r.x).collect();
        assert_eq!(xs, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn downsample_factor_one_is_identity() {
        let records: Vec<AgentRecord> = (0..3).map(|f| rec(f, 1, f as f64, 0.0)).collect();
        assert_eq!(downsample(&records, 1).unwrap(), records);
        assert_eq!(downsample(&records, 2).unwrap().len(), 2);
    }

    #[test]
    fn downsample_composes_multiplicatively() {
        let records: Vec<AgentRecord> = (0..24).map(|f| rec(f, 1, f as f64, 0.0)).collect();
        let twice = downsample(&downsample(&records, 2).unwrap(), 3).unwrap();
        let once = downsample(&records, 6).unwrap();
        assert_eq!(twice, once);
    }

    fn clip_with_sequence(seq: u64, id: u64) -> SceneClip {
        SceneClip {
            scene_id: id,
            sequence_id: seq,
            agent_ids: vec![1],
            agent_types: vec![AgentType::SmallVehicle],
            positions: vec![vec![[0.0, 0.0]; 4]],
            mask: vec![vec![true; 4]],
            t_history: 2,
            frame_rate: 5.0,
            origin_frame: 0,
            unit: Unit::Feet,
        }
    }

    #[test]
    fn split_is_a_partition_at_sequence_granularity() {
        let clips: Vec<SceneClip> = (0..10u64)
            .flat_map(|seq| (0..3u64).map(move |i| clip_with_sequence(seq, seq * 3 + i)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (train, val) = split_train_val(clips.clone(), 0.2, &mut rng).unwrap();
        assert_eq!(train.len() + val.len(), clips.len());
        let val_seqs: std::collections::BTreeSet<u64> = val.iter().map(|c| c.sequence_id).collect();
        assert_eq!(val_seqs.len(), 2);
        assert!(train.iter().all(|c| !val_seqs.contains(&c.sequence_id)));
    }

    #[test]
    fn two_sequences_at_half_split_one_each() {
        let clips = vec![clip_with_sequence(0, 0), clip_with_sequence(1, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, val) = split_train_val(clips, 0.5, &mut rng).unwrap();
        assert_eq!((train.len(), val.len()), (1, 1));
    }
}
