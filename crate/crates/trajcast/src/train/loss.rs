//! Regression loss: mean over future steps of the mean Euclidean distance
//! between predicted and ground-truth positions, over observed agents.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor};

#[derive(Clone, Debug)]
pub struct LossReport {
    /// Mean of the included per-step losses.
    pub total: f64,
    /// One entry per future step; steps with no observed agent hold 0 and
    /// are excluded from the mean.
    pub per_step: Vec<f64>,
    /// Agents that contributed at least one step.
    pub masked_agent_count: usize,
}

/// Plain (non-differentiable) loss over reconstructed positions.
pub fn loss_report(
    pred: &[Vec<[f64; 2]>],
    gt: &[Vec<[f64; 2]>],
    mask: &[Vec<bool>],
) -> Result<LossReport> {
    if pred.len() != gt.len() || pred.len() != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "loss agents",
            lhs: vec![pred.len()],
            rhs: vec![gt.len()],
        });
    }
    let t_f = pred.first().map_or(0, |p| p.len());
    for ((p, g), m) in pred.iter().zip(gt).zip(mask) {
        if p.len() != t_f || g.len() != t_f || m.len() != t_f {
            return Err(Error::ShapeMismatch {
                op: "loss steps",
                lhs: vec![p.len()],
                rhs: vec![t_f],
            });
        }
    }
    let mut per_step = Vec::with_capacity(t_f);
    let mut included = 0usize;
    let mut sum = 0.0;
    for s in 0..t_f {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..pred.len() {
            if mask[i][s] {
                let dx = pred[i][s][0] - gt[i][s][0];
                let dy = pred[i][s][1] - gt[i][s][1];
                acc += (dx * dx + dy * dy).sqrt();
                count += 1;
            }
        }
        if count > 0 {
            let step_loss = acc / count as f64;
            per_step.push(step_loss);
            sum += step_loss;
            included += 1;
        } else {
            per_step.push(0.0);
        }
    }
    let total = if included > 0 {
        sum / included as f64
    } else {
        0.0
    };
    let masked_agent_count = mask.iter().filter(|m| m.iter().any(|v| *v)).count();
    Ok(LossReport {
        total,
        per_step,
        masked_agent_count,
    })
}

/// Differentiable loss over per-step position tensors (`[1, 2*n_max]` each).
///
/// `gt_flat[s]` is the ground truth in the same slot layout and
/// `slot_weights[s]` holds one weight per agent slot (typically
/// `mask / count`, zero on padding). Steps whose weights are all zero are
/// excluded from the mean.
pub fn loss_graph(
    tape: &Tape,
    step_positions: &[Tensor],
    gt_flat: &[Vec<f64>],
    slot_weights: &[Vec<f64>],
) -> Result<Option<Tensor>> {
    if step_positions.len() != gt_flat.len() || step_positions.len() != slot_weights.len() {
        return Err(Error::Usage(
            "loss_graph: step counts disagree across inputs".into(),
        ));
    }
    let mut acc: Option<Tensor> = None;
    let mut included = 0usize;
    for ((pos, gt), weights) in step_positions.iter().zip(gt_flat).zip(slot_weights) {
        if weights.iter().all(|w| *w == 0.0) {
            continue;
        }
        let gt_t = Tensor::from_vec(&pos.shape(), gt.clone())?;
        let diff = tape.sub(pos, &gt_t)?;
        let sq = tape.mul(&diff, &diff)?;
        let per_agent = tape.sum_pairs(&sq)?;
        let dist = tape.sqrt(&per_agent)?;
        let step_loss = tape.weighted_sum(&dist, weights)?;
        acc = Some(match acc {
            None => step_loss,
            Some(prev) => tape.add(&prev, &step_loss)?,
        });
        included += 1;
    }
    match acc {
        None => Ok(None),
        Some(total) => Ok(Some(tape.scale(&total, 1.0 / included as f64)?)),
    }
}
