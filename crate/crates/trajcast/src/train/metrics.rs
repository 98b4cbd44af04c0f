//! Displacement-error metrics: per-horizon RMSE, per-class ADE/FDE and
//! their class-weighted sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AgentType, Unit};

/// Class weights of the weighted displacement sums.
pub const WEIGHT_VEHICLE: f64 = 0.20;
pub const WEIGHT_PEDESTRIAN: f64 = 0.58;
pub const WEIGHT_BICYCLE: f64 = 0.22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricClass {
    Vehicle,
    Pedestrian,
    Bicycle,
}

impl MetricClass {
    pub fn of(agent_type: AgentType) -> Option<MetricClass> {
        match agent_type {
            AgentType::SmallVehicle | AgentType::BigVehicle => Some(MetricClass::Vehicle),
            AgentType::Pedestrian => Some(MetricClass::Pedestrian),
            AgentType::MotorcyclistBicyclist => Some(MetricClass::Bicycle),
            AgentType::Other => None,
        }
    }

    pub fn weight(self) -> f64 {
        match self {
            MetricClass::Vehicle => WEIGHT_VEHICLE,
            MetricClass::Pedestrian => WEIGHT_PEDESTRIAN,
            MetricClass::Bicycle => WEIGHT_BICYCLE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricClass::Vehicle => "vehicle",
            MetricClass::Pedestrian => "pedestrian",
            MetricClass::Bicycle => "bicycle",
        }
    }
}

/// One scene's prediction paired with its ground truth.
#[derive(Clone, Debug)]
pub struct ScenePrediction {
    pub pred: Vec<Vec<[f64; 2]>>,
    pub gt: Vec<Vec<[f64; 2]>>,
    pub mask: Vec<Vec<bool>>,
    pub agent_types: Vec<AgentType>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HorizonRmse {
    pub second: usize,
    pub step: usize,
    pub rmse: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub unit: String,
    pub frame_rate: f64,
    pub agents_evaluated: usize,
    /// RMSE at each whole-second horizon.
    pub rmse_per_second: Vec<HorizonRmse>,
    /// RMSE at every future step.
    pub rmse_per_step: Vec<f64>,
    pub ade_vehicle: Option<f64>,
    pub ade_pedestrian: Option<f64>,
    pub ade_bicycle: Option<f64>,
    pub fde_vehicle: Option<f64>,
    pub fde_pedestrian: Option<f64>,
    pub fde_bicycle: Option<f64>,
    /// Weighted sums over the classes present; absent classes are skipped
    /// without renormalizing (see `missing_classes`).
    pub wsade: Option<f64>,
    pub wsfde: Option<f64>,
    pub missing_classes: Vec<String>,
    /// Class-blind pooled values over every masked agent.
    pub ade_all: Option<f64>,
    pub fde_all: Option<f64>,
}

impl MetricsReport {
    pub fn ade_of(&self, class: MetricClass) -> Option<f64> {
        match class {
            MetricClass::Vehicle => self.ade_vehicle,
            MetricClass::Pedestrian => self.ade_pedestrian,
            MetricClass::Bicycle => self.ade_bicycle,
        }
    }

    pub fn fde_of(&self, class: MetricClass) -> Option<f64> {
        match class {
            MetricClass::Vehicle => self.fde_vehicle,
            MetricClass::Pedestrian => self.fde_pedestrian,
            MetricClass::Bicycle => self.fde_bicycle,
        }
    }
}

/// Weighted sum of per-class values over the classes present.
/// Returns (value, missing class names); weights are not renormalized.
pub fn weighted_sum_over_classes(
    vehicle: Option<f64>,
    pedestrian: Option<f64>,
    bicycle: Option<f64>,
) -> (Option<f64>, Vec<String>) {
    let mut missing = Vec::new();
    let mut acc = 0.0;
    let mut any = false;
    for (value, class) in [
        (vehicle, MetricClass::Vehicle),
        (pedestrian, MetricClass::Pedestrian),
        (bicycle, MetricClass::Bicycle),
    ] {
        match value {
            Some(v) => {
                acc += class.weight() * v;
                any = true;
            }
            None => missing.push(class.name().to_string()),
        }
    }
    (if any { Some(acc) } else { None }, missing)
}

#[derive(Clone)]
struct Accumulator {
    sum: f64,
    count: usize,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { sum: 0.0, count: 0 }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Compute all metrics over a set of scene predictions.
pub fn compute_metrics(
    items: &[ScenePrediction],
    frame_rate: f64,
    unit: Unit,
) -> Result<MetricsReport> {
    let t_f = items
        .iter()
        .flat_map(|i| i.pred.first())
        .map(|p| p.len())
        .max()
        .unwrap_or(0);

    let mut sq_per_step = vec![Accumulator::new(); t_f];
    let mut ade = [Accumulator::new(), Accumulator::new(), Accumulator::new()];
    let mut fde = [Accumulator::new(), Accumulator::new(), Accumulator::new()];
    let mut ade_all = Accumulator::new();
    let mut fde_all = Accumulator::new();
    let mut agents = 0usize;

    for item in items {
        let n = item.pred.len();
        if item.gt.len() != n || item.mask.len() != n || item.agent_types.len() != n {
            return Err(Error::ShapeMismatch {
                op: "metrics agents",
                lhs: vec![n],
                rhs: vec![item.gt.len()],
            });
        }
        for i in 0..n {
            if item.gt[i].len() != item.pred[i].len() || item.mask[i].len() != item.pred[i].len() {
                return Err(Error::ShapeMismatch {
                    op: "metrics steps",
                    lhs: vec![item.pred[i].len()],
                    rhs: vec![item.gt[i].len()],
                });
            }
            agents += 1;
            let class = MetricClass::of(item.agent_types[i]);
            let steps = item.pred[i].len();
            for s in 0..steps {
                if !item.mask[i][s] {
                    continue;
                }
                let dx = item.pred[i][s][0] - item.gt[i][s][0];
                let dy = item.pred[i][s][1] - item.gt[i][s][1];
                let sq = dx * dx + dy * dy;
                let dist = sq.sqrt();
                sq_per_step[s].push(sq);
                if let Some(c) = class {
                    ade[c as usize].push(dist);
                    if s == steps - 1 {
                        fde[c as usize].push(dist);
                    }
                }
                ade_all.push(dist);
                if s == steps - 1 {
                    fde_all.push(dist);
                }
            }
        }
    }

    let rmse_per_step: Vec<f64> = sq_per_step
        .iter()
        .map(|a| a.mean().map_or(f64::NAN, f64::sqrt))
        .collect();
    let mut rmse_per_second = Vec::new();
    let mut second = 1usize;
    loop {
        let step_one_based = (second as f64 * frame_rate).round() as usize;
        if step_one_based == 0 || step_one_based > t_f {
            break;
        }
        let idx = step_one_based - 1;
        if let Some(mean_sq) = sq_per_step[idx].mean() {
            rmse_per_second.push(HorizonRmse {
                second,
                step: step_one_based,
                rmse: mean_sq.sqrt(),
                count: sq_per_step[idx].count,
            });
        }
        second += 1;
    }

    let (wsade, missing_classes) = weighted_sum_over_classes(
        ade[MetricClass::Vehicle as usize].mean(),
        ade[MetricClass::Pedestrian as usize].mean(),
        ade[MetricClass::Bicycle as usize].mean(),
    );
    let (wsfde, _) = weighted_sum_over_classes(
        fde[MetricClass::Vehicle as usize].mean(),
        fde[MetricClass::Pedestrian as usize].mean(),
        fde[MetricClass::Bicycle as usize].mean(),
    );

    Ok(MetricsReport {
        unit: unit.to_string(),
        frame_rate,
        agents_evaluated: agents,
        rmse_per_second,
        rmse_per_step,
        ade_vehicle: ade[MetricClass::Vehicle as usize].mean(),
        ade_pedestrian: ade[MetricClass::Pedestrian as usize].mean(),
        ade_bicycle: ade[MetricClass::Bicycle as usize].mean(),
        fde_vehicle: fde[MetricClass::Vehicle as usize].mean(),
        fde_pedestrian: fde[MetricClass::Pedestrian as usize].mean(),
        fde_bicycle: fde[MetricClass::Bicycle as usize].mean(),
        wsade,
        wsfde,
        missing_classes,
        ade_all: ade_all.mean(),
        fde_all: fde_all.mean(),
    })
}
