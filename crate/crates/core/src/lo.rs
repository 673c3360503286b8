//! Classical Lyapunov-optimization baselines: virtual queues enforcing
//! long-term average reliability (Z) and outage probability (Y), surrogate
//! per-server loss tables over a shared threshold grid, and the resulting
//! per-slot problem.
//!
//! Unlike the conformal controller, these baselines re-optimize a single
//! network-wide threshold every slot from a fixed grid, guided by look-up
//! tables of average losses estimated on a calibration task set.

use crate::config::{Policy, ScenarioConfig};
use crate::harness::{run_scenario, RunOutput, SimError};
use crate::net::Network;
use crate::optimizer::{SlotEngine, SolverError};
use crate::queueing::SlotActions;
use crate::tasks::{
    generate_task, precision_loss, reliability_loss, server_view, PrecisionKind,
    ReliabilityKind, TaskGenConfig,
};
use rand::Rng;

/// Virtual queues encoding the long-term reliability constraints of the LO
/// baselines. Queues stay at zero when their constraint is disabled.
#[derive(Debug, Clone)]
pub struct VirtualQueues {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    pub target: Vec<f64>,
    /// Per-frame loss level counted as an outage.
    pub outage_threshold: f64,
    /// Long-term outage-frequency budget.
    pub outage_target: f64,
    pub z_enabled: bool,
    pub y_enabled: bool,
}

/// Average-reliability queue update: `max(0, z + beta*(loss - target))`.
pub fn update_z(z: f64, beta: f64, frame_loss: f64, target: f64) -> f64 {
    (z + beta * (frame_loss - target)).max(0.0)
}

/// Outage queue update: `max(0, y + xi*(step(loss - l_max) - epsilon))`.
/// The step is strict: a frame exactly at the threshold is not an outage.
pub fn update_y(y: f64, xi: f64, frame_loss: f64, l_max: f64, epsilon: f64) -> f64 {
    let outage = if frame_loss > l_max { 1.0 } else { 0.0 };
    (y + xi * (outage - epsilon)).max(0.0)
}

impl VirtualQueues {
    pub fn new(
        users: usize,
        beta: Vec<f64>,
        xi: Vec<f64>,
        target: Vec<f64>,
        outage_threshold: f64,
        outage_target: f64,
        z_enabled: bool,
        y_enabled: bool,
    ) -> Self {
        VirtualQueues {
            z: vec![0.0; users],
            y: vec![0.0; users],
            beta,
            xi,
            target,
            outage_threshold,
            outage_target,
            z_enabled,
            y_enabled,
        }
    }

    /// Pressure coefficient multiplying the surrogate reliability loss in the
    /// per-slot objective.
    pub fn pressure(&self, user: usize) -> f64 {
        self.beta[user] * self.z[user] + self.xi[user] * self.y[user]
    }

    /// End-of-frame updates; frames without decisions leave the queues
    /// untouched.
    pub fn frame_end(&mut self, frame_loss: &[Option<f64>]) {
        for (k, loss) in frame_loss.iter().enumerate() {
            let Some(loss) = loss else { continue };
            if self.z_enabled {
                self.z[k] = update_z(self.z[k], self.beta[k], *loss, self.target[k]);
            }
            if self.y_enabled {
                self.y[k] = update_y(
                    self.y[k],
                    self.xi[k],
                    *loss,
                    self.outage_threshold,
                    self.outage_target,
                );
            }
        }
    }
}

/// Per-server average reliability and precision losses over a threshold
/// grid, estimated on calibration tasks and projected to be monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub grid: Vec<f64>,
    /// `reliability[server_pos][grid_idx]`, non-decreasing along the grid.
    pub reliability: Vec<Vec<f64>>,
    /// `precision[server_pos][grid_idx]`, non-increasing along the grid.
    pub precision: Vec<Vec<f64>>,
}

/// Pool-adjacent-violators projection to a non-decreasing sequence.
fn isotonic_non_decreasing(values: &[f64]) -> Vec<f64> {
    let mut level: Vec<f64> = Vec::with_capacity(values.len());
    let mut weight: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        level.push(v);
        weight.push(1.0);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l2, w2) = (level.pop().unwrap(), weight.pop().unwrap());
            let (l1, w1) = (level.pop().unwrap(), weight.pop().unwrap());
            level.push((l1 * w1 + l2 * w2) / (w1 + w2));
            weight.push(w1 + w2);
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (l, w) in level.iter().zip(&weight) {
        for _ in 0..*w as usize {
            out.push(*l);
        }
    }
    out
}

fn isotonic_non_increasing(values: &[f64]) -> Vec<f64> {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    isotonic_non_decreasing(&negated)
        .into_iter()
        .map(|v| -v)
        .collect()
}

impl LossTable {
    /// Estimates the tables for every server from `tasks_per_server`
    /// calibration tasks drawn from `rng` (a stream disjoint from the
    /// simulation's task stream).
    pub fn build<R: Rng>(
        net: &Network,
        task_cfg: &TaskGenConfig,
        grid: &[f64],
        tasks_per_server: usize,
        reliability_kind: ReliabilityKind,
        precision_kind: PrecisionKind,
        rng: &mut R,
    ) -> Result<LossTable, String> {
        if tasks_per_server == 0 {
            return Err("empty calibration set".to_string());
        }
        let tasks: Vec<_> = (0..tasks_per_server)
            .map(|i| generate_task(rng, task_cfg, 0, 0, i as u64))
            .collect();
        let mut reliability = Vec::with_capacity(net.servers().len());
        let mut precision = Vec::with_capacity(net.servers().len());
        for &s in net.servers() {
            let quality = net.server_params(s).quality;
            let mut rel_row = vec![0.0; grid.len()];
            let mut prec_row = vec![0.0; grid.len()];
            for task in &tasks {
                let view = server_view(task, quality, s);
                for (i, &theta) in grid.iter().enumerate() {
                    rel_row[i] += reliability_loss(&view, theta, reliability_kind)
                        .expect("calibration tasks have non-empty masks");
                    prec_row[i] += precision_loss(&view, theta, precision_kind)
                        .expect("calibration grid is non-degenerate");
                }
            }
            let n = tasks_per_server as f64;
            rel_row.iter_mut().for_each(|v| *v /= n);
            prec_row.iter_mut().for_each(|v| *v /= n);
            reliability.push(isotonic_non_decreasing(&rel_row));
            precision.push(isotonic_non_increasing(&prec_row));
        }
        Ok(LossTable {
            grid: grid.to_vec(),
            reliability,
            precision,
        })
    }

    pub fn reliability_at(&self, server_pos: usize, grid_idx: usize) -> f64 {
        self.reliability[server_pos][grid_idx]
    }

    pub fn precision_at(&self, server_pos: usize, grid_idx: usize) -> f64 {
        self.precision[server_pos][grid_idx]
    }

    /// Linear interpolation of the precision table at an arbitrary
    /// threshold, clamped to the grid ends. Used by the table-driven
    /// precision predictor.
    pub fn precision_interp(&self, server_pos: usize, threshold: f64) -> f64 {
        let row = &self.precision[server_pos];
        let grid = &self.grid;
        if threshold <= grid[0] {
            return row[0];
        }
        if threshold >= *grid.last().unwrap() {
            return *row.last().unwrap();
        }
        let hi = grid.partition_point(|&g| g < threshold);
        let lo = hi - 1;
        let t = (threshold - grid[lo]) / (grid[hi] - grid[lo]);
        row[lo] + t * (row[hi] - row[lo])
    }
}

/// Solves the shared-threshold per-slot problem: for each grid threshold,
/// minimizes the queue-weighted objective over binary forwarding/decision
/// assignments, returning the best `(actions, threshold)` pair. Ties prefer
/// the smaller threshold.
#[allow(clippy::too_many_arguments)]
pub fn solve_slot_lo(
    engine: &SlotEngine<'_>,
    vq: &VirtualQueues,
    table: &LossTable,
    eta: f64,
    exact: bool,
    var_limit: usize,
    decision_bonus: Option<&[f64]>,
) -> Result<(SlotActions, f64), SolverError> {
    let net = engine.net;
    let queues = engine.queues;
    let v = engine.v;
    let mut best: Option<(SlotActions, f64, f64)> = None;
    for (gi, &theta) in table.grid.iter().enumerate() {
        let mut dec_cost = |server: usize, user: usize, _du: crate::queueing::Du| {
            let pos = net.server_pos(server).expect("decision at server");
            v * eta * table.precision_at(pos, gi)
                + vq.pressure(user) * table.reliability_at(pos, gi)
                - queues.len(server, user) as f64
                - decision_bonus.map_or(0.0, |b| b[user])
        };
        let (actions, obj) = if exact {
            engine.solve_exact(&mut dec_cost, var_limit)?
        } else {
            engine.solve_greedy(&mut dec_cost)
        };
        if best.as_ref().is_none_or(|(_, _, b)| obj < *b) {
            best = Some((actions, theta, obj));
        }
    }
    let (actions, theta, _) = best.expect("non-empty threshold grid");
    Ok((actions, theta))
}

/// Runs the full LO frame/slot loop (per-slot solve, decision recording,
/// queue updates, end-of-frame virtual-queue updates). The scenario's policy
/// selects which virtual queues are active.
pub fn run_lo_algorithm(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, SimError> {
    assert!(
        matches!(cfg.policy, Policy::LoAvg | Policy::LoOutage),
        "run_lo_algorithm requires an LO policy"
    );
    run_scenario(cfg, seed)
}
