//! Scenario drivers: the frame/slot loop for the conformal controller and
//! the LO baselines, per-run metrics, certificate checking, trade-off
//! sweeps, and latency tracking.
//!
//! A run is fully determined by `(config, seed)`: arrivals, channels, tasks,
//! predictor noise, and regime switches each draw from their own named
//! stream, so changing one knob (say the predictor mode) never perturbs the
//! others. Seeds run independently and may execute in parallel.

use crate::channel::sample_channels;
use crate::config::{Policy, PredictorMode, ScenarioConfig, SolverChoice};
use crate::crc::{
    reliability_bounds, CrcError, FrameFeedback, FrameStats, ThresholdState,
};
use crate::lo::{LossTable, VirtualQueues};
use crate::net::Network;
use crate::optimizer::{
    weighted_net_outflow, PrecisionOracle, SlotEngine, SlotProblem, SolverError,
};
use crate::queueing::{Du, QueueError, QueueState};
use crate::rng::{named_stream, Stream};
use crate::tasks::{
    generate_task, precision_loss, reliability_loss, sample_arrivals, server_view, LossError,
    PrecisionKind, ServerView, SyntheticTask,
};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("slot {slot}: {source}")]
    Queue {
        slot: u64,
        #[source]
        source: QueueError,
    },
    #[error("slot {slot}: {source}")]
    Solver {
        slot: u64,
        #[source]
        source: SolverError,
    },
    #[error("slot {slot}: {source}")]
    Loss {
        slot: u64,
        #[source]
        source: LossError,
    },
    #[error("slot {slot}: {source}")]
    Feedback {
        slot: u64,
        #[source]
        source: CrcError,
    },
    #[error("loss table: {0}")]
    Table(String),
}

/// Per-user per-frame record.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFrame {
    /// Threshold in force during the frame (NaN for LO policies).
    pub threshold: f64,
    pub decisions: u32,
    pub mean_loss: f64,
    /// Running average loss over active frames (NaN before the first).
    pub cumulative_avg: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub z: f64,
    pub y: f64,
    pub outage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame: u64,
    /// Mean shared threshold chosen during the frame (NaN for CLO).
    pub theta_star_mean: f64,
    pub per_user: Vec<UserFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: u64,
    pub frame: u64,
    pub energy_j: f64,
    /// Realized precision loss summed over the slot's decisions.
    pub precision_loss_sum: f64,
    pub decisions: u32,
    pub total_queue: u32,
    pub per_user_queue: Vec<u32>,
    /// Shared threshold of the slot (NaN for CLO).
    pub theta_star: f64,
    pub ldpp_realized: f64,
    pub ldpp_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub slot: u64,
    pub frame: u64,
    pub user: usize,
    pub server_node: usize,
    pub du_id: u64,
    pub generated_slot: u64,
    pub threshold: f64,
    pub reliability_loss: f64,
    pub precision_loss: f64,
}

/// Post-run aggregates of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Mean per-slot transmission energy over the converged window.
    pub converged_energy_j: f64,
    /// Mean realized precision loss per decision over the window.
    pub converged_precision_loss: f64,
    /// `1 - converged_precision_loss`.
    pub converged_precision: f64,
    pub final_cumulative_loss: Vec<f64>,
    /// `[user][frame]` running active-frame average loss.
    pub cumulative_loss_series: Vec<Vec<f64>>,
    pub active_frames: Vec<u64>,
    pub decision_counts_per_node: Vec<u64>,
    pub mean_decision_depth: f64,
    /// `max_{n,k} Q_n^k(T) / T`.
    pub max_queue_over_horizon: f64,
    pub final_total_queue: u64,
    /// Per-user Little's-law latency averaged over the converged window.
    pub converged_latency_s: Vec<f64>,
    /// Per-user fraction of active frames whose loss exceeded the outage
    /// threshold.
    pub outage_frequency: Vec<f64>,
    pub threshold_min: Vec<f64>,
    pub threshold_max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserCertificate {
    pub user: usize,
    pub active_frames: u64,
    pub final_avg: f64,
    pub min_const: f64,
    pub max_const: f64,
    pub pass: bool,
    pub first_violation_frame: Option<u64>,
    /// Smallest `upper - avg` over all prefixes (negative means violated).
    pub min_upper_slack: f64,
    /// Smallest `avg - lower` over all prefixes.
    pub min_lower_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub per_user: Vec<UserCertificate>,
    pub all_pass: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub policy: Policy,
    pub frames: Vec<FrameRecord>,
    pub slots: Vec<SlotRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub metrics: RunMetrics,
    pub certificate: CertificateReport,
}

/// Latency virtual-queue update: `max(0, ql + step*(frame_avg - budget))`.
pub fn latency_virtual_queue_update(ql: f64, step: f64, q_tot_frame_avg: f64, q_avg: f64) -> f64 {
    (ql + step * (q_tot_frame_avg - q_avg)).max(0.0)
}

/// Little's-law conversion of a total-queue series to latency: with arrival
/// rate `lambda/slot_s` tasks per second, `D(t) = Q_tot(t) * slot_s / lambda`.
pub fn latency_series(q_tot: &[u32], arrival_prob: f64, slot_s: f64) -> Vec<f64> {
    let rate = arrival_prob / slot_s;
    q_tot.iter().map(|&q| q as f64 / rate).collect()
}

// ---------------------------------------------------------------------------
// Precision predictor
// ---------------------------------------------------------------------------

type ViewCache = HashMap<(u64, usize), ServerView>;

struct RunPredictor<'a> {
    mode: PredictorMode,
    bias: f64,
    sigma: f64,
    precision_kind: PrecisionKind,
    net: &'a Network,
    store: &'a HashMap<u64, SyntheticTask>,
    table: Option<&'a LossTable>,
    view_cache: &'a mut ViewCache,
    noise_rng: &'a mut ChaCha12Rng,
    /// One noise draw per (du, server) per slot.
    slot_noise: HashMap<(u64, usize), f64>,
}

fn cached_view<'c>(
    cache: &'c mut ViewCache,
    net: &Network,
    store: &HashMap<u64, SyntheticTask>,
    du_id: u64,
    server_node: usize,
) -> &'c ServerView {
    cache.entry((du_id, server_node)).or_insert_with(|| {
        let task = store.get(&du_id).expect("queued DU has a stored task");
        server_view(task, net.server_params(server_node).quality, server_node)
    })
}

impl PrecisionOracle for RunPredictor<'_> {
    fn predict(&mut self, server_node: usize, du: Du, threshold: f64) -> f64 {
        match self.mode {
            PredictorMode::Oracle | PredictorMode::Noisy => {
                let view =
                    cached_view(self.view_cache, self.net, self.store, du.id, server_node);
                let exact = precision_loss(view, threshold, self.precision_kind)
                    .expect("tasks have non-empty masks");
                if matches!(self.mode, PredictorMode::Oracle) {
                    exact
                } else {
                    let noise = *self
                        .slot_noise
                        .entry((du.id, server_node))
                        .or_insert_with(|| {
                            let z: f64 = StandardNormal.sample(self.noise_rng);
                            z
                        });
                    (exact + self.bias + self.sigma * noise).clamp(0.0, 1.0)
                }
            }
            PredictorMode::Table => {
                let pos = self.net.server_pos(server_node).expect("decision at server");
                self.table
                    .expect("table predictor requires a loss table")
                    .precision_interp(pos, threshold)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The frame/slot loop
// ---------------------------------------------------------------------------

/// Executes one realization of the scenario, fully deterministic in `seed`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput, SimError> {
    let net = &cfg.network;
    let users = net.user_count();
    let total_frames = cfg.frames();
    let slot_s = cfg.slot_duration_s;

    let mut arrivals_rng = named_stream(seed, Stream::Arrivals);
    let mut channels_rng = named_stream(seed, Stream::Channels);
    let mut tasks_rng = named_stream(seed, Stream::Tasks);
    let mut predictor_rng = named_stream(seed, Stream::PredictorNoise);
    let mut regime_rng = named_stream(seed, Stream::Regime);

    let needs_table =
        !matches!(cfg.policy, Policy::Clo) || matches!(cfg.predictor, PredictorMode::Table);
    let table = if needs_table {
        Some(
            LossTable::build(
                net,
                &cfg.task_gen,
                &cfg.theta_grid,
                cfg.calibration_tasks,
                cfg.reliability_kind,
                cfg.precision_kind,
                &mut named_stream(seed, Stream::Calibration),
            )
            .map_err(SimError::Table)?,
        )
    } else {
        None
    };

    let mut queues = QueueState::new(net);
    let mut store: HashMap<u64, SyntheticTask> = HashMap::new();
    let mut view_cache: ViewCache = HashMap::new();
    let mut feedback = FrameFeedback::new(users);
    let mut history: Vec<Vec<FrameStats>> = vec![Vec::new(); users];
    let mut thresholds = ThresholdState::new(
        (0..users).map(|k| net.ed_params(k).initial_threshold).collect(),
        (0..users).map(|k| net.ed_params(k).learning_rate).collect(),
        (0..users).map(|k| net.ed_params(k).reliability_target).collect(),
        (0..users).map(|k| net.ed_params(k).feedback_delay_frames).collect(),
    );
    let mut vq = VirtualQueues::new(
        users,
        vec![cfg.lo_beta; users],
        vec![cfg.lo_xi; users],
        (0..users).map(|k| net.ed_params(k).reliability_target).collect(),
        cfg.outage_threshold,
        cfg.outage_target,
        matches!(cfg.policy, Policy::LoAvg),
        matches!(cfg.policy, Policy::LoOutage),
    );
    let mut latency_ql = vec![0.0f64; users];
    let mut lambda: Vec<f64> = (0..users).map(|k| net.ed_params(k).arrival_prob).collect();
    let mut du_counter: u64 = 0;

    let mut frames: Vec<FrameRecord> = Vec::with_capacity(total_frames as usize);
    let mut slots: Vec<SlotRecord> = Vec::with_capacity(cfg.slots as usize);
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut decision_counts = vec![0u64; net.node_count()];
    let drift_const = net.drift_constant(users);

    for frame in 0..total_frames {
        feedback.reset();
        let frame_thresholds = thresholds.thresholds().to_vec();
        let mut frame_qtot_sum = vec![0.0f64; users];
        let mut theta_star_sum = 0.0f64;

        for step in 0..cfg.frame_size {
            let slot = frame * cfg.frame_size + step + 1;
            if cfg.non_stationary && slot > 1 && (slot - 1) % cfg.regime_period_slots == 0 {
                for l in lambda.iter_mut() {
                    if regime_rng.random_bool(cfg.regime_switch_prob) {
                        *l = if (*l - cfg.regime_low).abs() < (*l - cfg.regime_high).abs() {
                            cfg.regime_high
                        } else {
                            cfg.regime_low
                        };
                    }
                }
            }

            let channels = sample_channels(net, &mut channels_rng);
            let engine = SlotEngine {
                net,
                queues: &queues,
                channels: &channels,
                v: cfg.v,
                slot_s,
                noise_w_per_hz: cfg.noise_w_per_hz,
            };
            let bonus: Option<Vec<f64>> = cfg.latency.map(|lat| {
                latency_ql.iter().map(|&ql| lat.step * ql).collect()
            });

            let (actions, theta_star) = match cfg.policy {
                Policy::Clo => {
                    let mut predictor = RunPredictor {
                        mode: cfg.predictor,
                        bias: cfg.predictor_bias,
                        sigma: cfg.predictor_sigma,
                        precision_kind: cfg.precision_kind,
                        net,
                        store: &store,
                        table: table.as_ref(),
                        view_cache: &mut view_cache,
                        noise_rng: &mut predictor_rng,
                        slot_noise: HashMap::new(),
                    };
                    let problem = SlotProblem {
                        net,
                        queues: &queues,
                        channels: &channels,
                        thresholds: &frame_thresholds,
                        v: cfg.v,
                        eta: cfg.eta,
                        slot_s,
                        noise_w_per_hz: cfg.noise_w_per_hz,
                        decision_bonus: bonus.as_deref(),
                    };
                    let actions = match cfg.solver {
                        SolverChoice::Exact => crate::optimizer::solve_exact(
                            &problem,
                            &mut predictor,
                            cfg.exact_var_limit,
                        )
                        .map_err(|source| SimError::Solver { slot, source })?,
                        SolverChoice::Greedy => {
                            crate::optimizer::solve_greedy(&problem, &mut predictor)
                        }
                    };
                    (actions, f64::NAN)
                }
                Policy::LoAvg | Policy::LoOutage => {
                    let table = table.as_ref().expect("LO policies build a loss table");
                    crate::lo::solve_slot_lo(
                        &engine,
                        &vq,
                        table,
                        cfg.eta,
                        matches!(cfg.solver, SolverChoice::Exact),
                        cfg.exact_var_limit,
                        bonus.as_deref(),
                    )
                    .map_err(|source| SimError::Solver { slot, source })?
                }
            };

            actions
                .validate(net, &queues)
                .map_err(|source| SimError::Queue { slot, source })?;

            // Evaluate the decided DUs against start-of-slot queues.
            let mut slot_precision = 0.0f64;
            for d in &actions.decisions {
                let offset = actions.forwards_from(net, d.server_node, d.user);
                let du = queues
                    .peek_at(d.server_node, d.user, offset)
                    .expect("validated decision");
                let threshold = if matches!(cfg.policy, Policy::Clo) {
                    frame_thresholds[d.user]
                } else {
                    theta_star
                };
                let view =
                    cached_view(&mut view_cache, net, &store, du.id, d.server_node);
                let rel = reliability_loss(view, threshold, cfg.reliability_kind)
                    .map_err(|source| SimError::Loss { slot, source })?;
                let prec = precision_loss(view, threshold, cfg.precision_kind)
                    .map_err(|source| SimError::Loss { slot, source })?;
                feedback
                    .record_decision(d.user, rel)
                    .map_err(|source| SimError::Feedback { slot, source })?;
                decision_counts[d.server_node] += 1;
                slot_precision += prec;
                decisions.push(DecisionRecord {
                    slot,
                    frame,
                    user: d.user,
                    server_node: d.server_node,
                    du_id: du.id,
                    generated_slot: du.generated_slot,
                    threshold,
                    reliability_loss: rel,
                    precision_loss: prec,
                });
            }

            let arrived = sample_arrivals(&lambda, &mut arrivals_rng);
            let arrival_dus: Vec<Option<Du>> = arrived
                .iter()
                .enumerate()
                .map(|(k, &a)| {
                    a.then(|| {
                        let id = du_counter;
                        du_counter += 1;
                        let task = generate_task(&mut tasks_rng, &cfg.task_gen, k, slot, id);
                        store.insert(id, task);
                        Du {
                            id,
                            generated_slot: slot,
                        }
                    })
                })
                .collect();

            let energy = actions.total_energy_j();
            let j_realized = energy + cfg.eta * slot_precision;
            let g_before = queues.lyapunov_value();
            let outflow = weighted_net_outflow(net, &queues, &actions, &arrived);

            let outcome = queues
                .apply_slot(net, &actions, &arrival_dus)
                .map_err(|source| SimError::Queue { slot, source })?;
            for (_, du) in &outcome.decided {
                store.remove(&du.id);
                for &s in net.servers() {
                    view_cache.remove(&(du.id, s));
                }
            }

            let g_after = queues.lyapunov_value();
            let ldpp_realized = g_after - g_before + cfg.v * j_realized;
            let ldpp_bound = drift_const - outflow + cfg.v * j_realized;

            let per_user_queue: Vec<u32> =
                (0..users).map(|k| queues.total_for_user(k) as u32).collect();
            for (k, &q) in per_user_queue.iter().enumerate() {
                frame_qtot_sum[k] += q as f64;
            }
            if theta_star.is_finite() {
                theta_star_sum += theta_star;
            }
            slots.push(SlotRecord {
                slot,
                frame,
                energy_j: energy,
                precision_loss_sum: slot_precision,
                decisions: actions.decisions.len() as u32,
                total_queue: queues.total() as u32,
                per_user_queue,
                theta_star,
                ldpp_realized,
                ldpp_bound,
            });
        }

        // Frame boundary: record stats, then update the controller.
        let stats: Vec<FrameStats> = feedback.all().to_vec();
        for k in 0..users {
            history[k].push(stats[k]);
        }
        match cfg.policy {
            Policy::Clo => thresholds.update_frame_end(&history),
            Policy::LoAvg | Policy::LoOutage => {
                let losses: Vec<Option<f64>> = stats
                    .iter()
                    .map(|s| (s.decisions > 0).then_some(s.mean_loss))
                    .collect();
                vq.frame_end(&losses);
            }
        }
        if let Some(lat) = cfg.latency {
            for k in 0..users {
                let avg = frame_qtot_sum[k] / cfg.frame_size as f64;
                latency_ql[k] =
                    latency_virtual_queue_update(latency_ql[k], lat.step, avg, lat.q_avg);
            }
        }

        let theta_star_mean = if matches!(cfg.policy, Policy::Clo) {
            f64::NAN
        } else {
            theta_star_sum / cfg.frame_size as f64
        };
        frames.push(FrameRecord {
            frame,
            theta_star_mean,
            per_user: (0..users)
                .map(|k| UserFrame {
                    threshold: if matches!(cfg.policy, Policy::Clo) {
                        frame_thresholds[k]
                    } else {
                        f64::NAN
                    },
                    decisions: stats[k].decisions,
                    mean_loss: stats[k].mean_loss,
                    cumulative_avg: f64::NAN, // filled below
                    lower_bound: f64::NAN,
                    upper_bound: f64::NAN,
                    z: vq.z[k],
                    y: vq.y[k],
                    outage: stats[k].decisions > 0 && stats[k].mean_loss > cfg.outage_threshold,
                })
                .collect(),
        });
    }

    // Post-run: cumulative averages, certificate bounds, metrics.
    let threshold_min: Vec<f64> = (0..users)
        .map(|k| thresholds.min_based_const(k) - thresholds.learning_rate(k))
        .collect();
    let threshold_max: Vec<f64> = (0..users)
        .map(|k| thresholds.max_based_const(k) + thresholds.learning_rate(k))
        .collect();
    let mut cumulative_series = vec![Vec::with_capacity(frames.len()); users];
    let mut active_frames = vec![0u64; users];
    let mut loss_sums = vec![0.0f64; users];
    for fr in frames.iter_mut() {
        for k in 0..users {
            let uf = &mut fr.per_user[k];
            if uf.decisions > 0 {
                active_frames[k] += 1;
                loss_sums[k] += uf.mean_loss;
            }
            if active_frames[k] > 0 {
                uf.cumulative_avg = loss_sums[k] / active_frames[k] as f64;
                let (m_const, cap_const) = if matches!(cfg.policy, Policy::Clo) {
                    (thresholds.min_based_const(k), thresholds.max_based_const(k))
                } else {
                    // LO runs are checked against the worst-case band of the
                    // matched conformal controller.
                    (0.0, 1.0)
                };
                let ed = net.ed_params(k);
                let b = reliability_bounds(
                    active_frames[k] as f64,
                    ed.learning_rate,
                    ed.initial_threshold,
                    ed.reliability_target,
                    ed.feedback_delay_frames as f64,
                    m_const,
                    cap_const,
                );
                uf.lower_bound = b.lower;
                uf.upper_bound = b.upper;
            }
            cumulative_series[k].push(uf.cumulative_avg);
        }
    }

    let certificate = certificate_from_frames(&frames, net, cfg.policy, &threshold_min, &threshold_max);

    let window = cfg.converged_window_slots.min(cfg.slots) as usize;
    let tail = &slots[slots.len() - window..];
    let converged_energy_j = tail.iter().map(|s| s.energy_j).sum::<f64>() / window as f64;
    let tail_decisions: u64 = tail.iter().map(|s| s.decisions as u64).sum();
    let converged_precision_loss = if tail_decisions > 0 {
        tail.iter().map(|s| s.precision_loss_sum).sum::<f64>() / tail_decisions as f64
    } else {
        f64::NAN
    };
    let total_decisions: u64 = decision_counts.iter().sum();
    let mean_decision_depth = if total_decisions > 0 {
        decision_counts
            .iter()
            .enumerate()
            .map(|(node, &c)| net.depth(node) as f64 * c as f64)
            .sum::<f64>()
            / total_decisions as f64
    } else {
        0.0
    };
    let max_queue_over_horizon = {
        let mut max_q = 0usize;
        for node in 0..net.node_count() {
            for k in 0..users {
                max_q = max_q.max(queues.len(node, k));
            }
        }
        max_q as f64 / cfg.slots as f64
    };
    let converged_latency_s: Vec<f64> = (0..users)
        .map(|k| {
            let mean_q =
                tail.iter().map(|s| s.per_user_queue[k] as f64).sum::<f64>() / window as f64;
            mean_q * slot_s / net.ed_params(k).arrival_prob
        })
        .collect();
    let outage_frequency: Vec<f64> = (0..users)
        .map(|k| {
            if active_frames[k] == 0 {
                return 0.0;
            }
            let outages = frames
                .iter()
                .filter(|f| f.per_user[k].outage)
                .count();
            outages as f64 / active_frames[k] as f64
        })
        .collect();

    let metrics = RunMetrics {
        converged_energy_j,
        converged_precision_loss,
        converged_precision: 1.0 - converged_precision_loss,
        final_cumulative_loss: (0..users)
            .map(|k| *cumulative_series[k].last().unwrap_or(&f64::NAN))
            .collect(),
        cumulative_loss_series: cumulative_series,
        active_frames,
        decision_counts_per_node: decision_counts,
        mean_decision_depth,
        max_queue_over_horizon,
        final_total_queue: queues.total() as u64,
        converged_latency_s,
        outage_frequency,
        threshold_min,
        threshold_max,
    };

    Ok(RunOutput {
        seed,
        policy: cfg.policy,
        frames,
        slots,
        decisions,
        metrics,
        certificate,
    })
}

/// Runs every seed of the scenario, in parallel, preserving seed order.
pub fn run_seed_batch(cfg: &ScenarioConfig) -> Result<Vec<RunOutput>, SimError> {
    cfg.seeds
        .par_iter()
        .map(|&seed| run_scenario(cfg, seed))
        .collect()
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Running certificate over one user's frame history: at every prefix the
/// active-frame average must sit inside the (delay-adjusted) band built from
/// the supplied threshold-range constants.
pub fn check_user_certificate(
    stats: &[FrameStats],
    user: usize,
    learning_rate: f64,
    initial_threshold: f64,
    target: f64,
    delay_frames: f64,
    min_const: f64,
    max_const: f64,
) -> UserCertificate {
    let mut active = 0u64;
    let mut sum = 0.0f64;
    let mut pass = true;
    let mut first_violation_frame = None;
    let mut min_upper_slack = f64::INFINITY;
    let mut min_lower_slack = f64::INFINITY;
    let mut final_avg = f64::NAN;
    for (f, st) in stats.iter().enumerate() {
        if st.decisions > 0 {
            active += 1;
            sum += st.mean_loss;
        }
        if active == 0 {
            continue;
        }
        let avg = sum / active as f64;
        final_avg = avg;
        let b = reliability_bounds(
            active as f64,
            learning_rate,
            initial_threshold,
            target,
            delay_frames,
            min_const,
            max_const,
        );
        let upper_slack = b.upper - avg;
        let lower_slack = avg - b.lower;
        min_upper_slack = min_upper_slack.min(upper_slack);
        min_lower_slack = min_lower_slack.min(lower_slack);
        if (upper_slack < -1e-9 || lower_slack < -1e-9) && pass {
            pass = false;
            first_violation_frame = Some(f as u64);
        }
    }
    UserCertificate {
        user,
        active_frames: active,
        final_avg,
        min_const,
        max_const,
        pass,
        first_violation_frame,
        min_upper_slack,
        min_lower_slack,
    }
}

fn certificate_from_frames(
    frames: &[FrameRecord],
    net: &Network,
    policy: Policy,
    threshold_min: &[f64],
    threshold_max: &[f64],
) -> CertificateReport {
    let users = net.user_count();
    let per_user: Vec<UserCertificate> = (0..users)
        .map(|k| {
            let stats: Vec<FrameStats> = frames
                .iter()
                .map(|f| FrameStats {
                    decisions: f.per_user[k].decisions,
                    mean_loss: f.per_user[k].mean_loss,
                })
                .collect();
            let ed = net.ed_params(k);
            let (m_const, cap_const) = if matches!(policy, Policy::Clo) {
                (
                    threshold_min[k] + ed.learning_rate,
                    threshold_max[k] - ed.learning_rate,
                )
            } else {
                (0.0, 1.0)
            };
            check_user_certificate(
                &stats,
                k,
                ed.learning_rate,
                ed.initial_threshold,
                ed.reliability_target,
                ed.feedback_delay_frames as f64,
                m_const,
                cap_const,
            )
        })
        .collect();
    let all_pass = per_user.iter().all(|c| c.pass);
    CertificateReport { per_user, all_pass }
}

/// Re-checks the certificate of a completed run (the report is also computed
/// during the run; this entry point allows independent re-verification).
pub fn certificate_check(cfg: &ScenarioConfig, run: &RunOutput) -> CertificateReport {
    certificate_from_frames(
        &run.frames,
        &cfg.network,
        run.policy,
        &run.metrics.threshold_min,
        &run.metrics.threshold_max,
    )
}

// ---------------------------------------------------------------------------
// Sweeps and statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub policy: String,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_precision: f64,
    pub std_precision: f64,
    pub mean_decision_depth: f64,
    pub certificate_pass_rate: f64,
}

/// Runs the scenario across an eta grid and aggregates converged energy and
/// precision over seeds; one row per eta value.
pub fn tradeoff_sweep(
    base: &ScenarioConfig,
    etas: &[f64],
) -> Result<Vec<SweepRow>, SimError> {
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let cfg = base
            .modify(|raw| {
                let s = raw.scenario.as_mut().unwrap();
                s.eta = Some(eta);
                s.beta_weight = None;
            })
            .expect("eta patch keeps the config valid");
        let runs = run_seed_batch(&cfg)?;
        let energies: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
        let precisions: Vec<f64> = runs.iter().map(|r| r.metrics.converged_precision).collect();
        let depths: Vec<f64> = runs.iter().map(|r| r.metrics.mean_decision_depth).collect();
        let pass_rate = runs.iter().filter(|r| r.certificate.all_pass).count() as f64
            / runs.len() as f64;
        rows.push(SweepRow {
            eta,
            policy: cfg.policy.as_str().to_string(),
            mean_energy_j: mean(&energies),
            std_energy_j: std_dev(&energies),
            mean_precision: mean(&precisions),
            std_precision: std_dev(&precisions),
            mean_decision_depth: mean(&depths),
            certificate_pass_rate: pass_rate,
        });
    }
    Ok(rows)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Mid-ranks with tie averaging.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN when degenerate.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..rx.len() {
        let a = rx[i] - mx;
        let b = ry[i] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    num / (dx.sqrt() * dy.sqrt())
}

/// First slot after which the cumulative loss stays within `band` of the
/// target for the rest of the run; `None` if it never settles.
pub fn time_to_target(
    series: &[f64],
    frame_size: u64,
    target: f64,
    band: f64,
) -> Option<u64> {
    let mut last_violation: Option<usize> = None;
    let mut any_inside = false;
    for (f, &avg) in series.iter().enumerate() {
        if avg.is_nan() || (avg - target).abs() > band {
            last_violation = Some(f);
        } else {
            any_inside = true;
        }
    }
    if !any_inside {
        return None;
    }
    match last_violation {
        Some(f) if f + 1 >= series.len() => None,
        Some(f) => Some((f as u64 + 2) * frame_size),
        None => Some(frame_size),
    }
}

// ---------------------------------------------------------------------------
// CSV / JSON emission
// ---------------------------------------------------------------------------

impl RunOutput {
    pub fn slots_csv(&self) -> String {
        let users = self.metrics.final_cumulative_loss.len();
        let mut out = String::from("slot,frame,energy_j,precision_loss_sum,decisions,total_queue,theta_star,ldpp_realized,ldpp_bound");
        for k in 0..users {
            out.push_str(&format!(",queue_u{k}"));
        }
        out.push('\n');
        for s in &self.slots {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                s.slot,
                s.frame,
                s.energy_j,
                s.precision_loss_sum,
                s.decisions,
                s.total_queue,
                s.theta_star,
                s.ldpp_realized,
                s.ldpp_bound
            ));
            for q in &s.per_user_queue {
                out.push_str(&format!(",{q}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn frames_csv(&self) -> String {
        let users = self.metrics.final_cumulative_loss.len();
        let mut out = String::from("frame,theta_star_mean");
        for k in 0..users {
            out.push_str(&format!(
                ",theta_u{k},decisions_u{k},loss_u{k},cum_u{k},lower_u{k},upper_u{k},z_u{k},y_u{k}"
            ));
        }
        out.push('\n');
        for f in &self.frames {
            out.push_str(&format!("{},{}", f.frame, f.theta_star_mean));
            for u in &f.per_user {
                out.push_str(&format!(
                    ",{},{},{},{},{},{},{},{}",
                    u.threshold,
                    u.decisions,
                    u.mean_loss,
                    u.cumulative_avg,
                    u.lower_bound,
                    u.upper_bound,
                    u.z,
                    u.y
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn decisions_csv(&self) -> String {
        let mut out = String::from(
            "slot,frame,user,server_node,du_id,generated_slot,threshold,reliability_loss,precision_loss\n",
        );
        for d in &self.decisions {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                d.slot,
                d.frame,
                d.user,
                d.server_node,
                d.du_id,
                d.generated_slot,
                d.threshold,
                d.reliability_loss,
                d.precision_loss
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub certificate_pass: bool,
    pub converged_energy_j: f64,
    pub converged_precision: f64,
    pub final_cumulative_loss: Vec<f64>,
    pub max_queue_over_horizon: f64,
    pub converged_latency_s: Vec<f64>,
    pub outage_frequency: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub policy: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_precision: f64,
    pub std_precision: f64,
    pub mean_final_loss_per_user: Vec<f64>,
    pub certificate_pass_rate: f64,
}

pub fn summarize(cfg: &ScenarioConfig, runs: &[RunOutput]) -> Summary {
    let users = cfg.network.user_count();
    let per_seed: Vec<SeedSummary> = runs
        .iter()
        .map(|r| SeedSummary {
            seed: r.seed,
            certificate_pass: r.certificate.all_pass,
            converged_energy_j: r.metrics.converged_energy_j,
            converged_precision: r.metrics.converged_precision,
            final_cumulative_loss: r.metrics.final_cumulative_loss.clone(),
            max_queue_over_horizon: r.metrics.max_queue_over_horizon,
            converged_latency_s: r.metrics.converged_latency_s.clone(),
            outage_frequency: r.metrics.outage_frequency.clone(),
        })
        .collect();
    let energies: Vec<f64> = runs.iter().map(|r| r.metrics.converged_energy_j).collect();
    let precisions: Vec<f64> = runs.iter().map(|r| r.metrics.converged_precision).collect();
    let mean_final_loss_per_user: Vec<f64> = (0..users)
        .map(|k| mean(&runs.iter().map(|r| r.metrics.final_cumulative_loss[k]).collect::<Vec<_>>()))
        .collect();
    Summary {
        scenario: cfg.name.clone(),
        policy: cfg.policy.as_str().to_string(),
        seeds: cfg.seeds.clone(),
        per_seed,
        mean_energy_j: mean(&energies),
        std_energy_j: std_dev(&energies),
        mean_precision: mean(&precisions),
        std_precision: std_dev(&precisions),
        mean_final_loss_per_user,
        certificate_pass_rate: runs.iter().filter(|r| r.certificate.all_pass).count() as f64
            / runs.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(policy: &str, slots: u64) -> ScenarioConfig {
        ScenarioConfig::from_toml_str(&format!(
            "[scenario]\npolicy = \"{policy}\"\nslots = {slots}\nframe_size = 10\n"
        ))
        .unwrap()
    }

    #[test]
    fn zero_arrivals_stay_idle() {
        let cfg = tiny("clo", 200)
            .modify(|raw| {
                for node in raw.network.as_mut().unwrap().nodes.as_mut().unwrap() {
                    if node.role == "ed" {
                        node.arrival_prob = Some(0.0);
                    }
                }
            })
            .unwrap();
        let run = run_scenario(&cfg, 1).unwrap();
        assert!(run.decisions.is_empty());
        assert_eq!(run.metrics.final_total_queue, 0);
        assert!(run.slots.iter().all(|s| s.energy_j == 0.0));
        // Thresholds never move.
        assert!(run
            .frames
            .iter()
            .all(|f| f.per_user.iter().all(|u| u.threshold == 0.5)));
        assert!(run.certificate.per_user.iter().all(|c| c.active_frames == 0));
    }

    #[test]
    fn same_seed_reproduces_byte_identical_output() {
        let cfg = tiny("clo", 300);
        let a = run_scenario(&cfg, 7).unwrap();
        let b = run_scenario(&cfg, 7).unwrap();
        assert_eq!(a.slots_csv(), b.slots_csv());
        assert_eq!(a.frames_csv(), b.frames_csv());
        assert_eq!(a.decisions_csv(), b.decisions_csv());
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = tiny("clo", 300);
        let a = run_scenario(&cfg, 1).unwrap();
        let b = run_scenario(&cfg, 2).unwrap();
        assert_ne!(a.decisions_csv(), b.decisions_csv());
    }

    #[test]
    fn clo_run_produces_decisions_and_passes_certificate() {
        let cfg = tiny("clo", 2000);
        let run = run_scenario(&cfg, 3).unwrap();
        assert!(!run.decisions.is_empty());
        assert!(run.certificate.all_pass, "{:?}", run.certificate);
        // Cumulative loss approaches the target.
        for k in 0..3 {
            let last = run.metrics.final_cumulative_loss[k];
            assert!((last - 0.15).abs() < 0.08, "user {k} final loss {last}");
        }
    }

    #[test]
    fn lo_run_executes() {
        let cfg = tiny("lo-avg", 500);
        let run = run_scenario(&cfg, 3).unwrap();
        assert!(!run.decisions.is_empty());
        // Shared thresholds recorded per slot.
        assert!(run
            .slots
            .iter()
            .filter(|s| s.decisions > 0)
            .all(|s| s.theta_star.is_finite()));
    }

    #[test]
    fn latency_queue_update_cases() {
        assert_eq!(latency_virtual_queue_update(1.0, 1.0, 4.0, 4.0), 1.0);
        assert_eq!(latency_virtual_queue_update(0.0, 1.0, 6.0, 4.0), 2.0);
        let mut ql = 5.0;
        for _ in 0..50 {
            ql = latency_virtual_queue_update(ql, 1.0, 1.0, 4.0);
        }
        assert_eq!(ql, 0.0);
    }

    #[test]
    fn latency_series_division() {
        // Q_avg = 4 tasks at lambda = 0.8 and 10 ms slots: 50 ms.
        let d = latency_series(&[4], 0.8, 0.01);
        assert!((d[0] - 0.05).abs() < 1e-12);
        assert_eq!(latency_series(&[0], 0.8, 0.01)[0], 0.0);
        // Q_tot = 2 at 80 tasks/s: 25 ms.
        let d = latency_series(&[2], 0.8, 0.01);
        assert!((d[0] - 0.025).abs() < 1e-12);
    }

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 4.0, 9.0, 16.0];
        assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
        let inv = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&xs, &inv) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_to_target_semantics() {
        let series = [f64::NAN, 0.4, 0.2, 0.155, 0.149, 0.151];
        // Last violation at index 2 (0.2), settles from frame 3 on.
        assert_eq!(time_to_target(&series, 10, 0.15, 0.01), Some(40));
        assert_eq!(time_to_target(&[0.5, 0.5], 10, 0.15, 0.01), None);
        assert_eq!(time_to_target(&[0.15, 0.15], 10, 0.15, 0.01), Some(10));
    }

    #[test]
    fn conservation_holds_through_a_run() {
        let cfg = tiny("clo", 500);
        let run = run_scenario(&cfg, 5).unwrap();
        // Every DU generated is either decided or still queued.
        let decided = run.decisions.len() as u64;
        let queued = run.metrics.final_total_queue;
        let generated: u64 = decided + queued;
        // Arrival count reconstructed from the decision log and queues must
        // match the number of pushed DUs; ids are dense from 0.
        let max_id = run.decisions.iter().map(|d| d.du_id).max().unwrap_or(0);
        assert!(generated >= max_id, "ids {max_id} vs accounted {generated}");
    }
}
