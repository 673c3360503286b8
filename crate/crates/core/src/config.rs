//! Scenario configuration: a schema-versioned structured-text format with
//! paper-grade defaults, exhaustive validation, and stable round-tripping.
//!
//! Every field is optional in the file; an empty config yields the default
//! single-hop scenario (three edge devices, each with a co-located light
//! server, plus one deeper central server). Validation collects *all*
//! violations before reporting.

use crate::net::{EdParams, Network, NetworkBuilder, ServerParams};
use crate::tasks::{PrecisionKind, ReliabilityKind, TaskGenConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Clo,
    LoAvg,
    LoOutage,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Clo => "clo",
            Policy::LoAvg => "lo-avg",
            Policy::LoOutage => "lo-outage",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clo" => Ok(Policy::Clo),
            "lo-avg" => Ok(Policy::LoAvg),
            "lo-outage" => Ok(Policy::LoOutage),
            other => Err(format!("unknown policy `{other}` (expected clo | lo-avg | lo-outage)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorMode {
    Oracle,
    Noisy,
    Table,
}

/// Optional average total-queue-length constraint per user, interpreted as a
/// latency constraint through Little's law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyConstraint {
    /// Average in-system DU budget per user.
    pub q_avg: f64,
    /// Virtual-queue step size.
    pub step: f64,
}

// ---------------------------------------------------------------------------
// Raw (file-level) schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: Option<u32>,
    pub name: Option<String>,
    pub scenario: Option<RawScenario>,
    pub network: Option<RawNetwork>,
    pub tasks: Option<RawTasks>,
    pub lo: Option<RawLo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub policy: Option<String>,
    pub slots: Option<u64>,
    pub frame_size: Option<u64>,
    pub v: Option<f64>,
    pub eta: Option<f64>,
    /// Alternative cost weighting `(1-beta)*E + beta*F`; converted to the
    /// canonical `eta = beta / (1 - beta)`.
    pub beta_weight: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub slot_duration_s: Option<f64>,
    pub solver: Option<String>,
    pub exact_var_limit: Option<usize>,
    pub predictor: Option<String>,
    pub predictor_bias: Option<f64>,
    pub predictor_sigma: Option<f64>,
    pub reliability_loss: Option<String>,
    pub precision_loss: Option<String>,
    pub non_stationary: Option<bool>,
    pub regime_low: Option<f64>,
    pub regime_high: Option<f64>,
    pub regime_period_slots: Option<u64>,
    pub regime_switch_prob: Option<f64>,
    pub converged_window_slots: Option<u64>,
    pub stability_threshold: Option<f64>,
    pub latency_q_avg: Option<f64>,
    pub latency_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub path_loss_db: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub noise_dbm_per_hz: Option<f64>,
    pub max_power_w: Option<f64>,
    pub nodes: Option<Vec<RawNode>>,
    pub edges: Option<Vec<RawEdge>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: String,
    pub role: String,
    pub max_power_w: Option<f64>,
    // Edge-device fields.
    pub arrival_prob: Option<f64>,
    pub du_bits: Option<f64>,
    pub reliability_target: Option<f64>,
    pub learning_rate: Option<f64>,
    pub feedback_delay_frames: Option<usize>,
    pub initial_threshold: Option<f64>,
    // Server fields.
    pub quality: Option<f64>,
    pub max_decisions_per_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEdge {
    pub from: String,
    pub to: String,
    pub path_loss_db: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub max_dus_per_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawTasks {
    pub grid: Option<[usize; 2]>,
    pub contrast: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub mask_min_frac: Option<f64>,
    pub mask_max_frac: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawLo {
    pub beta: Option<f64>,
    pub xi: Option<f64>,
    pub outage_threshold: Option<f64>,
    pub outage_target: Option<f64>,
    pub theta_grid: Option<Vec<f64>>,
    pub calibration_tasks: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

// ---------------------------------------------------------------------------
// Validated scenario
// ---------------------------------------------------------------------------

/// A fully validated scenario, with every default injected. The normalized
/// raw form is retained so configs re-serialize stably.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub policy: Policy,
    pub slots: u64,
    pub frame_size: u64,
    pub v: f64,
    pub eta: f64,
    pub seeds: Vec<u64>,
    pub slot_duration_s: f64,
    pub noise_w_per_hz: f64,
    pub solver: SolverChoice,
    pub exact_var_limit: usize,
    pub predictor: PredictorMode,
    pub predictor_bias: f64,
    pub predictor_sigma: f64,
    pub reliability_kind: ReliabilityKind,
    pub precision_kind: PrecisionKind,
    pub non_stationary: bool,
    pub regime_low: f64,
    pub regime_high: f64,
    pub regime_period_slots: u64,
    pub regime_switch_prob: f64,
    pub converged_window_slots: u64,
    pub stability_threshold: f64,
    pub latency: Option<LatencyConstraint>,
    pub network: Network,
    pub task_gen: TaskGenConfig,
    pub lo_beta: f64,
    pub lo_xi: f64,
    pub outage_threshold: f64,
    pub outage_target: f64,
    pub theta_grid: Vec<f64>,
    pub calibration_tasks: usize,
    raw: RawConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    /// The default single-hop scenario: `u1..u3` each reach a co-located
    /// light server over a lossless link and a deeper central server `s4`
    /// over the wireless default.
    pub fn default_single_hop() -> Self {
        Self::from_toml_str("").expect("default scenario is valid")
    }

    /// The default multi-hop scenario: three EDs feed `s1`, which forwards
    /// to `s2`/`s3`, both reaching the deepest server `s4`.
    pub fn default_multi_hop() -> Self {
        let mut raw = RawConfig::default();
        raw.name = Some("multihop".to_string());
        raw.network = Some(multi_hop_network());
        Self::from_raw(raw).expect("default multi-hop scenario is valid")
    }

    /// Applies a mutation to the raw form and revalidates.
    pub fn modify<F: FnOnce(&mut RawConfig)>(&self, f: F) -> Result<Self, ConfigError> {
        let mut raw = self.raw.clone();
        f(&mut raw);
        Self::from_raw(raw)
    }

    /// Normalized (defaults-injected) structured-text form.
    pub fn to_normalized_toml(&self) -> String {
        toml::to_string(&self.raw).expect("normalized config serializes")
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn frames(&self) -> u64 {
        self.slots / self.frame_size
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let normalized = normalize(raw);
        validate(normalized)
    }
}

fn single_hop_network() -> RawNetwork {
    let ed = |id: &str| RawNode {
        id: id.to_string(),
        role: "ed".to_string(),
        max_power_w: None,
        arrival_prob: None,
        du_bits: None,
        reliability_target: None,
        learning_rate: None,
        feedback_delay_frames: None,
        initial_threshold: None,
        quality: None,
        max_decisions_per_slot: None,
    };
    let server = |id: &str, quality: f64| RawNode {
        id: id.to_string(),
        role: "server".to_string(),
        max_power_w: None,
        arrival_prob: None,
        du_bits: None,
        reliability_target: None,
        learning_rate: None,
        feedback_delay_frames: None,
        initial_threshold: None,
        quality: Some(quality),
        max_decisions_per_slot: None,
    };
    // Co-located light servers are one lossless hop from their ED.
    let local_edge = |from: &str, to: &str| RawEdge {
        from: from.to_string(),
        to: to.to_string(),
        path_loss_db: Some(0.0),
        bandwidth_hz: None,
        max_dus_per_slot: None,
    };
    let radio_edge = |from: &str, to: &str| RawEdge {
        from: from.to_string(),
        to: to.to_string(),
        path_loss_db: None,
        bandwidth_hz: None,
        max_dus_per_slot: None,
    };
    RawNetwork {
        path_loss_db: None,
        bandwidth_hz: None,
        noise_dbm_per_hz: None,
        max_power_w: None,
        nodes: Some(vec![
            ed("u1"),
            ed("u2"),
            ed("u3"),
            server("s1", 1.0),
            server("s2", 1.0),
            server("s3", 1.0),
            server("s4", 2.5),
        ]),
        edges: Some(vec![
            local_edge("u1", "s1"),
            local_edge("u2", "s2"),
            local_edge("u3", "s3"),
            radio_edge("u1", "s4"),
            radio_edge("u2", "s4"),
            radio_edge("u3", "s4"),
        ]),
    }
}

fn multi_hop_network() -> RawNetwork {
    let single = single_hop_network();
    let mut nodes = Vec::new();
    for node in single.nodes.unwrap() {
        if node.role == "ed" {
            nodes.push(node);
        }
    }
    let server = |id: &str, quality: f64| RawNode {
        id: id.to_string(),
        role: "server".to_string(),
        max_power_w: None,
        arrival_prob: None,
        du_bits: None,
        reliability_target: None,
        learning_rate: None,
        feedback_delay_frames: None,
        initial_threshold: None,
        quality: Some(quality),
        max_decisions_per_slot: None,
    };
    nodes.push(server("s1", 1.0));
    nodes.push(server("s2", 1.6));
    nodes.push(server("s3", 1.6));
    nodes.push(server("s4", 2.5));
    let edge = |from: &str, to: &str| RawEdge {
        from: from.to_string(),
        to: to.to_string(),
        path_loss_db: None,
        bandwidth_hz: None,
        max_dus_per_slot: None,
    };
    RawNetwork {
        path_loss_db: None,
        bandwidth_hz: None,
        noise_dbm_per_hz: None,
        max_power_w: None,
        nodes: Some(nodes),
        edges: Some(vec![
            edge("u1", "s1"),
            edge("u2", "s1"),
            edge("u3", "s1"),
            edge("s1", "s2"),
            edge("s1", "s3"),
            edge("s2", "s4"),
            edge("s3", "s4"),
        ]),
    }
}

fn normalize(mut raw: RawConfig) -> RawConfig {
    raw.schema.get_or_insert(SCHEMA_VERSION);
    raw.name.get_or_insert_with(|| "scenario".to_string());

    let s = raw.scenario.get_or_insert_with(RawScenario::default);
    s.policy.get_or_insert_with(|| "clo".to_string());
    s.slots.get_or_insert(10_000);
    s.frame_size.get_or_insert(10);
    s.v.get_or_insert(200.0);
    // The beta weighting and eta are interchangeable; beta, when given,
    // defines eta canonically.
    if let Some(beta) = s.beta_weight {
        if (0.0..1.0).contains(&beta) {
            s.eta = Some(beta / (1.0 - beta));
        }
    }
    s.eta.get_or_insert(0.5);
    s.seeds.get_or_insert_with(|| vec![1]);
    s.slot_duration_s.get_or_insert(0.05);
    s.solver.get_or_insert_with(|| "greedy".to_string());
    s.exact_var_limit.get_or_insert(20);
    s.predictor.get_or_insert_with(|| "oracle".to_string());
    s.predictor_bias.get_or_insert(0.0);
    s.predictor_sigma.get_or_insert(0.0);
    s.reliability_loss.get_or_insert_with(|| "fnr".to_string());
    s.precision_loss.get_or_insert_with(|| "relative_fp".to_string());
    s.non_stationary.get_or_insert(false);
    s.regime_low.get_or_insert(0.4);
    s.regime_high.get_or_insert(0.8);
    s.regime_period_slots.get_or_insert(100);
    s.regime_switch_prob.get_or_insert(0.5);
    s.converged_window_slots.get_or_insert(1_000);
    s.stability_threshold.get_or_insert(0.01);
    if s.latency_q_avg.is_some() {
        s.latency_step.get_or_insert(0.5);
    }

    let net = raw.network.get_or_insert_with(RawNetwork::default);
    net.path_loss_db.get_or_insert(90.0);
    net.bandwidth_hz.get_or_insert(20.0e6);
    net.noise_dbm_per_hz.get_or_insert(-174.0);
    net.max_power_w.get_or_insert(3.5);
    if net.nodes.is_none() {
        let d = single_hop_network();
        net.nodes = d.nodes;
        net.edges = d.edges;
    }
    net.edges.get_or_insert_with(Vec::new);
    for node in net.nodes.as_mut().unwrap() {
        node.max_power_w.get_or_insert(net.max_power_w.unwrap());
        if node.role == "ed" {
            node.arrival_prob.get_or_insert(0.5);
            node.du_bits.get_or_insert(6_291_456.0);
            node.reliability_target.get_or_insert(0.15);
            node.learning_rate.get_or_insert(0.5);
            node.feedback_delay_frames.get_or_insert(0);
            node.initial_threshold.get_or_insert(0.5);
        } else {
            node.quality.get_or_insert(1.0);
            node.max_decisions_per_slot.get_or_insert(1);
        }
    }

    let tasks = raw.tasks.get_or_insert_with(RawTasks::default);
    tasks.grid.get_or_insert([16, 16]);
    tasks.contrast.get_or_insert(0.2);
    tasks.noise_sigma.get_or_insert(0.15);
    tasks.mask_min_frac.get_or_insert(0.05);
    tasks.mask_max_frac.get_or_insert(0.40);

    let lo = raw.lo.get_or_insert_with(RawLo::default);
    lo.beta.get_or_insert(0.5);
    lo.xi.get_or_insert(0.5);
    lo.outage_threshold.get_or_insert(0.143);
    lo.outage_target.get_or_insert(0.32);
    lo.theta_grid
        .get_or_insert_with(|| (1..=9).map(|i| i as f64 / 10.0).collect());
    lo.calibration_tasks.get_or_insert(500);

    raw
}

fn validate(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let mut errors: Vec<String> = Vec::new();

    if raw.schema != Some(SCHEMA_VERSION) {
        errors.push(format!(
            "schema: expected {SCHEMA_VERSION}, got {:?}",
            raw.schema
        ));
    }

    let s = raw.scenario.clone().unwrap();
    let policy = s.policy.as_deref().unwrap().parse::<Policy>();
    if let Err(e) = &policy {
        errors.push(format!("scenario.policy: {e}"));
    }
    let slots = s.slots.unwrap();
    let frame_size = s.frame_size.unwrap();
    if frame_size == 0 {
        errors.push("scenario.frame_size: must be positive".to_string());
    } else if slots % frame_size != 0 {
        errors.push(format!(
            "scenario.slots: {slots} not divisible by frame_size {frame_size}"
        ));
    }
    let v = s.v.unwrap();
    if v <= 0.0 {
        errors.push(format!("scenario.v: must be positive, got {v}"));
    }
    let eta = s.eta.unwrap();
    if eta < 0.0 {
        errors.push(format!("scenario.eta: must be non-negative, got {eta}"));
    }
    let seeds = s.seeds.clone().unwrap();
    if seeds.is_empty() {
        errors.push("scenario.seeds: must not be empty".to_string());
    }
    let slot_duration_s = s.slot_duration_s.unwrap();
    if slot_duration_s <= 0.0 {
        errors.push("scenario.slot_duration_s: must be positive".to_string());
    }
    let solver = match s.solver.as_deref().unwrap() {
        "exact" => SolverChoice::Exact,
        "greedy" => SolverChoice::Greedy,
        other => {
            errors.push(format!(
                "scenario.solver: unknown `{other}` (expected exact | greedy)"
            ));
            SolverChoice::Greedy
        }
    };
    let predictor = match s.predictor.as_deref().unwrap() {
        "oracle" => PredictorMode::Oracle,
        "noisy" => PredictorMode::Noisy,
        "table" => PredictorMode::Table,
        other => {
            errors.push(format!(
                "scenario.predictor: unknown `{other}` (expected oracle | noisy | table)"
            ));
            PredictorMode::Oracle
        }
    };
    let predictor_sigma = s.predictor_sigma.unwrap();
    if predictor_sigma < 0.0 {
        errors.push("scenario.predictor_sigma: must be non-negative".to_string());
    }
    let reliability_kind = match s.reliability_loss.as_deref().unwrap() {
        "fnr" => ReliabilityKind::Fnr,
        "miscoverage" => ReliabilityKind::Miscoverage,
        other => {
            errors.push(format!(
                "scenario.reliability_loss: unknown `{other}` (expected fnr | miscoverage)"
            ));
            ReliabilityKind::Fnr
        }
    };
    let precision_kind = match s.precision_loss.as_deref().unwrap() {
        "relative_fp" => PrecisionKind::RelativeFp,
        "fpr" => PrecisionKind::Fpr,
        "set_size" => PrecisionKind::SetSize,
        other => {
            errors.push(format!(
                "scenario.precision_loss: unknown `{other}` (expected relative_fp | fpr | set_size)"
            ));
            PrecisionKind::RelativeFp
        }
    };
    for (field, p) in [
        ("regime_low", s.regime_low.unwrap()),
        ("regime_high", s.regime_high.unwrap()),
        ("regime_switch_prob", s.regime_switch_prob.unwrap()),
    ] {
        if !(0.0..=1.0).contains(&p) {
            errors.push(format!("scenario.{field}: must lie in [0, 1], got {p}"));
        }
    }
    let converged_window_slots = s.converged_window_slots.unwrap().min(slots);
    let latency = s.latency_q_avg.map(|q_avg| {
        if q_avg <= 0.0 {
            errors.push("scenario.latency_q_avg: must be positive".to_string());
        }
        LatencyConstraint {
            q_avg,
            step: s.latency_step.unwrap_or(0.5),
        }
    });

    let rn = raw.network.clone().unwrap();
    let noise_w_per_hz = crate::channel::noise_dbm_per_hz_to_w(rn.noise_dbm_per_hz.unwrap());
    let mut builder =
        NetworkBuilder::new().link_defaults(rn.path_loss_db.unwrap(), rn.bandwidth_hz.unwrap());
    for node in rn.nodes.as_ref().unwrap() {
        match node.role.as_str() {
            "ed" => {
                builder = builder.edge_device(
                    &node.id,
                    node.max_power_w.unwrap(),
                    EdParams {
                        arrival_prob: node.arrival_prob.unwrap(),
                        du_bits: node.du_bits.unwrap(),
                        reliability_target: node.reliability_target.unwrap(),
                        learning_rate: node.learning_rate.unwrap(),
                        feedback_delay_frames: node.feedback_delay_frames.unwrap(),
                        initial_threshold: node.initial_threshold.unwrap(),
                    },
                );
            }
            "server" => {
                builder = builder.server(
                    &node.id,
                    node.max_power_w.unwrap(),
                    ServerParams {
                        quality: node.quality.unwrap(),
                        max_decisions_per_slot: node.max_decisions_per_slot.unwrap(),
                    },
                );
            }
            other => {
                errors.push(format!(
                    "network.nodes[{}].role: unknown `{other}` (expected ed | server)",
                    node.id
                ));
            }
        }
    }
    for edge in rn.edges.as_ref().unwrap() {
        builder = builder.edge_with(
            &edge.from,
            &edge.to,
            edge.path_loss_db.unwrap_or(rn.path_loss_db.unwrap()),
            Some(edge.bandwidth_hz.unwrap_or(rn.bandwidth_hz.unwrap())),
            Some(edge.max_dus_per_slot.unwrap_or(1)),
        );
    }
    let network = match builder.build() {
        Ok(net) => Some(net),
        Err(errs) => {
            errors.extend(errs.into_iter().map(|e| format!("network: {e}")));
            None
        }
    };

    let rt = raw.tasks.clone().unwrap();
    let [grid_h, grid_w] = rt.grid.unwrap();
    if grid_h < 4 || grid_w < 4 {
        errors.push(format!("tasks.grid: must be at least 4x4, got {grid_h}x{grid_w}"));
    }
    let task_gen = TaskGenConfig {
        height: grid_h,
        width: grid_w,
        contrast: rt.contrast.unwrap(),
        noise_sigma: rt.noise_sigma.unwrap(),
        mask_min_frac: rt.mask_min_frac.unwrap(),
        mask_max_frac: rt.mask_max_frac.unwrap(),
    };
    if !(task_gen.contrast > 0.0 && task_gen.contrast <= 0.5) {
        errors.push("tasks.contrast: must lie in (0, 0.5]".to_string());
    }
    if task_gen.noise_sigma < 0.0 {
        errors.push("tasks.noise_sigma: must be non-negative".to_string());
    }
    if !(task_gen.mask_min_frac > 0.0
        && task_gen.mask_min_frac <= task_gen.mask_max_frac
        && task_gen.mask_max_frac <= 1.0)
    {
        errors.push("tasks.mask fractions: need 0 < min <= max <= 1".to_string());
    }

    let rlo = raw.lo.clone().unwrap();
    let theta_grid = rlo.theta_grid.clone().unwrap();
    if theta_grid.is_empty()
        || theta_grid.windows(2).any(|w| w[0] >= w[1])
        || theta_grid.iter().any(|&t| !(0.0..=1.0).contains(&t))
    {
        errors.push("lo.theta_grid: must be strictly increasing within [0, 1]".to_string());
    }
    for (field, val) in [("beta", rlo.beta.unwrap()), ("xi", rlo.xi.unwrap())] {
        if val <= 0.0 {
            errors.push(format!("lo.{field}: must be positive, got {val}"));
        }
    }
    if !(0.0..1.0).contains(&rlo.outage_target.unwrap()) {
        errors.push("lo.outage_target: must lie in [0, 1)".to_string());
    }

    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }

    Ok(ScenarioConfig {
        name: raw.name.clone().unwrap(),
        policy: policy.unwrap(),
        slots,
        frame_size,
        v,
        eta,
        seeds,
        slot_duration_s,
        noise_w_per_hz,
        solver,
        exact_var_limit: s.exact_var_limit.unwrap(),
        predictor,
        predictor_bias: s.predictor_bias.unwrap(),
        predictor_sigma,
        reliability_kind,
        precision_kind,
        non_stationary: s.non_stationary.unwrap(),
        regime_low: s.regime_low.unwrap(),
        regime_high: s.regime_high.unwrap(),
        regime_period_slots: s.regime_period_slots.unwrap(),
        regime_switch_prob: s.regime_switch_prob.unwrap(),
        converged_window_slots,
        stability_threshold: s.stability_threshold.unwrap(),
        latency,
        network: network.unwrap(),
        task_gen,
        lo_beta: rlo.beta.unwrap(),
        lo_xi: rlo.xi.unwrap(),
        outage_threshold: rlo.outage_threshold.unwrap(),
        outage_target: rlo.outage_target.unwrap(),
        theta_grid,
        calibration_tasks: rlo.calibration_tasks.unwrap(),
        raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_paper_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.policy, Policy::Clo);
        assert_eq!(cfg.slots, 10_000);
        assert_eq!(cfg.frame_size, 10);
        assert_eq!(cfg.v, 200.0);
        assert_eq!(cfg.network.users().len(), 3);
        assert_eq!(cfg.network.servers().len(), 4);
        let ed = cfg.network.ed_params(0);
        assert_eq!(ed.arrival_prob, 0.5);
        assert_eq!(ed.reliability_target, 0.15);
        assert_eq!(ed.learning_rate, 0.5);
        assert_eq!(ed.du_bits, 6_291_456.0);
        assert_eq!(cfg.network.node(0).max_power_w, 3.5);
        // -174 dBm/Hz.
        assert!((cfg.noise_w_per_hz - 10f64.powf(-20.4)).abs() < 1e-30);
        let e = cfg.network.edge(0);
        assert_eq!(e.bandwidth_hz, 20.0e6);
    }

    #[test]
    fn indivisible_horizon_is_rejected() {
        let err = ScenarioConfig::from_toml_str(
            "[scenario]\nslots = 10001\nframe_size = 10\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not divisible"), "{msg}");
    }

    #[test]
    fn negative_learning_rate_names_the_node() {
        let err = ScenarioConfig::from_toml_str(
            r#"
[[network.nodes]]
id = "u1"
role = "ed"
learning_rate = -0.5

[[network.nodes]]
id = "s1"
role = "server"

[[network.edges]]
from = "u1"
to = "s1"
"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("u1") && msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn violations_are_collected_together() {
        let err = ScenarioConfig::from_toml_str(
            "[scenario]\nslots = 7\nframe_size = 2\nv = -1.0\neta = -0.5\n",
        )
        .unwrap_err();
        let ConfigError::Invalid(list) = err else {
            panic!("expected Invalid")
        };
        assert!(list.len() >= 3, "{list:?}");
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ScenarioConfig::from_toml_str(
            "[scenario]\npolicy = \"lo-avg\"\nslots = 500\nframe_size = 10\n",
        )
        .unwrap();
        let text = cfg.to_normalized_toml();
        let again = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.raw(), again.raw());
        assert_eq!(text, again.to_normalized_toml());
    }

    #[test]
    fn beta_weight_converts_to_eta() {
        let cfg =
            ScenarioConfig::from_toml_str("[scenario]\nbeta_weight = 0.5\n").unwrap();
        assert!((cfg.eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_policy_is_reported_with_path() {
        let err =
            ScenarioConfig::from_toml_str("[scenario]\npolicy = \"magic\"\n").unwrap_err();
        assert!(err.to_string().contains("scenario.policy"));
    }

    #[test]
    fn multi_hop_shape() {
        let cfg = ScenarioConfig::default_multi_hop();
        assert_eq!(cfg.network.users().len(), 3);
        assert_eq!(cfg.network.servers().len(), 4);
        assert_eq!(cfg.network.edges().len(), 7);
        let s4 = cfg.network.node_index("s4").unwrap();
        assert_eq!(cfg.network.depth(s4), 3);
    }

    #[test]
    fn latency_section_parses() {
        let cfg = ScenarioConfig::from_toml_str(
            "[scenario]\nlatency_q_avg = 4.0\nslot_duration_s = 0.01\n",
        )
        .unwrap();
        let lat = cfg.latency.unwrap();
        assert_eq!(lat.q_avg, 4.0);
        assert_eq!(lat.step, 0.5);
    }
}
