//! The per-slot scheduling problem: choose transmissions, decisions, and
//! link powers minimizing `V*(E_tot + eta*F_hat) - sum U*R - sum Q*I`
//! subject to link, server, power, and queue-emptiness constraints.
//!
//! Power allocation is folded out analytically: energy grows with power
//! beyond the delay-feasible point, so every scheduled link transmits at the
//! minimal power that completes its DUs within the slot. What remains is a
//! pure binary selection, solved exactly by enumeration on small instances or
//! by a greedy marginal-gain heuristic at scale.

use crate::channel::{capacity, link_energy, min_power_for_slot, ChannelMatrix};
use crate::net::Network;
use crate::queueing::{Decision, Du, QueueState, SlotActions, Transmission};
use thiserror::Error;

/// Estimates the precision loss a server would accrue deciding a DU at a
/// threshold. Implementations may be exact (genie-aided), noisy, or
/// table-driven.
pub trait PrecisionOracle {
    fn predict(&mut self, server_node: usize, du: Du, threshold: f64) -> f64;
}

/// Everything the scheduler observes in one slot, with thresholds fixed for
/// the frame.
pub struct SlotProblem<'a> {
    pub net: &'a Network,
    pub queues: &'a QueueState,
    pub channels: &'a ChannelMatrix,
    /// Per-user decision thresholds, fixed within the frame.
    pub thresholds: &'a [f64],
    /// Lyapunov trade-off weight; larger values privilege the cost terms
    /// over queue draining.
    pub v: f64,
    /// Energy/precision trade-off weight.
    pub eta: f64,
    pub slot_s: f64,
    pub noise_w_per_hz: f64,
    /// Optional extra reward per decision for each user (latency pressure).
    pub decision_bonus: Option<&'a [f64]>,
}

/// A unit action the solvers select from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    /// Forward one DU of `user` over `edge`.
    Tx { edge: usize, user: usize },
    /// Decide one DU of `user` at `server_node`.
    Dec { server_node: usize, user: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{count} binary variables exceed the exact-solver limit {limit}; use the greedy solver")]
    TooManyVariables { count: usize, limit: usize },
}

/// Shared machinery: candidate generation, feasibility, and the objective.
/// Policy layers plug in their own per-decision cost.
pub struct SlotEngine<'a> {
    pub net: &'a Network,
    pub queues: &'a QueueState,
    pub channels: &'a ChannelMatrix,
    pub v: f64,
    pub slot_s: f64,
    pub noise_w_per_hz: f64,
}

impl<'a> SlotEngine<'a> {
    pub fn from_problem(p: &SlotProblem<'a>) -> Self {
        SlotEngine {
            net: p.net,
            queues: p.queues,
            channels: p.channels,
            v: p.v,
            slot_s: p.slot_s,
            noise_w_per_hz: p.noise_w_per_hz,
        }
    }

    /// Unit actions that could pop a DU this slot, in canonical order:
    /// edges by index crossed with users, then servers crossed with users.
    pub fn candidates(&self) -> Vec<Candidate> {
        let users = self.net.user_count();
        let mut out = Vec::new();
        for (e, edge) in self.net.edges().iter().enumerate() {
            for k in 0..users {
                if self.queues.len(edge.from, k) > 0 {
                    out.push(Candidate::Tx { edge: e, user: k });
                }
            }
        }
        for &s in self.net.servers() {
            for k in 0..users {
                if self.queues.len(s, k) > 0 {
                    out.push(Candidate::Dec {
                        server_node: s,
                        user: k,
                    });
                }
            }
        }
        out
    }

    /// Minimal feasible power and resulting capacity for an edge carrying
    /// `total_bits` this slot, ignoring the node power cap (checked later).
    fn edge_power(&self, edge: usize, total_bits: f64) -> Option<(f64, f64)> {
        let e = self.net.edge(edge);
        let gain = self.channels.gain(edge);
        let p = min_power_for_slot(
            total_bits,
            gain,
            e.bandwidth_hz,
            self.noise_w_per_hz,
            self.slot_s,
            self.net.node(e.from).max_power_w,
        )?;
        let c = capacity(p, gain, e.bandwidth_hz, self.noise_w_per_hz);
        Some((p, c))
    }

    /// Objective of a concrete selection; `f64::INFINITY` when infeasible.
    ///
    /// `dec_cost(server, user, du)` returns the full contribution of one
    /// decision (cost terms minus backlog/bonus rewards).
    pub fn objective(
        &self,
        txs: &[(usize, usize)],
        decs: &[(usize, usize)],
        dec_cost: &mut dyn FnMut(usize, usize, Du) -> f64,
    ) -> f64 {
        let users = self.net.user_count();
        let n = self.net.node_count();

        // Queue-use accounting: total pops per (node, user) must fit.
        let mut uses = vec![0usize; n * users];
        let mut per_edge_count = vec![0usize; self.net.edges().len()];
        let mut per_edge_bits = vec![0.0f64; self.net.edges().len()];
        for &(e, k) in txs {
            let edge = self.net.edge(e);
            uses[edge.from * users + k] += 1;
            per_edge_count[e] += 1;
            per_edge_bits[e] += self.net.ed_params(k).du_bits;
            if per_edge_count[e] > edge.max_dus_per_slot {
                return f64::INFINITY;
            }
        }
        let mut per_server = vec![0usize; n];
        for &(s, k) in decs {
            uses[s * users + k] += 1;
            per_server[s] += 1;
            if per_server[s] > self.net.server_params(s).max_decisions_per_slot {
                return f64::INFINITY;
            }
        }
        for node in 0..n {
            for k in 0..users {
                if uses[node * users + k] > self.queues.len(node, k) {
                    return f64::INFINITY;
                }
            }
        }

        // Minimal powers per used edge; node power caps across edges.
        let mut node_power = vec![0.0f64; n];
        let mut edge_rate = vec![0.0f64; self.net.edges().len()];
        let mut edge_pw = vec![0.0f64; self.net.edges().len()];
        for (e, &count) in per_edge_count.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let Some((p, c)) = self.edge_power(e, per_edge_bits[e]) else {
                return f64::INFINITY;
            };
            node_power[self.net.edge(e).from] += p;
            edge_rate[e] = c;
            edge_pw[e] = p;
        }
        for node in 0..n {
            if node_power[node] > self.net.node(node).max_power_w * (1.0 + 1e-12) {
                return f64::INFINITY;
            }
        }

        let mut objective = 0.0;
        for &(e, k) in txs {
            let energy =
                link_energy(edge_pw[e], self.net.ed_params(k).du_bits, edge_rate[e])
                    .expect("positive capacity on scheduled edge");
            objective += self.v * energy;
            objective -= self.queues.differential_backlog(self.net, e, k) as f64;
        }
        for &(s, k) in decs {
            // Forwards pop first, so the decided DU sits behind the forwards
            // selected from the same queue.
            let offset = txs
                .iter()
                .filter(|&&(e, u)| u == k && self.net.edge(e).from == s)
                .count();
            let Some(du) = self.queues.peek_at(s, k, offset) else {
                return f64::INFINITY;
            };
            objective += dec_cost(s, k, du);
        }
        objective
    }

    /// Materializes a selection into validated actions with committed powers.
    pub fn to_actions(&self, txs: &[(usize, usize)], decs: &[(usize, usize)]) -> SlotActions {
        let mut per_edge_bits = vec![0.0f64; self.net.edges().len()];
        for &(e, k) in txs {
            per_edge_bits[e] += self.net.ed_params(k).du_bits;
        }
        let mut transmissions: Vec<Transmission> = txs
            .iter()
            .map(|&(e, k)| {
                let (p, c) = self
                    .edge_power(e, per_edge_bits[e])
                    .expect("selected edge is feasible");
                let energy = link_energy(p, self.net.ed_params(k).du_bits, c)
                    .expect("positive capacity");
                Transmission {
                    edge: e,
                    user: k,
                    power_w: p,
                    energy_j: energy,
                }
            })
            .collect();
        transmissions.sort_by_key(|t| (t.edge, t.user));
        let mut decisions: Vec<Decision> = decs
            .iter()
            .map(|&(s, k)| Decision {
                server_node: s,
                user: k,
            })
            .collect();
        decisions.sort_by_key(|d| (d.server_node, d.user));
        SlotActions {
            transmissions,
            decisions,
        }
    }

    fn split(cands: &[Candidate], mask: u64) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let mut txs = Vec::new();
        let mut decs = Vec::new();
        for (i, c) in cands.iter().enumerate() {
            if mask & (1 << i) != 0 {
                match *c {
                    Candidate::Tx { edge, user } => txs.push((edge, user)),
                    Candidate::Dec { server_node, user } => decs.push((server_node, user)),
                }
            }
        }
        (txs, decs)
    }

    /// Exhaustive minimization over all feasible selections. Ties break by
    /// fewest transmissions, then fewest decisions, then the canonical
    /// selection order.
    pub fn solve_exact(
        &self,
        dec_cost: &mut dyn FnMut(usize, usize, Du) -> f64,
        var_limit: usize,
    ) -> Result<(SlotActions, f64), SolverError> {
        let cands = self.candidates();
        if cands.len() > var_limit.min(63) {
            return Err(SolverError::TooManyVariables {
                count: cands.len(),
                limit: var_limit.min(63),
            });
        }
        let mut best_mask = 0u64;
        let mut best_obj = 0.0f64; // empty selection is always feasible
        let mut best_key = (0usize, 0usize, 0u64);
        for mask in 1..(1u64 << cands.len()) {
            let (txs, decs) = Self::split(&cands, mask);
            let obj = self.objective(&txs, &decs, dec_cost);
            if !obj.is_finite() {
                continue;
            }
            let key = (txs.len(), decs.len(), mask);
            if obj < best_obj || (obj == best_obj && key < best_key) {
                best_obj = obj;
                best_mask = mask;
                best_key = key;
            }
        }
        let (txs, decs) = Self::split(&cands, best_mask);
        Ok((self.to_actions(&txs, &decs), best_obj))
    }

    /// Greedy heuristic: repeatedly add the unit action with the largest
    /// marginal objective decrease while one exists. Never returns an
    /// infeasible selection.
    pub fn solve_greedy(
        &self,
        dec_cost: &mut dyn FnMut(usize, usize, Du) -> f64,
    ) -> (SlotActions, f64) {
        let cands = self.candidates();
        let mut selected = vec![false; cands.len()];
        let mut txs: Vec<(usize, usize)> = Vec::new();
        let mut decs: Vec<(usize, usize)> = Vec::new();
        let mut current = 0.0f64;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (i, cand) in cands.iter().enumerate() {
                if selected[i] {
                    continue;
                }
                let mut trial_txs = txs.clone();
                let mut trial_decs = decs.clone();
                match *cand {
                    Candidate::Tx { edge, user } => trial_txs.push((edge, user)),
                    Candidate::Dec { server_node, user } => trial_decs.push((server_node, user)),
                }
                let obj = self.objective(&trial_txs, &trial_decs, dec_cost);
                if obj < current && best.map_or(true, |(_, b)| obj < b) {
                    best = Some((i, obj));
                }
            }
            let Some((i, obj)) = best else { break };
            selected[i] = true;
            match cands[i] {
                Candidate::Tx { edge, user } => txs.push((edge, user)),
                Candidate::Dec { server_node, user } => decs.push((server_node, user)),
            }
            current = obj;
        }
        (self.to_actions(&txs, &decs), current)
    }
}

fn clo_dec_cost<'a>(
    p: &'a SlotProblem<'_>,
    predictor: &'a mut dyn PrecisionOracle,
) -> impl FnMut(usize, usize, Du) -> f64 + 'a {
    let queues = p.queues;
    let v = p.v;
    let eta = p.eta;
    let thresholds = p.thresholds;
    let bonus = p.decision_bonus;
    move |server, user, du| {
        let predicted = predictor.predict(server, du, thresholds[user]);
        v * eta * predicted - queues.len(server, user) as f64
            - bonus.map_or(0.0, |b| b[user])
    }
}

/// Objective value of a given action set under the slot problem; infinite
/// when the actions are infeasible.
pub fn slot_objective(
    problem: &SlotProblem<'_>,
    predictor: &mut dyn PrecisionOracle,
    actions: &SlotActions,
) -> f64 {
    let engine = SlotEngine::from_problem(problem);
    let txs: Vec<(usize, usize)> = actions
        .transmissions
        .iter()
        .map(|t| (t.edge, t.user))
        .collect();
    let decs: Vec<(usize, usize)> = actions
        .decisions
        .iter()
        .map(|d| (d.server_node, d.user))
        .collect();
    let mut cost = clo_dec_cost(problem, predictor);
    engine.objective(&txs, &decs, &mut cost)
}

/// Globally optimal actions by exhaustive enumeration; refuses instances
/// with more active binary variables than `var_limit`.
pub fn solve_exact(
    problem: &SlotProblem<'_>,
    predictor: &mut dyn PrecisionOracle,
    var_limit: usize,
) -> Result<SlotActions, SolverError> {
    let engine = SlotEngine::from_problem(problem);
    let mut cost = clo_dec_cost(problem, predictor);
    engine.solve_exact(&mut cost, var_limit).map(|(a, _)| a)
}

/// Greedy actions; always feasible, objective no better than the exact one.
pub fn solve_greedy(
    problem: &SlotProblem<'_>,
    predictor: &mut dyn PrecisionOracle,
) -> SlotActions {
    let engine = SlotEngine::from_problem(problem);
    let mut cost = clo_dec_cost(problem, predictor);
    engine.solve_greedy(&mut cost).0
}

/// Realized drift-plus-penalty of one slot next to its analytic upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdppDiagnostic {
    /// `G(t+1) - G(t) + V * J(t)` with the halved Lyapunov function.
    pub realized: f64,
    /// `D - sum Q*(departures - admissions) + V * J(t)`.
    pub bound: f64,
}

/// Start-of-slot queue lengths weighted by net outflow (departures minus
/// admissions), the action-dependent term of the drift bound.
pub fn weighted_net_outflow(
    net: &Network,
    before: &QueueState,
    actions: &SlotActions,
    arrivals: &[bool],
) -> f64 {
    let users = net.user_count();
    let mut outgoing = vec![0.0f64; net.node_count() * users];
    let mut incoming = vec![0.0f64; net.node_count() * users];
    for t in &actions.transmissions {
        let e = net.edge(t.edge);
        outgoing[e.from * users + t.user] += 1.0;
        incoming[e.to * users + t.user] += 1.0;
    }
    for d in &actions.decisions {
        outgoing[d.server_node * users + d.user] += 1.0;
    }
    for (k, &arrived) in arrivals.iter().enumerate() {
        if arrived {
            incoming[net.users()[k] * users + k] += 1.0;
        }
    }
    let mut total = 0.0;
    for node in 0..net.node_count() {
        for k in 0..users {
            let q = before.len(node, k) as f64;
            total += q * (outgoing[node * users + k] - incoming[node * users + k]);
        }
    }
    total
}

/// Evaluates the drift bound for one executed slot. `arrivals[k]` is the
/// realized task arrival of user `k`, `j_realized` the slot cost `E + eta*F`.
pub fn ldpp_diagnostic(
    net: &Network,
    v: f64,
    before: &QueueState,
    after: &QueueState,
    actions: &SlotActions,
    arrivals: &[bool],
    j_realized: f64,
) -> LdppDiagnostic {
    let drift = after.lyapunov_value() - before.lyapunov_value();
    let realized = drift + v * j_realized;
    let outflow = weighted_net_outflow(net, before, actions, arrivals);
    let bound = net.drift_constant(net.user_count()) - outflow + v * j_realized;
    LdppDiagnostic { realized, bound }
}
