//! Physical per-(node, user) FIFO queues with data-unit identity and the
//! per-slot transition.
//!
//! Departures (forwards, then one decision) pop from the head of the
//! start-of-slot FIFO; forwarded DUs appear at the tail of the receiving
//! queue at the end of the slot, and new arrivals are appended after
//! deliveries. The scheduler guarantees that a queue is never asked for more
//! DUs than it holds, so the `max(0, .)` in the count recursion never
//! truncates and no phantom departures occur.

use crate::net::Network;
use serde::Serialize;
use std::collections::VecDeque;
use thiserror::Error;

/// One data unit in flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Du {
    pub id: u64,
    pub generated_slot: u64,
}

/// A scheduled transmission of one DU of `user` over `edge`, with the power
/// committed on the link and the energy attributed to this DU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub edge: usize,
    pub user: usize,
    pub power_w: f64,
    pub energy_j: f64,
}

/// A scheduled decision at `server_node` on one DU of `user`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub server_node: usize,
    pub user: usize,
}

/// The controller's choice for one slot. Transmissions and decisions are kept
/// in canonical (edge-major, then server-major) order so runs replay
/// identically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotActions {
    pub transmissions: Vec<Transmission>,
    pub decisions: Vec<Decision>,
}

impl SlotActions {
    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty() && self.decisions.is_empty()
    }

    /// Total transmission energy of the slot.
    pub fn total_energy_j(&self) -> f64 {
        self.transmissions.iter().map(|t| t.energy_j).sum()
    }

    /// Number of forwards popping from `(node, user)` before its decision.
    pub fn forwards_from(&self, net: &Network, node: usize, user: usize) -> usize {
        self.transmissions
            .iter()
            .filter(|t| t.user == user && net.edge(t.edge).from == node)
            .count()
    }

    /// Checks every scheduling constraint against the start-of-slot queues:
    /// per-link DU caps, per-server decision caps, per-node power caps, and
    /// queue-emptiness implications.
    pub fn validate(&self, net: &Network, queues: &QueueState) -> Result<(), QueueError> {
        let users = net.user_count();
        let mut per_edge = vec![0usize; net.edges().len()];
        let mut node_power = vec![0.0f64; net.node_count()];
        let mut uses = vec![0usize; net.node_count() * users];
        let mut edge_seen = std::collections::HashSet::new();
        for t in &self.transmissions {
            per_edge[t.edge] += 1;
            let from = net.edge(t.edge).from;
            uses[from * users + t.user] += 1;
            if edge_seen.insert(t.edge) {
                node_power[from] += t.power_w;
            }
        }
        for d in &self.decisions {
            uses[d.server_node * users + d.user] += 1;
        }
        for (e, &count) in per_edge.iter().enumerate() {
            if count > net.edge(e).max_dus_per_slot {
                return Err(QueueError::LinkCapExceeded { edge: e });
            }
        }
        let mut per_server = vec![0usize; net.node_count()];
        for d in &self.decisions {
            if !net.is_server(d.server_node) {
                return Err(QueueError::DecisionAtNonServer { node: d.server_node });
            }
            per_server[d.server_node] += 1;
        }
        for &s in net.servers() {
            if per_server[s] > net.server_params(s).max_decisions_per_slot {
                return Err(QueueError::ServerCapExceeded { node: s });
            }
        }
        for n in 0..net.node_count() {
            if node_power[n] > net.node(n).max_power_w * (1.0 + 1e-12) {
                return Err(QueueError::PowerCapExceeded { node: n });
            }
            for k in 0..users {
                if uses[n * users + k] > queues.len(n, k) {
                    return Err(QueueError::EmptyQueueAction { node: n, user: k });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("action pops more DUs than queued at node {node} for user {user}")]
    EmptyQueueAction { node: usize, user: usize },
    #[error("link cap exceeded on edge {edge}")]
    LinkCapExceeded { edge: usize },
    #[error("server cap exceeded at node {node}")]
    ServerCapExceeded { node: usize },
    #[error("power cap exceeded at node {node}")]
    PowerCapExceeded { node: usize },
    #[error("decision scheduled at non-server node {node}")]
    DecisionAtNonServer { node: usize },
}

/// All per-(node, user) FIFOs of a run.
#[derive(Debug, Clone)]
pub struct QueueState {
    fifos: Vec<VecDeque<Du>>,
    users: usize,
}

/// What `apply_slot` did: the DUs decided at servers, in the canonical
/// order of `actions.decisions`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub decided: Vec<(Decision, Du)>,
}

impl QueueState {
    pub fn new(net: &Network) -> Self {
        QueueState {
            fifos: vec![VecDeque::new(); net.node_count() * net.user_count()],
            users: net.user_count(),
        }
    }

    fn slot(&self, node: usize, user: usize) -> usize {
        node * self.users + user
    }

    /// Queue length `Q_n^k`.
    pub fn len(&self, node: usize, user: usize) -> usize {
        self.fifos[self.slot(node, user)].len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifos.iter().all(|f| f.is_empty())
    }

    /// Generation slot of the head DU; 0 when the queue is empty.
    pub fn head_generation_slot(&self, node: usize, user: usize) -> u64 {
        self.fifos[self.slot(node, user)]
            .front()
            .map(|du| du.generated_slot)
            .unwrap_or(0)
    }

    /// The DU `offset` positions from the head, if present.
    pub fn peek_at(&self, node: usize, user: usize, offset: usize) -> Option<Du> {
        self.fifos[self.slot(node, user)].get(offset).copied()
    }

    /// Total DUs in the system.
    pub fn total(&self) -> usize {
        self.fifos.iter().map(|f| f.len()).sum()
    }

    /// Total DUs of one user across all nodes.
    pub fn total_for_user(&self, user: usize) -> usize {
        self.fifos
            .iter()
            .skip(user)
            .step_by(self.users)
            .map(|f| f.len())
            .sum()
    }

    /// Largest queue length across (node, user) pairs.
    pub fn max_len(&self) -> usize {
        self.fifos.iter().map(|f| f.len()).max().unwrap_or(0)
    }

    /// Differential backlog `Q_from^k - Q_to^k` of an edge.
    pub fn differential_backlog(&self, net: &Network, edge: usize, user: usize) -> i64 {
        let e = net.edge(edge);
        self.len(e.from, user) as i64 - self.len(e.to, user) as i64
    }

    /// Halved sum of squared queue lengths, the scalar congestion measure
    /// used by the drift diagnostics.
    pub fn lyapunov_value(&self) -> f64 {
        0.5 * self.lyapunov_value_unhalved()
    }

    /// Sum of squared queue lengths without the 1/2 factor.
    pub fn lyapunov_value_unhalved(&self) -> f64 {
        self.fifos
            .iter()
            .map(|f| {
                let q = f.len() as f64;
                q * q
            })
            .sum()
    }

    /// Applies one slot: pops departures against the start-of-slot contents
    /// (forwards in canonical edge order first, then the decision), delivers
    /// forwarded DUs to the receiving queues, then appends new arrivals.
    ///
    /// `arrivals[k]` carries the DU created at the ED of user `k` this slot.
    pub fn apply_slot(
        &mut self,
        net: &Network,
        actions: &SlotActions,
        arrivals: &[Option<Du>],
    ) -> Result<SlotOutcome, QueueError> {
        debug_assert!(
            actions.transmissions.windows(2).all(|w| w[0].edge <= w[1].edge),
            "transmissions must be in canonical edge order"
        );
        // Forwards first, in canonical edge order.
        let mut deliveries: Vec<(usize, usize, Du)> = Vec::new();
        for t in &actions.transmissions {
            let edge = net.edge(t.edge);
            let idx = self.slot(edge.from, t.user);
            let du = self.fifos[idx]
                .pop_front()
                .ok_or(QueueError::EmptyQueueAction {
                    node: edge.from,
                    user: t.user,
                })?;
            deliveries.push((edge.to, t.user, du));
        }

        let mut decided = Vec::with_capacity(actions.decisions.len());
        for d in &actions.decisions {
            let idx = self.slot(d.server_node, d.user);
            let du = self.fifos[idx]
                .pop_front()
                .ok_or(QueueError::EmptyQueueAction {
                    node: d.server_node,
                    user: d.user,
                })?;
            decided.push((*d, du));
        }

        for (node, user, du) in deliveries {
            let idx = self.slot(node, user);
            self.fifos[idx].push_back(du);
        }
        for (k, arrival) in arrivals.iter().enumerate() {
            if let Some(du) = arrival {
                let ed = net.users()[k];
                let idx = self.slot(ed, k);
                self.fifos[idx].push_back(*du);
            }
        }
        Ok(SlotOutcome { decided })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{EdParams, NetworkBuilder, ServerParams};

    fn ed() -> EdParams {
        EdParams {
            arrival_prob: 0.5,
            du_bits: 1e6,
            reliability_target: 0.15,
            learning_rate: 0.5,
            feedback_delay_frames: 0,
            initial_threshold: 0.5,
        }
    }

    fn sp(cap: usize) -> ServerParams {
        ServerParams {
            quality: 1.0,
            max_decisions_per_slot: cap,
        }
    }

    /// ed -> s1 -> s2 with one user.
    fn chain() -> Network {
        NetworkBuilder::new()
            .edge_device("ed", 3.5, ed())
            .server("s1", 3.5, sp(1))
            .server("s2", 3.5, sp(1))
            .edge("ed", "s1")
            .edge("s1", "s2")
            .build()
            .unwrap()
    }

    fn du(id: u64, slot: u64) -> Du {
        Du {
            id,
            generated_slot: slot,
        }
    }

    fn push(q: &mut QueueState, node: usize, user: usize, d: Du) {
        q.fifos[node * q.users + user].push_back(d);
    }

    #[test]
    fn slot_transition_counts() {
        // Server queue 3, one outgoing transmission, one decision, one
        // incoming DU: 3 - 1 - 1 + 1 = 2.
        let net = chain();
        let s1 = net.node_index("s1").unwrap();
        let ed_n = net.node_index("ed").unwrap();
        let mut q = QueueState::new(&net);
        for i in 0..3 {
            push(&mut q, s1, 0, du(i, i + 1));
        }
        push(&mut q, ed_n, 0, du(10, 4));
        let actions = SlotActions {
            transmissions: vec![
                Transmission {
                    edge: 0, // ed -> s1 (the incoming DU)
                    user: 0,
                    power_w: 0.01,
                    energy_j: 1e-4,
                },
                Transmission {
                    edge: 1, // s1 -> s2 (one outgoing)
                    user: 0,
                    power_w: 0.01,
                    energy_j: 1e-4,
                },
            ],
            decisions: vec![Decision {
                server_node: s1,
                user: 0,
            }],
        };
        actions.validate(&net, &q).unwrap();
        let outcome = q.apply_slot(&net, &actions, &[None]).unwrap();
        assert_eq!(q.len(s1, 0), 2);
        // Forward popped the head (id 0); the decision got the next (id 1).
        assert_eq!(outcome.decided[0].1.id, 1);
        assert_eq!(q.len(net.node_index("s2").unwrap(), 0), 1);
    }

    #[test]
    fn empty_slot_is_identity() {
        let net = chain();
        let mut q = QueueState::new(&net);
        q.apply_slot(&net, &SlotActions::default(), &[None]).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn arrival_to_empty_queue() {
        let net = chain();
        let ed_n = net.node_index("ed").unwrap();
        let mut q = QueueState::new(&net);
        q.apply_slot(&net, &SlotActions::default(), &[Some(du(1, 7))])
            .unwrap();
        assert_eq!(q.len(ed_n, 0), 1);
        assert_eq!(q.head_generation_slot(ed_n, 0), 7);
    }

    #[test]
    fn head_generation_slot_zero_when_empty() {
        let net = chain();
        let q = QueueState::new(&net);
        assert_eq!(q.head_generation_slot(0, 0), 0);
    }

    #[test]
    fn popping_empty_queue_is_contract_violation() {
        let net = chain();
        let s1 = net.node_index("s1").unwrap();
        let mut q = QueueState::new(&net);
        let actions = SlotActions {
            transmissions: vec![],
            decisions: vec![Decision {
                server_node: s1,
                user: 0,
            }],
        };
        assert!(actions.validate(&net, &q).is_err());
        assert!(q.apply_slot(&net, &actions, &[None]).is_err());
    }

    #[test]
    fn differential_backlog_cases() {
        let net = chain();
        let ed_n = net.node_index("ed").unwrap();
        let s1 = net.node_index("s1").unwrap();
        let mut q = QueueState::new(&net);
        for i in 0..5 {
            push(&mut q, ed_n, 0, du(i, 1));
        }
        for i in 0..2 {
            push(&mut q, s1, 0, du(10 + i, 1));
        }
        assert_eq!(q.differential_backlog(&net, 0, 0), 3);
        // Equal lengths on edge s1 -> s2 after seeding s2 with 2.
        let s2 = net.node_index("s2").unwrap();
        for i in 0..2 {
            push(&mut q, s2, 0, du(20 + i, 1));
        }
        assert_eq!(q.differential_backlog(&net, 1, 0), 0);
        // Negative backlog is admissible.
        for i in 0..4 {
            push(&mut q, s2, 0, du(30 + i, 1));
        }
        assert_eq!(q.differential_backlog(&net, 1, 0), -4);
    }

    #[test]
    fn lyapunov_values() {
        let net = chain();
        let mut q = QueueState::new(&net);
        assert_eq!(q.lyapunov_value(), 0.0);
        for i in 0..4 {
            push(&mut q, 0, 0, du(i, 1));
        }
        assert_eq!(q.lyapunov_value(), 8.0);
        for i in 0..3 {
            push(&mut q, 1, 0, du(10 + i, 1));
        }
        // Queues (4, 3): (16 + 9) / 2.
        assert_eq!(q.lyapunov_value(), 12.5);
        assert_eq!(q.lyapunov_value_unhalved(), 25.0);
    }

    #[test]
    fn fifo_order_preserved_through_relay() {
        // Three DUs relayed one per slot keep generation order at s2.
        let net = chain();
        let mut q = QueueState::new(&net);
        let mut slot = 0u64;
        let mut received = Vec::new();
        for i in 0..3u64 {
            slot += 1;
            q.apply_slot(&net, &SlotActions::default(), &[Some(du(i, slot))])
                .unwrap();
        }
        for _ in 0..8 {
            slot += 1;
            let mut txs = Vec::new();
            if q.len(0, 0) > 0 {
                txs.push(Transmission {
                    edge: 0,
                    user: 0,
                    power_w: 0.0,
                    energy_j: 0.0,
                });
            }
            if q.len(1, 0) > 0 {
                txs.push(Transmission {
                    edge: 1,
                    user: 0,
                    power_w: 0.0,
                    energy_j: 0.0,
                });
            }
            let actions = SlotActions {
                transmissions: txs,
                decisions: vec![],
            };
            actions.validate(&net, &q).unwrap();
            q.apply_slot(&net, &actions, &[None]).unwrap();
            while let Some(head) = q.peek_at(2, 0, received.len()) {
                received.push(head.generated_slot);
            }
        }
        assert_eq!(received, vec![1, 2, 3]);
    }

    #[test]
    fn conservation_of_dus() {
        let net = chain();
        let mut q = QueueState::new(&net);
        let mut injected = 0usize;
        let mut decided_total = 0usize;
        let mut slot = 0u64;
        for step in 0..50u64 {
            slot += 1;
            let arrival = if step % 2 == 0 {
                injected += 1;
                Some(du(step, slot))
            } else {
                None
            };
            let mut actions = SlotActions::default();
            if q.len(0, 0) > 0 {
                actions.transmissions.push(Transmission {
                    edge: 0,
                    user: 0,
                    power_w: 0.0,
                    energy_j: 0.0,
                });
            }
            if q.len(1, 0) > 0 {
                actions.decisions.push(Decision {
                    server_node: 1,
                    user: 0,
                });
            }
            actions.validate(&net, &q).unwrap();
            let outcome = q.apply_slot(&net, &actions, &[arrival]).unwrap();
            decided_total += outcome.decided.len();
            assert_eq!(q.total() + decided_total, injected);
        }
        assert!(decided_total > 0);
    }
}
