//! Static network description: edge devices, servers, directed links, and the
//! graph-derived constants used by the per-slot scheduler diagnostics.
//!
//! A [`Network`] is immutable after [`NetworkBuilder::build`]; simulation runs
//! share it read-only.

use serde::Serialize;
use thiserror::Error;

/// Role of a node. The node set partitions into edge devices (task sources)
/// and servers (nodes that can decide on data units).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    EdgeDevice,
    Server,
}

/// Parameters of an edge device (one per user).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdParams {
    /// Per-slot Bernoulli arrival probability.
    pub arrival_prob: f64,
    /// Size of one data unit in bits.
    pub du_bits: f64,
    /// Long-term reliability-loss target.
    pub reliability_target: f64,
    /// Threshold learning rate used at frame boundaries.
    pub learning_rate: f64,
    /// Feedback delay in frames.
    pub feedback_delay_frames: usize,
    /// Initial decision threshold.
    pub initial_threshold: f64,
}

/// Parameters of a server node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServerParams {
    /// Inference-quality parameter; larger values mean a sharper model.
    /// `f64::INFINITY` denotes a perfect model.
    pub quality: f64,
    /// Maximum decisions per slot.
    pub max_decisions_per_slot: usize,
}

/// One node of the network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    /// Maximum total transmit power of the node, watts.
    pub max_power_w: f64,
    pub ed: Option<EdParams>,
    pub server: Option<ServerParams>,
}

/// One directed link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Average path loss in dB (positive number).
    pub path_loss_db: f64,
    /// Transmission bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Maximum DUs the link may carry per slot.
    pub max_dus_per_slot: usize,
}

/// Validated, immutable network with precomputed degrees and indexes.
#[derive(Debug, Clone, Serialize)]
pub struct Network {
    nodes: Vec<NodeSpec>,
    edges: Vec<Edge>,
    users: Vec<usize>,
    servers: Vec<usize>,
    out_degree: Vec<usize>,
    in_degree: Vec<usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    user_of_node: Vec<Option<usize>>,
    server_pos_of_node: Vec<Option<usize>>,
    depth: Vec<usize>,
}

/// Configuration error naming the offending field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("edge references unknown node `{0}`")]
    DanglingEndpoint(String),
    #[error("self-loop edge on `{0}`")]
    SelfLoop(String),
    #[error("node `{node}`: {field} must be positive, got {value}")]
    NonPositive {
        node: String,
        field: &'static str,
        value: f64,
    },
    #[error("node `{node}`: {field} must lie in [0, 1], got {value}")]
    OutOfUnitRange {
        node: String,
        field: &'static str,
        value: f64,
    },
    #[error("edge `{edge}`: {field} must be positive, got {value}")]
    EdgeNonPositive {
        edge: String,
        field: &'static str,
        value: f64,
    },
    #[error("node `{0}` has role/parameter mismatch")]
    RoleMismatch(String),
    #[error("network has no edge devices")]
    NoUsers,
}

/// Incrementally assembles a [`Network`].
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: Vec<NodeSpec>,
    edges: Vec<(String, String, Option<f64>, Option<f64>, Option<usize>)>,
    default_path_loss_db: f64,
    default_bandwidth_hz: f64,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        NetworkBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
            default_path_loss_db: 90.0,
            default_bandwidth_hz: 20.0e6,
        }
    }

    pub fn link_defaults(mut self, path_loss_db: f64, bandwidth_hz: f64) -> Self {
        self.default_path_loss_db = path_loss_db;
        self.default_bandwidth_hz = bandwidth_hz;
        self
    }

    pub fn edge_device(mut self, id: &str, max_power_w: f64, params: EdParams) -> Self {
        self.nodes.push(NodeSpec {
            id: id.to_string(),
            role: Role::EdgeDevice,
            max_power_w,
            ed: Some(params),
            server: None,
        });
        self
    }

    pub fn server(mut self, id: &str, max_power_w: f64, params: ServerParams) -> Self {
        self.nodes.push(NodeSpec {
            id: id.to_string(),
            role: Role::Server,
            max_power_w,
            ed: None,
            server: Some(params),
        });
        self
    }

    pub fn edge(mut self, from: &str, to: &str) -> Self {
        self.edges.push((from.to_string(), to.to_string(), None, None, None));
        self
    }

    pub fn edge_with(
        mut self,
        from: &str,
        to: &str,
        path_loss_db: f64,
        bandwidth_hz: Option<f64>,
        max_dus_per_slot: Option<usize>,
    ) -> Self {
        self.edges.push((
            from.to_string(),
            to.to_string(),
            Some(path_loss_db),
            bandwidth_hz,
            max_dus_per_slot,
        ));
        self
    }

    /// Validates and freezes the network.
    pub fn build(self) -> Result<Network, Vec<NetError>> {
        let mut errors = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id.clone(), i).is_some() {
                errors.push(NetError::DuplicateId(node.id.clone()));
            }
            if node.max_power_w <= 0.0 {
                errors.push(NetError::NonPositive {
                    node: node.id.clone(),
                    field: "max_power_w",
                    value: node.max_power_w,
                });
            }
            match node.role {
                Role::EdgeDevice => {
                    let Some(ed) = &node.ed else {
                        errors.push(NetError::RoleMismatch(node.id.clone()));
                        continue;
                    };
                    if !(0.0..=1.0).contains(&ed.arrival_prob) {
                        errors.push(NetError::OutOfUnitRange {
                            node: node.id.clone(),
                            field: "arrival_prob",
                            value: ed.arrival_prob,
                        });
                    }
                    if !(0.0..=1.0).contains(&ed.reliability_target) {
                        errors.push(NetError::OutOfUnitRange {
                            node: node.id.clone(),
                            field: "reliability_target",
                            value: ed.reliability_target,
                        });
                    }
                    if ed.learning_rate <= 0.0 {
                        errors.push(NetError::NonPositive {
                            node: node.id.clone(),
                            field: "learning_rate",
                            value: ed.learning_rate,
                        });
                    }
                    if ed.du_bits <= 0.0 {
                        errors.push(NetError::NonPositive {
                            node: node.id.clone(),
                            field: "du_bits",
                            value: ed.du_bits,
                        });
                    }
                }
                Role::Server => {
                    let Some(sp) = &node.server else {
                        errors.push(NetError::RoleMismatch(node.id.clone()));
                        continue;
                    };
                    if sp.max_decisions_per_slot == 0 {
                        errors.push(NetError::NonPositive {
                            node: node.id.clone(),
                            field: "max_decisions_per_slot",
                            value: 0.0,
                        });
                    }
                    if sp.quality <= 0.0 {
                        errors.push(NetError::NonPositive {
                            node: node.id.clone(),
                            field: "quality",
                            value: sp.quality,
                        });
                    }
                }
            }
        }

        let mut edges = Vec::new();
        for (from, to, pl, bw, cap) in &self.edges {
            let (Some(&fi), Some(&ti)) = (index.get(from), index.get(to)) else {
                let missing = if index.contains_key(from) { to } else { from };
                errors.push(NetError::DanglingEndpoint(missing.clone()));
                continue;
            };
            if fi == ti {
                errors.push(NetError::SelfLoop(from.clone()));
                continue;
            }
            let edge = Edge {
                from: fi,
                to: ti,
                path_loss_db: pl.unwrap_or(self.default_path_loss_db),
                bandwidth_hz: bw.unwrap_or(self.default_bandwidth_hz),
                max_dus_per_slot: cap.unwrap_or(1),
            };
            if edge.bandwidth_hz <= 0.0 {
                errors.push(NetError::EdgeNonPositive {
                    edge: format!("{from}->{to}"),
                    field: "bandwidth_hz",
                    value: edge.bandwidth_hz,
                });
            }
            if edge.max_dus_per_slot == 0 {
                errors.push(NetError::EdgeNonPositive {
                    edge: format!("{from}->{to}"),
                    field: "max_dus_per_slot",
                    value: 0.0,
                });
            }
            edges.push(edge);
        }

        let users: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == Role::EdgeDevice)
            .map(|(i, _)| i)
            .collect();
        if users.is_empty() {
            errors.push(NetError::NoUsers);
        }
        if !errors.is_empty() {
            return Err(errors);
        }

        let n = self.nodes.len();
        let servers: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, nd)| nd.role == Role::Server)
            .map(|(i, _)| i)
            .collect();
        let mut out_degree = vec![0usize; n];
        let mut in_degree = vec![0usize; n];
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            out_degree[edge.from] += 1;
            in_degree[edge.to] += 1;
            out_edges[edge.from].push(e);
            in_edges[edge.to].push(e);
        }
        let mut user_of_node = vec![None; n];
        for (k, &u) in users.iter().enumerate() {
            user_of_node[u] = Some(k);
        }
        let mut server_pos_of_node = vec![None; n];
        for (p, &s) in servers.iter().enumerate() {
            server_pos_of_node[s] = Some(p);
        }

        // Hop distance from the nearest edge device, used for decision-depth
        // statistics. Unreachable nodes keep depth 0.
        let mut depth = vec![usize::MAX; n];
        let mut frontier: Vec<usize> = users.clone();
        for &u in &users {
            depth[u] = 0;
        }
        while let Some(node) = frontier.pop() {
            for &e in &out_edges[node] {
                let next = edges[e].to;
                if depth[next] > depth[node] + 1 {
                    depth[next] = depth[node] + 1;
                    frontier.push(next);
                }
            }
        }
        for d in depth.iter_mut() {
            if *d == usize::MAX {
                *d = 0;
            }
        }

        Ok(Network {
            nodes: self.nodes,
            edges,
            users,
            servers,
            out_degree,
            in_degree,
            out_edges,
            in_edges,
            user_of_node,
            server_pos_of_node,
            depth,
        })
    }
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn node(&self, idx: usize) -> &NodeSpec {
        &self.nodes[idx]
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    /// Node indexes of the edge devices; user `k` is `users()[k]`.
    pub fn users(&self) -> &[usize] {
        &self.users
    }

    pub fn servers(&self) -> &[usize] {
        &self.servers
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.out_degree[node]
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.in_degree[node]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn is_server(&self, node: usize) -> bool {
        self.nodes[node].role == Role::Server
    }

    /// User index owning node `node`, if it is an edge device.
    pub fn user_of_node(&self, node: usize) -> Option<usize> {
        self.user_of_node[node]
    }

    /// Position of `node` within `servers()`, if it is a server.
    pub fn server_pos(&self, node: usize) -> Option<usize> {
        self.server_pos_of_node[node]
    }

    /// Hop distance from the nearest edge device.
    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    pub fn ed_params(&self, user: usize) -> &EdParams {
        self.nodes[self.users[user]].ed.as_ref().expect("validated ED")
    }

    pub fn server_params(&self, node: usize) -> &ServerParams {
        self.nodes[node].server.as_ref().expect("validated server")
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Constant term of the drift-plus-penalty upper bound:
    /// `D = N*K + K * sum_n (out_deg^2 + in_deg^2) / 2`.
    pub fn drift_constant(&self, user_count: usize) -> f64 {
        let n = self.nodes.len() as f64;
        let k = user_count as f64;
        let degree_sum: f64 = (0..self.nodes.len())
            .map(|i| {
                let dp = self.out_degree[i] as f64;
                let dm = self.in_degree[i] as f64;
                (dp * dp + dm * dm) / 2.0
            })
            .sum();
        n * k + k * degree_sum
    }
}
