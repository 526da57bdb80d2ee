//! Tensor networks for TT-format layers: nodes carry modes, shared modes are
//! contracted edges, and every pairwise contraction lowers to a GEMM.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type ModeId = u32;
pub type NodeId = u32;

/// What a mode dimension means in the source layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeTag {
    Rank,
    InputFeature,
    OutputFeature,
    Batch,
    SpatialPatch,
    Kernel,
}

/// One tensor dimension. A mode id appears on at most two nodes of a network;
/// shared means contracted, unshared means free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Mode {
    pub id: ModeId,
    pub size: u64,
    pub tag: ModeTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    TtCore,
    Data,
    GradientData,
    /// Result of a pairwise contraction; never present in a freshly built layer network.
    Intermediate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorNode {
    pub id: NodeId,
    pub modes: Vec<Mode>,
    pub role: NodeRole,
    /// Position k for TT cores G_k, 1-based.
    pub core_index: Option<u32>,
}

impl TensorNode {
    pub fn element_count(&self) -> u64 {
        self.modes.iter().map(|m| m.size).product()
    }

    pub fn mode(&self, id: ModeId) -> Option<&Mode> {
        self.modes.iter().find(|m| m.id == id)
    }
}

/// GEMM dimensions of one contraction step: m and n are the operands' private
/// mode products, k the shared mode product. mac = m*k*n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GemmShape {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl GemmShape {
    pub fn new(m: u64, k: u64, n: u64) -> Self {
        GemmShape { m, k, n }
    }

    pub fn mac(&self) -> u64 {
        self.m * self.k * self.n
    }
}

impl std::fmt::Display for GemmShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.k, self.n)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("node {0} not in network")]
    UnknownNode(NodeId),
    #[error("nodes {0} and {1} share no mode; outer products are not contracted")]
    NotAdjacent(NodeId, NodeId),
    #[error("network has no data node")]
    NoDataNode,
    #[error("network has {0} data nodes, expected exactly one")]
    MultipleDataNodes(usize),
}

/// A violation found by `validate`; an empty list means the network is well formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNodeId(NodeId),
    EmptyModes(NodeId),
    DuplicateMode { node: NodeId, mode: ModeId },
    ZeroSizeMode { node: NodeId, mode: ModeId },
    HyperedgeUnsupported { mode: ModeId, nodes: usize },
    SizeMismatch { mode: ModeId, left: u64, right: u64 },
    Disconnected { components: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::EmptyModes(id) => write!(f, "node {id} has no modes"),
            Violation::DuplicateMode { node, mode } => {
                write!(f, "mode {mode} listed twice on node {node}")
            }
            Violation::ZeroSizeMode { node, mode } => {
                write!(f, "mode {mode} on node {node} has size 0")
            }
            Violation::HyperedgeUnsupported { mode, nodes } => {
                write!(f, "mode {mode} appears on {nodes} nodes; hyperedges unsupported")
            }
            Violation::SizeMismatch { mode, left, right } => {
                write!(f, "mode {mode} has size {left} on one node and {right} on the other")
            }
            Violation::Disconnected { components } => {
                write!(f, "network splits into {components} components")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorNetwork {
    pub nodes: Vec<TensorNode>,
}

impl TensorNetwork {
    pub fn new(nodes: Vec<TensorNode>) -> Self {
        TensorNetwork { nodes }
    }

    pub fn node(&self, id: NodeId) -> Option<&TensorNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn max_node_id(&self) -> NodeId {
        self.nodes.iter().map(|n| n.id).max().unwrap_or(0)
    }

    pub fn max_mode_id(&self) -> ModeId {
        self.nodes.iter().flat_map(|n| n.modes.iter().map(|m| m.id)).max().unwrap_or(0)
    }

    /// Modes appearing on exactly one node, ascending by id.
    pub fn free_modes(&self) -> Vec<Mode> {
        let mut seen: BTreeMap<ModeId, (usize, Mode)> = BTreeMap::new();
        for node in &self.nodes {
            for m in &node.modes {
                seen.entry(m.id).and_modify(|e| e.0 += 1).or_insert((1, *m));
            }
        }
        seen.into_values().filter(|(count, _)| *count == 1).map(|(_, m)| m).collect()
    }

    /// Mode ids shared between two nodes, ascending.
    pub fn shared_modes(&self, a: NodeId, b: NodeId) -> Vec<ModeId> {
        let (Some(na), Some(nb)) = (self.node(a), self.node(b)) else {
            return Vec::new();
        };
        let ids: BTreeSet<ModeId> = na.modes.iter().map(|m| m.id).collect();
        nb.modes.iter().map(|m| m.id).filter(|id| ids.contains(id)).collect()
    }

    /// Connected components over shared-mode edges, each sorted, ordered by
    /// smallest member id.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut owner: BTreeMap<ModeId, Vec<usize>> = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            for m in &node.modes {
                owner.entry(m.id).or_default().push(i);
            }
        }
        let n = self.nodes.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for m in &self.nodes[i].modes {
                    for &j in &owner[&m.id] {
                        if comp[j] == usize::MAX {
                            comp[j] = next;
                            stack.push(j);
                        }
                    }
                }
            }
            next += 1;
        }
        let mut out = vec![Vec::new(); next];
        for (i, &c) in comp.iter().enumerate() {
            out[c].push(self.nodes[i].id);
        }
        for ids in &mut out {
            ids.sort_unstable();
        }
        out.sort_by_key(|ids| ids[0]);
        out
    }

    /// Returns every invariant violation; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut node_ids = BTreeSet::new();
        for node in &self.nodes {
            if !node_ids.insert(node.id) {
                out.push(Violation::DuplicateNodeId(node.id));
            }
            if node.modes.is_empty() && node.role != NodeRole::Intermediate {
                out.push(Violation::EmptyModes(node.id));
            }
            let mut mode_ids = BTreeSet::new();
            for m in &node.modes {
                if !mode_ids.insert(m.id) {
                    out.push(Violation::DuplicateMode { node: node.id, mode: m.id });
                }
                if m.size == 0 {
                    out.push(Violation::ZeroSizeMode { node: node.id, mode: m.id });
                }
            }
        }
        let mut occurrences: BTreeMap<ModeId, Vec<u64>> = BTreeMap::new();
        for node in &self.nodes {
            for m in &node.modes {
                occurrences.entry(m.id).or_default().push(m.size);
            }
        }
        for (id, sizes) in &occurrences {
            if sizes.len() > 2 {
                out.push(Violation::HyperedgeUnsupported { mode: *id, nodes: sizes.len() });
            } else if sizes.len() == 2 && sizes[0] != sizes[1] {
                out.push(Violation::SizeMismatch { mode: *id, left: sizes[0], right: sizes[1] });
            }
        }
        let components = self.components();
        if components.len() > 1 {
            out.push(Violation::Disconnected { components: components.len() });
        }
        out
    }
}

/// Alias for `TensorNetwork::validate`, named after what callers ask for.
pub fn validate_network(net: &TensorNetwork) -> Vec<Violation> {
    net.validate()
}

/// Contracts adjacent nodes a and b. The merged node keeps a's private modes
/// followed by b's, takes a fresh id, and replaces both operands. The GEMM
/// reads m from a's side and n from b's.
pub fn contract_pair(
    net: &TensorNetwork,
    a: NodeId,
    b: NodeId,
) -> Result<(TensorNetwork, GemmShape, u64), NetworkError> {
    if a == b {
        return Err(NetworkError::NotAdjacent(a, b));
    }
    let na = net.node(a).ok_or(NetworkError::UnknownNode(a))?;
    let nb = net.node(b).ok_or(NetworkError::UnknownNode(b))?;
    let ids_b: BTreeSet<ModeId> = nb.modes.iter().map(|m| m.id).collect();
    let ids_a: BTreeSet<ModeId> = na.modes.iter().map(|m| m.id).collect();

    let mut m = 1u64;
    let mut k = 1u64;
    let mut n = 1u64;
    let mut shared = 0usize;
    let mut merged_modes = Vec::new();
    for mode in &na.modes {
        if ids_b.contains(&mode.id) {
            k *= mode.size;
            shared += 1;
        } else {
            m *= mode.size;
            merged_modes.push(*mode);
        }
    }
    for mode in &nb.modes {
        if !ids_a.contains(&mode.id) {
            n *= mode.size;
            merged_modes.push(*mode);
        }
    }
    if shared == 0 {
        return Err(NetworkError::NotAdjacent(a, b));
    }

    let merged = TensorNode {
        id: net.max_node_id() + 1,
        modes: merged_modes,
        role: NodeRole::Intermediate,
        core_index: None,
    };
    let mut nodes: Vec<TensorNode> =
        net.nodes.iter().filter(|n| n.id != a && n.id != b).cloned().collect();
    nodes.push(merged);
    let shape = GemmShape::new(m, k, n);
    let mac = shape.mac();
    Ok((TensorNetwork::new(nodes), shape, mac))
}

/// Derives one network per trainable core (gradient w.r.t. that core) plus one
/// for the data node. Each removes the target and attaches a gradient-data
/// node dY over the original free modes; the result's free modes equal the
/// target's modes. When removing the target disconnects the graph, fresh
/// size-1 modes tie dY to each detached component so the network stays a
/// contractible chain; contracting over a size-1 mode is an outer product, so
/// the value is unchanged.
pub fn gradient_networks(
    net: &TensorNetwork,
) -> Result<Vec<(NodeId, TensorNetwork)>, NetworkError> {
    let data: Vec<&TensorNode> = net.nodes.iter().filter(|n| n.role == NodeRole::Data).collect();
    match data.len() {
        0 => return Err(NetworkError::NoDataNode),
        1 => {}
        n => return Err(NetworkError::MultipleDataNodes(n)),
    }
    let data_id = data[0].id;

    let mut cores: Vec<&TensorNode> =
        net.nodes.iter().filter(|n| n.role == NodeRole::TtCore).collect();
    cores.sort_by_key(|n| (n.core_index, n.id));

    let free = net.free_modes();
    let dy_id = net.max_node_id() + 1;

    let mut targets: Vec<NodeId> = cores.iter().map(|c| c.id).collect();
    targets.push(data_id);

    let mut out = Vec::with_capacity(targets.len());
    for target in targets {
        let mut nodes: Vec<TensorNode> =
            net.nodes.iter().filter(|n| n.id != target).cloned().collect();
        nodes.push(TensorNode {
            id: dy_id,
            modes: free.clone(),
            role: NodeRole::GradientData,
            core_index: None,
        });
        let mut gnet = TensorNetwork::new(nodes);

        let components = gnet.components();
        if components.len() > 1 {
            let detached: Vec<NodeId> =
                components.iter().filter(|ids| !ids.contains(&dy_id)).map(|ids| ids[0]).collect();
            for (next_mode, anchor) in (gnet.max_mode_id() + 1..).zip(detached) {
                let bridge = Mode { id: next_mode, size: 1, tag: ModeTag::Rank };
                for node in &mut gnet.nodes {
                    if node.id == anchor || node.id == dy_id {
                        node.modes.push(bridge);
                    }
                }
            }
        }
        out.push((target, gnet));
    }
    Ok(out)
}

/// Total stored elements across TT cores.
pub fn param_count(net: &TensorNetwork) -> u64 {
    net.nodes.iter().filter(|n| n.role == NodeRole::TtCore).map(|n| n.element_count()).sum()
}
