//! Layer shapes and the networks built from them. TT-linear layers become a
//! chain of 2d cores plus the input; TT-conv layers the five-core form over
//! the unfolded input. Dense layers are two-node networks so the same path
//! and latency machinery applies.

use crate::network::{Mode, ModeTag, NodeRole, TensorNetwork, TensorNode};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// Factorized fully connected layer: output dims m[0..d], input dims
    /// n[0..d], ranks r[0..=2d] with r[0] = r[2d] = 1.
    TtLinear {
        m: Vec<u64>,
        n: Vec<u64>,
        ranks: Vec<u64>,
        batch: u64,
    },
    /// Factorized convolution with split channel dims: C_out = o1*o2,
    /// C_in = i1*i2, kernel kh*kw, applied at `patches` spatial positions.
    TtConv {
        o1: u64,
        o2: u64,
        i1: u64,
        i2: u64,
        kh: u64,
        kw: u64,
        ranks: [u64; 4],
        patches: u64,
        batch: u64,
    },
    DenseLinear {
        m: u64,
        n: u64,
        batch: u64,
    },
    DenseConv {
        c_out: u64,
        c_in: u64,
        kh: u64,
        kw: u64,
        patches: u64,
        batch: u64,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayerError {
    #[error("tt-linear needs matching factor counts, got {m} output and {n} input dims")]
    FactorCountMismatch { m: usize, n: usize },
    #[error("tt-linear with d={d} needs {expected} ranks, got {got}")]
    RankLength { d: usize, expected: usize, got: usize },
    #[error("boundary ranks must be 1, got {0}")]
    BoundaryRank(u64),
    #[error("{0} must be at least 1")]
    ZeroDimension(&'static str),
    #[error("expected a {expected} spec, got {got}")]
    WrongKind { expected: &'static str, got: &'static str },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::TtLinear { .. } => "tt-linear",
            LayerSpec::TtConv { .. } => "tt-conv",
            LayerSpec::DenseLinear { .. } => "dense-linear",
            LayerSpec::DenseConv { .. } => "dense-conv",
        }
    }

    pub fn batch(&self) -> u64 {
        match self {
            LayerSpec::TtLinear { batch, .. }
            | LayerSpec::TtConv { batch, .. }
            | LayerSpec::DenseLinear { batch, .. }
            | LayerSpec::DenseConv { batch, .. } => *batch,
        }
    }

    pub fn validate(&self) -> Result<(), LayerError> {
        match self {
            LayerSpec::TtLinear { m, n, ranks, batch } => {
                if m.is_empty() {
                    return Err(LayerError::ZeroDimension("factor count d"));
                }
                if m.len() != n.len() {
                    return Err(LayerError::FactorCountMismatch { m: m.len(), n: n.len() });
                }
                let d = m.len();
                if ranks.len() != 2 * d + 1 {
                    return Err(LayerError::RankLength {
                        d,
                        expected: 2 * d + 1,
                        got: ranks.len(),
                    });
                }
                if ranks[0] != 1 {
                    return Err(LayerError::BoundaryRank(ranks[0]));
                }
                if ranks[2 * d] != 1 {
                    return Err(LayerError::BoundaryRank(ranks[2 * d]));
                }
                for (name, values) in [("m", m), ("n", n), ("ranks", ranks)] {
                    if values.contains(&0) {
                        return Err(LayerError::ZeroDimension(match name {
                            "m" => "output factor",
                            "n" => "input factor",
                            _ => "rank",
                        }));
                    }
                }
                if *batch == 0 {
                    return Err(LayerError::ZeroDimension("batch"));
                }
                Ok(())
            }
            LayerSpec::TtConv { o1, o2, i1, i2, kh, kw, ranks, patches, batch } => {
                let dims = [
                    (*o1, "o1"),
                    (*o2, "o2"),
                    (*i1, "i1"),
                    (*i2, "i2"),
                    (*kh, "kh"),
                    (*kw, "kw"),
                    (*patches, "patches"),
                    (*batch, "batch"),
                ];
                for (v, name) in dims {
                    if v == 0 {
                        return Err(LayerError::ZeroDimension(match name {
                            "o1" => "o1",
                            "o2" => "o2",
                            "i1" => "i1",
                            "i2" => "i2",
                            "kh" => "kh",
                            "kw" => "kw",
                            "patches" => "patches",
                            _ => "batch",
                        }));
                    }
                }
                if ranks.contains(&0) {
                    return Err(LayerError::ZeroDimension("rank"));
                }
                Ok(())
            }
            LayerSpec::DenseLinear { m, n, batch } => {
                if *m == 0 || *n == 0 {
                    return Err(LayerError::ZeroDimension("feature dim"));
                }
                if *batch == 0 {
                    return Err(LayerError::ZeroDimension("batch"));
                }
                Ok(())
            }
            LayerSpec::DenseConv { c_out, c_in, kh, kw, patches, batch } => {
                if [*c_out, *c_in, *kh, *kw, *patches, *batch].contains(&0) {
                    return Err(LayerError::ZeroDimension("conv dim"));
                }
                Ok(())
            }
        }
    }

    /// The unfactorized layer with the same input/output behavior.
    pub fn dense_equivalent(&self) -> LayerSpec {
        match self {
            LayerSpec::TtLinear { m, n, batch, .. } => LayerSpec::DenseLinear {
                m: m.iter().product(),
                n: n.iter().product(),
                batch: *batch,
            },
            LayerSpec::TtConv { o1, o2, i1, i2, kh, kw, patches, batch, .. } => {
                LayerSpec::DenseConv {
                    c_out: o1 * o2,
                    c_in: i1 * i2,
                    kh: *kh,
                    kw: *kw,
                    patches: *patches,
                    batch: *batch,
                }
            }
            dense => dense.clone(),
        }
    }
}

/// Elements of the unfactorized weight.
pub fn dense_param_count(spec: &LayerSpec) -> u64 {
    match spec {
        LayerSpec::TtLinear { m, n, .. } => m.iter().product::<u64>() * n.iter().product::<u64>(),
        LayerSpec::TtConv { o1, o2, i1, i2, kh, kw, .. } => o1 * o2 * i1 * i2 * kh * kw,
        LayerSpec::DenseLinear { m, n, .. } => m * n,
        LayerSpec::DenseConv { c_out, c_in, kh, kw, .. } => c_out * c_in * kh * kw,
    }
}

pub fn build_network(spec: &LayerSpec) -> Result<TensorNetwork, LayerError> {
    spec.validate()?;
    match spec {
        LayerSpec::TtLinear { .. } => build_tt_linear(spec),
        LayerSpec::TtConv { .. } => build_tt_conv(spec),
        LayerSpec::DenseLinear { m, n, batch } => Ok(dense_linear_network(*m, *n, *batch)),
        LayerSpec::DenseConv { c_out, c_in, kh, kw, patches, batch } => {
            Ok(dense_conv_network(*c_out, *c_in, kh * kw, patches * batch))
        }
    }
}

/// Cores G_1..G_2d carry (r_{k-1}, m_k, r_k) for k <= d and (r_{k-1}, n_{k-d},
/// r_k) above; the data node carries (batch, n_1..n_d). Size-1 boundary ranks
/// and a size-1 batch are not materialized; interior ranks always are, so the
/// chain stays adjacent even at rank 1.
pub fn build_tt_linear(spec: &LayerSpec) -> Result<TensorNetwork, LayerError> {
    spec.validate()?;
    let LayerSpec::TtLinear { m, n, ranks, batch } = spec else {
        return Err(LayerError::WrongKind { expected: "tt-linear", got: spec.kind() });
    };
    let d = m.len();

    // Mode ids: interior ranks r_1..r_{2d-1} first, then m_1..m_d, n_1..n_d, batch.
    let rank_id = |k: usize| (k - 1) as u32;
    let out_id = |i: usize| (2 * d - 1 + i) as u32;
    let in_id = |i: usize| (3 * d - 1 + i) as u32;
    let batch_id = (4 * d - 1) as u32;

    let mut nodes = Vec::with_capacity(2 * d + 1);
    for k in 1..=2 * d {
        let mut modes = Vec::with_capacity(3);
        if k > 1 {
            modes.push(Mode { id: rank_id(k - 1), size: ranks[k - 1], tag: ModeTag::Rank });
        }
        if k <= d {
            modes.push(Mode { id: out_id(k - 1), size: m[k - 1], tag: ModeTag::OutputFeature });
        } else {
            modes.push(Mode {
                id: in_id(k - d - 1),
                size: n[k - d - 1],
                tag: ModeTag::InputFeature,
            });
        }
        if k < 2 * d {
            modes.push(Mode { id: rank_id(k), size: ranks[k], tag: ModeTag::Rank });
        }
        nodes.push(TensorNode {
            id: (k - 1) as u32,
            modes,
            role: NodeRole::TtCore,
            core_index: Some(k as u32),
        });
    }

    let mut data_modes = Vec::with_capacity(d + 1);
    if *batch > 1 {
        data_modes.push(Mode { id: batch_id, size: *batch, tag: ModeTag::Batch });
    }
    for (i, &size) in n.iter().enumerate() {
        data_modes.push(Mode { id: in_id(i), size, tag: ModeTag::InputFeature });
    }
    nodes.push(TensorNode {
        id: (2 * d) as u32,
        modes: data_modes,
        role: NodeRole::Data,
        core_index: None,
    });
    Ok(TensorNetwork::new(nodes))
}

/// Five-core conv form: G_1 (O1, r1), G_2 (r1, O2, r2), G_3 (r2, I1, r3),
/// G_4 (r3, I2, r4), G_5 (r4, K) with K = kh*kw, contracted against the
/// unfolded input (I1, I2, K, L*B). A size-1 L*B mode is omitted.
pub fn build_tt_conv(spec: &LayerSpec) -> Result<TensorNetwork, LayerError> {
    spec.validate()?;
    let LayerSpec::TtConv { o1, o2, i1, i2, kh, kw, ranks, patches, batch } = spec else {
        return Err(LayerError::WrongKind { expected: "tt-conv", got: spec.kind() });
    };
    let [r1, r2, r3, r4] = *ranks;
    let kernel = kh * kw;
    let lb = patches * batch;

    let rank = |id: u32, size: u64| Mode { id, size, tag: ModeTag::Rank };
    let m_o1 = Mode { id: 4, size: *o1, tag: ModeTag::OutputFeature };
    let m_o2 = Mode { id: 5, size: *o2, tag: ModeTag::OutputFeature };
    let m_i1 = Mode { id: 6, size: *i1, tag: ModeTag::InputFeature };
    let m_i2 = Mode { id: 7, size: *i2, tag: ModeTag::InputFeature };
    let m_k = Mode { id: 8, size: kernel, tag: ModeTag::Kernel };

    let core = |id: u32, modes: Vec<Mode>| TensorNode {
        id,
        modes,
        role: NodeRole::TtCore,
        core_index: Some(id + 1),
    };
    let mut nodes = vec![
        core(0, vec![m_o1, rank(0, r1)]),
        core(1, vec![rank(0, r1), m_o2, rank(1, r2)]),
        core(2, vec![rank(1, r2), m_i1, rank(2, r3)]),
        core(3, vec![rank(2, r3), m_i2, rank(3, r4)]),
        core(4, vec![rank(3, r4), m_k]),
    ];
    let mut data_modes = vec![m_i1, m_i2, m_k];
    if lb > 1 {
        data_modes.push(Mode { id: 9, size: lb, tag: ModeTag::SpatialPatch });
    }
    nodes.push(TensorNode { id: 5, modes: data_modes, role: NodeRole::Data, core_index: None });
    Ok(TensorNetwork::new(nodes))
}

fn dense_linear_network(m: u64, n: u64, batch: u64) -> TensorNetwork {
    let m_out = Mode { id: 0, size: m, tag: ModeTag::OutputFeature };
    let m_in = Mode { id: 1, size: n, tag: ModeTag::InputFeature };
    let mut data_modes = Vec::with_capacity(2);
    if batch > 1 {
        data_modes.push(Mode { id: 2, size: batch, tag: ModeTag::Batch });
    }
    data_modes.push(m_in);
    TensorNetwork::new(vec![
        TensorNode { id: 0, modes: vec![m_out, m_in], role: NodeRole::TtCore, core_index: Some(1) },
        TensorNode { id: 1, modes: data_modes, role: NodeRole::Data, core_index: None },
    ])
}

fn dense_conv_network(c_out: u64, c_in: u64, kernel: u64, lb: u64) -> TensorNetwork {
    let m_out = Mode { id: 0, size: c_out, tag: ModeTag::OutputFeature };
    let m_in = Mode { id: 1, size: c_in, tag: ModeTag::InputFeature };
    let m_k = Mode { id: 2, size: kernel, tag: ModeTag::Kernel };
    let mut data_modes = vec![m_in, m_k];
    if lb > 1 {
        data_modes.push(Mode { id: 3, size: lb, tag: ModeTag::SpatialPatch });
    }
    TensorNetwork::new(vec![
        TensorNode {
            id: 0,
            modes: vec![m_out, m_in, m_k],
            role: NodeRole::TtCore,
            core_index: Some(1),
        },
        TensorNode { id: 1, modes: data_modes, role: NodeRole::Data, core_index: None },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{param_count, NodeRole};

    fn tt_linear(m: &[u64], n: &[u64], ranks: &[u64], batch: u64) -> LayerSpec {
        LayerSpec::TtLinear { m: m.to_vec(), n: n.to_vec(), ranks: ranks.to_vec(), batch }
    }

    #[test]
    fn d2_linear_structure() {
        let net = build_tt_linear(&tt_linear(&[4, 4], &[4, 4], &[1, 2, 2, 2, 1], 1)).unwrap();
        assert!(net.validate().is_empty());
        assert_eq!(net.nodes.len(), 5);
        let free: Vec<u64> = net.free_modes().iter().map(|m| m.size).collect();
        assert_eq!(free, vec![4, 4]);
    }

    #[test]
    fn d1_linear_is_rank_factorization() {
        let net = build_tt_linear(&tt_linear(&[6], &[8], &[1, 3, 1], 1)).unwrap();
        assert_eq!(net.nodes.len(), 3);
        let g1 = net.node(0).unwrap();
        let g2 = net.node(1).unwrap();
        assert_eq!(g1.modes.iter().map(|m| m.size).collect::<Vec<_>>(), vec![6, 3]);
        assert_eq!(g2.modes.iter().map(|m| m.size).collect::<Vec<_>>(), vec![3, 8]);
    }

    #[test]
    fn linear_param_counts() {
        let net = build_tt_linear(&tt_linear(&[4, 4], &[4, 4], &[1, 2, 2, 2, 1], 1)).unwrap();
        let spec = tt_linear(&[4, 4], &[4, 4], &[1, 2, 2, 2, 1], 1);
        assert_eq!(param_count(&net), 48);
        assert_eq!(dense_param_count(&spec), 256);

        let spec = tt_linear(&[8, 8], &[8, 8], &[1, 4, 4, 4, 1], 1);
        let net = build_tt_linear(&spec).unwrap();
        assert_eq!(param_count(&net), 320);
        assert_eq!(dense_param_count(&spec), 4096);
    }

    #[test]
    fn conv_structure_and_free_modes() {
        let spec = LayerSpec::TtConv {
            o1: 4,
            o2: 4,
            i1: 4,
            i2: 4,
            kh: 3,
            kw: 3,
            ranks: [2, 2, 2, 2],
            patches: 64,
            batch: 1,
        };
        let net = build_tt_conv(&spec).unwrap();
        assert!(net.validate().is_empty());
        assert_eq!(net.nodes.len(), 6);
        let mut free: Vec<u64> = net.free_modes().iter().map(|m| m.size).collect();
        free.sort_unstable();
        assert_eq!(free, vec![4, 4, 64]);
        assert!(dense_param_count(&spec) == 2304 && param_count(&net) < 2304);
    }

    #[test]
    fn rank1_conv_params_are_additive() {
        let spec = LayerSpec::TtConv {
            o1: 4,
            o2: 5,
            i1: 6,
            i2: 7,
            kh: 3,
            kw: 3,
            ranks: [1, 1, 1, 1],
            patches: 2,
            batch: 1,
        };
        let net = build_tt_conv(&spec).unwrap();
        assert_eq!(param_count(&net), 4 + 5 + 6 + 7 + 9);
    }

    #[test]
    fn rank1_d1_params_are_m_plus_n() {
        let net = build_tt_linear(&tt_linear(&[9], &[11], &[1, 1, 1], 1)).unwrap();
        assert_eq!(param_count(&net), 20);
    }

    #[test]
    fn batch_mode_only_when_above_one() {
        let with = build_tt_linear(&tt_linear(&[4], &[4], &[1, 2, 1], 8)).unwrap();
        let without = build_tt_linear(&tt_linear(&[4], &[4], &[1, 2, 1], 1)).unwrap();
        let data_with = with.nodes.last().unwrap();
        let data_without = without.nodes.last().unwrap();
        assert_eq!(data_with.modes.len(), 2);
        assert_eq!(data_without.modes.len(), 1);
        assert_eq!(data_with.modes[0].tag, ModeTag::Batch);
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert_eq!(
            tt_linear(&[4, 4], &[4, 4], &[1, 2, 2, 1], 1).validate(),
            Err(LayerError::RankLength { d: 2, expected: 5, got: 4 })
        );
        assert_eq!(
            tt_linear(&[4], &[4], &[2, 2, 1], 1).validate(),
            Err(LayerError::BoundaryRank(2))
        );
        assert!(tt_linear(&[4, 0], &[4, 4], &[1, 2, 2, 2, 1], 1).validate().is_err());
    }

    #[test]
    fn gradient_networks_count_and_free_modes() {
        let spec = tt_linear(&[4, 4], &[4, 4], &[1, 2, 2, 2, 1], 2);
        let net = build_tt_linear(&spec).unwrap();
        let grads = crate::network::gradient_networks(&net).unwrap();
        assert_eq!(grads.len(), 5);
        for (target, gnet) in &grads {
            assert!(gnet.validate().is_empty(), "gradient net for {target} invalid");
            let mut want: Vec<_> = net.node(*target).unwrap().modes.iter().map(|m| m.id).collect();
            want.sort_unstable();
            let got: Vec<_> = gnet.free_modes().iter().map(|m| m.id).collect();
            assert_eq!(got, want, "free modes of gradient net for node {target}");
        }
    }

    #[test]
    fn gradient_networks_bridge_disconnected_pieces() {
        // d=1 with batch 1: removing either core splits the graph without a batch
        // mode tying dY to the rest.
        let net = build_tt_linear(&tt_linear(&[4], &[4], &[1, 2, 1], 1)).unwrap();
        let grads = crate::network::gradient_networks(&net).unwrap();
        for (_, gnet) in &grads {
            assert!(gnet.validate().is_empty());
        }
    }

    #[test]
    fn dense_networks_have_single_contraction() {
        let spec = LayerSpec::DenseLinear { m: 32, n: 16, batch: 4 };
        let net = build_network(&spec).unwrap();
        assert_eq!(net.nodes.len(), 2);
        assert_eq!(param_count(&net), 512);
        assert_eq!(dense_param_count(&spec), 512);
        assert_eq!(net.nodes[0].role, NodeRole::TtCore);
    }
}
