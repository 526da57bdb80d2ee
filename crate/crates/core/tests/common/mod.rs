//! Dense reference implementations for the integration suites: literal
//! multi-index contraction, whole-path evaluation, finite-difference
//! gradients, and a seeded generator of random connected networks.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use ttdse_core::{
    gradient_networks, topk_mac_paths, ContractionPath, Mode, ModeTag, NodeRole, TensorNetwork,
    TensorNode,
};

/// Row-major dense tensor whose axes are identified by mode ids.
#[derive(Clone, Debug)]
pub struct DenseTensor {
    pub modes: Vec<u32>,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(modes: Vec<u32>, dims: Vec<u64>, data: Vec<f64>) -> Self {
        assert_eq!(modes.len(), dims.len());
        assert_eq!(data.len() as u64, dims.iter().product::<u64>().max(1));
        DenseTensor { modes, dims, data }
    }

    fn flat(&self, idx: &[u64]) -> usize {
        let mut f = 0u64;
        for (i, &x) in idx.iter().enumerate() {
            f = f * self.dims[i] + x;
        }
        f as usize
    }
}

/// Odometer increment; false once every index has wrapped.
fn advance(idx: &mut [u64], dims: &[u64]) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < dims[i] {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Literal contraction: sums over every mode the operands share; result modes
/// are a-only (in a's order) then b-only (in b's order).
pub fn contract(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let in_b = |id: &u32| b.modes.contains(id);
    let in_a = |id: &u32| a.modes.contains(id);

    let mut out_modes = Vec::new();
    let mut out_dims = Vec::new();
    for (i, id) in a.modes.iter().enumerate() {
        if !in_b(id) {
            out_modes.push(*id);
            out_dims.push(a.dims[i]);
        }
    }
    for (i, id) in b.modes.iter().enumerate() {
        if !in_a(id) {
            out_modes.push(*id);
            out_dims.push(b.dims[i]);
        }
    }
    let shared: Vec<u32> = a.modes.iter().copied().filter(in_b).collect();
    let shared_dims: Vec<u64> =
        shared.iter().map(|id| a.dims[a.modes.iter().position(|m| m == id).unwrap()]).collect();

    let assign = |modes: &[u32], out_idx: &[u64], sh_idx: &[u64]| -> Vec<u64> {
        modes
            .iter()
            .map(|id| {
                if let Some(p) = out_modes.iter().position(|m| m == id) {
                    out_idx[p]
                } else {
                    sh_idx[shared.iter().position(|m| m == id).unwrap()]
                }
            })
            .collect()
    };

    let out_len = out_dims.iter().product::<u64>().max(1) as usize;
    let mut data = vec![0.0; out_len];
    let mut out_idx = vec![0u64; out_dims.len()];
    loop {
        let mut acc = 0.0;
        let mut sh_idx = vec![0u64; shared.len()];
        loop {
            let ai = a.flat(&assign(&a.modes, &out_idx, &sh_idx));
            let bi = b.flat(&assign(&b.modes, &out_idx, &sh_idx));
            acc += a.data[ai] * b.data[bi];
            if !advance(&mut sh_idx, &shared_dims) {
                break;
            }
        }
        let mut f = 0u64;
        for (i, &x) in out_idx.iter().enumerate() {
            f = f * out_dims[i] + x;
        }
        data[f as usize] = acc;
        if !advance(&mut out_idx, &out_dims) {
            break;
        }
    }
    DenseTensor::new(out_modes, out_dims, data)
}

/// Axes permuted to ascending mode id; returns (modes, data) for comparisons.
pub fn normalize(t: &DenseTensor) -> (Vec<u32>, Vec<f64>) {
    let mut order: Vec<usize> = (0..t.modes.len()).collect();
    order.sort_by_key(|&i| t.modes[i]);
    let out_modes: Vec<u32> = order.iter().map(|&i| t.modes[i]).collect();
    let out_dims: Vec<u64> = order.iter().map(|&i| t.dims[i]).collect();
    let mut data = vec![0.0; t.data.len()];
    let mut idx = vec![0u64; t.dims.len()];
    loop {
        let mut f = 0u64;
        for (i, &o) in order.iter().enumerate() {
            f = f * out_dims[i] + idx[o];
        }
        data[f as usize] = t.data[t.flat(&idx)];
        if t.dims.is_empty() || !advance(&mut idx, &t.dims) {
            break;
        }
    }
    (out_modes, data)
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length mismatch");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let scale = x.abs().max(y.abs()).max(1.0);
        assert!(
            (x - y).abs() <= tol * scale,
            "{what}: element {i} differs, {x} vs {y} (tol {tol})"
        );
    }
}

pub fn random_tensor(node: &TensorNode, rng: &mut ChaCha8Rng) -> DenseTensor {
    let modes: Vec<u32> = node.modes.iter().map(|m| m.id).collect();
    let dims: Vec<u64> = node.modes.iter().map(|m| m.size).collect();
    let len = dims.iter().product::<u64>().max(1) as usize;
    let data: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    DenseTensor::new(modes, dims, data)
}

/// Base tensor reshaped to `node`'s mode list; any modes the node has beyond
/// the base must be trailing size-1 additions (gradient-network bridges).
pub fn adapt(base: &DenseTensor, node: &TensorNode) -> DenseTensor {
    let mut modes = base.modes.clone();
    let mut dims = base.dims.clone();
    for (i, m) in node.modes.iter().enumerate() {
        if i < base.modes.len() {
            assert_eq!(m.id, base.modes[i], "node {} reorders base modes", node.id);
        } else {
            assert_eq!(m.size, 1, "extra mode {} is not a size-1 bridge", m.id);
            modes.push(m.id);
            dims.push(1);
        }
    }
    DenseTensor::new(modes, dims, base.data.clone())
}

/// Runs a contraction path over concrete tensors keyed by node id.
pub fn eval_path(
    net: &TensorNetwork,
    path: &ContractionPath,
    base: &BTreeMap<u32, DenseTensor>,
) -> DenseTensor {
    let mut live: BTreeMap<u32, DenseTensor> = BTreeMap::new();
    for node in &net.nodes {
        live.insert(node.id, adapt(&base[&node.id], node));
    }
    let mut last = None;
    for step in &path.steps {
        let a = live.remove(&step.left).expect("left operand live");
        let b = live.remove(&step.right).expect("right operand live");
        let r = contract(&a, &b);
        let elements: u64 = r.dims.iter().product::<u64>().max(1);
        assert_eq!(elements, step.shape.m * step.shape.n, "step result element count");
        live.insert(step.result, r);
        last = Some(step.result);
    }
    live.remove(&last.expect("path has steps")).unwrap()
}

/// Scalar pairing of two tensors over identical mode sets.
pub fn pair(y: &DenseTensor, g: &DenseTensor) -> f64 {
    let (my, dy) = normalize(y);
    let (mg, dg) = normalize(g);
    assert_eq!(my, mg, "pairing needs identical mode sets");
    dy.iter().zip(&dg).map(|(a, b)| a * b).sum()
}

/// Connected network with `2..=max_nodes` nodes: a random spanning tree, up
/// to `extra_edges` more edges, and up to `max_free` free modes per node.
pub fn random_network_with(
    rng: &mut ChaCha8Rng,
    max_nodes: usize,
    max_size: u64,
    extra_edges: usize,
    max_free: usize,
) -> TensorNetwork {
    let n = rng.gen_range(2usize..=max_nodes);
    let mut modes: Vec<Vec<Mode>> = vec![Vec::new(); n];
    let mut next_mode = 0u32;
    let mut edge = |i: usize, j: usize, modes: &mut Vec<Vec<Mode>>, rng: &mut ChaCha8Rng| {
        let m = Mode { id: next_mode, size: rng.gen_range(1..=max_size), tag: ModeTag::Rank };
        next_mode += 1;
        modes[i].push(m);
        modes[j].push(m);
    };
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edge(i, j, &mut modes, rng);
    }
    for _ in 0..rng.gen_range(0..=extra_edges) {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            edge(i, j, &mut modes, rng);
        }
    }
    for (i, node) in modes.iter_mut().enumerate() {
        for _ in 0..rng.gen_range(0..=max_free) {
            node.push(Mode {
                id: next_mode,
                size: rng.gen_range(1..=max_size),
                tag: if i == 0 { ModeTag::Batch } else { ModeTag::OutputFeature },
            });
            next_mode += 1;
        }
    }
    let nodes = modes
        .into_iter()
        .enumerate()
        .map(|(i, m)| TensorNode {
            id: i as u32,
            modes: m,
            role: if i == 0 { NodeRole::Data } else { NodeRole::TtCore },
            core_index: if i == 0 { None } else { Some(i as u32) },
        })
        .collect();
    let net = TensorNetwork::new(nodes);
    assert!(net.validate().is_empty(), "generator produced an invalid network");
    net
}

/// Full-range generator: up to 7 nodes with mode sizes 1..=6.
pub fn random_network(rng: &mut ChaCha8Rng) -> TensorNetwork {
    random_network_with(rng, 7, 6, 2, 2)
}

/// Sizes capped so dense oracle evaluation stays cheap.
pub fn small_random_network(rng: &mut ChaCha8Rng) -> TensorNetwork {
    random_network_with(rng, 5, 3, 1, 1)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random cost table with 1..=4 layers, 1..=4 paths each, entry costs
/// 1..=40 cycles with a 15% infeasibility rate.
pub fn random_cost_table(rng: &mut ChaCha8Rng) -> ttdse_core::CostTable {
    use ttdse_core::{Cost, CostTable, DseMode};
    let layers = (0..rng.gen_range(1..=4))
        .map(|l| {
            let entries = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let mut cell = [[Cost::Infeasible; 3]; 3];
                    for row in &mut cell {
                        for e in row.iter_mut() {
                            if rng.gen_range(0..100) >= 15 {
                                *e = Cost::Cycles(rng.gen_range(1..=40));
                            }
                        }
                    }
                    cell
                })
                .collect::<Vec<_>>();
            ttdse_core::dse::LayerCosts {
                name: format!("l{l}"),
                paths: entries
                    .iter()
                    .enumerate()
                    .map(|(p, _)| ContractionPath { steps: Vec::new(), total_mac: p as u64 + 1 })
                    .collect(),
                grad_paths: Vec::new(),
                entries,
            }
        })
        .collect();
    CostTable { mode: DseMode::Inference, layers }
}

/// Checks every gradient network of `net` against central finite differences
/// of J = <forward contraction, random seed G>.
pub fn fd_check(net: &TensorNetwork, seed: u64, h: f64, tol: f64) {
    let mut rng = seeded(seed);
    let mut base: BTreeMap<u32, DenseTensor> =
        net.nodes.iter().map(|n| (n.id, random_tensor(n, &mut rng))).collect();

    let forward = topk_mac_paths(net, 1).unwrap().remove(0);
    let grads = gradient_networks(net).unwrap();
    let dy_id = net.max_node_id() + 1;
    let free_dims: Vec<u64> = net.free_modes().iter().map(|m| m.size).collect();
    let free_ids: Vec<u32> = net.free_modes().iter().map(|m| m.id).collect();
    let g_len = free_dims.iter().product::<u64>().max(1) as usize;
    let g = DenseTensor::new(
        free_ids,
        free_dims,
        (0..g_len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );

    let objective =
        |base: &BTreeMap<u32, DenseTensor>| -> f64 { pair(&eval_path(net, &forward, base), &g) };

    for (target, gnet) in &grads {
        let gpath = topk_mac_paths(gnet, 1).unwrap().remove(0);
        let mut gbase = base.clone();
        gbase.remove(target);
        gbase.insert(dy_id, g.clone());
        let analytic = eval_path(gnet, &gpath, &gbase);
        let (an_modes, an_data) = normalize(&analytic);

        let t = base[target].clone();
        let mut t_ids = t.modes.clone();
        t_ids.sort_unstable();
        assert_eq!(an_modes, t_ids, "gradient modes match node {target}");

        let mut fd = DenseTensor::new(t.modes.clone(), t.dims.clone(), vec![0.0; t.data.len()]);
        for i in 0..t.data.len() {
            let orig = t.data[i];
            base.get_mut(target).unwrap().data[i] = orig + h;
            let plus = objective(&base);
            base.get_mut(target).unwrap().data[i] = orig - h;
            let minus = objective(&base);
            base.get_mut(target).unwrap().data[i] = orig;
            fd.data[i] = (plus - minus) / (2.0 * h);
        }
        let (_, fd_data) = normalize(&fd);
        assert_close(&fd_data, &an_data, tol, &format!("gradient of node {target}"));
    }
}
