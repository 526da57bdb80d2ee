//! Design space exploration: populate a latency cost table over
//! (layer, path, partition, dataflow), then pick the best global partitioning
//! strategy by summing per-layer minima. A brute-force joint enumeration with
//! the same tie-breaks serves as the optimality oracle.

use crate::layers::{build_network, dense_param_count, LayerError, LayerSpec};
use crate::network::GemmShape;
use crate::network::{gradient_networks, param_count, NetworkError};
use crate::search::{reconstruction_path, topk_mac_paths, ContractionPath, SearchError};
use crate::sim::{
    default_tiles, dense_layer_latency, gemm_latency, path_latency, Dataflow, DataflowAssignment,
    HardwareConfig, Partition, SimError, DATAFLOWS, PARTITIONS,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DseMode {
    Inference,
    Training,
}

impl std::fmt::Display for DseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DseMode::Inference => "inference",
            DseMode::Training => "training",
        })
    }
}

impl std::str::FromStr for DseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inference" => Ok(DseMode::Inference),
            "training" => Ok(DseMode::Training),
            other => Err(format!("unknown mode {other}, expected inference or training")),
        }
    }
}

/// Simulated cycles, or unreachable because no tiling fits. Infeasible orders
/// above every finite cost and absorbs in addition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cost {
    Cycles(u64),
    Infeasible,
}

impl Cost {
    pub fn cycles(self) -> Option<u64> {
        match self {
            Cost::Cycles(c) => Some(c),
            Cost::Infeasible => None,
        }
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;

    fn add(self, other: Cost) -> Cost {
        match (self, other) {
            (Cost::Cycles(a), Cost::Cycles(b)) => Cost::Cycles(a + b),
            _ => Cost::Infeasible,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub name: String,
    pub partitions: Vec<Partition>,
}

/// Global strategies plus the dataflow set every layer may choose from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategySpace {
    pub strategies: Vec<Strategy>,
    pub dataflows: Vec<Dataflow>,
}

impl StrategySpace {
    /// Monolithic keeps the full array; split allows the two half-array forms.
    pub fn default_space() -> Self {
        StrategySpace {
            strategies: vec![
                Strategy { name: "monolithic".into(), partitions: vec![Partition::Mono] },
                Strategy {
                    name: "split".into(),
                    partitions: vec![Partition::ColSplit, Partition::RowSplit],
                },
            ],
            dataflows: DATAFLOWS.to_vec(),
        }
    }

    fn validate(&self) -> Result<(), DseError> {
        if self.strategies.is_empty()
            || self.strategies.iter().any(|s| s.partitions.is_empty())
            || self.dataflows.is_empty()
        {
            return Err(DseError::EmptyStrategySpace);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelLayer {
    pub name: String,
    pub spec: LayerSpec,
}

/// Costs of one layer: `entries[p][c][d]` over the layer's top-K paths, all
/// three partitions, and all three dataflows.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCosts {
    pub name: String,
    pub paths: Vec<ContractionPath>,
    /// Top-1 MAC path of each gradient network; empty in inference mode.
    pub grad_paths: Vec<ContractionPath>,
    pub entries: Vec<[[Cost; 3]; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    pub mode: DseMode,
    pub layers: Vec<LayerCosts>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerChoice {
    pub name: String,
    /// 1-based; path 1 is the MAC-optimal one.
    pub path_index: usize,
    pub partition: Partition,
    pub dataflow: Dataflow,
    pub cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DseResult {
    pub mode: DseMode,
    pub strategy: String,
    pub total_cycles: u64,
    pub per_layer: Vec<LayerChoice>,
}

#[derive(Debug, Error)]
pub enum DseError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("empty model")]
    EmptyModel,
    #[error("strategy space has no strategy, an empty partition set, or no dataflows")]
    EmptyStrategySpace,
    #[error("no strategy has a feasible configuration for every layer (first failure: {0})")]
    InfeasibleModel(String),
    #[error("joint space of {size} assignments exceeds the brute-force bound {bound}")]
    SpaceTooLarge { size: u128, bound: u128 },
    #[error("strategy {0} missing from the strategy space")]
    UnknownStrategy(String),
}

/// Maps tiling/partition infeasibility to `Cost::Infeasible`; anything else is
/// a real error.
fn cost_of(res: Result<crate::sim::LatencyReport, SimError>) -> Result<Cost, DseError> {
    match res {
        Ok(r) => Ok(Cost::Cycles(r.total_cycles)),
        Err(SimError::InfeasibleTiles { .. }) | Err(SimError::OddSplit { .. }) => {
            Ok(Cost::Infeasible)
        }
        Err(e) => Err(DseError::Sim(e)),
    }
}

/// Builds each layer's network, takes its top-K MAC paths, and simulates every
/// (path, partition, dataflow) tuple. Training mode adds, to every entry, the
/// cost of each gradient network contracted along its own top-1 MAC path under
/// the same partition and dataflow.
pub fn populate_cost_table(
    model: &[ModelLayer],
    hw: &HardwareConfig,
    k: usize,
    mode: DseMode,
) -> Result<CostTable, DseError> {
    if model.is_empty() {
        return Err(DseError::EmptyModel);
    }
    let mut layers = Vec::with_capacity(model.len());
    for layer in model {
        let net = build_network(&layer.spec)?;
        let paths = topk_mac_paths(&net, k)?;
        let mut grad_paths = Vec::new();
        if mode == DseMode::Training {
            for (_, gnet) in gradient_networks(&net)? {
                let mut top = topk_mac_paths(&gnet, 1)?;
                grad_paths.push(top.remove(0));
            }
        }
        let mut entries = Vec::with_capacity(paths.len());
        for path in &paths {
            let mut cell = [[Cost::Infeasible; 3]; 3];
            for (ci, &c) in PARTITIONS.iter().enumerate() {
                for (di, &d) in DATAFLOWS.iter().enumerate() {
                    let assign = DataflowAssignment::Uniform(d);
                    let mut cost = cost_of(path_latency(path, hw, c, &assign))?;
                    for gpath in &grad_paths {
                        cost = cost + cost_of(path_latency(gpath, hw, c, &assign))?;
                    }
                    cell[ci][di] = cost;
                }
            }
            entries.push(cell);
        }
        layers.push(LayerCosts { name: layer.name.clone(), paths, grad_paths, entries });
    }
    Ok(CostTable { mode, layers })
}

fn layer_argmin(
    layer: &LayerCosts,
    partitions: &[Partition],
    dataflows: &[Dataflow],
) -> Option<LayerChoice> {
    let mut best: Option<(u64, LayerChoice)> = None;
    for (p, cell) in layer.entries.iter().enumerate() {
        for (ci, &c) in PARTITIONS.iter().enumerate() {
            if !partitions.contains(&c) {
                continue;
            }
            for (di, &d) in DATAFLOWS.iter().enumerate() {
                if !dataflows.contains(&d) {
                    continue;
                }
                if let Cost::Cycles(cycles) = cell[ci][di] {
                    if best.as_ref().is_none_or(|(b, _)| cycles < *b) {
                        best = Some((
                            cycles,
                            LayerChoice {
                                name: layer.name.clone(),
                                path_index: p + 1,
                                partition: c,
                                dataflow: d,
                                cycles,
                            },
                        ));
                    }
                }
            }
        }
    }
    best.map(|(_, choice)| choice)
}

/// For each strategy, sums per-layer minima over (path, allowed partition,
/// dataflow) and returns the cheapest strategy. Ties resolve to the earlier
/// strategy, lower path index, partition 1x1 < 2x1 < 1x2, dataflow
/// IS < OS < WS.
pub fn global_search(table: &CostTable, space: &StrategySpace) -> Result<DseResult, DseError> {
    space.validate()?;
    let mut best: Option<DseResult> = None;
    let mut first_failure: Option<String> = None;
    for strat in &space.strategies {
        let mut per_layer = Vec::with_capacity(table.layers.len());
        let mut total = 0u64;
        let mut feasible = true;
        for layer in &table.layers {
            match layer_argmin(layer, &strat.partitions, &space.dataflows) {
                Some(choice) => {
                    total += choice.cycles;
                    per_layer.push(choice);
                }
                None => {
                    first_failure.get_or_insert_with(|| layer.name.clone());
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        if best.as_ref().is_none_or(|b| total < b.total_cycles) {
            best = Some(DseResult {
                mode: table.mode,
                strategy: strat.name.clone(),
                total_cycles: total,
                per_layer,
            });
        }
    }
    best.ok_or_else(|| DseError::InfeasibleModel(first_failure.unwrap_or_default()))
}

const BRUTE_FORCE_BOUND: u128 = 50_000_000;

/// Exhaustively enumerates every per-layer (path, partition, dataflow)
/// assignment under every strategy, in the same lexicographic order as
/// `global_search`'s tie-breaks, keeping the first strict improvement.
pub fn brute_force_search(table: &CostTable, space: &StrategySpace) -> Result<DseResult, DseError> {
    space.validate()?;
    let mut best: Option<DseResult> = None;
    let mut first_failure: Option<String> = None;

    for strat in &space.strategies {
        let mut size: u128 = 1;
        for layer in &table.layers {
            size = size.saturating_mul(
                (layer.entries.len() * strat.partitions.len() * space.dataflows.len()) as u128,
            );
        }
        if size > BRUTE_FORCE_BOUND {
            return Err(DseError::SpaceTooLarge { size, bound: BRUTE_FORCE_BOUND });
        }

        // Finite candidates per layer in tie-break order.
        let mut cands: Vec<Vec<LayerChoice>> = Vec::with_capacity(table.layers.len());
        let mut feasible = true;
        for layer in &table.layers {
            let mut list = Vec::new();
            for (p, cell) in layer.entries.iter().enumerate() {
                for (ci, &c) in PARTITIONS.iter().enumerate() {
                    if !strat.partitions.contains(&c) {
                        continue;
                    }
                    for (di, &d) in DATAFLOWS.iter().enumerate() {
                        if !space.dataflows.contains(&d) {
                            continue;
                        }
                        if let Cost::Cycles(cycles) = cell[ci][di] {
                            list.push(LayerChoice {
                                name: layer.name.clone(),
                                path_index: p + 1,
                                partition: c,
                                dataflow: d,
                                cycles,
                            });
                        }
                    }
                }
            }
            if list.is_empty() {
                first_failure.get_or_insert_with(|| layer.name.clone());
                feasible = false;
                break;
            }
            cands.push(list);
        }
        if !feasible {
            continue;
        }

        let mut chosen: Vec<usize> = vec![0; cands.len()];
        let mut best_total = best.as_ref().map(|b| b.total_cycles);
        let mut best_assign: Option<Vec<usize>> = None;
        enumerate(&cands, 0, 0, &mut chosen, &mut best_total, &mut best_assign);
        if let Some(assign) = best_assign {
            let per_layer: Vec<LayerChoice> =
                assign.iter().enumerate().map(|(l, &i)| cands[l][i].clone()).collect();
            best = Some(DseResult {
                mode: table.mode,
                strategy: strat.name.clone(),
                total_cycles: best_total.unwrap(),
                per_layer,
            });
        }
    }
    best.ok_or_else(|| DseError::InfeasibleModel(first_failure.unwrap_or_default()))
}

fn enumerate(
    cands: &[Vec<LayerChoice>],
    layer: usize,
    acc: u64,
    chosen: &mut Vec<usize>,
    best_total: &mut Option<u64>,
    best_assign: &mut Option<Vec<usize>>,
) {
    if let Some(b) = *best_total {
        if acc >= b {
            return;
        }
    }
    if layer == cands.len() {
        *best_total = Some(acc);
        *best_assign = Some(chosen.clone());
        return;
    }
    for (i, cand) in cands[layer].iter().enumerate() {
        chosen[layer] = i;
        enumerate(cands, layer + 1, acc + cand.cycles, chosen, best_total, best_assign);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSpeedup {
    pub name: String,
    /// Unfactorized baseline at its best dataflow on the full array; training
    /// mode adds the weight- and input-gradient GEMMs, each at its own best
    /// dataflow.
    pub dense_cycles: Option<u64>,
    pub tt_cycles: u64,
    /// Path-1 under the chosen strategy's best partition and dataflow.
    pub mac_opt_cycles: Option<u64>,
    /// Core-index-order rebuild of the full weight, best (partition, dataflow)
    /// under the chosen strategy.
    pub reconstruction_cycles: Option<u64>,
    pub tt_params: u64,
    pub dense_params: u64,
    pub dense_over_tt: String,
    pub mac_opt_over_tt: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpeedupReport {
    pub per_layer: Vec<LayerSpeedup>,
    pub total: LayerSpeedup,
}

fn ratio(num: Option<u64>, den: u64) -> String {
    match num {
        Some(n) if den > 0 => format!("{:.4}", n as f64 / den as f64),
        _ => "n/a".into(),
    }
}

fn best_gemm(shape: GemmShape, hw: &HardwareConfig, dataflows: &[Dataflow]) -> Option<u64> {
    let mut best = None;
    for &d in DATAFLOWS.iter().filter(|d| dataflows.contains(d)) {
        let Ok(tiles) = default_tiles(shape, hw) else { continue };
        if let Ok(r) = gemm_latency(shape, hw, d, tiles) {
            if best.is_none_or(|b| r.total_cycles < b) {
                best = Some(r.total_cycles);
            }
        }
    }
    best
}

fn dense_baseline(
    spec: &LayerSpec,
    hw: &HardwareConfig,
    dataflows: &[Dataflow],
    mode: DseMode,
) -> Option<u64> {
    let dense = spec.dense_equivalent();
    let mut total = None;
    for &d in DATAFLOWS.iter().filter(|d| dataflows.contains(d)) {
        if let Ok(r) = dense_layer_latency(&dense, hw, d) {
            if total.is_none_or(|b| r.total_cycles < b) {
                total = Some(r.total_cycles);
            }
        }
    }
    let mut total = total?;
    if mode == DseMode::Training {
        let (dw, dx) = match dense {
            LayerSpec::DenseLinear { m, n, batch } => {
                (GemmShape::new(n, batch, m), GemmShape::new(batch, m, n))
            }
            LayerSpec::DenseConv { c_out, c_in, kh, kw, patches, batch } => (
                GemmShape::new(c_in * kh * kw, patches * batch, c_out),
                GemmShape::new(patches * batch, c_out, c_in * kh * kw),
            ),
            _ => unreachable!("dense_equivalent returns a dense spec"),
        };
        total += best_gemm(dw, hw, dataflows)?;
        total += best_gemm(dx, hw, dataflows)?;
    }
    Some(total)
}

/// Per-layer and total comparison of the chosen configuration against the
/// dense baseline, the MAC-optimal path, and the reconstruction order.
pub fn speedup_report(
    model: &[ModelLayer],
    hw: &HardwareConfig,
    table: &CostTable,
    dse: &DseResult,
    space: &StrategySpace,
) -> Result<SpeedupReport, DseError> {
    let strat = space
        .strategies
        .iter()
        .find(|s| s.name == dse.strategy)
        .ok_or_else(|| DseError::UnknownStrategy(dse.strategy.clone()))?;

    let mut per_layer = Vec::with_capacity(model.len());
    for (l, layer) in model.iter().enumerate() {
        let costs = &table.layers[l];
        let choice = &dse.per_layer[l];

        let dense_cycles = dense_baseline(&layer.spec, hw, &space.dataflows, table.mode);

        let mac_opt_cycles = layer_argmin(
            &LayerCosts {
                name: costs.name.clone(),
                paths: costs.paths[..1].to_vec(),
                grad_paths: Vec::new(),
                entries: costs.entries[..1].to_vec(),
            },
            &strat.partitions,
            &space.dataflows,
        )
        .map(|c| c.cycles);

        let net = build_network(&layer.spec)?;
        let recon = reconstruction_path(&net)?;
        let mut recon_best: Option<u64> = None;
        for &c in PARTITIONS.iter().filter(|c| strat.partitions.contains(c)) {
            for &d in DATAFLOWS.iter().filter(|d| space.dataflows.contains(d)) {
                let assign = DataflowAssignment::Uniform(d);
                let mut cost = cost_of(path_latency(&recon, hw, c, &assign))?;
                for gpath in &costs.grad_paths {
                    cost = cost + cost_of(path_latency(gpath, hw, c, &assign))?;
                }
                if let Cost::Cycles(cycles) = cost {
                    if recon_best.is_none_or(|b| cycles < b) {
                        recon_best = Some(cycles);
                    }
                }
            }
        }

        let tt_params = param_count(&net);
        let dense_params = dense_param_count(&layer.spec);
        per_layer.push(LayerSpeedup {
            name: layer.name.clone(),
            dense_cycles,
            tt_cycles: choice.cycles,
            mac_opt_cycles,
            reconstruction_cycles: recon_best,
            tt_params,
            dense_params,
            dense_over_tt: ratio(dense_cycles, choice.cycles),
            mac_opt_over_tt: ratio(mac_opt_cycles, choice.cycles),
        });
    }

    let sum_opt =
        |f: fn(&LayerSpeedup) -> Option<u64>| -> Option<u64> { per_layer.iter().map(f).sum() };
    let dense_total = sum_opt(|l| l.dense_cycles);
    let mac_total = sum_opt(|l| l.mac_opt_cycles);
    let recon_total = sum_opt(|l| l.reconstruction_cycles);
    let total = LayerSpeedup {
        name: "total".into(),
        dense_cycles: dense_total,
        tt_cycles: dse.total_cycles,
        mac_opt_cycles: mac_total,
        reconstruction_cycles: recon_total,
        tt_params: per_layer.iter().map(|l| l.tt_params).sum(),
        dense_params: per_layer.iter().map(|l| l.dense_params).sum(),
        dense_over_tt: ratio(dense_total, dse.total_cycles),
        mac_opt_over_tt: ratio(mac_total, dse.total_cycles),
    };
    Ok(SpeedupReport { per_layer, total })
}
