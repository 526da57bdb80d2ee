//! Analytical systolic-array latency model. Per-fold cycle counts follow the
//! classic fill/stream/drain form; tiles move through a double-buffered SRAM,
//! so a GEMM costs max(sum of compute, sum of transfer) plus the first tile's
//! transfer. Split partitions run independent steps on two half arrays.

use crate::network::GemmShape;
use crate::search::{dependency_dag, ContractionPath};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "OS")]
    Os,
    #[serde(rename = "WS")]
    Ws,
}

pub const DATAFLOWS: [Dataflow; 3] = [Dataflow::Is, Dataflow::Os, Dataflow::Ws];

impl std::fmt::Display for Dataflow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dataflow::Is => "IS",
            Dataflow::Os => "OS",
            Dataflow::Ws => "WS",
        })
    }
}

impl std::str::FromStr for Dataflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IS" => Ok(Dataflow::Is),
            "OS" => Ok(Dataflow::Os),
            "WS" => Ok(Dataflow::Ws),
            other => Err(format!("unknown dataflow {other}, expected IS, OS or WS")),
        }
    }
}

/// How the PE array is carved up. Ordering (1x1 < 2x1 < 1x2) is the
/// tie-break order used throughout the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    #[serde(rename = "1x1")]
    Mono,
    /// Two (rows/2) x cols sub-cores.
    #[serde(rename = "2x1")]
    RowSplit,
    /// Two rows x (cols/2) sub-cores.
    #[serde(rename = "1x2")]
    ColSplit,
}

pub const PARTITIONS: [Partition; 3] = [Partition::Mono, Partition::RowSplit, Partition::ColSplit];

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Partition::Mono => "1x1",
            Partition::RowSplit => "2x1",
            Partition::ColSplit => "1x2",
        })
    }
}

impl std::str::FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1x1" => Ok(Partition::Mono),
            "2x1" => Ok(Partition::RowSplit),
            "1x2" => Ok(Partition::ColSplit),
            other => Err(format!("unknown partition {other}, expected 1x1, 2x1 or 1x2")),
        }
    }
}

/// Array geometry and memory system. SRAM capacities and bandwidth are in
/// words; one word holds one element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardwareConfig {
    pub pe_rows: u64,
    pub pe_cols: u64,
    pub sram_input_filter: u64,
    pub sram_output: u64,
    pub bandwidth: u64,
    pub word_bytes: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            pe_rows: 32,
            pe_cols: 32,
            sram_input_filter: 3072 * 1024,
            sram_output: 1024 * 1024,
            bandwidth: 256,
            word_bytes: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub t_m: u64,
    pub t_n: u64,
    pub t_k: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepLatency {
    pub step: usize,
    pub shape: GemmShape,
    pub dataflow: Dataflow,
    pub rows: u64,
    pub cols: u64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
}

/// Totals always satisfy total = compute + stall. Under split partitions the
/// totals accumulate the critical step of each round while per_step keeps
/// every step's own cycles, so per_step sums can exceed the totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LatencyReport {
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub per_step: Vec<StepLatency>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(
        "tiles {t_m}x{t_n}x{t_k} overflow SRAM: need {need_if} input/filter and {need_out} \
         output words, have {have_if} and {have_out}"
    )]
    InfeasibleTiles {
        t_m: u64,
        t_n: u64,
        t_k: u64,
        need_if: u64,
        need_out: u64,
        have_if: u64,
        have_out: u64,
    },
    #[error("partition {partition} halves the {axis} dimension, but the array has {extent}")]
    OddSplit { partition: Partition, axis: &'static str, extent: u64 },
    #[error("dataflow list has {got} entries for {steps} steps")]
    AssignmentLength { got: usize, steps: usize },
    #[error("dense latency needs a dense layer spec, got {0}")]
    NotDense(&'static str),
}

/// Dataflow choice for a path: one for every step, or per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataflowAssignment {
    Uniform(Dataflow),
    PerStep(Vec<Dataflow>),
}

impl DataflowAssignment {
    fn for_step(&self, i: usize) -> Dataflow {
        match self {
            DataflowAssignment::Uniform(d) => *d,
            DataflowAssignment::PerStep(v) => v[i],
        }
    }
}

fn fold_classes(dim: u64, span: u64) -> [(u64, u64); 2] {
    [(span, dim / span), (dim % span, u64::from(!dim.is_multiple_of(span)))]
}

/// Cycles to push a GEMM through an r x c array, summed over sequential folds.
/// OS folds (M,N) over the array and streams K through each fold; WS and IS
/// pin K to rows and stream the non-stationary output dimension.
pub fn gemm_compute_cycles(shape: GemmShape, rows: u64, cols: u64, df: Dataflow) -> u64 {
    if shape.m == 0 || shape.k == 0 || shape.n == 0 {
        return 0;
    }
    let (fold_rows, fold_cols) = match df {
        Dataflow::Os => (shape.m, shape.n),
        Dataflow::Ws => (shape.k, shape.n),
        Dataflow::Is => (shape.k, shape.m),
    };
    let per_fold = |r: u64, c: u64| match df {
        Dataflow::Os => 2 * r + c + shape.k - 2,
        Dataflow::Ws => r + shape.m + c - 1,
        Dataflow::Is => r + shape.n + c - 1,
    };
    let mut total = 0u64;
    for (r, rc) in fold_classes(fold_rows, rows) {
        for (c, cc) in fold_classes(fold_cols, cols) {
            if rc > 0 && cc > 0 {
                total += rc * cc * per_fold(r, c);
            }
        }
    }
    total
}

/// Largest t_k that keeps double-buffered row/col tiles inside the
/// input/filter SRAM, with t_m, t_n pinned to the array.
pub fn default_tiles(shape: GemmShape, hw: &HardwareConfig) -> Result<TileConfig, SimError> {
    let t_m = hw.pe_rows;
    let t_n = hw.pe_cols;
    let cap = hw.sram_input_filter / (2 * (t_m + t_n));
    let t_k = shape.k.max(1).min(cap.max(1));
    let tiles = TileConfig { t_m, t_n, t_k };
    check_tiles(tiles, hw)?;
    Ok(tiles)
}

fn check_tiles(tiles: TileConfig, hw: &HardwareConfig) -> Result<(), SimError> {
    let need_if = 2 * (tiles.t_m * tiles.t_k + tiles.t_k * tiles.t_n);
    let need_out = 2 * tiles.t_m * tiles.t_n;
    if need_if > hw.sram_input_filter || need_out > hw.sram_output {
        return Err(SimError::InfeasibleTiles {
            t_m: tiles.t_m,
            t_n: tiles.t_n,
            t_k: tiles.t_k,
            need_if,
            need_out,
            have_if: hw.sram_input_filter,
            have_out: hw.sram_output,
        });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Flag {
    None,
    First,
    Last,
}

/// Tile extents along one dimension with counts, splitting out the single
/// tile that carries a first/last side effect (fresh stationary load or
/// output writeback).
fn tile_classes(dim: u64, span: u64, flag: Flag) -> Vec<(u64, u64, bool)> {
    let full = dim / span;
    let rem = dim % span;
    let mut out = Vec::with_capacity(3);
    match flag {
        Flag::None => {
            if full > 0 {
                out.push((span, full, false));
            }
            if rem > 0 {
                out.push((rem, 1, false));
            }
        }
        Flag::First => {
            if full > 0 {
                out.push((span, 1, true));
                if full > 1 {
                    out.push((span, full - 1, false));
                }
                if rem > 0 {
                    out.push((rem, 1, false));
                }
            } else {
                out.push((rem, 1, true));
            }
        }
        Flag::Last => {
            if rem > 0 {
                if full > 0 {
                    out.push((span, full, false));
                }
                out.push((rem, 1, true));
            } else {
                if full > 1 {
                    out.push((span, full - 1, false));
                }
                out.push((span, 1, true));
            }
        }
    }
    out
}

fn tile_traffic(df: Dataflow, am: u64, ak: u64, an: u64, fresh: bool, last_k: bool) -> u64 {
    let writeback = if last_k { am * an } else { 0 };
    match df {
        // Both operand tiles stream in every step; results leave once.
        Dataflow::Os => am * ak + ak * an + writeback,
        // Weight tile enters once per (k,n) tile, inputs stream per m step.
        Dataflow::Ws => (if fresh { ak * an } else { 0 }) + am * ak + writeback,
        // Input tile enters once per (k,m) tile, weights stream per n step.
        Dataflow::Is => (if fresh { am * ak } else { 0 }) + ak * an + writeback,
    }
}

/// Latency of one GEMM under the tiling. Transfer cycles are per-tile
/// ceil(traffic / bandwidth); double buffering overlaps them with compute, so
/// total = max(sum compute, sum transfer) + the first tile's transfer.
pub fn gemm_latency(
    shape: GemmShape,
    hw: &HardwareConfig,
    df: Dataflow,
    tiles: TileConfig,
) -> Result<LatencyReport, SimError> {
    if shape.m == 0 || shape.k == 0 || shape.n == 0 {
        return Ok(LatencyReport::default());
    }
    check_tiles(tiles, hw)?;

    let (m_flag, n_flag) = match df {
        Dataflow::Os => (Flag::None, Flag::None),
        Dataflow::Ws => (Flag::First, Flag::None),
        Dataflow::Is => (Flag::None, Flag::First),
    };
    let m_classes = tile_classes(shape.m, tiles.t_m, m_flag);
    let n_classes = tile_classes(shape.n, tiles.t_n, n_flag);
    let k_classes = tile_classes(shape.k, tiles.t_k, Flag::Last);

    let mut compute = 0u64;
    let mut transfer = 0u64;
    for &(am, cm, fm) in &m_classes {
        for &(an, cn, fn_) in &n_classes {
            for &(ak, ck, lk) in &k_classes {
                let count = cm * cn * ck;
                let tile = GemmShape::new(am, ak, an);
                compute += count * gemm_compute_cycles(tile, hw.pe_rows, hw.pe_cols, df);
                let fresh = match df {
                    Dataflow::Os => false,
                    Dataflow::Ws => fm,
                    Dataflow::Is => fn_,
                };
                let words = tile_traffic(df, am, ak, an, fresh, lk);
                transfer += count * words.div_ceil(hw.bandwidth);
            }
        }
    }

    let first = tile_traffic(
        df,
        shape.m.min(tiles.t_m),
        shape.k.min(tiles.t_k),
        shape.n.min(tiles.t_n),
        !matches!(df, Dataflow::Os),
        shape.k <= tiles.t_k,
    );
    let prologue = first.div_ceil(hw.bandwidth);

    let total = compute.max(transfer) + prologue;
    Ok(LatencyReport {
        compute_cycles: compute,
        stall_cycles: total - compute,
        total_cycles: total,
        per_step: vec![StepLatency {
            step: 0,
            shape,
            dataflow: df,
            rows: hw.pe_rows,
            cols: hw.pe_cols,
            compute_cycles: compute,
            stall_cycles: total - compute,
            total_cycles: total,
        }],
    })
}

/// Halves of a GEMM split along the larger of M and N (ties split M), for
/// joint execution on two sub-cores. The second half may be empty.
pub fn joint_split(shape: GemmShape) -> (GemmShape, GemmShape) {
    if shape.m >= shape.n {
        let hi = shape.m.div_ceil(2);
        (GemmShape::new(hi, shape.k, shape.n), GemmShape::new(shape.m - hi, shape.k, shape.n))
    } else {
        let hi = shape.n.div_ceil(2);
        (GemmShape::new(shape.m, shape.k, hi), GemmShape::new(shape.m, shape.k, shape.n - hi))
    }
}

fn sub_core(hw: &HardwareConfig, part: Partition) -> Result<HardwareConfig, SimError> {
    let mut sub = *hw;
    match part {
        Partition::Mono => {}
        Partition::RowSplit => {
            if !hw.pe_rows.is_multiple_of(2) {
                return Err(SimError::OddSplit {
                    partition: part,
                    axis: "row",
                    extent: hw.pe_rows,
                });
            }
            sub.pe_rows = hw.pe_rows / 2;
        }
        Partition::ColSplit => {
            if !hw.pe_cols.is_multiple_of(2) {
                return Err(SimError::OddSplit {
                    partition: part,
                    axis: "col",
                    extent: hw.pe_cols,
                });
            }
            sub.pe_cols = hw.pe_cols / 2;
        }
    }
    if part != Partition::Mono {
        sub.sram_input_filter = hw.sram_input_filter / 2;
        sub.sram_output = hw.sram_output / 2;
        sub.bandwidth = (hw.bandwidth / 2).max(1);
    }
    Ok(sub)
}

fn shape_latency(
    shape: GemmShape,
    hw: &HardwareConfig,
    df: Dataflow,
) -> Result<LatencyReport, SimError> {
    if shape.m == 0 || shape.k == 0 || shape.n == 0 {
        return Ok(LatencyReport::default());
    }
    gemm_latency(shape, hw, df, default_tiles(shape, hw)?)
}

/// Whole-path latency. Monolithic runs steps back to back on the full array.
/// A split partition schedules rounds over the step DAG: with two or more
/// ready steps the two longest run concurrently and the slower one's cycles
/// count; a lone ready step runs jointly on both halves via `joint_split`.
pub fn path_latency(
    path: &ContractionPath,
    hw: &HardwareConfig,
    part: Partition,
    df: &DataflowAssignment,
) -> Result<LatencyReport, SimError> {
    if let DataflowAssignment::PerStep(v) = df {
        if v.len() != path.steps.len() {
            return Err(SimError::AssignmentLength { got: v.len(), steps: path.steps.len() });
        }
    }
    let mut report = LatencyReport::default();

    if part == Partition::Mono {
        for (i, step) in path.steps.iter().enumerate() {
            let d = df.for_step(i);
            let r = shape_latency(step.shape, hw, d)?;
            accumulate(&mut report, &r);
            report.per_step.push(StepLatency {
                step: i,
                shape: step.shape,
                dataflow: d,
                rows: hw.pe_rows,
                cols: hw.pe_cols,
                compute_cycles: r.compute_cycles,
                stall_cycles: r.stall_cycles,
                total_cycles: r.total_cycles,
            });
        }
        return Ok(report);
    }

    let sub = sub_core(hw, part)?;
    let n = path.steps.len();
    let mut solo = Vec::with_capacity(n);
    for (i, step) in path.steps.iter().enumerate() {
        solo.push(shape_latency(step.shape, &sub, df.for_step(i))?);
    }

    let dag = dependency_dag(path);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in &dag.edges {
        preds[j].push(i);
    }
    let mut done = vec![false; n];
    let mut remaining = n;
    while remaining > 0 {
        let ready: Vec<usize> =
            (0..n).filter(|&s| !done[s] && preds[s].iter().all(|&p| done[p])).collect();
        if ready.len() >= 2 {
            let mut order = ready;
            order.sort_by(|&a, &b| solo[b].total_cycles.cmp(&solo[a].total_cycles).then(a.cmp(&b)));
            let (slow, fast) = (order[0], order[1]);
            accumulate(&mut report, &solo[slow]);
            for s in [slow.min(fast), slow.max(fast)] {
                let d = df.for_step(s);
                report.per_step.push(StepLatency {
                    step: s,
                    shape: path.steps[s].shape,
                    dataflow: d,
                    rows: sub.pe_rows,
                    cols: sub.pe_cols,
                    compute_cycles: solo[s].compute_cycles,
                    stall_cycles: solo[s].stall_cycles,
                    total_cycles: solo[s].total_cycles,
                });
                done[s] = true;
            }
            remaining -= 2;
        } else {
            let s = ready[0];
            let d = df.for_step(s);
            let (h1, h2) = joint_split(path.steps[s].shape);
            let r1 = shape_latency(h1, &sub, d)?;
            let r2 = shape_latency(h2, &sub, d)?;
            let crit = if r2.total_cycles > r1.total_cycles { r2 } else { r1 };
            accumulate(&mut report, &crit);
            report.per_step.push(StepLatency {
                step: s,
                shape: path.steps[s].shape,
                dataflow: d,
                rows: sub.pe_rows,
                cols: sub.pe_cols,
                compute_cycles: crit.compute_cycles,
                stall_cycles: crit.stall_cycles,
                total_cycles: crit.total_cycles,
            });
            done[s] = true;
            remaining -= 1;
        }
    }
    Ok(report)
}

fn accumulate(report: &mut LatencyReport, r: &LatencyReport) {
    report.compute_cycles += r.compute_cycles;
    report.stall_cycles += r.stall_cycles;
    report.total_cycles += r.total_cycles;
}

/// Baseline latency of the unfactorized layer: linear layers run the
/// (batch, in, out) GEMM, convolutions the im2col (C_out, C_in*Kh*Kw, L*B) one.
pub fn dense_layer_latency(
    spec: &crate::layers::LayerSpec,
    hw: &HardwareConfig,
    df: Dataflow,
) -> Result<LatencyReport, SimError> {
    use crate::layers::LayerSpec;
    let shape = match spec {
        LayerSpec::DenseLinear { m, n, batch } => GemmShape::new(*batch, *n, *m),
        LayerSpec::DenseConv { c_out, c_in, kh, kw, patches, batch } => {
            GemmShape::new(*c_out, c_in * kh * kw, patches * batch)
        }
        other => return Err(SimError::NotDense(other.kind())),
    };
    shape_latency(shape, hw, df)
}
