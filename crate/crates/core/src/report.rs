//! Deterministic machine-readable outputs: the DSE report JSON, the full cost
//! table as CSV, and a per-path best-latency summary for plotting.

use crate::dse::{
    speedup_report, Cost, CostTable, DseError, DseMode, DseResult, LayerChoice, ModelLayer,
    SpeedupReport, StrategySpace,
};
use crate::sim::{HardwareConfig, DATAFLOWS, PARTITIONS};
use serde::Serialize;
use std::fmt::Write as _;

/// Choice counts over the selected per-layer tuples: split vs monolithic
/// cores, dataflow shares, and how often a non-MAC-optimal path wins.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChoiceDistribution {
    pub layers: usize,
    pub core_split: usize,
    pub core_mono: usize,
    pub dataflow_is: usize,
    pub dataflow_os: usize,
    pub dataflow_ws: usize,
    pub path_one: usize,
    pub path_deeper: usize,
    pub core_split_share: String,
    pub path_one_share: String,
}

pub fn choice_distribution(result: &DseResult) -> ChoiceDistribution {
    use crate::sim::{Dataflow, Partition};
    let layers = result.per_layer.len();
    let count = |f: &dyn Fn(&LayerChoice) -> bool| result.per_layer.iter().filter(|c| f(c)).count();
    let core_split = count(&|c| c.partition != Partition::Mono);
    let path_one = count(&|c| c.path_index == 1);
    let share = |n: usize| {
        if layers == 0 {
            "n/a".into()
        } else {
            format!("{:.4}", n as f64 / layers as f64)
        }
    };
    ChoiceDistribution {
        layers,
        core_split,
        core_mono: layers - core_split,
        dataflow_is: count(&|c| c.dataflow == Dataflow::Is),
        dataflow_os: count(&|c| c.dataflow == Dataflow::Os),
        dataflow_ws: count(&|c| c.dataflow == Dataflow::Ws),
        path_one,
        path_deeper: layers - path_one,
        core_split_share: share(core_split),
        path_one_share: share(path_one),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DseReport {
    pub mode: DseMode,
    pub strategy: String,
    pub total_cycles: u64,
    pub layers: Vec<LayerChoice>,
    pub distribution: ChoiceDistribution,
    pub speedup: SpeedupReport,
}

pub fn build_report(
    model: &[ModelLayer],
    hw: &HardwareConfig,
    table: &CostTable,
    dse: &DseResult,
    space: &StrategySpace,
) -> Result<DseReport, DseError> {
    Ok(DseReport {
        mode: dse.mode,
        strategy: dse.strategy.clone(),
        total_cycles: dse.total_cycles,
        layers: dse.per_layer.clone(),
        distribution: choice_distribution(dse),
        speedup: speedup_report(model, hw, table, dse, space)?,
    })
}

pub fn report_json(report: &DseReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn cost_cell(c: Cost) -> String {
    match c {
        Cost::Cycles(v) => v.to_string(),
        Cost::Infeasible => "inf".into(),
    }
}

/// Every (layer, path, partition, dataflow) entry, one row each.
pub fn cost_table_csv(table: &CostTable) -> String {
    let mut out = String::from("layer,path_index,total_mac,partition,dataflow,cycles\n");
    for layer in &table.layers {
        for (p, cell) in layer.entries.iter().enumerate() {
            let mac = layer.paths[p].total_mac;
            for (ci, c) in PARTITIONS.iter().enumerate() {
                for (di, d) in DATAFLOWS.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        layer.name,
                        p + 1,
                        mac,
                        c,
                        d,
                        cost_cell(cell[ci][di])
                    );
                }
            }
        }
    }
    out
}

/// Plot data comparing the top-K paths of each layer: the best cycles over
/// all (partition, dataflow) pairs per path, with the argmin pair.
pub fn path_summary_csv(table: &CostTable) -> String {
    let mut out =
        String::from("layer,path_index,total_mac,best_cycles,best_partition,best_dataflow\n");
    for layer in &table.layers {
        for (p, cell) in layer.entries.iter().enumerate() {
            let mut best: Option<(u64, usize, usize)> = None;
            for (ci, row) in cell.iter().enumerate() {
                for (di, &cost) in row.iter().enumerate() {
                    if let Cost::Cycles(v) = cost {
                        if best.is_none_or(|(b, _, _)| v < b) {
                            best = Some((v, ci, di));
                        }
                    }
                }
            }
            let (cycles, part, df) = match best {
                Some((v, ci, di)) => {
                    (v.to_string(), PARTITIONS[ci].to_string(), DATAFLOWS[di].to_string())
                }
                None => ("inf".into(), "n/a".into(), "n/a".into()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                layer.name,
                p + 1,
                layer.paths[p].total_mac,
                cycles,
                part,
                df
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dse::LayerCosts;
    use crate::sim::{Dataflow, Partition};

    fn result() -> DseResult {
        DseResult {
            mode: DseMode::Inference,
            strategy: "split".into(),
            total_cycles: 30,
            per_layer: vec![
                LayerChoice {
                    name: "a".into(),
                    path_index: 1,
                    partition: Partition::RowSplit,
                    dataflow: Dataflow::Os,
                    cycles: 10,
                },
                LayerChoice {
                    name: "b".into(),
                    path_index: 3,
                    partition: Partition::ColSplit,
                    dataflow: Dataflow::Os,
                    cycles: 20,
                },
            ],
        }
    }

    #[test]
    fn distribution_counts_choices() {
        let d = choice_distribution(&result());
        assert_eq!((d.core_split, d.core_mono), (2, 0));
        assert_eq!((d.dataflow_is, d.dataflow_os, d.dataflow_ws), (0, 2, 0));
        assert_eq!((d.path_one, d.path_deeper), (1, 1));
        assert_eq!(d.path_one_share, "0.5000");
    }

    #[test]
    fn csv_marks_infeasible_entries() {
        let table = CostTable {
            mode: DseMode::Inference,
            layers: vec![LayerCosts {
                name: "a".into(),
                paths: vec![crate::search::ContractionPath { steps: vec![], total_mac: 7 }],
                grad_paths: vec![],
                entries: vec![[
                    [Cost::Cycles(1), Cost::Infeasible, Cost::Cycles(3)],
                    [Cost::Infeasible; 3],
                    [Cost::Infeasible; 3],
                ]],
            }],
        };
        let csv = cost_table_csv(&table);
        assert!(csv.contains("a,1,7,1x1,IS,1\n"));
        assert!(csv.contains("a,1,7,1x1,OS,inf\n"));
        assert!(csv.contains("a,1,7,2x1,WS,inf\n"));
        let summary = path_summary_csv(&table);
        assert!(summary.contains("a,1,7,1,1x1,IS\n"));
    }
}
