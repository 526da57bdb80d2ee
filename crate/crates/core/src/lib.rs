//! Latency-driven design space exploration for tensor-train neural-network
//! layers on systolic-array accelerators. Layers become tensor networks,
//! contraction orders become candidate paths, an analytical simulator prices
//! each (path, core partition, dataflow) tuple, and a global search picks the
//! best per-layer tuples under each partitioning strategy.

pub mod config;
pub mod dse;
pub mod layers;
pub mod network;
pub mod report;
pub mod search;
pub mod sim;

pub use config::{parse_hardware, parse_model, ConfigError, HardwareConfigFile, ModelConfigFile};
pub use dse::{
    brute_force_search, global_search, populate_cost_table, speedup_report, Cost, CostTable,
    DseError, DseMode, DseResult, LayerChoice, ModelLayer, SpeedupReport, Strategy, StrategySpace,
};
pub use layers::{build_network, dense_param_count, LayerError, LayerSpec};
pub use network::{
    contract_pair, gradient_networks, param_count, validate_network, GemmShape, Mode, ModeTag,
    NetworkError, NodeRole, TensorNetwork, TensorNode, Violation,
};
pub use report::{
    build_report, choice_distribution, cost_table_csv, path_summary_csv, report_json, DseReport,
};
pub use search::{
    dependency_dag, enumerate_all_paths, enumerate_all_paths_bounded, reconstruction_path,
    topk_mac_paths, topk_mac_paths_with_options, ContractionPath, ContractionStep, DependencyDag,
    SearchError,
};
pub use sim::{
    default_tiles, dense_layer_latency, gemm_compute_cycles, gemm_latency, joint_split,
    path_latency, Dataflow, DataflowAssignment, HardwareConfig, LatencyReport, Partition, SimError,
    StepLatency, TileConfig, DATAFLOWS, PARTITIONS,
};
