//! JSON configuration files: a model is a list of named layer entries, the
//! hardware file carries array geometry, memory sizes, and the strategy space.

use crate::dse::{ModelLayer, Strategy, StrategySpace};
use crate::layers::{LayerError, LayerSpec};
use crate::sim::{Dataflow, HardwareConfig, Partition, DATAFLOWS, PARTITIONS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerEntry {
    TtLinear {
        name: String,
        m: Vec<u64>,
        n: Vec<u64>,
        ranks: Vec<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<u64>,
    },
    TtConv {
        name: String,
        o1: u64,
        o2: u64,
        i1: u64,
        i2: u64,
        kh: u64,
        kw: u64,
        ranks: [u64; 4],
        patches: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<u64>,
    },
    DenseLinear {
        name: String,
        m: u64,
        n: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<u64>,
    },
    DenseConv {
        name: String,
        c_out: u64,
        c_in: u64,
        kh: u64,
        kw: u64,
        patches: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch: Option<u64>,
    },
}

impl LayerEntry {
    pub fn name(&self) -> &str {
        match self {
            LayerEntry::TtLinear { name, .. }
            | LayerEntry::TtConv { name, .. }
            | LayerEntry::DenseLinear { name, .. }
            | LayerEntry::DenseConv { name, .. } => name,
        }
    }

    fn batch(&self) -> Option<u64> {
        match self {
            LayerEntry::TtLinear { batch, .. }
            | LayerEntry::TtConv { batch, .. }
            | LayerEntry::DenseLinear { batch, .. }
            | LayerEntry::DenseConv { batch, .. } => *batch,
        }
    }

    fn to_spec(&self, default_batch: u64) -> LayerSpec {
        let batch = self.batch().unwrap_or(default_batch);
        match self.clone() {
            LayerEntry::TtLinear { m, n, ranks, .. } => LayerSpec::TtLinear { m, n, ranks, batch },
            LayerEntry::TtConv { o1, o2, i1, i2, kh, kw, ranks, patches, .. } => {
                LayerSpec::TtConv { o1, o2, i1, i2, kh, kw, ranks, patches, batch }
            }
            LayerEntry::DenseLinear { m, n, .. } => LayerSpec::DenseLinear { m, n, batch },
            LayerEntry::DenseConv { c_out, c_in, kh, kw, patches, .. } => {
                LayerSpec::DenseConv { c_out, c_in, kh, kw, patches, batch }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    /// Applied to layers that omit their own batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<u64>,
    pub layers: Vec<LayerEntry>,
}

impl ModelConfigFile {
    pub fn to_model(&self) -> Result<Vec<ModelLayer>, ConfigError> {
        if self.layers.is_empty() {
            return Err(ConfigError::EmptyModel);
        }
        let mut seen = BTreeSet::new();
        let mut model = Vec::with_capacity(self.layers.len());
        for entry in &self.layers {
            if !seen.insert(entry.name().to_string()) {
                return Err(ConfigError::DuplicateLayerName(entry.name().to_string()));
            }
            let spec = entry.to_spec(self.batch.unwrap_or(1));
            spec.validate()
                .map_err(|source| ConfigError::Layer { layer: entry.name().to_string(), source })?;
            model.push(ModelLayer { name: entry.name().to_string(), spec });
        }
        Ok(model)
    }
}

fn default_pe() -> u64 {
    32
}
fn default_sram_if_kb() -> u64 {
    3072
}
fn default_sram_out_kb() -> u64 {
    1024
}
fn default_bandwidth() -> u64 {
    256
}
fn default_word_bytes() -> u64 {
    1
}
fn all_partitions() -> Vec<Partition> {
    PARTITIONS.to_vec()
}
fn all_dataflows() -> Vec<Dataflow> {
    DATAFLOWS.to_vec()
}
fn default_strategies() -> Vec<Strategy> {
    StrategySpace::default_space().strategies
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfigFile {
    #[serde(default = "default_pe")]
    pub pe_rows: u64,
    #[serde(default = "default_pe")]
    pub pe_cols: u64,
    #[serde(default = "default_sram_if_kb")]
    pub sram_input_filter_kb: u64,
    #[serde(default = "default_sram_out_kb")]
    pub sram_output_kb: u64,
    /// Words per cycle.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: u64,
    /// Converts the KB capacities to words.
    #[serde(default = "default_word_bytes")]
    pub word_bytes: u64,
    /// Partition universe; every strategy must stay inside it.
    #[serde(default = "all_partitions")]
    pub partitions: Vec<Partition>,
    #[serde(default = "all_dataflows")]
    pub dataflows: Vec<Dataflow>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
}

impl Default for HardwareConfigFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl HardwareConfigFile {
    pub fn to_hardware(&self) -> Result<HardwareConfig, ConfigError> {
        for (field, value) in [
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("sram_input_filter_kb", self.sram_input_filter_kb),
            ("sram_output_kb", self.sram_output_kb),
            ("bandwidth", self.bandwidth),
            ("word_bytes", self.word_bytes),
        ] {
            if value == 0 {
                return Err(ConfigError::ZeroHardwareField(field));
            }
        }
        Ok(HardwareConfig {
            pe_rows: self.pe_rows,
            pe_cols: self.pe_cols,
            sram_input_filter: self.sram_input_filter_kb * 1024 / self.word_bytes,
            sram_output: self.sram_output_kb * 1024 / self.word_bytes,
            bandwidth: self.bandwidth,
            word_bytes: self.word_bytes,
        })
    }

    pub fn to_strategy_space(&self) -> Result<StrategySpace, ConfigError> {
        if self.strategies.is_empty() || self.partitions.is_empty() || self.dataflows.is_empty() {
            return Err(ConfigError::EmptyStrategySpace);
        }
        let mut names = BTreeSet::new();
        for strat in &self.strategies {
            if !names.insert(strat.name.clone()) {
                return Err(ConfigError::DuplicateStrategy(strat.name.clone()));
            }
            if strat.partitions.is_empty() {
                return Err(ConfigError::EmptyStrategy(strat.name.clone()));
            }
            for &p in &strat.partitions {
                if !self.partitions.contains(&p) {
                    return Err(ConfigError::PartitionNotAllowed {
                        strategy: strat.name.clone(),
                        partition: p,
                    });
                }
            }
        }
        Ok(StrategySpace { strategies: self.strategies.clone(), dataflows: self.dataflows.clone() })
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("layer {layer}: {source}")]
    Layer { layer: String, source: LayerError },
    #[error("duplicate layer name {0}")]
    DuplicateLayerName(String),
    #[error("model has no layers")]
    EmptyModel,
    #[error("hardware field {0} must be nonzero")]
    ZeroHardwareField(&'static str),
    #[error("strategies, partitions and dataflows must all be non-empty")]
    EmptyStrategySpace,
    #[error("strategy {0} has no partitions")]
    EmptyStrategy(String),
    #[error("duplicate strategy name {0}")]
    DuplicateStrategy(String),
    #[error("strategy {strategy} uses partition {partition} outside the allowed set")]
    PartitionNotAllowed { strategy: String, partition: Partition },
}

pub fn parse_model(json: &str) -> Result<(ModelConfigFile, Vec<ModelLayer>), ConfigError> {
    let file: ModelConfigFile = serde_json::from_str(json)?;
    let model = file.to_model()?;
    Ok((file, model))
}

pub fn parse_hardware(
    json: &str,
) -> Result<(HardwareConfigFile, HardwareConfig, StrategySpace), ConfigError> {
    let file: HardwareConfigFile = serde_json::from_str(json)?;
    let hw = file.to_hardware()?;
    let space = file.to_strategy_space()?;
    Ok((file, hw, space))
}
