//! Browser bindings: the three interactive operations of the demo page, each
//! taking and returning JSON strings. Errors come back as {"error": ...}
//! objects so the page never needs try/catch around marshalling.

use serde_json::json;
use ttdse_core::{
    build_network, build_report, global_search, parse_hardware, parse_model, path_latency,
    populate_cost_table, topk_mac_paths, DataflowAssignment, DseMode, ModelLayer, DATAFLOWS,
    PARTITIONS,
};
use wasm_bindgen::prelude::*;

fn err(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn find_layer<'m>(model: &'m [ModelLayer], name: &str) -> Result<&'m ModelLayer, String> {
    model.iter().find(|l| l.name == name).ok_or_else(|| err(format!("no layer named {name}")))
}

/// Top-K contraction paths of one layer: steps, GEMM shapes, MAC totals.
#[wasm_bindgen]
pub fn top_paths(model_json: &str, layer: &str, k: usize) -> String {
    let model = match parse_model(model_json) {
        Ok((_, m)) => m,
        Err(e) => return err(e),
    };
    let l = match find_layer(&model, layer) {
        Ok(l) => l,
        Err(e) => return e,
    };
    let net = match build_network(&l.spec) {
        Ok(n) => n,
        Err(e) => return err(e),
    };
    let paths = match topk_mac_paths(&net, k.max(1)) {
        Ok(p) => p,
        Err(e) => return err(e),
    };
    json!({ "layer": l.name, "paths": paths }).to_string()
}

/// Cycle counts of one layer's top-K paths under every (partition, dataflow)
/// pair; infeasible mappings are null.
#[wasm_bindgen]
pub fn latency_grid(model_json: &str, hw_json: &str, layer: &str, k: usize) -> String {
    let model = match parse_model(model_json) {
        Ok((_, m)) => m,
        Err(e) => return err(e),
    };
    let (_, hw, _) = match parse_hardware(hw_json) {
        Ok(h) => h,
        Err(e) => return err(e),
    };
    let l = match find_layer(&model, layer) {
        Ok(l) => l,
        Err(e) => return e,
    };
    let net = match build_network(&l.spec) {
        Ok(n) => n,
        Err(e) => return err(e),
    };
    let paths = match topk_mac_paths(&net, k.max(1)) {
        Ok(p) => p,
        Err(e) => return err(e),
    };
    let mut rows = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let mut cells = Vec::new();
        for &c in &PARTITIONS {
            for &d in &DATAFLOWS {
                let cycles = path_latency(path, &hw, c, &DataflowAssignment::Uniform(d))
                    .ok()
                    .map(|r| r.total_cycles);
                cells.push(json!({
                    "partition": c.to_string(),
                    "dataflow": d.to_string(),
                    "cycles": cycles,
                }));
            }
        }
        rows.push(json!({
            "path_index": i + 1,
            "total_mac": path.total_mac,
            "cells": cells,
        }));
    }
    json!({ "layer": l.name, "grid": rows }).to_string()
}

/// Full design-space search; returns the same report the CLI writes.
#[wasm_bindgen]
pub fn run_dse(model_json: &str, hw_json: &str, k: usize, mode: &str) -> String {
    let mode: DseMode = match mode.parse() {
        Ok(m) => m,
        Err(e) => return err(e),
    };
    let model = match parse_model(model_json) {
        Ok((_, m)) => m,
        Err(e) => return err(e),
    };
    let (_, hw, space) = match parse_hardware(hw_json) {
        Ok(h) => h,
        Err(e) => return err(e),
    };
    let table = match populate_cost_table(&model, &hw, k.max(1), mode) {
        Ok(t) => t,
        Err(e) => return err(e),
    };
    let dse = match global_search(&table, &space) {
        Ok(r) => r,
        Err(e) => return err(e),
    };
    match build_report(&model, &hw, &table, &dse, &space) {
        Ok(report) => serde_json::to_string(&report).unwrap_or_else(err),
        Err(e) => err(e),
    }
}
