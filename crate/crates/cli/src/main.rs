//! `ttdse`: list contraction paths, price a single mapping, or run the full
//! design-space search from JSON model/hardware files.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use ttdse_core::{
    build_network, build_report, cost_table_csv, global_search, parse_hardware, parse_model,
    path_latency, path_summary_csv, populate_cost_table, report_json, topk_mac_paths, Dataflow,
    DataflowAssignment, DseError, DseMode, ModelLayer, Partition, SimError,
};

const EXIT_PARSE: i32 = 2;
const EXIT_INFEASIBLE: i32 = 3;

#[derive(Parser)]
#[command(name = "ttdse", version, about = "Contraction-path and accelerator mapping explorer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List each layer's top-K contraction paths in ascending MAC order.
    Paths {
        /// Model JSON file.
        model: PathBuf,
        /// Restrict to one layer by name.
        #[arg(long)]
        layer: Option<String>,
        /// Number of paths per layer.
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Simulate one (layer, path, partition, dataflow) tuple.
    Simulate {
        /// Model JSON file.
        model: PathBuf,
        /// Hardware JSON file.
        hw: PathBuf,
        /// Layer name.
        #[arg(long)]
        layer: String,
        /// 1-based path index in MAC order.
        #[arg(long, default_value_t = 1)]
        path: usize,
        /// Core partition: 1x1, 2x1 or 1x2.
        #[arg(long, default_value = "1x1")]
        partition: Partition,
        /// Dataflow: IS, OS or WS.
        #[arg(long, default_value = "OS")]
        dataflow: Dataflow,
    },
    /// Search the joint (path, partition, dataflow) space per strategy.
    Dse {
        /// Model JSON file.
        model: PathBuf,
        /// Hardware JSON file.
        hw: PathBuf,
        /// Paths per layer to consider.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// inference or training.
        #[arg(long, default_value = "inference")]
        mode: DseMode,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the cost table CSV here; a per-path summary lands next to it
        /// with a .paths.csv suffix.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    msg: String,
}

fn parse_fail(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_PARSE, msg: e.to_string() }
}

fn infeasible(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_INFEASIBLE, msg: e.to_string() }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| parse_fail(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Vec<ModelLayer>, Failure> {
    let (_, model) =
        parse_model(&read(path)?).map_err(|e| parse_fail(format!("{}: {e}", path.display())))?;
    Ok(model)
}

fn pick_layer<'m>(model: &'m [ModelLayer], name: &str) -> Result<&'m ModelLayer, Failure> {
    model
        .iter()
        .find(|l| l.name == name)
        .ok_or_else(|| parse_fail(format!("no layer named {name}")))
}

fn main() {
    // Die quietly when stdout closes early (`ttdse paths ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Paths { model, layer, k } => cmd_paths(&model, layer.as_deref(), k),
        Cmd::Simulate { model, hw, layer, path, partition, dataflow } => {
            cmd_simulate(&model, &hw, &layer, path, partition, dataflow)
        }
        Cmd::Dse { model, hw, k, mode, out, csv } => cmd_dse(&model, &hw, k, mode, out, csv),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.msg);
        std::process::exit(f.code);
    }
}

fn cmd_paths(model_path: &Path, layer: Option<&str>, k: usize) -> Result<(), Failure> {
    if k == 0 {
        return Err(parse_fail("--k must be at least 1"));
    }
    let model = load_model(model_path)?;
    let selected: Vec<&ModelLayer> = match layer {
        Some(name) => vec![pick_layer(&model, name)?],
        None => model.iter().collect(),
    };
    for l in selected {
        let net = build_network(&l.spec).map_err(parse_fail)?;
        let paths = topk_mac_paths(&net, k).map_err(parse_fail)?;
        println!("layer {} ({} of top-{} paths)", l.name, paths.len(), k);
        for (i, p) in paths.iter().enumerate() {
            println!("  path {}: total_mac={}", i + 1, p.total_mac);
            for (s, step) in p.steps.iter().enumerate() {
                println!(
                    "    step {}: ({}, {}) -> {}  gemm {}  mac {}",
                    s + 1,
                    step.left,
                    step.right,
                    step.result,
                    step.shape,
                    step.mac
                );
            }
        }
    }
    Ok(())
}

fn cmd_simulate(
    model_path: &Path,
    hw_path: &Path,
    layer: &str,
    path_index: usize,
    partition: Partition,
    dataflow: Dataflow,
) -> Result<(), Failure> {
    if path_index == 0 {
        return Err(parse_fail("--path is 1-based"));
    }
    let model = load_model(model_path)?;
    let (_, hw, _) = parse_hardware(&read(hw_path)?)
        .map_err(|e| parse_fail(format!("{}: {e}", hw_path.display())))?;
    let l = pick_layer(&model, layer)?;
    let net = build_network(&l.spec).map_err(parse_fail)?;
    let paths = topk_mac_paths(&net, path_index).map_err(parse_fail)?;
    if paths.len() < path_index {
        return Err(parse_fail(format!(
            "layer {layer} has only {} paths at or below index {path_index}",
            paths.len()
        )));
    }
    let path = &paths[path_index - 1];
    let report = path_latency(path, &hw, partition, &DataflowAssignment::Uniform(dataflow))
        .map_err(|e| match e {
            SimError::InfeasibleTiles { .. } | SimError::OddSplit { .. } => infeasible(e),
            other => parse_fail(other),
        })?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    print!("{json}");
    Ok(())
}

fn cmd_dse(
    model_path: &Path,
    hw_path: &Path,
    k: usize,
    mode: DseMode,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> Result<(), Failure> {
    if k == 0 {
        return Err(parse_fail("--k must be at least 1"));
    }
    let model = load_model(model_path)?;
    let (_, hw, space) = parse_hardware(&read(hw_path)?)
        .map_err(|e| parse_fail(format!("{}: {e}", hw_path.display())))?;

    let table = populate_cost_table(&model, &hw, k, mode).map_err(parse_fail)?;
    let dse = global_search(&table, &space).map_err(|e| match e {
        DseError::InfeasibleModel(_) => infeasible(e),
        other => parse_fail(other),
    })?;
    let report = build_report(&model, &hw, &table, &dse, &space).map_err(parse_fail)?;

    println!("mode: {}", report.mode);
    println!("strategy: {}", report.strategy);
    println!("total cycles: {}", report.total_cycles);
    println!("layer,path,partition,dataflow,cycles");
    for c in &report.layers {
        println!("{},{},{},{},{}", c.name, c.path_index, c.partition, c.dataflow, c.cycles);
    }
    println!(
        "choices: split={} mono={} is={} os={} ws={} path1={} deeper={}",
        report.distribution.core_split,
        report.distribution.core_mono,
        report.distribution.dataflow_is,
        report.distribution.dataflow_os,
        report.distribution.dataflow_ws,
        report.distribution.path_one,
        report.distribution.path_deeper
    );
    let total = &report.speedup.total;
    match total.dense_cycles {
        Some(d) => println!("dense baseline: {d} cycles, ratio {}", total.dense_over_tt),
        None => println!("dense baseline: infeasible"),
    }

    let write = |p: &Path, contents: &str| -> Result<(), Failure> {
        std::fs::write(p, contents)
            .map_err(|e| Failure { code: 1, msg: format!("{}: {e}", p.display()) })?;
        println!("wrote {}", p.display());
        Ok(())
    };
    if let Some(out) = out {
        write(&out, &report_json(&report))?;
    }
    if let Some(csv) = csv {
        write(&csv, &cost_table_csv(&table))?;
        let summary = csv.with_extension("paths.csv");
        write(&summary, &path_summary_csv(&table))?;
    }
    Ok(())
}
