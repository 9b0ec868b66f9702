//! Grid over target count and target strategy, one output directory per
//! cell, summarized in `sweep.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gdnn_core::train::Aggregate;
use gdnn_core::TargetKind;
use rayon::prelude::*;

use crate::commands::{encode, provided_edges, run_training, TrainInputs};
use crate::config::LoadedConfig;
use crate::dataset;
use crate::error::{CliError, Result};

pub const CSV_HEADER: &str = "k,effective_k,strategy,num_seeds,valid_hits_mean,valid_hits_std,test_hits_mean,test_hits_std";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// `k` clamped to the node count.
    pub effective_k: usize,
    pub strategy: TargetKind,
    pub aggregate: Aggregate,
}

pub fn cell_dir(out: &Path, k: usize, strategy: TargetKind) -> PathBuf {
    out.join("sweep").join(format!("k{k}-{}", strategy.as_str()))
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        let a = &r.aggregate;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.effective_k,
            r.strategy.as_str(),
            a.num_seeds,
            a.valid_hits_mean,
            a.valid_hits_std,
            a.test_hits_mean,
            a.test_hits_std
        )
        .unwrap();
    }
    s
}

/// Trains every `(k, strategy)` cell, in parallel, and writes
/// `{out}/sweep.csv`. Rows follow the order of `ks` then `strategies`.
pub fn cmd_sweep(loaded: &LoadedConfig, ks: &[usize], strategies: &[TargetKind]) -> Result<(PathBuf, Vec<SweepRow>)> {
    if ks.is_empty() || strategies.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage("sweep needs positive k values and at least one strategy".into()));
    }
    let data = dataset::load(&loaded.split_dir())?;
    let provided = provided_edges(loaded, &data.graph)?;
    let out = loaded.output_dir();
    let cells: Vec<(usize, TargetKind)> = ks.iter().flat_map(|&k| strategies.iter().map(move |&s| (k, s))).collect();
    let rows = cells
        .par_iter()
        .map(|&(k, strategy)| {
            let mut config = loaded.config.clone();
            let effective_k = k.min(data.num_nodes());
            config.encode.k = effective_k;
            config.encode.strategy = strategy;
            let features = encode(&data.graph, &config.encode)?;
            let inputs = TrainInputs {
                dataset: &data,
                features: &features,
                provided: provided.clone(),
            };
            let report = run_training(&config, &inputs, &cell_dir(&out, k, strategy), false)?;
            Ok(SweepRow {
                k,
                effective_k,
                strategy,
                aggregate: report.aggregate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("sweep.csv");
    fs::write(&path, to_csv(&rows)).map_err(CliError::io(&path))?;
    Ok((path, rows))
}
