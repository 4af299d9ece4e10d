use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::splits::{make_splits, Splits};
use super::train::{evaluate, train, Hyper, TrainReport};
use super::Dataset;
use crate::error::{Error, Result};
use crate::models::{GraphOperators, ModelConfig};

/// Outcome of training on all five samples of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub dataset: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub hyper: Hyper,
    pub test_nodes: usize,
    pub per_split_test_micro_f1: Vec<f64>,
    pub mean_test_micro_f1: f64,
    pub runs: Vec<TrainReport>,
}

impl ProtocolReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(format!("serializing report: {e}")))
    }

    /// Rows of `model,split,epoch_stopped,test_micro_f1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Invalid(format!("writing csv: {e}"));
        w.write_record(["model", "split", "epoch_stopped", "test_micro_f1"]).map_err(err)?;
        for (i, run) in self.runs.iter().enumerate() {
            let f1 = run.test_micro_f1.unwrap_or(f64::NAN);
            w.write_record([
                self.model.kind.to_string(),
                i.to_string(),
                run.epoch_stopped.to_string(),
                f1.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("writing csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Seed for the model trained on sample `split`.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(split as u64 + 1))
}

/// Trains one model per sample of [`make_splits`]`(N, seed)` and scores each
/// on the shared test set. Samples run in parallel; results are collected in
/// split order, so the report does not depend on scheduling.
pub fn run_protocol(cfg: &ModelConfig, hyper: &Hyper, ds: &Dataset, seed: u64) -> Result<ProtocolReport> {
    let splits = make_splits(ds.num_nodes(), seed)?;
    run_on_splits(cfg, hyper, ds, &splits)
}

pub fn run_on_splits(cfg: &ModelConfig, hyper: &Hyper, ds: &Dataset, splits: &Splits) -> Result<ProtocolReport> {
    let ops = GraphOperators::new(ds.graph.clone());
    let runs: Vec<TrainReport> = splits
        .splits
        .par_iter()
        .enumerate()
        .map(|(i, sp)| {
            let (params, mut report) = train(cfg, ds, &ops, &sp.train, &sp.val, hyper, split_seed(splits.seed, i))?;
            report.test_micro_f1 = Some(evaluate(cfg, &params, &ops, ds, &splits.test)?);
            Ok(report)
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = runs.iter().map(|r| r.test_micro_f1.unwrap_or(0.0)).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(ProtocolReport {
        dataset: ds.name().to_string(),
        seed: splits.seed,
        model: cfg.clone(),
        hyper: *hyper,
        test_nodes: splits.test.iter().filter(|&&b| b).count(),
        per_split_test_micro_f1: scores,
        mean_test_micro_f1: mean,
        runs,
    })
}
