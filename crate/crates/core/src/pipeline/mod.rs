//! Everything between a dataset directory and a score: ingestion, the
//! five-sample split protocol, full-batch training with the patience
//! schedule, micro-F1 evaluation, and a stochastic block model generator for
//! experiments whose label signal sits at a known hop depth.

mod dataset;
mod metrics;
mod protocol;
mod sbm;
mod splits;
mod train;

pub use dataset::{load_dataset, save_dataset, Dataset, DatasetMeta, EDGES_FILE, FEATURES_FILE, LABELS_FILE, META_FILE};
pub use metrics::{micro_f1, penalty, predict_labels};
pub use protocol::{run_on_splits, run_protocol, split_seed, ProtocolReport};
pub use sbm::{generate_sbm, LabelRule, SbmConfig};
pub use splits::{make_splits, Split, Splits, MIN_NODES, NUM_SPLITS};
pub use train::{evaluate, predict_logits, train, EpochRecord, Hyper, PatienceSchedule, ScheduleStep, TrainReport};

/// Model config sized for `ds`.
pub fn model_for(ds: &Dataset, kind: crate::models::ModelKind, hops: usize, hidden_dim: usize, dropout: f64) -> crate::models::ModelConfig {
    let mut cfg = crate::models::ModelConfig::new(kind, hops, ds.num_features(), hidden_dim, ds.num_labels());
    cfg.multilabel = ds.multilabel();
    cfg.dropout = dropout;
    cfg
}
