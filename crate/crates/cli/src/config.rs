use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fgcn_core::models::{ModelConfig, ModelKind};
use fgcn_core::pipeline::{generate_sbm, load_dataset, model_for, Dataset, Hyper, LabelRule, SbmConfig};
use fgcn_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fully resolved settings of a training run, echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub hops: usize,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub l2: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Dataset directory; when absent the run uses a generated `sbm` graph.
    pub data: Option<PathBuf>,
    pub sbm: Option<SbmConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = Hyper::default();
        Self {
            model: ModelKind::Fgcn,
            hops: 2,
            hidden_dim: 64,
            dropout: 0.5,
            l2: hyper.l2,
            lr: hyper.lr,
            max_epochs: hyper.max_epochs,
            seed: 0,
            data: None,
            sbm: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model.uses_graph() && self.hops == 0 {
            return Err(Error::Invalid(format!("--hops must be at least 1 for {}", self.model)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Invalid("--hidden-dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("--dropout {} not in [0, 1)", self.dropout)));
        }
        self.hyper().validate()?;
        if let Some(sbm) = &self.sbm {
            sbm.validate()?;
        }
        Ok(())
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            lr: self.lr,
            max_epochs: self.max_epochs,
            l2: self.l2,
            ..Hyper::default()
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.data, &self.sbm) {
            (Some(dir), _) => load_dataset(dir),
            (None, Some(sbm)) => generate_sbm(sbm),
            (None, None) => Err(Error::Invalid("no dataset: pass --data or sbm flags".into())),
        }
    }

    pub fn model_for(&self, ds: &Dataset, hops: usize) -> ModelConfig {
        model_for(ds, self.model, hops, self.hidden_dim, self.dropout)
    }
}

/// Stochastic block model flags shared by `synth`, `train` and `hopsweep`.
#[derive(Debug, Clone, Args, Default)]
pub struct SbmArgs {
    /// Number of blocks (and labels) [default: 4]
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Nodes in each block [default: 50]
    #[arg(long)]
    pub nodes_per_block: Option<usize>,
    /// Edge probability inside a block [default: 0.15]
    #[arg(long)]
    pub p_in: Option<f64>,
    /// Edge probability across blocks [default: 0.02]
    #[arg(long)]
    pub p_out: Option<f64>,
    /// Standard deviation of feature noise [default: 1.0]
    #[arg(long)]
    pub noise: Option<f64>,
    /// node, one_hop or two_hop [default: node]
    #[arg(long)]
    pub label_rule: Option<String>,
    /// Generator seed [default: the run seed]
    #[arg(long)]
    pub sbm_seed: Option<u64>,
}

impl SbmArgs {
    fn any(&self) -> bool {
        self.blocks.is_some()
            || self.nodes_per_block.is_some()
            || self.p_in.is_some()
            || self.p_out.is_some()
            || self.noise.is_some()
            || self.label_rule.is_some()
            || self.sbm_seed.is_some()
    }

    pub fn apply(&self, mut cfg: SbmConfig) -> Result<SbmConfig> {
        if let Some(v) = self.blocks {
            cfg.blocks = v;
        }
        if let Some(v) = self.nodes_per_block {
            cfg.nodes_per_block = v;
        }
        if let Some(v) = self.p_in {
            cfg.p_in = v;
        }
        if let Some(v) = self.p_out {
            cfg.p_out = v;
        }
        if let Some(v) = self.noise {
            cfg.noise = v;
        }
        if let Some(v) = &self.label_rule {
            cfg.label_rule = v.parse::<LabelRule>()?;
        }
        if let Some(v) = self.sbm_seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flags that resolve into a [`RunConfig`]. Each overrides the config file,
/// which overrides the built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON file with RunConfig fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// node_mlp, gcn, gcn_skip, gs_mean, gs_max or fgcn [default: fgcn]
    #[arg(long)]
    pub model: Option<String>,
    /// Propagation hops K [default: 2]
    #[arg(long)]
    pub hops: Option<usize>,
    /// Hidden layer width [default: 64]
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Dropout rate [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// L2 coefficient [default: 5e-4]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Initial learning rate [default: 1e-2]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epoch cap [default: 2000]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Protocol seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory (edges.tsv, features.csv, labels.csv, meta.json)
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub sbm: SbmArgs,
}

fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            cfg.model = m.parse()?;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(hops, hidden_dim, dropout, l2, lr, max_epochs, seed);
        if self.data.is_some() {
            cfg.data = self.data.clone();
        }
        if cfg.data.is_some() {
            if self.sbm.any() {
                return Err(Error::Invalid("--data cannot be combined with sbm flags".into()));
            }
            cfg.sbm = None;
        } else {
            let base = cfg.sbm.clone().unwrap_or_else(|| SbmConfig {
                seed: cfg.seed,
                ..SbmConfig::default()
            });
            cfg.sbm = Some(self.sbm.apply(base)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
