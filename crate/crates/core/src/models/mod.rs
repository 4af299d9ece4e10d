//! Node classifiers built on the [`Tape`]: a node-only MLP, GCN, GCN with
//! skip connections, GraphSAGE with mean or max aggregation, and F-GCN.
//!
//! No layer carries a bias term. Every model produces raw logits; the loss
//! layer (softmax or sigmoid) is applied by [`loss`].

mod forward;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_init, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, Graph, SparseMatrix};

pub use forward::{
    build_logits, fgcn_forward, gcn_forward, gcn_skip_forward, graphsage_forward, logits,
    node_mlp_forward, ForwardMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NodeMlp,
    Gcn,
    GcnSkip,
    GsMean,
    GsMax,
    Fgcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::NodeMlp,
        ModelKind::Gcn,
        ModelKind::GcnSkip,
        ModelKind::GsMean,
        ModelKind::GsMax,
        ModelKind::Fgcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NodeMlp => "node_mlp",
            ModelKind::Gcn => "gcn",
            ModelKind::GcnSkip => "gcn_skip",
            ModelKind::GsMean => "gs_mean",
            ModelKind::GsMax => "gs_max",
            ModelKind::Fgcn => "fgcn",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != ModelKind::NodeMlp
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown model {s:?}; expected one of node_mlp, gcn, gcn_skip, gs_mean, gs_max, fgcn"
                ))
            })
    }
}

/// Hidden-layer nonlinearity. `Identity` exists for the linear-kernel
/// analysis; training uses `Relu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of propagation hops `K`; ignored by `node_mlp`.
    pub hops: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub label_dim: usize,
    pub multilabel: bool,
    pub dropout: f64,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, hops: usize, input_dim: usize, hidden_dim: usize, label_dim: usize) -> Self {
        Self {
            kind,
            hops,
            input_dim,
            hidden_dim,
            label_dim,
            multilabel: false,
            dropout: 0.0,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.uses_graph() && self.hops == 0 {
            return Err(Error::Invalid(format!("{} needs hops >= 1", self.kind)));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.label_dim == 0 {
            return Err(Error::Invalid("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Parameter names and shapes in enumeration order.
    pub fn layout(&self) -> Vec<(String, (usize, usize))> {
        let (f, d, l, k) = (self.input_dim, self.hidden_dim, self.label_dim, self.hops);
        let w = |i: usize| format!("W_{i}");
        let mut out = Vec::new();
        match self.kind {
            ModelKind::NodeMlp => {
                out.push((w(1), (f, d)));
                out.push(("W_L".into(), (d, l)));
            }
            ModelKind::Gcn => {
                if k == 1 {
                    out.push(("W_L".into(), (f, l)));
                } else {
                    out.push((w(1), (f, d)));
                    out.extend((2..k).map(|i| (w(i), (d, d))));
                    out.push(("W_L".into(), (d, l)));
                }
            }
            ModelKind::GcnSkip => {
                out.push((w(1), (f, d)));
                out.extend((2..=k).map(|i| (w(i), (d, d))));
                out.push(("W_L".into(), (d, l)));
            }
            ModelKind::GsMean | ModelKind::GsMax => {
                out.push((w(1), (2 * f, d)));
                out.extend((2..=k).map(|i| (w(i), (2 * d, d))));
                out.push(("W_L".into(), (d, l)));
            }
            ModelKind::Fgcn => {
                out.push((w(1), (f, d)));
                out.extend((2..=k).map(|i| (w(i), (d, d))));
                out.extend((0..=k).map(|i| (format!("theta_{i}"), (d, l))));
            }
        }
        out
    }
}

/// Learnable weights of one model, laid out per [`ModelConfig::layout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    set: ParamSet,
}

impl ModelParams {
    /// Glorot-initialized parameters.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut set = ParamSet::new();
        for (name, (r, c)) in cfg.layout() {
            set.push(name, glorot_init(r, c, rng));
        }
        Ok(Self { set })
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut set = ParamSet::new();
        for (name, (r, c)) in cfg.layout() {
            set.push(name, DenseMatrix::zeros(r, c));
        }
        Ok(Self { set })
    }

    pub fn params(&self) -> &ParamSet {
        &self.set
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.set
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.set.by_name(name).map(|p| &p.value)
    }

    /// Replaces the value of `name`, keeping its shape.
    pub fn set(&mut self, name: &str, value: DenseMatrix) -> Result<()> {
        let p = self
            .set
            .by_name_mut(name)
            .ok_or_else(|| Error::Invalid(format!("no parameter named {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "ModelParams::set",
                format!("{name} is {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    /// Checks names and shapes against `cfg`.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let layout = cfg.layout();
        if layout.len() != self.set.len() {
            return Err(Error::shape(
                "ModelParams",
                format!("{} parameters for a layout of {}", self.set.len(), layout.len()),
            ));
        }
        for (p, (name, shape)) in self.set.iter().zip(&layout) {
            if &p.name != name || p.value.shape() != *shape {
                return Err(Error::shape(
                    "ModelParams",
                    format!("{} {:?} where {name} {shape:?} was expected", p.name, p.value.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// What a model propagates over.
#[derive(Clone, Copy)]
pub enum Propagation<'g> {
    /// No graph (`node_mlp`).
    None,
    /// A sparse operator: `L̂` for the GCN family, `D⁻¹A` for `gs_mean`.
    Sparse(&'g SparseMatrix),
    /// Elementwise max over full neighborhoods (`gs_max`).
    Max(&'g Graph),
}

/// Precomputed operators for one graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub graph: Graph,
    pub renormalized: SparseMatrix,
    pub mean: SparseMatrix,
}

impl GraphOperators {
    pub fn new(graph: Graph) -> Self {
        Self {
            renormalized: graph.renormalized_propagation(),
            mean: graph.mean_propagation(),
            graph,
        }
    }

    pub fn propagation(&self, kind: ModelKind) -> Propagation<'_> {
        match kind {
            ModelKind::NodeMlp => Propagation::None,
            ModelKind::Gcn | ModelKind::GcnSkip | ModelKind::Fgcn => {
                Propagation::Sparse(&self.renormalized)
            }
            ModelKind::GsMean => Propagation::Sparse(&self.mean),
            ModelKind::GsMax => Propagation::Max(&self.graph),
        }
    }
}

/// Per-label loss weights `w_l = n / (L · n_l)` over the `n` masked rows,
/// clamped to `[1e-3, 1e3]`. Labels absent from the mask get `1e3`.
pub fn class_weights(y: &DenseMatrix, mask: &[bool]) -> Result<Vec<f64>> {
    const MIN_W: f64 = 1e-3;
    const MAX_W: f64 = 1e3;
    if mask.len() != y.rows() {
        return Err(Error::shape(
            "class_weights",
            format!("mask length {} vs {} rows", mask.len(), y.rows()),
        ));
    }
    let rows: Vec<usize> = (0..y.rows()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::EmptyMask("class_weights"));
    }
    let labels = y.cols();
    let total = rows.len() as f64;
    Ok((0..labels)
        .map(|l| {
            let count: f64 = rows.iter().map(|&i| y.get(i, l)).sum();
            if count == 0.0 {
                MAX_W
            } else {
                (total / (labels as f64 * count)).clamp(MIN_W, MAX_W)
            }
        })
        .collect())
}

/// Softmax cross-entropy for multi-class configs, sigmoid BCE for
/// multilabel ones.
pub fn loss(
    tape: &mut Tape<'_>,
    cfg: &ModelConfig,
    logits: Var,
    y: &DenseMatrix,
    mask: &[bool],
    class_weights: &[f64],
) -> Result<Var> {
    if cfg.multilabel {
        tape.sigmoid_bce(logits, y, mask, class_weights)
    } else {
        tape.softmax_xent(logits, y, mask, class_weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips_through_str() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gs_lstm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn zero_hops_rejected_for_graph_models() {
        let mut cfg = ModelConfig::new(ModelKind::Gcn, 0, 3, 4, 2);
        assert!(cfg.validate().is_err());
        cfg.kind = ModelKind::NodeMlp;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn layouts() {
        let shapes = |kind, k| {
            ModelConfig::new(kind, k, 5, 4, 3)
                .layout()
                .into_iter()
                .map(|(n, s)| format!("{n}:{}x{}", s.0, s.1))
                .collect::<Vec<_>>()
                .join(" ")
        };
        assert_eq!(shapes(ModelKind::Gcn, 1), "W_L:5x3");
        assert_eq!(shapes(ModelKind::Gcn, 3), "W_1:5x4 W_2:4x4 W_L:4x3");
        assert_eq!(shapes(ModelKind::GcnSkip, 2), "W_1:5x4 W_2:4x4 W_L:4x3");
        assert_eq!(shapes(ModelKind::GsMax, 2), "W_1:10x4 W_2:8x4 W_L:4x3");
        assert_eq!(
            shapes(ModelKind::Fgcn, 2),
            "W_1:5x4 W_2:4x4 theta_0:4x3 theta_1:4x3 theta_2:4x3"
        );
        assert_eq!(shapes(ModelKind::NodeMlp, 7), "W_1:5x4 W_L:4x3");
    }

    #[test]
    fn class_weight_examples() {
        let balanced = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(class_weights(&balanced, &[true, true]).unwrap(), vec![1.0, 1.0]);

        let skewed = DenseMatrix::from_fn(100, 2, |i, j| ((i < 90) == (j == 0)) as u8 as f64);
        let w = class_weights(&skewed, &[true; 100]).unwrap();
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-15);
        assert!((w[1] - 5.0).abs() < 1e-15);

        let absent = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(class_weights(&absent, &[true, true]).unwrap()[1], 1e3);

        assert!(matches!(
            class_weights(&absent, &[false, false]),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn set_checks_shape() {
        let cfg = ModelConfig::new(ModelKind::Fgcn, 1, 2, 2, 2);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        assert!(p.set("theta_1", DenseMatrix::identity(2)).is_ok());
        assert!(p.set("theta_1", DenseMatrix::identity(3)).is_err());
        assert!(p.set("theta_9", DenseMatrix::identity(2)).is_err());
        assert!(p.check(&cfg).is_ok());
    }
}
