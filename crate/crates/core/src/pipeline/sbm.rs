use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::graph::{row_normalize, DenseMatrix, Graph};

/// Which hop depth carries the label signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// The node's own block.
    Node,
    /// Majority block among direct neighbors.
    OneHop,
    /// Majority block among nodes at distance exactly two.
    TwoHop,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Node => "node",
            LabelRule::OneHop => "one_hop",
            LabelRule::TwoHop => "two_hop",
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(LabelRule::Node),
            "one_hop" => Ok(LabelRule::OneHop),
            "two_hop" => Ok(LabelRule::TwoHop),
            _ => Err(Error::Invalid(format!(
                "unknown label rule {s:?}; expected node, one_hop or two_hop"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Standard deviation of the Gaussian noise added to the one-hot features.
    pub noise: f64,
    pub label_rule: LabelRule,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            nodes_per_block: 50,
            p_in: 0.15,
            p_out: 0.02,
            noise: 1.0,
            label_rule: LabelRule::Node,
            seed: 0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Invalid(format!("noise {} must be non-negative", self.noise)));
        }
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::Invalid("blocks and nodes_per_block must be positive".into()));
        }
        Ok(())
    }
}

/// Most frequent block among `nodes`, lowest index on ties; `None` if empty.
fn majority(nodes: impl IntoIterator<Item = usize>, block: impl Fn(usize) -> usize, blocks: usize) -> Option<usize> {
    let mut counts = vec![0usize; blocks];
    let mut any = false;
    for v in nodes {
        counts[block(v)] += 1;
        any = true;
    }
    any.then(|| (1..blocks).fold(0, |b, j| if counts[j] > counts[b] { j } else { b }))
}

/// Nodes at shortest-path distance exactly two from `i`.
fn second_shell(g: &Graph, i: usize, seen: &mut [bool]) -> Vec<usize> {
    let mut touched = vec![i];
    seen[i] = true;
    for &j in g.neighbors(i) {
        seen[j] = true;
        touched.push(j);
    }
    let mut shell = Vec::new();
    for &j in g.neighbors(i) {
        for &k in g.neighbors(j) {
            if !seen[k] {
                seen[k] = true;
                touched.push(k);
                shell.push(k);
            }
        }
    }
    for t in touched {
        seen[t] = false;
    }
    shell
}

/// Stochastic block model with node `i` in block `i / nodes_per_block`.
/// Features are the block one-hot plus `N(0, noise²)` per entry, then
/// L1-normalized. Nodes with an empty neighborhood at the label depth fall
/// back to their own block.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.blocks * cfg.nodes_per_block;
    let block = |i: usize| i / cfg.nodes_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { cfg.p_in } else { cfg.p_out };
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(&edges, n)?;
    let raw = DenseMatrix::from_fn(n, cfg.blocks, |i, c| {
        let z: f64 = rng.sample(StandardNormal);
        (block(i) == c) as u8 as f64 + cfg.noise * z
    });

    let mut seen = vec![false; n];
    let mut labels = DenseMatrix::zeros(n, cfg.blocks);
    for i in 0..n {
        let label = match cfg.label_rule {
            LabelRule::Node => None,
            LabelRule::OneHop => majority(graph.neighbors(i).iter().copied(), block, cfg.blocks),
            LabelRule::TwoHop => majority(second_shell(&graph, i, &mut seen), block, cfg.blocks),
        }
        .unwrap_or(block(i));
        labels.set(i, label, 1.0);
    }
    let meta = DatasetMeta {
        name: format!("sbm-{}-b{}x{}-s{}", cfg.label_rule, cfg.blocks, cfg.nodes_per_block, cfg.seed),
        multilabel: false,
        label_rule: Some(cfg.label_rule),
    };
    Dataset::new(meta, graph, row_normalize(&raw), labels)
}
