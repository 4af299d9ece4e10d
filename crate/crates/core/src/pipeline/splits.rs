use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of training samples drawn per seed.
pub const NUM_SPLITS: usize = 5;

/// Smallest graph [`make_splits`] accepts.
pub const MIN_NODES: usize = 20;

/// One training sample: gradient nodes plus the validation nodes carved out
/// of the same 10% draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub seed: u64,
    /// Held-out 20%, shared by all five samples.
    pub test: Vec<bool>,
    pub splits: Vec<Split>,
}

fn mask(n: usize, nodes: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut m = vec![false; n];
    for i in nodes {
        m[i] = true;
    }
    m
}

/// Test set of `⌊N/5⌋` nodes, then five samples of `⌊N/10⌋` non-test nodes
/// each, a fifth of which (at least one) is held out for validation.
pub fn make_splits(num_nodes: usize, seed: u64) -> Result<Splits> {
    if num_nodes < MIN_NODES {
        return Err(Error::OutOfRange {
            what: "nodes for splitting",
            value: num_nodes,
            range: format!("{MIN_NODES}.."),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut rng);
    let (test, rest) = order.split_at(num_nodes / 5);
    let sample_size = num_nodes / 10;
    let val_size = (sample_size / 5).max(1);
    let splits = (0..NUM_SPLITS)
        .map(|_| {
            let picked: Vec<usize> = sample(&mut rng, rest.len(), sample_size)
                .into_iter()
                .map(|i| rest[i])
                .collect();
            let (val, train) = picked.split_at(val_size);
            Split {
                train: mask(num_nodes, train.iter().copied()),
                val: mask(num_nodes, val.iter().copied()),
            }
        })
        .collect();
    Ok(Splits {
        seed,
        test: mask(num_nodes, test.iter().copied()),
        splits,
    })
}
