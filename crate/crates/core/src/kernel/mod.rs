//! Expansion of recursive propagation kernels into sums over powers of the
//! neighbor operator `F(A)`.
//!
//! A kernel layer computes `h_k = α h_{k-1} W_k^0 + F(A) h_{k-1} W_k^1` with
//! linear activations. Three weight schemes are covered:
//!
//! - [`Scheme::Shared`]: `W_k^0 = W_k^1 = W_k`, so `h_K = (αI + F)^K h_0 Π W_k`.
//! - [`Scheme::SharedSkip`]: shared weights plus `h_k += h_{k-1}` for `k ≥ 2`.
//! - [`Scheme::NonShared`]: independent node and neighbor weights.
//!
//! Weights are non-commuting symbols; a [`WeightMonomial`] is the ordered
//! word of weights along one computation path. Setting a weight to zero
//! deletes every monomial containing it, which is how
//! [`reachable_hop_subsets`] decides which hop combinations a kernel can
//! isolate.

mod regression;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use regression::{
    fgcn_span_fit, numeric_hop_regression, power_basis, shared_gcn_fit, HopRegression, SpanFit,
    CONDITION_LIMIT,
};

/// Largest `K` accepted by [`expand_shared`], [`enumerate_paths`] and
/// [`hop_coefficients`].
pub const MAX_HOPS: usize = 20;

/// Largest `K` for the symbolic skip and non-shared expansions, whose
/// monomial count grows like `2^K`.
pub const MAX_SYMBOLIC_HOPS: usize = 16;

/// Largest `K` for the exhaustive [`reachable_hop_subsets`] search.
pub const MAX_SEARCH_HOPS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Shared,
    SharedSkip,
    NonShared,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Shared, Scheme::SharedSkip, Scheme::NonShared];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Shared => "shared",
            Scheme::SharedSkip => "shared_skip",
            Scheme::NonShared => "non_shared",
        }
    }

    /// Smallest `K` for which the scheme is defined.
    pub fn min_hops(self) -> usize {
        match self {
            Scheme::SharedSkip => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(Scheme::Shared),
            "skip" | "shared_skip" => Ok(Scheme::SharedSkip),
            "non_shared" => Ok(Scheme::NonShared),
            _ => Err(Error::Invalid(format!(
                "unknown scheme {s:?}; expected shared, skip or non_shared"
            ))),
        }
    }
}

/// One weight matrix of a kernel layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WeightSymbol {
    /// `W_k`, shared by the node and neighbor terms.
    Shared(usize),
    /// `W_k^0`, the node (identity) transformation.
    Node(usize),
    /// `W_k^1`, the neighbor (`F(A)`) transformation.
    Neighbor(usize),
}

impl WeightSymbol {
    pub fn layer(self) -> usize {
        match self {
            WeightSymbol::Shared(k) | WeightSymbol::Node(k) | WeightSymbol::Neighbor(k) => k,
        }
    }
}

impl fmt::Display for WeightSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSymbol::Shared(k) => write!(f, "W_{k}"),
            WeightSymbol::Node(k) => write!(f, "W_{k}^0"),
            WeightSymbol::Neighbor(k) => write!(f, "W_{k}^1"),
        }
    }
}

/// `coefficient · α^alpha_power · word`, where `word` is a product of weights
/// in layer order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightMonomial {
    pub coefficient: u64,
    pub alpha_power: u32,
    pub word: Vec<WeightSymbol>,
}

impl WeightMonomial {
    pub fn contains(&self, s: WeightSymbol) -> bool {
        self.word.contains(&s)
    }
}

impl fmt::Display for WeightMonomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        match self.alpha_power {
            0 => {}
            1 => write!(f, "·α")?,
            p => write!(f, "·α^{p}")?,
        }
        for s in &self.word {
            write!(f, "·{s}")?;
        }
        Ok(())
    }
}

/// `h_K = Σ_k F(A)^k h_0 · (Σ monomials of hop k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopPolynomial {
    pub hops: usize,
    pub scheme: Scheme,
    terms: Vec<Vec<WeightMonomial>>,
}

type TermKey = (usize, u32, Vec<WeightSymbol>);

impl HopPolynomial {
    fn from_map(hops: usize, scheme: Scheme, map: BTreeMap<TermKey, u64>) -> Self {
        let mut terms = vec![Vec::new(); hops + 1];
        for ((hop, alpha_power, word), coefficient) in map {
            terms[hop].push(WeightMonomial {
                coefficient,
                alpha_power,
                word,
            });
        }
        Self { hops, scheme, terms }
    }

    /// Monomials multiplying `F(A)^k h_0`.
    pub fn terms(&self, k: usize) -> &[WeightMonomial] {
        self.terms.get(k).map_or(&[], Vec::as_slice)
    }

    /// Scalar coefficient of each hop when every weight is the identity.
    pub fn coefficients(&self, alpha: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|ms| {
                ms.iter()
                    .map(|m| m.coefficient as f64 * alpha.powi(m.alpha_power as i32))
                    .sum()
            })
            .collect()
    }

    /// Exact coefficients at `α = 1` with identity weights.
    pub fn integer_coefficients(&self) -> Vec<u64> {
        self.terms
            .iter()
            .map(|ms| ms.iter().map(|m| m.coefficient).sum())
            .collect()
    }

    /// Substitutes zero for every symbol in `zeroed`.
    pub fn with_zeroed(&self, zeroed: &BTreeSet<WeightSymbol>) -> HopPolynomial {
        let terms = self
            .terms
            .iter()
            .map(|ms| {
                ms.iter()
                    .filter(|m| !m.word.iter().any(|s| zeroed.contains(s)))
                    .cloned()
                    .collect()
            })
            .collect();
        HopPolynomial {
            hops: self.hops,
            scheme: self.scheme,
            terms,
        }
    }

    /// Hops with at least one surviving monomial.
    pub fn support(&self) -> BTreeSet<usize> {
        (0..=self.hops).filter(|&k| !self.terms[k].is_empty()).collect()
    }

    /// Every weight symbol appearing in the expansion.
    pub fn symbols(&self) -> BTreeSet<WeightSymbol> {
        self.terms
            .iter()
            .flatten()
            .flat_map(|m| m.word.iter().copied())
            .collect()
    }
}

impl fmt::Display for HopPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, ms) in self.terms.iter().enumerate() {
            let body: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
            writeln!(f, "F(A)^{k} h_0: {}", if body.is_empty() { "0".into() } else { body.join(" + ") })?;
        }
        Ok(())
    }
}

fn check_hops(hops: usize, min: usize, max: usize, what: &'static str) -> Result<()> {
    if (min..=max).contains(&hops) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value: hops,
            range: format!("{min}..={max}"),
        })
    }
}

/// One layer of `(node branch, neighbor branch)` applied to every term.
fn step(map: &BTreeMap<TermKey, u64>, node: WeightSymbol, neighbor: WeightSymbol) -> BTreeMap<TermKey, u64> {
    let mut next = BTreeMap::new();
    for ((hop, alpha, word), &c) in map {
        let mut w0 = word.clone();
        w0.push(node);
        *next.entry((*hop, alpha + 1, w0)).or_insert(0) += c;
        let mut w1 = word.clone();
        w1.push(neighbor);
        *next.entry((hop + 1, *alpha, w1)).or_insert(0) += c;
    }
    next
}

fn seed() -> BTreeMap<TermKey, u64> {
    BTreeMap::from([((0, 0, Vec::new()), 1)])
}

/// `h_K = (αI + F(A))^K h_0 Π_k W_k`: hop `k` carries `C(K,k)·α^{K-k}` times
/// the single word `W_1 ⋯ W_K`.
pub fn expand_shared(hops: usize) -> Result<HopPolynomial> {
    check_hops(hops, 1, MAX_HOPS, "shared kernel hops")?;
    let mut map = seed();
    for k in 1..=hops {
        map = step(&map, WeightSymbol::Shared(k), WeightSymbol::Shared(k));
    }
    Ok(HopPolynomial::from_map(hops, Scheme::Shared, map))
}

/// Linear skip recursion `h_1 = Φ h_0 W_1`, `h_k = Φ h_{k-1} W_k + h_{k-1}`
/// with `Φ = αI + F(A)`.
pub fn expand_skip(hops: usize) -> Result<HopPolynomial> {
    check_hops(hops, 2, MAX_SYMBOLIC_HOPS, "skip kernel hops")?;
    let mut map = step(&seed(), WeightSymbol::Shared(1), WeightSymbol::Shared(1));
    for k in 2..=hops {
        let mut next = step(&map, WeightSymbol::Shared(k), WeightSymbol::Shared(k));
        for (key, c) in map {
            *next.entry(key).or_insert(0) += c;
        }
        map = next;
    }
    Ok(HopPolynomial::from_map(hops, Scheme::SharedSkip, map))
}

/// `h_k = α h_{k-1} W_k^0 + F(A) h_{k-1} W_k^1`: one monomial per path of
/// the binary computation tree.
pub fn expand_non_shared(hops: usize) -> Result<HopPolynomial> {
    check_hops(hops, 1, MAX_SYMBOLIC_HOPS, "non-shared kernel hops")?;
    let mut map = seed();
    for k in 1..=hops {
        map = step(&map, WeightSymbol::Node(k), WeightSymbol::Neighbor(k));
    }
    Ok(HopPolynomial::from_map(hops, Scheme::NonShared, map))
}

pub fn expand(hops: usize, scheme: Scheme) -> Result<HopPolynomial> {
    match scheme {
        Scheme::Shared => expand_shared(hops),
        Scheme::SharedSkip => expand_skip(hops),
        Scheme::NonShared => expand_non_shared(hops),
    }
}

/// Per-hop scalar coefficients with identity weights, by scalar recurrence
/// on polynomials in `F(A)`. Works up to [`MAX_HOPS`] for every scheme.
pub fn hop_coefficients(hops: usize, scheme: Scheme, alpha: f64) -> Result<Vec<f64>> {
    check_hops(hops, scheme.min_hops(), MAX_HOPS, "kernel hops")?;
    // Multiply by Φ = α + F.
    let phi = |p: &[f64]| {
        let mut out = vec![0.0; p.len() + 1];
        for (k, &c) in p.iter().enumerate() {
            out[k] += alpha * c;
            out[k + 1] += c;
        }
        out
    };
    let mut p = vec![1.0];
    for k in 1..=hops {
        let mut next = phi(&p);
        if scheme == Scheme::SharedSkip && k >= 2 {
            for (n, c) in next.iter_mut().zip(&p) {
                *n += c;
            }
        }
        p = next;
    }
    Ok(p)
}

/// Exact per-hop coefficients at `α = 1` with identity weights, for every
/// scheme up to [`MAX_HOPS`].
pub fn unit_hop_coefficients(hops: usize, scheme: Scheme) -> Result<Vec<u64>> {
    check_hops(hops, scheme.min_hops(), MAX_HOPS, "kernel hops")?;
    let mut p = vec![1u64];
    for k in 1..=hops {
        let mut next = vec![0u64; p.len() + 1];
        for (j, &c) in p.iter().enumerate() {
            next[j] += c;
            next[j + 1] += c;
        }
        if scheme == Scheme::SharedSkip && k >= 2 {
            for (n, c) in next.iter_mut().zip(&p) {
                *n += c;
            }
        }
        p = next;
    }
    Ok(p)
}

/// Appendix-style tally for one hop of the binary computation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRow {
    pub hop: usize,
    /// Identity transformations (`W_k^0`) along each path.
    pub identity: usize,
    /// `F(A)` transformations (`W_k^1`) along each path.
    pub neighbor: usize,
    pub paths: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTable {
    pub hops: usize,
    pub rows: Vec<PathRow>,
}

impl PathTable {
    pub fn total_paths(&self) -> u64 {
        self.rows.iter().map(|r| r.paths).sum()
    }
}

/// Walks all `2^K` root-to-leaf paths of the non-shared computation tree
/// (bit `k` set means layer `k` took the `F(A)` branch) and groups leaves
/// by hop.
pub fn enumerate_paths(hops: usize) -> Result<PathTable> {
    check_hops(hops, 1, MAX_HOPS, "path enumeration hops")?;
    let mut counts = vec![0u64; hops + 1];
    for path in 0u64..(1 << hops) {
        counts[path.count_ones() as usize] += 1;
    }
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(hop, paths)| PathRow {
            hop,
            identity: hops - hop,
            neighbor: hop,
            paths,
        })
        .collect();
    Ok(PathTable { hops, rows })
}

/// All non-empty hop sets that some zero/nonzero assignment of the weights
/// isolates exactly. Exhaustive over `2^{#weights}` assignments.
pub fn reachable_hop_subsets(hops: usize, scheme: Scheme) -> Result<BTreeSet<BTreeSet<usize>>> {
    check_hops(hops, scheme.min_hops(), MAX_SEARCH_HOPS, "subset search hops")?;
    let poly = expand(hops, scheme)?;
    let symbols: Vec<WeightSymbol> = poly.symbols().into_iter().collect();
    let mut out = BTreeSet::new();
    for mask in 0u64..(1 << symbols.len()) {
        let zeroed = symbols
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &s)| s)
            .collect();
        let support = poly.with_zeroed(&zeroed).support();
        if !support.is_empty() {
            out.insert(support);
        }
    }
    Ok(out)
}
