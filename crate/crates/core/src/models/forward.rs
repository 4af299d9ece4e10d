use rand::RngCore;

use super::{Activation, ModelConfig, ModelKind, ModelParams, Propagation};
use crate::autodiff::{ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, Graph, SparseMatrix};

/// Training mode draws dropout masks from the given generator.
pub enum ForwardMode<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl ForwardMode<'_> {
    fn dropout(&mut self, tape: &mut Tape<'_>, x: Var, rate: f64) -> Result<Var> {
        match self {
            ForwardMode::Eval => Ok(x),
            ForwardMode::Train(rng) => tape.dropout(x, rate, true, &mut **rng),
        }
    }
}

struct Layers<'p> {
    params: &'p ParamSet,
}

impl Layers<'_> {
    fn load(&self, tape: &mut Tape<'_>, name: &str) -> Result<Var> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))?;
        Ok(tape.param(self.params, idx))
    }
}

fn activate(tape: &mut Tape<'_>, cfg: &ModelConfig, x: Var) -> Var {
    match cfg.activation {
        Activation::Relu => tape.relu(x),
        Activation::Identity => x,
    }
}

fn sparse_op<'g>(prop: Propagation<'g>, kind: ModelKind) -> Result<&'g SparseMatrix> {
    match prop {
        Propagation::Sparse(s) => Ok(s),
        _ => Err(Error::Invalid(format!("{kind} needs a sparse propagation operator"))),
    }
}

/// Records the forward pass of `cfg.kind` on `tape` and returns the logits.
pub fn build_logits<'g>(
    tape: &mut Tape<'g>,
    cfg: &ModelConfig,
    params: &ParamSet,
    prop: Propagation<'g>,
    x: Var,
    mode: &mut ForwardMode<'_>,
) -> Result<Var> {
    cfg.validate()?;
    let (n, f) = tape.value(x).shape();
    if f != cfg.input_dim {
        return Err(Error::shape(
            "forward",
            format!("features have {f} columns, config expects {}", cfg.input_dim),
        ));
    }
    match prop {
        Propagation::Sparse(s) if s.rows() != n || s.cols() != n => {
            return Err(Error::shape(
                "forward",
                format!("{}x{} operator for {n} nodes", s.rows(), s.cols()),
            ))
        }
        Propagation::Max(g) if g.num_nodes() != n => {
            return Err(Error::shape(
                "forward",
                format!("graph with {} nodes for {n} feature rows", g.num_nodes()),
            ))
        }
        _ => {}
    }
    let layers = Layers { params };
    let p = cfg.dropout;
    match cfg.kind {
        ModelKind::NodeMlp => {
            let h = mode.dropout(tape, x, p)?;
            let w1 = layers.load(tape, "W_1")?;
            let h = tape.matmul(h, w1)?;
            let h = activate(tape, cfg, h);
            let h = mode.dropout(tape, h, p)?;
            let wl = layers.load(tape, "W_L")?;
            tape.matmul(h, wl)
        }
        ModelKind::Gcn => {
            let s = sparse_op(prop, cfg.kind)?;
            let mut h = x;
            for k in 1..cfg.hops {
                let hd = mode.dropout(tape, h, p)?;
                let w = layers.load(tape, &format!("W_{k}"))?;
                let hw = tape.matmul(hd, w)?;
                let z = tape.spmm(s, hw)?;
                h = activate(tape, cfg, z);
            }
            let hd = mode.dropout(tape, h, p)?;
            let wl = layers.load(tape, "W_L")?;
            let hw = tape.matmul(hd, wl)?;
            tape.spmm(s, hw)
        }
        ModelKind::GcnSkip => {
            let s = sparse_op(prop, cfg.kind)?;
            let mut h = x;
            for k in 1..=cfg.hops {
                let hd = mode.dropout(tape, h, p)?;
                let w = layers.load(tape, &format!("W_{k}"))?;
                let hw = tape.matmul(hd, w)?;
                let z = tape.spmm(s, hw)?;
                let a = activate(tape, cfg, z);
                h = if k >= 2 { tape.add(a, h)? } else { a };
            }
            let hd = mode.dropout(tape, h, p)?;
            let wl = layers.load(tape, "W_L")?;
            tape.matmul(hd, wl)
        }
        ModelKind::GsMean | ModelKind::GsMax => {
            let mut h = x;
            for k in 1..=cfg.hops {
                let hd = mode.dropout(tape, h, p)?;
                let agg = match (cfg.kind, prop) {
                    (ModelKind::GsMean, Propagation::Sparse(s)) => tape.spmm(s, hd)?,
                    (ModelKind::GsMax, Propagation::Max(g)) => tape.neighbor_max(g, hd)?,
                    (kind, _) => {
                        return Err(Error::Invalid(format!(
                            "{kind} got the wrong kind of propagation"
                        )))
                    }
                };
                let cat = tape.concat(hd, agg)?;
                let w = layers.load(tape, &format!("W_{k}"))?;
                let z = tape.matmul(cat, w)?;
                h = activate(tape, cfg, z);
            }
            let hd = mode.dropout(tape, h, p)?;
            let wl = layers.load(tape, "W_L")?;
            tape.matmul(hd, wl)
        }
        ModelKind::Fgcn => {
            let s = sparse_op(prop, cfg.kind)?;
            // X·W_1 feeds both the hop-0 branch and the first propagation.
            let xd = mode.dropout(tape, x, p)?;
            let w1 = layers.load(tape, "W_1")?;
            let xw = tape.matmul(xd, w1)?;
            let h0 = activate(tape, cfg, xw);
            let z1 = tape.spmm(s, xw)?;
            let mut g = activate(tape, cfg, z1);
            let mut hops = vec![h0, g];
            for k in 2..=cfg.hops {
                let gd = mode.dropout(tape, g, p)?;
                let w = layers.load(tape, &format!("W_{k}"))?;
                let gw = tape.matmul(gd, w)?;
                let z = tape.spmm(s, gw)?;
                g = activate(tape, cfg, z);
                hops.push(g);
            }
            let mut terms = Vec::with_capacity(hops.len());
            for (k, h) in hops.into_iter().enumerate() {
                let theta = layers.load(tape, &format!("theta_{k}"))?;
                terms.push(tape.matmul(h, theta)?);
            }
            tape.add_all(&terms)
        }
    }
}

/// Evaluation-mode logits on a forward-only tape.
pub fn logits(
    cfg: &ModelConfig,
    params: &ModelParams,
    prop: Propagation<'_>,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    params.check(cfg)?;
    let mut tape = Tape::inference();
    let xv = tape.constant(x.clone());
    let out = build_logits(&mut tape, cfg, params.params(), prop, xv, &mut ForwardMode::Eval)?;
    Ok(tape.value(out).clone())
}

fn expect_kind(cfg: &ModelConfig, allowed: &[ModelKind]) -> Result<()> {
    if allowed.contains(&cfg.kind) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("config kind {} not valid here", cfg.kind)))
    }
}

/// `h_k = σ(L̂ h_{k-1} W_k)` for `k < K`, logits `L̂ h_{K-1} W_L`.
pub fn gcn_forward(cfg: &ModelConfig, params: &ModelParams, lhat: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    expect_kind(cfg, &[ModelKind::Gcn])?;
    logits(cfg, params, Propagation::Sparse(lhat), x)
}

/// GCN whose layers `k ≥ 2` add `h_{k-1}` back; logits `h_K W_L`.
pub fn gcn_skip_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    lhat: &SparseMatrix,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    expect_kind(cfg, &[ModelKind::GcnSkip])?;
    logits(cfg, params, Propagation::Sparse(lhat), x)
}

/// GraphSAGE with CONCAT combination. `gs_mean` aggregates with `D⁻¹A`,
/// `gs_max` takes the elementwise neighborhood max.
pub fn graphsage_forward(cfg: &ModelConfig, params: &ModelParams, graph: &Graph, x: &DenseMatrix) -> Result<DenseMatrix> {
    expect_kind(cfg, &[ModelKind::GsMean, ModelKind::GsMax])?;
    match cfg.kind {
        ModelKind::GsMean => {
            let mean = graph.mean_propagation();
            logits(cfg, params, Propagation::Sparse(&mean), x)
        }
        _ => logits(cfg, params, Propagation::Max(graph), x),
    }
}

/// F-GCN: `y = Σ_k h_k θ_k` over `h_0 = σ(X W_1)` and the GCN hop outputs.
pub fn fgcn_forward(cfg: &ModelConfig, params: &ModelParams, lhat: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    expect_kind(cfg, &[ModelKind::Fgcn])?;
    logits(cfg, params, Propagation::Sparse(lhat), x)
}

pub fn node_mlp_forward(cfg: &ModelConfig, params: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    expect_kind(cfg, &[ModelKind::NodeMlp])?;
    logits(cfg, params, Propagation::None, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::models::{class_weights, loss, GraphOperators};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        Graph::from_edges(&[(0, 1), (1, 2), (2, 0)], 3).unwrap()
    }

    fn star() -> Graph {
        Graph::from_edges(&[(0, 1), (0, 2), (0, 3)], 4).unwrap()
    }

    fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.3) {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edges(&edges, n).unwrap()
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn linear(kind: ModelKind, hops: usize, f: usize, d: usize, l: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(kind, hops, f, d, l);
        cfg.activation = Activation::Identity;
        cfg
    }

    fn filled(cfg: &ModelConfig, value: f64) -> ModelParams {
        let mut p = ModelParams::zeros(cfg).unwrap();
        for param in p.params_mut().iter_mut() {
            param.value = param.value.map(|_| value);
        }
        p
    }

    #[test]
    fn gcn_k1_identity_collapse() {
        let cfg = ModelConfig::new(ModelKind::Gcn, 1, 3, 8, 3);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.set("W_L", DenseMatrix::identity(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(5, 3, &mut rng);
        let out = gcn_forward(&cfg, &p, &SparseMatrix::identity(5), &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn gcn_triangle_all_ones() {
        // L̂ = J/3 on the triangle, so every propagation of an all-equal
        // matrix is a no-op and each matmul by ones multiplies by the width.
        let cfg = ModelConfig::new(ModelKind::Gcn, 2, 3, 4, 2);
        let p = filled(&cfg, 1.0);
        let lhat = triangle().renormalized_propagation();
        let out = gcn_forward(&cfg, &p, &lhat, &DenseMatrix::identity(3)).unwrap();
        for v in out.data() {
            assert!((v - 4.0).abs() < 1e-12, "{out:?}");
        }
        let oracle = lhat
            .spmm(&lhat.spmm(&DenseMatrix::filled(3, 4, 1.0)).unwrap().matmul(&DenseMatrix::filled(4, 2, 1.0)).unwrap())
            .unwrap();
        assert!(out.max_abs_diff(&oracle) < 1e-12);
    }

    #[test]
    fn permutation_equivariance_all_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(9, &mut rng);
        let x = random(9, 4, &mut rng);
        let perm = [3, 7, 0, 8, 1, 5, 2, 6, 4];
        let ops = GraphOperators::new(g.clone());
        let ops_p = GraphOperators::new(g.permute(&perm));
        let xp = x.select_rows(&perm);
        for kind in ModelKind::ALL {
            let cfg = ModelConfig::new(kind, 3, 4, 5, 3);
            let p = ModelParams::init(&cfg, &mut rng).unwrap();
            let out = logits(&cfg, &p, ops.propagation(kind), &x).unwrap();
            let out_p = logits(&cfg, &p, ops_p.propagation(kind), &xp).unwrap();
            assert!(out.select_rows(&perm).max_abs_diff(&out_p) < 1e-12, "{kind}");
        }
    }

    #[test]
    fn skip_zero_weights_keep_layer_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_graph(6, &mut rng);
        let lhat = g.renormalized_propagation();
        let x = random(6, 3, &mut rng);
        let cfg = ModelConfig::new(ModelKind::GcnSkip, 3, 3, 4, 2);
        let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
        p.set("W_2", DenseMatrix::zeros(4, 4)).unwrap();
        p.set("W_3", DenseMatrix::zeros(4, 4)).unwrap();
        let out = gcn_skip_forward(&cfg, &p, &lhat, &x).unwrap();
        let h1 = lhat.spmm(&x.matmul(p.get("W_1").unwrap()).unwrap()).unwrap().map(|v| v.max(0.0));
        let expected = h1.matmul(p.get("W_L").unwrap()).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn skip_k2_linear_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_graph(7, &mut rng);
        let lhat = g.renormalized_propagation();
        let x = random(7, 3, &mut rng);
        let cfg = linear(ModelKind::GcnSkip, 2, 3, 4, 4);
        let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
        p.set("W_L", DenseMatrix::identity(4)).unwrap();
        let out = gcn_skip_forward(&cfg, &p, &lhat, &x).unwrap();
        let h1 = lhat.spmm(&x.matmul(p.get("W_1").unwrap()).unwrap()).unwrap();
        let h2 = lhat.spmm(&h1.matmul(p.get("W_2").unwrap()).unwrap()).unwrap().add(&h1).unwrap();
        assert!(out.max_abs_diff(&h2) < 1e-12);
    }

    /// One linear GraphSAGE layer with `W_1 = [0; I]` exposes the aggregate.
    fn aggregate(kind: ModelKind, g: &Graph, x: &DenseMatrix) -> DenseMatrix {
        let f = x.cols();
        let cfg = linear(kind, 1, f, f, f);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.set("W_1", DenseMatrix::from_fn(2 * f, f, |i, j| (i == f + j) as u8 as f64)).unwrap();
        p.set("W_L", DenseMatrix::identity(f)).unwrap();
        graphsage_forward(&cfg, &p, g, x).unwrap()
    }

    #[test]
    fn star_aggregators() {
        let x = DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let max = aggregate(ModelKind::GsMax, &star(), &x);
        assert_eq!(max.row(0), &[1.0, 1.0, 1.0]);
        assert_eq!(max.row(2), &[0.0, 0.0, 0.0]);
        let mean = aggregate(ModelKind::GsMean, &star(), &x);
        for v in mean.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_node_uses_only_its_own_block() {
        let g = Graph::from_edges(&[(0, 1)], 3).unwrap();
        let x = DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![4.0, 3.0], vec![-5.0, 7.0]]);
        for kind in [ModelKind::GsMean, ModelKind::GsMax] {
            assert_eq!(aggregate(kind, &g, &x).row(2), &[0.0, 0.0]);
            let cfg = linear(kind, 1, 2, 2, 2);
            let mut p = ModelParams::zeros(&cfg).unwrap();
            p.set("W_1", DenseMatrix::from_fn(4, 2, |i, j| (i == j) as u8 as f64)).unwrap();
            p.set("W_L", DenseMatrix::identity(2)).unwrap();
            let out = graphsage_forward(&cfg, &p, &g, &x).unwrap();
            assert_eq!(out.row(2), x.row(2));
        }
    }

    #[test]
    fn theta_isolates_one_hop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_graph(8, &mut rng);
        let lhat = g.renormalized_propagation();
        let x = random(8, 3, &mut rng);
        let cfg = ModelConfig::new(ModelKind::Fgcn, 3, 3, 4, 4);
        let base = ModelParams::init(&cfg, &mut rng).unwrap();
        let w = |k: usize| base.get(&format!("W_{k}")).unwrap().clone();
        let relu = |m: DenseMatrix| m.map(|v| v.max(0.0));
        let xw = x.matmul(&w(1)).unwrap();
        let mut hops = vec![relu(xw.clone()), relu(lhat.spmm(&xw).unwrap())];
        for k in 2..=3 {
            let next = relu(lhat.spmm(&hops[k - 1].matmul(&w(k)).unwrap()).unwrap());
            hops.push(next);
        }
        for (j, hop) in hops.iter().enumerate() {
            let mut p = base.clone();
            for k in 0..=3 {
                let theta = if k == j { DenseMatrix::identity(4) } else { DenseMatrix::zeros(4, 4) };
                p.set(&format!("theta_{k}"), theta).unwrap();
            }
            let out = fgcn_forward(&cfg, &p, &lhat, &x).unwrap();
            assert!(out.max_abs_diff(hop) < 1e-12, "hop {j}");
        }
    }

    #[test]
    fn fgcn_k1_linear_identity_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(5, 3, &mut rng);
        let cfg = linear(ModelKind::Fgcn, 1, 3, 4, 2);
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        let out = fgcn_forward(&cfg, &p, &SparseMatrix::identity(5), &x).unwrap();
        let thetas = p.get("theta_0").unwrap().add(p.get("theta_1").unwrap()).unwrap();
        let expected = x.matmul(p.get("W_1").unwrap()).unwrap().matmul(&thetas).unwrap();
        assert!(out.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn fgcn_last_hop_matches_gcn_when_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g = random_graph(10, &mut rng);
        let lhat = g.renormalized_propagation();
        let x = random(10, 4, &mut rng);
        let k = 3;
        let fcfg = linear(ModelKind::Fgcn, k, 4, 5, 3);
        let mut fp = ModelParams::init(&fcfg, &mut rng).unwrap();
        for j in 0..k {
            fp.set(&format!("theta_{j}"), DenseMatrix::zeros(5, 3)).unwrap();
        }
        let gcfg = linear(ModelKind::Gcn, k, 4, 5, 3);
        let mut gp = ModelParams::zeros(&gcfg).unwrap();
        for j in 1..k {
            let name = format!("W_{j}");
            gp.set(&name, fp.get(&name).unwrap().clone()).unwrap();
        }
        let folded = fp.get(&format!("W_{k}")).unwrap().matmul(fp.get(&format!("theta_{k}")).unwrap()).unwrap();
        gp.set("W_L", folded).unwrap();
        let a = fgcn_forward(&fcfg, &fp, &lhat, &x).unwrap();
        let b = gcn_forward(&gcfg, &gp, &lhat, &x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn node_mlp_zero_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = random(6, 3, &mut rng);
        let cfg = ModelConfig::new(ModelKind::NodeMlp, 0, 3, 4, 2);
        let zero = ModelParams::zeros(&cfg).unwrap();
        assert_eq!(node_mlp_forward(&cfg, &zero, &x).unwrap(), DenseMatrix::zeros(6, 2));

        let cfg = linear(ModelKind::NodeMlp, 0, 3, 3, 3);
        let mut p = ModelParams::zeros(&cfg).unwrap();
        p.set("W_1", DenseMatrix::identity(3)).unwrap();
        p.set("W_L", DenseMatrix::identity(3)).unwrap();
        assert_eq!(node_mlp_forward(&cfg, &p, &x).unwrap(), x);
    }

    #[test]
    fn wrong_kind_and_shapes_rejected() {
        let cfg = ModelConfig::new(ModelKind::Gcn, 2, 3, 4, 2);
        let p = ModelParams::zeros(&cfg).unwrap();
        let lhat = triangle().renormalized_propagation();
        assert!(fgcn_forward(&cfg, &p, &lhat, &DenseMatrix::zeros(3, 3)).is_err());
        assert!(gcn_forward(&cfg, &p, &lhat, &DenseMatrix::zeros(3, 5)).is_err());
        assert!(gcn_forward(&cfg, &p, &lhat, &DenseMatrix::zeros(4, 3)).is_err());
        let other = ModelConfig::new(ModelKind::Gcn, 3, 3, 4, 2);
        assert!(gcn_forward(&other, &p, &lhat, &DenseMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn eval_mode_ignores_dropout_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let g = random_graph(6, &mut rng);
        let ops = GraphOperators::new(g);
        let x = random(6, 3, &mut rng);
        let mut cfg = ModelConfig::new(ModelKind::Fgcn, 2, 3, 4, 2);
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        let a = logits(&cfg, &p, ops.propagation(cfg.kind), &x).unwrap();
        cfg.dropout = 0.5;
        let b = logits(&cfg, &p, ops.propagation(cfg.kind), &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_dropout_changes_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ops = GraphOperators::new(random_graph(6, &mut rng));
        let x = random(6, 3, &mut rng);
        let mut cfg = ModelConfig::new(ModelKind::Gcn, 2, 3, 8, 2);
        cfg.dropout = 0.5;
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        let eval = logits(&cfg, &p, ops.propagation(cfg.kind), &x).unwrap();
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut drop_rng = ChaCha8Rng::seed_from_u64(0);
        let out = build_logits(
            &mut tape,
            &cfg,
            p.params(),
            ops.propagation(cfg.kind),
            xv,
            &mut ForwardMode::Train(&mut drop_rng),
        )
        .unwrap();
        assert!(tape.value(out).max_abs_diff(&eval) > 1e-6);
    }

    #[test]
    fn grad_check_every_kind() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_graph(10, &mut rng);
        let ops = GraphOperators::new(g);
        let x = random(10, 4, &mut rng);
        let y = DenseMatrix::from_fn(10, 3, |i, j| (i % 3 == j) as u8 as f64);
        let mask: Vec<bool> = (0..10).map(|i| i % 4 != 3).collect();
        let weights = class_weights(&y, &mask).unwrap();
        for kind in ModelKind::ALL {
            for multilabel in [false, true] {
                let mut cfg = ModelConfig::new(kind, 3, 4, 5, 3);
                cfg.multilabel = multilabel;
                let mut p = ModelParams::init(&cfg, &mut rng).unwrap();
                let prop = ops.propagation(kind);
                let report = grad_check(
                    p.params_mut(),
                    |tape, ps| {
                        let xv = tape.constant(x.clone());
                        let z = build_logits(tape, &cfg, ps, prop, xv, &mut ForwardMode::Eval)?;
                        loss(tape, &cfg, z, &y, &mask, &weights)
                    },
                    &mut rng,
                )
                .unwrap();
                assert!(report.max_rel_error < 1e-6, "{kind} multilabel={multilabel}: {report:?}");
            }
        }
    }

    #[test]
    fn doubling_class_weights_doubles_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let ops = GraphOperators::new(random_graph(8, &mut rng));
        let x = random(8, 3, &mut rng);
        let y = DenseMatrix::from_fn(8, 2, |i, j| (i % 2 == j) as u8 as f64);
        let mask = vec![true; 8];
        let cfg = ModelConfig::new(ModelKind::Fgcn, 2, 3, 4, 2);
        let p = ModelParams::init(&cfg, &mut rng).unwrap();
        let eval = |w: &[f64]| {
            let mut tape = Tape::inference();
            let xv = tape.constant(x.clone());
            let z = build_logits(&mut tape, &cfg, p.params(), ops.propagation(cfg.kind), xv, &mut ForwardMode::Eval).unwrap();
            let l = loss(&mut tape, &cfg, z, &y, &mask, w).unwrap();
            tape.value(l).get(0, 0)
        };
        assert_eq!(eval(&[2.0, 1.2]), 2.0 * eval(&[1.0, 0.6]));
    }
}
