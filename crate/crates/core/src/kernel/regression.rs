use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DenseMatrix, SparseMatrix};
use crate::models::{fgcn_forward, gcn_forward, Activation, ModelConfig, ModelKind, ModelParams};

/// Condition number above which a hop basis is rejected.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRegression {
    /// Least-squares weight of `F^k X` for `k = 0..=K`.
    pub coefficients: Vec<f64>,
    /// `‖B c − y‖ / ‖y‖`.
    pub relative_residual: f64,
    /// Condition number of the column-normalized basis.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanFit {
    /// Scalars `t_k` with `θ_k = t_k I`.
    pub theta_scales: Vec<f64>,
    /// Largest entrywise gap between the F-GCN output and the target.
    pub max_abs_error: f64,
}

/// `[X, F X, …, F^K X]`.
pub fn power_basis(op: &SparseMatrix, x: &DenseMatrix, hops: usize) -> Result<Vec<DenseMatrix>> {
    let mut out = Vec::with_capacity(hops + 1);
    out.push(x.clone());
    for k in 1..=hops {
        out.push(op.spmm(&out[k - 1])?);
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `min ‖Σ c_j columns_j − target‖` with a condition guard on the
/// column-normalized system.
fn least_squares(columns: &[&DenseMatrix], target: &DenseMatrix) -> Result<HopRegression> {
    let rows = target.data().len();
    for c in columns {
        if c.shape() != target.shape() {
            return Err(Error::shape(
                "hop regression",
                format!("basis {:?} vs target {:?}", c.shape(), target.shape()),
            ));
        }
    }
    let scales: Vec<f64> = columns.iter().map(|c| norm(c.data())).collect();
    if scales.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let b = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j].data()[i] / scales[j]);
    let y = DMatrix::from_column_slice(rows, 1, target.data());
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::RankDeficient { condition });
    }
    let sol = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::NonFinite(format!("least squares: {e}")))?;
    let residual = (&b * &sol - &y).norm();
    let ynorm = y.norm();
    let relative_residual = if ynorm > 0.0 { residual / ynorm } else { residual };
    Ok(HopRegression {
        coefficients: sol.iter().zip(&scales).map(|(c, s)| c / s).collect(),
        relative_residual,
        condition,
    })
}

/// Regresses the output of a linear model on the hop basis `{F^k X}`.
///
/// `forward` must map `X` to an output of the same shape, with identity
/// weights and activations so that the output is `Σ c_k F^k X`.
/// Fails with [`Error::RankDeficient`] when the basis is ill-conditioned;
/// callers should resample `X`.
pub fn numeric_hop_regression<F>(forward: F, op: &SparseMatrix, x: &DenseMatrix, hops: usize) -> Result<HopRegression>
where
    F: FnOnce(&DenseMatrix) -> Result<DenseMatrix>,
{
    let y = forward(x)?;
    let basis = power_basis(op, x, hops)?;
    let cols: Vec<&DenseMatrix> = basis.iter().collect();
    least_squares(&cols, &y)
}

fn linear_config(kind: ModelKind, hops: usize, f: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(kind, hops, f, f, f);
    cfg.activation = Activation::Identity;
    cfg
}

fn identity_weights(cfg: &ModelConfig) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(cfg)?;
    for (name, (r, _)) in cfg.layout() {
        p.set(&name, DenseMatrix::identity(r))?;
    }
    Ok(p)
}

/// Finds fusion weights `θ_k = t_k I` that make a linear F-GCN (propagating
/// with `op`, all `W = I`) output `Σ_k target_k F^k X`.
pub fn fgcn_span_fit(op: &SparseMatrix, x: &DenseMatrix, target: &[f64]) -> Result<SpanFit> {
    if target.len() < 2 {
        return Err(Error::Invalid("span target needs at least two hops".into()));
    }
    let hops = target.len() - 1;
    let f = x.cols();
    let cfg = linear_config(ModelKind::Fgcn, hops, f);
    let mut params = identity_weights(&cfg)?;
    let select = |params: &mut ModelParams, scales: &[f64]| -> Result<()> {
        for (k, &t) in scales.iter().enumerate() {
            params.set(&format!("theta_{k}"), DenseMatrix::identity(f).scale(t))?;
        }
        Ok(())
    };

    // Per-hop outputs of the model itself, one θ switched on at a time.
    let mut hop_outputs = Vec::with_capacity(hops + 1);
    for j in 0..=hops {
        let unit: Vec<f64> = (0..=hops).map(|k| (k == j) as u8 as f64).collect();
        select(&mut params, &unit)?;
        hop_outputs.push(fgcn_forward(&cfg, &params, op, x)?);
    }

    let basis = power_basis(op, x, hops)?;
    let mut wanted = DenseMatrix::zeros(x.rows(), f);
    for (b, &c) in basis.iter().zip(target) {
        wanted.add_assign(&b.scale(c))?;
    }
    let cols: Vec<&DenseMatrix> = hop_outputs.iter().collect();
    let fit = least_squares(&cols, &wanted)?;
    select(&mut params, &fit.coefficients)?;
    let out = fgcn_forward(&cfg, &params, op, x)?;
    Ok(SpanFit {
        theta_scales: fit.coefficients,
        max_abs_error: out.max_abs_diff(&wanted),
    })
}

/// Relative residual of the best fit of a shared-weight linear GCN,
/// `(I + F)^K X M` over any output map `M`, to `Σ_k target_k F^k X`.
pub fn shared_gcn_fit(op: &SparseMatrix, x: &DenseMatrix, target: &[f64]) -> Result<f64> {
    if target.len() < 2 {
        return Err(Error::Invalid("fit target needs at least two hops".into()));
    }
    let hops = target.len() - 1;
    let f = x.cols();
    let phi = op.add_scaled_identity(1.0)?;
    let cfg = linear_config(ModelKind::Gcn, hops, f);
    let params = identity_weights(&cfg)?;
    let b = gcn_forward(&cfg, &params, &phi, x)?;

    let basis = power_basis(op, x, hops)?;
    let mut wanted = DenseMatrix::zeros(x.rows(), f);
    for (bk, &c) in basis.iter().zip(target) {
        wanted.add_assign(&bk.scale(c))?;
    }
    let bm = DMatrix::from_row_slice(b.rows(), f, b.data());
    let tm = DMatrix::from_row_slice(wanted.rows(), f, wanted.data());
    let m = bm
        .clone()
        .svd(true, true)
        .solve(&tm, 1e-12)
        .map_err(|e| Error::NonFinite(format!("least squares: {e}")))?;
    let tnorm = tm.norm();
    if tnorm == 0.0 {
        return Err(Error::Invalid("fit target is the zero matrix".into()));
    }
    Ok((bm * m - tm).norm() / tnorm)
}
