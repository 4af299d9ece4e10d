use crate::error::{Error, Result};
use crate::graph::DenseMatrix;

/// `2TP / (2TP + FP + FN)` pooled over every (node, label) pair of the
/// masked rows; `0/0` is 0.
pub fn micro_f1(pred: &DenseMatrix, truth: &DenseMatrix, mask: &[bool]) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape(
            "micro_f1",
            format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape()),
        ));
    }
    if mask.len() != pred.rows() {
        return Err(Error::shape(
            "micro_f1",
            format!("mask length {} vs {} rows", mask.len(), pred.rows()),
        ));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask("micro_f1"));
    }
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for i in (0..pred.rows()).filter(|&i| mask[i]) {
        for (&p, &t) in pred.row(i).iter().zip(truth.row(i)) {
            match (p != 0.0, t != 0.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fne;
    Ok(if denom == 0 { 0.0 } else { (2 * tp) as f64 / denom as f64 })
}

/// One-hot argmax (lowest index wins ties) for multi-class logits; `logit ≥ 0`
/// per entry for multilabel ones.
pub fn predict_labels(logits: &DenseMatrix, multilabel: bool) -> DenseMatrix {
    let (n, l) = logits.shape();
    let mut out = DenseMatrix::zeros(n, l);
    for i in 0..n {
        let row = logits.row(i);
        if multilabel {
            for (o, &z) in out.row_mut(i).iter_mut().zip(row) {
                *o = (z >= 0.0) as u8 as f64;
            }
        } else if l > 0 {
            let best = (1..l).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            out.set(i, best, 1.0);
        }
    }
    out
}

/// Per model column, the mean over datasets of `best − score`, where `best`
/// is the row maximum over the models that have a score. Missing entries
/// (e.g. out-of-memory runs) are skipped; a column with no scores yields
/// `None`.
pub fn penalty(table: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    let models = table.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![0.0; models];
    let mut counts = vec![0usize; models];
    for row in table {
        let Some(best) = row.iter().flatten().copied().reduce(f64::max) else {
            continue;
        };
        for (m, score) in row.iter().enumerate() {
            if let Some(s) = score {
                sums[m] += best - s;
                counts[m] += 1;
            }
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows)
    }

    #[test]
    fn f1_examples() {
        let t = m(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(micro_f1(&t, &t, &[true, true]).unwrap(), 1.0);
        let p = m(&[vec![1.0, 0.0]]);
        let t = m(&[vec![1.0, 1.0]]);
        assert!((micro_f1(&p, &t, &[true]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let z = DenseMatrix::zeros(2, 3);
        assert_eq!(micro_f1(&z, &z, &[true, true]).unwrap(), 0.0);
        assert!(matches!(micro_f1(&z, &z, &[false, false]), Err(Error::EmptyMask(_))));
        assert!(micro_f1(&z, &DenseMatrix::zeros(2, 2), &[true, true]).is_err());
    }

    #[test]
    fn f1_ignores_unmasked_rows() {
        let p = m(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let t = m(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(micro_f1(&p, &t, &[true, false]).unwrap(), 1.0);
        assert_eq!(micro_f1(&p, &t, &[false, true]).unwrap(), 0.0);
    }

    #[test]
    fn prediction_rules() {
        let p = predict_labels(&m(&[vec![1.0, 3.0, 2.0], vec![2.0, 2.0, -1.0]]), false);
        assert_eq!(p, m(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]));
        let p = predict_labels(&m(&[vec![-1.0, 0.0, 4.0]]), true);
        assert_eq!(p, m(&[vec![0.0, 1.0, 1.0]]));
    }

    #[test]
    fn penalty_on_reference_scores() {
        // NODE, GCN, GS-MEAN, GS-MAX, GS-LSTM, F-GCN; None marks OOM.
        let s = |v: f64| Some(v);
        let table = vec![
            vec![s(60.222), s(79.039), s(76.821), s(73.272), s(65.730), s(79.039)],
            vec![s(65.861), s(72.991), s(70.967), s(71.390), s(65.751), s(72.266)],
            vec![s(40.311), s(63.848), s(62.800), s(53.476), None, s(63.993)],
            vec![s(41.459), s(62.057), s(63.753), s(65.068), s(64.231), s(65.538)],
            vec![s(37.876), s(34.073), s(39.433), s(40.275), None, s(39.069)],
            vec![s(64.683), s(49.762), s(64.127), s(64.571), s(64.619), s(64.857)],
            vec![s(63.710), s(61.777), s(68.266), s(70.302), s(68.024), s(74.097)],
            vec![s(50.712), s(39.059), s(50.557), s(50.569), None, s(52.021)],
        ];
        let p = penalty(&table);
        let expected = [10.997, 6.276, 2.011, 2.986, 5.232, 0.241];
        for m in [0, 1, 2, 3, 5] {
            assert!((p[m].unwrap() - expected[m]).abs() < 5e-4, "column {m}: {:?}", p[m]);
        }
        // The reference GS-LSTM figure does not follow from its own column:
        // skipping the OOM rows gives 28.167 / 5.
        assert!((p[4].unwrap() - 5.6334).abs() < 1e-9);
    }

    #[test]
    fn penalty_edge_cases() {
        assert_eq!(penalty(&[vec![Some(1.0), Some(1.0)]]), vec![Some(0.0), Some(0.0)]);
        assert_eq!(penalty(&[vec![Some(2.0), None]]), vec![Some(0.0), None]);
        assert!(penalty(&[]).is_empty());
    }
}
