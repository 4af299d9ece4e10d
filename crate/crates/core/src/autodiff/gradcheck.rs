use rand::seq::index::sample;
use rand::Rng;

use super::{ParamSet, Tape, Var};
use crate::error::{Error, Result};

/// Central-difference step.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Coordinates checked per parameter (all of them when fewer exist).
const SAMPLES_PER_PARAM: usize = 100;

/// Denominator floor for the relative error. Central differences carry an
/// absolute rounding error near `1e-16·|loss|/eps`, which would otherwise
/// dominate for near-zero gradient entries.
const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares the tape's analytic gradients against central differences.
///
/// `loss_fn` must build the same scalar loss on whichever tape it is given;
/// it is called once on a recording tape and twice per checked coordinate
/// on inference tapes. Parameter values are restored afterwards and their
/// `grad` buffers are left zeroed.
pub fn grad_check<'g, F, R>(params: &mut ParamSet, mut loss_fn: F, rng: &mut R) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<'g>, &ParamSet) -> Result<Var>,
    R: Rng + ?Sized,
{
    params.zero_grad();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, params)?;
    let value = tape.value(loss).get(0, 0);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value} in grad_check")));
    }
    tape.backward(loss, params)?;
    drop(tape);

    let mut eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::inference();
        let l = loss_fn(&mut tape, params)?;
        let v = tape.value(l).get(0, 0);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("loss {v} in grad_check")))
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    for p in 0..params.len() {
        let n = params.get(p).value.data().len();
        let coords: Vec<usize> = if n <= SAMPLES_PER_PARAM {
            (0..n).collect()
        } else {
            let mut c = sample(rng, n, SAMPLES_PER_PARAM).into_vec();
            c.sort_unstable();
            c
        };
        for c in coords {
            let original = params.get(p).value.data()[c];
            params.get_mut(p).value.data_mut()[c] = original + GRAD_CHECK_EPS;
            let plus = eval(params);
            params.get_mut(p).value.data_mut()[c] = original - GRAD_CHECK_EPS;
            let minus = eval(params);
            params.get_mut(p).value.data_mut()[c] = original;
            let numeric = (plus? - minus?) / (2.0 * GRAD_CHECK_EPS);
            let analytic = params.get(p).grad.data()[c];
            let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.coordinates_checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.get(p).name.clone(), c));
            }
        }
    }
    params.zero_grad();
    Ok(report)
}
