//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of every backward rule on the tape.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};

/// Worst disagreement found for one parameter.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Relative error with a floor on the denominator, so that two gradients
/// which are both essentially zero compare as equal.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of `loss_fn` against central differences with
/// step `h` for every scalar of every parameter selected by `select`.
///
/// `loss_fn` must be deterministic: it is re-run twice per perturbed scalar.
#[allow(clippy::needless_range_loop)]
pub fn check<F>(
    store: &ParamStore,
    h: f64,
    floor: f64,
    select: impl Fn(&str) -> bool,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::eval(store);
        let loss = loss_fn(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::eval(s);
        let loss = loss_fn(&mut tape)?;
        Ok(tape.value(loss).item()?)
    };

    let mut work = store.clone();
    let mut params = Vec::new();
    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| select(&p.name)).map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).value.len();
        let zero = vec![0.0; n];
        let grad = analytic.get(id).map(|t| t.data().to_vec()).unwrap_or(zero);
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            entries: n,
            max_rel_error: 0.0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grad[i], numeric, floor);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_analytic = grad[i];
                check.worst_numeric = numeric;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport { params })
}
