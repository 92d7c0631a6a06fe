//! Central finite-difference gradient checks.

use crate::error::Result;
use crate::params::ParamStore;

/// Default perturbation for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst-case discrepancy for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: String,
    pub numel: usize,
    /// max over entries of `|analytic - numeric| / (1 + |numeric|)`
    pub max_error: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1.0 + numeric.abs())
}

/// Central difference of `f` at `x` for every coordinate.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Compares analytic parameter gradients against central differences.
///
/// `loss` evaluates the scalar loss at the store's current values;
/// `analytic` must leave d(loss)/d(param) in the gradient buffers (it is
/// called after `zero_grad`). Values are restored exactly afterwards.
pub fn check_params(
    store: &mut ParamStore,
    step: f64,
    mut loss: impl FnMut(&ParamStore) -> Result<f64>,
    analytic: impl FnOnce(&mut ParamStore) -> Result<()>,
) -> Result<Vec<GradCheckRow>> {
    store.zero_grad();
    analytic(store)?;
    let mut rows = Vec::with_capacity(store.len());
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).len();
        let mut max_error: f64 = 0.0;
        for j in 0..n {
            let orig = store.value(id).data()[j];
            store.value_mut(id).data_mut()[j] = orig + step;
            let up = loss(store)?;
            store.value_mut(id).data_mut()[j] = orig - step;
            let down = loss(store)?;
            store.value_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(store.grad(id).data()[j], numeric);
            // NaN must never pass
            max_error = if err.is_nan() { f64::INFINITY } else { max_error.max(err) };
        }
        rows.push(GradCheckRow { name: store.name(id).to_string(), numel: n, max_error });
    }
    Ok(rows)
}
