//! Central-difference gradient checking.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the tape gradient of `f` at `x` against central differences.
///
/// Returns the max over coordinates of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Graph, Var) -> Var,
{
    assert!((1e-7..=1e-3).contains(&eps), "grad_check eps {eps} outside [1e-7, 1e-3]");

    let g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&g, xv);
    let value = g.item(out);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("f(x) = {value}")));
    }
    let grads = g.backward(out);
    let analytic = grads.get(xv).expect("input is a param").clone();

    let eval = |t: Tensor| -> Result<f64> {
        let g = Graph::inference();
        let xv = g.constant(t);
        let v = g.item(f(&g, xv));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("f(x +/- eps) = {v}")))
        }
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
