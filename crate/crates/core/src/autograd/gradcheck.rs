//! Central finite-difference gradient checking in 64-bit mode.
//!
//! The numeric side never touches the backward pass: it re-runs the forward
//! closure with perturbed parameters, so it is an independent oracle for the
//! analytic gradients.

use std::collections::BTreeMap;

use crate::autograd::graph::NodeId;
use crate::autograd::optim::{ParameterSet, Session};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Worst element-wise discrepancy found by [`check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub analytic: f64,
    pub numeric: f64,
}

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares analytic gradients of the scalar built by `build` against
/// central finite differences over every element of every parameter.
///
/// The error measure is |a - n| / max(|a|, |n|, 1), i.e. relative for large
/// gradients and absolute near zero.
pub fn check<F>(params: &ParameterSet<f64>, build: F, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Session<'_, f64>) -> Result<NodeId>,
{
    let eval = |p: &ParameterSet<f64>| -> Result<f64> {
        let mut sess = Session::new(p);
        let loss = build(&mut sess)?;
        sess.graph.value(loss).item()
    };

    let analytic = {
        let mut sess = Session::new(params);
        let loss = build(&mut sess)?;
        let value = sess.graph.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::non_finite("gradcheck loss"));
        }
        sess.gradients(loss)?
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        analytic: 0.0,
        numeric: 0.0,
    };
    for (name, tensor) in params.iter() {
        for i in 0..tensor.len() {
            let orig = tensor.data()[i];
            let mut perturbed = params.clone();
            perturbed.get_mut(name)?.data_mut()[i] = orig + step;
            let up = eval(&perturbed)?;
            perturbed.get_mut(name)?.data_mut()[i] = orig - step;
            let down = eval(&perturbed)?;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[name].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = format!("{name}[{i}]");
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Finite differences alone (no analytic comparison); used by a few tests
/// that want the raw numeric gradient.
pub fn numeric_gradient<F>(
    params: &ParameterSet<f64>,
    eval: F,
    step: f64,
) -> Result<BTreeMap<String, Tensor<f64>>>
where
    F: Fn(&ParameterSet<f64>) -> Result<f64>,
{
    let mut out = BTreeMap::new();
    for (name, tensor) in params.iter() {
        let mut grad = Tensor::zeros(tensor.shape());
        for i in 0..tensor.len() {
            let orig = tensor.data()[i];
            let mut perturbed = params.clone();
            perturbed.get_mut(name)?.data_mut()[i] = orig + step;
            let up = eval(&perturbed)?;
            perturbed.get_mut(name)?.data_mut()[i] = orig - step;
            let down = eval(&perturbed)?;
            grad.data_mut()[i] = (up - down) / (2.0 * step);
        }
        out.insert(name.clone(), grad);
    }
    Ok(out)
}
