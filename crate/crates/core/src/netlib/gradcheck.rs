//! Central finite-difference verification of analytic gradients.

use super::{Mode, NetworkGraph, Tensor};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so gradients near zero are
/// compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// A scalar reduction of the network output: returns the loss and dL/doutput.
pub type LossFn<'a> = dyn Fn(&Tensor) -> (f64, Tensor) + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter (or `"input"`) holding the worst element.
    pub worst: Option<String>,
    pub checked: usize,
    pub pass: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Analytic parameter gradients and input gradient for `loss(net(input))`.
pub fn analytic_gradients(
    net: &mut NetworkGraph,
    input: &Tensor,
    loss: &LossFn<'_>,
) -> Result<(Vec<(String, Tensor)>, Tensor)> {
    net.zero_grad();
    let out = net.forward(input, Mode::Train)?;
    let (_, g) = loss(&out);
    let gin = net.backward(&g)?;
    let grads = net.gradients();
    net.zero_grad();
    Ok((grads, gin))
}

/// Compares `analytic` parameter gradients against central differences.
pub fn compare_gradients(
    net: &mut NetworkGraph,
    input: &Tensor,
    loss: &LossFn<'_>,
    analytic: &[(String, Tensor)],
    tol: f64,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        pass: true,
    };
    for (name, grad) in analytic {
        for j in 0..grad.len() {
            let orig = net.param(name).expect("known parameter").value.data()[j];
            let eval = |net: &mut NetworkGraph, v: f64| -> Result<f64> {
                net.param_mut(name).unwrap().value.data_mut()[j] = v;
                Ok(loss(&net.infer(input)?).0)
            };
            let plus = eval(net, orig + FD_STEP)?;
            let minus = eval(net, orig - FD_STEP)?;
            net.param_mut(name).unwrap().value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(grad.data()[j], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(name.clone());
            }
        }
    }
    report.pass = report.max_rel_error < tol;
    Ok(report)
}

/// Finite-difference check of every parameter gradient.
pub fn gradient_check(net: &mut NetworkGraph, input: &Tensor, loss: &LossFn<'_>, tol: f64) -> Result<GradCheckReport> {
    let (analytic, _) = analytic_gradients(net, input, loss)?;
    compare_gradients(net, input, loss, &analytic, tol)
}

/// Finite-difference check of the gradient w.r.t. the input tensor.
pub fn input_gradient_check(
    net: &mut NetworkGraph,
    input: &Tensor,
    loss: &LossFn<'_>,
    tol: f64,
) -> Result<GradCheckReport> {
    let (_, gin) = analytic_gradients(net, input, loss)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        pass: true,
    };
    let mut probe = input.clone();
    for j in 0..input.len() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + FD_STEP;
        let plus = loss(&net.infer(&probe)?).0;
        probe.data_mut()[j] = orig - FD_STEP;
        let minus = loss(&net.infer(&probe)?).0;
        probe.data_mut()[j] = orig;
        let err = relative_error(gin.data()[j], (plus - minus) / (2.0 * FD_STEP));
        report.checked += 1;
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some("input".into());
        }
    }
    report.pass = report.max_rel_error < tol;
    Ok(report)
}

/// `L = Σ wᵢ yᵢ` with fixed pseudo-random weights; a generic probe loss.
pub fn weighted_sum_loss(weights: Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) {
    move |y: &Tensor| {
        let v = y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        (v, weights.clone().reshape(y.shape().to_vec()).expect("probe shape"))
    }
}
