use ndarray::{Array2, ArrayView2};

use super::mlp::Mlp;
use super::NnError;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(layer, is_bias, flat index)` of the worst parameter; `None` when the
    /// worst entry is an input gradient.
    pub worst: Option<(usize, bool, usize)>,
    pub checked: usize,
    pub tol: f64,
    pub passed: bool,
}

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Checks every parameter and input gradient of `loss_fn ∘ net` at `x`.
///
/// `loss_fn` maps network outputs to `(loss, dLoss/dOutput)`.
pub fn grad_check<F>(net: &Mlp, loss_fn: F, x: ArrayView2<f64>, tol: f64) -> Result<GradCheckReport, NnError>
where
    F: Fn(ArrayView2<f64>) -> (f64, Array2<f64>),
{
    let trace = net.forward_trace(x)?;
    let (_, upstream) = loss_fn(trace.output().view());
    let grads = net.backward(&trace, upstream.view())?;

    let eval = |candidate: &Mlp, input: ArrayView2<f64>| -> Result<f64, NnError> {
        let out = candidate.forward(input)?;
        Ok(loss_fn(out.view()).0)
    };

    let mut max_rel = 0.0_f64;
    let mut worst = None;
    let mut checked = 0;
    let mut probe = net.clone();
    for li in 0..net.layers().len() {
        for is_bias in [false, true] {
            let len = if is_bias { net.layers()[li].bias.len() } else { net.layers()[li].weights.len() };
            for k in 0..len {
                let original = param(net, li, is_bias, k);
                *param_mut(&mut probe, li, is_bias, k) = original + STEP;
                let up = eval(&probe, x)?;
                *param_mut(&mut probe, li, is_bias, k) = original - STEP;
                let down = eval(&probe, x)?;
                *param_mut(&mut probe, li, is_bias, k) = original;
                let numeric = (up - down) / (2.0 * STEP);
                let analytic = if is_bias {
                    grads.layers[li].bias[k]
                } else {
                    grads.layers[li].weights.iter().nth(k).copied().expect("index in range")
                };
                let e = rel_error(analytic, numeric);
                checked += 1;
                if e > max_rel {
                    max_rel = e;
                    worst = Some((li, is_bias, k));
                }
            }
        }
    }

    let mut xp = x.to_owned();
    for idx in 0..xp.len() {
        let (r, c) = (idx / xp.ncols(), idx % xp.ncols());
        let original = xp[[r, c]];
        xp[[r, c]] = original + STEP;
        let up = eval(net, xp.view())?;
        xp[[r, c]] = original - STEP;
        let down = eval(net, xp.view())?;
        xp[[r, c]] = original;
        let e = rel_error(grads.input[[r, c]], (up - down) / (2.0 * STEP));
        checked += 1;
        if e > max_rel {
            max_rel = e;
            worst = None;
        }
    }

    Ok(GradCheckReport { max_rel_error: max_rel, worst, checked, tol, passed: max_rel <= tol })
}

fn param(net: &Mlp, layer: usize, is_bias: bool, k: usize) -> f64 {
    let l = &net.layers()[layer];
    if is_bias {
        l.bias[k]
    } else {
        *l.weights.iter().nth(k).expect("index in range")
    }
}

fn param_mut(net: &mut Mlp, layer: usize, is_bias: bool, k: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if is_bias {
        &mut l.bias[k]
    } else {
        l.weights.iter_mut().nth(k).expect("index in range")
    }
}
