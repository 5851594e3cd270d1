use ndarray::{Array2, ArrayView2};

use super::{Gradients, Mlp};
use crate::Result;

/// Central-difference gradient of `loss(net(input))` with respect to every
/// parameter. Uses only forward passes.
pub fn finite_difference_gradients(
    net: &Mlp,
    input: ArrayView2<f64>,
    loss: impl Fn(&Array2<f64>) -> f64,
    h: f64,
) -> Result<Gradients> {
    let mut probe = net.clone();
    let mut grads = net.zero_gradients();
    let eval = |n: &Mlp| -> Result<f64> { Ok(loss(&n.predict(input)?)) };
    for li in 0..net.layers.len() {
        for idx in 0..net.layers[li].weights.len() {
            let (r, c) = (idx / net.layers[li].weights.ncols(), idx % net.layers[li].weights.ncols());
            let orig = net.layers[li].weights[[r, c]];
            probe.layers[li].weights[[r, c]] = orig + h;
            let up = eval(&probe)?;
            probe.layers[li].weights[[r, c]] = orig - h;
            let down = eval(&probe)?;
            probe.layers[li].weights[[r, c]] = orig;
            grads.layers[li].weights[[r, c]] = (up - down) / (2.0 * h);
        }
        for j in 0..net.layers[li].bias.len() {
            let orig = net.layers[li].bias[j];
            probe.layers[li].bias[j] = orig + h;
            let up = eval(&probe)?;
            probe.layers[li].bias[j] = orig - h;
            let down = eval(&probe)?;
            probe.layers[li].bias[j] = orig;
            grads.layers[li].bias[j] = (up - down) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)` over two gradient sets.
///
/// The floor of `1e-6` keeps entries that are zero in both (dead ReLUs) from
/// dominating through round-off.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
