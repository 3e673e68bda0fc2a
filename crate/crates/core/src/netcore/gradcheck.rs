use super::{Network, Tensor};
use crate::error::Result;

pub const FD_EPSILON: f64 = 1e-6;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central finite differences of `f` at `x`, perturbing one coordinate at a time.
pub fn numeric_gradient(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Compares backprop gradients of `loss(forward(net, batch))` with central
/// differences (eps = 1e-6) over every parameter.
///
/// `loss` maps the network output to `(value, d value / d output)`.
pub fn grad_check(
    net: &Network,
    batch: &Tensor,
    loss: impl Fn(&Tensor) -> (f64, Tensor),
) -> Result<f64> {
    let trace = net.forward(batch)?;
    let (_, out_grad) = loss(trace.output());
    let (grads, _) = net.backward(&trace, &out_grad)?;
    let analytic: Vec<f64> = grads.0.iter().flat_map(|t| t.data().iter().copied()).collect();

    let mut probe = net.clone();
    let mut failure = None;
    let numeric = numeric_gradient(&net.flat_params(), FD_EPSILON, |p| {
        probe.set_flat_params(p).expect("same parameter count");
        match probe.predict(batch) {
            Ok(out) => loss(&out).0,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 3.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn numeric_gradient_of_quadratic() {
        let g = numeric_gradient(&[1.0, -2.0], 1e-6, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }
}
