use super::loss::ncl_loss;
use super::HeadOutputs;
use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Gradient descent on `K` free scalar regressors that all predict the same
/// target: `f_i <- f_i − lr · d(Σ_k L_k)/d f_i`.
///
/// Returns `iterations + 1` rows; row 0 holds the initial values.
pub fn scalar_descent(
    inits: &[f64],
    target: f64,
    lr: f64,
    iterations: usize,
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    if inits.is_empty() || iterations == 0 {
        return Err(Error::InvalidArgument(
            "need at least one regressor and one iteration".into(),
        ));
    }
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::InvalidArgument(format!("lr must be > 0, got {lr}")));
    }
    let k = inits.len();
    let y = Tensor::new(vec![1, 1], vec![target])?;
    let mut rows = Vec::with_capacity(iterations + 1);
    let mut current = inits.to_vec();
    rows.push(current.clone());
    for _ in 0..iterations {
        let heads: Vec<Tensor> = current
            .iter()
            .map(|&f| Tensor::new(vec![1, 1], vec![f]).expect("1x1"))
            .collect();
        let outputs = HeadOutputs::from_heads(&heads)?;
        let loss = ncl_loss(&outputs, &y, lambda)?;
        for (f, g) in current.iter_mut().zip(loss.grad.data()) {
            *f -= lr * g;
        }
        debug_assert_eq!(loss.grad.len(), k);
        rows.push(current.clone());
    }
    Ok(rows)
}

/// Mean pairwise absolute distance between regressors in a row.
pub fn mean_pairwise_spread(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            sum += (values[i] - values[j]).abs();
        }
    }
    sum / (k * (k - 1) / 2) as f64
}
