use super::HeadOutputs;
use crate::error::{Error, Result};
use crate::losses::{batch_loss, LossKind};
use crate::netcore::Tensor;

/// Whether the ensemble mean is differentiated through when computing each
/// head loss's gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanGradient {
    /// `dG̃/dG_k = 1/K` is included, giving cross-head terms.
    #[default]
    Full,
    /// The mean is treated as a constant.
    Detached,
}

/// Per-head losses `L_k` (batch means) and the gradient of `sum_k L_k`
/// with respect to every head output (`K×N×O`).
#[derive(Debug, Clone, PartialEq)]
pub struct NclLoss {
    pub per_head: Vec<f64>,
    pub grad: Tensor,
}

impl NclLoss {
    pub fn total(&self) -> f64 {
        self.per_head.iter().sum()
    }
}

/// `L_k = ½(G_k − Y)² − λ(G_k − G̃)²`, averaged over the batch and summed
/// over output dimensions.
pub fn ncl_loss(outputs: &HeadOutputs, targets: &Tensor, lambda: f64) -> Result<NclLoss> {
    check_inputs(outputs, targets, lambda)?;
    let (k, n, o) = (outputs.k(), outputs.samples(), outputs.outputs());
    let inv_n = 1.0 / n as f64;
    let inv_k = 1.0 / k as f64;
    let g = outputs.per_head.data();
    let mean = outputs.mean.data();
    let y = targets.data();
    let mut per_head = vec![0.0; k];
    let mut grad = vec![0.0; k * n * o];
    for s in 0..n * o {
        for l in 0..k {
            let gl = g[l * n * o + s];
            let err = gl - y[s];
            let dev = gl - mean[s];
            per_head[l] += (0.5 * err * err - lambda * dev * dev) * inv_n;
            // d L_l / d G_l
            grad[l * n * o + s] += (err - 2.0 * lambda * dev * (1.0 - inv_k)) * inv_n;
            // d L_l / d G_j, j != l
            for j in (0..k).filter(|&j| j != l) {
                grad[j * n * o + s] += 2.0 * lambda * dev * inv_k * inv_n;
            }
        }
    }
    Ok(NclLoss {
        per_head,
        grad: Tensor::new(vec![k, n, o], grad)?,
    })
}

/// NCL loss with the accuracy term replaced by `kind` applied to `G_k − Y`.
///
/// For Tukey, residuals of each head are MAD-scaled per output dimension
/// over the batch; the scale is held fixed in the gradient.
pub fn generalized_ncl_loss(
    kind: LossKind,
    outputs: &HeadOutputs,
    targets: &Tensor,
    lambda: f64,
    mode: MeanGradient,
) -> Result<NclLoss> {
    check_inputs(outputs, targets, lambda)?;
    kind.validate()?;
    let (k, n, o) = (outputs.k(), outputs.samples(), outputs.outputs());
    let inv_n = 1.0 / n as f64;
    let inv_k = 1.0 / k as f64;
    let g = outputs.per_head.data();
    let mean = outputs.mean.data();
    let y = targets.data();

    // Accuracy term values and derivatives, laid out like `per_head`.
    let mut acc = vec![0.0; k * n * o];
    let mut dacc = vec![0.0; k * n * o];
    for l in 0..k {
        for c in 0..o {
            let residuals: Vec<f64> = (0..n)
                .map(|i| g[l * n * o + i * o + c] - y[i * o + c])
                .collect();
            let (v, d) = batch_loss(kind, &residuals)?;
            for i in 0..n {
                acc[l * n * o + i * o + c] = v[i];
                dacc[l * n * o + i * o + c] = d[i];
            }
        }
    }

    let mut per_head = vec![0.0; k];
    let mut grad = vec![0.0; k * n * o];
    for s in 0..n * o {
        for l in 0..k {
            let idx = l * n * o + s;
            let dev = g[idx] - mean[s];
            per_head[l] += (acc[idx] - lambda * dev * dev) * inv_n;
            match mode {
                MeanGradient::Full => {
                    grad[idx] += (dacc[idx] - 2.0 * lambda * dev * (1.0 - inv_k)) * inv_n;
                    for j in (0..k).filter(|&j| j != l) {
                        grad[j * n * o + s] += 2.0 * lambda * dev * inv_k * inv_n;
                    }
                }
                MeanGradient::Detached => {
                    grad[idx] += (dacc[idx] - 2.0 * lambda * dev) * inv_n;
                }
            }
        }
    }
    Ok(NclLoss {
        per_head,
        grad: Tensor::new(vec![k, n, o], grad)?,
    })
}

fn check_inputs(outputs: &HeadOutputs, targets: &Tensor, lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    targets.expect_shape("ncl_loss targets", outputs.mean.shape())?;
    if outputs.samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}
