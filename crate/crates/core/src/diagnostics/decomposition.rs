use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Empirical bias-variance-covariance split of the uniform ensemble's
/// squared error, averaged over samples.
///
/// Moments use the population divisor `T`, which makes
/// `bias_sq + variance + covariance == mse_of_mean` an exact identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionReport {
    pub bias_sq: f64,
    pub variance: f64,
    pub covariance: f64,
    pub mse_of_mean: f64,
    pub trials: usize,
    pub heads: usize,
    pub samples: usize,
}

impl DecompositionReport {
    pub fn residual(&self) -> f64 {
        self.bias_sq + self.variance + self.covariance - self.mse_of_mean
    }
}

/// Decomposes predictions `T×K×N` (trial, head, sample) against `N` targets.
///
/// Per sample, with `m_k` the mean of head `k` over trials and `G̃_t` the
/// head mean in trial `t`:
///
/// ```text
/// bias_sq    = ((1/K) Σ_k (m_k − y))²
/// variance   = (1/K²) Σ_k (1/T) Σ_t (G_tk − m_k)²
/// covariance = (1/K²) Σ_k Σ_{j≠k} (1/T) Σ_t (G_tk − m_k)(G_tj − m_j)
/// mse        = (1/T) Σ_t (G̃_t − y)²
/// ```
pub fn bvc_decompose(predictions: &Tensor, targets: &[f64]) -> Result<DecompositionReport> {
    let shape = predictions.shape();
    if shape.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "predictions must be trials x heads x samples, got shape {shape:?}"
        )));
    }
    let (t, k, n) = (shape[0], shape[1], shape[2]);
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 trials to estimate variance, got {t}"
        )));
    }
    if k == 0 || n == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.len() != n {
        return Err(Error::ShapeMismatch {
            context: "bvc_decompose targets",
            expected: vec![n],
            found: vec![targets.len()],
        });
    }
    let g = predictions.data();
    let at = |ti: usize, ki: usize, ni: usize| g[(ti * k + ki) * n + ni];
    let (tf, kf) = (t as f64, k as f64);

    let mut report = DecompositionReport {
        bias_sq: 0.0,
        variance: 0.0,
        covariance: 0.0,
        mse_of_mean: 0.0,
        trials: t,
        heads: k,
        samples: n,
    };
    let mut head_mean = vec![0.0; k];
    for (ni, &y) in targets.iter().enumerate() {
        for (ki, m) in head_mean.iter_mut().enumerate() {
            *m = (0..t).map(|ti| at(ti, ki, ni)).sum::<f64>() / tf;
        }
        let bias = head_mean.iter().map(|m| m - y).sum::<f64>() / kf;

        let mut var = 0.0;
        let mut cov = 0.0;
        let mut mse = 0.0;
        for ti in 0..t {
            let mut dev_sum = 0.0;
            let mut dev_sq = 0.0;
            let mut ens = 0.0;
            for (ki, m) in head_mean.iter().enumerate() {
                let v = at(ti, ki, ni);
                let d = v - m;
                dev_sum += d;
                dev_sq += d * d;
                ens += v;
            }
            var += dev_sq;
            // Σ_k Σ_{j≠k} d_k d_j = (Σ d)² − Σ d²
            cov += dev_sum * dev_sum - dev_sq;
            let e = ens / kf - y;
            mse += e * e;
        }
        report.bias_sq += bias * bias;
        report.variance += var / (tf * kf * kf);
        report.covariance += cov / (tf * kf * kf);
        report.mse_of_mean += mse / tf;
    }
    let nf = n as f64;
    report.bias_sq /= nf;
    report.variance /= nf;
    report.covariance /= nf;
    report.mse_of_mean /= nf;
    Ok(report)
}

/// Ambiguity decomposition for head predictions `K×N`.
///
/// Returns `(lhs, rhs)` with `lhs = mean (G̃ − Y)²` and
/// `rhs = (1/K) Σ_k mean (G_k − Y)² − (1/K) Σ_k mean (G_k − G̃)²`.
pub fn ambiguity_identity(head_preds: &Tensor, targets: &[f64]) -> Result<(f64, f64)> {
    if head_preds.shape().len() != 2 {
        return Err(Error::InvalidArgument("head predictions must be K x N".into()));
    }
    let (k, n) = (head_preds.rows(), head_preds.cols());
    if k == 0 || n == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.len() != n {
        return Err(Error::ShapeMismatch {
            context: "ambiguity_identity targets",
            expected: vec![n],
            found: vec![targets.len()],
        });
    }
    let (kf, nf) = (k as f64, n as f64);
    let mean: Vec<f64> = (0..n)
        .map(|i| (0..k).map(|j| head_preds.get2(j, i)).sum::<f64>() / kf)
        .collect();
    let lhs = mean
        .iter()
        .zip(targets)
        .map(|(m, y)| (m - y) * (m - y))
        .sum::<f64>()
        / nf;
    let mut err = 0.0;
    let mut amb = 0.0;
    for j in 0..k {
        let row = head_preds.row(j);
        err += row.iter().zip(targets).map(|(g, y)| (g - y) * (g - y)).sum::<f64>() / nf;
        amb += row.iter().zip(&mean).map(|(g, m)| (g - m) * (g - m)).sum::<f64>() / nf;
    }
    Ok((lhs, (err - amb) / kf))
}
