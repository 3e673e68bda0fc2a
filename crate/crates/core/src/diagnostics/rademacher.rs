//! Monte-Carlo empirical Rademacher complexity for norm-bounded linear heads.
//!
//! For the class `{x -> w·φ(x) : ||w||₂ <= B}` the supremum over the class
//! is attained in closed form, `B·||Σ_i σ_i φ(x_i)||₂`, so only the
//! expectation over the signs σ is sampled.
//!
//! The grouped class averages `K` such heads, head `k` reading the `k`-th
//! contiguous block of features with its own bound `B`. Its supremum is
//! `(B/K)·Σ_k ||Σ_i σ_i φ_k(x_i)||₂`. Both estimators draw the same signs
//! per trial, so their ratio is exact per draw and lies in `[1/K, 1/√K]`.

use crate::error::{Error, Result};
use crate::netcore::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct RademacherEstimate {
    pub value: f64,
    /// Standard error of `value` (sample std / sqrt(trials)).
    pub mc_std: f64,
    pub trials: usize,
    pub samples: usize,
    pub bound: f64,
    /// Number of feature blocks (1 for the ungrouped class).
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRatio {
    pub ratio: f64,
    /// Delta-method standard error of `ratio`.
    pub ratio_mc_std: f64,
    pub full: RademacherEstimate,
    pub group: RademacherEstimate,
}

/// Per-trial suprema: `(full, grouped)` for each sign draw.
fn draws(features: &Tensor, k: usize, bound: f64, trials: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if features.shape().len() != 2 || features.rows() == 0 {
        return Err(Error::InvalidArgument("features must be a non-empty N x F matrix".into()));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!("bound must be > 0, got {bound}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let (n, f) = (features.rows(), features.cols());
    if k == 0 || f % k != 0 {
        return Err(Error::InvalidArgument(format!(
            "feature width {f} is not divisible by K = {k}"
        )));
    }
    let block = f / k;
    let scale = 2.0 * bound / n as f64;
    let mut sum = vec![0.0; f];
    Ok((0..trials)
        .map(|t| {
            let mut rng = Rng::derive(seed, t as u64);
            sum.iter_mut().for_each(|s| *s = 0.0);
            for i in 0..n {
                let sigma = rng.sign();
                for (s, x) in sum.iter_mut().zip(features.row(i)) {
                    *s += sigma * x;
                }
            }
            let block_norms: Vec<f64> = sum
                .chunks(block)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>())
                .collect();
            let full = scale * block_norms.iter().sum::<f64>().sqrt();
            let group = scale * block_norms.iter().map(|v| v.sqrt()).sum::<f64>() / k as f64;
            (full, group)
        })
        .collect())
}

fn summarize(values: impl Iterator<Item = f64>, samples: usize, bound: f64, blocks: usize) -> RademacherEstimate {
    let v: Vec<f64> = values.collect();
    let t = v.len();
    let mean = v.iter().sum::<f64>() / t as f64;
    let mc_std = if t >= 2 {
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1) as f64;
        (var / t as f64).sqrt()
    } else {
        0.0
    };
    RademacherEstimate {
        value: mean,
        mc_std,
        trials: t,
        samples,
        bound,
        blocks,
    }
}

/// `E_σ (2B/N)·||Σ_i σ_i φ(x_i)||₂`, estimated from `trials` sign draws.
pub fn rademacher_linear(features: &Tensor, bound: f64, trials: usize, seed: u64) -> Result<RademacherEstimate> {
    let d = draws(features, 1, bound, trials, seed)?;
    Ok(summarize(d.into_iter().map(|p| p.0), features.rows(), bound, 1))
}

/// Grouped-versus-full complexity ratio over `K` contiguous feature blocks.
pub fn rademacher_group_ratio(
    features: &Tensor,
    k: usize,
    bound: f64,
    trials: usize,
    seed: u64,
) -> Result<GroupRatio> {
    let d = draws(features, k, bound, trials, seed)?;
    let n = features.rows();
    let full = summarize(d.iter().map(|p| p.0), n, bound, 1);
    let group = summarize(d.iter().map(|p| p.1), n, bound, k);
    let (ratio, ratio_mc_std) = if full.value > 0.0 {
        let r = group.value / full.value;
        let t = d.len();
        let ratio_mc_std = if t >= 2 {
            let var = d
                .iter()
                .map(|(f, g)| {
                    let e = g - r * f;
                    e * e
                })
                .sum::<f64>()
                / (t - 1) as f64;
            (var / t as f64).sqrt() / full.value
        } else {
            0.0
        };
        (r, ratio_mc_std)
    } else {
        // Zero features: both classes are trivial.
        (1.0 / k as f64, 0.0)
    };
    Ok(GroupRatio {
        ratio,
        ratio_mc_std,
        full,
        group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_features() {
        let x = Tensor::zeros(&[5, 1]);
        let r = rademacher_linear(&x, 1.0, 100, 0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn single_sample_is_exact() {
        let x = Tensor::from_rows(&[[1.0]]).unwrap();
        let r = rademacher_linear(&x, 1.0, 50, 3).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.mc_std, 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(rademacher_linear(&x, 0.0, 10, 0).is_err());
        assert!(rademacher_linear(&x, 1.0, 0, 0).is_err());
        assert!(rademacher_group_ratio(&x, 2, 1.0, 10, 0).is_err());
    }

    #[test]
    fn k_one_ratio_is_one() {
        let x = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0], [2.0, 1.0]]).unwrap();
        let r = rademacher_group_ratio(&x, 1, 1.0, 200, 9).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }
}
