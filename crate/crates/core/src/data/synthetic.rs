use std::f64::consts::{PI, TAU};

use super::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{Rng, Tensor};

/// Two interleaved spiral arms labelled `+1` (arm 0) and `-1` (arm 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SpiralsSpec {
    pub points_per_arm: usize,
    pub turns: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SpiralsSpec {
    fn default() -> Self {
        Self {
            points_per_arm: 200,
            turns: 2.0,
            noise: 0.05,
            seed: 0,
        }
    }
}

/// Noise-free point of `arm` at angle parameter `t`; the radius grows
/// linearly from 0 to 1 over `turns` revolutions.
pub fn spiral_point(arm: usize, t: f64, turns: f64) -> [f64; 2] {
    let r = t / (turns * TAU);
    let phase = t + arm as f64 * PI;
    [r * phase.cos(), r * phase.sin()]
}

pub fn gen_spirals(spec: &SpiralsSpec) -> Result<Dataset> {
    if spec.points_per_arm == 0 {
        return Err(Error::InvalidArgument("points_per_arm must be >= 1".into()));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) || !(spec.turns.is_finite() && spec.turns > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid spirals spec {spec:?}")));
    }
    let mut rng = Rng::new(spec.seed);
    let n = 2 * spec.points_per_arm;
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for arm in 0..2 {
        for _ in 0..spec.points_per_arm {
            let t = rng.uniform(0.0, spec.turns * TAU);
            let [px, py] = spiral_point(arm, t, spec.turns);
            x.push(px + spec.noise * rng.normal());
            x.push(py + spec.noise * rng.normal());
            y.push(if arm == 0 { 1.0 } else { -1.0 });
        }
    }
    let mut d = Dataset::new(
        "spirals",
        Tensor::new(vec![n, 2], x)?,
        Tensor::new(vec![n, 1], y)?,
    )?;
    d.feature_names = vec!["x".into(), "y".into()];
    d.target_names = vec!["label".into()];
    Ok(d)
}

/// Scalar regressors that all estimate one constant target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarToySpec {
    pub target: f64,
    pub regressors: usize,
    pub iterations: usize,
    pub lr: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub seed: u64,
}

impl Default for ScalarToySpec {
    fn default() -> Self {
        Self {
            target: -1.5,
            regressors: 6,
            iterations: 30,
            lr: 0.1,
            init_low: -4.0,
            init_high: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarToy {
    /// One sample with a constant unit feature and the target.
    pub dataset: Dataset,
    /// Initial regressor values, uniform in `[init_low, init_high)`.
    pub inits: Vec<f64>,
}

pub fn gen_scalar_toy(spec: &ScalarToySpec) -> Result<ScalarToy> {
    if spec.regressors == 0 || spec.iterations == 0 {
        return Err(Error::InvalidArgument(
            "regressors and iterations must be >= 1".into(),
        ));
    }
    if !(spec.init_low < spec.init_high) || !spec.target.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid scalar toy spec {spec:?}")));
    }
    let mut rng = Rng::new(spec.seed);
    let inits = (0..spec.regressors)
        .map(|_| rng.uniform(spec.init_low, spec.init_high))
        .collect();
    let dataset = Dataset::new(
        "scalar_toy",
        Tensor::new(vec![1, 1], vec![1.0])?,
        Tensor::new(vec![1, 1], vec![spec.target])?,
    )?;
    Ok(ScalarToy { dataset, inits })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_origin_and_reflection() {
        assert_eq!(spiral_point(0, 0.0, 2.0), [0.0, 0.0]);
        for t in [0.3, 2.0, 7.5, 12.0] {
            let a = spiral_point(0, t, 2.0);
            let b = spiral_point(1, t, 2.0);
            assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn spirals_balanced_and_reproducible() {
        let spec = SpiralsSpec::default();
        let d = gen_spirals(&spec).unwrap();
        assert_eq!(d.len(), 400);
        let pos = d.targets.data().iter().filter(|&&v| v > 0.0).count();
        assert_eq!(pos, 200);
        assert_eq!(d, gen_spirals(&spec).unwrap());
        let other = gen_spirals(&SpiralsSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(d.features, other.features);
    }

    #[test]
    fn noiseless_points_lie_on_arms() {
        let spec = SpiralsSpec {
            points_per_arm: 50,
            noise: 0.0,
            ..SpiralsSpec::default()
        };
        let d = gen_spirals(&spec).unwrap();
        for r in 0..d.len() {
            let p = d.features.row(r);
            assert!(p[0].hypot(p[1]) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn scalar_toy_inits_in_range() {
        let toy = gen_scalar_toy(&ScalarToySpec::default()).unwrap();
        assert_eq!(toy.inits.len(), 6);
        assert!(toy.inits.iter().all(|v| (-4.0..1.0).contains(v)));
        assert_eq!(toy.dataset.targets.data(), &[-1.5]);
    }
}
