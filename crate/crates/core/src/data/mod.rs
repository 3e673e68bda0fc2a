//! Datasets: synthetic generators, CSV ingestion, splits and scaling.

mod csv_io;
mod synthetic;

pub use csv_io::{load_csv, Column};
pub use synthetic::{
    gen_scalar_toy, gen_spirals, spiral_point, ScalarToy, ScalarToySpec, SpiralsSpec,
};

use crate::error::{Error, Result};
use crate::netcore::{Rng, Tensor};

/// Features `N×D` and targets `N×O` with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub targets: Tensor,
    pub name: String,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    /// Validates shapes, finiteness and `N >= 1`; columns get default names.
    pub fn new(name: impl Into<String>, features: Tensor, targets: Tensor) -> Result<Self> {
        if features.shape().len() != 2 || targets.shape().len() != 2 {
            return Err(Error::InvalidArgument("features and targets must be matrices".into()));
        }
        if features.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.rows() != targets.rows() {
            return Err(Error::ShapeMismatch {
                context: "Dataset::new",
                expected: vec![features.rows(), targets.cols()],
                found: targets.shape().to_vec(),
            });
        }
        features.ensure_finite("dataset features")?;
        targets.ensure_finite("dataset targets")?;
        let feature_names = (0..features.cols()).map(|i| format!("x{i}")).collect();
        let target_names = (0..targets.cols()).map(|i| format!("y{i}")).collect();
        Ok(Self {
            features,
            targets,
            name: name.into(),
            feature_names,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.cols()
    }

    /// Rows in the given order. May produce an empty dataset.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            targets: self.targets.select_rows(idx),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self
            .feature_names
            .iter()
            .chain(&self.target_names)
            .cloned()
            .collect::<Vec<_>>()
            .join(",");
        s.push('\n');
        for r in 0..self.len() {
            let row: Vec<String> = self
                .features
                .row(r)
                .iter()
                .chain(self.targets.row(r))
                .map(|v| v.to_string())
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Seeded shuffle split; the test part takes `round(test_fraction · N)` rows.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in [0, 1], got {test_fraction}"
        )));
    }
    let order = Rng::new(seed).permutation(data.len());
    let n_test = (test_fraction * data.len() as f64).round() as usize;
    let (test, train) = order.split_at(n_test);
    Ok((data.subset(train), data.subset(test)))
}

/// Per-column affine standardization fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread get unit scale.
    pub fn fit(x: &Tensor) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_shape("Standardizer::transform", &[x.rows(), self.mean.len()])?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| 2.0 * i as f64).collect();
        Dataset::new(
            "toy",
            Tensor::new(vec![n, 1], x).unwrap(),
            Tensor::new(vec![n, 1], y).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn split_sizes() {
        let d = toy(10);
        let (tr, te) = split(&d, 0.0, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (10, 0));
        let (tr, te) = split(&d, 0.5, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (5, 5));
        assert_eq!(split(&d, 0.5, 1).unwrap(), (tr, te));
    }

    #[test]
    fn split_partitions() {
        let d = toy(37);
        let (tr, te) = split(&d, 0.3, 4).unwrap();
        let mut all: Vec<f64> = tr.features.data().iter().chain(te.features.data()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, d.features.data());
        // rows stay aligned with their targets
        for r in 0..te.len() {
            assert_eq!(te.targets.row(r)[0], 2.0 * te.features.row(r)[0]);
        }
    }

    #[test]
    fn rejects_nan_and_empty() {
        let x = Tensor::new(vec![1, 1], vec![f64::NAN]).unwrap();
        let y = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        assert!(Dataset::new("bad", x, y).is_err());
        let e = Dataset::new("e", Tensor::zeros(&[0, 1]), Tensor::zeros(&[0, 1]));
        assert!(matches!(e, Err(Error::EmptyDataset)));
    }

    #[test]
    fn standardizer_centers() {
        let d = toy(5);
        let s = Standardizer::fit(&d.features);
        let z = s.transform(&d.features).unwrap();
        let mean: f64 = z.data().iter().sum::<f64>() / 5.0;
        let var: f64 = z.data().iter().map(|v| v * v).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
}
