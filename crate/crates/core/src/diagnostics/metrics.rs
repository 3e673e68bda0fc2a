use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
}

/// Mean accuracy `A = 1 − mean |Y − P|` and coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitMetrics {
    pub accuracy: f64,
    /// NaN when the targets are constant; see `r_squared_defined`.
    pub r_squared: f64,
    pub r_squared_defined: bool,
}

fn check_pair(preds: &[f64], targets: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if preds.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "metrics",
            expected: vec![targets.len()],
            found: vec![preds.len()],
        });
    }
    Ok(())
}

pub fn regression_metrics(preds: &[f64], targets: &[f64]) -> Result<RegressionMetrics> {
    check_pair(preds, targets)?;
    let n = preds.len() as f64;
    let (abs, sq) = preds
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(a, s), (p, t)| {
            let e = p - t;
            (a + e.abs(), s + e * e)
        });
    Ok(RegressionMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// Targets must lie in `[0, 1]`.
pub fn trait_metrics(preds: &[f64], targets: &[f64]) -> Result<TraitMetrics> {
    check_pair(preds, targets)?;
    if let Some(bad) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!(
            "trait targets must lie in [0, 1], found {bad}"
        )));
    }
    let n = preds.len() as f64;
    let accuracy = 1.0 - preds.iter().zip(targets).map(|(p, t)| (t - p).abs()).sum::<f64>() / n;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (t - p) * (t - p)).sum();
    let defined = ss_tot > 0.0;
    Ok(TraitMetrics {
        accuracy,
        r_squared: if defined { 1.0 - ss_res / ss_tot } else { f64::NAN },
        r_squared_defined: defined,
    })
}

/// Percentage of samples with absolute error `<= l`.
pub fn cumulative_score(preds: &[f64], targets: &[f64], l: f64) -> Result<f64> {
    check_pair(preds, targets)?;
    let within = preds
        .iter()
        .zip(targets)
        .filter(|(p, t)| (*p - *t).abs() <= l)
        .count();
    Ok(within as f64 / preds.len() as f64 * 100.0)
}

/// Fraction of samples where `sign(pred)` equals `sign(target)` (±1 labels).
pub fn sign_accuracy(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    let hits = preds
        .iter()
        .zip(targets)
        .filter(|(p, t)| (**p >= 0.0) == (**t >= 0.0))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_examples() {
        let m = regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse), (0.0, 0.0));
        let m = regression_metrics(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((m.mae, m.rmse), (1.0, 1.0));
        let m = regression_metrics(&[0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.rmse, 2f64.sqrt());
    }

    #[test]
    fn trait_examples() {
        let m = trait_metrics(&[0.2, 0.9], &[0.2, 0.9]).unwrap();
        assert_eq!((m.accuracy, m.r_squared), (1.0, 1.0));
        let m = trait_metrics(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert_eq!((m.accuracy, m.r_squared), (0.5, 0.0));
        let m = trait_metrics(&[0.1, 0.2], &[0.4, 0.4]).unwrap();
        assert!(!m.r_squared_defined && m.r_squared.is_nan());
        assert!(trait_metrics(&[0.1], &[1.5]).is_err());
    }

    #[test]
    fn cumulative_score_examples() {
        assert_eq!(cumulative_score(&[1.0, 10.0], &[0.0, 0.0], 5.0).unwrap(), 50.0);
        assert_eq!(cumulative_score(&[1.0, 10.0], &[0.0, 0.0], 100.0).unwrap(), 100.0);
        // an error of exactly l counts as within
        assert_eq!(cumulative_score(&[3.0], &[0.0], 3.0).unwrap(), 100.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(cumulative_score(&[], &[], 1.0).is_err());
    }
}
