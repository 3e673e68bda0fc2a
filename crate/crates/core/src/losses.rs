//! Pointwise regression losses: L2, SmoothL1 with a threshold, and Tukey's
//! biweight on MAD-scaled residuals.

use crate::error::{Error, Result};

/// Tukey tuning constant (about 95% asymptotic efficiency under normal residuals).
pub const TUKEY_C: f64 = 4.6851;
/// Consistency factor turning the MAD into a standard-deviation estimate.
pub const MAD_CONSISTENCY: f64 = 1.4826;
/// Below this MAD the residuals are passed through unscaled.
pub const MAD_DEGENERATE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    L2,
    SmoothL1 { threshold: f64 },
    Tukey { c: f64 },
}

impl LossKind {
    pub fn smooth_l1() -> Self {
        LossKind::SmoothL1 { threshold: 1.0 }
    }

    pub fn tukey() -> Self {
        LossKind::Tukey { c: TUKEY_C }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::L2 => Ok(()),
            LossKind::SmoothL1 { threshold } if threshold.is_finite() && threshold > 0.0 => Ok(()),
            LossKind::Tukey { c } if c.is_finite() && c > 0.0 => Ok(()),
            other => Err(Error::InvalidArgument(format!(
                "loss parameter must be finite and > 0: {other:?}"
            ))),
        }
    }

    /// Whether residuals must be MAD-scaled before [`pointwise_loss`].
    pub fn needs_scaling(&self) -> bool {
        matches!(self, LossKind::Tukey { .. })
    }
}

/// Loss value and derivative with respect to the residual.
///
/// For Tukey the residual is expected to be MAD-scaled already. A NaN
/// residual yields `(NaN, NaN)` for every kind; infinite residuals follow
/// each branch's limit (Tukey saturates, SmoothL1 and L2 grow without bound).
pub fn pointwise_loss(kind: LossKind, r: f64) -> (f64, f64) {
    if r.is_nan() {
        return (f64::NAN, f64::NAN);
    }
    match kind {
        LossKind::L2 => (0.5 * r * r, r),
        LossKind::SmoothL1 { threshold: t } => {
            if r.abs() < t {
                (0.5 * r * r / t, r / t)
            } else {
                (r.abs() - 0.5 * t, r.signum())
            }
        }
        LossKind::Tukey { c } => {
            let cap = c * c / 6.0;
            if r.abs() <= c {
                let u = 1.0 - (r / c) * (r / c);
                (cap * (1.0 - u * u * u), r * u * u)
            } else {
                (cap, 0.0)
            }
        }
    }
}

/// Residuals with their MAD-based scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledResiduals {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub mad: f64,
    /// Divisor applied to `raw`: `1.4826 * mad`, or 1 when degenerate.
    pub scale: f64,
    pub degenerate: bool,
}

/// Median with the even-length convention of averaging the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `mad = median |r_i - median(r)|`, `scaled = r / (1.4826 mad)`.
pub fn mad_scale(residuals: &[f64]) -> Result<ScaledResiduals> {
    let center = median(residuals)
        .ok_or_else(|| Error::InvalidArgument("mad_scale needs at least one residual".into()))?;
    let deviations: Vec<f64> = residuals.iter().map(|r| (r - center).abs()).collect();
    let mad = median(&deviations).expect("non-empty");
    let degenerate = !(mad >= MAD_DEGENERATE);
    let scale = if degenerate { 1.0 } else { MAD_CONSISTENCY * mad };
    Ok(ScaledResiduals {
        raw: residuals.to_vec(),
        scaled: residuals.iter().map(|r| r / scale).collect(),
        mad,
        scale,
        degenerate,
    })
}

/// Applies [`mad_scale`] independently to every column of a row-major `n × cols` array.
pub fn mad_scale_columns(residuals: &[f64], cols: usize) -> Result<Vec<ScaledResiduals>> {
    if cols == 0 || !residuals.len().is_multiple_of(cols) {
        return Err(Error::InvalidArgument(format!(
            "{} residuals do not form rows of {cols}",
            residuals.len()
        )));
    }
    (0..cols)
        .map(|c| {
            let column: Vec<f64> = residuals.iter().skip(c).step_by(cols).copied().collect();
            mad_scale(&column)
        })
        .collect()
}

/// Loss values and derivatives with respect to the raw residuals.
///
/// For Tukey the scale is computed from this batch of residuals and held
/// fixed when differentiating, so `d/dr = psi(r / s) / s`.
pub fn batch_loss(kind: LossKind, residuals: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = if kind.needs_scaling() {
        mad_scale(residuals)?.scale
    } else {
        1.0
    };
    Ok(residuals
        .iter()
        .map(|&r| {
            let (v, d) = pointwise_loss(kind, r / scale);
            (v, d / scale)
        })
        .unzip())
}
