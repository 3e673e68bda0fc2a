use super::Tensor;
use crate::error::{Error, Result};

/// Momentum buffers and step counter for [`sgd_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub velocity: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        Self {
            velocity: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One SGD update with coupled weight decay:
///
/// ```text
/// v <- momentum * v + grad + weight_decay * param
/// param <- param - lr * v
/// ```
///
/// All gradients are checked for finiteness before anything is modified.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut OptimState,
    cfg: &SgdConfig,
) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::ShapeMismatch {
            context: "sgd_step (tensor count)",
            expected: vec![params.len()],
            found: vec![grads.len(), state.velocity.len()],
        });
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        g.expect_shape("sgd_step (grad)", p.shape())?;
        v.expect_shape("sgd_step (velocity)", p.shape())?;
        g.ensure_finite("sgd_step gradient")?;
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = cfg.momentum * *vv + gv + cfg.weight_decay * *pv;
            *pv -= cfg.lr * *vv;
        }
    }
    state.step += 1;
    Ok(())
}
