use std::fmt::Write as _;

use log::warn;

use super::loss::{generalized_ncl_loss, MeanGradient, NclLoss};
use super::model::{aggregate, validate_lambda, Aggregator, NclEnsemble};
use crate::data::Dataset;
use crate::diagnostics::pairwise_diversity;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::netcore::{sgd_step, OptimState, Rng, SgdConfig, Tensor};

/// Range of λ that usually trains well; values outside only trigger a warning.
pub const LAMBDA_RECOMMENDED: (f64, f64) = (1e-3, 1e-2);

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub lambda: f64,
    pub seed: u64,
    /// Accuracy term of the per-head loss.
    pub loss: LossKind,
    pub mean_gradient: MeanGradient,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            sgd: SgdConfig::default(),
            lambda: 5e-3,
            seed: 0,
            loss: LossKind::L2,
            mean_gradient: MeanGradient::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be positive".into(),
            ));
        }
        self.sgd.validate()?;
        self.loss.validate()?;
        validate_lambda(self.lambda)?;
        let (lo, hi) = LAMBDA_RECOMMENDED;
        if self.lambda > 0.0 && !(lo..=hi).contains(&self.lambda) {
            warn!("lambda = {} is outside the usual range [{lo}, {hi}]", self.lambda);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over heads and mini-batches of `L_k`.
    pub mean_head_loss: f64,
    /// Mean squared error of the aggregated prediction on the training set.
    pub ensemble_mse: f64,
    /// Mean pairwise Euclidean distance between head predictions.
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochLog>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,mean_head_loss,ensemble_mse,diversity";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.epoch, r.mean_head_loss, r.ensemble_mse, r.diversity
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainLog,
    pub state: OptimState,
}

/// Loss and gradients for one batch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub ncl: NclLoss,
    /// `mean ½(Σ_k w_k G_k − Y)²` when weights are learned, else 0.
    pub aggregator_loss: f64,
    /// Gradients in [`NclEnsemble::params`] order.
    pub grads: Vec<Tensor>,
}

impl BatchEval {
    pub fn objective(&self) -> f64 {
        self.ncl.total() + self.aggregator_loss
    }
}

/// Evaluates the NCL objective on a batch and backpropagates it through
/// heads and trunk.
///
/// Learned aggregation weights get their own L2 fit of the weighted
/// prediction; that term does not feed back into the heads.
pub fn batch_gradients(
    model: &NclEnsemble,
    x: &Tensor,
    y: &Tensor,
    kind: LossKind,
    lambda: f64,
    mode: MeanGradient,
) -> Result<BatchEval> {
    let trace = model.forward_traced(x)?;
    let ncl = generalized_ncl_loss(kind, &trace.outputs, y, lambda, mode)?;
    let mut grads = model.backward(&trace, &ncl.grad)?;
    let mut aggregator_loss = 0.0;
    if let Aggregator::Weighted(w) = model.aggregator() {
        let pred = aggregate(&trace.outputs, model.aggregator())?;
        let n = trace.outputs.samples() as f64;
        let resid: Vec<f64> = pred.data().iter().zip(y.data()).map(|(p, t)| p - t).collect();
        aggregator_loss = resid.iter().map(|r| 0.5 * r * r).sum::<f64>() / n;
        let gw = (0..w.len())
            .map(|k| {
                trace
                    .outputs
                    .head(k)
                    .iter()
                    .zip(&resid)
                    .map(|(g, r)| g * r)
                    .sum::<f64>()
                    / n
            })
            .collect();
        grads.push(Tensor::vector(gw));
    }
    Ok(BatchEval {
        ncl,
        aggregator_loss,
        grads,
    })
}

/// Mean squared error of the aggregated prediction and mean pairwise head
/// distance over the whole dataset.
pub fn evaluate(model: &NclEnsemble, data: &Dataset) -> Result<(f64, f64)> {
    let outputs = model.forward(&data.features)?;
    let pred = aggregate(&outputs, model.aggregator())?;
    let mse = pred
        .data()
        .iter()
        .zip(data.targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    let diversity = if outputs.k() >= 2 {
        pairwise_diversity(&outputs.as_matrix())?.mean_pairwise()
    } else {
        0.0
    };
    Ok((mse, diversity))
}

/// Mini-batch momentum SGD on the NCL objective.
///
/// Batches are drawn from a seeded permutation each epoch. On a non-finite
/// loss, gradient or parameter the run stops with [`Error::Diverged`],
/// carrying a checkpoint of the last finite parameters.
pub fn train(model: &mut NclEnsemble, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.features
        .expect_shape("train features", &[data.len(), model.input_dim()])?;
    data.targets
        .expect_shape("train targets", &[data.len(), model.out_dim()])?;
    model.set_lambda(cfg.lambda)?;

    let mut state = OptimState::new(&model.param_shapes());
    let mut rng = Rng::new(cfg.seed);
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(data.len());
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.features.select_rows(idx);
            let y = data.targets.select_rows(idx);
            let eval = batch_gradients(model, &x, &y, cfg.loss, cfg.lambda, cfg.mean_gradient)?;
            let diverged = |what| Error::Diverged {
                epoch,
                step,
                what,
                checkpoint: model.to_checkpoint(&state),
            };
            if !eval.objective().is_finite() {
                return Err(diverged("loss"));
            }
            if eval.grads.iter().any(|g| g.first_non_finite().is_some()) {
                return Err(diverged("gradient"));
            }
            let snapshot = model.flat_params();
            let snapshot_state = state.clone();
            sgd_step(&mut model.params_mut(), &eval.grads, &mut state, &cfg.sgd)?;
            if model.params().iter().any(|p| p.first_non_finite().is_some()) {
                model.set_flat_params(&snapshot)?;
                state = snapshot_state;
                return Err(Error::Diverged {
                    epoch,
                    step,
                    what: "parameter",
                    checkpoint: model.to_checkpoint(&state),
                });
            }
            loss_sum += eval.ncl.total() / model.k() as f64;
            batches += 1;
        }
        let (ensemble_mse, diversity) = evaluate(model, data)?;
        log.rows.push(EpochLog {
            epoch,
            mean_head_loss: loss_sum / batches as f64,
            ensemble_mse,
            diversity,
        });
    }
    Ok(TrainOutcome { log, state })
}
