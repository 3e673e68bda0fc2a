//! Shared-trunk ensemble with negatively correlated heads.

mod dynamics;
mod loss;
mod model;
mod train;

pub use dynamics::{mean_pairwise_spread, scalar_descent};
pub use loss::{generalized_ncl_loss, ncl_loss, MeanGradient, NclLoss};
pub use model::{aggregate, Aggregator, HeadOutputs, NclEnsemble};
pub use train::{
    batch_gradients, evaluate, train, BatchEval, EpochLog, TrainConfig, TrainLog, TrainOutcome,
    LAMBDA_RECOMMENDED,
};
