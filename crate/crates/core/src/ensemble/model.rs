use std::ops::Range;

use crate::error::{CheckpointError, Error, Result};
use crate::netcore::checkpoint::Checkpoint;
use crate::netcore::{ActivationTrace, LayerSpec, Network, OptimState, Rng, Tensor};

/// How head outputs are combined into the ensemble prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator {
    Uniform,
    /// Learned per-head weights (length `K`).
    Weighted(Tensor),
}

impl Aggregator {
    pub fn weighted_uniform(k: usize) -> Self {
        Aggregator::Weighted(Tensor::vector(vec![1.0 / k as f64; k]))
    }
}

/// Per-head predictions `K×N×O` and their arithmetic mean `N×O`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub per_head: Tensor,
    pub mean: Tensor,
}

impl HeadOutputs {
    /// Stacks `K` head outputs of shape `N×O`.
    pub fn from_heads(heads: &[Tensor]) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one head required".into()))?;
        let (n, o) = (first.rows(), first.cols());
        let k = heads.len();
        let mut data = Vec::with_capacity(k * n * o);
        for h in heads {
            h.expect_shape("HeadOutputs::from_heads", &[n, o])?;
            data.extend_from_slice(h.data());
        }
        let mut mean = vec![0.0; n * o];
        for h in heads {
            for (m, v) in mean.iter_mut().zip(h.data()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= k as f64;
        }
        Ok(Self {
            per_head: Tensor::new(vec![k, n, o], data)?,
            mean: Tensor::new(vec![n, o], mean)?,
        })
    }

    pub fn k(&self) -> usize {
        self.per_head.shape()[0]
    }

    pub fn samples(&self) -> usize {
        self.per_head.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.per_head.shape()[2]
    }

    /// Flat `N·O` predictions of head `k`.
    pub fn head(&self, k: usize) -> &[f64] {
        let len = self.samples() * self.outputs();
        &self.per_head.data()[k * len..(k + 1) * len]
    }

    /// Predictions as a `K×(N·O)` matrix.
    pub fn as_matrix(&self) -> Tensor {
        let (k, len) = (self.k(), self.samples() * self.outputs());
        Tensor::new(vec![k, len], self.per_head.data().to_vec()).expect("same length")
    }
}

/// Combines head outputs: the mean for `Uniform`, `sum_k w_k G_k` for `Weighted`.
pub fn aggregate(outputs: &HeadOutputs, agg: &Aggregator) -> Result<Tensor> {
    match agg {
        Aggregator::Uniform => Ok(outputs.mean.clone()),
        Aggregator::Weighted(w) => {
            if w.len() != outputs.k() {
                return Err(Error::ShapeMismatch {
                    context: "aggregate (weights)",
                    expected: vec![outputs.k()],
                    found: w.shape().to_vec(),
                });
            }
            let mut out = vec![0.0; outputs.samples() * outputs.outputs()];
            for (k, &wk) in w.data().iter().enumerate() {
                for (o, g) in out.iter_mut().zip(outputs.head(k)) {
                    *o += wk * g;
                }
            }
            Tensor::new(outputs.mean.shape().to_vec(), out)
        }
    }
}

/// Shared trunk with `K` linear heads on disjoint contiguous feature blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct NclEnsemble {
    trunk: Network,
    heads: Vec<Network>,
    lambda: f64,
    aggregator: Aggregator,
}

pub(crate) struct EnsembleTrace {
    pub trunk: ActivationTrace,
    pub heads: Vec<ActivationTrace>,
    pub outputs: HeadOutputs,
}

impl NclEnsemble {
    /// Builds a trunk from `trunk_specs` and `k` dense heads mapping a block
    /// of `F / k` trunk features to `out_dim` outputs.
    pub fn new(
        input_dim: usize,
        trunk_specs: &[LayerSpec],
        k: usize,
        out_dim: usize,
        lambda: f64,
        weighted: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let trunk = Network::new(input_dim, trunk_specs, rng)?;
        let features = trunk.output_dim();
        if k == 0 || !features.is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "trunk width {features} is not divisible by K = {k}"
            )));
        }
        let block = features / k;
        let heads = (0..k)
            .map(|_| {
                Network::new(
                    block,
                    &[LayerSpec::Dense {
                        in_dim: block,
                        out_dim,
                    }],
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let aggregator = if weighted {
            Aggregator::weighted_uniform(k)
        } else {
            Aggregator::Uniform
        };
        Self::from_parts(trunk, heads, lambda, aggregator)
    }

    pub fn from_parts(
        trunk: Network,
        heads: Vec<Network>,
        lambda: f64,
        aggregator: Aggregator,
    ) -> Result<Self> {
        let k = heads.len();
        let features = trunk.output_dim();
        if k == 0 || !features.is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "trunk width {features} is not divisible by K = {k}"
            )));
        }
        let block = features / k;
        let out_dim = heads[0].output_dim();
        for (i, h) in heads.iter().enumerate() {
            if h.input_dim() != block || h.output_dim() != out_dim {
                return Err(Error::InvalidArgument(format!(
                    "head {i} maps {}->{}, expected {block}->{out_dim}",
                    h.input_dim(),
                    h.output_dim()
                )));
            }
        }
        if let Aggregator::Weighted(w) = &aggregator {
            if w.len() != k {
                return Err(Error::ShapeMismatch {
                    context: "NclEnsemble aggregator weights",
                    expected: vec![k],
                    found: w.shape().to_vec(),
                });
            }
        }
        validate_lambda(lambda)?;
        Ok(Self {
            trunk,
            heads,
            lambda,
            aggregator,
        })
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.heads[0].output_dim()
    }

    /// Trunk feature columns read by head `k`.
    pub fn block_range(&self, k: usize) -> Range<usize> {
        let b = self.feature_dim() / self.k();
        k * b..(k + 1) * b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        validate_lambda(lambda)?;
        self.lambda = lambda;
        Ok(())
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn trunk(&self) -> &Network {
        &self.trunk
    }

    pub fn heads(&self) -> &[Network] {
        &self.heads
    }

    /// Head outputs for a batch of inputs.
    pub fn forward(&self, batch: &Tensor) -> Result<HeadOutputs> {
        Ok(self.forward_traced(batch)?.outputs)
    }

    /// Head outputs computed directly from trunk features (`N×F`).
    pub fn heads_from_features(&self, features: &Tensor) -> Result<HeadOutputs> {
        features.expect_shape("heads_from_features", &[features.rows(), self.feature_dim()])?;
        let outs = (0..self.k())
            .map(|k| {
                let r = self.block_range(k);
                self.heads[k].predict(&features.column_block(r.start, r.end))
            })
            .collect::<Result<Vec<_>>>()?;
        HeadOutputs::from_heads(&outs)
    }

    /// Aggregated ensemble prediction `N×O`.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        aggregate(&self.forward(batch)?, &self.aggregator)
    }

    pub(crate) fn forward_traced(&self, batch: &Tensor) -> Result<EnsembleTrace> {
        let trunk = self.trunk.forward(batch)?;
        let features = trunk.output();
        let heads = (0..self.k())
            .map(|k| {
                let r = self.block_range(k);
                self.heads[k].forward(&features.column_block(r.start, r.end))
            })
            .collect::<Result<Vec<_>>>()?;
        let outs: Vec<Tensor> = heads.iter().map(|t| t.output().clone()).collect();
        let outputs = HeadOutputs::from_heads(&outs)?;
        Ok(EnsembleTrace {
            trunk,
            heads,
            outputs,
        })
    }

    /// Backpropagates per-head output gradients (`K×N×O`) through heads and
    /// trunk. The trunk receives the sum of all heads' contributions.
    /// Returns gradients in [`NclEnsemble::params`] order, without the
    /// aggregator entry.
    pub(crate) fn backward(&self, trace: &EnsembleTrace, head_grad: &Tensor) -> Result<Vec<Tensor>> {
        head_grad.expect_shape("NclEnsemble::backward", trace.outputs.per_head.shape())?;
        let (n, o) = (trace.outputs.samples(), trace.outputs.outputs());
        let f = self.feature_dim();
        let mut feature_grad = Tensor::zeros(&[n, f]);
        let mut head_grads = Vec::with_capacity(2 * self.k());
        for (k, (head, htrace)) in self.heads.iter().zip(&trace.heads).enumerate() {
            let slice = &head_grad.data()[k * n * o..(k + 1) * n * o];
            let g = Tensor::new(vec![n, o], slice.to_vec())?;
            let (pg, dx) = head.backward(htrace, &g)?;
            let r = self.block_range(k);
            for row in 0..n {
                feature_grad.row_mut(row)[r.clone()].copy_from_slice(dx.row(row));
            }
            head_grads.extend(pg.0);
        }
        let (trunk_grads, _) = self.trunk.backward(&trace.trunk, &feature_grad)?;
        let mut grads = trunk_grads.0;
        grads.extend(head_grads);
        Ok(grads)
    }

    /// Trunk parameters, then each head's, then aggregator weights if learned.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        for h in &self.heads {
            p.extend(h.params());
        }
        if let Aggregator::Weighted(w) = &self.aggregator {
            p.push(w);
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        for h in &mut self.heads {
            p.extend(h.params_mut());
        }
        if let Aggregator::Weighted(w) = &mut self.aggregator {
            p.push(w);
        }
        p
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|t| t.len()).sum();
        if flat.len() != total {
            return Err(Error::ShapeMismatch {
                context: "NclEnsemble::set_flat_params",
                expected: vec![total],
                found: vec![flat.len()],
            });
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Serializes as networks `[trunk, head_0, ..]` with aux
    /// `[lambda, weighted flag, w_0, ..]`.
    pub fn to_checkpoint(&self, state: &OptimState) -> Vec<u8> {
        let mut networks = vec![self.trunk.clone()];
        networks.extend(self.heads.iter().cloned());
        let mut aux = vec![self.lambda];
        match &self.aggregator {
            Aggregator::Uniform => aux.push(0.0),
            Aggregator::Weighted(w) => {
                aux.push(1.0);
                aux.extend_from_slice(w.data());
            }
        }
        Checkpoint {
            networks,
            aux,
            state: state.clone(),
        }
        .encode()
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, OptimState)> {
        let ck = Checkpoint::decode(bytes)?;
        let malformed = |m: &str| Error::Checkpoint(CheckpointError::Malformed(m.into()));
        if ck.networks.len() < 2 {
            return Err(malformed("ensemble checkpoint needs a trunk and at least one head"));
        }
        let mut nets = ck.networks.into_iter();
        let trunk = nets.next().expect("checked");
        let heads: Vec<Network> = nets.collect();
        let (lambda, flag) = match ck.aux.as_slice() {
            [l, f, ..] => (*l, *f),
            _ => return Err(malformed("missing ensemble aux fields")),
        };
        let aggregator = if flag == 0.0 {
            Aggregator::Uniform
        } else {
            Aggregator::Weighted(Tensor::vector(ck.aux[2..].to_vec()))
        };
        let model = Self::from_parts(trunk, heads, lambda, aggregator)?;
        let mut state = ck.state;
        // Restore shapes of buffers the generic decoder could not place.
        for (v, shape) in state.velocity.iter_mut().zip(model.param_shapes()) {
            if v.shape() != shape.as_slice() && v.len() == shape.iter().product::<usize>() {
                *v = v.clone().reshape(shape)?;
            }
        }
        Ok((model, state))
    }
}

pub(crate) fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && (0.0..1.0).contains(&lambda)) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1), got {lambda}"
        )));
    }
    Ok(())
}
