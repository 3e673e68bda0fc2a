use std::sync::atomic::{AtomicU64, Ordering};

use super::{Rng, Tensor};
use crate::error::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the input `z` and output `y`.
    /// ReLU uses subgradient 0 at `z == 0`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { in_dim: usize, out_dim: usize },
    Activation(Activation),
}

/// Weights are stored `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Activation(Activation),
}

/// Feedforward stack of dense and elementwise activation layers.
///
/// A network with no layers is the identity map on its declared width.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    id: u64,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.layers == other.layers
    }
}

/// Per-layer values recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// `values[0]` is the input batch, `values[i + 1]` the output of layer `i`.
    pub values: Vec<Tensor>,
    network_id: u64,
    version: u64,
}

impl ActivationTrace {
    pub fn output(&self) -> &Tensor {
        self.values.last().expect("trace holds at least the input")
    }

    pub fn into_output(mut self) -> Tensor {
        self.values.pop().expect("trace holds at least the input")
    }
}

/// Gradients aligned with [`Network::params`]: weights then bias for each dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Network {
    /// Builds a network from layer specs, initializing dense layers with
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))` and zero bias.
    pub fn new(input_dim: usize, specs: &[LayerSpec], rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let mut width = input_dim;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            match *spec {
                LayerSpec::Dense { in_dim, out_dim } => {
                    if in_dim != width || out_dim == 0 {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: dense {in_dim}->{out_dim} incompatible with incoming width {width}"
                        )));
                    }
                    let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
                    let weights: Vec<f64> =
                        (0..in_dim * out_dim).map(|_| rng.uniform(-a, a)).collect();
                    layers.push(Layer::Dense(Dense {
                        weights: Tensor::new(vec![out_dim, in_dim], weights)?,
                        bias: Tensor::zeros(&[out_dim]),
                    }));
                    width = out_dim;
                }
                LayerSpec::Activation(act) => layers.push(Layer::Activation(act)),
            }
        }
        Ok(Self::from_layers(input_dim, layers))
    }

    /// Wraps explicit layers. Panics if dense dimensions do not chain.
    pub fn from_layers(input_dim: usize, layers: Vec<Layer>) -> Self {
        let mut width = input_dim;
        for layer in &layers {
            if let Layer::Dense(d) = layer {
                assert_eq!(d.in_dim(), width, "dense layer does not chain");
                assert_eq!(d.bias.len(), d.out_dim(), "bias length != out_dim");
                width = d.out_dim();
            }
        }
        Self {
            layers,
            input_dim,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerSpec::Dense {
                    in_dim: d.in_dim(),
                    out_dim: d.out_dim(),
                },
                Layer::Activation(a) => LayerSpec::Activation(*a),
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.out_dim()),
                Layer::Activation(_) => None,
            })
            .unwrap_or(self.input_dim)
    }

    /// Number of dense layers.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Dense(_)))
            .count()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some([&d.weights, &d.bias]),
                Layer::Activation(_) => None,
            })
            .flatten()
            .collect()
    }

    /// Mutable parameter access; invalidates outstanding traces.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.version += 1;
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some([&mut d.weights, &mut d.bias]),
                Layer::Activation(_) => None,
            })
            .flatten()
            .collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch {
                context: "Network::set_flat_params",
                expected: vec![self.num_params()],
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

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.params().iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    /// Runs the batch `N×D` through every layer and records each output.
    pub fn forward(&self, batch: &Tensor) -> Result<ActivationTrace> {
        if batch.shape().len() != 2 || batch.shape()[1] != self.input_dim {
            return Err(Error::ShapeMismatch {
                context: "Network::forward",
                expected: vec![batch.shape()[0], self.input_dim],
                found: batch.shape().to_vec(),
            });
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(batch.clone());
        for layer in &self.layers {
            let x = values.last().expect("non-empty");
            let y = match layer {
                Layer::Dense(d) => dense_forward(d, x),
                Layer::Activation(act) => {
                    let data = x.data().iter().map(|&z| act.apply(z)).collect();
                    Tensor::new(x.shape().to_vec(), data)?
                }
            };
            values.push(y);
        }
        Ok(ActivationTrace {
            values,
            network_id: self.id,
            version: self.version,
        })
    }

    /// Convenience wrapper returning only the final output.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch)?.into_output())
    }

    /// Backpropagates `output_grad` (`N×O`) through the recorded trace.
    ///
    /// Returns parameter gradients of `sum_n <output_n, output_grad_n>` and the
    /// gradient with respect to the input batch.
    pub fn backward(
        &self,
        trace: &ActivationTrace,
        output_grad: &Tensor,
    ) -> Result<(Gradients, Tensor)> {
        if trace.network_id != self.id || trace.version != self.version {
            return Err(Error::StaleTrace {
                trace: trace.version,
                network: self.version,
            });
        }
        output_grad.expect_shape("Network::backward", trace.output().shape())?;

        let mut grads = Vec::with_capacity(2 * self.depth());
        let mut g = output_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.values[i];
            match layer {
                Layer::Dense(d) => {
                    let (dw, db, dx) = dense_backward(d, input, &g);
                    grads.push(db);
                    grads.push(dw);
                    g = dx;
                }
                Layer::Activation(act) => {
                    let output = &trace.values[i + 1];
                    for ((gv, &z), &y) in g
                        .data_mut()
                        .iter_mut()
                        .zip(input.data())
                        .zip(output.data())
                    {
                        *gv *= act.derivative(z, y);
                    }
                }
            }
        }
        grads.reverse();
        Ok((Gradients(grads), g))
    }
}

fn dense_forward(d: &Dense, x: &Tensor) -> Tensor {
    let (n, din, dout) = (x.rows(), d.in_dim(), d.out_dim());
    let w = d.weights.data();
    let b = d.bias.data();
    let mut out = vec![0.0; n * dout];
    for r in 0..n {
        let xr = x.row(r);
        for o in 0..dout {
            let wr = &w[o * din..(o + 1) * din];
            let mut acc = b[o];
            for (wi, xi) in wr.iter().zip(xr) {
                acc += wi * xi;
            }
            out[r * dout + o] = acc;
        }
    }
    Tensor::new(vec![n, dout], out).expect("consistent dims")
}

fn dense_backward(d: &Dense, x: &Tensor, g: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, din, dout) = (x.rows(), d.in_dim(), d.out_dim());
    let w = d.weights.data();
    let mut dw = vec![0.0; dout * din];
    let mut db = vec![0.0; dout];
    let mut dx = vec![0.0; n * din];
    for r in 0..n {
        let xr = x.row(r);
        let gr = g.row(r);
        let dxr = &mut dx[r * din..(r + 1) * din];
        for o in 0..dout {
            let go = gr[o];
            db[o] += go;
            let wr = &w[o * din..(o + 1) * din];
            let dwr = &mut dw[o * din..(o + 1) * din];
            for i in 0..din {
                dwr[i] += go * xr[i];
                dxr[i] += go * wr[i];
            }
        }
    }
    (
        Tensor::new(vec![dout, din], dw).expect("consistent dims"),
        Tensor::vector(db),
        Tensor::new(vec![n, din], dx).expect("consistent dims"),
    )
}
