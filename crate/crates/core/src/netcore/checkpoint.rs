//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes   "NCLF"
//! version      u32       FORMAT_VERSION
//! net_count    u32
//! net*:
//!   input_dim  u32
//!   layer_count u32
//!   layer*:
//!     tag      u8        0 = dense, 1 = activation
//!     dense:   in_dim u32, out_dim u32, weights f64[out*in] (row-major), bias f64[out]
//!     activation: kind u8 (0 relu, 1 tanh, 2 identity)
//! aux_len      u32
//! aux          f64[aux_len]
//! step         u64
//! buf_count    u32
//! buf*:        len u32, f64[len]
//! ```
//!
//! Momentum buffers are stored flat; their shapes are recovered from the
//! parameter tensors of the stored networks (in order), and the aux vector
//! for any trailing buffers.

use super::network::{Dense, Layer};
use super::{Activation, Network, OptimState, Tensor};
use crate::error::CheckpointError;

pub const MAGIC: [u8; 4] = *b"NCLF";
pub const FORMAT_VERSION: u32 = 1;

/// A collection of networks plus auxiliary scalars and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<Network>,
    pub aux: Vec<f64>,
    pub state: OptimState,
}

/// Serializes a single network and its optimizer state.
pub fn save(net: &Network, state: &OptimState) -> Vec<u8> {
    Checkpoint {
        networks: vec![net.clone()],
        aux: Vec::new(),
        state: state.clone(),
    }
    .encode()
}

/// Inverse of [`save`].
pub fn load(bytes: &[u8]) -> Result<(Network, OptimState), CheckpointError> {
    let mut ck = Checkpoint::decode(bytes)?;
    if ck.networks.len() != 1 {
        return Err(CheckpointError::Malformed(format!(
            "expected 1 network, found {}",
            ck.networks.len()
        )));
    }
    Ok((ck.networks.remove(0), ck.state))
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.networks.len() as u32);
        for net in &self.networks {
            put_u32(&mut out, net.input_dim() as u32);
            put_u32(&mut out, net.layers().len() as u32);
            for layer in net.layers() {
                match layer {
                    Layer::Dense(d) => {
                        out.push(0);
                        put_u32(&mut out, d.in_dim() as u32);
                        put_u32(&mut out, d.out_dim() as u32);
                        put_f64s(&mut out, d.weights.data());
                        put_f64s(&mut out, d.bias.data());
                    }
                    Layer::Activation(a) => {
                        out.push(1);
                        out.push(match a {
                            Activation::Relu => 0,
                            Activation::Tanh => 1,
                            Activation::Identity => 2,
                        });
                    }
                }
            }
        }
        put_u32(&mut out, self.aux.len() as u32);
        put_f64s(&mut out, &self.aux);
        out.extend_from_slice(&self.state.step.to_le_bytes());
        put_u32(&mut out, self.state.velocity.len() as u32);
        for v in &self.state.velocity {
            put_u32(&mut out, v.len() as u32);
            put_f64s(&mut out, v.data());
        }
        out
    }

    /// Decodes a checkpoint. `extra_shapes` is not needed: buffers whose
    /// length matches a parameter tensor take its shape, others stay 1-D.
    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let net_count = r.u32("network count")? as usize;
        let mut networks = Vec::with_capacity(net_count.min(1024));
        for _ in 0..net_count {
            let input_dim = r.u32("input dim")? as usize;
            if input_dim == 0 {
                return Err(CheckpointError::Malformed("zero input dim".into()));
            }
            let layer_count = r.u32("layer count")? as usize;
            let mut layers = Vec::with_capacity(layer_count.min(1024));
            let mut width = input_dim;
            for _ in 0..layer_count {
                match r.u8("layer tag")? {
                    0 => {
                        let in_dim = r.u32("dense in_dim")? as usize;
                        let out_dim = r.u32("dense out_dim")? as usize;
                        if in_dim != width || out_dim == 0 {
                            return Err(CheckpointError::Malformed(format!(
                                "dense {in_dim}->{out_dim} after width {width}"
                            )));
                        }
                        let w = r.f64s(in_dim * out_dim, "dense weights")?;
                        let b = r.f64s(out_dim, "dense bias")?;
                        layers.push(Layer::Dense(Dense {
                            weights: Tensor::new(vec![out_dim, in_dim], w)
                                .expect("length checked"),
                            bias: Tensor::vector(b),
                        }));
                        width = out_dim;
                    }
                    1 => {
                        let act = match r.u8("activation kind")? {
                            0 => Activation::Relu,
                            1 => Activation::Tanh,
                            2 => Activation::Identity,
                            k => {
                                return Err(CheckpointError::Malformed(format!(
                                    "unknown activation {k}"
                                )))
                            }
                        };
                        layers.push(Layer::Activation(act));
                    }
                    t => return Err(CheckpointError::Malformed(format!("unknown layer tag {t}"))),
                }
            }
            networks.push(Network::from_layers(input_dim, layers));
        }
        let aux_len = r.u32("aux length")? as usize;
        let aux = r.f64s(aux_len, "aux")?;
        let step = u64::from_le_bytes(r.take(8, "step")?.try_into().expect("8 bytes"));
        let buf_count = r.u32("buffer count")? as usize;
        let shapes: Vec<Vec<usize>> = networks.iter().flat_map(|n| n.param_shapes()).collect();
        let mut velocity = Vec::with_capacity(buf_count.min(4096));
        for i in 0..buf_count {
            let len = r.u32("buffer length")? as usize;
            let data = r.f64s(len, "momentum buffer")?;
            let shape = match shapes.get(i) {
                Some(s) if s.iter().product::<usize>() == len => s.clone(),
                _ => vec![len],
            };
            velocity.push(Tensor::new(shape, data).expect("length checked"));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            networks,
            aux,
            state: OptimState { velocity, step },
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated { offset: self.pos, what })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.saturating_mul(8), what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{LayerSpec, Rng};

    fn seeded() -> (Network, OptimState) {
        let specs = [
            LayerSpec::Dense { in_dim: 3, out_dim: 4 },
            LayerSpec::Activation(Activation::Relu),
            LayerSpec::Dense { in_dim: 4, out_dim: 2 },
            LayerSpec::Activation(Activation::Tanh),
        ];
        let net = Network::new(3, &specs, &mut Rng::new(11)).unwrap();
        let mut state = OptimState::new(&net.param_shapes());
        state.step = 17;
        state.velocity[0].data_mut()[2] = -0.125;
        (net, state)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (net, state) = seeded();
        let bytes = save(&net, &state);
        let (net2, state2) = load(&bytes).unwrap();
        let bits = |n: &Network| n.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&net2));
        assert_eq!(net, net2);
        assert_eq!(state, state2);
        assert_eq!(save(&net2, &state2), bytes);
    }

    #[test]
    fn truncated_file_fails() {
        let (net, state) = seeded();
        let bytes = save(&net, &state);
        for cut in [0, 3, 8, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                load(&bytes[..cut]),
                Err(CheckpointError::Truncated { .. })
            ));
        }
    }

    #[test]
    fn version_bump_is_reported() {
        let (net, state) = seeded();
        let mut bytes = save(&net, &state);
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert_eq!(
            load(&bytes).unwrap_err(),
            CheckpointError::VersionMismatch {
                expected: FORMAT_VERSION,
                found: FORMAT_VERSION + 1
            }
        );
    }

    #[test]
    fn bad_magic() {
        let (net, state) = seeded();
        let mut bytes = save(&net, &state);
        bytes[0] = b'X';
        assert!(matches!(load(&bytes), Err(CheckpointError::BadMagic(_))));
    }
}
