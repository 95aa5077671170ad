//! Deterministic feed-forward MLP policies over flat parameter vectors.
//!
//! Layout is layer-major, weights-then-bias: for every layer the `fan_out x
//! fan_in` weight matrix is stored row-major, followed by `fan_out` biases.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSquash {
    None,
    Tanh,
}

/// Shape and nonlinearity of an MLP policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub output_squash: OutputSquash,
}

impl MlpSpec {
    /// Desk-scale default: two tanh hidden layers of 16 units.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            output_dim,
            hidden_layers: vec![16, 16],
            activation: Activation::Tanh,
            output_squash: OutputSquash::Tanh,
        }
    }

    /// (fan_in, fan_out) per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_layers {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    /// Sum over layers of `(fan_in + 1) * fan_out`.
    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(fi, fo)| (fi + 1) * fo).sum()
    }

    /// Stable 64-bit digest of the network shape, embedded in checkpoint headers.
    pub fn spec_hash(&self) -> u64 {
        let act = match self.activation {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        };
        let squash = match self.output_squash {
            OutputSquash::None => "none",
            OutputSquash::Tanh => "tanh",
        };
        let canon = format!(
            "mlp:{}:{}:{:?}:{}:{}",
            self.input_dim, self.output_dim, self.hidden_layers, act, squash
        );
        let digest = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// A spec paired with parameters satisfying `theta.dim == parameter_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    spec: MlpSpec,
    theta: ParameterVector,
}

impl Policy {
    pub fn new(spec: MlpSpec, theta: ParameterVector) -> Result<Self> {
        if theta.dim() != spec.parameter_count() {
            return Err(Error::DimMismatch {
                expected: spec.parameter_count(),
                got: theta.dim(),
            });
        }
        Ok(Policy { spec, theta })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn theta(&self) -> &ParameterVector {
        &self.theta
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Vec<f64>> {
        forward(&self.spec, self.theta.as_slice(), observation)
    }
}

/// Weights drawn N(0, 1/fan_in), biases zero; deterministic given the rng.
pub fn init_theta(spec: &MlpSpec, rng: &mut SeededRng) -> ParameterVector {
    let mut values = Vec::with_capacity(spec.parameter_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(scale * rng.normal());
        }
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParameterVector::new(values).expect("normal draws are finite")
}

/// Pure forward pass. Allocates its output; see [`MlpRunner`] for the
/// buffer-reusing variant used inside rollouts.
pub fn forward(spec: &MlpSpec, theta: &[f64], observation: &[f64]) -> Result<Vec<f64>> {
    let mut runner = MlpRunner::new(spec, theta)?;
    runner.act(observation).map(|a| a.to_vec())
}

/// Forward-pass evaluator holding scratch buffers for repeated calls.
pub struct MlpRunner<'a> {
    spec: &'a MlpSpec,
    theta: &'a [f64],
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl<'a> MlpRunner<'a> {
    pub fn new(spec: &'a MlpSpec, theta: &'a [f64]) -> Result<Self> {
        if theta.len() != spec.parameter_count() {
            return Err(Error::DimMismatch {
                expected: spec.parameter_count(),
                got: theta.len(),
            });
        }
        let widest = spec
            .layer_dims()
            .iter()
            .map(|&(fi, fo)| fi.max(fo))
            .max()
            .unwrap_or(0);
        Ok(MlpRunner {
            spec,
            theta,
            buf_a: Vec::with_capacity(widest),
            buf_b: Vec::with_capacity(widest),
        })
    }

    pub fn act(&mut self, observation: &[f64]) -> Result<&[f64]> {
        if observation.len() != self.spec.input_dim {
            return Err(Error::DimMismatch {
                expected: self.spec.input_dim,
                got: observation.len(),
            });
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "observation",
            });
        }

        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        self.buf_a.clear();
        self.buf_a.extend_from_slice(observation);

        let mut offset = 0;
        for (layer, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let weights = &self.theta[offset..offset + fan_in * fan_out];
            let biases = &self.theta[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;

            self.buf_b.clear();
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = biases[o];
                for (w, x) in row.iter().zip(self.buf_a.iter()) {
                    acc += w * x;
                }
                let v = if layer < last {
                    match self.spec.activation {
                        Activation::Tanh => acc.tanh(),
                        Activation::Relu => acc.max(0.0),
                    }
                } else {
                    match self.spec.output_squash {
                        OutputSquash::None => acc,
                        OutputSquash::Tanh => acc.tanh(),
                    }
                };
                self.buf_b.push(v);
            }
            std::mem::swap(&mut self.buf_a, &mut self.buf_b);
        }
        Ok(&self.buf_a)
    }
}

const POLICY_MAGIC: &[u8; 4] = b"ESPV";
const POLICY_VERSION: u32 = 1;

/// Write `theta` as little-endian f64s behind a `(magic, version, artifact
/// hash, dim)` header.
pub fn save_theta_raw(path: &Path, artifact_hash: u64, theta: &ParameterVector) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + theta.dim() * 8);
    buf.extend_from_slice(POLICY_MAGIC);
    buf.extend_from_slice(&POLICY_VERSION.to_le_bytes());
    buf.extend_from_slice(&artifact_hash.to_le_bytes());
    buf.extend_from_slice(&(theta.dim() as u64).to_le_bytes());
    for v in theta.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read a theta file back, validating magic, version and artifact hash.
pub fn load_theta_raw(path: &Path, artifact_hash: u64) -> Result<ParameterVector> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..4] != POLICY_MAGIC {
        return Err(Error::PolicyFile("bad magic or truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != POLICY_VERSION {
        return Err(Error::PolicyFile(format!("unsupported version {version}")));
    }
    let hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if hash != artifact_hash {
        return Err(Error::PolicyFile("spec hash mismatch".into()));
    }
    let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + dim * 8 {
        return Err(Error::PolicyFile("dimension mismatch".into()));
    }
    let values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ParameterVector::new(values)
}

/// Spec-validating wrapper around [`save_theta_raw`].
pub fn save_theta(path: &Path, spec: &MlpSpec, theta: &ParameterVector) -> Result<()> {
    if theta.dim() != spec.parameter_count() {
        return Err(Error::DimMismatch {
            expected: spec.parameter_count(),
            got: theta.dim(),
        });
    }
    save_theta_raw(path, spec.spec_hash(), theta)
}

/// Spec-validating wrapper around [`load_theta_raw`].
pub fn load_theta(path: &Path, spec: &MlpSpec) -> Result<ParameterVector> {
    let theta = load_theta_raw(path, spec.spec_hash())?;
    if theta.dim() != spec.parameter_count() {
        return Err(Error::PolicyFile("dimension mismatch".into()));
    }
    Ok(theta)
}
