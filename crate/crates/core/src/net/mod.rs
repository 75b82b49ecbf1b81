//! One-hidden-layer ReLU value network with hand-written backpropagation.
//!
//! Everything is `f64`. Parameters are plain row-major vectors so gradients
//! and optimizer moments can reuse the same type.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

mod loss;
mod optim;

pub use loss::{clip_global_norm, huber, loss_and_grad, LossConfig, LossKind, Sample};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

/// One value per action.
pub const OUTPUT_DIM: usize = 2;

const SNAPSHOT_MAGIC: &[u8; 4] = b"QNET";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct QNetworkParams {
    input_dim: usize,
    hidden_dim: usize,
    /// `[hidden][input]`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `[OUTPUT_DIM][hidden]`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Output of a forward pass: action values and the post-ReLU hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub q: [f64; OUTPUT_DIM],
    pub hidden: Vec<f64>,
}

impl QNetworkParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; OUTPUT_DIM * hidden_dim],
            b2: vec![0.0; OUTPUT_DIM],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::config("network dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input_dim, hidden_dim);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        p.w1.iter_mut()
            .for_each(|w| *w = rng.gen_range(-bound1..=bound1));
        let bound2 = 1.0 / (hidden_dim as f64).sqrt();
        p.w2.iter_mut()
            .for_each(|w| *w = rng.gen_range(-bound2..=bound2));
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.input_dim == other.input_dim && self.hidden_dim == other.hidden_dim
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.n_params(),
                actual: other.n_params(),
            })
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors().into_iter().flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm over every entry.
    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Forward pass that writes the hidden layer into `hidden` and returns
    /// the action values. No allocation; inputs are assumed well-sized.
    #[inline]
    pub fn forward_into(&self, x: &[f64], hidden: &mut [f64]) -> [f64; OUTPUT_DIM] {
        let d = self.input_dim;
        for (h, (row, b)) in hidden.iter_mut().zip(self.w1.chunks_exact(d).zip(&self.b1)) {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            *h = z.max(0.0);
        }
        let mut q = [0.0; OUTPUT_DIM];
        for (k, (row, b)) in self
            .w2
            .chunks_exact(self.hidden_dim)
            .zip(&self.b2)
            .enumerate()
        {
            q[k] = row
                .iter()
                .zip(hidden.iter())
                .fold(*b, |acc, (w, h)| acc + w * h);
        }
        q
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let mut hidden = vec![0.0; self.hidden_dim];
        let q = self.forward_into(x, &mut hidden);
        Ok(Forward { q, hidden })
    }

    /// Flat little-endian snapshot.
    ///
    /// Layout: `b"QNET"`, `u32` version, `u32` input_dim, `u32` hidden_dim,
    /// `u64` value count, then the values as `f64` in the order w1, b1, w2, b2.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.n_params());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_params() as u64).to_le_bytes());
        for v in self.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("parameter snapshot: {msg}"));
        if bytes.len() < 24 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if u32_at(4) != SNAPSHOT_VERSION {
            return Err(bad("unsupported version"));
        }
        let (input_dim, hidden_dim) = (u32_at(8) as usize, u32_at(12) as usize);
        let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let mut p = Self::zeros(input_dim, hidden_dim);
        if count != p.n_params() || bytes.len() != 24 + 8 * count {
            return Err(bad("value count does not match dimensions"));
        }
        let mut values = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = values.next().unwrap());
        }
        Ok(p)
    }

    /// SHA-256 of the snapshot bytes, hex encoded.
    pub fn hash_hex(&self) -> String {
        hash_snapshots([self])
    }
}

/// Deep copy; the result shares nothing with `src`.
pub fn copy_params(src: &QNetworkParams) -> QNetworkParams {
    src.clone()
}

/// SHA-256 over the concatenated snapshots of several networks.
pub fn hash_snapshots<'a>(nets: impl IntoIterator<Item = &'a QNetworkParams>) -> String {
    let mut hasher = Sha256::new();
    for n in nets {
        hasher.update(n.to_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
