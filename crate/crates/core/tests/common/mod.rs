//! Independent reference implementations used by the integration tests.
// Written as plain index loops on purpose, independent of the library code.
#![allow(dead_code, clippy::needless_range_loop, clippy::assign_op_pattern)]

use sdqn::game::Action;
use sdqn::net::{LossConfig, LossKind, QNetworkParams, Sample};

/// Forward pass written with explicit index loops.
pub fn forward(p: &QNetworkParams, x: &[f64]) -> [f64; 2] {
    let (d, h) = (p.input_dim(), p.hidden_dim());
    let mut hidden = vec![0.0; h];
    for j in 0..h {
        let mut z = p.b1[j];
        for i in 0..d {
            z = z + p.w1[j * d + i] * x[i];
        }
        hidden[j] = if z > 0.0 { z } else { 0.0 };
    }
    let mut q = [0.0; 2];
    for k in 0..2 {
        let mut z = p.b2[k];
        for j in 0..h {
            z = z + p.w2[k * h + j] * hidden[j];
        }
        q[k] = z;
    }
    q
}

pub fn bits_of(code: usize) -> [f64; 5] {
    let mut x = [0.0; 5];
    for (k, v) in x.iter_mut().enumerate() {
        *v = ((code >> k) & 1) as f64;
    }
    x
}

/// Action values of every unaugmented state, indexed by the packed bits.
pub fn q_table(p: &QNetworkParams) -> Vec<[f64; 2]> {
    (0..32).map(|c| forward(p, &bits_of(c))).collect()
}

/// `Q_target(s', argmax Q_online(s'))` with ties to Cooperate, then the
/// discounted reward sum.
pub fn nstep_oracle(
    rewards: &[f64],
    last_next: usize,
    online: &[[f64; 2]],
    target: &[[f64; 2]],
    gamma: f64,
) -> f64 {
    let o = online[last_next];
    let a = if o[1] > o[0] { 1 } else { 0 };
    let boot = target[last_next][a];
    let mut y = 0.0;
    let mut g = 1.0;
    for &r in rewards {
        y = y + g * r;
        g = g * gamma;
    }
    y + g * boot
}

fn loss_value(p: &QNetworkParams, batch: &[Sample<'_>], cfg: &LossConfig) -> f64 {
    let mut total = 0.0;
    for s in batch {
        let q = forward(p, s.input)[s.action.index()];
        let r = q - s.target;
        total += match cfg.kind {
            LossKind::Mse => r * r,
            LossKind::Huber => {
                if r.abs() <= cfg.delta {
                    0.5 * r * r
                } else {
                    cfg.delta * (r.abs() - 0.5 * cfg.delta)
                }
            }
        };
    }
    total / batch.len() as f64
}

/// Central finite-difference gradient of the mean batch loss.
pub fn fd_gradient(
    p: &QNetworkParams,
    batch: &[Sample<'_>],
    cfg: &LossConfig,
    eps: f64,
) -> Vec<f64> {
    let n = p.n_params();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut plus = p.clone();
        let mut minus = p.clone();
        *nth_param(&mut plus, k) += eps;
        *nth_param(&mut minus, k) -= eps;
        out.push((loss_value(&plus, batch, cfg) - loss_value(&minus, batch, cfg)) / (2.0 * eps));
    }
    out
}

pub fn nth_param(p: &mut QNetworkParams, mut k: usize) -> &mut f64 {
    for t in p.tensors_mut() {
        if k < t.len() {
            return &mut t[k];
        }
        k -= t.len();
    }
    panic!("parameter index out of range")
}

/// Silhouette straight from the definition, two or more clusters.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let dist = |i: usize, j: usize| {
        let mut s = 0.0;
        for k in 0..points[i].len() {
            let d = points[i][k] - points[j][k];
            s += d * d;
        }
        s.sqrt()
    };
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let same = labels.iter().filter(|&&l| l == own).count();
        if same == 1 {
            continue;
        }
        let mean_to = |c: usize| {
            let mut s = 0.0;
            let mut m = 0;
            for j in 0..n {
                if j != i && labels[j] == c {
                    s += dist(i, j);
                    m += 1;
                }
            }
            s / m as f64
        };
        let a = mean_to(own);
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c != own {
                b = b.min(mean_to(c));
            }
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Smallest within-cluster SSE over every split into two nonempty sets.
pub fn best_two_partition_sse(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut best = f64::INFINITY;
    // Point 0 always sits in the first set, which avoids counting each split twice.
    for mask in 0..(1u32 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    ((mask >> (i - 1)) & 1) as usize
                }
            })
            .collect();
        if labels.iter().all(|&l| l == 0) {
            continue;
        }
        let mut sse = 0.0;
        for c in 0..2 {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            let mut mean = vec![0.0; dim];
            for p in &members {
                for k in 0..dim {
                    mean[k] += p[k] / members.len() as f64;
                }
            }
            for p in &members {
                for k in 0..dim {
                    sse += (p[k] - mean[k]) * (p[k] - mean[k]);
                }
            }
        }
        best = best.min(sse);
    }
    best
}

/// Scalar form of the three update rules, one parameter at a time.
pub struct ScalarOpt {
    pub kind: &'static str,
    pub lr: f64,
    pub wd: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub alpha: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl ScalarOpt {
    pub fn new(kind: &'static str, wd: f64, n: usize) -> Self {
        Self {
            kind,
            lr: 1e-4,
            wd,
            b1: 0.9,
            b2: 0.999,
            eps: 1e-8,
            alpha: 0.99,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        for i in 0..p.len() {
            match self.kind {
                "adamw" => {
                    self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g[i];
                    self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g[i] * g[i];
                    let mh = self.m[i] / (1.0 - self.b1.powi(self.t));
                    let vh = self.v[i] / (1.0 - self.b2.powi(self.t));
                    p[i] = p[i] - self.lr * self.wd * p[i] - self.lr * mh / (vh.sqrt() + self.eps);
                }
                "adam" => {
                    let gi = g[i] + self.wd * p[i];
                    self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * gi;
                    self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * gi * gi;
                    let mh = self.m[i] / (1.0 - self.b1.powi(self.t));
                    let vh = self.v[i] / (1.0 - self.b2.powi(self.t));
                    p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
                "rmsprop" => {
                    let gi = g[i] + self.wd * p[i];
                    self.v[i] = self.alpha * self.v[i] + (1.0 - self.alpha) * gi * gi;
                    p[i] -= self.lr * gi / (self.v[i].sqrt() + self.eps);
                }
                other => panic!("unknown optimizer {other}"),
            }
        }
    }
}

pub fn action(bit: bool) -> Action {
    if bit {
        Action::Defect
    } else {
        Action::Cooperate
    }
}
