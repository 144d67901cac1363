//! Edge-noise models `w_ji(t)` and the aggregate receiver noise
//! `w_hat_i(t) = sum_j a_ij w_ji(t)`.
//!
//! Every kind has zero mean and per-edge variance exactly `variance`. Noises
//! on distinct edges at the same time are independent. Draws are positioned
//! by `(replica seed, t)` so a run is reproducible regardless of scheduling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::rng::{Domain, StreamSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Zero,
    IidGaussian,
    /// Uniform on `[-h, h]` with `h = sqrt(3 v)`.
    IidUniform,
    /// `w(t) = sum_{k=0}^{m} theta_k eps(t - k)` with i.i.d. Gaussian `eps`,
    /// scaled so that `Var w = v`. Dependence has finite range `m`.
    MovingAverage { theta: Vec<f64> },
    /// `w(t) = sqrt(v) r(t) s(t-1)` with Rademacher `r` and a scale
    /// `s(t-1)` in `{sqrt(3/2), sqrt(1/2)}` chosen by the sign of `r(t-1)`.
    /// Zero conditional mean, uncorrelated, but not independent over time.
    MartingaleDifference,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::Zero => "zero",
            NoiseKind::IidGaussian => "iid_gaussian",
            NoiseKind::IidUniform => "iid_uniform",
            NoiseKind::MovingAverage { .. } => "m_dependent_ma",
            NoiseKind::MartingaleDifference => "martingale_difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Per-edge variance bound `v` (exact for every provided kind).
    #[serde(default)]
    pub variance: f64,
}

/// Constructs and validates a noise model.
pub fn make_noise(kind: NoiseKind, variance: f64) -> Result<NoiseModel> {
    let model = NoiseModel { kind, variance };
    model.validate()?;
    Ok(model)
}

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel { kind: NoiseKind::Zero, variance: 0.0 }
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        make_noise(NoiseKind::IidGaussian, variance)
    }

    pub fn gaussian_std(std: f64) -> Result<Self> {
        make_noise(NoiseKind::IidGaussian, std * std)
    }

    pub fn uniform(variance: f64) -> Result<Self> {
        make_noise(NoiseKind::IidUniform, variance)
    }

    /// Uniform on `[-half_width, half_width]`.
    pub fn uniform_half_width(half_width: f64) -> Result<Self> {
        make_noise(NoiseKind::IidUniform, half_width * half_width / 3.0)
    }

    pub fn moving_average(variance: f64, theta: Vec<f64>) -> Result<Self> {
        make_noise(NoiseKind::MovingAverage { theta }, variance)
    }

    pub fn martingale(variance: f64) -> Result<Self> {
        make_noise(NoiseKind::MartingaleDifference, variance)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            NoiseKind::Zero => Ok(()),
            _ if !(self.variance > 0.0 && self.variance.is_finite()) => Err(Error::InvalidParameter(
                format!("noise variance {} must be positive", self.variance),
            )),
            NoiseKind::MovingAverage { theta } => {
                if theta.is_empty() || theta.iter().any(|x| !x.is_finite()) {
                    Err(Error::InvalidParameter("moving-average weights must be finite and non-empty".into()))
                } else if theta.iter().map(|x| x * x).sum::<f64>() <= 0.0 {
                    Err(Error::InvalidParameter("moving-average weights are all zero".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, NoiseKind::Zero)
    }

    /// Variance of every edge noise (0 for the zero kind).
    pub fn edge_variance(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.variance
        }
    }

    /// Covariance of `w_hat(t)` given the graph: `diag(v sum_j a_ij^2)`.
    /// Only defined for kinds whose noise is uncorrelated across time.
    pub fn aggregate_covariance(&self, g: &WeightedDigraph) -> Result<DMatrix<f64>> {
        if let NoiseKind::MovingAverage { .. } = self.kind {
            return Err(Error::UnsupportedNoise("m_dependent_ma"));
        }
        let v = self.edge_variance();
        let n = g.n();
        let w = g.weights();
        Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                v * w.row(i).iter().map(|a| a * a).sum::<f64>()
            } else {
                0.0
            }
        }))
    }
}

/// Draws aggregate noise for one replica.
#[derive(Debug, Clone)]
pub struct NoiseSampler<'a> {
    model: &'a NoiseModel,
    stream: StreamSeed,
    lag: Vec<Vec<f64>>,
}

impl<'a> NoiseSampler<'a> {
    /// `replica` is the replica's seed; the edge-noise domain is derived from it.
    pub fn new(model: &'a NoiseModel, replica: StreamSeed) -> Self {
        Self { model, stream: replica.domain(Domain::EdgeNoise), lag: Vec::new() }
    }

    /// Writes `w_hat(t)` for graph `g` into `out`.
    pub fn aggregate_into(&mut self, g: &WeightedDigraph, t: usize, out: &mut [f64]) {
        let n = g.n();
        debug_assert_eq!(out.len(), n);
        out.fill(0.0);
        let w = g.weights();
        match &self.model.kind {
            NoiseKind::Zero => {}
            NoiseKind::IidGaussian => {
                let sd = self.model.variance.sqrt();
                let mut rng = self.stream.rng_at(t as u64);
                for (from, to, a) in g.edges() {
                    let _ = from;
                    let z: f64 = rng.sample(StandardNormal);
                    out[to] += a * sd * z;
                }
            }
            NoiseKind::IidUniform => {
                let h = (3.0 * self.model.variance).sqrt();
                let mut rng = self.stream.rng_at(t as u64);
                for (_, to, a) in g.edges() {
                    let u: f64 = rng.random_range(-h..h);
                    out[to] += a * u;
                }
            }
            NoiseKind::MovingAverage { theta } => {
                let norm2: f64 = theta.iter().map(|x| x * x).sum();
                let sd = (self.model.variance / norm2).sqrt();
                self.fill_lags(n, t, theta.len(), |rng| rng.sample::<f64, _>(StandardNormal) * sd);
                for i in 0..n {
                    for j in 0..n {
                        let a = w[(i, j)];
                        if a != 0.0 {
                            let e: f64 = theta.iter().zip(&self.lag).map(|(th, m)| th * m[i * n + j]).sum();
                            out[i] += a * e;
                        }
                    }
                }
            }
            NoiseKind::MartingaleDifference => {
                let sd = self.model.variance.sqrt();
                self.fill_lags(n, t, 2, |rng| if rng.random::<bool>() { 1.0 } else { -1.0 });
                let (now, prev) = (&self.lag[0], &self.lag[1]);
                for i in 0..n {
                    for j in 0..n {
                        let a = w[(i, j)];
                        if a != 0.0 {
                            let k = i * n + j;
                            let scale = if prev[k] > 0.0 { 1.5f64.sqrt() } else { 0.5f64.sqrt() };
                            out[i] += a * sd * now[k] * scale;
                        }
                    }
                }
            }
        }
    }

    /// Fills `lag[k]` with the full `n x n` innovation matrix of time `t - k`.
    fn fill_lags(&mut self, n: usize, t: usize, depth: usize, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) {
        self.lag.resize_with(depth, Vec::new);
        for (k, m) in self.lag.iter_mut().enumerate() {
            let s = (t as u64).wrapping_sub(k as u64);
            let mut rng = self.stream.rng_at(s);
            m.clear();
            m.extend((0..n * n).map(|_| draw(&mut rng)));
        }
    }
}

/// `w_hat(t)` for graph `g` under `model`, drawn from the replica stream `replica`.
pub fn aggregate_noise(g: &WeightedDigraph, model: &NoiseModel, t: usize, replica: StreamSeed) -> Vec<f64> {
    let mut out = vec![0.0; g.n()];
    NoiseSampler::new(model, replica).aggregate_into(g, t, &mut out);
    out
}
