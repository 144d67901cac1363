//! The protocol `x(t+1) = (I - a(t) L(t)) x(t) + a(t) w_hat(t)`, Monte Carlo
//! estimation of `E V(x(t))` and an exact second-moment recursion.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::disagreement;
use crate::error::{Error, Result};
use crate::gain::GainSchedule;
use crate::graph::WeightedDigraph;
use crate::noise::{NoiseModel, NoiseSampler};
use crate::rng::{replica_seed, StreamSeed};
use crate::topology::TopologyProcess;

/// Replicas per parallel work unit. Partial sums are merged in chunk order,
/// so results do not depend on the thread count.
const CHUNK: usize = 32;

/// One protocol step: `(I - a L(g)) x + a w_hat`.
pub fn step(x: &[f64], g: &WeightedDigraph, a: f64, w_hat: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    step_into(x, g, a, w_hat, &mut out);
    out
}

fn step_into(x: &[f64], g: &WeightedDigraph, a: f64, w_hat: &[f64], out: &mut [f64]) {
    let w = g.weights();
    let n = x.len();
    for i in 0..n {
        let mut flow = 0.0;
        for j in 0..n {
            let aij = w[(i, j)];
            if aij != 0.0 {
                flow += aij * (x[j] - x[i]);
            }
        }
        out[i] = x[i] + a * (flow + w_hat[i]);
    }
}

/// Which times `t` in `1..=horizon` are recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordPlan {
    All,
    Every { stride: usize },
    /// About `per_decade` logarithmically spaced times per factor of ten.
    LogSpaced { per_decade: usize },
    Times { times: Vec<usize> },
}

impl RecordPlan {
    /// Sorted, deduplicated times; `1` and `horizon` are always included.
    pub fn times(&self, horizon: usize) -> Vec<usize> {
        let mut t: Vec<usize> = match self {
            RecordPlan::All => (1..=horizon).collect(),
            RecordPlan::Every { stride } => (1..=horizon).step_by((*stride).max(1)).collect(),
            RecordPlan::LogSpaced { per_decade } => {
                let per = (*per_decade).max(1) as f64;
                let steps = ((horizon as f64).log10() * per).ceil() as usize;
                (0..=steps)
                    .map(|k| 10f64.powf(k as f64 / per).round() as usize)
                    .filter(|&t| t <= horizon)
                    .collect()
            }
            RecordPlan::Times { times } => times.iter().copied().filter(|&t| (1..=horizon).contains(&t)).collect(),
        };
        if horizon >= 1 {
            t.push(1);
            t.push(horizon);
        }
        t.sort_unstable();
        t.dedup();
        t
    }
}

/// Recorded history of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub disagreement: Vec<f64>,
    /// `a(t)` at each recorded time.
    pub gains: Vec<f64>,
    /// Realised graphs `G(1..horizon)`, when kept.
    pub graphs: Option<Vec<WeightedDigraph>>,
}

impl SimulationTrace {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Average of the final state, the run's consensus value.
    pub fn consensus_value(&self) -> f64 {
        let x = self.final_state();
        x.iter().sum::<f64>() / x.len() as f64
    }

    /// CSV with columns `t,x_1..x_n,V,a`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x_{i}");
        }
        out.push_str(",V,a\n");
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(out, "{t}");
            for x in &self.states[k] {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{},{}", self.disagreement[k], self.gains[k]);
        }
        out
    }
}

fn check_dims(process: &TopologyProcess, x1: &[f64], horizon: usize) -> Result<()> {
    if x1.len() != process.n() {
        return Err(Error::InvalidParameter(format!(
            "initial state has {} entries, process has {} nodes",
            x1.len(),
            process.n()
        )));
    }
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if let Some(h) = process.horizon() {
        if horizon > h + 1 {
            return Err(Error::OutOfRange(format!("process covers t <= {h}, horizon {horizon} needs t <= {}", horizon - 1)));
        }
    }
    Ok(())
}

/// Iterates the protocol for one replica, calling `visit(t, x(t))` for every
/// `t` in `1..=horizon` (i.e. `horizon - 1` steps).
fn simulate(
    process: &TopologyProcess,
    gains: &[f64],
    noise: &NoiseModel,
    x1: &[f64],
    horizon: usize,
    replica: StreamSeed,
    mut visit: impl FnMut(usize, &[f64], Option<&WeightedDigraph>),
) -> Result<()> {
    let n = x1.len();
    let mut x = x1.to_vec();
    let mut next = vec![0.0; n];
    let mut w_hat = vec![0.0; n];
    let mut sampler = NoiseSampler::new(noise, replica);
    for t in 1..horizon {
        let g = process.graph_at(t)?;
        visit(t, &x, Some(&g));
        sampler.aggregate_into(&g, t, &mut w_hat);
        step_into(&x, &g, gains[t - 1], &w_hat, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    visit(horizon, &x, None);
    Ok(())
}

/// Runs one replica. `seed` is the root seed; the run uses replica 0 of it.
pub fn run(
    process: &TopologyProcess,
    gains: &GainSchedule,
    noise: &NoiseModel,
    x1: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    run_with(process, gains, noise, x1, horizon, seed, &RecordPlan::All, true)
}

#[allow(clippy::too_many_arguments)]
pub fn run_with(
    process: &TopologyProcess,
    gains: &GainSchedule,
    noise: &NoiseModel,
    x1: &[f64],
    horizon: usize,
    seed: u64,
    plan: &RecordPlan,
    keep_graphs: bool,
) -> Result<SimulationTrace> {
    check_dims(process, x1, horizon)?;
    let a = gains.values(horizon)?;
    let replica = replica_seed(seed, 0);
    let process = process.for_replica(replica.key());
    let times = plan.times(horizon);
    let mut trace = SimulationTrace {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        disagreement: Vec::with_capacity(times.len()),
        gains: Vec::with_capacity(times.len()),
        graphs: keep_graphs.then(Vec::new),
    };
    let mut cursor = 0;
    simulate(&process, &a, noise, x1, horizon, replica, |t, x, g| {
        if let (Some(gs), Some(g)) = (trace.graphs.as_mut(), g) {
            gs.push(g.clone());
        }
        if cursor < times.len() && times[cursor] == t {
            trace.times.push(t);
            trace.states.push(x.to_vec());
            trace.disagreement.push(disagreement(x));
            trace.gains.push(a[t - 1]);
            cursor += 1;
        }
    })?;
    Ok(trace)
}

/// A Monte Carlo experiment over independent replicas.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub process: TopologyProcess,
    pub gains: GainSchedule,
    pub noise: NoiseModel,
    pub x1: Vec<f64>,
    pub horizon: usize,
    pub replicas: usize,
    pub seed: u64,
    pub record: RecordPlan,
}

/// Per-time sample mean and standard error of `V(x(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub times: Vec<usize>,
    pub mean_v: Vec<f64>,
    pub stderr_v: Vec<f64>,
    pub replicas: usize,
    /// `x(horizon)` of every replica, in replica order.
    pub final_states: Vec<Vec<f64>>,
}

impl McSummary {
    /// CSV with columns `t,meanV,stderrV,replicas`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,meanV,stderrV,replicas\n");
        for k in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{},{}", self.times[k], self.mean_v[k], self.stderr_v[k], self.replicas);
        }
        out
    }

    /// `(t, mean V)` pairs.
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.times.iter().map(|&t| t as f64).zip(self.mean_v.iter().copied()).collect()
    }
}

/// Running mean and centred second moment (Welford, merged by Chan's rule).
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1.0;
        for (k, &v) in values.iter().enumerate() {
            let d = v - self.mean[k];
            self.mean[k] += d / self.count;
            self.m2[k] += d * (v - self.mean[k]);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for k in 0..self.mean.len() {
            let d = other.mean[k] - self.mean[k];
            self.mean[k] += d * other.count / total;
            self.m2[k] += other.m2[k] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }
}

/// Estimates `E V(x(t))` from `replicas` independent runs. Replica `r`
/// draws from `replica_seed(seed, r)`; the result is bit-identical for any
/// thread count.
pub fn monte_carlo_v(cfg: &McConfig) -> Result<McSummary> {
    if cfg.replicas < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replicas, got {}", cfg.replicas)));
    }
    check_dims(&cfg.process, &cfg.x1, cfg.horizon)?;
    cfg.noise.validate()?;
    let a = cfg.gains.values(cfg.horizon)?;
    let times = cfg.record.times(cfg.horizon);
    let chunks: Vec<(usize, usize)> =
        (0..cfg.replicas).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(cfg.replicas))).collect();
    let partial: Vec<Result<(Moments, Vec<Vec<f64>>)>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut m = Moments::new(times.len());
            let mut finals = Vec::with_capacity(hi - lo);
            let mut v = vec![0.0; times.len()];
            for r in lo..hi {
                let replica = replica_seed(cfg.seed, r as u64);
                let process = cfg.process.for_replica(replica.key());
                let mut cursor = 0;
                let mut last = Vec::new();
                simulate(&process, &a, &cfg.noise, &cfg.x1, cfg.horizon, replica, |t, x, _| {
                    if cursor < times.len() && times[cursor] == t {
                        v[cursor] = disagreement(x);
                        cursor += 1;
                    }
                    if t == cfg.horizon {
                        last = x.to_vec();
                    }
                })?;
                m.push(&v);
                finals.push(last);
            }
            Ok((m, finals))
        })
        .collect();
    let mut total = Moments::new(times.len());
    let mut final_states = Vec::with_capacity(cfg.replicas);
    for p in partial {
        let (m, f) = p?;
        total.merge(&m);
        final_states.extend(f);
    }
    let r = cfg.replicas as f64;
    let stderr_v = total.m2.iter().map(|m2| (m2.max(0.0) / (r - 1.0) / r).sqrt()).collect();
    Ok(McSummary { times, mean_v: total.mean, stderr_v, replicas: cfg.replicas, final_states })
}

fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

fn update_matrix(g: &WeightedDigraph, a: f64) -> DMatrix<f64> {
    let n = g.n();
    DMatrix::identity(n, n) - g.laplacian() * a
}

/// Exact `E V(x(t))` for `t = 1..=horizon` under a deterministic topology
/// and noise uncorrelated across time:
/// `M(1) = J x1 x1' J`, `M(t+1) = J A_t M(t) A_t' J + a(t)^2 J C_w(t) J`,
/// `E V(x(t)) = tr M(t)`, with `A_t = I - a(t) L(t)` and `J = I - 11'/n`.
pub fn exact_second_moment(
    process: &TopologyProcess,
    gains: &GainSchedule,
    noise: &NoiseModel,
    x1: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    if let crate::noise::NoiseKind::MovingAverage { .. } = noise.kind {
        return Err(Error::UnsupportedNoise("m_dependent_ma"));
    }
    exact_second_moment_with(process, gains, |_, g| noise.aggregate_covariance(g), x1, horizon)
}

/// [`exact_second_moment`] with an arbitrary per-time covariance `C_w(t)`
/// of the aggregate noise.
pub fn exact_second_moment_with(
    process: &TopologyProcess,
    gains: &GainSchedule,
    mut noise_cov: impl FnMut(usize, &WeightedDigraph) -> Result<DMatrix<f64>>,
    x1: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    if !process.is_deterministic() {
        return Err(Error::NonDeterministicProcess);
    }
    check_dims(process, x1, horizon)?;
    let n = x1.len();
    let j = centering(n);
    let xc = &j * DVector::from_column_slice(x1);
    let mut m = &xc * xc.transpose();
    let mut out = Vec::with_capacity(horizon);
    out.push(m.trace());
    for t in 1..horizon {
        let g = process.graph_at(t)?;
        let a = gains.value(t)?;
        let at = &j * update_matrix(&g, a);
        let c = noise_cov(t, &g)?;
        m = &at * &m * at.transpose() + (&j * c * &j) * (a * a);
        out.push(m.trace());
    }
    Ok(out)
}

/// `Phi(t, i) = A_t A_{t-1} ... A_i`, the identity when `i = t + 1`.
pub fn transition_product(process: &TopologyProcess, gains: &GainSchedule, i: usize, t: usize) -> Result<DMatrix<f64>> {
    if i < 1 || i > t + 1 {
        return Err(Error::OutOfRange(format!("need 1 <= i <= t + 1 (got i={i}, t={t})")));
    }
    let n = process.n();
    let mut phi = DMatrix::identity(n, n);
    for s in i..=t {
        phi = update_matrix(&*process.graph_at(s)?, gains.value(s)?) * phi;
    }
    Ok(phi)
}
