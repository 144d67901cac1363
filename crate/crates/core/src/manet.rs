//! Mobile ad-hoc network application: agents broadcast their states once per
//! period, packets arrive with a distance-dependent probability from the
//! log-normal shadowing model, and mutually connected agents run the noisy
//! consensus update.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::disagreement;
use crate::dynamics::{RecordPlan, SimulationTrace};
use crate::error::{Error, Result};
use crate::gain::GainSchedule;
use crate::graph::WeightedDigraph;
use crate::rng::{replica_seed, Domain, StreamSeed};

/// Free-space path loss in dB for a distance in km and a frequency in MHz.
pub fn fspl(d_km: f64, f_mhz: f64) -> Result<f64> {
    if !(d_km > 0.0) || !(f_mhz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "path loss needs positive distance and frequency (got d={d_km}, f={f_mhz})"
        )));
    }
    Ok(32.45 + 20.0 * d_km.log10() + 20.0 * f_mhz.log10())
}

/// `P = (1 + erf(alpha - beta log10 d)) / 2`. Co-located agents (`d = 0`) receive surely.
pub fn reception_probability(alpha: f64, beta: f64, d_km: f64) -> f64 {
    debug_assert!(d_km >= 0.0);
    0.5 * libm::erfc(beta * d_km.log10() - alpha)
}

/// Largest window diameter `d` for which the connectivity lower bound
/// `c1 exp(-c2 (beta log10 d - alpha_min + 1)^2)` stays above
/// `c1 e^{-U} l^{-u} ln l`:
/// `d = 10^( sqrt(u ln l - ln ln l + U) / (beta sqrt c2) + (alpha_min - 1) / beta )`.
pub fn distance_budget(u: f64, big_u: f64, c2: f64, beta: f64, alpha_min: f64, l: u64) -> Result<f64> {
    if !(u > 0.0 && u < 0.5) || !(big_u > 0.0) || !(c2 > 0.0) || !(beta > 0.0) || l < 2 {
        return Err(Error::InvalidParameter(format!(
            "distance budget needs u in (0, 1/2), U > 0, c2 > 0, beta > 0, l >= 2 (got u={u}, U={big_u}, c2={c2}, beta={beta}, l={l})"
        )));
    }
    let lf = l as f64;
    let radicand = u * lf.ln() - lf.ln().ln() + big_u;
    if radicand < 0.0 {
        return Err(Error::VacuousBudget(radicand));
    }
    Ok(10f64.powf(radicand.sqrt() / (beta * c2.sqrt()) + (alpha_min - 1.0) / beta))
}

/// Link-budget offset `alpha_j = (S_j - 32.4 - 20 log10 f_j - R_th) / (sqrt 2 sigma)`.
pub fn link_alpha(signal_dbm: f64, f_mhz: f64, r_th: f64, shadow_sigma: f64) -> f64 {
    (signal_dbm - 32.4 - 20.0 * f_mhz.log10() - r_th) / (std::f64::consts::SQRT_2 * shadow_sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Per-sender offsets `alpha_j`.
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub shadow_sigma: f64,
}

impl RadioParams {
    /// `beta = 10 sqrt 2 / sigma` with a common offset for all agents.
    pub fn uniform(n: usize, alpha: f64, shadow_sigma: f64) -> Self {
        RadioParams { alpha: vec![alpha; n], beta: 10.0 * std::f64::consts::SQRT_2 / shadow_sigma, shadow_sigma }
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Relative speed `c_v / (t + t0)^b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub c_v: f64,
    pub t0: f64,
    pub b: f64,
}

impl SpeedProfile {
    pub fn at(&self, t: f64) -> f64 {
        if self.c_v == 0.0 {
            0.0
        } else {
            self.c_v / (t + self.t0).powf(self.b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManetScene {
    /// Initial positions in km.
    pub positions0: Vec<[f64; 2]>,
    /// Fixed headings of the relative velocities, in radians.
    pub headings: Vec<f64>,
    pub speed: SpeedProfile,
    /// Common group velocity; it does not change inter-agent distances.
    #[serde(default)]
    pub group_velocity: [f64; 2],
    pub radio: RadioParams,
    pub period: f64,
    pub initial_states: Vec<f64>,
    /// Quantization noise is uniform on `[-h, h]`.
    pub quantization_half_width: f64,
    /// Standard deviation of the Gaussian reception error.
    pub reception_std: f64,
}

impl ManetScene {
    pub fn n(&self) -> usize {
        self.initial_states.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.positions0.len() != n || self.headings.len() != n || self.radio.alpha.len() != n {
            return bad(format!("scene vectors must all have {n} entries"));
        }
        if !(self.radio.beta > 0.0) || !(self.radio.shadow_sigma > 0.0) {
            return bad("radio needs beta > 0 and shadow_sigma > 0".into());
        }
        if !(self.period > 0.0) {
            return bad(format!("period {} must be positive", self.period));
        }
        if !(self.quantization_half_width >= 0.0) || !(self.reception_std >= 0.0) {
            return bad("noise scales must be >= 0".into());
        }
        if !(self.speed.c_v >= 0.0) || !(self.speed.t0 >= 0.0) || self.speed.c_v > 0.0 && !(self.speed.t0 > 0.0) {
            return bad("speed needs c_v >= 0 and t0 > 0".into());
        }
        Ok(())
    }

    fn direction(&self, i: usize) -> [f64; 2] {
        [self.headings[i].cos(), self.headings[i].sin()]
    }

    /// Positions at `lT + tau` given positions at `lT`; speeds are taken at
    /// the round start and held over the round.
    pub fn advance(&self, start: &[[f64; 2]], l: usize, tau: f64) -> Vec<[f64; 2]> {
        let s = self.speed.at(l as f64 * self.period);
        start
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let h = self.direction(i);
                [
                    p[0] + tau * (s * h[0] + self.group_velocity[0]),
                    p[1] + tau * (s * h[1] + self.group_velocity[1]),
                ]
            })
            .collect()
    }

    /// Positions at the start of round `l`.
    pub fn positions_at(&self, l: usize) -> Vec<[f64; 2]> {
        let mut p = self.positions0.clone();
        for m in 0..l {
            p = self.advance(&p, m, self.period);
        }
        p
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Probability that `receiver` gets the packet `sender` broadcasts in round
/// `l`, the distance taken at the broadcast instant `lT + sender T / n`.
pub fn round_reception_probability(
    scene: &ManetScene,
    l: usize,
    start: &[[f64; 2]],
    sender: usize,
    receiver: usize,
) -> f64 {
    let tau = sender as f64 * scene.period / scene.n() as f64;
    let p = scene.advance(start, l, tau);
    reception_probability(scene.radio.alpha[sender], scene.radio.beta, dist(p[sender], p[receiver]))
}

/// Result of one broadcast period.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub states: Vec<f64>,
    /// Mutual-reception graph: undirected, unit weights.
    pub graph: WeightedDigraph,
}

/// One period `[lT, (l+1)T)`. `positions` are the agents' positions at `lT`;
/// `run` is the run's seed stream.
pub fn simulate_round(
    scene: &ManetScene,
    l: usize,
    positions: &[[f64; 2]],
    states: &[f64],
    a_l: f64,
    run: StreamSeed,
) -> Result<RoundOutcome> {
    let n = scene.n();
    let mut received = vec![false; n * n];
    let mut rng = run.domain(Domain::Reception).rng_at(l as u64);
    for sender in 0..n {
        let tau = sender as f64 * scene.period / n as f64;
        let p = scene.advance(positions, l, tau);
        for receiver in 0..n {
            if receiver == sender {
                continue;
            }
            let prob = reception_probability(scene.radio.alpha[sender], scene.radio.beta, dist(p[sender], p[receiver]));
            let u: f64 = rng.random();
            received[receiver * n + sender] = u < prob;
        }
    }
    let mut qrng = run.domain(Domain::Quantization).rng_at(l as u64);
    let h = scene.quantization_half_width;
    let xi: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = qrng.random();
            (2.0 * u - 1.0) * h
        })
        .collect();
    let mut zrng = run.domain(Domain::EdgeNoise).rng_at(l as u64);
    let mut pairs = Vec::new();
    let mut next = states.to_vec();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let z: f64 = zrng.sample(StandardNormal);
            if received[i * n + j] && received[j * n + i] {
                acc += states[j] + xi[j] + scene.reception_std * z - states[i];
                if i < j {
                    pairs.push((i, j));
                }
            }
        }
        next[i] += a_l * acc;
    }
    Ok(RoundOutcome { states: next, graph: WeightedDigraph::undirected_unit(n, pairs)? })
}

/// A recorded MANET run. `trace.times` are round indices `l`, the states are
/// `x^l`, and `trace.gains[k]` is the gain applied in round `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManetRun {
    pub trace: SimulationTrace,
    /// Agent positions at the start of each recorded round.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl ManetRun {
    /// `max_i x_i - min_i x_i` at the last recorded round.
    pub fn final_range(&self) -> f64 {
        state_range(self.trace.final_state())
    }

    /// CSV with columns `l,agent,px,py`, agents numbered from 1.
    pub fn positions_csv(&self) -> String {
        let mut out = String::from("l,agent,px,py\n");
        for (k, l) in self.trace.times.iter().enumerate() {
            for (i, p) in self.positions[k].iter().enumerate() {
                let _ = writeln!(out, "{l},{},{},{}", i + 1, p[0], p[1]);
            }
        }
        out
    }
}

pub fn state_range(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Runs rounds `l = 0..horizon_rounds`; round `l` uses the gain `a(l + 1)`.
/// Records every round.
pub fn run_manet(scene: &ManetScene, gains: &GainSchedule, horizon_rounds: usize, seed: u64) -> Result<ManetRun> {
    run_manet_with(scene, gains, horizon_rounds, seed, &RecordPlan::All, true)
}

/// [`run_manet`] with a record plan over the round indices `0..=horizon_rounds`
/// (plan times are shifted by one: plan time `k` records round `k - 1`).
pub fn run_manet_with(
    scene: &ManetScene,
    gains: &GainSchedule,
    horizon_rounds: usize,
    seed: u64,
    plan: &RecordPlan,
    keep_graphs: bool,
) -> Result<ManetRun> {
    scene.validate()?;
    let a = gains.values(horizon_rounds + 1)?;
    let run = replica_seed(seed, 0);
    let record: Vec<usize> = plan.times(horizon_rounds + 1).into_iter().map(|k| k - 1).collect();
    let mut out = ManetRun {
        trace: SimulationTrace { times: Vec::new(), states: Vec::new(), disagreement: Vec::new(), gains: Vec::new(), graphs: keep_graphs.then(Vec::new) },
        positions: Vec::new(),
    };
    let mut cursor = 0;
    let mut x = scene.initial_states.clone();
    let mut pos = scene.positions0.clone();
    for l in 0..=horizon_rounds {
        if cursor < record.len() && record[cursor] == l {
            out.trace.times.push(l);
            out.trace.disagreement.push(disagreement(&x));
            out.trace.states.push(x.clone());
            out.trace.gains.push(a[l]);
            out.positions.push(pos.clone());
            cursor += 1;
        }
        if l == horizon_rounds {
            break;
        }
        let r = simulate_round(scene, l, &pos, &x, a[l], run)?;
        x = r.states;
        if let Some(g) = out.trace.graphs.as_mut() {
            g.push(r.graph);
        }
        pos = scene.advance(&pos, l, scene.period);
    }
    Ok(out)
}

/// Final states of independent runs with seeds `seed_base, seed_base + 1, ...`.
pub fn final_states_over_seeds(
    scene: &ManetScene,
    gains: &GainSchedule,
    horizon_rounds: usize,
    seeds: std::ops::Range<u64>,
) -> Result<Vec<Vec<f64>>> {
    let plan = RecordPlan::Times { times: vec![] };
    seeds
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&s| run_manet_with(scene, gains, horizon_rounds, s, &plan, false).map(|r| r.trace.final_state().to_vec()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    /// Exponent `b` of the relative speed `1 / (t + 200)^b`.
    pub fn speed_exponent(self) -> f64 {
        match self {
            Figure::Fig2 => 1.0,
            Figure::Fig3 => 0.9,
            Figure::Fig4 => 0.8,
        }
    }
}

/// Nine agents on the upper half of the unit circle moving radially
/// outwards, states `(i - 1)/8`, `alpha = 4`, `beta = 10 sqrt 2`,
/// quantization noise on `[-1/16, 1/16]`, reception noise `N(0, 0.05^2)`
/// and gain `1 / (t + 30)^0.99`.
pub fn scenario_preset(figure: Figure) -> (ManetScene, GainSchedule) {
    let n = 9;
    let angle = |i: usize| i as f64 * std::f64::consts::PI / 8.0;
    let scene = ManetScene {
        positions0: (0..n).map(|i| [angle(i).cos(), angle(i).sin()]).collect(),
        headings: (0..n).map(angle).collect(),
        speed: SpeedProfile { c_v: 1.0, t0: 200.0, b: figure.speed_exponent() },
        group_velocity: [0.0, 0.0],
        radio: RadioParams::uniform(n, 4.0, 1.0),
        period: 1.0,
        initial_states: (0..n).map(|i| i as f64 / 8.0).collect(),
        quantization_half_width: 1.0 / 16.0,
        reception_std: 0.05,
    };
    (scene, GainSchedule::shifted_power(1.0, 30.0, 0.99))
}
