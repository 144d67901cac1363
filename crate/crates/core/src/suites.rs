//! Randomized verification suites for the contraction bound, the product
//! bounds, the lower contraction bound, the shared eigenbasis and the
//! doubly-stochastic update matrices.
//!
//! Case `k` of a suite draws from its own stream, so a suite's outcome is a
//! pure function of `(seed, cases)` and cases run in parallel.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{lemma1_check, lemma4_bounds, lemma6_check, CHECK_TOL};
use crate::error::Result;
use crate::gain::GainSchedule;
use crate::graph::{complete_graph, pair_graph, proposition1_basis, WeightedDigraph};
use crate::rng::{Domain, StreamSeed};
use crate::topology::{schedule_times, TopologyProcess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Lemma4,
    Lemma6,
    Proposition1,
    DoublyStochastic,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Lemma4, Suite::Lemma6, Suite::Proposition1, Suite::DoublyStochastic];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma4 => "lemma4",
            Suite::Lemma6 => "lemma6",
            Suite::Proposition1 => "proposition1",
            Suite::DoublyStochastic => "doubly_stochastic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub suite: Suite,
    pub cases: usize,
    pub failures: usize,
    /// Description of the first failing case, if any.
    pub first_failure: Option<String>,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

/// Either `Ok(None)` for a passing case or `Ok(Some(description))`.
type CaseResult = Result<Option<String>>;

pub fn run_suite(suite: Suite, cases: usize, seed: u64) -> Result<SuiteOutcome> {
    let base = StreamSeed::new(seed).domain(Domain::Suite).child(suite as u64);
    let results: Vec<CaseResult> = (0..cases)
        .into_par_iter()
        .map(|k| {
            let mut rng = base.rng_at(k as u64);
            match suite {
                Suite::Lemma1 => lemma1_case(&mut rng),
                Suite::Lemma4 => lemma4_case(&mut rng),
                Suite::Lemma6 => lemma6_case(&mut rng),
                Suite::Proposition1 => proposition1_case(&mut rng),
                Suite::DoublyStochastic => doubly_stochastic_case(&mut rng),
            }
        })
        .collect();
    let mut out = SuiteOutcome { suite, cases, failures: 0, first_failure: None };
    for (k, r) in results.into_iter().enumerate() {
        if let Some(msg) = r? {
            out.failures += 1;
            out.first_failure.get_or_insert_with(|| format!("case {k}: {msg}"));
        }
    }
    Ok(out)
}

pub fn run_all(cases: usize, seed: u64) -> Result<Vec<SuiteOutcome>> {
    Suite::ALL.iter().map(|&s| run_suite(s, cases, seed)).collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random connected undirected graph with weights in `[1, a_max]`, as a
/// list of `(i, j, w)` undirected edges.
fn random_connected_edges(rng: &mut ChaCha8Rng, n: usize, a_max: f64) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    let mut present = vec![false; n * n];
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        present[parent * n + child] = true;
        present[child * n + parent] = true;
        edges.push((parent, child, rng.random_range(1.0..=a_max)));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j && !present[i * n + j] {
            present[i * n + j] = true;
            present[j * n + i] = true;
            edges.push((i, j, rng.random_range(1.0..=a_max)));
        }
    }
    edges
}

fn lemma1_case(rng: &mut ChaCha8Rng) -> CaseResult {
    let n = rng.random_range(3..=6);
    let a_max = rng.random_range(1.0..3.0);
    let edges = random_connected_edges(rng, n, a_max);
    let m = rng.random_range(1..=edges.len().min(4));
    let mut buckets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); m];
    for (k, e) in edges.into_iter().enumerate() {
        let b = if k < m { k } else { rng.random_range(0..m) };
        buckets[b].push(e);
    }
    let components = buckets
        .into_iter()
        .map(|b| WeightedDigraph::from_edges(n, a_max, b.into_iter().flat_map(|(i, j, w)| [(i, j, w), (j, i, w)])))
        .collect::<Result<Vec<_>>>()?;
    let delta = rng.random_range(0.0..0.5);
    let c = [1.0, 2.0, 3.0][rng.random_range(0..3)];
    let horizon = rng.random_range(30..300);
    let process = TopologyProcess::extensible_block(components, delta, c, horizon)?;
    let trace = process.trace(horizon)?;
    let d_bound = (n - 1) as f64 * a_max;
    let theta = rng.random_range(0.05..0.95);
    let gains = GainSchedule::power(2.0 * theta / d_bound, 1, rng.random_range(0.5..=1.0)).values(horizon)?;
    let schedule = schedule_times(delta, c, horizon)?;
    let last = schedule.last();
    if last < 2 {
        return Ok(None);
    }
    let t = rng.random_range(1..last);
    let i = rng.random_range(1..=t);
    let z = normal_vec(rng, n);
    let chk = lemma1_check(&trace, &gains, &schedule, i, t, &z)?;
    Ok((!chk.holds).then(|| format!("n={n} delta={delta} c={c} i={i} t={t}: lhs={} rhs={}", chk.lhs, chk.rhs)))
}

fn lemma4_case(rng: &mut ChaCha8Rng) -> CaseResult {
    // Redraw until every factor lies in (0, 1).
    for _ in 0..1000 {
        let delta = match rng.random_range(0..4) {
            0 => 0.0,
            1 => 0.5,
            _ => rng.random_range(0.0..0.5),
        };
        let c = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
        let horizon = rng.random_range(10..3000);
        let s = schedule_times(delta, c, horizon)?;
        if s.times.len() < 3 {
            continue;
        }
        let t = rng.random_range(1..s.last());
        let i = rng.random_range(1..=t);
        let c1 = match rng.random_range(0..3) {
            0 => rng.random_range(0.01..1.0),
            1 => rng.random_range(1.0..5.0),
            _ => 4.0 * c,
        };
        let t_star = [0u64, 1, 5, 50, 1000][rng.random_range(0..5)];
        match lemma4_bounds(&s, c1, t_star, delta, i, t) {
            Ok(b) => {
                return Ok((!(b.power_holds() && b.log_holds())).then(|| {
                    format!(
                        "delta={delta} c={c} c1={c1} t*={t_star} i={i} t={t}: {} < {}, {} < {}",
                        b.lhs_product, b.rhs_power, b.lhs_log_product, b.rhs_log_power
                    )
                }))
            }
            Err(crate::error::Error::FactorOutOfRange { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(Some("no admissible parameters drawn".into()))
}

fn random_digraph(rng: &mut ChaCha8Rng, n: usize, a_max: f64) -> Result<WeightedDigraph> {
    let p = rng.random_range(0.1..1.0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(1.0..=a_max)));
            }
        }
    }
    WeightedDigraph::from_edges(n, a_max, edges)
}

fn lemma6_case(rng: &mut ChaCha8Rng) -> CaseResult {
    let n = rng.random_range(2..=8);
    let a_max = rng.random_range(1.0..4.0);
    let g = random_digraph(rng, n, a_max)?;
    let a = 10f64.powf(rng.random_range(-3.0..1.0));
    let x = normal_vec(rng, n);
    let chk = lemma6_check(&g, a, &x)?;
    Ok((!chk.holds).then(|| format!("n={n} a={a}: lhs={} rhs={}", chk.lhs, chk.rhs)))
}

fn proposition1_case(rng: &mut ChaCha8Rng) -> CaseResult {
    let n = rng.random_range(2..=50);
    let b = proposition1_basis(n)?;
    if b.residual_complete > 1e-10 || b.residual_pair > 1e-10 || b.max_off_diagonal_gram() > 1e-12 {
        return Ok(Some(format!(
            "n={n}: residuals {} {}, gram {}",
            b.residual_complete,
            b.residual_pair,
            b.max_off_diagonal_gram()
        )));
    }
    let x = DVector::from_vec(normal_vec(rng, n));
    let nf = n as f64;
    let mut d1 = DVector::from_element(n, nf);
    d1[0] = 0.0;
    let mut d2 = DVector::zeros(n);
    d2[1] = 2.0;
    let pt_x = b.p.transpose() * &x;
    let via1 = &b.p * pt_x.component_mul(&d1);
    let via2 = &b.p * pt_x.component_mul(&d2);
    let l1 = complete_graph(n)?.laplacian() * &x;
    let l2 = pair_graph(n)?.laplacian() * &x;
    let scale = x.norm() * nf;
    let err = (via1 - l1).norm().max((via2 - l2).norm());
    Ok((err > CHECK_TOL * scale).then(|| format!("n={n}: reconstruction error {err}")))
}

/// Balanced digraph built by superposing random directed cycles.
fn random_balanced(rng: &mut ChaCha8Rng, n: usize) -> Result<WeightedDigraph> {
    let cycles = rng.random_range(1..=3);
    let mut w = DMatrix::zeros(n, n);
    for _ in 0..cycles {
        let len = rng.random_range(2..=n);
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(rng);
        let weight = rng.random_range(1.0..2.0);
        for k in 0..len {
            let (from, to) = (nodes[k], nodes[(k + 1) % len]);
            w[(to, from)] += weight;
        }
    }
    let a_max = w.iter().copied().fold(1.0, f64::max);
    WeightedDigraph::from_weights(w, a_max)
}

fn doubly_stochastic_case(rng: &mut ChaCha8Rng) -> CaseResult {
    let n = rng.random_range(2..=8);
    let g = random_balanced(rng, n)?;
    if !g.is_balanced(crate::graph::BALANCE_TOL) {
        return Ok(Some(format!("n={n}: superposed cycles are not balanced")));
    }
    let d_max = g.max_in_degree();
    let a = rng.random_range(0.0..=1.0) / d_max;
    let m = DMatrix::identity(n, n) - g.laplacian() * a;
    let tol = CHECK_TOL * (1.0 + a * d_max);
    if let Some(v) = m.iter().find(|v| **v < -tol) {
        return Ok(Some(format!("n={n} a={a}: negative entry {v}")));
    }
    for k in 0..n {
        let (r, c) = (m.row(k).sum(), m.column(k).sum());
        if (r - 1.0).abs() > tol || (c - 1.0).abs() > tol {
            return Ok(Some(format!("n={n} a={a}: row {k} sum {r}, column sum {c}")));
        }
    }
    Ok(None)
}
