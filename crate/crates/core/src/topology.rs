//! Topology sequences `{G(t)}`: extensible joint-connectivity schedules,
//! their verification on finite traces, and process generators.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::GainSchedule;
use crate::graph::{self, Adjacency, WeightedDigraph};
use crate::rng::{Domain, StreamSeed};

const EPS: f64 = 1e-9;

/// `floor(t^delta)`, robust to `powf` landing just below an integer.
fn floor_pow(t: usize, delta: f64) -> f64 {
    let x = (t as f64).powf(delta);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x.floor()
    }
}

/// Largest admissible next milestone after `s`: `floor(s + c s^delta)`.
fn window_limit(s: usize, delta: f64, c: f64) -> usize {
    (s as f64 + c * (s as f64).powf(delta) + EPS).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivitySchedule {
    pub delta: f64,
    pub c: f64,
    /// Milestones `t_1 = 1 < t_2 < ...`.
    pub times: Vec<usize>,
}

impl ConnectivitySchedule {
    /// Consecutive windows `[t_k, t_{k+1})`.
    pub fn windows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn last(&self) -> usize {
        *self.times.last().expect("schedule holds t_1")
    }

    /// Checks `t_k <= t_{k-1} + c t_{k-1}^delta` for every `k > 1`.
    pub fn satisfies_growth_bound(&self) -> bool {
        self.times.windows(2).all(|w| w[1] <= window_limit(w[0], self.delta, self.c))
    }

    /// `(k^i, k~^t)` with 1-based schedule indices:
    /// `k^i = min{k : t_k >= i + 1}` and `k~^t = max{k : t_k - 1 <= t}`.
    pub fn k_indices(&self, i: usize, t: usize) -> Result<(usize, usize)> {
        let last = self.last();
        if i < 1 || i > t || t + 1 > last {
            return Err(Error::OutOfRange(format!(
                "need 1 <= i <= t <= {} (got i={i}, t={t})",
                last.saturating_sub(1)
            )));
        }
        let k_i = self.times.partition_point(|&tk| tk < i + 1) + 1;
        let k_t = self.times.partition_point(|&tk| tk <= t + 1);
        Ok((k_i, k_t))
    }
}

fn validate_schedule_params(delta: f64, c: f64) -> Result<()> {
    if !(delta >= 0.0) || !delta.is_finite() || !(c >= 1.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "schedule needs delta >= 0 and c >= 1 (got delta={delta}, c={c})"
        )));
    }
    Ok(())
}

fn next_time(t: usize, delta: f64, c: f64) -> usize {
    let inc = (c * floor_pow(t, delta) + EPS).floor().max(1.0) as usize;
    t + inc
}

/// Milestones `t_1 = 1`, `t_k = t_{k-1} + max(1, floor(c floor(t_{k-1}^delta)))`,
/// keeping every `t_k <= horizon`.
pub fn schedule_times(delta: f64, c: f64, horizon: usize) -> Result<ConnectivitySchedule> {
    validate_schedule_params(delta, c)?;
    if horizon < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let mut times = vec![1];
    loop {
        let next = next_time(*times.last().unwrap(), delta, c);
        if next > horizon {
            break;
        }
        times.push(next);
    }
    Ok(ConnectivitySchedule { delta, c, times })
}

/// Like [`schedule_times`] but continues until one milestone exceeds
/// `horizon`, so the windows cover `[1, horizon]`.
fn covering_schedule(delta: f64, c: f64, horizon: usize) -> Result<ConnectivitySchedule> {
    let mut s = schedule_times(delta, c, horizon)?;
    let next = next_time(s.last(), delta, c);
    s.times.push(next);
    Ok(s)
}

/// Outcome of [`verify_a1`].
#[derive(Debug, Clone, PartialEq)]
pub struct A1Verdict {
    pub holds: bool,
    /// Milestones realising the condition on the trace, when it holds.
    pub witness: Option<ConnectivitySchedule>,
}

/// Presence counts of each directed edge inside a sliding window.
struct WindowCounts {
    n: usize,
    counts: Vec<u32>,
}

impl WindowCounts {
    fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    fn add(&mut self, g: &WeightedDigraph, sign: i32) {
        for (from, to, _) in g.edges() {
            let c = &mut self.counts[to * self.n + from];
            *c = c.checked_add_signed(sign).expect("window count underflow");
        }
    }
}

impl Adjacency for WindowCounts {
    fn node_count(&self) -> usize {
        self.n
    }

    fn has_edge(&self, from: usize, to: usize) -> bool {
        self.counts[to * self.n + from] > 0
    }
}

/// `e[s]` = earliest `e > s` with the union over `[s, e)` strongly
/// connected, or `None`. Index 0 is unused.
fn earliest_completion(trace: &[WeightedDigraph]) -> Result<Vec<Option<usize>>> {
    let len = trace.len();
    let n = trace[0].n();
    if let Some(g) = trace.iter().find(|g| g.n() != n) {
        return Err(Error::IncompatibleGraphs { expected: n, found: g.n() });
    }
    let mut e = vec![None; len + 1];
    let mut w = WindowCounts::new(n);
    let mut end = 1;
    for s in 1..=len {
        while end <= len && !graph::is_strongly_connected(&w) {
            w.add(&trace[end - 1], 1);
            end += 1;
        }
        if end > s && graph::is_strongly_connected(&w) {
            e[s] = Some(end);
        } else {
            break;
        }
        w.add(&trace[s - 1], -1);
    }
    Ok(e)
}

/// Decides whether the finite trace `G(1..=T)` is consistent with extensible
/// joint connectivity at `(delta, c)`: some milestone sequence starting at
/// `t_1 = 1` has every window union strongly connected, every window
/// within the growth bound, at least one complete window, and a trailing
/// incomplete part no longer than the bound allows.
///
/// Milestones are searched exhaustively over the reachable set. Taking the
/// earliest completion at every step is not sufficient: a shorter window
/// can strand the next one in a disconnected stretch that a later cut
/// would have bridged.
pub fn verify_a1(trace: &[WeightedDigraph], delta: f64, c: f64) -> Result<A1Verdict> {
    validate_schedule_params(delta, c)?;
    if trace.is_empty() {
        return Err(Error::InvalidParameter("trace is empty".into()));
    }
    let e = earliest_completion(trace)?;
    Ok(verify_with_completion(&e, trace.len(), delta, c))
}

fn verify_with_completion(e: &[Option<usize>], len: usize, delta: f64, c: f64) -> A1Verdict {
    let end = len + 1;
    let mut pred: Vec<Option<usize>> = vec![None; end + 1];
    let mut reachable = vec![false; end + 1];
    reachable[1] = true;
    let mut covered = 1;
    for s in 1..=len {
        if !reachable[s] {
            continue;
        }
        let Some(lo) = e[s] else { break };
        let hi = window_limit(s, delta, c).min(end);
        for u in lo.max(covered + 1)..=hi {
            reachable[u] = true;
            pred[u] = Some(s);
        }
        covered = covered.max(hi);
    }
    let last = (2..=end)
        .rev()
        .find(|&u| reachable[u] && (end - u) as f64 <= c * (u as f64).powf(delta) + EPS);
    match last {
        None => A1Verdict { holds: false, witness: None },
        Some(u) => {
            let mut times = vec![u];
            let mut cur = u;
            while let Some(p) = pred[cur] {
                times.push(p);
                cur = p;
            }
            times.reverse();
            A1Verdict { holds: true, witness: Some(ConnectivitySchedule { delta, c, times }) }
        }
    }
}

/// Smallest `delta` on the grid `0, 0.01, ..., 2` for which [`verify_a1`] holds.
pub fn minimal_delta(trace: &[WeightedDigraph], c: f64) -> Result<f64> {
    validate_schedule_params(0.0, c)?;
    if trace.is_empty() {
        return Err(Error::InvalidParameter("trace is empty".into()));
    }
    let e = earliest_completion(trace)?;
    if e[1].is_none() {
        return Err(Error::NeverConnected { start: 1 });
    }
    const STEPS: usize = 200;
    let grid = |k: usize| k as f64 / 100.0;
    let holds = |k: usize| verify_with_completion(&e, trace.len(), grid(k), c).holds;
    if !holds(STEPS) {
        return Err(Error::NoExponentOnGrid { max_delta: grid(STEPS) });
    }
    let (mut lo, mut hi) = (0usize, STEPS);
    if holds(0) {
        return Ok(0.0);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(grid(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Fixed,
    Periodic,
    ExtensibleBlock,
    Adversarial,
    RandomA1Prime,
    IndependentEdges,
    Recorded,
}

/// Parameters of the random block model: blocks of `k` slots; the block
/// starting at `s` is connected with probability `min(1, p s^{-mu} ln s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A1PrimeParams {
    pub k: usize,
    pub mu: f64,
    pub p: f64,
}

impl A1PrimeParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || !(self.mu > 0.0 && self.mu < 0.5) || !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "random block model needs K >= 1, mu in (0, 1/2), p > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Probability that the block starting at time `start` is connected.
    pub fn connect_probability(&self, start: usize) -> f64 {
        let s = start as f64;
        (self.p * s.powf(-self.mu) * s.ln().max(0.0)).min(1.0)
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Fixed(WeightedDigraph),
    Periodic(Vec<WeightedDigraph>),
    Sequence { palette: Vec<WeightedDigraph>, index: Vec<u32> },
    RandomA1Prime { params: A1PrimeParams, seed: u64 },
    IndependentEdges { probs: DMatrix<f64>, seed: u64 },
}

/// Generator of the graph sequence `G(1), G(2), ...`.
#[derive(Debug, Clone)]
pub struct TopologyProcess {
    kind: ProcessKind,
    n: usize,
    inner: Inner,
    schedule: Option<ConnectivitySchedule>,
}

impl TopologyProcess {
    pub fn fixed(g: WeightedDigraph) -> Self {
        TopologyProcess { kind: ProcessKind::Fixed, n: g.n(), inner: Inner::Fixed(g), schedule: None }
    }

    /// `G(t) = components[(t - 1) mod period]`; the union must be strongly connected.
    pub fn periodic(components: Vec<WeightedDigraph>) -> Result<Self> {
        let u = graph::union(&components)?;
        if !u.is_strongly_connected() {
            return Err(Error::DisconnectedComponents);
        }
        let n = u.n();
        let period = components.len();
        Ok(TopologyProcess {
            kind: ProcessKind::Periodic,
            n,
            inner: Inner::Periodic(components),
            schedule: Some(ConnectivitySchedule {
                delta: 0.0,
                c: period as f64,
                times: vec![1],
            }),
        })
    }

    /// Lays the components out over the windows of the `(delta, c)`
    /// schedule: slot `j` of a window of length `L >= m` carries component
    /// `j` (empty graphs after the `m`-th slot); shorter windows merge
    /// components `j, j + L, ...` into slot `j` by elementwise maximum.
    /// Every window union is therefore the union of all components.
    pub fn extensible_block(components: Vec<WeightedDigraph>, delta: f64, c: f64, horizon: usize) -> Result<Self> {
        let u = graph::union(&components)?;
        if !u.is_strongly_connected() {
            return Err(Error::DisconnectedComponents);
        }
        let n = u.n();
        let a_max = components.iter().map(|g| g.a_max()).fold(1.0, f64::max);
        let schedule = covering_schedule(delta, c, horizon)?;
        let m = components.len();
        let mut palette = vec![WeightedDigraph::empty(n, a_max)?];
        let mut cache: HashMap<Vec<usize>, u32> = HashMap::new();
        let mut index = Vec::with_capacity(horizon);
        'outer: for (start, end) in schedule.windows() {
            let len = end - start;
            for j in 0..len {
                if start + j > horizon {
                    break 'outer;
                }
                let members: Vec<usize> = (j..m).step_by(len).collect();
                let slot = if members.is_empty() {
                    0
                } else if let Some(&k) = cache.get(&members) {
                    k
                } else {
                    let merged = DMatrix::from_fn(n, n, |r, s| {
                        members.iter().map(|&k| components[k].weights()[(r, s)]).fold(0.0, f64::max)
                    });
                    palette.push(WeightedDigraph::from_weights(merged, a_max)?);
                    let k = (palette.len() - 1) as u32;
                    cache.insert(members, k);
                    k
                };
                index.push(slot);
            }
        }
        Ok(TopologyProcess {
            kind: ProcessKind::ExtensibleBlock,
            n,
            inner: Inner::Sequence { palette, index },
            schedule: Some(schedule),
        })
    }

    /// Worst-case sequence for the gain schedule: within every window
    /// `[t_k, t_{k+1})` of the `(delta, c)` recursion the complete graph is
    /// placed at the slot of minimal gain (earliest on ties) and the pair
    /// graph everywhere else.
    pub fn adversarial(gains: &GainSchedule, delta: f64, c: f64, n: usize, horizon: usize) -> Result<Self> {
        let a = gains.values(horizon)?;
        let schedule = covering_schedule(delta, c, horizon)?;
        let mut index = vec![0u32; horizon];
        for (start, end) in schedule.windows() {
            let hi = end.min(horizon + 1);
            if start > horizon {
                break;
            }
            let mut best = start;
            for t in start + 1..hi {
                if a[t - 1] < a[best - 1] {
                    best = t;
                }
            }
            index[best - 1] = 1;
        }
        let palette = vec![graph::pair_graph(n)?, graph::complete_graph(n)?];
        Ok(TopologyProcess {
            kind: ProcessKind::Adversarial,
            n,
            inner: Inner::Sequence { palette, index },
            schedule: Some(schedule),
        })
    }

    /// Random block model: independent blocks of `K` slots. A connected
    /// block spreads the edges of a uniformly random Hamiltonian path,
    /// undirected with unit weights, round-robin over its slots.
    pub fn random_a1prime(params: A1PrimeParams, n: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        Ok(TopologyProcess {
            kind: ProcessKind::RandomA1Prime,
            n,
            inner: Inner::RandomA1Prime { params, seed },
            schedule: None,
        })
    }

    /// Undirected unit-weight graphs whose edge `{i, j}` is present at each
    /// time independently with probability `probs[(i, j)]`.
    pub fn independent_edges(probs: DMatrix<f64>, seed: u64) -> Result<Self> {
        let n = probs.nrows();
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        if probs.ncols() != n || (0..n).any(|i| (0..n).any(|j| probs[(i, j)] != probs[(j, i)])) {
            return Err(Error::InvalidParameter("edge probabilities must form a symmetric matrix".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("edge probabilities must lie in [0, 1]".into()));
        }
        Ok(TopologyProcess {
            kind: ProcessKind::IndependentEdges,
            n,
            inner: Inner::IndependentEdges { probs, seed },
            schedule: None,
        })
    }

    /// Replays a recorded trace `G(1..=T)`.
    pub fn recorded(trace: Vec<WeightedDigraph>) -> Result<Self> {
        let first = trace.first().ok_or_else(|| Error::InvalidParameter("trace is empty".into()))?;
        let n = first.n();
        if let Some(g) = trace.iter().find(|g| g.n() != n) {
            return Err(Error::IncompatibleGraphs { expected: n, found: g.n() });
        }
        let index = (0..trace.len() as u32).collect();
        Ok(TopologyProcess {
            kind: ProcessKind::Recorded,
            n,
            inner: Inner::Sequence { palette: trace, index },
            schedule: None,
        })
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Generating schedule, for kinds built from one.
    pub fn schedule(&self) -> Option<&ConnectivitySchedule> {
        self.schedule.as_ref()
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self.inner, Inner::RandomA1Prime { .. } | Inner::IndependentEdges { .. })
    }

    /// Last time the process covers, if finite.
    pub fn horizon(&self) -> Option<usize> {
        match &self.inner {
            Inner::Sequence { index, .. } => Some(index.len()),
            _ => None,
        }
    }

    /// Copy whose randomness is an independent stream for replica `r`.
    /// Deterministic processes are returned unchanged.
    pub fn for_replica(&self, r: u64) -> Self {
        let mut out = self.clone();
        match &mut out.inner {
            Inner::RandomA1Prime { seed, .. } | Inner::IndependentEdges { seed, .. } => {
                *seed = StreamSeed::new(*seed).child(r).key();
            }
            _ => {}
        }
        out
    }

    /// `G(t)` for `t >= 1`.
    pub fn graph_at(&self, t: usize) -> Result<Cow<'_, WeightedDigraph>> {
        if t == 0 {
            return Err(Error::OutOfRange("time starts at 1".into()));
        }
        match &self.inner {
            Inner::Fixed(g) => Ok(Cow::Borrowed(g)),
            Inner::Periodic(c) => Ok(Cow::Borrowed(&c[(t - 1) % c.len()])),
            Inner::Sequence { palette, index } => index
                .get(t - 1)
                .map(|&k| Cow::Borrowed(&palette[k as usize]))
                .ok_or_else(|| Error::OutOfRange(format!("process covers t <= {}, asked t={t}", index.len()))),
            Inner::RandomA1Prime { params, seed } => {
                let block = (t - 1) / params.k;
                let slot = (t - 1) % params.k;
                let pairs = random_block_pattern(self.n, *params, *seed, block)
                    .map(|path| {
                        path.into_iter()
                            .enumerate()
                            .filter(|(e, _)| e % params.k == slot)
                            .map(|(_, p)| p)
                            .collect::<Vec<_>>()
                    })
                    .unwrap_or_default();
                Ok(Cow::Owned(WeightedDigraph::undirected_unit(self.n, pairs)?))
            }
            Inner::IndependentEdges { probs, seed } => {
                let mut rng = StreamSeed::new(*seed).domain(Domain::Topology).rng_at(t as u64);
                let mut pairs = Vec::new();
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        let u: f64 = rng.random();
                        if u < probs[(i, j)] {
                            pairs.push((i, j));
                        }
                    }
                }
                Ok(Cow::Owned(WeightedDigraph::undirected_unit(self.n, pairs)?))
            }
        }
    }

    /// `G(1..=horizon)` materialised.
    pub fn trace(&self, horizon: usize) -> Result<Vec<WeightedDigraph>> {
        (1..=horizon).map(|t| self.graph_at(t).map(Cow::into_owned)).collect()
    }

    /// For the random block model: whether block `b` (0-based) is connected.
    pub fn block_connected(&self, b: usize) -> Option<bool> {
        match &self.inner {
            Inner::RandomA1Prime { params, seed } => Some(random_block_pattern(self.n, *params, *seed, b).is_some()),
            _ => None,
        }
    }
}

/// Edges of the Hamiltonian path chosen for block `b`, or `None` when the
/// block is disconnected.
fn random_block_pattern(n: usize, params: A1PrimeParams, seed: u64, b: usize) -> Option<Vec<(usize, usize)>> {
    let mut rng = StreamSeed::new(seed).domain(Domain::Topology).rng_at(b as u64);
    let start = b * params.k + 1;
    let u: f64 = rng.random();
    if u >= params.connect_probability(start) {
        return None;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    Some(perm.windows(2).map(|w| (w[0], w[1])).collect())
}

pub fn periodic_process(components: Vec<WeightedDigraph>, period: usize) -> Result<TopologyProcess> {
    if period != components.len() {
        return Err(Error::InvalidParameter(format!(
            "period {period} differs from the number of components {}",
            components.len()
        )));
    }
    TopologyProcess::periodic(components)
}

pub fn adversarial_process(
    gains: &GainSchedule,
    delta: f64,
    c: f64,
    n: usize,
    horizon: usize,
) -> Result<TopologyProcess> {
    TopologyProcess::adversarial(gains, delta, c, n, horizon)
}

pub fn random_a1prime_process(k: usize, mu: f64, p: f64, n: usize, seed: u64) -> Result<TopologyProcess> {
    TopologyProcess::random_a1prime(A1PrimeParams { k, mu, p }, n, seed)
}

/// Components `{i, i+1}` of the undirected cycle, one per graph. Their
/// union is the cycle, so the periodic process is jointly connected with
/// period `n` (a single edge for `n = 2`).
pub fn cycle_edge_components(n: usize) -> Result<Vec<WeightedDigraph>> {
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    graph::cycle_pairs(n)
        .into_iter()
        .map(|p| WeightedDigraph::undirected_unit(n, [p]))
        .collect()
}

/// Serializes a trace as edge-list blocks headed by `t=<time>` lines.
pub fn write_trace(trace: &[WeightedDigraph]) -> String {
    let mut out = String::new();
    for (k, g) in trace.iter().enumerate() {
        let _ = writeln!(out, "t={}", k + 1);
        out.push_str(&g.to_edge_list());
    }
    out
}

/// Parses the output of [`write_trace`]. Times must run `1, 2, ...`.
pub fn parse_trace(text: &str) -> Result<Vec<WeightedDigraph>> {
    let mut blocks: Vec<(usize, usize, String)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let body = line.trim();
        if let Some(rest) = body.strip_prefix("t=") {
            let t: usize = rest.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad time header {body:?}"),
            })?;
            if t != blocks.len() + 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected t={}, found t={t}", blocks.len() + 1),
                });
            }
            blocks.push((t, line_no, String::new()));
        } else if let Some((_, _, buf)) = blocks.last_mut() {
            buf.push_str(line);
            buf.push('\n');
        } else if !body.is_empty() && !body.starts_with('#') {
            return Err(Error::Parse { line: line_no, message: "content before the first `t=` header".into() });
        }
    }
    blocks
        .into_iter()
        .map(|(_, header_line, body)| {
            WeightedDigraph::parse_edge_list(&body).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse { line: header_line + line, message },
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, pair_graph};

    fn directed_cycle_edges() -> Vec<WeightedDigraph> {
        [(0, 1), (1, 2), (2, 0)]
            .iter()
            .map(|&(a, b)| WeightedDigraph::from_edges(3, 1.0, [(a, b, 1.0)]).unwrap())
            .collect()
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(schedule_times(0.5, 1.0, 13).unwrap().times, vec![1, 2, 3, 4, 6, 8, 10, 13]);
        assert_eq!(schedule_times(0.0, 1.0, 6).unwrap().times, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(schedule_times(1.0, 1.0, 40).unwrap().times, vec![1, 2, 4, 8, 16, 32]);
        assert!(schedule_times(0.5, 0.5, 10).is_err());
        assert!(schedule_times(0.5, 1.0, 13).unwrap().satisfies_growth_bound());
    }

    #[test]
    fn k_indices_examples() {
        let s = ConnectivitySchedule { delta: 0.5, c: 1.0, times: vec![1, 2, 3, 4, 6, 8] };
        assert_eq!(s.k_indices(3, 7).unwrap(), (4, 6));
        assert_eq!(s.k_indices(1, 1).unwrap().0, 2);
        // t = t_m - 1 gives k~ = m
        assert_eq!(s.k_indices(2, 5).unwrap().1, 5);
        assert!(s.k_indices(1, 8).is_err());
        assert!(s.k_indices(4, 3).is_err());
    }

    #[test]
    fn verify_directed_cycle_period_three() {
        let comps = directed_cycle_edges();
        let trace: Vec<_> = (0..30).map(|t| comps[t % 3].clone()).collect();
        let v = verify_a1(&trace, 0.0, 3.0).unwrap();
        assert!(v.holds);
        assert!(v.witness.unwrap().satisfies_growth_bound());
        assert!(!verify_a1(&trace, 0.0, 2.0).unwrap().holds);
        assert_eq!(minimal_delta(&trace, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn verify_empty_trace_fails() {
        let trace = vec![WeightedDigraph::empty(3, 1.0).unwrap(); 10];
        assert!(!verify_a1(&trace, 1.0, 5.0).unwrap().holds);
        assert_eq!(minimal_delta(&trace, 1.0), Err(Error::NeverConnected { start: 1 }));
    }

    #[test]
    fn earliest_cut_is_not_always_feasible() {
        let g = complete_graph(3).unwrap();
        let e = WeightedDigraph::empty(3, 1.0).unwrap();
        let trace = vec![g.clone(), e.clone(), e, g];
        let v = verify_a1(&trace, 0.0, 2.0).unwrap();
        assert!(v.holds);
        let w = v.witness.unwrap();
        assert_eq!(w.times, vec![1, 3, 5]);
        for (s, t) in w.windows() {
            assert!(graph::union(&trace[s - 1..t - 1]).unwrap().is_strongly_connected());
        }
    }

    #[test]
    fn minimal_delta_for_doubling_blocks() {
        let g = complete_graph(3).unwrap();
        let e = WeightedDigraph::empty(3, 1.0).unwrap();
        let trace: Vec<_> = (1..=4096usize)
            .map(|t| if t.is_power_of_two() { g.clone() } else { e.clone() })
            .collect();
        let d = minimal_delta(&trace, 1.0).unwrap();
        assert!((d - 1.0).abs() <= 0.05, "{d}");
        let fixed = vec![g; 20];
        assert_eq!(minimal_delta(&fixed, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn periodic_process_rules() {
        let p = periodic_process(directed_cycle_edges(), 3).unwrap();
        assert_eq!(*p.graph_at(4).unwrap(), directed_cycle_edges()[0]);
        let trace = p.trace(9).unwrap();
        assert!(verify_a1(&trace, 0.0, 3.0).unwrap().holds);
        let single = periodic_process(vec![complete_graph(3).unwrap()], 1).unwrap();
        assert_eq!(*single.graph_at(17).unwrap(), complete_graph(3).unwrap());
        let bad = vec![pair_graph(3).unwrap(), pair_graph(3).unwrap()];
        assert_eq!(periodic_process(bad, 2).unwrap_err(), Error::DisconnectedComponents);
    }

    #[test]
    fn adversarial_places_complete_graph_at_window_minimum() {
        // Window [4, 6) with a(4) = 0.1, a(5) = 0.05.
        let gains = GainSchedule::Table { values: vec![0.3, 0.2, 0.2, 0.1, 0.05, 0.3, 0.3, 0.3] };
        let p = adversarial_process(&gains, 0.5, 1.0, 3, 8).unwrap();
        assert_eq!(p.schedule().unwrap().times[..5], [1, 2, 3, 4, 6]);
        let g1 = complete_graph(3).unwrap();
        assert_eq!(*p.graph_at(5).unwrap(), g1);
        assert_eq!(*p.graph_at(4).unwrap(), pair_graph(3).unwrap());
        // Constant gains in [6, 8): first slot wins.
        assert_eq!(*p.graph_at(6).unwrap(), g1);
        assert_eq!(*p.graph_at(7).unwrap(), pair_graph(3).unwrap());
        assert!(p.graph_at(9).is_err());
    }

    #[test]
    fn adversarial_trace_satisfies_condition() {
        let gains = GainSchedule::power(1.0, 10, 0.3);
        for &(delta, c) in &[(0.7, 1.0), (0.3, 2.0), (0.0, 1.0)] {
            let p = adversarial_process(&gains, delta, c, 4, 3000).unwrap();
            let trace = p.trace(3000).unwrap();
            assert!(trace.iter().all(|g| g.is_balanced(0.0)));
            assert!(verify_a1(&trace, delta, c).unwrap().holds, "delta={delta}");
        }
    }

    #[test]
    fn extensible_block_windows_are_connected() {
        let comps = cycle_edge_components(5).unwrap();
        for &(delta, c) in &[(0.0, 1.0), (0.3, 2.0), (0.5, 5.0)] {
            let p = TopologyProcess::extensible_block(comps.clone(), delta, c, 500).unwrap();
            let trace = p.trace(500).unwrap();
            let s = p.schedule().unwrap();
            for (a, b) in s.windows().filter(|&(_, b)| b <= 501) {
                assert!(graph::union(&trace[a - 1..b - 1]).unwrap().is_strongly_connected());
            }
            assert!(verify_a1(&trace, delta, c).unwrap().holds);
            assert!(trace.iter().all(|g| g.is_balanced(0.0)));
        }
    }

    #[test]
    fn random_block_model() {
        let p = random_a1prime_process(3, 0.3, 1.0, 4, 11).unwrap();
        assert!(!p.is_deterministic());
        assert_eq!(p.block_connected(0), Some(false));
        let a = p.trace(300).unwrap();
        assert_eq!(a, p.trace(300).unwrap());
        assert_ne!(a, p.for_replica(1).trace(300).unwrap());
        for b in 0..100 {
            let block = &a[b * 3..b * 3 + 3];
            let u = graph::union(block).unwrap();
            assert_eq!(u.is_strongly_connected(), p.block_connected(b).unwrap());
            assert!(block.iter().all(|g| g.is_symmetric()));
        }
        let two = random_a1prime_process(1, 0.2, 100.0, 2, 3).unwrap();
        assert_eq!(*two.graph_at(5).unwrap(), pair_graph(2).unwrap());
    }

    #[test]
    fn trace_round_trip() {
        let trace = vec![pair_graph(3).unwrap(), complete_graph(3).unwrap(), WeightedDigraph::empty(3, 2.0).unwrap()];
        let text = write_trace(&trace);
        assert!(text.starts_with("t=1\n3 1\n"));
        assert_eq!(parse_trace(&text).unwrap(), trace);
        assert!(matches!(parse_trace("t=2\n3 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_trace("t=1\n3 1\n1 9 1\n"), Err(Error::Parse { line: 3, .. })));
    }
}
