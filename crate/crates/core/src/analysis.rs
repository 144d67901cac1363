//! Disagreement, rate fits, and numeric checks of the contraction and
//! product bounds.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::topology::ConnectivitySchedule;

/// Relative tolerance for inequalities that hold exactly in real arithmetic.
pub const CHECK_TOL: f64 = 1e-9;

/// `V(x) = sum_i (x_i - mean(x))^2`.
pub fn disagreement(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Least-squares line through `(log t, log y)` on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub window: (f64, f64),
    pub points: usize,
    /// Residual sum of squares in log space.
    pub sse: f64,
}

/// Window discarding the first 20% of the horizon.
pub fn default_window(horizon: usize) -> (f64, f64) {
    (0.2 * horizon as f64, horizon as f64)
}

struct Ols {
    slope: f64,
    intercept: f64,
    stderr_slope: f64,
    sse: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> Ols {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr_slope = if m > 2.0 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ols { slope, intercept, stderr_slope, sse }
}

fn window_points(series: &[(f64, f64)], window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if let Some(&(t, value)) = pts.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::NonPositive { t, value });
    }
    if pts.len() < 10 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    Ok(pts)
}

/// Fits `log y = intercept + slope log t` on `window`.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts = window_points(series, window)?;
    let xs: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| y.ln()).collect();
    let f = ols(&xs, &ys);
    Ok(RateFit {
        slope: f.slope,
        intercept: f.intercept,
        stderr_slope: f.stderr_slope,
        window,
        points: pts.len(),
        sse: f.sse,
    })
}

/// Power law against logarithmic decay on the same window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayComparison {
    /// Best power law `C t^s`.
    pub power: RateFit,
    /// Residual sum of squares of `log y` for the fit `y = C / ln t`.
    pub inverse_log_sse: f64,
    /// Slope of `log y` against `log ln t` (`-1` for exact `1 / ln t`).
    pub log_exponent: f64,
}

impl DecayComparison {
    pub fn log_beats_power(&self) -> bool {
        self.inverse_log_sse < self.power.sse
    }
}

pub fn compare_log_vs_power(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayComparison> {
    let power = fit_rate(series, window)?;
    let pts = window_points(series, window)?;
    if pts.iter().any(|(t, _)| *t <= 1.0) {
        return Err(Error::InvalidParameter("logarithmic fit needs t > 1".into()));
    }
    let ll: Vec<f64> = pts.iter().map(|(t, _)| t.ln().ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, y)| y.ln()).collect();
    // y = C / ln t  <=>  log y + log ln t = log C
    let resid: Vec<f64> = ys.iter().zip(&ll).map(|(y, l)| y + l).collect();
    let c = resid.iter().sum::<f64>() / resid.len() as f64;
    let inverse_log_sse = resid.iter().map(|r| (r - c).powi(2)).sum();
    let log_exponent = ols(&ll, &ys).slope;
    Ok(DecayComparison { power, inverse_log_sse, log_exponent })
}

/// Both sides of the two product bounds on a connectivity schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma4Bounds {
    pub lhs_product: f64,
    pub rhs_power: f64,
    pub lhs_log_product: f64,
    pub rhs_log_power: f64,
}

impl Lemma4Bounds {
    pub fn power_holds(&self) -> bool {
        self.lhs_product < self.rhs_power
    }

    pub fn log_holds(&self) -> bool {
        self.lhs_log_product < self.rhs_log_power
    }
}

/// With `k^i`, `k~^t` from the schedule:
///
/// * `lhs_product = prod_{j=k^i}^{k~^t - 1} (1 - c1 / (t_{j+1}^{1-delta} + t*))`,
///   `rhs_power = ((i^{1-delta} + 2c + t*) / ((t+1)^{1-delta} + t*))^{c1 / (2c)}`;
/// * `lhs_log_product` uses factors `1 - c1 / ((t_{j+1}^{1-delta} + t*) ln(t_{j+1} + t*))`,
///   `rhs_log_power = (ln(2c + i^{1-delta} + t*) / ln((t+1)^{1-delta} + t*))^{c1 (1-delta) / (2c)}`.
pub fn lemma4_bounds(
    s: &ConnectivitySchedule,
    c1: f64,
    t_star: u64,
    delta: f64,
    i: usize,
    t: usize,
) -> Result<Lemma4Bounds> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidParameter(format!("c1 = {c1} must be positive")));
    }
    let (k_i, k_t) = s.k_indices(i, t)?;
    let ts = t_star as f64;
    let e = 1.0 - delta;
    let c = s.c;
    let mut lhs = 1.0;
    let mut lhs_log = 1.0;
    for j in k_i..k_t {
        // t_{j+1} with 1-based j
        let tj = s.times[j] as f64;
        let denom = tj.powf(e) + ts;
        let f = 1.0 - c1 / denom;
        let g = 1.0 - c1 / (denom * (tj + ts).ln());
        for value in [f, g] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::FactorOutOfRange { index: j, value });
            }
        }
        lhs *= f;
        lhs_log *= g;
    }
    let (fi, ft) = (i as f64, t as f64);
    let rhs_power = ((fi.powf(e) + 2.0 * c + ts) / ((ft + 1.0).powf(e) + ts)).powf(c1 / (2.0 * c));
    let rhs_log_power = ((2.0 * c + fi.powf(e) + ts).ln() / ((ft + 1.0).powf(e) + ts).ln()).powf(c1 * e / (2.0 * c));
    Ok(Lemma4Bounds { lhs_product: lhs, rhs_power, lhs_log_product: lhs_log, rhs_log_power })
}

/// Outcome of an inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Contraction bound over the windows of `schedule`: with
/// `z' = Phi(t, i+1) z`, checks
/// `V(z') <= V(z) prod_{l=k^i}^{k~^t - 1} (1 - d_l (1 - d_l)^2 e_l / (n (n-1)^2))`
/// where `d_l` is the least gain in window `l`, `e_l` the least
/// `1 - a(s) d_max`, and `d_max` the largest in-degree over the trace.
///
/// `trace[s - 1] = G(s)` and `gains[s - 1] = a(s)`.
pub fn lemma1_check(
    trace: &[WeightedDigraph],
    gains: &[f64],
    schedule: &ConnectivitySchedule,
    i: usize,
    t: usize,
    z: &[f64],
) -> Result<Check> {
    let (k_i, k_t) = schedule.k_indices(i, t)?;
    if t > trace.len() || t > gains.len() {
        return Err(Error::OutOfRange(format!("trace covers t <= {}, asked t={t}", trace.len().min(gains.len()))));
    }
    let n = z.len();
    if trace.iter().any(|g| g.n() != n) {
        return Err(Error::InvalidParameter("state dimension differs from the graphs".into()));
    }
    let d_max = trace.iter().map(WeightedDigraph::max_in_degree).fold(0.0, f64::max);
    for s in i + 1..=t {
        let a = gains[s - 1];
        if !(a > 0.0 && a * d_max < 1.0) {
            return Err(Error::InvalidParameter(format!("a({s}) = {a} outside (0, 1/d_max) with d_max = {d_max}")));
        }
    }
    let mut x = DVector::from_column_slice(z);
    for s in i + 1..=t {
        let l = trace[s - 1].laplacian();
        x = &x - (&l * &x) * gains[s - 1];
    }
    let lhs = disagreement(x.as_slice());
    let nf = n as f64;
    let mut factor = 1.0;
    for l in k_i..k_t {
        let (lo, hi) = (schedule.times[l - 1], schedule.times[l]);
        let window = &gains[lo - 1..hi - 1];
        let d = window.iter().copied().fold(f64::INFINITY, f64::min);
        let e = window.iter().map(|a| 1.0 - a * d_max).fold(f64::INFINITY, f64::min);
        factor *= 1.0 - d * (1.0 - d).powi(2) * e / (nf * (nf - 1.0).powi(2));
    }
    let v0 = disagreement(z);
    let rhs = v0 * factor;
    let holds = lhs <= rhs + CHECK_TOL * v0.max(f64::MIN_POSITIVE);
    Ok(Check { lhs, rhs, holds })
}

/// `V((I - aL) x) >= (1 - a lambda_max(L + L')) V(x)`.
pub fn lemma6_check(g: &WeightedDigraph, a: f64, x: &[f64]) -> Result<Check> {
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("gain {a} must be >= 0")));
    }
    if x.len() != g.n() {
        return Err(Error::InvalidParameter("state dimension differs from the graph".into()));
    }
    let xv = DVector::from_column_slice(x);
    let y = &xv - (g.laplacian() * &xv) * a;
    let lhs = disagreement(y.as_slice());
    let v = disagreement(x);
    let rhs = (1.0 - a * g.lambda_max_symmetric()) * v;
    let holds = lhs >= rhs - CHECK_TOL * (lhs.abs() + rhs.abs() + v);
    Ok(Check { lhs, rhs, holds })
}

/// Statistics of the consensus value `x*` across replicas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusStats {
    pub mean_final: f64,
    pub var_final: f64,
    pub target_average: f64,
    pub replicas: usize,
}

impl ConsensusStats {
    /// Standard error of `mean_final`.
    pub fn stderr_mean(&self) -> f64 {
        (self.var_final / self.replicas as f64).sqrt()
    }

    /// `|mean_final - target| <= k * stderr`.
    pub fn unbiased_within(&self, k: f64) -> bool {
        (self.mean_final - self.target_average).abs() <= k * self.stderr_mean()
    }
}

/// Takes each replica's state average at the horizon as its consensus value.
pub fn consensus_stats(final_states: &[Vec<f64>], x1: &[f64]) -> Result<ConsensusStats> {
    let r = final_states.len();
    if r < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 replicas, got {r}")));
    }
    let values: Vec<f64> = final_states.iter().map(|x| x.iter().sum::<f64>() / x.len() as f64).collect();
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Ok(ConsensusStats {
        mean_final: mean,
        var_final: var,
        target_average: x1.iter().sum::<f64>() / x1.len() as f64,
        replicas: r,
    })
}

pub const REPORT_HEADER: &str = "experiment_id,quantity,value,stderr,holds";

/// One row of a check/rate report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment_id: String,
    pub quantity: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub holds: Option<bool>,
}

impl ReportRow {
    pub fn to_csv_line(&self) -> String {
        let mut out = format!("{},{},{}", self.experiment_id, self.quantity, self.value);
        match self.stderr {
            Some(s) => {
                let _ = write!(out, ",{s}");
            }
            None => out.push(','),
        }
        match self.holds {
            Some(h) => {
                let _ = write!(out, ",{h}");
            }
            None => out.push(','),
        }
        out
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete_graph, pair_graph};
    use crate::topology::schedule_times;

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(disagreement(&[4.0; 5]), 0.0);
        assert_eq!(disagreement(&[1.0, -1.0]), 2.0);
        let x = [0.3, -1.2, 5.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 7.0).collect();
        assert!((disagreement(&shifted) - disagreement(&x)).abs() < 1e-12);
        let scaled: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        assert!((disagreement(&scaled) - 9.0 * disagreement(&x)).abs() < 1e-12);
    }

    fn series(f: impl Fn(f64) -> f64, range: std::ops::RangeInclusive<usize>) -> Vec<(f64, f64)> {
        range.map(|t| (t as f64, f(t as f64))).collect()
    }

    #[test]
    fn fit_exact_power_laws() {
        let s = series(|t| 3.0 / t, 1..=1000);
        let f = fit_rate(&s, (10.0, 1000.0)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-9);
        let s = series(|t| 5.0 * t.powf(-0.4), 1..=1000);
        assert!((fit_rate(&s, (10.0, 1000.0)).unwrap().slope + 0.4).abs() < 1e-9);
    }

    #[test]
    fn fit_inverse_log_flattens() {
        let s: Vec<(f64, f64)> = (1..=60).map(|k| 10f64.powf(k as f64 / 4.0)).map(|t| (t, 1.0 / t.ln())).collect();
        let early = fit_rate(&s, (10.0, 1e4)).unwrap().slope;
        let late = fit_rate(&s, (1e6, 1e15)).unwrap().slope;
        assert!(late.abs() < early.abs());
        assert!(late.abs() < 0.05);
        let cmp = compare_log_vs_power(&s, (1e6, 1e15)).unwrap();
        assert!(cmp.log_beats_power());
        assert!((cmp.log_exponent + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        let s = series(|t| t - 5.0, 1..=50);
        assert!(matches!(fit_rate(&s, (1.0, 50.0)), Err(Error::NonPositive { .. })));
        let s = series(|t| 1.0 / t, 1..=5);
        assert_eq!(fit_rate(&s, (1.0, 5.0)), Err(Error::TooFewPoints(5)));
    }

    #[test]
    fn lemma4_examples() {
        let s = schedule_times(0.0, 1.0, 50).unwrap();
        // Factors 1 - 2/m for m = 3..=11 telescope to 2/110; the bound is 3/11.
        let b = lemma4_bounds(&s, 2.0, 0, 0.0, 1, 10).unwrap();
        assert!((b.lhs_product - 2.0 / 110.0).abs() < 1e-15);
        assert!((b.rhs_power - 3.0 / 11.0).abs() < 1e-15);
        assert!(b.power_holds() && b.log_holds());
        assert!(matches!(lemma4_bounds(&s, 3.0, 0, 0.0, 1, 10), Err(Error::FactorOutOfRange { .. })));
        let s = schedule_times(0.5, 1.0, 100).unwrap();
        let b = lemma4_bounds(&s, 1.0, 0, 0.5, 5, 5).unwrap();
        assert_eq!(b.lhs_product, 1.0);
        assert_eq!(b.lhs_log_product, 1.0);
        assert!(b.power_holds());
    }

    #[test]
    fn lemma6_examples() {
        let c = lemma6_check(&pair_graph(2).unwrap(), 0.25, &[0.0, 1.0]).unwrap();
        assert!((c.lhs - 0.125).abs() < 1e-15);
        assert!(c.rhs.abs() < 1e-12);
        assert!(c.holds);
        let c = lemma6_check(&complete_graph(3).unwrap(), 0.0, &[0.0, 1.0, 5.0]).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-12 && c.holds);
    }

    #[test]
    fn lemma1_on_fixed_complete_graph() {
        let g = complete_graph(4).unwrap();
        let trace = vec![g; 60];
        let gains = vec![0.05; 60];
        let s = schedule_times(0.0, 1.0, 60).unwrap();
        let c = lemma1_check(&trace, &gains, &s, 3, 40, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(c.holds && c.lhs < c.rhs);
        let c = lemma1_check(&trace, &gains, &s, 3, 40, &[2.0; 4]).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!(c.holds);
        let big = vec![0.5; 60];
        assert!(lemma1_check(&trace, &big, &s, 3, 40, &[1.0, -2.0, 0.5, 3.0]).is_err());
    }

    #[test]
    fn consensus_stats_and_rows() {
        let st = consensus_stats(&[vec![1.0, 2.0], vec![1.5, 1.5], vec![2.0, 1.0]], &[0.0, 3.0]).unwrap();
        assert_eq!(st.mean_final, 1.5);
        assert_eq!(st.var_final, 0.0);
        assert_eq!(st.target_average, 1.5);
        assert!(st.unbiased_within(4.0));
        let row = ReportRow {
            experiment_id: "e".into(),
            quantity: "slope".into(),
            value: -1.0,
            stderr: Some(0.5),
            holds: None,
        };
        assert_eq!(report_csv(&[row]), "experiment_id,quantity,value,stderr,holds\ne,slope,-1,0.5,\n");
    }
}
