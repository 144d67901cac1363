//! Exit criteria. Each test writes one `criterion N [PASS|FAIL] ...` line to
//! stderr (uncaptured) and then asserts the criterion.

use std::io::Write as _;

use consensus_lab::analysis::{compare_log_vs_power, consensus_stats, fit_rate};
use consensus_lab::dynamics::{exact_second_moment, monte_carlo_v, McConfig, McSummary, RecordPlan};
use consensus_lab::gain::{theorem1_gain, GainSchedule};
use consensus_lab::graph::{complete_graph, pair_graph, WeightedDigraph};
use consensus_lab::manet::{final_states_over_seeds, scenario_preset, state_range, Figure};
use consensus_lab::noise::NoiseModel;
use consensus_lab::rng::StreamSeed;
use consensus_lab::suites::{run_all, Suite};
use consensus_lab::topology::{adversarial_process, cycle_edge_components, random_a1prime_process, verify_a1, TopologyProcess};
use rand::Rng;

const HORIZON: usize = 100_000;
const RATE_WINDOW: (f64, f64) = (2e4, 1e5);

fn report(id: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id} [{}] {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn mc(process: TopologyProcess, gains: GainSchedule, noise: NoiseModel, x1: Vec<f64>, horizon: usize, replicas: usize, seed: u64) -> McSummary {
    monte_carlo_v(&McConfig {
        process,
        gains,
        noise,
        x1,
        horizon,
        replicas,
        seed,
        record: RecordPlan::LogSpaced { per_decade: 40 },
    })
    .unwrap()
}

/// Smallest integer `c` for which the trace is jointly connected at `delta = 0`.
fn uniform_constant(trace: &[WeightedDigraph]) -> f64 {
    (1..=trace.len()).map(|c| c as f64).find(|&c| verify_a1(trace, 0.0, c).unwrap().holds).unwrap()
}

#[test]
fn criterion_1_inverse_t_rate_under_uniform_joint_connectivity() {
    let n = 5;
    let process = TopologyProcess::periodic(cycle_edge_components(n).unwrap()).unwrap();
    let c = uniform_constant(&process.trace(200).unwrap());
    let gains = theorem1_gain(n, c, 1.0, 0.0).unwrap();
    let noise = NoiseModel::gaussian(0.01).unwrap();
    let s = mc(process, gains, noise, ramp(n), HORIZON, 500, 1);
    let fit = fit_rate(&s.series(), RATE_WINDOW).unwrap();
    let pass = (fit.slope + 1.0).abs() <= 0.15;
    report("1", pass, &format!("n=5 period-5 c={c}: slope {:.3} ± {:.3} (target -1.00 ± 0.15)", fit.slope, fit.stderr_slope));
    assert!(pass, "slope {}", fit.slope);
}

#[test]
fn criterion_2_adversarial_rates() {
    let n = 4;
    let mut all = true;
    let mut detail = Vec::new();
    for (k, &delta) in [0.2, 0.3, 0.4].iter().enumerate() {
        let gains = theorem1_gain(n, 1.0, 1.0, delta).unwrap();
        let process = adversarial_process(&gains, delta, 1.0, n, HORIZON).unwrap();
        let s = mc(process, gains, NoiseModel::gaussian(0.01).unwrap(), ramp(n), HORIZON, 500, 20 + k as u64);
        let fit = fit_rate(&s.series(), RATE_WINDOW).unwrap();
        let target = -(1.0 - 2.0 * delta);
        let ok = (fit.slope - target).abs() <= 0.15;
        all &= ok;
        detail.push(format!("delta={delta}: slope {:.3} vs {target:.2} {}", fit.slope, if ok { "ok" } else { "off" }));
    }
    report("2", all, &format!("{} (tolerance 0.15)", detail.join("; ")));
    assert!(all, "{detail:?}");
}

#[test]
fn criterion_3_no_decay_beyond_critical_exponent() {
    let n = 4;
    let delta = 0.7;
    let t1 = match theorem1_gain(n, 1.0, 1.0, 0.0).unwrap() {
        GainSchedule::Power { alpha, t_star, .. } => (alpha, t_star),
        _ => unreachable!(),
    };
    // a(t) = alpha / (t^0.3 + t*) throughout; a(1) <= 1/6 keeps the complete graph stable.
    let exponent = 1.0 - delta;
    let mut schedules = vec![
        GainSchedule::power(t1.0, t1.1, exponent),
        GainSchedule::power(1.0 / 6.0, 0, exponent),
        GainSchedule::power(1.0, 5, exponent),
        GainSchedule::power(0.05, 0, exponent),
    ];
    let mut rng = StreamSeed::new(303).rng();
    for _ in 0..5 {
        let alpha = 10f64.powf(rng.random_range(-1.3..3.0));
        let t_star = (2.0 * alpha * (n - 1) as f64).ceil() as u64;
        schedules.push(GainSchedule::power(alpha, t_star, exponent));
    }
    let mut all = true;
    let mut detail = Vec::new();
    for (k, gains) in schedules.into_iter().enumerate() {
        let process = adversarial_process(&gains, delta, 1.0, n, HORIZON).unwrap();
        let s = mc(process, gains.clone(), NoiseModel::gaussian(0.01).unwrap(), ramp(n), HORIZON, 200, 30 + k as u64);
        let fit = fit_rate(&s.series(), RATE_WINDOW).unwrap();
        let (v, se) = (*s.mean_v.last().unwrap(), *s.stderr_v.last().unwrap());
        let ok = fit.slope >= -0.05 && v - 4.0 * se > 0.0;
        all &= ok;
        detail.push(format!("#{k} slope {:.3} V(T) {:.3e}±{:.1e}", fit.slope, v, se));
    }
    report("3", all, &format!("delta=0.7, 9 schedules: {}", detail.join("; ")));
    assert!(all, "{detail:?}");
}

#[test]
fn criterion_4_monte_carlo_matches_exact_moments() {
    let times = [1usize, 2, 3, 5, 8, 13, 20, 30];
    let replicas = 10_000;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();

    // Hand case: E V(2) = 0.1875.
    let hand = mc(
        TopologyProcess::fixed(pair_graph(2).unwrap()),
        GainSchedule::constant(0.25),
        NoiseModel::gaussian(1.0).unwrap(),
        vec![0.0, 1.0],
        2,
        replicas,
        4,
    );
    let hand_ok = (hand.mean_v[1] - 0.1875).abs() <= 4.0 * hand.stderr_v[1];
    if !hand_ok {
        failures.push(format!("hand case mean {} se {}", hand.mean_v[1], hand.stderr_v[1]));
    }

    let mut rng = StreamSeed::new(404).rng();
    for k in 0..20 {
        let n = rng.random_range(2..=5);
        let a_max: f64 = rng.random_range(1.0..2.5);
        let random_graph = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random::<f64>() < 0.5 {
                        edges.push((i, j, rng.random_range(1.0..=a_max)));
                    }
                }
            }
            WeightedDigraph::from_edges(n, a_max, edges).unwrap()
        };
        let gains = GainSchedule::power(rng.random_range(0.05..0.4) / a_max, rng.random_range(0..5), rng.random_range(0.3..=1.0));
        let process = match k % 3 {
            0 => TopologyProcess::fixed(random_graph(&mut rng)),
            1 => {
                let mut comps: Vec<WeightedDigraph> = (0..rng.random_range(1..4)).map(|_| random_graph(&mut rng)).collect();
                comps.push(complete_graph(n).unwrap());
                TopologyProcess::periodic(comps).unwrap()
            }
            _ => adversarial_process(&gains, rng.random_range(0.0..1.0), 1.0, n, 30).unwrap(),
        };
        let v: f64 = rng.random_range(0.01..1.0);
        let noise = match rng.random_range(0..3) {
            0 => NoiseModel::gaussian(v),
            1 => NoiseModel::uniform(v),
            _ => NoiseModel::martingale(v),
        }
        .unwrap();
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let exact = exact_second_moment(&process, &gains, &noise, &x1, 30).unwrap();
        let s = monte_carlo_v(&McConfig {
            process,
            gains,
            noise,
            x1,
            horizon: 30,
            replicas,
            seed: 400 + k,
            record: RecordPlan::Times { times: times.to_vec() },
        })
        .unwrap();
        for (idx, &t) in s.times.iter().enumerate() {
            let dev = (s.mean_v[idx] - exact[t - 1]).abs();
            let tol = 4.0 * s.stderr_v[idx] + 1e-12;
            worst = worst.max(dev / tol);
            if dev > tol {
                failures.push(format!("config {k} t={t}: mc {} exact {} se {}", s.mean_v[idx], exact[t - 1], s.stderr_v[idx]));
            }
        }
    }
    let pass = failures.is_empty();
    report(
        "4",
        pass,
        &format!(
            "hand case E V(2) {:.4}±{:.4} vs 0.1875; 20 configs x 8 times, worst deviation {:.2} of 4 SE",
            hand.mean_v[1], hand.stderr_v[1], worst
        ),
    );
    assert!(pass, "{failures:?}");
}

#[test]
fn criterion_5_randomized_lemma_suites() {
    let outcomes = run_all(1000, 5).unwrap();
    assert_eq!(outcomes.len(), Suite::ALL.len());
    let pass = outcomes.iter().all(|o| o.passed() && o.cases >= 500);
    let detail: Vec<String> = outcomes.iter().map(|o| format!("{} {}/{}", o.suite.name(), o.cases - o.failures, o.cases)).collect();
    report("5", pass, &detail.join(", "));
    assert!(pass, "{outcomes:?}");
}

#[test]
fn criterion_6_unbiased_consensus_and_variance_control() {
    let n = 4;
    let x1 = ramp(n);
    let mut vars = Vec::new();
    let mut unbiased = true;
    let mut detail = Vec::new();
    for (k, &t_star) in [10u64, 100, 1000].iter().enumerate() {
        let process = TopologyProcess::periodic(cycle_edge_components(n).unwrap()).unwrap();
        let s = monte_carlo_v(&McConfig {
            process,
            gains: GainSchedule::power(2.0, t_star, 1.0),
            noise: NoiseModel::gaussian(1.0).unwrap(),
            x1: x1.clone(),
            horizon: 2000,
            replicas: 10_000,
            seed: 60 + k as u64,
            record: RecordPlan::Times { times: vec![] },
        })
        .unwrap();
        let st = consensus_stats(&s.final_states, &x1).unwrap();
        unbiased &= st.unbiased_within(4.0);
        vars.push(st.var_final);
        detail.push(format!(
            "t*={t_star}: mean {:.4} (target {}) se {:.4} var {:.4e}",
            st.mean_final,
            st.target_average,
            st.stderr_mean(),
            st.var_final
        ));
    }
    let decreasing = vars.windows(2).all(|w| w[1] < w[0]);
    let pass = unbiased && decreasing;
    report("6", pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn criterion_7_manet_scenarios() {
    let rounds = 10_000;
    let mut medians = Vec::new();
    let mut fig2 = (0.0, 0.0);
    for f in [Figure::Fig2, Figure::Fig3, Figure::Fig4] {
        let (scene, gains) = scenario_preset(f);
        let finals = final_states_over_seeds(&scene, &gains, rounds, 0..100).unwrap();
        let mut ranges: Vec<f64> = finals.iter().map(|x| state_range(x)).collect();
        if f == Figure::Fig2 {
            let close = ranges.iter().filter(|r| **r < 0.05).count() as f64 / ranges.len() as f64;
            let mean = finals.iter().map(|x| x.iter().sum::<f64>() / x.len() as f64).sum::<f64>() / finals.len() as f64;
            fig2 = (close, mean);
        }
        ranges.sort_by(f64::total_cmp);
        medians.push((ranges[49] + ranges[50]) / 2.0);
    }
    let fig2_ok = fig2.0 >= 0.9 && (0.45..=0.55).contains(&fig2.1);
    let ordering = medians[2] > medians[1] && medians[1] > medians[0];
    let pass = fig2_ok && ordering;
    report(
        "7",
        pass,
        &format!(
            "fig2: {:.0}% of runs with range < 0.05, run-mean {:.4}; median ranges b=1.0 {:.4}, b=0.9 {:.4}, b=0.8 {:.4}",
            100.0 * fig2.0,
            fig2.1,
            medians[0],
            medians[1],
            medians[2]
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_logarithmic_regime_at_half() {
    let n = 4;
    let gains = theorem1_gain(n, 1.0, 1.0, 0.5).unwrap();
    let process = adversarial_process(&gains, 0.5, 1.0, n, HORIZON).unwrap();
    let s = mc(process, gains, NoiseModel::gaussian(0.01).unwrap(), ramp(n), HORIZON, 500, 8);
    let series = s.series();
    let window = (HORIZON as f64 / 10.0, HORIZON as f64);
    let cmp = compare_log_vs_power(&series, window).unwrap();
    let v_end = *s.mean_v.last().unwrap();
    let k10 = s.times.iter().position(|&t| t >= HORIZON / 10).unwrap();
    let decays = v_end < s.mean_v[k10];
    let flat = cmp.power.slope.abs() < 0.1;
    let pass = decays && flat && cmp.log_beats_power();
    report(
        "8",
        pass,
        &format!(
            "V({})={:.4e}, V({})={:.4e}; final-decade slope {:.3}; SSE 1/ln t {:.3e} vs power {:.3e}",
            s.times[k10],
            s.mean_v[k10],
            HORIZON,
            v_end,
            cmp.power.slope,
            cmp.inverse_log_sse,
            cmp.power.sse
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_random_topology_rate() {
    let n = 4;
    let (mu, k) = (0.3, 3);
    let process = random_a1prime_process(k, mu, 1.0, n, 9).unwrap();
    let gains = GainSchedule::power(0.2, 0, 1.0 - mu);
    let s = mc(process, gains, NoiseModel::gaussian(0.01).unwrap(), ramp(n), HORIZON, 500, 9);
    let fit = fit_rate(&s.series(), RATE_WINDOW).unwrap();
    let bound = -(1.0 - 2.0 * mu) + 0.2;
    let pass = fit.slope <= bound;
    report("9", pass, &format!("K=3 mu=0.3: slope {:.3} ± {:.3} (need <= {bound:.2})", fit.slope, fit.stderr_slope));
    assert!(pass);
}
