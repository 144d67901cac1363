use consensus_lab::analysis::disagreement;
use consensus_lab::dynamics::step;
use consensus_lab::graph::WeightedDigraph;
use consensus_lab::topology::{parse_trace, schedule_times, verify_a1, write_trace, TopologyProcess};
use proptest::prelude::*;

fn digraph(max_n: usize) -> impl Strategy<Value = WeightedDigraph> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(prop::option::weighted(0.4, 1.0f64..3.0), n * n).prop_map(move |w| {
            let edges = w
                .into_iter()
                .enumerate()
                .filter_map(|(k, w)| w.map(|w| (k / n, k % n, w)))
                .filter(|(a, b, _)| a != b);
            WeightedDigraph::from_edges(n, 3.0, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn disagreement_is_shift_and_permutation_invariant(
        x in prop::collection::vec(-100.0f64..100.0, 1..20),
        shift in -50.0f64..50.0,
        rot in 0usize..20,
        k in -3.0f64..3.0,
    ) {
        let v = disagreement(&x);
        prop_assert!(v >= 0.0);
        let shifted: Vec<f64> = x.iter().map(|xi| xi + shift).collect();
        prop_assert!((disagreement(&shifted) - v).abs() <= 1e-9 * (1.0 + v));
        let mut rotated = x.clone();
        rotated.rotate_left(rot % x.len());
        prop_assert!((disagreement(&rotated) - v).abs() <= 1e-9 * (1.0 + v));
        let scaled: Vec<f64> = x.iter().map(|xi| xi * k).collect();
        prop_assert!((disagreement(&scaled) - k * k * v).abs() <= 1e-9 * (1.0 + v));
    }

    #[test]
    fn generated_schedules_satisfy_their_own_condition(
        delta in 0.0f64..0.9,
        c in 1.0f64..4.0,
        horizon in 20usize..400,
        n in 2usize..6,
    ) {
        // Split the path 1-2-...-n into single edges; each window gets all of them.
        let parts: Vec<WeightedDigraph> = (0..n - 1)
            .map(|i| WeightedDigraph::undirected_unit(n, [(i, i + 1)]).unwrap())
            .collect();
        prop_assume!(parts.len() <= c.floor() as usize);
        let schedule = schedule_times(delta, c, horizon).unwrap();
        prop_assert!(schedule.satisfies_growth_bound());
        let process = TopologyProcess::extensible_block(parts, delta, c, horizon).unwrap();
        let trace = process.trace(horizon).unwrap();
        prop_assert!(verify_a1(&trace, delta, c).unwrap().holds);
    }

    #[test]
    fn trace_text_round_trips(graphs in prop::collection::vec(digraph(6), 1..6)) {
        let n = graphs[0].n();
        let same: Vec<WeightedDigraph> = graphs.into_iter().filter(|g| g.n() == n).collect();
        let back = parse_trace(&write_trace(&same)).unwrap();
        prop_assert_eq!(back, same);
    }

    #[test]
    fn edge_list_round_trips(g in digraph(8)) {
        prop_assert_eq!(WeightedDigraph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn balanced_noiseless_step_keeps_the_average(
        g in digraph(7),
        x in prop::collection::vec(-10.0f64..10.0, 7),
    ) {
        let n = g.n();
        let sym = WeightedDigraph::from_weights(g.weights() + g.weights().transpose(), 6.0).unwrap();
        prop_assert!(sym.is_balanced(1e-12));
        let x = &x[..n];
        let a = 0.5 / sym.max_in_degree().max(1.0);
        let next = step(x, &sym, a, &vec![0.0; n]);
        let before: f64 = x.iter().sum();
        let after: f64 = next.iter().sum();
        prop_assert!((before - after).abs() < 1e-9);
        prop_assert!(disagreement(&next) <= disagreement(x) + 1e-9);
    }
}
