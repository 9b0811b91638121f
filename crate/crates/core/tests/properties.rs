mod common;

use common::*;
use patrolswitch::evaluator::{evaluate, EvalMode};
use patrolswitch::graph::{load_graph, save_graph};
use patrolswitch::hole::{build_catch_oracle, estimate_hole, max_steal_forward};
use patrolswitch::sim::{exact_steal_bruteforce, exact_switch_steal, simulate_static, simulate_switch, AttackSpec};
use patrolswitch::strategy::{load_strategy, random_init, save_strategy, softmax_strategy, threshold};
use patrolswitch::{ChangingEnvironment, RegularStrategy};
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn graph_and_strategy_files_round_trip(seed in any::<u64>(), mem in 1usize..=3) {
        let mut r = rng(seed);
        let g = tiny_graph(&mut r, 5, 4, 12, 0.4);
        let back = load_graph(&save_graph(&g)).unwrap();
        prop_assert_eq!(&back, &g);
        let s = sparse_strategy(&mut r, &g, mem, 0.6, 4);
        let again = load_strategy(&save_strategy(&s, &g), &g).unwrap();
        prop_assert_eq!(again.probs, s.probs);
    }

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), mem in 1usize..=3, theta in 0.0f64..0.6) {
        let mut r = rng(seed);
        let g = tiny_graph(&mut r, 5, 4, 12, 0.4);
        let s = softmax_strategy(&random_init(&g, mem, seed).unwrap()).unwrap();
        let t = threshold(&s, theta);
        for a in 0..t.layout.n_aug() {
            let sum: f64 = t.layout.row(a).map(|i| t.probs[i]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
        prop_assert_eq!(threshold(&t, theta).probs, t.probs);
    }

    #[test]
    fn steals_are_bounded_and_best_initial_is_lower(seed in any::<u64>(), mem in 1usize..=2) {
        let mut r = rng(seed);
        let g = tiny_graph(&mut r, 5, 4, 12, 0.4);
        let s = sparse_strategy(&mut r, &g, mem, 0.5, 3);
        let all = evaluate(&s, &g, EvalMode::AllSupport).unwrap();
        let best = evaluate(&s, &g, EvalMode::BestInitial).unwrap();
        for (_, k, v) in all.steals.iter() {
            prop_assert!(v >= 0.0 && v <= g.targets()[k].cost + 1e-12);
        }
        prop_assert!(best.aval <= all.aval + 1e-12);
        prop_assert!((all.aval + all.dval - g.alpha_max()).abs() < 1e-9);
    }

    #[test]
    fn catch_queries_grow_with_budget(seed in any::<u64>(), mem in 1usize..=2) {
        let mut r = rng(seed);
        let g = tiny_graph(&mut r, 5, 4, 12, 0.5);
        let s = sparse_strategy(&mut r, &g, mem, 0.5, 3);
        for tg in g.targets() {
            let o = build_catch_oracle(&g, &s, tg.vertex).unwrap();
            for b in &o.buckets {
                prop_assert!(b.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
                prop_assert!(b.last().unwrap().1 <= 1.0 + 1e-12);
            }
            for a in 0..s.layout.n_aug() {
                let mut prev = 0.0;
                for t in (0..=tg.attack_time as i64 + 1).rev() {
                    let q = o.query(a, t);
                    prop_assert!(q + 1e-15 >= prev);
                    prev = q;
                }
            }
        }
    }

    #[test]
    fn holes_are_nonnegative_and_pair_steals_bounded(seed in any::<u64>(), mem in 1usize..=2, kind in 0u64..3) {
        let mut r = rng(seed);
        let g1 = tiny_graph(&mut r, 4, 3, 10, 0.4);
        let g2 = tiny_change(&mut r, &g1, kind, 3);
        let s1 = sparse_strategy(&mut r, &g1, mem, 0.5, 3);
        let s2 = sparse_strategy(&mut r, &g2, mem, 0.5, 3);
        let ce = ChangingEnvironment::new(g1, g2).unwrap();
        let rep = estimate_hole(&ce, &s1, &s2).unwrap();
        prop_assert!(rep.hole_ub >= 0.0);
        prop_assert!(rep.ub >= rep.aval1.max(rep.aval2));
        for p in &rep.pairs {
            prop_assert!(p.steal >= 0.0 && p.steal <= ce.g2.targets()[p.target].cost + 1e-12);
        }
    }
}

#[test]
fn self_switch_on_unchanged_graph_adds_nothing() {
    for seed in 0..20u64 {
        let mut r = rng(500 + seed);
        let g = tiny_graph(&mut r, 4, 3, 8, 0.4);
        let mem = 1 + (seed % 2) as usize;
        let s = softmax_strategy(&random_init(&g, mem, seed).unwrap()).unwrap();
        let ce = ChangingEnvironment::new(g.clone(), g.clone()).unwrap();
        let aval = evaluate(&s, &g, EvalMode::AllSupport).unwrap().aval;
        for tg in g.targets() {
            let o = build_catch_oracle(&g, &s, tg.vertex).unwrap();
            for slot in s.support() {
                let p = max_steal_forward(&ce, &s, &s, slot, tg.vertex, &o).unwrap();
                assert!(p.steal <= aval + 1e-9, "seed {seed}: {} > {aval}", p.steal);
            }
        }
        assert!(estimate_hole(&ce, &s, &s).unwrap().hole_ub <= 1e-9);
    }
}

#[test]
fn forward_search_matches_exact_switch_steal_at_zero_delay() {
    for seed in 0..15u64 {
        let mut r = rng(700 + seed);
        let g1 = tiny_graph(&mut r, 4, 3, 8, 0.4);
        let g2 = tiny_change(&mut r, &g1, seed, 3);
        let s1 = sparse_strategy(&mut r, &g1, 1, 0.5, 2);
        let s2 = sparse_strategy(&mut r, &g2, 1, 0.5, 2);
        let ce = ChangingEnvironment::new(g1, g2).unwrap();
        for tg in ce.g2.targets() {
            let o = build_catch_oracle(&ce.g2, &s2, tg.vertex).unwrap();
            for slot in s1.support() {
                let fwd = max_steal_forward(&ce, &s1, &s2, slot, tg.vertex, &o).unwrap().steal;
                let exact = (1..=tg.attack_time)
                    .map(|dt| exact_switch_steal(&ce, &s1, &s2, AttackSpec { slot, target: tg.vertex, delta: 0, delta_t: dt }).unwrap())
                    .fold(0.0, f64::max);
                assert!((fwd - exact).abs() <= 1e-9, "seed {seed} slot {slot}: {fwd} vs {exact}");
            }
        }
    }
}

#[test]
fn static_simulation_tracks_evaluator() {
    let mut cells = 0;
    let mut within = 0;
    for seed in 0..6u64 {
        let mut r = rng(900 + seed);
        let g = tiny_graph(&mut r, 4, 3, 8, 0.5);
        let s = sparse_strategy(&mut r, &g, 1, 0.6, 3);
        let ev = evaluate(&s, &g, EvalMode::AllSupport).unwrap();
        for (slot, k, v) in ev.steals.iter() {
            let st = simulate_static(&g, &s, slot, g.targets()[k].vertex, 0, 4000, seed * 1000 + slot as u64).unwrap();
            assert!(st.catches <= st.runs && st.mean_steal >= 0.0 && st.mean_steal <= g.targets()[k].cost);
            cells += 1;
            within += ((st.mean_steal - v).abs() <= 3.0 * st.std_err + 1e-12) as usize;
        }
    }
    assert!(within as f64 >= 0.99 * cells as f64 - 1.0, "{within}/{cells}");
}

#[test]
fn switch_simulation_tracks_exact_value() {
    let mut r = rng(42);
    let g1 = tiny_graph(&mut r, 4, 3, 8, 0.5);
    let g2 = recost(&mut r, &g1);
    let s1 = sparse_strategy(&mut r, &g1, 1, 0.7, 3);
    let s2 = sparse_strategy(&mut r, &g2, 1, 0.7, 3);
    let ce = ChangingEnvironment::new(g1, g2).unwrap();
    let slot = s1.support()[0];
    let tg = ce.g1.targets()[0];
    let spec = AttackSpec { slot, target: tg.vertex, delta: 0, delta_t: (tg.attack_time / 2).max(1) };
    let exact = exact_switch_steal(&ce, &s1, &s2, spec).unwrap();
    let st = simulate_switch(&ce, &s1, &s2, spec, 100_000, 1).unwrap();
    assert!((st.mean_steal - exact).abs() <= 3.0 * st.std_err + 1e-12, "{} vs {exact} (se {})", st.mean_steal, st.std_err);
    assert_eq!(st, simulate_switch(&ce, &s1, &s2, spec, 100_000, 1).unwrap());
}

#[test]
fn deterministic_play_has_zero_variance() {
    let g = patrolswitch::scenarios::triangle_g1();
    let s: RegularStrategy = patrolswitch::scenarios::triangle_sigma1();
    for slot in s.support() {
        for tg in g.targets() {
            let st = simulate_static(&g, &s, slot, tg.vertex, 0, 200, 3).unwrap();
            assert_eq!(st.std_err, 0.0);
            assert_eq!(st.mean_steal, exact_steal_bruteforce(&g, &s, slot, tg.vertex).unwrap());
        }
    }
}
