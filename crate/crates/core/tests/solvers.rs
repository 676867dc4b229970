use fdcop::baselines::{cocoa_solve, hcms_solve, Hcms, HcmsConfig};
use fdcop::bench::{GeneratorConfig, Topology};
use fdcop::ccocoa::SolverConfig;
use fdcop::engine::{self, MessageKind, RunOptions};
use fdcop::model::Problem;
use fdcop::oracle::{self, discrete_search};
use proptest::prelude::*;

fn instance(topology: Topology, n: usize, seed: u64) -> Problem {
    let g = GeneratorConfig {
        attach: 2.min(n - 1),
        ..GeneratorConfig::preset(topology, n)
    };
    g.generate(seed).unwrap()
}

fn convex_instances(count: usize) -> Vec<(u64, Problem)> {
    (0u64..)
        .map(|seed| (seed, instance(Topology::Tree, 3 + seed as usize % 4, seed)))
        .filter(|(_, p)| oracle::cholesky(&oracle::hessian(p)).is_some())
        .take(count)
        .collect()
}

#[test]
fn max_sum_is_exact_on_small_trees() {
    for seed in 0..40u64 {
        let n = 2 + seed as usize % 5;
        let p = instance(Topology::Tree, n, seed);
        for k in 1..=3 {
            let cfg = SolverConfig {
                k,
                seed,
                ..SolverConfig::default()
            };
            let plain = HcmsConfig {
                max_sum_iters: 2 * n,
                adjust: false,
            };
            let m = hcms_solve(&p, &cfg, plain).unwrap();
            let best = discrete_search(&p, &m.points, 1_000).unwrap();
            assert!(
                (m.cost - best.cost).abs() <= 1e-9 * best.cost.abs().max(1.0),
                "seed {seed}, k {k}: max-sum {} vs exhaustive {}",
                m.cost,
                best.cost
            );
        }
    }
}

/// Refinement descends each agent's own local objective, but later agents
/// answer a different committed value, so single instances can end worse
/// than discrete CoCoA. The ordering holds on aggregate.
#[test]
fn refinement_helps_on_convex_instances() {
    let instances = convex_instances(40);
    let (mut refined_sum, mut discrete_sum, mut no_worse) = (0.0, 0.0, 0);
    for (seed, p) in &instances {
        let cfg = SolverConfig {
            seed: *seed,
            ..SolverConfig::default()
        };
        let refined = fdcop::solve(p, &cfg).unwrap().cost;
        let discrete = cocoa_solve(p, &cfg).unwrap().cost;
        refined_sum += refined;
        discrete_sum += discrete;
        no_worse += usize::from(refined <= discrete + 1e-9);
    }
    assert!(
        refined_sum < discrete_sum,
        "ccocoa {refined_sum} vs cocoa {discrete_sum}"
    );
    assert!(
        no_worse * 10 >= instances.len() * 8,
        "ccocoa no worse on {no_worse}/{}",
        instances.len()
    );
}

#[test]
fn convex_runs_stay_above_the_analytic_minimum() {
    for (seed, p) in convex_instances(25) {
        let oracle::QuadraticMin::Minimum { cost, .. } = oracle::quadratic_global_min(&p) else {
            unreachable!("instances are positive definite");
        };
        let m = fdcop::solve(
            &p,
            &SolverConfig {
                seed,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(m.cost >= cost - 1e-9 * cost.abs().max(1.0));
    }
}

#[test]
fn hcms_message_count_is_four_per_edge_per_round() {
    for seed in 0..8u64 {
        let p = instance(Topology::ALL[seed as usize % 4], 10, seed);
        for iters in [0, 1, 7] {
            let h = HcmsConfig {
                max_sum_iters: iters,
                adjust: true,
            };
            let m = hcms_solve(
                &p,
                &SolverConfig {
                    seed,
                    ..SolverConfig::default()
                },
                h,
            )
            .unwrap();
            assert_eq!(
                m.messages.total(),
                4 * p.edges().len() as u64 * iters as u64
            );
            assert_eq!(
                m.messages.get(MessageKind::MaxSumQ),
                m.messages.get(MessageKind::MaxSumR)
            );
        }
    }
}

#[test]
fn hcms_keeps_points_in_domain() {
    let p = instance(Topology::DenseEr, 12, 3);
    let solver = Hcms::new(SolverConfig::default(), HcmsConfig::default());
    let m = engine::run(&solver, &p, 3, RunOptions::default()).unwrap();
    for (i, pts) in m.points.iter().enumerate() {
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|&v| p.domain(i).contains(v)));
    }
}

#[test]
fn trace_lists_every_network_message() {
    let p = instance(Topology::ScaleFree, 9, 4);
    let solver = fdcop::CCoCoA::new(SolverConfig::default());
    let m = engine::run(&solver, &p, 4, RunOptions { trace: true }).unwrap();
    let trace = m.trace.as_ref().unwrap();
    assert_eq!(trace.len() as u64, m.messages.total());
    assert!(trace.windows(2).all(|w| w[0].seq < w[1].seq));
    assert!(trace.iter().all(|t| p.are_neighbors(t.sender, t.receiver)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hold_free_runs_send_ten_messages_per_edge(
        seed in 0u64..10_000,
        topo in 0usize..4,
        n in 2usize..16,
        k in 1usize..5,
    ) {
        let p = instance(Topology::ALL[topo], n, seed);
        let cfg = SolverConfig { k, seed, ..SolverConfig::default() };
        let m = fdcop::solve(&p, &cfg).unwrap();
        let e = p.edges().len() as u64;
        let max_degree = p.agents().map(|i| p.degree(i)).max().unwrap() as u64;
        if m.hold_events == 0 {
            prop_assert_eq!(m.messages.total(), 10 * e);
        }
        prop_assert!(m.messages.total() <= 10 * e + 4 * m.hold_events * max_degree);
        prop_assert_eq!(m.messages.get(MessageKind::SetValue), 2 * e);
        prop_assert_eq!(m.assignment.len(), n);
    }

    #[test]
    fn same_seed_same_outcome(seed in 0u64..10_000, topo in 0usize..4) {
        let p = instance(Topology::ALL[topo], 12, seed);
        let cfg = SolverConfig { seed, ..SolverConfig::default() };
        let a = fdcop::solve(&p, &cfg).unwrap();
        let b = fdcop::solve(&p, &cfg).unwrap();
        prop_assert!(a.same_outcome(&b));
    }
}
