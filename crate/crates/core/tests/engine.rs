//! Scripted and randomized end-to-end scenarios for the simulator.

use sentinel_core::metrics::MetricsLog;
use sentinel_core::sim::{simulate, EnergyModel, FailureInjection, FailureTarget, Layout, ProtocolKind, SimConfig, World};
use sentinel_core::{NodeState, Point};

fn scripted(config: SimConfig, nodes: &[((f64, f64), f64)]) -> MetricsLog {
    let layout = Layout {
        positions: nodes.iter().map(|&((x, y), _)| Point::planar(x, y)).collect(),
        first_wake: nodes.iter().map(|&(_, t)| t).collect(),
    };
    let config = SimConfig { n_nodes: nodes.len() as u32, ..config };
    World::with_layout(config, layout).unwrap().trace_transitions().run().unwrap()
}

fn quiet() -> SimConfig {
    SimConfig { loss_probability: 0.0, ..SimConfig::default() }
}

#[test]
fn identical_seeds_give_identical_output() {
    let cfg = SimConfig { n_nodes: 200, seed: 42, duration: 600.0, ..SimConfig::default() };
    let a = simulate(cfg.clone()).unwrap();
    let b = simulate(cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.active_trace, b.active_trace);
}

#[test]
fn different_seeds_differ() {
    let a = simulate(SimConfig { seed: 1, duration: 300.0, ..SimConfig::default() }).unwrap();
    let b = simulate(SimConfig { seed: 2, duration: 300.0, ..SimConfig::default() }).unwrap();
    assert_ne!(a.nodes[0].position, b.nodes[0].position);
}

#[test]
fn deployment_stays_in_the_field() {
    let cfg = SimConfig { n_nodes: 200, duration: 0.0, field_width: 50.0, field_height: 30.0, ..SimConfig::default() };
    let log = simulate(cfg).unwrap();
    assert_eq!(log.nodes.len(), 200);
    assert!(log.nodes.iter().all(|n| (0.0..=50.0).contains(&n.position.x) && (0.0..=30.0).contains(&n.position.y)));
}

#[test]
fn empty_world_terminates_with_zero_metrics() {
    let log = simulate(SimConfig { n_nodes: 0, ..SimConfig::default() }).unwrap();
    assert!(!log.records.is_empty());
    for r in &log.records {
        assert_eq!(r.state_total(), 0);
        assert_eq!(r.total_energy_consumed, 0.0);
        assert_eq!(r.coverage_fraction, 0.0);
        assert_eq!(r.probes_sent, 0);
    }
}

#[test]
fn zero_duration_gives_one_initial_sample() {
    let log = simulate(SimConfig { duration: 0.0, ..SimConfig::default() }).unwrap();
    assert_eq!(log.records.len(), 1);
    let r = &log.records[0];
    assert_eq!(r.time, 0.0);
    assert_eq!(r.sleeping_count, 200);
    assert_eq!(log.counters, Default::default());
    assert_eq!(log.total_energy(), 0.0);
}

#[test]
fn lone_node_stands_guard_until_exhaustion() {
    let energy = EnergyModel { initial_energy: 1.0, ..EnergyModel::default() };
    let cfg = SimConfig { duration: 200.0, energy, ..quiet() };
    let log = scripted(cfg, &[((25.0, 25.0), 5.0)]);
    let t = log.transitions.as_ref().unwrap();
    let path: Vec<(NodeState, NodeState)> = t.iter().map(|x| (x.from, x.to)).collect();
    assert_eq!(
        path,
        vec![
            (NodeState::Sleeping, NodeState::Probing),
            (NodeState::Probing, NodeState::Active),
            (NodeState::Active, NodeState::Dead)
        ]
    );
    // three one-second windows after waking at t = 5
    assert!((t[1].time - 8.0).abs() < 1e-12);
    let e = EnergyModel::default();
    let before_active = 5.0 * e.p_sleep + 3.0 * e.p_probe_listen + 3.0 * e.e_tx;
    let death = 8.0 + (1.0 - before_active) / e.p_active;
    let node = &log.nodes[0];
    assert!((node.ledger.death_time.unwrap() - death).abs() < 1e-9);
    assert!((t[2].time - death).abs() < 1e-9);
    assert_eq!(node.ledger.tx_frames, 3);
    assert_eq!(node.final_state, NodeState::Dead);
}

#[test]
fn ten_active_seconds_cost_fifteen_hundredths_of_a_joule() {
    let cfg = SimConfig { duration: 18.0, ..quiet() };
    let log = scripted(cfg, &[((25.0, 25.0), 5.0)]);
    let e = EnergyModel::default();
    let expected = 5.0 * e.p_sleep + 3.0 * e.p_probe_listen + 3.0 * e.e_tx + 0.15;
    let node = &log.nodes[0];
    assert!((node.ledger.consumed - expected).abs() < 1e-12, "{}", node.ledger.consumed);
    assert!((node.ledger.state_time[NodeState::Active.index()] - 10.0).abs() < 1e-12);
}

#[test]
fn out_of_range_nodes_never_hear_each_other() {
    let cfg = SimConfig { duration: 60.0, ..quiet() };
    let log = scripted(cfg, &[((5.0, 5.0), 1.0), ((45.0, 45.0), 1.5)]);
    assert_eq!(log.counters.probes_sent, 6);
    assert_eq!(log.counters.probes_received, 0);
    assert!(log.nodes.iter().all(|n| n.final_state == NodeState::Active));
}

#[test]
fn reserve_node_sleeps_on_a_guard_reply() {
    let cfg = SimConfig { duration: 30.0, ..quiet() };
    let log = scripted(cfg, &[((20.0, 20.0), 1.0), ((30.0, 20.0), 10.0)]);
    assert_eq!(log.nodes[0].final_state, NodeState::Active);
    let t: Vec<_> = log.transitions.unwrap().into_iter().filter(|x| x.node == 1).collect();
    assert_eq!(t[0].to, NodeState::Probing);
    assert_eq!(t[1].to, NodeState::Sleeping);
    // answered within the first window
    assert!(t[1].time - t[0].time < 0.1);
    assert!(log.nodes[1].final_probe_rate != SimConfig::default().lambda_init);
}

#[test]
fn conflicting_sentinels_resolve_to_one() {
    // Both wake together, their requests collide, and both stand guard; a
    // third node's probe makes them hear each other.
    let cfg = SimConfig { duration: 200.0, ..quiet() };
    let log = scripted(cfg, &[((10.0, 10.0), 1.0), ((15.0, 10.0), 1.0), ((12.0, 14.0), 20.0)]);
    assert!(log.counters.withdrawals >= 1);
    let active: Vec<u32> = log.nodes.iter().filter(|n| n.final_state == NodeState::Active).map(|n| n.id).collect();
    assert_eq!(active.len(), 1, "{active:?}");
    let last = log.conflicts.last().unwrap();
    assert_eq!(last.conflicting_pairs, 0);
}

#[test]
fn peas_keeps_redundant_workers() {
    let cfg = SimConfig { duration: 200.0, protocol: ProtocolKind::Peas, ..quiet() };
    let log = scripted(cfg, &[((10.0, 10.0), 1.0), ((15.0, 10.0), 1.0), ((12.0, 14.0), 20.0)]);
    assert_eq!(log.counters.withdrawals, 0);
    assert_eq!(log.nodes[0].final_state, NodeState::Active);
    assert_eq!(log.nodes[1].final_state, NodeState::Active);
    assert_eq!(log.nodes[2].final_state, NodeState::Sleeping);
}

#[test]
fn killing_the_only_sentinel_opens_and_heals_a_hole() {
    let cfg = SimConfig {
        duration: 4000.0,
        failure_injections: vec![FailureInjection { target: FailureTarget::Node(0), time: 100.0 }],
        ..quiet()
    };
    let log = scripted(cfg, &[((25.0, 25.0), 1.0), ((27.0, 25.0), 10.0)]);
    let f = &log.failures[0];
    assert!(f.was_active);
    assert_eq!(log.nodes[0].final_state, NodeState::Dead);
    assert_eq!(log.nodes[1].final_state, NodeState::Active);
    let latency = sentinel_core::recovery_latency(&log, 100.0, &f.position.unwrap(), 20.0).latency().unwrap();
    assert!(latency > 0.0);
    let dead = log.nodes[0].ledger.consumed;
    assert!(log.nodes[0].ledger.state_time[NodeState::Dead.index()] == 0.0 && dead > 0.0);
}

#[test]
fn killing_an_absent_sentinel_is_recorded_without_a_target() {
    let cfg = SimConfig {
        duration: 50.0,
        failure_injections: vec![FailureInjection { target: FailureTarget::RandomSentinel, time: 0.5 }],
        ..quiet()
    };
    let log = scripted(cfg, &[((25.0, 25.0), 5.0)]);
    assert_eq!(log.failures[0].node, None);
    assert_eq!(log.nodes[0].final_state, NodeState::Active);
}

#[test]
fn full_run_accounting_holds() {
    let cfg = SimConfig {
        failure_injections: vec![
            FailureInjection { target: FailureTarget::RandomSentinel, time: 1500.0 },
            FailureInjection { target: FailureTarget::Node(7), time: 3000.0 },
        ],
        ..SimConfig::default()
    };
    let log = sentinel_core::deploy(cfg).unwrap().trace_transitions().run().unwrap();
    for r in &log.records {
        assert_eq!(r.state_total(), 200);
    }
    assert!(log.records.windows(2).all(|w| w[0].time < w[1].time));
    assert_eq!(log.records.last().unwrap().time, 6000.0);
    for n in &log.nodes {
        assert!(n.ledger.reconciliation_error(&log.config.energy) <= 1e-9);
    }
    let total = log.records.last().unwrap().total_energy_consumed;
    assert!((total - log.total_energy()).abs() <= 1e-9 * total);
    let transitions = log.transitions.as_ref().unwrap();
    assert!(transitions.iter().all(|t| t.from.can_transition_to(t.to)));
    assert!(transitions.windows(2).all(|w| w[0].time <= w[1].time));
    // nothing leaves Dead
    assert!(!transitions.iter().any(|t| t.from == NodeState::Dead));
    let report = sentinel_core::overhead_report(&log);
    assert!(report.reply_conservation);
    assert!(log.counters.replies_sent <= log.counters.probes_received);
}

#[test]
fn first_sentinel_matches_between_protocols_without_loss() {
    for seed in [3, 8, 13] {
        let s = simulate(SimConfig { seed, duration: 60.0, ..quiet() }).unwrap();
        let p = simulate(SimConfig { seed, duration: 60.0, protocol: ProtocolKind::Peas, ..quiet() }).unwrap();
        let (a, b) = (&s.active_trace[0], &p.active_trace[0]);
        assert_eq!((a.node, a.time), (b.node, b.time), "seed {seed}");
    }
}

#[test]
fn peas_workers_only_accumulate_and_rate_is_fixed() {
    let log = simulate(SimConfig { protocol: ProtocolKind::Peas, seed: 5, ..SimConfig::default() }).unwrap();
    assert!(log.records.windows(2).all(|w| w[1].active_count >= w[0].active_count || w[1].dead_count > w[0].dead_count));
    assert!(log.active_trace.iter().all(|c| c.active));
    assert_eq!(log.counters.withdrawals, 0);
    let lambda = log.config.lambda_init;
    assert!(log.nodes.iter().all(|n| n.final_probe_rate == lambda));
}

#[test]
fn sentinel_rates_climb_to_the_clamp() {
    let log = simulate(SimConfig { seed: 5, ..SimConfig::default() }).unwrap();
    let at_max = log.nodes.iter().filter(|n| n.final_probe_rate == log.config.lambda_max).count();
    assert!(at_max > log.nodes.len() / 2, "{at_max}");
    let tr = sentinel_core::deploy(SimConfig { seed: 5, duration: 2000.0, ..SimConfig::default() })
        .unwrap()
        .trace_sleeps()
        .run()
        .unwrap()
        .sleep_trace
        .unwrap();
    let bounds = (log.config.t_s_min, f64::INFINITY);
    for s in &tr {
        let hi = (log.config.t_s_max_factor / s.probe_rate).max(bounds.0);
        // recorded as a difference of absolute times
        let tol = 1e-9 * s.time;
        assert!(s.sleep >= bounds.0 - tol && s.sleep <= hi + tol, "{s:?}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SimConfig { delta: 30.0, ..SimConfig::default() },
        SimConfig { r_c: 5.0, ..SimConfig::default() },
        SimConfig { loss_probability: 1.0, ..SimConfig::default() },
        SimConfig { field_width: 0.0, ..SimConfig::default() },
        SimConfig { k_probes: 0, ..SimConfig::default() },
        SimConfig {
            failure_injections: vec![FailureInjection { target: FailureTarget::Node(500), time: 10.0 }],
            ..SimConfig::default()
        },
        SimConfig {
            failure_injections: vec![FailureInjection { target: FailureTarget::Node(1), time: 7000.0 }],
            ..SimConfig::default()
        },
    ];
    for cfg in bad {
        assert!(simulate(cfg).is_err());
    }
}
