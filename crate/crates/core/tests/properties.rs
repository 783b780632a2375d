//! Engine invariants over randomized small configurations.

use proptest::prelude::*;

use sentinel_core::sim::{deploy, FailureInjection, FailureTarget, ProtocolKind, SimConfig};
use sentinel_core::NodeState;

fn small_config() -> impl Strategy<Value = SimConfig> {
    (
        0u32..40,
        any::<u64>(),
        prop_oneof![Just(ProtocolKind::Sentinel), Just(ProtocolKind::Peas)],
        1u32..4,
        prop_oneof![Just(1.5), Just(2.0), Just(3.0)],
        0.0f64..0.3,
        50.0f64..600.0,
        proptest::option::of(0.0f64..1.0),
    )
        .prop_map(|(n, seed, protocol, k, beta, loss, duration, fail)| SimConfig {
            n_nodes: n,
            seed,
            protocol,
            k_probes: k,
            beta,
            loss_probability: loss,
            duration,
            field_width: 30.0,
            field_height: 30.0,
            failure_injections: fail
                .map(|f| vec![FailureInjection { target: FailureTarget::RandomSentinel, time: f * duration }])
                .unwrap_or_default(),
            ..SimConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_respect_engine_invariants(cfg in small_config()) {
        let n = cfg.n_nodes;
        let log = deploy(cfg.clone()).unwrap().trace_transitions().trace_sleeps().run().unwrap();

        // partition of the population and sample clock
        for r in &log.records {
            prop_assert_eq!(r.state_total(), n);
        }
        prop_assert!(log.records.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(log.records.windows(2).all(|w| w[0].total_energy_consumed <= w[1].total_energy_consumed));

        // energy conservation
        for node in &log.nodes {
            prop_assert!(node.ledger.reconciliation_error(&log.config.energy) <= 1e-9);
            prop_assert!(node.ledger.consumed <= node.ledger.initial);
        }

        // transition safety and dead permanence
        let transitions = log.transitions.as_ref().unwrap();
        for t in transitions {
            prop_assert!(t.from.can_transition_to(t.to), "{:?}", t);
            prop_assert!(t.time <= log.config.duration);
        }
        for node in &log.nodes {
            let mine: Vec<_> = transitions.iter().filter(|t| t.node == node.id).collect();
            prop_assert!(mine.windows(2).all(|w| w[0].to == w[1].from));
            if let Some(last) = mine.last() {
                prop_assert_eq!(last.to, node.final_state);
            }
        }

        // sleep liveness: every Sentinel sleep is finite and inside the clamp
        for s in log.sleep_trace.as_ref().unwrap() {
            let hi = (log.config.t_s_max_factor / s.probe_rate).max(log.config.t_s_min);
            let tol = 1e-9 * s.time.max(1.0);
            prop_assert!(s.sleep.is_finite());
            prop_assert!(s.sleep >= log.config.t_s_min - tol && s.sleep <= hi + tol);
        }

        // PEAS never withdraws and never changes its rate
        if log.config.protocol == ProtocolKind::Peas {
            prop_assert_eq!(log.counters.withdrawals, 0);
            prop_assert!(!transitions.iter().any(|t| t.from == NodeState::Active && t.to == NodeState::Sleeping));
            prop_assert!(log.nodes.iter().all(|x| x.final_probe_rate == log.config.lambda_init));
        }

        // counters are consistent with each other
        let c = &log.counters;
        prop_assert!(c.reply_frames_delivered <= c.replies_sent);
        prop_assert!(c.withdrawals <= c.activations);
        prop_assert!(c.replies_sent <= c.probes_received);

        // determinism
        let again = deploy(cfg).unwrap().trace_transitions().trace_sleeps().run().unwrap();
        prop_assert_eq!(log.to_csv(), again.to_csv());
        prop_assert_eq!(log.transitions, again.transitions);
    }

    #[test]
    fn lossless_isolated_pairs_conserve_replies(seed in any::<u64>(), gap in 21.0f64..40.0) {
        // Two clusters out of each other's range: one guard and one reserve
        // node each, no loss. Every reply sent reaches the reserve node unless
        // it is asleep or collides.
        let cfg = SimConfig { n_nodes: 4, seed, loss_probability: 0.0, duration: 300.0, ..SimConfig::default() };
        let layout = sentinel_core::sim::Layout {
            positions: vec![
                sentinel_core::Point::planar(0.0, 0.0),
                sentinel_core::Point::planar(1.0, 0.0),
                sentinel_core::Point::planar(gap + 1.0, 0.0),
                sentinel_core::Point::planar(gap + 2.0, 0.0),
            ],
            first_wake: vec![1.0, 5.0, 2.0, 6.0],
        };
        let log = sentinel_core::World::with_layout(cfg, layout).unwrap().run().unwrap();
        prop_assert_eq!(log.counters.collisions, 0);
        prop_assert_eq!(log.counters.replies_received, log.counters.replies_sent);
        prop_assert_eq!(log.counters.probes_received, log.counters.probes_sent - 6);
    }
}
