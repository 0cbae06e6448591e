use orsim_core::analysis::{self, network_path_costs_lenient};
use orsim_core::engine::{empirical_link_success, run_experiment, simulate_delivery};
use orsim_core::oracle::bit_level_frame_oracle;
use orsim_core::topology::{fixtures, generate, BerModel, GeneratorConfig};
use orsim_core::{
    BitErrorRate, ChannelModel, EventKind, NodeId, Position, ProtocolMode, SimConfig, SourcePolicy,
    Topology,
};
use proptest::prelude::*;

fn field(seed: u64, nodes: usize, p_sw: f64) -> Option<Topology> {
    let config = GeneratorConfig {
        nodes,
        area_side: 100.0,
        radio_range: 40.0,
        gateway_position: Position::new(50.0, 50.0),
        ber: BerModel::Distance {
            p_min: 0.0,
            p_max: 0.01,
        },
        frame: fixtures::default_frame(),
        channel: ChannelModel::single(p_sw).unwrap(),
    };
    generate(&config, seed).ok()
}

fn mode() -> impl Strategy<Value = ProtocolMode> {
    prop_oneof![
        Just(ProtocolMode::ReceiverBased),
        Just(ProtocolMode::SenderPrioritized)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traces_are_consistent_and_move_forward(
        seed in 0u64..500,
        nodes in 2usize..25,
        p_sw in 0.0f64..=1.0,
        mode in mode(),
        suppression in any::<bool>(),
        reps in 0u64..40,
    ) {
        let Some(t) = field(seed, nodes, p_sw) else { return Ok(()) };
        let costs = network_path_costs_lenient(&t).unwrap();
        let mut config = SimConfig::new(mode, SourcePolicy::Uniform);
        config.seed = seed;
        config.suppression = suppression;
        for r in 0..reps {
            let trace = simulate_delivery(&t, &costs, &config, r).unwrap();
            prop_assert!(trace.is_consistent());
            prop_assert!(trace.transmissions >= trace.hops.unwrap_or(0));
            for e in trace.events.iter().filter(|e| e.kind == EventKind::Receive) {
                let from: u32 = e.detail.strip_prefix("from ").unwrap().parse().unwrap();
                prop_assert!(t.node(e.actor).unwrap().hop_id < t.node(NodeId(from)).unwrap().hop_id);
            }
            prop_assert_eq!(&trace, &simulate_delivery(&t, &costs, &config, r).unwrap());
        }
    }
}

#[test]
fn experiments_are_deterministic() {
    let t = (0..).find_map(|s| field(s, 30, 0.8)).unwrap();
    for mode in ProtocolMode::ALL {
        let mut config = SimConfig::new(mode, SourcePolicy::Uniform);
        config.replications = 500;
        config.seed = 99;
        assert_eq!(
            run_experiment(&t, &config).unwrap(),
            run_experiment(&t, &config).unwrap()
        );
    }
}

#[test]
fn perfect_overhearing_never_duplicates() {
    let frame = fixtures::default_frame();
    let half = analysis::ber_for_reception(0.5, &frame, 1.0).unwrap();
    let t = fixtures::diamond(
        frame,
        ChannelModel::single(1.0).unwrap(),
        half,
        BitErrorRate::ZERO,
        Some(BitErrorRate::ZERO),
    )
    .unwrap();
    let costs = network_path_costs_lenient(&t).unwrap();
    for mode in ProtocolMode::ALL {
        let config = SimConfig::new(mode, SourcePolicy::Fixed(NodeId(3)));
        for r in 0..2000 {
            let trace = simulate_delivery(&t, &costs, &config, r).unwrap();
            assert_eq!(trace.count(EventKind::DuplicateForward), 0);
        }
    }
}

#[test]
fn bit_level_link_success_matches_closed_form() {
    let frame = fixtures::default_frame();
    let ber = BitErrorRate::new(0.01).unwrap();
    let mut t = Topology::new(NodeId(0), frame, ChannelModel::single(1.0).unwrap());
    t.add_node(NodeId(1), Position::new(1.0, 0.0));
    t.connect(NodeId(0), NodeId(1), ber);
    let trials = 1_000_000u64;
    let est = empirical_link_success(&t, (NodeId(1), NodeId(0)), &frame, trials, 5).unwrap();
    let want = analysis::reception_probability(ber, &frame, 1.0);
    assert!((want - 0.3638477203486615).abs() < 1e-12);
    let se = (want * (1.0 - want) / trials as f64).sqrt();
    assert!((est - want).abs() < 3.0 * se, "{est} vs {want}");
}

#[test]
fn frame_oracle_matches_miss_factors() {
    let frame = fixtures::default_frame();
    let ber = BitErrorRate::new(0.01).unwrap();
    let trials = 1_000_000u64;
    let est = bit_level_frame_oracle(0.01, &frame, trials, 21).unwrap();
    let pre = analysis::preamble_miss_probability(ber, &frame);
    let data = analysis::data_miss_probability(ber, &frame);
    let joint = analysis::failure_probability(ber, &frame, 1.0);
    for (got, want) in [
        (est.preamble_miss, pre),
        (est.data_miss, data),
        (est.joint_miss, joint),
    ] {
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((got - want).abs() < 3.0 * se, "{got} vs {want}");
    }
}
