use orsim_core::analysis::{coordination_overhead, network_path_costs, total_path_cost};
use orsim_core::oracle::{exact_single_hop, exact_two_hop, LayeredChain, StateBound};
use orsim_core::topology::fixtures::{self, default_frame};
use orsim_core::{
    analysis, BitErrorRate, ChannelModel, Error, ForwarderEntry, ForwarderSet, NodeId,
};

const PROBS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const COSTS: [f64; 3] = [0.0, 1.0, 2.5];

/// Every forwarder set of `size` entries over the probability and cost grids.
fn grid_sets(size: usize) -> Vec<ForwarderSet> {
    let choices: Vec<(f64, f64)> = PROBS
        .iter()
        .flat_map(|&p| COSTS.iter().map(move |&y| (p, y)))
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; size];
    loop {
        let entries = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                ForwarderEntry::new(NodeId(i as u32 + 1), choices[k].0, choices[k].1).unwrap()
            })
            .collect();
        out.push(ForwarderSet::new(entries).unwrap());
        let mut pos = 0;
        loop {
            if pos == size {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < choices.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn closed_forms_match_enumeration_on_full_grid() {
    let mut checked = 0;
    for size in 1..=4 {
        for fs in grid_sets(size) {
            let exact = exact_single_hop(&fs).unwrap();
            assert!((exact.total_probability - 1.0).abs() < 1e-12);
            assert!(
                (coordination_overhead(&fs) - exact.overhead).abs() < 1e-12,
                "{fs:?}"
            );
            match (total_path_cost(&fs), exact.expected_cost) {
                (Ok(y), Some(e)) => assert!((y - e).abs() < 1e-12, "{fs:?}: {y} vs {e}"),
                (Err(Error::UnreachableForwarderSet), None) => {}
                (got, want) => panic!("{fs:?}: closed form {got:?}, oracle {want:?}"),
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 15 + 225 + 3375 + 50625);
}

#[test]
fn two_hop_chain_composes() {
    let frame = default_frame();
    let ber = analysis::ber_for_link_success(0.8, &frame, 1.0).unwrap();
    let t = fixtures::chain(frame, ChannelModel::single(1.0).unwrap(), &[ber, ber]).unwrap();
    let costs = network_path_costs(&t).unwrap();
    let p = analysis::link_success(ber, &frame, 1.0);
    let exact =
        exact_two_hop(&LayeredChain::line(&[p, p]).unwrap(), StateBound::default()).unwrap();
    let far = costs.get(NodeId(2)).unwrap();
    assert!((far - 2.5).abs() < 1e-9);
    assert!((far - exact).abs() < 1e-12, "{far} vs {exact}");
}

#[test]
fn diamond_matches_equivalent_forwarder_set() {
    let frame = default_frame();
    let half = analysis::ber_for_link_success(0.5, &frame, 1.0).unwrap();
    let t = fixtures::diamond(
        frame,
        ChannelModel::single(1.0).unwrap(),
        half,
        BitErrorRate::ZERO,
        None,
    )
    .unwrap();
    let costs = network_path_costs(&t).unwrap();
    let p = analysis::link_success(half, &frame, 1.0);
    let chain = LayeredChain::new(vec![vec![vec![p, p]], vec![vec![1.0], vec![1.0]]]).unwrap();
    let exact = exact_two_hop(&chain, StateBound::default()).unwrap();
    let fs = ForwarderSet::new(vec![
        ForwarderEntry::new(NodeId(1), p, 1.0).unwrap(),
        ForwarderEntry::new(NodeId(2), p, 1.0).unwrap(),
    ])
    .unwrap();
    let closed = total_path_cost(&fs).unwrap();
    assert!((exact - closed).abs() < 1e-12);
    assert!((costs.get(NodeId(3)).unwrap() - closed).abs() < 1e-12);
}
