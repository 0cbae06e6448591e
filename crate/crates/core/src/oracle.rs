//! Brute-force references for the closed forms in [`crate::analysis`].
//!
//! Nothing here calls into `analysis`: reception subsets are enumerated
//! outright, multi-hop costs come from solving the absorbing Markov chain
//! with Gaussian elimination, and frame errors are drawn bit by bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ForwarderEntry, ForwarderSet, FrameParams};

/// Largest forwarder set [`exact_single_hop`] will enumerate.
pub const MAX_ENUMERATED: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleHopExact {
    /// Expected transmissions to the gateway; `None` when no subset with a
    /// receiver has positive probability.
    pub expected_cost: Option<f64>,
    /// Sum over reception subsets of `P(S) * Y` of the subset's
    /// highest-priority member.
    pub overhead: f64,
    /// Total probability mass of the enumeration; 1 up to rounding.
    pub total_probability: f64,
}

fn leader(entries: &[ForwarderEntry], mask: u32) -> &ForwarderEntry {
    entries
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, e)| e)
        .min_by(|a, b| {
            a.remaining_cost
                .total_cmp(&b.remaining_cost)
                .then(a.node.cmp(&b.node))
        })
        .expect("non-empty mask")
}

/// Enumerates all `2^N` reception subsets of `fs`.
pub fn exact_single_hop(fs: &ForwarderSet) -> Result<SingleHopExact> {
    let entries = fs.entries();
    if entries.is_empty() {
        return Err(Error::EmptyForwarderSet);
    }
    if entries.len() > MAX_ENUMERATED {
        return Err(Error::StateSpaceTooLarge(format!(
            "{} forwarders exceed the enumeration limit of {MAX_ENUMERATED}",
            entries.len()
        )));
    }
    let mut total = 0.0;
    let mut some_received = 0.0;
    let mut leader_cost = 0.0;
    for mask in 0u32..(1 << entries.len()) {
        let prob: f64 = entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if mask & (1 << i) != 0 {
                    e.p_link
                } else {
                    1.0 - e.p_link
                }
            })
            .product();
        total += prob;
        if mask == 0 || prob == 0.0 {
            continue;
        }
        some_received += prob;
        leader_cost += prob * leader(entries, mask).remaining_cost;
    }
    let expected_cost = (some_received > 0.0).then(|| (1.0 + leader_cost) / some_received);
    Ok(SingleHopExact {
        expected_cost,
        overhead: leader_cost,
        total_probability: total,
    })
}

/// Layered delivery network: layer 0 is the source, the last layer is the
/// gateway, and `links[h][i][j]` is the success probability from node `i`
/// of layer `h` to node `j` of layer `h + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredChain {
    links: Vec<Vec<Vec<f64>>>,
}

impl LayeredChain {
    pub fn new(links: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::param("chain", "at least one hop is required"));
        }
        if links[0].len() != 1 {
            return Err(Error::param(
                "chain",
                "the first layer must hold only the source",
            ));
        }
        for (h, layer) in links.iter().enumerate() {
            let width = layer[0].len();
            if width == 0 || layer.iter().any(|row| row.len() != width) {
                return Err(Error::param(
                    "chain",
                    format!("ragged transition rows at hop {h}"),
                ));
            }
            if let Some(next) = links.get(h + 1) {
                if next.len() != width {
                    return Err(Error::param(
                        "chain",
                        format!("layer {} width mismatch", h + 1),
                    ));
                }
            } else if width != 1 {
                return Err(Error::param(
                    "chain",
                    "the last layer must hold only the gateway",
                ));
            }
            if layer.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::param(
                    "chain",
                    format!("probability out of range at hop {h}"),
                ));
            }
        }
        Ok(LayeredChain { links })
    }

    /// Single path; `successes[h]` is the success of hop `h`.
    pub fn line(successes: &[f64]) -> Result<Self> {
        LayeredChain::new(successes.iter().map(|&p| vec![vec![p]]).collect())
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    fn width(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.links[layer - 1][0].len()
        }
    }

    fn max_width(&self) -> usize {
        (0..=self.hops()).map(|l| self.width(l)).max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateBound {
    pub max_hops: usize,
    pub max_width: usize,
}

impl Default for StateBound {
    fn default() -> Self {
        StateBound {
            max_hops: 3,
            max_width: 2,
        }
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (x, &y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Exact expected transmissions from source to gateway through a layered
/// chain, by absorbing-state analysis of the packet holder.
///
/// The packet moves to the lowest-cost receiver of each transmission, so
/// priorities at layer `h` need the cost-to-go of layer `h + 1`; layers are
/// therefore solved back to front, each time as the full absorbing chain
/// over every transient holder from that layer on.
pub fn exact_two_hop(chain: &LayeredChain, bound: StateBound) -> Result<f64> {
    if chain.hops() > bound.max_hops || chain.max_width() > bound.max_width {
        return Err(Error::StateSpaceTooLarge(format!(
            "{} hops / width {} exceed bound {} hops / width {}",
            chain.hops(),
            chain.max_width(),
            bound.max_hops,
            bound.max_width
        )));
    }
    let hops = chain.hops();
    // costs[layer][node]; the gateway layer costs nothing.
    let mut costs: Vec<Vec<f64>> = (0..=hops).map(|l| vec![0.0; chain.width(l)]).collect();

    for start in (0..hops).rev() {
        // Transient states: every node of layers start..hops.
        let states: Vec<(usize, usize)> = (start..hops)
            .flat_map(|l| (0..chain.width(l)).map(move |i| (l, i)))
            .collect();
        let index = |l: usize, i: usize| states.iter().position(|&s| s == (l, i));
        let n = states.len();
        let mut a = vec![vec![0.0; n]; n];
        let b = vec![1.0; n];
        for (row, &(l, i)) in states.iter().enumerate() {
            a[row][row] += 1.0;
            let probs = &chain.links[l][i];
            let next_costs = &costs[l + 1];
            for mask in 0u32..(1 << probs.len()) {
                let p: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &q)| if mask & (1 << j) != 0 { q } else { 1.0 - q })
                    .product();
                if p == 0.0 {
                    continue;
                }
                let target = if mask == 0 {
                    Some(row)
                } else {
                    let j = (0..probs.len())
                        .filter(|j| mask & (1 << j) != 0)
                        .min_by(|&x, &y| next_costs[x].total_cmp(&next_costs[y]).then(x.cmp(&y)))
                        .expect("non-empty mask");
                    // The gateway layer is absorbing.
                    index(l + 1, j)
                };
                if let Some(col) = target {
                    a[row][col] -= p;
                }
            }
        }
        let x = solve_linear(a, b).ok_or(Error::UnreachableForwarderSet)?;
        for (k, &(l, i)) in states.iter().enumerate() {
            costs[l][i] = x[k];
        }
    }
    Ok(costs[0][0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMissEstimate {
    pub trials: u64,
    /// Fraction of trials where every micro-frame had a bit error.
    pub preamble_miss: f64,
    /// Fraction of trials where the data frame had a bit error.
    pub data_miss: f64,
    /// Fraction of trials with both of the above.
    pub joint_miss: f64,
}

fn frame_has_error(rng: &mut ChaCha8Rng, p: f64, bits: u32) -> bool {
    (0..bits).any(|_| rng.random::<f64>() < p)
}

/// Draws every bit of every micro-frame and data frame.
pub fn bit_level_frame_oracle(
    p: f64,
    frame: &FrameParams,
    trials: u64,
    seed: u64,
) -> Result<FrameMissEstimate> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(
            "bit_error_rate",
            format!("{p} is not a probability"),
        ));
    }
    if trials == 0 {
        return Err(Error::param("trials", "at least one trial is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pre, mut data, mut joint) = (0u64, 0u64, 0u64);
    for _ in 0..trials {
        let mut all_micro_bad = true;
        for _ in 0..frame.micro_frames() {
            // Keep drawing every micro-frame so each trial consumes the
            // same stream shape regardless of earlier outcomes.
            if !frame_has_error(&mut rng, p, frame.micro_frame_bits()) {
                all_micro_bad = false;
            }
        }
        let data_bad = frame_has_error(&mut rng, p, frame.data_bits());
        pre += u64::from(all_micro_bad);
        data += u64::from(data_bad);
        joint += u64::from(all_micro_bad && data_bad);
    }
    let n = trials as f64;
    Ok(FrameMissEstimate {
        trials,
        preamble_miss: pre as f64 / n,
        data_miss: data as f64 / n,
        joint_miss: joint as f64 / n,
    })
}
