//! Oracle-versus-closed-form checks behind `orsim verify`.

use std::fmt::Write as _;
use std::str::FromStr;

use orsim_core::analysis::{self, network_path_costs};
use orsim_core::oracle::{
    bit_level_frame_oracle, exact_single_hop, exact_two_hop, LayeredChain, StateBound,
};
use orsim_core::topology::fixtures;
use orsim_core::{BitErrorRate, ChannelModel, ForwarderEntry, ForwarderSet, NodeId};

use crate::error::{CliError, Result};

/// The closed forms under test. [`Analytic`] forwards to the analysis
/// module; tests substitute broken versions to check that failures surface.
pub trait ClosedForm {
    fn total_path_cost(&self, fs: &ForwarderSet) -> orsim_core::Result<f64>;
    fn coordination_overhead(&self, fs: &ForwarderSet) -> f64;
}

pub struct Analytic;

impl ClosedForm for Analytic {
    fn total_path_cost(&self, fs: &ForwarderSet) -> orsim_core::Result<f64> {
        analysis::total_path_cost(fs)
    }

    fn coordination_overhead(&self, fs: &ForwarderSet) -> f64 {
        analysis::coordination_overhead(fs)
    }
}

pub const GRID_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub costs: Vec<f64>,
    /// Trials for the bit-level frame checks; 0 skips them.
    pub frame_trials: u64,
    pub seed: u64,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            sizes: vec![1, 2, 3, 4],
            probabilities: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            costs: vec![0.0, 1.0, 2.5],
            frame_trials: 200_000,
            seed: 0,
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::config(format!("grid.{key}"), format!("bad value `{v}`")))
        })
        .collect()
}

/// `sizes=1-4;p=0,0.5,1;cost=0,1;trials=100000;seed=3`. Keys left out keep
/// their defaults; `sizes` also takes a comma list.
impl FromStr for Grid {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Grid> {
        let empty = || CliError::config("grid", "empty verification grid");
        if s.trim().is_empty() {
            return Err(empty());
        }
        let mut grid = Grid::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                CliError::config("grid", format!("expected key=value, got `{part}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "sizes" => {
                    grid.sizes = match value.split_once('-') {
                        Some((lo, hi)) => {
                            let lo: usize = lo
                                .trim()
                                .parse()
                                .map_err(|_| CliError::config("grid.sizes", "bad range"))?;
                            let hi: usize = hi
                                .trim()
                                .parse()
                                .map_err(|_| CliError::config("grid.sizes", "bad range"))?;
                            (lo..=hi).collect()
                        }
                        None => list(key, value)?,
                    }
                }
                "p" => grid.probabilities = list(key, value)?,
                "cost" => grid.costs = list(key, value)?,
                "trials" => {
                    grid.frame_trials = value
                        .parse()
                        .map_err(|_| CliError::config("grid.trials", "bad count"))?
                }
                "seed" => {
                    grid.seed = value
                        .parse()
                        .map_err(|_| CliError::config("grid.seed", "bad seed"))?
                }
                other => return Err(CliError::config("grid", format!("unknown key `{other}`"))),
            }
        }
        if grid.sizes.is_empty() || grid.probabilities.is_empty() || grid.costs.is_empty() {
            return Err(empty());
        }
        if let Some(&s) = grid
            .sizes
            .iter()
            .find(|&&s| s == 0 || s > orsim_core::oracle::MAX_ENUMERATED)
        {
            return Err(CliError::config(
                "grid.sizes",
                format!(
                    "size {s} outside 1..={}",
                    orsim_core::oracle::MAX_ENUMERATED
                ),
            ));
        }
        if let Some(p) = grid
            .probabilities
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(CliError::config(
                "grid.p",
                format!("{p} is not a probability"),
            ));
        }
        if let Some(c) = grid.costs.iter().find(|c| !(**c >= 0.0)) {
            return Err(CliError::config("grid.cost", format!("{c} is not a cost")));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub name: String,
    pub checked: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Inputs and both values at the largest error.
    pub worst: Option<String>,
}

impl CaseReport {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        CaseReport {
            name: name.into(),
            checked: 0,
            max_error: 0.0,
            tolerance,
            worst: None,
        }
    }

    fn record(&mut self, error: f64, detail: impl FnOnce() -> String) {
        self.checked += 1;
        // NaN or infinity (reachability disagreement) always becomes worst.
        if !(error <= self.max_error) {
            self.max_error = if error.is_nan() { f64::INFINITY } else { error };
            self.worst = Some(detail());
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }

    pub fn line(&self) -> String {
        let mut s = format!(
            "{} {} checked={} max_abs_error={:e} tolerance={:e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.max_error,
            self.tolerance
        );
        if !self.passed() {
            if let Some(w) = &self.worst {
                let _ = write!(s, " worst: {w}");
            }
        }
        s
    }
}

fn grid_sets(size: usize, grid: &Grid) -> impl Iterator<Item = ForwarderSet> + '_ {
    let choices: Vec<(f64, f64)> = grid
        .probabilities
        .iter()
        .flat_map(|&p| grid.costs.iter().map(move |&y| (p, y)))
        .collect();
    let total = choices.len().pow(size as u32);
    (0..total).map(move |mut k| {
        let entries = (0..size)
            .map(|i| {
                let (p, y) = choices[k % choices.len()];
                k /= choices.len();
                ForwarderEntry::new(NodeId(i as u32 + 1), p, y).expect("grid values validated")
            })
            .collect();
        ForwarderSet::new(entries).expect("distinct nodes")
    })
}

fn describe(fs: &ForwarderSet) -> String {
    let parts: Vec<String> = fs
        .iter()
        .map(|e| format!("(node {}, p={}, Y={})", e.node, e.p_link, e.remaining_cost))
        .collect();
    format!("[{}]", parts.join(", "))
}

fn single_hop_cases(closed: &dyn ClosedForm, grid: &Grid) -> Result<Vec<CaseReport>> {
    let mut out = Vec::new();
    for &size in &grid.sizes {
        let mut cost = CaseReport::new(
            format!("single-hop total_path_cost size={size}"),
            GRID_TOLERANCE,
        );
        let mut overhead = CaseReport::new(
            format!("single-hop coordination_overhead size={size}"),
            GRID_TOLERANCE,
        );
        for fs in grid_sets(size, grid) {
            let exact = exact_single_hop(&fs)?;
            let c = closed.total_path_cost(&fs);
            let err = match (&c, exact.expected_cost) {
                (Ok(a), Some(b)) => (a - b).abs(),
                (Err(orsim_core::Error::UnreachableForwarderSet), None) => 0.0,
                _ => f64::INFINITY,
            };
            cost.record(err, || {
                let shown = c.as_ref().map_or_else(|e| e.to_string(), |v| v.to_string());
                let oracle = exact
                    .expected_cost
                    .map_or("unreachable".to_string(), |v| v.to_string());
                format!("{} closed_form={shown} oracle={oracle}", describe(&fs))
            });
            let o = closed.coordination_overhead(&fs);
            overhead.record((o - exact.overhead).abs(), || {
                format!(
                    "{} closed_form={o} oracle={}",
                    describe(&fs),
                    exact.overhead
                )
            });
        }
        out.push(cost);
        out.push(overhead);
    }
    Ok(out)
}

fn frame_cases(grid: &Grid) -> Result<Vec<CaseReport>> {
    if grid.frame_trials == 0 {
        return Ok(Vec::new());
    }
    let frame = fixtures::default_frame();
    let p = 0.01;
    let ber = BitErrorRate::new(p)?;
    let est = bit_level_frame_oracle(p, &frame, grid.frame_trials, grid.seed)?;
    let n = grid.frame_trials as f64;
    let checks = [
        (
            "preamble_miss",
            est.preamble_miss,
            analysis::preamble_miss_probability(ber, &frame),
        ),
        (
            "data_miss",
            est.data_miss,
            analysis::data_miss_probability(ber, &frame),
        ),
        (
            "joint_miss",
            est.joint_miss,
            analysis::failure_probability(ber, &frame, 1.0),
        ),
    ];
    Ok(checks
        .into_iter()
        .map(|(name, got, want)| {
            let se = (want * (1.0 - want) / n).sqrt();
            let mut c = CaseReport::new(
                format!(
                    "frame {name} (3 standard errors, {} trials)",
                    grid.frame_trials
                ),
                3.0 * se,
            );
            c.record((got - want).abs(), || {
                format!("p={p} m=8 r_m=2 d=100 bit_level={got} closed_form={want}")
            });
            c
        })
        .collect())
}

fn two_hop_cases() -> Result<Vec<CaseReport>> {
    let frame = fixtures::default_frame();
    let channel = ChannelModel::single(1.0)?;
    let mut out = Vec::new();
    for (name, success) in [
        ("two-hop lossless chain", 1.0),
        ("two-hop 0.8/0.8 chain", 0.8),
    ] {
        let ber = analysis::ber_for_link_success(success, &frame, 1.0)?;
        let t = fixtures::chain(frame, channel.clone(), &[ber, ber])?;
        let y = network_path_costs(&t)?.get(NodeId(2)).expect("far node");
        let p = analysis::link_success(ber, &frame, 1.0);
        let exact = exact_two_hop(&LayeredChain::line(&[p, p])?, StateBound::default())?;
        let mut c = CaseReport::new(name, GRID_TOLERANCE);
        c.record((y - exact).abs(), || {
            format!("p_link={p} network_path_costs={y} oracle={exact}")
        });
        out.push(c);
    }
    let half = analysis::ber_for_link_success(0.5, &frame, 1.0)?;
    let t = fixtures::diamond(frame, channel, half, BitErrorRate::ZERO, None)?;
    let y = network_path_costs(&t)?.get(NodeId(3)).expect("source");
    let p = analysis::link_success(half, &frame, 1.0);
    let exact = exact_two_hop(
        &LayeredChain::new(vec![vec![vec![p, p]], vec![vec![1.0], vec![1.0]]])?,
        StateBound::default(),
    )?;
    let mut c = CaseReport::new("two-hop diamond", GRID_TOLERANCE);
    c.record((y - exact).abs(), || {
        format!("p_link={p} network_path_costs={y} oracle={exact}")
    });
    out.push(c);
    Ok(out)
}

/// Runs every case; the caller decides what a failure means.
pub fn run(closed: &dyn ClosedForm, grid: &Grid) -> Result<Vec<CaseReport>> {
    let mut cases = single_hop_cases(closed, grid)?;
    cases.extend(frame_cases(grid)?);
    cases.extend(two_hop_cases()?);
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Skewed;

    impl ClosedForm for Skewed {
        fn total_path_cost(&self, fs: &ForwarderSet) -> orsim_core::Result<f64> {
            analysis::total_path_cost(fs)
        }

        fn coordination_overhead(&self, fs: &ForwarderSet) -> f64 {
            let o = analysis::coordination_overhead(fs);
            if fs.len() == 3 && o > 0.0 {
                o * (1.0 + 1e-9)
            } else {
                o
            }
        }
    }

    fn quick() -> Grid {
        Grid {
            frame_trials: 0,
            ..Grid::default()
        }
    }

    #[test]
    fn default_grid_passes() {
        let cases = run(&Analytic, &quick()).unwrap();
        assert_eq!(cases.len(), 8 + 3);
        assert!(cases.iter().all(CaseReport::passed), "{cases:#?}");
        assert_eq!(cases[6].checked, 50625);
    }

    #[test]
    fn injected_fault_names_the_case() {
        let cases = run(&Skewed, &quick()).unwrap();
        let failed: Vec<_> = cases.iter().filter(|c| !c.passed()).collect();
        assert_eq!(failed.len(), 1);
        let line = failed[0].line();
        assert!(
            line.starts_with("FAIL single-hop coordination_overhead size=3"),
            "{line}"
        );
        assert!(
            line.contains("closed_form=") && line.contains("oracle="),
            "{line}"
        );
    }

    #[test]
    fn grid_spec_parsing() {
        let g: Grid = "sizes=1-2; p=0,1; cost=3".parse().unwrap();
        assert_eq!(g.sizes, vec![1, 2]);
        assert_eq!(g.probabilities, vec![0.0, 1.0]);
        assert_eq!(g.costs, vec![3.0]);
        for bad in ["", "  ", "sizes=", "p=", "cost=;sizes=1"] {
            let e = bad.parse::<Grid>().unwrap_err();
            assert_eq!(
                e.to_string(),
                "config field `grid`: empty verification grid",
                "{bad:?}"
            );
        }
        assert!("sizes=0".parse::<Grid>().is_err());
        assert!("p=1.5".parse::<Grid>().is_err());
        assert!("bogus=1".parse::<Grid>().is_err());
    }
}
