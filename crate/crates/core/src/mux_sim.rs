//! Monte Carlo experiments over photon streams.
//!
//! Two kinds of experiment live here. The first compares the three matching
//! strategies on pairs of independent streams. The second generates Bell
//! states from four streams, once with clocked (standard) multiplexing and
//! once with relative multiplexing, for a fixed total number of switches.
//!
//! Every repetition draws its streams from `derive_seed(seed, [rep, channel])`,
//! so different strategies, switch counts and switch splits all see the same
//! photons. Repetitions run in parallel and are reduced in index order.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::delay_network::{route, DelayNetwork};
use crate::error::{check_probability, Error, Result};
use crate::matching::{
    bins_of, matching_metrics, resolve_clashes_optimal, solve_decomposed, window::sliding_window_bins, Matching,
};
use crate::rng::{derive_seed, stream_rng};
use crate::streams::PhotonStream;

/// Acceptance probability of the Bell-state generator.
pub const BELL_ACCEPTANCE: f64 = 1.0 / 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Optimal assignment, switch clashes ignored.
    HungarianNoClash,
    /// Optimal assignment followed by clash resolution.
    HungarianWithClash,
    /// Sliding window, dropping the later pair on a clash.
    Realistic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::HungarianNoClash, Strategy::HungarianWithClash, Strategy::Realistic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::HungarianNoClash => "hungarian_no_clash",
            Strategy::HungarianWithClash => "hungarian_with_clash",
            Strategy::Realistic => "realistic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, stderr: (var / n as f64).sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyStats {
    pub strategy: Strategy,
    pub switch_count: u32,
    pub matched_fraction: Estimate,
    /// For `HungarianNoClash`, the fraction of its pairs that take part in a
    /// clash; otherwise the fraction of candidate pairs lost to clashes.
    pub clash_rate_mean: f64,
    pub out_of_range_mean: f64,
    pub total_weight_mean: f64,
    pub mean_delay_mean: f64,
    pub reps: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct RepOutcome {
    matched_fraction: f64,
    clash_rate: f64,
    out_of_range: f64,
    total_weight: f64,
    mean_delay: f64,
}

fn rep_streams(p: f64, n_bins: usize, seed: u64, rep: u64, count: u64) -> Result<Vec<PhotonStream>> {
    (0..count).map(|c| PhotonStream::generate(p, n_bins, derive_seed(seed, &[rep, c]))).collect()
}

/// Matches two streams with one strategy over the full delay range of `net`.
pub fn match_streams(strategy: Strategy, s1: &PhotonStream, s2: &PhotonStream, net: &DelayNetwork) -> Result<Matching> {
    let (b1, b2) = (bins_of(s1), bins_of(s2));
    let d_max = net.max_delay();
    let optimal = || solve_decomposed(&b1, &b2, d_max, &Default::default());
    match strategy {
        Strategy::HungarianNoClash => Ok(optimal()),
        Strategy::HungarianWithClash => resolve_clashes_optimal(&optimal(), net),
        Strategy::Realistic => sliding_window_bins(&b1, &b2, d_max, net),
    }
}

fn apply_strategy(strategy: Strategy, s1: &PhotonStream, s2: &PhotonStream, net: &DelayNetwork) -> Result<RepOutcome> {
    let m = match_streams(strategy, s1, s2, net)?;
    let metrics = matching_metrics(&m, s1, s2);
    let clash_rate = if strategy == Strategy::HungarianNoClash {
        let routing = route(&m.requests(), net)?;
        if m.is_empty() {
            0.0
        } else {
            (m.len() - routing.routed.len()) as f64 / m.len() as f64
        }
    } else {
        metrics.clash_rate
    };
    Ok(RepOutcome {
        matched_fraction: metrics.matched_fraction,
        clash_rate,
        out_of_range: metrics.out_of_range_fraction,
        total_weight: m.total_weight as f64,
        mean_delay: metrics.mean_delay,
    })
}

fn check_common(p: f64, n_bins: usize, reps: usize) -> Result<()> {
    check_probability("p", p)?;
    if n_bins == 0 || reps == 0 {
        return Err(Error::InvalidParameter("n_bins and reps must be at least 1".into()));
    }
    Ok(())
}

fn aggregate(strategy: Strategy, s: u32, outcomes: &[RepOutcome]) -> StrategyStats {
    let n = outcomes.len() as f64;
    let mean = |f: fn(&RepOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    let fractions: Vec<f64> = outcomes.iter().map(|o| o.matched_fraction).collect();
    StrategyStats {
        strategy,
        switch_count: s,
        matched_fraction: Estimate::from_samples(&fractions),
        clash_rate_mean: mean(|o| o.clash_rate),
        out_of_range_mean: mean(|o| o.out_of_range),
        total_weight_mean: mean(|o| o.total_weight),
        mean_delay_mean: mean(|o| o.mean_delay),
        reps: outcomes.len(),
    }
}

/// Matches `reps` independent stream pairs with one strategy, using the full
/// delay range `max_delay(s)` of an `s`-switch network.
pub fn simulate_two_stream(
    p: f64,
    s: u32,
    n_bins: usize,
    strategy: Strategy,
    reps: usize,
    seed: u64,
) -> Result<StrategyStats> {
    Ok(simulate_strategies(p, s, n_bins, &[strategy], reps, seed)?.remove(0))
}

/// Like [`simulate_two_stream`] for several strategies on the same streams.
pub fn simulate_strategies(
    p: f64,
    s: u32,
    n_bins: usize,
    strategies: &[Strategy],
    reps: usize,
    seed: u64,
) -> Result<Vec<StrategyStats>> {
    simulate_strategies_on(&DelayNetwork::new(s)?, p, n_bins, strategies, reps, seed)
}

/// Like [`simulate_strategies`] on a given network, for instance one with
/// descending stage delays.
pub fn simulate_strategies_on(
    net: &DelayNetwork,
    p: f64,
    n_bins: usize,
    strategies: &[Strategy],
    reps: usize,
    seed: u64,
) -> Result<Vec<StrategyStats>> {
    check_common(p, n_bins, reps)?;
    let s = net.switches();
    let per_rep: Vec<Vec<RepOutcome>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let streams = rep_streams(p, n_bins, seed, rep, 2)?;
            strategies.iter().map(|&st| apply_strategy(st, &streams[0], &streams[1], net)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(strategies
        .iter()
        .enumerate()
        .map(|(k, &st)| {
            let column: Vec<RepOutcome> = per_rep.iter().map(|r| r[k]).collect();
            aggregate(st, s, &column)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Standard,
    Rmux,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::Rmux => "rmux",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Scheme::Standard),
            "rmux" => Ok(Scheme::Rmux),
            _ => Err(Error::InvalidParameter(format!("unknown scheme `{s}`"))),
        }
    }
}

/// How a switch budget may be spent across the two stages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BudgetPolicy {
    /// Every switch of the budget is installed.
    #[default]
    Exact,
    /// Any split using no more than the budget.
    AtMost,
}

impl FromStr for BudgetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BudgetPolicy::Exact),
            "at_most" => Ok(BudgetPolicy::AtMost),
            _ => Err(Error::InvalidParameter(format!("unknown budget policy `{s}`"))),
        }
    }
}

/// Switches per stage for one Bell-generation layout.
///
/// Standard: four source networks of `first` switches, then one network of
/// `second` switches per output photon of the Bell generator, so
/// `4 * first + 2 * second` in total. RMUX: streams 2 and 4 are the
/// reference, so only streams 1 and 3 carry `first`-switch networks; the
/// second stage delays both photons of one pair, `2 * first + 2 * second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Split {
    pub first: u32,
    pub second: u32,
}

impl Split {
    pub fn switches(&self, scheme: Scheme) -> u32 {
        match scheme {
            Scheme::Standard => 4 * self.first + 2 * self.second,
            Scheme::Rmux => 2 * self.first + 2 * self.second,
        }
    }
}

/// Every split whose switch count meets `budget` under `policy`. Each stage
/// has at least one switch.
pub fn splits(scheme: Scheme, budget: u32, policy: BudgetPolicy) -> Vec<Split> {
    let mut out = Vec::new();
    for first in 1..=budget {
        for second in 1..=budget {
            let split = Split { first, second };
            let used = split.switches(scheme);
            let ok = match policy {
                BudgetPolicy::Exact => used == budget,
                BudgetPolicy::AtMost => used <= budget,
            };
            if ok && first <= crate::delay_network::MAX_SWITCHES && second <= crate::delay_network::MAX_SWITCHES {
                out.push(split);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellStats {
    pub scheme: Scheme,
    pub total_switches: u32,
    /// Best split found; `None` when no split fits the budget.
    pub split: Option<Split>,
    pub bells_per_bin: Estimate,
    /// Bell states over generator attempts, pooled over repetitions.
    pub bells_per_attempt: f64,
    pub reps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct BellCount {
    bells: u64,
    attempts: u64,
}

/// Four photon streams plus one uniform per bin deciding whether a generator
/// attempt placed in that bin succeeds.
struct BellRep {
    streams: Vec<Vec<u64>>,
    occupied: Vec<Vec<bool>>,
    accept: Vec<bool>,
    n_bins: usize,
}

impl BellRep {
    fn new(p: f64, n_bins: usize, seed: u64, rep: u64) -> Result<Self> {
        let streams = rep_streams(p, n_bins, seed, rep, 4)?;
        let mut rng = stream_rng(derive_seed(seed, &[rep, 4]), 0);
        let accept = (0..n_bins).map(|_| rng.random::<f64>() < BELL_ACCEPTANCE).collect();
        Ok(Self {
            occupied: streams.iter().map(|s| s.bins().to_vec()).collect(),
            streams: streams.iter().map(bins_of).collect(),
            accept,
            n_bins,
        })
    }

    /// Clocked multiplexing. A stage-1 window of `2^(first-1)` bins delivers
    /// at most one photon per stream to its front bin. Windows where all four
    /// streams deliver are generator attempts. A stage-2 window spans
    /// `2^(second-1)` stage-1 windows and outputs its first successful
    /// attempt; later attempts in it are not made.
    fn standard(&self, split: Split) -> BellCount {
        let w1 = 1usize << (split.first - 1);
        let w2 = 1usize << (split.second - 1);
        let mut count = BellCount::default();
        if w1.saturating_mul(w2) > self.n_bins {
            return count;
        }
        let windows = self.n_bins / w1;
        let full = |t: usize| self.occupied.iter().all(|bins| bins[t * w1..(t + 1) * w1].iter().any(|&b| b));
        for block in 0..windows / w2 {
            for t in block * w2..(block + 1) * w2 {
                if !full(t) {
                    continue;
                }
                count.attempts += 1;
                if self.accept[t * w1] {
                    count.bells += 1;
                    break;
                }
            }
        }
        count
    }

    /// Relative multiplexing. Streams 1-2 and 3-4 are paired by the sliding
    /// window with `first`-switch networks; a pair becomes an event in the
    /// bin of its later photon. The two event streams are paired again with
    /// `second`-switch networks and every resulting quadruple is one
    /// generator attempt, placed in the bin of its later event.
    fn rmux(&self, split: Split) -> Result<BellCount> {
        let net_a = DelayNetwork::new(split.first)?;
        let net_b = DelayNetwork::new(split.second)?;
        let events = |x: &[u64], y: &[u64]| -> Result<Vec<u64>> {
            let m = sliding_window_bins(x, y, net_a.max_delay(), &net_a)?;
            let mut bins: Vec<u64> = m.pairs.iter().map(|p| p.bin2).collect();
            bins.sort_unstable();
            Ok(bins)
        };
        let a = events(&self.streams[0], &self.streams[1])?;
        let b = events(&self.streams[2], &self.streams[3])?;
        let quads = sliding_window_bins(&a, &b, net_b.max_delay(), &net_b)?;
        let attempts = quads.pairs.len() as u64;
        let bells = quads.pairs.iter().filter(|p| self.accept[p.bin2 as usize]).count() as u64;
        Ok(BellCount { bells, attempts })
    }

    fn run(&self, scheme: Scheme, split: Split) -> Result<BellCount> {
        match scheme {
            Scheme::Standard => Ok(self.standard(split)),
            Scheme::Rmux => self.rmux(split),
        }
    }
}

/// Bell states per bin for every split of `budget`, keeping the split with
/// the highest mean rate (ties go to the earlier split in [`splits`] order).
pub fn simulate_bell(
    scheme: Scheme,
    p1: f64,
    budget: u32,
    n_bins: usize,
    reps: usize,
    seed: u64,
    policy: BudgetPolicy,
) -> Result<BellStats> {
    check_common(p1, n_bins, reps)?;
    let candidates = splits(scheme, budget, policy);
    let counts: Vec<Vec<BellCount>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let data = BellRep::new(p1, n_bins, seed, rep)?;
            candidates.iter().map(|&split| data.run(scheme, split)).collect()
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(Split, Estimate, f64)> = None;
    for (k, &split) in candidates.iter().enumerate() {
        let rates: Vec<f64> = counts.iter().map(|r| r[k].bells as f64 / n_bins as f64).collect();
        let est = Estimate::from_samples(&rates);
        let (bells, attempts) = counts.iter().fold((0u64, 0u64), |(b, a), r| (b + r[k].bells, a + r[k].attempts));
        let per_attempt = if attempts == 0 { 0.0 } else { bells as f64 / attempts as f64 };
        if best.as_ref().is_none_or(|(_, e, _)| est.mean > e.mean) {
            best = Some((split, est, per_attempt));
        }
    }
    let (split, bells_per_bin, bells_per_attempt) = match best {
        Some((s, e, a)) => (Some(s), e, a),
        None => (None, Estimate::default(), 0.0),
    };
    Ok(BellStats { scheme, total_switches: budget, split, bells_per_bin, bells_per_attempt, reps })
}

pub fn simulate_bell_standard(p1: f64, s_total: u32, n_bins: usize, reps: usize, seed: u64) -> Result<BellStats> {
    simulate_bell(Scheme::Standard, p1, s_total, n_bins, reps, seed, BudgetPolicy::Exact)
}

pub fn simulate_bell_rmux(p1: f64, s_total: u32, n_bins: usize, reps: usize, seed: u64) -> Result<BellStats> {
    simulate_bell(Scheme::Rmux, p1, s_total, n_bins, reps, seed, BudgetPolicy::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_samples() {
        let e = Estimate::from_samples(&[0.5, 0.5, 0.5]);
        assert_eq!(e, Estimate { mean: 0.5, stderr: 0.0 });
        let e = Estimate::from_samples(&[0.0, 1.0]);
        assert_eq!(e.mean, 0.5);
        assert!((e.stderr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn single_switch_only_matches_coincidences() {
        let (p, n, seed) = (0.3, 500, 9);
        let stats = simulate_two_stream(p, 1, n, Strategy::HungarianNoClash, 5, seed).unwrap();
        let mut expected = Vec::new();
        for rep in 0..5 {
            let s = rep_streams(p, n, seed, rep, 2).unwrap();
            let both = s[0].bins().iter().zip(s[1].bins()).filter(|(a, b)| **a && **b).count();
            expected.push(2.0 * both as f64 / (s[0].photon_count() + s[1].photon_count()) as f64);
        }
        let mean = expected.iter().sum::<f64>() / 5.0;
        assert!((stats.matched_fraction.mean - mean).abs() < 1e-12);
        assert_eq!(stats.total_weight_mean, 0.0);
    }

    #[test]
    fn strategies_are_ordered_on_shared_streams() {
        for s in 1..=6 {
            let st = simulate_strategies(0.1, s, 400, &Strategy::ALL, 8, 3).unwrap();
            let f: Vec<f64> = st.iter().map(|x| x.matched_fraction.mean).collect();
            assert!(f[0] >= f[1] - 1e-12 && f[1] >= f[2] - 1e-12, "s={s}: {f:?}");
        }
    }

    #[test]
    fn two_stream_is_deterministic() {
        let a = simulate_two_stream(0.1, 4, 300, Strategy::Realistic, 4, 11).unwrap();
        let b = simulate_two_stream(0.1, 4, 300, Strategy::Realistic, 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_accounting() {
        assert_eq!(splits(Scheme::Standard, 6, BudgetPolicy::Exact), vec![Split { first: 1, second: 1 }]);
        assert!(splits(Scheme::Standard, 7, BudgetPolicy::Exact).is_empty());
        let r = splits(Scheme::Rmux, 8, BudgetPolicy::Exact);
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|s| s.switches(Scheme::Rmux) == 8));
        assert_eq!(splits(Scheme::Rmux, 6, BudgetPolicy::AtMost).len(), 3);
    }

    #[test]
    fn no_photons_no_bells() {
        for scheme in [Scheme::Standard, Scheme::Rmux] {
            let b = simulate_bell(scheme, 0.0, 12, 1000, 3, 1, BudgetPolicy::Exact).unwrap();
            assert_eq!(b.bells_per_bin.mean, 0.0);
        }
    }

    #[test]
    fn deterministic_sources_hit_the_gate_limit() {
        // Every bin is occupied, so only the generator acceptance matters.
        for (scheme, budget) in [(Scheme::Standard, 6), (Scheme::Rmux, 4), (Scheme::Rmux, 40)] {
            let b = simulate_bell(scheme, 1.0, budget, 4000, 4, 2, BudgetPolicy::Exact).unwrap();
            assert!((b.bells_per_attempt - BELL_ACCEPTANCE).abs() < 0.01, "{scheme}: {b:?}");
            assert!((b.bells_per_bin.mean - BELL_ACCEPTANCE).abs() < 0.01, "{scheme}: {b:?}");
        }
    }

    #[test]
    fn bells_never_exceed_photons() {
        let data = BellRep::new(0.2, 2000, 5, 0).unwrap();
        let fewest = data.streams.iter().map(Vec::len).min().unwrap() as u64;
        for split in splits(Scheme::Rmux, 16, BudgetPolicy::Exact) {
            let c = data.rmux(split).unwrap();
            assert!(c.bells <= c.attempts && c.attempts <= fewest);
        }
        for split in splits(Scheme::Standard, 16, BudgetPolicy::AtMost) {
            let c = data.standard(split);
            assert!(c.bells <= c.attempts && c.attempts <= fewest);
        }
    }
}
