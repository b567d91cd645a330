use std::collections::HashSet;

use super::window::sliding_window_bins;
use super::{classify_unmatched, solve_decomposed, Matching, Pair};
use crate::delay_network::{route, DelayNetwork};
use crate::error::Result;

/// Turns `m` into a clash-free matching for `network`.
///
/// Greedy edge removal: route the current matching, forbid the pair taking
/// part in the most clashes, re-solve the assignment without it, and repeat,
/// at most `n` times for an `n x n` problem. Two fallbacks are also built:
/// the input with clashing pairs dropped, and the sliding-window matching of
/// the same photons. The candidate with the most pairs wins, then the lowest
/// total delay. Photons that were paired in `m` but end up unpaired are
/// marked as lost to clashes.
pub fn resolve_clashes_optimal(m: &Matching, network: &DelayNetwork) -> Result<Matching> {
    if route(&m.requests(), network)?.is_clash_free() {
        return Ok(m.clone());
    }
    let (bins1, bins2) = m.photon_bins();
    let d_max = network.max_delay();
    let bound = bins1.len().max(bins2.len());

    let mut forbidden = HashSet::new();
    let mut current = m.clone();
    for _ in 0..bound {
        let routing = route(&current.requests(), network)?;
        if routing.is_clash_free() {
            break;
        }
        let worst = most_clashing(&current.pairs, &routing.clash_counts(current.pairs.len()));
        forbidden.insert((worst.bin1, worst.bin2));
        current = solve_decomposed(&bins1, &bins2, d_max, &forbidden);
    }

    let candidates = [
        drop_clashing(current.pairs, network)?,
        drop_clashing(m.pairs.clone(), network)?,
        sliding_window_bins(&bins1, &bins2, d_max, network)?.pairs,
    ];
    let best = candidates
        .into_iter()
        .enumerate()
        .min_by_key(|(i, pairs)| (std::cmp::Reverse(pairs.len()), pairs.iter().map(|p| p.delay).sum::<u64>(), *i))
        .map(|(_, pairs)| pairs)
        .unwrap_or_default();

    let kept1: HashSet<u64> = best.iter().map(|p| p.bin1).collect();
    let kept2: HashSet<u64> = best.iter().map(|p| p.bin2).collect();
    let lost1 = m.pairs.iter().map(|p| p.bin1).filter(|b| !kept1.contains(b)).collect();
    let lost2 = m.pairs.iter().map(|p| p.bin2).filter(|b| !kept2.contains(b)).collect();
    let discarded = classify_unmatched(&bins1, &bins2, d_max, &best, &lost1, &lost2);
    Ok(Matching::from_parts(best, discarded))
}

/// Pair with the highest clash count; ties go to the longer delay, then the
/// later stream-1 bin.
fn most_clashing(pairs: &[Pair], counts: &[usize]) -> Pair {
    *pairs
        .iter()
        .zip(counts)
        .max_by_key(|(p, &c)| (c, p.delay, p.bin1))
        .map(|(p, _)| p)
        .expect("a clashing matching has pairs")
}

/// Removes clashing pairs one at a time (most clashes first) until the rest
/// routes cleanly.
fn drop_clashing(mut pairs: Vec<Pair>, network: &DelayNetwork) -> Result<Vec<Pair>> {
    loop {
        let requests: Vec<_> = pairs.iter().map(Pair::request).collect();
        let routing = route(&requests, network)?;
        if routing.is_clash_free() {
            return Ok(pairs);
        }
        let worst = most_clashing(&pairs, &routing.clash_counts(pairs.len()));
        pairs.retain(|p| *p != worst);
    }
}
