use std::collections::HashSet;

use super::{classify_unmatched, Matching, Pair};
use crate::delay_network::{DelayNetwork, RoutingRequest, SwitchSchedule};
use crate::error::{Error, Result};
use crate::streams::PhotonStream;

/// Online "sliding window" matching.
///
/// Stream-1 photons are taken in time order; each pairs with the earliest
/// unpaired stream-2 photon in `[bin, bin + d_max]`. Each new pair is routed
/// against the switch settings already committed; if it clashes, the new pair
/// is thrown away (both photons) and the earlier pairs are kept.
pub fn sliding_window_match(
    s1: &PhotonStream,
    s2: &PhotonStream,
    d_max: u64,
    network: &DelayNetwork,
) -> Result<Matching> {
    sliding_window_bins(&super::bins_of(s1), &super::bins_of(s2), d_max, network)
}

pub(crate) fn sliding_window_bins(
    bins1: &[u64],
    bins2: &[u64],
    d_max: u64,
    network: &DelayNetwork,
) -> Result<Matching> {
    if d_max > network.max_delay() {
        return Err(Error::DelayOutOfRange { delay: d_max, max: network.max_delay(), switches: network.switches() });
    }
    let mut schedule = SwitchSchedule::new(*network);
    let mut pairs = Vec::new();
    let mut clashed1 = HashSet::new();
    let mut clashed2 = HashSet::new();
    let mut next = 0usize;
    for &a in bins1 {
        while next < bins2.len() && bins2[next] < a {
            next += 1;
        }
        if next == bins2.len() || bins2[next] - a > d_max {
            continue;
        }
        let b = bins2[next];
        next += 1;
        if schedule.try_commit(RoutingRequest::new(a, b - a))? {
            pairs.push(Pair { bin1: a, bin2: b, delay: b - a });
        } else {
            clashed1.insert(a);
            clashed2.insert(b);
        }
    }
    let discarded = classify_unmatched(bins1, bins2, d_max, &pairs, &clashed1, &clashed2);
    Ok(Matching::from_parts(pairs, discarded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_network::route;
    use crate::matching::{DiscardReason, Side};

    fn stream(bins: &[usize]) -> PhotonStream {
        PhotonStream::from_occupied(32, bins)
    }

    #[test]
    fn window_rule_hand_simulation() {
        let net = DelayNetwork::new(3).unwrap();
        let m = sliding_window_match(&stream(&[0, 5]), &stream(&[2, 6]), 3, &net).unwrap();
        assert_eq!(m.pairs, vec![Pair { bin1: 0, bin2: 2, delay: 2 }, Pair { bin1: 5, bin2: 6, delay: 1 }]);
        assert_eq!(m.total_weight, 3);
        assert!(m.discarded.is_empty());
    }

    #[test]
    fn lone_photon_is_unpaired() {
        let net = DelayNetwork::new(3).unwrap();
        let m = sliding_window_match(&stream(&[0]), &stream(&[]), 3, &net).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.discarded.len(), 1);
        assert_eq!(m.discarded[0].bin, 0);
        assert_eq!(m.discarded[0].stream, Side::One);
    }

    #[test]
    fn synchronised_photons_pair_with_zero_delay() {
        let net = DelayNetwork::new(1).unwrap();
        let m = sliding_window_match(&stream(&[0]), &stream(&[0]), 0, &net).unwrap();
        assert_eq!(m.pairs, vec![Pair { bin1: 0, bin2: 0, delay: 0 }]);
    }

    #[test]
    fn later_pair_is_dropped_on_clash() {
        // s = 4 (stages 1, 2, 4). 0 -> 3 (delay 3) leaves switch 1 in bin 1
        // on the delayed rail with a bar setting; 1 -> 7 (delay 6) reaches
        // switch 1 in bin 1 on the straight rail and needs cross.
        let net = DelayNetwork::new(4).unwrap();
        let m = sliding_window_match(&stream(&[0, 1]), &stream(&[3, 7]), 7, &net).unwrap();
        assert_eq!(m.pairs, vec![Pair { bin1: 0, bin2: 3, delay: 3 }]);
        assert_eq!(m.count_discards(Side::One, DiscardReason::Clash), 1);
        assert_eq!(m.count_discards(Side::Two, DiscardReason::Clash), 1);
        assert!(route(&m.requests(), &net).unwrap().is_clash_free());
    }

    #[test]
    fn rejects_window_wider_than_network() {
        let net = DelayNetwork::new(2).unwrap();
        assert!(sliding_window_match(&stream(&[0]), &stream(&[1]), 3, &net).is_err());
    }
}
