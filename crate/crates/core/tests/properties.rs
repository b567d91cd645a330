use proptest::prelude::*;

use rmux::delay_network::{route, DelayNetwork};
use rmux::mux_analytics::required_repetitions;
use rmux::mux_sim::{match_streams, Strategy};
use rmux::percolation::{sample_lattice_state, spans, DiamondLattice, OutcomeSemantics, Scheme};
use rmux::rng::stream_rng;
use rmux::streams::PhotonStream;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn repetitions_are_minimal(eta in 0.001f64..1.0, p_s in 0.0f64..0.999) {
        let k = required_repetitions(eta, p_s).unwrap();
        let reach = |k: u64| 1.0 - (1.0 - eta).powf(k as f64);
        prop_assert!(reach(k) >= p_s);
        prop_assert!(k == 1 || reach(k - 1) < p_s);
    }

    #[test]
    fn strategies_are_valid_and_ordered(p in 0.02f64..0.6, s in 1u32..7, seed in any::<u64>()) {
        let s1 = PhotonStream::generate(p, 300, seed).unwrap();
        let s2 = PhotonStream::generate(p, 300, seed ^ 0xABCD).unwrap();
        let net = DelayNetwork::new(s).unwrap();
        let mut sizes = Vec::new();
        for strategy in Strategy::ALL {
            let m = match_streams(strategy, &s1, &s2, &net).unwrap();
            m.check(net.max_delay()).unwrap();
            // Every photon is either paired or discarded, exactly once.
            let (one, two) = m.photon_bins();
            let as_u64 = |v: Vec<usize>| v.into_iter().map(|b| b as u64).collect::<Vec<_>>();
            prop_assert_eq!(one, as_u64(s1.photon_bins()));
            prop_assert_eq!(two, as_u64(s2.photon_bins()));
            if strategy != Strategy::HungarianNoClash {
                prop_assert!(route(&m.requests(), &net).unwrap().is_clash_free());
            }
            sizes.push(m.len());
        }
        prop_assert!(sizes[0] >= sizes[1] && sizes[1] >= sizes[2], "{:?}", sizes);
    }

    #[test]
    fn stream_text_round_trips(p in 0.0f64..=1.0, n in 1usize..500, seed in any::<u64>()) {
        let s = PhotonStream::generate(p, n, seed).unwrap();
        let back: PhotonStream = s.to_string().parse().unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn spanning_is_monotone_per_trial(seed in any::<u64>(), lo in 0.0f64..0.3, extra in 0.0f64..0.3, cal in any::<bool>()) {
        let lat = DiamondLattice::new(4).unwrap();
        let sem = if cal { OutcomeSemantics::calibrated() } else { OutcomeSemantics::default() };
        let sample = |scheme, p_l| {
            let st = sample_lattice_state(&lat, scheme, p_l, 0.0, &sem, &mut stream_rng(seed, 0)).unwrap();
            spans(&lat, &st)
        };
        let hi = lo + extra;
        // Less loss never disconnects, and RMUX never does worse.
        prop_assert!(!sample(Scheme::Standard, hi) || sample(Scheme::Standard, lo));
        prop_assert!(!sample(Scheme::Rmux, hi) || sample(Scheme::Rmux, lo));
        prop_assert!(!sample(Scheme::Standard, lo) || sample(Scheme::Rmux, lo));
    }
}
