//! Heralded single-photon streams.
//!
//! A stream is a sequence of time bins, index 0 earliest, each occupied
//! independently with the source efficiency `p`. Heralding means occupancy is
//! known, so downstream code works on the occupied bin indices.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_probability, Error, Result};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PhotonStream {
    bins: Vec<bool>,
    p: f64,
    seed: u64,
}

impl PhotonStream {
    /// Samples `n_bins` Bernoulli(`p`) bins from ChaCha8 stream 0 of `seed`.
    pub fn generate(p: f64, n_bins: usize, seed: u64) -> Result<Self> {
        check_probability("p", p)?;
        if n_bins == 0 {
            return Err(Error::InvalidParameter("a stream needs at least one bin".into()));
        }
        let mut rng = stream_rng(seed, 0);
        let bins = (0..n_bins).map(|_| rng.random::<f64>() < p).collect();
        Ok(Self { bins, p, seed })
    }

    /// Hand-built stream with the given occupied bins. `p` and `seed` are
    /// recorded as metadata only.
    pub fn from_occupied(n_bins: usize, occupied: &[usize]) -> Self {
        let mut bins = vec![false; n_bins];
        for &b in occupied {
            bins[b] = true;
        }
        let p = if n_bins == 0 { 0.0 } else { occupied.len() as f64 / n_bins as f64 };
        Self { bins, p, seed: 0 }
    }

    pub fn bins(&self) -> &[bool] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Indices of occupied bins in increasing time order.
    pub fn photon_bins(&self) -> Vec<usize> {
        self.bins.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
    }

    pub fn photon_count(&self) -> usize {
        self.bins.iter().filter(|&&b| b).count()
    }

    /// Fraction of occupied bins.
    pub fn occupancy(&self) -> f64 {
        if self.bins.is_empty() {
            return 0.0;
        }
        self.photon_count() as f64 / self.bins.len() as f64
    }
}

pub fn generate_stream(p: f64, n_bins: usize, seed: u64) -> Result<PhotonStream> {
    PhotonStream::generate(p, n_bins, seed)
}

pub fn occupancy(stream: &PhotonStream) -> f64 {
    stream.occupancy()
}

/// `p=<float> seed=<int> n=<int>` header line, then the bins as a 0/1 string.
impl fmt::Display for PhotonStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p={} seed={} n={}", self.p, self.seed, self.bins.len())?;
        let s: String = self.bins.iter().map(|&b| if b { '1' } else { '0' }).collect();
        writeln!(f, "{s}")
    }
}

impl FromStr for PhotonStream {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))?;
        let (mut p, mut seed, mut n) = (None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("header field `{field}` is not key=value")))?;
            let bad = |_| Error::Parse(format!("bad value in `{field}`"));
            match key {
                "p" => p = Some(value.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
                "n" => n = Some(value.parse::<usize>().map_err(bad)?),
                other => return Err(Error::Parse(format!("unknown header key `{other}`"))),
            }
        }
        let (p, seed, n) = match (p, seed, n) {
            (Some(p), Some(s), Some(n)) => (p, s, n),
            _ => return Err(Error::Parse("header must contain p, seed and n".into())),
        };
        check_probability("p", p)?;
        let body = lines.next().unwrap_or("").trim();
        let bins = body
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("unexpected bin character `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bins.len() != n {
            return Err(Error::Parse(format!("header says n={n} but body has {} bins", bins.len())));
        }
        Ok(Self { bins, p, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_probability_is_empty() {
        let s = generate_stream(0.0, 100, 99).unwrap();
        assert_eq!(s.len(), 100);
        assert_eq!(s.photon_count(), 0);
        assert_eq!(occupancy(&s), 0.0);
    }

    #[test]
    fn unit_probability_is_full() {
        let s = generate_stream(1.0, 100, 12345).unwrap();
        assert!(s.bins().iter().all(|&b| b));
        assert_eq!(occupancy(&s), 1.0);
    }

    #[test]
    fn occupancy_counts_directly() {
        let s = PhotonStream::from_occupied(4, &[0, 3]);
        assert_eq!(occupancy(&s), 0.5);
        assert_eq!(s.photon_bins(), vec![0, 3]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(generate_stream(-0.1, 10, 0), Err(Error::Probability { .. })));
        assert!(matches!(generate_stream(1.5, 10, 0), Err(Error::Probability { .. })));
        assert!(matches!(generate_stream(0.5, 0, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn million_bins_concentrate_near_p() {
        let n = 1_000_000;
        let s = generate_stream(0.1, n, 1).unwrap();
        let sigma = (0.1 * 0.9 / n as f64).sqrt();
        assert!((s.occupancy() - 0.1).abs() < 3.0 * sigma, "occupancy {}", s.occupancy());
    }

    #[test]
    fn text_form_round_trips() {
        let s = generate_stream(0.25, 37, 4).unwrap();
        let text = s.to_string();
        assert!(text.starts_with("p=0.25 seed=4 n=37\n"));
        assert_eq!(text.parse::<PhotonStream>().unwrap(), s);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!("p=0.1 seed=1 n=3\n01x\n".parse::<PhotonStream>().is_err());
        assert!("p=0.1 seed=1 n=4\n010\n".parse::<PhotonStream>().is_err());
        assert!("p=0.1 n=3\n010\n".parse::<PhotonStream>().is_err());
        assert!("p=2 seed=1 n=3\n010\n".parse::<PhotonStream>().is_err());
    }

    proptest! {
        #[test]
        fn generation_is_deterministic(p in 0.0f64..=1.0, n in 1usize..2000, seed: u64) {
            let a = generate_stream(p, n, seed).unwrap();
            let b = generate_stream(p, n, seed).unwrap();
            prop_assert_eq!(a.len(), n);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn million_bin_streams_within_four_sigma() {
        let n = 1_000_000;
        for &p in &[0.01, 0.1, 0.5, 0.9] {
            for seed in 0..4 {
                let s = generate_stream(p, n, seed).unwrap();
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((s.occupancy() - p).abs() < 4.0 * sigma, "p={p} seed={seed}");
            }
        }
    }
}
