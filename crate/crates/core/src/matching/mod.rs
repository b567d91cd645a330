//! Two-stream synchronisation as weighted bipartite assignment.
//!
//! Stream-1 photons pass a binary-delay network; stream-2 photons do not. A
//! stream-1 photon in bin `a` can meet a stream-2 photon in bin `b` only when
//! `0 <= b - a <= d_max`, and the edge weight is the delay `b - a`.
//! Infeasible pairs and padding vertices become virtual entries with a weight
//! large enough that the solver only uses them when nothing real is left.

mod clash;
pub mod hungarian;
pub(crate) mod window;

use std::collections::HashSet;
use std::io::Write;

pub use clash::resolve_clashes_optimal;
pub use window::sliding_window_match;

use crate::delay_network::RoutingRequest;
use crate::error::{Error, Result};
use crate::streams::PhotonStream;
use crate::union_find::UnionFind;

/// Kind of a weight-matrix cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Entry {
    Real,
    /// Both vertices are photons but the delay is negative or too long.
    OutOfRange,
    /// Row or column is a padding vertex.
    Padding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightMatrix {
    n: usize,
    weights: Vec<u64>,
    kinds: Vec<Entry>,
    virtual_weight: u64,
    row_bins: Vec<Option<u64>>,
    col_bins: Vec<Option<u64>>,
}

/// Virtual entries cost at least 10^6, at least 10^3 times the largest real
/// weight plus one, and more than any sum of `n` real weights (so a matching
/// with more real edges always wins).
pub fn virtual_weight_for(n: usize, max_real: u64) -> u64 {
    let per_edge = max_real + 1;
    1_000_000u64.max(1_000 * per_edge).max((n as u64 + 1) * per_edge)
}

impl WeightMatrix {
    /// Generic matrix from row-major entries, `None` marking virtual cells.
    /// Rows and columns are labelled by their index.
    pub fn from_entries(n: usize, entries: &[Option<u64>]) -> Self {
        assert_eq!(entries.len(), n * n);
        let max_real = entries.iter().flatten().copied().max().unwrap_or(0);
        let virtual_weight = virtual_weight_for(n, max_real);
        let weights = entries.iter().map(|e| e.unwrap_or(virtual_weight)).collect();
        let kinds = entries.iter().map(|e| if e.is_some() { Entry::Real } else { Entry::OutOfRange }).collect();
        let labels: Vec<Option<u64>> = (0..n as u64).map(Some).collect();
        Self { n, weights, kinds, virtual_weight, row_bins: labels.clone(), col_bins: labels }
    }

    /// Photon matrix: rows are stream-1 bins, columns stream-2 bins, padded
    /// square. Pairs listed in `forbidden` (as `(bin1, bin2)`) are virtual.
    pub fn from_bins(bins1: &[u64], bins2: &[u64], d_max: u64, forbidden: &HashSet<(u64, u64)>) -> Self {
        let n = bins1.len().max(bins2.len());
        let virtual_weight = virtual_weight_for(n, d_max);
        let mut weights = vec![virtual_weight; n * n];
        let mut kinds = vec![Entry::Padding; n * n];
        for (i, &a) in bins1.iter().enumerate() {
            for (j, &b) in bins2.iter().enumerate() {
                let cell = i * n + j;
                if b >= a && b - a <= d_max && !forbidden.contains(&(a, b)) {
                    weights[cell] = b - a;
                    kinds[cell] = Entry::Real;
                } else {
                    kinds[cell] = Entry::OutOfRange;
                }
            }
        }
        let pad = |bins: &[u64]| {
            let mut v: Vec<Option<u64>> = bins.iter().copied().map(Some).collect();
            v.resize(n, None);
            v
        };
        Self { n, weights, kinds, virtual_weight, row_bins: pad(bins1), col_bins: pad(bins2) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, row: usize, col: usize) -> u64 {
        self.weights[row * self.n + col]
    }

    pub fn entry(&self, row: usize, col: usize) -> Entry {
        self.kinds[row * self.n + col]
    }

    pub fn is_virtual(&self, row: usize, col: usize) -> bool {
        self.entry(row, col) != Entry::Real
    }

    pub fn virtual_weight(&self) -> u64 {
        self.virtual_weight
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn max_real_weight(&self) -> Option<u64> {
        self.weights.iter().zip(&self.kinds).filter(|(_, k)| **k == Entry::Real).map(|(w, _)| *w).max()
    }
}

pub fn build_assignment_matrix(s1: &PhotonStream, s2: &PhotonStream, d_max: u64) -> WeightMatrix {
    WeightMatrix::from_bins(&bins_of(s1), &bins_of(s2), d_max, &HashSet::new())
}

pub fn bins_of(stream: &PhotonStream) -> Vec<u64> {
    stream.photon_bins().into_iter().map(|b| b as u64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub bin1: u64,
    pub bin2: u64,
    pub delay: u64,
}

impl Pair {
    pub fn request(&self) -> RoutingRequest {
        RoutingRequest::new(self.bin1, self.delay)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    One,
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiscardReason {
    /// No partner exists within the reachable delay window.
    OutOfRange,
    /// Lost to a switch-setting clash.
    Clash,
    /// Partners existed but all were taken.
    Unpaired,
}

impl DiscardReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiscardReason::OutOfRange => "range",
            DiscardReason::Clash => "clash",
            DiscardReason::Unpaired => "unpaired",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Discard {
    pub bin: u64,
    pub stream: Side,
    pub reason: DiscardReason,
}

/// Output of every matching strategy. Pairs are sorted by stream-1 bin and
/// every photon of both streams appears either in a pair or in `discarded`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<Pair>,
    pub discarded: Vec<Discard>,
    pub total_weight: u64,
}

impl Matching {
    pub(crate) fn from_parts(mut pairs: Vec<Pair>, mut discarded: Vec<Discard>) -> Self {
        pairs.sort();
        discarded.sort();
        let total_weight = pairs.iter().map(|p| p.delay).sum();
        Self { pairs, discarded, total_weight }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn requests(&self) -> Vec<RoutingRequest> {
        self.pairs.iter().map(Pair::request).collect()
    }

    /// Photon bins of both streams, recovered from pairs and discards.
    pub fn photon_bins(&self) -> (Vec<u64>, Vec<u64>) {
        let mut one: Vec<u64> = self.pairs.iter().map(|p| p.bin1).collect();
        let mut two: Vec<u64> = self.pairs.iter().map(|p| p.bin2).collect();
        for d in &self.discarded {
            match d.stream {
                Side::One => one.push(d.bin),
                Side::Two => two.push(d.bin),
            }
        }
        one.sort_unstable();
        two.sort_unstable();
        (one, two)
    }

    pub fn count_discards(&self, stream: Side, reason: DiscardReason) -> usize {
        self.discarded.iter().filter(|d| d.stream == stream && d.reason == reason).count()
    }

    /// Checks the structural invariants: no photon used twice, every delay
    /// equals `bin2 - bin1` and lies in `[0, d_max]`, and the total weight
    /// is the sum of pair delays.
    pub fn check(&self, d_max: u64) -> Result<()> {
        let mut one = HashSet::new();
        let mut two = HashSet::new();
        for p in &self.pairs {
            if !one.insert(p.bin1) || !two.insert(p.bin2) {
                return Err(Error::InvalidParameter(format!("photon reused in pair {p:?}")));
            }
            if p.bin2 < p.bin1 || p.bin2 - p.bin1 != p.delay || p.delay > d_max {
                return Err(Error::InvalidParameter(format!("inconsistent pair {p:?} for d_max {d_max}")));
            }
        }
        if self.total_weight != self.pairs.iter().map(|p| p.delay).sum::<u64>() {
            return Err(Error::InvalidParameter("total weight mismatch".into()));
        }
        Ok(())
    }
}

/// Solves `w` exactly and keeps only assignments on real entries.
pub fn hungarian_min_assignment(w: &WeightMatrix) -> Matching {
    let assignment = hungarian::solve(w.n, &w.weights);
    let mut pairs = Vec::new();
    let mut row_paired = vec![false; w.n];
    let mut col_paired = vec![false; w.n];
    for (row, &col) in assignment.iter().enumerate() {
        if w.entry(row, col) == Entry::Real {
            let (bin1, bin2) = (w.row_bins[row].unwrap(), w.col_bins[col].unwrap());
            pairs.push(Pair { bin1, bin2, delay: w.weight(row, col) });
            row_paired[row] = true;
            col_paired[col] = true;
        }
    }
    let mut discarded = Vec::new();
    for i in 0..w.n {
        if let (Some(bin), false) = (w.row_bins[i], row_paired[i]) {
            let has_edge = (0..w.n).any(|j| w.entry(i, j) == Entry::Real);
            discarded.push(Discard { bin, stream: Side::One, reason: reason_for(has_edge) });
        }
        if let (Some(bin), false) = (w.col_bins[i], col_paired[i]) {
            let has_edge = (0..w.n).any(|r| w.entry(r, i) == Entry::Real);
            discarded.push(Discard { bin, stream: Side::Two, reason: reason_for(has_edge) });
        }
    }
    Matching::from_parts(pairs, discarded)
}

fn reason_for(has_edge: bool) -> DiscardReason {
    if has_edge {
        DiscardReason::Unpaired
    } else {
        DiscardReason::OutOfRange
    }
}

/// Optimal matching computed one connected component of the feasibility
/// graph at a time. Equivalent to a single Hungarian solve on the full
/// matrix, but each solve only sees photons that can interact.
pub fn solve_decomposed(bins1: &[u64], bins2: &[u64], d_max: u64, forbidden: &HashSet<(u64, u64)>) -> Matching {
    let (n1, n2) = (bins1.len(), bins2.len());
    let mut uf = UnionFind::new(n1 + n2);
    let mut has_edge = vec![false; n1 + n2];
    let mut start = 0usize;
    for (i, &a) in bins1.iter().enumerate() {
        while start < n2 && bins2[start] < a {
            start += 1;
        }
        for (j, &b) in bins2.iter().enumerate().skip(start) {
            if b - a > d_max {
                break;
            }
            if forbidden.contains(&(a, b)) {
                continue;
            }
            uf.union(i, n1 + j);
            has_edge[i] = true;
            has_edge[n1 + j] = true;
        }
    }

    let mut groups: std::collections::BTreeMap<usize, (Vec<u64>, Vec<u64>)> = Default::default();
    for i in 0..n1 {
        if has_edge[i] {
            groups.entry(uf.find(i)).or_default().0.push(bins1[i]);
        }
    }
    for j in 0..n2 {
        if has_edge[n1 + j] {
            groups.entry(uf.find(n1 + j)).or_default().1.push(bins2[j]);
        }
    }

    let mut pairs = Vec::new();
    for (rows, cols) in groups.values() {
        let w = WeightMatrix::from_bins(rows, cols, d_max, forbidden);
        pairs.extend(hungarian_min_assignment(&w).pairs);
    }
    let discarded = classify_unmatched(bins1, bins2, d_max, &pairs, &HashSet::new(), &HashSet::new());
    Matching::from_parts(pairs, discarded)
}

/// Discard records for every photon not in `pairs`. Photons listed in the
/// clash sets get [`DiscardReason::Clash`]; the rest are out of range when no
/// partner bin lies in the delay window at all.
pub(crate) fn classify_unmatched(
    bins1: &[u64],
    bins2: &[u64],
    d_max: u64,
    pairs: &[Pair],
    clashed1: &HashSet<u64>,
    clashed2: &HashSet<u64>,
) -> Vec<Discard> {
    let used1: HashSet<u64> = pairs.iter().map(|p| p.bin1).collect();
    let used2: HashSet<u64> = pairs.iter().map(|p| p.bin2).collect();
    let any_in = |sorted: &[u64], lo: u64, hi: u64| {
        let k = sorted.partition_point(|&x| x < lo);
        k < sorted.len() && sorted[k] <= hi
    };
    let mut out = Vec::new();
    for &a in bins1.iter().filter(|b| !used1.contains(b)) {
        let reason = if clashed1.contains(&a) {
            DiscardReason::Clash
        } else {
            reason_for(any_in(bins2, a, a.saturating_add(d_max)))
        };
        out.push(Discard { bin: a, stream: Side::One, reason });
    }
    for &b in bins2.iter().filter(|b| !used2.contains(b)) {
        let reason = if clashed2.contains(&b) {
            DiscardReason::Clash
        } else {
            reason_for(any_in(bins1, b.saturating_sub(d_max), b))
        };
        out.push(Discard { bin: b, stream: Side::Two, reason });
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MatchMetrics {
    /// Paired photons over all photons of both streams.
    pub matched_fraction: f64,
    /// Pairs lost to clashes over pairs formed plus pairs lost.
    pub clash_rate: f64,
    /// Photons with no partner in the delay window over all photons.
    pub out_of_range_fraction: f64,
    pub mean_delay: f64,
}

pub fn matching_metrics(m: &Matching, s1: &PhotonStream, s2: &PhotonStream) -> MatchMetrics {
    let total = s1.photon_count() + s2.photon_count();
    let pairs = m.pairs.len();
    let clashed = m.count_discards(Side::One, DiscardReason::Clash);
    let out_of_range = m.discarded.iter().filter(|d| d.reason == DiscardReason::OutOfRange).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    MatchMetrics {
        matched_fraction: ratio(2 * pairs, total),
        clash_rate: ratio(clashed, pairs + clashed),
        out_of_range_fraction: ratio(out_of_range, total),
        mean_delay: if pairs == 0 { 0.0 } else { m.total_weight as f64 / pairs as f64 },
    }
}

/// Pair rows `pair,bin1,bin2,delay,,,` and discard rows
/// `discard,,,,bin,stream,reason`.
pub fn write_matching_csv<W: Write>(writer: W, m: &Matching) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["record", "bin1", "bin2", "delay", "bin", "stream", "reason"])?;
    for p in &m.pairs {
        csv.write_record(["pair", &p.bin1.to_string(), &p.bin2.to_string(), &p.delay.to_string(), "", "", ""])?;
    }
    for d in &m.discarded {
        let stream = match d.stream {
            Side::One => "1",
            Side::Two => "2",
        };
        csv.write_record(["discard", "", "", "", &d.bin.to_string(), stream, d.reason.as_str()])?;
    }
    csv.flush().map_err(|e| Error::Io { path: "<matching>".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(n: usize, bins: &[usize]) -> PhotonStream {
        PhotonStream::from_occupied(n, bins)
    }

    #[test]
    fn single_feasible_pair() {
        let w = build_assignment_matrix(&stream(8, &[0]), &stream(8, &[2]), 3);
        assert_eq!(w.n(), 1);
        assert_eq!(w.entry(0, 0), Entry::Real);
        assert_eq!(w.weight(0, 0), 2);
    }

    #[test]
    fn out_of_range_pair_is_virtual() {
        let w = build_assignment_matrix(&stream(8, &[0]), &stream(8, &[5]), 3);
        assert_eq!(w.n(), 1);
        assert_eq!(w.entry(0, 0), Entry::OutOfRange);
        assert_eq!(w.weight(0, 0), w.virtual_weight());
    }

    #[test]
    fn unequal_counts_are_padded() {
        let w = build_assignment_matrix(&stream(8, &[0, 5]), &stream(8, &[2]), 3);
        assert_eq!(w.n(), 2);
        assert_eq!((w.entry(0, 0), w.weight(0, 0)), (Entry::Real, 2));
        assert_eq!(w.entry(0, 1), Entry::Padding);
        assert_eq!(w.entry(1, 0), Entry::OutOfRange);
        assert_eq!(w.entry(1, 1), Entry::Padding);
        assert!(w.virtual_weight() >= 1_000 * (w.max_real_weight().unwrap() + 1));
    }

    #[test]
    fn empty_streams_give_all_virtual() {
        let w = build_assignment_matrix(&stream(8, &[]), &stream(8, &[1, 2]), 3);
        assert_eq!(w.n(), 2);
        assert!((0..2).all(|i| (0..2).all(|j| w.is_virtual(i, j))));
        let m = hungarian_min_assignment(&w);
        assert!(m.pairs.is_empty());
        assert_eq!(m.discarded.len(), 2);
    }

    #[test]
    fn virtual_weight_scales() {
        assert_eq!(virtual_weight_for(10, 63), 1_000_000);
        assert_eq!(virtual_weight_for(10, 5_000), 5_001_000);
        assert!(virtual_weight_for(10_000, 999) >= 10_001 * 1000);
    }

    #[test]
    fn diagonal_forced_by_virtual_entries() {
        let w = WeightMatrix::from_entries(2, &[Some(0), None, None, Some(0)]);
        let m = hungarian_min_assignment(&w);
        let got: Vec<(u64, u64)> = m.pairs.iter().map(|p| (p.bin1, p.bin2)).collect();
        assert_eq!(got, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total_weight, 0);
    }

    #[test]
    fn two_by_two_brute_force_example() {
        let w = WeightMatrix::from_entries(2, &[Some(1), Some(2), Some(2), Some(4)]);
        let m = hungarian_min_assignment(&w);
        let got: Vec<(u64, u64)> = m.pairs.iter().map(|p| (p.bin1, p.bin2)).collect();
        assert_eq!(got, vec![(0, 1), (1, 0)]);
        assert_eq!(m.total_weight, 4);
    }

    #[test]
    fn hungarian_prunes_virtual_and_labels_reasons() {
        let s1 = stream(10, &[0, 5]);
        let s2 = stream(10, &[2]);
        let m = hungarian_min_assignment(&build_assignment_matrix(&s1, &s2, 3));
        assert_eq!(m.pairs, vec![Pair { bin1: 0, bin2: 2, delay: 2 }]);
        assert_eq!(m.discarded, vec![Discard { bin: 5, stream: Side::One, reason: DiscardReason::OutOfRange }]);
        m.check(3).unwrap();
    }

    #[test]
    fn decomposed_matches_full_solve() {
        let s1 = crate::streams::generate_stream(0.2, 300, 11).unwrap();
        let s2 = crate::streams::generate_stream(0.2, 300, 12).unwrap();
        for d_max in [0, 1, 3, 7, 15] {
            let full = hungarian_min_assignment(&build_assignment_matrix(&s1, &s2, d_max));
            let split = solve_decomposed(&bins_of(&s1), &bins_of(&s2), d_max, &HashSet::new());
            assert_eq!(full.pairs.len(), split.pairs.len(), "d_max {d_max}");
            assert_eq!(full.total_weight, split.total_weight, "d_max {d_max}");
            split.check(d_max).unwrap();
            assert_eq!(split.photon_bins(), (bins_of(&s1), bins_of(&s2)));
        }
    }

    #[test]
    fn metrics_count_directly() {
        let s1 = stream(10, &[0, 3, 6]);
        let s2 = stream(10, &[1, 4, 9]);
        let m = Matching::from_parts(
            vec![Pair { bin1: 0, bin2: 1, delay: 1 }, Pair { bin1: 3, bin2: 4, delay: 1 }],
            vec![
                Discard { bin: 6, stream: Side::One, reason: DiscardReason::Unpaired },
                Discard { bin: 9, stream: Side::Two, reason: DiscardReason::Unpaired },
            ],
        );
        let metrics = matching_metrics(&m, &s1, &s2);
        assert!((metrics.matched_fraction - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(metrics.mean_delay, 1.0);
        assert_eq!(metrics.clash_rate, 0.0);

        let empty = Matching::default();
        assert_eq!(matching_metrics(&empty, &s1, &s2).matched_fraction, 0.0);

        let full = Matching::from_parts(
            vec![
                Pair { bin1: 0, bin2: 1, delay: 1 },
                Pair { bin1: 3, bin2: 4, delay: 1 },
                Pair { bin1: 6, bin2: 9, delay: 3 },
            ],
            vec![],
        );
        assert_eq!(matching_metrics(&full, &s1, &s2).matched_fraction, 1.0);
    }

    #[test]
    fn check_rejects_reuse_and_bad_delays() {
        let reuse = Matching::from_parts(
            vec![Pair { bin1: 0, bin2: 1, delay: 1 }, Pair { bin1: 0, bin2: 2, delay: 2 }],
            vec![],
        );
        assert!(reuse.check(3).is_err());
        let backwards = Matching::from_parts(vec![Pair { bin1: 4, bin2: 1, delay: 3 }], vec![]);
        assert!(backwards.check(3).is_err());
    }

    #[test]
    fn csv_rows() {
        let m = Matching::from_parts(
            vec![Pair { bin1: 0, bin2: 2, delay: 2 }],
            vec![Discard { bin: 5, stream: Side::One, reason: DiscardReason::OutOfRange }],
        );
        let mut buf = Vec::new();
        write_matching_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "record,bin1,bin2,delay,bin,stream,reason\npair,0,2,2,,,\ndiscard,,,,5,1,range\n");
    }
}
