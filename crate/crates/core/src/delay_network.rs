//! Binary-delay switching networks.
//!
//! A network of `s` 2x2 switches has `s - 1` delaying stages between
//! consecutive switches. Each stage offers two rails: a straight one and one
//! carrying the stage delay (1, 2, 4, ... bins). The last switch selects the
//! output port. A photon enters switch 0 on input port 0 and must leave the
//! last switch on output port 0.
//!
//! A switch setting is shared by everything passing that switch in the same
//! time bin: `bar` keeps the rail index, `cross` swaps it. Two photons at one
//! switch in one bin whose paths need different settings clash.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use crate::error::{Error, Result};

/// Largest number of switches accepted; keeps every delay inside `u64`.
pub const MAX_SWITCHES: u32 = 62;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum StageOrder {
    /// Delays 1, 2, 4, ... from input to output.
    #[default]
    Ascending,
    /// Delays ..., 4, 2, 1.
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelayNetwork {
    switches: u32,
    order: StageOrder,
}

impl DelayNetwork {
    pub fn new(switches: u32) -> Result<Self> {
        if switches == 0 || switches > MAX_SWITCHES {
            return Err(Error::InvalidParameter(format!("switch count must be in 1..={MAX_SWITCHES}, got {switches}")));
        }
        Ok(Self { switches, order: StageOrder::Ascending })
    }

    /// Smallest network whose maximum delay is at least `d_max`.
    pub fn for_max_delay(d_max: u64) -> Result<Self> {
        let switches = 1 + (64 - d_max.leading_zeros());
        Self::new(switches)
    }

    pub fn with_order(mut self, order: StageOrder) -> Self {
        self.order = order;
        self
    }

    pub fn switches(&self) -> u32 {
        self.switches
    }

    pub fn order(&self) -> StageOrder {
        self.order
    }

    pub fn stage_delays(&self) -> Vec<u64> {
        let stages = self.switches - 1;
        let mut delays: Vec<u64> = (0..stages).map(|i| 1u64 << i).collect();
        if self.order == StageOrder::Descending {
            delays.reverse();
        }
        delays
    }

    pub fn max_delay(&self) -> u64 {
        (1u64 << (self.switches - 1)) - 1
    }

    /// Per-switch hops of a photon that realises `request.delay`. The rail
    /// taken after a stage is `1` exactly when that stage's delay is part of
    /// the binary expansion of the requested delay.
    pub fn path(&self, request: RoutingRequest) -> Result<Vec<Hop>> {
        if request.delay > self.max_delay() {
            return Err(Error::DelayOutOfRange {
                delay: request.delay,
                max: self.max_delay(),
                switches: self.switches,
            });
        }
        let delays = self.stage_delays();
        let last = self.switches as usize - 1;
        let mut hops = Vec::with_capacity(last + 1);
        let mut time = request.arrival_bin;
        let mut in_rail = 0u8;
        for switch in 0..=last {
            let stage = delays.get(switch).copied();
            let out_rail = stage.map_or(0, |d| u8::from(request.delay & d != 0));
            hops.push(Hop { switch, bin: time, in_rail, out_rail });
            if let (Some(d), 1) = (stage, out_rail) {
                time += d;
            }
            in_rail = out_rail;
        }
        Ok(hops)
    }
}

pub fn max_delay(switches: u32) -> Result<u64> {
    Ok(DelayNetwork::new(switches)?.max_delay())
}

/// Rounds `k` up to a power of two and returns it with the switch depth
/// `1 + log2(k_up)` of the network that selects among `k_up` bins.
pub fn depth_for_bins(k: u64) -> Result<(u64, u32)> {
    if k == 0 {
        return Err(Error::InvalidParameter("bin count must be at least 1".into()));
    }
    let k_up = k
        .checked_next_power_of_two()
        .ok_or_else(|| Error::InvalidParameter(format!("bin count {k} cannot be rounded to a power of two")))?;
    Ok((k_up, 1 + k_up.trailing_zeros()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutingRequest {
    pub arrival_bin: u64,
    pub delay: u64,
}

impl RoutingRequest {
    pub fn new(arrival_bin: u64, delay: u64) -> Self {
        Self { arrival_bin, delay }
    }

    pub fn exit_bin(&self) -> u64 {
        self.arrival_bin + self.delay
    }
}

/// A photon passing one switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hop {
    pub switch: usize,
    pub bin: u64,
    pub in_rail: u8,
    pub out_rail: u8,
}

impl Hop {
    /// `false` is bar, `true` is cross.
    pub fn setting(&self) -> bool {
        self.in_rail != self.out_rail
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoutedPhoton {
    /// Position of the request in the input list.
    pub index: usize,
    pub request: RoutingRequest,
    /// Rail taken after each delaying stage, 1 = delayed.
    pub rails: Vec<u8>,
}

impl RoutedPhoton {
    pub fn exit_bin(&self) -> u64 {
        self.request.exit_bin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Clash {
    pub switch: usize,
    pub bin: u64,
    pub first: usize,
    pub second: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoutingResult {
    pub routed: Vec<RoutedPhoton>,
    pub clashes: Vec<Clash>,
}

impl RoutingResult {
    pub fn is_clash_free(&self) -> bool {
        self.clashes.is_empty()
    }

    /// Number of clash records each request takes part in.
    pub fn clash_counts(&self, n_requests: usize) -> Vec<usize> {
        let mut counts = vec![0; n_requests];
        for c in &self.clashes {
            counts[c.first] += 1;
            counts[c.second] += 1;
        }
        counts
    }
}

/// Routes every request through `network` and reports all clashes.
///
/// Each conflicting pair is recorded once, at the first switch where the two
/// photons meet with incompatible settings. Photons named in any clash are
/// left out of `routed`.
pub fn route(requests: &[RoutingRequest], network: &DelayNetwork) -> Result<RoutingResult> {
    let mut seen_arrivals = HashSet::with_capacity(requests.len());
    let mut paths = Vec::with_capacity(requests.len());
    for r in requests {
        if !seen_arrivals.insert(r.arrival_bin) {
            return Err(Error::InvalidParameter(format!(
                "two requests arrive in bin {}; a stream holds one photon per bin",
                r.arrival_bin
            )));
        }
        paths.push(network.path(*r)?);
    }

    let mut occupancy: BTreeMap<(usize, u64), Vec<(usize, bool)>> = BTreeMap::new();
    for (idx, hops) in paths.iter().enumerate() {
        for hop in hops {
            occupancy.entry((hop.switch, hop.bin)).or_default().push((idx, hop.setting()));
        }
    }

    let mut clashes = Vec::new();
    let mut reported: HashSet<(usize, usize)> = HashSet::new();
    for (&(switch, bin), visitors) in &occupancy {
        for (a, &(i, set_i)) in visitors.iter().enumerate() {
            for &(j, set_j) in &visitors[a + 1..] {
                if set_i != set_j && reported.insert((i.min(j), i.max(j))) {
                    clashes.push(Clash { switch, bin, first: i.min(j), second: i.max(j) });
                }
            }
        }
    }

    let mut implicated = vec![false; requests.len()];
    for c in &clashes {
        implicated[c.first] = true;
        implicated[c.second] = true;
    }
    let stages = network.switches as usize - 1;
    let routed = requests
        .iter()
        .zip(&paths)
        .enumerate()
        .filter(|(i, _)| !implicated[*i])
        .map(|(index, (request, hops))| RoutedPhoton {
            index,
            request: *request,
            rails: hops[..stages].iter().map(|h| h.out_rail).collect(),
        })
        .collect();
    Ok(RoutingResult { routed, clashes })
}

/// Switch settings committed so far, for routing photons one at a time.
#[derive(Clone, Debug)]
pub struct SwitchSchedule {
    network: DelayNetwork,
    settings: HashMap<(usize, u64), bool>,
}

impl SwitchSchedule {
    pub fn new(network: DelayNetwork) -> Self {
        Self { network, settings: HashMap::new() }
    }

    pub fn network(&self) -> &DelayNetwork {
        &self.network
    }

    /// Commits the path of `request` if it agrees with every setting already
    /// fixed; returns whether it was accepted.
    pub fn try_commit(&mut self, request: RoutingRequest) -> Result<bool> {
        let hops = self.network.path(request)?;
        let compatible = hops.iter().all(|h| self.settings.get(&(h.switch, h.bin)).is_none_or(|&s| s == h.setting()));
        if compatible {
            for h in &hops {
                self.settings.insert((h.switch, h.bin), h.setting());
            }
        }
        Ok(compatible)
    }
}

/// Writes one row per photon and switch:
/// `photon_id,arrival_bin,delay,stage,rail,bin_at_stage`. `rail` is the rail
/// taken when leaving that switch (always 0 at the output switch).
pub fn write_trace_csv<W: Write>(writer: W, requests: &[RoutingRequest], network: &DelayNetwork) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["photon_id", "arrival_bin", "delay", "stage", "rail", "bin_at_stage"])?;
    for (id, r) in requests.iter().enumerate() {
        for hop in network.path(*r)? {
            csv.write_record([
                id.to_string(),
                r.arrival_bin.to_string(),
                r.delay.to_string(),
                hop.switch.to_string(),
                hop.out_rail.to_string(),
                hop.bin.to_string(),
            ])?;
        }
    }
    csv.flush().map_err(|e| Error::Io { path: "<trace>".into(), source: e })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(arrival: u64, delay: u64) -> RoutingRequest {
        RoutingRequest::new(arrival, delay)
    }

    #[test]
    fn max_delay_closed_form() {
        assert!(max_delay(0).is_err());
        assert_eq!(max_delay(1).unwrap(), 0);
        assert_eq!(max_delay(3).unwrap(), 3);
        assert_eq!(max_delay(7).unwrap(), 63);
        for s in 1..=20u32 {
            assert_eq!(max_delay(s).unwrap(), 2u64.pow(s - 1) - 1);
        }
    }

    #[test]
    fn stage_delays_follow_order() {
        let net = DelayNetwork::new(5).unwrap();
        assert_eq!(net.stage_delays(), vec![1, 2, 4, 8]);
        let net = net.with_order(StageOrder::Descending);
        assert_eq!(net.stage_delays(), vec![8, 4, 2, 1]);
        assert!(DelayNetwork::new(1).unwrap().stage_delays().is_empty());
    }

    #[test]
    fn for_max_delay_picks_smallest_network() {
        assert_eq!(DelayNetwork::for_max_delay(0).unwrap().switches(), 1);
        assert_eq!(DelayNetwork::for_max_delay(3).unwrap().switches(), 3);
        assert_eq!(DelayNetwork::for_max_delay(4).unwrap().switches(), 4);
        assert_eq!(DelayNetwork::for_max_delay(63).unwrap().switches(), 7);
    }

    #[test]
    fn depth_for_bins_matches_table_rows() {
        assert_eq!(depth_for_bins(44).unwrap(), (64, 7));
        assert_eq!(depth_for_bins(146).unwrap(), (256, 9));
        assert_eq!(depth_for_bins(1).unwrap(), (1, 1));
        assert_eq!(depth_for_bins(64).unwrap(), (64, 7));
        assert!(depth_for_bins(0).is_err());
    }

    #[test]
    fn lone_photon_delay_five() {
        let net = DelayNetwork::new(4).unwrap();
        let res = route(&[req(0, 5)], &net).unwrap();
        assert!(res.is_clash_free());
        assert_eq!(res.routed.len(), 1);
        let photon = &res.routed[0];
        // stages carry delays 1, 2, 4; 5 = 1 + 4
        assert_eq!(photon.rails, vec![1, 0, 1]);
        let used: Vec<u64> =
            net.stage_delays().iter().zip(&photon.rails).filter(|(_, &r)| r == 1).map(|(&d, _)| d).collect();
        assert_eq!(used, vec![1, 4]);
        assert_eq!(photon.exit_bin(), 5);
    }

    #[test]
    fn empty_request_list() {
        let res = route(&[], &DelayNetwork::new(3).unwrap()).unwrap();
        assert!(res.routed.is_empty());
        assert!(res.clashes.is_empty());
    }

    #[test]
    fn opposite_demands_at_one_switch_clash_once() {
        // s = 3, stages 1 and 2. Photon 0 at bin 0 with delay 1 reaches
        // switch 1 at bin 1 on the delayed rail and continues straight
        // (cross). Photon 1 at bin 1 with delay 0 reaches switch 1 at bin 1
        // on the straight rail and stays straight (bar).
        let net = DelayNetwork::new(3).unwrap();
        let res = route(&[req(0, 1), req(1, 0)], &net).unwrap();
        assert_eq!(res.clashes, vec![Clash { switch: 1, bin: 1, first: 0, second: 1 }]);
        assert!(res.routed.is_empty());
    }

    #[test]
    fn compatible_coincidence_is_not_a_clash() {
        // Both photons cross at switch 1 in bin 1: photon 0 (delayed rail ->
        // straight) and photon 1 (straight rail -> delayed rail).
        let net = DelayNetwork::new(3).unwrap();
        let res = route(&[req(0, 1), req(1, 2)], &net).unwrap();
        assert!(res.is_clash_free(), "{:?}", res.clashes);
        assert_eq!(res.routed.len(), 2);
    }

    #[test]
    fn output_switch_can_clash() {
        // Both photons exit in bin 2: they hit the output switch on
        // different rails and both need output port 0.
        let net = DelayNetwork::new(2).unwrap();
        let res = route(&[req(1, 1), req(2, 0)], &net).unwrap();
        assert_eq!(res.clashes.len(), 1);
        assert_eq!(res.clashes[0].switch, 1);
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        let net = DelayNetwork::new(3).unwrap();
        assert!(matches!(route(&[req(0, 4)], &net), Err(Error::DelayOutOfRange { delay: 4, max: 3, switches: 3 })));
        assert!(route(&[req(2, 0), req(2, 1)], &net).is_err());
    }

    #[test]
    fn every_delay_is_realisable_and_never_promotes() {
        for s in 1..=8u32 {
            for order in [StageOrder::Ascending, StageOrder::Descending] {
                let net = DelayNetwork::new(s).unwrap().with_order(order);
                for d in 0..=net.max_delay() {
                    let hops = net.path(req(3, d)).unwrap();
                    let last = hops.last().unwrap();
                    assert_eq!(last.bin, 3 + d);
                    assert_eq!(last.out_rail, 0);
                    assert!(hops.windows(2).all(|w| w[1].bin >= w[0].bin));
                }
                assert!(net.path(req(0, net.max_delay() + 1)).is_err());
            }
        }
    }

    #[test]
    fn schedule_agrees_with_route() {
        let net = DelayNetwork::new(3).unwrap();
        let mut sched = SwitchSchedule::new(net);
        assert!(sched.try_commit(req(0, 1)).unwrap());
        assert!(!sched.try_commit(req(1, 0)).unwrap());
        assert!(sched.try_commit(req(1, 2)).unwrap());
    }

    #[test]
    fn trace_csv_has_one_row_per_switch() {
        let net = DelayNetwork::new(4).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[req(0, 5), req(2, 0)], &net).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "photon_id,arrival_bin,delay,stage,rail,bin_at_stage");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert_eq!(lines[1], "0,0,5,0,1,0");
        assert_eq!(lines[4], "0,0,5,3,0,5");
    }
}
