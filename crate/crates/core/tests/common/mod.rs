//! Reference implementations written independently of the library, used to
//! cross-check it on small inputs.

#![allow(dead_code)]

use std::collections::HashMap;

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Minimum assignment cost by trying every permutation.
pub fn brute_force_assignment(n: usize, costs: &[u64]) -> u64 {
    permutations(n).iter().map(|p| p.iter().enumerate().map(|(r, &c)| costs[r * n + c]).sum()).min().unwrap_or(0)
}

/// Best matching over a partial cost matrix (`None` = no edge): most edges
/// first, then least total cost. Returns `(edges, cost)`.
pub fn brute_force_partial(n: usize, costs: &[Option<u64>]) -> (usize, u64) {
    let mut best = (0usize, 0u64);
    for p in permutations(n) {
        let mut edges = 0;
        let mut cost = 0;
        for (r, &c) in p.iter().enumerate() {
            if let Some(w) = costs[r * n + c] {
                edges += 1;
                cost += w;
            }
        }
        if edges > best.0 || (edges == best.0 && cost < best.1) {
            best = (edges, cost);
        }
    }
    best
}

/// One switch visit: time bin and whether the photon changes rail there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Visit {
    switch: usize,
    bin: u64,
    cross: bool,
}

/// Stage delays of an `s`-switch network, input side first.
pub fn stage_delays(s: u32, descending: bool) -> Vec<u64> {
    let mut d: Vec<u64> = (0..s.saturating_sub(1)).map(|i| 1u64 << i).collect();
    if descending {
        d.reverse();
    }
    d
}

/// Every switch timeline a photon arriving in `bin` can follow to leave
/// `delay` bins later: each stage is either taken straight or delayed, the
/// photon enters the first switch on rail 0 and leaves the last on rail 0.
fn timelines(bin: u64, delay: u64, delays: &[u64]) -> Vec<Vec<Visit>> {
    let stages = delays.len();
    let mut out = Vec::new();
    for mask in 0u32..(1 << stages) {
        let rails: Vec<u8> = (0..stages).map(|i| ((mask >> i) & 1) as u8).collect();
        let total: u64 = rails.iter().zip(delays).map(|(&r, &d)| u64::from(r) * d).sum();
        if total != delay {
            continue;
        }
        let mut visits = Vec::with_capacity(stages + 1);
        let mut t = bin;
        let mut rail_in = 0u8;
        for sw in 0..=stages {
            let rail_out = if sw < stages { rails[sw] } else { 0 };
            visits.push(Visit { switch: sw, bin: t, cross: rail_in != rail_out });
            if sw < stages {
                t += u64::from(rail_out) * delays[sw];
            }
            rail_in = rail_out;
        }
        out.push(visits);
    }
    out
}

/// Whether all photons `(arrival, delay)` can be routed together: a depth
/// first search over every photon's timelines, keeping one setting per
/// `(switch, bin)`.
pub fn jointly_routable(photons: &[(u64, u64)], delays: &[u64]) -> bool {
    let options: Vec<Vec<Vec<Visit>>> = photons.iter().map(|&(b, d)| timelines(b, d, delays)).collect();
    if options.iter().any(|o| o.is_empty()) {
        return false;
    }
    fn dfs(k: usize, options: &[Vec<Vec<Visit>>], settings: &mut HashMap<(usize, u64), (bool, usize)>) -> bool {
        if k == options.len() {
            return true;
        }
        'next: for timeline in &options[k] {
            let mut added = Vec::new();
            for v in timeline {
                match settings.get_mut(&(v.switch, v.bin)) {
                    Some((cross, users)) if *cross == v.cross => {
                        *users += 1;
                        added.push((v.switch, v.bin));
                    }
                    Some(_) => {
                        undo(settings, &added);
                        continue 'next;
                    }
                    None => {
                        settings.insert((v.switch, v.bin), (v.cross, 1));
                        added.push((v.switch, v.bin));
                    }
                }
            }
            if dfs(k + 1, options, settings) {
                return true;
            }
            undo(settings, &added);
        }
        false
    }
    fn undo(settings: &mut HashMap<(usize, u64), (bool, usize)>, added: &[(usize, u64)]) {
        for key in added {
            let e = settings.get_mut(key).unwrap();
            e.1 -= 1;
            if e.1 == 0 {
                settings.remove(key);
            }
        }
    }
    dfs(0, &options, &mut HashMap::new())
}

/// Whether a path of alive sites and present bonds joins the bottom layer to
/// the top layer, by exhaustive depth-first path search.
pub fn spans_by_path_search(
    n_sites: usize,
    bonds: &[[u32; 2]],
    bond_present: &[bool],
    site_alive: &[bool],
    is_bottom: impl Fn(u32) -> bool,
    is_top: impl Fn(u32) -> bool,
) -> bool {
    let mut adj = vec![Vec::new(); n_sites];
    for (i, &[a, b]) in bonds.iter().enumerate() {
        if bond_present[i] && site_alive[a as usize] && site_alive[b as usize] {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
    }
    fn walk(v: u32, adj: &[Vec<u32>], on_path: &mut [bool], is_top: &dyn Fn(u32) -> bool) -> bool {
        if is_top(v) {
            return true;
        }
        on_path[v as usize] = true;
        for &w in &adj[v as usize] {
            if !on_path[w as usize] && walk(w, adj, on_path, is_top) {
                return true;
            }
        }
        on_path[v as usize] = false;
        false
    }
    (0..n_sites as u32)
        .filter(|&v| site_alive[v as usize] && is_bottom(v))
        .any(|v| walk(v, &adj, &mut vec![false; n_sites], &is_top))
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn chance(&mut self, p: f64) -> bool {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 <= p
    }
}
