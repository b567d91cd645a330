//! Closed-form accounting for standard (clocked) multiplexing.
//!
//! A probabilistic source or gate with success probability `eta` repeated `k`
//! times succeeds at least once with probability `1 - (1 - eta)^k`. Repetitions
//! are rounded up to a power of two so a binary switch tree can pick the
//! success. Two stages are concatenated to make one 3-GHZ state: single
//! photons are multiplexed first, then the GHZ generator that consumes them.

use crate::delay_network::depth_for_bins;
use crate::error::{check_probability, Error, Result};

/// Success probability of the GHZ generator fed by six photons.
pub const GHZ_GATE_PROB: f64 = 1.0 / 32.0;
/// Photons consumed per 3-GHZ state.
pub const GHZ_PHOTONS: u32 = 6;

/// Smallest `k` with `1 - (1 - eta)^k >= p_s`.
pub fn required_repetitions(eta: f64, p_s: f64) -> Result<u64> {
    check_probability("eta", eta)?;
    check_probability("p_s", p_s)?;
    if eta == 0.0 {
        return Err(Error::InvalidParameter("eta = 0 can never reach the target".into()));
    }
    if p_s == 0.0 || eta == 1.0 {
        return Ok(1);
    }
    if p_s == 1.0 {
        return Err(Error::InvalidParameter(format!("p_s = 1 is unreachable with eta = {eta}")));
    }
    let fail = 1.0 - eta;
    let mut k = ((1.0 - p_s).ln() / fail.ln()).ceil().max(1.0) as u64;
    // The logarithm can land one off either side of an exact boundary.
    while k > 1 && 1.0 - fail.powf((k - 1) as f64) >= p_s {
        k -= 1;
    }
    while 1.0 - fail.powf(k as f64) < p_s {
        k += 1;
    }
    Ok(k)
}

/// One multiplexing stage.
#[derive(Clone, Debug, PartialEq)]
pub struct MuxStage {
    pub input_prob: f64,
    pub target_prob: f64,
    pub k: u64,
    pub k_up: u64,
    pub depth: u32,
    /// Mean number of successes over all `k_up` bins.
    pub potential_mean: f64,
}

impl MuxStage {
    pub fn new(input_prob: f64, target_prob: f64) -> Result<Self> {
        let k = required_repetitions(input_prob, target_prob)?;
        let (k_up, depth) = depth_for_bins(k)?;
        Ok(Self { input_prob, target_prob, k, k_up, depth, potential_mean: k_up as f64 * input_prob })
    }

    /// Success probability actually delivered by `k_up` repetitions.
    pub fn achieved_prob(&self) -> f64 {
        1.0 - (1.0 - self.input_prob).powf(self.k_up as f64)
    }
}

/// Resources for one GHZ state built by two concatenated stages.
#[derive(Clone, Debug, PartialEq)]
pub struct MuxReport {
    pub stages: Vec<MuxStage>,
    pub n_photons: u32,
    /// `p1^n_photons * p2`: every photon stage and the gate stage succeed.
    pub combined_prob: f64,
    pub combined_depth: u32,
    pub bins_per_stream: u64,
    /// Bins summed over the `n_photons` source streams.
    pub total_bins: u64,
    pub potential_photons_mean: f64,
    pub potential_ghz_mean: f64,
}

impl MuxReport {
    /// Mean GHZ states that could have been made, minus the one kept.
    pub fn wasted_ghz_mean(&self) -> f64 {
        self.potential_ghz_mean - 1.0
    }
}

pub fn ghz_report(eta: f64, p1: f64, p2: f64, n_photons: u32, gate_prob: f64) -> Result<MuxReport> {
    if n_photons == 0 {
        return Err(Error::InvalidParameter("n_photons must be at least 1".into()));
    }
    let photon = MuxStage::new(eta, p1)?;
    let gate = MuxStage::new(gate_prob, p2)?;
    let bins_per_stream = photon.k_up * gate.k_up;
    let potential_photons_mean = (bins_per_stream * u64::from(n_photons)) as f64 * eta;
    Ok(MuxReport {
        combined_prob: p1.powi(n_photons as i32) * p2,
        combined_depth: photon.depth + gate.depth,
        bins_per_stream,
        total_bins: bins_per_stream * u64::from(n_photons),
        potential_photons_mean,
        potential_ghz_mean: potential_photons_mean / f64::from(n_photons) * gate_prob,
        n_photons,
        stages: vec![photon, gate],
    })
}

/// The default six-photon GHZ generator.
pub fn ghz_report_default(eta: f64, p1: f64, p2: f64) -> Result<MuxReport> {
    ghz_report(eta, p1, p2, GHZ_PHOTONS, GHZ_GATE_PROB)
}

/// Evenly spaced stage probabilities `p_min, p_min + step, ..., p_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchGrid {
    pub p_min: f64,
    pub p_max: f64,
    pub step: f64,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self { p_min: 0.8, p_max: 0.99, step: 0.01 }
    }
}

impl SearchGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        check_probability("p_min", self.p_min)?;
        check_probability("p_max", self.p_max)?;
        if self.step.is_nan() || self.step <= 0.0 || self.p_max < self.p_min {
            return Err(Error::InvalidParameter(format!(
                "bad search grid {}..={} step {}",
                self.p_min, self.p_max, self.step
            )));
        }
        let n = ((self.p_max - self.p_min) / self.step + 1e-9).floor() as usize;
        // Rounded to 1e-9 so 0.8 + 19 * 0.01 is exactly 0.99.
        Ok((0..=n).map(|i| ((self.p_min + i as f64 * self.step) * 1e9).round() / 1e9).collect())
    }
}

/// Cheapest concatenated strategy for a target GHZ probability.
#[derive(Clone, Debug, PartialEq)]
pub struct UnusedPotential {
    pub p1: f64,
    pub p2: f64,
    pub wasted_ghz_mean: f64,
    pub k_up1: u64,
    pub k_up2: u64,
    pub report: MuxReport,
}

impl UnusedPotential {
    pub fn total_bins(&self) -> u64 {
        self.report.total_bins
    }
}

/// Searches the grid for `(p1, p2)` with `p1^6 p2 >= p_s` wasting the fewest
/// GHZ states. Ties go to the higher combined probability, then the smaller
/// `p1`.
pub fn unused_potential(eta: f64, p_s: f64, grid: &SearchGrid) -> Result<UnusedPotential> {
    check_probability("p_s", p_s)?;
    let values = grid.values()?;
    let mut best: Option<MuxReport> = None;
    for &p1 in &values {
        for &p2 in &values {
            if p1.powi(GHZ_PHOTONS as i32) * p2 < p_s {
                continue;
            }
            let report = ghz_report_default(eta, p1, p2)?;
            let better = match &best {
                None => true,
                Some(b) => {
                    report.potential_ghz_mean < b.potential_ghz_mean
                        || (report.potential_ghz_mean == b.potential_ghz_mean && report.combined_prob > b.combined_prob)
                }
            };
            if better {
                best = Some(report);
            }
        }
    }
    let report = best.ok_or(Error::Infeasible { target: p_s })?;
    Ok(UnusedPotential {
        p1: report.stages[0].target_prob,
        p2: report.stages[1].target_prob,
        wasted_ghz_mean: report.wasted_ghz_mean(),
        k_up1: report.stages[0].k_up,
        k_up2: report.stages[1].k_up,
        report,
    })
}

/// One point of the unused-potential curve.
#[derive(Clone, Debug, PartialEq)]
pub struct WasteRow {
    pub p_s: f64,
    pub eta: f64,
    pub p1: f64,
    pub p2: f64,
    pub wasted_mean: f64,
    pub k_up1: u64,
    pub k_up2: u64,
    pub total_bins: u64,
}

/// Unused potential for every `(eta, p_s)` pair. Infeasible targets are
/// skipped.
pub fn waste_curve(etas: &[f64], targets: &[f64], grid: &SearchGrid) -> Result<Vec<WasteRow>> {
    let mut rows = Vec::new();
    for &eta in etas {
        for &p_s in targets {
            match unused_potential(eta, p_s, grid) {
                Ok(u) => rows.push(WasteRow {
                    p_s,
                    eta,
                    p1: u.p1,
                    p2: u.p2,
                    wasted_mean: u.wasted_ghz_mean,
                    k_up1: u.k_up1,
                    k_up2: u.k_up2,
                    total_bins: u.total_bins(),
                }),
                Err(Error::Infeasible { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}
