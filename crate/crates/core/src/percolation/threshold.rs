use rayon::prelude::*;

use super::lattice::{apply_draws, draw_fusions, FusionDraw};
use super::{
    fusion_loss_probability, spans, BondLoss, DiamondLattice, OutcomeSemantics, Scheme, SiteEffect, BOOSTED_SUCCESS,
};
use crate::error::{check_probability, Error, Result};
use crate::mux_sim::Estimate;
use crate::rng::{derive_seed, stream_rng};
use crate::union_find::UnionFind;

/// Loss rate of the two ancilla photons of every fusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AncillaLoss {
    Fixed(f64),
    /// Ancillas lose photons at the same rate `p_l` as the delayed inputs.
    EqualToPhoton,
}

impl AncillaLoss {
    pub fn rate(&self, p_l: f64) -> f64 {
        match *self {
            AncillaLoss::Fixed(a) => a,
            AncillaLoss::EqualToPhoton => p_l,
        }
    }
}

fn trial_draws(lattice: &DiamondLattice, seed: u64, trial: u64) -> Vec<FusionDraw> {
    draw_fusions(lattice, &mut stream_rng(derive_seed(seed, &[trial]), 0))
}

/// Fraction of `trials` sampled lattices that span, with its binomial
/// standard error. Trial `t` always uses the same random numbers for a given
/// `seed`, whatever the loss rates or scheme.
pub fn percolation_probability(
    lattice: &DiamondLattice,
    scheme: Scheme,
    p_l: f64,
    ancilla: AncillaLoss,
    semantics: &OutcomeSemantics,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    check_probability("p_l", p_l)?;
    let a_l = check_probability("a_l", ancilla.rate(p_l))?;
    semantics.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let hits: usize = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let draws = trial_draws(lattice, seed, t);
            usize::from(spans(lattice, &apply_draws(lattice, &draws, scheme, p_l, a_l, semantics)))
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok(Estimate { mean: p, stderr: (p * (1.0 - p) / trials as f64).sqrt() })
}

#[derive(Clone, Copy, Debug)]
enum Damage {
    Bond(u32),
    Site(u32),
}

/// Largest `p_l` at which each trial still spans, or `-inf` if it does not
/// span even without photon loss.
///
/// Because the sampled losses are nested in `p_l`, every trial has a single
/// critical loss rate. All damage events are applied first and then undone
/// in decreasing order of the loss rate that triggers them, tracking
/// connectivity with a union-find (the Newman-Ziff sweep). Trial `t` uses the
/// same random numbers as in [`percolation_probability`].
pub fn critical_losses(
    lattice: &DiamondLattice,
    scheme: Scheme,
    ancilla: AncillaLoss,
    semantics: &OutcomeSemantics,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    semantics.validate()?;
    if !semantics.is_monotone() {
        return Err(Error::InvalidParameter(
            "critical losses need semantics where a loss removes at least what a failure does".into(),
        ));
    }
    if let AncillaLoss::Fixed(a) = ancilla {
        check_probability("a_l", a)?;
    }
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); lattice.n_sites()];
    for (i, &[a, b]) in lattice.bonds().iter().enumerate() {
        incident[a as usize].push(i as u32);
        incident[b as usize].push(i as u32);
    }
    let mut arm_bonds: Vec<Vec<u32>> = vec![Vec::new(); lattice.fusions().len()];
    for f in lattice.fusions() {
        if let Some(b) = f.bond {
            for &k in &f.arms {
                arm_bonds[k as usize].push(b);
            }
        }
    }
    let topology = Topology { incident, arm_bonds };
    Ok((0..trials as u64)
        .into_par_iter()
        .map(|t| critical_loss(lattice, &topology, &trial_draws(lattice, seed, t), scheme, ancilla, semantics))
        .collect())
}

struct Topology {
    /// Bonds touching each site.
    incident: Vec<Vec<u32>>,
    /// Bonds lost when each site-forming fusion leaves its arm detached.
    arm_bonds: Vec<Vec<u32>>,
}

fn critical_loss(
    lattice: &DiamondLattice,
    topology: &Topology,
    draws: &[FusionDraw],
    scheme: Scheme,
    ancilla: AncillaLoss,
    semantics: &OutcomeSemantics,
) -> f64 {
    // Loss rate above which each damage event happens; -inf means always.
    let mut events: Vec<(f64, Damage)> = Vec::new();
    let never = f64::INFINITY;
    for (i, (f, d)) in lattice.fusions().iter().zip(draws).enumerate() {
        let t_anc = match ancilla {
            AncillaLoss::Fixed(a) if d.ancilla.iter().any(|&u| u < a) => f64::NEG_INFINITY,
            AncillaLoss::Fixed(_) => never,
            AncillaLoss::EqualToPhoton => d.ancilla[0].min(d.ancilla[1]),
        };
        let t_c = d.c;
        let t_b = if scheme == Scheme::Standard { d.b } else { never };
        let t_any = t_anc.min(t_c).min(t_b);
        let fails = d.success >= BOOSTED_SUCCESS;
        match f.bond {
            None => {
                let onset = |effect: SiteEffect| {
                    if fails && semantics.site_failure >= effect {
                        f64::NEG_INFINITY
                    } else if semantics.site_loss >= effect {
                        t_any
                    } else {
                        never
                    }
                };
                events.push((onset(SiteEffect::RemoveSite), Damage::Site(f.c_site)));
                let t_detach = onset(SiteEffect::DetachArm);
                events.extend(topology.arm_bonds[i].iter().map(|&b| (t_detach, Damage::Bond(b))));
            }
            Some(b) => {
                if !fails || d.connect < semantics.connect_on_failure {
                    events.push((t_any, Damage::Bond(b)));
                } else {
                    events.push((f64::NEG_INFINITY, Damage::Bond(b)));
                }
                match semantics.bond_loss {
                    BondLoss::BondOnly => {}
                    BondLoss::Owner => {
                        events.push((t_c, Damage::Site(f.c_site)));
                        events.push((t_b, Damage::Site(f.b_site)));
                    }
                    BondLoss::BothEndpoints => {
                        events.push((t_any, Damage::Site(f.c_site)));
                        events.push((t_any, Damage::Site(f.b_site)));
                    }
                }
            }
        }
    }
    events.retain(|e| e.0 < never);
    events.sort_by(|x, y| y.0.total_cmp(&x.0));

    let n = lattice.n_sites();
    let (bottom, top) = (n, n + 1);
    let mut kills = vec![0u32; n];
    let mut removed = vec![0u32; lattice.bonds().len()];
    for &(_, e) in &events {
        match e {
            Damage::Bond(b) => removed[b as usize] += 1,
            Damage::Site(s) => kills[s as usize] += 1,
        }
    }
    let mut uf = UnionFind::new(n + 2);
    let bonds = lattice.bonds();
    let join_site = |uf: &mut UnionFind, s: u32, kills: &[u32], removed: &[u32]| {
        if lattice.is_bottom(s) {
            uf.union(s as usize, bottom);
        }
        if lattice.is_top(s) {
            uf.union(s as usize, top);
        }
        for &b in &topology.incident[s as usize] {
            let [x, y] = bonds[b as usize];
            if removed[b as usize] == 0 && kills[x as usize] == 0 && kills[y as usize] == 0 {
                uf.union(x as usize, y as usize);
            }
        }
    };
    for s in 0..n as u32 {
        if kills[s as usize] == 0 {
            join_site(&mut uf, s, &kills, &removed);
        }
    }
    if uf.connected(bottom, top) {
        return 1.0;
    }
    for &(t, e) in &events {
        if t == f64::NEG_INFINITY {
            break;
        }
        match e {
            Damage::Bond(b) => {
                removed[b as usize] -= 1;
                let [x, y] = bonds[b as usize];
                if removed[b as usize] == 0 && kills[x as usize] == 0 && kills[y as usize] == 0 {
                    uf.union(x as usize, y as usize);
                }
            }
            Damage::Site(s) => {
                kills[s as usize] -= 1;
                if kills[s as usize] == 0 {
                    join_site(&mut uf, s, &kills, &removed);
                }
            }
        }
        if uf.connected(bottom, top) {
            return t;
        }
    }
    f64::NEG_INFINITY
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ThresholdMethod {
    /// Bisection on `p_l`, one batch of trials per probe.
    #[default]
    Bisection,
    /// Quantile of the per-trial critical loss rates.
    CriticalQuantile,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdParams {
    pub scheme: Scheme,
    /// Spanning probability the lattice must reach.
    pub target: f64,
    pub ancilla: AncillaLoss,
    pub l: usize,
    pub trials: usize,
    pub tolerance: f64,
    pub semantics: OutcomeSemantics,
    pub seed: u64,
    pub method: ThresholdMethod,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rmux,
            target: 0.9,
            ancilla: AncillaLoss::Fixed(0.0),
            l: 10,
            trials: 2000,
            tolerance: 0.002,
            semantics: OutcomeSemantics::default(),
            seed: 0,
            method: ThresholdMethod::Bisection,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdResult {
    /// Midpoint of the final bracket.
    pub p_star: f64,
    /// Highest probed rate meeting the target.
    pub lo: f64,
    /// Lowest probed rate missing it.
    pub hi: f64,
    /// Every probe `(p_l, spanning probability)` in the order made.
    pub probes: Vec<(f64, Estimate)>,
}

/// Largest photon loss rate whose spanning probability still reaches
/// `params.target`.
pub fn loss_threshold(params: &ThresholdParams) -> Result<ThresholdResult> {
    if !(params.target > 0.0 && params.target < 1.0) {
        return Err(Error::InvalidParameter(format!("target {} must lie in (0, 1)", params.target)));
    }
    if params.tolerance.is_nan() || params.tolerance <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let lattice = DiamondLattice::new(params.l)?;
    match params.method {
        ThresholdMethod::Bisection => bisect(&lattice, params),
        ThresholdMethod::CriticalQuantile => quantile(&lattice, params),
    }
}

fn bisect(lattice: &DiamondLattice, params: &ThresholdParams) -> Result<ThresholdResult> {
    let mut probes = Vec::new();
    let mut probe = |p: f64| -> Result<bool> {
        let est = percolation_probability(
            lattice,
            params.scheme,
            p,
            params.ancilla,
            &params.semantics,
            params.trials,
            params.seed,
        )?;
        probes.push((p, est));
        Ok(est.mean >= params.target)
    };
    if !probe(0.0)? {
        return Err(Error::TargetUnreachable { target: params.target, at_zero: probes[0].1.mean });
    }
    if probe(1.0)? {
        return Ok(ThresholdResult { p_star: 1.0, lo: 1.0, hi: 1.0, probes });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > params.tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdResult { p_star: 0.5 * (lo + hi), lo, hi, probes })
}

fn quantile(lattice: &DiamondLattice, params: &ThresholdParams) -> Result<ThresholdResult> {
    let mut crit =
        critical_losses(lattice, params.scheme, params.ancilla, &params.semantics, params.trials, params.seed)?;
    crit.sort_by(|a, b| b.total_cmp(a));
    let n = crit.len();
    let at_zero = crit.iter().filter(|&&c| c >= 0.0).count() as f64 / n as f64;
    if at_zero < params.target {
        return Err(Error::TargetUnreachable { target: params.target, at_zero });
    }
    let k = ((params.target * n as f64).ceil() as usize).clamp(1, n);
    let p = crit[k - 1];
    let frac = crit.iter().filter(|&&c| c >= p).count() as f64 / n as f64;
    let est = Estimate { mean: frac, stderr: (frac * (1.0 - frac) / n as f64).sqrt() };
    Ok(ThresholdResult { p_star: p, lo: p, hi: p, probes: vec![(p, est)] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

impl LineFit {
    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("a line fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("a line fit needs distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - intercept - slope * x).collect();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LineFit { slope, intercept, residuals, r_squared })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub a_l: f64,
    pub p_star: f64,
    /// Fusion loss probability at the threshold.
    pub f_l: f64,
    /// Share of `f_l` not captured by its linear part `n p_l + 2 a_l`.
    pub nonlinear_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierReport {
    pub points: Vec<FrontierPoint>,
    /// Ancilla loss rates where even `p_l = 0` misses the target.
    pub unreachable: Vec<f64>,
    pub fit: Option<LineFit>,
}

impl FrontierReport {
    pub fn max_nonlinear_fraction(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.nonlinear_fraction))
    }
}

/// Threshold `p_l*` for every fixed ancilla loss in `a_grid`, and a straight
/// line through the reachable points.
pub fn tradeoff_frontier(template: &ThresholdParams, a_grid: &[f64]) -> Result<FrontierReport> {
    if a_grid.is_empty() {
        return Err(Error::InvalidParameter("ancilla loss grid is empty".into()));
    }
    let n_lossy = match template.scheme {
        Scheme::Rmux => 1,
        Scheme::Standard => 2,
    };
    let mut points = Vec::new();
    let mut unreachable = Vec::new();
    for &a_l in a_grid {
        let params = ThresholdParams { ancilla: AncillaLoss::Fixed(a_l), ..*template };
        match loss_threshold(&params) {
            Ok(r) => {
                let p = r.p_star.max(0.0);
                let f_l = fusion_loss_probability(p, a_l, n_lossy)?;
                let linear = n_lossy as f64 * p + 2.0 * a_l;
                let nonlinear_fraction = if f_l == 0.0 { 0.0 } else { (linear - f_l).abs() / f_l };
                points.push(FrontierPoint { a_l, p_star: r.p_star, f_l, nonlinear_fraction });
            }
            Err(Error::TargetUnreachable { .. }) => unreachable.push(a_l),
            Err(e) => return Err(e),
        }
    }
    let fit = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.a_l).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.p_star).collect();
        Some(fit_line(&xs, &ys)?)
    } else {
        None
    };
    Ok(FrontierReport { points, unreachable, fit })
}
