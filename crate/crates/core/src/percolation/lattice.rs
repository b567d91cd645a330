use std::str::FromStr;

use rand::Rng;

use super::{FusionOutcome, Ghz, Micro, Offset, Role, Scheme, BOOSTED_SUCCESS, FUSIONS};
use crate::error::{check_probability, Error, Result};
use crate::rng::SimRng;
use crate::union_find::UnionFind;

/// What a lost photon at a bond fusion does beyond removing the bond.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BondLoss {
    /// Only the bond is lost.
    BondOnly,
    /// The site that owns each lost GHZ photon is removed. Ancilla loss
    /// removes no site.
    #[default]
    Owner,
    /// Any loss removes both endpoint sites.
    BothEndpoints,
}

/// What a failed site-forming fusion does to its microcluster. Ordered by
/// severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SiteEffect {
    /// The microcluster is built anyway.
    Keep,
    /// The GHZ state the fusion should have attached (the one holding its
    /// delayed photon) is cut off, so both bonds that use its photons are
    /// lost.
    DetachArm,
    /// The whole site is removed.
    RemoveSite,
}

/// How fusion outcomes act on the lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeSemantics {
    /// Probability that a heralded bond-fusion failure still leaves the bond.
    pub connect_on_failure: f64,
    pub bond_loss: BondLoss,
    /// Effect of a loss at a site-forming fusion.
    pub site_loss: SiteEffect,
    /// Effect of a heralded failure at a site-forming fusion.
    pub site_failure: SiteEffect,
}

impl Default for OutcomeSemantics {
    fn default() -> Self {
        Self {
            connect_on_failure: 0.0,
            bond_loss: BondLoss::Owner,
            site_loss: SiteEffect::RemoveSite,
            site_failure: SiteEffect::Keep,
        }
    }
}

impl BondLoss {
    pub fn as_str(&self) -> &'static str {
        match self {
            BondLoss::BondOnly => "bond_only",
            BondLoss::Owner => "owner",
            BondLoss::BothEndpoints => "both_endpoints",
        }
    }
}

impl FromStr for BondLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bond_only" => Ok(BondLoss::BondOnly),
            "owner" => Ok(BondLoss::Owner),
            "both_endpoints" => Ok(BondLoss::BothEndpoints),
            _ => Err(Error::InvalidParameter(format!("unknown bond loss rule `{s}`"))),
        }
    }
}

impl SiteEffect {
    pub fn as_str(&self) -> &'static str {
        match self {
            SiteEffect::Keep => "keep",
            SiteEffect::DetachArm => "detach_arm",
            SiteEffect::RemoveSite => "remove_site",
        }
    }
}

impl FromStr for SiteEffect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep" => Ok(SiteEffect::Keep),
            "detach_arm" => Ok(SiteEffect::DetachArm),
            "remove_site" => Ok(SiteEffect::RemoveSite),
            _ => Err(Error::InvalidParameter(format!("unknown site effect `{s}`"))),
        }
    }
}

impl OutcomeSemantics {
    /// A loss acts exactly like a heralded failure: a failed bond fusion
    /// removes only its bond (it still connects with probability 1/4), and a
    /// failed site fusion cuts off one GHZ arm. Each fusion then fails with
    /// probability `1 - (1 - f_l) * 3/4`, so only `f_l` matters.
    pub fn calibrated() -> Self {
        Self {
            connect_on_failure: 0.25,
            bond_loss: BondLoss::BondOnly,
            site_loss: SiteEffect::DetachArm,
            site_failure: SiteEffect::DetachArm,
        }
    }

    /// `default` or `calibrated`.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "calibrated" => Ok(Self::calibrated()),
            _ => Err(Error::InvalidParameter(format!("unknown semantics `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("connect_on_failure", self.connect_on_failure)?;
        Ok(())
    }

    /// True when a loss never does less damage than a heralded failure, so
    /// raising the loss rate can only remove structure.
    pub fn is_monotone(&self) -> bool {
        self.site_loss >= self.site_failure
    }
}

/// One fusion placed in the lattice. For site-forming fusions both owners are
/// the site being formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionSite {
    /// Index into [`FUSIONS`](super::FUSIONS).
    pub spec: usize,
    pub cell: u32,
    /// Site owning the actively delayed (type C) input.
    pub c_site: u32,
    /// Site owning the undelayed (type B) input.
    pub b_site: u32,
    pub bond: Option<u32>,
    /// For bond fusions, the site-forming fusions that attach the GHZ states
    /// of the two inputs to their microclusters.
    pub arms: [u32; 2],
}

/// `L x L x L` unit cells with two sites each. Periodic in x and y, open in
/// z; spanning is tested between the `z = 0` and `z = L - 1` layers of cells.
///
/// Site A of cell `c` bonds to site B of `c`, `c - x`, `c - y` and `c - z`,
/// which is the diamond lattice with coordination 4. Fusions are stored with
/// the four site-forming fusions of every cell first (cell by cell), then the
/// bond fusions.
#[derive(Clone, Debug)]
pub struct DiamondLattice {
    l: usize,
    bonds: Vec<[u32; 2]>,
    fusions: Vec<FusionSite>,
}

impl DiamondLattice {
    pub fn new(l: usize) -> Result<Self> {
        if l == 0 || 2 * l * l * l > u32::MAX as usize / 2 {
            return Err(Error::InvalidParameter(format!("lattice size {l} out of range")));
        }
        let mut lattice = Self { l, bonds: Vec::new(), fusions: Vec::new() };
        let cells = || (0..l).flat_map(move |z| (0..l).flat_map(move |y| (0..l).map(move |x| (x, y, z))));
        for (x, y, z) in cells() {
            let cell = lattice.cell_index(x, y, z);
            for (spec, f) in FUSIONS.iter().enumerate() {
                if let Role::Site(m) = f.role {
                    let s = lattice.site_index(x, y, z, m);
                    lattice.fusions.push(FusionSite { spec, cell, c_site: s, b_site: s, bond: None, arms: [0; 2] });
                }
            }
        }
        for (x, y, z) in cells() {
            lattice.add_bonds(x, y, z);
        }
        Ok(lattice)
    }

    fn add_bonds(&mut self, x: usize, y: usize, z: usize) {
        let l = self.l;
        let cell = self.cell_index(x, y, z);
        let a = self.site_index(x, y, z, Micro::A);
        for (spec, f) in FUSIONS.iter().enumerate() {
            let Role::Bond(offset) = f.role else { continue };
            let other = match offset {
                Offset::Same => (x, y, z),
                Offset::MinusX => ((x + l - 1) % l, y, z),
                Offset::MinusY => (x, (y + l - 1) % l, z),
                Offset::MinusZ if z == 0 => continue,
                Offset::MinusZ => (x, y, z - 1),
            };
            let b = self.site_index(other.0, other.1, other.2, Micro::B);
            let b_cell = self.cell_index(other.0, other.1, other.2);
            let place = |micro: Micro| if micro == Micro::A { (a, cell) } else { (b, b_cell) };
            let (c_site, c_cell) = place(f.c_photon.ghz.micro());
            let (b_site, b_owner_cell) = place(f.b_photon.ghz.micro());
            let bond = self.bonds.len() as u32;
            self.bonds.push([a, b]);
            self.fusions.push(FusionSite {
                spec,
                cell,
                c_site,
                b_site,
                bond: Some(bond),
                arms: [arm_fusion(c_cell, f.c_photon.ghz), arm_fusion(b_owner_cell, f.b_photon.ghz)],
            });
        }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_sites(&self) -> usize {
        2 * self.l.pow(3)
    }

    pub fn cell_index(&self, x: usize, y: usize, z: usize) -> u32 {
        (x + self.l * (y + self.l * z)) as u32
    }

    pub fn site_index(&self, x: usize, y: usize, z: usize, micro: Micro) -> u32 {
        2 * self.cell_index(x, y, z) + u32::from(micro == Micro::B)
    }

    /// z layer of a site's cell.
    pub fn layer(&self, site: u32) -> usize {
        site as usize / 2 / (self.l * self.l)
    }

    pub fn is_bottom(&self, site: u32) -> bool {
        self.layer(site) == 0
    }

    pub fn is_top(&self, site: u32) -> bool {
        self.layer(site) == self.l - 1
    }

    pub fn bonds(&self) -> &[[u32; 2]] {
        &self.bonds
    }

    pub fn fusions(&self) -> &[FusionSite] {
        &self.fusions
    }
}

/// Index of the site-forming fusion attaching GHZ state `ghz` of `cell`.
fn arm_fusion(cell: u32, ghz: Ghz) -> u32 {
    let k = FUSIONS
        .iter()
        .filter(|f| matches!(f.role, Role::Site(_)))
        .position(|f| f.c_photon.ghz == ghz)
        .expect("every bond photon belongs to an arm GHZ state");
    4 * cell + k as u32
}

/// Uniform variates deciding one fusion, drawn in this field order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FusionDraw {
    pub c: f64,
    pub b: f64,
    pub ancilla: [f64; 2],
    pub success: f64,
    pub connect: f64,
}

pub(crate) fn draw_fusions(lattice: &DiamondLattice, rng: &mut SimRng) -> Vec<FusionDraw> {
    (0..lattice.fusions.len())
        .map(|_| FusionDraw {
            c: rng.random(),
            b: rng.random(),
            ancilla: [rng.random(), rng.random()],
            success: rng.random(),
            connect: rng.random(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Losses {
    pub c: bool,
    pub b: bool,
    pub ancilla: bool,
}

impl Losses {
    pub fn any(&self) -> bool {
        self.c || self.b || self.ancilla
    }
}

impl FusionDraw {
    pub fn losses(&self, scheme: Scheme, p_l: f64, a_l: f64) -> Losses {
        Losses {
            c: self.c < p_l,
            b: scheme == Scheme::Standard && self.b < p_l,
            ancilla: self.ancilla.iter().any(|&u| u < a_l),
        }
    }

    pub fn outcome(&self, losses: Losses) -> FusionOutcome {
        if losses.any() {
            FusionOutcome::FailLoss
        } else if self.success < BOOSTED_SUCCESS {
            FusionOutcome::Success
        } else {
            FusionOutcome::FailHeralded
        }
    }
}

/// A sampled lattice: which sites survive and which bonds exist.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    pub site_alive: Vec<bool>,
    pub bond_present: Vec<bool>,
    /// Outcome of every fusion, in [`DiamondLattice::fusions`] order.
    pub outcomes: Vec<FusionOutcome>,
    pub scheme: Scheme,
    pub p_l: f64,
    pub a_l: f64,
    pub semantics: OutcomeSemantics,
}

impl LatticeState {
    /// Every site alive and every bond present.
    pub fn full(lattice: &DiamondLattice) -> Self {
        Self {
            site_alive: vec![true; lattice.n_sites()],
            bond_present: vec![true; lattice.bonds.len()],
            outcomes: vec![FusionOutcome::Success; lattice.fusions.len()],
            scheme: Scheme::Rmux,
            p_l: 0.0,
            a_l: 0.0,
            semantics: OutcomeSemantics::default(),
        }
    }

    pub fn bond_density(&self) -> f64 {
        self.bond_present.iter().filter(|&&b| b).count() as f64 / self.bond_present.len().max(1) as f64
    }
}

pub(crate) fn apply_draws(
    lattice: &DiamondLattice,
    draws: &[FusionDraw],
    scheme: Scheme,
    p_l: f64,
    a_l: f64,
    semantics: &OutcomeSemantics,
) -> LatticeState {
    let mut state = LatticeState {
        site_alive: vec![true; lattice.n_sites()],
        bond_present: vec![false; lattice.bonds.len()],
        outcomes: Vec::with_capacity(draws.len()),
        scheme,
        p_l,
        a_l,
        semantics: *semantics,
    };
    let mut detached = vec![false; lattice.fusions.len()];
    for (i, (f, d)) in lattice.fusions.iter().zip(draws).enumerate() {
        let losses = d.losses(scheme, p_l, a_l);
        let outcome = d.outcome(losses);
        state.outcomes.push(outcome);
        match (f.bond, outcome) {
            (None, FusionOutcome::Success) => {}
            (None, failed) => {
                let effect =
                    if failed == FusionOutcome::FailLoss { semantics.site_loss } else { semantics.site_failure };
                match effect {
                    SiteEffect::Keep => {}
                    SiteEffect::DetachArm => detached[i] = true,
                    SiteEffect::RemoveSite => state.site_alive[f.c_site as usize] = false,
                }
            }
            (Some(b), FusionOutcome::Success) => {
                state.bond_present[b as usize] = !f.arms.iter().any(|&k| detached[k as usize]);
            }
            (Some(b), FusionOutcome::FailHeralded) => {
                state.bond_present[b as usize] =
                    d.connect < semantics.connect_on_failure && !f.arms.iter().any(|&k| detached[k as usize]);
            }
            (Some(_), FusionOutcome::FailLoss) => match semantics.bond_loss {
                BondLoss::BondOnly => {}
                BondLoss::Owner => {
                    if losses.c {
                        state.site_alive[f.c_site as usize] = false;
                    }
                    if losses.b {
                        state.site_alive[f.b_site as usize] = false;
                    }
                }
                BondLoss::BothEndpoints => {
                    state.site_alive[f.c_site as usize] = false;
                    state.site_alive[f.b_site as usize] = false;
                }
            },
        }
    }
    state
}

/// Samples every fusion of the lattice once.
///
/// Each fusion consumes six uniforms from `rng` in a fixed order: the delayed
/// photon, the undelayed photon, two ancillas, the success draw and the
/// connect-on-failure draw. A photon is lost when its uniform falls below its
/// loss rate, so states sampled from the same generator state are coupled:
/// raising `p_l` or `a_l`, or moving from relative to standard multiplexing,
/// only adds losses.
pub fn sample_lattice_state(
    lattice: &DiamondLattice,
    scheme: Scheme,
    p_l: f64,
    a_l: f64,
    semantics: &OutcomeSemantics,
    rng: &mut SimRng,
) -> Result<LatticeState> {
    check_probability("p_l", p_l)?;
    check_probability("a_l", a_l)?;
    semantics.validate()?;
    let draws = draw_fusions(lattice, rng);
    Ok(apply_draws(lattice, &draws, scheme, p_l, a_l, semantics))
}

/// True when alive sites joined by present bonds connect the bottom layer of
/// cells to the top layer.
pub fn spans(lattice: &DiamondLattice, state: &LatticeState) -> bool {
    let n = lattice.n_sites();
    let (bottom, top) = (n, n + 1);
    let mut uf = UnionFind::new(n + 2);
    for s in 0..n as u32 {
        if !state.site_alive[s as usize] {
            continue;
        }
        if lattice.is_bottom(s) {
            uf.union(s as usize, bottom);
        }
        if lattice.is_top(s) {
            uf.union(s as usize, top);
        }
    }
    for (&[a, b], &present) in lattice.bonds.iter().zip(&state.bond_present) {
        if present && state.site_alive[a as usize] && state.site_alive[b as usize] {
            uf.union(a as usize, b as usize);
        }
    }
    uf.connected(bottom, top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::fusion_loss_probability;
    use crate::rng::stream_rng;

    #[test]
    fn lattice_counts_and_coordination() {
        let lat = DiamondLattice::new(4).unwrap();
        assert_eq!(lat.n_sites(), 128);
        // four bonds per cell, minus the missing z bonds of the bottom layer
        assert_eq!(lat.bonds().len(), 4 * 64 - 16);
        assert_eq!(lat.fusions().len(), 8 * 64 - 16);
        let mut degree = vec![0; lat.n_sites()];
        for &[a, b] in lat.bonds() {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        for s in 0..lat.n_sites() as u32 {
            let expected = match (s % 2, lat.layer(s)) {
                (0, 0) => 3,
                (1, 3) => 3,
                _ => 4,
            };
            assert_eq!(degree[s as usize], expected, "site {s}");
        }
    }

    #[test]
    fn bonds_join_a_to_b() {
        let lat = DiamondLattice::new(3).unwrap();
        for &[a, b] in lat.bonds() {
            assert_eq!((a % 2, b % 2), (0, 1));
        }
    }

    #[test]
    fn lossless_sampling_keeps_sites_and_three_quarters_of_bonds() {
        let lat = DiamondLattice::new(10).unwrap();
        let mut rng = stream_rng(3, 0);
        let st = sample_lattice_state(&lat, Scheme::Rmux, 0.0, 0.0, &OutcomeSemantics::default(), &mut rng).unwrap();
        assert!(st.site_alive.iter().all(|&a| a));
        let n = st.bond_present.len() as f64;
        let sigma = (0.75 * 0.25 / n).sqrt();
        assert!((st.bond_density() - 0.75).abs() < 3.0 * sigma, "{}", st.bond_density());
    }

    #[test]
    fn total_loss_leaves_no_bonds() {
        let lat = DiamondLattice::new(3).unwrap();
        let mut rng = stream_rng(3, 0);
        let st = sample_lattice_state(&lat, Scheme::Rmux, 1.0, 0.0, &OutcomeSemantics::default(), &mut rng).unwrap();
        assert!(st.bond_present.iter().all(|&b| !b));
        assert!(st.outcomes.iter().all(|&o| o == FusionOutcome::FailLoss));
        assert!(!spans(&lat, &st));
    }

    #[test]
    fn outcome_frequencies_are_multinomial() {
        let lat = DiamondLattice::new(8).unwrap();
        let (p_l, a_l) = (0.05, 0.02);
        for scheme in [Scheme::Rmux, Scheme::Standard] {
            let f_l = fusion_loss_probability(p_l, a_l, FUSIONS[0].lossy_inputs(scheme)).unwrap();
            let mut counts = [0usize; 3];
            let mut rng = stream_rng(17, 0);
            let mut n = 0usize;
            while n < 100_000 {
                let st = sample_lattice_state(&lat, scheme, p_l, a_l, &OutcomeSemantics::default(), &mut rng).unwrap();
                for o in st.outcomes {
                    counts[o as usize] += 1;
                    n += 1;
                }
            }
            let probs = [(1.0 - f_l) * BOOSTED_SUCCESS, (1.0 - f_l) * (1.0 - BOOSTED_SUCCESS), f_l];
            for (c, p) in counts.iter().zip(probs) {
                let sigma = (n as f64 * p * (1.0 - p)).sqrt();
                assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{scheme}: {counts:?} vs {probs:?}");
            }
        }
    }

    #[test]
    fn full_and_empty_states() {
        for l in 1..=4 {
            let lat = DiamondLattice::new(l).unwrap();
            let mut st = LatticeState::full(&lat);
            assert!(spans(&lat, &st));
            st.bond_present.iter_mut().for_each(|b| *b = false);
            assert_eq!(spans(&lat, &st), l == 1);
        }
    }

    #[test]
    fn hand_built_chain() {
        // A(0,0,0) - B(0,0,0) - A(0,0,1) - B(0,0,1): bottom to top through
        // one intra-cell bond, one z bond and another intra-cell bond.
        let lat = DiamondLattice::new(2).unwrap();
        let mut st = LatticeState::full(&lat);
        st.bond_present.iter_mut().for_each(|b| *b = false);
        let b0 = lat.site_index(0, 0, 0, Micro::B);
        let a1 = lat.site_index(0, 0, 1, Micro::A);
        let chain = lat.bonds().iter().position(|&e| e == [a1, b0]).unwrap();
        // the chain is layer 0 -> layer 1 with a single bond
        st.bond_present[chain] = true;
        assert!(spans(&lat, &st));
        st.bond_present[chain] = false;
        assert!(!spans(&lat, &st));
        st.bond_present[chain] = true;
        st.site_alive[a1 as usize] = false;
        assert!(!spans(&lat, &st));
    }

    #[test]
    fn standard_losses_contain_relative_losses() {
        let lat = DiamondLattice::new(5).unwrap();
        let sem = OutcomeSemantics::default();
        for seed in 0..20 {
            let r = sample_lattice_state(&lat, Scheme::Rmux, 0.1, 0.01, &sem, &mut stream_rng(seed, 0)).unwrap();
            let s = sample_lattice_state(&lat, Scheme::Standard, 0.1, 0.01, &sem, &mut stream_rng(seed, 0)).unwrap();
            assert!(r.site_alive.iter().zip(&s.site_alive).all(|(a, b)| a >= b));
            assert!(r.bond_present.iter().zip(&s.bond_present).all(|(a, b)| a >= b));
            assert!(spans(&lat, &r) >= spans(&lat, &s));
        }
    }

    #[test]
    fn arms_point_at_the_fusion_attaching_each_input() {
        let lat = DiamondLattice::new(3).unwrap();
        for f in lat.fusions().iter().filter(|f| f.bond.is_some()) {
            let spec = FUSIONS[f.spec];
            for (arm, photon, site) in [(f.arms[0], spec.c_photon, f.c_site), (f.arms[1], spec.b_photon, f.b_site)] {
                let attach = lat.fusions()[arm as usize];
                assert!(attach.bond.is_none());
                assert_eq!(FUSIONS[attach.spec].c_photon.ghz, photon.ghz);
                assert_eq!(attach.c_site, site);
            }
        }
    }

    #[test]
    fn detached_arm_cuts_both_of_its_bonds() {
        let lat = DiamondLattice::new(3).unwrap();
        let sem = OutcomeSemantics { site_failure: SiteEffect::DetachArm, ..Default::default() };
        let mut rng = stream_rng(8, 0);
        let st = sample_lattice_state(&lat, Scheme::Rmux, 0.0, 0.0, &sem, &mut rng).unwrap();
        for (i, f) in lat.fusions().iter().enumerate() {
            if let Some(b) = f.bond {
                let arms_ok = f.arms.iter().all(|&k| st.outcomes[k as usize] == FusionOutcome::Success);
                let expected = arms_ok && st.outcomes[i] == FusionOutcome::Success;
                assert_eq!(st.bond_present[b as usize], expected);
            }
        }
    }

    #[test]
    fn semantics_monotonicity_flag() {
        let mut sem = OutcomeSemantics::default();
        assert!(sem.is_monotone());
        sem.site_failure = SiteEffect::RemoveSite;
        assert!(sem.is_monotone());
        sem.site_loss = SiteEffect::DetachArm;
        assert!(!sem.is_monotone());
        sem.connect_on_failure = 1.5;
        assert!(sem.validate().is_err());
    }
}
