//! Diamond-lattice percolation under photon loss.
//!
//! A unit cell is built from six 3-GHZ states `G1..G6`. `G1..G3` fuse into
//! microcluster A and `G4..G6` into microcluster B; each microcluster is one
//! site of the diamond lattice. Every fusion takes one photon that is never
//! actively delayed (type B) and one that is (type C), plus a Bell pair of
//! ancillas for boosting. The two remaining photons, `G2(b)` and `G5(b)`, are
//! the data qubits (type A).
//!
//! With relative multiplexing only the type-C photon of a fusion passes
//! through a switched delay, so only it is exposed to the switching loss
//! `p_l`. With standard multiplexing both fusion inputs are.

mod lattice;
mod threshold;

use std::fmt;
use std::str::FromStr;

pub use lattice::{
    sample_lattice_state, spans, BondLoss, DiamondLattice, FusionSite, LatticeState, OutcomeSemantics, SiteEffect,
};
pub use threshold::{
    critical_losses, fit_line, loss_threshold, percolation_probability, tradeoff_frontier, AncillaLoss, FrontierPoint,
    FrontierReport, LineFit, ThresholdMethod, ThresholdParams, ThresholdResult,
};

use crate::error::{check_probability, Error, Result};
pub use crate::mux_sim::Scheme;

/// Success probability of a boosted fusion with no photon lost.
pub const BOOSTED_SUCCESS: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhotonType {
    /// Data qubit, never fused.
    A,
    /// Fused without active delay.
    B,
    /// Fused after an active (switched) delay.
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ghz {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
}

impl Ghz {
    pub const ALL: [Ghz; 6] = [Ghz::G1, Ghz::G2, Ghz::G3, Ghz::G4, Ghz::G5, Ghz::G6];

    /// Microcluster the state is fused into.
    pub fn micro(self) -> Micro {
        match self {
            Ghz::G1 | Ghz::G2 | Ghz::G3 => Micro::A,
            _ => Micro::B,
        }
    }
}

impl FromStr for Ghz {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G1" => Ok(Ghz::G1),
            "G2" => Ok(Ghz::G2),
            "G3" => Ok(Ghz::G3),
            "G4" => Ok(Ghz::G4),
            "G5" => Ok(Ghz::G5),
            "G6" => Ok(Ghz::G6),
            _ => Err(Error::InvalidParameter(format!("unknown GHZ state `{s}`"))),
        }
    }
}

/// The two sites of a unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Micro {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Photon {
    pub ghz: Ghz,
    pub label: char,
}

impl Photon {
    pub const fn new(ghz: Ghz, label: char) -> Self {
        Self { ghz, label }
    }
}

impl fmt::Display for Photon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({})", self.ghz, self.label)
    }
}

pub fn classify_photon(ghz: Ghz, label: char) -> Result<PhotonType> {
    use Ghz::*;
    match (ghz, label) {
        (G2 | G5, 'b') => Ok(PhotonType::A),
        (G1 | G3 | G4 | G6, 'c') | (G2 | G5, 'a' | 'c') => Ok(PhotonType::B),
        (G1 | G3 | G4 | G6, 'a' | 'b') => Ok(PhotonType::C),
        _ => Err(Error::InvalidParameter(format!("unknown photon label `{label}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionId {
    FA,
    FB,
    FC,
    FD,
    FE,
    FF,
    FG,
    FH,
}

impl FusionId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionId::FA => "F_A",
            FusionId::FB => "F_B",
            FusionId::FC => "F_C",
            FusionId::FD => "F_D",
            FusionId::FE => "F_E",
            FusionId::FF => "F_F",
            FusionId::FG => "F_G",
            FusionId::FH => "F_H",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionClass {
    /// Acts inside one unit cell.
    SiteForming,
    /// Shared with an adjacent cell.
    BondForming,
}

/// Cell offset from a cell's microcluster A to the microcluster B joined by
/// a bond fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Offset {
    Same,
    MinusX,
    MinusY,
    MinusZ,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Builds the microcluster.
    Site(Micro),
    /// Joins microcluster A of this cell to microcluster B of the offset cell.
    Bond(Offset),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FusionSpec {
    pub id: FusionId,
    pub class: FusionClass,
    pub role: Role,
    /// Input that is never actively delayed.
    pub b_photon: Photon,
    /// Input that is actively delayed.
    pub c_photon: Photon,
}

impl FusionSpec {
    /// Inputs exposed to switching loss.
    pub fn lossy_inputs(&self, scheme: Scheme) -> u32 {
        match scheme {
            Scheme::Rmux => 1,
            Scheme::Standard => 2,
        }
    }
}

const fn fusion(id: FusionId, class: FusionClass, role: Role, b: Photon, c: Photon) -> FusionSpec {
    FusionSpec { id, class, role, b_photon: b, c_photon: c }
}

/// The eight fusions owned by one unit cell.
///
/// `F_B` joins the two microclusters of a cell. It counts among the
/// site-forming fusions for photon bookkeeping, but in the lattice it is the
/// intra-cell bond, giving every site its fourth neighbour.
pub const FUSIONS: [FusionSpec; 8] = {
    use FusionClass::*;
    use Ghz::*;
    const fn p(g: Ghz, l: char) -> Photon {
        Photon::new(g, l)
    }
    [
        fusion(FusionId::FC, SiteForming, Role::Site(Micro::A), p(G2, 'a'), p(G1, 'a')),
        fusion(FusionId::FE, SiteForming, Role::Site(Micro::A), p(G2, 'c'), p(G3, 'a')),
        fusion(FusionId::FD, SiteForming, Role::Site(Micro::B), p(G5, 'a'), p(G4, 'a')),
        fusion(FusionId::FF, SiteForming, Role::Site(Micro::B), p(G5, 'c'), p(G6, 'a')),
        fusion(FusionId::FB, SiteForming, Role::Bond(Offset::Same), p(G4, 'c'), p(G1, 'b')),
        fusion(FusionId::FA, BondForming, Role::Bond(Offset::MinusX), p(G6, 'c'), p(G3, 'b')),
        fusion(FusionId::FG, BondForming, Role::Bond(Offset::MinusY), p(G1, 'c'), p(G4, 'b')),
        fusion(FusionId::FH, BondForming, Role::Bond(Offset::MinusZ), p(G3, 'c'), p(G6, 'b')),
    ]
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionOutcome {
    Success,
    FailHeralded,
    FailLoss,
}

/// `f_l = 1 - (1 - p_l)^n_lossy (1 - a_l)^2`.
pub fn fusion_loss_probability(p_l: f64, a_l: f64, n_lossy: u32) -> Result<f64> {
    check_probability("p_l", p_l)?;
    check_probability("a_l", a_l)?;
    if !(1..=2).contains(&n_lossy) {
        return Err(Error::InvalidParameter(format!("n_lossy must be 1 or 2, got {n_lossy}")));
    }
    Ok(1.0 - (1.0 - p_l).powi(n_lossy as i32) * (1.0 - a_l).powi(2))
}
