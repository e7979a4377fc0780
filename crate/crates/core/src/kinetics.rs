//! Receptor kinetics: parameter types, the mass-action reaction networks of
//! the reciprocal and cyclic gating schemes, and their equilibrium initial
//! conditions.
//!
//! State vectors are flat and ordered as
//!
//! ```text
//! A, ORO, ARO, ORA, ARA, ARA*, DRO, ORD, DRD, ARD, DRA, RD [, ARO*, ORA*]
//! ```
//!
//! The bracketed tail is present only for the cyclic scheme. Receptor species
//! are named by three letters: the ligand on site 1 (`A`, `D` or `O` for
//! empty), the receptor, and the ligand on site 2. Starred species are open.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

/// Acetylcholine binding constants for the closed (and, cyclic only, open)
/// receptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AChKinetics {
    /// Dissociation rate from site 1 (1/s).
    #[serde(rename = "k_dissA1")]
    pub k_diss1: f64,
    /// Dissociation rate from site 2 (1/s).
    #[serde(rename = "k_dissA2")]
    pub k_diss2: f64,
    /// Dissociation equilibrium constant at site 1 (M).
    #[serde(rename = "K_A1")]
    pub kd1: f64,
    /// Dissociation equilibrium constant at site 2 (M).
    #[serde(rename = "K_A2")]
    pub kd2: f64,
    /// Dissociation rate from an open receptor (1/s).
    #[serde(rename = "k_dissA_star")]
    pub k_diss_open: f64,
    /// Dissociation equilibrium constant of an open receptor (M).
    #[serde(rename = "K_A_star")]
    pub kd_open: f64,
}

impl AChKinetics {
    pub fn validate(&self) -> Result<()> {
        require_positive("k_dissA1", self.k_diss1)?;
        require_positive("k_dissA2", self.k_diss2)?;
        require_positive("K_A1", self.kd1)?;
        require_positive("K_A2", self.kd2)?;
        require_positive("k_dissA_star", self.k_diss_open)?;
        require_positive("K_A_star", self.kd_open)?;
        for (name, v) in [
            ("k_assocA1", self.k_assoc1()),
            ("k_assocA2", self.k_assoc2()),
            ("k_assocA_star", self.k_assoc_open()),
        ] {
            require_positive(name, v)?;
        }
        Ok(())
    }

    /// Both sites share one dissociation rate and one equilibrium constant,
    /// and the open state is seeded with the closed-state values.
    pub fn tied(k_diss: f64, kd: f64) -> Self {
        Self {
            k_diss1: k_diss,
            k_diss2: k_diss,
            kd1: kd,
            kd2: kd,
            k_diss_open: k_diss,
            kd_open: kd,
        }
    }

    pub fn k_assoc1(&self) -> f64 {
        self.k_diss1 / self.kd1
    }

    pub fn k_assoc2(&self) -> f64 {
        self.k_diss2 / self.kd2
    }

    pub fn k_assoc_open(&self) -> f64 {
        self.k_diss_open / self.kd_open
    }
}

/// Gating and desensitization rates (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelKinetics {
    pub k_open: f64,
    pub k_close: f64,
    pub k_d_plus: f64,
    pub k_d_minus: f64,
}

impl ChannelKinetics {
    pub fn validate(&self) -> Result<()> {
        require_positive("k_open", self.k_open)?;
        require_positive("k_close", self.k_close)?;
        require_positive("k_d_plus", self.k_d_plus)?;
        require_positive("k_d_minus", self.k_d_minus)
    }
}

/// Binding constants of a blocking drug at the two receptor sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrugKinetics {
    #[serde(rename = "K_D1")]
    pub kd1: f64,
    #[serde(rename = "K_D2")]
    pub kd2: f64,
    #[serde(rename = "k_dissD1")]
    pub k_diss1: f64,
    #[serde(rename = "k_dissD2")]
    pub k_diss2: f64,
}

impl DrugKinetics {
    pub fn validate(&self) -> Result<()> {
        require_positive("K_D1", self.kd1)?;
        require_positive("K_D2", self.kd2)?;
        require_positive("k_dissD1", self.k_diss1)?;
        require_positive("k_dissD2", self.k_diss2)?;
        require_positive("k_assocD1", self.k_assoc1())?;
        require_positive("k_assocD2", self.k_assoc2())
    }

    pub fn k_assoc1(&self) -> f64 {
        self.k_diss1 / self.kd1
    }

    pub fn k_assoc2(&self) -> f64 {
        self.k_diss2 / self.kd2
    }

    /// Site selectivity `K_D2 / K_D1`.
    pub fn selectivity(&self) -> f64 {
        self.kd2 / self.kd1
    }
}

/// Simulation environment: the ACh pulse, its clearance, receptor density
/// and the simulated time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(rename = "A_init")]
    pub a_init: f64,
    pub k_decay: f64,
    #[serde(rename = "R_total")]
    pub r_total: f64,
    pub horizon: f64,
}

pub const R_TOTAL: f64 = 7.75e-5;
pub const DEFAULT_HORIZON: f64 = 5e-3;

impl Environment {
    /// Synaptic cleft: a small ACh pulse cleared by acetylcholinesterase.
    pub fn in_vivo() -> Self {
        Self {
            a_init: 7.75e-6,
            k_decay: 1.2e4,
            r_total: R_TOTAL,
            horizon: DEFAULT_HORIZON,
        }
    }

    /// Outside-out patch with a sustained, saturating ACh application.
    pub fn in_vitro() -> Self {
        Self {
            a_init: 7.75e-3,
            k_decay: 0.0,
            r_total: R_TOTAL,
            horizon: DEFAULT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("A_init", self.a_init)?;
        if !(self.k_decay.is_finite() && self.k_decay >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "k_decay",
                reason: format!("must be finite and >= 0, got {}", self.k_decay),
            });
        }
        require_positive("R_total", self.r_total)?;
        require_positive("horizon", self.horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    TwoSite,
    Reciprocal,
    Cyclic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::TwoSite, ModelKind::Reciprocal, ModelKind::Cyclic];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TwoSite => "two-site",
            ModelKind::Reciprocal => "reciprocal",
            ModelKind::Cyclic => "cyclic",
        }
    }

    /// The gating scheme of a kinetic model; `None` for the static two-site model.
    pub fn scheme(self) -> Option<Scheme> {
        match self {
            ModelKind::TwoSite => None,
            ModelKind::Reciprocal => Some(Scheme::Reciprocal),
            ModelKind::Cyclic => Some(Scheme::Cyclic),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "two-site" => Ok(ModelKind::TwoSite),
            "reciprocal" => Ok(ModelKind::Reciprocal),
            "cyclic" => Ok(ModelKind::Cyclic),
            other => Err(format!(
                "unknown model `{other}`; valid choices: two-site, reciprocal, cyclic"
            )),
        }
    }
}

/// Gating scheme of the competitive kinetic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// ACh stays bound until the channel has closed.
    Reciprocal,
    /// The channel closes only after ACh has left an open receptor.
    Cyclic,
}

impl Scheme {
    pub fn model(self) -> ModelKind {
        match self {
            Scheme::Reciprocal => ModelKind::Reciprocal,
            Scheme::Cyclic => ModelKind::Cyclic,
        }
    }

    /// Species in state-vector order.
    pub fn species(self) -> &'static [Species] {
        match self {
            Scheme::Reciprocal => &Species::ALL[..12],
            Scheme::Cyclic => &Species::ALL,
        }
    }

    pub fn dim(self) -> usize {
        self.species().len()
    }

    pub fn open_species(self) -> &'static [Species] {
        match self {
            Scheme::Reciprocal => &[Species::AraOpen],
            Scheme::Cyclic => &[Species::AraOpen, Species::AroOpen, Species::OraOpen],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    A,
    Oro,
    Aro,
    Ora,
    Ara,
    AraOpen,
    Dro,
    Ord,
    Drd,
    Ard,
    Dra,
    Rd,
    AroOpen,
    OraOpen,
}

impl Species {
    pub const ALL: [Species; 14] = [
        Species::A,
        Species::Oro,
        Species::Aro,
        Species::Ora,
        Species::Ara,
        Species::AraOpen,
        Species::Dro,
        Species::Ord,
        Species::Drd,
        Species::Ard,
        Species::Dra,
        Species::Rd,
        Species::AroOpen,
        Species::OraOpen,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::A => "A",
            Species::Oro => "ORO",
            Species::Aro => "ARO",
            Species::Ora => "ORA",
            Species::Ara => "ARA",
            Species::AraOpen => "ARA_star",
            Species::Dro => "DRO",
            Species::Ord => "ORD",
            Species::Drd => "DRD",
            Species::Ard => "ARD",
            Species::Dra => "DRA",
            Species::Rd => "RD",
            Species::AroOpen => "ARO_star",
            Species::OraOpen => "ORA_star",
        }
    }

    pub fn is_receptor(self) -> bool {
        self != Species::A
    }
}

/// Free ligand whose concentration multiplies a binding flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ligand {
    A,
    D,
}

/// A first-order receptor transition `reactant -> product`, optionally
/// pseudo-first-order in free ACh or drug.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reaction {
    pub reactant: Species,
    pub product: Species,
    pub rate: f64,
    pub ligand: Option<Ligand>,
    /// Change in free ACh per event: -1 binds, +1 releases.
    pub ach_change: i8,
}

impl Reaction {
    fn first_order(reactant: Species, product: Species, rate: f64) -> Self {
        Self {
            reactant,
            product,
            rate,
            ligand: None,
            ach_change: 0,
        }
    }

    fn binds(reactant: Species, product: Species, rate: f64, ligand: Ligand) -> Self {
        Self {
            reactant,
            product,
            rate,
            ligand: Some(ligand),
            ach_change: if ligand == Ligand::A { -1 } else { 0 },
        }
    }

    fn releases(reactant: Species, product: Species, rate: f64, ligand: Ligand) -> Self {
        Self {
            reactant,
            product,
            rate,
            ligand: None,
            ach_change: if ligand == Ligand::A { 1 } else { 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    scheme: Scheme,
    reactions: Vec<Reaction>,
}

/// Assembles the mass-action network for a kinetic model.
pub fn build_reaction_network(
    model: ModelKind,
    ach: &AChKinetics,
    chan: &ChannelKinetics,
    drug: &DrugKinetics,
) -> Result<ReactionNetwork> {
    let scheme = model.scheme().ok_or(Error::UnsupportedModel(model.name()))?;
    ach.validate()?;
    chan.validate()?;
    drug.validate()?;

    use Ligand::{A, D};
    use Species::*;

    let mut rx = Vec::with_capacity(34);
    let mut pair = |from: Species, to: Species, k_assoc: f64, k_diss: f64, lig: Ligand| {
        rx.push(Reaction::binds(from, to, k_assoc, lig));
        rx.push(Reaction::releases(to, from, k_diss, lig));
    };

    let (ka1, ka2) = (ach.k_assoc1(), ach.k_assoc2());
    let (kd1, kd2) = (drug.k_assoc1(), drug.k_assoc2());

    pair(Oro, Aro, ka1, ach.k_diss1, A);
    pair(Oro, Ora, ka2, ach.k_diss2, A);
    pair(Aro, Ara, ka2, ach.k_diss2, A);
    pair(Ora, Ara, ka1, ach.k_diss1, A);
    pair(Oro, Dro, kd1, drug.k_diss1, D);
    pair(Oro, Ord, kd2, drug.k_diss2, D);
    pair(Dro, Drd, kd2, drug.k_diss2, D);
    pair(Ord, Drd, kd1, drug.k_diss1, D);
    pair(Aro, Ard, kd2, drug.k_diss2, D);
    pair(Ora, Dra, kd1, drug.k_diss1, D);
    pair(Dro, Dra, ka2, ach.k_diss2, A);
    pair(Ord, Ard, ka1, ach.k_diss1, A);

    rx.push(Reaction::first_order(AraOpen, Rd, chan.k_d_plus));
    rx.push(Reaction::first_order(Rd, AraOpen, chan.k_d_minus));

    match scheme {
        Scheme::Reciprocal => {
            rx.push(Reaction::first_order(Ara, AraOpen, chan.k_open));
            rx.push(Reaction::first_order(AraOpen, Ara, chan.k_close));
        }
        Scheme::Cyclic => {
            let k_assoc_open = ach.k_assoc_open();
            rx.push(Reaction::first_order(Ara, AraOpen, chan.k_open));
            rx.push(Reaction::releases(AraOpen, AroOpen, ach.k_diss_open, A));
            rx.push(Reaction::releases(AraOpen, OraOpen, ach.k_diss_open, A));
            rx.push(Reaction::binds(AroOpen, AraOpen, k_assoc_open, A));
            rx.push(Reaction::binds(OraOpen, AraOpen, k_assoc_open, A));
            rx.push(Reaction::first_order(AroOpen, Aro, chan.k_close));
            rx.push(Reaction::first_order(OraOpen, Ora, chan.k_close));
        }
    }

    Ok(ReactionNetwork { scheme, reactions: rx })
}

impl ReactionNetwork {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn dim(&self) -> usize {
        self.scheme.dim()
    }

    #[inline]
    fn multiplier(r: &Reaction, a: f64, d: f64) -> f64 {
        match r.ligand {
            None => r.rate,
            Some(Ligand::A) => r.rate * a,
            Some(Ligand::D) => r.rate * d,
        }
    }

    /// Unchecked right-hand side; `y` and `dy` must have `self.dim()` entries.
    pub fn eval_into(&self, k_decay: f64, d: f64, y: &[f64], dy: &mut [f64]) {
        let a = y[0];
        dy.iter_mut().for_each(|v| *v = 0.0);
        dy[0] = -k_decay * a;
        for r in &self.reactions {
            let flux = Self::multiplier(r, a, d) * y[r.reactant.index()];
            dy[r.reactant.index()] -= flux;
            dy[r.product.index()] += flux;
            if r.ach_change != 0 {
                dy[0] += f64::from(r.ach_change) * flux;
            }
        }
    }

    /// Analytic Jacobian, row-major `dim x dim`.
    pub fn jacobian_into(&self, k_decay: f64, d: f64, y: &[f64], jac: &mut [f64]) {
        let n = self.dim();
        let a = y[0];
        jac.iter_mut().for_each(|v| *v = 0.0);
        jac[0] = -k_decay;
        for r in &self.reactions {
            let (i, o) = (r.reactant.index(), r.product.index());
            let m = Self::multiplier(r, a, d);
            jac[i * n + i] -= m;
            jac[o * n + i] += m;
            let ach = f64::from(r.ach_change);
            if r.ach_change != 0 {
                jac[i] += ach * m;
            }
            if r.ligand == Some(Ligand::A) {
                let df_da = r.rate * y[i];
                jac[i * n] -= df_da;
                jac[o * n] += df_da;
                jac[0] += ach * df_da;
            }
        }
    }
}

/// Concentrations of free ACh and every receptor species of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    scheme: Scheme,
    values: Vec<f64>,
}

impl KineticState {
    pub fn new(scheme: Scheme, values: Vec<f64>) -> Result<Self> {
        if values.len() != scheme.dim() {
            return Err(Error::DimensionMismatch {
                expected: scheme.dim(),
                got: values.len(),
            });
        }
        Ok(Self { scheme, values })
    }

    pub fn zeros(scheme: Scheme) -> Self {
        Self {
            scheme,
            values: vec![0.0; scheme.dim()],
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Concentration of `species`; zero for species the scheme lacks.
    pub fn get(&self, species: Species) -> f64 {
        self.values.get(species.index()).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, species: Species, value: f64) {
        self.values[species.index()] = value;
    }

    pub fn receptor_total(&self) -> f64 {
        self.values[1..].iter().sum()
    }

    pub fn open(&self) -> f64 {
        self.scheme.open_species().iter().map(|&s| self.get(s)).sum()
    }
}

/// Tolerated negative excursion, relative to `R_total`, before a state is
/// rejected as unphysical.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// Time derivative of `state` under `network` with the drug clamped at `d`.
pub fn rhs(network: &ReactionNetwork, env: &Environment, d: f64, state: &KineticState) -> Result<KineticState> {
    if state.scheme != network.scheme || state.values.len() != network.dim() {
        return Err(Error::DimensionMismatch {
            expected: network.dim(),
            got: state.values.len(),
        });
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "D",
            reason: format!("drug concentration must be >= 0, got {d}"),
        });
    }
    let floor = -NEGATIVE_SLACK * env.r_total;
    for (&s, &v) in network.scheme.species().iter().zip(&state.values) {
        if v < floor || v.is_nan() {
            return Err(Error::NegativeConcentration {
                species: s.name(),
                value: v,
            });
        }
    }
    let mut dy = vec![0.0; network.dim()];
    network.eval_into(env.k_decay, d, &state.values, &mut dy);
    Ok(KineticState {
        scheme: network.scheme,
        values: dy,
    })
}

/// State at the moment of ACh release: receptors are equilibrated with the
/// drug alone, and no ACh is bound yet.
pub fn initial_state(
    model: ModelKind,
    ach: &AChKinetics,
    drug: &DrugKinetics,
    env: &Environment,
    d: f64,
) -> Result<KineticState> {
    let scheme = model.scheme().ok_or(Error::UnsupportedModel(model.name()))?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "D",
            reason: format!("drug concentration must be finite and >= 0, got {d}"),
        });
    }
    let (ka1, ka2) = (ach.kd1, ach.kd2);
    let delta = (d * ka1 + drug.kd1 * ka1) * (d * ka2 + drug.kd2 * ka2);
    let drd = env.r_total * d * d * ka1 * ka2 / delta;
    let dro = env.r_total * d * drug.kd2 * ka1 * ka2 / delta;
    let ord = env.r_total * d * drug.kd1 * ka1 * ka2 / delta;
    let mut oro = env.r_total - drd - dro - ord;
    if oro < 0.0 {
        if oro < -1e-12 * env.r_total {
            return Err(Error::InconsistentEquilibrium(oro));
        }
        oro = 0.0;
    }

    let mut state = KineticState::zeros(scheme);
    state.set(Species::A, env.a_init);
    state.set(Species::Oro, oro);
    state.set(Species::Dro, dro);
    state.set(Species::Ord, ord);
    state.set(Species::Drd, drd);
    Ok(state)
}

/// `|sum(receptors) - R_total| / R_total`.
pub fn conservation_residual(state: &KineticState, env: &Environment) -> f64 {
    (state.receptor_total() - env.r_total).abs() / env.r_total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal_ach() -> AChKinetics {
        AChKinetics {
            k_diss1: 1.8e4,
            k_diss2: 1.8e4,
            kd1: 1.6e-4,
            kd2: 1.6e-4,
            k_diss_open: 1.7e4,
            kd_open: 1.84e-8,
        }
    }

    fn nominal_chan() -> ChannelKinetics {
        ChannelKinetics {
            k_open: 5.0e4,
            k_close: 1.2e3,
            k_d_plus: 26.0,
            k_d_minus: 0.13,
        }
    }

    fn drug() -> DrugKinetics {
        DrugKinetics {
            kd1: 7.0e-8,
            kd2: 6.3e-7,
            k_diss1: 12.6,
            k_diss2: 113.0,
        }
    }

    fn has(net: &ReactionNetwork, from: Species, to: Species) -> Option<Reaction> {
        net.reactions()
            .iter()
            .copied()
            .find(|r| r.reactant == from && r.product == to)
    }

    #[test]
    fn cyclic_opening_is_irreversible() {
        let net = build_reaction_network(ModelKind::Cyclic, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
        let open = has(&net, Species::Ara, Species::AraOpen).unwrap();
        assert_eq!(open.rate, 5.0e4);
        assert!(has(&net, Species::AraOpen, Species::Ara).is_none());
    }

    #[test]
    fn reciprocal_opening_is_reversible() {
        let net = build_reaction_network(ModelKind::Reciprocal, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
        assert_eq!(has(&net, Species::Ara, Species::AraOpen).unwrap().rate, 5.0e4);
        assert_eq!(has(&net, Species::AraOpen, Species::Ara).unwrap().rate, 1.2e3);
        assert!(has(&net, Species::AraOpen, Species::AroOpen).is_none());
    }

    #[test]
    fn two_site_has_no_network() {
        let err = build_reaction_network(ModelKind::TwoSite, &nominal_ach(), &nominal_chan(), &drug()).unwrap_err();
        assert_eq!(err, Error::UnsupportedModel("two-site"));
        assert!(initial_state(
            ModelKind::TwoSite,
            &nominal_ach(),
            &drug(),
            &Environment::in_vivo(),
            0.0
        )
        .is_err());
    }

    #[test]
    fn invalid_kinetics_rejected() {
        let mut a = nominal_ach();
        a.kd2 = 0.0;
        assert!(build_reaction_network(ModelKind::Cyclic, &a, &nominal_chan(), &drug()).is_err());
        let mut c = nominal_chan();
        c.k_open = -1.0;
        assert!(build_reaction_network(ModelKind::Cyclic, &nominal_ach(), &c, &drug()).is_err());
    }

    fn swap_sites(s: Species) -> Species {
        use Species::*;
        match s {
            Aro => Ora,
            Ora => Aro,
            Dro => Ord,
            Ord => Dro,
            Ard => Dra,
            Dra => Ard,
            AroOpen => OraOpen,
            OraOpen => AroOpen,
            other => other,
        }
    }

    #[test]
    fn symmetric_drug_gives_site_symmetric_network() {
        let d = DrugKinetics {
            kd1: 1e-8,
            kd2: 1e-8,
            k_diss1: 5.0,
            k_diss2: 5.0,
        };
        let net = build_reaction_network(ModelKind::Cyclic, &nominal_ach(), &nominal_chan(), &d).unwrap();
        let mut orig: Vec<String> = net
            .reactions()
            .iter()
            .map(|r| {
                format!(
                    "{:?}>{:?}@{:e}/{:?}/{}",
                    r.reactant, r.product, r.rate, r.ligand, r.ach_change
                )
            })
            .collect();
        let mut swapped: Vec<String> = net
            .reactions()
            .iter()
            .map(|r| {
                format!(
                    "{:?}>{:?}@{:e}/{:?}/{}",
                    swap_sites(r.reactant),
                    swap_sites(r.product),
                    r.rate,
                    r.ligand,
                    r.ach_change
                )
            })
            .collect();
        orig.sort();
        swapped.sort();
        assert_eq!(orig, swapped);
    }

    #[test]
    fn every_reaction_conserves_receptors() {
        for model in [ModelKind::Reciprocal, ModelKind::Cyclic] {
            let net = build_reaction_network(model, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
            for r in net.reactions() {
                assert!(r.reactant.is_receptor() && r.product.is_receptor());
                assert!(net.scheme().species().contains(&r.product));
            }
        }
    }

    #[test]
    fn rhs_from_resting_receptors() {
        let env = Environment::in_vivo();
        let ach = nominal_ach();
        let net = build_reaction_network(ModelKind::Reciprocal, &ach, &nominal_chan(), &drug()).unwrap();
        let state = initial_state(ModelKind::Reciprocal, &ach, &drug(), &env, 0.0).unwrap();
        let dy = rhs(&net, &env, 0.0, &state).unwrap();
        let r = env.r_total;
        let a = env.a_init;
        assert_relative_eq!(
            dy.get(Species::Oro),
            -(ach.k_assoc1() + ach.k_assoc2()) * a * r,
            max_relative = 1e-14
        );
        assert_relative_eq!(dy.get(Species::Aro), ach.k_assoc1() * a * r, max_relative = 1e-14);
        assert_eq!(dy.get(Species::Rd), 0.0);
    }

    #[test]
    fn rhs_open_state_outflux_cyclic() {
        // Hand-evaluated: ARA* leaves by two ACh releases and by desensitization.
        let env = Environment::in_vivo();
        let ach = nominal_ach();
        let chan = nominal_chan();
        let net = build_reaction_network(ModelKind::Cyclic, &ach, &chan, &drug()).unwrap();
        let mut state = KineticState::zeros(Scheme::Cyclic);
        let open = 3.0e-6;
        state.set(Species::AraOpen, open);
        let dy = rhs(&net, &env, 0.0, &state).unwrap();
        let release = 1.7e4 * open;
        assert_relative_eq!(dy.get(Species::AroOpen), release, max_relative = 1e-14);
        assert_relative_eq!(dy.get(Species::OraOpen), release, max_relative = 1e-14);
        assert_relative_eq!(dy.get(Species::A), 2.0 * release, max_relative = 1e-14);
        assert_relative_eq!(dy.get(Species::Rd), 26.0 * open, max_relative = 1e-14);
        assert_relative_eq!(
            dy.get(Species::AraOpen),
            -(2.0 * 1.7e4 + 26.0) * open,
            max_relative = 1e-14
        );
    }

    #[test]
    fn rhs_rejects_bad_states() {
        let env = Environment::in_vivo();
        let net = build_reaction_network(ModelKind::Cyclic, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
        let short = KineticState::zeros(Scheme::Reciprocal);
        assert!(matches!(
            rhs(&net, &env, 0.0, &short),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut neg = KineticState::zeros(Scheme::Cyclic);
        neg.set(Species::Ara, -1e-6);
        assert!(matches!(
            rhs(&net, &env, 0.0, &neg),
            Err(Error::NegativeConcentration { species: "ARA", .. })
        ));
        assert!(KineticState::new(Scheme::Cyclic, vec![0.0; 3]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let env = Environment::in_vivo();
        let net = build_reaction_network(ModelKind::Cyclic, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
        let n = net.dim();
        let y: Vec<f64> = (0..n).map(|i| 1e-6 * (1.0 + i as f64 * 0.37)).collect();
        let d = 3e-8;
        let mut jac = vec![0.0; n * n];
        net.jacobian_into(env.k_decay, d, &y, &mut jac);
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        // Rates are at most bilinear, so central differences are exact up to rounding.
        for j in 0..n {
            let h = 1e-4 * y[j];
            let mut yp = y.clone();
            yp[j] += h;
            net.eval_into(env.k_decay, d, &yp, &mut f1);
            yp[j] = y[j] - h;
            net.eval_into(env.k_decay, d, &yp, &mut f0);
            for i in 0..n {
                let fd = (f1[i] - f0[i]) / (2.0 * h);
                let scale = jac[i * n + j].abs().max(1.0);
                assert!(
                    (fd - jac[i * n + j]).abs() / scale < 1e-5,
                    "J[{i}][{j}]: fd {fd} vs {}",
                    jac[i * n + j]
                );
            }
        }
    }

    #[test]
    fn initial_state_limits() {
        let env = Environment::in_vivo();
        let ach = nominal_ach();
        let s0 = initial_state(ModelKind::Cyclic, &ach, &drug(), &env, 0.0).unwrap();
        assert_eq!(s0.get(Species::Oro), env.r_total);
        assert_eq!(s0.get(Species::Drd) + s0.get(Species::Dro) + s0.get(Species::Ord), 0.0);
        assert_eq!(s0.get(Species::A), env.a_init);

        let big = 1e6 * drug().kd2;
        let s = initial_state(ModelKind::Reciprocal, &ach, &drug(), &env, big).unwrap();
        assert!((s.get(Species::Drd) / env.r_total - 1.0).abs() < 1e-5);
        assert!(s.get(Species::Oro) / env.r_total < 1e-5);
    }

    #[test]
    fn initial_state_equal_constants_quarter_split() {
        // D = K_D1 = K_D2: Delta = (2 D K_A)^2, each term D^2 K_A^2 / Delta = 1/4.
        let env = Environment::in_vivo();
        let k = 2.5e-8;
        let d = DrugKinetics {
            kd1: k,
            kd2: k,
            k_diss1: 1.0,
            k_diss2: 1.0,
        };
        let s = initial_state(ModelKind::Cyclic, &nominal_ach(), &d, &env, k).unwrap();
        for sp in [Species::Drd, Species::Dro, Species::Ord, Species::Oro] {
            assert_relative_eq!(s.get(sp), env.r_total / 4.0, max_relative = 1e-14);
        }
        assert!(conservation_residual(&s, &env) < 1e-12);
    }

    #[test]
    fn residual_detects_perturbation() {
        let env = Environment::in_vivo();
        let mut s = initial_state(ModelKind::Cyclic, &nominal_ach(), &drug(), &env, 1e-7).unwrap();
        assert!(conservation_residual(&s, &env) < 1e-12);
        s.set(Species::Ard, s.get(Species::Ard) + env.r_total);
        assert_relative_eq!(conservation_residual(&s, &env), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn model_kind_parsing() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        let err = "twosite".parse::<ModelKind>().unwrap_err();
        assert!(err.contains("two-site, reciprocal, cyclic"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn receptor_derivatives_sum_to_zero(
                vals in proptest::collection::vec(0.0f64..1e-4, 14),
                d in 0.0f64..1e-5,
                cyclic in any::<bool>(),
            ) {
                let model = if cyclic { ModelKind::Cyclic } else { ModelKind::Reciprocal };
                let net = build_reaction_network(model, &nominal_ach(), &nominal_chan(), &drug()).unwrap();
                let y = &vals[..net.dim()];
                let mut dy = vec![0.0; net.dim()];
                net.eval_into(1.2e4, d, y, &mut dy);
                let sum: f64 = dy[1..].iter().sum();
                let scale: f64 = dy[1..].iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
                prop_assert!(sum.abs() / scale < 1e-13);
            }

            #[test]
            fn initial_state_conserves(d in 0.0f64..1e-3, k1 in 1e-10f64..1e-4, k2 in 1e-10f64..1e-4) {
                let env = Environment::in_vivo();
                let drug = DrugKinetics { kd1: k1, kd2: k2, k_diss1: 1.0, k_diss2: 1.0 };
                let s = initial_state(ModelKind::Cyclic, &nominal_ach(), &drug, &env, d).unwrap();
                prop_assert!(conservation_residual(&s, &env) < 1e-12);
                prop_assert!(s.as_slice().iter().all(|&v| v >= 0.0));
            }
        }
    }
}
