//! Kinetic and equilibrium models of competitive neuromuscular blockade.
//!
//! The crate simulates receptor occupancy under a clamped blocker
//! concentration, turns peak channel activation into a twitch or current
//! response, extracts Hill parameters from concentration-effect curves and
//! estimates model constants against reference potency data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod hillfit;
pub mod integrator;
pub mod kinetics;
pub mod params;
pub mod response;
pub mod sweep;

pub use error::{Error, Result};
pub use hillfit::{fit_hill, hill_value, HillFitResult};
pub use integrator::{integrate, IntegrationOptions, Trajectory};
pub use kinetics::{
    build_reaction_network, initial_state, AChKinetics, ChannelKinetics, DrugKinetics, Environment, KineticState,
    ModelKind, ReactionNetwork, Scheme, Species,
};
pub use params::ParameterSet;
pub use response::{
    concentration_effect_curve, concentration_effect_curve_auto, CurvePoint, EffectMode, LogGrid, ModelParams,
    MuscleResponseParams,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
