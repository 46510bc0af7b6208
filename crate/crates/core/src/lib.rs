//! Bayesian nonparametric clustering of directional-linear data with the
//! semi-projected normal (SPN) distribution.
//!
//! The core types are generic over the scalar ([`Real`], implemented for
//! `f32` and `f64`); the aliases below fix the common choices.

pub mod config;
pub mod conjugate;
pub mod directional;
pub mod dpspn;
pub mod error;
pub mod hdp;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod radius;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpnParams64 = directional::SpnParams<f64>;
pub type SpnParams32 = directional::SpnParams<f32>;
pub type UnitDirection64 = directional::UnitDirection<f64>;
pub type UnitDirection32 = directional::UnitDirection<f32>;
pub type DirLinObservation64 = directional::DirLinObservation<f64>;
pub type DirLinObservation32 = directional::DirLinObservation<f32>;
pub type NciwHyper64 = conjugate::NciwHyper<f64>;
pub type NciwHyper32 = conjugate::NciwHyper<f32>;
pub type ClusterState64 = dpspn::ClusterState<f64>;
pub type DpConfig64 = dpspn::DpConfig<f64>;
pub type HdpConfig64 = hdp::HdpConfig<f64>;
pub type MechanismModel64 = hdp::MechanismModel<f64>;
