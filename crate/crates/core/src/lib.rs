//! Simulation and stochastic tuning of a battery energy storage system (BESS)
//! delivering frequency containment reserve (FCR) under German market rules.
//!
//! The crate is organised bottom-up:
//!
//! - [`cell`]: first-order RC equivalent-circuit model of a single Li-ion cell,
//!   open-circuit voltage curve and pulse-test parameter fitting.
//! - [`degradation`]: rainflow cycle extraction from SoC traces, calendar and
//!   cycle ageing of capacity and resistances.
//! - [`bess`]: assembly of cells, inverter and HVAC into the full pack
//!   dynamics, constant-power characterisation and the German prequalification
//!   discharge test.
//! - [`controller`]: FCR delivery rule, discretised deadband recharge
//!   controller, overdelivery, emergency detection and the availability
//!   penalty metric.
//! - [`optimizer`]: yearly chance-constrained controller tuning: sample
//!   average approximation of the cost objective, binomial confidence bound on
//!   the penalty probability, differential evolution, and the multi-year
//!   driver.
//! - [`economics`]: electricity costs under the German levy structure,
//!   discounted lifetime revenues, NPV, payback and the sizing sweep.
//! - [`data`]: grid-frequency ingestion, day-sample pools, seeded sampling
//!   and a synthetic frequency generator.
//!
//! Core numeric kernels are generic over the scalar type via [`scalar::Real`]
//! (any `num_traits::Float`); every public type defaults to `f64`, which is
//! what the optimizer, CLI and file formats use.

pub mod bess;
pub mod cell;
pub mod config;
pub mod controller;
pub mod data;
pub mod degradation;
pub mod economics;
pub mod error;
pub mod optimizer;
pub mod scalar;
pub mod simulation;

pub use bess::{BessConfig, BessSimulator, BessState, InverterCurve, StepRecord};
pub use cell::{CellParams, CellState, OcvCurve};
pub use controller::{ControllerParams, MarketRules, PenaltyBounds};
pub use degradation::{AgeingModel, CycleRecord, CycleWeight, DegradationState};
pub use error::CoreError;
pub use scalar::Real;

/// Concrete scalar used by the drivers, the optimizer and all file formats.
pub type Scalar = f64;
/// Cell parameters at driver precision.
pub type CellParams64 = cell::CellParams<Scalar>;
/// Pack configuration at driver precision.
pub type BessConfig64 = bess::BessConfig<Scalar>;
/// Controller decision vector at driver precision.
pub type ControllerParams64 = controller::ControllerParams<Scalar>;
