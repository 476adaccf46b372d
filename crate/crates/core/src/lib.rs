//! Simulation and analysis core for buoyant solar-electric multirotor vehicles.
//!
//! The crate answers one question from several angles: does the solar array
//! supply at least as much power as the vehicle consumes, at every instant of a
//! manoeuvre? It contains
//!
//! * [`frames`]: Euler-angle rotations and rate transforms,
//! * [`dynamics`]: rigid-body and longitudinal equations of motion with an RK4 stepper,
//! * [`powertrain`]: DC-motor electromechanics and the single-diode PV cell,
//! * [`control`]: PID closed-loop simulation with per-step power accounting,
//! * [`solar_speed`]: closed-form solar-powered cruise speeds,
//! * [`ouq`]: bounds on the self-powered failure probability and gain-region maps.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is off.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

mod error;
mod linalg;

pub mod control;
pub mod dynamics;
pub mod frames;
pub mod ouq;
pub mod powertrain;
pub mod solar_speed;

pub use error::{Error, Result};
pub use linalg::{Mat3, Vec3};
