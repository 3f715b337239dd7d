//! Kalman-Bucy filtering for linear systems driven by Lévy noise, including
//! integrable observation noise with infinite variance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod coeff;
pub mod config;
pub mod error;
pub mod filter;
pub mod levy;
pub mod linalg;
pub mod path;
pub mod riccati;
pub mod rng;
pub mod stats;
pub mod system;

pub use error::{Error, Result};
