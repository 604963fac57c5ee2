//! Cyclic relays of smooth flows switching on level-set boundaries.
//!
//! A relay cycles through `p` autonomous vector fields on `R^n`. While in mode
//! `k` the state follows flow `F_k` and may switch to mode `k+1` on the
//! boundary of the region `M_k = {f_k >= lambda_k}`. The crate simulates such
//! systems, counts boundary crossings to check mod-2 degree parities, and
//! solves for `p`-periodic trajectories by shooting and continuation.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod events;
pub mod expr;
pub mod geometry;
pub mod periodic;
pub mod relay;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, Lambda, Region, RelaySystem};
