//! Simulation and analysis of electrically tuned NV-center optical transitions
//! and of the Stark-feedback lock that stabilizes them against spectral
//! diffusion.
//!
//! The crate is organized bottom-up:
//!
//! - [`levels`]: excited-state Hamiltonian, eigenlevels, emission lines.
//! - [`spectra`]: synthetic emission spectra and spectrum analysis.
//! - [`diffusion`]: hidden emitter state (drift, repump jumps, ionization).
//! - [`scan`]: photoluminescence-excitation scan engine.
//! - [`feedback`]: the lock controller, closed-loop runs and lock metrics.
//! - [`fitting`]: peak fits and Stark/angle model fits.
//! - [`config`] and [`io`]: the JSON config document and CSV/JSON outputs.

pub mod config;
pub mod diffusion;
pub mod error;
pub mod feedback;
pub mod fitting;
pub mod io;
pub mod levels;
pub mod rng;
pub mod scan;
pub mod spectra;

pub use error::{Error, Result};
