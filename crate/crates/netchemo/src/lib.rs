//! Finite-volume simulator for a semilinear hyperbolic-parabolic chemotaxis
//! system on an oriented-arc network.
//!
//! On each arc the cell density `u`, flux `v` and chemoattractant `phi`
//! satisfy a Cattaneo-type transport pair coupled to a diffusion-reaction
//! equation. Arcs couple only at nodes, through flux transmission
//! conditions with symmetric nonnegative weights: a graph-Laplacian
//! relation for the hyperbolic traces and Kedem-Katchalsky permeability
//! fluxes for the chemoattractant. The discrete scheme enforces both sets
//! of conditions exactly at every step, so total mass is conserved, node
//! fluxes balance, and the linearized energies decay, each of which the
//! diagnostics verify at run time.
//!
//! Modules:
//! - [`network`]: network document parsing and validation.
//! - [`fields`]: grids, state containers, initial data.
//! - [`hyperbolic`]: node trace solves and upwind transport.
//! - [`parabolic`]: implicit diffusion with node fluxes.
//! - [`simulator`]: split time loop.
//! - [`diagnostics`]: conservation/dissipation monitors, oracle and
//!   convergence harnesses, CSV output.
//! - [`config`]: run-configuration documents.

pub mod config;
pub mod diagnostics;
pub mod fields;
pub mod hyperbolic;
pub mod network;
pub mod parabolic;
pub mod simulator;

#[cfg(test)]
pub(crate) mod testnets;

pub use fields::{ArcState, InitialCondition, NetworkGrids, NetworkState};
pub use network::{parse_network, serialize_network, ArcId, NetworkSpec, NodeId};
pub use simulator::{run, RunResult, SimConfig, Toggles};
