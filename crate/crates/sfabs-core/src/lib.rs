//! Deterministic state-feedback abstractions of noisy piecewise-affine systems.
//!
//! The crate turns a piecewise-affine system with bounded polytopic noise into
//! a finite weighted digraph whose nodes are ellipsoidal cells and whose edges
//! carry affine feedback controllers. An edge `ξ → ξ'` exists only when its
//! controller provably maps *every* state of `ξ` into `ξ'` for *every*
//! admissible noise realization, together with a tight bound on the quadratic
//! stage cost incurred along the way. Shortest paths over the edge bounds then
//! yield a value function that certifies closed-loop cost upper bounds for the
//! concrete system.
//!
//! The pipeline is split into:
//!
//! * [`pwa`]: the concrete system model (modes, partition, noise, cost),
//! * [`sdp`]: a small dense semidefinite-program solver,
//! * [`lmi`]: assembly and solution of the per-transition matrix inequalities,
//! * [`abstraction`]: ball covers, reachability pruning and graph building,
//! * [`planner`]: reverse Dijkstra values, Bellman checking, concretization,
//! * [`sim`]: closed-loop rollouts with per-step containment certification.
//!
//! Everything here is pure computation over immutable inputs; file formats and
//! the command-line front end live in the companion `sfabs-cli` crate. The
//! crate is `no_std`-compatible (with `alloc`) when built without the default
//! `std` feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod abstraction;
mod error;
pub mod linalg;
pub mod lmi;
pub mod planner;
pub mod pwa;
pub mod sdp;
pub mod sets;
pub mod sim;

pub use error::{AuditCheck, Error};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
