//! Spectral workbench for the Steklov eigenvalue problem with a boundary
//! potential on the model domains (unit disk and unit ball).
//!
//! The Dirichlet-to-Neumann operator is diagonal in the spherical-harmonic
//! basis on these domains, which makes eigenfunction norm growth, nodal-set
//! measures, spectral-cluster and multiplier bounds, and fractional heat
//! kernel envelopes all computable to quadrature accuracy. The `verify`
//! module packages the individual measurements into a registered check suite
//! with machine-readable reports.

pub mod config;
pub mod error;
pub mod fit;
pub mod basis;
pub mod geometry;
pub mod heat;
pub mod nodal;
pub mod operators;
pub mod par;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
