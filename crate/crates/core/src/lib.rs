//! Moving-mesh finite element kernel for two-phase incompressible flow coupled
//! to reactive, semi-permeable interfaces.
//!
//! The crate is organized around one simulation step:
//!
//! 1. [`fluid`] solves the coupled velocity/pressure/interface system on the
//!    current mesh (Taylor–Hood bulk elements, parametric interface with
//!    mass-lumped geometric identities and time-weighted normals),
//! 2. [`meshmotion`] propagates the interface displacement into the bulk with
//!    a weighted elastic equation and produces the ALE mesh velocity,
//! 3. [`transport`] advances all bulk and surface species in one coupled
//!    linear solve on the new mesh, with linearized reaction, adsorption and
//!    transmembrane-flux sources chosen so that the discrete conservation
//!    identities hold to solver precision.
//!
//! [`mesh`] owns the fitted triangulation (interface polylines are mesh
//! edges), [`geometry`] is the polyline kernel, [`linalg`] the sparse
//! backend, [`diagnostics`] the reported observables, and [`params`] the
//! dimensionless groups and the declarative species network.

pub mod diagnostics;
pub mod fem;
pub mod fluid;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod meshmotion;
pub mod params;
pub mod transport;

pub use params::{DimensionlessParams, RawPhysics};
