//! Twisted bilayer graphene from tight-binding to continuum models.
//!
//! The crate builds the layer and moiré lattices of a twisted bilayer, evaluates
//! intralayer Bloch matrices and interlayer Fourier couplings of a tight-binding
//! model, assembles truncated momentum-space Hamiltonians on a finite set of
//! reciprocal-lattice vectors, and replaces the hopping functions by Taylor
//! polynomials about the Dirac points to obtain the `(m, n, tau)` family of
//! continuum models (the Bistritzer-MacDonald model is `(1, 0, 1)`).
//!
//! On top of that sit band structures along the moiré high-symmetry path,
//! Gaussian-smeared densities of states and the convergence diagnostics that
//! compare the families against each other.
//!
//! Sweeps over momenta run on a rayon pool when the `parallel` feature is
//! enabled (the default); [`Execution`] selects the strategy per call.

pub mod convergence;
pub mod dual;
mod error;
mod exec;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod momentum;
pub mod spectral;
pub mod taylor;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{Layer, LayerGeometry, MoireGeometry, Orbital, Valley};
pub use linalg::{C2, Mat2, Vec2};
pub use model::{SimplifiedParams, TBModel};
pub use momentum::{Basis, MomentumHamiltonian, Truncation};
pub use spectral::{BandData, BandPath, DosCurve, Family};
pub use taylor::{ContinuumModel, ExpansionOrders, PolynomialMatrix};
