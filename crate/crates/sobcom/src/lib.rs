//! Numerical toolkit for probing compactness of Sobolev embeddings on model
//! manifolds.
//!
//! The crate is organized around the objects that appear in concentration
//! analysis on noncompact manifolds:
//!
//! * [`manifold`]: homogeneous model spaces (Euclidean, hyperbolic, circle
//!   cross Euclidean) with exact distances, ball volumes, sphere areas, and
//!   volume-uniform samplers.
//! * [`discretize`]: separated covering nets, quasiorbit partitions, ball
//!   counts, separated subset selection, and local mass profiles of functions
//!   over a net.
//! * [`levelmap`]: level-set maps (radial, block radial, anisotropic,
//!   deliberately bulged), their coarea weights, and the concentration
//!   diagnostics `delta_r`, `sigma_r`, uniform thickness, and level diameter
//!   curves.
//! * [`symmetry`]: finite sampled isometry groups, orbit diameters,
//!   coercivity verdicts, group averaging, quasisymmetry ratios, and far
//!   witness bump functions.
//! * [`groundstate`]: the reduced radial weighted p-Laplacian minimization
//!   with Lagrange multiplier recovery and concentration tracking.
//! * [`export`]: CSV and JSON serialization of nets, weight tables, and
//!   diagnostic reports.
//!
//! All stochastic estimates are driven by explicit seeds and report standard
//! errors; closed forms are used wherever the geometry admits them.

pub mod discretize;
pub mod error;
pub mod export;
pub mod groundstate;
pub mod levelmap;
pub mod manifold;
pub mod quad;
pub mod symmetry;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
