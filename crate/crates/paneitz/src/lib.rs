//! Numerical toolkit for Paneitz-type fourth-order equations reduced to a
//! singular ODE on an interval: endpoint-regularized shooting, weighted
//! Sturm–Liouville spectra, bifurcation instants on the trivial branch, and
//! pseudo-arclength continuation of the nontrivial solution branches.

pub mod bifurcation;
pub mod cli;
pub mod coeffs;
pub mod diagram;
pub mod dopri5;
pub mod error;
pub mod flow;
pub mod profile;
pub mod shooting;
pub mod sturm;
pub mod verify;

pub use bifurcation::{census_at, continue_branch, instants, Branch, BifurcationPoint, CoefficientPath};
pub use coeffs::{EinsteinProductDatum, PaneitzCoefficients};
pub use error::{Error, Result};
pub use flow::{SolutionProfile, State, Trajectory};
pub use profile::{Endpoint, Profile, ProfileKind};
pub use shooting::{scan, shoot, solve, ShootResidual, Solved};
