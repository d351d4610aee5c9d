//! Certification of transversal folds in parameterized nonlinear systems
//! `F(x, t) = 0`.
//!
//! The crate locates singular points along solution branches, checks the
//! transversality conditions there, probes their genericity under random
//! perturbations, follows the vanishing-viscosity limit of the associated
//! gradient flow, and ships a finite-difference Allen–Cahn model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod energy_pde;
pub mod error;
pub mod genericity;
pub mod io;
pub mod numeric;
pub mod problem_model;
pub mod singular_limit;
pub mod solve;
pub mod spectral;
pub mod transversality;

pub use continuation::{BranchCurve, FoldRecord, StepConfig};
pub use energy_pde::{AllenCahnConfig, EnergyProblem};
pub use error::{Error, Result};
pub use numeric::{Matrix, Vector};
pub use problem_model::{Point, ProblemSpec};
pub use solve::NewtonConfig;
pub use spectral::{KernelPair, RankReport, TolPolicy};
pub use transversality::{Classification, EnergyCertificate, Tolerances, TransversalityCertificate};
