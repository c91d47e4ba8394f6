//! Covariate selection by noise substitution, and non-significance regions
//! for regression functionals.

pub mod calibration;
pub mod coverage;
pub mod data;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod nonsig;
pub mod objective;
pub mod optimize;
pub mod pvalues;
pub mod selection;
pub mod solvers;
pub mod stats;

pub use data::{design_matrix, stackloss, subsets_of, Dataset, SubsetCode};
pub use error::{Error, Result};
pub use noise::{build_w, noise_matrix, NoiseKind, RngStream};
pub use objective::{Objective, ObjectiveSpec, ScalePolicy};
pub use solvers::{fit, fit_huber, fit_l1, fit_l2, mad_scale, FitResult};
