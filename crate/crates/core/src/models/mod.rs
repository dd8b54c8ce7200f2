//! Ready-made example problems.

pub mod doa;
pub mod mean_var;
pub mod toy;
pub mod variance_beta;

pub use doa::{db_to_linear, Doa, DoaObs, DoaParams};
pub use mean_var::{MeanVar, MeanVarObs, MeanVarParams};
pub use toy::{LinearGaussian, MeanObs, UniformLocation};
pub use variance_beta::{VarianceBeta, VarianceBetaParams, VarianceObs};
