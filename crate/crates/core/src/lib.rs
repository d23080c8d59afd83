//! Simulation and maximum-likelihood estimation for partially specified
//! space-time autoregressive models with a single-hidden-layer sigmoid
//! network component.

pub mod causality;
pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod par;
pub mod replicate;
pub mod simulate;
pub mod weights;

pub use density::ErrorDensity;
pub use error::{Error, Result};
pub use estimator::{fit, FitOptions, FitResult};
pub use model::{ModelSpec, PanelData, ParameterVector};
pub use weights::WeightMatrix;
