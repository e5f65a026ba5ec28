//! The multivariate unified skew-t (SUT) distribution: density and
//! distribution function, exact samplers, moments up to fourth order,
//! Mardia measures, closure operations and quadratic forms.

pub mod density;
pub mod dof;
pub mod error;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod params;
pub mod presets;
pub mod qmc;
pub mod quadform;
pub mod sampling;
pub mod special;
pub mod transforms;
pub mod truncated;

pub use density::{DensityValue, SutDensity};
pub use dof::Dof;
pub use error::{Result, SutError};
pub use model::Sut;
pub use moments::{MardiaMeasures, MomentReport, MomentSet};
pub use params::{SutParams, Violation};
pub use qmc::{CdfResult, QmcConfig};
pub use sampling::{Method, SampleBatch};
pub use transforms::{Block, PartitionSpec};
