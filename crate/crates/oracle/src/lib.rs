//! Reference values for checking the unified skew-t library.
//!
//! Nothing here shares code with `sut-core`: the skew-t formulas use the
//! classical `α` parameterisation, samplers are brute-force selection, and the
//! Monte-Carlo summaries work on plain draw matrices.

pub mod hist;
pub mod ks;
pub mod mc;
pub mod quad;
pub mod report;
pub mod selection;
pub mod st;
pub mod t;

pub use ks::KsResult;
pub use mc::Estimate;
pub use report::OracleReport;
pub use st::{MvSkewT, SkewT};
