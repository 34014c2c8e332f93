//! Multi-provider generation with three verification checks and a ranked
//! decision table, plus the trust scorecard used to evaluate the tool.
//!
//! The numeric kernels (similarity, scoring, scorecard aggregation) are
//! generic over [`scalar::Scalar`]; the workflow types are fixed to `f64`
//! through the aliases below.

pub mod compare;
pub mod decision;
pub mod double_check;
pub mod error;
pub mod gateway;
pub mod scalar;
pub mod scorecard;
pub mod session;
pub mod source;
pub mod store;
pub mod text;
pub mod workbench;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use session::{Mode, Session};
pub use workbench::{VerificationSettings, Workbench};

pub type SimilarityScore = text::SimilarityScore<f64>;
pub type CriterionResult = decision::CriterionResult<f64>;
pub type Weights = decision::Weights<f64>;
pub type ReliabilityScore = decision::ReliabilityScore<f64>;
pub type DecisionRow = decision::DecisionRow<f64>;
pub type DecisionTable = decision::DecisionTable<f64>;
pub type TrustReport = scorecard::TrustReport<f64>;
pub type TrustDelta = scorecard::TrustDelta<f64>;

/// `num / den`, or 0 when there is nothing to divide.
pub(crate) fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
