pub mod basis;
pub mod domain;
pub mod error;
pub mod extremal;
pub mod geodesic;
pub mod jet;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod quadrature;
pub mod scaling;
pub mod verify;

pub use basis::{BasisFamily, BasisSpec, OrthonormalBasis};
pub use domain::{DomainRecord, DomainSpec, Point};
pub use error::{Error, Result};
pub use geodesic::{LoopCandidate, RiemannianField};
pub use metrics::{CurvatureReport, Flavor, KernelJet, MetricPipeline, MetricTensor};
pub use scaling::{Approach, AsymptoticsRecord, NormalizingChart};
pub use verify::CriterionReport;

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}
