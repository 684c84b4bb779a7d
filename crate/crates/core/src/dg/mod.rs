//! Broken polynomial spaces, mesh-dependent inner products and functional inequalities.

pub mod basis;
pub mod diagnostics;
pub mod forms;
pub mod quadrature;
pub mod space;

pub use basis::{local_dim, ReferenceBasis};
pub use diagnostics::{functional_inequality_check, inequality_ratios, random_rough_field, random_smooth_field, InequalityReport};
pub use forms::{h2_inner, h2_inner_on, h2_matrix, H2Mode};
pub use space::{interpolate, interpolate_scalar, interpolate_vec3, DgField, DgSpace, EdgeTraceData, Evaluation, QuadratureOptions, Skeleton};
