//! Verification campaigns: rotation-error audits, the n-fold symmetry probe,
//! the harmonic product identity and finite-difference gradient checks.

mod audit;
mod gradcheck;
mod prop2;
mod rotsym;

pub use audit::{equivariance_audit, AuditConfig, AuditReport, CloudConfig};
pub use gradcheck::{check_block, gradcheck_suite, relative_deviation, BlockCheck, GradcheckConfig, GradcheckReport, FD_STEP};
pub use prop2::{h_weighted_product, proposition2_check, reduction_check, Prop2Report};
pub use rotsym::{rotsym_benchmark, star, Probe, RotSymConfig, RotSymResult};
