//! P1 finite elements on triangle meshes.

mod field;
mod space;
pub mod sparse;
mod trace;

pub use field::{ComplexField, NodalField, RealField};
pub use space::{FemSpace, ProjectionForm, SparseSystem, SystemFactor, SOLVE_RTOL};
pub use sparse::{CsrMatrix, LdlFactor, Pattern};
pub use trace::BoundaryTrace;
