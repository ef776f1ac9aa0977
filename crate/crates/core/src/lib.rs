//! Piecewise-constant conductivity identification for 2D magnetic induction
//! tomography by topology-to-shape continuation.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`] builds and queries triangulations of the imaging domain and the
//!   geometric phantoms used to synthesize data.
//! * [`fem`] assembles and factors the complex-symmetric P1 systems of the
//!   eddy-current model, plus the real mass projections used for gradients.
//! * [`forward`] evaluates the impedance map, the multi-frequency fidelity,
//!   the adjoint problem and the adjoint-based fidelity gradient.
//! * [`reg`] holds the level-set parametrization, the continuation
//!   regularizer and the gradient compositions with respect to `phi` and
//!   `sigma_l2`.
//! * [`tscm`] runs the continuation optimizer and the plain level-set
//!   baseline.
//! * [`data`] provides experiment presets and plain-text persistence.
//! * [`verify`] packages the numerical self-checks run by `tscm verify`.

pub mod data;
pub mod error;
pub mod fem;
pub mod forward;
pub mod mesh;
pub mod reg;
pub mod tscm;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64;
