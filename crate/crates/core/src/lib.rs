//! Models for a trapped-ion single-photon source entangled with its memory
//! qubit.
//!
//! - [`atomic`]: ¹³⁸Ba⁺ sublevels, dipole weights and decay channels.
//! - [`bloch`]: pulsed 650 nm excitation and the double-excitation error.
//! - [`radiation`]: dipole emission patterns integrated over collection
//!   apertures, and the polarization-mixing fidelity they imply.
//! - [`photon`]: synthetic detector click streams and g²(0) analysis.
//! - [`entanglement`]: ion-photon density operator, analysis fringes and the
//!   fidelity estimator.

pub mod atomic;
pub mod bloch;
pub mod entanglement;
pub mod fmt;
pub mod photon;
pub mod quadrature;
pub mod radiation;
