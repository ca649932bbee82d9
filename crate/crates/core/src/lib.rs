//! Lattice-surgery compilation and resource estimation for Trotterized
//! 2D Fermi-Hubbard time evolution with small-angle rotation injection.

pub mod estimator;
pub mod fabric;
pub mod hubbard;
pub mod injection;
pub mod qcels;
pub mod rus;
pub mod trotter;
