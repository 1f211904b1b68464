//! Families of commuting time-dependent Hamiltonians, their zero-curvature
//! verification, path-ordered evolution, multistate Landau-Zener scattering
//! and the adiabatic/WKB picture.

pub mod basis;
pub mod error;
pub mod evolution;
pub mod family;
pub mod models;
pub mod operator;
pub mod scattering;
pub mod util;
pub mod wkb;

pub use error::{Error, ErrorKind, Result};
pub use family::{HamiltonianFamily, ParamPoint};
pub use operator::{HermitianOperator, C64, CMatrix, CVector};
