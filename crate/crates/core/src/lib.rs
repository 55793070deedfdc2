//! Relative equilibria, stability and dynamics of rigid magnetic swimmers
//! driven by a rotating field in Stokes flow.

pub mod atlas;
pub mod dynamics;
pub mod numerics;
pub mod optimize;
pub mod periodic;
pub mod regimes;
pub mod search;
pub mod stability;
pub mod swimmer;

pub use atlas::{eval_chart, solve_equilibria, Equilibrium, SurfacePoint};
pub use numerics::{Mat3, Spectrum3, Svd3, Vec3};
pub use stability::{BifurcationCurve, StabilityIndex};
pub use swimmer::{bundled, bundled_names, decompose, load_swimmer, PDecomposition, Swimmer, SwimmerError};
