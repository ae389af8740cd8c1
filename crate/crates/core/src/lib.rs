//! Two-dimensional embedded-boundary toolkit for compressible flow around
//! deformable, porous structures.

pub mod gas;
pub mod geom;
pub mod riemann;

pub use gas::{Conservative, GasError, GasModel, Primitive};
pub use riemann::{Limiter, RiemannError, RiemannSolution};
pub mod embedded;
pub mod fluid;
pub mod mesh;
pub mod structure;
pub mod couple;
pub mod scenario;
pub mod acceptance;
