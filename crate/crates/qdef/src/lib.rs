//! Numerical laboratory for deformations of quadrics.
//!
//! The crate covers confocal families of doubly ruled quadrics and their
//! Ivory affinity, the tangency configuration that drives the Bäcklund
//! transformation, rolling of applicable surfaces, Bianchi permutability and
//! its discrete lattices, geodesics and billiards on confocal members,
//! one-dimensional roulettes, and the Tenenblat–Terng transformation of
//! constant-curvature manifolds in higher dimensions.
//!
//! [`quadric`] and [`tangency`] are generic over the scalar type ([`Real`]);
//! the integrating modules work in `f64`.

pub mod backlund;
pub mod geodesics;
pub mod grid;
pub mod highdim;
pub mod motion;
pub mod permutability;
pub mod quadric;
pub mod rolling;
pub mod roulettes;
pub mod scalar;
pub mod tangency;

pub use motion::{RigidMotion, RigidMotion2};
pub use quadric::{ConfocalFamily, EllipticCoords, FamilyKind, QuadricError, Ruling, Tolerances};
pub use scalar::Real;
pub use tangency::TcState;

/// Double-precision confocal family.
pub type Family = ConfocalFamily<f64>;
/// Single-precision confocal family.
pub type Family32 = ConfocalFamily<f32>;
/// Double-precision rigid motion.
pub type Motion = RigidMotion<f64>;
/// Double-precision tangency state.
pub type Tc = TcState<f64>;
