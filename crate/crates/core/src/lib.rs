//! Optimal layout of two conductive phases inside a domain with a free
//! boundary: an optimality-criteria loop updates the interior material
//! distribution over the relaxed composite set, while the domain itself
//! evolves by a level-set method driven by the shape derivative of the
//! Lagrangian.

pub mod geometry;
pub mod math;
pub mod fem;
pub mod gclosure;
pub mod oc;
