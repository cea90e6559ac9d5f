//! Numerical verification engine for generalized twistor spaces over
//! Riemannian 4-manifolds.
//!
//! The crate is organised bottom-up:
//!
//! * [`gca`]: pointwise linear algebra of generalized almost complex structures.
//! * [`cartan`]: finite-difference Lie, Courant and Nijenhuis brackets on charts.
//! * [`riemann`]: frames, Christoffel symbols, the curvature operator on `Λ²`
//!   and its `(W⁺, W⁻, s, B)` blocks, plus the built-in metric catalog.
//! * [`dsl`]: a small expression language for user-defined metrics.
//! * [`twistor`]: the integrability obstructions on the generalized twistor
//!   space and a slow fully numeric Nijenhuis oracle.
//! * [`verdict`]: sampling harness, predictions and reports.

pub mod cartan;
pub mod dsl;
pub mod gca;
pub mod riemann;
pub mod twistor;
pub mod verdict;
