//! Numerical toolkit for the Gallavotti–Cohen functional of small-noise
//! diffusions `dX = c(X) dt + √ε dβ` with `c = −½∇V + b`, `⟨∇V, b⟩ = 0`.
//!
//! The dissipated power is computed three ways: Monte-Carlo ([`mc`]),
//! principal eigenvalue of the tilted generator ([`spectral`]) and
//! constrained action minimisation ([`action`]); [`transform`] relates the
//! resulting curves.

pub mod action;
pub mod error;
pub mod functional;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod optim;
pub mod path;
pub mod sde;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};
pub use geom::{Mat2, Region, Vec2};
pub use model::{builtin, check_assumptions, eval_drift, ModelKind, ModelParams, VectorFieldModel};
pub use path::DiscretePath;
