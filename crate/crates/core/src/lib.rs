//! Numerical laboratory for finitely generated groups of orientation-preserving
//! circle diffeomorphisms.
//!
//! The crate provides exact expression trees for circle maps and their lifts,
//! rotation/translation numbers with a priori error bounds, orbit and minimal-set
//! classification, contraction and pinning searches, Koenigs linearization,
//! renormalization of conjugate sequences toward local vector fields, and the
//! construction of group elements with arbitrarily small positive rotation number.
//!
//! Everything works in double precision on the circle `R/Z` with the half-open
//! chart `[0, 1)`. Projective actions are read through the identification of a
//! point `x` with the line spanned by `(cos pi x, sin pi x)`.

pub mod config;
pub mod dynamics;
pub mod expr;
pub mod flow;
pub mod gallery;
pub mod geom;
pub mod germ;
pub mod jet;
pub mod lift;
pub mod localmap;
pub mod maps;
pub mod renorm;
pub mod rotation;
pub mod sampled;
pub mod small_rotation;
pub mod word;

pub use expr::{BumpField, CircleMapExpr, ExprError, MobiusMatrix};
pub use geom::{CircleArc, CirclePoint};
pub use lift::Lift;
pub use word::{GroupPresentation, Word};
