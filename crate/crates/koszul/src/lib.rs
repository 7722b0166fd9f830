//! Exact computational duality between mixed differential-form models and
//! filtered differential-operator models on truncated trigraded windows.
//!
//! The crate is organized in layers: exact linear algebra on trigraded
//! spaces, presented graded algebras with rewriting, differential graded
//! modules realized as complexes, the duality engine itself, a catalogue of
//! worked objects, and a line-oriented command-line front end.

pub mod algebra_presentations;
pub mod catalogue;
pub mod dg_modules;
pub mod exact_bigraded_linalg;
pub mod koszul_engine;

pub use exact_bigraded_linalg::{Rational, Trigrade, Window};
