//! Resource monotones and state convertibility for qubit resource theories.
//!
//! The crate covers seven theories (coherence, imaginarity, asymmetry,
//! athermality, a totally ordered Bloch ball, unital purity and PPT
//! entanglement) and provides
//!
//! - closed-form qubit monotones and divergences ([`monotones`]),
//! - exact qubit convertibility deciders with an oracle fallback ([`convert`]),
//! - a Choi-matrix SDP-style oracle for `min ||Λ(ρ) - σ||_1` over free
//!   channels ([`oracle`]),
//! - a finite-copy simulator of the catalytic DIO protocol ([`catalysis`]),
//! - constructions for the limits of monotone-based characterisations
//!   ([`limits`]).

pub mod error;
pub mod linalg;
pub mod random;
pub mod state;
pub mod theory;
pub mod oracle;
pub mod monotones;
pub mod io;
pub mod convert;
pub mod catalysis;
pub mod limits;

pub use convert::{decide, DecideOptions, Outcome, Verdict};
pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use monotones::{Extended, Monotone};
pub use oracle::{ChoiMatrix, OracleBudget, OracleResult};
pub use state::{BlochVector, DensityMatrix};
pub use theory::{TheoryKind, TheorySpec};
