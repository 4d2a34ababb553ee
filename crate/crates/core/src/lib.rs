//! A laboratory for operation-based CRDTs.
//!
//! The crate is organised around one central idea: an operation-based CRDT
//! whose every operation can be undone behaves, up to a change of
//! representation, like a tuple of counters and modulo counters. The modules
//! here let you observe that fact computationally rather than on paper:
//!
//! - [`kernel`] — explicit finite state machines ([`kernel::FiniteCrdtSpec`])
//!   with partial primitive operations and actions (finite op sequences).
//! - [`zoo`] — concrete CRDTs (counter, modulo counter, G-Set, OR-Set,
//!   PN-Set, T-Set, tuples) with a prepare/effect split and, where the state
//!   space is finite, an encoder into the kernel representation.
//! - [`sim`] — a deterministic replication simulator with causal delivery,
//!   used to replay divergence/merge scenarios and check convergence.
//! - [`axioms`] — exhaustive checkers for the two CRDT axioms
//!   (commutativity and undoability) on finite specs, undo synthesis, and
//!   checks for their standard consequences.
//! - [`groups`] — the group of actions of an undoable CRDT, presentation
//!   extraction from its Cayley graph, Smith normal form, invariant-factor
//!   decomposition, and synthesis of a verified equivalence witness to a
//!   tuple of counters.
//!
//! Integer linear algebra in [`groups`] is generic over the scalar type via
//! `num-traits`; the analysis pipeline instantiates it at [`Int`] so that
//! coefficient growth during elimination can never overflow.

pub mod axioms;
pub mod groups;
pub mod kernel;
pub mod sim;
pub mod zoo;

/// Exact integer scalar used by the analysis pipeline.
pub type Int = num_bigint::BigInt;

/// Integer matrix over [`Int`].
pub type IntMat = groups::matrix::Mat<Int>;

pub use kernel::{Action, ApplyResult, FiniteCrdtSpec, OpId, StateId};
pub use zoo::{CrdtKind, CrdtState, EffectPayload, SourceOp, Tag};
