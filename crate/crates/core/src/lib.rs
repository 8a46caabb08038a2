//! Non-termination proving for integer transition systems.
//!
//! The prover simplifies a program with under-approximating processors
//! (loop acceleration, chaining, recurrent-set and fixpoint detection,
//! guard strengthening with synthesized invariants) until every transition
//! leaves the start symbol, then extracts a witness and replays it on the
//! concrete semantics before reporting it.
//!
//! The crate is `no_std`; SMT solving is abstracted behind [`smt::SmtSolver`].

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod constraint;
pub mod inference;
pub mod its;
pub mod monotonicity;
pub mod oracle;
pub mod poly;
pub mod processors;
pub mod recurrence;
pub mod smt;
pub mod smtlib;
pub mod strategy;

pub use constraint::{Atom, Constraint, Rel};
pub use its::{Configuration, FunSym, Origin, Program, TransId, Transition, Update};
pub use poly::{Int, Monomial, Poly, Rat, Subst, Valuation, Var};
