//! Command line front end for `nonterm-core`: the KoAT input format, an
//! SMT-LIB 2 solver subprocess and the `nonterm` binary.

pub mod cli;
pub mod frontend;
pub mod solver;

pub use frontend::{parse, print, FrontendError};
pub use solver::{Session, WallClock};
