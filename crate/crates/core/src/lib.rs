//! Numerical lab for softmax-vs-linear attention separation constructions.
//!
//! The crate builds the toy softmax-regression, self-attention and
//! cross-attention datasets, evaluates the networks with exponential and
//! linear normalization, checks closed-form lemma oracles, and runs seeded
//! Monte-Carlo sweeps that are written out as CSV.

pub mod attention;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod oracles;
pub mod toy;
pub mod verify;

use std::fmt;

pub use error::{Error, Result};
pub use linalg::{Matrix, SeededRng, Vector};

/// Which of the two distributions a sample is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    D0,
    D1,
}

/// Row normalization: softmax (`Exp`) or linear (`Lin`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Exp,
    Lin,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::D0 => "D0",
            Label::D1 => "D1",
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Exp => "exp",
            Kind::Lin => "lin",
        })
    }
}
