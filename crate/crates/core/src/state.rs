use std::fmt;

use serde::{Deserialize, Serialize};

/// Measurement basis of a BB84 state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// One of the four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    H,
    V,
    D,
    A,
}

impl State {
    pub fn basis(self) -> Basis {
        match self {
            State::H | State::V => Basis::Z,
            State::D | State::A => Basis::X,
        }
    }

    /// Index of the state within its basis pair: H and D are 0, V and A are 1.
    pub fn slot(self) -> usize {
        match self {
            State::H | State::D => 0,
            State::V | State::A => 1,
        }
    }

    pub fn from_slot(basis: Basis, slot: usize) -> State {
        match (basis, slot) {
            (Basis::Z, 0) => State::H,
            (Basis::Z, _) => State::V,
            (Basis::X, 0) => State::D,
            (Basis::X, _) => State::A,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => f.write_str("Z"),
            Basis::X => f.write_str("X"),
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            State::H => "H",
            State::V => "V",
            State::D => "D",
            State::A => "A",
        };
        f.write_str(s)
    }
}
