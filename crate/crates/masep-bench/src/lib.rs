//! Shared fixtures for the pipeline benches.

use masep::{SpeciesWord, State, SystemParams};

pub fn params() -> SystemParams {
    SystemParams::new(0.7).unwrap()
}

pub fn word(s: &str) -> SpeciesWord {
    s.parse().unwrap()
}

pub fn state(positions: &[i64], species: &str) -> State {
    State::new(positions.to_vec(), word(species)).unwrap()
}
