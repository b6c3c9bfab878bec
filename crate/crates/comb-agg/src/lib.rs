//! Internal aggregation models on the two-dimensional comb lattice: the
//! divisible sandpile, internal diffusion limited aggregation (IDLA) and
//! rotor-router aggregation, plus the explicit limit-shape formulas and the
//! discrete potential theory (Green functions, harmonic weights) used to
//! verify them.
//!
//! The comb is the integer line with a copy of the integers (a "tooth")
//! attached at every site. Mass spreads along the backbone like n^{1/3} and
//! up the teeth like n^{2/3}, so clusters are thin and tall; the code keeps
//! regions and fields sparse or tooth-condensed throughout.

mod cluster;
mod csvio;
pub mod idla;
pub mod lattice;
pub mod potential;
pub mod rotor;
pub mod sandpile;
pub mod shape;

pub use lattice::{GraphKind, Region, Vertex};
