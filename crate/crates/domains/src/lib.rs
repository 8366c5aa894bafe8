//! Sources of decision trajectories: sorting runs, Rubik's cube solutions,
//! chess games and neural-network training traces.

pub mod chess;
pub mod nn;
pub mod rubik;
pub mod sorting;
