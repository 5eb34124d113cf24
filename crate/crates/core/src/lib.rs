//! Quadcopter navigation assistance trainer.
//!
//! A depth-camera deep Q-network learns collision avoidance (climb, descend,
//! and small turns) while a straight-line navigation function steers toward
//! the goal. The two turn outputs are summed each step. Everything runs in a
//! built-in box-world simulator.

pub mod agent;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod nav;
pub mod nn;
pub mod rng;
pub mod sim;
