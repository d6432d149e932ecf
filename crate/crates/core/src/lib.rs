pub mod agents;
pub mod calibration;
pub mod cli;
pub mod equilibrium;
pub mod econometrics;
pub mod game_core;
pub mod rng;
pub mod session;
