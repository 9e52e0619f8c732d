//! Contact-mode guided planning for quasistatic planar manipulation.

pub mod cli;
pub mod geom2d;
pub mod integrate;
pub mod mechanics;
pub mod modes;
pub mod planner;
pub mod scenes;
pub mod solver;
