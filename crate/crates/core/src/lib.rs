//! Collaborative SLAM workbench for multi-agent under-canopy forest mapping.

pub mod error;
pub mod geometry;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{Point2, Pose2, RngSeed};
pub mod odometry;
pub mod detect;
pub mod submap;
pub mod glare;
pub mod cg;
pub mod clear;
pub mod slam;
pub mod explore;
pub mod pipeline;
pub mod eval;
pub mod config;
