//! Deterministic text RTS macro simulator and a hierarchical imitation
//! multi-agent stack built on top of it.

pub mod advisors;
pub mod clustering;
pub mod config;
pub mod demos;
pub mod execloop;
pub mod harness;
pub mod opponents;
pub mod parallel;
pub mod planner;
pub mod textio;
pub mod world;

pub use config::HimaConfig;
