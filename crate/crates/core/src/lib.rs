//! Map-lite hierarchical navigation stack.
//!
//! A two-level Exit-graph / occupancy-grid map, classical global planning
//! with per-step replanning, intention generation (DLM and LPE), a
//! multi-scale multimodal ConvLSTM controller trained by imitation, and a
//! deterministic 2D simulator with drifting odometry plus an evaluation
//! harness.

pub mod decision;
pub mod eval;
pub mod intention;
pub mod mapsys;
pub mod planner;
pub mod sim;
