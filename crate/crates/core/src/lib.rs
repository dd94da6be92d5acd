//! Prompt-driven agent orchestration for simulated low-altitude edge
//! networks: prompt parsing and task-graph compilation, an agent registry,
//! a denoising plan sampler with two static baselines, a mission execution
//! controller, a discrete-event world model and an experiment harness.

pub mod canonical;
pub mod controller;
pub mod harness;
pub mod planner;
pub mod prompt;
pub mod registry;
pub mod sim;
