//! Decentralized task and path planning for multi-robot grid worlds.
//!
//! The crate is organized the way the planner runs each step:
//!
//! * [`momdp`] holds the shared mixed-observability model, beliefs and the
//!   grid-world builder.
//! * [`values`] solves reach-probability / cost-to-go tables for a frozen
//!   belief and answers policy queries.
//! * [`task`] turns those tables into expected pure rewards for a task.
//! * [`maxsum`] allocates agents to tasks by max-sum message passing.
//! * [`resolution`] partitions agents into adjacency components and resolves
//!   conflicts with a forward dynamic program.
//! * [`sim`] closes the loop over a ground-truth world.
//! * [`scenario`], [`trace`], [`render`] and [`cli`] are the file-facing
//!   surface used by the `dtpp` binary.

pub mod cli;
pub mod error;
pub mod maxsum;
pub mod momdp;
pub mod render;
pub mod resolution;
pub mod scenario;
pub mod sim;
pub mod task;
pub mod trace;
pub mod values;

pub use error::{Error, Result};

/// Index of a fully observable state.
pub type StateId = usize;
/// Index of an action in the model.
pub type ActionId = usize;
/// Index of a robot agent.
pub type AgentId = usize;
/// Identifier of a multi-robot task.
pub type TaskId = usize;
