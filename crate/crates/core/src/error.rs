use thiserror::Error;

use crate::{ActionId, AgentId, StateId, TaskId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error(
        "observation {observation} is impossible under the current belief \
         (state {state} -> {next_state}, action {action})"
    )]
    ImpossibleObservation {
        state: StateId,
        action: ActionId,
        next_state: StateId,
        observation: usize,
    },

    #[error("horizon must be at least 1")]
    ZeroHorizon,

    #[error("time {time} is outside the horizon {horizon}")]
    OutOfHorizon { time: usize, horizon: usize },

    #[error("agent {agent} is not committed to task {task}")]
    NotCommitted { agent: AgentId, task: TaskId },

    #[error("malformed task: {0}")]
    MalformedTask(String),

    #[error("local resolution requires distinct start states (agents {0} and {1} share one)")]
    SharedStart(AgentId, AgentId),

    #[error("no collision-free joint action exists")]
    NoSafeJointAction,

    #[error("collision at t={time}: agents {first} and {second} both at state {state}")]
    Collision {
        time: usize,
        first: AgentId,
        second: AgentId,
        state: StateId,
    },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    InvalidScenario(Vec<String>),

    #[error("could not parse scenario: {0}")]
    ScenarioParse(String),

    #[error("corrupted trace at line {line}: {message}")]
    CorruptTrace { line: usize, message: String },

    #[error("trace violates invariant at step {step}: {message}")]
    TraceViolation { step: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::InvalidScenario(_)
                | Error::ScenarioParse(_)
                | Error::MalformedTask(_)
        )
    }
}
