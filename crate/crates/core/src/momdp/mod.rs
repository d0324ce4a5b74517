//! Mixed observable Markov decision process shared by every agent.
//!
//! All tables are dense and row-major with the successor (or observation)
//! index varying fastest:
//!
//! | table      | index order          |
//! |------------|----------------------|
//! | `trans_s`  | `(s, a, e, s')`      |
//! | `trans_e`  | `(s, e, a, e')`      |
//! | `obs_fn`   | `(s', e, a, o)`      |
//! | `cost`     | `(s, a, s', o)`      |

mod belief;
pub mod grid;

pub use belief::Belief;
pub use grid::{
    build_grid_momdp, observation_likelihood, Cell, GridAction, GridWorldSpec, ObservationBands,
    TransitionMode, FREEZE_RADIUS, MAX_UNCERTAIN_CELLS,
};

use std::fmt;

use crate::{ActionId, Error, Result, StateId};

/// Row sums must hit 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MomdpModel {
    pub num_states: usize,
    pub num_env_states: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub trans_s: Vec<f64>,
    pub trans_e: Vec<f64>,
    pub obs_fn: Vec<f64>,
    pub cost: Vec<f64>,
    pub idle_action: ActionId,
}

impl MomdpModel {
    /// A model with every table zeroed, ready to be filled in.
    pub fn zeroed(
        num_states: usize,
        num_env_states: usize,
        num_actions: usize,
        num_observations: usize,
        idle_action: ActionId,
    ) -> Self {
        let (s, e, a, o) = (num_states, num_env_states, num_actions, num_observations);
        MomdpModel {
            num_states,
            num_env_states,
            num_actions,
            num_observations,
            trans_s: vec![0.0; s * a * e * s],
            trans_e: vec![0.0; s * e * a * e],
            obs_fn: vec![0.0; s * e * a * o],
            cost: vec![0.0; s * a * s * o],
            idle_action,
        }
    }

    #[inline]
    pub fn ts_index(&self, s: StateId, a: ActionId, e: usize, next: StateId) -> usize {
        ((s * self.num_actions + a) * self.num_env_states + e) * self.num_states + next
    }

    #[inline]
    pub fn te_index(&self, s: StateId, e: usize, a: ActionId, next_e: usize) -> usize {
        ((s * self.num_env_states + e) * self.num_actions + a) * self.num_env_states + next_e
    }

    #[inline]
    pub fn obs_index(&self, next: StateId, e: usize, a: ActionId, o: usize) -> usize {
        ((next * self.num_env_states + e) * self.num_actions + a) * self.num_observations + o
    }

    #[inline]
    pub fn cost_index(&self, s: StateId, a: ActionId, next: StateId, o: usize) -> usize {
        ((s * self.num_actions + a) * self.num_states + next) * self.num_observations + o
    }

    /// `T_s(s, a, e, ·)` as a slice over successor states.
    pub fn ts_row(&self, s: StateId, a: ActionId, e: usize) -> &[f64] {
        let start = self.ts_index(s, a, e, 0);
        &self.trans_s[start..start + self.num_states]
    }

    /// `T_e(s, e, a, ·)` as a slice over successor environment states.
    pub fn te_row(&self, s: StateId, e: usize, a: ActionId) -> &[f64] {
        let start = self.te_index(s, e, a, 0);
        &self.trans_e[start..start + self.num_env_states]
    }

    /// `O(s', e, a, ·)` as a slice over observations.
    pub fn obs_row(&self, next: StateId, e: usize, a: ActionId) -> &[f64] {
        let start = self.obs_index(next, e, a, 0);
        &self.obs_fn[start..start + self.num_observations]
    }

    pub fn trans_s(&self, s: StateId, a: ActionId, e: usize, next: StateId) -> f64 {
        self.trans_s[self.ts_index(s, a, e, next)]
    }

    pub fn trans_e(&self, s: StateId, e: usize, a: ActionId, next_e: usize) -> f64 {
        self.trans_e[self.te_index(s, e, a, next_e)]
    }

    pub fn obs(&self, next: StateId, e: usize, a: ActionId, o: usize) -> f64 {
        self.obs_fn[self.obs_index(next, e, a, o)]
    }

    pub fn cost(&self, s: StateId, a: ActionId, next: StateId, o: usize) -> f64 {
        self.cost[self.cost_index(s, a, next, o)]
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelViolation {
    TableSize { table: &'static str, expected: usize, actual: usize },
    IdleOutOfRange { idle: ActionId, num_actions: usize },
    ProbabilityOutOfRange { table: &'static str, index: usize, value: f64 },
    StateRowSum { state: StateId, action: ActionId, env: usize, sum: f64 },
    EnvRowSum { state: StateId, env: usize, action: ActionId, sum: f64 },
    ObservationRowSum { next_state: StateId, env: usize, action: ActionId, sum: f64 },
    IdleNotAbsorbing { state: StateId, env: usize },
    IdleNotFree { state: StateId, observation: usize, cost: f64 },
    NonFiniteCost { index: usize },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::TableSize { table, expected, actual } => {
                write!(f, "{table} has {actual} entries, expected {expected}")
            }
            ModelViolation::IdleOutOfRange { idle, num_actions } => {
                write!(f, "idle action {idle} is not among {num_actions} actions")
            }
            ModelViolation::ProbabilityOutOfRange { table, index, value } => {
                write!(f, "{table}[{index}] = {value} is not a probability")
            }
            ModelViolation::StateRowSum { state, action, env, sum } => {
                write!(f, "T_s row (s={state}, a={action}, e={env}) sums to {sum}")
            }
            ModelViolation::EnvRowSum { state, env, action, sum } => {
                write!(f, "T_e row (s={state}, e={env}, a={action}) sums to {sum}")
            }
            ModelViolation::ObservationRowSum { next_state, env, action, sum } => {
                write!(f, "O row (s'={next_state}, e={env}, a={action}) sums to {sum}")
            }
            ModelViolation::IdleNotAbsorbing { state, env } => {
                write!(f, "idle does not keep state {state} in place under e={env}")
            }
            ModelViolation::IdleNotFree { state, observation, cost } => {
                write!(f, "idle at state {state} with o={observation} costs {cost}")
            }
            ModelViolation::NonFiniteCost { index } => write!(f, "cost[{index}] is not finite"),
        }
    }
}

/// Checks every model invariant and reports the violations. An empty report
/// means the model is well formed.
pub fn validate_model(model: &MomdpModel) -> Vec<ModelViolation> {
    let mut report = Vec::new();
    let (ns, ne, na, no) = (
        model.num_states,
        model.num_env_states,
        model.num_actions,
        model.num_observations,
    );

    let sizes = [
        ("trans_s", ns * na * ne * ns, model.trans_s.len()),
        ("trans_e", ns * ne * na * ne, model.trans_e.len()),
        ("obs_fn", ns * ne * na * no, model.obs_fn.len()),
        ("cost", ns * na * ns * no, model.cost.len()),
    ];
    let mut sized = true;
    for (table, expected, actual) in sizes {
        if expected != actual {
            report.push(ModelViolation::TableSize { table, expected, actual });
            sized = false;
        }
    }
    if model.idle_action >= na {
        report.push(ModelViolation::IdleOutOfRange {
            idle: model.idle_action,
            num_actions: na,
        });
        sized = false;
    }
    if !sized {
        return report;
    }

    for (table, values) in [
        ("trans_s", &model.trans_s),
        ("trans_e", &model.trans_e),
        ("obs_fn", &model.obs_fn),
    ] {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                report.push(ModelViolation::ProbabilityOutOfRange { table, index, value });
            }
        }
    }
    for (index, c) in model.cost.iter().enumerate() {
        if !c.is_finite() {
            report.push(ModelViolation::NonFiniteCost { index });
        }
    }

    for s in 0..ns {
        for a in 0..na {
            for e in 0..ne {
                let sum: f64 = model.ts_row(s, a, e).iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    report.push(ModelViolation::StateRowSum { state: s, action: a, env: e, sum });
                }
                let sum: f64 = model.te_row(s, e, a).iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    report.push(ModelViolation::EnvRowSum { state: s, env: e, action: a, sum });
                }
                let sum: f64 = model.obs_row(s, e, a).iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    report.push(ModelViolation::ObservationRowSum {
                        next_state: s,
                        env: e,
                        action: a,
                        sum,
                    });
                }
            }
        }
    }

    let idle = model.idle_action;
    for s in 0..ns {
        for e in 0..ne {
            if model.trans_s(s, idle, e, s) != 1.0 {
                report.push(ModelViolation::IdleNotAbsorbing { state: s, env: e });
            }
        }
        for o in 0..no {
            let cost = model.cost(s, idle, s, o);
            if cost != 0.0 {
                report.push(ModelViolation::IdleNotFree { state: s, observation: o, cost });
            }
        }
    }
    report
}

/// Bayes filter for one agent's step:
/// `b'(e') ∝ O(s', e', a, o) · Σ_e T_s(s, a, e, s') · T_e(s, e, a, e') · b(e)`.
///
/// The `T_s` factor only matters when the observed move itself depends on
/// the environment (e.g. bumping into a hidden obstacle); otherwise it
/// cancels in the normalization.
pub fn belief_update(
    model: &MomdpModel,
    belief: &Belief,
    s: StateId,
    a: ActionId,
    next: StateId,
    o: usize,
) -> Result<Belief> {
    let ne = model.num_env_states;
    let weighted = transition_evidence(model, belief, s, a, next);
    let mut predicted = vec![0.0; ne];
    for (e, &w) in weighted.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (slot, p) in predicted.iter_mut().zip(model.te_row(s, e, a)) {
            *slot += p * w;
        }
    }
    observation_correction(model, &predicted, s, a, next, o)
}

/// `b(e) · T_s(s, a, e, s')`, unnormalized.
pub(crate) fn transition_evidence(
    model: &MomdpModel,
    belief: &Belief,
    s: StateId,
    a: ActionId,
    next: StateId,
) -> Vec<f64> {
    belief
        .probs()
        .iter()
        .enumerate()
        .map(|(e, &b)| b * model.trans_s(s, a, e, next))
        .collect()
}

/// Multiplies by the observation likelihood at `next` and normalizes.
pub(crate) fn observation_correction(
    model: &MomdpModel,
    predicted: &[f64],
    s: StateId,
    a: ActionId,
    next: StateId,
    o: usize,
) -> Result<Belief> {
    let posterior: Vec<f64> = predicted
        .iter()
        .enumerate()
        .map(|(e, &p)| p * model.obs(next, e, a, o))
        .collect();
    let z: f64 = posterior.iter().sum();
    if z.is_nan() || z <= 0.0 || !z.is_finite() {
        return Err(Error::ImpossibleObservation {
            state: s,
            action: a,
            next_state: next,
            observation: o,
        });
    }
    Ok(Belief::from_unnormalized(posterior))
}

/// Two states are adjacent when some pair of actions can bring them to a
/// common successor under some environment state.
pub fn adjacent_states(model: &MomdpModel, s: StateId, other: StateId) -> bool {
    let ns = model.num_states;
    let mut reach_s = vec![false; ns];
    let mut reach_o = vec![false; ns];
    for e in 0..model.num_env_states {
        reach_s.iter_mut().for_each(|r| *r = false);
        reach_o.iter_mut().for_each(|r| *r = false);
        for a in 0..model.num_actions {
            for (next, &p) in model.ts_row(s, a, e).iter().enumerate() {
                if p > 0.0 {
                    reach_s[next] = true;
                }
            }
            for (next, &p) in model.ts_row(other, a, e).iter().enumerate() {
                if p > 0.0 {
                    reach_o[next] = true;
                }
            }
        }
        if reach_s.iter().zip(&reach_o).any(|(x, y)| *x && *y) {
            return true;
        }
    }
    false
}
