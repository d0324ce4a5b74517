//! Finite-horizon reach-probability and cost-to-go tables for a frozen
//! belief, and the lexicographic policy they induce: maximize the
//! probability of reaching the goal, then the expected negative cost among
//! the (near-)maximizers.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::momdp::{Belief, MomdpModel};
use crate::{ActionId, Error, Result, StateId};

/// Default tolerance for treating two reach probabilities as tied.
pub const DEFAULT_TIE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub state: StateId,
    pub prob: f64,
    /// Observation-averaged cost of the transition.
    pub cost: f64,
}

/// The model with the hidden state averaged out under a fixed belief:
/// `P_b(s' | s, a) = Σ_e T_s(s, a, e, s') b(e)`.
#[derive(Debug, Clone)]
pub struct FrozenMdp {
    num_states: usize,
    num_actions: usize,
    idle_action: ActionId,
    belief: Belief,
    successors: Vec<Vec<Successor>>,
}

impl FrozenMdp {
    pub fn new(model: &MomdpModel, belief: &Belief) -> Result<Self> {
        if belief.len() != model.num_env_states {
            return Err(Error::InvalidBelief(format!(
                "belief has {} entries, model has {} environment states",
                belief.len(),
                model.num_env_states
            )));
        }
        let (ns, na, ne, no) = (
            model.num_states,
            model.num_actions,
            model.num_env_states,
            model.num_observations,
        );
        let b = belief.probs();

        // P(o | s', a) under the frozen belief
        let mut obs_dist = vec![0.0; ns * na * no];
        for next in 0..ns {
            for a in 0..na {
                let dist = &mut obs_dist[(next * na + a) * no..(next * na + a + 1) * no];
                for (e, &be) in b.iter().enumerate() {
                    if be == 0.0 {
                        continue;
                    }
                    for (slot, p) in dist.iter_mut().zip(model.obs_row(next, e, a)) {
                        *slot += be * p;
                    }
                }
            }
        }

        let mut successors = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                let mut probs = vec![0.0; ns];
                for (e, &be) in b.iter().enumerate().take(ne) {
                    if be == 0.0 {
                        continue;
                    }
                    for (slot, p) in probs.iter_mut().zip(model.ts_row(s, a, e)) {
                        *slot += be * p;
                    }
                }
                let row = probs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(next, &prob)| {
                        let dist = &obs_dist[(next * na + a) * no..(next * na + a + 1) * no];
                        let cost = dist
                            .iter()
                            .enumerate()
                            .map(|(o, po)| po * model.cost(s, a, next, o))
                            .sum();
                        Successor { state: next, prob, cost }
                    })
                    .collect();
                successors.push(row);
            }
        }
        Ok(FrozenMdp {
            num_states: ns,
            num_actions: na,
            idle_action: model.idle_action,
            belief: belief.clone(),
            successors,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn idle_action(&self) -> ActionId {
        self.idle_action
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn successors(&self, s: StateId, a: ActionId) -> &[Successor] {
        &self.successors[s * self.num_actions + a]
    }

    /// Expected one-step cost of `a` at `s`.
    pub fn expected_cost(&self, s: StateId, a: ActionId) -> f64 {
        self.successors(s, a).iter().map(|x| x.prob * x.cost).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ValueTables {
    horizon: usize,
    model: Arc<FrozenMdp>,
    goal: Vec<bool>,
    tie_eps: f64,
    /// `V_G(t, s)` at `t * num_states + s`.
    v_reach: Vec<f64>,
    /// `V_J(t, s)` at `t * num_states + s`.
    v_cost: Vec<f64>,
    policy: Vec<ActionId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyQuery {
    pub time: usize,
    pub state: StateId,
    pub tie_eps: f64,
}

impl PolicyQuery {
    pub fn new(time: usize, state: StateId) -> Self {
        PolicyQuery { time, state, tie_eps: DEFAULT_TIE_EPS }
    }
}

/// Solves the tables from scratch for `belief`.
pub fn solve_values(
    model: &MomdpModel,
    goal: &[StateId],
    horizon: usize,
    belief: &Belief,
) -> Result<ValueTables> {
    let frozen = Arc::new(FrozenMdp::new(model, belief)?);
    solve_frozen(frozen, goal, horizon, DEFAULT_TIE_EPS)
}

/// Backward recursion over an already belief-averaged model. Tables are
/// indexed by `t` in `0..=horizon`; goal states absorb.
pub fn solve_frozen(
    model: Arc<FrozenMdp>,
    goal: &[StateId],
    horizon: usize,
    tie_eps: f64,
) -> Result<ValueTables> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let ns = model.num_states;
    let mut is_goal = vec![false; ns];
    for &g in goal {
        if g >= ns {
            return Err(Error::MalformedTask(format!("goal state {g} out of range")));
        }
        is_goal[g] = true;
    }

    let mut v_reach = vec![0.0; (horizon + 1) * ns];
    let mut v_cost = vec![0.0; (horizon + 1) * ns];
    let mut policy = vec![model.idle_action; (horizon + 1) * ns];
    for s in 0..ns {
        if is_goal[s] {
            v_reach[horizon * ns + s] = 1.0;
        }
    }

    for t in (0..horizon).rev() {
        let (now, later) = (t * ns, (t + 1) * ns);
        for s in 0..ns {
            if is_goal[s] {
                v_reach[now + s] = 1.0;
                continue;
            }
            let next_reach = &v_reach[later..later + ns];
            let next_cost = &v_cost[later..later + ns];
            let backup = best_action(&model, s, next_reach, next_cost, tie_eps);
            v_reach[now + s] = backup.reach;
            v_cost[now + s] = backup.cost;
            policy[now + s] = backup.action;
        }
    }

    if goal.is_empty() {
        log::debug!("solved values for an empty goal set; reach probability is zero everywhere");
    }
    Ok(ValueTables {
        horizon,
        model,
        goal: is_goal,
        tie_eps,
        v_reach,
        v_cost,
        policy,
    })
}

struct Backup {
    action: ActionId,
    /// Largest reach backup over all actions.
    reach: f64,
    /// Cost backup of the chosen action.
    cost: f64,
}

fn best_action(
    model: &FrozenMdp,
    s: StateId,
    next_reach: &[f64],
    next_cost: &[f64],
    tie_eps: f64,
) -> Backup {
    let na = model.num_actions;
    let mut q_reach = Vec::with_capacity(na);
    let mut q_cost = Vec::with_capacity(na);
    for a in 0..na {
        let (mut r, mut c) = (0.0, 0.0);
        for x in model.successors(s, a) {
            r += x.prob * next_reach[x.state];
            c += x.prob * (-x.cost + next_cost[x.state]);
        }
        q_reach.push(r);
        q_cost.push(c);
    }
    let reach = q_reach.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut chosen: Option<ActionId> = None;
    for a in 0..na {
        if q_reach[a] < reach - tie_eps {
            continue;
        }
        match chosen {
            Some(c) if q_cost[a] <= q_cost[c] => {}
            _ => chosen = Some(a),
        }
    }
    let action = chosen.expect("at least one action attains the max");
    Backup { action, reach, cost: q_cost[action] }
}

impl ValueTables {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states
    }

    pub fn frozen_belief(&self) -> &Belief {
        self.model.belief()
    }

    pub fn model(&self) -> &Arc<FrozenMdp> {
        &self.model
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.goal[s]
    }

    pub fn goal_is_empty(&self) -> bool {
        !self.goal.iter().any(|g| *g)
    }

    pub fn tie_eps(&self) -> f64 {
        self.tie_eps
    }

    /// `V_G(t, s)`; past the horizon only goal states count.
    pub fn reach(&self, t: usize, s: StateId) -> f64 {
        if t > self.horizon {
            return if self.goal[s] { 1.0 } else { 0.0 };
        }
        self.v_reach[t * self.model.num_states + s]
    }

    /// `V_J(t, s)`, the expected negative cost-to-go; zero past the horizon.
    pub fn cost_to_go(&self, t: usize, s: StateId) -> f64 {
        if t > self.horizon {
            return 0.0;
        }
        self.v_cost[t * self.model.num_states + s]
    }

    /// Action chosen during the solve (with the solve's tie tolerance).
    pub fn planned_action(&self, t: usize, s: StateId) -> ActionId {
        if t >= self.horizon {
            return self.model.idle_action;
        }
        self.policy[t * self.model.num_states + s]
    }

    /// Human-readable dump keyed by `(t, s)`.
    pub fn dump(&self) -> String {
        let mut out = String::from("t\ts\tV_G\tV_J\taction\n");
        for t in 0..=self.horizon {
            for s in 0..self.model.num_states {
                let _ = writeln!(
                    out,
                    "{t}\t{s}\t{:.6}\t{:.6}\t{}",
                    self.reach(t, s),
                    self.cost_to_go(t, s),
                    self.planned_action(t, s)
                );
            }
        }
        out
    }
}

/// Probability of reaching the goal from `s` between `t` and the horizon.
pub fn reach_probability(tables: &ValueTables, t: usize, s: StateId) -> f64 {
    tables.reach(t, s)
}

/// Lexicographic policy: among actions whose reach backup is within
/// `tie_eps` of the best, the one with the best cost backup; ties go to
/// the lowest action index. Goal states and the final step idle.
pub fn policy_action(tables: &ValueTables, query: &PolicyQuery) -> Result<ActionId> {
    let horizon = tables.horizon;
    if query.time > horizon {
        return Err(Error::OutOfHorizon { time: query.time, horizon });
    }
    if query.state >= tables.num_states() {
        return Err(Error::MalformedTask(format!("state {} out of range", query.state)));
    }
    let model = &tables.model;
    if query.time == horizon || tables.goal[query.state] {
        return Ok(model.idle_action);
    }
    let ns = model.num_states;
    let later = (query.time + 1) * ns;
    let backup = best_action(
        model,
        query.state,
        &tables.v_reach[later..later + ns],
        &tables.v_cost[later..later + ns],
        query.tie_eps,
    );
    Ok(backup.action)
}
