//! Multi-robot tasks and their expected pure reward.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::momdp::Belief;
use crate::values::{policy_action, PolicyQuery, ValueTables};
use crate::{ActionId, AgentId, Error, Result, StateId, TaskId};

/// What an agent is committed to: a task, or nothing (`None`, idle).
pub type Commitment = Option<TaskId>;

/// A task as written in a schedule, before it is activated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub goal: Vec<StateId>,
    pub candidates: Vec<AgentId>,
    pub t_start: usize,
    pub t_end: usize,
    /// `(r_0, r_1, ...)`: reward when that many agents arrive.
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: TaskId,
    pub goal: Vec<StateId>,
    pub candidates: Vec<AgentId>,
    pub t_start: usize,
    pub t_end: usize,
    pub rewards: Vec<f64>,
    /// Agents whose arrival has been latched; they no longer need to move.
    pub arrived: BTreeSet<AgentId>,
    values: Option<Arc<ValueTables>>,
}

/// Expected pure reward of a task for a commitment set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedReward {
    pub value: f64,
    /// The task had already ended; `value` is `r_0`.
    pub expired: bool,
}

/// Which candidates a task keeps when building the factor graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFilter {
    /// Every listed candidate.
    Disabled,
    /// Candidates with a positive reach probability.
    #[default]
    Reachable,
    /// Candidates whose shortest path to the goal fits in the remaining time.
    ShortestPath,
}

impl Task {
    pub fn new(spec: TaskSpec) -> Result<Self> {
        if spec.t_start >= spec.t_end {
            return Err(Error::MalformedTask(format!(
                "task {}: start {} is not before end {}",
                spec.id, spec.t_start, spec.t_end
            )));
        }
        if spec.candidates.is_empty() {
            return Err(Error::MalformedTask(format!("task {} has no candidates", spec.id)));
        }
        let unique: BTreeSet<_> = spec.candidates.iter().collect();
        if unique.len() != spec.candidates.len() {
            return Err(Error::MalformedTask(format!("task {} repeats a candidate", spec.id)));
        }
        if spec.rewards.len() != spec.candidates.len() + 1 {
            return Err(Error::MalformedTask(format!(
                "task {}: {} rewards for {} candidates (need one more than candidates)",
                spec.id,
                spec.rewards.len(),
                spec.candidates.len()
            )));
        }
        if spec.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::MalformedTask(format!("task {} has a non-finite reward", spec.id)));
        }
        if spec.rewards[0] != 0.0 {
            log::warn!("task {} has r_0 = {} (expected 0)", spec.id, spec.rewards[0]);
        }
        let mut goal = spec.goal;
        goal.sort_unstable();
        goal.dedup();
        Ok(Task {
            id: spec.id,
            goal,
            candidates: spec.candidates,
            t_start: spec.t_start,
            t_end: spec.t_end,
            rewards: spec.rewards,
            arrived: BTreeSet::new(),
            values: None,
        })
    }

    pub fn horizon(&self) -> usize {
        self.t_end - self.t_start
    }

    pub fn is_expired(&self, t: usize) -> bool {
        t >= self.t_end
    }

    pub fn in_goal(&self, s: StateId) -> bool {
        self.goal.binary_search(&s).is_ok()
    }

    pub fn set_values(&mut self, tables: Arc<ValueTables>) {
        self.values = Some(tables);
    }

    pub fn values(&self) -> Option<&Arc<ValueTables>> {
        self.values.as_ref()
    }

    fn tables(&self) -> Result<&ValueTables> {
        self.values
            .as_deref()
            .ok_or_else(|| Error::MalformedTask(format!("task {} has no solved values", self.id)))
    }

    fn local_time(&self, t: usize) -> usize {
        t.saturating_sub(self.t_start)
    }

    /// `V_G` at absolute time `t`.
    pub fn reach(&self, t: usize, s: StateId) -> Result<f64> {
        Ok(self.tables()?.reach(self.local_time(t), s))
    }

    /// `V_J` at absolute time `t`.
    pub fn cost_to_go(&self, t: usize, s: StateId) -> Result<f64> {
        Ok(self.tables()?.cost_to_go(self.local_time(t), s))
    }

    /// Task policy at absolute time `t`.
    pub fn policy(&self, t: usize, s: StateId, tie_eps: f64) -> Result<ActionId> {
        let query = PolicyQuery { time: self.local_time(t), state: s, tie_eps };
        policy_action(self.tables()?, &query)
    }

    /// Reward for `extra` more arrivals on top of the latched ones. Counts
    /// past the end of the table use the last entry.
    pub fn reward_for(&self, extra: usize) -> f64 {
        let i = (self.arrived.len() + extra).min(self.rewards.len() - 1);
        self.rewards[i]
    }

    /// Reward realized when the task ends.
    pub fn realized_reward(&self) -> f64 {
        self.reward_for(0)
    }

    /// Candidates that still need to arrive.
    pub fn open_candidates(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.candidates.iter().copied().filter(|a| !self.arrived.contains(a))
    }
}

/// Distribution of the number of successes among independent Bernoulli
/// trials, by iterative convolution. `out[i]` is the probability of exactly
/// `i` successes; an empty input gives `[1.0]`.
pub fn poisson_binomial(p: &[f64]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(p.len() + 1);
    dist.push(1.0);
    for &pj in p {
        dist.push(0.0);
        for i in (0..dist.len()).rev() {
            let stay = dist[i] * (1.0 - pj);
            let from_below = if i > 0 { dist[i - 1] * pj } else { 0.0 };
            dist[i] = stay + from_below;
        }
    }
    dist
}

/// `Σ_i reward(i) · P_c[i]` for arrival probabilities `probs`.
pub fn reward_term(reward: impl Fn(usize) -> f64, probs: &[f64]) -> f64 {
    poisson_binomial(probs)
        .iter()
        .enumerate()
        .map(|(i, pc)| reward(i) * pc)
        .sum()
}

/// `Σ_i (reward(i+1) - reward(i)) · P_c^{others}[i]`: how much the reward
/// term gains if one more agent arrives, given the others' probabilities.
pub fn marginal_from_probs(reward: impl Fn(usize) -> f64, others: &[f64]) -> f64 {
    poisson_binomial(others)
        .iter()
        .enumerate()
        .map(|(i, pc)| (reward(i + 1) - reward(i)) * pc)
        .sum()
}

/// Expected pure reward of `task` if exactly `committed` work on it:
/// expected task reward plus the committed agents' (negative) cost-to-go.
/// Agents already latched as arrived are counted in the reward base and
/// ignored in `committed`.
pub fn expected_pure_reward(
    task: &Task,
    committed: &[AgentId],
    states: &[StateId],
    t: usize,
) -> Result<ExpectedReward> {
    if task.is_expired(t) {
        return Ok(ExpectedReward { value: task.realized_reward(), expired: true });
    }
    let mut probs = Vec::with_capacity(committed.len());
    let mut cost = 0.0;
    for &agent in committed.iter().filter(|a| !task.arrived.contains(a)) {
        let s = states[agent];
        probs.push(task.reach(t, s)?);
        cost += task.cost_to_go(t, s)?;
    }
    let value = reward_term(|i| task.reward_for(i), &probs) + cost;
    Ok(ExpectedReward { value, expired: false })
}

/// Marginal reward `δR` of `agent` arriving, holding the other committed
/// agents' arrival probabilities fixed.
pub fn marginal_reward(
    task: &Task,
    committed: &[AgentId],
    agent: AgentId,
    states: &[StateId],
    t: usize,
) -> Result<f64> {
    if !committed.contains(&agent) {
        return Err(Error::NotCommitted { agent, task: task.id });
    }
    let mut others = Vec::new();
    for &other in committed.iter().filter(|a| **a != agent && !task.arrived.contains(a)) {
        others.push(task.reach(t, states[other])?);
    }
    Ok(marginal_from_probs(|i| task.reward_for(i), &others))
}

/// Candidates of `task` worth putting in its factor, among `agents`.
/// Latched agents are never returned.
pub fn candidate_filter(
    task: &Task,
    agents: &[AgentId],
    states: &[StateId],
    t: usize,
    filter: CandidateFilter,
) -> Result<Vec<AgentId>> {
    let open = task.open_candidates().filter(|a| agents.contains(a));
    match filter {
        CandidateFilter::Disabled => Ok(open.collect()),
        CandidateFilter::Reachable => {
            let mut out = Vec::new();
            for a in open {
                if task.reach(t, states[a])? > 0.0 {
                    out.push(a);
                }
            }
            Ok(out)
        }
        CandidateFilter::ShortestPath => {
            let dist = goal_distances(task)?;
            let remaining = task.t_end.saturating_sub(t);
            Ok(open.filter(|a| dist[states[*a]].is_some_and(|d| d <= remaining)).collect())
        }
    }
}

/// Breadth-first step counts to the goal over transitions with positive
/// probability under the task's frozen model.
fn goal_distances(task: &Task) -> Result<Vec<Option<usize>>> {
    let model = task.tables()?.model();
    let ns = model.num_states();
    // reverse adjacency
    let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); ns];
    for s in 0..ns {
        for a in 0..model.num_actions() {
            for x in model.successors(s, a) {
                if x.state != s {
                    preds[x.state].push(s);
                }
            }
        }
    }
    let mut dist = vec![None; ns];
    let mut queue = VecDeque::new();
    for &g in &task.goal {
        dist[g] = Some(0);
        queue.push_back(g);
    }
    while let Some(s) = queue.pop_front() {
        let d = dist[s].unwrap_or(0);
        for &p in &preds[s] {
            if dist[p].is_none() {
                dist[p] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    Ok(dist)
}

/// Drops tasks that have ended at `t`, then activates `arrivals` and
/// solves their tables with `solve`. Returns the expired tasks so the
/// caller can realize their rewards.
pub fn update_task_set<F>(
    tasks: &mut Vec<Task>,
    t: usize,
    arrivals: Vec<TaskSpec>,
    mut solve: F,
) -> Result<Vec<Task>>
where
    F: FnMut(&Task) -> Result<Arc<ValueTables>>,
{
    let (expired, active): (Vec<Task>, Vec<Task>) =
        std::mem::take(tasks).into_iter().partition(|k| k.is_expired(t));
    *tasks = active;
    for spec in arrivals {
        if tasks.iter().any(|k| k.id == spec.id) {
            return Err(Error::MalformedTask(format!("task id {} already active", spec.id)));
        }
        let mut spec = spec;
        spec.t_start = t;
        let mut task = Task::new(spec)?;
        let tables = solve(&task)?;
        task.set_values(tables);
        tasks.push(task);
    }
    Ok(expired)
}

/// Everything the allocator needs at one time step.
#[derive(Debug, Clone, Copy)]
pub struct AllocationProblem<'a> {
    pub tasks: &'a [Task],
    /// Current state of every agent, indexed by agent id.
    pub states: &'a [StateId],
    pub belief: &'a Belief,
    pub time: usize,
    pub filter: CandidateFilter,
}

impl AllocationProblem<'_> {
    pub fn num_agents(&self) -> usize {
        self.states.len()
    }

    /// Every task must carry tables solved for the current belief.
    pub fn check(&self) -> Result<()> {
        for task in self.tasks {
            let tables = task.tables()?;
            if tables.frozen_belief() != self.belief {
                return Err(Error::MalformedTask(format!(
                    "task {} was solved for a different belief",
                    task.id
                )));
            }
            if let Some(a) = task.candidates.iter().find(|a| **a >= self.states.len()) {
                return Err(Error::MalformedTask(format!(
                    "task {} names unknown agent {a}",
                    task.id
                )));
            }
        }
        Ok(())
    }
}
