//! Brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here calls the solver being checked.

#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use dtpp::maxsum::{Factor, FactorGraph};
use dtpp::momdp::{build_grid_momdp, Belief, Cell, GridWorldSpec, MomdpModel, TransitionMode};
use dtpp::resolution::{LocalAgent, LocalAssignment};
use dtpp::scenario::{
    AgentConfig, GeneratorConfig, GridConfig, Params, ScenarioConfig, UncertainCell,
};
use dtpp::task::Commitment;
use dtpp::values::{solve_values, FrozenMdp};

// ---------------------------------------------------------------- counts

/// `P(exactly i successes)` by summing over all `2^n` outcomes.
pub fn enumerate_counts(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n + 1];
    for mask in 0u32..1 << n {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        out[mask.count_ones() as usize] += prob;
    }
    out
}

// ------------------------------------------------------------ small MDPs

/// A random finite MDP with one hidden-state value (fully observable).
/// Actions `0..na-1` move, the last one idles at zero cost.
pub struct RandomMdp {
    pub model: MomdpModel,
    pub goal: Vec<bool>,
    pub horizon: usize,
    /// `succ[s][a]`: successor distribution.
    pub succ: Vec<Vec<Vec<(usize, f64)>>>,
    /// `cost[s][a]`: cost of taking `a` in `s`, whatever the outcome.
    pub cost: Vec<Vec<f64>>,
}

impl RandomMdp {
    pub fn num_states(&self) -> usize {
        self.succ.len()
    }
    pub fn num_actions(&self) -> usize {
        self.succ[0].len()
    }
    pub fn goal_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&s| self.goal[s]).collect()
    }
}

pub fn random_mdp<R: Rng>(rng: &mut R, max_states: usize, max_horizon: usize, max_slip: f64) -> RandomMdp {
    let ns = rng.gen_range(2..=max_states);
    let na = 3;
    let idle = na - 1;
    let horizon = rng.gen_range(1..=max_horizon);
    let mut goal = vec![false; ns];
    let n_goal = rng.gen_range(1..=2.min(ns - 1));
    for &g in (0..ns).collect::<Vec<_>>().choose_multiple(rng, n_goal) {
        goal[g] = true;
    }
    let mut succ = vec![vec![Vec::new(); na]; ns];
    let mut cost = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let mut dist: Vec<(usize, f64)> = Vec::new();
            let mut add = |t: usize, p: f64| {
                if p <= 0.0 {
                    return;
                }
                match dist.iter_mut().find(|(x, _)| *x == t) {
                    Some(e) => e.1 += p,
                    None => dist.push((t, p)),
                }
            };
            if a == idle {
                add(s, 1.0);
            } else {
                let target = rng.gen_range(0..ns);
                let slip = rng.gen_range(0.0..=max_slip);
                add(target, 1.0 - slip);
                if rng.gen_bool(0.5) {
                    add(s, slip);
                } else {
                    let other = rng.gen_range(0..ns);
                    add(s, slip / 2.0);
                    add(other, slip / 2.0);
                }
                cost[s][a] = rng.gen_range(0.5..2.0);
            }
            dist.sort_by_key(|e| e.0);
            succ[s][a] = dist;
        }
    }
    let mut model = MomdpModel::zeroed(ns, 1, na, 1, idle);
    for s in 0..ns {
        for a in 0..na {
            for &(t, p) in &succ[s][a] {
                let i = model.ts_index(s, a, 0, t);
                model.trans_s[i] = p;
                let i = model.cost_index(s, a, t, 0);
                model.cost[i] = cost[s][a];
            }
            let i = model.te_index(s, 0, a, 0);
            model.trans_e[i] = 1.0;
            let i = model.obs_index(s, 0, a, 0);
            model.obs_fn[i] = 1.0;
        }
    }
    RandomMdp { model, goal, horizon, succ, cost }
}

/// Lexicographic expectimax over the full history tree, no tables: the
/// best reach probability, and among actions within `eps` of it, the best
/// expected negative cost (lowest action index on ties).
pub fn expectimax(m: &RandomMdp, t: usize, s: usize, eps: f64) -> (f64, f64) {
    if m.goal[s] {
        return (1.0, 0.0);
    }
    if t == m.horizon {
        return (0.0, 0.0);
    }
    let mut backups = Vec::new();
    for a in 0..m.num_actions() {
        let (mut vg, mut vj) = (0.0, 0.0);
        for &(next, p) in &m.succ[s][a] {
            let (cg, cj) = expectimax(m, t + 1, next, eps);
            vg += p * cg;
            vj += p * (cj - m.cost[s][a]);
        }
        backups.push((vg, vj));
    }
    let best = backups.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let mut chosen: Option<(f64, f64)> = None;
    for &(vg, vj) in &backups {
        if vg >= best - eps && chosen.is_none_or(|c| vj > c.1) {
            chosen = Some((vg, vj));
        }
    }
    (best, chosen.expect("some action").1)
}

/// Reach probability and expected negative cost of a fixed time-indexed
/// policy `policy[t][s]`, from every state at `t = 0`.
pub fn evaluate_policy(m: &RandomMdp, policy: &[Vec<usize>]) -> Vec<(f64, f64)> {
    let ns = m.num_states();
    let mut v: Vec<(f64, f64)> = (0..ns).map(|s| (if m.goal[s] { 1.0 } else { 0.0 }, 0.0)).collect();
    for t in (0..m.horizon).rev() {
        let mut next = v.clone();
        for s in 0..ns {
            if m.goal[s] {
                continue;
            }
            let a = policy[t][s];
            let (mut g, mut j) = (0.0, 0.0);
            for &(x, p) in &m.succ[s][a] {
                g += p * v[x].0;
                j += p * (v[x].1 - m.cost[s][a]);
            }
            next[s] = (g, j);
        }
        v = next;
    }
    v
}

/// Number of deterministic time-indexed policies, counting only decisions
/// in non-goal states.
pub fn policy_count(m: &RandomMdp) -> Option<u64> {
    let decisions = (m.num_states() - m.goal_states().len()) * m.horizon;
    (m.num_actions() as u64).checked_pow(decisions as u32)
}

/// Enumerates every deterministic time-indexed policy. For each start
/// state returns `(max reach, best value among reach-maximal policies)`.
pub fn enumerate_policies(m: &RandomMdp, tol: f64) -> Vec<(f64, f64)> {
    let ns = m.num_states();
    let na = m.num_actions();
    let slots: Vec<(usize, usize)> = (0..m.horizon)
        .flat_map(|t| (0..ns).filter(|&s| !m.goal[s]).map(move |s| (t, s)))
        .collect();
    let total = policy_count(m).expect("small instance");
    let mut all = Vec::with_capacity(total as usize);
    let mut policy = vec![vec![0; ns]; m.horizon];
    for code in 0..total {
        let mut c = code;
        for &(t, s) in &slots {
            policy[t][s] = (c % na as u64) as usize;
            c /= na as u64;
        }
        all.push(evaluate_policy(m, &policy));
    }
    (0..ns)
        .map(|s| {
            let best_g = all.iter().map(|v| v[s].0).fold(f64::NEG_INFINITY, f64::max);
            let best_j = all
                .iter()
                .filter(|v| v[s].0 >= best_g - tol)
                .map(|v| v[s].1)
                .fold(f64::NEG_INFINITY, f64::max);
            (best_g, best_j)
        })
        .collect()
}

// ---------------------------------------------------------- factor graphs

/// Every assignment of the graph's variables; returns an argmax of the
/// objective (first found on ties) and its value.
pub fn brute_force_argmax(graph: &FactorGraph) -> (Vec<Commitment>, f64) {
    let n = graph.num_vars();
    let sizes: Vec<usize> = (0..n).map(|v| graph.domain_size(v)).collect();
    let mut digits = vec![0usize; n];
    let mut best: Option<(Vec<Commitment>, f64)> = None;
    loop {
        let assignment: Vec<Commitment> = (0..n).map(|v| graph.commitment(v, digits[v])).collect();
        let value: f64 = graph.factors().iter().map(|f| table_value(f, &assignment)).sum();
        if best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((assignment, value));
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.expect("at least one assignment");
            }
            digits[i] += 1;
            if digits[i] < sizes[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

fn table_value(f: &Factor, assignment: &[Commitment]) -> f64 {
    let mut mask = 0;
    for (j, &a) in f.scope.iter().enumerate() {
        if assignment[a] == Some(f.task) {
            mask |= 1 << j;
        }
    }
    f.table[mask]
}

/// Random acyclic factor graph: each new factor joins one existing
/// variable to fresh ones, plus occasional unary factors. Degrees stay at
/// most 3, so domains have at most 4 values.
pub fn random_tree_graph<R: Rng>(rng: &mut R, max_vars: usize) -> FactorGraph {
    let n = rng.gen_range(1..=max_vars);
    let mut degree = vec![0usize; n];
    let mut factors = Vec::new();
    let mut placed = 1;
    let random_table = |rng: &mut R, k: usize| -> Vec<f64> {
        (0..1usize << k).map(|_| rng.gen_range(-10.0..10.0)).collect()
    };
    while placed < n {
        let open: Vec<usize> = (0..placed).filter(|&v| degree[v] < 3).collect();
        let anchor = *open.choose(rng).expect("a tree always has a leaf");
        let fresh = rng.gen_range(1..=2.min(n - placed));
        let mut scope = vec![anchor];
        scope.extend(placed..placed + fresh);
        placed += fresh;
        for &v in &scope {
            degree[v] += 1;
        }
        scope.sort_unstable();
        let table = random_table(rng, scope.len());
        factors.push(Factor { task: factors.len(), scope, table });
    }
    for (v, d) in degree.iter_mut().enumerate() {
        if *d < 3 && rng.gen_bool(0.4) {
            *d += 1;
            let table = random_table(rng, 1);
            factors.push(Factor { task: factors.len(), scope: vec![v], table });
        }
    }
    if factors.is_empty() {
        factors.push(Factor { task: 0, scope: vec![0], table: random_table(rng, 1) });
    }
    FactorGraph::new(n, factors).expect("valid tree")
}

/// Expected pure reward table of a task whose agents arrive independently
/// with probabilities `p` at costs `c`, reward `r[count]`.
pub fn task_table(p: &[f64], c: &[f64], r: &[f64]) -> Vec<f64> {
    let k = p.len();
    (0..1usize << k)
        .map(|mask| {
            let members: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
            let probs: Vec<f64> = members.iter().map(|&j| p[j]).collect();
            let counts = enumerate_counts(&probs);
            let reward: f64 = counts.iter().enumerate().map(|(i, q)| r[i] * q).sum();
            reward - members.iter().map(|&j| c[j]).sum::<f64>()
        })
        .collect()
}

/// The four-agent, three-task topology with one agent in every task:
/// scopes `{0, 3}`, `{0, 1}`, `{0, 2, 3}`; task-like random tables.
pub fn random_fig2_graph<R: Rng>(rng: &mut R) -> FactorGraph {
    let scopes = [vec![0, 3], vec![0, 1], vec![0, 2, 3]];
    let factors = scopes
        .iter()
        .enumerate()
        .map(|(k, scope)| {
            let p: Vec<f64> = scope.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let c: Vec<f64> = scope.iter().map(|_| rng.gen_range(0.0..4.0)).collect();
            let mut r: Vec<f64> = vec![0.0];
            for _ in 0..scope.len() {
                let last = *r.last().unwrap();
                r.push((last + rng.gen_range(-2.0..12.0)).max(0.0));
            }
            Factor { task: k + 1, scope: scope.clone(), table: task_table(&p, &c, &r) }
        })
        .collect();
    FactorGraph::new(4, factors).expect("valid graph")
}

// ------------------------------------------------------- local conflicts

pub struct ConflictCase {
    pub spec: GridWorldSpec,
    pub belief: Belief,
    pub execution: FrozenMdp,
    pub agents: Vec<LocalAgent>,
    pub t: usize,
}

/// Two agents within distance 2 on a random grid of at most 5x5, each
/// (usually) assigned to a random goal.
pub fn random_conflict<R: Rng>(rng: &mut R) -> ConflictCase {
    loop {
        let w = rng.gen_range(2..=5);
        let h = rng.gen_range(2..=5);
        let mut spec = GridWorldSpec::new(w, h);
        spec.slip_prob = rng.gen_range(0.0..0.2);
        let cells: Vec<Cell> = (0..w * h).map(|s| spec.cell_of(s)).collect();
        for &c in &cells {
            if rng.gen_bool(0.12) {
                spec.static_obstacles.push(c);
            }
        }
        let mut free: Vec<Cell> = cells.iter().copied().filter(|c| !spec.is_static_obstacle(*c)).collect();
        if free.len() < 3 {
            continue;
        }
        free.shuffle(rng);
        let a0 = free[0];
        let Some(&a1) = free[1..].iter().find(|c| (1..=2).contains(&c.manhattan(a0))) else {
            continue;
        };
        if rng.gen_bool(0.5) {
            if let Some(&u) = free.iter().find(|c| **c != a0 && **c != a1) {
                spec.uncertain_cells.push(u);
            }
        }
        let belief = if spec.uncertain_cells.is_empty() {
            Belief::uniform(1)
        } else {
            let p = rng.gen_range(0.1..0.9);
            Belief::new(vec![1.0 - p, p]).unwrap()
        };
        let planning = build_grid_momdp(&spec, TransitionMode::Planning).unwrap();
        let exec_model = build_grid_momdp(&spec, TransitionMode::Execution).unwrap();
        let execution = FrozenMdp::new(&exec_model, &belief).unwrap();
        let goal_cells: Vec<Cell> = free.iter().copied().filter(|c| spec.uncertain_index(*c).is_none()).collect();
        let shared_goal = *goal_cells.choose(rng).unwrap();
        let same = rng.gen_bool(0.4);
        let t = rng.gen_range(0..3);
        let agents = [a0, a1]
            .iter()
            .enumerate()
            .map(|(id, &c)| {
                let assignment = rng.gen_bool(0.8).then(|| {
                    let goal = if same { shared_goal } else { *goal_cells.choose(rng).unwrap() };
                    let t_end = t + rng.gen_range(1..=6);
                    let tables = solve_values(&planning, &[spec.state_of(goal)], t_end, &belief).unwrap();
                    LocalAssignment {
                        task: if same { 0 } else { id },
                        delta_r: rng.gen_range(0.0..20.0),
                        tables: Arc::new(tables),
                        t_start: 0,
                        t_end,
                    }
                });
                LocalAgent { id, state: spec.state_of(c), assignment }
            })
            .collect();
        return ConflictCase { spec, belief, execution, agents, t };
    }
}

type Dist = Vec<(usize, f64)>;

fn propagate(model: &FrozenMdp, dist: &Dist, a: usize) -> (Dist, f64) {
    let mut out: Dist = Vec::new();
    let mut cost = 0.0;
    for &(s, p) in dist {
        for x in model.successors(s, a) {
            cost += p * x.prob * x.cost;
            match out.iter().position(|e| e.0 >= x.state) {
                Some(i) if out[i].0 == x.state => out[i].1 += p * x.prob,
                Some(i) => out.insert(i, (x.state, p * x.prob)),
                None => out.push((x.state, p * x.prob)),
            }
        }
    }
    (out, cost)
}

/// Value of one joint action sequence `seq[depth][agent]`, or `None` if
/// any step puts two agents' supports on a common state.
pub fn sequence_value(case: &ConflictCase, seq: &[Vec<usize>]) -> Option<f64> {
    let n = case.agents.len();
    let depth_total = seq.len();
    let mut dists: Vec<Dist> = case.agents.iter().map(|a| vec![(a.state, 1.0)]).collect();
    let mut reward = 0.0;
    for (d, joint) in seq.iter().enumerate() {
        let depth = d + 1;
        let stepped: Vec<(Dist, f64)> = (0..n).map(|i| propagate(&case.execution, &dists[i], joint[i])).collect();
        for i in 0..n {
            for j in i + 1..n {
                if stepped[i].0.iter().any(|(s, _)| stepped[j].0.iter().any(|(u, _)| u == s)) {
                    return None;
                }
            }
        }
        for (_, c) in &stepped {
            reward += -c;
        }
        for (agent, (dist, _)) in case.agents.iter().zip(&stepped) {
            if let Some(x) = &agent.assignment {
                let credit = depth_total.min(x.t_end.saturating_sub(case.t));
                if credit == depth {
                    let local = case.t + depth - x.t_start;
                    reward += dist
                        .iter()
                        .map(|&(s, p)| {
                            p * (x.tables.cost_to_go(local, s) + x.delta_r * x.tables.reach(local, s))
                        })
                        .sum::<f64>();
                }
            }
        }
        dists = stepped.into_iter().map(|(d, _)| d).collect();
    }
    Some(reward)
}

/// Best value over all `5^(n * depth)` joint action sequences.
pub fn exhaustive_dp(case: &ConflictCase, depth: usize) -> Option<(f64, Vec<Vec<usize>>)> {
    let n = case.agents.len();
    let na = case.execution.num_actions();
    let total = na.pow((n * depth) as u32);
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for code in 0..total {
        // most significant digit = first action of agent 0
        let mut digits = vec![0; n * depth];
        let mut c = code;
        for k in (0..n * depth).rev() {
            digits[k] = c % na;
            c /= na;
        }
        let seq: Vec<Vec<usize>> = digits.chunks(n).map(<[usize]>::to_vec).collect();
        if let Some(v) = sequence_value(case, &seq) {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, seq));
            }
        }
    }
    best
}

// ------------------------------------------------------------- scenarios

/// Random closed-loop scenario with up to `max_agents` agents and a task
/// generator.
pub fn random_scenario<R: Rng>(rng: &mut R, seed: u64, max_agents: usize, steps: usize) -> ScenarioConfig {
    let w = rng.gen_range(5..=8);
    let h = rng.gen_range(5..=8);
    let mut cells: Vec<Cell> = (0..w * h).map(|s| Cell::new(s % w, s / w)).collect();
    cells.shuffle(rng);
    let n_obstacles = (w * h) / 10;
    let obstacles: Vec<Cell> = cells[..n_obstacles].to_vec();
    let n_uncertain = rng.gen_range(0..=2);
    let uncertain: Vec<UncertainCell> = cells[n_obstacles..n_obstacles + n_uncertain]
        .iter()
        .map(|&cell| UncertainCell { cell, prior: rng.gen_range(0.1..0.9), occupied: None })
        .collect();
    let rest = &cells[n_obstacles + n_uncertain..];
    let n_agents = rng.gen_range(2..=max_agents);
    let agents = rest[..n_agents].iter().map(|&start| AgentConfig { start }).collect();
    ScenarioConfig {
        seed,
        grid: GridConfig { width: w, height: h, obstacles, uncertain },
        agents,
        tasks: Vec::new(),
        generator: Some(GeneratorConfig {
            count: 1000,
            active: rng.gen_range(1..=3),
            rewards: vec![0.0, 10.0, 15.0, 18.0, 20.0],
            horizon_min: 5,
            horizon_max: 9,
        }),
        params: Params {
            max_steps: steps,
            stop_when_done: false,
            forbid_swaps: rng.gen_bool(0.3),
            ..Params::default()
        },
    }
}
