//! Task allocation by max-sum message passing on the bipartite factor
//! graph of commitment variables (one per agent) and task factors.
//!
//! A factor only depends on *which* of its candidates commit to it, so its
//! table is indexed by a bitmask over its scope (bit `j` set when
//! `scope[j]` commits). Messages still live on each variable's full
//! domain: index 0 is "no task", index `d >= 1` is the `d`-th factor the
//! variable belongs to, in task id order.

use serde::{Deserialize, Serialize};

use crate::task::{candidate_filter, expected_pure_reward, AllocationProblem, Commitment};
use crate::{AgentId, Error, Result, TaskId};

/// Messages are considered unchanged below this sup-norm difference.
pub const CONVERGENCE_TOL: f64 = 1e-9;
/// Decoding prefers the earlier domain value unless a later one is better
/// by more than this.
pub const DECODE_TOL: f64 = 1e-9;
/// Factor tables hold `2^scope` entries.
pub const MAX_SCOPE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub task: TaskId,
    /// Sorted, distinct agent ids.
    pub scope: Vec<AgentId>,
    /// `F_k` indexed by the commit bitmask over `scope`.
    pub table: Vec<f64>,
}

impl Factor {
    pub fn value(&self, assignment: &[Commitment]) -> f64 {
        let mask = self
            .scope
            .iter()
            .enumerate()
            .filter(|(_, a)| assignment[**a] == Some(self.task))
            .fold(0usize, |m, (j, _)| m | 1 << j);
        self.table[mask]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    num_vars: usize,
    factors: Vec<Factor>,
    /// Per variable, the factors it belongs to (ascending task id).
    domains: Vec<Vec<usize>>,
}

/// An edge between factor `factor` and the variable at `slot` in its scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub factor: usize,
    pub slot: usize,
}

impl FactorGraph {
    pub fn new(num_vars: usize, mut factors: Vec<Factor>) -> Result<Self> {
        factors.sort_by_key(|f| f.task);
        for (k, f) in factors.iter().enumerate() {
            if k > 0 && factors[k - 1].task == f.task {
                return Err(Error::MalformedTask(format!("task {} has two factors", f.task)));
            }
            if f.scope.len() > MAX_SCOPE {
                return Err(Error::MalformedTask(format!(
                    "task {} has {} candidates (limit {MAX_SCOPE})",
                    f.task,
                    f.scope.len()
                )));
            }
            if f.scope.windows(2).any(|w| w[0] >= w[1]) || f.scope.iter().any(|a| *a >= num_vars) {
                return Err(Error::MalformedTask(format!("task {} has a bad scope", f.task)));
            }
            if f.table.len() != 1 << f.scope.len() {
                return Err(Error::MalformedTask(format!("task {} table size mismatch", f.task)));
            }
        }
        let mut domains = vec![Vec::new(); num_vars];
        for (k, f) in factors.iter().enumerate() {
            for &a in &f.scope {
                domains[a].push(k);
            }
        }
        Ok(FactorGraph { num_vars, factors, domains })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Size of variable `var`'s domain, including "no task".
    pub fn domain_size(&self, var: AgentId) -> usize {
        self.domains[var].len() + 1
    }

    /// Factors adjacent to `var`.
    pub fn neighbors(&self, var: AgentId) -> &[usize] {
        &self.domains[var]
    }

    pub fn degree(&self, var: AgentId) -> usize {
        self.domains[var].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(factor, f)| (0..f.scope.len()).map(move |slot| Edge { factor, slot }))
    }

    pub fn num_edges(&self) -> usize {
        self.factors.iter().map(|f| f.scope.len()).sum()
    }

    /// Domain index of `factor` for the variable at `slot`.
    fn domain_index(&self, edge: Edge) -> usize {
        let var = self.factors[edge.factor].scope[edge.slot];
        1 + self.domains[var]
            .iter()
            .position(|k| *k == edge.factor)
            .expect("factor is in its variables' domains")
    }

    /// Commitment named by domain index `d` of `var`.
    pub fn commitment(&self, var: AgentId, d: usize) -> Commitment {
        (d > 0).then(|| self.factors[self.domains[var][d - 1]].task)
    }

    /// `Σ_k F_k` for a full assignment.
    pub fn objective(&self, assignment: &[Commitment]) -> f64 {
        self.factors.iter().map(|f| f.value(assignment)).sum()
    }

    /// Components of the bipartite graph, counting isolated variables.
    fn components(&self) -> usize {
        let n = self.num_vars + self.factors.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for (k, f) in self.factors.iter().enumerate() {
            for &a in &f.scope {
                let (x, y) = (find(&mut parent, a), find(&mut parent, self.num_vars + k));
                parent[x] = y;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }

    pub fn is_acyclic(&self) -> bool {
        let nodes = self.num_vars + self.factors.len();
        self.num_edges() + self.components() == nodes
    }

    pub fn num_components(&self) -> usize {
        self.components()
    }

    /// Longest shortest path, in edges, over all connected node pairs.
    pub fn diameter(&self) -> usize {
        let nv = self.num_vars;
        let n = nv + self.factors.len();
        let neighbors = |x: usize| -> Vec<usize> {
            if x < nv {
                self.domains[x].iter().map(|k| nv + k).collect()
            } else {
                self.factors[x - nv].scope.clone()
            }
        };
        let mut best = 0;
        for start in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(x) = queue.pop_front() {
                for y in neighbors(x) {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        best = best.max(dist[y]);
                        queue.push_back(y);
                    }
                }
            }
        }
        best
    }
}

/// Message storage: `q[k][j]` is the message from `scope[j]` to factor `k`
/// and `r[k][j]` the reverse, both over the variable's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTable {
    q: Vec<Vec<Vec<f64>>>,
    r: Vec<Vec<Vec<f64>>>,
    alpha: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub rounds: Vec<RoundStats>,
}

/// Per-round trace: largest message change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub q_delta: f64,
    pub r_delta: f64,
}

impl MessageTable {
    /// Zero-initialized messages for `graph`.
    pub fn new(graph: &FactorGraph) -> Self {
        let shape = |graph: &FactorGraph| -> Vec<Vec<Vec<f64>>> {
            graph
                .factors
                .iter()
                .map(|f| f.scope.iter().map(|&a| vec![0.0; graph.domain_size(a)]).collect())
                .collect()
        };
        MessageTable {
            q: shape(graph),
            r: shape(graph),
            alpha: graph.factors.iter().map(|f| vec![0.0; f.scope.len()]).collect(),
            iterations: 0,
            converged: false,
            rounds: Vec::new(),
        }
    }

    pub fn q(&self, edge: Edge) -> &[f64] {
        &self.q[edge.factor][edge.slot]
    }

    pub fn r(&self, edge: Edge) -> &[f64] {
        &self.r[edge.factor][edge.slot]
    }

    pub fn alpha(&self, edge: Edge) -> f64 {
        self.alpha[edge.factor][edge.slot]
    }

    pub fn set_q(&mut self, edge: Edge, msg: Vec<f64>) {
        self.q[edge.factor][edge.slot] = msg;
    }

    pub fn set_r(&mut self, edge: Edge, msg: Vec<f64>) {
        self.r[edge.factor][edge.slot] = msg;
    }

    /// The `r` messages addressed to variable `var`, and nothing else.
    pub fn variable_inbox(&self, graph: &FactorGraph, var: AgentId) -> VariableInbox<'_> {
        let incoming = graph.domains[var]
            .iter()
            .map(|&k| {
                let slot = graph.factors[k].scope.binary_search(&var).expect("var in scope");
                (k, self.r[k][slot].as_slice())
            })
            .collect();
        VariableInbox { var, incoming }
    }

    /// The `q` messages addressed to factor `factor`, and nothing else.
    pub fn factor_inbox(&self, factor: usize) -> FactorInbox<'_> {
        FactorInbox {
            factor,
            incoming: self.q[factor].iter().map(Vec::as_slice).collect(),
        }
    }
}

/// What variable `var` can see: `r_{k -> var}` for each adjacent factor.
#[derive(Debug, Clone)]
pub struct VariableInbox<'a> {
    var: AgentId,
    incoming: Vec<(usize, &'a [f64])>,
}

impl<'a> VariableInbox<'a> {
    pub fn new(var: AgentId, incoming: Vec<(usize, &'a [f64])>) -> Self {
        VariableInbox { var, incoming }
    }
}

/// What factor `factor` can see: `q_{scope[j] -> factor}` by slot.
#[derive(Debug, Clone)]
pub struct FactorInbox<'a> {
    factor: usize,
    incoming: Vec<&'a [f64]>,
}

impl<'a> FactorInbox<'a> {
    pub fn new(factor: usize, incoming: Vec<&'a [f64]>) -> Self {
        FactorInbox { factor, incoming }
    }
}

/// `q_{i -> k}(m) = α_ik + Σ_{n ≠ k} r_{n -> i}(m)` with `α_ik` chosen so
/// the message sums to zero. Returns the message and `α_ik`.
pub fn q_update(graph: &FactorGraph, inbox: &VariableInbox<'_>, edge: Edge) -> (Vec<f64>, f64) {
    let var = graph.factors[edge.factor].scope[edge.slot];
    debug_assert_eq!(var, inbox.var);
    let mut msg = vec![0.0; graph.domain_size(var)];
    for &(k, r) in &inbox.incoming {
        if k == edge.factor {
            continue;
        }
        for (m, v) in msg.iter_mut().zip(r) {
            *m += v;
        }
    }
    let alpha = -msg.iter().sum::<f64>() / msg.len() as f64;
    msg.iter_mut().for_each(|m| *m += alpha);
    (msg, alpha)
}

/// `r_{k -> i}(m) = max over the other scope variables of
/// [F_k + Σ_{n ≠ i} q_{n -> k}(m^n)]`.
pub fn r_update(graph: &FactorGraph, inbox: &FactorInbox<'_>, edge: Edge) -> Vec<f64> {
    debug_assert_eq!(edge.factor, inbox.factor);
    let factor = &graph.factors[edge.factor];
    let n = factor.scope.len();

    // each other variable either commits here or takes its best other value
    let mut commit = vec![0.0; n];
    let mut decline = vec![0.0; n];
    for slot in 0..n {
        if slot == edge.slot {
            continue;
        }
        let d_here = graph.domain_index(Edge { factor: edge.factor, slot });
        let q = inbox.incoming[slot];
        commit[slot] = q[d_here];
        decline[slot] = q
            .iter()
            .enumerate()
            .filter(|(d, _)| *d != d_here)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
    }

    let mut best = [f64::NEG_INFINITY; 2];
    for mask in 0..1usize << n {
        let own = mask >> edge.slot & 1;
        let mut total = factor.table[mask];
        for slot in (0..n).filter(|s| *s != edge.slot) {
            total += if mask >> slot & 1 == 1 { commit[slot] } else { decline[slot] };
        }
        if total > best[own] {
            best[own] = total;
        }
    }

    let var = factor.scope[edge.slot];
    let d_here = graph.domain_index(edge);
    (0..graph.domain_size(var))
        .map(|d| if d == d_here { best[1] } else { best[0] })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSumConfig {
    pub max_iter: usize,
    /// Weight of the previous message when blending, in `[0, 1)`.
    pub damping: f64,
}

impl Default for MaxSumConfig {
    fn default() -> Self {
        MaxSumConfig { max_iter: 50, damping: 0.0 }
    }
}

fn sup_delta(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn blend(old: &[f64], mut new: Vec<f64>, damping: f64) -> Vec<f64> {
    if damping > 0.0 {
        for (n, o) in new.iter_mut().zip(old) {
            *n = (1.0 - damping) * *n + damping * o;
        }
    }
    new
}

/// Synchronous rounds: every `q` from the previous `r`, then every `r`
/// from the new `q`, until nothing moves or `max_iter` rounds ran.
pub fn run_maxsum(graph: &FactorGraph, config: &MaxSumConfig) -> MessageTable {
    let mut messages = MessageTable::new(graph);
    let edges: Vec<Edge> = graph.edges().collect();
    if edges.is_empty() {
        messages.converged = true;
        return messages;
    }
    for round in 1..=config.max_iter.max(1) {
        let mut q_delta = 0.0f64;
        let mut new_q = Vec::with_capacity(edges.len());
        for &edge in &edges {
            let var = graph.factors[edge.factor].scope[edge.slot];
            let inbox = messages.variable_inbox(graph, var);
            let (msg, alpha) = q_update(graph, &inbox, edge);
            let msg = blend(messages.q(edge), msg, config.damping);
            q_delta = q_delta.max(sup_delta(messages.q(edge), &msg));
            new_q.push((edge, msg, alpha));
        }
        for (edge, msg, alpha) in new_q {
            messages.set_q(edge, msg);
            messages.alpha[edge.factor][edge.slot] = alpha;
        }

        let mut r_delta = 0.0f64;
        let mut new_r = Vec::with_capacity(edges.len());
        for &edge in &edges {
            let inbox = messages.factor_inbox(edge.factor);
            let msg = blend(messages.r(edge), r_update(graph, &inbox, edge), config.damping);
            r_delta = r_delta.max(sup_delta(messages.r(edge), &msg));
            new_r.push((edge, msg));
        }
        for (edge, msg) in new_r {
            messages.set_r(edge, msg);
        }

        messages.iterations = round;
        messages.rounds.push(RoundStats { round, q_delta, r_delta });
        log::trace!("max-sum round {round}: |dq| = {q_delta:.3e}, |dr| = {r_delta:.3e}");
        if q_delta < CONVERGENCE_TOL && r_delta < CONVERGENCE_TOL {
            messages.converged = true;
            break;
        }
    }
    messages
}

/// `m^i = argmax_m Σ_k r_{k -> i}(m)`, preferring "no task" and then the
/// lowest task id on ties.
pub fn decode_assignment(graph: &FactorGraph, messages: &MessageTable) -> Vec<Commitment> {
    (0..graph.num_vars)
        .map(|var| {
            let inbox = messages.variable_inbox(graph, var);
            let mut score = vec![0.0; graph.domain_size(var)];
            for (_, r) in &inbox.incoming {
                for (s, v) in score.iter_mut().zip(r.iter()) {
                    *s += v;
                }
            }
            let mut best = 0;
            for d in 1..score.len() {
                if score[d] > score[best] + DECODE_TOL {
                    best = d;
                }
            }
            graph.commitment(var, best)
        })
        .collect()
}

/// Factor graph for one allocation step: one factor per task that still
/// has candidates after filtering, tabulated with the expected pure reward.
pub fn build_factor_graph(problem: &AllocationProblem<'_>) -> Result<FactorGraph> {
    problem.check()?;
    let agents: Vec<AgentId> = (0..problem.num_agents()).collect();
    let mut factors = Vec::new();
    for task in problem.tasks {
        let mut scope = candidate_filter(task, &agents, problem.states, problem.time, problem.filter)?;
        scope.sort_unstable();
        if scope.is_empty() {
            continue;
        }
        if scope.len() > MAX_SCOPE {
            return Err(Error::MalformedTask(format!(
                "task {} has {} candidates (limit {MAX_SCOPE})",
                task.id,
                scope.len()
            )));
        }
        let table = (0..1usize << scope.len())
            .map(|mask| {
                let committed: Vec<AgentId> = scope
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| mask >> j & 1 == 1)
                    .map(|(_, a)| *a)
                    .collect();
                expected_pure_reward(task, &committed, problem.states, problem.time)
                    .map(|r| r.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        factors.push(Factor { task: task.id, scope, table });
    }
    FactorGraph::new(problem.num_agents(), factors)
}

/// Result of one allocation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub commitments: Vec<Commitment>,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ_k F_k` of the decoded assignment.
    pub objective: f64,
    pub rounds: Vec<RoundStats>,
}

pub fn allocate(problem: &AllocationProblem<'_>, config: &MaxSumConfig) -> Result<Allocation> {
    let graph = build_factor_graph(problem)?;
    let messages = run_maxsum(&graph, config);
    let commitments = decode_assignment(&graph, &messages);
    if !messages.converged {
        log::debug!(
            "max-sum stopped after {} rounds without converging; decoding anyway",
            messages.iterations
        );
    }
    Ok(Allocation {
        objective: graph.objective(&commitments),
        commitments,
        iterations: messages.iterations,
        converged: messages.converged,
        rounds: messages.rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factor(task: TaskId, scope: Vec<AgentId>, table: Vec<f64>) -> Factor {
        Factor { task, scope, table }
    }

    fn fig2(tables: [Vec<f64>; 3]) -> FactorGraph {
        let [a, b, c] = tables;
        FactorGraph::new(
            4,
            vec![factor(1, vec![0, 3], a), factor(2, vec![0, 1], b), factor(3, vec![0, 2, 3], c)],
        )
        .unwrap()
    }

    #[test]
    fn fig2_topology() {
        let g = fig2([vec![0.0; 4], vec![0.0; 4], vec![0.0; 8]]);
        assert_eq!(g.degree(0), 3);
        assert_eq!(g.domain_size(0), 4);
        assert!(!g.is_acyclic());
        assert_eq!(g.num_components(), 1);
    }

    #[test]
    fn single_edge_is_a_path() {
        let g = FactorGraph::new(1, vec![factor(0, vec![0], vec![0.0, 1.0])]).unwrap();
        assert!(g.is_acyclic());
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.diameter(), 1);
    }

    #[test]
    fn disjoint_tasks_split() {
        let g = FactorGraph::new(
            2,
            vec![factor(0, vec![0], vec![0.0, 1.0]), factor(1, vec![1], vec![0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(g.num_components(), 2);
        assert!(g.is_acyclic());
    }

    #[test]
    fn leaf_variable_sends_zero() {
        let g = FactorGraph::new(1, vec![factor(0, vec![0], vec![0.0, 3.0])]).unwrap();
        let mut m = MessageTable::new(&g);
        let e = Edge { factor: 0, slot: 0 };
        m.set_r(e, vec![5.0, -1.0]);
        let (q, _) = q_update(&g, &m.variable_inbox(&g, 0), e);
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn degree_two_variable_forwards_other_message() {
        let g = FactorGraph::new(
            1,
            vec![factor(0, vec![0], vec![0.0, 1.0]), factor(1, vec![0], vec![0.0, 2.0])],
        )
        .unwrap();
        let mut m = MessageTable::new(&g);
        m.set_r(Edge { factor: 1, slot: 0 }, vec![1.0, 2.0, 6.0]);
        let (q, alpha) = q_update(&g, &m.variable_inbox(&g, 0), Edge { factor: 0, slot: 0 });
        assert_eq!(alpha, -3.0);
        assert_eq!(q, vec![-2.0, -1.0, 3.0]);
        assert!(q.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn single_variable_factor_returns_table() {
        let g = FactorGraph::new(1, vec![factor(0, vec![0], vec![0.5, 3.0])]).unwrap();
        let m = MessageTable::new(&g);
        let r = r_update(&g, &m.factor_inbox(0), Edge { factor: 0, slot: 0 });
        assert_eq!(r, vec![0.5, 3.0]);
    }

    #[test]
    fn two_variable_factor_max() {
        // F(mask): 00 -> 0, 01 (var0) -> 4, 10 (var1) -> 3, 11 -> 5
        let g = FactorGraph::new(2, vec![factor(0, vec![0, 1], vec![0.0, 4.0, 3.0, 5.0])]).unwrap();
        let mut m = MessageTable::new(&g);
        m.set_q(Edge { factor: 0, slot: 1 }, vec![1.0, -1.0]);
        let r = r_update(&g, &m.factor_inbox(0), Edge { factor: 0, slot: 0 });
        // var0 out: max(0 + 1, 3 - 1) = 2; var0 in: max(4 + 1, 5 - 1) = 5
        assert_eq!(r, vec![2.0, 5.0]);
    }

    #[test]
    fn empty_graph_converges_immediately() {
        let g = FactorGraph::new(3, vec![]).unwrap();
        let m = run_maxsum(&g, &MaxSumConfig::default());
        assert!(m.converged);
        assert_eq!(m.iterations, 0);
        assert_eq!(decode_assignment(&g, &m), vec![None, None, None]);
    }

    #[test]
    fn single_agent_commits_when_profitable() {
        let g = FactorGraph::new(1, vec![factor(4, vec![0], vec![0.0, 38.0])]).unwrap();
        let m = run_maxsum(&g, &MaxSumConfig::default());
        assert!(m.converged);
        assert_eq!(decode_assignment(&g, &m), vec![Some(4)]);
    }

    #[test]
    fn zero_messages_decode_to_idle() {
        let g = fig2([vec![0.0; 4], vec![0.0; 4], vec![0.0; 8]]);
        let m = MessageTable::new(&g);
        assert_eq!(decode_assignment(&g, &m), vec![None; 4]);
    }

    #[test]
    fn bad_graphs_rejected() {
        assert!(FactorGraph::new(1, vec![factor(0, vec![0], vec![0.0])]).is_err());
        assert!(FactorGraph::new(1, vec![factor(0, vec![1], vec![0.0, 1.0])]).is_err());
        assert!(FactorGraph::new(
            2,
            vec![factor(0, vec![1, 0], vec![0.0; 4])]
        )
        .is_err());
    }
}
