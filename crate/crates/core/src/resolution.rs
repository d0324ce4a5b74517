//! Local conflict resolution. Agents whose current states are adjacent
//! (they could land on the same state in one step) are grouped into
//! connected components; each multi-agent component plans its next joint
//! action with a depth-limited forward dynamic program over joint actions,
//! trimming colliding and dominated nodes.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::momdp::{adjacent_states, MomdpModel};
use crate::values::{FrozenMdp, ValueTables};
use crate::{ActionId, AgentId, Error, Result, StateId, TaskId};

pub const DEFAULT_LOOKAHEAD: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    pub edges: Vec<(AgentId, AgentId)>,
    /// Connected components, each sorted, ordered by lowest member.
    pub components: Vec<Vec<AgentId>>,
}

pub fn build_adjacency_graph(states: &[StateId], model: &MomdpModel) -> AdjacencyGraph {
    let n = states.len();
    let mut edges = Vec::new();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if adjacent_states(model, states[i], states[j]) {
                edges.push((i, j));
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<AgentId>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    AdjacencyGraph { edges, components: groups }
}

/// Connected components of the adjacency graph over agents.
pub fn build_adjacency_partition(states: &[StateId], model: &MomdpModel) -> Vec<Vec<AgentId>> {
    build_adjacency_graph(states, model).components
}

/// The component member that runs the search and shares its result.
pub fn select_host(component: &[AgentId]) -> Option<AgentId> {
    component.iter().copied().min()
}

/// What an assigned agent brings to the search.
#[derive(Debug, Clone)]
pub struct LocalAssignment {
    pub task: TaskId,
    /// Marginal reward of this agent arriving.
    pub delta_r: f64,
    pub tables: Arc<ValueTables>,
    /// Absolute time of the tables' index 0.
    pub t_start: usize,
    pub t_end: usize,
}

#[derive(Debug, Clone)]
pub struct LocalAgent {
    pub id: AgentId,
    pub state: StateId,
    pub assignment: Option<LocalAssignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub lookahead: usize,
    /// Also reject two agents exchanging states in one step.
    pub forbid_swaps: bool,
    /// Drop nodes beaten by another node with the same joint distribution.
    pub trim_dominated: bool,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig { lookahead: DEFAULT_LOOKAHEAD, forbid_swaps: false, trim_dominated: true }
    }
}

/// Node counts per depth, before and after trimming.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub generated: Vec<usize>,
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPlan {
    /// First joint action, one entry per input agent in input order.
    pub actions: Vec<(AgentId, ActionId)>,
    /// Value of the best leaf.
    pub value: f64,
    /// Full action sequence to the best leaf, `sequence[depth][agent]`.
    pub sequence: Vec<Vec<ActionId>>,
    pub stats: TreeStats,
}

/// Per-agent state distribution, sorted by state.
pub type Dist = Vec<(StateId, f64)>;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub dists: Vec<Dist>,
    pub reward: f64,
    /// Joint actions so far, depth-major.
    pub seq: Vec<ActionId>,
}

struct AgentView<'a> {
    state: StateId,
    /// `(delta_r, tables, t_start, credit depth)`
    credit: Option<(f64, &'a ValueTables, usize, usize)>,
}

/// Propagates `dist` through action `a`; returns the new distribution and
/// its expected cost.
pub fn step_dist(model: &FrozenMdp, dist: &[(StateId, f64)], a: ActionId) -> (Dist, f64) {
    let mut out: Dist = Vec::with_capacity(dist.len() + 1);
    let mut cost = 0.0;
    for &(s, p) in dist {
        for x in model.successors(s, a) {
            cost += p * x.prob * x.cost;
            match out.binary_search_by_key(&x.state, |e| e.0) {
                Ok(i) => out[i].1 += p * x.prob,
                Err(i) => out.insert(i, (x.state, p * x.prob)),
            }
        }
    }
    (out, cost)
}

pub fn supports_overlap(a: &[(StateId, f64)], b: &[(StateId, f64)]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn in_support(d: &[(StateId, f64)], s: StateId) -> bool {
    d.binary_search_by_key(&s, |e| e.0).is_ok()
}

/// Could agents `i` and `j` have exchanged states?
pub fn may_swap(old_i: &Dist, new_i: &Dist, old_j: &Dist, new_j: &Dist) -> bool {
    old_i.iter().any(|&(x, _)| {
        in_support(new_j, x) && old_j.iter().any(|&(y, _)| y != x && in_support(new_i, y))
    })
}

/// `V_J + δR · V_G` in expectation over `dist` at absolute time `t`.
pub fn terminal_value(
    delta_r: f64,
    tables: &ValueTables,
    t_start: usize,
    t: usize,
    dist: &[(StateId, f64)],
) -> f64 {
    let local = t - t_start;
    dist.iter()
        .map(|&(s, p)| p * (tables.cost_to_go(local, s) + delta_r * tables.reach(local, s)))
        .sum()
}

/// Depth at which agent's terminal credit is taken: the look-ahead, or
/// the task end if that comes first.
pub fn credit_depth(t: usize, lookahead: usize, t_end: usize) -> usize {
    lookahead.min(t_end.saturating_sub(t))
}

/// Forward DP over joint actions for one component. `model` is the
/// execution model averaged under the current (frozen) belief.
pub fn forward_dp(
    agents: &[LocalAgent],
    model: &FrozenMdp,
    t: usize,
    config: &LocalConfig,
) -> Result<LocalPlan> {
    search(agents, model, t, config, None)
}

/// Same as [`forward_dp`], also returning every node kept after trimming,
/// one layer per depth (the last layer holds all safe leaves).
pub fn forward_dp_with_layers(
    agents: &[LocalAgent],
    model: &FrozenMdp,
    t: usize,
    config: &LocalConfig,
) -> Result<(LocalPlan, Vec<Vec<SearchNode>>)> {
    let mut layers = Vec::new();
    let plan = search(agents, model, t, config, Some(&mut layers))?;
    Ok((plan, layers))
}

fn search(
    agents: &[LocalAgent],
    model: &FrozenMdp,
    t: usize,
    config: &LocalConfig,
    mut layers: Option<&mut Vec<Vec<SearchNode>>>,
) -> Result<LocalPlan> {
    let n = agents.len();
    if n == 0 {
        return Ok(LocalPlan {
            actions: Vec::new(),
            value: 0.0,
            sequence: Vec::new(),
            stats: TreeStats::default(),
        });
    }
    if config.lookahead == 0 {
        return Err(Error::ZeroHorizon);
    }
    for i in 0..n {
        for j in i + 1..n {
            if agents[i].state == agents[j].state {
                return Err(Error::SharedStart(agents[i].id, agents[j].id));
            }
        }
    }
    let views: Vec<AgentView<'_>> = agents
        .iter()
        .map(|a| AgentView {
            state: a.state,
            credit: a.assignment.as_ref().and_then(|x| {
                let depth = credit_depth(t, config.lookahead, x.t_end);
                (depth > 0).then_some((x.delta_r, x.tables.as_ref(), x.t_start, depth))
            }),
        })
        .collect();

    let na = model.num_actions();
    let mut layer = vec![SearchNode {
        dists: views.iter().map(|v| vec![(v.state, 1.0)]).collect(),
        reward: 0.0,
        seq: Vec::new(),
    }];
    let mut stats = TreeStats::default();
    let mut best: Option<SearchNode> = None;
    let mut key_buf: Vec<u64> = Vec::new();
    let mut leaves = Vec::new();

    for depth in 1..=config.lookahead {
        let last = depth == config.lookahead;
        let mut next: Vec<SearchNode> = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut generated = 0usize;
        let mut kept = 0usize;

        for node in &layer {
            // per-agent options, minus actions that reach the same
            // distribution as an earlier, no more expensive one
            let options: Vec<Vec<(ActionId, Dist, f64)>> = node
                .dists
                .iter()
                .map(|d| {
                    let all: Vec<(ActionId, Dist, f64)> = (0..na)
                        .map(|a| {
                            let (nd, c) = step_dist(model, d, a);
                            (a, nd, c)
                        })
                        .collect();
                    all.iter()
                        .filter(|(a, nd, c)| {
                            !all.iter().any(|(b, od, oc)| {
                                od == nd && (oc < c || (oc == c && b < a))
                            })
                        })
                        .cloned()
                        .collect()
                })
                .collect();

            let mut pick = vec![0usize; n];
            'product: loop {
                generated += 1;
                let chosen: Vec<&(ActionId, Dist, f64)> =
                    (0..n).map(|i| &options[i][pick[i]]).collect();
                let mut safe = true;
                'pairs: for i in 0..n {
                    for j in i + 1..n {
                        if supports_overlap(&chosen[i].1, &chosen[j].1)
                            || (config.forbid_swaps
                                && may_swap(&node.dists[i], &chosen[i].1, &node.dists[j], &chosen[j].1))
                        {
                            safe = false;
                            break 'pairs;
                        }
                    }
                }
                if safe {
                    kept += 1;
                    let mut reward = node.reward;
                    for c in &chosen {
                        reward += -c.2;
                    }
                    for (v, c) in views.iter().zip(&chosen) {
                        if let Some((delta_r, tables, t_start, credit)) = v.credit {
                            if credit == depth {
                                reward += terminal_value(delta_r, tables, t_start, t + depth, &c.1);
                            }
                        }
                    }
                    let better = |old: &SearchNode, seq_tail: &[&(ActionId, Dist, f64)]| {
                        reward > old.reward
                            || (reward == old.reward && {
                                let new_seq = node.seq.iter().copied().chain(seq_tail.iter().map(|c| c.0));
                                new_seq.lt(old.seq.iter().copied())
                            })
                    };
                    if last {
                        if layers.is_some() {
                            leaves.push(make_node(node, &chosen, reward));
                        }
                        if best.as_ref().is_none_or(|b| better(b, &chosen)) {
                            best = Some(make_node(node, &chosen, reward));
                        }
                    } else if config.trim_dominated {
                        key_buf.clear();
                        for c in &chosen {
                            key_buf.push(c.1.len() as u64);
                            for &(s, p) in &c.1 {
                                key_buf.push(s as u64);
                                key_buf.push(p.to_bits());
                            }
                        }
                        match index.get(&key_buf) {
                            Some(&slot) => {
                                if better(&next[slot], &chosen) {
                                    next[slot] = make_node(node, &chosen, reward);
                                }
                            }
                            None => {
                                index.insert(key_buf.clone(), next.len());
                                next.push(make_node(node, &chosen, reward));
                            }
                        }
                    } else {
                        next.push(make_node(node, &chosen, reward));
                    }
                }

                // advance the odometer, last agent fastest
                let mut i = n;
                loop {
                    if i == 0 {
                        break 'product;
                    }
                    i -= 1;
                    pick[i] += 1;
                    if pick[i] < options[i].len() {
                        break;
                    }
                    pick[i] = 0;
                }
            }
        }

        stats.generated.push(generated);
        stats.kept.push(if last || !config.trim_dominated { kept } else { next.len() });
        if !last {
            if next.is_empty() {
                return Err(Error::NoSafeJointAction);
            }
            if let Some(l) = layers.as_deref_mut() {
                l.push(next.clone());
            }
            layer = next;
        } else if let Some(l) = layers.as_deref_mut() {
            l.push(std::mem::take(&mut leaves));
        }
    }

    let best = best.ok_or(Error::NoSafeJointAction)?;
    let sequence: Vec<Vec<ActionId>> = best.seq.chunks(n).map(<[ActionId]>::to_vec).collect();
    Ok(LocalPlan {
        actions: agents.iter().map(|a| a.id).zip(sequence[0].iter().copied()).collect(),
        value: best.reward,
        sequence,
        stats,
    })
}

fn make_node(parent: &SearchNode, chosen: &[&(ActionId, Dist, f64)], reward: f64) -> SearchNode {
    let mut seq = parent.seq.clone();
    seq.extend(chosen.iter().map(|c| c.0));
    SearchNode {
        dists: chosen.iter().map(|c| c.1.clone()).collect(),
        reward,
        seq,
    }
}
