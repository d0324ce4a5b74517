//! Three agents, two tasks: build the allocation factor graph and run
//! max-sum to decide who commits where.

use std::sync::Arc;

use dtpp::maxsum::{allocate, build_factor_graph, MaxSumConfig};
use dtpp::momdp::{build_grid_momdp, Belief, Cell, GridWorldSpec, TransitionMode};
use dtpp::task::{AllocationProblem, CandidateFilter, Task, TaskSpec};
use dtpp::values::solve_values;

fn main() -> dtpp::Result<()> {
    let spec = GridWorldSpec::new(6, 6);
    let model = build_grid_momdp(&spec, TransitionMode::Planning)?;
    let belief = Belief::uniform(1);
    let s = |x, y| spec.state_of(Cell::new(x, y));

    let mut tasks = Vec::new();
    for (id, goal, end, rewards) in [
        (0, s(5, 5), 8, vec![0.0, 0.0, 20.0, 20.0]),
        (1, s(0, 5), 6, vec![0.0, 10.0, 12.0, 12.0]),
    ] {
        let mut task = Task::new(TaskSpec {
            id,
            goal: vec![goal],
            candidates: vec![0, 1, 2],
            t_start: 0,
            t_end: end,
            rewards,
        })?;
        task.set_values(Arc::new(solve_values(&model, &[goal], end, &belief)?));
        tasks.push(task);
    }

    let states = [s(2, 2), s(4, 3), s(0, 2)];
    let problem = AllocationProblem { tasks: &tasks, states: &states, belief: &belief, time: 0, filter: CandidateFilter::Reachable };
    let graph = build_factor_graph(&problem)?;
    println!("{} agents, {} factors, diameter {}", graph.num_vars(), graph.factors().len(), graph.diameter());

    let alloc = allocate(&problem, &MaxSumConfig::default())?;
    println!(
        "commitments {:?}, objective {:.4}, {} rounds, converged {}",
        alloc.commitments, alloc.objective, alloc.iterations, alloc.converged
    );
    Ok(())
}
