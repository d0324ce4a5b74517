//! Two agents heading through the same cell: the joint look-ahead search
//! picks a collision-free joint action.

use std::sync::Arc;

use dtpp::momdp::{build_grid_momdp, Belief, Cell, GridAction, GridWorldSpec, TransitionMode};
use dtpp::resolution::{build_adjacency_partition, forward_dp, select_host, LocalAgent, LocalAssignment, LocalConfig};
use dtpp::values::{solve_values, FrozenMdp};

fn main() -> dtpp::Result<()> {
    let spec = GridWorldSpec::new(5, 3);
    let model = build_grid_momdp(&spec, TransitionMode::Planning)?;
    let belief = Belief::uniform(1);
    let s = |x, y| spec.state_of(Cell::new(x, y));

    let goals = [s(4, 1), s(2, 2)];
    let states = vec![s(1, 1), s(2, 0)];
    let agents: Vec<LocalAgent> = (0..2)
        .map(|i| {
            let tables = solve_values(&model, &[goals[i]], 5, &belief).unwrap();
            LocalAgent {
                id: i,
                state: states[i],
                assignment: Some(LocalAssignment { task: i, delta_r: 10.0, tables: Arc::new(tables), t_start: 0, t_end: 5 }),
            }
        })
        .collect();

    let components = build_adjacency_partition(&states, &model);
    println!("components {components:?}, host {:?}", select_host(&components[0]));

    let execution = FrozenMdp::new(&build_grid_momdp(&spec, TransitionMode::Execution)?, &belief)?;
    let plan = forward_dp(&agents, &execution, 0, &LocalConfig::default())?;
    for (agent, a) in &plan.actions {
        println!("agent {agent}: {:?}", GridAction::from_index(*a).unwrap());
    }
    println!("value {:.4}, nodes generated {:?}, kept {:?}", plan.value, plan.stats.generated, plan.stats.kept);
    Ok(())
}
