//! Reach probability and cost-to-go for one goal on a small grid with a
//! door of unknown state, under two different beliefs about the door.

use dtpp::momdp::{build_grid_momdp, Cell, GridAction, GridWorldSpec, TransitionMode};
use dtpp::values::{policy_action, solve_values, PolicyQuery};

fn main() -> dtpp::Result<()> {
    let mut spec = GridWorldSpec::new(5, 3);
    spec.static_obstacles = vec![Cell::new(2, 0), Cell::new(2, 2)];
    spec.uncertain_cells = vec![Cell::new(2, 1)];
    let model = build_grid_momdp(&spec, TransitionMode::Planning)?;
    let goal = [spec.state_of(Cell::new(4, 1))];
    let start = spec.state_of(Cell::new(0, 1));

    for prior in [0.1, 0.9] {
        let belief = spec.belief_from_priors(&[prior])?;
        let tables = solve_values(&model, &goal, 6, &belief)?;
        let first = policy_action(&tables, &PolicyQuery::new(0, start))?;
        println!(
            "door blocked with p = {prior}: reach {:.4}, cost-to-go {:.4}, first action {:?}",
            tables.reach(0, start),
            tables.cost_to_go(0, start),
            GridAction::from_index(first).unwrap()
        );
    }
    Ok(())
}
