//! Two agents share one belief over two doors and fuse their observations
//! each step.

use dtpp::momdp::{build_grid_momdp, Cell, GridAction, GridWorldSpec, TransitionMode};
use dtpp::sim::update_belief_all;

fn main() -> dtpp::Result<()> {
    let mut spec = GridWorldSpec::new(6, 3);
    spec.uncertain_cells = vec![Cell::new(2, 1), Cell::new(5, 0)];
    let model = build_grid_momdp(&spec, TransitionMode::Planning)?;
    let mut belief = spec.belief_from_priors(&[0.5, 0.5])?;
    // doors are actually: first free, second blocked
    let truth = 0b10;

    let mut states = vec![spec.state_of(Cell::new(0, 1)), spec.state_of(Cell::new(5, 2))];
    let moves = [[GridAction::East, GridAction::West], [GridAction::Idle, GridAction::North]];
    for (t, step) in moves.iter().enumerate() {
        let actions: Vec<usize> = step.iter().map(|a| a.index()).collect();
        let next: Vec<usize> = states.iter().zip(step).map(|(&s, &a)| spec.step(s, a, truth)).collect();
        let observations = vec![truth; 2];
        belief = update_belief_all(&spec, &model, &belief, &states, &actions, &next, &observations)?;
        states = next;
        println!(
            "t={}: P(door 0 blocked) = {:.4}, P(door 1 blocked) = {:.4}",
            t + 1,
            belief.bit_marginal(0),
            belief.bit_marginal(1)
        );
    }
    Ok(())
}
