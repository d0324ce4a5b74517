//! Four agents serving randomly generated tasks; prints one line per step
//! and the episode totals. Pass a seed as the first argument.

use std::path::Path;

use dtpp::scenario::load_scenario;
use dtpp::sim::Simulation;

fn main() -> dtpp::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/random_tasks_8x8.toml");
    let mut config = load_scenario(&path)?;
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        config.seed = seed;
    }
    let mut sim = Simulation::new(&config)?;
    while !sim.is_done() {
        let r = sim.step()?;
        let tasks: Vec<_> = r.tasks.iter().map(|k| (k.id, k.t_end)).collect();
        println!(
            "t={:>2} tasks {:?} commitments {:?} collected {:?} realized {}",
            r.t,
            tasks,
            r.commitments,
            r.collected.iter().map(|c| c.reward).collect::<Vec<_>>(),
            r.realized
        );
    }
    let s = sim.summary();
    println!("{} steps, collected {}, cost {}, realized {}, unfinished {:?}", s.steps, s.collected, s.cost, s.realized, s.unfinished);
    Ok(())
}
