//! A second agent is committed as backup while the first one's route is
//! uncertain, and released once the first agent sees the route is clear.

use std::path::Path;

use dtpp::scenario::load_scenario;
use dtpp::sim::run_episode;

fn main() -> dtpp::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/redundancy_7x5.toml");
    let episode = run_episode(&load_scenario(&path)?)?;
    for r in &episode.records {
        let reach: Vec<String> = r.tasks.iter().flat_map(|k| k.reach.iter().map(|p| format!("{p:.3}"))).collect();
        println!(
            "t={} at {:?} commitments {:?} reach [{}] P(cell blocked) {:.3}",
            r.t,
            r.states,
            r.commitments,
            reach.join(", "),
            r.occupancy[0]
        );
    }
    println!("realized {}", episode.summary.realized);
    Ok(())
}
