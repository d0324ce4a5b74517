//! Distribution of the number of arriving agents, and the expected reward
//! and marginal reward it induces for a few reward shapes.

use dtpp::task::{marginal_from_probs, poisson_binomial, reward_term};

fn main() {
    let reach = [0.727, 0.947];
    let counts = poisson_binomial(&reach);
    println!("reach {reach:?}");
    for (i, p) in counts.iter().enumerate() {
        println!("  P(exactly {i} arrive) = {p:.6}");
    }
    println!("  P(at least one) = {:.6}", 1.0 - counts[0]);

    for rewards in [[0.0, 50.0, 50.0], [0.0, 0.0, 8.0], [0.0, 5.0, 8.0]] {
        let r = |i: usize| rewards[i];
        println!(
            "rewards {rewards:?}: expected {:.4}, marginal of agent 0 {:.4}, of agent 1 {:.4}",
            reward_term(r, &reach),
            marginal_from_probs(r, &reach[1..]),
            marginal_from_probs(r, &reach[..1]),
        );
    }
}
