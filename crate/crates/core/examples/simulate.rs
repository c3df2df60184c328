//! Synthetic readers with a fixed taste, driven through the live engine.
//! Prints precision@k over time and whether the learned greedy topic matches
//! each reader's favourite.
//!
//!     cargo run --release --example simulate [seed]

use hyperfeed::sim::{simulate, taste, SimScenario};
use hyperfeed::TopicLexicon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);

    let scenario = SimScenario {
        n_users: 3,
        tastes: vec![
            taste([("traffic", 0.8), ("food", 0.15), ("events", 0.05)]),
            taste([("food", 0.7), ("events", 0.3)]),
            taste([("events", 0.9), ("traffic", 0.1)]),
        ],
        ..SimScenario::convergence(seed)
    };
    let metrics = simulate(&scenario, &TopicLexicon::default())?;

    // Items trickle in over the run and favourites are read almost at once, so
    // single steps are noisy; report 100-step means.
    println!("steps      precision@{}  greedy_accuracy", scenario.k);
    for chunk in metrics.steps.chunks(100) {
        let mean = |f: fn(&hyperfeed::sim::StepMetrics) -> f64| chunk.iter().map(f).sum::<f64>() / chunk.len() as f64;
        println!(
            "{:>4}-{:<4}  {:>12.3}  {:>15.3}",
            chunk[0].step,
            chunk[chunk.len() - 1].step,
            mean(|m| m.precision),
            mean(|m| m.greedy_accuracy)
        );
    }

    println!();
    for u in &metrics.users {
        let greedy: Vec<String> = u
            .visited
            .iter()
            .map(|(state, g)| format!("{state}->{}", g.as_deref().unwrap_or("-")))
            .collect();
        println!(
            "{}: favourite {}, {} reads, converged {}  [{}]",
            u.user_id,
            u.favourite,
            u.reads,
            u.converged(),
            greedy.join(" ")
        );
    }
    Ok(())
}
