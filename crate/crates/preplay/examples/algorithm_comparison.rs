//! Compare the whole algorithm family on the two-paths protocol and emit the
//! figure-style plot data: multitask preplay solves the counterfactual goal
//! by reusing the trained route, plain goal-conditioned Q-learning and
//! universal SFs with GPI barely generalize, and the decision-time planners
//! solve it without reuse.
//!
//! ```bash
//! cargo run --example algorithm_comparison [n_seeds]
//! ```

use preplay::agents::AgentKind;
use preplay::harness::{emit_plots, run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let config_path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/experiment1.toml");
    let n_seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);

    let agents = [
        AgentKind::MultitaskPreplay,
        AgentKind::Dyna,
        AgentKind::QLearning,
        AgentKind::UniversalSf,
        AgentKind::Bfs,
        AgentKind::Dfs,
    ];
    let mut summaries = Vec::new();
    println!("{:<18} {:>8} {:>8} {:>9}", "agent", "success", "reuse", "time");
    for kind in agents {
        let mut cfg = ExperimentConfig::load(std::path::Path::new(config_path))?;
        cfg.agent.kind = kind;
        cfg.run.n_seeds = n_seeds;
        cfg.run.deterministic = true;
        cfg.run.out_dir = std::env::temp_dir().join(format!("preplay_cmp_{kind:?}"));
        let t0 = std::time::Instant::now();
        let out = run_experiment(&cfg)?;
        println!(
            "{:<18} {:>8.3} {:>8} {:>8.1}s",
            format!("{kind:?}"),
            out.summary.success_rate,
            out.summary
                .reuse_rate
                .map_or("na".to_string(), |r| format!("{r:.3}")),
            t0.elapsed().as_secs_f64()
        );
        summaries.push(out.summary);
    }
    let files = emit_plots(&summaries, &std::env::temp_dir().join("preplay_cmp_plots"))?;
    println!("plot data: {}", files[0].display());
    Ok(())
}
