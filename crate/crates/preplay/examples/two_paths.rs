//! Train multitask preplay on the two-paths maze and watch it solve the
//! never-pursued evaluation object by reusing the trained route.
//!
//! ```bash
//! cargo run --example two_paths
//! ```

use preplay::harness::{run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let config_path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/experiment1.toml");
    let mut cfg = ExperimentConfig::load(std::path::Path::new(config_path))?;

    // Trimmed for a quick demonstration; the acceptance suite runs the full
    // 20-seed preset.
    cfg.run.n_seeds = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    cfg.run.deterministic = true;
    cfg.run.out_dir = std::env::temp_dir().join("preplay_two_paths");

    let t0 = std::time::Instant::now();
    let out = run_experiment(&cfg)?;
    let s = &out.summary;
    println!(
        "{} with {:?}: {} seeds in {:.1}s",
        cfg.name,
        cfg.agent.kind,
        cfg.run.n_seeds,
        t0.elapsed().as_secs_f64()
    );
    println!(
        "eval success rate: {:.3} (median {:.3}, CI {:.3}..{:.3})",
        s.success_rate, s.success_median, s.success_ci.0, s.success_ci.1
    );
    match s.reuse_rate {
        Some(r) => println!("path reuse among successes: {r:.3}"),
        None => println!("path reuse: no successful episodes to classify"),
    }
    println!(
        "simulation: {} rollouts, {} budgeted transitions, {} taken",
        s.sim_rollouts, s.sim_budgeted_transitions, s.sim_actual_transitions
    );
    println!("records: {}", out.records_path.display());
    Ok(())
}
