//! Miniature environment-transfer comparison: train multitask preplay and
//! Dyna on a handful of crafting worlds under the same simulation budget,
//! then compare mean return on held-out worlds.
//!
//! The shipped `transfer_sweep` preset runs the full protocol; this trims
//! budgets so the shape of the result shows up in about a minute.
//!
//! ```bash
//! cargo run --example transfer_mini
//! ```

use preplay::agents::AgentKind;
use preplay::harness::{run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let config_path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/transfer_sweep.toml");
    for kind in [AgentKind::MultitaskPreplay, AgentKind::Dyna, AgentKind::QLearning] {
        let mut cfg = ExperimentConfig::load(std::path::Path::new(config_path))?;
        cfg.agent.kind = kind;
        cfg.run.training_budget = 150_000;
        cfg.run.deterministic = true;
        cfg.run.out_dir = std::env::temp_dir().join(format!("preplay_transfer_mini_{kind:?}"));
        if let Some(t) = cfg.transfer.as_mut() {
            t.train_seed_counts = vec![16];
            t.n_test_seeds = 80;
            t.n_inits = 1;
        }
        let t0 = std::time::Instant::now();
        let out = run_experiment(&cfg)?;
        println!(
            "{:<18} held-out return {:.3} +/- {:.3}   ({:.0}s, {} sim rollouts)",
            format!("{kind:?}"),
            out.summary.mean_return.unwrap_or(0.0),
            out.summary.return_stderr.unwrap_or(0.0),
            t0.elapsed().as_secs_f64(),
            out.summary.sim_rollouts,
        );
    }
    Ok(())
}
