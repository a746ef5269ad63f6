//! Path-reuse metrics and the signed-rank test on hand-built paths: map
//! overlap, approach-direction cosine, both reuse regimes, and a one-sided
//! Wilcoxon test of per-seed reuse rates against chance.
//!
//! ```bash
//! cargo run --example path_stats
//! ```

use preplay::domain::Pos;
use preplay::metrics::{
    dir_overlap, map_overlap, path_matrix, path_reuse, wilcoxon_one_sided, Regime,
    ReuseThresholds,
};

fn main() -> anyhow::Result<()> {
    // A trained route along two corridor legs, and two candidate test paths:
    // one that rides the trained route and branches late, one disjoint.
    let train: Vec<Pos> = (0..8)
        .map(|c| Pos::new(9, 1 + c))
        .chain((1..9).rev().map(|r| Pos::new(r, 8)))
        .collect();
    let reusing: Vec<Pos> = train[..13].iter().copied().chain([Pos::new(3, 7)]).collect();
    let disjoint: Vec<Pos> = (0..9).map(|r| Pos::new(9 - r, 1)).chain([Pos::new(1, 2)]).collect();

    let (h, w) = (11, 10);
    let train_m = path_matrix(&train, h, w, false)?;
    for (label, path) in [("reusing", &reusing), ("disjoint", &disjoint)] {
        let test_m = path_matrix(path, h, w, false)?;
        let o_map = map_overlap(&train_m, &test_m)?;
        let o_dir = dir_overlap(&train, path);
        let grid = path_reuse(o_map, o_dir, Regime::Gridworld, ReuseThresholds::default());
        let craft = path_reuse(
            o_map,
            o_dir,
            Regime::Craftworld,
            ReuseThresholds { alpha_map: 0.25, alpha_dir: 0.5 },
        );
        println!(
            "{label:<9} o_map {o_map:.2}  o_dir {o_dir:+.2}  reused: gridworld={grid} craftworld={craft}"
        );
    }

    // Per-seed reuse fractions against the 0.5 chance level.
    let per_seed_reuse = [0.75, 1.0, 0.75, 0.5, 1.0, 0.75, 0.25, 1.0, 0.75, 0.75, 0.5, 1.0];
    let (p, z) = wilcoxon_one_sided(&per_seed_reuse, 0.5)?;
    println!("\nreuse > 50% one-sided Wilcoxon signed-rank: p = {p:.5}, z = {z:.3}");
    Ok(())
}
