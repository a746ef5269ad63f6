//! Walk the crafting world's subtask chain by hand: generate a world, follow
//! the dependency DAG from wood to a precious stone, and watch availability
//! bits open up as preconditions are met.
//!
//! ```bash
//! cargo run --example craft_walkthrough [seed]
//! ```

use preplay::craftworld::{
    compute_availability, craft_step, generate_world, observe, optimal_positions_to, CraftAction,
    ObjectKind, Subtask, WorldParams,
};
use preplay::domain::Pos;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let params = WorldParams {
        size: 16,
        ..WorldParams::default()
    };
    let world = generate_world(seed, &params)?;
    println!("world seed {seed}, {} objects, spawns {:?}", world.objects.len(), world.spawns);
    for (pos, kind) in &world.objects {
        println!("  {:?} at ({}, {})", kind, pos.row, pos.col);
    }

    let mut s = world.initial_state(0);
    println!("\nspawn ({}, {})", s.position.row, s.position.col);
    let obs = observe(&world, &s, params.view_radius);
    println!(
        "initially available subtasks: {:?}",
        Subtask::ALL
            .iter()
            .zip(&obs.avail)
            .filter(|(_, &a)| a)
            .map(|(t, _)| *t)
            .collect::<Vec<_>>()
    );

    // Scripted chain: rather than hand-code a route for an arbitrary seed,
    // walk optimal paths between the chain's object kinds and interact.
    let chain: &[(ObjectKind, CraftAction, Subtask)] = &[
        (ObjectKind::Tree, CraftAction::Do, Subtask::CollectWood),
        (ObjectKind::Tree, CraftAction::Do, Subtask::CollectWood), // second wood
        (ObjectKind::CraftTable, CraftAction::Do, Subtask::UseCraftTable),
        (ObjectKind::CraftTable, CraftAction::MakeWoodPickaxe, Subtask::CraftWoodPickaxe),
        (ObjectKind::Stone, CraftAction::Do, Subtask::MineStone),
        (ObjectKind::CraftTable, CraftAction::MakeStonePickaxe, Subtask::CraftStonePickaxe),
        (ObjectKind::IronOre, CraftAction::Do, Subtask::MineIron),
        (ObjectKind::CraftTable, CraftAction::MakeIronPickaxe, Subtask::CraftIronPickaxe),
        (ObjectKind::Diamond, CraftAction::Do, Subtask::MineDiamond),
    ];
    for &(kind, action, subtask) in chain {
        let route = optimal_positions_to(&world, s.position, kind)
            .ok_or_else(|| anyhow::anyhow!("{kind:?} unreachable"))?;
        for pair in route.windows(2) {
            let step = direction(pair[0], pair[1]);
            s = craft_step(&world, &s, step).0;
        }
        let (next, reward) = craft_step(&world, &s, action);
        s = next;
        let newly: Vec<&str> = Subtask::ALL
            .iter()
            .zip(&reward)
            .filter(|(_, &r)| r > 0.0)
            .map(|(t, _)| subtask_name(*t))
            .collect();
        println!(
            "step {:>3}: {:?} near {:?} -> {}",
            s.steps,
            action,
            kind,
            if newly.is_empty() { "no change".to_string() } else { format!("achieved {}", newly.join("+")) },
        );
        let _ = subtask;
    }
    let avail = compute_availability(&world, &s);
    println!(
        "after the chain, still available: {:?}",
        Subtask::ALL
            .iter()
            .zip(&avail)
            .filter(|(_, &a)| a)
            .map(|(t, _)| *t)
            .collect::<Vec<_>>()
    );
    println!("achieved mask: {:#012b} in {} steps", s.achieved, s.steps);
    Ok(())
}

fn direction(from: Pos, to: Pos) -> CraftAction {
    if to.row < from.row {
        CraftAction::Up
    } else if to.row > from.row {
        CraftAction::Down
    } else if to.col < from.col {
        CraftAction::Left
    } else {
        CraftAction::Right
    }
}

fn subtask_name(t: Subtask) -> &'static str {
    match t {
        Subtask::CollectWood => "collect_wood",
        Subtask::UseCraftTable => "use_craft_table",
        Subtask::CraftWoodPickaxe => "wood_pickaxe",
        Subtask::MineStone => "mine_stone",
        Subtask::CraftStonePickaxe => "stone_pickaxe",
        Subtask::MineIron => "mine_iron",
        Subtask::CraftIronPickaxe => "iron_pickaxe",
        Subtask::MineDiamond => "mine_diamond",
        Subtask::MineSapphire => "mine_sapphire",
        Subtask::MineRuby => "mine_ruby",
    }
}
