//! Tour of the grid-world toolkit: parse a maze file, render it back
//! byte-for-byte, rotate it, query reachability, and plan shortest paths.
//!
//! ```bash
//! cargo run --example maze_tour
//! ```

use preplay::agents::{plan, PlanKind};
use preplay::gridworld::{
    parse_maze, reachable_goals, render_maze, rotate_maze, shortest_path, GridState,
};

fn main() -> anyhow::Result<()> {
    let text = include_str!("../assets/mazes/two_paths.txt");
    let maze = parse_maze(text)?;
    println!("two_paths ({}x{}):\n{}", maze.height, maze.width, render_maze(&maze));
    assert_eq!(render_maze(&maze), text, "rendering round-trips exactly");

    let (spawn, _) = maze.spawn_eval[0];
    println!("evaluation spawn: ({}, {})", spawn.row, spawn.col);
    let reachable = reachable_goals(&maze, &GridState::at(spawn));
    println!(
        "reachable goals from the spawn: {}",
        reachable
            .iter()
            .map(|g| g.id.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );

    for goal in &reachable {
        let target = maze.objects[&goal.id];
        let path = shortest_path(&maze, spawn, target)?;
        let (bfs, bfs_exp) = plan(PlanKind::Bfs, &maze, spawn, *goal)?;
        let (dfs, dfs_exp) = plan(PlanKind::Dfs, &maze, spawn, *goal)?;
        println!(
            "goal {}: shortest {} steps | bfs {} steps ({} expansions) | dfs {} steps ({} expansions)",
            goal.id,
            path.len(),
            bfs.len(),
            bfs_exp,
            dfs.len(),
            dfs_exp,
        );
    }

    let rotated = rotate_maze(&maze, 1);
    println!("\nrotated one quarter-turn ({}x{}):\n{}", rotated.height, rotated.width, render_maze(&rotated));
    assert_eq!(rotate_maze(&rotated, 3), maze, "four quarter-turns are the identity");
    Ok(())
}
