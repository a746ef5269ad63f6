//! Fully observable grid maze: ASCII parsing/rendering, deterministic
//! dynamics, rotations, reachability, and shortest paths.
//!
//! Mazes are immutable after construction and cheap to share; episode state
//! is a two-field value type. The ASCII legend is `#` wall, `.` floor,
//! letters for objects, `+` training spawn, `*` evaluation spawn. Rendering
//! emits the identical format (round-trip exact).

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fmt;

use crate::domain::{Domain, GoalId, Pos, StateKey};

/// Single-letter object identifier from the maze legend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub char);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
}

/// Spawn heading. Dynamics ignore headings (movement is cardinal, no turn
/// action); they are kept for rendering parity with the source material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> GridAction {
        Self::ALL[i]
    }

    pub fn delta(self) -> (isize, isize) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Right => (0, 1),
        }
    }

    /// Action permutation induced by one clockwise quarter-turn of the maze.
    pub fn rotated(self) -> GridAction {
        match self {
            GridAction::Up => GridAction::Right,
            GridAction::Right => GridAction::Down,
            GridAction::Down => GridAction::Left,
            GridAction::Left => GridAction::Up,
        }
    }
}

/// A task goal: one object of the maze's goal catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Goal {
    pub id: ObjectId,
    /// Index into the goal catalog (one-hot encoding position).
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maze {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub objects: BTreeMap<ObjectId, Pos>,
    pub spawn_train: Vec<(Pos, Heading)>,
    pub spawn_eval: Vec<(Pos, Heading)>,
    pub goal_catalog: Vec<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MazeError {
    #[error("maze text is empty")]
    Empty,
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown glyph {glyph:?} at row {row}, column {col}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("object '{id}' appears more than once (second at row {row}, column {col})")]
    DuplicateObject { id: ObjectId, row: usize, col: usize },
    #[error("object '{id}' is not on a floor cell (row {row}, column {col})")]
    ObjectOffFloor { id: ObjectId, row: usize, col: usize },
    #[error("spawn at row {row}, column {col} is not on a floor cell")]
    SpawnOffFloor { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GridError {
    #[error("grid_step called on a terminal state")]
    SteppedAfterTerminal,
    #[error("goal cell is unreachable from the start position")]
    Unreachable,
}

/// Episode state: the agent's cell plus, once terminal, the collected object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub position: Pos,
    pub collected: Option<ObjectId>,
}

impl GridState {
    pub fn at(position: Pos) -> Self {
        GridState {
            position,
            collected: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.collected.is_some()
    }
}

impl Maze {
    pub fn cell(&self, pos: Pos) -> Cell {
        self.cells[pos.row * self.width + pos.col]
    }

    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    pub fn object_at(&self, pos: Pos) -> Option<ObjectId> {
        self.objects
            .iter()
            .find(|(_, &p)| p == pos)
            .map(|(&id, _)| id)
    }

    pub fn goal(&self, id: ObjectId) -> Option<Goal> {
        self.goal_catalog
            .iter()
            .position(|&g| g == id)
            .map(|index| Goal { id, index })
    }

    /// Episode step cap used by rollout loops: 4 * width * height.
    pub fn step_cap(&self) -> usize {
        4 * self.width * self.height
    }

    /// Cells an agent may occupy while moving toward `target`: floor, not
    /// occupied by a different object (stepping on one would end the episode).
    fn traversable(&self, pos: Pos, target: Option<Pos>) -> bool {
        if self.cell(pos) == Cell::Wall {
            return false;
        }
        if Some(pos) == target {
            return true;
        }
        self.objects.values().all(|&p| p != pos)
    }

    fn validate(&self) -> Result<(), MazeError> {
        if self.width == 0 || self.height == 0 {
            return Err(MazeError::Empty);
        }
        let mut seen = BTreeMap::new();
        for (&id, &pos) in &self.objects {
            if self.cell(pos) == Cell::Wall {
                return Err(MazeError::ObjectOffFloor {
                    id,
                    row: pos.row,
                    col: pos.col,
                });
            }
            if let Some(_prev) = seen.insert(pos, id) {
                return Err(MazeError::DuplicateObject {
                    id,
                    row: pos.row,
                    col: pos.col,
                });
            }
        }
        for &(pos, _) in self.spawn_train.iter().chain(&self.spawn_eval) {
            if self.cell(pos) == Cell::Wall {
                return Err(MazeError::SpawnOffFloor {
                    row: pos.row,
                    col: pos.col,
                });
            }
        }
        debug_assert!(self
            .goal_catalog
            .iter()
            .all(|id| self.objects.contains_key(id)));
        Ok(())
    }
}

/// Parse an ASCII maze description.
pub fn parse_maze(text: &str) -> Result<Maze, MazeError> {
    let rows: Vec<&str> = text.lines().collect();
    let rows: Vec<&str> = match rows.split_last() {
        Some((last, init)) if last.is_empty() => init.to_vec(),
        _ => rows,
    };
    if rows.is_empty() {
        return Err(MazeError::Empty);
    }
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(MazeError::Empty);
    }
    let height = rows.len();
    let mut cells = Vec::with_capacity(width * height);
    let mut objects: BTreeMap<ObjectId, Pos> = BTreeMap::new();
    let mut spawn_train = Vec::new();
    let mut spawn_eval = Vec::new();

    for (r, line) in rows.iter().enumerate() {
        let got = line.chars().count();
        if got != width {
            return Err(MazeError::RaggedRows {
                row: r,
                expected: width,
                got,
            });
        }
        for (c, glyph) in line.chars().enumerate() {
            let pos = Pos::new(r, c);
            match glyph {
                '#' => cells.push(Cell::Wall),
                '.' => cells.push(Cell::Floor),
                '+' => {
                    cells.push(Cell::Floor);
                    spawn_train.push((pos, Heading::Up));
                }
                '*' => {
                    cells.push(Cell::Floor);
                    spawn_eval.push((pos, Heading::Up));
                }
                ch if ch.is_ascii_alphabetic() => {
                    cells.push(Cell::Floor);
                    let id = ObjectId(ch);
                    if objects.insert(id, pos).is_some() {
                        return Err(MazeError::DuplicateObject {
                            id,
                            row: r,
                            col: c,
                        });
                    }
                }
                other => {
                    return Err(MazeError::UnknownGlyph {
                        row: r,
                        col: c,
                        glyph: other,
                    })
                }
            }
        }
    }

    let goal_catalog: Vec<ObjectId> = objects.keys().copied().collect();
    let maze = Maze {
        width,
        height,
        cells,
        objects,
        spawn_train,
        spawn_eval,
        goal_catalog,
    };
    maze.validate()?;
    Ok(maze)
}

/// Render a maze back to its ASCII form (inverse of [`parse_maze`]).
pub fn render_maze(maze: &Maze) -> String {
    let mut grid: Vec<char> = maze
        .cells
        .iter()
        .map(|c| if *c == Cell::Wall { '#' } else { '.' })
        .collect();
    for &(pos, _) in &maze.spawn_train {
        grid[pos.row * maze.width + pos.col] = '+';
    }
    for &(pos, _) in &maze.spawn_eval {
        grid[pos.row * maze.width + pos.col] = '*';
    }
    for (&id, &pos) in &maze.objects {
        grid[pos.row * maze.width + pos.col] = id.0;
    }
    let mut out = String::with_capacity((maze.width + 1) * maze.height);
    for r in 0..maze.height {
        out.extend(&grid[r * maze.width..(r + 1) * maze.width]);
        out.push('\n');
    }
    out
}

/// One environment step. Movement into walls or off-grid is a no-op; moving
/// onto an object cell collects it and terminates the episode.
pub fn grid_step(
    maze: &Maze,
    state: &GridState,
    action: GridAction,
) -> Result<(GridState, bool), GridError> {
    if state.is_terminal() {
        return Err(GridError::SteppedAfterTerminal);
    }
    let (dr, dc) = action.delta();
    let nr = state.position.row as isize + dr;
    let nc = state.position.col as isize + dc;
    let next_pos = if maze.in_bounds(nr, nc) {
        let p = Pos::new(nr as usize, nc as usize);
        if maze.cell(p) == Cell::Wall {
            state.position
        } else {
            p
        }
    } else {
        state.position
    };
    let collected = maze.object_at(next_pos);
    let next = GridState {
        position: next_pos,
        collected,
    };
    Ok((next, collected.is_some()))
}

/// Goal reward: 1 when the collected object is the goal, otherwise 0.
pub fn grid_reward(next: &GridState, goal: Goal) -> f64 {
    if next.collected == Some(goal.id) {
        1.0
    } else {
        0.0
    }
}

/// Rotate a maze clockwise by `quarter_turns` (0..=3) quarter-turns.
/// Cell (r, c) maps to (c, H - 1 - r) per turn; headings and the induced
/// action permutation rotate alongside.
pub fn rotate_maze(maze: &Maze, quarter_turns: u8) -> Maze {
    let mut out = maze.clone();
    for _ in 0..(quarter_turns % 4) {
        out = rotate_once(&out);
    }
    out
}

fn rotate_pos_once(pos: Pos, height: usize) -> Pos {
    Pos::new(pos.col, height - 1 - pos.row)
}

fn rotate_heading_once(h: Heading) -> Heading {
    match h {
        Heading::Up => Heading::Right,
        Heading::Right => Heading::Down,
        Heading::Down => Heading::Left,
        Heading::Left => Heading::Up,
    }
}

fn rotate_once(maze: &Maze) -> Maze {
    let (w, h) = (maze.width, maze.height);
    let mut cells = vec![Cell::Floor; w * h];
    for r in 0..h {
        for c in 0..w {
            let np = rotate_pos_once(Pos::new(r, c), h);
            cells[np.row * h + np.col] = maze.cell(Pos::new(r, c));
        }
    }
    Maze {
        width: h,
        height: w,
        cells,
        objects: maze
            .objects
            .iter()
            .map(|(&id, &p)| (id, rotate_pos_once(p, h)))
            .collect(),
        spawn_train: maze
            .spawn_train
            .iter()
            .map(|&(p, hd)| (rotate_pos_once(p, h), rotate_heading_once(hd)))
            .collect(),
        spawn_eval: maze
            .spawn_eval
            .iter()
            .map(|&(p, hd)| (rotate_pos_once(p, h), rotate_heading_once(hd)))
            .collect(),
        goal_catalog: maze.goal_catalog.clone(),
    }
}

/// Goals whose object can be reached from `state` along traversable cells
/// (walls and other occupied cells block).
pub fn reachable_goals(maze: &Maze, state: &GridState) -> Vec<Goal> {
    maze.goal_catalog
        .iter()
        .enumerate()
        .filter(|(_, &id)| {
            let target = maze.objects[&id];
            bfs_dist(maze, state.position, target).is_some()
        })
        .map(|(index, &id)| Goal {
            id,
            index,
        })
        .collect()
}

/// Breadth-first distance from `start` to `target`, treating walls and cells
/// occupied by other objects as blocked (the target cell itself is enterable).
fn bfs_dist(maze: &Maze, start: Pos, target: Pos) -> Option<Vec<u32>> {
    if start == target {
        return Some(vec![]);
    }
    if !maze.traversable(start, Some(target)) {
        return None;
    }
    let mut dist = vec![u32::MAX; maze.width * maze.height];
    let mut queue = VecDeque::new();
    dist[start.row * maze.width + start.col] = 0;
    queue.push_back(start);
    while let Some(p) = queue.pop_front() {
        let d = dist[p.row * maze.width + p.col];
        if p == target {
            return Some(dist);
        }
        if p != start && maze.objects.values().any(|&op| op == p) {
            continue; // entering an occupied cell ends traversal
        }
        for action in GridAction::ALL {
            let (dr, dc) = action.delta();
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            if !maze.in_bounds(nr, nc) {
                continue;
            }
            let np = Pos::new(nr as usize, nc as usize);
            if !maze.traversable(np, Some(target)) {
                continue;
            }
            let slot = &mut dist[np.row * maze.width + np.col];
            if *slot == u32::MAX {
                *slot = d + 1;
                queue.push_back(np);
            }
        }
    }
    None
}

/// Shortest wall-avoiding action sequence from `start` to `goal_cell`.
/// Among all minimal paths, returns the lexicographically first under the
/// action order Up, Down, Left, Right.
pub fn shortest_path(maze: &Maze, start: Pos, goal_cell: Pos) -> Result<Vec<GridAction>, GridError> {
    if start == goal_cell {
        return Ok(vec![]);
    }
    // Distance field from the goal; the greedy descent below then yields the
    // lexicographically first minimal action sequence.
    let dist = reverse_dist(maze, goal_cell).ok_or(GridError::Unreachable)?;
    let at = |p: Pos| dist[p.row * maze.width + p.col];
    if at(start) == u32::MAX {
        return Err(GridError::Unreachable);
    }
    let mut path = Vec::with_capacity(at(start) as usize);
    let mut pos = start;
    while pos != goal_cell {
        let here = at(pos);
        let mut advanced = false;
        for action in GridAction::ALL {
            let (dr, dc) = action.delta();
            let (nr, nc) = (pos.row as isize + dr, pos.col as isize + dc);
            if !maze.in_bounds(nr, nc) {
                continue;
            }
            let np = Pos::new(nr as usize, nc as usize);
            if at(np) != u32::MAX && at(np) + 1 == here {
                path.push(action);
                pos = np;
                advanced = true;
                break;
            }
        }
        debug_assert!(advanced, "distance field must decrease somewhere");
        if !advanced {
            return Err(GridError::Unreachable);
        }
    }
    Ok(path)
}

/// Distance-to-goal field over traversable cells (u32::MAX = unreachable).
fn reverse_dist(maze: &Maze, goal_cell: Pos) -> Option<Vec<u32>> {
    if maze.cell(goal_cell) == Cell::Wall {
        return None;
    }
    let mut dist = vec![u32::MAX; maze.width * maze.height];
    let mut queue = VecDeque::new();
    dist[goal_cell.row * maze.width + goal_cell.col] = 0;
    queue.push_back(goal_cell);
    while let Some(p) = queue.pop_front() {
        let d = dist[p.row * maze.width + p.col];
        for action in GridAction::ALL {
            let (dr, dc) = action.delta();
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            if !maze.in_bounds(nr, nc) {
                continue;
            }
            let np = Pos::new(nr as usize, nc as usize);
            if !maze.traversable(np, Some(goal_cell)) || np == goal_cell {
                continue;
            }
            let slot = &mut dist[np.row * maze.width + np.col];
            if *slot == u32::MAX {
                *slot = d + 1;
                queue.push_back(np);
            }
        }
    }
    Some(dist)
}

/// Landmark feature vector for successor features: one indicator per object
/// within `radius` (Manhattan) of the agent, then one goal-completion
/// indicator per catalog goal.
pub fn landmark_features(maze: &Maze, state: &GridState, radius: usize) -> Vec<f64> {
    let mut out = vec![0.0; maze.objects.len() + maze.goal_catalog.len()];
    write_landmark_features(maze, state, radius, &mut out);
    out
}

pub(crate) fn write_landmark_features(
    maze: &Maze,
    state: &GridState,
    radius: usize,
    buf: &mut [f64],
) {
    buf.fill(0.0);
    for (i, (_, &pos)) in maze.objects.iter().enumerate() {
        if state.position.manhattan(pos) <= radius {
            buf[i] = 1.0;
        }
    }
    let n_obj = maze.objects.len();
    if let Some(collected) = state.collected {
        if let Some(gi) = maze.goal_catalog.iter().position(|&g| g == collected) {
            buf[n_obj + gi] = 1.0;
        }
    }
}

/// Grid maze exposed through the shared [`Domain`] contract. Precomputes
/// per-cell goal reachability so counterfactual goal sampling is O(goals).
pub struct GridTask {
    pub maze: Maze,
    pub landmark_radius: usize,
    reach_mask: Vec<u32>,
}

impl GridTask {
    pub fn new(maze: Maze, landmark_radius: usize) -> Self {
        let mut reach_mask = vec![0u32; maze.width * maze.height];
        assert!(maze.goal_catalog.len() <= 32, "goal catalog too large");
        for (gi, &id) in maze.goal_catalog.iter().enumerate() {
            let target = maze.objects[&id];
            // Reverse reachability: cells that can reach the goal object.
            if let Some(dist) = reverse_dist(&maze, target) {
                for (ci, &d) in dist.iter().enumerate() {
                    if d != u32::MAX {
                        reach_mask[ci] |= 1 << gi;
                    }
                }
            }
        }
        GridTask {
            maze,
            landmark_radius,
            reach_mask,
        }
    }

    pub fn goal(&self, id: ObjectId) -> Goal {
        self.maze.goal(id).expect("goal must be in catalog")
    }
}

impl Domain for GridTask {
    type State = GridState;

    fn n_actions(&self) -> usize {
        4
    }

    fn n_goals(&self) -> usize {
        self.maze.goal_catalog.len()
    }

    fn step(&self, state: &GridState, action: u8) -> GridState {
        let (next, _) = grid_step(&self.maze, state, GridAction::from_index(action as usize))
            .expect("step on non-terminal state");
        next
    }

    fn is_terminal(&self, state: &GridState) -> bool {
        state.is_terminal()
    }

    fn reward(&self, _prev: &GridState, next: &GridState, goal: GoalId) -> f64 {
        match next.collected {
            Some(id) if id == self.maze.goal_catalog[goal.index()] => 1.0,
            _ => 0.0,
        }
    }

    fn state_key(&self, state: &GridState) -> StateKey {
        StateKey((state.position.row * self.maze.width + state.position.col) as u64)
    }

    fn dense_key_space(&self) -> Option<usize> {
        Some(self.maze.width * self.maze.height)
    }

    fn accessible_goals(&self, state: &GridState, out: &mut Vec<GoalId>) {
        out.clear();
        let mask = self.reach_mask[state.position.row * self.maze.width + state.position.col];
        for gi in 0..self.maze.goal_catalog.len() {
            if mask & (1 << gi) != 0 {
                out.push(GoalId(gi as u16));
            }
        }
    }

    fn features(&self, _prev: &GridState, next: &GridState, buf: &mut [f64]) {
        write_landmark_features(&self.maze, next, self.landmark_radius, buf);
    }

    fn feature_dim(&self) -> usize {
        self.maze.objects.len() + self.maze.goal_catalog.len()
    }

    fn goal_preference(&self, goal: GoalId) -> Vec<f64> {
        // Indicator task: weight only the goal-completion feature.
        let mut w = vec![0.0; self.feature_dim()];
        w[self.maze.objects.len() + goal.index()] = 1.0;
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO_PATHS: &str = include_str!("../assets/mazes/two_paths.txt");

    fn open_maze(w: usize, h: usize) -> Maze {
        let mut text = String::new();
        for _ in 0..h {
            text.push_str(&".".repeat(w));
            text.push('\n');
        }
        parse_maze(&text).unwrap()
    }

    #[test]
    fn parses_empty_3x3() {
        let maze = parse_maze("...\n...\n...\n").unwrap();
        assert_eq!((maze.width, maze.height), (3, 3));
        assert_eq!(maze.objects.len(), 0);
        assert!((0..3).all(|r| (0..3).all(|c| maze.cell(Pos::new(r, c)) == Cell::Floor)));
    }

    #[test]
    fn duplicate_object_letter_rejected() {
        let err = parse_maze("A.\n.A\n").unwrap_err();
        assert!(matches!(
            err,
            MazeError::DuplicateObject { id: ObjectId('A'), row: 1, col: 1 }
        ));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse_maze("...\n..\n").unwrap_err();
        assert_eq!(
            err,
            MazeError::RaggedRows {
                row: 1,
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn unknown_glyph_rejected() {
        let err = parse_maze(".!\n..\n").unwrap_err();
        assert_eq!(
            err,
            MazeError::UnknownGlyph {
                row: 0,
                col: 1,
                glyph: '!'
            }
        );
    }

    #[test]
    fn two_paths_maze_roundtrips_and_has_expected_objects() {
        let maze = parse_maze(TWO_PATHS).unwrap();
        assert_eq!(render_maze(&maze), TWO_PATHS);
        // Two train objects and one eval object, all in the top-right region.
        assert_eq!(maze.objects.len(), 3);
        for (&id, &pos) in &maze.objects {
            assert!(
                pos.row <= maze.height / 2 && pos.col >= maze.width / 2,
                "object {id} at {pos:?} should sit in the top-right region"
            );
        }
        assert_eq!(maze.spawn_eval.len(), 1);
        assert_eq!(maze.spawn_train.len() + maze.spawn_eval.len(), 8);
    }

    #[test]
    fn blocked_move_is_noop() {
        let maze = parse_maze("##\n.#\n").unwrap();
        let s = GridState::at(Pos::new(1, 0));
        let (next, terminal) = grid_step(&maze, &s, GridAction::Up).unwrap();
        assert_eq!(next.position, s.position);
        assert!(!terminal);
        let (next, _) = grid_step(&maze, &s, GridAction::Left).unwrap();
        assert_eq!(next.position, s.position, "off-grid move is a no-op");
    }

    #[test]
    fn collecting_object_terminates() {
        let maze = parse_maze(".A\n..\n").unwrap();
        let s = GridState::at(Pos::new(0, 0));
        let (next, terminal) = grid_step(&maze, &s, GridAction::Right).unwrap();
        assert!(terminal);
        assert_eq!(next.collected, Some(ObjectId('A')));
        assert_eq!(
            grid_step(&maze, &next, GridAction::Up),
            Err(GridError::SteppedAfterTerminal)
        );
    }

    #[test]
    fn open_5x5_action_sequence() {
        let maze = open_maze(5, 5);
        let mut s = GridState::at(Pos::new(0, 0));
        for a in [
            GridAction::Right,
            GridAction::Right,
            GridAction::Down,
            GridAction::Down,
        ] {
            s = grid_step(&maze, &s, a).unwrap().0;
        }
        assert_eq!(s.position, Pos::new(2, 2));
    }

    #[test]
    fn reward_cases() {
        let maze = parse_maze("AB\n..\n").unwrap();
        let goal = maze.goal(ObjectId('A')).unwrap();
        let hit = GridState {
            position: Pos::new(0, 0),
            collected: Some(ObjectId('A')),
        };
        let miss = GridState {
            position: Pos::new(0, 1),
            collected: Some(ObjectId('B')),
        };
        let none = GridState::at(Pos::new(1, 0));
        assert_eq!(grid_reward(&hit, goal), 1.0);
        assert_eq!(grid_reward(&miss, goal), 0.0);
        assert_eq!(grid_reward(&none, goal), 0.0);
    }

    #[test]
    fn rotation_identity_and_involution() {
        let maze = parse_maze(TWO_PATHS).unwrap();
        assert_eq!(rotate_maze(&maze, 0), maze);
        let twice_180 = rotate_maze(&rotate_maze(&maze, 2), 2);
        assert_eq!(twice_180, maze);
        assert_eq!(rotate_maze(&maze, 4 % 4), maze);
    }

    #[test]
    fn rotation_coordinate_map_checked_cell_by_cell() {
        // Asymmetric 3x4 maze; independent coordinate mapping (r,c) -> (c, H-1-r).
        let maze = parse_maze("#..A\n.#.+\n..*.\n").unwrap();
        let rot = rotate_maze(&maze, 1);
        assert_eq!((rot.height, rot.width), (4, 3));
        let h = maze.height;
        for r in 0..maze.height {
            for c in 0..maze.width {
                let mapped = Pos::new(c, h - 1 - r);
                assert_eq!(maze.cell(Pos::new(r, c)), rot.cell(mapped), "cell ({r},{c})");
            }
        }
        let a = maze.objects[&ObjectId('A')];
        assert_eq!(rot.objects[&ObjectId('A')], Pos::new(a.col, h - 1 - a.row));
    }

    #[test]
    fn reachability_includes_connected_and_excludes_sealed() {
        let maze = parse_maze("A.#B\n..#.\n").unwrap();
        let s = GridState::at(Pos::new(1, 0));
        let goals = reachable_goals(&maze, &s);
        assert_eq!(goals.len(), 1);
        assert_eq!(goals[0].id, ObjectId('A'));
    }

    #[test]
    fn open_maze_reaches_full_catalog() {
        let maze = parse_maze("A..B\n....\nC...\n").unwrap();
        let s = GridState::at(Pos::new(1, 1));
        assert_eq!(reachable_goals(&maze, &s).len(), 3);
    }

    #[test]
    fn two_paths_eval_object_reachable_from_corridor() {
        let maze = parse_maze(TWO_PATHS).unwrap();
        let (spawn, _) = maze.spawn_eval[0];
        let goals = reachable_goals(&maze, &GridState::at(spawn));
        assert_eq!(goals.len(), 3, "all objects reachable from the eval spawn");
    }

    #[test]
    fn shortest_path_trivial_and_corridor() {
        let maze = open_maze(6, 1);
        assert_eq!(
            shortest_path(&maze, Pos::new(0, 2), Pos::new(0, 2)).unwrap(),
            vec![]
        );
        let path = shortest_path(&maze, Pos::new(0, 0), Pos::new(0, 5)).unwrap();
        assert_eq!(path, vec![GridAction::Right; 5]);
    }

    #[test]
    fn shortest_path_unreachable() {
        let maze = parse_maze(".#.\n###\n...\n").unwrap();
        assert_eq!(
            shortest_path(&maze, Pos::new(0, 0), Pos::new(2, 2)),
            Err(GridError::Unreachable)
        );
    }

    // Independent Dijkstra oracle over the floor graph (uniform weights).
    fn dijkstra_len(maze: &Maze, start: Pos, target: Pos) -> Option<usize> {
        use std::collections::BinaryHeap;
        let idx = |p: Pos| p.row * maze.width + p.col;
        let mut dist = vec![usize::MAX; maze.width * maze.height];
        let mut heap = BinaryHeap::new();
        dist[idx(start)] = 0;
        heap.push(std::cmp::Reverse((0usize, start.row, start.col)));
        while let Some(std::cmp::Reverse((d, r, c))) = heap.pop() {
            let p = Pos::new(r, c);
            if p == target {
                return Some(d);
            }
            if d > dist[idx(p)] {
                continue;
            }
            if p != start && maze.objects.values().any(|&op| op == p) {
                continue;
            }
            for a in GridAction::ALL {
                let (dr, dc) = a.delta();
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if !maze.in_bounds(nr, nc) {
                    continue;
                }
                let np = Pos::new(nr as usize, nc as usize);
                if maze.cell(np) == Cell::Wall {
                    continue;
                }
                if np != target && maze.objects.values().any(|&op| op == np) {
                    continue;
                }
                if d + 1 < dist[idx(np)] {
                    dist[idx(np)] = d + 1;
                    heap.push(std::cmp::Reverse((d + 1, np.row, np.col)));
                }
            }
        }
        None
    }

    #[test]
    fn two_paths_shortest_matches_dijkstra_oracle() {
        let maze = parse_maze(TWO_PATHS).unwrap();
        let (spawn, _) = maze.spawn_eval[0];
        for &pos in maze.objects.values() {
            let got = shortest_path(&maze, spawn, pos).unwrap().len();
            let want = dijkstra_len(&maze, spawn, pos).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn executing_shortest_path_terminates_with_reward_one() {
        let maze = parse_maze(TWO_PATHS).unwrap();
        let goal = maze.goal(ObjectId('C')).unwrap();
        let (spawn, _) = maze.spawn_eval[0];
        let path = shortest_path(&maze, spawn, maze.objects[&goal.id]).unwrap();
        assert!(path.len() <= maze.step_cap());
        let mut s = GridState::at(spawn);
        for a in path {
            s = grid_step(&maze, &s, a).unwrap().0;
        }
        assert_eq!(grid_reward(&s, goal), 1.0);
    }

    fn arb_open_maze() -> impl Strategy<Value = (Maze, Pos)> {
        (3usize..7, 3usize..7, proptest::collection::vec(0.0f64..1.0, 36))
            .prop_map(|(w, h, noise)| {
                let mut text = String::new();
                for r in 0..h {
                    for c in 0..w {
                        let wall = r > 0
                            && c > 0
                            && r < h - 1
                            && c < w - 1
                            && noise[(r * w + c) % noise.len()] < 0.3;
                        text.push(if wall { '#' } else { '.' });
                    }
                    text.push('\n');
                }
                let maze = parse_maze(&text).unwrap();
                (maze, Pos::new(0, 0))
            })
    }

    proptest! {
        #[test]
        fn step_commutes_with_rotation((maze, start) in arb_open_maze(), a_idx in 0usize..4) {
            let action = GridAction::from_index(a_idx);
            let s = GridState::at(start);
            let (next, _) = grid_step(&maze, &s, action).unwrap();
            let rot = rotate_maze(&maze, 1);
            let rs = GridState::at(rotate_pos_once(start, maze.height));
            let (rnext, _) = grid_step(&rot, &rs, action.rotated()).unwrap();
            prop_assert_eq!(rnext.position, rotate_pos_once(next.position, maze.height));
        }

        #[test]
        fn reachability_monotone_under_wall_removal((maze, start) in arb_open_maze()) {
            let s = GridState::at(start);
            let before = reachable_goals(&maze, &s).len();
            let mut opened = maze.clone();
            if let Some(i) = opened.cells.iter().position(|&c| c == Cell::Wall) {
                opened.cells[i] = Cell::Floor;
            }
            let after = reachable_goals(&opened, &s).len();
            prop_assert!(after >= before);
        }
    }
}
