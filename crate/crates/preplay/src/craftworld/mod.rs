//! Desk-scale partially observable crafting world.
//!
//! A procedurally generated map (see [`gen`]) carries trees, craft tables,
//! and a chain of minerals whose subtasks form a fixed dependency DAG:
//! collect wood -> use craft table -> wood pickaxe -> mine stone -> stone
//! pickaxe -> mine iron -> iron pickaxe -> mine diamond / sapphire / ruby
//! (the three stones are siblings at the last level). The global task reward
//! is additive over per-subtask achievement deltas; goal-conditioned
//! single-stone tasks terminate on any stone collection.
//!
//! Worlds are immutable after generation. Agent-state keys are a
//! world-agnostic egocentric abstraction (nearest-direction per object kind
//! within the view, local passability, inventory presence, achieved bits), so
//! value tables trained on one set of worlds transfer to unseen ones exactly
//! when local object co-occurrence recurs.

pub mod gen;

use std::collections::BTreeMap;

use crate::domain::{Domain, GoalId, Pos, StateKey};

pub use gen::{generate_world, GenError, SeedManifest, WorldParams};

pub const N_SUBTASKS: usize = 10;
pub const GLOBAL_GOAL: GoalId = GoalId(N_SUBTASKS as u16);
pub const N_KINDS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Terrain {
    Floor,
    Wall,
    Water,
    Lava,
}

impl Terrain {
    pub fn passable(self) -> bool {
        self == Terrain::Floor
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[repr(u8)]
pub enum ObjectKind {
    Tree = 0,
    CraftTable = 1,
    Stone = 2,
    IronOre = 3,
    Diamond = 4,
    Sapphire = 5,
    Ruby = 6,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; N_KINDS] = [
        ObjectKind::Tree,
        ObjectKind::CraftTable,
        ObjectKind::Stone,
        ObjectKind::IronOre,
        ObjectKind::Diamond,
        ObjectKind::Sapphire,
        ObjectKind::Ruby,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Subtask {
    CollectWood = 0,
    UseCraftTable = 1,
    CraftWoodPickaxe = 2,
    MineStone = 3,
    CraftStonePickaxe = 4,
    MineIron = 5,
    CraftIronPickaxe = 6,
    MineDiamond = 7,
    MineSapphire = 8,
    MineRuby = 9,
}

impl Subtask {
    pub const ALL: [Subtask; N_SUBTASKS] = [
        Subtask::CollectWood,
        Subtask::UseCraftTable,
        Subtask::CraftWoodPickaxe,
        Subtask::MineStone,
        Subtask::CraftStonePickaxe,
        Subtask::MineIron,
        Subtask::CraftIronPickaxe,
        Subtask::MineDiamond,
        Subtask::MineSapphire,
        Subtask::MineRuby,
    ];

    pub const STONES: [Subtask; 3] = [Subtask::MineDiamond, Subtask::MineSapphire, Subtask::MineRuby];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn goal_id(self) -> GoalId {
        GoalId(self as u16)
    }
}

/// Per-subtask static rules: which earlier subtasks gate it and which object
/// kind its interaction needs.
#[derive(Debug, Clone)]
pub struct SubtaskSpec {
    pub subtask: Subtask,
    pub preconditions: &'static [Subtask],
    pub object: ObjectKind,
}

#[derive(Debug, Clone)]
pub struct SubtaskCatalog {
    specs: Vec<SubtaskSpec>,
}

impl SubtaskCatalog {
    pub fn standard() -> Self {
        use ObjectKind::*;
        use Subtask::*;
        let specs = vec![
            SubtaskSpec { subtask: CollectWood, preconditions: &[], object: Tree },
            SubtaskSpec { subtask: UseCraftTable, preconditions: &[CollectWood], object: CraftTable },
            SubtaskSpec { subtask: CraftWoodPickaxe, preconditions: &[UseCraftTable], object: CraftTable },
            SubtaskSpec { subtask: MineStone, preconditions: &[CraftWoodPickaxe], object: Stone },
            SubtaskSpec { subtask: CraftStonePickaxe, preconditions: &[MineStone], object: CraftTable },
            SubtaskSpec { subtask: MineIron, preconditions: &[CraftStonePickaxe], object: IronOre },
            SubtaskSpec { subtask: CraftIronPickaxe, preconditions: &[MineIron], object: CraftTable },
            SubtaskSpec { subtask: MineDiamond, preconditions: &[CraftIronPickaxe], object: Diamond },
            SubtaskSpec { subtask: MineSapphire, preconditions: &[CraftIronPickaxe], object: Sapphire },
            SubtaskSpec { subtask: MineRuby, preconditions: &[CraftIronPickaxe], object: Ruby },
        ];
        let catalog = SubtaskCatalog { specs };
        debug_assert!(catalog.is_dag());
        catalog
    }

    pub fn specs(&self) -> &[SubtaskSpec] {
        &self.specs
    }

    pub fn spec(&self, s: Subtask) -> &SubtaskSpec {
        &self.specs[s.index()]
    }

    pub fn precondition_mask(&self, s: Subtask) -> u16 {
        self.specs[s.index()]
            .preconditions
            .iter()
            .map(|p| p.bit())
            .fold(0, |m, b| m | b)
    }

    /// Preconditions may only reference earlier subtasks.
    fn is_dag(&self) -> bool {
        self.specs.iter().enumerate().all(|(i, spec)| {
            spec.preconditions.iter().all(|p| p.index() < i)
        })
    }
}

pub const TOOL_WOOD_PICKAXE: u8 = 1 << 0;
pub const TOOL_STONE_PICKAXE: u8 = 1 << 1;
pub const TOOL_IRON_PICKAXE: u8 = 1 << 2;

const INVENTORY_CAP: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inventory {
    pub wood: u8,
    pub stone: u8,
    pub iron: u8,
    pub tools: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CraftState {
    pub position: Pos,
    pub inventory: Inventory,
    /// phi_achieved as a bit mask over [`Subtask`] indices; monotone within
    /// an episode.
    pub achieved: u16,
    pub steps: u32,
    /// Previous action index (8 = none yet). The recurrent agent state this
    /// table stands in for conditions on the last action; carrying it in the
    /// key lets policies learn to traverse view-empty regions instead of
    /// oscillating between aliased cells.
    pub last_action: u8,
}

impl CraftState {
    pub fn has(&self, s: Subtask) -> bool {
        self.achieved & s.bit() != 0
    }

    pub fn achieved_vec(&self) -> Vec<bool> {
        (0..N_SUBTASKS).map(|i| self.achieved >> i & 1 == 1).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CraftAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Do = 4,
    MakeWoodPickaxe = 5,
    MakeStonePickaxe = 6,
    MakeIronPickaxe = 7,
}

impl CraftAction {
    pub const ALL: [CraftAction; 8] = [
        CraftAction::Up,
        CraftAction::Down,
        CraftAction::Left,
        CraftAction::Right,
        CraftAction::Do,
        CraftAction::MakeWoodPickaxe,
        CraftAction::MakeStonePickaxe,
        CraftAction::MakeIronPickaxe,
    ];

    pub fn from_index(i: usize) -> CraftAction {
        Self::ALL[i]
    }
}

/// How phi_avail gates a subtask: on preconditions plus world object
/// existence (default), or strictly on the object being inside the current
/// view (the randomization-ablation variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailabilityMode {
    Preconditions,
    VisibleOnly,
}

#[derive(Debug, Clone)]
pub struct World {
    pub params: WorldParams,
    pub seed: u64,
    pub terrain: Vec<Terrain>,
    pub objects: BTreeMap<Pos, ObjectKind>,
    pub spawns: Vec<Pos>,
    pub catalog: SubtaskCatalog,
    // Caches rebuilt by finalize(): never serialized.
    object_grid: Vec<Option<ObjectKind>>,
    view_key: Vec<u64>,
    kind_visible: Vec<u8>,
    kind_exists: u8,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.params == other.params
            && self.terrain == other.terrain
            && self.objects == other.objects
            && self.spawns == other.spawns
    }
}

impl World {
    /// Build a world from explicit parts (generation and tests both land here).
    pub fn from_parts(
        params: WorldParams,
        seed: u64,
        terrain: Vec<Terrain>,
        objects: BTreeMap<Pos, ObjectKind>,
        spawns: Vec<Pos>,
    ) -> World {
        assert_eq!(terrain.len(), params.size * params.size);
        for &pos in objects.keys() {
            assert_eq!(
                terrain[pos.row * params.size + pos.col],
                Terrain::Floor,
                "objects must lie on floor"
            );
        }
        let mut world = World {
            params,
            seed,
            terrain,
            objects,
            spawns,
            catalog: SubtaskCatalog::standard(),
            object_grid: Vec::new(),
            view_key: Vec::new(),
            kind_visible: Vec::new(),
            kind_exists: 0,
        };
        world.finalize();
        world
    }

    pub fn size(&self) -> usize {
        self.params.size
    }

    fn idx(&self, pos: Pos) -> usize {
        pos.row * self.params.size + pos.col
    }

    pub fn terrain_at(&self, pos: Pos) -> Terrain {
        self.terrain[self.idx(pos)]
    }

    pub fn object_at(&self, pos: Pos) -> Option<ObjectKind> {
        self.object_grid[self.idx(pos)]
    }

    /// A cell the agent may stand on.
    pub fn walkable(&self, pos: Pos) -> bool {
        if !self.terrain_at(pos).passable() {
            return false;
        }
        match self.object_at(pos) {
            None => true,
            // Strength simplification: non-precious stones are passable.
            Some(ObjectKind::Stone) => self.params.strength,
            Some(_) => false,
        }
    }

    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.params.size && (col as usize) < self.params.size
    }

    pub fn initial_state(&self, spawn_index: usize) -> CraftState {
        let mut s = CraftState {
            position: self.spawns[spawn_index % self.spawns.len()],
            inventory: Inventory::default(),
            achieved: 0,
            steps: 0,
            last_action: 8,
        };
        if self.params.strength {
            // Start with the full tool chain; the tool-chain subtasks count
            // as already met so only the stone goals remain.
            s.inventory.tools = TOOL_WOOD_PICKAXE | TOOL_STONE_PICKAXE | TOOL_IRON_PICKAXE;
            for sub in &Subtask::ALL[..7] {
                s.achieved |= sub.bit();
            }
        }
        s
    }

    /// Rebuild derived lookup tables (object grid, per-position egocentric
    /// view keys, kind visibility masks).
    ///
    /// The view key compresses the local view into five channels (tree,
    /// table, stone, iron ore, any precious stone) with a dominant-axis
    /// direction toward the nearest instance, plus the identity of the
    /// nearest precious stone and a local passability mask. Coarseness is
    /// deliberate: the key is the generalization radius of the tabular
    /// value store, and held-out worlds must mostly hit trained entries.
    fn finalize(&mut self) {
        let n = self.params.size * self.params.size;
        let size = self.params.size;
        self.object_grid = vec![None; n];
        for (&pos, &kind) in &self.objects {
            self.object_grid[pos.row * size + pos.col] = Some(kind);
        }
        self.kind_exists = self
            .objects
            .values()
            .fold(0, |m, k| m | 1 << k.index());
        self.kind_visible = vec![0; n];
        self.view_key = vec![0; n];
        let k = self.params.view_radius as isize;
        // Channel of each kind: precious stones share channel 4.
        let channel = |kind: ObjectKind| -> usize {
            match kind {
                ObjectKind::Tree => 0,
                ObjectKind::CraftTable => 1,
                ObjectKind::Stone => 2,
                ObjectKind::IronOre => 3,
                ObjectKind::Diamond | ObjectKind::Sapphire | ObjectKind::Ruby => 4,
            }
        };
        for row in 0..size {
            for col in 0..size {
                let here = Pos::new(row, col);
                let mut visible = 0u8;
                // Nearest instance per channel: (manhattan, dr, dc, kind).
                let mut best: [Option<(usize, isize, isize, ObjectKind)>; 5] = [None; 5];
                for dr in -k..=k {
                    for dc in -k..=k {
                        let (nr, nc) = (row as isize + dr, col as isize + dc);
                        if !self.in_bounds(nr, nc) {
                            continue;
                        }
                        let Some(kind) = self.object_grid[nr as usize * size + nc as usize]
                        else {
                            continue;
                        };
                        visible |= 1 << kind.index();
                        let ch = channel(kind);
                        let d = dr.unsigned_abs() + dc.unsigned_abs();
                        if best[ch].map_or(true, |(bd, br, bc, _)| (d, dr, dc) < (bd, br, bc)) {
                            best[ch] = Some((d, dr, dc, kind));
                        }
                    }
                }
                let mut key = 0u64;
                for (ch, slot) in best.iter().enumerate() {
                    // 0 = absent; 1..=4 = dominant-axis direction up/down/left/right.
                    let bucket = match slot {
                        None => 0u64,
                        Some((_, dr, dc, _)) => {
                            if dr.abs() >= dc.abs() && *dr != 0 {
                                if *dr < 0 { 1 } else { 2 }
                            } else if *dc != 0 {
                                if *dc < 0 { 3 } else { 4 }
                            } else {
                                // Standing beside it with |dr| = |dc| = 0 is
                                // impossible (objects block); |dr| = |dc| falls
                                // into the vertical arm above.
                                1
                            }
                        }
                    };
                    key |= bucket << (3 * ch);
                }
                let precious_id = match best[4] {
                    None => 0u64,
                    Some((_, _, _, ObjectKind::Diamond)) => 1,
                    Some((_, _, _, ObjectKind::Sapphire)) => 2,
                    Some((_, _, _, _)) => 3,
                };
                key |= precious_id << 15;
                let mut blocked = 0u64;
                for (i, (dr, dc)) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().enumerate() {
                    let (nr, nc) = (row as isize + dr, col as isize + dc);
                    let open = self.in_bounds(nr, nc)
                        && self.walkable(Pos::new(nr as usize, nc as usize));
                    if !open {
                        blocked |= 1 << i;
                    }
                }
                key |= blocked << 17;
                self.view_key[here.row * size + here.col] = key;
                self.kind_visible[here.row * size + here.col] = visible;
            }
        }
    }

    /// Object kinds visible within the view radius from `pos` (bitmask over
    /// [`ObjectKind`] indices).
    pub fn visible_kinds(&self, pos: Pos) -> u8 {
        self.kind_visible[self.idx(pos)]
    }

    /// World-agnostic agent-state key: egocentric view summary, passability,
    /// inventory presence, tools, achieved bits, and the previous action (the
    /// tabular stand-in for the recurrent agent state).
    pub fn agent_state_key(&self, s: &CraftState) -> u64 {
        let mut key = self.view_key[self.idx(s.position)];
        key |= (s.achieved as u64) << 32;
        let inv = &s.inventory;
        key |= ((inv.wood > 0) as u64) << 42;
        key |= ((inv.stone > 0) as u64) << 43;
        key |= ((inv.iron > 0) as u64) << 44;
        key |= (inv.tools as u64) << 45;
        key |= (s.last_action as u64) << 48;
        key
    }

    /// phi_avail as a bitmask (see [`compute_availability`]).
    pub fn availability_mask(&self, s: &CraftState) -> u16 {
        let mut mask = 0u16;
        for spec in self.catalog.specs() {
            let bit = spec.subtask.bit();
            if s.achieved & bit != 0 {
                continue; // one-shot: achieved subtasks are no longer available
            }
            if s.achieved & self.catalog.precondition_mask(spec.subtask)
                != self.catalog.precondition_mask(spec.subtask)
            {
                continue;
            }
            let present = match self.params.availability_mode {
                AvailabilityMode::Preconditions => self.kind_exists & (1 << spec.object.index()) != 0,
                AvailabilityMode::VisibleOnly => {
                    self.visible_kinds(s.position) & (1 << spec.object.index()) != 0
                }
            };
            if present {
                mask |= bit;
            }
        }
        mask
    }
}

/// phi_avail: bit i is set iff subtask i is unachieved, its precondition
/// subtasks are all achieved, and a required object kind exists (or is
/// visible, in the strict mode).
pub fn compute_availability(world: &World, s: &CraftState) -> Vec<bool> {
    let mask = world.availability_mask(s);
    (0..N_SUBTASKS).map(|i| mask >> i & 1 == 1).collect()
}

/// Newly achieved subtasks on a transition, as a bitmask.
pub fn achieved_delta(prev: &CraftState, next: &CraftState) -> u16 {
    next.achieved & !prev.achieved
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CraftError {
    #[error("length mismatch: delta has {delta} entries, weights have {weights}")]
    LengthMismatch { delta: usize, weights: usize },
}

/// Additive global reward: dot product of per-subtask achievement deltas and
/// the task weight vector.
pub fn global_reward(delta: &[f64], w_g: &[f64]) -> Result<f64, CraftError> {
    if delta.len() != w_g.len() {
        return Err(CraftError::LengthMismatch {
            delta: delta.len(),
            weights: w_g.len(),
        });
    }
    Ok(delta.iter().zip(w_g).map(|(d, w)| d * w).sum())
}

fn interaction_legal(s: &CraftState, kind: ObjectKind) -> bool {
    let inv = &s.inventory;
    match kind {
        ObjectKind::Tree => true,
        ObjectKind::CraftTable => inv.wood >= 1 && !s.has(Subtask::UseCraftTable),
        ObjectKind::Stone => inv.tools & TOOL_WOOD_PICKAXE != 0,
        ObjectKind::IronOre => inv.tools & TOOL_STONE_PICKAXE != 0,
        ObjectKind::Diamond => {
            inv.tools & TOOL_IRON_PICKAXE != 0 && !s.has(Subtask::MineDiamond)
        }
        ObjectKind::Sapphire => {
            inv.tools & TOOL_IRON_PICKAXE != 0 && !s.has(Subtask::MineSapphire)
        }
        ObjectKind::Ruby => inv.tools & TOOL_IRON_PICKAXE != 0 && !s.has(Subtask::MineRuby),
    }
}

fn adjacent_kind(world: &World, pos: Pos, kind: ObjectKind) -> bool {
    for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
        let (nr, nc) = (pos.row as isize + dr, pos.col as isize + dc);
        if world.in_bounds(nr, nc)
            && world.object_at(Pos::new(nr as usize, nc as usize)) == Some(kind)
        {
            return true;
        }
    }
    false
}

/// Environment step. Movement is blocked by walls, water, lava, and occupied
/// cells; `Do` interacts with the first adjacent object (scan order up, down,
/// left, right) whose interaction preconditions are met; crafting actions
/// need an adjacent craft table plus resources. Illegal actions are no-ops.
/// Returns the successor and the newly achieved subtasks as a bitmask.
pub fn craft_step_mask(world: &World, s: &CraftState, action: CraftAction) -> (CraftState, u16) {
    debug_assert!((s.steps as usize) < world.params.step_cap, "stepped past cap");
    let mut next = *s;
    next.steps = s.steps.saturating_add(1);
    next.last_action = action as u8;
    match action {
        CraftAction::Up | CraftAction::Down | CraftAction::Left | CraftAction::Right => {
            let (dr, dc) = match action {
                CraftAction::Up => (-1isize, 0isize),
                CraftAction::Down => (1, 0),
                CraftAction::Left => (0, -1),
                _ => (0, 1),
            };
            let (nr, nc) = (s.position.row as isize + dr, s.position.col as isize + dc);
            if world.in_bounds(nr, nc) {
                let p = Pos::new(nr as usize, nc as usize);
                if world.walkable(p) {
                    next.position = p;
                }
            }
        }
        CraftAction::Do => {
            for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (s.position.row as isize + dr, s.position.col as isize + dc);
                if !world.in_bounds(nr, nc) {
                    continue;
                }
                let p = Pos::new(nr as usize, nc as usize);
                let Some(kind) = world.object_at(p) else { continue };
                if !interaction_legal(s, kind) {
                    continue;
                }
                let inv = &mut next.inventory;
                match kind {
                    ObjectKind::Tree => {
                        inv.wood = (inv.wood + 1).min(INVENTORY_CAP);
                        next.achieved |= Subtask::CollectWood.bit();
                    }
                    ObjectKind::CraftTable => {
                        // Tables pre-exist in the world; qualifying at one
                        // requires wood in hand but does not consume it.
                        next.achieved |= Subtask::UseCraftTable.bit();
                    }
                    ObjectKind::Stone => {
                        inv.stone = (inv.stone + 1).min(INVENTORY_CAP);
                        next.achieved |= Subtask::MineStone.bit();
                    }
                    ObjectKind::IronOre => {
                        inv.iron = (inv.iron + 1).min(INVENTORY_CAP);
                        next.achieved |= Subtask::MineIron.bit();
                    }
                    ObjectKind::Diamond => next.achieved |= Subtask::MineDiamond.bit(),
                    ObjectKind::Sapphire => next.achieved |= Subtask::MineSapphire.bit(),
                    ObjectKind::Ruby => next.achieved |= Subtask::MineRuby.bit(),
                }
                break;
            }
        }
        CraftAction::MakeWoodPickaxe => {
            if adjacent_kind(world, s.position, ObjectKind::CraftTable)
                && s.has(Subtask::UseCraftTable)
                && !s.has(Subtask::CraftWoodPickaxe)
                && s.inventory.wood >= 1
            {
                next.inventory.wood -= 1;
                next.inventory.tools |= TOOL_WOOD_PICKAXE;
                next.achieved |= Subtask::CraftWoodPickaxe.bit();
            }
        }
        CraftAction::MakeStonePickaxe => {
            if adjacent_kind(world, s.position, ObjectKind::CraftTable)
                && s.has(Subtask::MineStone)
                && !s.has(Subtask::CraftStonePickaxe)
                && s.inventory.stone >= 1
            {
                next.inventory.stone -= 1;
                next.inventory.tools |= TOOL_STONE_PICKAXE;
                next.achieved |= Subtask::CraftStonePickaxe.bit();
            }
        }
        CraftAction::MakeIronPickaxe => {
            if adjacent_kind(world, s.position, ObjectKind::CraftTable)
                && s.has(Subtask::MineIron)
                && !s.has(Subtask::CraftIronPickaxe)
                && s.inventory.iron >= 1
            {
                next.inventory.iron -= 1;
                next.inventory.tools |= TOOL_IRON_PICKAXE;
                next.achieved |= Subtask::CraftIronPickaxe.bit();
            }
        }
    }
    let delta = achieved_delta(s, &next);
    (next, delta)
}

/// Spec-shaped step: returns the per-subtask achievement deltas as a vector.
pub fn craft_step(world: &World, s: &CraftState, action: CraftAction) -> (CraftState, Vec<f64>) {
    let (next, mask) = craft_step_mask(world, s, action);
    let reward_vector = (0..N_SUBTASKS)
        .map(|i| if mask >> i & 1 == 1 { 1.0 } else { 0.0 })
        .collect();
    (next, reward_vector)
}

/// Egocentric observation: (2k+1)^2 patch of terrain and objects centered on
/// the agent (out-of-map cells render as walls), phi_avail, phi_achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub view_radius: usize,
    pub local_view: Vec<(Terrain, Option<ObjectKind>)>,
    pub avail: Vec<bool>,
    pub achieved: Vec<bool>,
}

impl Observation {
    pub fn view_cell(&self, dr: isize, dc: isize) -> (Terrain, Option<ObjectKind>) {
        let k = self.view_radius as isize;
        debug_assert!(dr.abs() <= k && dc.abs() <= k);
        let side = 2 * self.view_radius + 1;
        self.local_view[((dr + k) as usize) * side + (dc + k) as usize]
    }
}

pub fn observe(world: &World, s: &CraftState, view_radius: usize) -> Observation {
    let k = view_radius as isize;
    let side = 2 * view_radius + 1;
    let mut local_view = Vec::with_capacity(side * side);
    for dr in -k..=k {
        for dc in -k..=k {
            let (nr, nc) = (s.position.row as isize + dr, s.position.col as isize + dc);
            if world.in_bounds(nr, nc) {
                let p = Pos::new(nr as usize, nc as usize);
                local_view.push((world.terrain_at(p), world.object_at(p)));
            } else {
                local_view.push((Terrain::Wall, None));
            }
        }
    }
    Observation {
        view_radius,
        local_view,
        avail: compute_availability(world, s),
        achieved: s.achieved_vec(),
    }
}

/// Which task an episode pursues: the single additive global task, or a
/// goal-conditioned stone task that terminates on any stone collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CraftTask {
    Global,
    Stone(Subtask),
}

/// Craft world behind the shared [`Domain`] contract.
pub struct CraftDomain {
    pub world: World,
    pub task: CraftTask,
    pub w_global: Vec<f64>,
}

impl CraftDomain {
    pub fn new(world: World, task: CraftTask) -> Self {
        CraftDomain {
            world,
            task,
            w_global: vec![1.0; N_SUBTASKS],
        }
    }

    pub fn pursued_goal(&self) -> GoalId {
        match self.task {
            CraftTask::Global => GLOBAL_GOAL,
            CraftTask::Stone(s) => s.goal_id(),
        }
    }

    const STONE_MASK: u16 =
        Subtask::MineDiamond.bit() | Subtask::MineSapphire.bit() | Subtask::MineRuby.bit();
}

impl Domain for CraftDomain {
    type State = CraftState;

    fn n_actions(&self) -> usize {
        8
    }

    fn n_goals(&self) -> usize {
        N_SUBTASKS + 1
    }

    fn step(&self, state: &CraftState, action: u8) -> CraftState {
        craft_step_mask(&self.world, state, CraftAction::from_index(action as usize)).0
    }

    fn is_terminal(&self, state: &CraftState) -> bool {
        match self.task {
            CraftTask::Global => state.achieved == (1 << N_SUBTASKS) - 1,
            // Any stone ends a goal-conditioned episode, like any maze object.
            CraftTask::Stone(_) => state.achieved & Self::STONE_MASK != 0,
        }
    }

    fn reward(&self, prev: &CraftState, next: &CraftState, goal: GoalId) -> f64 {
        let delta = achieved_delta(prev, next);
        if goal == GLOBAL_GOAL {
            let mut r = 0.0;
            for i in 0..N_SUBTASKS {
                if delta >> i & 1 == 1 {
                    r += self.w_global[i];
                }
            }
            r
        } else if delta >> goal.index() & 1 == 1 {
            1.0
        } else {
            0.0
        }
    }

    fn state_key(&self, state: &CraftState) -> StateKey {
        StateKey(self.world.agent_state_key(state))
    }

    fn accessible_goals(&self, state: &CraftState, out: &mut Vec<GoalId>) {
        out.clear();
        let mask = self.world.availability_mask(state);
        for i in 0..N_SUBTASKS {
            if mask >> i & 1 == 1 {
                out.push(GoalId(i as u16));
            }
        }
    }

    fn features(&self, prev: &CraftState, next: &CraftState, buf: &mut [f64]) {
        buf.fill(0.0);
        let visible = self.world.visible_kinds(next.position);
        for k in 0..N_KINDS {
            if visible >> k & 1 == 1 {
                buf[k] = 1.0;
            }
        }
        let delta = achieved_delta(prev, next);
        for i in 0..N_SUBTASKS {
            if delta >> i & 1 == 1 {
                buf[N_KINDS + i] = 1.0;
            }
        }
    }

    fn feature_dim(&self) -> usize {
        N_KINDS + N_SUBTASKS
    }

    fn goal_preference(&self, goal: GoalId) -> Vec<f64> {
        let mut w = vec![0.0; self.feature_dim()];
        if goal == GLOBAL_GOAL {
            w[N_KINDS..].copy_from_slice(&self.w_global);
        } else {
            w[N_KINDS + goal.index()] = 1.0;
        }
        w
    }

    fn truncated(&self, state: &CraftState) -> bool {
        state.steps as usize >= self.world.params.step_cap
    }
}

/// Shortest walkable route from `start` to a cell adjacent to the nearest
/// instance of `kind` (where `Do` can interact with it). Used as the
/// canonical training-path baseline for reuse metrics.
pub fn optimal_positions_to(world: &World, start: Pos, kind: ObjectKind) -> Option<Vec<Pos>> {
    use std::collections::VecDeque;
    let size = world.size();
    let idx = |p: Pos| p.row * size + p.col;
    let mut parent: Vec<Option<Pos>> = vec![None; size * size];
    let mut seen = vec![false; size * size];
    let mut queue = VecDeque::new();
    seen[idx(start)] = true;
    queue.push_back(start);
    let adjacent_to_kind = |p: Pos| {
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| {
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            world.in_bounds(nr, nc)
                && world.object_at(Pos::new(nr as usize, nc as usize)) == Some(kind)
        })
    };
    while let Some(p) = queue.pop_front() {
        if adjacent_to_kind(p) {
            let mut path = vec![p];
            let mut cur = p;
            while let Some(prev) = parent[idx(cur)] {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return Some(path);
        }
        for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            if !world.in_bounds(nr, nc) {
                continue;
            }
            let np = Pos::new(nr as usize, nc as usize);
            if !seen[idx(np)] && world.walkable(np) {
                seen[idx(np)] = true;
                parent[idx(np)] = Some(p);
                queue.push_back(np);
            }
        }
    }
    None
}

/// Several worlds sharing one egocentric key space, for cross-environment
/// transfer training: states carry their world index, dynamics and rewards
/// delegate to that world, and the learned tables apply to all of them.
pub struct CraftEnsemble {
    pub worlds: Vec<World>,
    pub task: CraftTask,
    pub w_global: Vec<f64>,
}

impl CraftEnsemble {
    pub fn new(worlds: Vec<World>, task: CraftTask) -> Self {
        assert!(!worlds.is_empty());
        CraftEnsemble {
            worlds,
            task,
            w_global: vec![1.0; N_SUBTASKS],
        }
    }

    pub fn world(&self, idx: u16) -> &World {
        &self.worlds[idx as usize]
    }
}

impl Domain for CraftEnsemble {
    type State = (u16, CraftState);

    fn n_actions(&self) -> usize {
        8
    }

    fn n_goals(&self) -> usize {
        N_SUBTASKS + 1
    }

    fn step(&self, state: &(u16, CraftState), action: u8) -> (u16, CraftState) {
        let (w, s) = state;
        (
            *w,
            craft_step_mask(&self.worlds[*w as usize], s, CraftAction::from_index(action as usize)).0,
        )
    }

    fn is_terminal(&self, state: &(u16, CraftState)) -> bool {
        let stone_mask = CraftDomain::STONE_MASK;
        match self.task {
            CraftTask::Global => state.1.achieved == (1 << N_SUBTASKS) - 1,
            CraftTask::Stone(_) => state.1.achieved & stone_mask != 0,
        }
    }

    fn truncated(&self, state: &(u16, CraftState)) -> bool {
        state.1.steps as usize >= self.worlds[state.0 as usize].params.step_cap
    }

    fn reward(&self, prev: &(u16, CraftState), next: &(u16, CraftState), goal: GoalId) -> f64 {
        let delta = achieved_delta(&prev.1, &next.1);
        if goal == GLOBAL_GOAL {
            (0..N_SUBTASKS)
                .filter(|i| delta >> i & 1 == 1)
                .map(|i| self.w_global[i])
                .sum()
        } else if delta >> goal.index() & 1 == 1 {
            1.0
        } else {
            0.0
        }
    }

    fn state_key(&self, state: &(u16, CraftState)) -> StateKey {
        StateKey(self.worlds[state.0 as usize].agent_state_key(&state.1))
    }

    fn accessible_goals(&self, state: &(u16, CraftState), out: &mut Vec<GoalId>) {
        out.clear();
        let mask = self.worlds[state.0 as usize].availability_mask(&state.1);
        for i in 0..N_SUBTASKS {
            if mask >> i & 1 == 1 {
                out.push(GoalId(i as u16));
            }
        }
    }

    fn features(&self, prev: &(u16, CraftState), next: &(u16, CraftState), buf: &mut [f64]) {
        buf.fill(0.0);
        let visible = self.worlds[next.0 as usize].visible_kinds(next.1.position);
        for k in 0..N_KINDS {
            if visible >> k & 1 == 1 {
                buf[k] = 1.0;
            }
        }
        let delta = achieved_delta(&prev.1, &next.1);
        for i in 0..N_SUBTASKS {
            if delta >> i & 1 == 1 {
                buf[N_KINDS + i] = 1.0;
            }
        }
    }

    fn feature_dim(&self) -> usize {
        N_KINDS + N_SUBTASKS
    }

    fn goal_preference(&self, goal: GoalId) -> Vec<f64> {
        let mut w = vec![0.0; self.feature_dim()];
        if goal == GLOBAL_GOAL {
            w[N_KINDS..].copy_from_slice(&self.w_global);
        } else {
            w[N_KINDS + goal.index()] = 1.0;
        }
        w
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::world_from_map;
    use super::*;

    fn small_params() -> WorldParams {
        WorldParams {
            size: 8,
            ..WorldParams::default()
        }
    }

    // 8x8 map with the full subtask chain laid out in a line.
    const CHAIN_MAP: &str = "
        ########
        #@T.C..#
        #......#
        #S.I...#
        #......#
        #D.P.R.#
        #......#
        ########
    ";

    #[test]
    fn do_on_empty_floor_is_noop_with_zero_reward() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let s = CraftState {
            position: Pos::new(4, 4),
            ..world.initial_state(0)
        };
        let (next, reward) = craft_step(&world, &s, CraftAction::Do);
        assert_eq!(next.position, s.position);
        assert_eq!(next.achieved, s.achieved);
        assert!(reward.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn do_on_diamond_without_pickaxe_is_noop() {
        let world = world_from_map(CHAIN_MAP, small_params());
        // (5,2) has the diamond to its left and nothing else adjacent.
        let s = CraftState {
            position: Pos::new(5, 2),
            ..world.initial_state(0)
        };
        let (next, _) = craft_step(&world, &s, CraftAction::Do);
        assert_eq!(next.achieved, s.achieved);
        assert_eq!(next.inventory, s.inventory);
    }

    // Hand-traced route over CHAIN_MAP: tree (1,2), table (1,4), stone (3,1),
    // iron (3,3), diamond (5,1). Objects block movement, so the route skirts
    // them along rows 2 and 4.
    fn full_chain_script() -> Vec<CraftAction> {
        use CraftAction::*;
        vec![
            Do, Do, // wood x2 from the tree at (1,2)
            Down, Right, Right, Right, // (1,1) -> (2,4)
            Do, // use table above (consumes one wood)
            MakeWoodPickaxe, // consumes the second wood
            Left, Left, Left, // (2,1)
            Do, // mine stone below at (3,1)
            Right, Right, Right, // (2,4)
            MakeStonePickaxe,
            Left, // (2,3)
            Do, // mine iron below at (3,3)
            Right, // (2,4)
            MakeIronPickaxe,
            Down, Down, Left, Left, Down, // (2,4) -> (5,2)
            Do, // mine diamond at (5,1)
        ]
    }

    #[test]
    fn scripted_chain_flips_achieved_in_dependency_order() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let mut s = world.initial_state(0);
        let mut flips: Vec<Subtask> = Vec::new();
        for a in full_chain_script() {
            let (next, delta) = craft_step_mask(&world, &s, a);
            for sub in Subtask::ALL {
                if delta & sub.bit() != 0 {
                    flips.push(sub);
                }
            }
            s = next;
        }
        let want = [
            Subtask::CollectWood,
            Subtask::UseCraftTable,
            Subtask::CraftWoodPickaxe,
            Subtask::MineStone,
            Subtask::CraftStonePickaxe,
            Subtask::MineIron,
            Subtask::CraftIronPickaxe,
            Subtask::MineDiamond,
        ];
        assert_eq!(flips, want, "achieved bits flip in dependency order");
        assert!(s.has(Subtask::MineDiamond));
    }

    #[test]
    fn full_chain_rewards_add_up() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let mut s = world.initial_state(0);
        let w = vec![1.0; N_SUBTASKS];
        let mut total_global = 0.0;
        let mut per_subtask = vec![0.0; N_SUBTASKS];
        for a in full_chain_script() {
            let (next, reward_vec) = craft_step(&world, &s, a);
            total_global += global_reward(&reward_vec, &w).unwrap();
            for (acc, r) in per_subtask.iter_mut().zip(&reward_vec) {
                *acc += r;
            }
            s = next;
        }
        // Reward additivity is exact, no tolerance.
        assert_eq!(total_global, per_subtask.iter().sum::<f64>());
        assert_eq!(total_global, 8.0);
    }

    #[test]
    fn global_reward_cases() {
        let w = vec![1.0; 3];
        assert_eq!(global_reward(&[0.0, 0.0, 0.0], &w).unwrap(), 0.0);
        assert_eq!(global_reward(&[0.0, 1.0, 0.0], &[0.5, 2.0, 1.0]).unwrap(), 2.0);
        assert_eq!(global_reward(&[1.0, 1.0, 1.0], &w).unwrap(), 3.0);
        assert!(matches!(
            global_reward(&[1.0], &w),
            Err(CraftError::LengthMismatch { delta: 1, weights: 3 })
        ));
    }

    #[test]
    fn availability_gates_on_preconditions_and_one_shot() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let s = world.initial_state(0);
        let avail = compute_availability(&world, &s);
        assert!(avail[Subtask::CollectWood.index()]);
        assert!(!avail[Subtask::UseCraftTable.index()]);
        assert!(!avail[Subtask::MineDiamond.index()]);
        assert_eq!(avail.iter().filter(|&&b| b).count(), 1);

        // After the wood pickaxe, mining stone becomes available.
        let mut s2 = s;
        s2.achieved |= Subtask::CollectWood.bit()
            | Subtask::UseCraftTable.bit()
            | Subtask::CraftWoodPickaxe.bit();
        let avail2 = compute_availability(&world, &s2);
        assert!(avail2[Subtask::MineStone.index()]);
        assert!(!avail2[Subtask::CraftWoodPickaxe.index()], "one-shot");

        // With everything achieved, nothing is available.
        let mut s3 = s;
        s3.achieved = (1 << N_SUBTASKS) - 1;
        assert!(compute_availability(&world, &s3).iter().all(|&b| !b));
    }

    #[test]
    fn visible_only_mode_requires_object_in_view() {
        let mut params = small_params();
        params.availability_mode = AvailabilityMode::VisibleOnly;
        params.view_radius = 2;
        let world = world_from_map(CHAIN_MAP, params);
        // Spawn at (1,1): tree at (1,2) is in view; diamond at (5,1) is not.
        let mut s = world.initial_state(0);
        s.achieved = Subtask::ALL[..7].iter().map(|t| t.bit()).fold(0, |m, b| m | b);
        s.inventory.tools = TOOL_IRON_PICKAXE | TOOL_STONE_PICKAXE | TOOL_WOOD_PICKAXE;
        let avail = compute_availability(&world, &s);
        assert!(!avail[Subtask::MineDiamond.index()], "diamond out of view");
        let s_near = CraftState {
            position: Pos::new(4, 2),
            ..s
        };
        let avail_near = compute_availability(&world, &s_near);
        assert!(avail_near[Subtask::MineDiamond.index()]);
    }

    #[test]
    fn observe_pads_out_of_bounds_with_wall_and_sees_nearby_objects() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let s = world.initial_state(0); // corner-ish at (1,1)
        let obs = observe(&world, &s, 3);
        assert_eq!(obs.view_cell(-2, -2), (Terrain::Wall, None), "out of bounds");
        assert_eq!(obs.view_cell(0, 1).1, Some(ObjectKind::Tree));
        assert_eq!(obs.local_view.len(), 49);
    }

    #[test]
    fn avail_bit_flips_exactly_when_pickaxe_acquired() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let mut s = world.initial_state(0);
        use CraftAction::*;
        for a in [Do, Do, Down, Right, Right, Right, Do] {
            assert!(!compute_availability(&world, &s)[Subtask::MineStone.index()]);
            s = craft_step_mask(&world, &s, a).0;
        }
        assert!(!compute_availability(&world, &s)[Subtask::MineStone.index()]);
        s = craft_step_mask(&world, &s, MakeWoodPickaxe).0;
        assert!(compute_availability(&world, &s)[Subtask::MineStone.index()]);
    }

    #[test]
    fn movement_blocked_by_water_lava_objects() {
        let map = "
            ########
            #@wl...#
            #T#....#
            #......#
            #......#
            #......#
            #......#
            ########
        ";
        let world = world_from_map(map, small_params());
        let s = world.initial_state(0);
        let (right, _) = craft_step_mask(&world, &s, CraftAction::Right);
        assert_eq!(right.position, s.position, "water blocks");
        let (down, _) = craft_step_mask(&world, &s, CraftAction::Down);
        assert_eq!(down.position, s.position, "tree blocks");
        let (up, _) = craft_step_mask(&world, &s, CraftAction::Up);
        assert_eq!(up.position, s.position, "wall blocks");
    }

    #[test]
    fn achieved_is_monotone_along_any_action_sequence() {
        use rand::Rng as _;
        use rand::SeedableRng as _;
        let world = world_from_map(CHAIN_MAP, small_params());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut s = world.initial_state(0);
            for _ in 0..120 {
                let a = CraftAction::from_index(rng.gen_range(0..8));
                let (next, _) = craft_step_mask(&world, &s, a);
                assert_eq!(next.achieved & s.achieved, s.achieved, "monotone");
                assert!(next.inventory.wood <= INVENTORY_CAP);
                s = next;
            }
        }
    }

    #[test]
    fn strength_mode_starts_with_tools_and_passable_stones() {
        let mut params = small_params();
        params.strength = true;
        let map = "
            ########
            #@S....#
            #......#
            #..D...#
            #......#
            #......#
            #......#
            ########
        ";
        let world = world_from_map(map, params);
        let s = world.initial_state(0);
        assert_eq!(s.inventory.tools, 0b111);
        assert!(s.has(Subtask::CraftIronPickaxe));
        let (right, _) = craft_step_mask(&world, &s, CraftAction::Right);
        assert_eq!(right.position, Pos::new(1, 2), "stone cell passable");
        let avail = compute_availability(&world, &s);
        assert!(avail[Subtask::MineDiamond.index()]);
        assert!(!avail[Subtask::CollectWood.index()], "already achieved");
    }

    #[test]
    fn stone_task_terminates_on_any_stone() {
        let world = world_from_map(CHAIN_MAP, small_params());
        let domain = CraftDomain::new(world, CraftTask::Stone(Subtask::MineRuby));
        let mut s = domain.world.initial_state(0);
        s.inventory.tools = 0b111;
        s.achieved = Subtask::ALL[..7].iter().map(|t| t.bit()).fold(0, |m, b| m | b);
        assert!(!domain.is_terminal(&s));
        let hit_other = CraftState {
            achieved: s.achieved | Subtask::MineDiamond.bit(),
            ..s
        };
        assert!(domain.is_terminal(&hit_other), "any stone ends the episode");
        // ... but only the pursued stone pays.
        assert_eq!(domain.reward(&s, &hit_other, Subtask::MineRuby.goal_id()), 0.0);
        assert_eq!(domain.reward(&s, &hit_other, Subtask::MineDiamond.goal_id()), 1.0);
    }

    #[test]
    fn agent_state_key_is_world_agnostic() {
        // The same local configuration in two different worlds yields the
        // same key; a different configuration yields a different key.
        let map_a = "
            ########
            #......#
            #.@T...#
            #......#
            #......#
            #......#
            #......#
            ########
        ";
        let map_b = "
            ########
            #......#
            #......#
            #......#
            #...@T.#
            #......#
            #......#
            ########
        ";
        let wa = world_from_map(map_a, small_params());
        let wb = world_from_map(map_b, small_params());
        let ka = wa.agent_state_key(&wa.initial_state(0));
        let kb = wb.agent_state_key(&wb.initial_state(0));
        assert_eq!(ka, kb);

        let map_c = "
            ########
            #......#
            #.@....#
            #..T...#
            #......#
            #......#
            #......#
            ########
        ";
        let wc = world_from_map(map_c, small_params());
        assert_ne!(ka, wc.agent_state_key(&wc.initial_state(0)));
    }
}
