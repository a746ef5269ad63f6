//! Procedural world generation, snapshots, and seed-split manifests.
//!
//! Generation is deterministic in (seed, params). With co-occurrence on,
//! objects are placed in themed clusters (trees with craft tables, stone
//! outcrops with ores and precious stones); with it off, placement is uniform
//! over free floor. Every attempt is validated so that at least one instance
//! of each present object kind is interaction-reachable from every spawn;
//! failing layouts are rerolled up to a retry budget.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Pos;

use super::{AvailabilityMode, ObjectKind, Terrain, World};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub size: usize,
    pub n_object_clusters: usize,
    pub cooccurrence: bool,
    /// Start with the full tool chain and passable stones (the simplified
    /// setting used by the human-analog stone tasks).
    pub strength: bool,
    pub availability_mode: AvailabilityMode,
    pub step_cap: usize,
    pub view_radius: usize,
    pub n_spawns: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            size: 24,
            n_object_clusters: 4,
            cooccurrence: true,
            strength: false,
            availability_mode: AvailabilityMode::Preconditions,
            step_cap: 400,
            view_radius: 4,
            n_spawns: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("world size must be at least 8 (got {0})")]
    SizeTooSmall(usize),
    #[error("could not generate a reachable world for seed {seed} within {attempts} attempts")]
    GenerationFailed { seed: u64, attempts: usize },
}

const CLUSTER_RADIUS: usize = 3;
const MAX_ATTEMPTS: usize = 200;

/// Object counts scaled to the map size (clamped to keep small test worlds
/// meaningful).
fn object_counts(size: usize) -> [(ObjectKind, usize); 7] {
    let area = size * size;
    let trees = (area / 96).clamp(2, 8);
    let tables = (trees / 3).clamp(1, 3);
    let stone = (area / 120).clamp(2, 6);
    let iron = (stone.saturating_sub(2)).clamp(1, 4);
    let precious = (size / 12).clamp(1, 3);
    [
        (ObjectKind::Tree, trees),
        (ObjectKind::CraftTable, tables),
        (ObjectKind::Stone, stone),
        (ObjectKind::IronOre, iron),
        (ObjectKind::Diamond, precious),
        (ObjectKind::Sapphire, precious),
        (ObjectKind::Ruby, precious),
    ]
}

/// Which cluster theme an object kind belongs to: 0 = woodland (trees and
/// craft tables), 1 = mining outcrop (stone, ores, precious stones).
fn cluster_theme(kind: ObjectKind) -> usize {
    match kind {
        ObjectKind::Tree | ObjectKind::CraftTable => 0,
        _ => 1,
    }
}

pub fn generate_world(seed: u64, params: &WorldParams) -> Result<World, GenError> {
    if params.size < 8 {
        return Err(GenError::SizeTooSmall(params.size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(world) = attempt(seed, params, &mut rng) {
            return Ok(world);
        }
    }
    Err(GenError::GenerationFailed {
        seed,
        attempts: MAX_ATTEMPTS,
    })
}

fn attempt(seed: u64, params: &WorldParams, rng: &mut ChaCha8Rng) -> Option<World> {
    let size = params.size;
    let mut terrain = vec![Terrain::Floor; size * size];
    for i in 0..size {
        terrain[i] = Terrain::Wall;
        terrain[(size - 1) * size + i] = Terrain::Wall;
        terrain[i * size] = Terrain::Wall;
        terrain[i * size + size - 1] = Terrain::Wall;
    }
    // Water and lava pools plus scattered interior walls. Tiny maps get no
    // pools; they would drown too much of the interior.
    let n_pools = size / 12;
    for pool in 0..n_pools {
        let kind = if pool % 2 == 0 { Terrain::Water } else { Terrain::Lava };
        let cr = rng.gen_range(2..size - 2);
        let cc = rng.gen_range(2..size - 2);
        let radius = rng.gen_range(1..=2usize);
        for r in cr.saturating_sub(radius)..=(cr + radius).min(size - 2) {
            for c in cc.saturating_sub(radius)..=(cc + radius).min(size - 2) {
                if r.abs_diff(cr) + c.abs_diff(cc) <= radius {
                    terrain[r * size + c] = kind;
                }
            }
        }
    }
    let n_walls = size * size / 24;
    for _ in 0..n_walls {
        let r = rng.gen_range(1..size - 1);
        let c = rng.gen_range(1..size - 1);
        terrain[r * size + c] = Terrain::Wall;
    }

    let floor: Vec<Pos> = (0..size)
        .flat_map(|r| (0..size).map(move |c| Pos::new(r, c)))
        .filter(|p| terrain[p.row * size + p.col] == Terrain::Floor)
        .collect();
    if floor.len() < size * size / 4 {
        return None;
    }

    let mut objects: BTreeMap<Pos, ObjectKind> = BTreeMap::new();
    let mut occupied: Vec<bool> = vec![false; size * size];

    if params.cooccurrence {
        let n_clusters = params.n_object_clusters.max(1);
        let mut centers: Vec<Pos> = Vec::with_capacity(n_clusters);
        for _ in 0..n_clusters {
            centers.push(*floor.choose(rng)?);
        }
        for (kind, count) in object_counts(size) {
            for i in 0..count {
                // Alternate among the clusters of this kind's theme.
                let themed: Vec<Pos> = centers
                    .iter()
                    .enumerate()
                    .filter(|(ci, _)| n_clusters == 1 || ci % 2 == cluster_theme(kind))
                    .map(|(_, &c)| c)
                    .collect();
                let center = themed[i % themed.len()];
                let pos = place_near(center, CLUSTER_RADIUS, &floor, &occupied, size, rng)?;
                occupied[pos.row * size + pos.col] = true;
                objects.insert(pos, kind);
            }
        }
    } else {
        for (kind, count) in object_counts(size) {
            for _ in 0..count {
                let pos = place_near(Pos::new(0, 0), usize::MAX, &floor, &occupied, size, rng)?;
                occupied[pos.row * size + pos.col] = true;
                objects.insert(pos, kind);
            }
        }
    }

    let mut spawns = Vec::with_capacity(params.n_spawns);
    for _ in 0..params.n_spawns {
        let mut pos = *floor.choose(rng)?;
        let mut guard = 0;
        while occupied[pos.row * size + pos.col] || spawns.contains(&pos) {
            pos = *floor.choose(rng)?;
            guard += 1;
            if guard > 64 {
                return None;
            }
        }
        spawns.push(pos);
    }

    let world = World::from_parts(params.clone(), seed, terrain, objects, spawns);
    if all_kinds_reachable(&world) {
        Some(world)
    } else {
        None
    }
}

fn place_near(
    center: Pos,
    radius: usize,
    floor: &[Pos],
    occupied: &[bool],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Pos> {
    let candidates: Vec<Pos> = floor
        .iter()
        .copied()
        .filter(|p| {
            !occupied[p.row * size + p.col]
                && p.row.abs_diff(center.row).max(p.col.abs_diff(center.col)) <= radius
        })
        .collect();
    candidates.choose(rng).copied()
}

/// Every object kind present in the world has at least one instance adjacent
/// to a cell reachable from every spawn (so the full subtask chain can run).
fn all_kinds_reachable(world: &World) -> bool {
    for &spawn in &world.spawns {
        let reached = flood(world, spawn);
        for kind in ObjectKind::ALL {
            let instances: Vec<Pos> = world
                .objects
                .iter()
                .filter(|(_, &k)| k == kind)
                .map(|(&p, _)| p)
                .collect();
            if instances.is_empty() {
                continue;
            }
            let ok = instances.iter().any(|&p| {
                neighbors(world, p)
                    .into_iter()
                    .any(|n| reached[n.row * world.size() + n.col])
            });
            if !ok {
                return false;
            }
        }
    }
    true
}

fn neighbors(world: &World, p: Pos) -> Vec<Pos> {
    let mut out = Vec::with_capacity(4);
    for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
        let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
        if world.in_bounds(nr, nc) {
            out.push(Pos::new(nr as usize, nc as usize));
        }
    }
    out
}

fn flood(world: &World, start: Pos) -> Vec<bool> {
    let size = world.size();
    let mut reached = vec![false; size * size];
    if !world.walkable(start) {
        return reached;
    }
    let mut queue = VecDeque::new();
    reached[start.row * size + start.col] = true;
    queue.push_back(start);
    while let Some(p) = queue.pop_front() {
        for n in neighbors(world, p) {
            if !reached[n.row * size + n.col] && world.walkable(n) {
                reached[n.row * size + n.col] = true;
                queue.push_back(n);
            }
        }
    }
    reached
}

/// Versioned text snapshot of a world (round-trip exact). Terrain is stored
/// as one glyph row per line; caches are rebuilt on load.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct WorldSnapshot {
    pub version: u32,
    pub seed: u64,
    pub params: WorldParams,
    pub terrain: Vec<String>,
    pub objects: Vec<(Pos, ObjectKind)>,
    pub spawns: Vec<Pos>,
}

pub const SNAPSHOT_VERSION: u32 = 1;

impl World {
    pub fn snapshot(&self) -> WorldSnapshot {
        let size = self.size();
        let terrain = (0..size)
            .map(|r| {
                (0..size)
                    .map(|c| match self.terrain[r * size + c] {
                        Terrain::Floor => '.',
                        Terrain::Wall => '#',
                        Terrain::Water => 'w',
                        Terrain::Lava => 'l',
                    })
                    .collect()
            })
            .collect();
        WorldSnapshot {
            version: SNAPSHOT_VERSION,
            seed: self.seed,
            params: self.params.clone(),
            terrain,
            objects: self.objects.iter().map(|(&p, &k)| (p, k)).collect(),
            spawns: self.spawns.clone(),
        }
    }

    pub fn from_snapshot(snap: &WorldSnapshot) -> World {
        let size = snap.params.size;
        let mut terrain = Vec::with_capacity(size * size);
        for row in &snap.terrain {
            for ch in row.chars() {
                terrain.push(match ch {
                    '.' => Terrain::Floor,
                    '#' => Terrain::Wall,
                    'w' => Terrain::Water,
                    'l' => Terrain::Lava,
                    other => panic!("bad terrain glyph {other:?}"),
                });
            }
        }
        World::from_parts(
            snap.params.clone(),
            snap.seed,
            terrain,
            snap.objects.iter().copied().collect(),
            snap.spawns.clone(),
        )
    }
}

/// Train/test split of world-generation seeds, stored as a versioned JSON
/// manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedManifest {
    pub version: u32,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
}

impl SeedManifest {
    /// Deterministic split: train seeds 0..n_train, test seeds offset by a
    /// fixed stride so the two sets never collide.
    pub fn split(n_train: usize, n_test: usize) -> SeedManifest {
        const TEST_STRIDE: u64 = 1_000_000;
        SeedManifest {
            version: 1,
            train_seeds: (0..n_train as u64).collect(),
            test_seeds: (0..n_test as u64).map(|i| TEST_STRIDE + i).collect(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("serialize"))
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<SeedManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let params = WorldParams::default();
        let a = generate_world(7, &params).unwrap();
        let b = generate_world(7, &params).unwrap();
        assert_eq!(a, b);
        let c = generate_world(8, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn size_precondition() {
        let params = WorldParams {
            size: 6,
            ..WorldParams::default()
        };
        assert_eq!(generate_world(0, &params), Err(GenError::SizeTooSmall(6)));
    }

    #[test]
    fn single_cluster_keeps_objects_tight() {
        let params = WorldParams {
            size: 8,
            n_object_clusters: 1,
            ..WorldParams::default()
        };
        for seed in 0..5u64 {
            let world = generate_world(seed, &params).unwrap();
            let positions: Vec<Pos> = world.objects.keys().copied().collect();
            let max_pair = positions
                .iter()
                .flat_map(|a| positions.iter().map(move |b| {
                    a.row.abs_diff(b.row).max(a.col.abs_diff(b.col))
                }))
                .max()
                .unwrap();
            assert!(
                max_pair <= 2 * CLUSTER_RADIUS,
                "seed {seed}: objects span {max_pair} > {}",
                2 * CLUSTER_RADIUS
            );
        }
    }

    /// Mean over worlds of the mean pairwise distance between co-occurring
    /// object kinds (tree-to-table and stone-to-ore distances).
    fn mean_cooccurring_distance(cooccurrence: bool, seeds: std::ops::Range<u64>) -> f64 {
        let params = WorldParams {
            cooccurrence,
            ..WorldParams::default()
        };
        let pairs = [
            (ObjectKind::Tree, ObjectKind::CraftTable),
            (ObjectKind::Stone, ObjectKind::IronOre),
            (ObjectKind::Stone, ObjectKind::Diamond),
        ];
        let mut total = 0.0;
        let mut n = 0usize;
        for seed in seeds {
            let world = generate_world(seed, &params).unwrap();
            for (ka, kb) in pairs {
                for (&pa, _) in world.objects.iter().filter(|(_, &k)| k == ka) {
                    // Distance to the nearest instance of the partner kind.
                    let d = world
                        .objects
                        .iter()
                        .filter(|(_, &k)| k == kb)
                        .map(|(&pb, _)| pa.manhattan(pb))
                        .min();
                    if let Some(d) = d {
                        total += d as f64;
                        n += 1;
                    }
                }
            }
        }
        total / n as f64
    }

    #[test]
    fn cooccurrence_on_places_related_objects_closer() {
        let on = mean_cooccurring_distance(true, 0..100);
        let off = mean_cooccurring_distance(false, 0..100);
        assert!(
            on < off,
            "clustered mean distance {on:.3} should beat uniform {off:.3}"
        );
        // Frozen Monte-Carlo goldens from the first seeded run (exactly
        // reproducible: generation is deterministic in seed and params).
        assert!(
            (on - COOC_ON_GOLDEN).abs() < 1e-9 && (off - COOC_OFF_GOLDEN).abs() < 1e-9,
            "on = {on:.15}, off = {off:.15}"
        );
    }

    const COOC_ON_GOLDEN: f64 = 4.107142857142857;
    const COOC_OFF_GOLDEN: f64 = 10.909285714285714;

    #[test]
    fn every_generated_world_is_kind_reachable() {
        let params = WorldParams::default();
        for seed in 0..20u64 {
            let world = generate_world(seed, &params).unwrap();
            assert!(all_kinds_reachable(&world), "seed {seed}");
        }
    }

    #[test]
    fn snapshot_roundtrip_exact() {
        let world = generate_world(3, &WorldParams::default()).unwrap();
        let snap = world.snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: WorldSnapshot = serde_json::from_str(&json).unwrap();
        let rebuilt = World::from_snapshot(&back);
        assert_eq!(world, rebuilt);
        assert_eq!(world.agent_state_key(&world.initial_state(0)),
                   rebuilt.agent_state_key(&rebuilt.initial_state(0)));
    }

    #[test]
    fn seed_manifest_roundtrip_and_disjoint() {
        let m = SeedManifest::split(16, 200);
        assert_eq!(m.train_seeds.len(), 16);
        assert_eq!(m.test_seeds.len(), 200);
        assert!(m.train_seeds.iter().all(|s| !m.test_seeds.contains(s)));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seeds.json");
        m.save(&path).unwrap();
        assert_eq!(SeedManifest::load(&path).unwrap(), m);
    }
}
