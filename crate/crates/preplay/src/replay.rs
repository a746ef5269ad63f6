//! Prioritized trajectory replay: FIFO ring of whole trajectories, TD-error
//! priorities on a sum tree (O(log n) sampling), fixed-length subsequence
//! draws with importance weights.

use rand::Rng;

use crate::domain::GoalId;

pub const DEFAULT_CAPACITY: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot insert an empty trajectory")]
    EmptyTrajectory,
    #[error("cannot sample from an empty buffer")]
    EmptyBuffer,
}

/// One episode: n transitions over n+1 states, tagged with the pursued goal.
/// `rewards[t]` is the pursued-goal reward on `states[t] -> states[t+1]`;
/// `terminal` says whether the episode ended in a terminal state (as opposed
/// to truncation at the step cap).
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub actions: Vec<u8>,
    pub rewards: Vec<f64>,
    pub terminal: bool,
    pub goal: GoalId,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Mixed max/mean aggregation of per-step TD error magnitudes into one
/// sequence priority: w * max + (1 - w) * mean.
pub fn blend_priority(td_errors: &[f64], max_priority_weight: f64) -> f64 {
    if td_errors.is_empty() {
        return 0.0;
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for e in td_errors {
        let a = e.abs();
        sum += a;
        if a > max {
            max = a;
        }
    }
    max_priority_weight * max + (1.0 - max_priority_weight) * (sum / td_errors.len() as f64)
}

#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two().max(1);
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, slot: usize, value: f64) {
        let mut i = self.leaves + slot;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    fn get(&self, slot: usize) -> f64 {
        self.nodes[self.leaves + slot]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative-sum interval contains `target` (0 <= target < total).
    fn descend(&self, mut target: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let left = self.nodes[2 * i];
            if target < left || self.nodes[2 * i + 1] == 0.0 {
                i = 2 * i;
            } else {
                target -= left;
                i = 2 * i + 1;
            }
        }
        i - self.leaves
    }
}

#[derive(Debug)]
struct Entry<S> {
    id: u64,
    priority: f64,
    traj: Trajectory<S>,
}

/// Reference to one sampled subsequence, resolved against the buffer via
/// [`ReplayBuffer::trajectory`]. Weights are importance-sampling corrections
/// normalized by the batch maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampled {
    pub id: u64,
    pub slot: usize,
    pub start: usize,
    pub len: usize,
    pub weight: f64,
    pub goal: GoalId,
}

#[derive(Debug)]
pub struct ReplayBuffer<S> {
    capacity: usize,
    pub priority_exponent: f64,
    pub max_priority_weight: f64,
    pub importance_beta: f64,
    pub subsequence_length: usize,
    entries: Vec<Option<Entry<S>>>,
    tree: SumTree,
    next_slot: usize,
    len: usize,
    next_id: u64,
    max_priority: f64,
}

impl<S> ReplayBuffer<S> {
    pub fn new(capacity: usize, subsequence_length: usize) -> Self {
        assert!(capacity > 0 && subsequence_length > 0);
        ReplayBuffer {
            capacity,
            priority_exponent: 0.6,
            max_priority_weight: 0.9,
            importance_beta: 1.0,
            subsequence_length,
            entries: (0..capacity).map(|_| None).collect(),
            tree: SumTree::new(capacity),
            next_slot: 0,
            len: 0,
            next_id: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total transitions currently buffered (used for warmup accounting).
    pub fn buffered_steps(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .map(|e| e.traj.len())
            .sum()
    }

    pub fn trajectory(&self, slot: usize) -> &Trajectory<S> {
        &self.entries[slot].as_ref().expect("live slot").traj
    }

    /// Insert a trajectory; at capacity the oldest entry is evicted (FIFO).
    /// New entries enter at `max(initial_priority, max priority seen)` so
    /// fresh data is sampled at least once.
    pub fn insert(
        &mut self,
        traj: Trajectory<S>,
        initial_priority: f64,
    ) -> Result<u64, ReplayError> {
        if traj.is_empty() {
            return Err(ReplayError::EmptyTrajectory);
        }
        let id = self.next_id;
        self.next_id += 1;
        let slot = self.next_slot;
        self.next_slot = (self.next_slot + 1) % self.capacity;
        let priority = initial_priority.max(self.max_priority);
        self.max_priority = self.max_priority.max(priority);
        if self.entries[slot].is_none() {
            self.len += 1;
        }
        self.entries[slot] = Some(Entry { id, priority, traj });
        self.tree.set(slot, priority.powf(self.priority_exponent));
        Ok(id)
    }

    /// Draw `batch` subsequences with probability proportional to
    /// priority^exponent; start indices are uniform within each trajectory.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Vec<Sampled>, ReplayError> {
        if self.len == 0 {
            return Err(ReplayError::EmptyBuffer);
        }
        let total = self.tree.total();
        if total <= 0.0 {
            return Err(ReplayError::EmptyBuffer);
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u: f64 = rng.gen_range(0.0..1.0);
            let slot = self.tree.descend(u * total);
            let entry = self.entries[slot].as_ref().expect("sampled live slot");
            let n = entry.traj.len();
            let start = rng.gen_range(0..n);
            let len = self.subsequence_length.min(n - start);
            let prob = self.tree.get(slot) / total;
            let weight = (1.0 / (self.len as f64 * prob)).powf(self.importance_beta);
            out.push(Sampled {
                id: entry.id,
                slot,
                start,
                len,
                weight,
                goal: entry.traj.goal,
            });
        }
        let max_w = out.iter().map(|s| s.weight).fold(f64::MIN, f64::max);
        if max_w > 0.0 {
            for s in &mut out {
                s.weight /= max_w;
            }
        }
        Ok(out)
    }

    /// Re-prioritize entries from their freshly computed subsequence TD
    /// errors. Stale ids (evicted since sampling) are skipped; returns how
    /// many updates were skipped.
    pub fn update_priorities(&mut self, updates: &[(u64, Vec<f64>)]) -> usize {
        let mut stale = 0;
        for (id, errors) in updates {
            let slot = updates_slot(self, *id);
            match slot {
                Some(slot) => {
                    let p = blend_priority(errors, self.max_priority_weight);
                    if let Some(e) = self.entries[slot].as_mut() {
                        e.priority = p;
                    }
                    self.tree.set(slot, p.powf(self.priority_exponent));
                    self.max_priority = self.max_priority.max(p);
                }
                None => stale += 1,
            }
        }
        stale
    }

    #[cfg(test)]
    fn priority_of(&self, id: u64) -> Option<f64> {
        updates_slot(self, id).map(|s| self.entries[s].as_ref().unwrap().priority)
    }
}

fn updates_slot<S>(buf: &ReplayBuffer<S>, id: u64) -> Option<usize> {
    // Ids are assigned round-robin over slots, so the slot is id % capacity;
    // the entry is stale when a newer id has overwritten it.
    let slot = (id % buf.capacity as u64) as usize;
    match &buf.entries[slot] {
        Some(e) if e.id == id => Some(slot),
        _ => None,
    }
}
