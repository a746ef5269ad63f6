//! Universal (goal-conditioned) value storage and TD-lambda learning.
//!
//! Tables are the tabular stand-in for the deep value networks of the source
//! setup: a [`UniversalQTable`] holds Q(s, a, g) scalars, an [`SFTable`]
//! holds successor-feature vectors psi(s, a, g) together with per-goal
//! preference vectors so that Q = psi . w. Storage is either dense (small
//! enumerable key spaces, e.g. maze cells) or interned (sparse keys); unseen
//! lookups always return the default value, so every query is total.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::domain::{GoalId, StateKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    FeatureDimMismatch { expected: usize, got: usize },
    #[error("candidate policy set is empty")]
    EmptyPolicySet,
}

/// One environment transition as seen by the learner. `reward` is the reward
/// under the trajectory's pursued goal; counterfactual updates recompute
/// rewards from the simulator before building transitions. `features` holds
/// phi(next_state) and stays empty unless an SF learner needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateKey,
    pub action: u8,
    pub reward: f64,
    pub next_state: StateKey,
    pub terminal: bool,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Storage {
    /// Keys are already small dense indices (< n_states).
    Dense { n_states: usize },
    /// Arbitrary u64 keys, interned on first write.
    Interned { index: HashMap<u64, u32> },
}

#[derive(Debug, Clone)]
pub struct UniversalQTable {
    storage: Storage,
    values: Vec<f64>,
    n_actions: usize,
    n_goals: usize,
    pub default_value: f64,
    pub learning_rate: f64,
}

impl UniversalQTable {
    pub fn dense(
        n_states: usize,
        n_actions: usize,
        n_goals: usize,
        default_value: f64,
        learning_rate: f64,
    ) -> Self {
        UniversalQTable {
            storage: Storage::Dense { n_states },
            values: vec![default_value; n_states * n_actions * n_goals],
            n_actions,
            n_goals,
            default_value,
            learning_rate,
        }
    }

    pub fn interned(
        n_actions: usize,
        n_goals: usize,
        default_value: f64,
        learning_rate: f64,
    ) -> Self {
        UniversalQTable {
            storage: Storage::Interned {
                index: HashMap::new(),
            },
            values: Vec::new(),
            n_actions,
            n_goals,
            default_value,
            learning_rate,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    fn block_of(&self, key: StateKey) -> Option<usize> {
        match &self.storage {
            Storage::Dense { n_states } => {
                let k = key.0 as usize;
                debug_assert!(k < *n_states, "dense key out of range");
                Some(k)
            }
            Storage::Interned { index } => index.get(&key.0).map(|&i| i as usize),
        }
    }

    fn block_mut(&mut self, key: StateKey) -> usize {
        match &mut self.storage {
            Storage::Dense { n_states } => {
                let k = key.0 as usize;
                assert!(k < *n_states, "dense key out of range");
                k
            }
            Storage::Interned { index } => {
                let next = index.len() as u32;
                let slot = *index.entry(key.0).or_insert(next);
                if slot == next {
                    self.values
                        .resize(self.values.len() + self.n_actions * self.n_goals, self.default_value);
                }
                slot as usize
            }
        }
    }

    pub fn get(&self, key: StateKey, action: u8, goal: GoalId) -> f64 {
        match self.block_of(key) {
            Some(b) => {
                self.values[(b * self.n_actions + action as usize) * self.n_goals + goal.index()]
            }
            None => self.default_value,
        }
    }

    pub fn set(&mut self, key: StateKey, action: u8, goal: GoalId, value: f64) {
        let b = self.block_mut(key);
        self.values[(b * self.n_actions + action as usize) * self.n_goals + goal.index()] = value;
    }

    /// All action values for (key, goal) in one lookup.
    pub fn action_values_into(&self, key: StateKey, goal: GoalId, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_actions);
        match self.block_of(key) {
            Some(b) => {
                for (a, slot) in out.iter_mut().enumerate() {
                    *slot = self.values[(b * self.n_actions + a) * self.n_goals + goal.index()];
                }
            }
            None => out.fill(self.default_value),
        }
    }

    pub fn max_over_actions(&self, key: StateKey, goal: GoalId) -> f64 {
        match self.block_of(key) {
            Some(b) => {
                let mut best = f64::NEG_INFINITY;
                for a in 0..self.n_actions {
                    let v = self.values[(b * self.n_actions + a) * self.n_goals + goal.index()];
                    if v > best {
                        best = v;
                    }
                }
                best
            }
            None => self.default_value,
        }
    }

    /// Greedy action under `goal`; ties break to the lowest action index.
    pub fn greedy_action(&self, key: StateKey, goal: GoalId) -> u8 {
        match self.block_of(key) {
            Some(b) => {
                let mut best_a = 0u8;
                let mut best = f64::NEG_INFINITY;
                for a in 0..self.n_actions {
                    let v = self.values[(b * self.n_actions + a) * self.n_goals + goal.index()];
                    if v > best {
                        best = v;
                        best_a = a as u8;
                    }
                }
                best_a
            }
            None => 0,
        }
    }

    /// Greedy action under a two-goal value mix `cg * Q(., g) + cgp * Q(., gp)`.
    pub fn greedy_mixed(&self, key: StateKey, g: GoalId, gp: GoalId, cg: f64, cgp: f64) -> u8 {
        match self.block_of(key) {
            Some(b) => {
                let mut best_a = 0u8;
                let mut best = f64::NEG_INFINITY;
                for a in 0..self.n_actions {
                    let base = (b * self.n_actions + a) * self.n_goals;
                    let v = cg * self.values[base + g.index()] + cgp * self.values[base + gp.index()];
                    if v > best {
                        best = v;
                        best_a = a as u8;
                    }
                }
                best_a
            }
            None => 0,
        }
    }

    /// Versioned, sorted-key text dump. Deterministic for a given table state,
    /// so dumps diff cleanly and serve as goldens.
    pub fn checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "preplay-qtable v1");
        let _ = writeln!(
            out,
            "n_actions {} n_goals {} default {:e} lr {:e}",
            self.n_actions, self.n_goals, self.default_value, self.learning_rate
        );
        let mut blocks: Vec<(u64, usize)> = match &self.storage {
            Storage::Dense { n_states } => (0..*n_states as u64).map(|k| (k, k as usize)).collect(),
            Storage::Interned { index } => index.iter().map(|(&k, &b)| (k, b as usize)).collect(),
        };
        blocks.sort_unstable();
        for (key, b) in blocks {
            for a in 0..self.n_actions {
                for g in 0..self.n_goals {
                    let v = self.values[(b * self.n_actions + a) * self.n_goals + g];
                    if v != self.default_value {
                        let _ = writeln!(out, "{key:x} {a} {g} {v:.17e}");
                    }
                }
            }
        }
        out
    }
}

/// Backward-recursion lambda-return targets for a trajectory under `goal`:
/// G_t = r_t + gamma * ((1 - lambda) * max_a Q(s_{t+1}, a, g) + lambda * G_{t+1}),
/// with G = r at terminal transitions and a pure bootstrap tail at a
/// truncated end.
pub fn lambda_returns(
    traj: &[Transition],
    q: &UniversalQTable,
    goal: GoalId,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, ValueError> {
    if traj.is_empty() {
        return Err(ValueError::EmptyTrajectory);
    }
    let mut out = vec![0.0; traj.len()];
    lambda_returns_into(traj, q, goal, gamma, lambda, &mut out);
    Ok(out)
}

pub(crate) fn lambda_returns_into(
    traj: &[Transition],
    q: &UniversalQTable,
    goal: GoalId,
    gamma: f64,
    lambda: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(traj.len(), out.len());
    let n = traj.len();
    let mut next_ret = 0.0;
    for t in (0..n).rev() {
        let tr = &traj[t];
        let g_t = if tr.terminal {
            tr.reward
        } else {
            let boot = q.max_over_actions(tr.next_state, goal);
            if t == n - 1 {
                tr.reward + gamma * boot
            } else {
                tr.reward + gamma * ((1.0 - lambda) * boot + lambda * next_ret)
            }
        };
        out[t] = g_t;
        next_ret = g_t;
    }
}

/// Tabular TD step toward `targets`: Q <- Q + lr * weight * (G - Q), applied
/// in trajectory order. Returns the pre-update TD errors (for replay
/// prioritization).
pub fn td_update(
    q: &mut UniversalQTable,
    traj: &[Transition],
    goal: GoalId,
    targets: &[f64],
    weight: f64,
) -> Vec<f64> {
    let mut errors = vec![0.0; traj.len()];
    td_update_into(q, traj, goal, targets, weight, &mut errors);
    errors
}

pub(crate) fn td_update_into(
    q: &mut UniversalQTable,
    traj: &[Transition],
    goal: GoalId,
    targets: &[f64],
    weight: f64,
    errors: &mut [f64],
) {
    debug_assert_eq!(traj.len(), targets.len());
    let step = q.learning_rate * weight;
    for (t, tr) in traj.iter().enumerate() {
        let old = q.get(tr.state, tr.action, goal);
        let delta = targets[t] - old;
        q.set(tr.state, tr.action, goal, old + step * delta);
        errors[t] = delta;
    }
}

/// Successor-feature table: psi(s, a, g) vectors of length `feature_dim`,
/// plus the per-goal preference vectors w_g that close Q = psi . w.
#[derive(Debug, Clone)]
pub struct SFTable {
    storage: Storage,
    values: Vec<f64>,
    n_actions: usize,
    n_goals: usize,
    feature_dim: usize,
    preferences: Vec<Vec<f64>>,
    pub learning_rate: f64,
}

impl SFTable {
    pub fn dense(
        n_states: usize,
        n_actions: usize,
        n_goals: usize,
        preferences: Vec<Vec<f64>>,
        learning_rate: f64,
    ) -> Self {
        let feature_dim = preferences.first().map_or(0, Vec::len);
        assert!(preferences.len() == n_goals && feature_dim > 0);
        assert!(preferences.iter().all(|w| w.len() == feature_dim));
        SFTable {
            storage: Storage::Dense { n_states },
            values: vec![0.0; n_states * n_actions * n_goals * feature_dim],
            n_actions,
            n_goals,
            feature_dim,
            preferences,
            learning_rate,
        }
    }

    pub fn interned(
        n_actions: usize,
        n_goals: usize,
        preferences: Vec<Vec<f64>>,
        learning_rate: f64,
    ) -> Self {
        let feature_dim = preferences.first().map_or(0, Vec::len);
        assert!(preferences.len() == n_goals && feature_dim > 0);
        SFTable {
            storage: Storage::Interned {
                index: HashMap::new(),
            },
            values: Vec::new(),
            n_actions,
            n_goals,
            feature_dim,
            preferences,
            learning_rate,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn preference(&self, goal: GoalId) -> &[f64] {
        &self.preferences[goal.index()]
    }

    fn offset(&self, block: usize, action: usize, goal: usize) -> usize {
        ((block * self.n_actions + action) * self.n_goals + goal) * self.feature_dim
    }

    fn block_of(&self, key: StateKey) -> Option<usize> {
        match &self.storage {
            Storage::Dense { n_states } => {
                let k = key.0 as usize;
                debug_assert!(k < *n_states);
                Some(k)
            }
            Storage::Interned { index } => index.get(&key.0).map(|&i| i as usize),
        }
    }

    fn block_mut(&mut self, key: StateKey) -> usize {
        match &mut self.storage {
            Storage::Dense { n_states } => {
                let k = key.0 as usize;
                assert!(k < *n_states);
                k
            }
            Storage::Interned { index } => {
                let next = index.len() as u32;
                let slot = *index.entry(key.0).or_insert(next);
                if slot == next {
                    let grow = self.n_actions * self.n_goals * self.feature_dim;
                    self.values.resize(self.values.len() + grow, 0.0);
                }
                slot as usize
            }
        }
    }

    /// psi(s, a, g), zero vector for unseen states.
    pub fn psi(&self, key: StateKey, action: u8, goal: GoalId) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        self.psi_into(key, action, goal, &mut out);
        out
    }

    pub fn psi_into(&self, key: StateKey, action: u8, goal: GoalId, out: &mut [f64]) {
        match self.block_of(key) {
            Some(b) => {
                let off = self.offset(b, action as usize, goal.index());
                out.copy_from_slice(&self.values[off..off + self.feature_dim]);
            }
            None => out.fill(0.0),
        }
    }

    /// Q(s, a, g_eval) = psi(s, a, g)^T w, for an arbitrary preference vector.
    pub fn q_value(&self, key: StateKey, action: u8, goal: GoalId, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.feature_dim);
        match self.block_of(key) {
            Some(b) => {
                let off = self.offset(b, action as usize, goal.index());
                self.values[off..off + self.feature_dim]
                    .iter()
                    .zip(w)
                    .map(|(p, w)| p * w)
                    .sum()
            }
            None => 0.0,
        }
    }

    /// Greedy action for conditioning `goal` evaluated under weights `w`.
    pub fn greedy_action(&self, key: StateKey, goal: GoalId, w: &[f64]) -> u8 {
        let mut best_a = 0u8;
        let mut best = f64::NEG_INFINITY;
        for a in 0..self.n_actions {
            let v = self.q_value(key, a as u8, goal, w);
            if v > best {
                best = v;
                best_a = a as u8;
            }
        }
        best_a
    }

    pub fn checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "preplay-sftable v1");
        let _ = writeln!(
            out,
            "n_actions {} n_goals {} dim {} lr {:e}",
            self.n_actions, self.n_goals, self.feature_dim, self.learning_rate
        );
        let mut blocks: Vec<(u64, usize)> = match &self.storage {
            Storage::Dense { n_states } => (0..*n_states as u64).map(|k| (k, k as usize)).collect(),
            Storage::Interned { index } => index.iter().map(|(&k, &b)| (k, b as usize)).collect(),
        };
        blocks.sort_unstable();
        for (key, b) in blocks {
            for a in 0..self.n_actions {
                for g in 0..self.n_goals {
                    let off = self.offset(b, a, g);
                    let row = &self.values[off..off + self.feature_dim];
                    if row.iter().any(|&v| v != 0.0) {
                        let _ = write!(out, "{key:x} {a} {g}");
                        for v in row {
                            let _ = write!(out, " {v:.17e}");
                        }
                        out.push('\n');
                    }
                }
            }
        }
        out
    }
}

/// Vector-valued analogue of [`lambda_returns`]: rewards are replaced by
/// phi(s_{t+1}) and the bootstrap action maximizes psi^T w_g.
pub fn sf_lambda_returns(
    traj: &[Transition],
    sf: &SFTable,
    goal: GoalId,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<Vec<f64>>, ValueError> {
    if traj.is_empty() {
        return Err(ValueError::EmptyTrajectory);
    }
    let d = sf.feature_dim;
    for tr in traj {
        if tr.features.len() != d {
            return Err(ValueError::FeatureDimMismatch {
                expected: d,
                got: tr.features.len(),
            });
        }
    }
    let n = traj.len();
    let w = sf.preference(goal).to_vec();
    let mut out = vec![vec![0.0; d]; n];
    let mut boot = vec![0.0; d];
    for t in (0..n).rev() {
        let tr = &traj[t];
        if tr.terminal {
            out[t].copy_from_slice(&tr.features);
        } else {
            let a_star = sf.greedy_action(tr.next_state, goal, &w);
            sf.psi_into(tr.next_state, a_star, goal, &mut boot);
            if t == n - 1 {
                for j in 0..d {
                    out[t][j] = tr.features[j] + gamma * boot[j];
                }
            } else {
                let (head, tail) = out.split_at_mut(t + 1);
                let next_ret = &tail[0];
                for j in 0..d {
                    head[t][j] =
                        tr.features[j] + gamma * ((1.0 - lambda) * boot[j] + lambda * next_ret[j]);
                }
            }
        }
    }
    Ok(out)
}

/// TD step on SF vectors; returns per-step scalar errors (max-abs over
/// feature dimensions) for replay prioritization.
pub fn sf_td_update(
    sf: &mut SFTable,
    traj: &[Transition],
    goal: GoalId,
    targets: &[Vec<f64>],
    weight: f64,
) -> Vec<f64> {
    debug_assert_eq!(traj.len(), targets.len());
    let step = sf.learning_rate * weight;
    let d = sf.feature_dim;
    let n_actions = sf.n_actions;
    let n_goals = sf.n_goals;
    let mut errors = vec![0.0; traj.len()];
    for (t, tr) in traj.iter().enumerate() {
        let b = sf.block_mut(tr.state);
        let off = ((b * n_actions + tr.action as usize) * n_goals + goal.index()) * d;
        let mut max_abs = 0.0f64;
        for j in 0..d {
            let delta = targets[t][j] - sf.values[off + j];
            sf.values[off + j] += step * delta;
            max_abs = max_abs.max(delta.abs());
        }
        errors[t] = max_abs;
    }
    errors
}

/// Q(s, a, g_eval) via the SF decomposition; pure dot product.
pub fn q_from_sf(
    sf: &SFTable,
    key: StateKey,
    action: u8,
    conditioning: GoalId,
    w: &[f64],
) -> Result<f64, ValueError> {
    if w.len() != sf.feature_dim {
        return Err(ValueError::FeatureDimMismatch {
            expected: sf.feature_dim,
            got: w.len(),
        });
    }
    Ok(sf.q_value(key, action, conditioning, w))
}

/// Generalized policy improvement: argmax over actions of the best value any
/// candidate conditioning assigns under the new task's weights. Ties break to
/// the lowest action index (identically across scalings).
pub fn gpi_action(
    sf: &SFTable,
    key: StateKey,
    candidates: &[GoalId],
    w_new: &[f64],
) -> Result<u8, ValueError> {
    if candidates.is_empty() {
        return Err(ValueError::EmptyPolicySet);
    }
    if w_new.len() != sf.feature_dim {
        return Err(ValueError::FeatureDimMismatch {
            expected: sf.feature_dim,
            got: w_new.len(),
        });
    }
    let mut best_a = 0u8;
    let mut best = f64::NEG_INFINITY;
    for a in 0..sf.n_actions {
        let mut v = f64::NEG_INFINITY;
        for &c in candidates {
            let q = sf.q_value(key, a as u8, c, w_new);
            if q > v {
                v = q;
            }
        }
        if v > best {
            best = v;
            best_a = a as u8;
        }
    }
    Ok(best_a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(state: u64, action: u8, reward: f64, next: u64, terminal: bool) -> Transition {
        Transition {
            state: StateKey(state),
            action,
            reward,
            next_state: StateKey(next),
            terminal,
            features: Vec::new(),
        }
    }

    #[test]
    fn unseen_lookup_returns_default() {
        let q = UniversalQTable::interned(4, 2, 0.25, 0.1);
        assert_eq!(q.get(StateKey(99), 3, GoalId(1)), 0.25);
        assert_eq!(q.max_over_actions(StateKey(99), GoalId(0)), 0.25);
    }

    #[test]
    fn lambda_zero_matches_one_step_targets() {
        let mut q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        q.set(StateKey(1), 0, GoalId(0), 0.5);
        q.set(StateKey(2), 1, GoalId(0), 2.0);
        let traj = vec![tr(0, 0, 1.0, 1, false), tr(1, 1, -1.0, 2, false)];
        let got = lambda_returns(&traj, &q, GoalId(0), 0.9, 0.0).unwrap();
        let want: Vec<f64> = traj
            .iter()
            .map(|t| t.reward + 0.9 * q.max_over_actions(t.next_state, GoalId(0)))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn lambda_one_is_discounted_monte_carlo() {
        // 3-step trajectory, rewards (0, 0, 1), zero table, gamma = 0.5.
        let q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        let traj = vec![
            tr(0, 0, 0.0, 1, false),
            tr(1, 0, 0.0, 2, false),
            tr(2, 0, 1.0, 3, true),
        ];
        let got = lambda_returns(&traj, &q, GoalId(0), 0.5, 1.0).unwrap();
        assert_eq!(got, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        assert_eq!(
            lambda_returns(&[], &q, GoalId(0), 0.9, 0.5),
            Err(ValueError::EmptyTrajectory)
        );
    }

    #[test]
    fn td_update_fixed_point_and_full_step() {
        let mut q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        q.set(StateKey(0), 0, GoalId(0), 0.7);
        let traj = vec![tr(0, 0, 0.0, 1, true)];
        let errors = td_update(&mut q, &traj, GoalId(0), &[0.7], 1.0);
        assert_eq!(errors, vec![0.0]);
        assert_eq!(q.get(StateKey(0), 0, GoalId(0)), 0.7);

        q.learning_rate = 1.0;
        td_update(&mut q, &traj, GoalId(0), &[0.2], 1.0);
        assert_eq!(q.get(StateKey(0), 0, GoalId(0)), 0.2);
    }

    #[test]
    fn chain_converges_to_value_iteration_oracle() {
        // Deterministic 4-state chain 0 -> 1 -> 2 -> 3(terminal), reward 1 on
        // the final transition, single action choice per state of two.
        let gamma = 0.9;
        let mut q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        let episode = vec![
            tr(0, 0, 0.0, 1, false),
            tr(1, 0, 0.0, 2, false),
            tr(2, 0, 1.0, 3, true),
        ];
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            let targets = lambda_returns(&episode, &q, GoalId(0), gamma, 0.0).unwrap();
            let errors = td_update(&mut q, &episode, GoalId(0), &targets, 1.0);
            let delta: f64 = errors.iter().map(|e| e.abs()).fold(0.0, f64::max);
            if delta < 1e-9 && last < 1e-9 {
                break;
            }
            last = delta;
        }
        // Independent dynamic-programming oracle on the chain.
        let oracle = [gamma * gamma, gamma, 1.0];
        for (s, want) in oracle.iter().enumerate() {
            let got = q.get(StateKey(s as u64), 0, GoalId(0));
            assert!((got - want).abs() < 1e-6, "state {s}: {got} vs {want}");
        }
    }

    #[test]
    fn sf_returns_and_duality_on_chain() {
        let gamma = 0.5;
        // Indicator features: phi has a 1 at the entered state's index.
        let d = 4;
        let mut w = vec![0.0; d];
        w[3] = 1.0; // reward only on entering terminal state 3
        let mut sf = SFTable::interned(1, 1, vec![w.clone()], 1.0);
        let mut traj = vec![
            tr(0, 0, 0.0, 1, false),
            tr(1, 0, 0.0, 2, false),
            tr(2, 0, 1.0, 3, true),
        ];
        for (t, tran) in traj.iter_mut().enumerate() {
            let mut phi = vec![0.0; d];
            phi[t + 1] = 1.0;
            tran.features = phi;
        }
        // Zero-table, lambda = 1: targets are discounted feature sums.
        let targets = sf_lambda_returns(&traj, &sf, GoalId(0), gamma, 1.0).unwrap();
        assert_eq!(targets[2], vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(targets[1], vec![0.0, 0.0, 1.0, 0.5]);
        assert_eq!(targets[0], vec![0.0, 1.0, 0.5, 0.25]);

        for _ in 0..100 {
            let targets = sf_lambda_returns(&traj, &sf, GoalId(0), gamma, 0.0).unwrap();
            sf_td_update(&mut sf, &traj, GoalId(0), &targets, 1.0);
        }
        // psi . w equals the scalar TD fixed point for the indicator task.
        let mut q = UniversalQTable::interned(1, 1, 0.0, 1.0);
        for _ in 0..100 {
            let targets = lambda_returns(&traj, &q, GoalId(0), gamma, 0.0).unwrap();
            td_update(&mut q, &traj, GoalId(0), &targets, 1.0);
        }
        for s in 0..3u64 {
            let via_sf = q_from_sf(&sf, StateKey(s), 0, GoalId(0), &w).unwrap();
            let direct = q.get(StateKey(s), 0, GoalId(0));
            assert!((via_sf - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn sf_zero_features_zero_targets() {
        let sf = SFTable::interned(2, 1, vec![vec![1.0, 0.0]], 0.5);
        let mut traj = vec![tr(0, 0, 0.0, 1, false), tr(1, 1, 0.0, 2, false)];
        for t in &mut traj {
            t.features = vec![0.0, 0.0];
        }
        let targets = sf_lambda_returns(&traj, &sf, GoalId(0), 0.9, 0.7).unwrap();
        assert!(targets.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn sf_single_terminal_transition_target_is_phi() {
        let sf = SFTable::interned(2, 1, vec![vec![1.0, 0.0]], 0.5);
        let mut traj = vec![tr(0, 0, 1.0, 1, true)];
        traj[0].features = vec![0.25, 0.75];
        let targets = sf_lambda_returns(&traj, &sf, GoalId(0), 0.9, 0.3).unwrap();
        assert_eq!(targets[0], vec![0.25, 0.75]);
    }

    #[test]
    fn sf_feature_dim_mismatch() {
        let sf = SFTable::interned(2, 1, vec![vec![1.0, 0.0]], 0.5);
        let traj = vec![tr(0, 0, 0.0, 1, false)];
        assert!(matches!(
            sf_lambda_returns(&traj, &sf, GoalId(0), 0.9, 0.3),
            Err(ValueError::FeatureDimMismatch { expected: 2, got: 0 })
        ));
    }

    #[test]
    fn q_from_sf_one_hot_and_zero() {
        let mut sf = SFTable::interned(2, 1, vec![vec![1.0, 0.0, 0.0]], 0.5);
        let b = sf.block_mut(StateKey(7));
        let off = sf.offset(b, 1, 0);
        sf.values[off..off + 3].copy_from_slice(&[0.1, 0.2, 0.3]);
        let w1 = [0.0, 1.0, 0.0];
        assert_eq!(
            q_from_sf(&sf, StateKey(7), 1, GoalId(0), &w1).unwrap(),
            0.2
        );
        let w0 = [0.0, 0.0, 0.0];
        assert_eq!(q_from_sf(&sf, StateKey(7), 1, GoalId(0), &w0).unwrap(), 0.0);
    }

    #[test]
    fn gpi_single_candidate_reduces_to_greedy_and_dominance_decides() {
        let mut sf = SFTable::interned(2, 2, vec![vec![1.0], vec![1.0]], 0.5);
        // candidate 0: psi = [action0: 0.1, action1: 0.4]
        // candidate 1: psi = [action0: 0.9, action1: 0.2] (dominates on a0)
        for (g, vals) in [(0usize, [0.1, 0.4]), (1usize, [0.9, 0.2])] {
            for (a, v) in vals.iter().enumerate() {
                let b = sf.block_mut(StateKey(0));
                let off = sf.offset(b, a, g);
                sf.values[off] = *v;
            }
        }
        let w = [1.0];
        let single = gpi_action(&sf, StateKey(0), &[GoalId(0)], &w).unwrap();
        assert_eq!(single, sf.greedy_action(StateKey(0), GoalId(0), &w));
        let both = gpi_action(&sf, StateKey(0), &[GoalId(0), GoalId(1)], &w).unwrap();
        assert_eq!(both, 0, "dominating conditioning picks action 0 (0.9)");
        assert_eq!(
            gpi_action(&sf, StateKey(0), &[], &w),
            Err(ValueError::EmptyPolicySet)
        );
    }

    proptest! {
        #[test]
        fn gpi_invariant_to_positive_scaling(scale in 0.01f64..100.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = 3;
            let mut sf = SFTable::interned(4, 2, vec![vec![1.0; d], vec![1.0; d]], 0.5);
            let mut scaled = sf.clone();
            for a in 0..4u8 {
                for g in 0..2usize {
                    let vals: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let b = sf.block_mut(StateKey(5));
                    let off = sf.offset(b, a as usize, g);
                    sf.values[off..off + d].copy_from_slice(&vals);
                    let b2 = scaled.block_mut(StateKey(5));
                    let off2 = scaled.offset(b2, a as usize, g);
                    for (j, v) in vals.iter().enumerate() {
                        scaled.values[off2 + j] = v * scale;
                    }
                }
            }
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w_scaled: Vec<f64> = w.iter().map(|v| v * scale).collect();
            let cands = [GoalId(0), GoalId(1)];
            let a1 = gpi_action(&sf, StateKey(5), &cands, &w).unwrap();
            let a2 = gpi_action(&scaled, StateKey(5), &cands, &w_scaled).unwrap();
            prop_assert_eq!(a1, a2);
        }

        #[test]
        fn lambda_identities_hold_on_random_trajectories(
            seed in 0u64..500,
            len in 1usize..12,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut q = UniversalQTable::interned(3, 1, 0.0, 0.1);
            for s in 0..0x20u64 {
                for a in 0..3u8 {
                    q.set(StateKey(s), a, GoalId(0), rng.gen_range(-1.0..1.0));
                }
            }
            let gamma = rng.gen_range(0.0..0.99);
            let mut traj = Vec::new();
            for t in 0..len {
                traj.push(Transition {
                    state: StateKey(rng.gen_range(0..0x20)),
                    action: rng.gen_range(0..3),
                    reward: rng.gen_range(-1.0..1.0),
                    next_state: StateKey(rng.gen_range(0..0x20)),
                    terminal: t == len - 1,
                    features: Vec::new(),
                });
            }
            // lambda = 1 equals the discounted Monte-Carlo return, exactly.
            let mc = {
                let mut out = vec![0.0; len];
                let mut acc = 0.0;
                for t in (0..len).rev() {
                    acc = traj[t].reward + gamma * acc;
                    out[t] = acc;
                }
                out
            };
            let lam1 = lambda_returns(&traj, &q, GoalId(0), gamma, 1.0).unwrap();
            prop_assert_eq!(lam1, mc);
            // lambda = 0 equals the 1-step targets, exactly.
            let lam0 = lambda_returns(&traj, &q, GoalId(0), gamma, 0.0).unwrap();
            for (t, tr) in traj.iter().enumerate() {
                let want = if tr.terminal {
                    tr.reward
                } else {
                    tr.reward + gamma * q.max_over_actions(tr.next_state, GoalId(0))
                };
                prop_assert_eq!(lam0[t], want);
            }
        }
    }

    #[test]
    fn checkpoint_is_sorted_and_versioned() {
        let mut q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        q.set(StateKey(0xbeef), 1, GoalId(0), 1.5);
        q.set(StateKey(0x1), 0, GoalId(0), -0.25);
        let dump = q.checkpoint();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "preplay-qtable v1");
        assert!(lines[2].starts_with("1 0 0"));
        assert!(lines[3].starts_with("beef 1 0"));
    }
}
