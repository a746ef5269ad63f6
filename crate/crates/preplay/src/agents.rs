//! The algorithm family: epsilon-greedy Q-learning over a universal table,
//! universal successor features with GPI, Dyna, multitask preplay, and
//! decision-time BFS/DFS planners.
//!
//! Dyna and multitask preplay share one background-learning core that replays
//! prioritized trajectories and rolls the oracle simulator forward from every
//! replayed state. Dyna simulates toward the pursued goal; preplay samples
//! counterfactual goals from the accessible-goal distribution and biases its
//! simulation policy toward them, then backs the synthetic experience up for
//! both goals. With one goal per step, the pursued-goal sampler, and a zero
//! counterfactual mix, preplay reduces to Dyna bitwise under a shared rng
//! stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, GoalId, Pos, StateKey};
use crate::gridworld::{Goal, GridAction, GridError, Maze};
use crate::replay::{ReplayBuffer, Sampled, Trajectory};
use crate::values::{
    gpi_action, lambda_returns_into, sf_lambda_returns, sf_td_update, td_update_into, SFTable,
    Transition, UniversalQTable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    QLearning,
    UniversalSf,
    Dyna,
    MultitaskPreplay,
    Bfs,
    Dfs,
}

impl AgentKind {
    pub fn is_planner(self) -> bool {
        matches!(self, AgentKind::Bfs | AgentKind::Dfs)
    }

    pub fn simulates(self) -> bool {
        matches!(self, AgentKind::Dyna | AgentKind::MultitaskPreplay)
    }
}

/// Per-environment exploration rates, spaced logarithmically between the
/// bounds (base 0.1 parameterization) so values cluster toward the low end.
/// Each parallel environment keeps its value for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSchedule {
    pub n_envs: usize,
    pub low: f64,
    pub high: f64,
    pub base: f64,
}

impl EpsilonSchedule {
    pub fn new(n_envs: usize) -> Self {
        EpsilonSchedule {
            n_envs,
            low: 0.05,
            high: 0.9,
            base: 0.1,
        }
    }
}

pub fn epsilon_values(schedule: &EpsilonSchedule) -> Vec<f64> {
    let n = schedule.n_envs;
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i == 0 {
            out.push(schedule.low);
        } else if i == n - 1 {
            out.push(schedule.high);
        } else {
            let f = i as f64 / (n - 1) as f64;
            out.push((schedule.low.ln() + f * (schedule.high.ln() - schedule.low.ln())).exp());
        }
    }
    out
}

/// Tie rule for greedy evaluation actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTies {
    LowestIndex,
    KeyHash,
}

/// Greedy with ties broken by a hash of the state key: a fixed,
/// rng-free choice that still varies across states.
fn greedy_hash_ties(values: &[f64], key: StateKey) -> u8 {
    let mut ties = [0u8; 16];
    let mut count = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (a, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            ties[0] = a as u8;
            count = 1;
        } else if v == best {
            ties[count] = a as u8;
            count += 1;
        }
    }
    if count <= 1 {
        return ties[0];
    }
    let mut z = key.0.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 31;
    ties[(z % count as u64) as usize]
}

/// Greedy over an action-value row with ties broken uniformly at random.
/// Exploration and simulation policies need this: a freshly initialized
/// table ties everywhere, and a fixed tie order would pin every rollout to
/// one compass direction.
fn greedy_random_ties<R: Rng>(values: &[f64], rng: &mut R) -> u8 {
    let mut ties = [0u8; 16];
    let mut count = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (a, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            ties[0] = a as u8;
            count = 1;
        } else if v == best {
            ties[count] = a as u8;
            count += 1;
        }
    }
    if count <= 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..count)]
    }
}

/// Epsilon-greedy behavior policy on the universal Q-table: greedy with
/// probability 1 - eps (random tie-break), uniform random otherwise.
pub fn act<R: Rng>(
    q: &UniversalQTable,
    key: StateKey,
    goal: GoalId,
    eps: f64,
    rng: &mut R,
) -> u8 {
    if eps > 0.0 && rng.gen_range(0.0..1.0) < eps {
        rng.gen_range(0..q.n_actions()) as u8
    } else {
        let mut row = [0.0; 16];
        let row = &mut row[..q.n_actions()];
        q.action_values_into(key, goal, row);
        greedy_random_ties(row, rng)
    }
}

/// Simulation policy of multitask preplay: greedy on the mixed values
/// alpha_g Q(., g) + alpha_gp Q(., g'), epsilon-random otherwise. The mix
/// biases simulation toward the counterfactual task while letting it fall
/// back to the real task once the counterfactual one looks done.
#[allow(clippy::too_many_arguments)]
pub fn preplay_policy_action<R: Rng>(
    q: &UniversalQTable,
    key: StateKey,
    g: GoalId,
    gp: GoalId,
    alpha_g: f64,
    alpha_gp: f64,
    eps: f64,
    rng: &mut R,
) -> u8 {
    debug_assert!(alpha_g >= 0.0 && alpha_gp >= 0.0 && alpha_g + alpha_gp > 0.0);
    if eps > 0.0 && rng.gen_range(0.0..1.0) < eps {
        rng.gen_range(0..q.n_actions()) as u8
    } else {
        let n = q.n_actions();
        let mut row_g = [0.0; 16];
        let mut row_gp = [0.0; 16];
        q.action_values_into(key, g, &mut row_g[..n]);
        q.action_values_into(key, gp, &mut row_gp[..n]);
        for a in 0..n {
            row_g[a] = alpha_g * row_g[a] + alpha_gp * row_gp[a];
        }
        greedy_random_ties(&row_g[..n], rng)
    }
}

/// Where background simulation takes its per-step goals from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSource {
    /// Always the trajectory's pursued goal (Dyna and the reduction config).
    Pursued,
    /// Uniform over goals accessible from the replayed state; falls back to
    /// the pursued goal when none are accessible (simulation still runs).
    Accessible,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreplayConfig {
    pub n_goals: usize,
    pub n_preplay: usize,
    pub sim_len: usize,
    pub alpha_g: f64,
    pub alpha_gp: f64,
    pub eta_g: f64,
    pub eta_gp: f64,
    /// Simulation epsilon = 0.1^u with u drawn uniformly from this exponent
    /// range (one draw per rollout), keeping values in [0, 0.1] with a bias
    /// for smaller ones.
    pub sim_eps_low_exp: f64,
    pub sim_eps_high_exp: f64,
    pub goal_source: GoalSource,
}

impl Default for PreplayConfig {
    fn default() -> Self {
        PreplayConfig {
            n_goals: 1,
            n_preplay: 2,
            sim_len: 15,
            alpha_g: 0.5,
            alpha_gp: 1.0,
            eta_g: 1.0,
            eta_gp: 1.0,
            sim_eps_low_exp: 1.0,
            sim_eps_high_exp: 3.0,
            goal_source: GoalSource::Accessible,
        }
    }
}

impl PreplayConfig {
    /// Dyna's matched simulation budget per replayed step.
    pub fn n_sim(&self) -> usize {
        self.n_goals * self.n_preplay
    }
}

/// Simulation accounting. `budgeted_transitions` charges every launched
/// rollout its full allotment (rollouts x sim_len), which is the quantity the
/// matched-budget comparison fixes between Dyna and preplay;
/// `actual_transitions` counts steps really taken (rollouts stop early at
/// terminal states).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub rollouts: u64,
    pub budgeted_transitions: u64,
    pub actual_transitions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpiPolicySet {
    Train,
    TrainPlusNew,
    NewOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub kind: AgentKind,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub preplay: PreplayConfig,
    /// Off-task goals sampled per replayed subsequence by the SF learner.
    pub sf_goal_samples: usize,
    pub gpi_policy_set: GpiPolicySet,
}

impl AgentParams {
    pub fn new(kind: AgentKind) -> Self {
        AgentParams {
            kind,
            gamma: 0.992,
            lambda: 0.9,
            learning_rate: 0.1,
            preplay: PreplayConfig::default(),
            sf_goal_samples: 2,
            gpi_policy_set: GpiPolicySet::TrainPlusNew,
        }
    }
}

/// A value-learning agent (everything except the decision-time planners).
pub struct LearningAgent {
    pub kind: AgentKind,
    pub params: AgentParams,
    pub q: Option<UniversalQTable>,
    pub sf: Option<SFTable>,
    pub counters: SimCounters,
}

impl LearningAgent {
    pub fn new<D: Domain>(domain: &D, params: AgentParams) -> Self {
        assert!(!params.kind.is_planner(), "planners are not learning agents");
        let (n_actions, n_goals) = (domain.n_actions(), domain.n_goals());
        let mut q = None;
        let mut sf = None;
        if params.kind == AgentKind::UniversalSf {
            let prefs: Vec<Vec<f64>> = (0..n_goals)
                .map(|g| domain.goal_preference(GoalId(g as u16)))
                .collect();
            sf = Some(match domain.dense_key_space() {
                Some(n) => SFTable::dense(n, n_actions, n_goals, prefs, params.learning_rate),
                None => SFTable::interned(n_actions, n_goals, prefs, params.learning_rate),
            });
        } else {
            q = Some(match domain.dense_key_space() {
                Some(n) => UniversalQTable::dense(n, n_actions, n_goals, 0.0, params.learning_rate),
                None => UniversalQTable::interned(n_actions, n_goals, 0.0, params.learning_rate),
            });
        }
        LearningAgent {
            kind: params.kind,
            params,
            q,
            sf,
            counters: SimCounters::default(),
        }
    }

    /// Exploration action during training rollouts.
    pub fn act_train<R: Rng>(&self, key: StateKey, goal: GoalId, eps: f64, rng: &mut R) -> u8 {
        match (&self.q, &self.sf) {
            (Some(q), _) => act(q, key, goal, eps, rng),
            (None, Some(sf)) => {
                if eps > 0.0 && rng.gen_range(0.0..1.0) < eps {
                    rng.gen_range(0..sf.n_actions()) as u8
                } else {
                    let w = sf.preference(goal);
                    let mut row = [0.0; 16];
                    for a in 0..sf.n_actions() {
                        row[a] = sf.q_value(key, a as u8, goal, w);
                    }
                    greedy_random_ties(&row[..sf.n_actions()], rng)
                }
            }
            _ => unreachable!("agent holds a value store"),
        }
    }

    /// Greedy evaluation action; the SF agent evaluates with GPI over its
    /// configured candidate set. `ties` picks the rule for exact value ties:
    /// the deterministic lowest index (fully observable domains), or a hash
    /// of the agent-state key (partially observable domains, where held-out
    /// worlds necessarily present unseen, fully tied agent states and a
    /// constant tie direction would freeze against the first wall).
    pub fn act_eval(
        &self,
        key: StateKey,
        goal: GoalId,
        train_goals: &[GoalId],
        ties: EvalTies,
    ) -> u8 {
        match (&self.q, &self.sf) {
            (Some(q), _) => match ties {
                EvalTies::LowestIndex => q.greedy_action(key, goal),
                EvalTies::KeyHash => {
                    let mut row = [0.0; 16];
                    let row = &mut row[..q.n_actions()];
                    q.action_values_into(key, goal, row);
                    greedy_hash_ties(row, key)
                }
            },
            (None, Some(sf)) => {
                let mut candidates: Vec<GoalId> = match self.params.gpi_policy_set {
                    GpiPolicySet::Train => train_goals.to_vec(),
                    GpiPolicySet::TrainPlusNew => {
                        let mut c = train_goals.to_vec();
                        if !c.contains(&goal) {
                            c.push(goal);
                        }
                        c
                    }
                    GpiPolicySet::NewOnly => vec![goal],
                };
                if candidates.is_empty() {
                    candidates.push(goal);
                }
                gpi_action(sf, key, &candidates, sf.preference(goal)).expect("non-empty candidates")
            }
            _ => unreachable!(),
        }
    }

    /// One learning round: sample a prioritized batch, apply the
    /// kind-specific updates, and return the per-entry TD errors for
    /// re-prioritization.
    pub fn learn_round<D: Domain>(
        &mut self,
        domain: &D,
        buf: &ReplayBuffer<D::State>,
        batch_size: usize,
        all_goals: &[GoalId],
        rng: &mut ChaCha8Rng,
    ) -> Vec<(u64, Vec<f64>)> {
        let batch = match buf.sample(batch_size, rng) {
            Ok(b) => b,
            Err(_) => return Vec::new(),
        };
        match self.kind {
            AgentKind::QLearning => self.replay_q_pass(domain, buf, &batch, None),
            AgentKind::Dyna | AgentKind::MultitaskPreplay => {
                let source = if self.kind == AgentKind::Dyna {
                    GoalSource::Pursued
                } else {
                    self.params.preplay.goal_source
                };
                self.replay_q_pass(domain, buf, &batch, Some((source, rng)))
            }
            AgentKind::UniversalSf => self.replay_sf_pass(domain, buf, &batch, all_goals, rng),
            _ => unreachable!(),
        }
    }

    /// Replay TD pass for Q-table agents, with optional background simulation
    /// launched from every replayed step.
    fn replay_q_pass<D: Domain>(
        &mut self,
        domain: &D,
        buf: &ReplayBuffer<D::State>,
        batch: &[Sampled],
        mut simulate: Option<(GoalSource, &mut ChaCha8Rng)>,
    ) -> Vec<(u64, Vec<f64>)> {
        let Self {
            q,
            params,
            counters,
            ..
        } = self;
        let q = q.as_mut().expect("Q agent");
        let (gamma, lambda) = (params.gamma, params.lambda);
        let cfg = &params.preplay;
        let mut priority_updates = Vec::with_capacity(batch.len());
        let mut slice = Vec::new();
        let mut targets = Vec::new();
        let mut errors = Vec::new();
        let mut sim_traj: Vec<Transition> = Vec::new();
        let mut sim_rewards_gp: Vec<f64> = Vec::new();
        let mut sim_targets: Vec<f64> = Vec::new();
        let mut sim_errors: Vec<f64> = Vec::new();
        let mut accessible: Vec<GoalId> = Vec::new();

        for sample in batch {
            let traj = buf.trajectory(sample.slot);
            let goal = sample.goal;
            build_transitions(domain, traj, sample.start, sample.len, false, &mut slice);

            targets.clear();
            targets.resize(slice.len(), 0.0);
            lambda_returns_into(&slice, q, goal, gamma, lambda, &mut targets);
            errors.clear();
            errors.resize(slice.len(), 0.0);
            td_update_into(q, &slice, goal, &targets, sample.weight, &mut errors);
            priority_updates.push((sample.id, errors.clone()));

            let Some((source, rng)) = simulate.as_mut() else { continue };
            let source = *source;
            if cfg.n_sim() == 0 {
                continue;
            }
            for t in 0..slice.len() {
                let start_state = &traj.states[sample.start + t];
                if domain.is_terminal(start_state) {
                    continue;
                }
                for _ in 0..cfg.n_goals {
                    let gp = match source {
                        GoalSource::Pursued => goal,
                        GoalSource::Accessible => {
                            domain.accessible_goals(start_state, &mut accessible);
                            if accessible.is_empty() {
                                goal
                            } else {
                                accessible[rng.gen_range(0..accessible.len())]
                            }
                        }
                    };
                    for _ in 0..cfg.n_preplay {
                        let u = rng.gen_range(cfg.sim_eps_low_exp..=cfg.sim_eps_high_exp);
                        let sim_eps = 0.1f64.powf(u);
                        counters.rollouts += 1;
                        counters.budgeted_transitions += cfg.sim_len as u64;
                        rollout(
                            domain,
                            q,
                            start_state,
                            goal,
                            gp,
                            cfg,
                            sim_eps,
                            &mut sim_traj,
                            &mut sim_rewards_gp,
                            *rng,
                        );
                        counters.actual_transitions += sim_traj.len() as u64;
                        if sim_traj.is_empty() {
                            continue;
                        }
                        if cfg.eta_g > 0.0 {
                            sim_targets.clear();
                            sim_targets.resize(sim_traj.len(), 0.0);
                            lambda_returns_into(&sim_traj, q, goal, gamma, lambda, &mut sim_targets);
                            sim_errors.clear();
                            sim_errors.resize(sim_traj.len(), 0.0);
                            td_update_into(q, &sim_traj, goal, &sim_targets, cfg.eta_g, &mut sim_errors);
                        }
                        if cfg.eta_gp > 0.0 && gp != goal {
                            // Same synthetic trajectory, counterfactual rewards.
                            for (tr, r) in sim_traj.iter_mut().zip(&sim_rewards_gp) {
                                tr.reward = *r;
                            }
                            sim_targets.clear();
                            sim_targets.resize(sim_traj.len(), 0.0);
                            lambda_returns_into(&sim_traj, q, gp, gamma, lambda, &mut sim_targets);
                            sim_errors.clear();
                            sim_errors.resize(sim_traj.len(), 0.0);
                            td_update_into(q, &sim_traj, gp, &sim_targets, cfg.eta_gp, &mut sim_errors);
                        }
                    }
                }
            }
        }
        priority_updates
    }

    /// Replay pass for the SF agent: every sampled subsequence updates the
    /// pursued goal plus randomly sampled off-task goals (pure model-free
    /// off-task learning, no simulation).
    fn replay_sf_pass<D: Domain>(
        &mut self,
        domain: &D,
        buf: &ReplayBuffer<D::State>,
        batch: &[Sampled],
        all_goals: &[GoalId],
        rng: &mut ChaCha8Rng,
    ) -> Vec<(u64, Vec<f64>)> {
        let sf = self.sf.as_mut().expect("SF agent");
        let (gamma, lambda) = (self.params.gamma, self.params.lambda);
        let mut priority_updates = Vec::with_capacity(batch.len());
        let mut slice = Vec::new();
        for sample in batch {
            let traj = buf.trajectory(sample.slot);
            build_transitions(domain, traj, sample.start, sample.len, true, &mut slice);

            let targets = sf_lambda_returns(&slice, sf, sample.goal, gamma, lambda)
                .expect("non-empty slice with features");
            let errors = sf_td_update(sf, &slice, sample.goal, &targets, sample.weight);
            priority_updates.push((sample.id, errors));

            for _ in 0..self.params.sf_goal_samples {
                let g = all_goals[rng.gen_range(0..all_goals.len())];
                if g == sample.goal {
                    continue;
                }
                let t = sf_lambda_returns(&slice, sf, g, gamma, lambda).expect("features present");
                sf_td_update(sf, &slice, g, &t, sample.weight);
            }
        }
        priority_updates
    }

    pub fn checkpoint(&self) -> String {
        match (&self.q, &self.sf) {
            (Some(q), _) => q.checkpoint(),
            (_, Some(sf)) => sf.checkpoint(),
            _ => unreachable!(),
        }
    }
}

/// Dyna background pass: `n_sim` pursued-goal rollouts of length at most
/// `sim_len` from every replayed step, TD-lambda updates on replayed and
/// simulated data alike.
pub fn dyna_background<D: Domain>(
    agent: &mut LearningAgent,
    domain: &D,
    buf: &ReplayBuffer<D::State>,
    batch: &[Sampled],
    rng: &mut ChaCha8Rng,
) -> Vec<(u64, Vec<f64>)> {
    agent.replay_q_pass(domain, buf, batch, Some((GoalSource::Pursued, rng)))
}

/// Multitask-preplay background pass: per replayed step, `n_goals`
/// counterfactual goals each with `n_preplay` rollouts under the mixed
/// simulation policy; synthetic data is backed up for both the pursued and
/// the counterfactual goal. The simulation budget n_goals * n_preplay matches
/// Dyna's n_sim exactly.
pub fn preplay_background<D: Domain>(
    agent: &mut LearningAgent,
    domain: &D,
    buf: &ReplayBuffer<D::State>,
    batch: &[Sampled],
    rng: &mut ChaCha8Rng,
) -> Vec<(u64, Vec<f64>)> {
    let source = agent.params.preplay.goal_source;
    agent.replay_q_pass(domain, buf, batch, Some((source, rng)))
}

/// Off-task SF learning pass over a replayed batch.
pub fn sf_background<D: Domain>(
    agent: &mut LearningAgent,
    domain: &D,
    buf: &ReplayBuffer<D::State>,
    batch: &[Sampled],
    goals: &[GoalId],
    rng: &mut ChaCha8Rng,
) -> Vec<(u64, Vec<f64>)> {
    agent.replay_sf_pass(domain, buf, batch, goals, rng)
}

/// Materialize `len` transitions of a stored trajectory starting at `start`.
pub fn build_transitions<D: Domain>(
    domain: &D,
    traj: &Trajectory<D::State>,
    start: usize,
    len: usize,
    with_features: bool,
    out: &mut Vec<Transition>,
) {
    out.clear();
    let end = (start + len).min(traj.len());
    for t in start..end {
        let prev = &traj.states[t];
        let next = &traj.states[t + 1];
        let features = if with_features {
            let mut buf = vec![0.0; domain.feature_dim()];
            domain.features(prev, next, &mut buf);
            buf
        } else {
            Vec::new()
        };
        out.push(Transition {
            state: domain.state_key(prev),
            action: traj.actions[t],
            reward: traj.rewards[t],
            next_state: domain.state_key(next),
            terminal: t == traj.len() - 1 && traj.terminal,
            features,
        });
    }
}

/// Simulate one rollout from `start` under the mixed preplay policy, stopping
/// at terminal or truncated states. Fills `out` with pursued-goal transitions
/// and `rewards_gp` with the counterfactual-goal rewards of the same steps.
#[allow(clippy::too_many_arguments)]
fn rollout<D: Domain>(
    domain: &D,
    q: &UniversalQTable,
    start: &D::State,
    goal: GoalId,
    gp: GoalId,
    cfg: &PreplayConfig,
    sim_eps: f64,
    out: &mut Vec<Transition>,
    rewards_gp: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
) {
    out.clear();
    rewards_gp.clear();
    let mut state = start.clone();
    for _ in 0..cfg.sim_len {
        if domain.is_terminal(&state) || domain.truncated(&state) {
            break;
        }
        let a = if gp == goal {
            // Pursued-goal simulation (Dyna and the reduction config) is the
            // agent's own epsilon-greedy policy; the mixed policy with a
            // single goal picks the same action for any positive weights.
            act(q, domain.state_key(&state), goal, sim_eps, rng)
        } else {
            preplay_policy_action(
                q,
                domain.state_key(&state),
                goal,
                gp,
                cfg.alpha_g,
                cfg.alpha_gp,
                sim_eps,
                rng,
            )
        };
        let next = domain.step(&state, a);
        out.push(Transition {
            state: domain.state_key(&state),
            action: a,
            reward: domain.reward(&state, &next, goal),
            next_state: domain.state_key(&next),
            terminal: domain.is_terminal(&next),
            features: Vec::new(),
        });
        rewards_gp.push(domain.reward(&state, &next, gp));
        state = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Bfs,
    Dfs,
}

/// Decision-time planning over the maze floor graph. BFS returns a shortest
/// path; DFS returns the first path found under the fixed neighbor order
/// (up, down, left, right). The expansion count is the planning-cost proxy.
pub fn plan(
    kind: PlanKind,
    maze: &Maze,
    start: Pos,
    goal: Goal,
) -> Result<(Vec<GridAction>, usize), GridError> {
    let target = maze.objects[&goal.id];
    match kind {
        PlanKind::Bfs => bfs_plan(maze, start, target),
        PlanKind::Dfs => dfs_plan(maze, start, target),
    }
}

fn passable(maze: &Maze, p: Pos, target: Pos) -> bool {
    use crate::gridworld::Cell;
    if maze.cell(p) == Cell::Wall {
        return false;
    }
    p == target || maze.objects.values().all(|&op| op != p)
}

fn bfs_plan(maze: &Maze, start: Pos, target: Pos) -> Result<(Vec<GridAction>, usize), GridError> {
    use std::collections::VecDeque;
    if start == target {
        return Ok((vec![], 0));
    }
    let idx = |p: Pos| p.row * maze.width + p.col;
    let mut parent: Vec<Option<(Pos, GridAction)>> = vec![None; maze.width * maze.height];
    let mut seen = vec![false; maze.width * maze.height];
    let mut queue = VecDeque::new();
    seen[idx(start)] = true;
    queue.push_back(start);
    let mut expansions = 0;
    while let Some(p) = queue.pop_front() {
        expansions += 1;
        for action in GridAction::ALL {
            let (dr, dc) = action.delta();
            let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
            if !maze.in_bounds(nr, nc) {
                continue;
            }
            let np = Pos::new(nr as usize, nc as usize);
            if seen[idx(np)] || !passable(maze, np, target) {
                continue;
            }
            seen[idx(np)] = true;
            parent[idx(np)] = Some((p, action));
            if np == target {
                return Ok((reconstruct(&parent, maze.width, start, target), expansions));
            }
            queue.push_back(np);
        }
    }
    Err(GridError::Unreachable)
}

fn dfs_plan(maze: &Maze, start: Pos, target: Pos) -> Result<(Vec<GridAction>, usize), GridError> {
    if start == target {
        return Ok((vec![], 0));
    }
    let idx = |p: Pos| p.row * maze.width + p.col;
    let mut seen = vec![false; maze.width * maze.height];
    let mut path: Vec<GridAction> = Vec::new();
    let mut expansions = 0;
    seen[idx(start)] = true;
    if dfs_visit(maze, start, target, &mut seen, &mut path, &mut expansions) {
        Ok((path, expansions))
    } else {
        Err(GridError::Unreachable)
    }
}

fn dfs_visit(
    maze: &Maze,
    p: Pos,
    target: Pos,
    seen: &mut [bool],
    path: &mut Vec<GridAction>,
    expansions: &mut usize,
) -> bool {
    *expansions += 1;
    // Take the target immediately when adjacent, before any descent.
    for action in GridAction::ALL {
        let (dr, dc) = action.delta();
        let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
        if maze.in_bounds(nr, nc) && Pos::new(nr as usize, nc as usize) == target {
            path.push(action);
            return true;
        }
    }
    for action in GridAction::ALL {
        let (dr, dc) = action.delta();
        let (nr, nc) = (p.row as isize + dr, p.col as isize + dc);
        if !maze.in_bounds(nr, nc) {
            continue;
        }
        let np = Pos::new(nr as usize, nc as usize);
        let slot = np.row * maze.width + np.col;
        if seen[slot] || !passable(maze, np, target) {
            continue;
        }
        seen[slot] = true;
        path.push(action);
        if dfs_visit(maze, np, target, seen, path, expansions) {
            return true;
        }
        path.pop();
    }
    false
}

fn reconstruct(
    parent: &[Option<(Pos, GridAction)>],
    width: usize,
    start: Pos,
    target: Pos,
) -> Vec<GridAction> {
    let mut actions = Vec::new();
    let mut p = target;
    while p != start {
        let (prev, a) = parent[p.row * width + p.col].expect("reached node has a parent");
        actions.push(a);
        p = prev;
    }
    actions.reverse();
    actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{parse_maze, shortest_path, GridState, GridTask, ObjectId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_schedule_shapes() {
        let single = epsilon_values(&EpsilonSchedule::new(1));
        assert_eq!(single, vec![0.05]);
        let vals = epsilon_values(&EpsilonSchedule::new(32));
        assert_eq!(vals.len(), 32);
        assert_eq!(vals[0], 0.05);
        assert_eq!(vals[31], 0.9);
        assert!(vals.windows(2).all(|w| w[0] < w[1]), "monotone increasing");
        // Log spacing clusters mass toward the low end: more than half the
        // values sit below the arithmetic midpoint.
        let below = vals.iter().filter(|&&e| e < (0.05 + 0.9) / 2.0).count();
        assert!(below > 16, "{below} of 32 below the midpoint");
    }

    #[test]
    fn act_greedy_when_eps_zero() {
        let mut q = UniversalQTable::interned(4, 1, 0.0, 0.1);
        q.set(StateKey(0), 2, GoalId(0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(act(&q, StateKey(0), GoalId(0), 0.0, &mut rng), 2);
        }
    }

    #[test]
    fn act_uniform_when_eps_one() {
        let q = UniversalQTable::interned(4, 1, 0.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[act(&q, StateKey(0), GoalId(0), 1.0, &mut rng) as usize] += 1;
        }
        // Chi-squared df = 3, p > 0.01 region is below 11.345.
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn act_mixture_probability() {
        let mut q = UniversalQTable::interned(2, 1, 0.0, 0.1);
        q.set(StateKey(0), 0, GoalId(0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000usize;
        let hits = (0..draws)
            .filter(|_| act(&q, StateKey(0), GoalId(0), 0.5, &mut rng) == 0)
            .count();
        // P(action 0) = 0.5 + 0.5 * 0.5 = 0.75, binomial 3-sigma band.
        let p = 0.75;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - draws as f64 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn preplay_policy_mixes_goals() {
        let mut q = UniversalQTable::interned(2, 2, 0.0, 0.1);
        q.set(StateKey(0), 0, GoalId(0), 1.0);
        q.set(StateKey(0), 1, GoalId(1), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // alpha_gp = 0 reduces to greedy on g.
        assert_eq!(
            preplay_policy_action(&q, StateKey(0), GoalId(0), GoalId(1), 1.0, 0.0, 0.0, &mut rng),
            0
        );
        // alpha_g = 0 reduces to greedy on g'.
        assert_eq!(
            preplay_policy_action(&q, StateKey(0), GoalId(0), GoalId(1), 0.0, 1.0, 0.0, &mut rng),
            1
        );
        // Equal mix: sums are (1, 2) -> action 1.
        assert_eq!(
            preplay_policy_action(&q, StateKey(0), GoalId(0), GoalId(1), 1.0, 1.0, 0.0, &mut rng),
            1
        );
    }

    fn make_task(text: &str) -> GridTask {
        GridTask::new(parse_maze(text).unwrap(), 1)
    }

    #[test]
    fn planners_adjacent_goal() {
        let task = make_task(".A\n..\n");
        let goal = task.goal(ObjectId('A'));
        let (bfs_path, _) = plan(PlanKind::Bfs, &task.maze, Pos::new(0, 0), goal).unwrap();
        let (dfs_path, _) = plan(PlanKind::Dfs, &task.maze, Pos::new(0, 0), goal).unwrap();
        assert_eq!(bfs_path.len(), 1);
        assert_eq!(dfs_path.len(), 1);
    }

    #[test]
    fn bfs_matches_shortest_path_oracle_on_random_mazes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        for _ in 0..100 {
            if checked >= 50 {
                break;
            }
            let (w, h) = (rng.gen_range(4..9), rng.gen_range(4..9));
            let mut text = String::new();
            for r in 0..h {
                for c in 0..w {
                    let border = r == 0 || c == 0 || r == h - 1 || c == w - 1;
                    text.push(if !border && rng.gen_bool(0.25) { '#' } else { '.' });
                }
                text.push('\n');
            }
            let mut maze = match parse_maze(&text) {
                Ok(m) => m,
                Err(_) => continue,
            };
            // Drop one object on a random floor cell away from the start.
            let target = Pos::new(h - 2, w - 2);
            if maze.cell(target) == crate::gridworld::Cell::Wall {
                continue;
            }
            maze.objects.insert(ObjectId('A'), target);
            maze.goal_catalog = vec![ObjectId('A')];
            let start = Pos::new(1, 1);
            if maze.cell(start) == crate::gridworld::Cell::Wall || start == target {
                continue;
            }
            let goal = maze.goal(ObjectId('A')).unwrap();
            let oracle = shortest_path(&maze, start, target);
            let bfs = plan(PlanKind::Bfs, &maze, start, goal);
            match (oracle, bfs) {
                (Ok(o), Ok((b, _))) => {
                    assert_eq!(o.len(), b.len(), "maze:\n{text}");
                    let (d, _) = plan(PlanKind::Dfs, &maze, start, goal).unwrap();
                    assert!(d.len() >= b.len(), "DFS never beats BFS");
                    checked += 1;
                }
                (Err(_), Err(_)) => {}
                (o, b) => panic!("oracle {o:?} vs bfs {b:?} disagree on reachability"),
            }
        }
        assert!(checked >= 50);
    }

    #[test]
    fn executed_plans_succeed() {
        let task = make_task(include_str!("../assets/mazes/two_paths.txt"));
        let (spawn, _) = task.maze.spawn_eval[0];
        for kind in [PlanKind::Bfs, PlanKind::Dfs] {
            let goal = task.goal(ObjectId('C'));
            let (path, expansions) = plan(kind, &task.maze, spawn, goal).unwrap();
            assert!(expansions > 0);
            let mut s = GridState::at(spawn);
            for a in &path {
                s = crate::gridworld::grid_step(&task.maze, &s, *a).unwrap().0;
            }
            assert_eq!(s.collected, Some(ObjectId('C')), "{kind:?} plan reaches C");
            assert!(path.len() <= task.maze.step_cap());
        }
    }

    fn fill_buffer(task: &GridTask, buf: &mut ReplayBuffer<GridState>, rng: &mut ChaCha8Rng) {
        // A few random-policy episodes toward goal 0.
        for _ in 0..6 {
            let (spawn, _) = task.maze.spawn_train[0];
            let mut s = GridState::at(spawn);
            let mut traj = Trajectory {
                states: vec![s],
                actions: vec![],
                rewards: vec![],
                terminal: false,
                goal: GoalId(0),
            };
            for _ in 0..30 {
                let a = rng.gen_range(0..4) as u8;
                let next = task.step(&s, a);
                traj.actions.push(a);
                traj.rewards.push(task.reward(&s, &next, GoalId(0)));
                traj.states.push(next);
                s = next;
                if task.is_terminal(&s) {
                    traj.terminal = true;
                    break;
                }
            }
            buf.insert(traj, 1.0).unwrap();
        }
    }

    #[test]
    fn dyna_with_zero_sims_equals_plain_q_learning() {
        let task = make_task(include_str!("../assets/mazes/two_paths.txt"));
        let mut buf = ReplayBuffer::new(64, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        fill_buffer(&task, &mut buf, &mut rng);

        let mut params_q = AgentParams::new(AgentKind::QLearning);
        params_q.gamma = 0.9;
        let mut params_d = AgentParams::new(AgentKind::Dyna);
        params_d.gamma = 0.9;
        params_d.preplay.n_preplay = 0;

        let mut ql = LearningAgent::new(&task, params_q);
        let mut dyna = LearningAgent::new(&task, params_d);
        let goals: Vec<GoalId> = (0..task.n_goals()).map(|g| GoalId(g as u16)).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            ql.learn_round(&task, &buf, 8, &goals, &mut r1);
            dyna.learn_round(&task, &buf, 8, &goals, &mut r2);
        }
        assert_eq!(ql.checkpoint(), dyna.checkpoint());
        assert_eq!(dyna.counters.actual_transitions, 0);
    }

    #[test]
    fn preplay_reduces_to_dyna_bitwise() {
        let task = make_task(include_str!("../assets/mazes/two_paths.txt"));
        let mut buf = ReplayBuffer::new(64, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        fill_buffer(&task, &mut buf, &mut rng);

        let mut params_d = AgentParams::new(AgentKind::Dyna);
        params_d.gamma = 0.9;
        let mut params_p = AgentParams::new(AgentKind::MultitaskPreplay);
        params_p.gamma = 0.9;
        params_p.preplay.goal_source = GoalSource::Pursued;
        params_p.preplay.n_goals = 1;
        params_p.preplay.n_preplay = params_d.preplay.n_sim();
        params_p.preplay.alpha_gp = 0.0;
        params_p.preplay.eta_gp = 0.0;

        let mut dyna = LearningAgent::new(&task, params_d);
        let mut preplay = LearningAgent::new(&task, params_p);
        let goals: Vec<GoalId> = (0..task.n_goals()).map(|g| GoalId(g as u16)).collect();
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..15 {
            dyna.learn_round(&task, &buf, 8, &goals, &mut r1);
            preplay.learn_round(&task, &buf, 8, &goals, &mut r2);
        }
        assert_eq!(dyna.checkpoint(), preplay.checkpoint());
        assert_eq!(dyna.counters, preplay.counters);
    }

    #[test]
    fn matched_budgets_are_identical_on_a_shared_batch() {
        let task = make_task(include_str!("../assets/mazes/two_paths.txt"));
        let mut buf = ReplayBuffer::new(64, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        fill_buffer(&task, &mut buf, &mut rng);
        let batch = buf.sample(8, &mut rng).unwrap();

        let mut dyna = LearningAgent::new(&task, AgentParams::new(AgentKind::Dyna));
        let mut mtp = LearningAgent::new(&task, AgentParams::new(AgentKind::MultitaskPreplay));
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        dyna_background(&mut dyna, &task, &buf, &batch, &mut r1);
        preplay_background(&mut mtp, &task, &buf, &batch, &mut r2);
        assert_eq!(dyna.counters.rollouts, mtp.counters.rollouts);
        assert_eq!(
            dyna.counters.budgeted_transitions,
            mtp.counters.budgeted_transitions
        );
    }
}
