//! Config-driven experiment orchestration: seed management, vectorized
//! parallel-environment rollouts with a single learner, train/eval phase
//! control, environment-transfer sweeps, JSONL episode records, and
//! plot-data emission.
//!
//! Every run is deterministic given its config and seed; the
//! `--deterministic` flag additionally zeroes wall-clock fields so record
//! streams are byte-identical across repeats.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    epsilon_values, plan, AgentKind, AgentParams, EpsilonSchedule, EvalTies, GpiPolicySet,
    PlanKind, PreplayConfig, SimCounters,
};
use crate::craftworld::{
    generate_world, CraftEnsemble, CraftState, CraftTask, SeedManifest, Subtask, World,
    WorldParams, GLOBAL_GOAL,
};
use crate::domain::{Domain, GoalId, Pos};
use crate::gridworld::{parse_maze, rotate_maze, GridState, GridTask, Maze, ObjectId};
use crate::metrics::{
    dir_overlap, map_overlap, path_matrix, summarize, PathMatrix, Regime, ReuseThresholds,
    ReuseVerdict, SeedOutcomes, Summary,
};
use crate::replay::{ReplayBuffer, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("environment load failed: {0}")]
    EnvironmentLoadFailed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

impl HarnessError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        HarnessError::ConfigInvalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// CLI exit code: 2 for config problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigInvalid { .. } | HarnessError::Parse(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Gridworld {
        maze_file: PathBuf,
        #[serde(default = "default_rotations")]
        rotations: u8,
        #[serde(default = "default_landmark_radius")]
        landmark_radius: usize,
    },
    Craftworld {
        #[serde(flatten)]
        params: WorldParams,
        /// Worlds per block for block-style (human-analog) runs.
        #[serde(default = "default_rotations")]
        blocks: u8,
    },
}

fn default_rotations() -> u8 {
    4
}

fn default_landmark_radius() -> usize {
    1
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub goal: String,
    #[serde(default)]
    pub spawn: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub train_goals: Vec<String>,
    #[serde(default)]
    pub eval_pairs: Vec<EvalPair>,
    /// Include evaluation spawns in the training spawn set (the shared
    /// "white star" start of the two-paths protocol).
    #[serde(default)]
    pub train_from_eval_spawns: bool,
    #[serde(default = "default_alpha_map")]
    pub reuse_alpha_map: f64,
    #[serde(default = "default_alpha_dir")]
    pub reuse_alpha_dir: f64,
}

fn default_alpha_map() -> f64 {
    0.5
}

fn default_alpha_dir() -> f64 {
    0.5
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_eps_low")]
    pub epsilon_low: f64,
    #[serde(default = "default_eps_high")]
    pub epsilon_high: f64,
    #[serde(default = "default_sf_goal_samples")]
    pub sf_goal_samples: usize,
    #[serde(default = "default_gpi_policy_set")]
    pub gpi_policy_set: GpiPolicySet,
}

fn default_gamma() -> f64 {
    0.992
}
fn default_lambda() -> f64 {
    0.9
}
fn default_lr() -> f64 {
    0.1
}
fn default_eps_low() -> f64 {
    0.05
}
fn default_eps_high() -> f64 {
    0.9
}
fn default_sf_goal_samples() -> usize {
    2
}
fn default_gpi_policy_set() -> GpiPolicySet {
    GpiPolicySet::TrainPlusNew
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_priority_exponent")]
    pub priority_exponent: f64,
    #[serde(default = "default_max_priority_weight")]
    pub max_priority_weight: f64,
    #[serde(default = "default_importance_beta")]
    pub importance_beta: f64,
    pub subsequence_length: usize,
    pub batch_size: usize,
}

fn default_capacity() -> usize {
    crate::replay::DEFAULT_CAPACITY
}
fn default_priority_exponent() -> f64 {
    0.6
}
fn default_max_priority_weight() -> f64 {
    0.9
}
fn default_importance_beta() -> f64 {
    1.0
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: default_capacity(),
            priority_exponent: 0.6,
            max_priority_weight: 0.9,
            importance_beta: 1.0,
            subsequence_length: 40,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Total training environment steps, split evenly across blocks.
    pub training_budget: u64,
    #[serde(default = "default_n_envs")]
    pub n_parallel_envs: usize,
    pub learn_every: u64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    pub n_seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub deterministic: bool,
}

fn default_n_envs() -> usize {
    32
}
fn default_warmup() -> usize {
    1000
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub train_seed_counts: Vec<usize>,
    pub n_test_seeds: usize,
    pub n_inits: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub name: String,
    pub environment: EnvironmentConfig,
    pub tasks: TaskConfig,
    pub agent: AgentConfig,
    #[serde(default)]
    pub replay: ReplayConfig,
    #[serde(default)]
    pub background: PreplayConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub transfer: Option<TransferConfig>,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

impl ExperimentConfig {
    /// Load a preset, resolving relative paths against the config's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let EnvironmentConfig::Gridworld { maze_file, .. } = &mut cfg.environment {
            if maze_file.is_relative() {
                *maze_file = base.join(&maze_file);
            }
        }
        if cfg.run.out_dir.is_relative() {
            cfg.run.out_dir = base.join(&cfg.run.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}"),
            ));
        }
        if self.run.training_budget == 0 && !self.tasks.eval_pairs.is_empty() {
            // Budget 0 is allowed: eval-only run on initialized tables.
        }
        if self.run.n_seeds == 0 {
            return Err(HarnessError::invalid("run.n_seeds", "must be positive"));
        }
        if self.run.learn_every == 0 {
            return Err(HarnessError::invalid("run.learn_every", "must be positive"));
        }
        if self.run.n_parallel_envs == 0 {
            return Err(HarnessError::invalid(
                "run.n_parallel_envs",
                "must be positive",
            ));
        }
        if self.replay.batch_size == 0 || self.replay.subsequence_length == 0 {
            return Err(HarnessError::invalid("replay", "batch and length must be positive"));
        }
        if self.tasks.train_goals.is_empty() {
            return Err(HarnessError::invalid("tasks.train_goals", "must be non-empty"));
        }
        for pair in &self.tasks.eval_pairs {
            if self.tasks.train_goals.contains(&pair.goal) {
                return Err(HarnessError::invalid(
                    "tasks.eval_pairs",
                    format!("evaluation goal `{}` also appears in train_goals", pair.goal),
                ));
            }
        }
        match &self.environment {
            EnvironmentConfig::Gridworld { rotations, .. } => {
                if *rotations == 0 {
                    return Err(HarnessError::invalid("environment.rotations", "must be positive"));
                }
            }
            EnvironmentConfig::Craftworld { params, blocks } => {
                if self.agent.kind.is_planner() {
                    return Err(HarnessError::invalid(
                        "agent.kind",
                        "planners require full observability (gridworld only)",
                    ));
                }
                if params.size < 8 {
                    return Err(HarnessError::invalid("environment.size", "must be >= 8"));
                }
                if *blocks == 0 && self.transfer.is_none() {
                    return Err(HarnessError::invalid("environment.blocks", "must be positive"));
                }
            }
        }
        if let Some(t) = &self.transfer {
            if t.train_seed_counts.is_empty() || t.n_inits == 0 || t.n_test_seeds == 0 {
                return Err(HarnessError::invalid("transfer", "counts, inits, and test seeds must be positive"));
            }
            if !t.train_seed_counts.windows(2).all(|w| w[0] < w[1]) {
                return Err(HarnessError::invalid(
                    "transfer.train_seed_counts",
                    "must be sorted ascending",
                ));
            }
        }
        Ok(())
    }

    fn agent_params(&self) -> AgentParams {
        AgentParams {
            kind: self.agent.kind,
            gamma: self.agent.gamma,
            lambda: self.agent.lambda,
            learning_rate: self.agent.learning_rate,
            preplay: self.background.clone(),
            sf_goal_samples: self.agent.sf_goal_samples,
            gpi_policy_set: self.agent.gpi_policy_set,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

/// One JSONL row per episode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub block: usize,
    pub phase: Phase,
    pub task: String,
    pub outcome: bool,
    pub episode_len: usize,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o_map: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o_dir: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reused: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansions: Option<usize>,
    pub env_steps: u64,
    pub wall_time_ms: f64,
}

/// Run-level summary, stored as TOML next to the records.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub agent: AgentKind,
    pub n_seeds: u64,
    pub env_steps: u64,
    pub sim_rollouts: u64,
    pub sim_budgeted_transitions: u64,
    pub sim_actual_transitions: u64,
    pub success_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_rate: Option<f64>,
    pub success_median: f64,
    pub success_ci: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_median: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_ci: Option<(f64, f64)>,
    /// Mean held-out return (transfer runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_subtask_rates: Option<Vec<f64>>,
}

struct RecordSink {
    file: std::io::BufWriter<std::fs::File>,
    pub rows: u64,
}

impl RecordSink {
    fn create(path: &Path) -> Result<Self, HarnessError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            file,
            "{}",
            serde_json::json!({"type": "header", "schema_version": SCHEMA_VERSION})
        )?;
        Ok(RecordSink { file, rows: 0 })
    }

    fn write(&mut self, record: &RunRecord) -> Result<(), HarnessError> {
        writeln!(self.file, "{}", serde_json::to_string(record).expect("serialize"))?;
        self.rows += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<(), HarnessError> {
        self.file.flush()?;
        Ok(())
    }
}

fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    // SplitMix64 mix of (seed, label) so per-purpose streams are independent.
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(label.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn now_ms(deterministic: bool, t0: std::time::Instant) -> f64 {
    if deterministic {
        0.0
    } else {
        t0.elapsed().as_secs_f64() * 1e3
    }
}

/// Resolve goal names against a domain.
fn grid_goal(maze: &Maze, name: &str) -> Result<GoalId, HarnessError> {
    let ch = name
        .chars()
        .next()
        .filter(|c| name.len() == 1 && c.is_ascii_alphabetic())
        .ok_or_else(|| HarnessError::invalid("tasks", format!("bad grid goal `{name}`")))?;
    let goal = maze
        .goal(ObjectId(ch))
        .ok_or_else(|| HarnessError::invalid("tasks", format!("goal `{name}` not in maze")))?;
    Ok(GoalId(goal.index as u16))
}

fn craft_goal(name: &str) -> Result<GoalId, HarnessError> {
    let id = match name {
        "global" => GLOBAL_GOAL,
        "diamond" => Subtask::MineDiamond.goal_id(),
        "sapphire" => Subtask::MineSapphire.goal_id(),
        "ruby" => Subtask::MineRuby.goal_id(),
        other => {
            return Err(HarnessError::invalid(
                "tasks",
                format!("bad craft goal `{other}` (use global/diamond/sapphire/ruby)"),
            ))
        }
    };
    Ok(id)
}

/// Vectorized training phase over logical parallel environments with a single
/// learner at the configured cadence. Returns total environment steps taken.
#[allow(clippy::too_many_arguments)]
fn train_phase<D, FSpawn, FGoal>(
    cfg: &ExperimentConfig,
    domain: &D,
    agent: &mut Option<crate::agents::LearningAgent>,
    buf: &mut ReplayBuffer<D::State>,
    budget: u64,
    step_cap: usize,
    seed: u64,
    block: usize,
    sink: &mut RecordSink,
    env_steps: &mut u64,
    task_name: impl Fn(GoalId) -> String,
    mut spawn_fn: FSpawn,
    mut goal_fn: FGoal,
    t0: std::time::Instant,
) -> Result<(), HarnessError>
where
    D: Domain,
    FSpawn: FnMut(&mut ChaCha8Rng) -> D::State,
    FGoal: FnMut(&mut ChaCha8Rng) -> GoalId,
{
    let n_envs = cfg.run.n_parallel_envs;
    let eps = epsilon_values(&EpsilonSchedule {
        n_envs,
        low: cfg.agent.epsilon_low,
        high: cfg.agent.epsilon_high,
        base: 0.1,
    });
    let all_goals: Vec<GoalId> = (0..domain.n_goals()).map(|g| GoalId(g as u16)).collect();
    let mut env_rngs: Vec<ChaCha8Rng> = (0..n_envs)
        .map(|i| stream(seed, 0x1000 + (block as u64) * 64 + i as u64))
        .collect();
    let mut learner_rng = stream(seed, 0x2000 + block as u64);

    struct EnvSlot<S> {
        state: S,
        goal: GoalId,
        traj: Trajectory<S>,
    }
    let mut slots: Vec<EnvSlot<D::State>> = (0..n_envs)
        .map(|i| {
            let rng = &mut env_rngs[i];
            let goal = goal_fn(rng);
            let state = spawn_fn(rng);
            EnvSlot {
                state: state.clone(),
                goal,
                traj: Trajectory {
                    states: vec![state],
                    actions: vec![],
                    rewards: vec![],
                    terminal: false,
                    goal,
                },
            }
        })
        .collect();

    let mut taken = 0u64;
    while taken < budget {
        let i = (taken % n_envs as u64) as usize;
        let slot = &mut slots[i];
        let rng = &mut env_rngs[i];
        let key = domain.state_key(&slot.state);
        let a = match agent {
            Some(agent) => agent.act_train(key, slot.goal, eps[i], rng),
            None => rng.gen_range(0..domain.n_actions()) as u8, // planners collect no values
        };
        let next = domain.step(&slot.state, a);
        let r = domain.reward(&slot.state, &next, slot.goal);
        slot.traj.actions.push(a);
        slot.traj.rewards.push(r);
        slot.traj.states.push(next.clone());
        slot.state = next;
        taken += 1;
        *env_steps += 1;

        let terminal = domain.is_terminal(&slot.state);
        let truncated =
            domain.truncated(&slot.state) || slot.traj.len() >= step_cap || taken >= budget;
        if terminal || truncated {
            slot.traj.terminal = terminal;
            let episode_len = slot.traj.len();
            let reward: f64 = slot.traj.rewards.iter().sum();
            sink.write(&RunRecord {
                seed,
                block,
                phase: Phase::Train,
                task: task_name(slot.goal),
                outcome: terminal && reward > 0.0,
                episode_len,
                reward,
                o_map: None,
                o_dir: None,
                reused: None,
                expansions: None,
                env_steps: *env_steps,
                wall_time_ms: now_ms(cfg.run.deterministic, t0),
            })?;
            let traj = std::mem::replace(
                &mut slot.traj,
                Trajectory {
                    states: vec![],
                    actions: vec![],
                    rewards: vec![],
                    terminal: false,
                    goal: slot.goal,
                },
            );
            let _ = buf.insert(traj, 1.0);
            let goal = goal_fn(rng);
            let state = spawn_fn(rng);
            slot.goal = goal;
            slot.state = state.clone();
            slot.traj = Trajectory {
                states: vec![state],
                actions: vec![],
                rewards: vec![],
                terminal: false,
                goal,
            };
        }

        if let Some(agent) = agent {
            if taken % cfg.run.learn_every == 0 && buf.buffered_steps() >= cfg.run.warmup_steps {
                let updates = agent.learn_round(
                    domain,
                    buf,
                    cfg.replay.batch_size,
                    &all_goals,
                    &mut learner_rng,
                );
                buf.update_priorities(&updates);
            }
        }
    }

    // Flush open partial episodes so every environment step lands in exactly
    // one recorded row (budget accounting is exact).
    for slot in &mut slots {
        if slot.traj.is_empty() {
            continue;
        }
        let reward: f64 = slot.traj.rewards.iter().sum();
        sink.write(&RunRecord {
            seed,
            block,
            phase: Phase::Train,
            task: task_name(slot.goal),
            outcome: false,
            episode_len: slot.traj.len(),
            reward,
            o_map: None,
            o_dir: None,
            reused: None,
            expansions: None,
            env_steps: *env_steps,
            wall_time_ms: now_ms(cfg.run.deterministic, t0),
        })?;
        let traj = std::mem::replace(
            &mut slot.traj,
            Trajectory {
                states: vec![],
                actions: vec![],
                rewards: vec![],
                terminal: false,
                goal: slot.goal,
            },
        );
        let _ = buf.insert(traj, 1.0);
    }
    Ok(())
}

/// Greedy rollout with frozen tables; returns visited positions, terminal
/// success, and episode reward.
fn greedy_rollout<D: Domain>(
    domain: &D,
    agent: &crate::agents::LearningAgent,
    start: D::State,
    goal: GoalId,
    train_goals: &[GoalId],
    step_cap: usize,
    positions: &mut Vec<D::State>,
    ties: EvalTies,
) -> (bool, f64, usize) {
    positions.clear();
    let mut state = start;
    positions.push(state.clone());
    let mut reward = 0.0;
    for _ in 0..step_cap {
        if domain.is_terminal(&state) || domain.truncated(&state) {
            break;
        }
        let a = agent.act_eval(domain.state_key(&state), goal, train_goals, ties);
        let next = domain.step(&state, a);
        reward += domain.reward(&state, &next, goal);
        positions.push(next.clone());
        state = next;
    }
    let success = domain.is_terminal(&state);
    (success, reward, positions.len() - 1)
}

fn grid_positions(states: &[GridState]) -> Vec<Pos> {
    states.iter().map(|s| s.position).collect()
}

fn craft_positions(states: &[CraftState]) -> Vec<Pos> {
    states.iter().map(|s| s.position).collect()
}

/// Outcome of one full experiment run (all seeds).
pub struct RunOutput {
    pub summary: RunSummary,
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    match &cfg.environment {
        EnvironmentConfig::Gridworld { .. } => run_grid_experiment(cfg),
        EnvironmentConfig::Craftworld { .. } => {
            if cfg.transfer.is_some() {
                run_transfer_experiment(cfg, None, None)
            } else {
                run_craft_blocks_experiment(cfg)
            }
        }
    }
}

fn write_outputs(
    cfg: &ExperimentConfig,
    summary: RunSummary,
    sink: RecordSink,
    out_dir: &Path,
) -> Result<RunOutput, HarnessError> {
    sink.finish()?;
    let summary_path = out_dir.join("summary.toml");
    std::fs::write(
        &summary_path,
        toml::to_string_pretty(&summary).expect("serialize summary"),
    )?;
    let _ = cfg;
    Ok(RunOutput {
        summary,
        records_path: out_dir.join("records.jsonl"),
        summary_path,
    })
}

fn run_grid_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let EnvironmentConfig::Gridworld {
        maze_file,
        rotations,
        landmark_radius,
    } = &cfg.environment
    else {
        unreachable!()
    };
    let text = std::fs::read_to_string(maze_file)
        .map_err(|e| HarnessError::EnvironmentLoadFailed(format!("{}: {e}", maze_file.display())))?;
    let base_maze = parse_maze(&text)
        .map_err(|e| HarnessError::EnvironmentLoadFailed(format!("{}: {e}", maze_file.display())))?;
    for pair in &cfg.tasks.eval_pairs {
        grid_goal(&base_maze, &pair.goal)?;
        if pair.spawn >= base_maze.spawn_eval.len() {
            return Err(HarnessError::invalid(
                "tasks.eval_pairs",
                format!("spawn index {} out of range", pair.spawn),
            ));
        }
    }
    for g in &cfg.tasks.train_goals {
        grid_goal(&base_maze, g)?;
    }

    let out_dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let mut sink = RecordSink::create(&out_dir.join("records.jsonl"))?;
    let t0 = std::time::Instant::now();

    let budget_per_block = cfg.run.training_budget / *rotations as u64;
    let thresholds = ReuseThresholds {
        alpha_map: cfg.tasks.reuse_alpha_map,
        alpha_dir: cfg.tasks.reuse_alpha_dir,
    };
    let mut per_seed: Vec<SeedOutcomes> = Vec::new();
    let mut env_steps_total = 0u64;
    let mut counters = SimCounters::default();

    for seed in cfg.run.base_seed..cfg.run.base_seed + cfg.run.n_seeds {
        let mut outcomes = SeedOutcomes::default();
        let mut env_steps = 0u64;
        for block in 0..*rotations as usize {
            let maze = rotate_maze(&base_maze, block as u8);
            let task = GridTask::new(maze, *landmark_radius);
            let train_goals: Vec<GoalId> = cfg
                .tasks
                .train_goals
                .iter()
                .map(|g| grid_goal(&task.maze, g))
                .collect::<Result<_, _>>()?;

            let mut spawn_pool: Vec<Pos> =
                task.maze.spawn_train.iter().map(|&(p, _)| p).collect();
            if cfg.tasks.train_from_eval_spawns {
                spawn_pool.extend(task.maze.spawn_eval.iter().map(|&(p, _)| p));
            }
            if spawn_pool.is_empty() {
                return Err(HarnessError::EnvironmentLoadFailed(
                    "maze has no training spawns".into(),
                ));
            }

            let mut agent = if cfg.agent.kind.is_planner() {
                None
            } else {
                Some(crate::agents::LearningAgent::new(&task, cfg.agent_params()))
            };
            let mut buf: ReplayBuffer<GridState> =
                ReplayBuffer::new(cfg.replay.capacity, cfg.replay.subsequence_length);
            buf.priority_exponent = cfg.replay.priority_exponent;
            buf.max_priority_weight = cfg.replay.max_priority_weight;
            buf.importance_beta = cfg.replay.importance_beta;

            if budget_per_block > 0 && !cfg.agent.kind.is_planner() {
                let goals = train_goals.clone();
                let pool = spawn_pool.clone();
                let catalog = task.maze.goal_catalog.clone();
                train_phase(
                    cfg,
                    &task,
                    &mut agent,
                    &mut buf,
                    budget_per_block,
                    task.maze.step_cap(),
                    seed,
                    block,
                    &mut sink,
                    &mut env_steps,
                    |g| catalog[g.index()].to_string(),
                    |rng| GridState::at(pool[rng.gen_range(0..pool.len())]),
                    |rng| goals[rng.gen_range(0..goals.len())],
                    t0,
                )?;
            }

            // Evaluation: frozen tables, greedy episodes from the eval spawns.
            for pair in &cfg.tasks.eval_pairs {
                let goal = grid_goal(&task.maze, &pair.goal)?;
                let (spawn, _) = task.maze.spawn_eval[pair.spawn];

                // Train-path matrix: the canonical optimal routes from this
                // spawn to each trained object (trained behavior converges to
                // these, and they stay well-defined for every agent kind).
                let mut train_mask: Option<PathMatrix> = None;
                let mut train_paths: Vec<Vec<Pos>> = Vec::new();
                for &tg in &train_goals {
                    let target = task.maze.objects[&task.maze.goal_catalog[tg.index()]];
                    let Ok(actions) = crate::gridworld::shortest_path(&task.maze, spawn, target)
                    else {
                        continue;
                    };
                    let mut positions = vec![spawn];
                    let mut p = spawn;
                    for a in actions {
                        let (dr, dc) = a.delta();
                        p = Pos::new(
                            (p.row as isize + dr) as usize,
                            (p.col as isize + dc) as usize,
                        );
                        positions.push(p);
                    }
                    let m = path_matrix(&positions, task.maze.height, task.maze.width, false)
                        .expect("positions in bounds");
                    match &mut train_mask {
                        Some(mask) => mask.union(&m),
                        None => train_mask = Some(m),
                    }
                    train_paths.push(positions);
                }

                let eval = eval_grid_path(&task, agent.as_ref(), cfg.agent.kind, spawn, goal, &train_goals)?;
                let (expansions, positions, success, episode_len, reward) = match (&eval, cfg.agent.kind) {
                    (Some(positions), kind) => {
                        let success = positions
                            .last()
                            .map(|&p| task.maze.objects.get(&task.maze.goal_catalog[goal.index()]) == Some(&p))
                            .unwrap_or(false);
                        let expansions = if kind.is_planner() {
                            let g = task.maze.goal(task.maze.goal_catalog[goal.index()]).unwrap();
                            let plan_kind = if kind == AgentKind::Bfs { PlanKind::Bfs } else { PlanKind::Dfs };
                            plan(plan_kind, &task.maze, spawn, g).ok().map(|(_, e)| e)
                        } else {
                            None
                        };
                        let len = positions.len() - 1;
                        (expansions, positions.clone(), success, len, if success { 1.0 } else { 0.0 })
                    }
                    (None, _) => (None, Vec::new(), false, 0, 0.0),
                };
                env_steps += episode_len as u64;

                let verdict = if success && !positions.is_empty() {
                    train_mask.as_ref().map(|mask| {
                        let test_m =
                            path_matrix(&positions, task.maze.height, task.maze.width, false)
                                .expect("in bounds");
                        let o_map = map_overlap(mask, &test_m).unwrap_or(0.0);
                        let o_dir = train_paths
                            .iter()
                            .map(|tp| dir_overlap(tp, &positions))
                            .fold(f64::NEG_INFINITY, f64::max);
                        ReuseVerdict::classify(o_map, o_dir, Regime::Gridworld, thresholds)
                    })
                } else {
                    None
                };

                sink.write(&RunRecord {
                    seed,
                    block,
                    phase: Phase::Eval,
                    task: pair.goal.clone(),
                    outcome: success,
                    episode_len,
                    reward,
                    o_map: verdict.map(|v| v.o_map),
                    o_dir: verdict.map(|v| v.o_dir),
                    reused: verdict.map(|v| v.reused),
                    expansions,
                    env_steps,
                    wall_time_ms: now_ms(cfg.run.deterministic, t0),
                })?;
                outcomes.successes.push(success);
                outcomes.reused.push(verdict.map(|v| v.reused));
            }
            if let Some(agent) = &agent {
                counters.rollouts += agent.counters.rollouts;
                counters.budgeted_transitions += agent.counters.budgeted_transitions;
                counters.actual_transitions += agent.counters.actual_transitions;
            }
        }
        env_steps_total += env_steps;
        per_seed.push(outcomes);
    }

    let stats = summarize(&per_seed, cfg.run.base_seed ^ 0x5eed);
    let summary = base_summary(cfg, stats, env_steps_total, counters);
    write_outputs(cfg, summary, sink, &out_dir)
}

/// Greedy (or planned) evaluation path over the maze; None when the planner
/// reports the goal unreachable.
fn eval_grid_path(
    task: &GridTask,
    agent: Option<&crate::agents::LearningAgent>,
    kind: AgentKind,
    spawn: Pos,
    goal: GoalId,
    train_goals: &[GoalId],
) -> Result<Option<Vec<Pos>>, HarnessError> {
    if kind.is_planner() {
        let plan_kind = if kind == AgentKind::Bfs {
            PlanKind::Bfs
        } else {
            PlanKind::Dfs
        };
        let g = task.maze.goal(task.maze.goal_catalog[goal.index()]).unwrap();
        match plan(plan_kind, &task.maze, spawn, g) {
            Ok((actions, _)) => {
                let mut positions = vec![spawn];
                let mut s = GridState::at(spawn);
                for a in actions {
                    s = crate::gridworld::grid_step(&task.maze, &s, a)
                        .expect("plan is executable")
                        .0;
                    positions.push(s.position);
                }
                Ok(Some(positions))
            }
            Err(_) => Ok(None),
        }
    } else {
        let agent = agent.expect("learning agent present");
        let mut states = Vec::new();
        let (_success, _reward, _len) = greedy_rollout(
            task,
            agent,
            GridState::at(spawn),
            goal,
            train_goals,
            task.maze.step_cap(),
            &mut states,
            EvalTies::LowestIndex,
        );
        Ok(Some(grid_positions(&states)))
    }
}

fn base_summary(
    cfg: &ExperimentConfig,
    stats: Summary,
    env_steps: u64,
    counters: SimCounters,
) -> RunSummary {
    RunSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        agent: cfg.agent.kind,
        n_seeds: cfg.run.n_seeds,
        env_steps,
        sim_rollouts: counters.rollouts,
        sim_budgeted_transitions: counters.budgeted_transitions,
        sim_actual_transitions: counters.actual_transitions,
        success_rate: stats.pooled_success_rate,
        reuse_rate: stats.pooled_reuse_rate,
        success_median: stats.success_median,
        success_ci: stats.success_ci,
        reuse_median: stats.reuse_median,
        reuse_ci: stats.reuse_ci,
        mean_return: None,
        return_stderr: None,
        per_subtask_rates: None,
    }
}

/// Block-style crafting-world run (the human-analog stone tasks): each block
/// is a procedurally generated world; train on the train stones, evaluate one
/// greedy episode per eval pair.
fn run_craft_blocks_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let EnvironmentConfig::Craftworld { params, blocks } = &cfg.environment else {
        unreachable!()
    };
    let out_dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let mut sink = RecordSink::create(&out_dir.join("records.jsonl"))?;
    let t0 = std::time::Instant::now();

    let train_goal_ids: Vec<GoalId> = cfg
        .tasks
        .train_goals
        .iter()
        .map(|g| craft_goal(g))
        .collect::<Result<_, _>>()?;
    let thresholds = ReuseThresholds {
        alpha_map: cfg.tasks.reuse_alpha_map,
        alpha_dir: cfg.tasks.reuse_alpha_dir,
    };
    let budget_per_block = cfg.run.training_budget / *blocks as u64;
    let mut per_seed: Vec<SeedOutcomes> = Vec::new();
    let mut env_steps_total = 0u64;
    let mut counters = SimCounters::default();

    for seed in cfg.run.base_seed..cfg.run.base_seed + cfg.run.n_seeds {
        let mut outcomes = SeedOutcomes::default();
        let mut env_steps = 0u64;
        for block in 0..*blocks as usize {
            let world_seed = seed * 1000 + block as u64;
            let world = generate_world(world_seed, params)
                .map_err(|e| HarnessError::EnvironmentLoadFailed(e.to_string()))?;
            // The pursued task rotates over train goals per episode; the
            // domain's terminal rule (any stone) is goal-independent.
            let domain = crate::craftworld::CraftDomain::new(world, CraftTask::Stone(Subtask::MineDiamond));
            let mut agent = Some(crate::agents::LearningAgent::new(&domain, cfg.agent_params()));
            let mut buf: ReplayBuffer<CraftState> =
                ReplayBuffer::new(cfg.replay.capacity, cfg.replay.subsequence_length);
            buf.priority_exponent = cfg.replay.priority_exponent;
            buf.max_priority_weight = cfg.replay.max_priority_weight;
            buf.importance_beta = cfg.replay.importance_beta;

            if budget_per_block > 0 {
                let goals = train_goal_ids.clone();
                let world_ref = &domain.world;
                let n_spawns = world_ref.spawns.len();
                train_phase(
                    cfg,
                    &domain,
                    &mut agent,
                    &mut buf,
                    budget_per_block,
                    params.step_cap,
                    seed,
                    block,
                    &mut sink,
                    &mut env_steps,
                    goal_name_craft,
                    |rng| world_ref.initial_state(rng.gen_range(0..n_spawns)),
                    |rng| goals[rng.gen_range(0..goals.len())],
                    t0,
                )?;
            }
            let agent = agent.expect("craft agents always learn");

            for pair in &cfg.tasks.eval_pairs {
                let goal = craft_goal(&pair.goal)?;
                let spawn = domain.world.initial_state(pair.spawn);

                // Canonical optimal train routes, dilated (crafting regime).
                let mut train_mask: Option<PathMatrix> = None;
                let mut train_paths: Vec<Vec<Pos>> = Vec::new();
                for &tg in &train_goal_ids {
                    let kind = match Subtask::ALL[tg.index()] {
                        Subtask::MineDiamond => crate::craftworld::ObjectKind::Diamond,
                        Subtask::MineSapphire => crate::craftworld::ObjectKind::Sapphire,
                        Subtask::MineRuby => crate::craftworld::ObjectKind::Ruby,
                        _ => continue,
                    };
                    let Some(positions) =
                        crate::craftworld::optimal_positions_to(&domain.world, spawn.position, kind)
                    else {
                        continue;
                    };
                    let m = path_matrix(&positions, params.size, params.size, true)
                        .expect("in bounds");
                    match &mut train_mask {
                        Some(mask) => mask.union(&m),
                        None => train_mask = Some(m),
                    }
                    train_paths.push(positions);
                }

                let mut states = Vec::new();
                let (success, reward, episode_len) = greedy_rollout(
                    &domain,
                    &agent,
                    spawn,
                    goal,
                    &train_goal_ids,
                    params.step_cap,
                    &mut states,
                    EvalTies::KeyHash,
                );
                // Success for a stone task means the pursued stone, not any.
                let success = success && reward > 0.0;
                env_steps += episode_len as u64;
                let positions = craft_positions(&states);

                let verdict = if success {
                    train_mask.as_ref().map(|mask| {
                        let test_m = path_matrix(&positions, params.size, params.size, false)
                            .expect("in bounds");
                        let o_map = map_overlap(mask, &test_m).unwrap_or(0.0);
                        let o_dir = train_paths
                            .iter()
                            .map(|tp| dir_overlap(tp, &positions))
                            .fold(f64::NEG_INFINITY, f64::max);
                        ReuseVerdict::classify(o_map, o_dir, Regime::Craftworld, thresholds)
                    })
                } else {
                    None
                };

                sink.write(&RunRecord {
                    seed,
                    block,
                    phase: Phase::Eval,
                    task: pair.goal.clone(),
                    outcome: success,
                    episode_len,
                    reward,
                    o_map: verdict.map(|v| v.o_map),
                    o_dir: verdict.map(|v| v.o_dir),
                    reused: verdict.map(|v| v.reused),
                    expansions: None,
                    env_steps,
                    wall_time_ms: now_ms(cfg.run.deterministic, t0),
                })?;
                outcomes.successes.push(success);
                outcomes.reused.push(verdict.map(|v| v.reused));
            }
            counters.rollouts += agent.counters.rollouts;
            counters.budgeted_transitions += agent.counters.budgeted_transitions;
            counters.actual_transitions += agent.counters.actual_transitions;
        }
        env_steps_total += env_steps;
        per_seed.push(outcomes);
    }

    let stats = summarize(&per_seed, cfg.run.base_seed ^ 0x5eed);
    let summary = base_summary(cfg, stats, env_steps_total, counters);
    write_outputs(cfg, summary, sink, &out_dir)
}

fn goal_name_craft(g: GoalId) -> String {
    if g == GLOBAL_GOAL {
        "global".to_string()
    } else {
        format!("{:?}", Subtask::ALL[g.index()])
    }
}

/// One transfer run: train the agent on `n_train` generated worlds under the
/// additive global task, then evaluate one greedy episode on each held-out
/// world. Returns (mean held-out return, stderr over worlds, per-subtask
/// achievement rates).
fn run_transfer_experiment(
    cfg: &ExperimentConfig,
    override_count: Option<usize>,
    override_init: Option<u64>,
) -> Result<RunOutput, HarnessError> {
    let EnvironmentConfig::Craftworld { params, .. } = &cfg.environment else {
        return Err(HarnessError::invalid(
            "environment",
            "transfer runs need a craftworld environment",
        ));
    };
    let transfer = cfg.transfer.as_ref().ok_or_else(|| {
        HarnessError::invalid("transfer", "transfer section required for transfer runs")
    })?;
    let n_train = override_count
        .unwrap_or_else(|| *transfer.train_seed_counts.last().expect("non-empty"));
    let init = override_init.unwrap_or(cfg.run.base_seed);

    let out_dir = if override_count.is_some() {
        cfg.run
            .out_dir
            .join(format!("{:?}_c{}_i{}", cfg.agent.kind, n_train, init))
    } else {
        cfg.run.out_dir.clone()
    };
    std::fs::create_dir_all(&out_dir)?;
    let mut sink = RecordSink::create(&out_dir.join("records.jsonl"))?;
    let t0 = std::time::Instant::now();

    let manifest = SeedManifest::split(n_train, transfer.n_test_seeds);
    manifest.save(&out_dir.join("seeds.json"))?;
    let train_worlds: Vec<World> = manifest
        .train_seeds
        .iter()
        .map(|&s| generate_world(s, params))
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::EnvironmentLoadFailed(e.to_string()))?;
    let test_worlds: Vec<World> = manifest
        .test_seeds
        .iter()
        .map(|&s| generate_world(s, params))
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::EnvironmentLoadFailed(e.to_string()))?;

    let ensemble = CraftEnsemble::new(train_worlds, CraftTask::Global);
    let mut agent = Some(crate::agents::LearningAgent::new(&ensemble, cfg.agent_params()));
    let mut buf: ReplayBuffer<(u16, CraftState)> =
        ReplayBuffer::new(cfg.replay.capacity, cfg.replay.subsequence_length);
    buf.priority_exponent = cfg.replay.priority_exponent;
    buf.max_priority_weight = cfg.replay.max_priority_weight;
    buf.importance_beta = cfg.replay.importance_beta;

    let mut env_steps = 0u64;
    if cfg.run.training_budget > 0 {
        let n_worlds = ensemble.worlds.len();
        let worlds = &ensemble.worlds;
        train_phase(
            cfg,
            &ensemble,
            &mut agent,
            &mut buf,
            cfg.run.training_budget,
            params.step_cap,
            init,
            0,
            &mut sink,
            &mut env_steps,
            goal_name_craft,
            |rng| {
                let w = rng.gen_range(0..n_worlds) as u16;
                let spawn = rng.gen_range(0..worlds[w as usize].spawns.len());
                (w, worlds[w as usize].initial_state(spawn))
            },
            |_rng| GLOBAL_GOAL,
            t0,
        )?;
    }
    let agent = agent.expect("transfer agents always learn");

    // Held-out evaluation: rebuild an ensemble over the test worlds so the
    // learned egocentric table drives unseen maps.
    let test_ensemble = CraftEnsemble::new(test_worlds, CraftTask::Global);
    let mut returns = Vec::with_capacity(test_ensemble.worlds.len());
    let mut per_subtask = vec![0.0; crate::craftworld::N_SUBTASKS];
    let train_goals = [GLOBAL_GOAL];
    let mut states = Vec::new();
    for (wi, world) in test_ensemble.worlds.iter().enumerate() {
        let start = (wi as u16, world.initial_state(0));
        let (_terminal, reward, episode_len) = greedy_rollout(
            &test_ensemble,
            &agent,
            start,
            GLOBAL_GOAL,
            &train_goals,
            params.step_cap,
            &mut states,
            EvalTies::KeyHash,
        );
        env_steps += episode_len as u64;
        if let Some((_, last)) = states.last() {
            for i in 0..crate::craftworld::N_SUBTASKS {
                if last.achieved >> i & 1 == 1 {
                    per_subtask[i] += 1.0;
                }
            }
        }
        returns.push(reward);
        sink.write(&RunRecord {
            seed: manifest.test_seeds[wi],
            block: 0,
            phase: Phase::Eval,
            task: "global".into(),
            outcome: reward > 0.0,
            episode_len,
            reward,
            o_map: None,
            o_dir: None,
            reused: None,
            expansions: None,
            env_steps,
            wall_time_ms: now_ms(cfg.run.deterministic, t0),
        })?;
    }
    for r in per_subtask.iter_mut() {
        *r /= test_ensemble.worlds.len() as f64;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let stderr = (var / n).sqrt();

    let per_seed = vec![SeedOutcomes {
        successes: returns.iter().map(|&r| r > 0.0).collect(),
        reused: vec![None; returns.len()],
    }];
    let stats = summarize(&per_seed, init ^ 0x5eed);
    let mut summary = base_summary(cfg, stats, env_steps, agent.counters);
    summary.mean_return = Some(mean);
    summary.return_stderr = Some(stderr);
    summary.per_subtask_rates = Some(per_subtask);
    summary.n_seeds = 1;
    write_outputs(cfg, summary, sink, &out_dir)
}

/// Aggregate of one (agent, train-seed count) cell of a transfer sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TransferPoint {
    pub agent: AgentKind,
    pub n_train_seeds: usize,
    /// Per-world training steps under the fixed total budget.
    pub steps_per_world: u64,
    /// Mean over initializations of the per-run mean held-out return.
    pub mean_return: f64,
    /// Standard error across initializations.
    pub stderr: f64,
    pub per_init_returns: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub name: String,
    pub points: Vec<TransferPoint>,
}

/// Fixed-budget transfer sweep over ascending train-seed counts; per-count
/// training steps shrink as counts grow since the total budget is constant.
pub fn transfer_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary, HarnessError> {
    cfg.validate()?;
    let transfer = cfg
        .transfer
        .as_ref()
        .ok_or_else(|| HarnessError::invalid("transfer", "sweep needs a transfer section"))?;
    let mut points = Vec::new();
    for &count in &transfer.train_seed_counts {
        let mut per_init = Vec::new();
        for init in 0..transfer.n_inits {
            let out = run_transfer_experiment(cfg, Some(count), Some(cfg.run.base_seed + init))?;
            per_init.push(out.summary.mean_return.expect("transfer summary"));
        }
        let n = per_init.len() as f64;
        let mean = per_init.iter().sum::<f64>() / n;
        let var = per_init.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        points.push(TransferPoint {
            agent: cfg.agent.kind,
            n_train_seeds: count,
            steps_per_world: cfg.run.training_budget / count as u64,
            mean_return: mean,
            stderr: (var / n).sqrt(),
            per_init_returns: per_init,
        });
    }
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        points,
    };
    std::fs::create_dir_all(&cfg.run.out_dir)?;
    std::fs::write(
        cfg.run.out_dir.join("sweep_summary.toml"),
        toml::to_string_pretty(&summary).expect("serialize"),
    )?;
    Ok(summary)
}

/// Emit tabular plot data from run summaries: one file per figure analog,
/// comma-separated with a versioned header comment. Missing metrics are
/// written as explicit `na` markers, never silently dropped.
pub fn emit_plots(summaries: &[RunSummary], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    assert!(!summaries.is_empty(), "emit_plots needs at least one summary");
    std::fs::create_dir_all(out_dir)?;
    let mut out = String::new();
    out.push_str("# preplay-plot v1 comparison\n");
    out.push_str(
        "name,agent,success_median,success_lo,success_hi,reuse_median,reuse_lo,reuse_hi,pooled_success,pooled_reuse\n",
    );
    let fmt = |v: Option<f64>| v.map_or("na".to_string(), |x| format!("{x:.6}"));
    for s in summaries {
        out.push_str(&format!(
            "{},{:?},{:.6},{:.6},{:.6},{},{},{},{:.6},{}\n",
            s.name,
            s.agent,
            s.success_median,
            s.success_ci.0,
            s.success_ci.1,
            fmt(s.reuse_median),
            fmt(s.reuse_ci.map(|c| c.0)),
            fmt(s.reuse_ci.map(|c| c.1)),
            s.success_rate,
            fmt(s.reuse_rate),
        ));
    }
    let path = out_dir.join("comparison.csv");
    std::fs::write(&path, out)?;
    Ok(vec![path])
}

/// Plot data for a transfer sweep (one labeled series per agent).
pub fn emit_transfer_plot(
    sweeps: &[SweepSummary],
    out_dir: &Path,
) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut out = String::new();
    out.push_str("# preplay-plot v1 transfer\n");
    out.push_str("name,agent,n_train_seeds,mean_return,stderr\n");
    for sweep in sweeps {
        for p in &sweep.points {
            out.push_str(&format!(
                "{},{:?},{},{:.6},{:.6}\n",
                sweep.name, p.agent, p.n_train_seeds, p.mean_return, p.stderr
            ));
        }
    }
    let path = out_dir.join("transfer.csv");
    std::fs::write(&path, out)?;
    Ok(path)
}

/// Load a run summary back from disk (used by the `plot` CLI verb).
pub fn load_summary(path: &Path) -> Result<RunSummary, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_grid_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "test".into(),
            environment: EnvironmentConfig::Gridworld {
                maze_file: PathBuf::from(concat!(
                    env!("CARGO_MANIFEST_DIR"),
                    "/assets/mazes/two_paths.txt"
                )),
                rotations: 1,
                landmark_radius: 1,
            },
            tasks: TaskConfig {
                train_goals: vec!["A".into(), "B".into()],
                eval_pairs: vec![EvalPair {
                    goal: "C".into(),
                    spawn: 0,
                }],
                train_from_eval_spawns: true,
                reuse_alpha_map: 0.5,
                reuse_alpha_dir: 0.5,
            },
            agent: AgentConfig {
                kind: AgentKind::QLearning,
                gamma: 0.992,
                lambda: 0.9,
                learning_rate: 0.1,
                epsilon_low: 0.05,
                epsilon_high: 0.9,
                sf_goal_samples: 2,
                gpi_policy_set: GpiPolicySet::TrainPlusNew,
            },
            replay: ReplayConfig {
                subsequence_length: 10,
                batch_size: 8,
                ..ReplayConfig::default()
            },
            background: PreplayConfig::default(),
            run: RunConfig {
                training_budget: 2000,
                n_parallel_envs: 4,
                learn_every: 40,
                warmup_steps: 100,
                n_seeds: 1,
                base_seed: 0,
                out_dir: dir.to_path_buf(),
                deterministic: true,
            },
            transfer: None,
        }
    }

    #[test]
    fn validate_rejects_eval_goal_in_train_set() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal_grid_config(dir.path());
        cfg.tasks.eval_pairs[0].goal = "A".into();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, HarnessError::ConfigInvalid { ref field, .. } if field == "tasks.eval_pairs"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn validate_rejects_planner_on_craftworld() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal_grid_config(dir.path());
        cfg.environment = EnvironmentConfig::Craftworld {
            params: WorldParams::default(),
            blocks: 1,
        };
        cfg.agent.kind = AgentKind::Bfs;
        cfg.tasks.train_goals = vec!["diamond".into()];
        cfg.tasks.eval_pairs = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn budget_zero_is_eval_only_with_near_zero_success() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal_grid_config(dir.path());
        cfg.run.training_budget = 0;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.summary.success_rate, 0.0, "untrained tables fail");
        assert!(out.records_path.exists());
    }

    #[test]
    fn planners_solve_eval_immediately() {
        for kind in [AgentKind::Bfs, AgentKind::Dfs] {
            let dir = tempfile::tempdir().unwrap();
            let mut cfg = minimal_grid_config(dir.path());
            cfg.agent.kind = kind;
            cfg.run.training_budget = 0;
            let out = run_experiment(&cfg).unwrap();
            assert_eq!(out.summary.success_rate, 1.0, "{kind:?}");
        }
    }

    #[test]
    fn deterministic_runs_are_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut c1 = minimal_grid_config(d1.path());
        c1.agent.kind = AgentKind::MultitaskPreplay;
        let mut c2 = minimal_grid_config(d2.path());
        c2.agent.kind = AgentKind::MultitaskPreplay;
        let o1 = run_experiment(&c1).unwrap();
        let o2 = run_experiment(&c2).unwrap();
        let b1 = std::fs::read(&o1.records_path).unwrap();
        let b2 = std::fs::read(&o2.records_path).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(
            std::fs::read_to_string(&o1.summary_path).unwrap(),
            std::fs::read_to_string(&o2.summary_path).unwrap()
        );
    }

    #[test]
    fn budget_accounting_matches_row_sums() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal_grid_config(dir.path());
        let out = run_experiment(&cfg).unwrap();
        let text = std::fs::read_to_string(&out.records_path).unwrap();
        let mut sum = 0u64;
        let mut last_steps = 0u64;
        for line in text.lines().skip(1) {
            let row: RunRecord = serde_json::from_str(line).unwrap();
            sum += row.episode_len as u64;
            assert!(row.env_steps >= last_steps, "monotone env steps");
            last_steps = row.env_steps;
        }
        assert_eq!(sum, out.summary.env_steps);
        assert_eq!(sum, last_steps);
    }

    #[test]
    fn plot_emission_includes_na_markers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = minimal_grid_config(dir.path());
        let out = run_experiment(&cfg).unwrap();
        let mut summary = out.summary.clone();
        summary.reuse_median = None;
        summary.reuse_ci = None;
        summary.reuse_rate = None;
        let files = emit_plots(&[summary], &dir.path().join("plots")).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("# preplay-plot v1"));
        assert!(text.contains(",na"), "explicit null markers");
    }
}
