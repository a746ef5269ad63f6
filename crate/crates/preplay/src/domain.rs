//! Shared vocabulary between environments and agents.
//!
//! Both worlds reduce to the same contract for the learning code: states are
//! hashed down to a [`StateKey`], goals to a dense [`GoalId`], and the
//! environment exposes deterministic dynamics plus goal-conditioned rewards
//! through [`Domain`]. Background planners use the same trait as their oracle
//! world model.

/// Compact, hashable encoding of an agent state. Environments guarantee two
/// states with equal keys are equivalent for value-learning purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub u64);

/// Index into the active goal list of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalId(pub u16);

/// Grid coordinate, row-major with (0, 0) at the top-left.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl GoalId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A task environment as seen by the agents: deterministic dynamics, a
/// goal-conditioned reward, and the accessible-goal support used when
/// sampling counterfactual goals.
pub trait Domain {
    type State: Clone;

    fn n_actions(&self) -> usize;
    fn n_goals(&self) -> usize;

    /// Deterministic transition. Callers never step terminal states.
    fn step(&self, state: &Self::State, action: u8) -> Self::State;

    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Whether the state has exhausted its episode step budget (rollouts and
    /// simulations both stop here). Domains without an intrinsic step counter
    /// rely on the harness step cap instead.
    fn truncated(&self, _state: &Self::State) -> bool {
        false
    }

    /// Reward observed on the transition `prev -> next` under goal `goal`.
    fn reward(&self, prev: &Self::State, next: &Self::State, goal: GoalId) -> f64;

    /// Preference vector w_g closing the reward decomposition
    /// R_g(s' ) = phi(s')^T w_g for this domain's feature map.
    fn goal_preference(&self, goal: GoalId) -> Vec<f64>;

    fn state_key(&self, state: &Self::State) -> StateKey;

    /// Upper bound (exclusive) on `state_key` values, when the key space is
    /// small and dense enough for flat table storage. `None` means keys are
    /// sparse and tables should intern them.
    fn dense_key_space(&self) -> Option<usize> {
        None
    }

    /// Goals accessible from `state`: the support of the counterfactual goal
    /// distribution. Appends onto `out` (cleared by the callee).
    fn accessible_goals(&self, state: &Self::State, out: &mut Vec<GoalId>);

    /// Feature vector phi(next) for successor-feature learning, written into
    /// `buf` (length `feature_dim`).
    fn features(&self, prev: &Self::State, next: &Self::State, buf: &mut [f64]);

    fn feature_dim(&self) -> usize;
}
