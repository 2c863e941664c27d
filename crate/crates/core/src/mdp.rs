//! Finite tabular MDPs and tabular policies.
//!
//! A [`TabularMdp`] stores the transition tensor `P[s][a][s']`, the mean-reward
//! table `r[s][a]`, the initial state distribution `d0` and the discount
//! factor. All probability data is validated against the row-stochastic and
//! non-negativity invariants; [`TabularMdp::validate`] returns the full list of
//! violations so callers can report them instead of just failing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability rows summing to one.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// A finite MDP with dense transition, reward and initial-state tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Transition tensor, `P[s][a][s']`, row-stochastic in `s'`.
    #[serde(rename = "P")]
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Mean reward per state-action pair, `r[s][a]`. Rewards are non-negative.
    #[serde(rename = "r")]
    pub mean_reward: Vec<Vec<f64>>,
    /// Initial state distribution `d0[s]`.
    #[serde(rename = "d0")]
    pub initial_dist: Vec<f64>,
    /// Discount factor, `0 <= gamma < 1`.
    #[serde(rename = "gamma")]
    pub discount: f64,
    /// Optional human-readable state names for reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

/// A single violated invariant found by [`TabularMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum MdpViolation {
    TransitionRowSum { state: usize, action: usize, sum: f64 },
    NegativeTransition { state: usize, action: usize, next_state: usize, value: f64 },
    InitialDistSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
    NegativeReward { state: usize, action: usize, value: f64 },
    DiscountOutOfRange { discount: f64 },
    ShapeMismatch { what: String },
}

impl std::fmt::Display for MdpViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MdpViolation::TransitionRowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}, expected 1")
            }
            MdpViolation::NegativeTransition { state, action, next_state, value } => {
                write!(f, "P({next_state}|{state},{action}) = {value} is negative")
            }
            MdpViolation::InitialDistSum { sum } => {
                write!(f, "initial distribution sums to {sum}, expected 1")
            }
            MdpViolation::NegativeInitial { state, value } => {
                write!(f, "d0({state}) = {value} is negative")
            }
            MdpViolation::NegativeReward { state, action, value } => {
                write!(f, "reward r({state},{action}) = {value} violates non-negativity")
            }
            MdpViolation::DiscountOutOfRange { discount } => {
                write!(f, "discount {discount} outside [0, 1)")
            }
            MdpViolation::ShapeMismatch { what } => write!(f, "shape mismatch: {what}"),
        }
    }
}

impl TabularMdp {
    /// Builds an MDP and checks every invariant, returning the violation list
    /// on failure.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        mean_reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self, Vec<MdpViolation>> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            mean_reward,
            initial_dist,
            discount,
            names: None,
        };
        let report = mdp.validate();
        if report.is_empty() {
            Ok(mdp)
        } else {
            Err(report)
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    /// Transition probability `P(next | state, action)`.
    #[inline]
    pub fn p(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition[state][action][next]
    }

    /// Mean reward `r(state, action)`.
    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.mean_reward[state][action]
    }

    /// Checks every structural invariant and returns the violations found
    /// (empty means valid). Report-only: never panics.
    pub fn validate(&self) -> Vec<MdpViolation> {
        let mut out = Vec::new();
        if self.transition.len() != self.n_states {
            out.push(MdpViolation::ShapeMismatch { what: format!("transition has {} state rows, expected {}", self.transition.len(), self.n_states) });
            return out;
        }
        if !(0.0..1.0).contains(&self.discount) {
            out.push(MdpViolation::DiscountOutOfRange { discount: self.discount });
        }
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != self.n_actions {
                out.push(MdpViolation::ShapeMismatch { what: format!("state {s} has {} action rows, expected {}", per_action.len(), self.n_actions) });
                continue;
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != self.n_states {
                    out.push(MdpViolation::ShapeMismatch { what: format!("P[{s}][{a}] has length {}, expected {}", row.len(), self.n_states) });
                    continue;
                }
                let mut sum = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if p < 0.0 {
                        out.push(MdpViolation::NegativeTransition { state: s, action: a, next_state: sp, value: p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_SUM_TOL {
                    out.push(MdpViolation::TransitionRowSum { state: s, action: a, sum });
                }
            }
        }
        if self.mean_reward.len() != self.n_states
            || self.mean_reward.iter().any(|row| row.len() != self.n_actions)
        {
            out.push(MdpViolation::ShapeMismatch { what: "reward table".into() });
        } else {
            for (s, row) in self.mean_reward.iter().enumerate() {
                for (a, &r) in row.iter().enumerate() {
                    if r < 0.0 {
                        out.push(MdpViolation::NegativeReward { state: s, action: a, value: r });
                    }
                }
            }
        }
        if self.initial_dist.len() != self.n_states {
            out.push(MdpViolation::ShapeMismatch { what: "initial distribution".into() });
        } else {
            let mut sum = 0.0;
            for (s, &p) in self.initial_dist.iter().enumerate() {
                if p < 0.0 {
                    out.push(MdpViolation::NegativeInitial { state: s, value: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                out.push(MdpViolation::InitialDistSum { sum });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Serializes to the single-document JSON form
    /// `{n_states, n_actions, P, r, d0, gamma, names?}`.
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// A stationary stochastic policy as a dense `pi[s][a]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub action_probs: Vec<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("policy row for state {state} sums to {sum}, expected 1")]
    RowSum { state: usize, sum: f64 },
    #[error("policy probability pi({action}|{state}) = {value} is negative")]
    Negative { state: usize, action: usize, value: f64 },
    #[error("policy row for state {state} has length {len}, expected {expected}")]
    Shape { state: usize, len: usize, expected: usize },
}

impl Policy {
    pub fn new(action_probs: Vec<Vec<f64>>) -> Result<Self, PolicyError> {
        let policy = Policy { action_probs };
        policy.validate()?;
        Ok(policy)
    }

    /// Uniform policy over `n_actions` in every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            action_probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.action_probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_probs.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.action_probs[state][action]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[f64] {
        &self.action_probs[state]
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let n_actions = self.n_actions();
        for (s, row) in self.action_probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(PolicyError::Shape { state: s, len: row.len(), expected: n_actions });
            }
            let mut sum = 0.0;
            for (a, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    return Err(PolicyError::Negative { state: s, action: a, value: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(PolicyError::RowSum { state: s, sum });
            }
        }
        Ok(())
    }
}
