//! State abstraction: partition maps, weighting functions, abstract MDP and
//! policy construction, and executable validators for the three abstraction
//! assumptions (reward equality, transition similarity, evaluation-policy
//! action equality).

use crate::mdp::{MdpViolation, Policy, TabularMdp};
use crate::occupancy::occupancy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default absolute tolerance for assumption validators.
pub const ASSUMPTION_TOL: f64 = 1e-9;

/// Tolerance for per-block weight normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

/// A surjective partition of ground states into abstract states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct AbstractionMap {
    ground_to_abstract: Vec<usize>,
    n_abstract: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum AbstractionError {
    #[error("abstraction map is empty")]
    Empty,
    #[error("abstract id {id} is unused: the map must be surjective onto 0..{n_abstract}")]
    NotSurjective { id: usize, n_abstract: usize },
    #[error("weighting is invalid for this abstraction: block {block} sums to {sum}, expected 1")]
    BadWeighting { block: usize, sum: f64 },
    #[error("weighting has {len} entries, expected {expected}")]
    WeightingShape { len: usize, expected: usize },
    #[error("abstract MDP failed validation: {0:?}")]
    InvalidAbstractMdp(Vec<MdpViolation>),
}

impl AbstractionMap {
    /// Builds a map from a dense `state -> abstract state` table. The number
    /// of abstract states is `max(id) + 1`; every id below it must appear.
    pub fn new(ground_to_abstract: Vec<usize>) -> Result<Self, AbstractionError> {
        if ground_to_abstract.is_empty() {
            return Err(AbstractionError::Empty);
        }
        let n_abstract = ground_to_abstract.iter().copied().max().unwrap() + 1;
        let mut seen = vec![false; n_abstract];
        for &x in &ground_to_abstract {
            seen[x] = true;
        }
        if let Some(id) = seen.iter().position(|&s| !s) {
            return Err(AbstractionError::NotSurjective { id, n_abstract });
        }
        Ok(AbstractionMap { ground_to_abstract, n_abstract })
    }

    /// The identity abstraction on `n` states.
    pub fn identity(n: usize) -> Self {
        AbstractionMap { ground_to_abstract: (0..n).collect(), n_abstract: n }
    }

    pub fn n_ground(&self) -> usize {
        self.ground_to_abstract.len()
    }

    pub fn n_abstract(&self) -> usize {
        self.n_abstract
    }

    /// `phi(s)`. Panics if `s` is out of range; see [`AbstractionMap::try_apply`].
    #[inline]
    pub fn apply(&self, state: usize) -> usize {
        self.ground_to_abstract[state]
    }

    #[inline]
    pub fn try_apply(&self, state: usize) -> Option<usize> {
        self.ground_to_abstract.get(state).copied()
    }

    pub fn is_identity(&self) -> bool {
        self.n_abstract == self.n_ground()
            && self.ground_to_abstract.iter().enumerate().all(|(s, &x)| s == x)
    }

    /// The preimages `phi^{-1}(x)` for each abstract state, in ground order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.n_abstract];
        for (s, &x) in self.ground_to_abstract.iter().enumerate() {
            blocks[x].push(s);
        }
        blocks
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.ground_to_abstract
    }
}

impl TryFrom<Vec<usize>> for AbstractionMap {
    type Error = AbstractionError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        AbstractionMap::new(v)
    }
}

impl From<AbstractionMap> for Vec<usize> {
    fn from(m: AbstractionMap) -> Vec<usize> {
        m.ground_to_abstract
    }
}

/// A per-ground-state weight `w[s] in [0,1]` normalized within each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingFunction {
    pub weights: Vec<f64>,
}

impl WeightingFunction {
    /// Uniform weights within each block of `phi`.
    pub fn uniform(phi: &AbstractionMap) -> Self {
        let blocks = phi.blocks();
        let mut weights = vec![0.0; phi.n_ground()];
        for block in &blocks {
            let w = 1.0 / block.len() as f64;
            for &s in block {
                weights[s] = w;
            }
        }
        WeightingFunction { weights }
    }

    #[inline]
    pub fn weight(&self, state: usize) -> f64 {
        self.weights[state]
    }

    /// Checks per-block normalization against `phi`.
    pub fn validate(&self, phi: &AbstractionMap) -> Result<(), AbstractionError> {
        if self.weights.len() != phi.n_ground() {
            return Err(AbstractionError::WeightingShape {
                len: self.weights.len(),
                expected: phi.n_ground(),
            });
        }
        for (x, block) in phi.blocks().iter().enumerate() {
            let sum: f64 = block.iter().map(|&s| self.weights[s]).sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(AbstractionError::BadWeighting { block: x, sum });
            }
        }
        Ok(())
    }
}

/// An abstract MDP together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractMdp {
    pub mdp: TabularMdp,
    pub phi: AbstractionMap,
    pub weighting: WeightingFunction,
    /// State names of the source MDP, when it had them.
    pub source_names: Option<Vec<String>>,
}

/// Which abstraction assumption a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    /// Reward distribution equality within blocks.
    RewardEquality,
    /// Block-level transition dynamics similarity.
    TransitionSimilarity,
    /// Evaluation-policy action-distribution equality within blocks.
    ActionEquality,
}

impl AssumptionId {
    pub fn number(self) -> u8 {
        match self {
            AssumptionId::RewardEquality => 1,
            AssumptionId::TransitionSimilarity => 2,
            AssumptionId::ActionEquality => 3,
        }
    }
}

/// A pair of merged states witnessing a violation above tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s1: usize,
    pub s2: usize,
    pub action: usize,
    /// The abstract next-state, for transition-similarity violations.
    pub abstract_next: Option<usize>,
    pub violation: f64,
}

/// Result of one assumption check: the max violation over all merged pairs and
/// up to [`AssumptionReport::MAX_WITNESSES`] offending tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption: AssumptionId,
    pub holds: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub witnesses: Vec<Witness>,
}

impl AssumptionReport {
    pub const MAX_WITNESSES: usize = 10;

    fn from_scan(
        assumption: AssumptionId,
        tol: f64,
        mut witnesses: Vec<Witness>,
        max_violation: f64,
    ) -> Self {
        witnesses.sort_by(|a, b| b.violation.total_cmp(&a.violation));
        witnesses.truncate(Self::MAX_WITNESSES);
        AssumptionReport {
            assumption,
            holds: max_violation <= tol,
            max_violation,
            tolerance: tol,
            witnesses,
        }
    }
}

fn merged_pairs(phi: &AbstractionMap) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for block in phi.blocks() {
        for i in 0..block.len() {
            for j in i + 1..block.len() {
                pairs.push((block[i], block[j]));
            }
        }
    }
    pairs
}

/// Assumption 1: merged states have equal mean rewards for every action.
pub fn check_reward_equality(mdp: &TabularMdp, phi: &AbstractionMap, tol: f64) -> AssumptionReport {
    let mut witnesses = Vec::new();
    let mut max_violation: f64 = 0.0;
    for (s1, s2) in merged_pairs(phi) {
        for a in 0..mdp.n_actions {
            let gap = (mdp.reward(s1, a) - mdp.reward(s2, a)).abs();
            max_violation = max_violation.max(gap);
            if gap > tol {
                witnesses.push(Witness { s1, s2, action: a, abstract_next: None, violation: gap });
            }
        }
    }
    AssumptionReport::from_scan(AssumptionId::RewardEquality, tol, witnesses, max_violation)
}

/// Assumption 2: for merged states the block-level next-state distributions
/// agree for every action and every abstract destination.
pub fn check_transition_similarity(
    mdp: &TabularMdp,
    phi: &AbstractionMap,
    tol: f64,
) -> AssumptionReport {
    let blocks = phi.blocks();
    // Block mass of P(.|s,a) for one destination block.
    let block_mass = |s: usize, a: usize, dest: &[usize]| -> f64 {
        dest.iter().map(|&sp| mdp.p(s, a, sp)).sum()
    };
    let mut witnesses = Vec::new();
    let mut max_violation: f64 = 0.0;
    for (s1, s2) in merged_pairs(phi) {
        for a in 0..mdp.n_actions {
            for (x, dest) in blocks.iter().enumerate() {
                let gap = (block_mass(s1, a, dest) - block_mass(s2, a, dest)).abs();
                max_violation = max_violation.max(gap);
                if gap > tol {
                    witnesses.push(Witness {
                        s1,
                        s2,
                        action: a,
                        abstract_next: Some(x),
                        violation: gap,
                    });
                }
            }
        }
    }
    AssumptionReport::from_scan(AssumptionId::TransitionSimilarity, tol, witnesses, max_violation)
}

/// Assumption 3: merged states have identical action distributions under the
/// given (evaluation) policy.
pub fn check_action_equality(policy: &Policy, phi: &AbstractionMap, tol: f64) -> AssumptionReport {
    let mut witnesses = Vec::new();
    let mut max_violation: f64 = 0.0;
    for (s1, s2) in merged_pairs(phi) {
        for a in 0..policy.n_actions() {
            let gap = (policy.prob(s1, a) - policy.prob(s2, a)).abs();
            max_violation = max_violation.max(gap);
            if gap > tol {
                witnesses.push(Witness { s1, s2, action: a, abstract_next: None, violation: gap });
            }
        }
    }
    AssumptionReport::from_scan(AssumptionId::ActionEquality, tol, witnesses, max_violation)
}

/// The occupancy-normalized weighting `w_pi(s) = d_pi(s) / sum_block d_pi`.
/// Blocks with zero occupancy mass fall back to uniform weights; those states
/// are never sampled, so the choice cannot affect any supported quantity.
pub fn weights_from_policy(
    mdp: &TabularMdp,
    policy: &Policy,
    phi: &AbstractionMap,
) -> WeightingFunction {
    let occ = occupancy(mdp, policy);
    let state_mass = occ.state_marginal();
    let mut weights = vec![0.0; phi.n_ground()];
    for block in phi.blocks() {
        let total: f64 = block.iter().map(|&s| state_mass[s]).sum();
        if total > 0.0 {
            for &s in &block {
                weights[s] = state_mass[s] / total;
            }
        } else {
            let w = 1.0 / block.len() as f64;
            for &s in &block {
                weights[s] = w;
            }
        }
    }
    WeightingFunction { weights }
}

/// Builds the abstract MDP for `(phi, w)`:
/// `r^phi(x,a) = sum_{s in x} w(s) r(s,a)`,
/// `P^phi(y|x,a) = sum_{s in x} w(s) sum_{s' in y} P(s'|s,a)`,
/// `d0^phi(x) = sum_{s in x} d0(s)`, same actions and discount.
pub fn build_abstract_mdp(
    mdp: &TabularMdp,
    phi: &AbstractionMap,
    w: &WeightingFunction,
) -> Result<AbstractMdp, AbstractionError> {
    w.validate(phi)?;
    let n_abs = phi.n_abstract();
    let n_actions = mdp.n_actions;
    let mut transition = vec![vec![vec![0.0; n_abs]; n_actions]; n_abs];
    let mut mean_reward = vec![vec![0.0; n_actions]; n_abs];
    let mut initial_dist = vec![0.0; n_abs];
    for s in 0..mdp.n_states {
        let x = phi.apply(s);
        initial_dist[x] += mdp.initial_dist[s];
        let ws = w.weight(s);
        for a in 0..n_actions {
            mean_reward[x][a] += ws * mdp.reward(s, a);
            for sp in 0..mdp.n_states {
                transition[x][a][phi.apply(sp)] += ws * mdp.p(s, a, sp);
            }
        }
    }
    let mdp_abs = TabularMdp {
        n_states: n_abs,
        n_actions,
        transition,
        mean_reward,
        initial_dist,
        discount: mdp.discount,
        names: None,
    };
    let report = mdp_abs.validate();
    if !report.is_empty() {
        return Err(AbstractionError::InvalidAbstractMdp(report));
    }
    Ok(AbstractMdp {
        mdp: mdp_abs,
        phi: phi.clone(),
        weighting: w.clone(),
        source_names: mdp.names.clone(),
    })
}

/// Lifts a ground policy to the abstract space:
/// `pi^phi(a|x) = sum_{s in x} w(s) pi(a|s)`.
pub fn build_abstract_policy(
    policy: &Policy,
    phi: &AbstractionMap,
    w: &WeightingFunction,
) -> Result<Policy, AbstractionError> {
    w.validate(phi)?;
    let n_actions = policy.n_actions();
    let mut rows = vec![vec![0.0; n_actions]; phi.n_abstract()];
    for s in 0..phi.n_ground() {
        let x = phi.apply(s);
        let ws = w.weight(s);
        for a in 0..n_actions {
            rows[x][a] += ws * policy.prob(s, a);
        }
    }
    // Convex combinations of probability rows are probability rows.
    Ok(Policy { action_probs: rows })
}
