//! BestDICE-style minimax estimation of state-action density ratios, in the
//! ground or abstract state space.
//!
//! The saddle objective over `(nu, zeta, lambda)` is
//!
//! ```text
//! J = -E_D[zeta^2 / 2]
//!     + E_D[zeta * (gamma * E_{a'~pi_e} nu(s',a') - nu(s,a) - lambda)]
//!     + (1 - gamma) * E_{s0~d0, a0~pi_e}[nu(s0,a0)] + lambda
//! ```
//!
//! maximized over `zeta` and minimized over `(nu, lambda)`. Positivity is
//! structural (`zeta = u^2`); `lambda` enforces the unit-mean constraint
//! (`dJ/dlambda = 1 - E[zeta]`). Inner expectations over `a'` (and over the
//! start action) are tabular sums over the target policy, not samples. At the
//! saddle point, `zeta` equals the density ratio of the target policy's
//! occupancy against the data distribution.

use crate::dataset::{AbstractDataset, Dataset, Transition};
use crate::mdp::{Policy, TabularMdp};
use crate::occupancy::{solve_dense, true_ratios, CoverageError, OccupancyMeasure, RatioTable};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use thiserror::Error;

/// How `nu` and the raw ratio parameter are represented.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Parameterization {
    /// One parameter per state-action pair.
    #[default]
    Tabular,
    /// Linear in fixed features; `rows[s * n_actions + a]` is the feature
    /// vector of the pair.
    Linear(FeatureMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Sgd,
    #[default]
    AdaptiveMoments,
}

/// Solver settings. Defaults: discount 0.999, unit-mean constraint rate
/// 1e-3, adaptive moments, one simultaneous ascent/descent step per
/// minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceConfig {
    pub alpha_nu: f64,
    pub alpha_zeta: f64,
    pub alpha_lambda: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub parameterization: Parameterization,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Objective-trace sampling interval, in epochs.
    pub log_interval: usize,
    /// Abort when |J| on a minibatch exceeds this.
    pub divergence_guard: f64,
}

impl Default for DiceConfig {
    fn default() -> Self {
        DiceConfig {
            alpha_nu: 3e-4,
            alpha_zeta: 3e-4,
            alpha_lambda: 1e-3,
            gamma: 0.999,
            epochs: 100_000,
            minibatch: 256,
            parameterization: Parameterization::Tabular,
            optimizer: OptimizerKind::AdaptiveMoments,
            seed: 0,
            log_interval: 1000,
            divergence_guard: 1e8,
        }
    }
}

#[derive(Debug, Error)]
pub enum DiceError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("objective diverged at epoch {epoch}: |J| = {objective:.3e}")]
    Diverged { epoch: usize, objective: f64 },
    #[error("policy covers {policy_states} states but the dataset references state {state}")]
    DimensionMismatch { policy_states: usize, state: usize },
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

/// Current solver parameters. `zeta(s,a) = zeta_raw(s,a)^2` always.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceState {
    pub nu_params: Vec<f64>,
    pub zeta_raw: Vec<f64>,
    pub lambda: f64,
    n_states: usize,
    n_actions: usize,
    features: Option<FeatureMap>,
}

impl DiceState {
    /// Tabular state with `zeta` initialized at 1 (unit mean holds at init;
    /// the square head has zero gradient at exactly 0) and `nu`, `lambda` at 0.
    pub fn tabular_init(n_states: usize, n_actions: usize) -> Self {
        let k = n_states * n_actions;
        DiceState {
            nu_params: vec![0.0; k],
            zeta_raw: vec![1.0; k],
            lambda: 0.0,
            n_states,
            n_actions,
            features: None,
        }
    }

    fn linear_init(n_states: usize, n_actions: usize, features: FeatureMap, rng: &mut impl Rng) -> Self {
        let k = features.dim;
        // Small nonzero draws keep the square head off its dead point.
        let zeta_raw = (0..k).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
        DiceState {
            nu_params: vec![0.0; k],
            zeta_raw,
            lambda: 0.0,
            n_states,
            n_actions,
            features: Some(features),
        }
    }

    /// Builds a tabular state from explicit `(nu, zeta)` tables, e.g. the
    /// saddle-point oracle output.
    pub fn from_tables(nu: &[Vec<f64>], zeta: &[Vec<f64>], lambda: f64) -> Self {
        let n_states = nu.len();
        let n_actions = nu.first().map_or(0, Vec::len);
        let mut state = DiceState::tabular_init(n_states, n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                state.nu_params[s * n_actions + a] = nu[s][a];
                state.zeta_raw[s * n_actions + a] = zeta[s][a].max(0.0).sqrt();
            }
        }
        state.lambda = lambda;
        state
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    fn idx(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    #[inline]
    pub fn nu(&self, s: usize, a: usize) -> f64 {
        match &self.features {
            None => self.nu_params[self.idx(s, a)],
            Some(f) => dot(&f.rows[self.idx(s, a)], &self.nu_params),
        }
    }

    #[inline]
    pub fn zeta_raw_at(&self, s: usize, a: usize) -> f64 {
        match &self.features {
            None => self.zeta_raw[self.idx(s, a)],
            Some(f) => dot(&f.rows[self.idx(s, a)], &self.zeta_raw),
        }
    }

    #[inline]
    pub fn zeta(&self, s: usize, a: usize) -> f64 {
        let u = self.zeta_raw_at(s, a);
        u * u
    }

    /// `E_{a ~ pi(.|s)}[nu(s, a)]`, the exact inner expectation.
    fn nu_bar(&self, s: usize, policy: &Policy) -> f64 {
        (0..self.n_actions).map(|a| policy.prob(s, a) * self.nu(s, a)).sum()
    }

    /// Scatters a per-pair gradient into parameter space.
    #[inline]
    fn accumulate(&self, grad: &mut [f64], s: usize, a: usize, g: f64) {
        match &self.features {
            None => grad[self.idx(s, a)] += g,
            Some(f) => {
                for (gk, &fk) in grad.iter_mut().zip(&f.rows[self.idx(s, a)]) {
                    *gk += g * fk;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradients of the saddle objective with respect to every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct DiceGradients {
    pub nu: Vec<f64>,
    pub zeta_raw: Vec<f64>,
    pub lambda: f64,
}

/// One weighted sample of the data expectation: either an observed successor
/// or the exact successor distribution.
enum Successor<'a> {
    Sampled(usize),
    Expected(&'a [f64]),
}

struct WeightedSample<'a> {
    weight: f64,
    state: usize,
    action: usize,
    successor: Successor<'a>,
}

fn objective_core<'a>(
    state: &DiceState,
    samples: impl Iterator<Item = WeightedSample<'a>>,
    starts: impl Iterator<Item = (f64, usize)>,
    policy: &Policy,
    gamma: f64,
) -> f64 {
    let mut j = state.lambda;
    for sample in samples {
        let z = state.zeta(sample.state, sample.action);
        let succ_nu = match sample.successor {
            Successor::Sampled(sp) => state.nu_bar(sp, policy),
            Successor::Expected(row) => row
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(sp, &p)| p * state.nu_bar(sp, policy))
                .sum(),
        };
        let advantage = gamma * succ_nu - state.nu(sample.state, sample.action) - state.lambda;
        j += sample.weight * (-0.5 * z * z + z * advantage);
    }
    for (weight, s0) in starts {
        j += (1.0 - gamma) * weight * state.nu_bar(s0, policy);
    }
    j
}

fn gradients_core<'a>(
    state: &DiceState,
    samples: impl Iterator<Item = WeightedSample<'a>>,
    starts: impl Iterator<Item = (f64, usize)>,
    policy: &Policy,
    gamma: f64,
) -> DiceGradients {
    let k = state.nu_params.len();
    let mut grad = DiceGradients { nu: vec![0.0; k], zeta_raw: vec![0.0; k], lambda: 1.0 };
    for sample in samples {
        let (s, a, w) = (sample.state, sample.action, sample.weight);
        let u = state.zeta_raw_at(s, a);
        let z = u * u;
        let succ_nu = match &sample.successor {
            Successor::Sampled(sp) => state.nu_bar(*sp, policy),
            Successor::Expected(row) => row
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(sp, &p)| p * state.nu_bar(sp, policy))
                .sum(),
        };
        let advantage = gamma * succ_nu - state.nu(s, a) - state.lambda;
        // dJ/dzeta chained through zeta = u^2.
        state.accumulate(&mut grad.zeta_raw, s, a, w * (advantage - z) * 2.0 * u);
        // dJ/dnu: -zeta at the pair itself, +gamma*zeta*pi_e at the successor.
        state.accumulate(&mut grad.nu, s, a, -w * z);
        match &sample.successor {
            Successor::Sampled(sp) => {
                for ap in 0..state.n_actions {
                    state.accumulate(&mut grad.nu, *sp, ap, w * z * gamma * policy.prob(*sp, ap));
                }
            }
            Successor::Expected(row) => {
                for (sp, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for ap in 0..state.n_actions {
                        state.accumulate(
                            &mut grad.nu,
                            sp,
                            ap,
                            w * z * gamma * p * policy.prob(sp, ap),
                        );
                    }
                }
            }
        }
        grad.lambda -= w * z;
    }
    for (weight, s0) in starts {
        for a in 0..state.n_actions {
            state.accumulate(&mut grad.nu, s0, a, (1.0 - gamma) * weight * policy.prob(s0, a));
        }
    }
    grad
}

fn batch_samples<'a>(batch: &'a [Transition]) -> impl Iterator<Item = WeightedSample<'a>> {
    let w = 1.0 / batch.len() as f64;
    batch.iter().map(move |tr| WeightedSample {
        weight: w,
        state: tr.state,
        action: tr.action,
        successor: Successor::Sampled(tr.next_state),
    })
}

fn uniform_starts(starts: &[usize]) -> impl Iterator<Item = (f64, usize)> + '_ {
    let w = 1.0 / starts.len() as f64;
    starts.iter().map(move |&s| (w, s))
}

/// Minibatch objective value. The expectation over `a'` (and the start
/// action) is computed exactly from the policy table.
pub fn dice_objective(
    state: &DiceState,
    batch: &[Transition],
    target_policy: &Policy,
    start_states: &[usize],
    gamma: f64,
) -> f64 {
    assert!(!batch.is_empty() && !start_states.is_empty());
    objective_core(state, batch_samples(batch), uniform_starts(start_states), target_policy, gamma)
}

/// Analytic minibatch gradients of [`dice_objective`]. `zeta` ascends,
/// `(nu, lambda)` descend.
pub fn dice_gradients(
    state: &DiceState,
    batch: &[Transition],
    target_policy: &Policy,
    start_states: &[usize],
    gamma: f64,
) -> DiceGradients {
    assert!(!batch.is_empty() && !start_states.is_empty());
    gradients_core(state, batch_samples(batch), uniform_starts(start_states), target_policy, gamma)
}

fn exact_samples<'a>(
    mdp: &'a TabularMdp,
    data_dist: &'a OccupancyMeasure,
) -> impl Iterator<Item = WeightedSample<'a>> {
    (0..mdp.n_states).flat_map(move |s| {
        (0..mdp.n_actions).filter_map(move |a| {
            let w = data_dist.mass(s, a);
            (w > 0.0).then_some(WeightedSample {
                weight: w,
                state: s,
                action: a,
                successor: Successor::Expected(&mdp.transition[s][a]),
            })
        })
    })
}

fn exact_starts(mdp: &TabularMdp) -> impl Iterator<Item = (f64, usize)> + '_ {
    mdp.initial_dist.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (p, s))
}

/// Population objective: every data expectation is taken under the exact
/// model and data distribution. Oracle-side.
pub fn dice_objective_exact(
    state: &DiceState,
    mdp: &TabularMdp,
    data_dist: &OccupancyMeasure,
    target_policy: &Policy,
) -> f64 {
    objective_core(
        state,
        exact_samples(mdp, data_dist),
        exact_starts(mdp),
        target_policy,
        mdp.discount,
    )
}

/// Population gradients under exact expectations. Oracle-side.
pub fn dice_gradients_exact(
    state: &DiceState,
    mdp: &TabularMdp,
    data_dist: &OccupancyMeasure,
    target_policy: &Policy,
) -> DiceGradients {
    gradients_core(
        state,
        exact_samples(mdp, data_dist),
        exact_starts(mdp),
        target_policy,
        mdp.discount,
    )
}

/// One entry of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub epoch: usize,
    pub objective: f64,
    pub mean_zeta: f64,
    pub lambda: f64,
}

/// A fitted solver state plus the extracted ratio table over the dataset's
/// state space (unseen pairs extract to 0).
#[derive(Debug, Clone)]
pub struct DiceSolution {
    pub state: DiceState,
    pub objective_trace: Vec<TracePoint>,
    pub converged: bool,
    pub ratio_table: RatioTable,
    /// Dataset-weighted mean of the extracted ratios.
    pub dataset_mean_ratio: f64,
}

impl DiceSolution {
    /// The extracted ratio function: total, non-negative, zero off the
    /// dataset support.
    pub fn ratios(&self) -> &RatioTable {
        &self.ratio_table
    }

    /// Writes the objective trace as `epoch,J,mean_zeta,lambda`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,J,mean_zeta,lambda")?;
        for p in &self.objective_trace {
            writeln!(w, "{},{},{},{}", p.epoch, p.objective, p.mean_zeta, p.lambda)?;
        }
        Ok(())
    }
}

/// Extracts the fitted ratio table (a clone of [`DiceSolution::ratios`]).
pub fn extract_ratios(solution: &DiceSolution) -> RatioTable {
    solution.ratio_table.clone()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize) -> Self {
        Adam { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Ascends `params` along `grad` with step size `lr`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] += lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

enum Optimizer {
    Sgd,
    Adam { nu: Adam, zeta: Adam, lambda: Adam },
}

impl Optimizer {
    fn new(kind: OptimizerKind, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::AdaptiveMoments => Optimizer::Adam {
                nu: Adam::new(dim),
                zeta: Adam::new(dim),
                lambda: Adam::new(1),
            },
        }
    }

    /// Simultaneous update: `zeta` ascends J, `nu` and `lambda` descend.
    fn apply(&mut self, state: &mut DiceState, grad: &DiceGradients, config: &DiceConfig) {
        match self {
            Optimizer::Sgd => {
                for (p, g) in state.zeta_raw.iter_mut().zip(&grad.zeta_raw) {
                    *p += config.alpha_zeta * g;
                }
                for (p, g) in state.nu_params.iter_mut().zip(&grad.nu) {
                    *p -= config.alpha_nu * g;
                }
                state.lambda -= config.alpha_lambda * grad.lambda;
            }
            Optimizer::Adam { nu, zeta, lambda } => {
                zeta.step(&mut state.zeta_raw, &grad.zeta_raw, config.alpha_zeta);
                let neg_nu: Vec<f64> = grad.nu.iter().map(|g| -g).collect();
                nu.step(&mut state.nu_params, &neg_nu, config.alpha_nu);
                let mut l = [state.lambda];
                lambda.step(&mut l, &[-grad.lambda], config.alpha_lambda);
                state.lambda = l[0];
            }
        }
    }
}

fn fit_core(
    transitions: &[Transition],
    start_states: &[usize],
    n_states: usize,
    n_actions: usize,
    target_policy: &Policy,
    config: &DiceConfig,
) -> Result<DiceSolution, DiceError> {
    if transitions.is_empty() || start_states.is_empty() {
        return Err(DiceError::EmptyDataset);
    }
    for tr in transitions {
        let worst = tr.state.max(tr.next_state);
        if worst >= n_states {
            return Err(DiceError::DimensionMismatch { policy_states: n_states, state: worst });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = match &config.parameterization {
        Parameterization::Tabular => DiceState::tabular_init(n_states, n_actions),
        Parameterization::Linear(features) => {
            DiceState::linear_init(n_states, n_actions, features.clone(), &mut rng)
        }
    };
    let mut optimizer = Optimizer::new(config.optimizer, state.nu_params.len());
    let batch_len = config.minibatch.min(transitions.len()).max(1);
    let start_len = config.minibatch.min(start_states.len()).max(1);
    let mut batch = Vec::with_capacity(batch_len);
    let mut starts = Vec::with_capacity(start_len);
    let mut trace = Vec::new();

    for epoch in 0..config.epochs {
        batch.clear();
        for _ in 0..batch_len {
            batch.push(transitions[rng.random_range(0..transitions.len())]);
        }
        starts.clear();
        for _ in 0..start_len {
            starts.push(start_states[rng.random_range(0..start_states.len())]);
        }
        let grad = dice_gradients(&state, &batch, target_policy, &starts, config.gamma);
        optimizer.apply(&mut state, &grad, config);

        if epoch % config.log_interval == 0 || epoch + 1 == config.epochs {
            let objective = dice_objective(&state, &batch, target_policy, &starts, config.gamma);
            let mean_zeta =
                batch.iter().map(|tr| state.zeta(tr.state, tr.action)).sum::<f64>()
                    / batch.len() as f64;
            trace.push(TracePoint { epoch, objective, mean_zeta, lambda: state.lambda });
            if !objective.is_finite() || objective.abs() > config.divergence_guard {
                return Err(DiceError::Diverged { epoch, objective });
            }
        }
    }

    // Extraction: zeta over the dataset support, zero elsewhere.
    let mut seen = vec![vec![false; n_actions]; n_states];
    for tr in transitions {
        seen[tr.state][tr.action] = true;
    }
    let mut ratios = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            if seen[s][a] {
                ratios[s][a] = state.zeta(s, a);
            }
        }
    }
    let dataset_mean_ratio = transitions
        .iter()
        .map(|tr| ratios[tr.state][tr.action])
        .sum::<f64>()
        / transitions.len() as f64;
    Ok(DiceSolution {
        state,
        objective_trace: trace,
        converged: (0.9..=1.1).contains(&dataset_mean_ratio),
        ratio_table: RatioTable { ratios, support_mask: seen },
        dataset_mean_ratio,
    })
}

/// Fits ground BestDICE on an offline dataset against the evaluation policy.
/// Deterministic per `(config, seed)`.
pub fn dice_fit(
    dataset: &Dataset,
    target_policy: &Policy,
    config: &DiceConfig,
) -> Result<DiceSolution, DiceError> {
    fit_core(
        &dataset.transitions,
        &dataset.start_states,
        target_policy.n_states(),
        target_policy.n_actions(),
        target_policy,
        config,
    )
}

/// Fits AbstractBestDICE on a projected dataset. The target policy must be
/// the abstract-space evaluation policy (under action equality it is the
/// ground policy's rows copied onto blocks).
pub fn dice_fit_abstract(
    dataset: &AbstractDataset,
    target_policy: &Policy,
    config: &DiceConfig,
) -> Result<DiceSolution, DiceError> {
    let n_abstract = dataset.source_map.n_abstract();
    if target_policy.n_states() < n_abstract {
        return Err(DiceError::DimensionMismatch {
            policy_states: target_policy.n_states(),
            state: n_abstract - 1,
        });
    }
    fit_core(
        &dataset.transitions,
        &dataset.start_states,
        n_abstract,
        target_policy.n_actions(),
        target_policy,
        config,
    )
}

/// The exact saddle point for a known model: `zeta*` is the true ratio table
/// and `nu*` solves the linear fixed point `nu = -zeta* + gamma * P Pi_e nu`
/// (with `lambda* = 0`), at which every gradient block of the objective
/// vanishes under exact expectations.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    pub nu: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub lambda: f64,
}

pub fn saddle_point_oracle(
    mdp: &TabularMdp,
    pi_e: &Policy,
    pi_d: &Policy,
) -> Result<SaddlePoint, CoverageError> {
    let table = true_ratios(mdp, pi_e, pi_d)?;
    let n = mdp.n_states * mdp.n_actions;
    let idx = |s: usize, a: usize| s * mdp.n_actions + a;
    let mut a_mat = DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            b[idx(s, a)] = -table.ratios[s][a];
            for sp in 0..mdp.n_states {
                let p = mdp.p(s, a, sp);
                if p == 0.0 {
                    continue;
                }
                for ap in 0..mdp.n_actions {
                    a_mat[(idx(s, a), idx(sp, ap))] -=
                        mdp.discount * p * pi_e.prob(sp, ap);
                }
            }
        }
    }
    let nu_flat = solve_dense(a_mat, b);
    let nu = (0..mdp.n_states)
        .map(|s| (0..mdp.n_actions).map(|a| nu_flat[idx(s, a)]).collect())
        .collect();
    Ok(SaddlePoint { nu, zeta: table.ratios, lambda: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_dataset;
    use crate::occupancy::occupancy;
    use crate::twopath::{build_twopath, TwoPathVariant};

    fn small_batch() -> (Vec<Transition>, Vec<usize>) {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 8, 6, 21);
        (data.transitions, data.start_states)
    }

    #[test]
    fn zero_zeta_leaves_only_start_term_and_lambda() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let (batch, starts) = small_batch();
        let mut state = DiceState::tabular_init(4, 2);
        state.zeta_raw = vec![0.0; 8];
        for (i, v) in state.nu_params.iter_mut().enumerate() {
            *v = i as f64 * 0.3 - 1.0;
        }
        let gamma = parts.mdp.discount;
        let j = dice_objective(&state, &batch, &parts.pi_e, &starts, gamma);
        let expected: f64 = starts
            .iter()
            .map(|&s0| {
                (0..2).map(|a| parts.pi_e.prob(s0, a) * state.nu(s0, a)).sum::<f64>()
            })
            .sum::<f64>()
            * (1.0 - gamma)
            / starts.len() as f64;
        assert!((j - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_nu_leaves_only_quadratic_term() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let (batch, starts) = small_batch();
        let mut state = DiceState::tabular_init(4, 2);
        for (i, v) in state.zeta_raw.iter_mut().enumerate() {
            *v = 0.5 + 0.1 * i as f64;
        }
        let j = dice_objective(&state, &batch, &parts.pi_e, &starts, parts.mdp.discount);
        let expected = -0.5
            * batch
                .iter()
                .map(|tr| state.zeta(tr.state, tr.action).powi(2))
                .sum::<f64>()
            / batch.len() as f64;
        assert!((j - expected).abs() < 1e-12);
    }

    #[test]
    fn lambda_gradient_is_one_minus_mean_zeta() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let (batch, starts) = small_batch();
        let state = DiceState::tabular_init(4, 2);
        let grad = dice_gradients(&state, &batch, &parts.pi_e, &starts, parts.mdp.discount);
        // zeta is identically 1 at init, so the mean is exactly 1.
        assert!(grad.lambda.abs() < 1e-12);
    }

    #[test]
    fn zero_zeta_raw_kills_its_own_gradient() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let (batch, starts) = small_batch();
        let mut state = DiceState::tabular_init(4, 2);
        state.zeta_raw = vec![0.0; 8];
        let grad = dice_gradients(&state, &batch, &parts.pi_e, &starts, parts.mdp.discount);
        assert!(grad.zeta_raw.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn saddle_point_gradients_vanish_under_exact_expectations() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let saddle = saddle_point_oracle(&parts.mdp, &parts.pi_e, &parts.pi_d).unwrap();
        let state = DiceState::from_tables(&saddle.nu, &saddle.zeta, saddle.lambda);
        let occ_d = occupancy(&parts.mdp, &parts.pi_d);
        let grad = dice_gradients_exact(&state, &parts.mdp, &occ_d, &parts.pi_e);
        let max_nu = grad.nu.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let max_zeta = grad.zeta_raw.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        assert!(max_nu < 1e-6, "nu gradient {max_nu}");
        assert!(max_zeta < 1e-6, "zeta gradient {max_zeta}");
        assert!(grad.lambda.abs() < 1e-6, "lambda gradient {}", grad.lambda);
    }

    #[test]
    fn saddle_zeta_is_unit_mean_under_data_distribution() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let saddle = saddle_point_oracle(&parts.mdp, &parts.pi_e, &parts.pi_d).unwrap();
        let occ_d = occupancy(&parts.mdp, &parts.pi_d);
        let mean: f64 = (0..4)
            .map(|s| (0..2).map(|a| occ_d.mass(s, a) * saddle.zeta[s][a]).sum::<f64>())
            .sum();
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_policies_saddle_zeta_is_one_on_support() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let saddle = saddle_point_oracle(&parts.mdp, &parts.pi_d, &parts.pi_d).unwrap();
        let occ = occupancy(&parts.mdp, &parts.pi_d);
        for s in 0..4 {
            for a in 0..2 {
                if occ.mass(s, a) > 1e-12 {
                    assert!((saddle.zeta[s][a] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn sgd_step_from_saddle_moves_parameters_negligibly() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let saddle = saddle_point_oracle(&parts.mdp, &parts.pi_e, &parts.pi_d).unwrap();
        let state = DiceState::from_tables(&saddle.nu, &saddle.zeta, saddle.lambda);
        let occ_d = occupancy(&parts.mdp, &parts.pi_d);
        let grad = dice_gradients_exact(&state, &parts.mdp, &occ_d, &parts.pi_e);
        let lr = 1e-4;
        let max_move = grad
            .nu
            .iter()
            .chain(&grad.zeta_raw)
            .chain(std::iter::once(&grad.lambda))
            .fold(0.0_f64, |m, g| m.max((lr * g).abs()));
        assert!(max_move < 1e-6, "parameter move {max_move}");
    }

    #[test]
    fn fit_is_seed_deterministic() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 20, 30, 3);
        let projected = crate::dataset::project_dataset(&data, &parts.phi).unwrap();
        let lifted = Policy::new(vec![
            parts.pi_e.action_probs[0].clone(),
            parts.pi_e.action_probs[1].clone(),
            parts.pi_e.action_probs[3].clone(),
        ])
        .unwrap();
        let config = DiceConfig { epochs: 500, seed: 9, ..DiceConfig::default() };
        let a = dice_fit_abstract(&projected, &lifted, &config).unwrap();
        let b = dice_fit_abstract(&projected, &lifted, &config).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.ratio_table.ratios, b.ratio_table.ratios);
    }

    #[test]
    fn ground_and_identity_abstract_fits_coincide() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 15, 20, 5);
        let projected =
            crate::dataset::project_dataset(&data, &crate::abstraction::AbstractionMap::identity(4))
                .unwrap();
        let config = DiceConfig { epochs: 300, seed: 4, ..DiceConfig::default() };
        let ground = dice_fit(&data, &parts.pi_e, &config).unwrap();
        let abs = dice_fit_abstract(&projected, &parts.pi_e, &config).unwrap();
        assert_eq!(ground.ratio_table.ratios, abs.ratio_table.ratios);
    }

    #[test]
    fn extracted_ratios_are_nonnegative_and_zero_off_support() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 10, 10, 6);
        let config = DiceConfig { epochs: 200, ..DiceConfig::default() };
        let solution = dice_fit(&data, &parts.pi_e, &config).unwrap();
        let table = extract_ratios(&solution);
        for s in 0..4 {
            for a in 0..2 {
                assert!(table.ratios[s][a] >= 0.0);
                if !table.support_mask[s][a] {
                    assert_eq!(table.ratios[s][a], 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let empty = Dataset { transitions: vec![], batch_size: 0, horizon: 1, start_states: vec![] };
        assert!(matches!(
            dice_fit(&empty, &parts.pi_e, &DiceConfig::default()),
            Err(DiceError::EmptyDataset)
        ));
    }
}
