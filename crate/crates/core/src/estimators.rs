//! Marginalized importance sampling estimators and the bias/variance
//! measurement harness.
//!
//! The plain estimators average `zeta(s_i, a_i) * r_i` uniformly over the
//! `N = m*T` samples, exactly as written in the estimating equations. Finite
//! trajectories sample states with the horizon-uniform law rather than the
//! discounted occupancy, so a discount-weighted mode
//! (`(1/m) * sum_traj sum_t (1-gamma) gamma^t zeta r`) is provided as well;
//! it is the form under which the unbiasedness theorem's sampling premise
//! actually holds for trajectory data, and the experiment harness uses it for
//! the true-ratio studies. The self-normalized variant divides by the summed
//! ratios and is invariant to their positive rescaling.

use crate::dataset::{generate_dataset, project_dataset, AbstractDataset, Dataset, Transition};
use crate::dice::{dice_fit, dice_fit_abstract, DiceConfig};
use crate::abstraction::{build_abstract_policy, weights_from_policy, AbstractionMap};
use crate::mdp::{Policy, TabularMdp};
use crate::occupancy::{abstract_occupancy, occupancy, policy_value, ratio_table, RatioTable};
use crate::rng::derive_seed2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

/// A total non-negative ratio function over state-action pairs.
pub trait RatioFunction {
    fn ratio(&self, state: usize, action: usize) -> f64;
}

impl RatioFunction for RatioTable {
    fn ratio(&self, state: usize, action: usize) -> f64 {
        self.ratios[state][action]
    }
}

impl<T: RatioFunction + ?Sized> RatioFunction for &T {
    fn ratio(&self, state: usize, action: usize) -> f64 {
        (**self).ratio(state, action)
    }
}

/// Adapter for closure-backed ratio functions.
pub struct FnRatio<F>(pub F);

impl<F: Fn(usize, usize) -> f64> RatioFunction for FnRatio<F> {
    fn ratio(&self, state: usize, action: usize) -> f64 {
        (self.0)(state, action)
    }
}

/// Anything that exposes a flat transition list with its batch shape.
pub trait TransitionBatch {
    fn transitions(&self) -> &[Transition];
    fn batch_size(&self) -> usize;
}

impl TransitionBatch for Dataset {
    fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
    fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl TransitionBatch for AbstractDataset {
    fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
    fn batch_size(&self) -> usize {
        self.batch_size
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("total ratio weight is zero; the self-normalized estimate is undefined")]
    ZeroTotalWeight,
    #[error("relative MSE denominator is zero for dataset {index}; use plain MSE")]
    ZeroDenominator { index: usize },
}

/// How samples are weighted inside a MIS average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampleWeighting {
    /// `1/N` per sample: the literal estimating equation.
    Uniform,
    /// `(1-gamma) * gamma^t / m` per sample: realizes the discounted-occupancy
    /// sampling premise on trajectory data (exact when the domain is absorbed
    /// with zero reward before the horizon ends).
    Discounted { gamma: f64 },
}

fn mis_core<B: TransitionBatch>(
    batch: &B,
    ratios: &impl RatioFunction,
    weighting: SampleWeighting,
) -> Result<f64, EstimatorError> {
    let transitions = batch.transitions();
    if transitions.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    Ok(match weighting {
        SampleWeighting::Uniform => {
            let total: f64 = transitions
                .iter()
                .map(|tr| ratios.ratio(tr.state, tr.action) * tr.reward)
                .sum();
            total / transitions.len() as f64
        }
        SampleWeighting::Discounted { gamma } => {
            let total: f64 = transitions
                .iter()
                .map(|tr| {
                    (1.0 - gamma)
                        * gamma.powi(tr.timestep as i32)
                        * ratios.ratio(tr.state, tr.action)
                        * tr.reward
                })
                .sum();
            total / batch.batch_size() as f64
        }
    })
}

/// Ground MIS estimate `(1/N) sum_i zeta(s_i, a_i) r_i`.
pub fn mis_estimate(dataset: &Dataset, ratios: &impl RatioFunction) -> Result<f64, EstimatorError> {
    mis_core(dataset, ratios, SampleWeighting::Uniform)
}

/// Ground MIS estimate under an explicit sample weighting.
pub fn mis_estimate_with(
    dataset: &Dataset,
    ratios: &impl RatioFunction,
    weighting: SampleWeighting,
) -> Result<f64, EstimatorError> {
    mis_core(dataset, ratios, weighting)
}

/// Abstract MIS estimate over a projected dataset with abstract-space ratios.
pub fn abstract_mis_estimate(
    dataset: &AbstractDataset,
    ratios: &impl RatioFunction,
) -> Result<f64, EstimatorError> {
    mis_core(dataset, ratios, SampleWeighting::Uniform)
}

/// Abstract MIS estimate under an explicit sample weighting.
pub fn abstract_mis_estimate_with(
    dataset: &AbstractDataset,
    ratios: &impl RatioFunction,
    weighting: SampleWeighting,
) -> Result<f64, EstimatorError> {
    mis_core(dataset, ratios, weighting)
}

/// Self-normalized (weighted importance sampling) estimate
/// `sum zeta r / sum zeta`. Invariant to positive rescaling of the ratios.
pub fn weighted_mis_estimate<B: TransitionBatch>(
    batch: &B,
    ratios: &impl RatioFunction,
) -> Result<f64, EstimatorError> {
    let transitions = batch.transitions();
    if transitions.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for tr in transitions {
        let z = ratios.ratio(tr.state, tr.action);
        num += z * tr.reward;
        den += z;
    }
    if den <= 0.0 {
        return Err(EstimatorError::ZeroTotalWeight);
    }
    Ok(num / den)
}

/// Which estimator a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    GroundTrue,
    AbstractTrue,
    GroundDice,
    AbstractDice,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::GroundTrue => "ground_true",
            EstimatorKind::AbstractTrue => "abstract_true",
            EstimatorKind::GroundDice => "ground_dice",
            EstimatorKind::AbstractDice => "abstract_dice",
        }
    }

    pub fn is_abstract(self) -> bool {
        matches!(self, EstimatorKind::AbstractTrue | EstimatorKind::AbstractDice)
    }

    pub fn is_dice(self) -> bool {
        matches!(self, EstimatorKind::GroundDice | EstimatorKind::AbstractDice)
    }
}

/// One estimate from one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimate: f64,
    pub n_samples: usize,
    pub dataset_seed: u64,
    pub estimator_kind: EstimatorKind,
    /// True when the estimate is self-normalized.
    pub weighted: bool,
}

/// MSE metric selection, mirroring the figure footnote: relative MSE is
/// meaningless when the behavior policy already attains `rho(pi_e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseMode {
    Relative,
    Plain,
}

impl MseMode {
    /// Plain when the two policy values are indistinguishable.
    pub fn auto_select(rho_e: f64, rho_d: f64) -> MseMode {
        if (rho_e - rho_d).abs() < 1e-6 {
            MseMode::Plain
        } else {
            MseMode::Relative
        }
    }
}

/// Relative MSE `(1/M) sum_i (rho - est_i)^2 / (rho - rbar_i)^2`.
pub fn relative_mse(
    estimates: &[EstimateRecord],
    rho_true: f64,
    rbar_per_dataset: &[f64],
) -> Result<f64, EstimatorError> {
    assert_eq!(estimates.len(), rbar_per_dataset.len());
    if estimates.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, (rec, &rbar)) in estimates.iter().zip(rbar_per_dataset).enumerate() {
        let den = (rho_true - rbar).powi(2);
        if den == 0.0 {
            return Err(EstimatorError::ZeroDenominator { index: i });
        }
        total += (rho_true - rec.estimate).powi(2) / den;
    }
    Ok(total / estimates.len() as f64)
}

/// Plain MSE `(1/M) sum_i (rho - est_i)^2`.
pub fn plain_mse(estimates: &[EstimateRecord], rho_true: f64) -> Result<f64, EstimatorError> {
    if estimates.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    Ok(estimates.iter().map(|r| (rho_true - r.estimate).powi(2)).sum::<f64>()
        / estimates.len() as f64)
}

/// Everything `bias_variance_report` needs to run one estimator.
#[derive(Debug, Clone)]
pub struct BiasVarianceParams {
    pub estimator: EstimatorKind,
    pub batch_sizes: Vec<usize>,
    pub horizon: usize,
    pub n_trials: usize,
    pub seed: u64,
    /// Weighting for the true-ratio estimators. DICE estimates are always
    /// self-normalized (the fitted ratios carry the discount already).
    pub weighting: SampleWeighting,
    /// Solver settings for the DICE estimator kinds.
    pub dice: Option<DiceConfig>,
}

/// One trial-level result row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub estimator: EstimatorKind,
    pub batch_size: usize,
    pub trial: usize,
    pub seed: u64,
    pub estimate: f64,
    pub rho_true: f64,
    /// Mean reward of the trial's dataset (relative-MSE denominator data).
    pub rbar: f64,
    pub diverged: bool,
}

impl TrialRow {
    pub fn squared_error(&self) -> f64 {
        (self.rho_true - self.estimate).powi(2)
    }
}

/// Aggregate moments for one batch size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_size: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub stderr: f64,
    pub n_trials: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone)]
pub struct BiasVarianceReport {
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<BatchSummary>,
    pub rho_true: f64,
}

impl BiasVarianceReport {
    /// Serializes trial rows as `estimator,batch_size,trial,seed,estimate,rho_true,mse`.
    pub fn write_rows_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "estimator,batch_size,trial,seed,estimate,rho_true,mse")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.estimator.name(),
                row.batch_size,
                row.trial,
                row.seed,
                row.estimate,
                row.rho_true,
                row.squared_error()
            )?;
        }
        Ok(())
    }
}

fn summarize(rows: &[TrialRow], batch_size: usize, rho: f64) -> BatchSummary {
    let valid: Vec<&TrialRow> = rows.iter().filter(|r| !r.diverged).collect();
    let n = valid.len().max(1) as f64;
    let mean = valid.iter().map(|r| r.estimate).sum::<f64>() / n;
    let variance = if valid.len() > 1 {
        valid.iter().map(|r| (r.estimate - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mse = valid.iter().map(|r| r.squared_error()).sum::<f64>() / n;
    BatchSummary {
        batch_size,
        mean,
        bias: mean - rho,
        variance,
        mse,
        stderr: (variance / n).sqrt(),
        n_trials: rows.len(),
        n_diverged: rows.len() - valid.len(),
    }
}

/// Runs one estimator over `n_trials` independent datasets per batch size and
/// reports the moments against the exact `rho(pi_e)`. Trials run in parallel
/// on derived seeds; aggregation is order-independent.
pub fn bias_variance_report(
    mdp: &TabularMdp,
    pi_e: &Policy,
    pi_d: &Policy,
    phi: &AbstractionMap,
    params: &BiasVarianceParams,
) -> BiasVarianceReport {
    assert!(params.n_trials >= 2, "need at least two trials for moments");
    let rho = policy_value(mdp, pi_e);
    let occ_e = occupancy(mdp, pi_e);
    let occ_d = occupancy(mdp, pi_d);
    let ground_ratios =
        ratio_table(&occ_e, &occ_d).expect("full-support behavior policy covers pi_e");
    let abstract_ratios = ratio_table(
        &abstract_occupancy(&occ_e, phi),
        &abstract_occupancy(&occ_d, phi),
    )
    .expect("block sums preserve coverage");
    // The practice-side lift of pi_e: within a block, data states follow d_D.
    let w_d = weights_from_policy(mdp, pi_d, phi);
    let lifted_pi_e =
        build_abstract_policy(pi_e, phi, &w_d).expect("behavior weighting is valid");

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (b_idx, &m) in params.batch_sizes.iter().enumerate() {
        let batch_rows: Vec<TrialRow> = (0..params.n_trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed2(params.seed, b_idx as u64, trial as u64);
                let dataset = generate_dataset(mdp, pi_d, m, params.horizon, seed);
                let rbar = dataset.transitions.iter().map(|t| t.reward).sum::<f64>()
                    / dataset.len() as f64;
                let (estimate, diverged) = match params.estimator {
                    EstimatorKind::GroundTrue => (
                        mis_core(&dataset, &ground_ratios, params.weighting).unwrap(),
                        false,
                    ),
                    EstimatorKind::AbstractTrue => {
                        let projected = project_dataset(&dataset, phi).unwrap();
                        (mis_core(&projected, &abstract_ratios, params.weighting).unwrap(), false)
                    }
                    EstimatorKind::GroundDice => {
                        let mut config =
                            params.dice.clone().unwrap_or_default();
                        config.gamma = mdp.discount;
                        config.seed = seed;
                        match dice_fit(&dataset, pi_e, &config) {
                            Ok(solution) => (
                                weighted_mis_estimate(&dataset, solution.ratios())
                                    .unwrap_or(f64::NAN),
                                false,
                            ),
                            Err(_) => (f64::NAN, true),
                        }
                    }
                    EstimatorKind::AbstractDice => {
                        let projected = project_dataset(&dataset, phi).unwrap();
                        let mut config =
                            params.dice.clone().unwrap_or_default();
                        config.gamma = mdp.discount;
                        config.seed = seed;
                        match dice_fit_abstract(&projected, &lifted_pi_e, &config) {
                            Ok(solution) => (
                                weighted_mis_estimate(&projected, solution.ratios())
                                    .unwrap_or(f64::NAN),
                                false,
                            ),
                            Err(_) => (f64::NAN, true),
                        }
                    }
                };
                TrialRow {
                    estimator: params.estimator,
                    batch_size: m,
                    trial,
                    seed,
                    estimate,
                    rho_true: rho,
                    rbar,
                    diverged,
                }
            })
            .collect();
        summaries.push(summarize(&batch_rows, m, rho));
        rows.extend(batch_rows);
    }
    BiasVarianceReport { rows, summaries, rho_true: rho }
}
