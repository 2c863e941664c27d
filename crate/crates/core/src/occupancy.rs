//! Exact occupancy measures, policy values, density ratios and ratio-variance
//! diagnostics, computed linear-algebraically. This is the oracle side of the
//! library: estimators and the DICE solver are checked against it.
//!
//! The state occupupancy solves `(I - gamma * P_pi^T) d = (1 - gamma) * d0`
//! by dense LU; a truncated power sum is kept alongside as an independent
//! brute-force cross-check and is never the primary path.

use crate::abstraction::AbstractionMap;
use crate::dataset::sample_index;
use crate::mdp::{Policy, TabularMdp};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Entries of an exact occupancy below this threshold are treated as zero when
/// deciding support. Exact solves leave noise around 1e-15; real support at
/// desk scale is orders of magnitude above this.
pub const SUPPORT_EPS: f64 = 1e-12;

/// A normalized discounted state-action distribution `d[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    pub dist: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl OccupancyMeasure {
    pub fn n_states(&self) -> usize {
        self.dist.len()
    }

    pub fn n_actions(&self) -> usize {
        self.dist.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn mass(&self, state: usize, action: usize) -> f64 {
        self.dist[state][action]
    }

    /// State marginal `d[s] = sum_a d[s][a]`.
    pub fn state_marginal(&self) -> Vec<f64> {
        self.dist.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.dist.iter().flatten().sum()
    }
}

/// Elementwise density ratios `zeta[s][a] = d_e / d_D` on the support of
/// `d_D`; off-support entries are 0 with `support_mask` false.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub ratios: Vec<Vec<f64>>,
    pub support_mask: Vec<Vec<bool>>,
}

impl RatioTable {
    #[inline]
    pub fn ratio(&self, state: usize, action: usize) -> f64 {
        self.ratios[state][action]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CoverageError {
    #[error("coverage violated: d_pi_e > 0 but d_D = 0 at state-action pairs {0:?}")]
    Uncovered(Vec<(usize, usize)>),
}

/// Per-state transition matrix of the Markov chain induced by `policy`,
/// `P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
fn policy_chain(mdp: &TabularMdp, policy: &Policy) -> DMatrix<f64> {
    let n = mdp.n_states;
    DMatrix::from_fn(n, n, |s, sp| {
        (0..mdp.n_actions).map(|a| policy.prob(s, a) * mdp.p(s, a, sp)).sum()
    })
}

pub(crate) fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    a.lu().solve(&b).expect("linear system is nonsingular for gamma < 1")
}

/// Exact discounted occupancy `d_pi = (1 - gamma) * sum_t gamma^t d_t`,
/// obtained from the stationarity equation
/// `d = (1 - gamma) d0 + gamma P_pi^T d` and `d[s][a] = d[s] * pi(a|s)`.
pub fn occupancy(mdp: &TabularMdp, policy: &Policy) -> OccupancyMeasure {
    let gamma = mdp.discount;
    let n = mdp.n_states;
    let p_pi = policy_chain(mdp, policy);
    let a = DMatrix::identity(n, n) - p_pi.transpose() * gamma;
    let b = DVector::from_fn(n, |s, _| (1.0 - gamma) * mdp.initial_dist[s]);
    let d_state = solve_dense(a, b);
    let dist = (0..n)
        .map(|s| (0..mdp.n_actions).map(|act| d_state[s] * policy.prob(s, act)).collect())
        .collect();
    OccupancyMeasure { dist, gamma }
}

/// Brute-force occupancy by truncated power sum, normalized by the partial
/// geometric series exactly as in the defining limit. Independent of the
/// linear-solve path; used as its cross-check.
pub fn occupancy_truncated(mdp: &TabularMdp, policy: &Policy, t_max: usize) -> OccupancyMeasure {
    let gamma = mdp.discount;
    let n = mdp.n_states;
    let p_pi = policy_chain(mdp, policy);
    let mut d_t = DVector::from_fn(n, |s, _| mdp.initial_dist[s]);
    let mut acc = DVector::zeros(n);
    let mut weight = 1.0;
    let mut weight_sum = 0.0;
    for _ in 0..t_max {
        acc += &d_t * weight;
        weight_sum += weight;
        weight *= gamma;
        d_t = p_pi.transpose() * d_t;
    }
    let dist = (0..n)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| acc[s] / weight_sum * policy.prob(s, a))
                .collect()
        })
        .collect();
    OccupancyMeasure { dist, gamma }
}

/// Exact undiscounted visit frequency over a finite horizon,
/// `(1/T) * sum_{t<T} P(s_t = s) * pi(a|s)`. This is the law of a uniformly
/// drawn sample from a length-`T` trajectory.
pub fn horizon_frequency(mdp: &TabularMdp, policy: &Policy, horizon: usize) -> OccupancyMeasure {
    let n = mdp.n_states;
    let p_pi = policy_chain(mdp, policy);
    let mut d_t = DVector::from_fn(n, |s, _| mdp.initial_dist[s]);
    let mut acc = DVector::zeros(n);
    for _ in 0..horizon {
        acc += &d_t;
        d_t = p_pi.transpose() * d_t;
    }
    let dist = (0..n)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| acc[s] / horizon as f64 * policy.prob(s, a))
                .collect()
        })
        .collect();
    OccupancyMeasure { dist, gamma: mdp.discount }
}

/// Policy value `rho(pi) = sum_{s,a} d_pi(s,a) r(s,a)`.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let occ = occupancy(mdp, policy);
    occ.dist
        .iter()
        .enumerate()
        .map(|(s, row)| {
            row.iter().enumerate().map(|(a, &d)| d * mdp.reward(s, a)).sum::<f64>()
        })
        .sum()
}

/// The same value through the action-value identity
/// `rho = (1 - gamma) E_{d0, a0~pi}[q^pi(s0, a0)]`, solved as a second,
/// independent linear system (the evaluation equation for `v^pi`).
pub fn policy_value_via_q(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let gamma = mdp.discount;
    let n = mdp.n_states;
    let p_pi = policy_chain(mdp, policy);
    let r_pi = DVector::from_fn(n, |s, _| {
        (0..mdp.n_actions).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum()
    });
    let v = solve_dense(DMatrix::identity(n, n) - p_pi * gamma, r_pi);
    // q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) v(s'), averaged over a0 ~ pi.
    let q_start: f64 = (0..n)
        .map(|s| {
            mdp.initial_dist[s]
                * (0..mdp.n_actions)
                    .map(|a| {
                        let cont: f64 =
                            (0..n).map(|sp| mdp.p(s, a, sp) * v[sp]).sum();
                        policy.prob(s, a) * (mdp.reward(s, a) + gamma * cont)
                    })
                    .sum::<f64>()
        })
        .sum();
    (1.0 - gamma) * q_start
}

/// Elementwise ratio table `zeta = d_e / d_D`. Fails if `pi_e` puts occupancy
/// mass where the behavior occupancy has none.
pub fn ratio_table(
    occ_e: &OccupancyMeasure,
    occ_d: &OccupancyMeasure,
) -> Result<RatioTable, CoverageError> {
    let mut uncovered = Vec::new();
    let n_states = occ_d.n_states();
    let n_actions = occ_d.n_actions();
    let mut ratios = vec![vec![0.0; n_actions]; n_states];
    let mut support_mask = vec![vec![false; n_actions]; n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            let de = occ_e.mass(s, a);
            let dd = occ_d.mass(s, a);
            if dd > SUPPORT_EPS {
                ratios[s][a] = de / dd;
                support_mask[s][a] = true;
            } else if de > SUPPORT_EPS {
                uncovered.push((s, a));
            }
        }
    }
    if uncovered.is_empty() {
        Ok(RatioTable { ratios, support_mask })
    } else {
        Err(CoverageError::Uncovered(uncovered))
    }
}

/// True density ratios `zeta(s,a) = d_{pi_e}(s,a) / d_{pi_D}(s,a)` from exact
/// occupancies.
pub fn true_ratios(
    mdp: &TabularMdp,
    pi_e: &Policy,
    pi_d: &Policy,
) -> Result<RatioTable, CoverageError> {
    ratio_table(&occupancy(mdp, pi_e), &occupancy(mdp, pi_d))
}

/// Projects an occupancy into the abstract space by block sums:
/// `d^phi(x, a) = sum_{s in phi^-1(x)} d(s, a)`.
pub fn abstract_occupancy(occ: &OccupancyMeasure, phi: &AbstractionMap) -> OccupancyMeasure {
    let n_actions = occ.n_actions();
    let mut dist = vec![vec![0.0; n_actions]; phi.n_abstract()];
    for (s, row) in occ.dist.iter().enumerate() {
        let x = phi.apply(s);
        for (a, &d) in row.iter().enumerate() {
            dist[x][a] += d;
        }
    }
    OccupancyMeasure { dist, gamma: occ.gamma }
}

/// Exact `Var_{(s,a) ~ d_D}[zeta(s,a)]`, computed as
/// `sum d_D zeta^2 - (sum d_D zeta)^2`.
pub fn ratio_variance(
    occ_e: &OccupancyMeasure,
    occ_d: &OccupancyMeasure,
) -> Result<f64, CoverageError> {
    let table = ratio_table(occ_e, occ_d)?;
    let mut mean = 0.0;
    let mut second = 0.0;
    for s in 0..occ_d.n_states() {
        for a in 0..occ_d.n_actions() {
            let dd = occ_d.mass(s, a);
            if table.support_mask[s][a] {
                let z = table.ratios[s][a];
                mean += dd * z;
                second += dd * z * z;
            }
        }
    }
    Ok(second - mean * mean)
}

/// Monte-Carlo covariance matrix of the weighted per-step rewards
/// `X_t = zeta(s_t, a_t) r(s_t, a_t)` over rollouts of `pi_D`. Entry `(t, k)`
/// estimates `Cov(X_t, X_k)`; the matrix is symmetric with the per-step
/// variances on the diagonal.
pub fn per_step_covariance(
    mdp: &TabularMdp,
    pi_e: &Policy,
    pi_d: &Policy,
    horizon: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, CoverageError> {
    assert!(n_rollouts >= 2, "need at least two rollouts");
    let ratios = true_ratios(mdp, pi_e, pi_d)?;
    // One weighted-reward row per rollout, rollouts on independent streams.
    let rows: Vec<Vec<f64>> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut state = sample_index(&mdp.initial_dist, &mut rng);
            let mut xs = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let action = sample_index(pi_d.row(state), &mut rng);
                xs.push(ratios.ratio(state, action) * mdp.reward(state, action));
                state = sample_index(&mdp.transition[state][action], &mut rng);
            }
            xs
        })
        .collect();
    let n = n_rollouts as f64;
    let means: Vec<f64> = (0..horizon)
        .map(|t| rows.iter().map(|r| r[t]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![vec![0.0; horizon]; horizon];
    for t in 0..horizon {
        for k in t..horizon {
            let c = rows
                .iter()
                .map(|r| (r[t] - means[t]) * (r[k] - means[k]))
                .sum::<f64>()
                / (n - 1.0);
            cov[t][k] = c;
            cov[k][t] = c;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twopath::{build_twopath, TwoPathVariant};

    fn single_state(n_actions: usize) -> TabularMdp {
        TabularMdp::new(
            vec![vec![vec![1.0]; n_actions]],
            vec![vec![1.0; n_actions]],
            vec![1.0],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn self_loop_occupancy_is_point_mass() {
        let mdp = single_state(1);
        let occ = occupancy(&mdp, &Policy::uniform(1, 1));
        assert!((occ.mass(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_policy_splits_occupancy() {
        let mdp = single_state(2);
        let occ = occupancy(&mdp, &Policy::uniform(1, 2));
        assert!((occ.mass(0, 0) - 0.5).abs() < 1e-12);
        assert!((occ.mass(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn twopath_occupancy_matches_branch_probabilities() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let occ = occupancy(&parts.mdp, &parts.pi_d);
        let m = occ.state_marginal();
        // d(s1) : d(s2) = 0.99 : 0.01 under pi_D.
        assert!((m[1] / (m[1] + m[2]) - 0.99).abs() < 1e-10);
        assert!((m[2] / (m[1] + m[2]) - 0.01).abs() < 1e-10);
        assert!((occ.total() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncated_sum_agrees_with_linear_solve() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        for policy in [&parts.pi_e, &parts.pi_d] {
            let exact = occupancy(&parts.mdp, policy);
            let brute = occupancy_truncated(&parts.mdp, policy, 100_000);
            for s in 0..4 {
                for a in 0..2 {
                    assert!(
                        (exact.mass(s, a) - brute.mass(s, a)).abs() < 1e-8,
                        "mismatch at ({s},{a})"
                    );
                }
            }
        }
    }

    #[test]
    fn constant_reward_value_is_the_constant() {
        let mut mdp = single_state(2);
        mdp.mean_reward = vec![vec![2.5, 2.5]];
        assert!((policy_value(&mdp, &Policy::uniform(1, 2)) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn twopath_policy_values_coincide() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let rho_e = policy_value(&parts.mdp, &parts.pi_e);
        let rho_d = policy_value(&parts.mdp, &parts.pi_d);
        let gamma = parts.mdp.discount;
        assert!((rho_e - rho_d).abs() < 1e-12);
        assert!((rho_e - gamma * (1.0 - gamma)).abs() < 1e-12);
    }

    #[test]
    fn value_identity_via_q_function() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        for policy in [&parts.pi_e, &parts.pi_d] {
            let direct = policy_value(&parts.mdp, policy);
            let via_q = policy_value_via_q(&parts.mdp, policy);
            assert!((direct - via_q).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_policies_have_unit_ratios() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let table = true_ratios(&parts.mdp, &parts.pi_d, &parts.pi_d).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                if table.support_mask[s][a] {
                    assert!((table.ratio(s, a) - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn twopath_ground_ratios_are_extreme() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let table = true_ratios(&parts.mdp, &parts.pi_e, &parts.pi_d).unwrap();
        assert!((table.ratio(1, 0) - 1.0 / 99.0).abs() < 1e-10);
        assert!((table.ratio(2, 0) - 99.0).abs() < 1e-7);
    }

    #[test]
    fn twopath_abstract_ratio_is_one() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let occ_e = abstract_occupancy(&occupancy(&parts.mdp, &parts.pi_e), &parts.phi);
        let occ_d = abstract_occupancy(&occupancy(&parts.mdp, &parts.pi_d), &parts.phi);
        let table = ratio_table(&occ_e, &occ_d).unwrap();
        let block = parts.phi.apply(1);
        assert!((table.ratio(block, 0) - 1.0).abs() < 1e-9);
        assert!((table.ratio(block, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coverage_violation_lists_offenders() {
        // pi_D never takes action 1, pi_e always does.
        let mdp = single_state(2);
        let pi_e = Policy::new(vec![vec![0.0, 1.0]]).unwrap();
        let pi_d = Policy::new(vec![vec![1.0, 0.0]]).unwrap();
        let err = true_ratios(&mdp, &pi_e, &pi_d).unwrap_err();
        assert_eq!(err, CoverageError::Uncovered(vec![(0, 1)]));
    }

    #[test]
    fn abstract_occupancy_preserves_total_and_blocks() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let occ = occupancy(&parts.mdp, &parts.pi_e);
        let abs = abstract_occupancy(&occ, &parts.phi);
        assert!((abs.total() - 1.0).abs() < 1e-10);
        let block = parts.phi.apply(1);
        assert!((abs.mass(block, 0) - (occ.mass(1, 0) + occ.mass(2, 0))).abs() < 1e-15);
        // Identity projection is a no-op.
        let same = abstract_occupancy(&occ, &AbstractionMap::identity(4));
        assert_eq!(same.dist, occ.dist);
    }

    #[test]
    fn equal_policies_have_zero_ratio_variance() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let occ = occupancy(&parts.mdp, &parts.pi_d);
        let var = ratio_variance(&occ, &occ).unwrap();
        assert!(var.abs() < 1e-12);
    }

    #[test]
    fn abstraction_reduces_twopath_ratio_variance() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let occ_e = occupancy(&parts.mdp, &parts.pi_e);
        let occ_d = occupancy(&parts.mdp, &parts.pi_d);
        let ground = ratio_variance(&occ_e, &occ_d).unwrap();
        let abstracted = ratio_variance(
            &abstract_occupancy(&occ_e, &parts.phi),
            &abstract_occupancy(&occ_d, &parts.phi),
        )
        .unwrap();
        assert!(abstracted < ground);
        // Identity abstraction keeps the variance unchanged.
        let identity = ratio_variance(
            &abstract_occupancy(&occ_e, &AbstractionMap::identity(4)),
            &abstract_occupancy(&occ_d, &AbstractionMap::identity(4)),
        )
        .unwrap();
        assert!((identity - ground).abs() < 1e-14);
    }

    #[test]
    fn deterministic_rollouts_have_zero_covariance() {
        // Deterministic chain and deterministic policies: no randomness at all.
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.0, 1.0]],
                vec![vec![0.0, 1.0]],
            ],
            vec![vec![1.0], vec![0.5]],
            vec![1.0, 0.0],
            0.9,
        )
        .unwrap();
        let pi = Policy::uniform(2, 1);
        let cov = per_step_covariance(&mdp, &pi, &pi, 4, 100, 3).unwrap();
        for row in &cov {
            for &c in row {
                assert!(c.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_diagonal_is_per_step_variance() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let cov = per_step_covariance(&parts.mdp, &parts.pi_e, &parts.pi_d, 3, 20_000, 5).unwrap();
        // Only step t=1 carries reward; its variance is Var(zeta at the
        // visited branch) under pi_D.
        let z1: f64 = 1.0 / 99.0;
        let z2: f64 = 99.0;
        let mean = 0.99 * z1 + 0.01 * z2;
        let expected = 0.99 * z1 * z1 + 0.01 * z2 * z2 - mean * mean;
        // The sample variance of this heavy-tailed two-point law fluctuates
        // with sd ~ sqrt((mu4 - var^2) / n).
        let mu4 = 0.99 * (z1 - mean).powi(4) + 0.01 * (z2 - mean).powi(4);
        let sd = ((mu4 - expected * expected) / 20_000.0_f64).sqrt();
        assert!(
            (cov[1][1] - expected).abs() < 5.0 * sd,
            "cov={} expected={} sd={}",
            cov[1][1],
            expected,
            sd
        );
        assert!(cov[0][0].abs() < 1e-12);
    }
}
