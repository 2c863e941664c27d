//! Seeded random MDP families for the theorem property batteries.
//!
//! Instances are deliberately full-support (transitions, initial distribution
//! and policies all strictly positive) so that coverage holds and every
//! occupancy-ratio quantity is well defined. Rewards are equalized within the
//! partition blocks so the reward-equality assumption holds by construction.

use crate::abstraction::AbstractionMap;
use crate::mdp::{Policy, TabularMdp};
use crate::occupancy::solve_dense;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{DMatrix, DVector};

/// One random instance: a reward-equal partition plus a full-support policy
/// pair on a full-support MDP.
#[derive(Debug, Clone)]
pub struct TheoremInstance {
    pub mdp: TabularMdp,
    pub phi: AbstractionMap,
    pub pi_e: Policy,
    pub pi_d: Policy,
}

/// Strictly positive probability row of length `n`.
fn random_prob_row(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    // Exponential draws normalized to one keep every entry positive.
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// Random full-support MDP with rewards in [0, 1].
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, rng: &mut impl Rng) -> TabularMdp {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| random_prob_row(n_states, rng)).collect())
        .collect();
    let mean_reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    let initial_dist = random_prob_row(n_states, rng);
    TabularMdp::new(transition, mean_reward, initial_dist, gamma)
        .expect("randomly generated MDP satisfies the invariants")
}

/// Random full-support policy.
pub fn random_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> Policy {
    Policy {
        action_probs: (0..n_states).map(|_| random_prob_row(n_actions, rng)).collect(),
    }
}

/// Random surjective partition of `n_states` into `n_abstract` blocks.
pub fn random_partition(n_states: usize, n_abstract: usize, rng: &mut impl Rng) -> AbstractionMap {
    assert!(n_abstract >= 1 && n_abstract <= n_states);
    // Give each block one state first, then scatter the rest.
    let mut states: Vec<usize> = (0..n_states).collect();
    for i in (1..n_states).rev() {
        let j = rng.random_range(0..=i);
        states.swap(i, j);
    }
    let mut map = vec![0usize; n_states];
    for (i, &s) in states.iter().enumerate() {
        map[s] = if i < n_abstract { i } else { rng.random_range(0..n_abstract) };
    }
    AbstractionMap::new(map).expect("constructed partition is surjective")
}

/// Forces reward equality within each block by copying the block
/// representative's reward row.
pub fn equalize_rewards(mdp: &mut TabularMdp, phi: &AbstractionMap) {
    for block in phi.blocks() {
        let rep = block[0];
        let row = mdp.mean_reward[rep].clone();
        for &s in &block {
            mdp.mean_reward[s] = row.clone();
        }
    }
}

/// Replaces `d0` with the stationary distribution of the chain induced by
/// `policy`. With a stationary start, `d_t` is constant in `t`, so the
/// discounted occupancy equals the horizon-uniform sample law exactly for
/// every discount and horizon; datasets then realize the i.i.d. `d_D` premise.
pub fn with_stationary_start(mdp: &TabularMdp, policy: &Policy) -> TabularMdp {
    let n = mdp.n_states;
    // Solve pi^T (P - I) = 0 with the normalization sum(pi) = 1 by replacing
    // one equation; full-support chains have a unique stationary law.
    let mut a = DMatrix::from_fn(n, n, |sp, s| {
        let p: f64 =
            (0..mdp.n_actions).map(|act| policy.prob(s, act) * mdp.p(s, act, sp)).sum();
        p - if s == sp { 1.0 } else { 0.0 }
    });
    let mut b = DVector::zeros(n);
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = solve_dense(a, b);
    let mut out = mdp.clone();
    out.initial_dist = pi.iter().copied().collect();
    // Clamp solver noise; renormalize exactly.
    for p in &mut out.initial_dist {
        *p = p.max(0.0);
    }
    let total: f64 = out.initial_dist.iter().sum();
    for p in &mut out.initial_dist {
        *p /= total;
    }
    out
}

/// Standard instance used by the theorem batteries: up to `max_states` states
/// (at least 2), up to `max_actions` actions, a random reward-equal partition
/// and two full-support policies.
pub fn random_instance(
    seed: u64,
    index: u64,
    max_states: usize,
    max_actions: usize,
) -> TheoremInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let n_states = rng.random_range(2..=max_states);
    let n_actions = rng.random_range(1..=max_actions);
    let gamma = 0.5 + 0.45 * rng.random::<f64>();
    let mut mdp = random_mdp(n_states, n_actions, gamma, &mut rng);
    let n_abstract = rng.random_range(1..=n_states);
    let phi = random_partition(n_states, n_abstract, &mut rng);
    equalize_rewards(&mut mdp, &phi);
    let pi_e = random_policy(n_states, n_actions, &mut rng);
    let pi_d = random_policy(n_states, n_actions, &mut rng);
    TheoremInstance { mdp, phi, pi_e, pi_d }
}

/// A bisimilar instance: a random base MDP whose states are split into twin
/// copies with identical outgoing behavior. Merging the twins satisfies reward
/// equality and transition similarity exactly; `pi_e` treats twins alike
/// (action equality holds) while `pi_d` differs across twins, so the
/// occupancy weightings `w_e` and `w_d` genuinely differ.
pub fn twin_instance(seed: u64, index: u64, base_states: usize, n_actions: usize) -> TheoremInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7177_696e);
    rng.set_stream(index);
    let gamma = 0.5 + 0.45 * rng.random::<f64>();
    let base = random_mdp(base_states, n_actions, gamma, &mut rng);
    let copies: Vec<usize> = (0..base_states).map(|_| rng.random_range(1..=3)).collect();
    let offsets: Vec<usize> = copies
        .iter()
        .scan(0, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect();
    let n_ground: usize = copies.iter().sum();

    // Incoming probability is split across twins at random; outgoing rows,
    // rewards and pi_e rows are shared within a twin family.
    let mut transition = vec![vec![vec![0.0; n_ground]; n_actions]; n_ground];
    let mut mean_reward = vec![vec![0.0; n_actions]; n_ground];
    let mut initial_dist = vec![0.0; n_ground];
    let mut map = vec![0usize; n_ground];
    let mut pi_e_rows = vec![vec![0.0; n_actions]; n_ground];
    let mut pi_d_rows = vec![vec![0.0; n_actions]; n_ground];

    let splits: Vec<Vec<f64>> = copies.iter().map(|&c| random_prob_row(c, &mut rng)).collect();
    let base_pi_e = random_policy(base_states, n_actions, &mut rng);
    for b in 0..base_states {
        let d0_split = random_prob_row(copies[b], &mut rng);
        for k in 0..copies[b] {
            let g = offsets[b] + k;
            map[g] = b;
            initial_dist[g] = base.initial_dist[b] * d0_split[k];
            mean_reward[g] = base.mean_reward[b].clone();
            pi_e_rows[g] = base_pi_e.action_probs[b].clone();
            pi_d_rows[g] = random_prob_row(n_actions, &mut rng);
            for a in 0..n_actions {
                for bp in 0..base_states {
                    for kp in 0..copies[bp] {
                        transition[g][a][offsets[bp] + kp] = base.p(b, a, bp) * splits[bp][kp];
                    }
                }
            }
        }
    }
    let mdp = TabularMdp::new(transition, mean_reward, initial_dist, gamma)
        .expect("twin expansion preserves the invariants");
    TheoremInstance {
        mdp,
        phi: AbstractionMap::new(map).expect("twin partition is surjective"),
        pi_e: Policy { action_probs: pi_e_rows },
        pi_d: Policy { action_probs: pi_d_rows },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{
        check_action_equality, check_reward_equality, check_transition_similarity, ASSUMPTION_TOL,
    };
    use crate::occupancy::{horizon_frequency, occupancy};

    #[test]
    fn random_instances_are_valid_and_reward_equal() {
        for i in 0..25 {
            let inst = random_instance(42, i, 12, 4);
            assert!(inst.mdp.validate().is_empty());
            inst.pi_e.validate().unwrap();
            inst.pi_d.validate().unwrap();
            assert!(check_reward_equality(&inst.mdp, &inst.phi, ASSUMPTION_TOL).holds);
        }
    }

    #[test]
    fn instances_are_seed_deterministic() {
        let a = random_instance(7, 3, 10, 3);
        let b = random_instance(7, 3, 10, 3);
        assert_eq!(a.mdp, b.mdp);
        assert_eq!(a.pi_e, b.pi_e);
        assert_eq!(a.phi.as_slice(), b.phi.as_slice());
    }

    #[test]
    fn twin_instances_satisfy_all_three_assumptions() {
        for i in 0..10 {
            let inst = twin_instance(11, i, 4, 3);
            assert!(check_reward_equality(&inst.mdp, &inst.phi, 1e-12).holds);
            assert!(check_transition_similarity(&inst.mdp, &inst.phi, 1e-12).holds);
            assert!(check_action_equality(&inst.pi_e, &inst.phi, 1e-12).holds);
        }
    }

    #[test]
    fn stationary_start_freezes_the_state_law() {
        let inst = random_instance(3, 0, 6, 3);
        let mdp = with_stationary_start(&inst.mdp, &inst.pi_d);
        let occ = occupancy(&mdp, &inst.pi_d);
        let freq = horizon_frequency(&mdp, &inst.pi_d, 50);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                assert!((occ.mass(s, a) - freq.mass(s, a)).abs() < 1e-9);
            }
        }
    }
}
