//! The theorem property battery: exact checks of the variance inequality, the
//! value-preservation proposition, the abstract-expectation lemma, the
//! normalization identities and the weighting-invariance properties, over
//! seeded random MDP families.

use ope_abstract::abstraction::{
    build_abstract_mdp, build_abstract_policy, weights_from_policy, AbstractionMap,
    WeightingFunction,
};
use ope_abstract::family::{random_instance, twin_instance};
use ope_abstract::occupancy::{
    abstract_occupancy, occupancy, policy_value, policy_value_via_q, ratio_table, ratio_variance,
    OccupancyMeasure,
};
use ope_abstract::rng::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Result of one property over the whole instance family.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub property: String,
    pub holds: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub n_instances: usize,
}

/// Violations measured on one instance, reduced by max across the family.
#[derive(Debug, Clone, Copy, Default)]
struct InstanceViolations {
    variance_inequality: f64,
    identity_tie: f64,
    blockratio_tie: f64,
    equal_policy_tie: f64,
    proposition1: f64,
    expectation_lemma: f64,
    normalization: f64,
    dual_value: f64,
}

impl InstanceViolations {
    fn max(self, other: Self) -> Self {
        InstanceViolations {
            variance_inequality: self.variance_inequality.max(other.variance_inequality),
            identity_tie: self.identity_tie.max(other.identity_tie),
            blockratio_tie: self.blockratio_tie.max(other.blockratio_tie),
            equal_policy_tie: self.equal_policy_tie.max(other.equal_policy_tie),
            proposition1: self.proposition1.max(other.proposition1),
            expectation_lemma: self.expectation_lemma.max(other.expectation_lemma),
            normalization: self.normalization.max(other.normalization),
            dual_value: self.dual_value.max(other.dual_value),
        }
    }
}

fn check_instance(seed: u64, index: u64) -> InstanceViolations {
    let inst = random_instance(seed, index, 12, 4);
    let mut v = InstanceViolations::default();

    let occ_e = occupancy(&inst.mdp, &inst.pi_e);
    let occ_d = occupancy(&inst.mdp, &inst.pi_d);
    let abs_e = abstract_occupancy(&occ_e, &inst.phi);
    let abs_d = abstract_occupancy(&occ_d, &inst.phi);

    // The variance inequality: abstraction never increases ratio variance.
    let var_ground = ratio_variance(&occ_e, &occ_d).expect("full support");
    let var_abs = ratio_variance(&abs_e, &abs_d).expect("full support");
    v.variance_inequality = var_abs - var_ground;

    // Equality case 1: the identity abstraction ties exactly.
    let identity = AbstractionMap::identity(inst.mdp.n_states);
    let var_id = ratio_variance(
        &abstract_occupancy(&occ_e, &identity),
        &abstract_occupancy(&occ_d, &identity),
    )
    .expect("full support");
    v.identity_tie = (var_id - var_ground).abs();

    // Equality case 2: when within-block per-action ratios coincide, the
    // variances tie. Build such a pair synthetically from occ_d: give every
    // (block, action) cell a constant ratio, then renormalize.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index ^ 0x5eed));
    let mut synth = occ_d.dist.clone();
    for block in inst.phi.blocks() {
        for a in 0..inst.mdp.n_actions {
            let c = 0.25 + 1.5 * rng.random::<f64>();
            for &s in &block {
                synth[s][a] = c * occ_d.dist[s][a];
            }
        }
    }
    let total: f64 = synth.iter().flatten().sum();
    for row in &mut synth {
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    let occ_synth = OccupancyMeasure { dist: synth, gamma: occ_d.gamma };
    let var_g_synth = ratio_variance(&occ_synth, &occ_d).expect("same support");
    let var_a_synth = ratio_variance(
        &abstract_occupancy(&occ_synth, &inst.phi),
        &abstract_occupancy(&occ_d, &inst.phi),
    )
    .expect("same support");
    v.blockratio_tie = (var_a_synth - var_g_synth).abs();

    // Equality case 2, degenerate form: identical policies give ratio 1.
    let var_self = ratio_variance(&occ_d, &occ_d).expect("same support");
    let var_self_abs = ratio_variance(&abs_d, &abs_d).expect("same support");
    v.equal_policy_tie = (var_self_abs - var_self).abs().max(var_self.abs());

    // Value preservation under w_pi. The
    // abstract value is the projected occupancy (block sums, with the
    // w_pi-lifted policy factoring it exactly) against the abstract reward;
    // reward equality makes R^phi weighting-free.
    for (pi, abs_occ) in [(&inst.pi_e, &abs_e), (&inst.pi_d, &abs_d)] {
        let w = weights_from_policy(&inst.mdp, pi, &inst.phi);
        let abs_mdp = build_abstract_mdp(&inst.mdp, &inst.phi, &w).expect("valid weighting");
        let rho_ground = policy_value(&inst.mdp, pi);
        let rho_abs: f64 = (0..inst.phi.n_abstract())
            .map(|x| {
                (0..inst.mdp.n_actions)
                    .map(|a| abs_occ.mass(x, a) * abs_mdp.mdp.reward(x, a))
                    .sum::<f64>()
            })
            .sum();
        v.proposition1 = v.proposition1.max((rho_ground - rho_abs).abs());
    }

    // Expectation transport: E over the abstract pair of f equals E over the ground pair of
    // f(phi(s), a), via both the block-sum route and the factored
    // (marginal x lifted policy) route.
    let w_e = weights_from_policy(&inst.mdp, &inst.pi_e, &inst.phi);
    let lifted_e = build_abstract_policy(&inst.pi_e, &inst.phi, &w_e).expect("valid weighting");
    let abs_marginal = abs_e.state_marginal();
    for _ in 0..5 {
        let f: Vec<Vec<f64>> = (0..inst.phi.n_abstract())
            .map(|_| (0..inst.mdp.n_actions).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect())
            .collect();
        let ground_side: f64 = (0..inst.mdp.n_states)
            .map(|s| {
                (0..inst.mdp.n_actions)
                    .map(|a| occ_e.mass(s, a) * f[inst.phi.apply(s)][a])
                    .sum::<f64>()
            })
            .sum();
        let block_sum_side: f64 = (0..inst.phi.n_abstract())
            .map(|x| (0..inst.mdp.n_actions).map(|a| abs_e.mass(x, a) * f[x][a]).sum::<f64>())
            .sum();
        let factored_side: f64 = (0..inst.phi.n_abstract())
            .map(|x| {
                (0..inst.mdp.n_actions)
                    .map(|a| abs_marginal[x] * lifted_e.prob(x, a) * f[x][a])
                    .sum::<f64>()
            })
            .sum();
        v.expectation_lemma = v
            .expectation_lemma
            .max((ground_side - block_sum_side).abs())
            .max((ground_side - factored_side).abs());
    }

    // Normalization: occupancies sum to one, ratios have unit mean under d_D.
    v.normalization = (occ_e.total() - 1.0)
        .abs()
        .max((occ_d.total() - 1.0).abs())
        .max((abs_e.total() - 1.0).abs());
    let ratios = ratio_table(&occ_e, &occ_d).expect("full support");
    let ratio_mean: f64 = (0..inst.mdp.n_states)
        .map(|s| {
            (0..inst.mdp.n_actions).map(|a| occ_d.mass(s, a) * ratios.ratio(s, a)).sum::<f64>()
        })
        .sum();
    v.normalization = v.normalization.max((ratio_mean - 1.0).abs());

    // Two independent routes to the policy value.
    for pi in [&inst.pi_e, &inst.pi_d] {
        v.dual_value = v
            .dual_value
            .max((policy_value(&inst.mdp, pi) - policy_value_via_q(&inst.mdp, pi)).abs());
    }

    v
}

/// Max deviation of abstract dynamics/policy across weightings on one
/// bisimilar (twin-expanded) instance, where transition similarity and action
/// equality hold exactly.
fn check_twin_instance(seed: u64, index: u64) -> (f64, f64) {
    let inst = twin_instance(seed, index, 4, 3);
    let w_e = weights_from_policy(&inst.mdp, &inst.pi_e, &inst.phi);
    let w_d = weights_from_policy(&inst.mdp, &inst.pi_d, &inst.phi);
    let w_u = WeightingFunction::uniform(&inst.phi);
    let builds: Vec<_> = [&w_e, &w_d, &w_u]
        .iter()
        .map(|w| {
            (
                build_abstract_mdp(&inst.mdp, &inst.phi, w).expect("valid weighting"),
                build_abstract_policy(&inst.pi_e, &inst.phi, w).expect("valid weighting"),
            )
        })
        .collect();
    let mut gap: f64 = 0.0;
    let (base_mdp, base_pi) = &builds[0];
    for (other_mdp, other_pi) in &builds[1..] {
        for x in 0..base_mdp.mdp.n_states {
            for a in 0..base_mdp.mdp.n_actions {
                gap = gap.max((base_pi.prob(x, a) - other_pi.prob(x, a)).abs());
                for y in 0..base_mdp.mdp.n_states {
                    gap = gap
                        .max((base_mdp.mdp.p(x, a, y) - other_mdp.mdp.p(x, a, y)).abs());
                }
            }
        }
    }
    // Under transition similarity the abstract chain itself reproduces the
    // ground value: executing the lifted policy in the built MDP is exact.
    let mut chain_gap: f64 = 0.0;
    for pi in [&inst.pi_e, &inst.pi_d] {
        let w = weights_from_policy(&inst.mdp, pi, &inst.phi);
        let abs_mdp = build_abstract_mdp(&inst.mdp, &inst.phi, &w).expect("valid weighting");
        let abs_pi = build_abstract_policy(pi, &inst.phi, &w).expect("valid weighting");
        chain_gap = chain_gap
            .max((policy_value(&inst.mdp, pi) - policy_value(&abs_mdp.mdp, &abs_pi)).abs());
    }
    (gap, chain_gap)
}

/// Runs every property over `n_instances` seeded instances (plus
/// `n_instances / 10 + 1` twin instances for the weighting-invariance checks)
/// and reports one row per property.
pub fn run_theorem_battery(seed: u64, n_instances: usize) -> Vec<PropertyResult> {
    assert!(n_instances >= 1);
    let worst = (0..n_instances as u64)
        .into_par_iter()
        .map(|i| check_instance(seed, i))
        .reduce(InstanceViolations::default, InstanceViolations::max);
    let n_twins = n_instances / 10 + 1;
    let (twin_gap, twin_chain_gap) = (0..n_twins as u64)
        .into_par_iter()
        .map(|i| check_twin_instance(seed, i))
        .reduce(|| (0.0_f64, 0.0_f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));

    let row = |property: &str, violation: f64, tol: f64, n: usize| PropertyResult {
        property: property.to_string(),
        holds: violation <= tol,
        max_violation: violation,
        tolerance: tol,
        n_instances: n,
    };
    vec![
        row("variance_inequality", worst.variance_inequality, 1e-10, n_instances),
        row("variance_tie_identity_map", worst.identity_tie, 1e-14, n_instances),
        row("variance_tie_equal_block_ratios", worst.blockratio_tie, 1e-12, n_instances),
        row("variance_tie_equal_policies", worst.equal_policy_tie, 1e-12, n_instances),
        row("value_preserved_under_w_pi", worst.proposition1, 1e-9, n_instances),
        row("abstract_expectation_lemma", worst.expectation_lemma, 1e-9, n_instances),
        row("normalization_identities", worst.normalization, 1e-10, n_instances),
        row("dual_value_identity", worst.dual_value, 1e-9, n_instances),
        row("weighting_invariance_bisimilar", twin_gap, 1e-10, n_twins),
        row("chain_value_equality_bisimilar", twin_chain_gap, 1e-9, n_twins),
    ]
}
