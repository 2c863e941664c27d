//! The TwoPath benchmark MDP and its assumption-violating variants.
//!
//! The baseline layout: from `s0` action `a0` leads to `s1` and `a1` to `s2`;
//! both paths fall into an absorbing terminal state. `s1` and `s2` pay reward
//! 1 for every action and are merged by the abstraction. The evaluation and
//! behavior policies are mirror images (0.01 / 0.99 at `s0`, uniform
//! elsewhere), which makes the ground ratios at `(s1, a0)` and `(s2, a0)`
//! roughly 0.01 and 99 while the merged-block ratio is exactly 1, and gives
//! both policies the same value.

use crate::abstraction::AbstractionMap;
use crate::mdp::{Policy, TabularMdp};
use serde::{Deserialize, Serialize};

/// Which TwoPath instance to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoPathVariant {
    /// All three abstraction assumptions hold.
    #[default]
    Baseline,
    /// Transition dynamics similarity violated: `s2`'s `a0`-transition becomes
    /// a self-loop, so the block-level next-state distributions of the merged
    /// states differ.
    TransitionViolated,
    /// Evaluation-policy action equality violated: `pi_e` takes opposite
    /// deterministic actions at `s1` and `s2`. Dynamics stay at baseline.
    ActionEqualityViolated,
    /// Both perturbations at once.
    BothViolated,
}

impl TwoPathVariant {
    pub const ALL: [TwoPathVariant; 4] = [
        TwoPathVariant::Baseline,
        TwoPathVariant::TransitionViolated,
        TwoPathVariant::ActionEqualityViolated,
        TwoPathVariant::BothViolated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TwoPathVariant::Baseline => "baseline",
            TwoPathVariant::TransitionViolated => "transition_violated",
            TwoPathVariant::ActionEqualityViolated => "action_equality_violated",
            TwoPathVariant::BothViolated => "both_violated",
        }
    }

    /// Whether this variant perturbs the block transition dynamics.
    pub fn violates_transitions(self) -> bool {
        matches!(self, TwoPathVariant::TransitionViolated | TwoPathVariant::BothViolated)
    }

    /// Whether this variant perturbs `pi_e`'s within-block action split.
    pub fn violates_action_equality(self) -> bool {
        matches!(self, TwoPathVariant::ActionEqualityViolated | TwoPathVariant::BothViolated)
    }
}

/// Everything a TwoPath experiment needs: the MDP, both policies and the
/// merging abstraction.
#[derive(Debug, Clone)]
pub struct TwoPathParts {
    pub mdp: TabularMdp,
    pub pi_e: Policy,
    pub pi_d: Policy,
    pub phi: AbstractionMap,
    pub variant: TwoPathVariant,
}

/// State indices of the baseline layout.
pub const S0: usize = 0;
pub const S1: usize = 1;
pub const S2: usize = 2;
pub const S_ABS: usize = 3;

/// Discount used by the tabular benchmark experiments.
pub const TWOPATH_GAMMA: f64 = 0.999;

/// Builds the requested TwoPath variant.
pub fn build_twopath(variant: TwoPathVariant) -> TwoPathParts {
    let det = |target: usize| -> Vec<f64> {
        let mut row = vec![0.0; 4];
        row[target] = 1.0;
        row
    };
    // Rows are [a0, a1] per state.
    let mut transition = vec![
        vec![det(S1), det(S2)],
        vec![det(S_ABS), det(S_ABS)],
        vec![det(S_ABS), det(S_ABS)],
        vec![det(S_ABS), det(S_ABS)],
    ];
    match variant {
        // Block-level destinations now differ between s1 and s2 under a0.
        TwoPathVariant::TransitionViolated => transition[S2][0] = det(S2),
        // Same perturbation with s2's two actions switched, so the self-loop
        // sits on the action the perturbed pi_e favors at s2.
        TwoPathVariant::BothViolated => transition[S2][1] = det(S2),
        _ => {}
    }
    let mean_reward = vec![
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    ];
    let initial_dist = vec![1.0, 0.0, 0.0, 0.0];
    let mdp = TabularMdp::new(transition, mean_reward, initial_dist, TWOPATH_GAMMA)
        .expect("twopath construction is valid")
        .with_names(vec!["s0".into(), "s1".into(), "s2".into(), "s_abs".into()]);

    let mut pi_e_rows = vec![
        vec![0.01, 0.99],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
    ];
    if variant.violates_action_equality() {
        pi_e_rows[S1] = vec![1.0, 0.0];
        pi_e_rows[S2] = vec![0.0, 1.0];
    }
    let pi_e = Policy::new(pi_e_rows).expect("pi_e rows are stochastic");
    let pi_d = Policy::new(vec![
        vec![0.99, 0.01],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
        vec![0.5, 0.5],
    ])
    .expect("pi_d rows are stochastic");

    let phi = AbstractionMap::new(vec![0, 1, 1, 2]).expect("twopath partition is surjective");

    TwoPathParts { mdp, pi_e, pi_d, phi, variant }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{
        check_action_equality, check_reward_equality, check_transition_similarity, ASSUMPTION_TOL,
    };

    #[test]
    fn baseline_is_valid_and_deterministic_paths() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        assert!(parts.mdp.validate().is_empty());
        assert_eq!(parts.mdp.p(S0, 0, S1), 1.0);
        assert_eq!(parts.mdp.p(S0, 1, S2), 1.0);
        assert_eq!(parts.mdp.p(S_ABS, 0, S_ABS), 1.0);
    }

    #[test]
    fn every_variant_is_a_valid_mdp() {
        for variant in TwoPathVariant::ALL {
            let parts = build_twopath(variant);
            assert!(parts.mdp.validate().is_empty(), "{variant:?}");
            parts.pi_e.validate().unwrap();
            parts.pi_d.validate().unwrap();
        }
    }

    #[test]
    fn all_variants_keep_reward_equality() {
        for variant in TwoPathVariant::ALL {
            let parts = build_twopath(variant);
            assert!(
                check_reward_equality(&parts.mdp, &parts.phi, ASSUMPTION_TOL).holds,
                "{variant:?}"
            );
        }
    }

    #[test]
    fn variants_fail_exactly_their_named_checks() {
        for variant in TwoPathVariant::ALL {
            let parts = build_twopath(variant);
            let trans = check_transition_similarity(&parts.mdp, &parts.phi, ASSUMPTION_TOL);
            let act = check_action_equality(&parts.pi_e, &parts.phi, ASSUMPTION_TOL);
            assert_eq!(trans.holds, !variant.violates_transitions(), "{variant:?}");
            assert_eq!(act.holds, !variant.violates_action_equality(), "{variant:?}");
        }
    }

    #[test]
    fn behavior_policy_action_equality_always_holds() {
        // Action equality constrains pi_e only; pi_d stays uniform on the
        // block in every variant.
        for variant in TwoPathVariant::ALL {
            let parts = build_twopath(variant);
            assert!(check_action_equality(&parts.pi_d, &parts.phi, ASSUMPTION_TOL).holds);
        }
    }
}
