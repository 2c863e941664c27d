//! Trajectory sampling, offline datasets and their abstract projections.
//!
//! Datasets are `m` trajectories of fixed length `T`, stored flat in
//! trajectory-major order. Every sampling routine takes an explicit seed and is
//! bit-reproducible; the generator is ChaCha8 so the same seed produces the
//! same data on every platform.

use crate::abstraction::AbstractionMap;
use crate::mdp::{Policy, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

/// One `(s, a, r, s')` tuple plus its position within the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub is_trajectory_start: bool,
    /// Timestep within the trajectory, `0 <= timestep < T`.
    pub timestep: usize,
}

/// How step rewards are drawn. The estimator theory works with mean rewards
/// throughout, so the deterministic mean is the default; the Bernoulli hook
/// exists for sensitivity checks on domains with rewards in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardModel {
    #[default]
    DeterministicMean,
    /// Draws `r in {0, 1}` with `P(r = 1) = r(s, a)`; requires rewards in [0, 1].
    Bernoulli,
}

/// An offline dataset of `m` trajectories, each of length `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Flat transition list, trajectory-major: entry `j*horizon + t` is step
    /// `t` of trajectory `j`.
    pub transitions: Vec<Transition>,
    /// Number of trajectories (the batch size `m`).
    pub batch_size: usize,
    /// Trajectory length `T`.
    pub horizon: usize,
    /// The start state of each trajectory (samples of `d0`), one per trajectory.
    pub start_states: Vec<usize>,
}

/// A dataset projected into the abstract state space. State ids are abstract;
/// actions, rewards and ordering are untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractDataset {
    pub transitions: Vec<Transition>,
    pub batch_size: usize,
    pub horizon: usize,
    pub start_states: Vec<usize>,
    /// The abstraction used for the projection.
    pub source_map: AbstractionMap,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("state id {0} appears in the dataset but is not mapped by the abstraction")]
    UnmappedState(usize),
}

/// Sidecar header written next to JSONL datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub gamma: f64,
    pub domain: String,
    pub seed: u64,
}

/// Draws an index from a probability row using a single uniform variate.
/// Cumulative scan keeps the draw portable and branch-predictable.
pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    // Guard against cumulative rounding; the row sums to 1 within 1e-12.
    probs.len() - 1
}

fn sample_trajectory_into(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    reward_model: RewardModel,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Transition>,
) -> usize {
    let start = sample_index(&mdp.initial_dist, rng);
    let mut state = start;
    for t in 0..horizon {
        let action = sample_index(policy.row(state), rng);
        let mean = mdp.reward(state, action);
        let reward = match reward_model {
            RewardModel::DeterministicMean => mean,
            RewardModel::Bernoulli => {
                debug_assert!((0.0..=1.0).contains(&mean));
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let next_state = sample_index(&mdp.transition[state][action], rng);
        out.push(Transition {
            state,
            action,
            reward,
            next_state,
            is_trajectory_start: t == 0,
            timestep: t,
        });
        state = next_state;
    }
    start
}

/// Samples one trajectory of `horizon` transitions. `s0 ~ d0`,
/// `a_t ~ pi(.|s_t)`, `s_{t+1} ~ P(.|s_t, a_t)`; rewards are the deterministic
/// means. Deterministic given the seed.
pub fn sample_trajectory(
    mdp: &TabularMdp,
    policy: &Policy,
    horizon: usize,
    seed: u64,
) -> Vec<Transition> {
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(horizon);
    sample_trajectory_into(mdp, policy, horizon, RewardModel::DeterministicMean, &mut rng, &mut out);
    out
}

/// Generates `m` independent trajectories of length `horizon` under the
/// behavior policy. Reproducible per seed.
pub fn generate_dataset(
    mdp: &TabularMdp,
    behavior: &Policy,
    m: usize,
    horizon: usize,
    seed: u64,
) -> Dataset {
    generate_dataset_with(mdp, behavior, m, horizon, seed, RewardModel::DeterministicMean)
}

/// [`generate_dataset`] with an explicit reward model.
pub fn generate_dataset_with(
    mdp: &TabularMdp,
    behavior: &Policy,
    m: usize,
    horizon: usize,
    seed: u64,
    reward_model: RewardModel,
) -> Dataset {
    assert!(m >= 1, "batch size must be at least 1");
    assert!(horizon >= 1, "horizon must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(m * horizon);
    let mut start_states = Vec::with_capacity(m);
    for _ in 0..m {
        let start = sample_trajectory_into(mdp, behavior, horizon, reward_model, &mut rng, &mut transitions);
        start_states.push(start);
    }
    Dataset { transitions, batch_size: m, horizon, start_states }
}

/// Projects every transition through the abstraction:
/// `(s, a, r, s') -> (phi(s), a, r, phi(s'))`, preserving order.
pub fn project_dataset(
    dataset: &Dataset,
    phi: &AbstractionMap,
) -> Result<AbstractDataset, DatasetError> {
    let map = |s: usize| -> Result<usize, DatasetError> {
        phi.try_apply(s).ok_or(DatasetError::UnmappedState(s))
    };
    let mut transitions = Vec::with_capacity(dataset.transitions.len());
    for tr in &dataset.transitions {
        transitions.push(Transition {
            state: map(tr.state)?,
            next_state: map(tr.next_state)?,
            ..*tr
        });
    }
    let start_states = dataset
        .start_states
        .iter()
        .map(|&s| map(s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AbstractDataset {
        transitions,
        batch_size: dataset.batch_size,
        horizon: dataset.horizon,
        start_states,
        source_map: phi.clone(),
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks the shape and chaining invariants: `m * T` transitions, one
    /// start state per trajectory, timesteps below the horizon, and each
    /// step's next state equal to the following step's state.
    pub fn validate(&self) -> Result<(), String> {
        if self.transitions.len() != self.batch_size * self.horizon {
            return Err(format!(
                "expected {} transitions, found {}",
                self.batch_size * self.horizon,
                self.transitions.len()
            ));
        }
        if self.start_states.len() != self.batch_size {
            return Err(format!(
                "expected {} start states, found {}",
                self.batch_size,
                self.start_states.len()
            ));
        }
        for j in 0..self.batch_size {
            for t in 0..self.horizon {
                let tr = &self.transitions[j * self.horizon + t];
                if tr.timestep != t {
                    return Err(format!("trajectory {j} step {t} has timestep {}", tr.timestep));
                }
                if tr.is_trajectory_start != (t == 0) {
                    return Err(format!("trajectory {j} step {t} has a bad start flag"));
                }
                if t == 0 {
                    if tr.state != self.start_states[j] {
                        return Err(format!("trajectory {j} does not begin at its start state"));
                    }
                } else if self.transitions[j * self.horizon + t - 1].next_state != tr.state {
                    return Err(format!("trajectory {j} breaks chaining at step {t}"));
                }
            }
        }
        Ok(())
    }

    /// Writes one JSON object per line: `{"s", "a", "r", "sp", "t", "traj"}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, tr) in self.transitions.iter().enumerate() {
            let traj = i / self.horizon;
            writeln!(
                w,
                "{{\"s\":{},\"a\":{},\"r\":{},\"sp\":{},\"t\":{},\"traj\":{}}}",
                tr.state, tr.action, tr.reward, tr.next_state, tr.timestep, traj
            )?;
        }
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write_jsonl`] together with its
    /// header.
    pub fn read_jsonl<R: BufRead>(r: R, header: &DatasetHeader) -> std::io::Result<Dataset> {
        #[derive(Deserialize)]
        struct Row {
            s: usize,
            a: usize,
            r: f64,
            sp: usize,
            t: usize,
        }
        let mut transitions = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            transitions.push(Transition {
                state: row.s,
                action: row.a,
                reward: row.r,
                next_state: row.sp,
                is_trajectory_start: row.t == 0,
                timestep: row.t,
            });
        }
        let start_states = transitions
            .iter()
            .filter(|tr| tr.is_trajectory_start)
            .map(|tr| tr.state)
            .collect();
        let dataset = Dataset {
            transitions,
            batch_size: header.m,
            horizon: header.horizon,
            start_states,
        };
        dataset
            .validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(dataset)
    }
}

impl AbstractDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twopath::{build_twopath, TwoPathVariant};

    fn self_loop_mdp() -> TabularMdp {
        TabularMdp::new(
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![1.0, 0.0]],
            vec![1.0],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn self_loop_trajectory_stays_at_state_zero() {
        let mdp = self_loop_mdp();
        let policy = Policy::uniform(1, 2);
        let traj = sample_trajectory(&mdp, &policy, 3, 1);
        assert_eq!(traj.len(), 3);
        assert!(traj.iter().all(|tr| tr.state == 0 && tr.next_state == 0));
        assert!(traj[0].is_trajectory_start);
        assert_eq!(traj[2].timestep, 2);
    }

    #[test]
    fn twopath_down_action_visits_s0_s2_abs() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        // pi(a1|s0) = 1 routes through s2; uniform elsewhere.
        let policy = Policy::new(vec![
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let traj = sample_trajectory(&parts.mdp, &policy, 3, 42);
        assert_eq!(traj[0].state, 0);
        assert_eq!(traj[1].state, 2);
        assert_eq!(traj[2].state, 3);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let a = sample_trajectory(&parts.mdp, &parts.pi_d, 7, 9);
        let b = sample_trajectory(&parts.mdp, &parts.pi_d, 7, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_shape_contract() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 2, 5, 3);
        assert_eq!(data.transitions.len(), 10);
        assert_eq!(data.start_states.len(), 2);
        // Chaining within each trajectory.
        for j in 0..2 {
            for t in 0..4 {
                assert_eq!(
                    data.transitions[j * 5 + t].next_state,
                    data.transitions[j * 5 + t + 1].state
                );
            }
        }
    }

    #[test]
    fn seed_change_same_shape_different_data() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let a = generate_dataset(&parts.mdp, &parts.pi_d, 20, 5, 1);
        let b = generate_dataset(&parts.mdp, &parts.pi_d, 20, 5, 2);
        assert_eq!(a.len(), b.len());
        assert_ne!(a.transitions, b.transitions);
    }

    #[test]
    fn identity_projection_is_identity() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 3, 4, 5);
        let phi = AbstractionMap::identity(4);
        let projected = project_dataset(&data, &phi).unwrap();
        assert_eq!(projected.transitions, data.transitions);
        assert_eq!(projected.start_states, data.start_states);
    }

    #[test]
    fn twopath_projection_merges_s1_s2() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 50, 3, 11);
        let projected = project_dataset(&data, &parts.phi).unwrap();
        let merged = parts.phi.apply(1);
        assert_eq!(merged, parts.phi.apply(2));
        for (raw, proj) in data.transitions.iter().zip(&projected.transitions) {
            if raw.state == 1 || raw.state == 2 {
                assert_eq!(proj.state, merged);
            }
            assert_eq!(raw.action, proj.action);
            assert_eq!(raw.reward, proj.reward);
        }
    }

    #[test]
    fn projection_rejects_unmapped_state() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 1, 3, 5);
        let phi = AbstractionMap::identity(2); // too small: s2/s3 unmapped
        let err = project_dataset(&data, &phi).unwrap_err();
        assert!(matches!(err, DatasetError::UnmappedState(_)));
    }

    #[test]
    fn empty_dataset_projects_to_empty() {
        let empty = Dataset { transitions: vec![], batch_size: 0, horizon: 1, start_states: vec![] };
        let projected = project_dataset(&empty, &AbstractionMap::identity(2)).unwrap();
        assert!(projected.is_empty());
    }

    #[test]
    fn bernoulli_rewards_preserve_mean() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let det = generate_dataset(&parts.mdp, &parts.pi_d, 200, 3, 5);
        let stoch =
            generate_dataset_with(&parts.mdp, &parts.pi_d, 200, 3, 5, RewardModel::Bernoulli);
        // TwoPath rewards are already 0/1, so the Bernoulli draw is exact.
        let sum_det: f64 = det.transitions.iter().map(|t| t.reward).sum();
        let sum_stoch: f64 = stoch.transitions.iter().map(|t| t.reward).sum();
        assert_eq!(sum_det, sum_stoch);
    }

    #[test]
    fn validate_accepts_generated_and_rejects_broken_data() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 4, 6, 2);
        data.validate().unwrap();
        let mut broken = data.clone();
        broken.transitions[1].state = 3; // breaks chaining inside trajectory 0
        assert!(broken.validate().unwrap_err().contains("chaining"));
        let mut short = data.clone();
        short.transitions.pop();
        assert!(short.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let parts = build_twopath(TwoPathVariant::Baseline);
        let data = generate_dataset(&parts.mdp, &parts.pi_d, 4, 3, 8);
        let mut buf = Vec::new();
        data.write_jsonl(&mut buf).unwrap();
        let header = DatasetHeader {
            m: 4,
            horizon: 3,
            gamma: parts.mdp.discount,
            domain: "twopath".into(),
            seed: 8,
        };
        let back = Dataset::read_jsonl(buf.as_slice(), &header).unwrap();
        assert_eq!(back, data);
    }
}
