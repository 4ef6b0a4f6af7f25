//! Finite MDPs, trajectories, and seeded rollouts.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::TabularPolicy;
use crate::rng::{sample_index, substream, StreamRole};

/// Tolerance for probability normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// A finite Markov decision process with an explicit transition tensor.
///
/// `transition[s][a]` is the distribution over successor states after taking
/// action `a` in state `s`. Entering a state listed in `terminal_states` ends
/// the episode; no action is taken there, so transition rows of terminal
/// states carry no stochasticity requirement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub terminal_states: BTreeSet<usize>,
    pub max_horizon: usize,
}

impl Mdp {
    /// Validates all tables and returns the MDP.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        terminal_states: BTreeSet<usize>,
        max_horizon: usize,
    ) -> Result<Self> {
        let mdp = Mdp {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
            terminal_states,
            max_horizon,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Checks the structural invariants: row-stochastic transitions on
    /// non-terminal states, a normalized initial distribution placing no mass
    /// on terminal states, rewards in [0, 1], and a positive horizon.
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::validation("state and action counts must be positive"));
        }
        if self.max_horizon == 0 {
            return Err(Error::validation("max_horizon must be positive"));
        }
        if self.transition.len() != self.n_states
            || self.reward.len() != self.n_states
            || self.initial_dist.len() != self.n_states
        {
            return Err(Error::validation("table sizes do not match n_states"));
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions || self.reward[s].len() != self.n_actions {
                return Err(Error::validation(format!(
                    "state {s}: table sizes do not match n_actions"
                )));
            }
            for a in 0..self.n_actions {
                let row = &self.transition[s][a];
                if row.len() != self.n_states {
                    return Err(Error::validation(format!(
                        "transition[{s}][{a}] has wrong length"
                    )));
                }
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::validation(format!(
                        "transition[{s}][{a}] has entries outside [0, 1]"
                    )));
                }
                if !self.terminal_states.contains(&s) {
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > PROB_TOL {
                        return Err(Error::validation(format!(
                            "transition[{s}][{a}] sums to {sum}, expected 1"
                        )));
                    }
                }
                let r = self.reward[s][a];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::validation(format!(
                        "reward[{s}][{a}] = {r} outside [0, 1]"
                    )));
                }
            }
        }
        let init_sum: f64 = self.initial_dist.iter().sum();
        if (init_sum - 1.0).abs() > PROB_TOL {
            return Err(Error::validation(format!(
                "initial_dist sums to {init_sum}, expected 1"
            )));
        }
        if self.initial_dist.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::validation("initial_dist has entries outside [0, 1]"));
        }
        for &t in &self.terminal_states {
            if t >= self.n_states {
                return Err(Error::validation(format!("terminal state {t} out of range")));
            }
            if self.initial_dist[t] > 0.0 {
                return Err(Error::validation(format!(
                    "initial_dist places mass on terminal state {t}; episodes need at least one step"
                )));
            }
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.contains(&s)
    }

    /// Errors unless a policy has exactly this MDP's dimensions.
    pub fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::config(format!(
                "policy is {}x{} but the MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }
}

/// An ordered sequence of (state, action) steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryWire", into = "TrajectoryWire")]
pub struct Trajectory {
    steps: Vec<(usize, usize)>,
}

/// Wire format: explicit state/action index arrays.
#[derive(Serialize, Deserialize)]
struct TrajectoryWire {
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl From<Trajectory> for TrajectoryWire {
    fn from(t: Trajectory) -> Self {
        TrajectoryWire {
            states: t.steps.iter().map(|&(s, _)| s).collect(),
            actions: t.steps.iter().map(|&(_, a)| a).collect(),
        }
    }
}

impl TryFrom<TrajectoryWire> for Trajectory {
    type Error = String;

    fn try_from(w: TrajectoryWire) -> std::result::Result<Self, String> {
        if w.states.len() != w.actions.len() {
            return Err("states and actions arrays differ in length".into());
        }
        if w.states.is_empty() {
            return Err("trajectory must have at least one step".into());
        }
        Ok(Trajectory {
            steps: w.states.into_iter().zip(w.actions).collect(),
        })
    }
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::validation("trajectory must have at least one step"));
        }
        Ok(Trajectory { steps })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn initial_state(&self) -> usize {
        self.steps[0].0
    }

    /// Checks this trajectory against the MDP that generated it: index
    /// ranges, the horizon cap, and reachability of consecutive states.
    pub fn validate_against(&self, mdp: &Mdp) -> Result<()> {
        if self.len() > mdp.max_horizon {
            return Err(Error::validation(format!(
                "trajectory length {} exceeds max_horizon {}",
                self.len(),
                mdp.max_horizon
            )));
        }
        for (t, &(s, a)) in self.steps.iter().enumerate() {
            if s >= mdp.n_states || a >= mdp.n_actions {
                return Err(Error::validation(format!(
                    "step {t}: state-action ({s}, {a}) out of range"
                )));
            }
            if t + 1 < self.len() {
                let s_next = self.steps[t + 1].0;
                if mdp.transition[s][a][s_next] <= 0.0 {
                    return Err(Error::validation(format!(
                        "step {t}: transition ({s}, {a}) -> {s_next} has zero probability"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Undiscounted total reward under the given MDP.
    pub fn total_reward(&self, mdp: &Mdp) -> f64 {
        self.steps.iter().map(|&(s, a)| mdp.reward[s][a]).sum()
    }

    /// Reward of the final step; the terminal-task score for the built-in
    /// environments.
    pub fn final_reward(&self, mdp: &Mdp) -> f64 {
        let &(s, a) = self.steps.last().expect("length >= 1");
        mdp.reward[s][a]
    }
}

/// Discounted return sum_t gamma^t r(s_t, a_t).
pub fn discounted_return(traj: &Trajectory, mdp: &Mdp, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    traj.validate_against(mdp)?;
    let mut total = 0.0;
    let mut w = 1.0;
    for &(s, a) in traj.steps() {
        total += w * mdp.reward[s][a];
        w *= gamma;
    }
    Ok(total)
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::validation(format!(
            "discount factor {gamma} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Sampled trajectories plus summary statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutReport {
    pub trajectories: Vec<Trajectory>,
    pub avg_return: f64,
    pub avg_final_reward: f64,
}

/// Samples one episode; the step draws are (action, transition) in that
/// order so that streams stay aligned across calling contexts.
pub(crate) fn sample_episode<R: rand::Rng>(
    mdp: &Mdp,
    policy: &TabularPolicy,
    rng: &mut R,
    temperature_zero: bool,
    horizon: usize,
) -> Trajectory {
    let mut s = sample_index(rng, &mdp.initial_dist);
    let mut steps = Vec::new();
    while steps.len() < horizon && !mdp.is_terminal(s) {
        let a = if temperature_zero {
            policy.greedy_action(s)
        } else {
            sample_index(rng, &policy.action_probs(s))
        };
        steps.push((s, a));
        s = sample_index(rng, &mdp.transition[s][a]);
    }
    Trajectory { steps }
}

/// Rolls out `n` episodes of `policy` in `mdp`.
///
/// Episode `i` consumes its own random stream derived from `(seed, i)`, so
/// the result is identical regardless of how the loop is scheduled. With
/// `temperature_zero` the policy is followed greedily (ties broken toward the
/// lowest action index); transitions and the initial state are still sampled.
pub fn rollout(
    mdp: &Mdp,
    policy: &TabularPolicy,
    n: usize,
    seed: u64,
    temperature_zero: bool,
    gamma: f64,
) -> Result<RolloutReport> {
    if n == 0 {
        return Err(Error::validation("rollout requires n >= 1"));
    }
    check_gamma(gamma)?;
    mdp.check_policy(policy)?;
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, StreamRole::Rollout, i as u64);
            sample_episode(mdp, policy, &mut rng, temperature_zero, mdp.max_horizon)
        })
        .collect();
    Ok(summarize(trajectories, mdp, gamma))
}

pub(crate) fn summarize(trajectories: Vec<Trajectory>, mdp: &Mdp, gamma: f64) -> RolloutReport {
    let n = trajectories.len() as f64;
    let mut sum_return = 0.0;
    let mut sum_final = 0.0;
    for traj in &trajectories {
        let mut acc = 0.0;
        let mut w = 1.0;
        for &(s, a) in traj.steps() {
            acc += w * mdp.reward[s][a];
            w *= gamma;
        }
        sum_return += acc;
        sum_final += traj.final_reward(mdp);
    }
    RolloutReport {
        trajectories,
        avg_return: sum_return / n,
        avg_final_reward: sum_final / n,
    }
}
