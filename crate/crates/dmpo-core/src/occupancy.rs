//! State-action occupancy measures: exact forward-DP computation, Monte-Carlo
//! estimation, the closed-form optimum of the KL-tilted objective, and the
//! reward recovered from an occupancy ratio.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{check_gamma, sample_episode, Mdp, Trajectory};
use crate::policy::TabularPolicy;
use crate::rng::{substream, StreamRole};

/// Normalization tolerance for occupancy measures.
pub const SAOM_TOL: f64 = 1e-10;

/// A discounted state-action occupancy measure: a probability distribution
/// over (state, action) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Saom {
    /// d(s, a), indexed [state][action].
    pub d: Vec<Vec<f64>>,
    /// Horizon used in the normalization coefficient.
    pub horizon: usize,
    /// Discount factor used.
    pub gamma: f64,
}

impl Saom {
    /// Checks nonnegativity and normalization within `SAOM_TOL`.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for row in &self.d {
            for &v in row {
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::validation(format!("occupancy entry {v} invalid")));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > SAOM_TOL {
            return Err(Error::validation(format!(
                "occupancy sums to {total}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.d.len()
    }

    pub fn n_actions(&self) -> usize {
        self.d.first().map_or(0, |r| r.len())
    }

    pub fn total(&self) -> f64 {
        self.d.iter().flat_map(|r| r.iter()).sum()
    }

    /// The conditional policy pi(a|s) proportional to d(s, a); rows with no
    /// mass fall back to uniform.
    pub fn conditional_policy(&self) -> TabularPolicy {
        let n_actions = self.n_actions();
        let logits = self
            .d
            .iter()
            .map(|row| {
                let mass: f64 = row.iter().sum();
                if mass <= 0.0 {
                    vec![0.0; n_actions]
                } else {
                    // log of the conditional, with a floor for empty actions
                    row.iter()
                        .map(|&v| if v > 0.0 { (v / mass).ln() } else { -1e6 })
                        .collect()
                }
            })
            .collect();
        TabularPolicy::new(logits, false).expect("finite logits")
    }
}

fn check_dims(mdp: &Mdp, saom: &Saom, what: &str) -> Result<()> {
    if saom.n_states() != mdp.n_states || saom.n_actions() != mdp.n_actions {
        return Err(Error::config(format!(
            "{what} is {}x{} but the MDP is {}x{}",
            saom.n_states(),
            saom.n_actions(),
            mdp.n_states,
            mdp.n_actions
        )));
    }
    Ok(())
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::validation("horizon must be >= 1"));
    }
    Ok(())
}

/// Exact occupancy measure of `policy` in `mdp` by forward dynamic
/// programming over `horizon` steps.
///
/// Step distributions are p_0(s, a) = P(s0 = s) pi(a|s) and
/// p_{t+1}(s', a') = sum_{s,a} p_t(s, a) P(s'|s, a) pi(a'|s'), with terminal
/// states absorbing no further mass (episodes stop on entry, so no action is
/// taken there). The discounted sums are divided by the realized discounted
/// visitation mass; when no episode can end before `horizon` this equals the
/// closed-form coefficient (1-gamma)/(1-gamma^T), and the result is a
/// probability distribution in every case.
pub fn saom_exact(mdp: &Mdp, policy: &TabularPolicy, horizon: usize, gamma: f64) -> Result<Saom> {
    check_horizon(horizon)?;
    check_gamma(gamma)?;
    mdp.check_policy(policy)?;

    let probs: Vec<Vec<f64>> = (0..mdp.n_states).map(|s| policy.action_probs(s)).collect();
    let mut acc = vec![vec![0.0; mdp.n_actions]; mdp.n_states];

    // state marginal of episodes still running at step t
    let mut state_mass: Vec<f64> = (0..mdp.n_states)
        .map(|s| if mdp.is_terminal(s) { 0.0 } else { mdp.initial_dist[s] })
        .collect();
    let mut w = 1.0;
    for _t in 0..horizon {
        let mut next = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            let m = state_mass[s];
            if m <= 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                let pa = m * probs[s][a];
                if pa <= 0.0 {
                    continue;
                }
                acc[s][a] += w * pa;
                for (s_next, &p) in mdp.transition[s][a].iter().enumerate() {
                    if p > 0.0 && !mdp.is_terminal(s_next) {
                        next[s_next] += pa * p;
                    }
                }
            }
        }
        state_mass = next;
        w *= gamma;
    }

    normalize_measure(acc, horizon, gamma)
}

fn normalize_measure(mut acc: Vec<Vec<f64>>, horizon: usize, gamma: f64) -> Result<Saom> {
    let total: f64 = acc.iter().flat_map(|r| r.iter()).sum();
    if total <= 0.0 {
        return Err(Error::validation("occupancy has no mass"));
    }
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let saom = Saom {
        d: acc,
        horizon,
        gamma,
    };
    saom.validate()?;
    Ok(saom)
}

/// Monte-Carlo estimate of the occupancy measure from `n` seeded rollouts,
/// normalized the same way as [`saom_exact`] so the estimator is consistent.
pub fn saom_monte_carlo(
    mdp: &Mdp,
    policy: &TabularPolicy,
    horizon: usize,
    gamma: f64,
    n: usize,
    seed: u64,
) -> Result<Saom> {
    check_horizon(horizon)?;
    check_gamma(gamma)?;
    mdp.check_policy(policy)?;
    if n == 0 {
        return Err(Error::validation("saom_monte_carlo requires n >= 1"));
    }
    // Sample in parallel but accumulate in index order so the float sums are
    // identical regardless of scheduling.
    let episodes: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, StreamRole::Rollout, i as u64);
            sample_episode(mdp, policy, &mut rng, false, horizon)
        })
        .collect();
    let mut acc = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    for traj in &episodes {
        let mut w = 1.0;
        for &(s, a) in traj.steps() {
            acc[s][a] += w;
            w *= gamma;
        }
    }
    normalize_measure(acc, horizon, gamma)
}

/// The closed-form optimizer of the KL-tilted objective together with its
/// partition function and objective value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaomSolution {
    pub d_star: Saom,
    pub partition_z: f64,
    pub objective_value: f64,
}

/// Maximizes E_d[r] - beta KL(d || d_ref) over all distributions on (s, a).
///
/// The optimum is d*(s, a) = d_ref(s, a) exp(r(s, a)/beta) / Z with the
/// single scalar normalizer Z = sum d_ref exp(r/beta). Pairs outside the
/// reference support keep zero mass.
pub fn optimal_saom(mdp: &Mdp, ref_saom: &Saom, beta: f64) -> Result<SaomSolution> {
    if beta <= 0.0 {
        return Err(Error::validation(format!("beta = {beta} must be > 0")));
    }
    check_dims(mdp, ref_saom, "reference occupancy")?;
    ref_saom.validate()?;

    // log-sum-exp over the tilted measure for a stable Z
    let mut max_exponent = f64::NEG_INFINITY;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            if ref_saom.d[s][a] > 0.0 {
                max_exponent = max_exponent.max(mdp.reward[s][a] / beta);
            }
        }
    }
    let mut tilted = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut tilted_total = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let d_ref = ref_saom.d[s][a];
            if d_ref > 0.0 {
                let v = d_ref * (mdp.reward[s][a] / beta - max_exponent).exp();
                tilted[s][a] = v;
                tilted_total += v;
            }
        }
    }
    let log_z = max_exponent + tilted_total.ln();
    for row in &mut tilted {
        for v in row.iter_mut() {
            *v /= tilted_total;
        }
    }
    let d_star = Saom {
        d: tilted,
        horizon: ref_saom.horizon,
        gamma: ref_saom.gamma,
    };
    d_star.validate()?;

    // objective evaluated literally at the optimum: E_d*[r] - beta KL(d*||d_ref)
    let objective_value = tilted_objective(mdp, &d_star, ref_saom, beta)?;

    Ok(SaomSolution {
        d_star,
        partition_z: log_z.exp(),
        objective_value,
    })
}

/// E_d[r] - beta KL(d || d_ref) for an arbitrary distribution d on (s, a).
pub fn tilted_objective(mdp: &Mdp, d: &Saom, ref_saom: &Saom, beta: f64) -> Result<f64> {
    check_dims(mdp, d, "occupancy")?;
    check_dims(mdp, ref_saom, "reference occupancy")?;
    let mut value = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let p = d.d[s][a];
            if p <= 0.0 {
                continue;
            }
            let q = ref_saom.d[s][a];
            if q <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "d({s}, {a}) > 0 outside the reference support"
                )));
            }
            value += p * mdp.reward[s][a] - beta * p * (p / q).ln();
        }
    }
    Ok(value)
}

/// Recovers the reward table from an occupancy ratio:
/// r(s, a) = beta log(d*(s, a) / d_ref(s, a)) + beta log Z.
///
/// Entries where both measures are zero are outside the support and are
/// returned as NaN; mass on exactly one side is a support mismatch.
pub fn implied_reward(
    d_star: &Saom,
    ref_saom: &Saom,
    beta: f64,
    partition_z: f64,
) -> Result<Vec<Vec<f64>>> {
    if beta <= 0.0 {
        return Err(Error::validation(format!("beta = {beta} must be > 0")));
    }
    if partition_z.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::validation(format!(
            "partition_z = {partition_z} must be > 0"
        )));
    }
    if d_star.n_states() != ref_saom.n_states() || d_star.n_actions() != ref_saom.n_actions() {
        return Err(Error::config("occupancy dimensions differ"));
    }
    let log_z = partition_z.ln();
    let mut reward = vec![vec![f64::NAN; d_star.n_actions()]; d_star.n_states()];
    for s in 0..d_star.n_states() {
        for a in 0..d_star.n_actions() {
            let num = d_star.d[s][a];
            let den = ref_saom.d[s][a];
            match (num > 0.0, den > 0.0) {
                (true, true) => reward[s][a] = beta * (num / den).ln() + beta * log_z,
                (false, false) => {} // outside the support, stays NaN
                _ => {
                    return Err(Error::SupportMismatch(format!(
                        "({s}, {a}): occupancy {num} against reference {den}"
                    )))
                }
            }
        }
    }
    Ok(reward)
}

/// Fraction of steps whose (state, action) pair never appears in the expert
/// trajectories: the off-expert-support rate.
pub fn compounding_error(traj: &Trajectory, expert_trajs: &[Trajectory]) -> Result<f64> {
    if expert_trajs.is_empty() {
        return Err(Error::validation("expert trajectory set is empty"));
    }
    let support: BTreeSet<(usize, usize)> = expert_trajs
        .iter()
        .flat_map(|t| t.steps().iter().copied())
        .collect();
    let off = traj
        .steps()
        .iter()
        .filter(|step| !support.contains(step))
        .count();
    Ok(off as f64 / traj.len() as f64)
}

/// Diagnostic: how far the measure is from one realizable by a policy.
///
/// Projects the measure to its conditional policy, recomputes that policy's
/// exact occupancy, and reports the max-abs entry gap. Zero means the measure
/// is exactly realized by its own conditional policy; the closed-form optimum
/// of the tilted objective generally is not, which is reported, not enforced.
pub fn realizability_gap(mdp: &Mdp, saom: &Saom) -> Result<f64> {
    check_dims(mdp, saom, "occupancy")?;
    let policy = saom.conditional_policy();
    let realized = saom_exact(mdp, &policy, saom.horizon, saom.gamma)?;
    let mut gap = 0.0_f64;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            gap = gap.max((saom.d[s][a] - realized.d[s][a]).abs());
        }
    }
    Ok(gap)
}
