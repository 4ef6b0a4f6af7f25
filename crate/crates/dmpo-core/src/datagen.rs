//! Preference-dataset construction: expert win trajectories, noisy and clean
//! lose trajectories, pairing, and the JSON-lines dataset format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_episode, Mdp, Trajectory};
use crate::policy::TabularPolicy;
use crate::rng::{sample_index, substream, StreamRole};

/// Per-pair attempt budget for rejection sampling.
const MAX_ATTEMPTS_PER_ITEM: usize = 2000;
/// Lose candidates tried against one win before the win is redrawn.
const LOSE_ATTEMPTS_PER_WIN: usize = 50;
/// A lose trajectory is "noisy" when it repeats one action this many times.
const NOISE_RUN_LEN: usize = 3;

/// A (win, lose) trajectory pair sharing an initial state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub win: Trajectory,
    pub lose: Trajectory,
}

impl PreferencePair {
    pub fn new(win: Trajectory, lose: Trajectory) -> Result<Self> {
        if win.initial_state() != lose.initial_state() {
            return Err(Error::validation(format!(
                "pair does not share its initial state ({} vs {})",
                win.initial_state(),
                lose.initial_state()
            )));
        }
        Ok(PreferencePair { win, lose })
    }
}

/// How lose trajectories are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Noisy,
    Clean,
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Setting::Noisy => write!(f, "noisy"),
            Setting::Clean => write!(f, "clean"),
        }
    }
}

/// Degenerate-behavior injection for the noisy setting.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Probability of repeating the previous action at each step.
    pub p_rep: f64,
    /// Probability of taking a uniformly random action at each step.
    pub p_rand: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            p_rep: 0.6,
            p_rand: 0.2,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_rep) || !(0.0..=1.0).contains(&self.p_rand) {
            return Err(Error::validation("noise probabilities must lie in [0, 1]"));
        }
        if self.p_rep + self.p_rand > 1.0 {
            return Err(Error::validation("p_rep + p_rand must not exceed 1"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.p_rep == 0.0 && self.p_rand == 0.0
    }
}

/// Sidecar description of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub setting: Setting,
    pub pairs: usize,
    /// (max lose length, pair count) per bucket, when bucketed.
    pub length_buckets: Option<Vec<(usize, usize)>>,
    pub seed: u64,
    pub env_name: String,
}

/// Discount used when solving for the expert. A mild discount makes earlier
/// task completion strictly preferable, which removes value ties that an
/// undiscounted backup leaves between acting now and acting later.
const EXPERT_DISCOUNT: f64 = 0.95;

/// Greedy policy from exact finite-horizon value iteration, ties broken
/// toward the lowest action index. Stationary, which is optimal for the
/// built-in environments where the best action does not depend on the
/// remaining budget.
pub fn expert_policy(mdp: &Mdp) -> TabularPolicy {
    let mut values = vec![0.0; mdp.n_states];
    for _ in 0..mdp.max_horizon {
        let mut next = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            if !mdp.is_terminal(s) {
                next[s] = greedy_backup(mdp, &values, s, EXPERT_DISCOUNT).1;
            }
        }
        values = next;
    }
    let logits = (0..mdp.n_states)
        .map(|s| {
            let mut row = vec![0.0; mdp.n_actions];
            if !mdp.is_terminal(s) {
                row[greedy_backup(mdp, &values, s, EXPERT_DISCOUNT).0] = 10.0;
            }
            row
        })
        .collect();
    TabularPolicy::new(logits, true).expect("finite logits")
}

fn greedy_backup(mdp: &Mdp, values: &[f64], s: usize, gamma: f64) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for a in 0..mdp.n_actions {
        let q = mdp.reward[s][a]
            + gamma
                * mdp.transition[s][a]
                    .iter()
                    .enumerate()
                    .map(|(s_next, &p)| p * values[s_next])
                    .sum::<f64>();
        if q > best.1 {
            best = (a, q);
        }
    }
    best
}

/// Expected undiscounted return of the expert policy from each state.
fn expert_expected_returns(mdp: &Mdp) -> Vec<f64> {
    let expert = expert_policy(mdp);
    let mut values = vec![0.0; mdp.n_states];
    for _ in 0..mdp.max_horizon {
        let mut next = vec![0.0; mdp.n_states];
        for s in 0..mdp.n_states {
            if mdp.is_terminal(s) {
                continue;
            }
            let a = expert.greedy_action(s);
            next[s] = mdp.reward[s][a]
                + mdp.transition[s][a]
                    .iter()
                    .enumerate()
                    .map(|(s_next, &p)| p * values[s_next])
                    .sum::<f64>();
        }
        values = next;
    }
    values
}

/// Rolls out `n` greedy trajectories of the exact optimal policy.
pub fn expert_trajectories(mdp: &Mdp, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::validation("expert_trajectories requires n >= 1"));
    }
    let expert = expert_policy(mdp);
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, StreamRole::ExpertRollout, i as u64);
            sample_episode(mdp, &expert, &mut rng, true, mdp.max_horizon)
        })
        .collect())
}

/// One noisy episode: with probability `p_rep` the previous action repeats,
/// with probability `p_rand` a uniformly random action is taken, otherwise
/// the base policy is sampled. A zero noise spec consumes exactly the same
/// draws as a plain rollout.
fn sample_noisy_episode<R: Rng>(
    mdp: &Mdp,
    base: &TabularPolicy,
    rng: &mut R,
    noise: &NoiseSpec,
    horizon: usize,
) -> Trajectory {
    if noise.is_zero() {
        return sample_episode(mdp, base, rng, false, horizon);
    }
    let mut s = sample_index(rng, &mdp.initial_dist);
    let mut steps: Vec<(usize, usize)> = Vec::new();
    let mut prev_action: Option<usize> = None;
    while steps.len() < horizon && !mdp.is_terminal(s) {
        let u: f64 = rng.random();
        let a = if u < noise.p_rep {
            match prev_action {
                Some(a) => a,
                None => sample_index(rng, &base.action_probs(s)),
            }
        } else if u < noise.p_rep + noise.p_rand {
            rng.random_range(0..mdp.n_actions)
        } else {
            sample_index(rng, &base.action_probs(s))
        };
        steps.push((s, a));
        prev_action = Some(a);
        s = sample_index(rng, &mdp.transition[s][a]);
    }
    Trajectory::new(steps).expect("horizon >= 1 and no terminal start")
}

/// Generates `n` noisy lose trajectories from the base policy.
pub fn noisy_lose_trajectories(
    mdp: &Mdp,
    base_policy: &TabularPolicy,
    n: usize,
    seed: u64,
    noise: &NoiseSpec,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::validation("noisy_lose_trajectories requires n >= 1"));
    }
    noise.validate()?;
    mdp.check_policy(base_policy)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, StreamRole::NoisyLose, i as u64);
            sample_noisy_episode(mdp, base_policy, &mut rng, noise, mdp.max_horizon)
        })
        .collect())
}

fn has_noise_run(traj: &Trajectory) -> bool {
    let mut run = 1;
    let steps = traj.steps();
    for w in steps.windows(2) {
        if w[0].1 == w[1].1 {
            run += 1;
            if run >= NOISE_RUN_LEN {
                return true;
            }
        } else {
            run = 1;
        }
    }
    false
}

/// Generates `n` clean lose trajectories: plain rollouts of the base policy
/// that contain no noisy action run and score strictly below the expert's
/// expected return from their initial state.
pub fn clean_lose_trajectories(
    mdp: &Mdp,
    base_policy: &TabularPolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::validation("clean_lose_trajectories requires n >= 1"));
    }
    mdp.check_policy(base_policy)?;
    let bars = expert_expected_returns(mdp);
    let results: Vec<Option<Trajectory>> = (0..n)
        .into_par_iter()
        .map(|i| {
            accept_clean(mdp, base_policy, seed, i as u64, |traj| {
                traj.total_reward(mdp) < bars[traj.initial_state()]
            })
        })
        .collect();
    collect_accepted(results, n)
}

/// Rejection loop shared by clean generation paths; each item gets its own
/// stream and up to `MAX_ATTEMPTS_PER_ITEM` candidates.
fn accept_clean<F: Fn(&Trajectory) -> bool>(
    mdp: &Mdp,
    base_policy: &TabularPolicy,
    seed: u64,
    item: u64,
    below_bar: F,
) -> Option<Trajectory> {
    let mut rng = substream(seed, StreamRole::CleanLose, item);
    for _ in 0..MAX_ATTEMPTS_PER_ITEM {
        let traj = sample_episode(mdp, base_policy, &mut rng, false, mdp.max_horizon);
        if !has_noise_run(&traj) && below_bar(&traj) {
            return Some(traj);
        }
    }
    None
}

fn collect_accepted(results: Vec<Option<Trajectory>>, n: usize) -> Result<Vec<Trajectory>> {
    let accepted: Vec<Trajectory> = results.into_iter().flatten().collect();
    if accepted.len() < n {
        return Err(Error::GenerationExhausted(format!(
            "accepted {} of {} requested trajectories within {} attempts each \
             (acceptance is effectively below 1%)",
            accepted.len(),
            n,
            MAX_ATTEMPTS_PER_ITEM
        )));
    }
    Ok(accepted)
}

/// Builds a preference dataset of `n_pairs` pairs.
///
/// Win trajectories come from the exact expert; lose trajectories come from
/// `base_policy` under the chosen setting. Every pair shares its initial
/// state, and in the clean setting the lose trajectory scores strictly below
/// its paired win. With `buckets`, `n_pairs` is split evenly and each
/// bucket's lose rollouts are capped at that maximum length, mirroring
/// grouping by maximum trajectory length.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    mdp: &Mdp,
    base_policy: &TabularPolicy,
    setting: Setting,
    n_pairs: usize,
    seed: u64,
    noise: &NoiseSpec,
    buckets: Option<&[usize]>,
    env_name: &str,
) -> Result<(Vec<PreferencePair>, DatasetManifest)> {
    if n_pairs == 0 {
        return Err(Error::validation("build_dataset requires n_pairs >= 1"));
    }
    noise.validate()?;
    mdp.check_policy(base_policy)?;
    if let Some(ceilings) = buckets {
        if ceilings.is_empty() {
            return Err(Error::validation("bucket list must be nonempty"));
        }
        if !n_pairs.is_multiple_of(ceilings.len()) {
            return Err(Error::validation(format!(
                "n_pairs = {n_pairs} does not divide evenly into {} buckets",
                ceilings.len()
            )));
        }
        if ceilings.contains(&0) {
            return Err(Error::validation("bucket ceilings must be >= 1"));
        }
    }

    let expert = expert_policy(mdp);
    let ceilings: Vec<Option<usize>> = match buckets {
        Some(cs) => {
            let per = n_pairs / cs.len();
            cs.iter().flat_map(|&c| vec![Some(c); per]).collect()
        }
        None => vec![None; n_pairs],
    };

    // Each pair draws its win and lose from its own streams. When no lose
    // qualifies against a win (a failed expert rollout can score the minimum
    // possible return), the win itself is redrawn.
    let results: Vec<Option<PreferencePair>> = ceilings
        .par_iter()
        .enumerate()
        .map(|(i, ceiling)| {
            let horizon = ceiling.unwrap_or(mdp.max_horizon).min(mdp.max_horizon);
            let mut win_rng = substream(seed, StreamRole::ExpertRollout, i as u64);
            let mut lose_rng = match setting {
                Setting::Noisy => substream(seed, StreamRole::NoisyLose, i as u64),
                Setting::Clean => substream(seed, StreamRole::CleanLose, i as u64),
            };
            let mut attempts = 0usize;
            while attempts < MAX_ATTEMPTS_PER_ITEM {
                let win = sample_episode(mdp, &expert, &mut win_rng, true, mdp.max_horizon);
                let bar = win.total_reward(mdp);
                for _ in 0..LOSE_ATTEMPTS_PER_WIN {
                    if attempts >= MAX_ATTEMPTS_PER_ITEM {
                        break;
                    }
                    attempts += 1;
                    let cand = match setting {
                        Setting::Noisy => {
                            sample_noisy_episode(mdp, base_policy, &mut lose_rng, noise, horizon)
                        }
                        Setting::Clean => {
                            sample_episode(mdp, base_policy, &mut lose_rng, false, horizon)
                        }
                    };
                    if cand.initial_state() != win.initial_state() {
                        continue;
                    }
                    if setting == Setting::Clean
                        && (has_noise_run(&cand) || cand.total_reward(mdp) >= bar)
                    {
                        continue;
                    }
                    return Some(PreferencePair { win, lose: cand });
                }
            }
            None
        })
        .collect();

    let pairs: Vec<PreferencePair> = results.into_iter().flatten().collect();
    if pairs.len() < n_pairs {
        return Err(Error::GenerationExhausted(format!(
            "built {} of {n_pairs} pairs within {MAX_ATTEMPTS_PER_ITEM} attempts each",
            pairs.len()
        )));
    }
    let manifest = DatasetManifest {
        setting,
        pairs: n_pairs,
        length_buckets: buckets.map(|cs| {
            let per = n_pairs / cs.len();
            cs.iter().map(|&c| (c, per)).collect()
        }),
        seed,
        env_name: env_name.to_string(),
    };
    Ok((pairs, manifest))
}

/// Writes one JSON document per pair, one per line.
pub fn save_pairs_jsonl(path: &Path, pairs: &[PreferencePair]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for pair in pairs {
        serde_json::to_writer(&mut out, pair)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_pairs_jsonl(path: &Path) -> Result<Vec<PreferencePair>> {
    let file = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, EnvSpec, CHAIN_ADVANCE};
    use crate::mdp::rollout;

    fn chain(n: usize, slip: f64, horizon: Option<usize>) -> Mdp {
        make_env(&EnvSpec::Chain {
            n_states: n,
            slip,
            max_horizon: horizon,
        })
        .unwrap()
    }

    #[test]
    fn degenerate_chain_expert_reaches_goal_in_one_step() {
        let mdp = chain(2, 0.0, None);
        let trajs = expert_trajectories(&mdp, 4, 0).unwrap();
        for t in &trajs {
            assert_eq!(t.steps(), &[(0, CHAIN_ADVANCE)]);
        }
    }

    #[test]
    fn deterministic_chain_expert_takes_the_shortest_path() {
        let mdp = chain(4, 0.0, None);
        let trajs = expert_trajectories(&mdp, 6, 1).unwrap();
        let expected: Vec<(usize, usize)> =
            (0..3).map(|s| (s, CHAIN_ADVANCE)).collect();
        for t in &trajs {
            assert_eq!(t.steps(), expected.as_slice());
        }
    }

    #[test]
    fn expert_beats_the_uniform_policy() {
        let mdp = chain(6, 0.1, None);
        let expert = expert_trajectories(&mdp, 500, 7).unwrap();
        let expert_mean: f64 =
            expert.iter().map(|t| t.total_reward(&mdp)).sum::<f64>() / 500.0;
        let uniform = rollout(&mdp, &TabularPolicy::uniform(6, 2), 500, 7, false, 0.99).unwrap();
        let uniform_mean: f64 = uniform
            .trajectories
            .iter()
            .map(|t| t.total_reward(&mdp))
            .sum::<f64>()
            / 500.0;
        assert!(expert_mean > uniform_mean);
    }

    #[test]
    fn full_repeat_noise_repeats_the_first_action() {
        let mdp = chain(5, 0.0, Some(6));
        let base = TabularPolicy::uniform(5, 2);
        let noise = NoiseSpec {
            p_rep: 1.0,
            p_rand: 0.0,
        };
        let trajs = noisy_lose_trajectories(&mdp, &base, 20, 3, &noise).unwrap();
        for t in &trajs {
            let first = t.steps()[0].1;
            assert!(t.steps().iter().all(|&(_, a)| a == first));
            assert_eq!(t.len(), 6); // the chain has no terminal state
        }
    }

    #[test]
    fn full_repeat_noise_stops_at_terminal_states() {
        // 1-wide grid: repeatedly moving down walks straight into the goal
        let mdp = make_env(&EnvSpec::Grid {
            width: 1,
            height: 5,
            slip: 0.0,
            max_horizon: Some(9),
        })
        .unwrap();
        let down_biased = TabularPolicy::new(vec![vec![0.0, 50.0, 0.0, 0.0]; 5], false).unwrap();
        let noise = NoiseSpec {
            p_rep: 1.0,
            p_rand: 0.0,
        };
        let trajs = noisy_lose_trajectories(&mdp, &down_biased, 5, 0, &noise).unwrap();
        for t in &trajs {
            assert_eq!(t.len(), 4, "stops on entering the terminal goal");
        }
    }

    #[test]
    fn zero_noise_equals_plain_rollout() {
        let mdp = chain(5, 0.2, Some(7));
        let base = TabularPolicy::new(vec![vec![0.2, 0.5]; 5], false).unwrap();
        let noise = NoiseSpec {
            p_rep: 0.0,
            p_rand: 0.0,
        };
        let noisy = noisy_lose_trajectories(&mdp, &base, 10, 9, &noise).unwrap();
        for (i, t) in noisy.iter().enumerate() {
            let mut rng = substream(9, StreamRole::NoisyLose, i as u64);
            let plain = sample_episode(&mdp, &base, &mut rng, false, mdp.max_horizon);
            assert_eq!(*t, plain);
        }
    }

    #[test]
    fn random_noise_hurts_returns() {
        let mdp = chain(10, 0.1, None);
        let base = expert_policy(&mdp);
        // expert sampled stochastically as the base, vs the same with noise
        let noise = NoiseSpec {
            p_rep: 0.0,
            p_rand: 0.5,
        };
        let noisy = noisy_lose_trajectories(&mdp, &base, 1000, 5, &noise).unwrap();
        let clean = noisy_lose_trajectories(
            &mdp,
            &base,
            1000,
            5,
            &NoiseSpec {
                p_rep: 0.0,
                p_rand: 0.0,
            },
        )
        .unwrap();
        let mean = |ts: &[Trajectory]| -> f64 {
            ts.iter().map(|t| t.total_reward(&mdp)).sum::<f64>() / ts.len() as f64
        };
        assert!(mean(&noisy) < mean(&clean));
    }

    #[test]
    fn clean_generation_exhausts_when_base_is_the_expert_on_deterministic_env() {
        let mdp = chain(3, 0.0, Some(2));
        // logit gap large enough that the softmax is exactly (0, 1)
        let base = TabularPolicy::new(vec![vec![0.0, 1000.0]; 3], false).unwrap();
        let result = clean_lose_trajectories(&mdp, &base, 3, 0);
        assert!(matches!(result, Err(Error::GenerationExhausted(_))));
    }

    #[test]
    fn clean_losers_score_below_the_expert_bar_on_shop() {
        let mdp = make_env(&EnvSpec::Shop {
            depth: 2,
            branching: 2,
            reward_seed: 3,
        })
        .unwrap();
        let base = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
        let losers = clean_lose_trajectories(&mdp, &base, 20, 4).unwrap();
        let bars = expert_expected_returns(&mdp);
        for t in &losers {
            assert!(t.total_reward(&mdp) < bars[t.initial_state()]);
        }
    }

    #[test]
    fn clean_generation_is_reproducible() {
        let mdp = chain(6, 0.1, None);
        let base = TabularPolicy::new(vec![vec![0.0, 0.8]; 6], false).unwrap();
        let a = clean_lose_trajectories(&mdp, &base, 12, 21).unwrap();
        let b = clean_lose_trajectories(&mdp, &base, 12, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_pairs_share_initial_states_and_order_cleanly() {
        let mdp = chain(8, 0.1, None);
        let base = TabularPolicy::new(vec![vec![0.0, 0.7]; 8], false).unwrap();
        let (pairs, manifest) = build_dataset(
            &mdp,
            &base,
            Setting::Clean,
            24,
            13,
            &NoiseSpec::default(),
            None,
            "chain",
        )
        .unwrap();
        assert_eq!(pairs.len(), 24);
        assert_eq!(manifest.pairs, 24);
        assert_eq!(manifest.length_buckets, None);
        for p in &pairs {
            assert_eq!(p.win.initial_state(), p.lose.initial_state());
            assert!(p.lose.total_reward(&mdp) < p.win.total_reward(&mdp));
        }
    }

    #[test]
    fn bucketed_dataset_respects_ceilings_and_counts() {
        let mdp = chain(10, 0.1, Some(12));
        let base = TabularPolicy::new(vec![vec![0.0, 0.5]; 10], false).unwrap();
        let (pairs, manifest) = build_dataset(
            &mdp,
            &base,
            Setting::Noisy,
            30,
            2,
            &NoiseSpec::default(),
            Some(&[4, 8, 12]),
            "chain",
        )
        .unwrap();
        assert_eq!(pairs.len(), 30);
        let buckets = manifest.length_buckets.unwrap();
        assert_eq!(buckets, vec![(4, 10), (8, 10), (12, 10)]);
        for (i, p) in pairs.iter().enumerate() {
            let ceiling = buckets[i / 10].0;
            assert!(p.lose.len() <= ceiling, "pair {i} exceeds bucket ceiling");
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let mdp = chain(5, 0.1, None);
        let base = TabularPolicy::uniform(5, 2);
        let (pairs, manifest) = build_dataset(
            &mdp,
            &base,
            Setting::Noisy,
            6,
            0,
            &NoiseSpec::default(),
            None,
            "chain",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("dataset.jsonl");
        let manifest_path = dir.path().join("manifest.json");
        save_pairs_jsonl(&data_path, &pairs).unwrap();
        save_manifest(&manifest_path, &manifest).unwrap();
        assert_eq!(load_pairs_jsonl(&data_path).unwrap(), pairs);
        assert_eq!(load_manifest(&manifest_path).unwrap(), manifest);
        assert_eq!(load_pairs_jsonl(&data_path).unwrap().len(), manifest.pairs);
    }

    #[test]
    fn generation_is_a_pure_function_of_its_inputs() {
        let mdp = chain(7, 0.15, None);
        let base = TabularPolicy::new(vec![vec![0.1, 0.6]; 7], false).unwrap();
        let make = || {
            build_dataset(
                &mdp,
                &base,
                Setting::Noisy,
                10,
                99,
                &NoiseSpec::default(),
                None,
                "chain",
            )
            .unwrap()
        };
        let (pairs_a, manifest_a) = make();
        let (pairs_b, manifest_b) = make();
        assert_eq!(
            serde_json::to_string(&pairs_a).unwrap(),
            serde_json::to_string(&pairs_b).unwrap()
        );
        assert_eq!(manifest_a, manifest_b);
    }
}
