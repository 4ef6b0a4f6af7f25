//! Deterministic gradient-descent training loops, per-epoch evaluation, and
//! the sweep experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{build_dataset, NoiseSpec, PreferencePair, Setting};
use crate::error::{Error, Result};
use crate::losses::{preference_grad, preference_loss, sft_grad, sft_loss, LossKind, TrainConfig};
use crate::mdp::{sample_episode, Mdp, Trajectory};
use crate::occupancy::compounding_error;
use crate::policy::TabularPolicy;
use crate::rng::{shuffle_indices, substream, StreamRole};

/// Per-epoch training and evaluation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss: f64,
    pub avg_reward: f64,
    pub avg_final_reward: f64,
    pub compounding_error: f64,
    pub pair_weight: f64,
}

/// How policies are evaluated between epochs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Number of evaluation rollouts per epoch.
    pub rollouts: usize,
    /// Greedy decoding when true; sampled actions otherwise. Greedy matches
    /// the benchmark convention, sampling exposes graded policy quality.
    pub temperature_zero: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            rollouts: 64,
            temperature_zero: true,
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    /// Setting name (gamma sweep) or loss kind (length sweep).
    pub label: String,
    /// Discount factor or bucket ceiling.
    pub gamma_or_bucket: f64,
    pub seed: u64,
    pub avg_final_reward: f64,
}

/// Evaluates a policy by seeded rollouts; the evaluation stream is disjoint
/// from every training stream and identical across epochs.
fn evaluate(
    mdp: &Mdp,
    policy: &TabularPolicy,
    expert_support: &[Trajectory],
    gamma: f64,
    seed: u64,
    eval: &EvalSettings,
) -> Result<(f64, f64, f64)> {
    let episodes: Vec<Trajectory> = (0..eval.rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, StreamRole::Evaluation, i as u64);
            sample_episode(mdp, policy, &mut rng, eval.temperature_zero, mdp.max_horizon)
        })
        .collect();
    let n = episodes.len() as f64;
    let mut sum_return = 0.0;
    let mut sum_final = 0.0;
    let mut sum_off = 0.0;
    for traj in &episodes {
        let mut acc = 0.0;
        let mut w = 1.0;
        for &(s, a) in traj.steps() {
            acc += w * mdp.reward[s][a];
            w *= gamma;
        }
        sum_return += acc;
        sum_final += traj.final_reward(mdp);
        sum_off += compounding_error(traj, expert_support)?;
    }
    Ok((sum_return / n, sum_final / n, sum_off / n))
}

/// Supervised fine-tuning: full-batch gradient descent on the expert
/// negative log-likelihood, starting from the uniform policy.
pub fn train_sft(
    mdp: &Mdp,
    expert: &[Trajectory],
    cfg: &TrainConfig,
    eval: &EvalSettings,
) -> Result<(TabularPolicy, Vec<MetricsRecord>)> {
    cfg.validate()?;
    if expert.is_empty() {
        return Err(Error::validation("expert trajectory set is empty"));
    }
    for traj in expert {
        traj.validate_against(mdp)?;
    }
    let mut policy = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let grad = sft_grad(expert, &policy)?;
        policy.apply_step(&grad, -cfg.learning_rate)?;
        let report = sft_loss(expert, &policy)?;
        let (avg_reward, avg_final_reward, off_support) =
            evaluate(mdp, &policy, expert, cfg.gamma, cfg.seed, eval)?;
        metrics.push(MetricsRecord {
            epoch,
            loss: report.value,
            avg_reward,
            avg_final_reward,
            compounding_error: off_support,
            pair_weight: report.pair_weight,
        });
    }
    Ok((policy, metrics))
}

/// Preference training (DMPO or trajectory-DPO): deterministic mini-batch
/// gradient descent starting from a copy of the frozen reference.
pub fn train_preference(
    mdp: &Mdp,
    dataset: &[PreferencePair],
    reference: &TabularPolicy,
    cfg: &TrainConfig,
    eval: &EvalSettings,
) -> Result<(TabularPolicy, Vec<MetricsRecord>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("preference dataset is empty"));
    }
    if !reference.frozen() {
        return Err(Error::config("the reference policy must be frozen"));
    }
    if cfg.loss_kind == LossKind::Sft {
        return Err(Error::config("train_preference requires loss_kind dmpo or dpo_traj"));
    }
    mdp.check_policy(reference)?;
    for pair in dataset {
        pair.win.validate_against(mdp)?;
        pair.lose.validate_against(mdp)?;
    }
    let expert_support: Vec<Trajectory> = dataset.iter().map(|p| p.win.clone()).collect();

    let mut policy = reference.thawed_copy();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut scratch: Vec<PreferencePair> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        let mut order_rng = substream(cfg.seed, StreamRole::BatchShuffle, epoch as u64);
        let order = shuffle_indices(&mut order_rng, dataset.len());
        for chunk in order.chunks(cfg.batch_size) {
            scratch.clear();
            scratch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let grad = preference_grad(&scratch, &policy, reference, cfg)?;
            policy.apply_step(&grad, -cfg.learning_rate)?;
        }
        let report = preference_loss(dataset, &policy, reference, cfg)?;
        let (avg_reward, avg_final_reward, off_support) =
            evaluate(mdp, &policy, &expert_support, cfg.gamma, cfg.seed, eval)?;
        metrics.push(MetricsRecord {
            epoch,
            loss: report.value,
            avg_reward,
            avg_final_reward,
            compounding_error: off_support,
            pair_weight: report.pair_weight,
        });
    }
    Ok((policy, metrics))
}

fn final_reward_of_run(
    mdp: &Mdp,
    dataset: &[PreferencePair],
    reference: &TabularPolicy,
    cfg: &TrainConfig,
    eval: &EvalSettings,
) -> Result<f64> {
    let (_, metrics) = train_preference(mdp, dataset, reference, cfg, eval)?;
    metrics
        .last()
        .map(|m| m.avg_final_reward)
        .ok_or_else(|| Error::validation("sweeps need at least one epoch"))
}

/// Trains one policy per (setting, gamma, seed) cell and tabulates the final
/// evaluation reward. Cells run in parallel; the table order is fixed:
/// setting-major, then gamma, then seed.
#[allow(clippy::too_many_arguments)]
pub fn gamma_sweep(
    mdp: &Mdp,
    noisy: &[PreferencePair],
    clean: &[PreferencePair],
    reference: &TabularPolicy,
    cfg: &TrainConfig,
    gammas: &[f64],
    seeds: &[u64],
    eval: &EvalSettings,
) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() || seeds.is_empty() {
        return Err(Error::validation("gamma sweep needs gammas and seeds"));
    }
    let mut cells = Vec::new();
    for (label, dataset) in [("noisy", noisy), ("clean", clean)] {
        for &gamma in gammas {
            for &seed in seeds {
                cells.push((label, dataset, gamma, seed));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(label, dataset, gamma, seed)| {
            let cell_cfg = TrainConfig {
                gamma,
                seed,
                ..cfg.clone()
            };
            Ok(SweepRow {
                label: label.to_string(),
                gamma_or_bucket: gamma,
                seed,
                avg_final_reward: final_reward_of_run(mdp, dataset, reference, &cell_cfg, eval)?,
            })
        })
        .collect()
}

/// For each lose-length bucket, builds a noisy dataset capped at that length
/// and trains both DMPO and trajectory-DPO on it. Table order is loss-kind
/// major, then bucket, then seed.
#[allow(clippy::too_many_arguments)]
pub fn length_sweep(
    mdp: &Mdp,
    base_policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
    buckets: &[usize],
    pairs_per_bucket: usize,
    noise: &NoiseSpec,
    seeds: &[u64],
    eval: &EvalSettings,
) -> Result<Vec<SweepRow>> {
    if buckets.len() < 2 {
        return Err(Error::validation("length sweep needs at least 2 buckets"));
    }
    if pairs_per_bucket == 0 || seeds.is_empty() {
        return Err(Error::validation("length sweep needs pairs and seeds"));
    }
    // one bucketed dataset per seed, shared by both losses
    let datasets: Vec<Vec<Vec<PreferencePair>>> = seeds
        .par_iter()
        .map(|&seed| {
            let (pairs, _) = build_dataset(
                mdp,
                base_policy,
                Setting::Noisy,
                pairs_per_bucket * buckets.len(),
                seed,
                noise,
                Some(buckets),
                "sweep",
            )?;
            Ok(pairs
                .chunks(pairs_per_bucket)
                .map(|c| c.to_vec())
                .collect::<Vec<_>>())
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for kind in [LossKind::Dmpo, LossKind::DpoTraj] {
        for (b, &bucket) in buckets.iter().enumerate() {
            for (i, &seed) in seeds.iter().enumerate() {
                cells.push((kind, bucket, b, seed, i));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(kind, bucket, b, seed, i)| {
            let cell_cfg = TrainConfig {
                loss_kind: kind,
                seed,
                ..cfg.clone()
            };
            Ok(SweepRow {
                label: kind.to_string(),
                gamma_or_bucket: bucket as f64,
                seed,
                avg_final_reward: final_reward_of_run(
                    mdp,
                    &datasets[i][b],
                    reference,
                    &cell_cfg,
                    eval,
                )?,
            })
        })
        .collect()
}

/// Metrics CSV with the stable header.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out =
        String::from("epoch,loss,avg_reward,avg_final_reward,compounding_error,pair_weight\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.loss, r.avg_reward, r.avg_final_reward, r.compounding_error, r.pair_weight
        ));
    }
    out
}

/// Sweep CSV with the stable header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("setting/loss_kind,gamma_or_bucket,seed,avg_final_reward\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label, r.gamma_or_bucket, r.seed, r.avg_final_reward
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, EnvSpec, CHAIN_ADVANCE};
    use crate::datagen::expert_trajectories;
    use crate::losses::traj_score;

    fn chain(n: usize, slip: f64, horizon: Option<usize>) -> Mdp {
        make_env(&EnvSpec::Chain {
            n_states: n,
            slip,
            max_horizon: horizon,
        })
        .unwrap()
    }

    fn small_cfg(kind: LossKind, epochs: usize) -> TrainConfig {
        TrainConfig {
            beta: 0.1,
            gamma: 0.5,
            learning_rate: 0.1,
            epochs,
            batch_size: 16,
            seed: 5,
            loss_kind: kind,
        }
    }

    fn quick_eval() -> EvalSettings {
        EvalSettings {
            rollouts: 16,
            temperature_zero: true,
        }
    }

    #[test]
    fn sft_learns_a_single_expert_pair() {
        let mdp = Mdp {
            n_states: 1,
            n_actions: 3,
            transition: vec![vec![vec![1.0]; 3]],
            reward: vec![vec![0.0, 1.0, 0.0]],
            initial_dist: vec![1.0],
            terminal_states: Default::default(),
            max_horizon: 2,
        };
        let expert = vec![Trajectory::new(vec![(0, 1)]).unwrap()];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            ..small_cfg(LossKind::Sft, 1500)
        };
        let (policy, metrics) = train_sft(&mdp, &expert, &cfg, &quick_eval()).unwrap();
        assert!(policy.action_probs(0)[1] > 0.99);
        assert_eq!(metrics.len(), 1500);
        for w in metrics.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12, "loss increased");
        }
    }

    #[test]
    fn sft_matches_expert_actions_on_visited_states() {
        let mdp = chain(10, 0.0, None);
        let expert = expert_trajectories(&mdp, 50, 3).unwrap();
        let cfg = small_cfg(LossKind::Sft, 300);
        let (policy, _) = train_sft(&mdp, &expert, &cfg, &quick_eval()).unwrap();
        let visited: std::collections::BTreeSet<usize> =
            expert.iter().flat_map(|t| t.steps().iter().map(|&(s, _)| s)).collect();
        for &s in &visited {
            assert_eq!(policy.greedy_action(s), CHAIN_ADVANCE, "state {s}");
        }
    }

    #[test]
    fn zero_epochs_returns_the_reference() {
        let mdp = chain(5, 0.1, None);
        let expert = expert_trajectories(&mdp, 10, 0).unwrap();
        let reference = TabularPolicy::new(vec![vec![0.3, 0.6]; 5], true).unwrap();
        let dataset: Vec<PreferencePair> = expert
            .iter()
            .map(|w| {
                PreferencePair::new(w.clone(), Trajectory::new(vec![(0, 0), (0, 0)]).unwrap())
                    .unwrap()
            })
            .collect();
        let cfg = small_cfg(LossKind::Dmpo, 0);
        let (policy, metrics) =
            train_preference(&mdp, &dataset, &reference, &cfg, &quick_eval()).unwrap();
        assert_eq!(policy.logits(), reference.logits());
        assert!(metrics.is_empty());
    }

    #[test]
    fn training_pushes_win_scores_above_lose_scores() {
        let mdp = chain(6, 0.1, Some(8));
        let expert = expert_trajectories(&mdp, 30, 1).unwrap();
        let sft_cfg = small_cfg(LossKind::Sft, 150);
        let (sft_policy, _) = train_sft(&mdp, &expert, &sft_cfg, &quick_eval()).unwrap();
        let reference = sft_policy.frozen_copy();
        let (pairs, _) = build_dataset(
            &mdp,
            &sft_policy,
            Setting::Noisy,
            20,
            7,
            &NoiseSpec::default(),
            None,
            "chain",
        )
        .unwrap();
        let cfg = small_cfg(LossKind::Dmpo, 60);
        let (policy, _) = train_preference(&mdp, &pairs, &reference, &cfg, &quick_eval()).unwrap();
        let mut margin = 0.0;
        for pair in &pairs {
            margin += traj_score(&policy, &reference, &pair.win, cfg.beta, cfg.gamma).unwrap()
                - traj_score(&policy, &reference, &pair.lose, cfg.beta, cfg.gamma).unwrap();
        }
        assert!(margin / pairs.len() as f64 > 0.0);
    }

    #[test]
    fn one_small_step_decreases_the_loss() {
        let mdp = chain(6, 0.1, Some(8));
        let expert = expert_trajectories(&mdp, 20, 2).unwrap();
        let (sft_policy, _) =
            train_sft(&mdp, &expert, &small_cfg(LossKind::Sft, 100), &quick_eval()).unwrap();
        let reference = sft_policy.frozen_copy();
        let (pairs, _) = build_dataset(
            &mdp,
            &sft_policy,
            Setting::Noisy,
            12,
            3,
            &NoiseSpec::default(),
            None,
            "chain",
        )
        .unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            ..small_cfg(LossKind::Dmpo, 1)
        };
        let mut policy = reference.thawed_copy();
        let before = preference_loss(&pairs, &policy, &reference, &cfg).unwrap().value;
        let grad = preference_grad(&pairs, &policy, &reference, &cfg).unwrap();
        policy.apply_step(&grad, -cfg.learning_rate).unwrap();
        let after = preference_loss(&pairs, &policy, &reference, &cfg).unwrap().value;
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn training_is_deterministic_and_preserves_the_reference() {
        let mdp = chain(6, 0.1, Some(8));
        let expert = expert_trajectories(&mdp, 15, 4).unwrap();
        let (sft_policy, _) =
            train_sft(&mdp, &expert, &small_cfg(LossKind::Sft, 80), &quick_eval()).unwrap();
        let reference = sft_policy.frozen_copy();
        let ref_logits_before = reference.logits().to_vec();
        let (pairs, _) = build_dataset(
            &mdp,
            &sft_policy,
            Setting::Noisy,
            10,
            5,
            &NoiseSpec::default(),
            None,
            "chain",
        )
        .unwrap();
        let cfg = small_cfg(LossKind::DpoTraj, 20);
        let run = || train_preference(&mdp, &pairs, &reference, &cfg, &quick_eval()).unwrap();
        let (pa, ma) = run();
        let (pb, mb) = run();
        assert_eq!(pa.logits(), pb.logits());
        assert_eq!(metrics_csv(&ma), metrics_csv(&mb));
        assert_eq!(reference.logits(), ref_logits_before.as_slice());
        assert_eq!(ma.len(), 20);
        for w in ma.windows(2) {
            assert_eq!(w[1].epoch, w[0].epoch + 1);
        }
    }

    #[test]
    fn single_cell_gamma_sweep_reduces_to_train_preference() {
        let mdp = chain(5, 0.1, Some(6));
        let expert = expert_trajectories(&mdp, 10, 8).unwrap();
        let (sft_policy, _) =
            train_sft(&mdp, &expert, &small_cfg(LossKind::Sft, 60), &quick_eval()).unwrap();
        let reference = sft_policy.frozen_copy();
        let noise = NoiseSpec::default();
        let (noisy, _) =
            build_dataset(&mdp, &sft_policy, Setting::Noisy, 8, 1, &noise, None, "chain").unwrap();
        let (clean, _) =
            build_dataset(&mdp, &sft_policy, Setting::Clean, 8, 1, &noise, None, "chain").unwrap();
        let cfg = small_cfg(LossKind::Dmpo, 10);
        let rows = gamma_sweep(
            &mdp,
            &noisy,
            &clean,
            &reference,
            &cfg,
            &[0.4],
            &[cfg.seed],
            &quick_eval(),
        )
        .unwrap();
        let direct_cfg = TrainConfig {
            gamma: 0.4,
            ..cfg.clone()
        };
        let (_, metrics) =
            train_preference(&mdp, &noisy, &reference, &direct_cfg, &quick_eval()).unwrap();
        assert_eq!(rows[0].label, "noisy");
        assert_eq!(
            rows[0].avg_final_reward,
            metrics.last().unwrap().avg_final_reward
        );
    }

    #[test]
    fn sweep_tables_have_the_documented_shape() {
        let mdp = chain(5, 0.1, Some(6));
        let expert = expert_trajectories(&mdp, 10, 6).unwrap();
        let (sft_policy, _) =
            train_sft(&mdp, &expert, &small_cfg(LossKind::Sft, 60), &quick_eval()).unwrap();
        let reference = sft_policy.frozen_copy();
        let noise = NoiseSpec::default();
        let (noisy, _) = build_dataset(&mdp, &sft_policy, Setting::Noisy, 8, 0, &noise, None, "chain")
            .unwrap();
        let (clean, _) = build_dataset(&mdp, &sft_policy, Setting::Clean, 8, 0, &noise, None, "chain")
            .unwrap();
        let cfg = small_cfg(LossKind::Dmpo, 5);
        let rows = gamma_sweep(
            &mdp,
            &noisy,
            &clean,
            &reference,
            &cfg,
            &[0.3, 0.7],
            &[1, 2],
            &quick_eval(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert_eq!(rows[0].label, "noisy");
        assert_eq!(rows.last().unwrap().label, "clean");

        let rows = length_sweep(
            &mdp,
            &sft_policy,
            &reference,
            &cfg,
            &[3, 6],
            4,
            &noise,
            &[1, 2],
            &quick_eval(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert_eq!(rows[0].label, "dmpo");
        assert_eq!(rows.last().unwrap().label, "dpo_traj");
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("setting/loss_kind,gamma_or_bucket,seed,avg_final_reward\n"));
        assert_eq!(csv.lines().count(), 9);
    }
}
