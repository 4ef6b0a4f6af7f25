//! The preference-loss family: per-step discount weights, trajectory scores,
//! Bradley-Terry probabilities, the DMPO loss with its analytic gradient, and
//! the trajectory-DPO and SFT baselines.

use serde::{Deserialize, Serialize};

use crate::datagen::PreferencePair;
use crate::error::{Error, Result};
use crate::mdp::{check_gamma, Mdp, Trajectory};
use crate::policy::{traj_log_ratio_terms, PolicyGrad, TabularPolicy};

/// Which training loss a run optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Dmpo,
    DpoTraj,
    Sft,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LossKind::Dmpo => "dmpo",
            LossKind::DpoTraj => "dpo_traj",
            LossKind::Sft => "sft",
        };
        write!(f, "{name}")
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// KL-deviation weight.
    pub beta: f64,
    /// Discount factor in [0, 1).
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.1,
            gamma: 0.5,
            learning_rate: 0.1,
            epochs: 500,
            batch_size: 32,
            seed: 0,
            loss_kind: LossKind::Dmpo,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 {
            return Err(Error::validation(format!("beta = {} must be > 0", self.beta)));
        }
        check_gamma(self.gamma)?;
        if self.learning_rate <= 0.0 {
            return Err(Error::validation(format!(
                "learning_rate = {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Batch-level loss diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean loss over the batch.
    pub value: f64,
    /// Mean win-trajectory score over the batch.
    pub win_score: f64,
    /// Mean lose-trajectory score over the batch.
    pub lose_score: f64,
    /// Mean sigmoid(lose score - win score): how hard the batch pushes.
    pub pair_weight: f64,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x); -ln sigmoid(x) equals softplus(-x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-step discount weight gamma^t (1 - gamma^(len-t)) / (1 - gamma^len)
/// for step `t` of a length-`len` trajectory.
///
/// Equals 1 at t = 0 for every (len, gamma), strictly decreases in t, and at
/// gamma = 0 becomes the indicator of the first step (the limit value), which
/// is what reduces the multi-turn loss to its single-turn form.
pub fn discount_weight(t: usize, len: usize, gamma: f64) -> Result<f64> {
    if t >= len {
        return Err(Error::validation(format!(
            "step index {t} out of range for length {len}"
        )));
    }
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(if t == 0 { 1.0 } else { 0.0 });
    }
    let g_t = gamma.powi(t as i32);
    Ok(g_t * (1.0 - gamma.powi((len - t) as i32)) / (1.0 - gamma.powi(len as i32)))
}

fn step_weight(kind: LossKind, t: usize, len: usize, gamma: f64) -> Result<f64> {
    match kind {
        LossKind::Dmpo => discount_weight(t, len, gamma),
        LossKind::DpoTraj => Ok(1.0),
        LossKind::Sft => Err(Error::config("sft has no per-step preference weight")),
    }
}

/// Trajectory score Phi: the discount-weighted, beta-scaled sum of per-step
/// log policy ratios.
pub fn traj_score(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    traj: &Trajectory,
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    scored_with(LossKind::Dmpo, policy, reference, traj, beta, gamma)
}

fn scored_with(
    kind: LossKind,
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    traj: &Trajectory,
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    let terms = traj_log_ratio_terms(policy, reference, traj)?;
    let len = terms.len();
    let mut score = 0.0;
    for (t, term) in terms.into_iter().enumerate() {
        let w = step_weight(kind, t, len, gamma)?;
        if w != 0.0 {
            score += beta * w * term;
        }
    }
    Ok(score)
}

/// Probability that the first reward wins a Bradley-Terry comparison:
/// sigmoid(r_win - r_lose).
pub fn bt_prob_single(r_win: f64, r_lose: f64) -> f64 {
    sigmoid(r_win - r_lose)
}

/// Bradley-Terry probability over trajectory rewards.
///
/// Without normalization the logit is the difference of discounted reward
/// sums; with it, each sum is premultiplied by (1-gamma)/(1-gamma^T) for its
/// own trajectory length, which removes the length-dependent bias.
pub fn bt_prob_traj(pair: &PreferencePair, mdp: &Mdp, gamma: f64, normalized: bool) -> Result<f64> {
    check_gamma(gamma)?;
    pair.win.validate_against(mdp)?;
    pair.lose.validate_against(mdp)?;
    let side = |traj: &Trajectory| -> f64 {
        let mut sum = 0.0;
        let mut w = 1.0;
        for &(s, a) in traj.steps() {
            sum += w * mdp.reward[s][a];
            w *= gamma;
        }
        if normalized {
            sum * (1.0 - gamma) / (1.0 - gamma.powi(traj.len() as i32))
        } else {
            sum
        }
    };
    Ok(sigmoid(side(&pair.win) - side(&pair.lose)))
}

fn check_batch<T>(batch: &[T]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::validation("batch must be nonempty"));
    }
    Ok(())
}

fn preference_loss_impl(
    kind: LossKind,
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    check_batch(batch)?;
    cfg.validate()?;
    let mut value = 0.0;
    let mut win_score = 0.0;
    let mut lose_score = 0.0;
    let mut pair_weight = 0.0;
    for pair in batch {
        let phi_w = scored_with(kind, policy, reference, &pair.win, cfg.beta, cfg.gamma)?;
        let phi_l = scored_with(kind, policy, reference, &pair.lose, cfg.beta, cfg.gamma)?;
        value += softplus(phi_l - phi_w); // -log sigmoid(phi_w - phi_l)
        win_score += phi_w;
        lose_score += phi_l;
        pair_weight += sigmoid(phi_l - phi_w);
    }
    let n = batch.len() as f64;
    Ok(LossReport {
        value: value / n,
        win_score: win_score / n,
        lose_score: lose_score / n,
        pair_weight: pair_weight / n,
    })
}

fn preference_grad_impl(
    kind: LossKind,
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<PolicyGrad> {
    check_batch(batch)?;
    cfg.validate()?;
    if policy.frozen() {
        return Err(Error::UpdateRefused(
            "gradient requested on a frozen policy".into(),
        ));
    }
    let n = batch.len() as f64;
    let mut grad = PolicyGrad::zeros_like(policy);
    for pair in batch {
        let phi_w = scored_with(kind, policy, reference, &pair.win, cfg.beta, cfg.gamma)?;
        let phi_l = scored_with(kind, policy, reference, &pair.lose, cfg.beta, cfg.gamma)?;
        let weight = sigmoid(phi_l - phi_w) / n;
        for (traj, sign) in [(&pair.win, -1.0), (&pair.lose, 1.0)] {
            let len = traj.len();
            for (t, &(s, a)) in traj.steps().iter().enumerate() {
                let w = step_weight(kind, t, len, cfg.gamma)?;
                if w == 0.0 {
                    continue;
                }
                let row = policy.grad_log_prob(s, a)?;
                grad.accumulate(&row, sign * weight * cfg.beta * w);
            }
        }
    }
    Ok(grad)
}

/// Mean DMPO loss over a batch of preference pairs.
pub fn dmpo_loss(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    preference_loss_impl(LossKind::Dmpo, batch, policy, reference, cfg)
}

/// Analytic gradient of [`dmpo_loss`] with respect to the policy logits.
pub fn dmpo_grad(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<PolicyGrad> {
    preference_grad_impl(LossKind::Dmpo, batch, policy, reference, cfg)
}

/// Trajectory-DPO baseline: unweighted per-step log-ratio sums inside the
/// sigmoid, no discount weighting and no length normalization.
pub fn dpo_traj_loss(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    preference_loss_impl(LossKind::DpoTraj, batch, policy, reference, cfg)
}

/// Analytic gradient of [`dpo_traj_loss`].
pub fn dpo_traj_grad(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<PolicyGrad> {
    preference_grad_impl(LossKind::DpoTraj, batch, policy, reference, cfg)
}

/// Dispatches on `cfg.loss_kind`; `sft` is not a preference loss.
pub fn preference_loss(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    match cfg.loss_kind {
        LossKind::Dmpo => dmpo_loss(batch, policy, reference, cfg),
        LossKind::DpoTraj => dpo_traj_loss(batch, policy, reference, cfg),
        LossKind::Sft => Err(Error::config("sft is not a preference loss")),
    }
}

/// Dispatches on `cfg.loss_kind`; `sft` is not a preference loss.
pub fn preference_grad(
    batch: &[PreferencePair],
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<PolicyGrad> {
    match cfg.loss_kind {
        LossKind::Dmpo => dmpo_grad(batch, policy, reference, cfg),
        LossKind::DpoTraj => dpo_traj_grad(batch, policy, reference, cfg),
        LossKind::Sft => Err(Error::config("sft is not a preference loss")),
    }
}

/// Mean negative log-likelihood over every (state, action) pair in the batch.
pub fn sft_loss(batch: &[Trajectory], policy: &TabularPolicy) -> Result<LossReport> {
    check_batch(batch)?;
    let mut nll = 0.0;
    let mut count = 0usize;
    for traj in batch {
        for &(s, a) in traj.steps() {
            nll -= policy.log_prob(s, a)?;
            count += 1;
        }
    }
    let value = nll / count as f64;
    Ok(LossReport {
        value,
        win_score: value,
        lose_score: value,
        pair_weight: 0.5,
    })
}

/// Gradient of [`sft_loss`] with respect to the policy logits.
pub fn sft_grad(batch: &[Trajectory], policy: &TabularPolicy) -> Result<PolicyGrad> {
    check_batch(batch)?;
    if policy.frozen() {
        return Err(Error::UpdateRefused(
            "gradient requested on a frozen policy".into(),
        ));
    }
    let count: usize = batch.iter().map(|t| t.len()).sum();
    let scale = -1.0 / count as f64;
    let mut grad = PolicyGrad::zeros_like(policy);
    for traj in batch {
        for &(s, a) in traj.steps() {
            let row = policy.grad_log_prob(s, a)?;
            grad.accumulate(&row, scale);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn cfg(beta: f64, gamma: f64) -> TrainConfig {
        TrainConfig {
            beta,
            gamma,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn discount_weight_examples() {
        assert_eq!(discount_weight(0, 5, 0.9).unwrap(), 1.0);
        assert!((discount_weight(1, 3, 0.5).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert!((discount_weight(2, 3, 0.5).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(discount_weight(1, 3, 0.0).unwrap(), 0.0);
        assert_eq!(discount_weight(0, 3, 0.0).unwrap(), 1.0);
        assert!(discount_weight(3, 3, 0.5).is_err());
    }

    #[test]
    fn discount_weight_is_one_at_zero_and_decreasing() {
        for &gamma in &[0.1, 0.5, 0.9, 0.99] {
            for len in 1..=12 {
                assert_eq!(discount_weight(0, len, gamma).unwrap(), 1.0);
                let mut prev = f64::INFINITY;
                for t in 0..len {
                    let w = discount_weight(t, len, gamma).unwrap();
                    assert!(w < prev, "not decreasing at t={t}, len={len}, gamma={gamma}");
                    prev = w;
                }
            }
        }
    }

    /// Policy/reference pair whose per-step log ratio at (0, 0) is exactly 1.
    fn unit_log_ratio() -> (TabularPolicy, TabularPolicy) {
        let p = 0.25 * std::f64::consts::E;
        let logit = (3.0 * p / (1.0 - p)).ln();
        let policy = TabularPolicy::new(vec![vec![logit, 0.0, 0.0, 0.0]], false).unwrap();
        let reference = TabularPolicy::uniform(1, 4).frozen_copy();
        (policy, reference)
    }

    #[test]
    fn traj_score_weights_unit_ratios() {
        let (policy, reference) = unit_log_ratio();
        let traj = Trajectory::new(vec![(0, 0); 3]).unwrap();
        let score = traj_score(&policy, &reference, &traj, 0.1, 0.5).unwrap();
        assert!((score - 0.1 * 11.0 / 7.0).abs() < 1e-9, "score = {score}");
        assert!((score - 0.1571429).abs() < 1e-7);
    }

    #[test]
    fn traj_score_is_zero_for_identical_policies() {
        let policy = TabularPolicy::new(vec![vec![0.5, -0.5]], false).unwrap();
        let reference = policy.frozen_copy();
        let traj = Trajectory::new(vec![(0, 0), (0, 1)]).unwrap();
        assert_eq!(traj_score(&policy, &reference, &traj, 0.1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn traj_score_single_step_is_beta_times_ratio() {
        let (policy, reference) = unit_log_ratio();
        let traj = Trajectory::new(vec![(0, 0)]).unwrap();
        let score = traj_score(&policy, &reference, &traj, 0.25, 0.7).unwrap();
        let term = policy.log_prob(0, 0).unwrap() - reference.log_prob(0, 0).unwrap();
        assert!((score - 0.25 * term).abs() < 1e-15);
    }

    #[test]
    fn bt_prob_single_examples() {
        assert_eq!(bt_prob_single(0.4, 0.4), 0.5);
        assert!((bt_prob_single(1.0, 0.0) - 0.7310586).abs() < 1e-7);
        assert!((bt_prob_single(100.0, 0.0) - 1.0).abs() < 1e-12);
    }

    fn unit_reward_loop() -> Mdp {
        Mdp::new(
            1,
            1,
            vec![vec![vec![1.0]]],
            vec![vec![1.0]],
            vec![1.0],
            BTreeSet::new(),
            8,
        )
        .unwrap()
    }

    #[test]
    fn bt_prob_traj_normalization_removes_length_bias() {
        let mdp = unit_reward_loop();
        let pair = PreferencePair::new(
            Trajectory::new(vec![(0, 0)]).unwrap(),
            Trajectory::new(vec![(0, 0); 3]).unwrap(),
        )
        .unwrap();
        let raw = bt_prob_traj(&pair, &mdp, 0.5, false).unwrap();
        assert!((raw - 0.3208213).abs() < 1e-7, "raw = {raw}");
        let norm = bt_prob_traj(&pair, &mdp, 0.5, true).unwrap();
        assert!((norm - 0.5).abs() < 1e-12, "norm = {norm}");
    }

    #[test]
    fn bt_prob_traj_identical_pair_is_half() {
        let mdp = unit_reward_loop();
        let t = Trajectory::new(vec![(0, 0); 2]).unwrap();
        let pair = PreferencePair::new(t.clone(), t).unwrap();
        assert_eq!(bt_prob_traj(&pair, &mdp, 0.5, false).unwrap(), 0.5);
        assert_eq!(bt_prob_traj(&pair, &mdp, 0.5, true).unwrap(), 0.5);
    }

    #[test]
    fn equal_lengths_scale_the_logit_by_a_common_factor() {
        // reward 0.3 on action 0, 0.9 on action 1 of a 2-action loop
        let mdp = Mdp::new(
            1,
            2,
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.3, 0.9]],
            vec![1.0],
            BTreeSet::new(),
            8,
        )
        .unwrap();
        let gamma: f64 = 0.6;
        let len = 4usize;
        let pair = PreferencePair::new(
            Trajectory::new(vec![(0, 1); len]).unwrap(),
            Trajectory::new(vec![(0, 0); len]).unwrap(),
        )
        .unwrap();
        let raw = bt_prob_traj(&pair, &mdp, gamma, false).unwrap();
        let norm = bt_prob_traj(&pair, &mdp, gamma, true).unwrap();
        // invert the sigmoids and compare logits
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let coef = (1.0 - gamma) / (1.0 - gamma.powi(len as i32));
        assert!((logit(norm) - coef * logit(raw)).abs() < 1e-12);
    }

    #[test]
    fn dmpo_loss_at_reference_is_log_two() {
        let policy = TabularPolicy::new(vec![vec![0.2, -0.4], vec![0.0, 1.0]], false).unwrap();
        let reference = policy.frozen_copy();
        let batch = vec![PreferencePair::new(
            Trajectory::new(vec![(0, 0), (1, 1)]).unwrap(),
            Trajectory::new(vec![(0, 1), (1, 0), (1, 1)]).unwrap(),
        )
        .unwrap()];
        let report = dmpo_loss(&batch, &policy, &reference, &cfg(0.1, 0.5)).unwrap();
        assert!((report.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(report.pair_weight, 0.5);
        assert_eq!(report.win_score, 0.0);
        assert_eq!(report.lose_score, 0.0);
    }

    #[test]
    fn tiny_gamma_degenerates_to_first_turn_dpo() {
        let policy = TabularPolicy::new(
            vec![vec![0.7, -0.1], vec![-0.4, 0.9], vec![0.2, 0.0]],
            false,
        )
        .unwrap();
        let reference = TabularPolicy::new(
            vec![vec![0.0, 0.3], vec![0.5, -0.5], vec![0.0, 0.0]],
            true,
        )
        .unwrap();
        let batch = vec![
            PreferencePair::new(
                Trajectory::new(vec![(0, 0), (1, 1), (2, 0)]).unwrap(),
                Trajectory::new(vec![(0, 1), (2, 1)]).unwrap(),
            )
            .unwrap(),
            PreferencePair::new(
                Trajectory::new(vec![(1, 0), (0, 0)]).unwrap(),
                Trajectory::new(vec![(1, 1), (0, 1), (2, 0), (2, 1)]).unwrap(),
            )
            .unwrap(),
        ];
        let truncated: Vec<PreferencePair> = batch
            .iter()
            .map(|p| {
                PreferencePair::new(
                    Trajectory::new(vec![p.win.steps()[0]]).unwrap(),
                    Trajectory::new(vec![p.lose.steps()[0]]).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let multi = dmpo_loss(&batch, &policy, &reference, &cfg(0.1, 1e-8)).unwrap();
        let single = dmpo_loss(&truncated, &policy, &reference, &cfg(0.1, 1e-8)).unwrap();
        assert!((multi.value - single.value).abs() < 1e-6);
    }

    #[test]
    fn two_pair_batch_matches_scalar_recomputation() {
        let policy = TabularPolicy::new(vec![vec![0.8, -0.3], vec![0.1, 0.6]], false).unwrap();
        let reference = TabularPolicy::new(vec![vec![-0.2, 0.4], vec![0.3, 0.0]], true).unwrap();
        let beta = 0.3;
        let gamma = 0.7;
        let batch = vec![
            PreferencePair::new(
                Trajectory::new(vec![(0, 0), (1, 1)]).unwrap(),
                Trajectory::new(vec![(0, 1), (1, 0), (0, 0)]).unwrap(),
            )
            .unwrap(),
            PreferencePair::new(
                Trajectory::new(vec![(1, 1)]).unwrap(),
                Trajectory::new(vec![(1, 0), (0, 1)]).unwrap(),
            )
            .unwrap(),
        ];
        let report = dmpo_loss(&batch, &policy, &reference, &cfg(beta, gamma)).unwrap();

        // independent scalar recomputation, spreadsheet style
        let lp = |pol: &TabularPolicy, s: usize, a: usize| pol.log_prob(s, a).unwrap();
        let phi = |t: usize, len: usize| -> f64 {
            gamma.powi(t as i32) * (1.0 - gamma.powi((len - t) as i32))
                / (1.0 - gamma.powi(len as i32))
        };
        let score = |steps: &[(usize, usize)]| -> f64 {
            steps
                .iter()
                .enumerate()
                .map(|(t, &(s, a))| {
                    beta * phi(t, steps.len()) * (lp(&policy, s, a) - lp(&reference, s, a))
                })
                .sum()
        };
        let mut expected = 0.0;
        for pair in &batch {
            let x = score(pair.win.steps()) - score(pair.lose.steps());
            expected += -(sigmoid(x)).ln();
        }
        expected /= batch.len() as f64;
        assert!((report.value - expected).abs() < 1e-12);
    }

    #[test]
    fn grad_is_antisymmetric_under_label_swap() {
        let policy = TabularPolicy::new(vec![vec![0.4, -0.6], vec![0.2, 0.1]], false).unwrap();
        let reference = policy.frozen_copy();
        let pair = PreferencePair::new(
            Trajectory::new(vec![(0, 0), (1, 1)]).unwrap(),
            Trajectory::new(vec![(0, 1), (1, 0)]).unwrap(),
        )
        .unwrap();
        let swapped = PreferencePair::new(pair.lose.clone(), pair.win.clone()).unwrap();
        let c = cfg(0.2, 0.5);
        let g = dmpo_grad(&[pair], &policy, &reference, &c).unwrap();
        let g_swapped = dmpo_grad(&[swapped], &policy, &reference, &c).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((g.entry(s, a) + g_swapped.entry(s, a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn smaller_gamma_tilts_gradient_toward_early_steps() {
        // per-step contribution magnitudes of the win trajectory
        let contribution_ratio = |gamma: f64| -> f64 {
            let len = 4;
            let first = discount_weight(0, len, gamma).unwrap();
            let last = discount_weight(len - 1, len, gamma).unwrap();
            first / last
        };
        assert!(contribution_ratio(0.3) > contribution_ratio(0.9));
    }

    #[test]
    fn dpo_traj_matches_dmpo_on_single_steps() {
        let policy = TabularPolicy::new(vec![vec![0.9, -0.9]], false).unwrap();
        let reference = TabularPolicy::new(vec![vec![0.1, 0.4]], true).unwrap();
        let batch = vec![PreferencePair::new(
            Trajectory::new(vec![(0, 0)]).unwrap(),
            Trajectory::new(vec![(0, 1)]).unwrap(),
        )
        .unwrap()];
        let c = cfg(0.15, 0.8);
        let a = dmpo_loss(&batch, &policy, &reference, &c).unwrap();
        let b = dpo_traj_loss(&batch, &policy, &reference, &c).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn dpo_traj_at_reference_is_log_two() {
        let policy = TabularPolicy::uniform(2, 2);
        let reference = policy.frozen_copy();
        let batch = vec![PreferencePair::new(
            Trajectory::new(vec![(0, 0)]).unwrap(),
            Trajectory::new(vec![(0, 1), (1, 0)]).unwrap(),
        )
        .unwrap()];
        let report = dpo_traj_loss(&batch, &policy, &reference, &cfg(0.1, 0.5)).unwrap();
        assert!((report.value - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logit_gap_between_losses_grows_with_lose_length() {
        let (policy, reference) = unit_log_ratio();
        let c = cfg(0.1, 0.5);
        let mut prev_gap = -1.0;
        for reps in 1..=4usize {
            let pair = PreferencePair::new(
                Trajectory::new(vec![(0, 0)]).unwrap(),
                Trajectory::new(vec![(0, 0); 3 * reps]).unwrap(),
            )
            .unwrap();
            let batch = [pair];
            let dmpo = dmpo_loss(&batch, &policy, &reference, &c).unwrap();
            let dpo = dpo_traj_loss(&batch, &policy, &reference, &c).unwrap();
            let dmpo_logit = dmpo.win_score - dmpo.lose_score;
            let dpo_logit = dpo.win_score - dpo.lose_score;
            let gap = (dpo_logit - dmpo_logit).abs();
            assert!(gap > prev_gap, "gap {gap} did not grow at reps {reps}");
            prev_gap = gap;
        }
    }

    #[test]
    fn sft_loss_examples() {
        let uniform = TabularPolicy::uniform(1, 4);
        let batch = vec![Trajectory::new(vec![(0, 2), (0, 1)]).unwrap()];
        let report = sft_loss(&batch, &uniform).unwrap();
        assert!((report.value - 4.0_f64.ln()).abs() < 1e-15);
        assert_eq!(report.pair_weight, 0.5);

        let confident = TabularPolicy::new(vec![vec![40.0, 0.0]], false).unwrap();
        let matched = vec![Trajectory::new(vec![(0, 0); 3]).unwrap()];
        assert!(sft_loss(&matched, &confident).unwrap().value < 1e-12);
    }

    #[test]
    fn sft_loss_matches_per_pair_recomputation() {
        let policy = TabularPolicy::new(vec![vec![0.4, -0.2], vec![0.9, 0.3]], false).unwrap();
        let batch = vec![
            Trajectory::new(vec![(0, 0), (1, 1)]).unwrap(),
            Trajectory::new(vec![(1, 0)]).unwrap(),
        ];
        let report = sft_loss(&batch, &policy).unwrap();
        let manual = -(policy.log_prob(0, 0).unwrap()
            + policy.log_prob(1, 1).unwrap()
            + policy.log_prob(1, 0).unwrap())
            / 3.0;
        assert!((report.value - manual).abs() < 1e-15);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let policy = TabularPolicy::uniform(1, 2);
        let reference = policy.frozen_copy();
        assert!(dmpo_loss(&[], &policy, &reference, &cfg(0.1, 0.5)).is_err());
        assert!(sft_loss(&[], &policy).is_err());
    }

    #[test]
    fn grad_refused_on_frozen_policy() {
        let policy = TabularPolicy::uniform(1, 2).frozen_copy();
        let reference = policy.clone();
        let batch = vec![PreferencePair::new(
            Trajectory::new(vec![(0, 0)]).unwrap(),
            Trajectory::new(vec![(0, 1)]).unwrap(),
        )
        .unwrap()];
        assert!(matches!(
            dmpo_grad(&batch, &policy, &reference, &cfg(0.1, 0.5)),
            Err(Error::UpdateRefused(_))
        ));
    }

    #[test]
    fn sigmoid_pairs_sum_to_one() {
        for &x in &[-30.0, -2.5, 0.0, 0.1, 7.0, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }
}
