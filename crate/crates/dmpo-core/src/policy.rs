//! Tabular softmax policies and their score-function gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Trajectory;

/// Per-state action logits defining pi(a|s) via a softmax.
///
/// A frozen policy serves as the reference (or expert) and refuses parameter
/// updates and gradient requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    logits: Vec<Vec<f64>>,
    frozen: bool,
}

impl TabularPolicy {
    pub fn new(logits: Vec<Vec<f64>>, frozen: bool) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::validation("policy needs at least one state"));
        }
        let n_actions = logits[0].len();
        if n_actions == 0 {
            return Err(Error::validation("policy needs at least one action"));
        }
        for (s, row) in logits.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::validation(format!("logit row {s} has ragged length")));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("logit row {s} has non-finite entries")));
            }
        }
        Ok(TabularPolicy { logits, frozen })
    }

    /// Zero logits: the uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy {
            logits: vec![vec![0.0; n_actions]; n_states],
            frozen: false,
        }
    }

    pub fn n_states(&self) -> usize {
        self.logits.len()
    }

    pub fn n_actions(&self) -> usize {
        self.logits[0].len()
    }

    pub fn frozen(&self) -> bool {
        self.frozen
    }

    /// Returns a frozen copy to be used as a reference policy.
    pub fn frozen_copy(&self) -> Self {
        TabularPolicy {
            logits: self.logits.clone(),
            frozen: true,
        }
    }

    /// Returns an unfrozen copy to be used as the trainable policy.
    pub fn thawed_copy(&self) -> Self {
        TabularPolicy {
            logits: self.logits.clone(),
            frozen: false,
        }
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states() {
            return Err(Error::validation(format!("state index {s} out of range")));
        }
        Ok(())
    }

    fn check_indices(&self, s: usize, a: usize) -> Result<()> {
        self.check_state(s)?;
        if a >= self.n_actions() {
            return Err(Error::validation(format!("action index {a} out of range")));
        }
        Ok(())
    }

    /// pi(.|s), computed with max-subtraction.
    pub fn action_probs(&self, s: usize) -> Vec<f64> {
        let row = &self.logits[s];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / z).collect()
    }

    /// log pi(a|s); always finite because logits are finite.
    pub fn log_prob(&self, s: usize, a: usize) -> Result<f64> {
        self.check_indices(s, a)?;
        let row = &self.logits[s];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z: f64 = row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        Ok(row[a] - m - log_z)
    }

    /// Greedy action, ties broken toward the lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = &self.logits[s];
        let mut best = 0;
        for (a, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = a;
            }
        }
        best
    }

    /// Gradient of log pi(a|s) with respect to the logit row of state `s`:
    /// indicator(a) - pi(.|s). All other rows are zero.
    pub fn grad_log_prob(&self, s: usize, a: usize) -> Result<RowGrad> {
        if self.frozen {
            return Err(Error::UpdateRefused(
                "gradient requested on a frozen policy".into(),
            ));
        }
        self.check_indices(s, a)?;
        let mut values = self.action_probs(s);
        for v in values.iter_mut() {
            *v = -*v;
        }
        values[a] += 1.0;
        Ok(RowGrad { state: s, values })
    }

    /// Applies `logits += scale * grad`. Refused on frozen policies.
    pub fn apply_step(&mut self, grad: &PolicyGrad, scale: f64) -> Result<()> {
        if self.frozen {
            return Err(Error::UpdateRefused("update requested on a frozen policy".into()));
        }
        if grad.rows.len() != self.n_states() || grad.rows[0].len() != self.n_actions() {
            return Err(Error::config("gradient dimensions do not match policy"));
        }
        for (row, grow) in self.logits.iter_mut().zip(&grad.rows) {
            for (x, g) in row.iter_mut().zip(grow) {
                *x += scale * g;
            }
        }
        Ok(())
    }
}

/// Per-step log pi_theta / pi_ref terms along a trajectory.
pub fn traj_log_ratio_terms(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    traj: &Trajectory,
) -> Result<Vec<f64>> {
    if policy.n_states() != reference.n_states() || policy.n_actions() != reference.n_actions() {
        return Err(Error::config("policy and reference dimensions differ"));
    }
    traj.steps()
        .iter()
        .map(|&(s, a)| Ok(policy.log_prob(s, a)? - reference.log_prob(s, a)?))
        .collect()
}

/// A gradient touching a single logit row.
#[derive(Debug, Clone)]
pub struct RowGrad {
    pub state: usize,
    pub values: Vec<f64>,
}

/// A dense gradient over the whole logit table.
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    rows: Vec<Vec<f64>>,
}

impl PolicyGrad {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        PolicyGrad {
            rows: vec![vec![0.0; n_actions]; n_states],
        }
    }

    pub fn zeros_like(policy: &TabularPolicy) -> Self {
        Self::zeros(policy.n_states(), policy.n_actions())
    }

    pub fn accumulate(&mut self, row: &RowGrad, weight: f64) {
        let target = &mut self.rows[row.state];
        for (t, v) in target.iter_mut().zip(&row.values) {
            *t += weight * v;
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn entry(&self, s: usize, a: usize) -> f64 {
        self.rows[s][a]
    }

    pub fn scale(&mut self, c: f64) {
        for row in &mut self.rows {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }
}
