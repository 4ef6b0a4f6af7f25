//! Python bindings for the toy-MDP preference-optimization library.
//!
//! Exposes the main types (Mdp, Trajectory, TabularPolicy, PreferencePair,
//! Saom) and operations (environments, rollouts, the loss family, occupancy
//! measures, dataset construction, training) as the `dmpo_lab` module.
//!
//! Build with `cargo build -p dmpo-py --release` and import the produced
//! cdylib as `dmpo_lab` (see python/smoke_test.py).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dmpo_core::datagen;
use dmpo_core::losses;
use dmpo_core::mdp;
use dmpo_core::occupancy;
use dmpo_core::trainer;
use dmpo_core::{
    EnvSpec, Error, LossKind, NoiseSpec, Setting, TrainConfig,
};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// wrapped domain types
// ---------------------------------------------------------------------------

/// A finite MDP with explicit transition and reward tables.
#[pyclass(name = "Mdp", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PyMdp {
    inner: mdp::Mdp,
}

#[pymethods]
impl PyMdp {
    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions
    }

    #[getter]
    fn max_horizon(&self) -> usize {
        self.inner.max_horizon
    }

    #[getter]
    fn reward(&self) -> Vec<Vec<f64>> {
        self.inner.reward.clone()
    }

    #[getter]
    fn terminal_states(&self) -> Vec<usize> {
        self.inner.terminal_states.iter().copied().collect()
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.inner.is_terminal(state)
    }

    /// JSON document with the full transition/reward tables.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: mdp::Mdp =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py_err)?;
        Ok(PyMdp { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(n_states={}, n_actions={}, max_horizon={})",
            self.inner.n_states, self.inner.n_actions, self.inner.max_horizon
        )
    }
}

/// An ordered sequence of (state, action) steps.
#[pyclass(name = "Trajectory", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PyTrajectory {
    inner: mdp::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[new]
    fn new(states: Vec<usize>, actions: Vec<usize>) -> PyResult<Self> {
        if states.len() != actions.len() {
            return Err(PyValueError::new_err("states and actions differ in length"));
        }
        let inner = mdp::Trajectory::new(states.into_iter().zip(actions).collect())
            .map_err(to_py_err)?;
        Ok(PyTrajectory { inner })
    }

    #[getter]
    fn states(&self) -> Vec<usize> {
        self.inner.steps().iter().map(|&(s, _)| s).collect()
    }

    #[getter]
    fn actions(&self) -> Vec<usize> {
        self.inner.steps().iter().map(|&(_, a)| a).collect()
    }

    fn steps(&self) -> Vec<(usize, usize)> {
        self.inner.steps().to_vec()
    }

    fn total_reward(&self, mdp: &PyMdp) -> f64 {
        self.inner.total_reward(&mdp.inner)
    }

    fn final_reward(&self, mdp: &PyMdp) -> f64 {
        self.inner.final_reward(&mdp.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(steps={:?})", self.inner.steps())
    }
}

/// Per-state action logits defining a softmax policy.
#[pyclass(name = "TabularPolicy", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PyTabularPolicy {
    inner: dmpo_core::TabularPolicy,
}

#[pymethods]
impl PyTabularPolicy {
    #[new]
    #[pyo3(signature = (logits, frozen = false))]
    fn new(logits: Vec<Vec<f64>>, frozen: bool) -> PyResult<Self> {
        Ok(PyTabularPolicy {
            inner: dmpo_core::TabularPolicy::new(logits, frozen).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn uniform(n_states: usize, n_actions: usize) -> Self {
        PyTabularPolicy {
            inner: dmpo_core::TabularPolicy::uniform(n_states, n_actions),
        }
    }

    #[getter]
    fn logits(&self) -> Vec<Vec<f64>> {
        self.inner.logits().to_vec()
    }

    #[getter]
    fn frozen(&self) -> bool {
        self.inner.frozen()
    }

    fn action_probs(&self, state: usize) -> Vec<f64> {
        self.inner.action_probs(state)
    }

    fn log_prob(&self, state: usize, action: usize) -> PyResult<f64> {
        self.inner.log_prob(state, action).map_err(to_py_err)
    }

    fn greedy_action(&self, state: usize) -> usize {
        self.inner.greedy_action(state)
    }

    /// Frozen copy, for use as a reference policy.
    fn frozen_copy(&self) -> Self {
        PyTabularPolicy {
            inner: self.inner.frozen_copy(),
        }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTabularPolicy {
            inner: serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(e.to_string()))?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "TabularPolicy(n_states={}, n_actions={}, frozen={})",
            self.inner.n_states(),
            self.inner.n_actions(),
            self.inner.frozen()
        )
    }
}

/// A (win, lose) trajectory pair sharing an initial state.
#[pyclass(name = "PreferencePair", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PyPreferencePair {
    inner: datagen::PreferencePair,
}

#[pymethods]
impl PyPreferencePair {
    #[new]
    fn new(win: PyTrajectory, lose: PyTrajectory) -> PyResult<Self> {
        Ok(PyPreferencePair {
            inner: datagen::PreferencePair::new(win.inner, lose.inner).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn win(&self) -> PyTrajectory {
        PyTrajectory {
            inner: self.inner.win.clone(),
        }
    }

    #[getter]
    fn lose(&self) -> PyTrajectory {
        PyTrajectory {
            inner: self.inner.lose.clone(),
        }
    }
}

/// A state-action occupancy measure.
#[pyclass(name = "Saom", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PySaom {
    inner: occupancy::Saom,
}

#[pymethods]
impl PySaom {
    #[getter]
    fn d(&self) -> Vec<Vec<f64>> {
        self.inner.d.clone()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }
}

/// Closed-form optimum of the tilted objective.
#[pyclass(name = "SaomSolution", module = "dmpo_lab")]
struct PySaomSolution {
    inner: occupancy::SaomSolution,
}

#[pymethods]
impl PySaomSolution {
    #[getter]
    fn d_star(&self) -> PySaom {
        PySaom {
            inner: self.inner.d_star.clone(),
        }
    }

    #[getter]
    fn partition_z(&self) -> f64 {
        self.inner.partition_z
    }

    #[getter]
    fn objective_value(&self) -> f64 {
        self.inner.objective_value
    }
}

/// Batch loss diagnostics.
#[pyclass(name = "LossReport", module = "dmpo_lab")]
struct PyLossReport {
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    win_score: f64,
    #[pyo3(get)]
    lose_score: f64,
    #[pyo3(get)]
    pair_weight: f64,
}

impl From<losses::LossReport> for PyLossReport {
    fn from(r: losses::LossReport) -> Self {
        PyLossReport {
            value: r.value,
            win_score: r.win_score,
            lose_score: r.lose_score,
            pair_weight: r.pair_weight,
        }
    }
}

/// Per-epoch training metrics.
#[pyclass(name = "MetricsRecord", module = "dmpo_lab", from_py_object)]
#[derive(Clone)]
struct PyMetricsRecord {
    #[pyo3(get)]
    epoch: usize,
    #[pyo3(get)]
    loss: f64,
    #[pyo3(get)]
    avg_reward: f64,
    #[pyo3(get)]
    avg_final_reward: f64,
    #[pyo3(get)]
    compounding_error: f64,
    #[pyo3(get)]
    pair_weight: f64,
}

impl From<trainer::MetricsRecord> for PyMetricsRecord {
    fn from(m: trainer::MetricsRecord) -> Self {
        PyMetricsRecord {
            epoch: m.epoch,
            loss: m.loss,
            avg_reward: m.avg_reward,
            avg_final_reward: m.avg_final_reward,
            compounding_error: m.compounding_error,
            pair_weight: m.pair_weight,
        }
    }
}

// ---------------------------------------------------------------------------
// config helpers
// ---------------------------------------------------------------------------

fn dict_usize(params: &Bound<'_, PyDict>, key: &str) -> PyResult<Option<usize>> {
    match params.get_item(key)? {
        Some(v) => Ok(Some(v.extract::<usize>()?)),
        None => Ok(None),
    }
}

fn dict_f64(params: &Bound<'_, PyDict>, key: &str) -> PyResult<Option<f64>> {
    match params.get_item(key)? {
        Some(v) => Ok(Some(v.extract::<f64>()?)),
        None => Ok(None),
    }
}

fn require<T>(value: Option<T>, name: &str) -> PyResult<T> {
    value.ok_or_else(|| PyValueError::new_err(format!("missing environment parameter '{name}'")))
}

fn parse_loss_kind(name: &str) -> PyResult<LossKind> {
    match name {
        "dmpo" => Ok(LossKind::Dmpo),
        "dpo_traj" => Ok(LossKind::DpoTraj),
        "sft" => Ok(LossKind::Sft),
        other => Err(PyValueError::new_err(format!("unknown loss_kind '{other}'"))),
    }
}

fn parse_setting(name: &str) -> PyResult<Setting> {
    match name {
        "noisy" => Ok(Setting::Noisy),
        "clean" => Ok(Setting::Clean),
        other => Err(PyValueError::new_err(format!("unknown setting '{other}'"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn build_train_config(
    beta: f64,
    gamma: f64,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    loss_kind: &str,
) -> PyResult<TrainConfig> {
    let cfg = TrainConfig {
        beta,
        gamma,
        learning_rate,
        epochs,
        batch_size,
        seed,
        loss_kind: parse_loss_kind(loss_kind)?,
    };
    cfg.validate().map_err(to_py_err)?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// Builds a built-in environment: "chain", "shop", or "grid".
#[pyfunction]
#[pyo3(signature = (name, **params))]
fn make_env(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<PyMdp> {
    let params = params.ok_or_else(|| {
        PyValueError::new_err(format!("environment '{name}' needs parameters"))
    })?;
    let spec = match name {
        "chain" => EnvSpec::Chain {
            n_states: require(dict_usize(params, "n_states")?, "n_states")?,
            slip: require(dict_f64(params, "slip")?, "slip")?,
            max_horizon: dict_usize(params, "max_horizon")?,
        },
        "shop" => EnvSpec::Shop {
            depth: require(dict_usize(params, "depth")?, "depth")?,
            branching: require(dict_usize(params, "branching")?, "branching")?,
            reward_seed: dict_usize(params, "reward_seed")?.unwrap_or(0) as u64,
        },
        "grid" => EnvSpec::Grid {
            width: require(dict_usize(params, "width")?, "width")?,
            height: require(dict_usize(params, "height")?, "height")?,
            slip: require(dict_f64(params, "slip")?, "slip")?,
            max_horizon: dict_usize(params, "max_horizon")?,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown environment '{other}' (expected chain, shop, or grid)"
            )))
        }
    };
    Ok(PyMdp {
        inner: dmpo_core::make_env(&spec).map_err(to_py_err)?,
    })
}

/// Seeded rollouts; identical inputs produce identical trajectories.
#[pyfunction]
#[pyo3(signature = (mdp, policy, n, seed, temperature_zero = false, gamma = 0.99))]
fn rollout(
    mdp: &PyMdp,
    policy: &PyTabularPolicy,
    n: usize,
    seed: u64,
    temperature_zero: bool,
    gamma: f64,
) -> PyResult<(Vec<PyTrajectory>, f64, f64)> {
    let report = mdp::rollout(&mdp.inner, &policy.inner, n, seed, temperature_zero, gamma)
        .map_err(to_py_err)?;
    let trajectories = report
        .trajectories
        .into_iter()
        .map(|inner| PyTrajectory { inner })
        .collect();
    Ok((trajectories, report.avg_return, report.avg_final_reward))
}

#[pyfunction]
fn discounted_return(traj: &PyTrajectory, mdp: &PyMdp, gamma: f64) -> PyResult<f64> {
    mdp::discounted_return(&traj.inner, &mdp.inner, gamma).map_err(to_py_err)
}

/// Per-step discount weight of the multi-turn preference loss.
#[pyfunction]
fn discount_weight(t: usize, length: usize, gamma: f64) -> PyResult<f64> {
    losses::discount_weight(t, length, gamma).map_err(to_py_err)
}

/// Trajectory score: discount-weighted, beta-scaled log policy ratios.
#[pyfunction]
fn traj_score(
    policy: &PyTabularPolicy,
    reference: &PyTabularPolicy,
    traj: &PyTrajectory,
    beta: f64,
    gamma: f64,
) -> PyResult<f64> {
    losses::traj_score(&policy.inner, &reference.inner, &traj.inner, beta, gamma)
        .map_err(to_py_err)
}

#[pyfunction]
fn bt_prob_single(r_win: f64, r_lose: f64) -> f64 {
    losses::bt_prob_single(r_win, r_lose)
}

#[pyfunction]
#[pyo3(signature = (pair, mdp, gamma, normalized = true))]
fn bt_prob_traj(pair: &PyPreferencePair, mdp: &PyMdp, gamma: f64, normalized: bool) -> PyResult<f64> {
    losses::bt_prob_traj(&pair.inner, &mdp.inner, gamma, normalized).map_err(to_py_err)
}

fn unwrap_pairs(batch: Vec<PyPreferencePair>) -> Vec<datagen::PreferencePair> {
    batch.into_iter().map(|p| p.inner).collect()
}

#[pyfunction]
#[pyo3(signature = (batch, policy, reference, beta = 0.1, gamma = 0.5))]
fn dmpo_loss(
    batch: Vec<PyPreferencePair>,
    policy: &PyTabularPolicy,
    reference: &PyTabularPolicy,
    beta: f64,
    gamma: f64,
) -> PyResult<PyLossReport> {
    let cfg = build_train_config(beta, gamma, 0.1, 1, 32, 0, "dmpo")?;
    losses::dmpo_loss(&unwrap_pairs(batch), &policy.inner, &reference.inner, &cfg)
        .map(Into::into)
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (batch, policy, reference, beta = 0.1, gamma = 0.5))]
fn dpo_traj_loss(
    batch: Vec<PyPreferencePair>,
    policy: &PyTabularPolicy,
    reference: &PyTabularPolicy,
    beta: f64,
    gamma: f64,
) -> PyResult<PyLossReport> {
    let cfg = build_train_config(beta, gamma, 0.1, 1, 32, 0, "dpo_traj")?;
    losses::dpo_traj_loss(&unwrap_pairs(batch), &policy.inner, &reference.inner, &cfg)
        .map(Into::into)
        .map_err(to_py_err)
}

#[pyfunction]
fn sft_loss(batch: Vec<PyTrajectory>, policy: &PyTabularPolicy) -> PyResult<PyLossReport> {
    let batch: Vec<mdp::Trajectory> = batch.into_iter().map(|t| t.inner).collect();
    losses::sft_loss(&batch, &policy.inner)
        .map(Into::into)
        .map_err(to_py_err)
}

/// Gradient of the DMPO loss with respect to the policy logits.
#[pyfunction]
#[pyo3(signature = (batch, policy, reference, beta = 0.1, gamma = 0.5))]
fn dmpo_grad(
    batch: Vec<PyPreferencePair>,
    policy: &PyTabularPolicy,
    reference: &PyTabularPolicy,
    beta: f64,
    gamma: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = build_train_config(beta, gamma, 0.1, 1, 32, 0, "dmpo")?;
    losses::dmpo_grad(&unwrap_pairs(batch), &policy.inner, &reference.inner, &cfg)
        .map(|g| g.rows().to_vec())
        .map_err(to_py_err)
}

#[pyfunction]
fn saom_exact(mdp: &PyMdp, policy: &PyTabularPolicy, horizon: usize, gamma: f64) -> PyResult<PySaom> {
    occupancy::saom_exact(&mdp.inner, &policy.inner, horizon, gamma)
        .map(|inner| PySaom { inner })
        .map_err(to_py_err)
}

#[pyfunction]
fn saom_monte_carlo(
    mdp: &PyMdp,
    policy: &PyTabularPolicy,
    horizon: usize,
    gamma: f64,
    n: usize,
    seed: u64,
) -> PyResult<PySaom> {
    occupancy::saom_monte_carlo(&mdp.inner, &policy.inner, horizon, gamma, n, seed)
        .map(|inner| PySaom { inner })
        .map_err(to_py_err)
}

#[pyfunction]
fn optimal_saom(mdp: &PyMdp, ref_saom: &PySaom, beta: f64) -> PyResult<PySaomSolution> {
    occupancy::optimal_saom(&mdp.inner, &ref_saom.inner, beta)
        .map(|inner| PySaomSolution { inner })
        .map_err(to_py_err)
}

/// Reward table recovered from an occupancy ratio; off-support entries are NaN.
#[pyfunction]
fn implied_reward(
    d_star: &PySaom,
    ref_saom: &PySaom,
    beta: f64,
    partition_z: f64,
) -> PyResult<Vec<Vec<f64>>> {
    occupancy::implied_reward(&d_star.inner, &ref_saom.inner, beta, partition_z).map_err(to_py_err)
}

#[pyfunction]
fn compounding_error(traj: &PyTrajectory, expert_trajs: Vec<PyTrajectory>) -> PyResult<f64> {
    let experts: Vec<mdp::Trajectory> = expert_trajs.into_iter().map(|t| t.inner).collect();
    occupancy::compounding_error(&traj.inner, &experts).map_err(to_py_err)
}

#[pyfunction]
fn expert_trajectories(mdp: &PyMdp, n: usize, seed: u64) -> PyResult<Vec<PyTrajectory>> {
    datagen::expert_trajectories(&mdp.inner, n, seed)
        .map(|ts| ts.into_iter().map(|inner| PyTrajectory { inner }).collect())
        .map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (mdp, base_policy, n, seed, p_rep = 0.6, p_rand = 0.2))]
fn noisy_lose_trajectories(
    mdp: &PyMdp,
    base_policy: &PyTabularPolicy,
    n: usize,
    seed: u64,
    p_rep: f64,
    p_rand: f64,
) -> PyResult<Vec<PyTrajectory>> {
    let noise = NoiseSpec { p_rep, p_rand };
    datagen::noisy_lose_trajectories(&mdp.inner, &base_policy.inner, n, seed, &noise)
        .map(|ts| ts.into_iter().map(|inner| PyTrajectory { inner }).collect())
        .map_err(to_py_err)
}

#[pyfunction]
fn clean_lose_trajectories(
    mdp: &PyMdp,
    base_policy: &PyTabularPolicy,
    n: usize,
    seed: u64,
) -> PyResult<Vec<PyTrajectory>> {
    datagen::clean_lose_trajectories(&mdp.inner, &base_policy.inner, n, seed)
        .map(|ts| ts.into_iter().map(|inner| PyTrajectory { inner }).collect())
        .map_err(to_py_err)
}

/// Builds a preference dataset; returns (pairs, manifest_json).
#[pyfunction]
#[pyo3(signature = (mdp, base_policy, setting, n_pairs, seed, p_rep = 0.6, p_rand = 0.2, buckets = None, env_name = "custom"))]
#[allow(clippy::too_many_arguments)]
fn build_dataset(
    mdp: &PyMdp,
    base_policy: &PyTabularPolicy,
    setting: &str,
    n_pairs: usize,
    seed: u64,
    p_rep: f64,
    p_rand: f64,
    buckets: Option<Vec<usize>>,
    env_name: &str,
) -> PyResult<(Vec<PyPreferencePair>, String)> {
    let noise = NoiseSpec { p_rep, p_rand };
    let (pairs, manifest) = datagen::build_dataset(
        &mdp.inner,
        &base_policy.inner,
        parse_setting(setting)?,
        n_pairs,
        seed,
        &noise,
        buckets.as_deref(),
        env_name,
    )
    .map_err(to_py_err)?;
    let manifest_json =
        serde_json::to_string(&manifest).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((
        pairs
            .into_iter()
            .map(|inner| PyPreferencePair { inner })
            .collect(),
        manifest_json,
    ))
}

/// Supervised fine-tuning; returns (policy, metrics).
#[pyfunction]
#[pyo3(signature = (mdp, expert, gamma = 0.5, learning_rate = 0.1, epochs = 500, seed = 0, eval_rollouts = 64, eval_temperature_zero = true))]
#[allow(clippy::too_many_arguments)]
fn train_sft(
    mdp: &PyMdp,
    expert: Vec<PyTrajectory>,
    gamma: f64,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
    eval_rollouts: usize,
    eval_temperature_zero: bool,
) -> PyResult<(PyTabularPolicy, Vec<PyMetricsRecord>)> {
    let cfg = build_train_config(0.1, gamma, learning_rate, epochs, 32, seed, "sft")?;
    let eval = trainer::EvalSettings {
        rollouts: eval_rollouts,
        temperature_zero: eval_temperature_zero,
    };
    let expert: Vec<mdp::Trajectory> = expert.into_iter().map(|t| t.inner).collect();
    let (policy, metrics) =
        trainer::train_sft(&mdp.inner, &expert, &cfg, &eval).map_err(to_py_err)?;
    Ok((
        PyTabularPolicy { inner: policy },
        metrics.into_iter().map(Into::into).collect(),
    ))
}

/// Preference training with the DMPO or trajectory-DPO loss; returns
/// (policy, metrics).
#[pyfunction]
#[pyo3(signature = (mdp, dataset, reference, loss_kind = "dmpo", beta = 0.1, gamma = 0.5, learning_rate = 0.1, epochs = 500, batch_size = 32, seed = 0, eval_rollouts = 64, eval_temperature_zero = true))]
#[allow(clippy::too_many_arguments)]
fn train_preference(
    mdp: &PyMdp,
    dataset: Vec<PyPreferencePair>,
    reference: &PyTabularPolicy,
    loss_kind: &str,
    beta: f64,
    gamma: f64,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    eval_rollouts: usize,
    eval_temperature_zero: bool,
) -> PyResult<(PyTabularPolicy, Vec<PyMetricsRecord>)> {
    let cfg = build_train_config(beta, gamma, learning_rate, epochs, batch_size, seed, loss_kind)?;
    let eval = trainer::EvalSettings {
        rollouts: eval_rollouts,
        temperature_zero: eval_temperature_zero,
    };
    let (policy, metrics) = trainer::train_preference(
        &mdp.inner,
        &unwrap_pairs(dataset),
        &reference.inner,
        &cfg,
        &eval,
    )
    .map_err(to_py_err)?;
    Ok((
        PyTabularPolicy { inner: policy },
        metrics.into_iter().map(Into::into).collect(),
    ))
}

#[pymodule]
fn dmpo_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyMdp>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyTabularPolicy>()?;
    m.add_class::<PyPreferencePair>()?;
    m.add_class::<PySaom>()?;
    m.add_class::<PySaomSolution>()?;
    m.add_class::<PyLossReport>()?;
    m.add_class::<PyMetricsRecord>()?;
    m.add_function(wrap_pyfunction!(make_env, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_return, m)?)?;
    m.add_function(wrap_pyfunction!(discount_weight, m)?)?;
    m.add_function(wrap_pyfunction!(traj_score, m)?)?;
    m.add_function(wrap_pyfunction!(bt_prob_single, m)?)?;
    m.add_function(wrap_pyfunction!(bt_prob_traj, m)?)?;
    m.add_function(wrap_pyfunction!(dmpo_loss, m)?)?;
    m.add_function(wrap_pyfunction!(dpo_traj_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sft_loss, m)?)?;
    m.add_function(wrap_pyfunction!(dmpo_grad, m)?)?;
    m.add_function(wrap_pyfunction!(saom_exact, m)?)?;
    m.add_function(wrap_pyfunction!(saom_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_saom, m)?)?;
    m.add_function(wrap_pyfunction!(implied_reward, m)?)?;
    m.add_function(wrap_pyfunction!(compounding_error, m)?)?;
    m.add_function(wrap_pyfunction!(expert_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_lose_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(clean_lose_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_sft, m)?)?;
    m.add_function(wrap_pyfunction!(train_preference, m)?)?;
    Ok(())
}
