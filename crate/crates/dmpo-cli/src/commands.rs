//! The gen / train / sweep pipelines. Every command is a pure function of
//! its config: reruns produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use dmpo_core::datagen::{
    build_dataset, expert_trajectories, save_manifest, save_pairs_jsonl, PreferencePair,
};
use dmpo_core::losses::LossKind;
use dmpo_core::trainer::{gamma_sweep, length_sweep, metrics_csv, sweep_csv, train_preference, train_sft};
use dmpo_core::{make_env, Error, Mdp, Result, TabularPolicy, TrainConfig};

use crate::config::ExperimentConfig;

/// Which sweep axis to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    Length,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "length" => Ok(SweepAxis::Length),
            other => Err(format!("unknown sweep axis '{other}' (expected gamma or length)")),
        }
    }
}

fn ensure_output_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.output_dir)?;
    Ok(config.output_dir.clone())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Environment + expert trajectories + SFT reference, shared by every
/// pipeline. The SFT stage reuses the experiment's training hyperparameters
/// with the loss switched to `sft`.
pub struct Pipeline {
    pub mdp: Mdp,
    pub sft_policy: TabularPolicy,
    pub reference: TabularPolicy,
    pub sft_metrics: Vec<dmpo_core::MetricsRecord>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Pipeline> {
    let mdp = make_env(&config.env)?;
    let experts = expert_trajectories(&mdp, config.dataset.n_pairs, config.train.seed)?;
    let sft_cfg = TrainConfig {
        loss_kind: LossKind::Sft,
        ..config.train.clone()
    };
    let (sft_policy, sft_metrics) = train_sft(&mdp, &experts, &sft_cfg, &config.eval)?;
    let reference = sft_policy.frozen_copy();
    Ok(Pipeline {
        mdp,
        sft_policy,
        reference,
        sft_metrics,
    })
}

/// Builds the dataset the config describes, using the SFT policy to generate
/// lose trajectories.
pub fn dataset_for(config: &ExperimentConfig, pipeline: &Pipeline) -> Result<Vec<PreferencePair>> {
    let (pairs, _) = build_dataset(
        &pipeline.mdp,
        &pipeline.sft_policy,
        config.setting,
        config.dataset.n_pairs,
        config.train.seed,
        &config.dataset.noise,
        config.dataset.buckets.as_deref(),
        config.env.name(),
    )?;
    Ok(pairs)
}

/// `gen`: writes dataset.jsonl and manifest.json.
pub fn cmd_gen(config: &ExperimentConfig) -> Result<()> {
    let dir = ensure_output_dir(config)?;
    let pipeline = prepare(config)?;
    let (pairs, manifest) = build_dataset(
        &pipeline.mdp,
        &pipeline.sft_policy,
        config.setting,
        config.dataset.n_pairs,
        config.train.seed,
        &config.dataset.noise,
        config.dataset.buckets.as_deref(),
        config.env.name(),
    )?;
    save_pairs_jsonl(&dir.join("dataset.jsonl"), &pairs)?;
    save_manifest(&dir.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} pairs ({} setting) to {}",
        manifest.pairs,
        manifest.setting,
        dir.display()
    );
    Ok(())
}

/// `train`: writes policy.json and metrics.csv; preference runs also write
/// ref_policy.json (the frozen SFT reference).
pub fn cmd_train(config: &ExperimentConfig) -> Result<()> {
    let dir = ensure_output_dir(config)?;
    let pipeline = prepare(config)?;
    match config.train.loss_kind {
        LossKind::Sft => {
            write_json(&dir.join("policy.json"), &pipeline.reference)?;
            write_text(&dir.join("metrics.csv"), &metrics_csv(&pipeline.sft_metrics))?;
        }
        LossKind::Dmpo | LossKind::DpoTraj => {
            let dataset = dataset_for(config, &pipeline)?;
            let (policy, metrics) = train_preference(
                &pipeline.mdp,
                &dataset,
                &pipeline.reference,
                &config.train,
                &config.eval,
            )?;
            write_json(&dir.join("policy.json"), &policy)?;
            write_json(&dir.join("ref_policy.json"), &pipeline.reference)?;
            write_text(&dir.join("metrics.csv"), &metrics_csv(&metrics))?;
        }
    }
    println!(
        "trained {} for {} epochs; outputs in {}",
        config.train.loss_kind,
        config.train.epochs,
        dir.display()
    );
    Ok(())
}

/// `sweep`: writes sweep.csv for the chosen axis.
pub fn cmd_sweep(config: &ExperimentConfig, axis: SweepAxis) -> Result<()> {
    let dir = ensure_output_dir(config)?;
    let pipeline = prepare(config)?;
    let seeds = config.sweep_seeds();
    let rows = match axis {
        SweepAxis::Gamma => {
            let noisy = {
                let (pairs, _) = build_dataset(
                    &pipeline.mdp,
                    &pipeline.sft_policy,
                    dmpo_core::Setting::Noisy,
                    config.dataset.n_pairs,
                    config.train.seed,
                    &config.dataset.noise,
                    None,
                    config.env.name(),
                )?;
                pairs
            };
            let clean = {
                let (pairs, _) = build_dataset(
                    &pipeline.mdp,
                    &pipeline.sft_policy,
                    dmpo_core::Setting::Clean,
                    config.dataset.n_pairs,
                    config.train.seed,
                    &config.dataset.noise,
                    None,
                    config.env.name(),
                )?;
                pairs
            };
            gamma_sweep(
                &pipeline.mdp,
                &noisy,
                &clean,
                &pipeline.reference,
                &config.train,
                &config.sweep.gammas,
                &seeds,
                &config.eval,
            )?
        }
        SweepAxis::Length => {
            let buckets = &config.sweep.buckets;
            if buckets.len() < 2 {
                return Err(Error::Validation("length sweep needs at least 2 buckets".into()));
            }
            if !config.dataset.n_pairs.is_multiple_of(buckets.len()) {
                return Err(Error::Validation(format!(
                    "n_pairs = {} does not divide into {} buckets",
                    config.dataset.n_pairs,
                    buckets.len()
                )));
            }
            length_sweep(
                &pipeline.mdp,
                &pipeline.sft_policy,
                &pipeline.reference,
                &config.train,
                buckets,
                config.dataset.n_pairs / buckets.len(),
                &config.dataset.noise,
                &seeds,
                &config.eval,
            )?
        }
    };
    write_text(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    println!("wrote {} sweep rows to {}", rows.len(), dir.display());
    Ok(())
}
