//! Built-in toy multi-turn environments.
//!
//! Three environments cover the reward shapes of the agent benchmarks this
//! crate imitates at desk scale: `chain` (graded progress reward, stochastic
//! slips), `shop` (decision tree with graded terminal rewards), and `grid`
//! (binary terminal reward).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

/// Environment name plus parameters, as written in experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum EnvSpec {
    /// Linear chain of `n_states` states. Action 1 advances toward the goal
    /// (the last state) but slips backward with probability `slip`; action 0
    /// always steps backward. Advancing from state s earns
    /// (s+1)/(n_states-1), so the final step's reward grades how far the
    /// agent got; the goal is absorbing and pays 1 per step. The default
    /// horizon n_states-1 is exactly the distance to the goal.
    Chain {
        n_states: usize,
        slip: f64,
        #[serde(default)]
        max_horizon: Option<usize>,
    },
    /// Complete decision tree with `branching` actions per node and decision
    /// levels 0..=depth; every level-`depth` node leads to a terminal, and
    /// that last action earns a pseudo-random graded reward in [0, 1] derived
    /// from `reward_seed`.
    Shop {
        depth: usize,
        branching: usize,
        #[serde(default)]
        reward_seed: u64,
    },
    /// `width` x `height` gridworld. Actions move up/down/left/right (walls
    /// block), the far corner is the terminal goal, and only the action
    /// stepping onto the goal is rewarded (binary). Moves are replaced by a
    /// uniformly random direction with probability `slip`.
    Grid {
        width: usize,
        height: usize,
        slip: f64,
        #[serde(default)]
        max_horizon: Option<usize>,
    },
}

impl EnvSpec {
    /// The environment identifier, as used in dataset manifests.
    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Chain { .. } => "chain",
            EnvSpec::Shop { .. } => "shop",
            EnvSpec::Grid { .. } => "grid",
        }
    }
}

/// Builds one of the built-in environments.
pub fn make_env(spec: &EnvSpec) -> Result<Mdp> {
    match *spec {
        EnvSpec::Chain {
            n_states,
            slip,
            max_horizon,
        } => chain(n_states, slip, max_horizon),
        EnvSpec::Shop {
            depth,
            branching,
            reward_seed,
        } => shop(depth, branching, reward_seed),
        EnvSpec::Grid {
            width,
            height,
            slip,
            max_horizon,
        } => grid(width, height, slip, max_horizon),
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Chain actions: 0 steps backward, 1 advances.
pub const CHAIN_BACK: usize = 0;
/// Chain actions: 0 steps backward, 1 advances.
pub const CHAIN_ADVANCE: usize = 1;

fn chain(n_states: usize, slip: f64, max_horizon: Option<usize>) -> Result<Mdp> {
    if n_states < 2 {
        return Err(Error::validation("chain needs at least 2 states"));
    }
    check_prob("slip", slip)?;
    let goal = n_states - 1;
    let horizon = max_horizon.unwrap_or(n_states - 1);
    let n_actions = 2;
    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        if s == goal {
            // absorbing goal: both actions stay and pay the full reward,
            // so arriving earlier always dominates and no policy can gain
            // by stalling short of the goal
            transition[s][CHAIN_BACK][s] = 1.0;
            transition[s][CHAIN_ADVANCE][s] = 1.0;
            reward[s][CHAIN_BACK] = 1.0;
            reward[s][CHAIN_ADVANCE] = 1.0;
            continue;
        }
        let back = s.saturating_sub(1);
        transition[s][CHAIN_BACK][back] = 1.0;
        transition[s][CHAIN_ADVANCE][s + 1] += 1.0 - slip;
        transition[s][CHAIN_ADVANCE][back] += slip;
        reward[s][CHAIN_ADVANCE] = (s + 1) as f64 / goal as f64;
    }
    let mut initial_dist = vec![0.0; n_states];
    initial_dist[0] = 1.0;
    Mdp::new(
        n_states,
        n_actions,
        transition,
        reward,
        initial_dist,
        BTreeSet::new(),
        horizon,
    )
}

/// splitmix64-style hash used to grade shop rewards.
fn hash_reward(seed: u64, leaf: usize, action: usize) -> f64 {
    let mut x = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add((leaf as u64).wrapping_mul(0xd1b54a32d192ed03))
        .wrapping_add((action as u64).wrapping_mul(0x8cb92ba72f3d8dd7));
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn shop(depth: usize, branching: usize, reward_seed: u64) -> Result<Mdp> {
    if branching < 2 {
        return Err(Error::validation("shop needs branching >= 2"));
    }
    if depth == 0 {
        return Err(Error::validation("shop needs depth >= 1"));
    }
    // Decision levels 0..=depth, then one terminal layer.
    let mut level_start = Vec::with_capacity(depth + 2);
    let mut count = 1usize;
    let mut total = 0usize;
    for _ in 0..=depth {
        level_start.push(total);
        total += count;
        count *= branching;
    }
    let terminal_start = total;
    let n_terminals = count; // branching^(depth+1)
    let n_states = total + n_terminals;
    let n_actions = branching;

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    let mut terminal_states = BTreeSet::new();
    for t in terminal_start..n_states {
        terminal_states.insert(t);
        for a in 0..n_actions {
            transition[t][a][t] = 1.0;
        }
    }
    // level l node i (0-based within level) at index level_start[l] + i;
    // child a sits at position i*branching + a of the next layer.
    for l in 0..=depth {
        let width = branching.pow(l as u32);
        for i in 0..width {
            let s = level_start[l] + i;
            for a in 0..n_actions {
                let child_pos = i * branching + a;
                let child = if l == depth {
                    terminal_start + child_pos
                } else {
                    level_start[l + 1] + child_pos
                };
                transition[s][a][child] = 1.0;
                if l == depth {
                    reward[s][a] = hash_reward(reward_seed, i, a);
                }
            }
        }
    }
    let mut initial_dist = vec![0.0; n_states];
    initial_dist[0] = 1.0;
    Mdp::new(
        n_states,
        n_actions,
        transition,
        reward,
        initial_dist,
        terminal_states,
        depth + 1,
    )
}

fn grid(width: usize, height: usize, slip: f64, max_horizon: Option<usize>) -> Result<Mdp> {
    if width * height < 2 {
        return Err(Error::validation("grid needs at least 2 cells"));
    }
    check_prob("slip", slip)?;
    let n_states = width * height;
    let n_actions = 4; // up, down, left, right
    let goal = n_states - 1;
    let horizon = max_horizon.unwrap_or(4 * (width + height));

    let neighbor = |s: usize, dir: usize| -> usize {
        let (x, y) = (s % width, s / width);
        let (nx, ny) = match dir {
            0 => (x, y.saturating_sub(1)),                  // up
            1 => (x, (y + 1).min(height - 1)),              // down
            2 => (x.saturating_sub(1), y),                  // left
            _ => ((x + 1).min(width - 1), y),               // right
        };
        ny * width + nx
    };

    let mut transition = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
    let mut reward = vec![vec![0.0; n_actions]; n_states];
    for s in 0..n_states {
        if s == goal {
            for a in 0..n_actions {
                transition[s][a][s] = 1.0;
            }
            continue;
        }
        for a in 0..n_actions {
            transition[s][a][neighbor(s, a)] += 1.0 - slip;
            for d in 0..4 {
                transition[s][a][neighbor(s, d)] += slip / 4.0;
            }
            if neighbor(s, a) == goal {
                reward[s][a] = 1.0;
            }
        }
    }
    let mut initial_dist = vec![0.0; n_states];
    initial_dist[0] = 1.0;
    Mdp::new(
        n_states,
        n_actions,
        transition,
        reward,
        initial_dist,
        BTreeSet::from([goal]),
        horizon,
    )
}
