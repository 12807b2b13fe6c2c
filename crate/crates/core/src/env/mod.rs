//! Rule-based simulator of a 13-host enterprise network under attack.

mod action;
mod observation;
mod resolve;
mod reward;
mod state;
mod topology;
pub mod trace;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use action::{BlueAction, RedAction, NUM_BLUE_ACTIONS, NUM_RED_ACTIONS};
pub use observation::{encode_observation, BlueObservation, NoiseDraws, OBS_DIM};
pub use resolve::{resolve_blue, resolve_red};
pub use reward::{compromise_penalty, compute_reward, RewardBreakdown};
pub use state::{AccessLevel, HostTrueState, NetworkState, RedActivity, ScanRecency, StepEvent, StepEventKind};
pub use topology::{
    HostId, ServiceId, Subnet, CRITICAL_SERVER, DECOY_SERVICE_BASE, DEFENDER_HOST, ENTRY_HOST, NUM_HOSTS,
};

use crate::agents::{RedAgent, RedPolicyName, BLINE_WAYPOINTS};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("episode is done; reset before stepping again")]
    EpisodeDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TurnOrder {
    RedThenBlue,
    BlueThenRed,
    /// Fair coin from the episode RNG at every step.
    MixedPerStep,
}

impl TurnOrder {
    pub fn label(self) -> &'static str {
        match self {
            TurnOrder::RedThenBlue => "R->B",
            TurnOrder::BlueThenRed => "B->R",
            TurnOrder::MixedPerStep => "Mixed",
        }
    }
}

pub const DEFAULT_DECOY_BUDGET: u32 = 2;

fn default_decoy_budgets() -> BTreeMap<HostId, u32> {
    HostId::all().map(|h| (h, DEFAULT_DECOY_BUDGET)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub episode_length: u32,
    pub observation_noise_prob: f64,
    pub turn_order: TurnOrder,
    pub red_policy_name: RedPolicyName,
    /// Hosts missing from the map get no decoys.
    #[serde(default = "default_decoy_budgets")]
    pub decoy_budgets: BTreeMap<HostId, u32>,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            episode_length: 100,
            observation_noise_prob: 0.05,
            turn_order: TurnOrder::BlueThenRed,
            red_policy_name: RedPolicyName::BLine,
            decoy_budgets: default_decoy_budgets(),
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.episode_length == 0 {
            return Err(EnvError::InvalidConfig("episode_length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.observation_noise_prob) {
            return Err(EnvError::InvalidConfig(format!(
                "observation_noise_prob {} outside [0, 1]",
                self.observation_noise_prob
            )));
        }
        Ok(())
    }

    pub fn budgets(&self) -> [u32; NUM_HOSTS] {
        let mut out = [0; NUM_HOSTS];
        for (h, &b) in &self.decoy_budgets {
            out[h.index()] = b;
        }
        out
    }
}

/// Everything one call to [`Environment::step`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: BlueObservation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub events: Vec<StepEvent>,
    pub blue_action: BlueAction,
    pub red_action: RedAction,
    pub blue_first: bool,
}

pub struct Environment {
    config: EnvConfig,
    budgets: [u32; NUM_HOSTS],
    red: RedAgent,
    state: Option<NetworkState>,
}

impl Environment {
    /// Builds an environment. [`Environment::reset`] must be called before
    /// the first step.
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        if let Some(bad) = config.decoy_budgets.keys().find(|h| h.index() >= NUM_HOSTS) {
            return Err(EnvError::InvalidConfig(format!("unknown host {}", bad.index())));
        }
        let red = RedAgent::new(config.red_policy_name, config.seed);
        Ok(Environment {
            budgets: config.budgets(),
            config,
            red,
            state: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&NetworkState> {
        self.state.as_ref()
    }

    /// Mutable access to the ground truth, for scenario construction in tests
    /// and tooling.
    pub fn state_mut(&mut self) -> Option<&mut NetworkState> {
        self.state.as_mut()
    }

    pub fn red_agent(&self) -> &RedAgent {
        &self.red
    }

    pub fn is_done(&self) -> bool {
        self.state
            .as_ref()
            .is_none_or(|s| s.step_index >= self.config.episode_length)
    }

    pub fn reset(&mut self, seed: u64) -> BlueObservation {
        let mut state = NetworkState::new(&self.budgets, ChaCha8Rng::seed_from_u64(seed));
        state.red.waypoint = BLINE_WAYPOINTS[state.rng.random_range(0..BLINE_WAYPOINTS.len())];
        self.red.begin_episode();
        let obs = encode_observation(&state, &NoiseDraws::default());
        self.state = Some(state);
        obs
    }

    pub fn step(&mut self, blue_action: BlueAction) -> Result<StepOutcome, EnvError> {
        let episode_length = self.config.episode_length;
        let noise_prob = self.config.observation_noise_prob;
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if state.step_index >= episode_length {
            return Err(EnvError::EpisodeDone);
        }
        state.begin_step();

        // Both sides choose from the same pre-step state.
        let red_action = self.red.next_action(&mut state.red);
        let blue_first = match self.config.turn_order {
            TurnOrder::BlueThenRed => true,
            TurnOrder::RedThenBlue => false,
            TurnOrder::MixedPerStep => state.rng.random_bool(0.5),
        };
        if blue_first {
            resolve_blue(state, blue_action);
            resolve_red(state, red_action);
        } else {
            resolve_red(state, red_action);
            resolve_blue(state, blue_action);
        }
        state.step_index += 1;

        let events = state.pending_events.clone();
        let reward = compute_reward(state, &events);
        let mut noise = NoiseDraws::default();
        for e in events.iter().filter(|e| e.kind == StepEventKind::ExploitSucceeded) {
            if state.rng.random_bool(noise_prob) {
                noise.hidden[e.host.index()] = true;
            }
        }
        let observation = encode_observation(state, &noise);
        Ok(StepOutcome {
            observation,
            reward,
            done: state.step_index >= episode_length,
            events,
            blue_action,
            red_action,
            blue_first,
        })
    }
}
