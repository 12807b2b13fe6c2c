use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::agents::RedPolicyName;
use crate::env::{EnvConfig, TurnOrder};
use crate::ppo::Hyperparameters;
use crate::stats::StatsOptions;

/// A configuration together with the name it is reported under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled<T> {
    pub label: String,
    pub config: T,
}

impl<T> Labeled<T> {
    pub fn new(label: impl Into<String>, config: T) -> Self {
        Labeled {
            label: label.into(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    TurnOrder,
    Adversary,
    HparamAblation,
}

impl PlanKind {
    pub const ALL: [PlanKind; 3] = [PlanKind::TurnOrder, PlanKind::Adversary, PlanKind::HparamAblation];

    pub fn name(self) -> &'static str {
        match self {
            PlanKind::TurnOrder => "turn_order",
            PlanKind::Adversary => "adversary",
            PlanKind::HparamAblation => "hparam_ablation",
        }
    }
}

impl FromStr for PlanKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlanKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExperimentError::UnknownPlan(s.to_string()))
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Seconds-scale plumbing run.
    Smoke,
    Desk,
    Full,
}

impl Preset {
    pub fn n_runs(self) -> usize {
        match self {
            Preset::Smoke => 2,
            Preset::Desk => 5,
            Preset::Full => 20,
        }
    }

    pub fn total_timesteps(self) -> u64 {
        match self {
            Preset::Smoke => 2048,
            Preset::Desk => 500_000,
            Preset::Full => 2_500_000,
        }
    }

    pub fn eval_every(self) -> u64 {
        match self {
            Preset::Smoke => 1024,
            _ => 50_000,
        }
    }

    pub fn eval_episodes(self) -> usize {
        match self {
            Preset::Smoke => 5,
            _ => 100,
        }
    }
}

impl FromStr for Preset {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(ExperimentError::InvalidPlan(format!("unknown preset {other:?}"))),
        }
    }
}

/// Single-parameter alternatives compared against the default set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltValues {
    pub learning_rate: f64,
    pub gamma: f64,
    pub clip_range: f64,
}

impl Default for AltValues {
    fn default() -> Self {
        AltValues {
            learning_rate: 3e-5,
            gamma: 0.90,
            clip_range: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: PlanKind,
    #[serde(default)]
    pub seed: u64,
    pub n_runs: usize,
    pub eval_episodes: usize,
    pub eval_every: u64,
    /// Training variants, also used as evaluation columns for matrices.
    pub env_variants: Vec<Labeled<EnvConfig>>,
    pub hparam_variants: Vec<Labeled<Hyperparameters>>,
    #[serde(default)]
    pub stats: StatsOptions,
    #[serde(default = "default_window")]
    pub convergence_window: usize,
    #[serde(default = "default_epsilon")]
    pub convergence_epsilon: f64,
}

fn default_window() -> usize {
    10
}

fn default_epsilon() -> f64 {
    0.05
}

fn env_with(turn_order: TurnOrder, red: RedPolicyName) -> EnvConfig {
    EnvConfig {
        turn_order,
        red_policy_name: red,
        ..EnvConfig::default()
    }
}

impl ExperimentPlan {
    pub fn preset(kind: PlanKind, preset: Preset) -> Self {
        let hp = Hyperparameters {
            total_timesteps: preset.total_timesteps(),
            n_steps: if preset == Preset::Smoke { 512 } else { 2048 },
            ..Hyperparameters::default()
        };
        let (env_variants, hparam_variants) = match kind {
            PlanKind::TurnOrder => (
                [TurnOrder::RedThenBlue, TurnOrder::BlueThenRed, TurnOrder::MixedPerStep]
                    .into_iter()
                    .map(|o| Labeled::new(o.label(), env_with(o, RedPolicyName::BLine)))
                    .collect(),
                vec![Labeled::new("Default", hp)],
            ),
            PlanKind::Adversary => (
                [
                    RedPolicyName::BLine,
                    RedPolicyName::Meander,
                    RedPolicyName::MixedPerEpisode,
                ]
                .into_iter()
                .map(|r| Labeled::new(r.label(), env_with(TurnOrder::BlueThenRed, r)))
                .collect(),
                vec![Labeled::new("Default", hp)],
            ),
            PlanKind::HparamAblation => (
                vec![Labeled::new(
                    "B-line",
                    env_with(TurnOrder::BlueThenRed, RedPolicyName::BLine),
                )],
                ablation_variants(&hp, AltValues::default()),
            ),
        };
        ExperimentPlan {
            name: kind,
            seed: 0,
            n_runs: preset.n_runs(),
            eval_episodes: preset.eval_episodes(),
            eval_every: preset.eval_every(),
            env_variants,
            hparam_variants,
            stats: StatsOptions::default(),
            convergence_window: default_window(),
            convergence_epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidPlan(m));
        if self.n_runs < 2 {
            return bad(format!("n_runs {} < 2; intervals need two runs", self.n_runs));
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.env_variants.is_empty() || self.hparam_variants.is_empty() {
            return bad("variant lists must be non-empty".into());
        }
        if self.name != PlanKind::HparamAblation && self.hparam_variants.len() != 1 {
            return bad("matrix plans take exactly one hyperparameter set".into());
        }
        for (i, v) in self.env_variants.iter().enumerate() {
            v.config
                .validate()
                .map_err(|e| ExperimentError::InvalidPlan(format!("env variant {}: {e}", v.label)))?;
            if self.env_variants[..i].iter().any(|o| o.label == v.label) {
                return bad(format!("duplicate env label {}", v.label));
            }
        }
        for (i, v) in self.hparam_variants.iter().enumerate() {
            v.config
                .validate()
                .map_err(|e| ExperimentError::InvalidPlan(format!("hparam variant {}: {e}", v.label)))?;
            if self.hparam_variants[..i].iter().any(|o| o.label == v.label) {
                return bad(format!("duplicate hparam label {}", v.label));
            }
        }
        Ok(())
    }
}

/// Default plus one variant per altered parameter.
pub fn ablation_variants(base: &Hyperparameters, alt: AltValues) -> Vec<Labeled<Hyperparameters>> {
    vec![
        Labeled::new("Default HPs", base.clone()),
        Labeled::new(
            "Alt Learning Rate",
            Hyperparameters {
                learning_rate: alt.learning_rate,
                ..base.clone()
            },
        ),
        Labeled::new(
            "Alt Discount Factor",
            Hyperparameters {
                gamma: alt.gamma,
                ..base.clone()
            },
        ),
        Labeled::new(
            "Alt Clipping",
            Hyperparameters {
                clip_range: alt.clip_range,
                ..base.clone()
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in PlanKind::ALL {
            for preset in [Preset::Smoke, Preset::Desk, Preset::Full] {
                let plan = ExperimentPlan::preset(kind, preset);
                plan.validate().unwrap();
                let json = serde_json::to_string(&plan).unwrap();
                assert_eq!(serde_json::from_str::<ExperimentPlan>(&json).unwrap(), plan);
            }
        }
    }

    #[test]
    fn desk_and_full_scales() {
        let desk = ExperimentPlan::preset(PlanKind::TurnOrder, Preset::Desk);
        assert_eq!(desk.n_runs, 5);
        assert_eq!(desk.hparam_variants[0].config.total_timesteps, 500_000);
        let full = ExperimentPlan::preset(PlanKind::HparamAblation, Preset::Full);
        assert_eq!(full.n_runs, 20);
        assert_eq!(full.hparam_variants.len(), 4);
        assert_eq!(full.hparam_variants[1].config.learning_rate, 3e-5);
        assert_eq!(full.hparam_variants[2].config.gamma, 0.90);
        assert_eq!(full.hparam_variants[3].config.clip_range, 0.05);
    }

    #[test]
    fn adversary_plan_keeps_blue_first() {
        let plan = ExperimentPlan::preset(PlanKind::Adversary, Preset::Desk);
        assert!(plan
            .env_variants
            .iter()
            .all(|v| v.config.turn_order == TurnOrder::BlueThenRed));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let mut plan = ExperimentPlan::preset(PlanKind::TurnOrder, Preset::Smoke);
        plan.n_runs = 1;
        assert!(plan.validate().is_err());
        let mut plan = ExperimentPlan::preset(PlanKind::TurnOrder, Preset::Smoke);
        plan.env_variants.clear();
        assert!(plan.validate().is_err());
        assert!("fig3".parse::<PlanKind>().is_err());
    }
}
