//! Line-delimited JSON episode export.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{BlueAction, BlueObservation, RedAction, RewardBreakdown, StepEvent, StepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u32,
    pub blue_action: BlueAction,
    pub red_action: RedAction,
    /// Which scripted attacker chose `red_action`.
    pub red_policy: String,
    pub blue_first: bool,
    pub reward_breakdown: RewardBreakdown,
    pub events: Vec<StepEvent>,
    pub observation: BlueObservation,
}

impl TraceRecord {
    pub fn from_outcome(step: u32, red_policy: &str, outcome: &StepOutcome) -> Self {
        TraceRecord {
            step,
            blue_action: outcome.blue_action,
            red_action: outcome.red_action,
            red_policy: red_policy.to_string(),
            blue_first: outcome.blue_first,
            reward_breakdown: outcome.reward,
            events: outcome.events.clone(),
            observation: outcome.observation.clone(),
        }
    }
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace(text: &str) -> serde_json::Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
