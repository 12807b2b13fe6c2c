use serde::{Deserialize, Serialize};

use super::state::{NetworkState, StepEvent, StepEventKind};
use super::topology::{HostId, Subnet};

pub const USER_HOST_PENALTY: f64 = -0.1;
pub const ENTERPRISE_HOST_PENALTY: f64 = -1.0;
pub const CRITICAL_SERVER_PENALTY: f64 = -1.0;
pub const OPERATIONAL_HOST_PENALTY: f64 = -0.1;
pub const IMPACT_PENALTY: f64 = -10.0;
pub const RESTORE_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub per_host_compromise_penalty: f64,
    pub impact_penalty: f64,
    pub restore_penalty: f64,
    pub total: f64,
}

/// Per-host compromise penalty for a privileged foothold on `host`.
pub fn compromise_penalty(host: HostId) -> f64 {
    match host.subnet() {
        Subnet::User => USER_HOST_PENALTY,
        Subnet::Enterprise => ENTERPRISE_HOST_PENALTY,
        Subnet::Operational if host.is_critical_server() => CRITICAL_SERVER_PENALTY,
        Subnet::Operational => OPERATIONAL_HOST_PENALTY,
    }
}

/// Penalties for the post-step state plus this step's events. A host counts
/// as compromised while red holds privileged access, every step.
pub fn compute_reward(state: &NetworkState, events: &[StepEvent]) -> RewardBreakdown {
    let per_host_compromise_penalty: f64 = HostId::all()
        .filter(|&h| state.host(h).is_compromised())
        .map(compromise_penalty)
        .sum();
    let count = |kind| events.iter().filter(|e| e.kind == kind).count() as f64;
    let impact_penalty = IMPACT_PENALTY * count(StepEventKind::ImpactSucceeded);
    let restore_penalty = RESTORE_PENALTY * count(StepEventKind::BlueRestored);
    RewardBreakdown {
        per_host_compromise_penalty,
        impact_penalty,
        restore_penalty,
        total: per_host_compromise_penalty + impact_penalty + restore_penalty,
    }
}
