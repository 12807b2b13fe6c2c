use serde::{Deserialize, Serialize};

use super::state::{AccessLevel, HostView, NetworkState, RedActivity, ScanRecency};
use super::topology::{HostId, NUM_HOSTS};

pub const OBS_DIM: usize = 6 * NUM_HOSTS;
const SCAN_OFFSET: usize = 4 * NUM_HOSTS;
const DECOY_OFFSET: usize = 5 * NUM_HOSTS;

/// 78-value defender observation: 4 activity/access bits per host, then one
/// scan value per host, then remaining decoys per host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlueObservation {
    pub values: Vec<f64>,
}

impl BlueObservation {
    pub fn activity_bits(&self, h: HostId) -> (f64, f64) {
        let i = 4 * h.index();
        (self.values[i], self.values[i + 1])
    }

    pub fn access_bits(&self, h: HostId) -> (f64, f64) {
        let i = 4 * h.index() + 2;
        (self.values[i], self.values[i + 1])
    }

    pub fn scan(&self, h: HostId) -> f64 {
        self.values[SCAN_OFFSET + h.index()]
    }

    pub fn decoys(&self, h: HostId) -> f64 {
        self.values[DECOY_OFFSET + h.index()]
    }
}

/// Per-host flags: `true` hides this step's successful exploit on that host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NoiseDraws {
    pub hidden: [bool; NUM_HOSTS],
}

fn activity_pair(activity: RedActivity) -> (f64, f64) {
    match activity {
        RedActivity::None => (0.0, 0.0),
        RedActivity::Scanned => (1.0, 0.0),
        RedActivity::Exploited => (1.0, 1.0),
    }
}

fn access_pair(access: AccessLevel) -> (f64, f64) {
    match access {
        AccessLevel::None => (0.0, 0.0),
        AccessLevel::Unknown => (1.0, 0.0),
        AccessLevel::User => (0.0, 1.0),
        AccessLevel::Privileged => (1.0, 1.0),
    }
}

/// Access level as blue perceives it. Analysis reveals the true level.
/// Without it, access is only visible on hosts with observed red activity,
/// privilege escalation looks like user access, and a host with exploit
/// evidence but no foothold reads as unknown.
fn perceived_access(view: HostView) -> AccessLevel {
    if view.analyzed {
        return view.red_access;
    }
    if view.red_activity == RedActivity::None {
        return AccessLevel::None;
    }
    match view.red_access {
        AccessLevel::None if view.red_activity == RedActivity::Exploited => AccessLevel::Unknown,
        AccessLevel::None => AccessLevel::None,
        AccessLevel::Unknown => AccessLevel::Unknown,
        AccessLevel::User | AccessLevel::Privileged => AccessLevel::User,
    }
}

pub fn encode_observation(state: &NetworkState, noise: &NoiseDraws) -> BlueObservation {
    let mut values = vec![0.0; OBS_DIM];
    for h in HostId::all() {
        let i = h.index();
        let host = state.host(h);
        let view = match state.pre_exploit[i] {
            Some(before) if noise.hidden[i] => before,
            _ => host.view(),
        };
        let (a0, a1) = activity_pair(view.red_activity);
        let (c0, c1) = access_pair(perceived_access(view));
        values[4 * i..4 * i + 4].copy_from_slice(&[a0, a1, c0, c1]);
        values[SCAN_OFFSET + i] = match host.scan_recency {
            ScanRecency::Never => 0.0,
            ScanRecency::Past => 1.0,
            ScanRecency::Current => 2.0,
        };
        values[DECOY_OFFSET + i] = host.decoys_remaining as f64;
    }
    BlueObservation { values }
}
