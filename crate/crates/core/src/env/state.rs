use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::topology::{HostId, ServiceId, Subnet, ENTRY_HOST, NUM_HOSTS};
use crate::agents::RedKnowledge;

/// Most advanced red activity seen on a host since its last restore.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RedActivity {
    None,
    Scanned,
    Exploited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessLevel {
    None,
    Unknown,
    User,
    Privileged,
}

impl AccessLevel {
    pub fn has_foothold(self) -> bool {
        matches!(self, AccessLevel::User | AccessLevel::Privileged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanRecency {
    Never,
    Past,
    Current,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostTrueState {
    pub red_activity: RedActivity,
    pub red_access: AccessLevel,
    pub scan_recency: ScanRecency,
    pub decoys_remaining: u32,
    pub decoy_services: BTreeSet<ServiceId>,
    pub real_services: BTreeSet<ServiceId>,
    /// Set by blue Analyze; cleared whenever the access level changes.
    pub analyzed: bool,
}

impl HostTrueState {
    /// Reset-time state. The entry host carries red's hidden user foothold.
    pub fn initial(host: HostId, decoy_budget: u32) -> Self {
        HostTrueState {
            red_activity: RedActivity::None,
            red_access: if host == ENTRY_HOST {
                AccessLevel::User
            } else {
                AccessLevel::None
            },
            scan_recency: ScanRecency::Never,
            decoys_remaining: decoy_budget,
            decoy_services: BTreeSet::new(),
            real_services: host.initial_services().iter().copied().collect(),
            analyzed: false,
        }
    }

    pub fn is_compromised(&self) -> bool {
        self.red_access == AccessLevel::Privileged
    }

    /// Real and decoy services, ascending. Red cannot tell them apart.
    pub fn visible_services(&self) -> Vec<ServiceId> {
        self.real_services.union(&self.decoy_services).copied().collect()
    }

    pub(crate) fn set_access(&mut self, access: AccessLevel) {
        if self.red_access != access {
            self.red_access = access;
            self.analyzed = false;
        }
    }

    pub(crate) fn view(&self) -> HostView {
        HostView {
            red_activity: self.red_activity,
            red_access: self.red_access,
            analyzed: self.analyzed,
        }
    }
}

/// The part of a host's state that drives its activity/access observation bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HostView {
    pub red_activity: RedActivity,
    pub red_access: AccessLevel,
    pub analyzed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepEventKind {
    ExploitSucceeded,
    ExploitFailed,
    DecoyTriggered,
    ImpactSucceeded,
    BlueRestored,
    EscalateSucceeded,
    ScanObserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepEvent {
    pub kind: StepEventKind,
    pub host: HostId,
}

impl StepEvent {
    pub fn new(kind: StepEventKind, host: HostId) -> Self {
        StepEvent { kind, host }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub hosts: Vec<HostTrueState>,
    pub step_index: u32,
    pub rng: ChaCha8Rng,
    /// Events of the step currently being (or last) resolved.
    pub pending_events: Vec<StepEvent>,
    /// Red's discovered view of the network, owned by the simulator.
    pub red: RedKnowledge,
    pub(crate) initial_hosts: Vec<HostTrueState>,
    /// Pre-exploit views of hosts exploited during the current step.
    pub(crate) pre_exploit: Vec<Option<HostView>>,
}

impl NetworkState {
    pub fn new(decoy_budgets: &[u32; NUM_HOSTS], rng: ChaCha8Rng) -> Self {
        let hosts: Vec<_> = HostId::all()
            .map(|h| HostTrueState::initial(h, decoy_budgets[h.index()]))
            .collect();
        let mut red = RedKnowledge::new();
        red.known_hosts.insert(ENTRY_HOST);
        red.known_services.insert(
            ENTRY_HOST,
            hosts[ENTRY_HOST.index()].visible_services().into_iter().collect(),
        );
        let mut state = NetworkState {
            initial_hosts: hosts.clone(),
            hosts,
            step_index: 0,
            rng,
            pending_events: Vec::new(),
            red,
            pre_exploit: vec![None; NUM_HOSTS],
        };
        state.red.sync_footholds(&state.hosts);
        state
    }

    pub fn host(&self, h: HostId) -> &HostTrueState {
        &self.hosts[h.index()]
    }

    pub fn host_mut(&mut self, h: HostId) -> &mut HostTrueState {
        &mut self.hosts[h.index()]
    }

    pub fn initial_host(&self, h: HostId) -> &HostTrueState {
        &self.initial_hosts[h.index()]
    }

    /// Whether red can currently reach hosts of `subnet`. The user subnet is
    /// exposed; each deeper subnet needs a foothold in the one before it (or
    /// inside it).
    pub fn subnet_reachable(&self, subnet: Subnet) -> bool {
        let foothold_in = |s: Subnet| s.hosts().any(|h| self.host(h).red_access.has_foothold());
        match subnet {
            Subnet::User => true,
            Subnet::Enterprise => foothold_in(Subnet::User) || foothold_in(Subnet::Enterprise),
            Subnet::Operational => foothold_in(Subnet::Enterprise) || foothold_in(Subnet::Operational),
        }
    }

    pub(crate) fn begin_step(&mut self) {
        for host in &mut self.hosts {
            if host.scan_recency == ScanRecency::Current {
                host.scan_recency = ScanRecency::Past;
            }
        }
        self.pending_events.clear();
        self.pre_exploit.iter_mut().for_each(|v| *v = None);
    }
}
