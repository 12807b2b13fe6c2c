//! Scripted attackers and baseline defenders.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    AccessLevel, BlueAction, BlueObservation, HostId, HostTrueState, RedAction, ServiceId, Subnet, CRITICAL_SERVER,
    ENTRY_HOST, NUM_BLUE_ACTIONS,
};

/// Enterprise hosts B-Line may route through (every non-defender one). The
/// environment draws one per episode.
pub const BLINE_WAYPOINTS: [HostId; 3] = [host(5), host(6), host(7)];

const fn host(i: usize) -> HostId {
    match HostId::new(i) {
        Some(h) => h,
        None => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RedPolicyName {
    BLine,
    Meander,
    /// B-Line or Meander, drawn with probability 1/2 at every episode start.
    MixedPerEpisode,
    /// No attacker. Used for baselines and diagnostics.
    Sleep,
}

impl RedPolicyName {
    pub fn label(self) -> &'static str {
        match self {
            RedPolicyName::BLine => "B-line",
            RedPolicyName::Meander => "Meander",
            RedPolicyName::MixedPerEpisode => "Mixed",
            RedPolicyName::Sleep => "Sleep",
        }
    }
}

/// Coarse progress marker of a scripted attacker, for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackPhase {
    Idle,
    User,
    Enterprise,
    Operational,
    Impact,
}

/// What red has discovered so far. Footholds mirror the simulator's ground
/// truth (scripted attackers read it directly).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedKnowledge {
    pub known_subnets: BTreeSet<Subnet>,
    pub known_hosts: BTreeSet<HostId>,
    pub known_services: BTreeMap<HostId, BTreeSet<ServiceId>>,
    pub footholds: BTreeMap<HostId, AccessLevel>,
    pub phase: AttackPhase,
    /// Enterprise host on B-Line's path this episode.
    pub waypoint: HostId,
}

impl Default for RedKnowledge {
    fn default() -> Self {
        Self::new()
    }
}

impl RedKnowledge {
    pub fn new() -> Self {
        RedKnowledge {
            known_subnets: BTreeSet::new(),
            known_hosts: BTreeSet::new(),
            known_services: BTreeMap::new(),
            footholds: BTreeMap::new(),
            phase: AttackPhase::Idle,
            waypoint: BLINE_WAYPOINTS[0],
        }
    }

    pub fn sync_footholds(&mut self, hosts: &[HostTrueState]) {
        self.footholds = HostId::all()
            .filter(|h| hosts[h.index()].red_access != AccessLevel::None)
            .map(|h| (h, hosts[h.index()].red_access))
            .collect();
    }

    pub fn access(&self, h: HostId) -> AccessLevel {
        self.footholds.get(&h).copied().unwrap_or(AccessLevel::None)
    }

    fn foothold_in(&self, subnet: Subnet) -> bool {
        self.footholds
            .iter()
            .any(|(h, a)| h.subnet() == subnet && a.has_foothold())
    }

    /// Scan if the host's services are unknown, otherwise exploit it.
    fn attack(&self, h: HostId) -> RedAction {
        if self.known_services.contains_key(&h) {
            RedAction::ExploitNetworkServices(h)
        } else {
            RedAction::DiscoverNetworkServices(h)
        }
    }
}

/// Shortest path to the critical server through the B-Line waypoint,
/// resuming from the deepest surviving foothold after blue interventions.
pub fn bline_next(k: &RedKnowledge) -> RedAction {
    match k.access(CRITICAL_SERVER) {
        AccessLevel::Privileged => return RedAction::Impact(CRITICAL_SERVER),
        AccessLevel::User => return RedAction::Escalate(CRITICAL_SERVER),
        _ => {}
    }
    let waypoint = k.waypoint;
    match k.access(waypoint) {
        AccessLevel::User => RedAction::Escalate(waypoint),
        AccessLevel::Privileged => {
            if !k.known_subnets.contains(&Subnet::Operational) {
                RedAction::DiscoverRemoteSystems(Subnet::Operational)
            } else {
                k.attack(CRITICAL_SERVER)
            }
        }
        _ => {
            if !k.foothold_in(Subnet::User) && !k.foothold_in(Subnet::Enterprise) {
                // Lost the way in; re-take the entry host.
                k.attack(ENTRY_HOST)
            } else if !k.known_subnets.contains(&Subnet::Enterprise) {
                RedAction::DiscoverRemoteSystems(Subnet::Enterprise)
            } else {
                k.attack(waypoint)
            }
        }
    }
}

/// Breadth-first: every known host is escalated (lowest index first) before
/// the next subnet is discovered; the server falls last, then Impact.
pub fn meander_next(k: &RedKnowledge) -> RedAction {
    for &h in &k.known_hosts {
        match k.access(h) {
            AccessLevel::Privileged => continue,
            AccessLevel::User => return RedAction::Escalate(h),
            AccessLevel::None | AccessLevel::Unknown => return k.attack(h),
        }
    }
    match Subnet::ALL.into_iter().find(|s| !k.known_subnets.contains(s)) {
        Some(next) => RedAction::DiscoverRemoteSystems(next),
        None => RedAction::Impact(CRITICAL_SERVER),
    }
}

/// Per-episode coin between B-Line and Meander.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRed {
    rng: ChaCha8Rng,
    current: RedPolicyName,
}

impl MixedRed {
    pub fn new(seed: u64) -> Self {
        MixedRed {
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: RedPolicyName::BLine,
        }
    }

    pub fn begin_episode(&mut self) -> RedPolicyName {
        self.current = if self.rng.random_bool(0.5) {
            RedPolicyName::BLine
        } else {
            RedPolicyName::Meander
        };
        self.current
    }

    pub fn current(&self) -> RedPolicyName {
        self.current
    }
}

pub fn mixed_red(seed: u64) -> RedAgent {
    RedAgent::Mixed(Box::new(MixedRed::new(seed)))
}

/// The attacker driving an environment.
#[derive(Debug, Clone, PartialEq)]
pub enum RedAgent {
    Sleep,
    BLine,
    Meander,
    Mixed(Box<MixedRed>),
}

impl RedAgent {
    pub fn new(name: RedPolicyName, seed: u64) -> Self {
        match name {
            RedPolicyName::BLine => RedAgent::BLine,
            RedPolicyName::Meander => RedAgent::Meander,
            RedPolicyName::MixedPerEpisode => mixed_red(seed),
            RedPolicyName::Sleep => RedAgent::Sleep,
        }
    }

    pub fn begin_episode(&mut self) {
        if let RedAgent::Mixed(m) = self {
            m.begin_episode();
        }
    }

    /// Name of the scripted policy acting this episode.
    pub fn active(&self) -> RedPolicyName {
        match self {
            RedAgent::Sleep => RedPolicyName::Sleep,
            RedAgent::BLine => RedPolicyName::BLine,
            RedAgent::Meander => RedPolicyName::Meander,
            RedAgent::Mixed(m) => m.current(),
        }
    }

    pub fn next_action(&mut self, knowledge: &mut RedKnowledge) -> RedAction {
        let action = match self.active() {
            RedPolicyName::BLine => bline_next(knowledge),
            RedPolicyName::Meander => meander_next(knowledge),
            _ => RedAction::Sleep,
        };
        knowledge.phase = match action {
            RedAction::Sleep => AttackPhase::Idle,
            RedAction::Impact(_) => AttackPhase::Impact,
            RedAction::DiscoverRemoteSystems(s) => phase_of(s),
            RedAction::DiscoverNetworkServices(h) | RedAction::ExploitNetworkServices(h) | RedAction::Escalate(h) => {
                phase_of(h.subnet())
            }
        };
        action
    }
}

fn phase_of(s: Subnet) -> AttackPhase {
    match s {
        Subnet::User => AttackPhase::User,
        Subnet::Enterprise => AttackPhase::Enterprise,
        Subnet::Operational => AttackPhase::Operational,
    }
}

/// A defender that maps observations to actions.
pub trait BluePolicy {
    fn act(&mut self, observation: &BlueObservation) -> BlueAction;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SleepBlue;

impl BluePolicy for SleepBlue {
    fn act(&mut self, _: &BlueObservation) -> BlueAction {
        BlueAction::Sleep
    }
}

/// Uniform over all 53 blue actions, for gain attribution.
#[derive(Debug, Clone)]
pub struct RandomBlue {
    rng: ChaCha8Rng,
}

pub fn random_blue(seed: u64) -> RandomBlue {
    RandomBlue {
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

impl BluePolicy for RandomBlue {
    fn act(&mut self, _: &BlueObservation) -> BlueAction {
        let i = self.rng.random_range(0..NUM_BLUE_ACTIONS);
        BlueAction::from_index(i).expect("index within action space")
    }
}
