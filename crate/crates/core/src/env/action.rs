use std::fmt;

use serde::{Deserialize, Serialize};

use super::topology::{HostId, Subnet, NUM_HOSTS};

pub const NUM_BLUE_ACTIONS: usize = 1 + 4 * NUM_HOSTS;
pub const NUM_RED_ACTIONS: usize = 1 + 3 + 4 * NUM_HOSTS;

/// Defender action. Index layout: 0 sleep, then Analyze, Decoy, Remove and
/// Restore blocks of 13 hosts each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlueAction {
    Sleep,
    Analyze(HostId),
    Decoy(HostId),
    Remove(HostId),
    Restore(HostId),
}

impl BlueAction {
    pub fn from_index(index: usize) -> Option<BlueAction> {
        if index == 0 {
            return Some(BlueAction::Sleep);
        }
        let block = (index - 1) / NUM_HOSTS;
        let host = HostId::new((index - 1) % NUM_HOSTS)?;
        match block {
            0 => Some(BlueAction::Analyze(host)),
            1 => Some(BlueAction::Decoy(host)),
            2 => Some(BlueAction::Remove(host)),
            3 => Some(BlueAction::Restore(host)),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        let (block, host) = match self {
            BlueAction::Sleep => return 0,
            BlueAction::Analyze(h) => (0, h),
            BlueAction::Decoy(h) => (1, h),
            BlueAction::Remove(h) => (2, h),
            BlueAction::Restore(h) => (3, h),
        };
        1 + block * NUM_HOSTS + host.index()
    }

    pub fn all() -> impl Iterator<Item = BlueAction> {
        (0..NUM_BLUE_ACTIONS).filter_map(BlueAction::from_index)
    }
}

impl fmt::Display for BlueAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlueAction::Sleep => write!(f, "Sleep"),
            BlueAction::Analyze(h) => write!(f, "Analyze {h}"),
            BlueAction::Decoy(h) => write!(f, "Decoy {h}"),
            BlueAction::Remove(h) => write!(f, "Remove {h}"),
            BlueAction::Restore(h) => write!(f, "Restore {h}"),
        }
    }
}

/// Attacker action. Index layout: 0 sleep, 1-3 subnet discovery, then
/// DiscoverNetworkServices, ExploitNetworkServices, Escalate and Impact
/// blocks of 13 hosts each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RedAction {
    Sleep,
    DiscoverRemoteSystems(Subnet),
    DiscoverNetworkServices(HostId),
    ExploitNetworkServices(HostId),
    Escalate(HostId),
    Impact(HostId),
}

impl RedAction {
    pub fn from_index(index: usize) -> Option<RedAction> {
        match index {
            0 => Some(RedAction::Sleep),
            1..=3 => Subnet::from_index(index - 1).map(RedAction::DiscoverRemoteSystems),
            _ => {
                let block = (index - 4) / NUM_HOSTS;
                let host = HostId::new((index - 4) % NUM_HOSTS)?;
                match block {
                    0 => Some(RedAction::DiscoverNetworkServices(host)),
                    1 => Some(RedAction::ExploitNetworkServices(host)),
                    2 => Some(RedAction::Escalate(host)),
                    3 => Some(RedAction::Impact(host)),
                    _ => None,
                }
            }
        }
    }

    pub fn index(self) -> usize {
        let (block, host) = match self {
            RedAction::Sleep => return 0,
            RedAction::DiscoverRemoteSystems(s) => return 1 + s.index(),
            RedAction::DiscoverNetworkServices(h) => (0, h),
            RedAction::ExploitNetworkServices(h) => (1, h),
            RedAction::Escalate(h) => (2, h),
            RedAction::Impact(h) => (3, h),
        };
        4 + block * NUM_HOSTS + host.index()
    }

    pub fn all() -> impl Iterator<Item = RedAction> {
        (0..NUM_RED_ACTIONS).filter_map(RedAction::from_index)
    }
}

impl fmt::Display for RedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RedAction::Sleep => write!(f, "Sleep"),
            RedAction::DiscoverRemoteSystems(s) => write!(f, "DiscoverRemoteSystems {s:?}"),
            RedAction::DiscoverNetworkServices(h) => write!(f, "DiscoverNetworkServices {h}"),
            RedAction::ExploitNetworkServices(h) => write!(f, "ExploitNetworkServices {h}"),
            RedAction::Escalate(h) => write!(f, "Escalate {h}"),
            RedAction::Impact(h) => write!(f, "Impact {h}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn blue_action_space_has_53_distinct_values() {
        let all: HashSet<_> = BlueAction::all().collect();
        assert_eq!(NUM_BLUE_ACTIONS, 53);
        assert_eq!(all.len(), 53);
        assert!(BlueAction::from_index(53).is_none());
    }

    #[test]
    fn red_action_space_has_56_distinct_values() {
        let all: HashSet<_> = RedAction::all().collect();
        assert_eq!(NUM_RED_ACTIONS, 56);
        assert_eq!(all.len(), 56);
        assert!(RedAction::from_index(56).is_none());
    }

    #[test]
    fn index_round_trips() {
        for (i, a) in BlueAction::all().enumerate() {
            assert_eq!(a.index(), i);
        }
        for (i, a) in RedAction::all().enumerate() {
            assert_eq!(a.index(), i);
        }
    }
}
