//! Fixed 13-host enterprise topology.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const NUM_HOSTS: usize = 13;

/// Host index of the entry point where red starts with a user-level foothold.
pub const ENTRY_HOST: HostId = HostId(0);
/// Defender workstation, inside the enterprise subnet.
pub const DEFENDER_HOST: HostId = HostId(8);
/// Operational server; the only legal Impact target.
pub const CRITICAL_SERVER: HostId = HostId(12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subnet {
    User,
    Enterprise,
    Operational,
}

impl Subnet {
    pub const ALL: [Subnet; 3] = [Subnet::User, Subnet::Enterprise, Subnet::Operational];

    pub fn index(self) -> usize {
        match self {
            Subnet::User => 0,
            Subnet::Enterprise => 1,
            Subnet::Operational => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Subnet> {
        Subnet::ALL.get(i).copied()
    }

    /// Hosts belonging to this subnet, in index order.
    pub fn hosts(self) -> impl Iterator<Item = HostId> {
        HostId::all().filter(move |h| h.subnet() == self)
    }

    pub fn next(self) -> Option<Subnet> {
        Subnet::from_index(self.index() + 1)
    }
}

/// Index of one of the 13 hosts. Hosts 0-4 form the user subnet, 5-8 the
/// enterprise subnet (8 is the defender) and 9-12 the operational subnet
/// (12 is the critical server).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(u8);

impl HostId {
    pub const fn new(index: usize) -> Option<HostId> {
        if index < NUM_HOSTS {
            Some(HostId(index as u8))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = HostId> + Clone {
        (0..NUM_HOSTS as u8).map(HostId)
    }

    pub fn subnet(self) -> Subnet {
        match self.0 {
            0..=4 => Subnet::User,
            5..=8 => Subnet::Enterprise,
            _ => Subnet::Operational,
        }
    }

    pub fn is_critical_server(self) -> bool {
        self == CRITICAL_SERVER
    }

    pub fn is_defender_host(self) -> bool {
        self == DEFENDER_HOST
    }

    pub fn name(self) -> String {
        match self.0 {
            0..=4 => format!("User{}", self.0),
            8 => "Defender".to_string(),
            5..=7 => format!("Enterprise{}", self.0 - 5),
            12 => "Op_Server0".to_string(),
            _ => format!("Op_Host{}", self.0 - 9),
        }
    }

    /// Real services running on the host at reset time.
    pub fn initial_services(self) -> &'static [ServiceId] {
        const SSH: ServiceId = ServiceId(22);
        const SMB: ServiceId = ServiceId(445);
        const RDP: ServiceId = ServiceId(3389);
        const HTTP: ServiceId = ServiceId(80);
        const TOMCAT: ServiceId = ServiceId(8080);
        match self.0 {
            0 => &[SMB],
            1 | 2 => &[SSH, SMB],
            3 | 4 => &[RDP, SMB],
            5..=7 => &[SSH, RDP],
            8 => &[SSH, HTTP],
            9..=11 => &[SSH],
            _ => &[SSH, TOMCAT],
        }
    }
}

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Port-like identifier of a (real or decoy) service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceId(pub u16);

/// Decoy services never collide with real ones: they live above this offset.
pub const DECOY_SERVICE_BASE: u16 = 50_000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subnet_split_is_5_4_4() {
        let count = |s| HostId::all().filter(|h| h.subnet() == s).count();
        assert_eq!(count(Subnet::User), 5);
        assert_eq!(count(Subnet::Enterprise), 4);
        assert_eq!(count(Subnet::Operational), 4);
    }

    #[test]
    fn exactly_one_critical_server_and_defender() {
        let servers: Vec<_> = HostId::all().filter(|h| h.is_critical_server()).collect();
        let defenders: Vec<_> = HostId::all().filter(|h| h.is_defender_host()).collect();
        assert_eq!(servers, vec![CRITICAL_SERVER]);
        assert_eq!(defenders, vec![DEFENDER_HOST]);
        assert_eq!(CRITICAL_SERVER.subnet(), Subnet::Operational);
        assert_eq!(DEFENDER_HOST.subnet(), Subnet::Enterprise);
    }

    #[test]
    fn out_of_range_host_is_rejected() {
        assert!(HostId::new(12).is_some());
        assert!(HostId::new(13).is_none());
    }

    #[test]
    fn real_services_are_below_decoy_range() {
        for h in HostId::all() {
            assert!(!h.initial_services().is_empty());
            assert!(h.initial_services().iter().all(|s| s.0 < DECOY_SERVICE_BASE));
        }
    }
}
