//! Host-level transition rules for both sides.
//!
//! Illegal or ineffective actions resolve to no-ops so that both action
//! spaces stay fixed-size.

use rand::Rng;

use super::action::{BlueAction, RedAction};
use super::state::{AccessLevel, NetworkState, RedActivity, ScanRecency, StepEvent, StepEventKind};
use super::topology::{ServiceId, DECOY_SERVICE_BASE};

/// Applies a blue action to `state`, returning the events it produced.
pub fn resolve_blue(state: &mut NetworkState, action: BlueAction) -> Vec<StepEvent> {
    let mut events = Vec::new();
    match action {
        BlueAction::Sleep => {}
        BlueAction::Analyze(h) => state.host_mut(h).analyzed = true,
        BlueAction::Decoy(h) => {
            let host = state.host_mut(h);
            if host.decoys_remaining > 0 {
                let deployed = host.decoy_services.len() as u16;
                host.decoy_services.insert(ServiceId(DECOY_SERVICE_BASE + deployed));
                host.decoys_remaining -= 1;
            }
        }
        BlueAction::Remove(h) => {
            let host = state.host_mut(h);
            if matches!(host.red_access, AccessLevel::Unknown | AccessLevel::User) {
                host.set_access(AccessLevel::None);
            }
        }
        BlueAction::Restore(h) => {
            let initial = state.initial_host(h).clone();
            *state.host_mut(h) = initial;
            events.push(StepEvent::new(StepEventKind::BlueRestored, h));
        }
    }
    state.pending_events.extend_from_slice(&events);
    events
}

/// Applies a red action to `state` (including red's knowledge), returning the
/// events it produced.
pub fn resolve_red(state: &mut NetworkState, action: RedAction) -> Vec<StepEvent> {
    let mut events = Vec::new();
    match action {
        RedAction::Sleep => {}
        RedAction::DiscoverRemoteSystems(subnet) => {
            if state.subnet_reachable(subnet) {
                state.red.known_subnets.insert(subnet);
                state.red.known_hosts.extend(subnet.hosts());
            }
        }
        RedAction::DiscoverNetworkServices(h) => {
            if state.red.known_hosts.contains(&h) && state.subnet_reachable(h.subnet()) {
                let host = state.host_mut(h);
                host.scan_recency = ScanRecency::Current;
                host.red_activity = host.red_activity.max(RedActivity::Scanned);
                let services = host.visible_services();
                state.red.known_services.insert(h, services.into_iter().collect());
                events.push(StepEvent::new(StepEventKind::ScanObserved, h));
            }
        }
        RedAction::ExploitNetworkServices(h) => {
            let legal = state.red.known_services.contains_key(&h)
                && state.subnet_reachable(h.subnet())
                && !state.host(h).red_access.has_foothold();
            if legal {
                let services = state.host(h).visible_services();
                let target = services[state.rng.random_range(0..services.len())];
                let before = state.host(h).view();
                let host = state.host_mut(h);
                host.red_activity = RedActivity::Exploited;
                if host.decoy_services.contains(&target) {
                    events.push(StepEvent::new(StepEventKind::ExploitFailed, h));
                    events.push(StepEvent::new(StepEventKind::DecoyTriggered, h));
                } else {
                    host.set_access(AccessLevel::User);
                    state.pre_exploit[h.index()].get_or_insert(before);
                    events.push(StepEvent::new(StepEventKind::ExploitSucceeded, h));
                }
            }
        }
        RedAction::Escalate(h) => {
            let host = state.host_mut(h);
            if host.red_access == AccessLevel::User {
                host.set_access(AccessLevel::Privileged);
                host.red_activity = RedActivity::Exploited;
                events.push(StepEvent::new(StepEventKind::EscalateSucceeded, h));
            }
        }
        RedAction::Impact(h) => {
            if h.is_critical_server() && state.host(h).red_access == AccessLevel::Privileged {
                events.push(StepEvent::new(StepEventKind::ImpactSucceeded, h));
            }
        }
    }
    state.red.sync_footholds(&state.hosts);
    state.pending_events.extend_from_slice(&events);
    events
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::state::HostTrueState;
    use crate::env::topology::{HostId, Subnet, CRITICAL_SERVER, NUM_HOSTS};

    fn fresh() -> NetworkState {
        NetworkState::new(&[2; NUM_HOSTS], ChaCha8Rng::seed_from_u64(11))
    }

    fn host(i: usize) -> HostId {
        HostId::new(i).unwrap()
    }

    #[test]
    fn remove_does_not_touch_privileged_access() {
        let mut state = fresh();
        state.host_mut(host(5)).red_access = AccessLevel::Privileged;
        let before = state.clone();
        let events = resolve_blue(&mut state, BlueAction::Remove(host(5)));
        assert!(events.is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn remove_clears_user_access() {
        let mut state = fresh();
        state.host_mut(host(5)).red_access = AccessLevel::User;
        resolve_blue(&mut state, BlueAction::Remove(host(5)));
        assert_eq!(state.host(host(5)).red_access, AccessLevel::None);
    }

    #[test]
    fn restore_returns_host_to_reset_state() {
        let mut state = fresh();
        {
            let h = state.host_mut(host(5));
            h.red_access = AccessLevel::Privileged;
            h.red_activity = RedActivity::Exploited;
            h.decoys_remaining = 0;
        }
        let events = resolve_blue(&mut state, BlueAction::Restore(host(5)));
        assert_eq!(state.host(host(5)).red_access, AccessLevel::None);
        assert_eq!(*state.host(host(5)), HostTrueState::initial(host(5), 2));
        assert_eq!(events, vec![StepEvent::new(StepEventKind::BlueRestored, host(5))]);
    }

    #[test]
    fn decoy_with_exhausted_budget_is_noop() {
        let mut state = NetworkState::new(&[0; NUM_HOSTS], ChaCha8Rng::seed_from_u64(1));
        let before = state.clone();
        resolve_blue(&mut state, BlueAction::Decoy(host(3)));
        assert_eq!(state, before);
    }

    #[test]
    fn decoy_deploys_one_service_and_decrements() {
        let mut state = fresh();
        resolve_blue(&mut state, BlueAction::Decoy(host(3)));
        let h = state.host(host(3));
        assert_eq!(h.decoys_remaining, 1);
        assert_eq!(h.decoy_services.len(), 1);
        assert!(h.decoy_services.is_disjoint(&h.real_services));
    }

    #[test]
    fn impact_off_server_is_noop() {
        let mut state = fresh();
        state.host_mut(host(2)).red_access = AccessLevel::Privileged;
        state.red.sync_footholds(&state.hosts);
        let before = state.clone();
        let events = resolve_red(&mut state, RedAction::Impact(host(2)));
        assert!(events.is_empty());
        assert_eq!(state, before);
    }

    #[test]
    fn impact_requires_privileged_server() {
        let mut state = fresh();
        state.host_mut(CRITICAL_SERVER).red_access = AccessLevel::User;
        assert!(resolve_red(&mut state, RedAction::Impact(CRITICAL_SERVER)).is_empty());
        state.host_mut(CRITICAL_SERVER).red_access = AccessLevel::Privileged;
        let events = resolve_red(&mut state, RedAction::Impact(CRITICAL_SERVER));
        assert_eq!(events[0].kind, StepEventKind::ImpactSucceeded);
    }

    #[test]
    fn escalate_promotes_user_to_privileged() {
        let mut state = fresh();
        state.host_mut(host(3)).red_access = AccessLevel::User;
        resolve_red(&mut state, RedAction::Escalate(host(3)));
        assert_eq!(state.host(host(3)).red_access, AccessLevel::Privileged);
        assert_eq!(state.host(host(3)).red_activity, RedActivity::Exploited);
    }

    #[test]
    fn escalate_without_foothold_is_noop() {
        let mut state = fresh();
        assert!(resolve_red(&mut state, RedAction::Escalate(host(3))).is_empty());
        assert_eq!(state.host(host(3)).red_access, AccessLevel::None);
    }

    #[test]
    fn exploit_needs_prior_service_discovery() {
        let mut state = fresh();
        resolve_red(&mut state, RedAction::DiscoverRemoteSystems(Subnet::Enterprise));
        assert!(resolve_red(&mut state, RedAction::ExploitNetworkServices(host(5))).is_empty());
        resolve_red(&mut state, RedAction::DiscoverNetworkServices(host(5)));
        let events = resolve_red(&mut state, RedAction::ExploitNetworkServices(host(5)));
        assert_eq!(events[0].kind, StepEventKind::ExploitSucceeded);
        assert_eq!(state.host(host(5)).red_access, AccessLevel::User);
    }

    #[test]
    fn exploit_of_decoy_fails_and_alerts() {
        let mut state = fresh();
        resolve_red(&mut state, RedAction::DiscoverRemoteSystems(Subnet::Enterprise));
        resolve_red(&mut state, RedAction::DiscoverNetworkServices(host(6)));
        // Only decoys left visible: drop the real services for this check.
        state.host_mut(host(6)).real_services.clear();
        resolve_blue(&mut state, BlueAction::Decoy(host(6)));
        let events = resolve_red(&mut state, RedAction::ExploitNetworkServices(host(6)));
        let kinds: Vec<_> = events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![StepEventKind::ExploitFailed, StepEventKind::DecoyTriggered]);
        assert_eq!(state.host(host(6)).red_access, AccessLevel::None);
        assert_eq!(state.host(host(6)).red_activity, RedActivity::Exploited);
    }

    #[test]
    fn operational_subnet_needs_enterprise_foothold() {
        let mut state = fresh();
        resolve_red(&mut state, RedAction::DiscoverRemoteSystems(Subnet::Operational));
        assert!(!state.red.known_subnets.contains(&Subnet::Operational));
        state.host_mut(host(5)).red_access = AccessLevel::User;
        resolve_red(&mut state, RedAction::DiscoverRemoteSystems(Subnet::Operational));
        assert!(state.red.known_subnets.contains(&Subnet::Operational));
    }

    #[test]
    fn scan_marks_current_and_records_services() {
        let mut state = fresh();
        resolve_red(&mut state, RedAction::DiscoverRemoteSystems(Subnet::User));
        let events = resolve_red(&mut state, RedAction::DiscoverNetworkServices(host(2)));
        assert_eq!(events[0].kind, StepEventKind::ScanObserved);
        assert_eq!(state.host(host(2)).scan_recency, ScanRecency::Current);
        assert_eq!(state.red.known_services[&host(2)].len(), 2);
    }
}
