//! Per-token balance replay.
//!
//! Ownership is tracked per `(project, token_id)`, so a wallet holding several
//! tokens of one project is a single holder. Holder sets are end-of-day
//! snapshots and are stored as spans of consecutive days with a positive
//! balance rather than one set per day.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{IngestError, TransferEvent};
use crate::model::{ProjectId, TimeWindow, WalletAddress};

pub type WalletId = u32;

#[derive(Debug, Clone, Default)]
pub struct WalletInterner {
    ids: HashMap<WalletAddress, WalletId>,
    addrs: Vec<WalletAddress>,
}

impl WalletInterner {
    pub fn intern(&mut self, addr: &WalletAddress) -> WalletId {
        if let Some(&id) = self.ids.get(addr) {
            return id;
        }
        let id = self.addrs.len() as WalletId;
        self.addrs.push(addr.clone());
        self.ids.insert(addr.clone(), id);
        id
    }

    pub fn get(&self, addr: &WalletAddress) -> Option<WalletId> {
        self.ids.get(addr).copied()
    }

    pub fn address(&self, id: WalletId) -> &WalletAddress {
        &self.addrs[id as usize]
    }

    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }
}

/// Transfers that could not be applied to the replayed balances. The event is
/// skipped and replay continues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplayAnomaly {
    /// `wallet` sent a token it does not hold.
    NegativeBalance {
        project: ProjectId,
        wallet: WalletAddress,
        date: NaiveDate,
    },
    /// A mint of a token id that already has an owner.
    DuplicateMint {
        project: ProjectId,
        token_id: u64,
        date: NaiveDate,
    },
}

/// Consecutive days on which `wallet` ended the day with a positive balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoldSpan {
    pub wallet: WalletId,
    pub first: NaiveDate,
    /// `NaiveDate::MAX` while the wallet still holds at the end of the log.
    pub last: NaiveDate,
}

impl HoldSpan {
    pub fn covers(&self, day: NaiveDate) -> bool {
        self.first <= day && day <= self.last
    }

    pub fn overlaps(&self, window: &TimeWindow) -> bool {
        self.first <= window.end && window.start <= self.last
    }
}

#[derive(Debug, Clone, Default)]
struct DayActivity {
    sellers: Vec<WalletId>,
    buyers: Vec<WalletId>,
    transfers: u32,
}

/// Replayed role history of one project.
#[derive(Debug, Clone, Default)]
pub struct ProjectRoles {
    days: BTreeMap<NaiveDate, DayActivity>,
    spans: Vec<HoldSpan>,
    /// End-of-day holder count, recorded on days where it changed.
    holder_counts: Vec<(NaiveDate, u32)>,
    /// Sorted days on which each wallet first owned a token (intraday included).
    first_owned_days: Vec<NaiveDate>,
}

fn sorted_unique(mut v: Vec<WalletId>) -> Vec<WalletId> {
    v.sort_unstable();
    v.dedup();
    v
}

impl ProjectRoles {
    fn activity(&self, day: NaiveDate) -> Option<&DayActivity> {
        self.days.get(&day)
    }

    pub fn sellers_on(&self, day: NaiveDate) -> &[WalletId] {
        self.activity(day).map(|a| a.sellers.as_slice()).unwrap_or(&[])
    }

    pub fn buyers_on(&self, day: NaiveDate) -> &[WalletId] {
        self.activity(day).map(|a| a.buyers.as_slice()).unwrap_or(&[])
    }

    pub fn transfers_on(&self, day: NaiveDate) -> u32 {
        self.activity(day).map(|a| a.transfers).unwrap_or(0)
    }

    pub fn holders_on(&self, day: NaiveDate) -> Vec<WalletId> {
        sorted_unique(
            self.spans
                .iter()
                .filter(|s| s.covers(day))
                .map(|s| s.wallet)
                .collect(),
        )
    }

    pub fn holder_count(&self, day: NaiveDate) -> u32 {
        match self.holder_counts.partition_point(|(d, _)| *d <= day) {
            0 => 0,
            k => self.holder_counts[k - 1].1,
        }
    }

    /// Union of daily seller sets over the window.
    pub fn sellers_in(&self, window: &TimeWindow) -> HashSet<WalletId> {
        self.days
            .range(window.start..=window.end)
            .flat_map(|(_, a)| a.sellers.iter().copied())
            .collect()
    }

    /// Union of daily buyer sets over the window.
    pub fn buyers_in(&self, window: &TimeWindow) -> HashSet<WalletId> {
        self.days
            .range(window.start..=window.end)
            .flat_map(|(_, a)| a.buyers.iter().copied())
            .collect()
    }

    /// Distinct wallets holding at the end of at least one day in the window.
    pub fn holders_in(&self, window: &TimeWindow) -> HashSet<WalletId> {
        self.spans
            .iter()
            .filter(|s| s.overlaps(window))
            .map(|s| s.wallet)
            .collect()
    }

    /// Distinct wallets that owned a token at any moment up to and including `day`.
    pub fn owners_up_to(&self, day: NaiveDate) -> u32 {
        self.first_owned_days.partition_point(|d| *d <= day) as u32
    }

    pub fn transfers_in(&self, window: &TimeWindow) -> u64 {
        self.days
            .range(window.start..=window.end)
            .map(|(_, a)| a.transfers as u64)
            .sum()
    }

    pub fn spans(&self) -> &[HoldSpan] {
        &self.spans
    }

    pub fn first_activity(&self) -> Option<NaiveDate> {
        self.days.keys().next().copied()
    }

    pub fn last_activity(&self) -> Option<NaiveDate> {
        self.days.keys().next_back().copied()
    }
}

/// Role history for every project of a transfer log.
#[derive(Debug, Clone, Default)]
pub struct RoleIndex {
    projects: BTreeMap<ProjectId, ProjectRoles>,
    wallets: WalletInterner,
    anomalies: Vec<ReplayAnomaly>,
}

struct ReplayState {
    owner: HashMap<u64, WalletId>,
    balance: HashMap<WalletId, u32>,
    holding_since: HashMap<WalletId, NaiveDate>,
    first_owned: HashMap<WalletId, NaiveDate>,
}

impl RoleIndex {
    /// Replays `events` from the beginning of the log. `projects` lists
    /// projects that get an (empty) history even without events.
    pub fn build<'a>(
        events: &[TransferEvent],
        projects: impl IntoIterator<Item = &'a ProjectId>,
    ) -> Self {
        let mut index = RoleIndex::default();
        for p in projects {
            index.projects.entry(p.clone()).or_default();
        }

        let sorted;
        let events = if events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp) {
            events
        } else {
            let mut copy = events.to_vec();
            copy.sort_by_key(|e| e.timestamp);
            sorted = copy;
            &sorted
        };

        let mut by_project: BTreeMap<&ProjectId, Vec<&TransferEvent>> = BTreeMap::new();
        for e in events {
            by_project.entry(&e.project).or_default().push(e);
        }
        for (project, evs) in by_project {
            let roles = index.replay_project(project, &evs);
            index.projects.insert(project.clone(), roles);
        }
        index
    }

    fn replay_project(&mut self, project: &ProjectId, events: &[&TransferEvent]) -> ProjectRoles {
        let mut roles = ProjectRoles::default();
        let mut st = ReplayState {
            owner: HashMap::new(),
            balance: HashMap::new(),
            holding_since: HashMap::new(),
            first_owned: HashMap::new(),
        };

        let mut i = 0;
        while i < events.len() {
            let day = events[i].date();
            let mut activity = DayActivity::default();
            let mut touched = Vec::new();
            while i < events.len() && events[i].date() == day {
                let e = events[i];
                i += 1;
                if e.is_mint() {
                    if st.owner.contains_key(&e.token_id) {
                        self.anomalies.push(ReplayAnomaly::DuplicateMint {
                            project: project.clone(),
                            token_id: e.token_id,
                            date: day,
                        });
                        continue;
                    }
                    let to = self.wallets.intern(&e.to);
                    st.owner.insert(e.token_id, to);
                    *st.balance.entry(to).or_default() += 1;
                    st.first_owned.entry(to).or_insert(day);
                    activity.buyers.push(to);
                    touched.push(to);
                } else {
                    let from = self.wallets.get(&e.from);
                    let owned = from.is_some() && st.owner.get(&e.token_id).copied() == from;
                    let Some(from) = from.filter(|_| owned) else {
                        self.anomalies.push(ReplayAnomaly::NegativeBalance {
                            project: project.clone(),
                            wallet: e.from.clone(),
                            date: day,
                        });
                        continue;
                    };
                    *st.balance.get_mut(&from).expect("owner has a balance") -= 1;
                    activity.sellers.push(from);
                    touched.push(from);
                    if e.is_burn() {
                        st.owner.remove(&e.token_id);
                    } else {
                        let to = self.wallets.intern(&e.to);
                        st.owner.insert(e.token_id, to);
                        *st.balance.entry(to).or_default() += 1;
                        st.first_owned.entry(to).or_insert(day);
                        activity.buyers.push(to);
                        touched.push(to);
                    }
                }
                activity.transfers += 1;
            }

            for w in sorted_unique(touched) {
                let holding = st.balance.get(&w).copied().unwrap_or(0) > 0;
                match (st.holding_since.get(&w).copied(), holding) {
                    (None, true) => {
                        st.holding_since.insert(w, day);
                    }
                    (Some(since), false) => {
                        st.holding_since.remove(&w);
                        roles.spans.push(HoldSpan {
                            wallet: w,
                            first: since,
                            last: day.pred_opt().expect("date in range"),
                        });
                    }
                    _ => {}
                }
            }
            let count = st.holding_since.len() as u32;
            if roles.holder_counts.last().map(|(_, c)| *c) != Some(count) {
                roles.holder_counts.push((day, count));
            }
            if activity.transfers > 0 {
                activity.sellers = sorted_unique(activity.sellers);
                activity.buyers = sorted_unique(activity.buyers);
                roles.days.insert(day, activity);
            }
        }

        for (w, since) in st.holding_since {
            roles.spans.push(HoldSpan {
                wallet: w,
                first: since,
                last: NaiveDate::MAX,
            });
        }
        roles.spans.sort_by_key(|s| (s.first, s.wallet, s.last));
        roles.first_owned_days = st.first_owned.into_values().collect();
        roles.first_owned_days.sort_unstable();
        roles
    }

    pub fn project(&self, id: &ProjectId) -> Option<&ProjectRoles> {
        self.projects.get(id)
    }

    pub fn projects(&self) -> impl Iterator<Item = (&ProjectId, &ProjectRoles)> {
        self.projects.iter()
    }

    pub fn wallets(&self) -> &WalletInterner {
        &self.wallets
    }

    pub fn anomalies(&self) -> &[ReplayAnomaly] {
        &self.anomalies
    }

    /// Materializes the daily role sets of one project.
    pub fn daily_record(&self, project: &ProjectId, day: NaiveDate) -> Option<DailyRoleRecord> {
        let roles = self.projects.get(project)?;
        let addrs = |ids: &[WalletId]| -> BTreeSet<WalletAddress> {
            ids.iter().map(|&w| self.wallets.address(w).clone()).collect()
        };
        Some(DailyRoleRecord {
            project: project.clone(),
            date: day,
            sellers: addrs(roles.sellers_on(day)),
            buyers: addrs(roles.buyers_on(day)),
            holders: addrs(&roles.holders_on(day)),
        })
    }
}

/// Buyer, seller and end-of-day holder sets of one project on one day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyRoleRecord {
    pub project: ProjectId,
    pub date: NaiveDate,
    pub sellers: BTreeSet<WalletAddress>,
    pub buyers: BTreeSet<WalletAddress>,
    pub holders: BTreeSet<WalletAddress>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayOutput {
    /// Ordered by project, then date.
    pub records: Vec<DailyRoleRecord>,
    pub anomalies: Vec<ReplayAnomaly>,
}

/// Daily role sets for every project seen in `events`, one record per
/// project per day of `window`. Balances are replayed from the start of the
/// log regardless of the window.
pub fn replay_roles(events: &[TransferEvent], window: &TimeWindow) -> ReplayOutput {
    let projects: BTreeSet<&ProjectId> = events.iter().map(|e| &e.project).collect();
    let index = RoleIndex::build(events, projects.iter().copied());
    let mut records = Vec::new();
    for p in projects {
        for day in window.iter_days() {
            records.extend(index.daily_record(p, day));
        }
    }
    ReplayOutput {
        records,
        anomalies: index.anomalies.clone(),
    }
}

/// Shares of buyers, sellers and non-trading holders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleFractions {
    pub b: f64,
    pub s: f64,
    pub h: f64,
}

impl RoleFractions {
    pub const CENTROID: RoleFractions = RoleFractions {
        b: 1.0 / 3.0,
        s: 1.0 / 3.0,
        h: 1.0 / 3.0,
    };

    pub fn from_counts(buyers: usize, sellers: usize, idle_holders: usize) -> Result<Self, IngestError> {
        let total = buyers + sellers + idle_holders;
        if total == 0 {
            return Err(IngestError::EmptyDay);
        }
        let t = total as f64;
        Ok(Self {
            b: buyers as f64 / t,
            s: sellers as f64 / t,
            h: idle_holders as f64 / t,
        })
    }

    /// Counts holders only when they neither bought nor sold.
    pub fn from_sets<T: Eq + std::hash::Hash>(
        buyers: &HashSet<T>,
        sellers: &HashSet<T>,
        holders: &HashSet<T>,
    ) -> Result<Self, IngestError> {
        let idle = holders
            .iter()
            .filter(|w| !buyers.contains(w) && !sellers.contains(w))
            .count();
        Self::from_counts(buyers.len(), sellers.len(), idle)
    }
}

pub fn role_fractions(record: &DailyRoleRecord) -> Result<RoleFractions, IngestError> {
    let idle = record
        .holders
        .iter()
        .filter(|w| !record.buyers.contains(*w) && !record.sellers.contains(*w))
        .count();
    RoleFractions::from_counts(record.buyers.len(), record.sellers.len(), idle)
}
