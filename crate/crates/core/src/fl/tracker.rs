use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Last participation round and participation count per client.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationTracker {
    pub min_separation: u64,
    last: BTreeMap<u64, u64>,
    counts: BTreeMap<u64, u64>,
}

impl ParticipationTracker {
    pub fn new(min_separation: u64) -> Self {
        ParticipationTracker {
            min_separation: min_separation.max(1),
            ..Default::default()
        }
    }

    /// Whether `client` may take part in round `t`.
    pub fn eligible(&self, client: u64, t: u64) -> bool {
        self.last
            .get(&client)
            .map_or(true, |&last| t >= last + self.min_separation)
    }

    /// Marks `clients` as participating in round `t`. Panics if one of them
    /// is not eligible, since that would break the privacy accounting.
    pub fn record(&mut self, clients: &[u64], t: u64) {
        for &c in clients {
            assert!(self.eligible(c, t), "client {c} is not eligible in round {t}");
            self.last.insert(c, t);
            *self.counts.entry(c).or_default() += 1;
        }
    }

    pub fn count(&self, client: u64) -> u64 {
        self.counts.get(&client).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    /// Largest participation count of any client.
    pub fn max_participations(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }
}
