//! Raw-data exposure per client under a plan's transfer list.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::coding::{CodingPlan, Payload, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientExposure {
    pub client: usize,
    pub role: Role,
    /// Blocks the client holds uncoded: generated itself or received raw.
    pub raw_blocks: Vec<usize>,
    /// Share of `A`'s columns seen uncoded.
    pub raw_fraction: Ratio<usize>,
    /// Blocks appearing raw or inside any coded block the client holds.
    pub coded_support_blocks: Vec<usize>,
    pub coded_support_fraction: Ratio<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyExposure {
    pub clients: Vec<ClientExposure>,
}

impl PrivacyExposure {
    pub fn raw_fractions(&self) -> Vec<Ratio<usize>> {
        self.clients.iter().map(|c| c.raw_fraction).collect()
    }
}

/// Exposure of every physical client. All virtual blocks have equal width,
/// so fractions are block counts over `k̄`.
pub fn privacy_report(plan: &CodingPlan) -> PrivacyExposure {
    let n_clients = plan.roster.num_clients();
    let mut raw = vec![BTreeSet::new(); n_clients];
    let mut coded = vec![BTreeSet::new(); n_clients];
    // Active worker q generates block q.
    for q in 0..plan.k_bar.min(plan.workers.len()) {
        raw[plan.generator_of(q)].insert(q);
    }
    for t in &plan.transfers {
        match t.payload {
            Payload::RawBlock(q) => {
                raw[t.to].insert(q);
            }
            Payload::CodedBlock(w) => coded[t.to].extend(plan.workers[w].support.iter().copied()),
        }
    }
    for w in &plan.workers {
        coded[w.owner_client].extend(w.support.iter().copied());
    }
    let k = plan.k_bar.max(1);
    let clients = plan
        .roster
        .clients()
        .iter()
        .map(|c| {
            let r = &raw[c.id];
            let support: BTreeSet<usize> = coded[c.id].union(r).copied().collect();
            ClientExposure {
                client: c.id,
                role: c.role,
                raw_blocks: r.iter().copied().collect(),
                raw_fraction: Ratio::new(r.len(), k),
                coded_support_fraction: Ratio::new(support.len(), k),
                coded_support_blocks: support.into_iter().collect(),
            }
        })
        .collect();
    PrivacyExposure { clients }
}
