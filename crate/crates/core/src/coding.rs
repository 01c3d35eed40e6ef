//! Worker assignment and encoding.
//!
//! The proposed scheme is cyclic: with `k̄` data blocks and `s̄` passive
//! workers every worker combines `ω = s̄ + 1` cyclically consecutive blocks,
//! so active worker `i` needs raw blocks `i+1 … i+s̄ (mod k̄)` from its
//! neighbours and passive worker `k̄ + i` receives one coded block built by
//! active worker `i` over the same support.
//!
//! Heterogeneous rosters are reduced to the homogeneous case by splitting a
//! client with multiplier `c` into `c` virtual workers of the weakest type.
//!
//! Two dense baselines (random and Vandermonde) and the uncoded assignment
//! share the same [`CodingPlan`] representation so decoding, verification and
//! simulation treat all schemes uniformly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{linear_combination, Matrix, MatrixError, PartitionedMatrix};
use crate::rng::{self, domain};

/// Plan JSON layout version.
pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodingError {
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("partition has {actual} blocks, plan expects {expected}")]
    BlockCount { expected: usize, actual: usize },
    #[error("blocks must share a common width")]
    NonUniformBlocks,
    #[error("evaluation points must be pairwise distinct (duplicate {0})")]
    DuplicatePoints(f64),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("plan JSON: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, CodingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Active,
    Passive,
}

/// One physical client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Client {
    pub id: usize,
    pub role: Role,
    pub type_index: usize,
    /// Generation/speed multiplier relative to the weakest type.
    pub multiplier: usize,
}

/// Physical clients, actives first, each group sorted by non-increasing multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoster {
    clients: Vec<Client>,
    /// Columns per virtual block (α).
    pub base_width: usize,
    /// Columns per unit time processed by the weakest type (β).
    pub base_speed: f64,
}

impl ClientRoster {
    /// `k_a` active and `s` passive clients, all of type 0 with multiplier 1.
    pub fn homogeneous(k_a: usize, s: usize) -> Result<Self> {
        Self::new(vec![(0, 1); k_a], vec![(0, 1); s])
    }

    /// Builds from `(type_index, multiplier)` pairs and validates.
    pub fn new(active: Vec<(usize, usize)>, passive: Vec<(usize, usize)>) -> Result<Self> {
        let roster = Self::unchecked(active, passive);
        roster.validate()?;
        Ok(roster)
    }

    /// Builds from multipliers alone; type indices rank the distinct
    /// multipliers, so the smallest multiplier is type 0.
    pub fn from_multipliers(active: &[usize], passive: &[usize]) -> Result<Self> {
        let distinct: BTreeSet<usize> = active.iter().chain(passive).copied().collect();
        let type_of: BTreeMap<usize, usize> = distinct
            .into_iter()
            .enumerate()
            .map(|(t, c)| (c, t))
            .collect();
        let tag = |cs: &[usize]| cs.iter().map(|c| (type_of[c], *c)).collect::<Vec<_>>();
        Self::new(tag(active), tag(passive))
    }

    fn unchecked(active: Vec<(usize, usize)>, passive: Vec<(usize, usize)>) -> Self {
        let clients = active
            .into_iter()
            .map(|p| (Role::Active, p))
            .chain(passive.into_iter().map(|p| (Role::Passive, p)))
            .enumerate()
            .map(|(id, (role, (type_index, multiplier)))| Client {
                id,
                role,
                type_index,
                multiplier,
            })
            .collect();
        Self {
            clients,
            base_width: 1,
            base_speed: 1.0,
        }
    }

    pub fn with_base(mut self, base_width: usize, base_speed: f64) -> Result<Self> {
        self.base_width = base_width;
        self.base_speed = base_speed;
        self.validate()?;
        Ok(self)
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_active(&self) -> usize {
        self.clients
            .iter()
            .filter(|c| c.role == Role::Active)
            .count()
    }

    pub fn num_passive(&self) -> usize {
        self.num_clients() - self.num_active()
    }

    pub fn active(&self) -> impl Iterator<Item = &Client> {
        self.clients.iter().filter(|c| c.role == Role::Active)
    }

    pub fn passive(&self) -> impl Iterator<Item = &Client> {
        self.clients.iter().filter(|c| c.role == Role::Passive)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.clients.iter().all(|c| c.multiplier == 1)
    }

    /// Checks every roster invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CodingError::InvalidRoster(msg));
        let k_a = self.num_active();
        let s = self.num_passive();
        if k_a == 0 {
            return bad("at least one active client is required".into());
        }
        for (pos, c) in self.clients.iter().enumerate() {
            if c.id != pos {
                return bad(format!("client at position {pos} has id {}", c.id));
            }
            if c.multiplier == 0 {
                return bad(format!(
                    "client W{pos} has multiplier 0; multipliers are positive integers"
                ));
            }
        }
        if let Some(pos) = self
            .clients
            .windows(2)
            .position(|w| w[0].role == Role::Passive && w[1].role == Role::Active)
        {
            return bad(format!(
                "active client W{} listed after a passive client",
                pos + 1
            ));
        }
        if s >= k_a {
            return bad(format!(
                "{s} passive clients with {k_a} active; the model requires fewer passive than active clients (s < k_A)"
            ));
        }
        let mut per_type: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for c in &self.clients {
            let e = per_type.entry(c.type_index).or_default();
            match c.role {
                Role::Active => e.0 += 1,
                Role::Passive => e.1 += 1,
            }
        }
        for (t, (a, p)) in per_type {
            if p > 0 && p >= a {
                return bad(format!(
                    "type {t} has {p} passive and {a} active clients; passive must be fewer than active per type"
                ));
            }
        }
        for role in [Role::Active, Role::Passive] {
            let ms: Vec<usize> = self
                .clients
                .iter()
                .filter(|c| c.role == role)
                .map(|c| c.multiplier)
                .collect();
            if ms.windows(2).any(|w| w[0] < w[1]) {
                return bad(format!(
                    "{role:?} clients must be sorted by non-increasing multiplier"
                ));
            }
        }
        if self.base_width == 0 {
            return bad("base width must be at least one column".into());
        }
        if !(self.base_speed.is_finite() && self.base_speed > 0.0) {
            return bad(format!("base speed {} must be positive", self.base_speed));
        }
        Ok(())
    }
}

/// Shorthand `"2,2,1,1,1|1,1"`: active multipliers, `|`, passive multipliers.
impl FromStr for ClientRoster {
    type Err = CodingError;

    fn from_str(s: &str) -> Result<Self> {
        let (act, pas) = s.split_once('|').unwrap_or((s, ""));
        let parse = |part: &str| -> Result<Vec<usize>> {
            part.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| CodingError::InvalidRoster(format!("bad multiplier {t:?}")))
                })
                .collect()
        };
        Self::from_multipliers(&parse(act)?, &parse(pas)?)
    }
}

/// Virtual-worker view of a roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub k_bar: usize,
    pub s_bar: usize,
    /// Owning physical client of each virtual worker.
    pub owner: Vec<usize>,
    /// Virtual workers of each physical client.
    pub workers_of: Vec<Range<usize>>,
}

/// Splits each client of multiplier `c` into `c` weakest-type virtual workers.
///
/// Active client `k` owns virtual workers `m..m+c_k` with `m = Σ_{i<k} c_i`;
/// passive clients are numbered the same way starting at `k̄`.
pub fn expand_heterogeneous(roster: &ClientRoster) -> Result<Expansion> {
    roster.validate()?;
    let k_bar: usize = roster.active().map(|c| c.multiplier).sum();
    let s_bar: usize = roster.passive().map(|c| c.multiplier).sum();
    let mut owner = Vec::with_capacity(k_bar + s_bar);
    let mut workers_of = Vec::with_capacity(roster.num_clients());
    for c in roster.clients() {
        let start = owner.len();
        owner.extend(std::iter::repeat_n(c.id, c.multiplier));
        workers_of.push(start..owner.len());
    }
    Ok(Expansion {
        k_bar,
        s_bar,
        owner,
        workers_of,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Cyclic weight-(s̄+1) scheme.
    Proposed,
    /// Every worker combines all blocks with random coefficients.
    Dense,
    /// Vandermonde rows `G[i,q] = x_i^q`.
    Poly,
    /// Each active worker computes its own block; no redundancy.
    Uncoded,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::Dense,
        Scheme::Poly,
        Scheme::Uncoded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Dense => "dense",
            Scheme::Poly => "poly",
            Scheme::Uncoded => "uncoded",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| {
                format!("unknown scheme {s:?} (expected proposed, dense, poly or uncoded)")
            })
    }
}

/// What one virtual worker computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedBlockSpec {
    pub worker: usize,
    pub owner_client: usize,
    /// Block indices combined, in support order.
    pub support: Vec<usize>,
    /// Coefficients aligned with `support`.
    pub coeffs: Vec<f64>,
    /// Random stream the coefficients were drawn from (`None` for deterministic ones).
    pub seed_tag: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// An uncoded block `Ā_q`.
    RawBlock(usize),
    /// The coded matrix of the given virtual worker.
    CodedBlock(usize),
}

/// One D2D send between physical clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    pub payload: Payload,
}

/// Full assignment of supports, coefficients and transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingPlan {
    pub format_version: u32,
    pub scheme: Scheme,
    pub k_bar: usize,
    /// Redundant workers beyond `k̄` (passive virtual workers for the proposed scheme).
    pub s_bar: usize,
    pub root_seed: Option<u64>,
    pub roster: ClientRoster,
    pub workers: Vec<CodedBlockSpec>,
    pub transfers: Vec<Transfer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluation_points: Option<Vec<f64>>,
}

impl CodingPlan {
    pub fn n_bar(&self) -> usize {
        self.workers.len()
    }

    /// Support size of the widest worker.
    pub fn weight(&self) -> usize {
        self.workers
            .iter()
            .map(|w| w.support.len())
            .max()
            .unwrap_or(0)
    }

    /// Coefficient row of worker `i` embedded in a length-`k̄` vector.
    pub fn coefficient_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.k_bar];
        let spec = &self.workers[i];
        for (&q, &c) in spec.support.iter().zip(&spec.coeffs) {
            row[q] += c;
        }
        row
    }

    /// The `n̄ × k̄` coefficient matrix `G`.
    pub fn coefficient_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_bar()).map(|i| self.coefficient_row(i)).collect()
    }

    /// Replaces every coefficient with 1.
    pub fn with_unit_coefficients(mut self) -> Self {
        for w in &mut self.workers {
            w.coeffs = vec![1.0; w.support.len()];
            w.seed_tag = None;
        }
        self
    }

    /// Physical client that generates raw block `q`.
    pub fn generator_of(&self, q: usize) -> usize {
        self.workers[q].owner_client
    }

    pub fn raw_transfer_count(&self) -> usize {
        self.transfers
            .iter()
            .filter(|t| matches!(t.payload, Payload::RawBlock(_)))
            .count()
    }

    pub fn coded_transfer_count(&self) -> usize {
        self.transfers
            .iter()
            .filter(|t| matches!(t.payload, Payload::CodedBlock(_)))
            .count()
    }

    /// Virtual workers owned by physical client `c`.
    pub fn workers_of(&self, client: usize) -> impl Iterator<Item = &CodedBlockSpec> {
        self.workers
            .iter()
            .filter(move |w| w.owner_client == client)
    }

    /// Structural checks: sizes, indices in range, finite coefficients and a
    /// valid roster whose expansion matches the plan. Safe on untrusted input.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CodingError::InvalidPlan(msg));
        if self.format_version != PLAN_FORMAT_VERSION {
            return bad(format!(
                "unsupported format version {}",
                self.format_version
            ));
        }
        self.roster.validate()?;
        let exp = expand_heterogeneous(&self.roster)?;
        if self.k_bar == 0 || self.k_bar != exp.k_bar {
            return bad(format!(
                "k_bar {} disagrees with roster ({})",
                self.k_bar, exp.k_bar
            ));
        }
        if self.workers.len() != self.k_bar + self.s_bar {
            return bad(format!(
                "{} workers listed, expected k_bar + s_bar = {}",
                self.workers.len(),
                self.k_bar + self.s_bar
            ));
        }
        if self.workers.len() > exp.owner.len() {
            return bad("more workers than the roster provides".into());
        }
        for (i, w) in self.workers.iter().enumerate() {
            if w.worker != i {
                return bad(format!("worker at position {i} is numbered {}", w.worker));
            }
            if w.owner_client != exp.owner[i] {
                return bad(format!(
                    "worker {i} owned by client {}, roster assigns client {}",
                    w.owner_client, exp.owner[i]
                ));
            }
            if w.support.is_empty() || w.support.len() != w.coeffs.len() {
                return bad(format!("worker {i} support/coefficient lengths disagree"));
            }
            if let Some(q) = w.support.iter().find(|&&q| q >= self.k_bar) {
                return bad(format!("worker {i} references block {q} of {}", self.k_bar));
            }
            let distinct: BTreeSet<_> = w.support.iter().collect();
            if distinct.len() != w.support.len() {
                return bad(format!("worker {i} repeats a block in its support"));
            }
            if w.coeffs.iter().any(|c| !c.is_finite()) {
                return bad(format!("worker {i} has a non-finite coefficient"));
            }
        }
        let n_clients = self.roster.num_clients();
        for t in &self.transfers {
            if t.from >= n_clients || t.to >= n_clients {
                return bad(format!("transfer {t:?} references an unknown client"));
            }
            match t.payload {
                Payload::RawBlock(q) if q >= self.k_bar => {
                    return bad(format!("transfer of unknown block {q}"))
                }
                Payload::CodedBlock(w) if w >= self.workers.len() => {
                    return bad(format!("transfer of unknown coded block {w}"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Departures from the shape the plan's scheme prescribes. Empty for a
    /// plan produced by the builders in this module.
    pub fn shape_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.scheme {
            Scheme::Proposed => {
                let omega = self.s_bar + 1;
                for (i, w) in self.workers.iter().enumerate() {
                    let base = if i < self.k_bar { i } else { i - self.k_bar };
                    let expect = cyclic_support(base, omega, self.k_bar);
                    if w.support != expect {
                        out.push(format!(
                            "worker {i}: support {:?}, expected {:?}",
                            w.support, expect
                        ));
                    }
                    if w.coeffs.contains(&0.0) {
                        out.push(format!("worker {i}: zero coefficient"));
                    }
                }
                for i in 0..self.s_bar.min(self.k_bar) {
                    let (a, p) = (&self.workers[i], &self.workers[self.k_bar + i]);
                    if a.coeffs == p.coeffs {
                        out.push(format!(
                            "passive worker {} repeats the coefficients of worker {i}",
                            self.k_bar + i
                        ));
                    }
                }
            }
            Scheme::Dense | Scheme::Poly => {
                for (i, w) in self.workers.iter().enumerate() {
                    if w.support.len() != self.k_bar {
                        out.push(format!(
                            "worker {i}: support of size {} is not dense",
                            w.support.len()
                        ));
                    }
                }
            }
            Scheme::Uncoded => {
                for (i, w) in self.workers.iter().enumerate() {
                    if w.support != [i] {
                        out.push(format!(
                            "worker {i}: support {:?}, expected [{i}]",
                            w.support
                        ));
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Parses and validates a plan.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let plan: CodingPlan =
            serde_json::from_slice(bytes).map_err(|e| CodingError::Json(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Human-readable allocation, one line per virtual worker grouped by client.
    pub fn allocation_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scheme={} k_bar={} s_bar={} n_bar={} weight={}",
            self.scheme,
            self.k_bar,
            self.s_bar,
            self.n_bar(),
            self.weight()
        );
        for c in self.roster.clients() {
            let role = match c.role {
                Role::Active => "active",
                Role::Passive => "passive",
            };
            let _ = writeln!(
                out,
                "W{} ({role}, type {}, x{})",
                c.id, c.type_index, c.multiplier
            );
            let mut any = false;
            for w in self.workers_of(c.id) {
                any = true;
                let blocks: Vec<String> = w.support.iter().map(|q| format!("A{q}")).collect();
                let _ = writeln!(out, "  worker {:>3}: {{{}}}", w.worker, blocks.join(", "));
            }
            if !any {
                let _ = writeln!(out, "  idle");
            }
        }
        let _ = writeln!(
            out,
            "transfers: {} raw, {} coded",
            self.raw_transfer_count(),
            self.coded_transfer_count()
        );
        out
    }
}

/// `{start, start+1, …, start+weight−1} mod k`.
pub fn cyclic_support(start: usize, weight: usize, k: usize) -> Vec<usize> {
    (0..weight).map(|d| (start + d) % k).collect()
}

fn random_coeffs(root_seed: u64, worker: usize, len: usize) -> (Vec<f64>, Option<u64>) {
    let tag = domain::PLAN + worker as u64;
    let mut rng = rng::stream(root_seed, tag);
    (
        (0..len).map(|_| rng::coefficient(&mut rng)).collect(),
        Some(tag),
    )
}

/// Proposed plan on a homogeneous roster of `k_a` active and `s` passive clients.
pub fn build_homogeneous_plan(k_a: usize, s: usize, root_seed: u64) -> Result<CodingPlan> {
    build_heterogeneous_plan(&ClientRoster::homogeneous(k_a, s)?, root_seed)
}

/// Proposed plan on the virtual-worker expansion of `roster`.
pub fn build_heterogeneous_plan(roster: &ClientRoster, root_seed: u64) -> Result<CodingPlan> {
    let exp = expand_heterogeneous(roster)?;
    let (k_bar, s_bar) = (exp.k_bar, exp.s_bar);
    if s_bar >= k_bar {
        return Err(CodingError::InvalidRoster(format!(
            "expanded system has s_bar = {s_bar} >= k_bar = {k_bar}; the cyclic weight s_bar + 1 cannot exceed k_bar"
        )));
    }
    let omega = s_bar + 1;
    let workers: Vec<CodedBlockSpec> = (0..k_bar + s_bar)
        .map(|i| {
            let base = if i < k_bar { i } else { i - k_bar };
            let (coeffs, seed_tag) = random_coeffs(root_seed, i, omega);
            CodedBlockSpec {
                worker: i,
                owner_client: exp.owner[i],
                support: cyclic_support(base, omega, k_bar),
                coeffs,
                seed_tag,
            }
        })
        .collect();

    let mut transfers = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 0..k_bar {
        for d in 1..omega {
            let q = (i + d) % k_bar;
            let t = Transfer {
                from: exp.owner[q],
                to: exp.owner[i],
                payload: Payload::RawBlock(q),
            };
            if t.from != t.to && seen.insert(t) {
                transfers.push(t);
            }
        }
    }
    for i in 0..s_bar {
        transfers.push(Transfer {
            from: exp.owner[i],
            to: exp.owner[k_bar + i],
            payload: Payload::CodedBlock(k_bar + i),
        });
    }

    Ok(CodingPlan {
        format_version: PLAN_FORMAT_VERSION,
        scheme: Scheme::Proposed,
        k_bar,
        s_bar,
        root_seed: Some(root_seed),
        roster: roster.clone(),
        workers,
        transfers,
        evaluation_points: None,
    })
}

/// Every raw block goes from its generator to every other client.
fn broadcast_transfers(exp: &Expansion, n_clients: usize) -> Vec<Transfer> {
    let mut transfers = Vec::new();
    for q in 0..exp.k_bar {
        let from = exp.owner[q];
        for to in (0..n_clients).filter(|&c| c != from) {
            transfers.push(Transfer {
                from,
                to,
                payload: Payload::RawBlock(q),
            });
        }
    }
    transfers.sort_unstable();
    transfers.dedup();
    transfers
}

fn dense_plan_on(roster: &ClientRoster, exp: &Expansion, root_seed: u64) -> CodingPlan {
    let (k_bar, s_bar) = (exp.k_bar, exp.s_bar);
    let workers = (0..k_bar + s_bar)
        .map(|i| {
            let (coeffs, seed_tag) = random_coeffs(root_seed, i, k_bar);
            CodedBlockSpec {
                worker: i,
                owner_client: exp.owner[i],
                support: (0..k_bar).collect(),
                coeffs,
                seed_tag,
            }
        })
        .collect();
    CodingPlan {
        format_version: PLAN_FORMAT_VERSION,
        scheme: Scheme::Dense,
        k_bar,
        s_bar,
        root_seed: Some(root_seed),
        roster: roster.clone(),
        workers,
        transfers: broadcast_transfers(exp, roster.num_clients()),
        evaluation_points: None,
    }
}

/// Dense random baseline: every worker combines all `k̄` blocks.
pub fn build_dense_plan(roster: &ClientRoster, root_seed: u64) -> Result<CodingPlan> {
    let exp = expand_heterogeneous(roster)?;
    Ok(dense_plan_on(roster, &exp, root_seed))
}

/// Default Vandermonde evaluation points `1, 2, …, n`.
pub fn default_evaluation_points(n: usize) -> Vec<f64> {
    (1..=n).map(|x| x as f64).collect()
}

fn check_distinct(points: &[f64]) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        if !a.is_finite() {
            return Err(CodingError::InvalidPlan(format!(
                "evaluation point {a} is not finite"
            )));
        }
        if points[..i].contains(a) {
            return Err(CodingError::DuplicatePoints(*a));
        }
    }
    Ok(())
}

fn poly_plan_on(roster: &ClientRoster, exp: &Expansion, points: &[f64]) -> Result<CodingPlan> {
    let (k_bar, s_bar) = (exp.k_bar, exp.s_bar);
    if points.len() != k_bar + s_bar {
        return Err(CodingError::InvalidPlan(format!(
            "{} evaluation points for {} workers",
            points.len(),
            k_bar + s_bar
        )));
    }
    check_distinct(points)?;
    let workers = points
        .iter()
        .enumerate()
        .map(|(i, &x)| CodedBlockSpec {
            worker: i,
            owner_client: exp.owner[i],
            support: (0..k_bar).collect(),
            coeffs: (0..k_bar).map(|q| x.powi(q as i32)).collect(),
            seed_tag: None,
        })
        .collect();
    Ok(CodingPlan {
        format_version: PLAN_FORMAT_VERSION,
        scheme: Scheme::Poly,
        k_bar,
        s_bar,
        root_seed: None,
        roster: roster.clone(),
        workers,
        transfers: broadcast_transfers(exp, roster.num_clients()),
        evaluation_points: Some(points.to_vec()),
    })
}

/// Vandermonde baseline `G[i,q] = points[i]^q`.
pub fn build_polynomial_plan(roster: &ClientRoster, points: &[f64]) -> Result<CodingPlan> {
    let exp = expand_heterogeneous(roster)?;
    poly_plan_on(roster, &exp, points)
}

/// Uncoded assignment: active worker `i` computes `Ā_i` alone; passive clients idle.
pub fn build_uncoded_plan(roster: &ClientRoster) -> Result<CodingPlan> {
    let exp = expand_heterogeneous(roster)?;
    let workers = (0..exp.k_bar)
        .map(|i| CodedBlockSpec {
            worker: i,
            owner_client: exp.owner[i],
            support: vec![i],
            coeffs: vec![1.0],
            seed_tag: None,
        })
        .collect();
    Ok(CodingPlan {
        format_version: PLAN_FORMAT_VERSION,
        scheme: Scheme::Uncoded,
        k_bar: exp.k_bar,
        s_bar: 0,
        root_seed: None,
        roster: roster.clone(),
        workers,
        transfers: Vec::new(),
        evaluation_points: None,
    })
}

/// Builds the plan for `scheme` with default parameters.
pub fn build_plan(scheme: Scheme, roster: &ClientRoster, root_seed: u64) -> Result<CodingPlan> {
    match scheme {
        Scheme::Proposed => build_heterogeneous_plan(roster, root_seed),
        Scheme::Dense => build_dense_plan(roster, root_seed),
        Scheme::Poly => {
            let exp = expand_heterogeneous(roster)?;
            poly_plan_on(
                roster,
                &exp,
                &default_evaluation_points(exp.k_bar + exp.s_bar),
            )
        }
        Scheme::Uncoded => build_uncoded_plan(roster),
    }
}

/// Coded matrices for every worker together with the coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedWorkload {
    pub coded: Vec<Matrix>,
    /// Row `i` is worker `i`'s coefficients over all `k̄` blocks.
    pub coefficients: Vec<Vec<f64>>,
}

impl EncodedWorkload {
    /// Every worker's product `Ã_iᵀx`.
    pub fn products(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.coded
            .par_iter()
            .map(|m| m.matvec_t(x).map_err(CodingError::from))
            .collect()
    }
}

fn check_partition(p: &PartitionedMatrix, k_bar: usize) -> Result<()> {
    if p.num_blocks() != k_bar {
        return Err(CodingError::BlockCount {
            expected: k_bar,
            actual: p.num_blocks(),
        });
    }
    if p.uniform_width().is_none() {
        return Err(CodingError::NonUniformBlocks);
    }
    Ok(())
}

/// Coded matrix of a single worker.
pub fn encode_worker(p: &PartitionedMatrix, spec: &CodedBlockSpec) -> Result<Matrix> {
    let blocks: Vec<&Matrix> = spec.support.iter().map(|&q| p.block(q)).collect();
    Ok(linear_combination(&blocks, &spec.coeffs)?)
}

/// Applies `plan` to the blocks of `p`. Workers are encoded in parallel.
pub fn encode(p: &PartitionedMatrix, plan: &CodingPlan) -> Result<EncodedWorkload> {
    check_partition(p, plan.k_bar)?;
    let coded = plan
        .workers
        .par_iter()
        .map(|spec| encode_worker(p, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedWorkload {
        coded,
        coefficients: plan.coefficient_matrix(),
    })
}

/// Every worker's product `Ã_iᵀx` without keeping the coded blocks: each
/// thread encodes one block, multiplies and drops it.
pub fn coded_products(
    p: &PartitionedMatrix,
    plan: &CodingPlan,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_partition(p, plan.k_bar)?;
    plan.workers
        .par_iter()
        .map(|spec| Ok(encode_worker(p, spec)?.matvec_t(x)?))
        .collect()
}

/// Roster of `k` actives and `n − k` passives without the `s < k` model
/// constraint, for baselines that do not need it.
fn baseline_roster(k: usize, n: usize) -> Result<(ClientRoster, Expansion)> {
    if k == 0 || n < k {
        return Err(CodingError::InvalidRoster(format!(
            "need 1 <= k_bar <= n (got k_bar={k}, n={n})"
        )));
    }
    let roster = ClientRoster::unchecked(vec![(0, 1); k], vec![(0, 1); n - k]);
    let exp = Expansion {
        k_bar: k,
        s_bar: n - k,
        owner: (0..n).collect(),
        workers_of: (0..n).map(|i| i..i + 1).collect(),
    };
    Ok((roster, exp))
}

/// Dense random baseline over `n` workers.
pub fn encode_baseline_dense(
    p: &PartitionedMatrix,
    n: usize,
    root_seed: u64,
) -> Result<EncodedWorkload> {
    let (roster, exp) = baseline_roster(p.num_blocks(), n)?;
    encode(p, &dense_plan_on(&roster, &exp, root_seed))
}

/// Vandermonde baseline over `points.len()` workers.
pub fn encode_baseline_polynomial(
    p: &PartitionedMatrix,
    points: &[f64],
) -> Result<EncodedWorkload> {
    let (roster, exp) = baseline_roster(p.num_blocks(), points.len())?;
    encode(p, &poly_plan_on(&roster, &exp, points)?)
}
