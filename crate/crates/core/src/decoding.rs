//! Recovery of `Aᵀx` from returned coded products, and the oracles that
//! certify a plan: exhaustive subset rank, Hall matchings, the neighbourhood
//! lower bound of the cyclic scheme, and straggler patterns over physical
//! clients.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use itertools::Itertools;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{CodingPlan, Scheme};
use crate::linalg::{self, Lu};
use crate::matching::{BipartiteGraph, MatchingResult};
use crate::rng::{self, domain};

/// Largest relative row residual accepted from a decode.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Subsets enumerated before sampling mode is required.
pub const MAX_EXHAUSTIVE_SUBSETS: u128 = 1_000_000;

/// Physical clients above which straggler patterns are not enumerated.
pub const MAX_PATTERN_CLIENTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecodeError {
    #[error("need {needed} results to decode, got {got}")]
    NotEnoughResults { needed: usize, got: usize },
    #[error("coefficient rows of workers {workers:?} are rank-deficient")]
    RankDeficient { workers: Vec<usize> },
    #[error("residual {residual:e} exceeds tolerance for workers {workers:?}")]
    Residual { residual: f64, workers: Vec<usize> },
    #[error("malformed decode problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("{total} subsets exceed the exhaustive limit of {limit}; use sampled mode")]
    TooManySubsets { total: u128, limit: u128 },
    #[error("{0} physical clients are too many to enumerate straggler patterns")]
    TooManyClients(usize),
    #[error("subset must contain exactly {expected} distinct workers below {n}")]
    BadSubset { expected: usize, n: usize },
    #[error("m = {m} outside 1..={k_bar}")]
    OutOfRange { m: usize, k_bar: usize },
}

/// One returned coded product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnedProduct {
    pub worker: usize,
    /// Coefficients over all `k̄` blocks.
    pub coefficients: Vec<f64>,
    /// `Ã_iᵀx`, of length α.
    pub product: Vec<f64>,
}

/// Returned products in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeProblem {
    pub k_bar: usize,
    pub returned: Vec<ReturnedProduct>,
}

impl DecodeProblem {
    pub fn new(k_bar: usize, returned: Vec<ReturnedProduct>) -> Result<Self, DecodeError> {
        let p = Self { k_bar, returned };
        p.validate()?;
        Ok(p)
    }

    /// Assembles a problem from a plan, worker products and an arrival order.
    pub fn from_plan(
        plan: &CodingPlan,
        products: &[Vec<f64>],
        arrivals: &[usize],
    ) -> Result<Self, DecodeError> {
        let returned = arrivals
            .iter()
            .map(|&w| {
                if w >= plan.n_bar() || w >= products.len() {
                    return Err(DecodeError::Malformed(format!("unknown worker {w}")));
                }
                Ok(ReturnedProduct {
                    worker: w,
                    coefficients: plan.coefficient_row(w),
                    product: products[w].clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(plan.k_bar, returned)
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.k_bar == 0 {
            return Err(DecodeError::Malformed("k_bar must be positive".into()));
        }
        let alpha = self.returned.first().map(|r| r.product.len());
        for r in &self.returned {
            if r.coefficients.len() != self.k_bar {
                return Err(DecodeError::Malformed(format!(
                    "worker {} has {} coefficients, expected {}",
                    r.worker,
                    r.coefficients.len(),
                    self.k_bar
                )));
            }
            if Some(r.product.len()) != alpha || r.product.is_empty() {
                return Err(DecodeError::Malformed(
                    "product vectors differ in length".into(),
                ));
            }
            if r.coefficients
                .iter()
                .chain(&r.product)
                .any(|v| !v.is_finite())
            {
                return Err(DecodeError::Malformed(format!(
                    "worker {} has non-finite data",
                    r.worker
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// `Ā_qᵀx` for every block `q`.
    pub block_products: Vec<Vec<f64>>,
    /// Largest row residual `‖(G_S·U − Y)_i‖ / max_i ‖Y_i‖`.
    pub residual: f64,
    pub used_workers: Vec<usize>,
    /// `κ₁(G_S)`.
    pub condition_number: f64,
}

impl DecodeResult {
    /// Block products concatenated in block order, i.e. `Aᵀx`.
    pub fn concatenated(&self) -> Vec<f64> {
        self.block_products.concat()
    }
}

/// Decodes from the first `k̄` results in arrival order.
pub fn decode(problem: &DecodeProblem) -> Result<DecodeResult, DecodeError> {
    problem.validate()?;
    let k = problem.k_bar;
    if problem.returned.len() < k {
        return Err(DecodeError::NotEnoughResults {
            needed: k,
            got: problem.returned.len(),
        });
    }
    solve_rows(problem, &(0..k).collect::<Vec<_>>())
}

/// Decodes from the results at positions `selection` of `problem.returned`.
pub fn decode_subset(
    problem: &DecodeProblem,
    selection: &[usize],
) -> Result<DecodeResult, DecodeError> {
    problem.validate()?;
    if selection.len() != problem.k_bar {
        return Err(DecodeError::NotEnoughResults {
            needed: problem.k_bar,
            got: selection.len(),
        });
    }
    if selection.iter().any(|&i| i >= problem.returned.len())
        || selection.iter().collect::<HashSet<_>>().len() != selection.len()
    {
        return Err(DecodeError::Malformed(
            "selection indices invalid or repeated".into(),
        ));
    }
    solve_rows(problem, selection)
}

fn solve_rows(problem: &DecodeProblem, selection: &[usize]) -> Result<DecodeResult, DecodeError> {
    let rows: Vec<&ReturnedProduct> = selection.iter().map(|&i| &problem.returned[i]).collect();
    let workers: Vec<usize> = rows.iter().map(|r| r.worker).collect();
    let g: Vec<Vec<f64>> = rows.iter().map(|r| r.coefficients.clone()).collect();
    let lu = Lu::factor(&g).map_err(|_| DecodeError::RankDeficient {
        workers: workers.clone(),
    })?;
    let k = problem.k_bar;
    let alpha = rows[0].product.len();

    // Solve column by column of the α right-hand sides.
    let mut unknowns = vec![vec![0.0; alpha]; k];
    let mut rhs = vec![0.0; k];
    for c in 0..alpha {
        for (i, r) in rows.iter().enumerate() {
            rhs[i] = r.product[c];
        }
        for (q, v) in lu.solve(&rhs).into_iter().enumerate() {
            unknowns[q][c] = v;
        }
    }

    let y_norm = rows
        .iter()
        .map(|r| r.product.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (i, r) in rows.iter().enumerate() {
        let mut sq = 0.0;
        for c in 0..alpha {
            let fitted: f64 = (0..k).map(|q| g[i][q] * unknowns[q][c]).sum();
            sq += (fitted - r.product[c]).powi(2);
        }
        worst = worst.max(sq.sqrt());
    }
    let residual = if y_norm > 0.0 { worst / y_norm } else { worst };
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(DecodeError::Residual { residual, workers });
    }
    let condition_number = linalg::norm_1(&g) * linalg::norm_1(&lu.inverse());
    Ok(DecodeResult {
        block_products: unknowns,
        residual,
        used_workers: workers,
        condition_number,
    })
}

/// How subsets of workers are visited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Enumeration {
    Exhaustive,
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub scheme: Scheme,
    pub k_bar: usize,
    pub s_bar: usize,
    pub n_bar: usize,
    pub enumeration: Enumeration,
    pub subsets_total: u128,
    pub subsets_checked: usize,
    /// k̄-subsets whose coefficient rows are numerically rank-deficient.
    pub failures: Vec<Vec<usize>>,
    /// k̄-subsets whose support graph has no perfect matching.
    pub hall_failures: Vec<Vec<usize>>,
    /// Smallest and largest `κ₁` over full-rank subsets.
    pub min_condition: Option<f64>,
    pub max_condition: Option<f64>,
}

impl ResilienceReport {
    pub fn certified(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `C(n, k)` without overflow for the sizes that matter here.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Every `k`-subset of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n).combinations(k).collect()
}

fn subsets(n: usize, k: usize, mode: Enumeration) -> Result<(u128, Vec<Vec<usize>>), VerifyError> {
    let total = binomial(n, k);
    match mode {
        Enumeration::Exhaustive => {
            if total > MAX_EXHAUSTIVE_SUBSETS {
                return Err(VerifyError::TooManySubsets {
                    total,
                    limit: MAX_EXHAUSTIVE_SUBSETS,
                });
            }
            Ok((total, k_subsets(n, k)))
        }
        Enumeration::Sampled { samples, seed } => {
            let mut rng = rng::stream(seed, domain::PROBE);
            let draws = (0..samples)
                .map(|_| {
                    let mut s = index::sample(&mut rng, n, k).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect();
            Ok((total, draws))
        }
    }
}

/// Support graph of the given workers: equations × blocks.
pub fn support_graph(plan: &CodingPlan, workers: &[usize]) -> BipartiteGraph {
    let adj = workers
        .iter()
        .map(|&w| {
            let spec = &plan.workers[w];
            spec.support
                .iter()
                .zip(&spec.coeffs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(q, _)| *q)
                .collect()
        })
        .collect();
    BipartiteGraph::new(plan.k_bar, adj)
}

fn check_subset(plan: &CodingPlan, subset: &[usize]) -> Result<(), VerifyError> {
    let distinct: BTreeSet<_> = subset.iter().collect();
    if subset.len() != plan.k_bar
        || distinct.len() != subset.len()
        || subset.iter().any(|&w| w >= plan.n_bar())
    {
        return Err(VerifyError::BadSubset {
            expected: plan.k_bar,
            n: plan.n_bar(),
        });
    }
    Ok(())
}

/// Perfect matching between the `k̄` equations of `subset` and the `k̄` unknowns.
pub fn check_hall_condition(
    plan: &CodingPlan,
    subset: &[usize],
) -> Result<MatchingResult, VerifyError> {
    check_subset(plan, subset)?;
    let mut m = support_graph(plan, subset).maximum_matching();
    // Report workers rather than positions within the subset.
    m.pairs = m.pairs.into_iter().map(|(l, r)| (subset[l], r)).collect();
    m.deficient_set = m
        .deficient_set
        .map(|s| s.into_iter().map(|l| subset[l]).collect());
    Ok(m)
}

/// Checks numerical rank and Hall's condition for every k̄-subset of workers
/// (or a random sample of them).
pub fn check_all_subsets(
    plan: &CodingPlan,
    mode: Enumeration,
) -> Result<ResilienceReport, VerifyError> {
    let (total, sets) = subsets(plan.n_bar(), plan.k_bar, mode)?;
    let g = plan.coefficient_matrix();
    let outcomes: Vec<(bool, bool, f64)> = sets
        .par_iter()
        .map(|s| {
            let rows: Vec<Vec<f64>> = s.iter().map(|&w| g[w].clone()).collect();
            let full = linalg::rank(&rows) == plan.k_bar;
            let cond = if full {
                linalg::condition_number(&rows)
            } else {
                f64::INFINITY
            };
            let matched = support_graph(plan, s).maximum_matching().perfect;
            (full, matched, cond)
        })
        .collect();

    let mut failures = Vec::new();
    let mut hall_failures = Vec::new();
    let (mut lo, mut hi) = (None::<f64>, None::<f64>);
    for (s, (full, matched, cond)) in sets.iter().zip(outcomes) {
        if !full {
            failures.push(s.clone());
        } else if cond.is_finite() {
            lo = Some(lo.map_or(cond, |v| v.min(cond)));
            hi = Some(hi.map_or(cond, |v| v.max(cond)));
        }
        if !matched {
            hall_failures.push(s.clone());
        }
    }
    Ok(ResilienceReport {
        scheme: plan.scheme,
        k_bar: plan.k_bar,
        s_bar: plan.s_bar,
        n_bar: plan.n_bar(),
        enumeration: mode,
        subsets_total: total,
        subsets_checked: sets.len(),
        failures,
        hall_failures,
        min_condition: lo,
        max_condition: hi,
    })
}

/// Lower bound on the number of distinct unknowns touched by any `m`
/// equations of the cyclic scheme with `k̄` blocks and `s̄` passive workers:
/// `min(ω + ⌈m/2⌉ − 1, k̄)` for `m ≤ 2s̄`, else `min(ω + s̄ + q − 1, k̄)` with `q = m − 2s̄`.
pub fn neighborhood_lower_bound(
    k_bar: usize,
    s_bar: usize,
    m: usize,
) -> Result<usize, VerifyError> {
    if m == 0 || m > k_bar {
        return Err(VerifyError::OutOfRange { m, k_bar });
    }
    let omega = s_bar + 1;
    let bound = if m <= 2 * s_bar {
        omega + m.div_ceil(2) - 1
    } else {
        omega + s_bar + (m - 2 * s_bar) - 1
    };
    Ok(bound.min(k_bar))
}

/// A set of equations that touches fewer unknowns than the bound allows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub workers: Vec<usize>,
    pub measured: usize,
    pub bound: usize,
}

/// Enumerates every nonempty subset of `workers` (at most 20 of them) and
/// returns those whose neighbourhood is below [`neighborhood_lower_bound`].
pub fn neighborhood_violations(
    plan: &CodingPlan,
    workers: &[usize],
) -> Result<Vec<BoundViolation>, VerifyError> {
    if workers.len() > 20
        || workers.len() > plan.k_bar
        || workers.iter().any(|&w| w >= plan.n_bar())
    {
        return Err(VerifyError::BadSubset {
            expected: plan.k_bar,
            n: plan.n_bar(),
        });
    }
    let masks: Vec<u64> = workers
        .iter()
        .map(|&w| {
            plan.workers[w]
                .support
                .iter()
                .fold(0u64, |m, &q| m | (1u64 << (q % 64)))
        })
        .collect();
    // Block indices beyond 63 would alias in the mask; fall back to sets.
    let wide = plan.k_bar > 64;
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << workers.len()) {
        let members: Vec<usize> = (0..workers.len())
            .filter(|i| mask & (1 << i) != 0)
            .collect();
        let measured = if wide {
            members
                .iter()
                .flat_map(|&i| plan.workers[workers[i]].support.iter().copied())
                .collect::<BTreeSet<_>>()
                .len()
        } else {
            members
                .iter()
                .fold(0u64, |acc, &i| acc | masks[i])
                .count_ones() as usize
        };
        let bound = neighborhood_lower_bound(plan.k_bar, plan.s_bar, members.len())?;
        if measured < bound {
            out.push(BoundViolation {
                workers: members.iter().map(|&i| workers[i]).collect(),
                measured,
                bound,
            });
        }
    }
    Ok(out)
}

/// One set of straggling physical clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StragglerPattern {
    pub clients: Vec<usize>,
    /// Straggler count per client type.
    pub type_counts: BTreeMap<usize, usize>,
    pub workers_removed: usize,
    pub tolerable: bool,
}

/// All patterns sharing one type multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeGroup {
    pub type_counts: BTreeMap<usize, usize>,
    pub patterns: usize,
    pub tolerable_patterns: usize,
    pub all_tolerable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub k_bar: usize,
    pub s_bar: usize,
    pub patterns: Vec<StragglerPattern>,
    pub groups: Vec<TypeGroup>,
    /// Type multisets in which every pattern is tolerable and that no larger
    /// such multiset contains.
    pub maximal_tolerable: Vec<BTreeMap<usize, usize>>,
    /// e.g. `"2× type-0: tolerable, 1× type-1: tolerable"`.
    pub summary: String,
}

fn describe(counts: &BTreeMap<usize, usize>) -> String {
    if counts.is_empty() {
        return "no stragglers".into();
    }
    counts
        .iter()
        .map(|(t, c)| format!("{c}× type-{t}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn dominates(big: &BTreeMap<usize, usize>, small: &BTreeMap<usize, usize>) -> bool {
    big != small
        && small
            .iter()
            .all(|(t, c)| big.get(t).copied().unwrap_or(0) >= *c)
}

/// Enumerates every set of straggling physical clients. A set is tolerable
/// when at least `k̄` virtual workers survive and every `k̄`-subset of the
/// survivors decodes.
pub fn resilience_patterns(plan: &CodingPlan) -> Result<PatternReport, VerifyError> {
    let clients = plan.roster.clients();
    if clients.len() > MAX_PATTERN_CLIENTS {
        return Err(VerifyError::TooManyClients(clients.len()));
    }
    let failing: Vec<Vec<usize>> = check_all_subsets(plan, Enumeration::Exhaustive)?.failures;

    let mut patterns = Vec::new();
    for mask in 0u32..(1u32 << clients.len()) {
        let chosen: Vec<usize> = (0..clients.len())
            .filter(|i| mask & (1 << i) != 0)
            .collect();
        let mut type_counts = BTreeMap::new();
        for &c in &chosen {
            *type_counts.entry(clients[c].type_index).or_insert(0) += 1;
        }
        let removed: BTreeSet<usize> = plan
            .workers
            .iter()
            .filter(|w| chosen.contains(&w.owner_client))
            .map(|w| w.worker)
            .collect();
        let survivors = plan.n_bar() - removed.len();
        let tolerable = survivors >= plan.k_bar
            && failing
                .iter()
                .all(|f| f.iter().any(|w| removed.contains(w)));
        patterns.push(StragglerPattern {
            clients: chosen,
            type_counts,
            workers_removed: removed.len(),
            tolerable,
        });
    }

    let mut grouped: BTreeMap<BTreeMap<usize, usize>, (usize, usize)> = BTreeMap::new();
    for p in &patterns {
        let e = grouped.entry(p.type_counts.clone()).or_default();
        e.0 += 1;
        e.1 += usize::from(p.tolerable);
    }
    let groups: Vec<TypeGroup> = grouped
        .into_iter()
        .map(|(type_counts, (n, ok))| TypeGroup {
            type_counts,
            patterns: n,
            tolerable_patterns: ok,
            all_tolerable: n == ok,
        })
        .collect();
    let good: Vec<&BTreeMap<usize, usize>> = groups
        .iter()
        .filter(|g| g.all_tolerable && !g.type_counts.is_empty())
        .map(|g| &g.type_counts)
        .collect();
    let maximal_tolerable: Vec<BTreeMap<usize, usize>> = good
        .iter()
        .filter(|small| !good.iter().any(|big| dominates(big, small)))
        .map(|m| (*m).clone())
        .collect();
    let summary = if maximal_tolerable.is_empty() {
        "no straggler pattern is tolerable".to_string()
    } else {
        maximal_tolerable
            .iter()
            .map(|m| format!("{}: tolerable", describe(m)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    Ok(PatternReport {
        k_bar: plan.k_bar,
        s_bar: plan.s_bar,
        patterns,
        groups,
        maximal_tolerable,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{build_heterogeneous_plan, build_homogeneous_plan, encode, CodedBlockSpec};
    use crate::matrix::{partition_even, DenseMatrix, Matrix};
    use crate::rng::stream;

    fn max_rel_err(got: &[f64], expect: &[f64]) -> f64 {
        let scale = expect
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        got.iter()
            .zip(expect)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn identity_plan_decodes_unchanged() {
        let plan = build_homogeneous_plan(3, 0, 1)
            .unwrap()
            .with_unit_coefficients();
        let products = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let problem = DecodeProblem::from_plan(&plan, &products, &[2, 0, 1]).unwrap();
        let r = decode(&problem).unwrap();
        assert_eq!(r.block_products, products);
        assert_eq!(r.used_workers, vec![2, 0, 1]);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn toy_difference_recovery() {
        let a0x = vec![1.5, -2.0];
        let a1x = vec![0.25, 4.0];
        let sum: Vec<f64> = a0x.iter().zip(&a1x).map(|(a, b)| a + b).collect();
        let problem = DecodeProblem::new(
            2,
            vec![
                ReturnedProduct {
                    worker: 0,
                    coefficients: vec![1.0, 0.0],
                    product: a0x.clone(),
                },
                ReturnedProduct {
                    worker: 2,
                    coefficients: vec![1.0, 1.0],
                    product: sum,
                },
            ],
        )
        .unwrap();
        let r = decode(&problem).unwrap();
        assert_eq!(r.block_products[0], a0x);
        assert!(max_rel_err(&r.block_products[1], &a1x) < 1e-15);
    }

    #[test]
    fn drop_two_workers_of_twelve() {
        let mut rng = stream(8, 0);
        let a: Matrix = DenseMatrix::random(30, 20, &mut rng).unwrap().into();
        let x = rng::uniform_vector(&mut rng, 30);
        let p = partition_even(&a, 10).unwrap();
        let plan = build_homogeneous_plan(10, 2, 8).unwrap();
        let products = encode(&p, &plan).unwrap().products(&x).unwrap();
        let arrivals: Vec<usize> = (0..12).filter(|w| *w != 3 && *w != 7).collect();
        let r = decode(&DecodeProblem::from_plan(&plan, &products, &arrivals).unwrap()).unwrap();
        let direct = a.matvec_t(&x).unwrap();
        assert!(max_rel_err(&r.concatenated(), &direct) < 1e-8);
    }

    #[test]
    fn decode_errors() {
        let plan = build_homogeneous_plan(4, 1, 2).unwrap();
        let products = vec![vec![1.0]; 5];
        let short = DecodeProblem::from_plan(&plan, &products, &[0, 1, 2]).unwrap();
        assert_eq!(
            decode(&short).unwrap_err(),
            DecodeError::NotEnoughResults { needed: 4, got: 3 }
        );

        let dup = DecodeProblem::new(
            2,
            vec![
                ReturnedProduct {
                    worker: 0,
                    coefficients: vec![1.0, 2.0],
                    product: vec![1.0],
                },
                ReturnedProduct {
                    worker: 1,
                    coefficients: vec![2.0, 4.0],
                    product: vec![2.0],
                },
            ],
        )
        .unwrap();
        assert_eq!(
            decode(&dup).unwrap_err(),
            DecodeError::RankDeficient {
                workers: vec![0, 1]
            }
        );
        assert!(DecodeProblem::new(
            2,
            vec![ReturnedProduct {
                worker: 0,
                coefficients: vec![1.0],
                product: vec![1.0]
            }]
        )
        .is_err());
    }

    #[test]
    fn exhaustive_check_on_twelve_workers() {
        let plan = build_homogeneous_plan(10, 2, 3).unwrap();
        let report = check_all_subsets(&plan, Enumeration::Exhaustive).unwrap();
        assert_eq!(report.subsets_checked, 66);
        assert!(report.failures.is_empty());
        assert!(report.hall_failures.is_empty());
        assert!(report.certified());
    }

    #[test]
    fn identity_plan_has_one_subset() {
        let plan = build_homogeneous_plan(5, 0, 3).unwrap();
        let report = check_all_subsets(&plan, Enumeration::Exhaustive).unwrap();
        assert_eq!(report.subsets_checked, 1);
        assert!(report.certified());
    }

    #[test]
    fn duplicated_row_is_caught() {
        let mut plan = build_homogeneous_plan(4, 1, 3).unwrap();
        plan.workers[4].coeffs = plan.workers[0].coeffs.clone();
        let report = check_all_subsets(&plan, Enumeration::Exhaustive).unwrap();
        assert_eq!(
            report.failures,
            vec![vec![0, 1, 2, 4], vec![0, 1, 3, 4], vec![0, 2, 3, 4]]
        );
        assert!(!report.certified());
    }

    #[test]
    fn guard_requires_sampling() {
        let plan = build_homogeneous_plan(20, 12, 3).unwrap();
        assert!(matches!(
            check_all_subsets(&plan, Enumeration::Exhaustive),
            Err(VerifyError::TooManySubsets { .. })
        ));
        let sampled = check_all_subsets(
            &plan,
            Enumeration::Sampled {
                samples: 50,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(sampled.subsets_checked, 50);
        assert!(sampled.certified());
    }

    #[test]
    fn hall_on_plans_and_single_worker() {
        let plan = build_homogeneous_plan(10, 2, 1).unwrap();
        for s in (0..12).combinations(10) {
            assert!(check_hall_condition(&plan, &s).unwrap().perfect);
        }
        let one = build_homogeneous_plan(1, 0, 1).unwrap();
        let m = check_hall_condition(&one, &[0]).unwrap();
        assert!(m.perfect);
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert!(check_hall_condition(&plan, &[0, 1]).is_err());
    }

    #[test]
    fn hall_violation_in_hand_built_plan() {
        let mut plan = build_homogeneous_plan(3, 1, 1).unwrap();
        // Workers 0, 1 and 3 all restricted to blocks {0, 1}.
        plan.workers[1] = CodedBlockSpec {
            support: vec![0, 1],
            ..plan.workers[1].clone()
        };
        let m = check_hall_condition(&plan, &[0, 1, 3]).unwrap();
        assert!(!m.perfect);
        let set = m.deficient_set.unwrap();
        assert!(m.deficient_neighbourhood.unwrap().len() < set.len());
    }

    #[test]
    fn bound_formula_examples() {
        assert_eq!(neighborhood_lower_bound(10, 2, 3).unwrap(), 4);
        assert_eq!(neighborhood_lower_bound(10, 2, 10).unwrap(), 10);
        assert_eq!(neighborhood_lower_bound(10, 2, 1).unwrap(), 3);
        assert_eq!(neighborhood_lower_bound(5, 0, 1).unwrap(), 1);
        assert!(neighborhood_lower_bound(10, 2, 0).is_err());
        assert!(neighborhood_lower_bound(10, 2, 11).is_err());
        for k in 1..15 {
            for s in 0..k {
                for m in 1..=k {
                    assert!(neighborhood_lower_bound(k, s, m).unwrap() >= m);
                }
            }
        }
    }

    #[test]
    fn bound_holds_on_hetero_roster() {
        let plan = build_heterogeneous_plan(&"2,2,1,1,1|1,1".parse().unwrap(), 4).unwrap();
        for s in (0..plan.n_bar()).combinations(plan.k_bar) {
            assert!(neighborhood_violations(&plan, &s).unwrap().is_empty());
        }
    }

    #[test]
    fn example_two_patterns() {
        let plan = build_heterogeneous_plan(&"2,2,1,1,1|1,1".parse().unwrap(), 4).unwrap();
        let report = resilience_patterns(&plan).unwrap();
        assert_eq!(report.summary, "2× type-0: tolerable, 1× type-1: tolerable");
        for p in &report.patterns {
            assert_eq!(p.tolerable, p.workers_removed <= 2, "{p:?}");
        }
        assert!(
            report
                .patterns
                .iter()
                .find(|p| p.clients.is_empty())
                .unwrap()
                .tolerable
        );
    }

    #[test]
    fn homogeneous_pairs_are_tolerable() {
        let plan = build_homogeneous_plan(10, 2, 5).unwrap();
        let report = resilience_patterns(&plan).unwrap();
        for p in report.patterns.iter().filter(|p| p.clients.len() <= 2) {
            assert!(p.tolerable);
        }
        assert!(report
            .patterns
            .iter()
            .filter(|p| p.clients.len() == 3)
            .all(|p| !p.tolerable));
        assert_eq!(report.summary, "2× type-0: tolerable");
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(12, 10), 66);
        assert_eq!(binomial(9, 7), 36);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(32, 20), 225_792_840);
    }
}
