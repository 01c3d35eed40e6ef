//! Round-level simulation: D2D transfers, per-client compute times,
//! stragglers, arrival order and decoding.
//!
//! Time is in abstract units. A round proceeds as broadcast of `x`, then the
//! D2D exchange prescribed by the plan, then computation; a physical client
//! runs its virtual workers back to back and returns all their results when
//! it finishes.

mod bench;
mod fl;
mod privacy;

pub use bench::{
    sparse_compute_benchmark, sparsity_sweep, synthetic_sparse_partition, BenchOptions,
    SchemeBenchmark, SweepRow, WorkerMeasurement,
};
pub use fl::{
    fl_demo, power_iteration_lipschitz, CodedOperator, FlError, FlOptions, FlStep, FlTrajectory,
};
pub use privacy::{privacy_report, ClientExposure, PrivacyExposure};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::coding::{CodingPlan, Payload, Scheme};
use crate::decoding::{decode, DecodeProblem, DecodeResult};
use crate::rng::{domain, stream, uniform_vector};

/// Shifted-exponential compute time: `shift + Exp(rate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedExp {
    pub shift: f64,
    pub rate: f64,
}

/// Compute-time override for every client of one type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeNoise {
    pub type_index: usize,
    #[serde(flatten)]
    pub dist: ShiftedExp,
}

/// Random part of a virtual worker's compute time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComputeNoise {
    /// Deterministic `α/(cβ)`.
    None,
    /// `α/(cβ) + Exp(1/(α/(cβ)))` unless a type has an explicit override.
    ShiftedExponential {
        #[serde(default)]
        per_type: Vec<TypeNoise>,
    },
}

impl Default for ComputeNoise {
    fn default() -> Self {
        ComputeNoise::ShiftedExponential {
            per_type: Vec::new(),
        }
    }
}

/// Which physical clients fail in a round. Failed clients return nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StragglerInjection {
    #[default]
    None,
    Explicit {
        clients: Vec<usize>,
    },
    /// `count` clients drawn uniformly without replacement each round.
    RandomCount {
        count: usize,
    },
    /// Each client fails independently with probability `p`.
    Probabilistic {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TimingModel {
    pub noise: ComputeNoise,
    pub stragglers: StragglerInjection,
}

impl TimingModel {
    pub fn deterministic() -> Self {
        Self {
            noise: ComputeNoise::None,
            stragglers: StragglerInjection::None,
        }
    }

    pub fn with_stragglers(mut self, stragglers: StragglerInjection) -> Self {
        self.stragglers = stragglers;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if let ComputeNoise::ShiftedExponential { per_type } = &self.noise {
            for (i, o) in per_type.iter().enumerate() {
                let (t, se) = (o.type_index, o.dist);
                if per_type[..i].iter().any(|p| p.type_index == t) {
                    return Err(format!("type {t} has more than one override"));
                }
                if !(se.shift >= 0.0
                    && se.shift.is_finite()
                    && se.rate > 0.0
                    && se.rate.is_finite())
                {
                    return Err(format!("type {t}: need shift >= 0 and rate > 0"));
                }
            }
        }
        if let StragglerInjection::Probabilistic { p } = self.stragglers {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("straggler probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Time for one virtual worker of a client of type `type_index` and
    /// multiplier `c` to process `alpha` columns at base speed `beta`.
    fn worker_time<R: Rng + ?Sized>(
        &self,
        alpha: f64,
        c: f64,
        beta: f64,
        type_index: usize,
        rng: &mut R,
    ) -> f64 {
        let base = alpha / (c * beta);
        match &self.noise {
            ComputeNoise::None => base,
            ComputeNoise::ShiftedExponential { per_type } => {
                let se = per_type
                    .iter()
                    .find(|o| o.type_index == type_index)
                    .map(|o| o.dist)
                    .unwrap_or(ShiftedExp {
                        shift: base,
                        rate: 1.0 / base,
                    });
                match Exp::new(se.rate) {
                    Ok(d) => se.shift + d.sample(rng),
                    Err(_) => se.shift,
                }
            }
        }
    }

    fn draw_stragglers<R: Rng + ?Sized>(&self, n_clients: usize, rng: &mut R) -> Vec<usize> {
        let mut out = match &self.stragglers {
            StragglerInjection::None => Vec::new(),
            StragglerInjection::Explicit { clients } => {
                clients.iter().copied().filter(|&c| c < n_clients).collect()
            }
            StragglerInjection::RandomCount { count } => {
                sample(rng, n_clients, (*count).min(n_clients)).into_vec()
            }
            StragglerInjection::Probabilistic { p } => {
                (0..n_clients).filter(|_| rng.random_bool(*p)).collect()
            }
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Parametric D2D and broadcast costs. A device sends one block at a time;
/// different devices send in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommModel {
    /// Fixed cost per block send.
    pub link_latency: f64,
    /// Cost per byte sent device to device.
    pub per_byte: f64,
    pub bytes_per_element: usize,
    /// Cost of the server broadcasting `x`.
    pub broadcast_cost: f64,
}

impl Default for CommModel {
    fn default() -> Self {
        Self {
            link_latency: 1e-3,
            per_byte: 8e-9,
            bytes_per_element: 8,
            broadcast_cost: 1e-3,
        }
    }
}

impl CommModel {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("link_latency", self.link_latency),
            ("per_byte", self.per_byte),
            ("broadcast_cost", self.broadcast_cost),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and >= 0 (got {v})"));
            }
        }
        Ok(())
    }

    pub fn send_cost(&self, bytes: u64) -> f64 {
        self.link_latency + self.per_byte * bytes as f64
    }
}

/// Transfer tally and modeled delay of a plan's D2D exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D2dCost {
    pub raw_block_transfers: usize,
    pub coded_block_transfers: usize,
    pub total_bytes: u64,
    /// Raw blocks first, then coded blocks (which are built from received
    /// raw blocks). Each phase lasts as long as its busiest sender.
    pub delay: f64,
}

/// Bytes in one `rows × alpha` block.
pub fn block_bytes(rows: usize, alpha: usize, comm: &CommModel) -> u64 {
    rows as u64 * alpha as u64 * comm.bytes_per_element as u64
}

pub fn d2d_cost(plan: &CodingPlan, comm: &CommModel, bytes_per_block: u64) -> D2dCost {
    let n_clients = plan.roster.num_clients();
    let phase = |coded: bool| {
        let mut busy = vec![0.0f64; n_clients];
        for t in &plan.transfers {
            if matches!(t.payload, Payload::CodedBlock(_)) == coded {
                busy[t.from] += comm.send_cost(bytes_per_block);
            }
        }
        busy.into_iter().fold(0.0, f64::max)
    };
    D2dCost {
        raw_block_transfers: plan.raw_transfer_count(),
        coded_block_transfers: plan.coded_transfer_count(),
        total_bytes: plan.transfers.len() as u64 * bytes_per_block,
        delay: phase(false) + phase(true),
    }
}

/// What the server decodes in a round.
#[derive(Debug, Clone, Copy)]
pub enum Workload<'a> {
    /// Synthetic block products of `probe_len` entries; decode accuracy is
    /// checked against them. `rows` only sizes the transfers.
    Probe { rows: usize, probe_len: usize },
    /// Real worker products `Ã_iᵀx`, with optional expected `Aᵀx`.
    Products {
        rows: usize,
        products: &'a [Vec<f64>],
        expected: Option<&'a [f64]>,
    },
}

impl Workload<'_> {
    fn rows(&self) -> usize {
        match *self {
            Workload::Probe { rows, .. } | Workload::Products { rows, .. } => rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecodeOutcome {
    Decoded {
        residual: f64,
        condition_number: f64,
        used_workers: Vec<usize>,
        /// Relative 2-norm error against the known answer, when there is one.
        relative_error: Option<f64>,
    },
    InsufficientResults {
        returned: usize,
        needed: usize,
    },
    Failed {
        error: String,
    },
}

impl DecodeOutcome {
    pub fn is_decoded(&self) -> bool {
        matches!(self, DecodeOutcome::Decoded { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheme: Scheme,
    pub round: u64,
    pub k_bar: usize,
    pub s_bar: usize,
    pub raw_block_transfers: usize,
    pub coded_block_transfers: usize,
    pub total_bytes_d2d: u64,
    pub broadcast_delay: f64,
    /// D2D exchange delay only.
    pub comm_delay: f64,
    /// Failed physical clients.
    pub stragglers: Vec<usize>,
    /// Busy time per physical client; `None` if it failed or has no work.
    pub client_compute_times: Vec<Option<f64>>,
    /// Absolute finish time per virtual worker (its client's finish time).
    pub worker_finish: Vec<Option<f64>>,
    /// Virtual workers in arrival order.
    pub arrivals: Vec<usize>,
    /// Finish time of the `k̄`-th arrival.
    pub completion_time: Option<f64>,
    pub decode: DecodeOutcome,
    pub privacy: PrivacyExposure,
}

/// A simulated round together with the decoded block products, if any.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub report: SimReport,
    pub result: Option<DecodeResult>,
}

fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Simulates one round of `plan`. Randomness comes from streams derived
/// from `(seed, round)`, so rounds are independent and reproducible.
pub fn simulate_round(
    plan: &CodingPlan,
    timing: &TimingModel,
    comm: &CommModel,
    workload: Workload<'_>,
    seed: u64,
    round: u64,
) -> SimReport {
    simulate_and_decode(plan, timing, comm, workload, seed, round).report
}

/// As [`simulate_round`], also returning the decoded products.
pub fn simulate_and_decode(
    plan: &CodingPlan,
    timing: &TimingModel,
    comm: &CommModel,
    workload: Workload<'_>,
    seed: u64,
    round: u64,
) -> RoundOutcome {
    let roster = &plan.roster;
    let n_clients = roster.num_clients();
    let alpha = roster.base_width;
    let d2d = d2d_cost(plan, comm, block_bytes(workload.rows(), alpha, comm));
    let start = comm.broadcast_cost + d2d.delay;

    let stragglers =
        timing.draw_stragglers(n_clients, &mut stream(seed, domain::STRAGGLERS + round));
    let mut time_rng = stream(seed, domain::TIMING + round);
    let mut client_compute_times = vec![None; n_clients];
    let mut worker_finish = vec![None; plan.n_bar()];
    for client in roster.clients() {
        let workers: Vec<usize> = plan.workers_of(client.id).map(|w| w.worker).collect();
        // Draw for every client, failed or not, so one client's fate does not
        // shift another's times.
        let busy: f64 = workers
            .iter()
            .map(|_| {
                timing.worker_time(
                    alpha as f64,
                    client.multiplier as f64,
                    roster.base_speed,
                    client.type_index,
                    &mut time_rng,
                )
            })
            .sum();
        if workers.is_empty() || stragglers.binary_search(&client.id).is_ok() {
            continue;
        }
        client_compute_times[client.id] = Some(busy);
        for w in workers {
            worker_finish[w] = Some(start + busy);
        }
    }

    let mut order: Vec<(f64, usize, usize)> = worker_finish
        .iter()
        .enumerate()
        .filter_map(|(w, t)| t.map(|t| (t, plan.workers[w].owner_client, w)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let arrivals: Vec<usize> = order.iter().map(|o| o.2).collect();
    let completion_time = order.get(plan.k_bar.wrapping_sub(1)).map(|o| o.0);

    let (decode, result) = if arrivals.len() < plan.k_bar {
        (
            DecodeOutcome::InsufficientResults {
                returned: arrivals.len(),
                needed: plan.k_bar,
            },
            None,
        )
    } else {
        decode_round(plan, &workload, &arrivals, seed, round)
    };

    RoundOutcome {
        report: SimReport {
            scheme: plan.scheme,
            round,
            k_bar: plan.k_bar,
            s_bar: plan.s_bar,
            raw_block_transfers: d2d.raw_block_transfers,
            coded_block_transfers: d2d.coded_block_transfers,
            total_bytes_d2d: d2d.total_bytes,
            broadcast_delay: comm.broadcast_cost,
            comm_delay: d2d.delay,
            stragglers,
            client_compute_times,
            worker_finish,
            arrivals,
            completion_time,
            decode,
            privacy: privacy_report(plan),
        },
        result,
    }
}

fn decode_round(
    plan: &CodingPlan,
    workload: &Workload<'_>,
    arrivals: &[usize],
    seed: u64,
    round: u64,
) -> (DecodeOutcome, Option<DecodeResult>) {
    let (products, truth): (Vec<Vec<f64>>, Option<Vec<f64>>) = match *workload {
        Workload::Probe { probe_len, .. } => {
            let mut rng = stream(seed, domain::PROBE + round);
            let blocks: Vec<Vec<f64>> = (0..plan.k_bar)
                .map(|_| uniform_vector(&mut rng, probe_len.max(1)))
                .collect();
            let products = (0..plan.n_bar())
                .map(|w| {
                    let row = plan.coefficient_row(w);
                    (0..probe_len.max(1))
                        .map(|j| row.iter().zip(&blocks).map(|(c, b)| c * b[j]).sum())
                        .collect()
                })
                .collect();
            (products, Some(blocks.concat()))
        }
        Workload::Products {
            products, expected, ..
        } => (products.to_vec(), expected.map(<[f64]>::to_vec)),
    };
    let first: Vec<usize> = arrivals[..plan.k_bar].to_vec();
    let solved = DecodeProblem::from_plan(plan, &products, &first).and_then(|p| decode(&p));
    match solved {
        Ok(r) => {
            let relative_error = truth.map(|t| {
                let got = r.concatenated();
                relative_error(&got[..t.len().min(got.len())], &t)
            });
            (
                DecodeOutcome::Decoded {
                    residual: r.residual,
                    condition_number: r.condition_number,
                    used_workers: r.used_workers.clone(),
                    relative_error,
                },
                Some(r),
            )
        }
        Err(e) => (
            DecodeOutcome::Failed {
                error: e.to_string(),
            },
            None,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{build_dense_plan, build_homogeneous_plan, build_plan, ClientRoster};
    use proptest::prelude::*;

    fn table1_plans() -> (CodingPlan, CodingPlan) {
        let roster = ClientRoster::homogeneous(18, 2).unwrap();
        (
            build_plan(Scheme::Proposed, &roster, 1).unwrap(),
            build_dense_plan(&roster, 1).unwrap(),
        )
    }

    #[test]
    fn table1_transfer_counts() {
        let (p, d) = table1_plans();
        let comm = CommModel::default();
        let cp = d2d_cost(&p, &comm, 100);
        let cd = d2d_cost(&d, &comm, 100);
        assert_eq!((cp.raw_block_transfers, cp.coded_block_transfers), (36, 2));
        assert_eq!(cd.raw_block_transfers + cd.coded_block_transfers, 342);
        assert!(cp.total_bytes * 5 < cd.total_bytes);
        // Busiest proposed sender: two raw sends plus one coded send; dense: 19.
        let unit = comm.send_cost(100);
        assert!((cp.delay - 3.0 * unit).abs() < 1e-12);
        assert!((cd.delay - 19.0 * unit).abs() < 1e-12);
    }

    #[test]
    fn deterministic_completion_time() {
        let plan = build_homogeneous_plan(10, 2, 3).unwrap();
        let comm = CommModel::default();
        let timing = TimingModel::deterministic();
        let w = Workload::Probe {
            rows: 40,
            probe_len: 3,
        };
        let a = simulate_round(&plan, &timing, &comm, w, 1, 0);
        let b = simulate_round(&plan, &timing, &comm, w, 99, 5);
        let expect = 1.0 + comm.broadcast_cost + a.comm_delay;
        assert!((a.completion_time.unwrap() - expect).abs() < 1e-12);
        assert_eq!(a.completion_time, b.completion_time);
        assert!(a.decode.is_decoded());
    }

    #[test]
    fn explicit_stragglers_two_ok_three_insufficient() {
        let plan = build_homogeneous_plan(10, 2, 4).unwrap();
        let comm = CommModel::default();
        let w = Workload::Probe {
            rows: 12,
            probe_len: 2,
        };
        let two = TimingModel::default().with_stragglers(StragglerInjection::Explicit {
            clients: vec![3, 11],
        });
        let r = simulate_round(&plan, &two, &comm, w, 5, 0);
        match r.decode {
            DecodeOutcome::Decoded { relative_error, .. } => {
                assert!(relative_error.unwrap() < 1e-8)
            }
            other => panic!("{other:?}"),
        }
        let three = TimingModel::default().with_stragglers(StragglerInjection::Explicit {
            clients: vec![0, 1, 2],
        });
        let r = simulate_round(&plan, &three, &comm, w, 5, 0);
        assert_eq!(
            r.decode,
            DecodeOutcome::InsufficientResults {
                returned: 9,
                needed: 10
            }
        );
        assert_eq!(r.completion_time, None);
    }

    #[test]
    fn grouped_arrival_of_a_heterogeneous_client() {
        let roster: ClientRoster = "2,2,1,1,1|1,1".parse().unwrap();
        let plan = build_plan(Scheme::Proposed, &roster, 2).unwrap();
        let r = simulate_round(
            &plan,
            &TimingModel::default(),
            &CommModel::default(),
            Workload::Probe {
                rows: 5,
                probe_len: 2,
            },
            8,
            3,
        );
        assert_eq!(r.worker_finish[0], r.worker_finish[1]);
        let pos0 = r.arrivals.iter().position(|&w| w == 0).unwrap();
        let pos1 = r.arrivals.iter().position(|&w| w == 1).unwrap();
        assert_eq!(pos0.abs_diff(pos1), 1);
    }

    #[test]
    fn custom_per_type_noise() {
        let plan = build_homogeneous_plan(4, 1, 1).unwrap();
        let timing = TimingModel {
            noise: ComputeNoise::ShiftedExponential {
                per_type: vec![TypeNoise {
                    type_index: 0,
                    dist: ShiftedExp {
                        shift: 5.0,
                        rate: 1e9,
                    },
                }],
            },
            stragglers: StragglerInjection::None,
        };
        assert!(timing.validate().is_ok());
        let json = r#"{"noise": {"kind": "shifted_exponential", "per_type": [{"type_index": 0, "shift": 5.0, "rate": 1e9}]}, "stragglers": {"kind": "none"}}"#;
        assert_eq!(serde_json::from_str::<TimingModel>(json).unwrap(), timing);
        let mut dup = timing.clone();
        if let ComputeNoise::ShiftedExponential { per_type } = &mut dup.noise {
            per_type.push(per_type[0]);
        }
        assert!(dup.validate().unwrap_err().contains("more than one"));
        let r = simulate_round(
            &plan,
            &timing,
            &CommModel::default(),
            Workload::Probe {
                rows: 1,
                probe_len: 1,
            },
            0,
            0,
        );
        for t in r.client_compute_times.iter().flatten() {
            assert!((5.0..5.001).contains(t));
        }
    }

    #[test]
    fn model_validation() {
        let mut c = CommModel::default();
        assert!(c.validate().is_ok());
        c.per_byte = -1.0;
        assert!(c.validate().is_err());
        let t =
            TimingModel::default().with_stragglers(StragglerInjection::Probabilistic { p: 1.5 });
        assert!(t.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn failed_clients_never_arrive(k in 3usize..9, s in 1usize..3, seed in any::<u64>(), p in 0.0f64..0.6) {
            prop_assume!(s < k);
            let plan = build_homogeneous_plan(k, s, seed).unwrap();
            let timing = TimingModel::default().with_stragglers(StragglerInjection::Probabilistic { p });
            let r = simulate_round(&plan, &timing, &CommModel::default(), Workload::Probe { rows: 3, probe_len: 1 }, seed, 0);
            for &w in &r.arrivals {
                prop_assert!(!r.stragglers.contains(&plan.workers[w].owner_client));
            }
            prop_assert_eq!(r.arrivals.len() + r.stragglers.len(), k + s);
            prop_assert_eq!(r.decode.is_decoded(), r.stragglers.len() <= s);
            for w in r.arrivals.windows(2) {
                prop_assert!(r.worker_finish[w[0]] <= r.worker_finish[w[1]]);
            }
            if let Some(t) = r.completion_time {
                let mut finishes: Vec<f64> = r.worker_finish.iter().flatten().copied().collect();
                finishes.sort_by(f64::total_cmp);
                prop_assert_eq!(t, finishes[k - 1]);
            }
        }

        #[test]
        fn proposed_delay_never_exceeds_dense(lat in 0.0f64..1.0, pb in 0.0f64..1e-3, bpe in 1usize..16, k in 3usize..20) {
            let roster = ClientRoster::homogeneous(k, 2.min(k - 1)).unwrap();
            let p = build_plan(Scheme::Proposed, &roster, 0).unwrap();
            let d = build_dense_plan(&roster, 0).unwrap();
            let comm = CommModel { link_latency: lat, per_byte: pb, bytes_per_element: bpe, broadcast_cost: 0.0 };
            let bytes = block_bytes(50, 7, &comm);
            prop_assert!(d2d_cost(&p, &comm, bytes).delay <= d2d_cost(&d, &comm, bytes).delay);
        }
    }
}
