//! Per-worker nnz and matvec timing of coded blocks over sparse data.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{encode_worker, CodingError, CodingPlan, Scheme};
use crate::matrix::{Matrix, PartitionedMatrix, SparseMatrix};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Timed repetitions per worker; 0 records nnz only.
    pub trials: usize,
    pub warmup: usize,
    /// Measure only the first `max_workers` workers of each plan.
    pub max_workers: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            trials: 11,
            warmup: 2,
            max_workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMeasurement {
    pub worker: usize,
    pub nnz: usize,
    /// Sum of the nnz of the blocks combined by this worker.
    pub support_nnz: usize,
    pub median_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBenchmark {
    pub scheme: Scheme,
    pub workers: Vec<WorkerMeasurement>,
    pub mean_nnz: f64,
    /// Median over workers of the per-worker medians.
    pub median_seconds: Option<f64>,
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

fn time_matvec(m: &Matrix, x: &[f64], opts: &BenchOptions) -> Result<Option<f64>, CodingError> {
    if opts.trials == 0 {
        return Ok(None);
    }
    for _ in 0..opts.warmup {
        std::hint::black_box(m.matvec_t(x)?);
    }
    let mut samples = Vec::with_capacity(opts.trials);
    for _ in 0..opts.trials {
        let t = Instant::now();
        std::hint::black_box(m.matvec_t(std::hint::black_box(x))?);
        samples.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&mut samples))
}

/// Encodes and measures each worker in turn on the calling thread; a coded
/// block is dropped before the next one is built.
pub fn sparse_compute_benchmark(
    p: &PartitionedMatrix,
    plans: &[CodingPlan],
    x: &[f64],
    opts: &BenchOptions,
) -> Result<Vec<SchemeBenchmark>, CodingError> {
    let block_nnz: Vec<usize> = p.blocks().iter().map(Matrix::nnz).collect();
    plans
        .iter()
        .map(|plan| {
            if plan.k_bar != p.num_blocks() {
                return Err(CodingError::BlockCount {
                    expected: plan.k_bar,
                    actual: p.num_blocks(),
                });
            }
            let count = opts
                .max_workers
                .unwrap_or(usize::MAX)
                .min(plan.workers.len());
            let workers = plan.workers[..count]
                .iter()
                .map(|spec| {
                    let coded = encode_worker(p, spec)?;
                    Ok(WorkerMeasurement {
                        worker: spec.worker,
                        nnz: coded.nnz(),
                        support_nnz: spec.support.iter().map(|&q| block_nnz[q]).sum(),
                        median_seconds: time_matvec(&coded, x, opts)?,
                    })
                })
                .collect::<Result<Vec<_>, CodingError>>()?;
            let mean_nnz =
                workers.iter().map(|w| w.nnz as f64).sum::<f64>() / workers.len().max(1) as f64;
            let mut times: Vec<f64> = workers.iter().filter_map(|w| w.median_seconds).collect();
            Ok(SchemeBenchmark {
                scheme: plan.scheme,
                median_seconds: median(&mut times),
                mean_nnz,
                workers,
            })
        })
        .collect()
}

/// `k` sparse blocks of `rows × width` with a `zero_fraction` share of zeros.
/// Block `q` is drawn from its own stream, so blocks are generated in parallel.
pub fn synthetic_sparse_partition(
    rows: usize,
    width: usize,
    k: usize,
    zero_fraction: f64,
    seed: u64,
) -> Result<PartitionedMatrix, CodingError> {
    let blocks = (0..k)
        .into_par_iter()
        .map(|q| {
            SparseMatrix::random(
                rows,
                width,
                zero_fraction,
                &mut stream(seed, domain::DATA + q as u64),
            )
            .map(Matrix::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PartitionedMatrix::from_blocks(blocks)?)
}

/// One row of the sparsity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub zero_fraction: f64,
    pub scheme: Scheme,
    pub workers_measured: usize,
    pub mean_nnz: f64,
    pub max_nnz: usize,
    pub median_seconds: Option<f64>,
}

/// Runs [`sparse_compute_benchmark`] on fresh synthetic data for each zero
/// fraction. Data for sweep point `i` uses seed `seed + i`.
pub fn sparsity_sweep(
    rows: usize,
    width: usize,
    zero_fractions: &[f64],
    plans: &[CodingPlan],
    seed: u64,
    opts: &BenchOptions,
) -> Result<Vec<SweepRow>, CodingError> {
    let k = plans.first().map_or(0, |p| p.k_bar);
    let mut out = Vec::new();
    for (i, &z) in zero_fractions.iter().enumerate() {
        let data_seed = seed.wrapping_add(i as u64);
        let p = synthetic_sparse_partition(rows, width, k, z, data_seed)?;
        let x = crate::rng::uniform_vector(&mut stream(data_seed, domain::VECTOR), rows);
        for b in sparse_compute_benchmark(&p, plans, &x, opts)? {
            out.push(SweepRow {
                zero_fraction: z,
                scheme: b.scheme,
                workers_measured: b.workers.len(),
                mean_nnz: b.mean_nnz,
                max_nnz: b.workers.iter().map(|w| w.nnz).max().unwrap_or(0),
                median_seconds: b.median_seconds,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{build_dense_plan, build_plan, ClientRoster};
    use std::collections::BTreeSet;

    fn union_nnz(p: &PartitionedMatrix) -> usize {
        let mut pattern = BTreeSet::new();
        for b in p.blocks() {
            if let Matrix::Sparse(s) = b {
                pattern.extend(s.triplets().map(|(i, j, _)| (i, j)));
            }
        }
        pattern.len()
    }

    #[test]
    fn nnz_accounting() {
        let roster = ClientRoster::homogeneous(6, 2).unwrap();
        let plans = [
            build_plan(Scheme::Proposed, &roster, 1).unwrap(),
            build_dense_plan(&roster, 1).unwrap(),
        ];
        let p = synthetic_sparse_partition(30, 4, 6, 0.8, 5).unwrap();
        let x = vec![1.0; 30];
        let opts = BenchOptions {
            trials: 3,
            warmup: 1,
            max_workers: None,
        };
        let res = sparse_compute_benchmark(&p, &plans, &x, &opts).unwrap();
        for w in &res[0].workers {
            assert!(w.nnz <= w.support_nnz);
            assert!(w.median_seconds.is_some());
        }
        let u = union_nnz(&p);
        for w in &res[1].workers {
            assert_eq!(w.nnz, u);
        }
    }

    #[test]
    fn fully_dense_data_gives_equal_nnz() {
        let roster = ClientRoster::homogeneous(5, 1).unwrap();
        let plans = [
            build_plan(Scheme::Proposed, &roster, 2).unwrap(),
            build_dense_plan(&roster, 2).unwrap(),
        ];
        let p = synthetic_sparse_partition(10, 3, 5, 0.0, 1).unwrap();
        let opts = BenchOptions {
            trials: 0,
            ..Default::default()
        };
        let rows = sparsity_sweep(10, 3, &[0.0], &plans, 1, &opts).unwrap();
        assert_eq!(rows[0].mean_nnz, rows[1].mean_nnz);
        assert_eq!(rows[0].median_seconds, None);
        assert_eq!(p.nnz(), 150);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
