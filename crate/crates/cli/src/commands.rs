//! The four subcommands. Each writes its outputs and a `manifest.json` into
//! the output directory and returns the manifest.

use std::path::{Path, PathBuf};

use coded_mv::coding::{
    build_plan, coded_products, expand_heterogeneous, ClientRoster, CodingPlan, Role, Scheme,
};
use coded_mv::decoding::{
    check_all_subsets, neighborhood_violations, resilience_patterns, BoundViolation, Enumeration,
    PatternReport, ResilienceReport,
};
use coded_mv::io::load_matrix;
use coded_mv::matrix::{partition_even, DenseMatrix, Matrix, PartitionedMatrix, SparseMatrix};
use coded_mv::rng::{domain, stream, uniform_vector};
use coded_mv::simulator::{
    block_bytes, d2d_cost, fl_demo, power_iteration_lipschitz, privacy_report, simulate_round,
    sparsity_sweep, synthetic_sparse_partition, BenchOptions, DecodeOutcome, FlError, FlOptions,
    SimReport, Workload,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, FlData, MatrixSpec};
use crate::manifest::RunManifest;
use crate::report::{num, opt_num, write_csv, write_json, write_text};
use crate::CliError;

fn out_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn coding<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

/// The configured matrix, split into `k̄` equal-width blocks.
struct Data {
    p: PartitionedMatrix,
    rows: usize,
    alpha: usize,
}

fn pad_columns(a: Matrix, cols: usize) -> Result<Matrix, CliError> {
    if a.cols() == cols {
        return Ok(a);
    }
    Ok(match a {
        Matrix::Dense(d) => Matrix::Dense(
            DenseMatrix::from_fn(
                d.rows(),
                cols,
                |i, j| if j < d.cols() { d.get(i, j) } else { 0.0 },
            )
            .map_err(coding)?,
        ),
        Matrix::Sparse(s) => {
            let t: Vec<_> = s.triplets().collect();
            Matrix::Sparse(SparseMatrix::from_triplets(s.rows(), cols, &t).map_err(coding)?)
        }
    })
}

fn load_data(cfg: &ExperimentConfig, k_bar: usize) -> Result<Data, CliError> {
    match &cfg.matrix {
        MatrixSpec::Synthetic {
            block_width,
            zero_fraction,
            ..
        } => {
            let rows = cfg.scaled_rows().expect("synthetic");
            let p = if *zero_fraction > 0.0 {
                synthetic_sparse_partition(rows, *block_width, k_bar, *zero_fraction, cfg.seed)
                    .map_err(coding)?
            } else {
                let blocks = (0..k_bar)
                    .map(|q| {
                        DenseMatrix::random(
                            rows,
                            *block_width,
                            &mut stream(cfg.seed, domain::DATA + q as u64),
                        )
                        .map(Matrix::from)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(coding)?;
                PartitionedMatrix::from_blocks(blocks).map_err(coding)?
            };
            Ok(Data {
                p,
                rows,
                alpha: *block_width,
            })
        }
        MatrixSpec::File { path } => {
            let a = load_matrix(path)
                .map_err(|e| CliError::Config(format!("matrix.path {}: {e}", path.display())))?;
            let alpha = a.cols().div_ceil(k_bar);
            let rows = a.rows();
            let p = partition_even(&pad_columns(a, alpha * k_bar)?, k_bar).map_err(coding)?;
            Ok(Data { p, rows, alpha })
        }
    }
}

/// Block width implied by the config without loading data, if possible.
fn configured_width(
    cfg: &ExperimentConfig,
    k_bar: usize,
) -> Result<(usize, usize, Option<Data>), CliError> {
    match cfg.matrix {
        MatrixSpec::Synthetic { block_width, .. } => {
            Ok((cfg.scaled_rows().expect("synthetic"), block_width, None))
        }
        MatrixSpec::File { .. } => {
            let d = load_data(cfg, k_bar)?;
            Ok((d.rows, d.alpha, Some(d)))
        }
    }
}

fn plans_for(cfg: &ExperimentConfig, roster: &ClientRoster) -> Result<Vec<CodingPlan>, CliError> {
    cfg.schemes
        .iter()
        .map(|&s| build_plan(s, roster, cfg.seed).map_err(coding))
        .collect()
}

/// Writes `plan_<scheme>.json` and `allocation_<scheme>.txt` per scheme.
pub fn cmd_plan(cfg: &ExperimentConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let dir = out_dir(&cfg.out_dir)?;
    let mut manifest = RunManifest::start("plan", cfg);
    let roster = cfg.roster.build()?;
    let k_bar = expand_heterogeneous(&roster).map_err(coding)?.k_bar;
    let (_, alpha, _) = configured_width(cfg, k_bar)?;
    let speed = roster.base_speed;
    let roster = roster.with_base(alpha, speed).map_err(coding)?;
    for plan in plans_for(cfg, &roster)? {
        let name = plan.scheme.name();
        write_text(
            &dir,
            &format!("plan_{name}.json"),
            &(plan.to_json() + "\n"),
            &mut manifest,
        )?;
        write_text(
            &dir,
            &format!("allocation_{name}.txt"),
            &plan.allocation_table(),
            &mut manifest,
        )?;
    }
    manifest.finish(&dir)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerifyMode {
    Exhaustive,
    Sampled { samples: usize },
}

/// Everything `verify` checks, as written to `resilience.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub plan_sha256: String,
    pub resilience: ResilienceReport,
    /// Present when the roster is small enough to enumerate client sets.
    pub patterns: Option<PatternReport>,
    /// Neighbourhood-bound check over every enumerated subset, for cyclic
    /// plans small enough to enumerate.
    pub bound_violations: Option<Vec<BoundViolation>>,
    pub shape_violations: Vec<String>,
    pub passed: bool,
}

/// Subsets times sub-subsets above which the neighbourhood check is skipped.
const BOUND_CHECK_BUDGET: u128 = 1 << 26;

pub fn cmd_verify(
    plan_path: &Path,
    mode: VerifyMode,
    seed: u64,
    out: &Path,
) -> Result<(VerifyReport, RunManifest), CliError> {
    let bytes = std::fs::read(plan_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", plan_path.display())))?;
    let plan = CodingPlan::from_json(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", plan_path.display())))?;
    let sha = hex::encode(Sha256::digest(&bytes));
    let dir = out_dir(out)?;
    let mut manifest = RunManifest::new("verify", sha.clone(), seed);

    let enumeration = match mode {
        VerifyMode::Exhaustive => Enumeration::Exhaustive,
        VerifyMode::Sampled { samples } => Enumeration::Sampled { samples, seed },
    };
    let resilience =
        check_all_subsets(&plan, enumeration).map_err(|e| CliError::Config(e.to_string()))?;
    let patterns = match resilience_patterns(&plan) {
        Ok(p) => Some(p),
        Err(e) => {
            warn!("straggler patterns skipped: {e}");
            None
        }
    };
    let per_subset = 1u128 << plan.k_bar.min(100);
    let bound_violations = if plan.scheme == Scheme::Proposed
        && mode == VerifyMode::Exhaustive
        && plan.k_bar <= 20
        && resilience.subsets_total.saturating_mul(per_subset) <= BOUND_CHECK_BUDGET
    {
        let sets = coded_mv::decoding::k_subsets(plan.n_bar(), plan.k_bar);
        let mut all = Vec::new();
        for s in sets {
            all.extend(
                neighborhood_violations(&plan, &s).map_err(|e| CliError::Run(e.to_string()))?,
            );
        }
        all.sort_by(|a, b| a.workers.cmp(&b.workers));
        all.dedup();
        Some(all)
    } else {
        None
    };
    let shape_violations = plan.shape_violations();
    let passed = resilience.certified()
        && bound_violations.as_ref().is_none_or(Vec::is_empty)
        && shape_violations.is_empty();
    let report = VerifyReport {
        plan_sha256: sha,
        resilience,
        patterns,
        bound_violations,
        shape_violations,
        passed,
    };
    write_json(&dir, "resilience.json", &report, &mut manifest)?;
    let manifest = manifest.finish(&dir)?;

    let r = &report.resilience;
    let ok = r.subsets_checked
        - r.failures
            .len()
            .max(r.hall_failures.len())
            .min(r.subsets_checked);
    let line = format!("{ok}/{} subsets pass", r.subsets_checked);
    info!("{line}");
    if let Some(p) = &report.patterns {
        info!("patterns: {}", p.summary);
    }
    if report.passed {
        Ok((report, manifest))
    } else {
        let mut why = vec![line];
        if let Some(f) = r.failures.first() {
            why.push(format!("first rank-deficient subset {f:?}"));
        }
        if let Some(f) = r.hall_failures.first() {
            why.push(format!("first Hall violation {f:?}"));
        }
        if let Some(v) = report.bound_violations.as_ref().and_then(|v| v.first()) {
            why.push(format!("neighbourhood bound violated by {:?}", v.workers));
        }
        why.extend(report.shape_violations.iter().cloned());
        Err(CliError::Verification(why.join("; ")))
    }
}

fn role_name(r: Role) -> &'static str {
    match r {
        Role::Active => "active",
        Role::Passive => "passive",
    }
}

/// Summary returned by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub manifest: RunManifest,
    pub reports: Vec<SimReport>,
    pub failed_rounds: usize,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulateOutcome, CliError> {
    cfg.validate()?;
    let dir = out_dir(&cfg.out_dir)?;
    let mut manifest = RunManifest::start("simulate", cfg);
    let roster = cfg.roster.build()?;
    let k_bar = expand_heterogeneous(&roster).map_err(coding)?.k_bar;
    let (rows, alpha, mut data) = configured_width(cfg, k_bar)?;
    if cfg.trials > 0 && data.is_none() {
        data = Some(load_data(cfg, k_bar)?);
    }
    let speed = roster.base_speed;
    let roster = roster.with_base(alpha, speed).map_err(coding)?;
    let plans = plans_for(cfg, &roster)?;
    let n_clients = roster.num_clients();

    let bytes = block_bytes(rows, alpha, &cfg.comm);
    let comm_rows: Vec<Vec<String>> = plans
        .iter()
        .map(|p| {
            let c = d2d_cost(p, &cfg.comm, bytes);
            vec![
                p.scheme.name().into(),
                p.k_bar.to_string(),
                p.s_bar.to_string(),
                n_clients.to_string(),
                c.raw_block_transfers.to_string(),
                c.coded_block_transfers.to_string(),
                (c.raw_block_transfers + c.coded_block_transfers).to_string(),
                c.total_bytes.to_string(),
                num(c.delay),
                num(cfg.comm.broadcast_cost),
            ]
        })
        .collect();
    write_csv(
        &dir,
        "comm.csv",
        &[
            "scheme",
            "k_bar",
            "s_bar",
            "n_clients",
            "raw_block_transfers",
            "coded_block_transfers",
            "block_transfers",
            "total_bytes_d2d",
            "comm_delay",
            "broadcast_delay",
        ],
        &comm_rows,
        &mut manifest,
    )?;

    let mut reports = Vec::new();
    let mut round_rows = Vec::new();
    let mut failed_rounds = 0;
    if let Some(data) = data.as_ref().filter(|_| cfg.trials > 0) {
        let x = uniform_vector(&mut stream(cfg.seed, domain::VECTOR), data.rows);
        let expected = data.p.matvec_t(&x).map_err(coding)?;
        for plan in &plans {
            let products = coded_products(&data.p, plan, &x).map_err(coding)?;
            for trial in 0..cfg.trials as u64 {
                let w = Workload::Products {
                    rows: data.rows,
                    products: &products,
                    expected: Some(&expected),
                };
                let r = simulate_round(plan, &cfg.timing, &cfg.comm, w, cfg.seed, trial);
                let (status, residual, cond, err) = match &r.decode {
                    DecodeOutcome::Decoded {
                        residual,
                        condition_number,
                        relative_error,
                        ..
                    } => (
                        "decoded",
                        Some(*residual),
                        Some(*condition_number),
                        *relative_error,
                    ),
                    DecodeOutcome::InsufficientResults { .. } => ("insufficient", None, None, None),
                    DecodeOutcome::Failed { .. } => ("failed", None, None, None),
                };
                if !r.decode.is_decoded() {
                    failed_rounds += 1;
                    warn!("{} trial {trial}: {:?}", plan.scheme, r.decode);
                }
                round_rows.push(vec![
                    plan.scheme.name().into(),
                    trial.to_string(),
                    r.stragglers
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                    r.arrivals.len().to_string(),
                    opt_num(r.completion_time),
                    status.into(),
                    opt_num(residual),
                    opt_num(cond),
                    opt_num(err),
                ]);
                reports.push(r);
            }
        }
    }
    write_csv(
        &dir,
        "rounds.csv",
        &[
            "scheme",
            "trial",
            "stragglers",
            "returned",
            "completion_time",
            "status",
            "residual",
            "condition_number",
            "relative_error",
        ],
        &round_rows,
        &mut manifest,
    )?;

    let mut privacy_rows = Vec::new();
    for plan in &plans {
        for c in privacy_report(plan).clients {
            let client = &roster.clients()[c.client];
            privacy_rows.push(vec![
                plan.scheme.name().into(),
                c.client.to_string(),
                role_name(c.role).into(),
                client.type_index.to_string(),
                client.multiplier.to_string(),
                c.raw_fraction.to_string(),
                num(*c.raw_fraction.numer() as f64 / *c.raw_fraction.denom() as f64),
                c.coded_support_fraction.to_string(),
                num(*c.coded_support_fraction.numer() as f64
                    / *c.coded_support_fraction.denom() as f64),
            ]);
        }
    }
    write_csv(
        &dir,
        "privacy.csv",
        &[
            "scheme",
            "client",
            "role",
            "type",
            "multiplier",
            "raw_fraction",
            "raw_fraction_value",
            "coded_support_fraction",
            "coded_support_value",
        ],
        &privacy_rows,
        &mut manifest,
    )?;

    if let (Some(b), MatrixSpec::Synthetic { block_width, .. }) = (&cfg.benchmark, &cfg.matrix) {
        let opts = BenchOptions {
            trials: b.trials,
            warmup: b.warmup,
            max_workers: b.max_workers,
        };
        let sweep = sparsity_sweep(
            rows,
            *block_width,
            &b.zero_fractions,
            &plans,
            cfg.seed,
            &opts,
        )
        .map_err(coding)?;
        let dense_nnz = |z: f64| {
            sweep
                .iter()
                .find(|r| r.zero_fraction == z && r.scheme == Scheme::Dense)
                .map(|r| r.mean_nnz)
        };
        let nnz_rows: Vec<Vec<String>> = sweep
            .iter()
            .map(|r| {
                vec![
                    num(r.zero_fraction),
                    r.scheme.name().into(),
                    r.workers_measured.to_string(),
                    num(r.mean_nnz),
                    r.max_nnz.to_string(),
                    opt_num(dense_nnz(r.zero_fraction).map(|d| r.mean_nnz / d)),
                ]
            })
            .collect();
        write_csv(
            &dir,
            "sparse_nnz.csv",
            &[
                "zero_fraction",
                "scheme",
                "workers_measured",
                "mean_nnz",
                "max_nnz",
                "nnz_ratio_to_dense",
            ],
            &nnz_rows,
            &mut manifest,
        )?;
        let timing_rows: Vec<Vec<String>> = sweep
            .iter()
            .filter(|r| r.median_seconds.is_some())
            .map(|r| {
                vec![
                    num(r.zero_fraction),
                    r.scheme.name().into(),
                    opt_num(r.median_seconds),
                ]
            })
            .collect();
        write_csv(
            &dir,
            "sparse_timing.csv",
            &["zero_fraction", "scheme", "median_seconds"],
            &timing_rows,
            &mut manifest,
        )?;
    }

    write_json(&dir, "sim_reports.json", &reports, &mut manifest)?;
    let manifest = manifest.finish(&dir)?;
    if cfg.require_success && failed_rounds > 0 {
        return Err(CliError::Decode(format!(
            "{failed_rounds} round(s) could not be decoded"
        )));
    }
    Ok(SimulateOutcome {
        manifest,
        reports,
        failed_rounds,
    })
}

/// Summary written to `fl_summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlSummary {
    pub scheme: Scheme,
    pub lipschitz: f64,
    pub stepsize: f64,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub max_deviation: f64,
    pub total_retries: usize,
    pub final_beta: Vec<f64>,
    pub oracle_beta: Vec<f64>,
    /// Whether the coded run stayed within tolerance of the oracle; set
    /// only when checked.
    pub check_passed: Option<bool>,
}

pub fn cmd_fl_demo(
    cfg: &ExperimentConfig,
    check: bool,
) -> Result<(FlSummary, RunManifest), CliError> {
    cfg.validate()?;
    let fl = &cfg.fl;
    let roster = fl
        .roster
        .build()
        .map_err(|e| CliError::Config(format!("fl.roster: {}", e.msg)))?;
    let d = match fl.data {
        FlData::Random => {
            DenseMatrix::random(fl.rows, fl.cols, &mut stream(cfg.seed, domain::DATA))
        }
        FlData::Identity => DenseMatrix::identity(fl.rows),
    }
    .map_err(coding)?;
    let y = uniform_vector(&mut stream(cfg.seed, domain::VECTOR), fl.rows);
    let lipschitz =
        power_iteration_lipschitz(&d, cfg.seed).map_err(|e| CliError::Run(e.to_string()))?;
    let limit = 1.0 / lipschitz;
    let stepsize = fl.stepsize.unwrap_or(0.5 * limit);
    if stepsize >= limit {
        return Err(CliError::Config(format!(
            "fl.stepsize {stepsize} is not below the guard 1/L = {limit} (L = {lipschitz} by power iteration)"
        )));
    }
    let scheme = cfg.schemes[0];
    let opts = FlOptions {
        steps: fl.steps,
        stepsize,
        scheme,
        timing: cfg.fl_timing(),
        comm: cfg.comm,
        seed: cfg.seed,
        ..Default::default()
    };
    let t = fl_demo(&d, &y, &roster, &opts).map_err(|e| match e {
        FlError::Stepsize { .. } | FlError::Shape(_) | FlError::Coding(_) => {
            CliError::Config(e.to_string())
        }
        FlError::Decode { .. } => CliError::Decode(e.to_string()),
        FlError::Diverged { .. } => CliError::Run(format!("aborted: {e}")),
    })?;

    let dir = out_dir(&cfg.out_dir)?;
    let mut manifest = RunManifest::start("fl-demo", cfg);
    let mut header: Vec<String> = ["step", "loss", "oracle_loss", "deviation", "retries"]
        .map(String::from)
        .to_vec();
    header.extend((0..fl.cols).map(|j| format!("beta_{j}")));
    let rows: Vec<Vec<String>> = t
        .steps
        .iter()
        .map(|s| {
            let mut r = vec![
                s.step.to_string(),
                num(s.loss),
                num(s.oracle_loss),
                num(s.deviation),
                s.retries.to_string(),
            ];
            r.extend(s.beta.iter().map(|&b| num(b)));
            r
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir,
        "fl_trajectory.csv",
        &header_refs,
        &rows,
        &mut manifest,
    )?;
    let summary = FlSummary {
        scheme,
        lipschitz: t.lipschitz,
        stepsize,
        steps: fl.steps,
        initial_loss: t.steps[0].loss,
        final_loss: t.steps.last().map_or(0.0, |s| s.loss),
        max_deviation: t.max_deviation,
        total_retries: t.steps.iter().map(|s| s.retries).sum(),
        final_beta: t.final_beta().to_vec(),
        oracle_beta: t.oracle_beta.clone(),
        check_passed: check.then_some(t.max_deviation <= fl.tolerance),
    };
    write_json(&dir, "fl_summary.json", &summary, &mut manifest)?;
    let manifest = manifest.finish(&dir)?;
    if summary.check_passed == Some(false) {
        return Err(CliError::Verification(format!(
            "coded trajectory deviates from uncoded descent by {:e} > {:e}",
            t.max_deviation, fl.tolerance
        )));
    }
    Ok((summary, manifest))
}
