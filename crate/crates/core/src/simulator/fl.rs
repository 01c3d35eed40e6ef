//! Gradient descent on `‖Dβ − y‖²` with both matrix-vector products per
//! step computed by coded workers and decoded from the fastest results.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::{
    build_plan, encode, ClientRoster, CodingError, CodingPlan, EncodedWorkload, Scheme,
};
use crate::decoding::DecodeError;
use crate::matrix::{partition_even, DenseMatrix, Matrix};
use crate::rng::{domain, stream, uniform_vector};

use super::{simulate_and_decode, CommModel, DecodeOutcome, TimingModel, Workload};

#[derive(Debug, Error)]
pub enum FlError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stepsize {stepsize} must lie in [0, 1/L) = [0, {limit})")]
    Stepsize { stepsize: f64, limit: f64 },
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("step {step}: no decodable round after {attempts} attempts: {last}")]
    Decode {
        step: usize,
        attempts: usize,
        last: String,
    },
    #[error("loss rose from {before:e} to {after:e} at step {step}")]
    Diverged {
        step: usize,
        before: f64,
        after: f64,
    },
}

/// Computes `Aᵀx` for a fixed `A` through a coded plan. Columns of `A` are
/// zero-padded to a multiple of `k̄`.
#[derive(Debug, Clone)]
pub struct CodedOperator {
    plan: CodingPlan,
    encoded: EncodedWorkload,
    rows: usize,
    cols: usize,
}

impl CodedOperator {
    pub fn new(
        a: &DenseMatrix,
        roster: &ClientRoster,
        scheme: Scheme,
        seed: u64,
    ) -> Result<Self, CodingError> {
        let probe = build_plan(scheme, roster, seed)?;
        let k = probe.k_bar;
        let alpha = a.cols().div_ceil(k);
        let padded = DenseMatrix::from_fn(a.rows(), alpha * k, |i, j| {
            if j < a.cols() {
                a.get(i, j)
            } else {
                0.0
            }
        })?;
        let roster = roster.clone().with_base(alpha, roster.base_speed)?;
        let plan = build_plan(scheme, &roster, seed)?;
        let p = partition_even(&Matrix::Dense(padded), k)?;
        let encoded = encode(&p, &plan)?;
        Ok(Self {
            plan,
            encoded,
            rows: a.rows(),
            cols: a.cols(),
        })
    }

    pub fn plan(&self) -> &CodingPlan {
        &self.plan
    }

    /// One simulated round: workers compute, stragglers are injected, the
    /// server decodes from the first `k̄` arrivals.
    pub fn apply_t(
        &self,
        x: &[f64],
        timing: &TimingModel,
        comm: &CommModel,
        seed: u64,
        round: u64,
    ) -> Result<Vec<f64>, DecodeError> {
        if x.len() != self.rows {
            return Err(DecodeError::Malformed(format!(
                "vector length {} != {}",
                x.len(),
                self.rows
            )));
        }
        let products = self
            .encoded
            .products(x)
            .map_err(|e| DecodeError::Malformed(e.to_string()))?;
        let out = simulate_and_decode(
            &self.plan,
            timing,
            comm,
            Workload::Products {
                rows: self.rows,
                products: &products,
                expected: None,
            },
            seed,
            round,
        );
        match (out.result, out.report.decode) {
            (Some(r), _) => {
                let mut v = r.concatenated();
                v.truncate(self.cols);
                Ok(v)
            }
            (None, DecodeOutcome::InsufficientResults { returned, needed }) => {
                Err(DecodeError::NotEnoughResults {
                    needed,
                    got: returned,
                })
            }
            (None, other) => Err(DecodeError::Malformed(format!("{other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlOptions {
    pub steps: usize,
    pub stepsize: f64,
    pub scheme: Scheme,
    pub timing: TimingModel,
    pub comm: CommModel,
    pub seed: u64,
    /// Extra attempts per product when a round cannot be decoded.
    pub max_retries: usize,
    /// Loss increase tolerated per step, relative to the initial loss, before
    /// declaring divergence. Absorbs rounding once the loss is near zero.
    pub loss_tolerance: f64,
}

impl Default for FlOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            stepsize: 0.0,
            scheme: Scheme::Proposed,
            timing: TimingModel::default(),
            comm: CommModel::default(),
            seed: 0,
            max_retries: 8,
            loss_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlStep {
    pub step: usize,
    pub loss: f64,
    pub oracle_loss: f64,
    /// `‖β − β_oracle‖ / ‖β_oracle‖` (absolute when the oracle is zero).
    pub deviation: f64,
    pub retries: usize,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlTrajectory {
    pub lipschitz: f64,
    pub stepsize: f64,
    /// Step 0 is the initial point `β = 0`.
    pub steps: Vec<FlStep>,
    pub oracle_beta: Vec<f64>,
    pub max_deviation: f64,
}

impl FlTrajectory {
    pub fn final_beta(&self) -> &[f64] {
        &self
            .steps
            .last()
            .expect("trajectory has an initial step")
            .beta
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn loss(d: &DenseMatrix, y: &[f64], beta: &[f64]) -> Result<f64, FlError> {
    let r = d.matvec(beta).map_err(CodingError::from)?;
    Ok(r.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Lipschitz constant `2·λ_max(DᵀD)` of the gradient, by power iteration.
pub fn power_iteration_lipschitz(d: &DenseMatrix, seed: u64) -> Result<f64, FlError> {
    let dt = d.transpose();
    let mut v = uniform_vector(&mut stream(seed, domain::PROBE), d.cols());
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let n = norm(&v);
        if n == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= n);
        let w = dt
            .matvec(&d.matvec(&v).map_err(CodingError::from)?)
            .map_err(CodingError::from)?;
        let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        v = w;
        if (next - lambda).abs() <= 1e-13 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(2.0 * lambda)
}

/// Runs `opts.steps` steps of `β ← β − μ·2Dᵀ(Dβ − y)` from `β = 0`, with
/// `Dβ` and `Dᵀr` decoded from coded workers over `roster`, alongside an
/// uncoded oracle run.
pub fn fl_demo(
    d: &DenseMatrix,
    y: &[f64],
    roster: &ClientRoster,
    opts: &FlOptions,
) -> Result<FlTrajectory, FlError> {
    if y.len() != d.rows() {
        return Err(FlError::Shape(format!(
            "y has {} entries, D has {} rows",
            y.len(),
            d.rows()
        )));
    }
    let lipschitz = power_iteration_lipschitz(d, opts.seed)?;
    let limit = if lipschitz > 0.0 {
        1.0 / lipschitz
    } else {
        f64::INFINITY
    };
    if !(opts.stepsize >= 0.0 && opts.stepsize < limit) {
        return Err(FlError::Stepsize {
            stepsize: opts.stepsize,
            limit,
        });
    }
    let dt = d.transpose();
    // D·β is (Dᵀ)ᵀβ; Dᵀ·r is Dᵀr.
    let op_forward = CodedOperator::new(&dt, roster, opts.scheme, opts.seed)?;
    let op_backward = CodedOperator::new(d, roster, opts.scheme, opts.seed.wrapping_add(1))?;

    let mut round = 0u64;
    let mut coded_product = |op: &CodedOperator,
                             v: &[f64],
                             step: usize|
     -> Result<(Vec<f64>, usize), FlError> {
        let mut last = String::new();
        for attempt in 0..=opts.max_retries {
            round += 1;
            match op.apply_t(v, &opts.timing, &opts.comm, opts.seed, round) {
                Ok(r) => return Ok((r, attempt)),
                Err(e) => {
                    warn!("step {step}: round {round} not decodable ({e}); retrying with a fresh draw");
                    last = e.to_string();
                }
            }
        }
        Err(FlError::Decode {
            step,
            attempts: opts.max_retries + 1,
            last,
        })
    };

    let n = d.cols();
    let mut beta = vec![0.0; n];
    let mut oracle = vec![0.0; n];
    let first = loss(d, y, &beta)?;
    let mut steps = vec![FlStep {
        step: 0,
        loss: first,
        oracle_loss: first,
        deviation: 0.0,
        retries: 0,
        beta: beta.clone(),
    }];
    let mut max_deviation = 0.0f64;
    for step in 1..=opts.steps {
        let (fwd, r1) = coded_product(&op_forward, &beta, step)?;
        let resid: Vec<f64> = fwd.iter().zip(y).map(|(a, b)| a - b).collect();
        let (grad, r2) = coded_product(&op_backward, &resid, step)?;
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= opts.stepsize * 2.0 * g;
        }

        let ofwd = d.matvec(&oracle).map_err(CodingError::from)?;
        let oresid: Vec<f64> = ofwd.iter().zip(y).map(|(a, b)| a - b).collect();
        let ograd = dt.matvec(&oresid).map_err(CodingError::from)?;
        for (b, g) in oracle.iter_mut().zip(&ograd) {
            *b -= opts.stepsize * 2.0 * g;
        }

        let diff: Vec<f64> = beta.iter().zip(&oracle).map(|(a, b)| a - b).collect();
        let on = norm(&oracle);
        let deviation = if on > 0.0 {
            norm(&diff) / on
        } else {
            norm(&diff)
        };
        max_deviation = max_deviation.max(deviation);
        let l = loss(d, y, &beta)?;
        let before = steps.last().map_or(l, |s| s.loss);
        if l > before + opts.loss_tolerance * first {
            return Err(FlError::Diverged {
                step,
                before,
                after: l,
            });
        }
        steps.push(FlStep {
            step,
            loss: l,
            oracle_loss: loss(d, y, &oracle)?,
            deviation,
            retries: r1 + r2,
            beta: beta.clone(),
        });
    }
    Ok(FlTrajectory {
        lipschitz,
        stepsize: opts.stepsize,
        steps,
        oracle_beta: oracle,
        max_deviation,
    })
}
