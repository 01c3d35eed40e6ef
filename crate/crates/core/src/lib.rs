//! Straggler-resilient coded matrix-vector multiplication for D2D-enabled
//! federated learning.
//!
//! Active clients generate block-columns of a data matrix `A`; every client
//! computes the product of one coded submatrix with `x`, and the server
//! recovers `Aᵀx` from the fastest `k̄` results. The cyclic scheme in
//! [`coding`] combines only `s̄ + 1` neighbouring blocks per worker, which
//! limits D2D traffic, raw-data exposure and fill-in for sparse `A`.

// Index loops read closer to the math in the numeric kernels; negated float
// comparisons deliberately treat NaN as failure.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod decoding;
pub mod io;
pub mod linalg;
pub mod matching;
pub mod matrix;
pub mod rng;
pub mod simulator;

pub use coding::{
    build_dense_plan, build_heterogeneous_plan, build_homogeneous_plan, build_plan,
    build_polynomial_plan, build_uncoded_plan, coded_products, encode, encode_baseline_dense,
    encode_baseline_polynomial, expand_heterogeneous, ClientRoster, CodedBlockSpec, CodingError,
    CodingPlan, EncodedWorkload, Role, Scheme,
};
pub use decoding::{
    check_all_subsets, check_hall_condition, decode, neighborhood_lower_bound, resilience_patterns,
    DecodeError, DecodeProblem, DecodeResult, Enumeration, ResilienceReport,
};
pub use matrix::{
    linear_combination, matvec_t, nnz, partition, DenseMatrix, Matrix, PartitionedMatrix,
    SparseMatrix,
};
