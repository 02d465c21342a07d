#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod error;
pub mod geometry;
pub mod kzc;
pub mod partition;
pub mod rng;
pub mod simnet;
pub mod dist_kzc;
pub mod lloyd;
pub mod coreset;
pub mod minmax;
pub mod median_means;
pub mod baselines;
pub mod bench;
