//! Stochastic approximation and zeroth-order SGD under heavy-tailed noise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conditions;
pub mod config;
pub mod error;
pub mod experiment;
pub mod noise;
pub mod gslln;
pub mod norm;
pub mod problems;
pub mod quad;
pub mod sa_engine;
pub mod schedules;
pub mod sgd_engine;

pub use error::{Error, Result};
