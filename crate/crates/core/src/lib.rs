//! Rank joint distance covariance.
//!
//! Distribution-free measurement and testing of joint and higher-order
//! independence among `r` random vectors. Each block is mapped to its
//! empirical optimal-transport ranks on a fixed reference grid; the rank
//! distance covariances of all subsets of blocks are combined into one
//! statistic whose null law does not depend on the data and can therefore be
//! simulated once and reused.
//!
//! The crate also provides an ICA estimator that minimises the same statistic
//! over rotations, generators for the standard simulation designs, and a small
//! lab for the multi-permutation combinatorial CLT.
//!
//! ```no_run
//! use rjdcov::prelude::*;
//!
//! let sample = models::gen_cauchy_regression(200, 1.0, 7).unwrap();
//! let tester = IndependenceTester::new(TestConfig::new(0.05, 199, 7)).unwrap();
//! let report = tester.joint(&sample, &WeightScheme::Geometric(1.0)).unwrap();
//! println!("p = {}", report.p_value);
//! ```

pub mod assignment;
pub mod cache;
pub mod calibration;
pub mod cli;
pub mod clt;
pub mod error;
pub mod grid;
pub mod ica;
pub mod io;
pub mod jdcov;
pub mod models;
pub mod power;
pub mod ranks;
pub mod rng;
pub mod sample;
pub mod stats;
pub mod testing;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::cache::NullCache;
    pub use crate::calibration::{p_value, quantile_cutoff, simulate_null, NullDistribution, NullKey};
    pub use crate::error::{Error, Result};
    pub use crate::grid::{halton_grid, iid_uniform_grid, GridKind, ReferenceGrid};
    pub use crate::jdcov::{
        centered_matrix, rdcov_subset, rjdcov, rjdcov_compact, theta_on_grids, Functional, RankedSample, Subset,
        WeightScheme,
    };
    pub use crate::models;
    pub use crate::ranks::{rank_points, solve_rank_map, RankAssignment};
    pub use crate::sample::{Block, BlockedSample};
    pub use crate::testing::{bh_adjust, IndependenceTester, TestConfig, TestKind, TestReport};
}
