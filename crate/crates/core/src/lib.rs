//! PAC prediction sets that stay valid under label shift.
//!
//! The pipeline estimates a confusion matrix on labeled source scores and
//! the predicted-label frequencies on unlabeled target scores, wraps each
//! entry in a Clopper-Pearson interval, pushes those intervals through
//! Gaussian elimination to get a box guaranteed to contain the importance
//! weights, and finally picks the most conservative rejection-sampling
//! threshold over that box.
//!
//! Module map:
//!
//! - [`binomial`]: binomial CDF, tail inversion and Clopper-Pearson intervals.
//! - [`interval_solver`]: interval Gaussian elimination producing a [`WeightBox`].
//! - [`weights`]: confusion / label-frequency estimates, point and interval weights.
//! - [`predsets`]: the threshold calibrators (PS, PS-W, PS-C, PS-R, WCP) and evaluation.
//! - [`shift_sim`]: label-shift scenarios and a synthetic scorer.
//! - [`harness`]: seeded repeated-trial experiments and aggregation.
//! - [`io`]: score files, scenario files and report formats.

pub mod binomial;
pub mod error;
pub mod harness;
pub mod interval_solver;
pub mod io;
pub mod predsets;
pub mod scores;
pub mod shift_sim;
pub mod weights;

pub use binomial::{binom_cdf, binom_k, cp_interval, ConfInterval, RiskParams};
pub use error::{Error, Result};
pub use interval_solver::{
    interval_gauss_elim, AbortReason, Aborted, IntervalMatrix, IntervalVector, SolveMode,
    WeightBox,
};
pub use predsets::ThresholdResult;
pub use scores::ScoreTable;

/// Version tag written as the first line of every file format.
pub const FORMAT_TAG: &str = "# pacshift-v1";
