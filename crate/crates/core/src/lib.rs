//! Minimum-power cooperative V2I/V2V delivery of high-definition map data.
//!
//! A target vehicle consumes `q` bits of map per meter of road, with `q`
//! drawn from a Gaussian truncated to `[0, inf)`. The roadside unit (RSU)
//! and an oncoming vehicle that already holds the map can both transmit on
//! disjoint bands. Each link delivers a finite-blocklength rate, and the
//! allocator picks transmit powers minimising `p_V + p_R` subject to
//! `P{r_R + r_V < q v} <= delta` and the per-transmitter power caps.
//!
//! Module layout:
//! - [`stats`]: normal CDF/quantile, Gaussian Q-function, truncated Gaussian model.
//! - [`scenario`]: default system parameters, road geometry, kinematics.
//! - [`link`]: SNR, finite-blocklength rate, analytic outage, cooperative constants.
//! - [`allocator`]: the three closed-form allocations and the optimal selector.
//! - [`oracle`]: brute-force reference solvers used to validate the closed forms.
//! - [`simulator`]: seeded Monte Carlo sweeps over position and speed.
//! - [`cli`]: config parsing, CSV output and the `coopv2x` command.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod cli;
pub mod error;
pub mod link;
pub mod oracle;
pub mod scenario;
pub mod simulator;
pub mod stats;

pub use allocator::{
    allocate_cooperative, allocate_optimal, allocate_v2i_only, allocate_v2v_only, check_feasibility, Mode,
    PowerAllocation,
};
pub use error::{Error, Result};
pub use link::{LinkPair, LinkState};
pub use scenario::{Direction, RoadGeometry, SystemParams, VehicleState};
pub use simulator::{FadingMode, Policy, SweepResult, SweepSpec, SweepVariable};
pub use stats::TruncGaussParams;
