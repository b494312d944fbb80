//! Closed-form power allocations for RSU-only, partner-only and cooperative
//! delivery, and the minimum-total-power selection among them.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use crate::link::{self, Boundary, LinkPair, LinkState};
use crate::scenario::{self, SystemParams};
use crate::stats;

/// Absolute slack on `outage <= delta` when deciding feasibility. Closed-form
/// allocations sit exactly on the constraint, so rounding lands either side.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    V2iOnly,
    V2vOnly,
    Cooperative,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::V2iOnly => "V2I_ONLY",
            Mode::V2vOnly => "V2V_ONLY",
            Mode::Cooperative => "COOPERATIVE",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "V2I_ONLY" => Ok(Mode::V2iOnly),
            "V2V_ONLY" => Ok(Mode::V2vOnly),
            "COOPERATIVE" => Ok(Mode::Cooperative),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    /// Partner vehicle power, W.
    pub p_v: f64,
    /// RSU power, W.
    pub p_r: f64,
    pub mode: Mode,
    pub feasible: bool,
    pub total: f64,
    pub achieved_outage: f64,
}

impl PowerAllocation {
    /// An allocation whose feasibility has not been evaluated yet.
    pub fn unchecked(mode: Mode, p_v: f64, p_r: f64) -> Self {
        Self {
            p_v,
            p_r,
            mode,
            feasible: false,
            total: p_v + p_r,
            achieved_outage: 1.0,
        }
    }

    /// Rate the mode actually delivers at these powers, bits/s. Links that
    /// take part in the mode contribute their signed rate.
    pub fn rate_sum(&self, links: &LinkPair, params: &SystemParams) -> f64 {
        mode_rate_sum(self.mode, self.p_v, self.p_r, links, params)
    }
}

pub(crate) fn mode_rate_sum(mode: Mode, p_v: f64, p_r: f64, links: &LinkPair, params: &SystemParams) -> f64 {
    match mode {
        Mode::V2iOnly => link::fbl_rate(p_r, &links.v2i, params),
        Mode::V2vOnly => link::fbl_rate(p_v, &links.v2v, params),
        Mode::Cooperative => link::fbl_rate(p_r, &links.v2i, params) + link::fbl_rate(p_v, &links.v2v, params),
    }
}

fn settle(mut alloc: PowerAllocation, rate_sum: f64, v: f64, params: &SystemParams) -> PowerAllocation {
    alloc.total = alloc.p_v + alloc.p_r;
    alloc.achieved_outage = link::analytic_outage(rate_sum, v, params);
    alloc.feasible = alloc.achieved_outage <= params.delta + FEASIBILITY_SLACK;
    alloc
}

/// Recomputes outage and feasibility from the allocation's own powers.
pub fn check_feasibility(alloc: &PowerAllocation, links: &LinkPair, v: f64, params: &SystemParams) -> PowerAllocation {
    settle(*alloc, alloc.rate_sum(links, params), v, params)
}

/// Least power on one link meeting the outage target alone, clamped to `[0, p_max]`.
fn single_link_power(link: &LinkState, v: f64, params: &SystemParams, p_max: f64) -> f64 {
    let per_watt = link::snr_per_watt(link, params);
    if per_watt <= 0.0 {
        return p_max;
    }
    let q_star = stats::upper_quantile_unchecked(params.delta, &params.trunc);
    let nats = v * q_star * LN_2 / link.bandwidth + link::dispersion_penalty(link, params);
    (nats.exp_m1() / per_watt).clamp(0.0, p_max)
}

/// RSU-only delivery (`p_V = 0`).
pub fn allocate_v2i_only(link_r: &LinkState, v: f64, params: &SystemParams) -> PowerAllocation {
    let p_r = single_link_power(link_r, v, params, params.p_rm);
    let alloc = PowerAllocation::unchecked(Mode::V2iOnly, 0.0, p_r);
    settle(alloc, link::fbl_rate(p_r, link_r, params), v, params)
}

/// Partner-only delivery (`p_R = 0`). The caller gates on V2V range.
pub fn allocate_v2v_only(link_v: &LinkState, v: f64, params: &SystemParams) -> PowerAllocation {
    let p_v = single_link_power(link_v, v, params, params.p_vm);
    let alloc = PowerAllocation::unchecked(Mode::V2vOnly, p_v, 0.0);
    settle(alloc, link::fbl_rate(p_v, link_v, params), v, params)
}

/// Joint delivery over both links.
///
/// The unconstrained optimum is the stationary point of `p_V + g(p_V)`.
/// When it falls outside the power box, `p_V` is projected onto the range
/// where `0 <= g(p_V) <= p_RM` and `p_R` is re-solved from `g`. Since
/// `p_V + g(p_V)` is convex this projection is still the box optimum.
pub fn allocate_cooperative(links: &LinkPair, v: f64, params: &SystemParams) -> PowerAllocation {
    let (p_v, p_r) = cooperative_powers(links, v, params);
    check_feasibility(
        &PowerAllocation::unchecked(Mode::Cooperative, p_v, p_r),
        links,
        v,
        params,
    )
}

fn cooperative_powers(links: &LinkPair, v: f64, params: &SystemParams) -> (f64, f64) {
    let chi = link::chi(v, params);
    let ratio = params.b_v / params.b_r;
    let has_v = links.v2v.gain > 0.0;
    let has_r = links.v2i.gain > 0.0;
    match (has_v, has_r) {
        (false, false) => (params.p_vm, params.p_rm),
        (false, true) => {
            let c_r = 1.0 / link::snr_per_watt(&links.v2i, params);
            (0.0, (c_r * chi.exp_m1()).clamp(0.0, params.p_rm))
        }
        (true, false) => {
            let c_v = 1.0 / link::snr_per_watt(&links.v2v, params);
            ((c_v * (chi / ratio).exp_m1()).clamp(0.0, params.p_vm), 0.0)
        }
        (true, true) => {
            let b = Boundary::new(links, v, params).expect("gains checked above");
            // ln of d_R^-a h_R / (d_V^-a h_V e^chi), written through the unit-SNR powers.
            let ln_x = b.c_v.ln() - b.c_r.ln() - b.ratio.ln() - b.chi;
            let p_v_star = b.c_v * (-ln_x / (1.0 + b.ratio)).exp_m1();
            let p_r_star = b.c_r * (b.chi + ln_x * b.ratio / (1.0 + b.ratio)).exp_m1();

            let lo = b.g_inv(params.p_rm).max(0.0);
            if lo > params.p_vm {
                return (params.p_vm, params.p_rm);
            }
            let hi = b.g_inv(0.0).min(params.p_vm);
            let p_v = p_v_star.clamp(lo, hi);
            if p_v == p_v_star {
                (p_v, p_r_star.clamp(0.0, params.p_rm))
            } else {
                (p_v, b.g(p_v).clamp(0.0, params.p_rm))
            }
        }
    }
}

/// Minimum-total-power allocation among the available modes.
///
/// RSU-only is always a candidate; partner-only and cooperative join when
/// `d_v` is within V2V range. Feasible candidates win by total power; if
/// none is feasible the least-outage candidate is returned, flagged infeasible.
pub fn allocate_optimal(links: &LinkPair, v: f64, params: &SystemParams, d_v: f64) -> PowerAllocation {
    let mut candidates = vec![allocate_v2i_only(&links.v2i, v, params)];
    if scenario::v2v_available(d_v, params) {
        candidates.push(allocate_v2v_only(&links.v2v, v, params));
        candidates.push(allocate_cooperative(links, v, params));
    }
    select(&candidates)
}

pub(crate) fn select(candidates: &[PowerAllocation]) -> PowerAllocation {
    let best_feasible = candidates
        .iter()
        .filter(|a| a.feasible)
        .min_by(|a, b| a.total.total_cmp(&b.total));
    match best_feasible {
        Some(a) => *a,
        None => *candidates
            .iter()
            .min_by(|a, b| {
                a.achieved_outage
                    .total_cmp(&b.achieved_outage)
                    .then(a.total.total_cmp(&b.total))
            })
            .expect("at least one candidate"),
    }
}
