//! Brute-force reference solvers for the power-minimisation problem.
//!
//! Neither solver uses the closed forms: the grid search scores every
//! point with the analytic outage directly, and the single-link solver
//! bisects on the outage. Both are used to validate the allocator.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::allocator::{self, Mode, PowerAllocation, FEASIBILITY_SLACK};
use crate::error::{Error, Result};
use crate::link::{self, LinkPair, LinkState};
use crate::scenario::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub p_v_range: (f64, f64),
    pub p_r_range: (f64, f64),
    /// Grid points per axis in every round.
    pub coarse_points: usize,
    /// Each round shrinks the window 10x around the incumbent.
    pub refine_rounds: usize,
}

impl GridSpec {
    /// Full power boxes with 400 points per axis and 3 refinements.
    pub fn for_params(params: &SystemParams) -> Self {
        Self {
            p_v_range: (0.0, params.p_vm),
            p_r_range: (0.0, params.p_rm),
            coarse_points: 400,
            refine_rounds: 3,
        }
    }

    /// Like [`GridSpec::for_params`], but each axis is cut to the total power
    /// of a known feasible point. Any better point has both coordinates below
    /// that total, so the optimum stays inside while the grid resolves
    /// optima far below the power caps.
    ///
    /// The feasible point is found by bisecting along the diagonal
    /// `p_V = p_R = t` (each capped at its box).
    pub fn fitted(links: &LinkPair, v: f64, params: &SystemParams) -> Self {
        let mut spec = Self::for_params(params);
        let corner = |t: f64| (t.min(params.p_vm), t.min(params.p_rm));
        let feasible = |t: f64| {
            let (pv, pr) = corner(t);
            cooperative_outage(pv, pr, links, v, params) <= params.delta + FEASIBILITY_SLACK
        };
        let mut hi = params.p_vm.max(params.p_rm);
        if !feasible(hi) {
            return spec;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-6 * hi {
                break;
            }
        }
        let (pv, pr) = corner(hi);
        let total = pv + pr;
        spec.p_v_range.1 = spec.p_v_range.1.min(total);
        spec.p_r_range.1 = spec.p_r_range.1.min(total);
        spec
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let bad = |reason: &str| Error::InvalidParam {
            key: "grid".into(),
            reason: reason.into(),
        };
        if self.coarse_points < 2 {
            return Err(bad("at least 2 points per axis"));
        }
        let (v0, v1) = self.p_v_range;
        let (r0, r1) = self.p_r_range;
        if !(0.0 <= v0 && v0 < v1 && v1 <= params.p_vm) {
            return Err(bad("p_v range must lie within [0, p_vm]"));
        }
        if !(0.0 <= r0 && r0 < r1 && r1 <= params.p_rm) {
            return Err(bad("p_r range must lie within [0, p_rm]"));
        }
        Ok(())
    }
}

fn cooperative_outage(p_v: f64, p_r: f64, links: &LinkPair, v: f64, params: &SystemParams) -> f64 {
    let rate = link::fbl_rate(p_r, &links.v2i, params) + link::fbl_rate(p_v, &links.v2v, params);
    link::analytic_outage(rate, v, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTrace {
    pub allocation: PowerAllocation,
    /// Incumbent total after each round (coarse pass first).
    pub round_totals: Vec<f64>,
    /// Grid step of the last round on each axis, W.
    pub final_step: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    p_v: f64,
    p_r: f64,
    total: f64,
    outage: f64,
}

impl Cell {
    fn key(&self) -> (f64, f64, f64) {
        (self.total, self.p_v, self.p_r)
    }
}

fn better_feasible(a: Option<Cell>, b: Option<Cell>) -> Option<Cell> {
    match (a, b) {
        (Some(x), Some(y)) => {
            let (kx, ky) = (x.key(), y.key());
            if kx
                .0
                .total_cmp(&ky.0)
                .then(kx.1.total_cmp(&ky.1))
                .then(kx.2.total_cmp(&ky.2))
                .is_le()
            {
                Some(x)
            } else {
                Some(y)
            }
        }
        (x, None) => x,
        (None, y) => y,
    }
}

/// Lower outage wins; ties (typically a saturated outage of 1) go to the
/// higher-power cell, the one closest to feasibility.
fn less_outage(a: Cell, b: Cell) -> Cell {
    let ord = a
        .outage
        .total_cmp(&b.outage)
        .then(b.total.total_cmp(&a.total))
        .then(b.p_v.total_cmp(&a.p_v));
    if ord.is_le() {
        a
    } else {
        b
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

/// One exhaustive pass: best feasible cell and least-outage cell.
fn scan(pv_axis: &[f64], pr_axis: &[f64], links: &LinkPair, v: f64, params: &SystemParams) -> (Option<Cell>, Cell) {
    let rates_r: Vec<f64> = pr_axis.iter().map(|&p| link::fbl_rate(p, &links.v2i, params)).collect();
    pv_axis
        .par_iter()
        .map(|&p_v| {
            let rate_v = link::fbl_rate(p_v, &links.v2v, params);
            let mut best: Option<Cell> = None;
            let mut least: Option<Cell> = None;
            for (&p_r, &rate_r) in pr_axis.iter().zip(&rates_r) {
                let outage = link::analytic_outage(rate_v + rate_r, v, params);
                let cell = Cell {
                    p_v,
                    p_r,
                    total: p_v + p_r,
                    outage,
                };
                if outage <= params.delta + FEASIBILITY_SLACK {
                    best = better_feasible(best, Some(cell));
                }
                least = Some(match least {
                    Some(l) => less_outage(l, cell),
                    None => cell,
                });
            }
            (best, least.expect("non-empty axis"))
        })
        .reduce_with(|(b1, l1), (b2, l2)| (better_feasible(b1, b2), less_outage(l1, l2)))
        .expect("non-empty axis")
}

/// Grid search with successive refinement, returning the per-round history.
pub fn grid_search_traced(links: &LinkPair, v: f64, params: &SystemParams, spec: &GridSpec) -> GridTrace {
    let n = spec.coarse_points.max(2);
    let (mut v_lo, mut v_hi) = spec.p_v_range;
    let (mut r_lo, mut r_hi) = spec.p_r_range;
    let mut incumbent: Option<Cell> = None;
    let mut least: Option<Cell> = None;
    let mut round_totals = Vec::with_capacity(spec.refine_rounds + 1);
    let mut step = (0.0, 0.0);

    for round in 0..=spec.refine_rounds {
        let pv_axis = axis(v_lo, v_hi, n);
        let pr_axis = axis(r_lo, r_hi, n);
        step = ((v_hi - v_lo) / (n - 1) as f64, (r_hi - r_lo) / (n - 1) as f64);
        let (best, low) = scan(&pv_axis, &pr_axis, links, v, params);
        incumbent = better_feasible(incumbent, best);
        least = Some(match least {
            Some(l) => less_outage(l, low),
            None => low,
        });
        round_totals.push(incumbent.map_or(f64::INFINITY, |c| c.total));

        if round == spec.refine_rounds {
            break;
        }
        let centre = incumbent.or(least).expect("scan yields a cell");
        let half_v = (v_hi - v_lo) / 20.0;
        let half_r = (r_hi - r_lo) / 20.0;
        v_lo = (centre.p_v - half_v).max(spec.p_v_range.0);
        v_hi = (centre.p_v + half_v).min(spec.p_v_range.1);
        r_lo = (centre.p_r - half_r).max(spec.p_r_range.0);
        r_hi = (centre.p_r + half_r).min(spec.p_r_range.1);
    }

    let (cell, feasible) = match incumbent {
        Some(c) => (c, true),
        None => (least.expect("scan yields a cell"), false),
    };
    GridTrace {
        allocation: PowerAllocation {
            p_v: cell.p_v,
            p_r: cell.p_r,
            mode: Mode::Cooperative,
            feasible,
            total: cell.total,
            achieved_outage: cell.outage,
        },
        round_totals,
        final_step: step,
    }
}

/// Minimum-total-power point of the cooperative problem found by grid search.
pub fn grid_search_min_power(links: &LinkPair, v: f64, params: &SystemParams, spec: &GridSpec) -> PowerAllocation {
    grid_search_traced(links, v, params, spec).allocation
}

/// Least power on a single link meeting the outage target, by bisection.
pub fn bisect_single_link_power(link: &LinkState, v: f64, params: &SystemParams, p_max: f64) -> Result<f64> {
    let outage = |p: f64| link::analytic_outage(link::fbl_rate(p, link, params), v, params);
    let at_max = outage(p_max);
    if at_max > params.delta + FEASIBILITY_SLACK {
        return Err(Error::Infeasible {
            outage: at_max,
            delta: params.delta,
        });
    }
    let (mut lo, mut hi) = (0.0, p_max);
    for _ in 0..2000 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if outage(mid) > params.delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One random cooperative instance: partner within V2V range, RSU at a
/// realistic setback, gains either 1 or `Exp(1)` draws, speed in [5, 30] m/s.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, params: &SystemParams) -> (LinkPair, f64) {
    let gain = |rng: &mut R| if rng.random_bool(0.25) { 1.0 } else { rng.sample(Exp1) };
    let d_v = rng.random_range(3.5..=params.d_vm);
    let d_r = rng.random_range(250.0..=340.0);
    let h_v = gain(rng);
    let h_r = gain(rng);
    let v = rng.random_range(5.0..=30.0);
    let links = LinkPair {
        v2v: LinkState::v2v(d_v, h_v, params).expect("valid draw"),
        v2i: LinkState::v2i(d_r, h_r, params).expect("valid draw"),
    };
    (links, v)
}

/// Closed-form cooperative allocation against the grid oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub closed_form: PowerAllocation,
    pub grid: PowerAllocation,
    /// Grid optimum strictly inside the power box (by more than one step).
    pub interior: bool,
    /// `(grid - closed_form) / closed_form` on total power.
    pub rel_gap: f64,
}

impl Comparison {
    /// Tolerance on `|rel_gap|`: 0.5% interior, 1% on the box boundary.
    pub fn tolerance(&self) -> f64 {
        if self.interior {
            5e-3
        } else {
            1e-2
        }
    }

    pub fn agrees(&self) -> bool {
        self.closed_form.feasible == self.grid.feasible
            && (!self.grid.feasible || self.rel_gap.abs() <= self.tolerance())
    }
}

pub fn compare_cooperative(links: &LinkPair, v: f64, params: &SystemParams) -> Comparison {
    let closed_form = allocator::allocate_cooperative(links, v, params);
    let spec = GridSpec::fitted(links, v, params);
    let trace = grid_search_traced(links, v, params, &spec);
    let g = trace.allocation;
    let (sv, sr) = trace.final_step;
    let interior = g.p_v > sv && g.p_r > sr && g.p_v < params.p_vm - sv && g.p_r < params.p_rm - sr;
    Comparison {
        closed_form,
        grid: g,
        interior,
        rel_gap: (g.total - closed_form.total) / closed_form.total,
    }
}
