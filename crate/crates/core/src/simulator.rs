//! Seeded Monte Carlo sweeps over target position and vehicle speed.
//!
//! Every trial owns a ChaCha stream selected by `(seed, trial_index)`, so
//! results do not depend on the number of workers. The stream ignores the
//! sweep point: all points reuse the same position and fading draws
//! (common random numbers), which keeps curves smooth and makes
//! per-trial comparisons across points exact.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::allocator::{self, Mode, PowerAllocation};
use crate::error::{domain, Error, Result};
use crate::link::{LinkPair, LinkState};
use crate::scenario::{self, RoadGeometry, SystemParams};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Position,
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingMode {
    /// `h = 1` on both links.
    Deterministic,
    /// `h ~ Exp(1)`, the power of a unit Rayleigh coefficient.
    Exponential,
}

impl FromStr for FadingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(Self::Deterministic),
            "exp" | "exponential" => Ok(Self::Exponential),
            other => Err(format!("unknown fading mode `{other}` (expected det or exp)")),
        }
    }
}

impl fmt::Display for FadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Deterministic => "det",
            Self::Exponential => "exp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    V2iOnly,
    V2vOnly,
    Cooperative,
    Optimal,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::V2iOnly, Policy::V2vOnly, Policy::Cooperative, Policy::Optimal];

    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::V2iOnly => "V2I_ONLY",
            Policy::V2vOnly => "V2V_ONLY",
            Policy::Cooperative => "COOPERATIVE",
            Policy::Optimal => "OPTIMAL",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// One target position, speed and fading realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPoint {
    pub links: LinkPair,
    pub d_v: f64,
    pub speed: f64,
}

impl ScenarioPoint {
    /// Target at `x` with the partner mirrored about mid-road.
    pub fn at(geom: &RoadGeometry, params: &SystemParams, x: f64, speed: f64, h_v: f64, h_r: f64) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(domain("speed", speed));
        }
        let (target, partner) = geom.mirrored_pair(x, speed);
        let d_r = scenario::distance_to_rsu(geom, &target);
        let d_v = scenario::inter_vehicle_distance(geom, &target, &partner);
        Ok(Self {
            links: LinkPair {
                v2v: LinkState::v2v(d_v, h_v, params)?,
                v2i: LinkState::v2i(d_r, h_r, params)?,
            },
            d_v,
            speed,
        })
    }

    pub fn v2v_available(&self, params: &SystemParams) -> bool {
        scenario::v2v_available(self.d_v, params)
    }
}

/// Allocation a policy produces at one point.
///
/// Out of V2V range, `V2V_ONLY` transmits nothing and `COOPERATIVE` falls
/// back to the RSU alone.
pub fn policy_allocation(policy: Policy, point: &ScenarioPoint, params: &SystemParams) -> PowerAllocation {
    let v = point.speed;
    let in_range = point.v2v_available(params);
    match policy {
        Policy::V2iOnly => allocator::allocate_v2i_only(&point.links.v2i, v, params),
        Policy::V2vOnly if in_range => allocator::allocate_v2v_only(&point.links.v2v, v, params),
        Policy::V2vOnly => PowerAllocation::unchecked(Mode::V2vOnly, 0.0, 0.0),
        Policy::Cooperative if in_range => allocator::allocate_cooperative(&point.links, v, params),
        Policy::Cooperative => allocator::allocate_v2i_only(&point.links.v2i, v, params),
        Policy::Optimal => allocator::allocate_optimal(&point.links, v, params, point.d_v),
    }
}

/// Rate shown in reports: the mode's rate sum, floored at zero.
pub fn displayed_rate(alloc: &PowerAllocation, point: &ScenarioPoint, params: &SystemParams) -> f64 {
    if alloc.mode != Mode::V2iOnly && !point.v2v_available(params) {
        return 0.0;
    }
    alloc.rate_sum(&point.links, params).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    /// Positions (m) or speeds (m/s), ascending.
    pub points: Vec<f64>,
    pub trials: usize,
    pub fading: FadingMode,
    pub policies: Vec<Policy>,
    pub seed: u64,
    /// Speed used by position sweeps, m/s.
    pub speed: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SweepSpec {
    pub fn validate(&self, geom: &RoadGeometry) -> Result<()> {
        let bad = |reason: String| Error::InvalidParam {
            key: "sweep".into(),
            reason,
        };
        if self.points.is_empty() {
            return Err(bad("no sweep points".into()));
        }
        if self.points.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(bad("sweep points must be sorted".into()));
        }
        if self.trials == 0 {
            return Err(bad("trials must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(bad("no policies".into()));
        }
        match self.variable {
            SweepVariable::Position => {
                if self.points.iter().any(|&x| !(0.0..=geom.road_length).contains(&x)) {
                    return Err(bad(format!("positions must lie in [0, {}]", geom.road_length)));
                }
                if !(self.speed > 0.0) {
                    return Err(bad("speed must be positive".into()));
                }
            }
            SweepVariable::Speed => {
                if self.points.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(bad("speeds must be positive".into()));
                }
            }
        }
        if self.workers == Some(0) {
            return Err(bad("workers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub point: f64,
    pub policy: Policy,
    pub mean_total_power: f64,
    pub stderr_power: f64,
    pub mean_rate: f64,
    pub stderr_rate: f64,
    pub feasible_frac: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    /// Point-major, then in `SweepSpec::policies` order.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn rows_for(&self, policy: Policy) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.policy == policy)
    }

    pub fn row(&self, point: f64, policy: Policy) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.point == point && r.policy == policy)
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error of the mean.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Stream for one trial; independent of the sweep point.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn draw_gain(rng: &mut ChaCha8Rng, fading: FadingMode) -> f64 {
    match fading {
        FadingMode::Deterministic => 1.0,
        FadingMode::Exponential => rng.sample(Exp1),
    }
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    power: f64,
    rate: f64,
    feasible: bool,
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParam {
                    key: "workers".into(),
                    reason: e.to_string(),
                })?;
            Ok(pool.install(job))
        }
    }
}

fn run_sweep(
    spec: &SweepSpec,
    geom: &RoadGeometry,
    params: &SystemParams,
    trial_point: impl Fn(f64, &mut ChaCha8Rng) -> Result<ScenarioPoint> + Sync,
) -> Result<SweepResult> {
    spec.validate(geom)?;
    params.validate()?;
    geom.validate()?;
    let k = spec.policies.len();

    let per_point = with_workers(spec.workers, || {
        spec.points
            .iter()
            .map(|&value| {
                let trials: Result<Vec<Vec<Outcome>>> = (0..spec.trials as u64)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = trial_rng(spec.seed, t);
                        let point = trial_point(value, &mut rng)?;
                        Ok(spec
                            .policies
                            .iter()
                            .map(|&policy| {
                                let a = policy_allocation(policy, &point, params);
                                Outcome {
                                    power: a.total,
                                    rate: displayed_rate(&a, &point, params),
                                    feasible: a.feasible,
                                }
                            })
                            .collect())
                    })
                    .collect();
                trials.map(|t| (value, t))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut rows = Vec::with_capacity(spec.points.len() * k);
    for (value, trials) in per_point {
        for (j, &policy) in spec.policies.iter().enumerate() {
            let powers: Vec<f64> = trials.iter().map(|o| o[j].power).collect();
            let rates: Vec<f64> = trials.iter().map(|o| o[j].rate).collect();
            let feasible = trials.iter().filter(|o| o[j].feasible).count();
            let (mean_total_power, stderr_power) = mean_stderr(&powers);
            let (mean_rate, stderr_rate) = mean_stderr(&rates);
            rows.push(SweepRow {
                point: value,
                policy,
                mean_total_power,
                stderr_power,
                mean_rate,
                stderr_rate,
                feasible_frac: feasible as f64 / trials.len() as f64,
            });
        }
    }
    Ok(SweepResult {
        variable: spec.variable,
        rows,
    })
}

/// Average power and rate against the target's position along the road.
pub fn sweep_position(spec: &SweepSpec, geom: &RoadGeometry, params: &SystemParams) -> Result<SweepResult> {
    if spec.variable != SweepVariable::Position {
        return Err(Error::InvalidParam {
            key: "sweep".into(),
            reason: "expected a position sweep".into(),
        });
    }
    run_sweep(spec, geom, params, |x, rng| {
        let h_r = draw_gain(rng, spec.fading);
        let h_v = draw_gain(rng, spec.fading);
        ScenarioPoint::at(geom, params, x, spec.speed, h_v, h_r)
    })
}

/// Average power, rate and feasibility against vehicle speed. Each trial
/// places the target uniformly on the road.
pub fn sweep_speed(spec: &SweepSpec, geom: &RoadGeometry, params: &SystemParams) -> Result<SweepResult> {
    if spec.variable != SweepVariable::Speed {
        return Err(Error::InvalidParam {
            key: "sweep".into(),
            reason: "expected a speed sweep".into(),
        });
    }
    run_sweep(spec, geom, params, |v, rng| {
        let x = rng.random::<f64>() * geom.road_length;
        let h_r = draw_gain(rng, spec.fading);
        let h_v = draw_gain(rng, spec.fading);
        ScenarioPoint::at(geom, params, x, v, h_v, h_r)
    })
}

const OUTAGE_CHUNK: u64 = 1 << 16;

/// Fraction of `n` map-volume draws with `q v > rate_sum`.
pub fn empirical_outage(rate_sum: f64, v: f64, params: &SystemParams, n: u64, seed: u64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(domain("speed", v));
    }
    let chunks = n.div_ceil(OUTAGE_CHUNK);
    let hits: Result<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = trial_rng(seed, c);
            let len = OUTAGE_CHUNK.min(n - c * OUTAGE_CHUNK);
            let mut hits = 0u64;
            for _ in 0..len {
                if stats::trunc_sample(&mut rng, &params.trunc)? * v > rate_sum {
                    hits += 1;
                }
            }
            Ok(hits)
        })
        .sum();
    Ok(hits? as f64 / n as f64)
}

/// Empirical outage of the allocation a policy makes at a fixed point.
pub fn monte_carlo_outage(
    policy: Policy,
    point: &ScenarioPoint,
    params: &SystemParams,
    n_trials: u64,
    seed: u64,
) -> Result<f64> {
    if n_trials < 10_000 {
        return Err(domain("n_trials", n_trials as f64));
    }
    let alloc = policy_allocation(policy, point, params);
    let rate = if alloc.mode != Mode::V2iOnly && !point.v2v_available(params) {
        0.0
    } else {
        alloc.rate_sum(&point.links, params)
    };
    empirical_outage(rate, point.speed, params, n_trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link;

    fn spec(variable: SweepVariable, points: Vec<f64>, trials: usize, fading: FadingMode) -> SweepSpec {
        SweepSpec {
            variable,
            points,
            trials,
            fading,
            policies: Policy::ALL.to_vec(),
            seed: 42,
            speed: 20.0,
            workers: None,
        }
    }

    #[test]
    fn position_curve_is_symmetric() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let xs: Vec<f64> = (0..=36).map(|i| i as f64 * 12.0).collect();
        let r = sweep_position(
            &spec(SweepVariable::Position, xs.clone(), 3, FadingMode::Deterministic),
            &g,
            &p,
        )
        .unwrap();
        for x in &xs {
            let a = r.row(*x, Policy::Optimal).unwrap().mean_total_power;
            let b = r.row(432.0 - x, Policy::Optimal).unwrap().mean_total_power;
            assert!((a - b).abs() <= 1e-12 * a, "x={x}");
        }
    }

    #[test]
    fn optimal_below_rsu_only_inside_window() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let (lo, hi) = g.v2v_window(p.d_vm).unwrap();
        let xs: Vec<f64> = (0..=108).map(|i| i as f64 * 4.0).collect();
        let r = sweep_position(
            &spec(SweepVariable::Position, xs.clone(), 1, FadingMode::Deterministic),
            &g,
            &p,
        )
        .unwrap();
        for x in xs {
            let opt = r.row(x, Policy::Optimal).unwrap().mean_total_power;
            let rsu = r.row(x, Policy::V2iOnly).unwrap().mean_total_power;
            if x >= lo && x <= hi {
                assert!(opt < rsu, "x={x}");
            } else {
                assert_eq!(opt, rsu, "x={x}");
            }
        }
    }

    #[test]
    fn feasibility_nonincreasing_in_speed() {
        let g = RoadGeometry::default();
        // small caps so infeasibility actually shows up
        let p = SystemParams {
            p_rm: 2e-5,
            p_vm: 2e-6,
            ..SystemParams::default()
        };
        let vs: Vec<f64> = (1..=15).map(|i| i as f64 * 2.0).collect();
        let r = sweep_speed(&spec(SweepVariable::Speed, vs, 400, FadingMode::Exponential), &g, &p).unwrap();
        for policy in Policy::ALL {
            let fr: Vec<f64> = r.rows_for(policy).map(|row| row.feasible_frac).collect();
            for w in fr.windows(2) {
                assert!(w[1] <= w[0], "{policy}: {fr:?}");
            }
        }
        let fr: Vec<f64> = r.rows_for(Policy::V2iOnly).map(|row| row.feasible_frac).collect();
        assert!(fr[0] > fr[fr.len() - 1]);
    }

    #[test]
    fn results_independent_of_worker_count() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let vs: Vec<f64> = (1..=8).map(|i| i as f64 * 4.0).collect();
        let mut s = spec(SweepVariable::Speed, vs, 500, FadingMode::Exponential);
        s.workers = Some(1);
        let a = sweep_speed(&s, &g, &p).unwrap();
        s.workers = Some(5);
        let b = sweep_speed(&s, &g, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn standard_error_shrinks_with_trials() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let s = |n| SweepSpec {
            policies: vec![Policy::V2iOnly],
            ..spec(SweepVariable::Speed, vec![20.0], n, FadingMode::Exponential)
        };
        let small = sweep_speed(&s(2_000), &g, &p).unwrap().rows[0].stderr_rate;
        let large = sweep_speed(&s(32_000), &g, &p).unwrap().rows[0].stderr_rate;
        let ratio = small / large;
        assert!((ratio - 4.0).abs() < 0.6, "ratio {ratio}");
    }

    #[test]
    fn invalid_specs() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let bad = [
            spec(SweepVariable::Position, vec![], 1, FadingMode::Deterministic),
            spec(SweepVariable::Position, vec![10.0, 5.0], 1, FadingMode::Deterministic),
            spec(SweepVariable::Position, vec![500.0], 1, FadingMode::Deterministic),
            spec(SweepVariable::Position, vec![5.0], 0, FadingMode::Deterministic),
        ];
        for s in bad {
            assert!(sweep_position(&s, &g, &p).is_err());
        }
        let s = spec(SweepVariable::Speed, vec![0.0, 10.0], 1, FadingMode::Deterministic);
        assert!(sweep_speed(&s, &g, &p).is_err());
        let s = spec(SweepVariable::Position, vec![10.0], 1, FadingMode::Deterministic);
        assert!(sweep_speed(&s, &g, &p).is_err());
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e8).collect();
        let mut ys = xs.clone();
        ys.reverse();
        let (a, b) = (compensated_sum(xs), compensated_sum(ys));
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn mc_outage_examples() {
        let g = RoadGeometry::default();
        let p = SystemParams::default();
        let strong = ScenarioPoint::at(&g, &p, 216.0, 20.0, 1.0, 1.0).unwrap();
        let all_out = PowerAllocation::unchecked(Mode::Cooperative, p.p_vm, p.p_rm);
        let rate = all_out.rate_sum(&strong.links, &p);
        assert_eq!(empirical_outage(rate, 20.0, &p, 100_000, 1).unwrap(), 0.0);

        let test = SystemParams { delta: 0.05, ..p };
        let n = 1_000_000;
        let e = monte_carlo_outage(Policy::Optimal, &strong, &test, n, 9).unwrap();
        let se = (0.05f64 * 0.95 / n as f64).sqrt();
        assert!((e - 0.05).abs() < 3.0 * se, "{e}");
        assert_eq!(e, monte_carlo_outage(Policy::Optimal, &strong, &test, n, 9).unwrap());
        assert!(monte_carlo_outage(Policy::Optimal, &strong, &test, 10, 9).is_err());
    }

    #[test]
    fn mc_tracks_heavily_truncated_law() {
        // Truncation removes ~31% of the Gaussian here.
        let p = SystemParams {
            trunc: stats::TruncGaussParams::new(50.0, 100.0).unwrap(),
            ..SystemParams::default()
        };
        let n = 1_000_000;
        for rate in [500.0, 2000.0, 4000.0] {
            let analytic = link::analytic_outage(rate, 20.0, &p);
            let e = empirical_outage(rate, 20.0, &p, n, 5).unwrap();
            let se = (analytic * (1.0 - analytic) / n as f64).sqrt();
            assert!(
                (e - analytic).abs() < 3.0 * se.max(1e-6),
                "rate {rate}: {e} vs {analytic}"
            );
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.as_str().parse::<Policy>().unwrap(), p);
        }
        assert!("BOTH".parse::<Policy>().is_err());
    }
}
