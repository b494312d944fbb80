//! Command-line front end: config files, CSV output and subcommands.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Powers
//! and the noise density are given in dBm and kept in that form so a dumped
//! config reloads to the same values.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::link;
use crate::oracle;
use crate::scenario::{self, RoadGeometry, SystemParams};
use crate::simulator::{self, FadingMode, Policy, ScenarioPoint, SweepResult, SweepSpec, SweepVariable};
use crate::stats::TruncGaussParams;

/// Everything a run needs, as read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub phi0: f64,
    pub alpha: f64,
    pub phi1: f64,
    pub tau: f64,
    pub n0_dbm_hz: f64,
    pub b_r: f64,
    pub b_v: f64,
    pub p_rm_dbm: f64,
    pub p_vm_dbm: f64,
    pub d_vm: f64,
    pub eps_r: f64,
    pub eps_v: f64,
    pub delta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub geometry: RoadGeometry,
    pub positions: Vec<f64>,
    pub speeds: Vec<f64>,
    /// Speed used for position sweeps and single-point commands, m/s.
    pub speed: f64,
    pub trials: usize,
    pub fading: FadingMode,
    pub policies: Vec<Policy>,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        let p = SystemParams::default();
        let geometry = RoadGeometry::default();
        Self {
            phi0: p.phi0,
            alpha: p.alpha,
            phi1: p.phi1,
            tau: p.tau,
            n0_dbm_hz: -174.0,
            b_r: p.b_r,
            b_v: p.b_v,
            p_rm_dbm: 40.0,
            p_vm_dbm: 36.0,
            d_vm: p.d_vm,
            eps_r: p.eps_r,
            eps_v: p.eps_v,
            delta: p.delta,
            mu: p.trunc.mu,
            sigma: p.trunc.sigma,
            positions: (0..=108).map(|i| i as f64 * geometry.road_length / 108.0).collect(),
            geometry,
            speeds: (1..=20).map(|i| 2.0 * i as f64).collect(),
            speed: 20.0,
            trials: 10_000,
            fading: FadingMode::Deterministic,
            policies: Policy::ALL.to_vec(),
            seed: 1,
        }
    }
}

pub const CONFIG_KEYS: [&str; 26] = [
    "phi0",
    "alpha",
    "phi1",
    "tau",
    "n0_dbm_hz",
    "b_r",
    "b_v",
    "p_rm_dbm",
    "p_vm_dbm",
    "d_vm",
    "eps_r",
    "eps_v",
    "delta",
    "mu",
    "sigma",
    "road_length",
    "rsu_offset",
    "lane_width",
    "rsu_longitudinal",
    "positions",
    "speeds",
    "speed",
    "trials",
    "fading",
    "policies",
    "seed",
];

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        key: key.into(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| invalid(key, format!("not a number: `{s}`")))?;
    if !v.is_finite() {
        return Err(invalid(key, format!("must be finite, got `{s}`")));
    }
    Ok(v)
}

/// Comma-separated numbers, or an inclusive range `start:step:stop`.
fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    let out = if parts.len() == 3 {
        let (a, step, b) = (
            parse_f64(key, parts[0])?,
            parse_f64(key, parts[1])?,
            parse_f64(key, parts[2])?,
        );
        if !(step > 0.0) || b < a {
            return Err(invalid(key, "range needs step > 0 and stop >= start"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + step * i as f64).collect()
    } else if parts.len() == 1 {
        s.split(',')
            .map(|t| parse_f64(key, t.trim()))
            .collect::<Result<Vec<_>>>()?
    } else {
        return Err(invalid(key, "expected `a,b,c` or `start:step:stop`"));
    };
    if out.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(out)
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen: Vec<String> = Vec::new();
        let mut positions_set = false;
        let mut rsu_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(&format!("line {}", lineno + 1), "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(invalid(key, "unknown config key"));
            }
            if seen.iter().any(|k| k == key) {
                return Err(invalid(key, "given more than once"));
            }
            seen.push(key.to_string());
            let f = || parse_f64(key, value);
            match key {
                "phi0" => cfg.phi0 = f()?,
                "alpha" => cfg.alpha = f()?,
                "phi1" => cfg.phi1 = f()?,
                "tau" => cfg.tau = f()?,
                "n0_dbm_hz" => cfg.n0_dbm_hz = f()?,
                "b_r" => cfg.b_r = f()?,
                "b_v" => cfg.b_v = f()?,
                "p_rm_dbm" => cfg.p_rm_dbm = f()?,
                "p_vm_dbm" => cfg.p_vm_dbm = f()?,
                "d_vm" => cfg.d_vm = f()?,
                "eps_r" => cfg.eps_r = f()?,
                "eps_v" => cfg.eps_v = f()?,
                "delta" => cfg.delta = f()?,
                "mu" => cfg.mu = f()?,
                "sigma" => cfg.sigma = f()?,
                "road_length" => cfg.geometry.road_length = f()?,
                "rsu_offset" => cfg.geometry.rsu_offset = f()?,
                "lane_width" => cfg.geometry.lane_width = f()?,
                "rsu_longitudinal" => {
                    cfg.geometry.rsu_longitudinal = f()?;
                    rsu_set = true;
                }
                "positions" => {
                    cfg.positions = parse_list(key, value)?;
                    positions_set = true;
                }
                "speeds" => cfg.speeds = parse_list(key, value)?,
                "speed" => cfg.speed = f()?,
                "trials" => {
                    cfg.trials = value
                        .parse()
                        .map_err(|_| invalid(key, format!("not a positive integer: `{value}`")))?
                }
                "fading" => cfg.fading = value.parse().map_err(|e: String| invalid(key, e))?,
                "policies" => {
                    cfg.policies = value
                        .split(',')
                        .map(|t| t.trim().parse::<Policy>().map_err(|e| invalid(key, e)))
                        .collect::<Result<Vec<_>>>()?
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| invalid(key, format!("not an unsigned integer: `{value}`")))?
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
        let l = cfg.geometry.road_length;
        if !rsu_set {
            cfg.geometry.rsu_longitudinal = l / 2.0;
        }
        if !positions_set {
            cfg.positions = (0..=108).map(|i| i as f64 * l / 108.0).collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.geometry.validate()?;
        if !(self.speed > 0.0) {
            return Err(invalid("speed", "must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(invalid("policies", "empty list"));
        }
        Ok(())
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            phi0: self.phi0,
            alpha: self.alpha,
            phi1: self.phi1,
            tau: self.tau,
            n0: scenario::dbm_to_watts(self.n0_dbm_hz),
            b_r: self.b_r,
            b_v: self.b_v,
            p_rm: scenario::dbm_to_watts(self.p_rm_dbm),
            p_vm: scenario::dbm_to_watts(self.p_vm_dbm),
            d_vm: self.d_vm,
            eps_r: self.eps_r,
            eps_v: self.eps_v,
            delta: self.delta,
            trunc: TruncGaussParams {
                mu: self.mu,
                sigma: self.sigma,
            },
        }
    }

    /// Every key, one per line; `Config::parse` of the output is `self`.
    pub fn dump(&self) -> String {
        let g = &self.geometry;
        let mut s = String::new();
        for (k, v) in [
            ("phi0", self.phi0),
            ("alpha", self.alpha),
            ("phi1", self.phi1),
            ("tau", self.tau),
            ("n0_dbm_hz", self.n0_dbm_hz),
            ("b_r", self.b_r),
            ("b_v", self.b_v),
            ("p_rm_dbm", self.p_rm_dbm),
            ("p_vm_dbm", self.p_vm_dbm),
            ("d_vm", self.d_vm),
            ("eps_r", self.eps_r),
            ("eps_v", self.eps_v),
            ("delta", self.delta),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("road_length", g.road_length),
            ("rsu_offset", g.rsu_offset),
            ("lane_width", g.lane_width),
            ("rsu_longitudinal", g.rsu_longitudinal),
        ] {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(
            s,
            "positions = {}",
            join(self.positions.iter().map(|v| format!("{v:?}")))
        );
        let _ = writeln!(s, "speeds = {}", join(self.speeds.iter().map(|v| format!("{v:?}"))));
        let _ = writeln!(s, "speed = {:?}", self.speed);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "fading = {}", self.fading);
        let _ = writeln!(s, "policies = {}", join(self.policies.iter().map(|p| p.to_string())));
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

/// `printf("%.9g", x)`.
pub fn fmt_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..P).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        trim(&format!("{:.*}", (P - 1 - exp) as usize, x))
    }
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let first = match result.variable {
        SweepVariable::Position => "x_m",
        SweepVariable::Speed => "v_mps",
    };
    let mut s =
        format!("{first},policy,mean_total_power_w,stderr_power_w,mean_rate_bps,stderr_rate_bps,feasible_frac\n");
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            fmt_g9(r.point),
            r.policy,
            fmt_g9(r.mean_total_power),
            fmt_g9(r.stderr_power),
            fmt_g9(r.mean_rate),
            fmt_g9(r.stderr_rate),
            fmt_g9(r.feasible_frac)
        );
    }
    s
}

#[derive(Debug, Parser)]
#[command(
    name = "coopv2x",
    version,
    about = "Power allocation and link simulation for cooperative V2I/V2V map delivery"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Target position along the road, m.
    #[arg(long, global = true)]
    pub x: Option<f64>,
    /// Vehicle speed, m/s.
    #[arg(long, global = true)]
    pub speed: Option<f64>,
    /// Trials per point (sweeps), samples (verify-outage) or instances (oracle-compare).
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Outage target, overrides the config.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// `det` (h = 1) or `exp` (h ~ Exp(1)).
    #[arg(long, global = true)]
    pub fading: Option<FadingMode>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Fading gain of the V2V link for single-point commands.
    #[arg(long = "h-v", global = true)]
    pub h_v: Option<f64>,
    /// Fading gain of the V2I link for single-point commands.
    #[arg(long = "h-r", global = true)]
    pub h_r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimal allocation at one position and speed.
    Allocate,
    /// Sweep the target position at fixed speed, CSV.
    SweepPosition,
    /// Sweep the speed with uniformly drawn positions, CSV.
    SweepSpeed,
    /// Analytic outage of the optimal allocation against Monte Carlo.
    VerifyOutage,
    /// Closed-form cooperative allocation against the grid oracle.
    OracleCompare,
    /// Print the effective config.
    DumpConfig,
}

/// Exit status of a completed command.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

fn resolve(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(d) = cli.delta {
        cfg.delta = d;
    }
    if let Some(s) = cli.speed {
        cfg.speed = s;
    }
    if let Some(f) = cli.fading {
        cfg.fading = f;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_spec(cfg: &Config, cli: &Cli, variable: SweepVariable) -> Result<SweepSpec> {
    let trials = match cli.trials {
        Some(t) => usize::try_from(t).map_err(|_| invalid("trials", "too large"))?,
        None => cfg.trials,
    };
    Ok(SweepSpec {
        variable,
        points: match variable {
            SweepVariable::Position => cfg.positions.clone(),
            SweepVariable::Speed => cfg.speeds.clone(),
        },
        trials,
        fading: cfg.fading,
        policies: cfg.policies.clone(),
        seed: cfg.seed,
        speed: cfg.speed,
        workers: cli.workers,
    })
}

/// Single point from `--x`, `--speed` and the gains. With `exp` fading and
/// no explicit gains, both are drawn from the seeded stream.
fn single_point(cfg: &Config, cli: &Cli, params: &SystemParams) -> Result<ScenarioPoint> {
    let x = cli.x.unwrap_or(cfg.geometry.rsu_longitudinal);
    let (mut h_v, mut h_r) = (1.0, 1.0);
    if cfg.fading == FadingMode::Exponential {
        let mut rng = simulator::trial_rng(cfg.seed, 0);
        h_r = rng.sample(Exp1);
        h_v = rng.sample(Exp1);
    }
    ScenarioPoint::at(
        &cfg.geometry,
        params,
        x,
        cfg.speed,
        cli.h_v.unwrap_or(h_v),
        cli.h_r.unwrap_or(h_r),
    )
}

fn dbm(w: f64) -> String {
    if w > 0.0 {
        format!("{:.4}", scenario::watts_to_dbm(w))
    } else {
        "-inf".into()
    }
}

fn cmd_allocate(cfg: &Config, cli: &Cli, out: &mut String) -> Result<i32> {
    let params = cfg.params();
    let pt = single_point(cfg, cli, &params)?;
    let a = simulator::policy_allocation(Policy::Optimal, &pt, &params);
    let _ = writeln!(out, "mode {}", a.mode);
    let _ = writeln!(out, "d_v_m {}", fmt_g9(pt.d_v));
    let _ = writeln!(out, "d_r_m {}", fmt_g9(pt.links.v2i.distance));
    let _ = writeln!(out, "p_v_w {}", fmt_g9(a.p_v));
    let _ = writeln!(out, "p_v_dbm {}", dbm(a.p_v));
    let _ = writeln!(out, "p_r_w {}", fmt_g9(a.p_r));
    let _ = writeln!(out, "p_r_dbm {}", dbm(a.p_r));
    let _ = writeln!(out, "total_w {}", fmt_g9(a.total));
    let _ = writeln!(out, "outage {}", fmt_g9(a.achieved_outage));
    let _ = writeln!(out, "feasible {}", a.feasible);
    Ok(if a.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn cmd_verify(cfg: &Config, cli: &Cli, out: &mut String) -> Result<i32> {
    let params = cfg.params();
    let pt = single_point(cfg, cli, &params)?;
    let n = cli.trials.unwrap_or(1_000_000);
    let a = simulator::policy_allocation(Policy::Optimal, &pt, &params);
    let rate = a.rate_sum(&pt.links, &params);
    let analytic = link::analytic_outage(rate, pt.speed, &params);
    let empirical = simulator::monte_carlo_outage(Policy::Optimal, &pt, &params, n, cfg.seed)?;
    let se = (analytic * (1.0 - analytic) / n as f64).sqrt();
    let _ = writeln!(out, "mode {}", a.mode);
    let _ = writeln!(out, "rate_sum_bps {}", fmt_g9(rate));
    let _ = writeln!(out, "analytic_outage {}", fmt_g9(analytic));
    let _ = writeln!(out, "empirical_outage {}", fmt_g9(empirical));
    let _ = writeln!(out, "samples {n}");
    let _ = writeln!(out, "stderr {}", fmt_g9(se));
    let _ = writeln!(out, "within_3se {}", (empirical - analytic).abs() <= 3.0 * se);
    Ok(EXIT_OK)
}

fn cmd_oracle(cfg: &Config, cli: &Cli, out: &mut String) -> Result<i32> {
    let params = cfg.params();
    let n = cli.trials.unwrap_or(200);
    let mut rng = simulator::trial_rng(cfg.seed, 0);
    let _ = writeln!(
        out,
        "idx,d_v_m,d_r_m,h_v,h_r,v_mps,closed_form_w,grid_w,rel_gap,class,agree"
    );
    let (mut agree, mut total) = ([0u64; 2], [0u64; 2]);
    for i in 0..n {
        let (links, v) = oracle::random_instance(&mut rng, &params);
        let c = oracle::compare_cooperative(&links, v, &params);
        let k = usize::from(c.interior);
        total[k] += 1;
        agree[k] += u64::from(c.agrees());
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            fmt_g9(links.v2v.distance),
            fmt_g9(links.v2i.distance),
            fmt_g9(links.v2v.gain),
            fmt_g9(links.v2i.gain),
            fmt_g9(v),
            fmt_g9(c.closed_form.total),
            fmt_g9(c.grid.total),
            fmt_g9(c.rel_gap),
            if c.interior { "interior" } else { "boundary" },
            c.agrees()
        );
    }
    let _ = writeln!(out, "# interior {}/{} agree within 0.5%", agree[1], total[1]);
    let _ = writeln!(out, "# boundary {}/{} agree within 1%", agree[0], total[0]);
    Ok(if agree == total { EXIT_OK } else { EXIT_ERROR })
}

/// Runs one parsed command, returning its exit status and output text.
pub fn execute(cli: &Cli) -> Result<(i32, String)> {
    let cfg = resolve(cli)?;
    let params = cfg.params();
    let mut out = String::new();
    let code = match cli.command {
        Command::Allocate => cmd_allocate(&cfg, cli, &mut out)?,
        Command::SweepPosition => {
            let spec = sweep_spec(&cfg, cli, SweepVariable::Position)?;
            out = sweep_csv(&simulator::sweep_position(&spec, &cfg.geometry, &params)?);
            EXIT_OK
        }
        Command::SweepSpeed => {
            let spec = sweep_spec(&cfg, cli, SweepVariable::Speed)?;
            out = sweep_csv(&simulator::sweep_speed(&spec, &cfg.geometry, &params)?);
            EXIT_OK
        }
        Command::VerifyOutage => cmd_verify(&cfg, cli, &mut out)?,
        Command::OracleCompare => cmd_oracle(&cfg, cli, &mut out)?,
        Command::DumpConfig => {
            out = cfg.dump();
            EXIT_OK
        }
    };
    Ok((code, out))
}

fn emit(text: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

/// Entry point; `args[0]` is the program name. Returns the exit status.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok((code, text)) => match emit(&text, cli.out.as_deref()) {
            Ok(()) => code,
            Err(e) => {
                eprintln!("error: writing output: {e}");
                EXIT_ERROR
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
