//! System constants, road layout and vehicle kinematics.
//!
//! Two vehicles drive in opposite lanes of a straight road covered by a
//! single RSU set back from the road. The target vehicle moves forward,
//! the map-holding partner moves backward.

use crate::error::{domain, Error, Result};
use crate::stats::TruncGaussParams;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// Physical-layer and statistical constants. All values are SI linear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Channel constant (antenna gain and carrier frequency).
    pub phi0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// SNR loss from imperfect transmitter CSI, >= 1.
    pub phi1: f64,
    /// Transmission duration, s.
    pub tau: f64,
    /// Noise power spectral density, W/Hz.
    pub n0: f64,
    /// RSU (V2I) bandwidth, Hz.
    pub b_r: f64,
    /// Vehicle (V2V) bandwidth, Hz.
    pub b_v: f64,
    /// RSU power cap, W.
    pub p_rm: f64,
    /// Vehicle power cap, W.
    pub p_vm: f64,
    /// Maximum V2V range, m.
    pub d_vm: f64,
    /// Decoding error target of the V2I link.
    pub eps_r: f64,
    /// Decoding error target of the V2V link.
    pub eps_v: f64,
    /// Maximum rate-outage probability.
    pub delta: f64,
    pub trunc: TruncGaussParams,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            phi0: 1e-3,
            alpha: 3.0,
            phi1: 1.5,
            tau: 1e-3,
            n0: dbm_to_watts(-174.0),
            b_r: 1e6,
            b_v: 0.5e6,
            p_rm: dbm_to_watts(40.0),
            p_vm: dbm_to_watts(36.0),
            d_vm: 150.0,
            eps_r: 1e-4,
            eps_v: 1e-4,
            delta: 1e-4,
            trunc: TruncGaussParams::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            key: key.into(),
            reason: format!("must be positive and finite, got {v}"),
        })
    }
}

fn below_half(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParam {
            key: key.into(),
            reason: format!("must lie in (0, 0.5), got {v}"),
        })
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("phi0", self.phi0),
            ("alpha", self.alpha),
            ("tau", self.tau),
            ("n0", self.n0),
            ("b_r", self.b_r),
            ("b_v", self.b_v),
            ("p_rm", self.p_rm),
            ("p_vm", self.p_vm),
            ("d_vm", self.d_vm),
        ] {
            positive(k, v)?;
        }
        if !(self.phi1 >= 1.0 && self.phi1.is_finite()) {
            return Err(Error::InvalidParam {
                key: "phi1".into(),
                reason: format!("must be >= 1, got {}", self.phi1),
            });
        }
        below_half("eps_r", self.eps_r)?;
        below_half("eps_v", self.eps_v)?;
        below_half("delta", self.delta)?;
        self.trunc.validate().map_err(|e| Error::InvalidParam {
            key: "sigma".into(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadGeometry {
    pub road_length: f64,
    /// Perpendicular RSU setback from the road, m.
    pub rsu_offset: f64,
    pub lane_width: f64,
    /// RSU foot point along the road, m.
    pub rsu_longitudinal: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            road_length: 432.0,
            rsu_offset: 250.0,
            lane_width: 3.5,
            rsu_longitudinal: 216.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        positive("road_length", self.road_length)?;
        positive("rsu_offset", self.rsu_offset)?;
        positive("lane_width", self.lane_width)?;
        if !(0.0..=self.road_length).contains(&self.rsu_longitudinal) {
            return Err(Error::InvalidParam {
                key: "rsu_longitudinal".into(),
                reason: format!("must lie in [0, {}]", self.road_length),
            });
        }
        Ok(())
    }

    /// Target/partner pair for a target at `x`, with the partner mirrored
    /// about the road midpoint (both started from opposite road ends).
    pub fn mirrored_pair(&self, x: f64, speed: f64) -> (VehicleState, VehicleState) {
        (
            VehicleState {
                position: x,
                speed,
                direction: Direction::Forward,
                lane_index: 0,
            },
            VehicleState {
                position: self.road_length - x,
                speed,
                direction: Direction::Backward,
                lane_index: 1,
            },
        )
    }

    /// Target positions for which the mirrored partner is within `d_vm`.
    /// `None` when the lanes alone are farther apart than `d_vm`.
    pub fn v2v_window(&self, d_vm: f64) -> Option<(f64, f64)> {
        if d_vm < self.lane_width {
            return None;
        }
        let half = (d_vm * d_vm - self.lane_width * self.lane_width).sqrt() / 2.0;
        let mid = self.road_length / 2.0;
        Some(((mid - half).max(0.0), (mid + half).min(self.road_length)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub direction: Direction,
    pub lane_index: u8,
}

pub fn distance_to_rsu(geom: &RoadGeometry, veh: &VehicleState) -> f64 {
    geom.rsu_offset.hypot(veh.position - geom.rsu_longitudinal)
}

pub fn inter_vehicle_distance(geom: &RoadGeometry, a: &VehicleState, b: &VehicleState) -> f64 {
    let dx = a.position - b.position;
    if a.lane_index == b.lane_index {
        dx.abs()
    } else {
        dx.hypot(geom.lane_width)
    }
}

/// Moves both vehicles by `dt` seconds. Positions are clamped to the road;
/// the flag is `true` once either vehicle reaches the end of the road.
pub fn advance(
    geom: &RoadGeometry,
    states: (VehicleState, VehicleState),
    dt: f64,
) -> Result<((VehicleState, VehicleState), bool)> {
    if !(dt >= 0.0) {
        return Err(domain("dt", dt));
    }
    let mut exited = false;
    let mut step = |mut s: VehicleState| {
        let dx = s.speed * dt;
        let raw = match s.direction {
            Direction::Forward => s.position + dx,
            Direction::Backward => s.position - dx,
        };
        s.position = raw.clamp(0.0, geom.road_length);
        if dt > 0.0 && s.speed > 0.0 && (raw <= 0.0 || raw >= geom.road_length) {
            exited = true;
        }
        s
    };
    let a = step(states.0);
    let b = step(states.1);
    Ok(((a, b), exited))
}

/// Whether the V2V link is usable; the range boundary is inclusive.
pub fn v2v_available(d_v: f64, params: &SystemParams) -> bool {
    d_v <= params.d_vm
}
