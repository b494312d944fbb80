//! Per-link physics: large-scale gain, SNR, finite-blocklength rate, the
//! analytic rate-outage probability, and the constants of the cooperative
//! boundary curve `p_R = g(p_V)`.
//!
//! Rates are kept signed. At low SNR the dispersion penalty dominates and
//! the rate goes negative; the closed forms rely on that unclamped value.

use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};
use crate::scenario::SystemParams;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    /// Transmitter-receiver distance, m.
    pub distance: f64,
    /// Fading power gain.
    pub gain: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Decoding error target.
    pub eps: f64,
}

impl LinkState {
    pub fn new(distance: f64, gain: f64, bandwidth: f64, eps: f64) -> Result<Self> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(domain("link distance", distance));
        }
        if !(gain >= 0.0 && gain.is_finite()) {
            return Err(domain("fading gain", gain));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(domain("bandwidth", bandwidth));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(domain("decoding error target", eps));
        }
        Ok(Self {
            distance,
            gain,
            bandwidth,
            eps,
        })
    }

    /// RSU-to-target link.
    pub fn v2i(distance: f64, gain: f64, params: &SystemParams) -> Result<Self> {
        Self::new(distance, gain, params.b_r, params.eps_r)
    }

    /// Partner-to-target link.
    pub fn v2v(distance: f64, gain: f64, params: &SystemParams) -> Result<Self> {
        Self::new(distance, gain, params.b_v, params.eps_v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPair {
    pub v2v: LinkState,
    pub v2i: LinkState,
}

pub fn large_scale_gain(d: f64, params: &SystemParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain("distance", d));
    }
    Ok(params.phi0 * d.powf(-params.alpha))
}

/// SNR produced by one watt on this link.
#[inline]
pub fn snr_per_watt(link: &LinkState, params: &SystemParams) -> f64 {
    params.phi0 * link.distance.powf(-params.alpha) * link.gain / (params.phi1 * params.n0 * link.bandwidth)
}

pub fn snr(p: f64, link: &LinkState, params: &SystemParams) -> f64 {
    snr_per_watt(link, params) * p
}

/// `sqrt(1 / (tau B)) * Q^-1(eps)`, in nats per channel use.
#[inline]
pub fn dispersion_penalty(link: &LinkState, params: &SystemParams) -> f64 {
    (1.0 / (params.tau * link.bandwidth)).sqrt() * -stats::quantile(link.eps)
}

/// Finite-blocklength rate in bits/s. Negative when the penalty exceeds
/// the Shannon term.
pub fn fbl_rate(p: f64, link: &LinkState, params: &SystemParams) -> f64 {
    link.bandwidth / LN_2 * (snr(p, link, params).ln_1p() - dispersion_penalty(link, params))
}

/// Deliverable map volume per meter at speed `v`.
pub fn kappa(rate_sum: f64, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(domain("speed", v));
    }
    Ok(rate_sum / v)
}

/// `P{q v > rate_sum}` under the truncated map-volume law.
pub fn analytic_outage(rate_sum: f64, v: f64, params: &SystemParams) -> f64 {
    debug_assert!(v > 0.0);
    let k = rate_sum / v;
    if !(k > 0.0) {
        return 1.0;
    }
    params.trunc.upper_tail(k)
}

/// Sum of both links' dispersion losses in bits/s; never positive.
pub fn vartheta(params: &SystemParams) -> f64 {
    let loss = |b: f64, eps: f64| b / LN_2 * (1.0 / (params.tau * b)).sqrt() * -stats::quantile(eps);
    -loss(params.b_r, params.eps_r) - loss(params.b_v, params.eps_v)
}

/// Required cooperative rate in nats per RSU channel use at speed `v`,
/// dispersion losses of both links included.
pub fn chi(v: f64, params: &SystemParams) -> f64 {
    let q_star = stats::upper_quantile_unchecked(params.delta, &params.trunc);
    (q_star - vartheta(params) / v) * v * LN_2 / params.b_r
}

/// Bundles the quantities shared by `g` and its inverse.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Boundary {
    /// Inverse SNR per watt, i.e. the W needed for unit SNR.
    pub c_v: f64,
    pub c_r: f64,
    pub chi: f64,
    /// `B_V / B_R`.
    pub ratio: f64,
}

impl Boundary {
    pub fn new(links: &LinkPair, v: f64, params: &SystemParams) -> Result<Self> {
        if links.v2v.gain <= 0.0 {
            return Err(Error::SingularLink("v2v"));
        }
        if links.v2i.gain <= 0.0 {
            return Err(Error::SingularLink("v2i"));
        }
        Ok(Self {
            c_v: 1.0 / snr_per_watt(&links.v2v, params),
            c_r: 1.0 / snr_per_watt(&links.v2i, params),
            chi: chi(v, params),
            ratio: links.v2v.bandwidth / links.v2i.bandwidth,
        })
    }

    #[inline]
    pub fn g(&self, p_v: f64) -> f64 {
        self.c_r * (self.chi - self.ratio * (p_v / self.c_v).ln_1p()).exp_m1()
    }

    /// The `p_v` with `g(p_v) = p_r`. May be negative.
    #[inline]
    pub fn g_inv(&self, p_r: f64) -> f64 {
        self.c_v * ((self.chi - (p_r / self.c_r).ln_1p()) / self.ratio).exp_m1()
    }
}

/// Minimum RSU power meeting the outage target exactly when the partner
/// transmits `p_v`.
pub fn g_of_pv(p_v: f64, links: &LinkPair, v: f64, params: &SystemParams) -> Result<f64> {
    if !(p_v >= 0.0) {
        return Err(domain("p_v", p_v));
    }
    Ok(Boundary::new(links, v, params)?.g(p_v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn path_gain() {
        let p = SystemParams {
            phi0: 1e-3,
            alpha: 3.0,
            ..table()
        };
        assert!((large_scale_gain(10.0, &p).unwrap() - 1e-6).abs() < 1e-20);
        assert_eq!(large_scale_gain(1.0, &p).unwrap(), 1e-3);
        assert!(large_scale_gain(20.0, &p).unwrap() < large_scale_gain(19.0, &p).unwrap());
        assert!(large_scale_gain(0.0, &p).is_err());
    }

    #[test]
    fn snr_examples() {
        let p = table();
        let l = LinkState::new(250.0, 1.0, 1e6, 1e-4).unwrap();
        assert_eq!(snr(0.0, &l, &p), 0.0);
        assert!((snr(2.0, &l, &p) - 2.0 * snr(1.0, &l, &p)).abs() < 1e-9);
        // 1e-3 * 250^-3 / (1.5 * 3.98107e-21 * 1e6), independent 40-digit evaluation
        assert!((snr(1.0, &l, &p) - 10_717.382_107_774_21).abs() < 1e-7);
    }

    #[test]
    fn rate_examples() {
        let p = table();
        let l = LinkState::new(100.0, 1.0, 1e6, 1e-4).unwrap();
        let pen = dispersion_penalty(&l, &p);
        assert!((pen - 0.031_622_776_601_683_8 * 3.719_016_485_455_68).abs() < 1e-12);
        let at_zero = fbl_rate(0.0, &l, &p);
        assert!((at_zero + 1e6 / LN_2 * pen).abs() < 1e-6);
        assert!(at_zero < 0.0);
        // snr = 1
        let unit = 1.0 / snr_per_watt(&l, &p);
        let r = fbl_rate(unit, &l, &p);
        assert!((r - 830_330.944_428_658_3).abs() < 1e-3, "{r}");
    }

    #[test]
    fn rate_degenerates_to_shannon() {
        let p = table();
        let mut l = LinkState::new(100.0, 1.0, 1e6, 0.25).unwrap();
        l.eps = 0.5;
        for pw in [0.0, 1e-6, 0.3, 10.0] {
            let shannon = l.bandwidth * (1.0 + snr(pw, &l, &p)).log2();
            assert!((fbl_rate(pw, &l, &p) - shannon).abs() <= 1e-9 * shannon.max(1.0));
        }
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(1e6, 20.0).unwrap(), 5e4);
        assert_eq!(kappa(1e6, 40.0).unwrap(), 2.5e4);
        assert!(kappa(1.0, 0.0).is_err());
    }

    #[test]
    fn outage_examples() {
        let p = table();
        assert_eq!(analytic_outage(0.0, 20.0, &p), 1.0);
        assert_eq!(analytic_outage(-5.0, 20.0, &p), 1.0);
        assert!(analytic_outage(1e12, 20.0, &p) < 1e-300);
        let q_star = 1_171.901_648_545_568;
        assert!((analytic_outage(q_star * 20.0, 20.0, &p) - 1e-4).abs() < 1e-15);
        assert!(analytic_outage(2e4, 20.0, &p) > analytic_outage(2.1e4, 20.0, &p));
    }

    #[test]
    fn vartheta_examples() {
        let p = table();
        assert!((vartheta(&p) + 289_643.195_323_354_6).abs() < 1e-6);
        let half = SystemParams {
            eps_r: 0.5,
            eps_v: 0.5,
            ..table()
        };
        assert_eq!(vartheta(&half), 0.0);
    }

    #[test]
    fn chi_examples() {
        let p = table();
        let c = chi(20.0, &p);
        assert!((c - 0.217_011_370_678_415).abs() < 1e-12);
        let q_star = stats::trunc_upper_quantile(p.delta, &p.trunc).unwrap();
        assert!((c - (q_star * 20.0 - vartheta(&p)) * LN_2 / p.b_r).abs() < 1e-14);
        assert!(chi(21.0, &p) > c);
    }

    fn pair(d_v: f64, h_v: f64, d_r: f64, h_r: f64, p: &SystemParams) -> LinkPair {
        LinkPair {
            v2v: LinkState::v2v(d_v, h_v, p).unwrap(),
            v2i: LinkState::v2i(d_r, h_r, p).unwrap(),
        }
    }

    #[test]
    fn g_at_zero() {
        let p = table();
        let links = pair(100.0, 1.0, 260.0, 1.0, &p);
        let c_r = 1.0 / snr_per_watt(&links.v2i, &p);
        let g0 = g_of_pv(0.0, &links, 20.0, &p).unwrap();
        assert!((g0 - c_r * (chi(20.0, &p).exp() - 1.0)).abs() <= 1e-12 * g0);
    }

    #[test]
    fn g_rejects_dead_links() {
        let p = table();
        let links = pair(100.0, 0.0, 260.0, 1.0, &p);
        assert_eq!(g_of_pv(0.1, &links, 20.0, &p), Err(Error::SingularLink("v2v")));
        let links = pair(100.0, 1.0, 260.0, 0.0, &p);
        assert_eq!(g_of_pv(0.1, &links, 20.0, &p), Err(Error::SingularLink("v2i")));
    }

    #[test]
    fn g_inverse_round_trip() {
        let p = table();
        let links = pair(140.0, 0.2, 300.0, 1.3, &p);
        let b = Boundary::new(&links, 25.0, &p).unwrap();
        for pv in [0.0, 1e-9, 1e-7, 3e-6] {
            let pr = b.g(pv);
            assert!((b.g_inv(pr) - pv).abs() < 1e-9 * (pv + b.c_v));
        }
    }

    #[test]
    fn monotone_in_power_gain_and_distance() {
        let p = table();
        let l = LinkState::v2i(250.0, 1.0, &p).unwrap();
        let weaker = LinkState { gain: 0.5, ..l };
        let farther = LinkState { distance: 300.0, ..l };
        for pw in [1e-7, 1e-5, 1e-3, 1.0] {
            assert!(fbl_rate(pw * 1.01, &l, &p) > fbl_rate(pw, &l, &p));
            assert!(fbl_rate(pw, &weaker, &p) < fbl_rate(pw, &l, &p));
            assert!(fbl_rate(pw, &farther, &p) < fbl_rate(pw, &l, &p));
        }
    }
}
