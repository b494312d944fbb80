//! Standard normal special functions and the truncated-Gaussian map-volume model.
//!
//! The normal CDF is built on `erfc` so that both tails keep full relative
//! precision; the quantile starts from Acklam's rational approximation and
//! takes one Halley step against the CDF.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Maximum consecutive rejections in [`trunc_sample`] before giving up.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// Returns `(Phi(x), 1 - Phi(x))`. The smaller tail comes straight from
/// `erfc`; the larger one is its complement, so the pair sums to exactly 1.
#[inline]
pub(crate) fn normal_tails(x: f64) -> (f64, f64) {
    let small = 0.5 * libm::erfc(x.abs() * FRAC_1_SQRT_2);
    if x >= 0.0 {
        (1.0 - small, small)
    } else {
        (small, 1.0 - small)
    }
}

#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    normal_tails(x).0
}

#[inline]
pub(crate) fn q_tail(x: f64) -> f64 {
    normal_tails(x).1
}

#[inline]
fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain("phi_cdf argument", x));
    }
    Ok(phi(x))
}

/// Gaussian Q-function, `1 - Phi(x)`.
pub fn q_gauss(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain("q_gauss argument", x));
    }
    Ok(q_tail(x))
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("phi_inv probability", p));
    }
    Ok(quantile(p))
}

/// Inverse Q-function: the `x` with `Q(x) = p`.
pub fn q_gauss_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain("q_gauss_inv probability", p));
    }
    Ok(-quantile(p))
}

pub(crate) fn quantile(p: f64) -> f64 {
    if p > 0.5 {
        // 1 - p is exact here (Sterbenz), so the upper half loses nothing.
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

/// Quantile for `p` in `(0, 0.5]`.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Halley refinement against the erfc-based CDF.
    let e = phi(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Parameters of the map volume `q ~ N(mu, sigma^2)` truncated to `[0, inf)`.
///
/// `sigma` is a standard deviation in bits/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGaussParams {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for TruncGaussParams {
    fn default() -> Self {
        Self {
            mu: 800.0,
            sigma: 100.0,
        }
    }
}

impl TruncGaussParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let params = Self { mu, sigma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(domain("truncated Gaussian mean", self.mu));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(domain("truncated Gaussian sigma", self.sigma));
        }
        Ok(())
    }

    /// Probability mass the untruncated Gaussian puts on `[0, inf)`.
    #[inline]
    pub fn retained_mass(&self) -> f64 {
        phi(self.mu / self.sigma)
    }

    /// `P{q > x}` under the truncated law.
    pub fn upper_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        (q_tail((x - self.mu) / self.sigma) / self.retained_mass()).min(1.0)
    }

    /// `P{q <= x}` under the truncated law.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        // Numerator written as a difference of lower-tail masses to stay
        // accurate for x below the mean.
        let z0 = -self.mu / self.sigma;
        let num = phi((x - self.mu) / self.sigma) - phi(z0);
        (num / self.retained_mass()).clamp(0.0, 1.0)
    }
}

/// Density of the truncated map-volume law.
pub fn trunc_pdf(q: f64, params: &TruncGaussParams) -> f64 {
    if q < 0.0 {
        return 0.0;
    }
    let z = (q - params.mu) / params.sigma;
    normal_pdf(z) / (params.sigma * params.retained_mass())
}

/// The `q*` with `P{q > q*} = delta`.
///
/// Evaluated as `mu - sigma * Phi^-1(delta * [1 - Phi(-mu/sigma)])`, the
/// tail-side form of `mu + sigma * Phi^-1(1 - delta * [1 - Phi(-mu/sigma)])`.
pub fn trunc_upper_quantile(delta: f64, params: &TruncGaussParams) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain("delta", delta));
    }
    Ok(upper_quantile_unchecked(delta, params))
}

#[inline]
pub(crate) fn upper_quantile_unchecked(delta: f64, params: &TruncGaussParams) -> f64 {
    params.mu - params.sigma * quantile(delta * params.retained_mass())
}

/// Draws one map volume by rejection from the untruncated Gaussian.
pub fn trunc_sample<R: Rng + ?Sized>(rng: &mut R, params: &TruncGaussParams) -> Result<f64> {
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = rng.sample(StandardNormal);
        let q = params.mu + params.sigma * z;
        if q >= 0.0 {
            return Ok(q);
        }
    }
    Err(Error::SamplerExhausted(MAX_REJECTIONS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Upper-tail mass of N(0,1) by composite Simpson over [a, a + 40].
    fn simpson_upper_tail(a: f64) -> f64 {
        let n = 400_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(a + 40.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Monotone bisection inverse of a CDF-like function.
    fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(phi_cdf(0.0).unwrap(), 0.5);
        let oracle = simpson_upper_tail(8.0);
        // frozen from the integration oracle and a 40-digit reference
        assert!((oracle - 6.220_960_574_271_784e-16).abs() < 1e-22);
        assert!((phi_cdf(-8.0).unwrap() - oracle).abs() < 1e-22);
        let p = phi_cdf(1.959964).unwrap();
        assert!((p - (1.0 - simpson_upper_tail(1.959964))).abs() < 1e-14);
        assert!((p - 0.975_000_000_903_557_6).abs() < 1e-14);
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(phi_cdf(f64::NAN).is_err());
        assert!(phi_cdf(f64::INFINITY).is_err());
        assert!(q_gauss(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(phi_inv(0.5).unwrap(), 0.0);
        let cdf = |x: f64| phi(x);
        let b975 = bisect(cdf, 0.975, -10.0, 10.0);
        assert!((b975 - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((phi_inv(0.975).unwrap() - b975).abs() < 1e-12);
        let b9999 = bisect(cdf, 0.9999, -10.0, 10.0);
        assert!((b9999 - 3.719_016_485_455_68).abs() < 1e-10);
        assert!((phi_inv(0.9999).unwrap() - b9999).abs() < 1e-10);
    }

    #[test]
    fn quantile_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(phi_inv(p).is_err());
            assert!(q_gauss_inv(p).is_err());
        }
    }

    #[test]
    fn q_function_examples() {
        assert_eq!(q_gauss(0.0).unwrap(), 0.5);
        for x in [-3.0, -0.7, 0.2, 1.0, 5.5] {
            assert!((q_gauss(x).unwrap() - (1.0 - phi_cdf(x).unwrap())).abs() <= 1e-16);
        }
        let q = q_gauss(3.71902).unwrap();
        assert!((q - 9.999_860_878_386_914e-5).abs() < 1e-17);
        let x = bisect(|x| -q_tail(x), -1e-4, 0.0, 10.0);
        assert!((q_gauss_inv(1e-4).unwrap() - x).abs() < 1e-10);
        assert!((q_gauss_inv(1e-4).unwrap() - 3.71902).abs() < 1e-4);
        assert_eq!(q_gauss_inv(0.5).unwrap(), 0.0);
        let a = q_gauss_inv(0.3).unwrap();
        let b = q_gauss_inv(0.7).unwrap();
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn tails_sum_to_one_exactly() {
        let mut x = -40.0;
        while x < 40.0 {
            assert_eq!(phi(x) + q_tail(x), 1.0, "x = {x}");
            x += 0.0137;
        }
    }

    #[test]
    fn trunc_pdf_examples() {
        let p = TruncGaussParams::default();
        assert_eq!(trunc_pdf(-1.0, &p), 0.0);
        let at_mean = trunc_pdf(800.0, &p);
        assert!((at_mean - 3.989_422_804_014_329e-3).abs() < 1e-15);
    }

    fn trapezoid_mass(p: &TruncGaussParams) -> f64 {
        let hi = p.mu + 12.0 * p.sigma;
        let n = 200_000;
        let h = hi / n as f64;
        let mut s = 0.5 * (trunc_pdf(0.0, p) + trunc_pdf(hi, p));
        for i in 1..n {
            s += trunc_pdf(i as f64 * h, p);
        }
        s * h
    }

    #[test]
    fn trunc_pdf_normalises() {
        for (mu, sigma) in [(800.0, 100.0), (800.0, 10.0), (50.0, 100.0), (0.0, 30.0)] {
            let p = TruncGaussParams::new(mu, sigma).unwrap();
            let mass = trapezoid_mass(&p);
            assert!((mass - 1.0).abs() < 1e-9, "mu={mu} sigma={sigma} mass={mass}");
        }
    }

    #[test]
    fn trunc_quantile_examples() {
        let p = TruncGaussParams::default();
        let q = trunc_upper_quantile(1e-4, &p).unwrap();
        let oracle = bisect(|x| -p.upper_tail(x), -1e-4, 0.0, 5000.0);
        assert!((q - oracle).abs() < 1e-8);
        assert!((q - 1_171.901_648_545_568).abs() < 1e-8);
        let median = trunc_upper_quantile(0.5, &p).unwrap();
        assert!((median - 800.0).abs() < 1e-9);
        assert!(trunc_upper_quantile(0.0, &p).is_err());
        assert!(trunc_upper_quantile(1.0, &p).is_err());
    }

    #[test]
    fn trunc_quantile_round_trip() {
        for params in [
            TruncGaussParams::default(),
            TruncGaussParams::new(800.0, 10.0).unwrap(),
            TruncGaussParams::new(40.0, 100.0).unwrap(),
        ] {
            for delta in [0.5, 0.05, 1e-3, 1e-4] {
                let q = trunc_upper_quantile(delta, &params).unwrap();
                assert!((params.upper_tail(q) - delta).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sampler_mean_and_tail() {
        let p = TruncGaussParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let q = trunc_sample(&mut rng, &p).unwrap();
            assert!(q >= 0.0);
            sum += q;
        }
        let mean = sum / n as f64;
        assert!((mean - 800.0).abs() < 0.3, "mean {mean}");
    }

    #[test]
    fn sampler_upper_tail_frequency() {
        let p = TruncGaussParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000_000u64;
        let hits = (0..n).filter(|_| trunc_sample(&mut rng, &p).unwrap() > 1171.90).count() as f64;
        let rate = hits / n as f64;
        let se = (1e-4 * (1.0 - 1e-4) / n as f64).sqrt();
        assert!((rate - 1e-4).abs() < 3.0 * se, "rate {rate}");
    }

    #[test]
    fn sampler_matches_cdf_ks() {
        // Heavily truncated case so the rejection path is exercised.
        for params in [TruncGaussParams::default(), TruncGaussParams::new(20.0, 100.0).unwrap()] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let n = 100_000;
            let mut xs: Vec<f64> = (0..n).map(|_| trunc_sample(&mut rng, &params).unwrap()).collect();
            xs.sort_by(f64::total_cmp);
            let mut d: f64 = 0.0;
            for (i, x) in xs.iter().enumerate() {
                let f = params.cdf(*x);
                d = d
                    .max((f - i as f64 / n as f64).abs())
                    .max(((i + 1) as f64 / n as f64 - f).abs());
            }
            let critical = 1.6276 / (n as f64).sqrt();
            assert!(d < critical, "KS {d} >= {critical}");
        }
    }

    #[test]
    fn sampler_gives_up_on_hopeless_support() {
        let p = TruncGaussParams::new(-100.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(trunc_sample(&mut rng, &p), Err(Error::SamplerExhausted(MAX_REJECTIONS)));
    }

    #[test]
    fn invalid_sigma() {
        assert!(TruncGaussParams::new(800.0, 0.0).is_err());
        assert!(TruncGaussParams::new(800.0, -1.0).is_err());
        assert!(TruncGaussParams::new(f64::NAN, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn cdf_monotone(a in -38.0f64..38.0, b in -38.0f64..38.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(phi(lo) <= phi(hi));
        }

        #[test]
        fn quantile_inverts_cdf(e in -10.0f64..-1e-10) {
            let p = 10f64.powf(e);
            proptest::prop_assert!((phi(quantile(p)) - p).abs() <= 1e-12);
            let p = 1.0 - p;
            if p < 1.0 {
                proptest::prop_assert!((phi(quantile(p)) - p).abs() <= 1e-12);
            }
        }
    }
}
