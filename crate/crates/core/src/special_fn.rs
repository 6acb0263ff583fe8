//! Scalar special functions and 1-Fréchet distribution utilities.
//!
//! The half-order lower incomplete gamma function is the only incomplete
//! gamma the CRPS machinery needs; it is evaluated through the identity
//! `γ(1/2, z) = √π · erf(√z)`.

use crate::error::{Error, Result};

/// `√π`, the complete gamma value `Γ(1/2)`.
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Beyond this argument `γ(1/2, z)` equals `√π` to machine precision.
pub const GAMMA_HALF_SATURATION: f64 = 700.0;

/// Error function, accurate to about one ulp on the whole real line.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Lower incomplete gamma function of order one half,
/// `γ(1/2, z) = ∫₀ᶻ t^{-1/2} e^{-t} dt`.
pub fn lower_incomplete_gamma_half(z: f64) -> Result<f64> {
    if z.is_nan() || z < 0.0 {
        return Err(Error::Domain(format!(
            "incomplete gamma argument must be nonnegative, got {z}"
        )));
    }
    Ok(gamma_half_unchecked(z))
}

/// Hot-path variant of [`lower_incomplete_gamma_half`]; `z` must be `>= 0`.
#[inline]
pub(crate) fn gamma_half_unchecked(z: f64) -> f64 {
    if z >= GAMMA_HALF_SATURATION {
        SQRT_PI
    } else {
        SQRT_PI * erf(z.sqrt())
    }
}

/// Modified Bessel function of the second kind `K_ν(x)` for real order.
///
/// Evaluated from `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt`. The integrand
/// is rescaled by its peak at `t* = asinh(ν/x)` so that large orders and tiny
/// arguments do not overflow before the final multiplication.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("bessel_k order must be positive, got {nu}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_k argument must be positive, got {x}")));
    }

    let log_kernel = |t: f64| nu * t - x * t.cosh();
    let peak = (nu / x).asinh();
    let log_peak = log_kernel(peak);

    // Walk right until the kernel is negligible relative to the peak.
    let mut width = 1.0;
    while log_kernel(peak + width) - log_peak > -60.0 {
        width *= 2.0;
    }
    let upper = peak + width;

    let integrand = |t: f64| {
        let scaled = (log_kernel(t) - log_peak).exp();
        0.5 * scaled * (1.0 + (-2.0 * nu * t).exp())
    };
    let left = if peak > 0.0 {
        quad::integrate(&integrand, 0.0, peak, 1e-14)
    } else {
        0.0
    };
    let right = quad::integrate(&integrand, peak, upper, 1e-14);
    Ok(log_peak.exp() * (left + right))
}

/// Gamma function for positive arguments.
#[inline]
pub(crate) fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// 1-Fréchet law `P(X ≤ x) = exp(-scale / x)` on `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetLaw {
    scale: f64,
}

impl FrechetLaw {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("Fréchet scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn standard() -> Self {
        Self { scale: 1.0 }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cdf(&self, x: f64) -> f64 {
        frechet_cdf(self, x)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        frechet_quantile(self, p)
    }
}

pub fn frechet_cdf(law: &FrechetLaw, x: f64) -> f64 {
    if x > 0.0 {
        (-law.scale / x).exp()
    } else {
        0.0
    }
}

pub fn frechet_quantile(law: &FrechetLaw, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    Ok(-law.scale / p.ln())
}

/// `√(π/2)`, the mean of `γ(1/2, V/M)` for `M` Fréchet with scale `V`.
pub const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

pub(crate) const TWO_PI_SQRT: f64 = 2.506_628_274_631_000_5;

pub(crate) mod quad {
    //! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_18,
        0.140_653_259_715_525_92,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_83,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let fc = f(center);
        let mut kronrod = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for (j, &node) in XGK.iter().take(7).enumerate() {
            let dx = half * node;
            let pair = f(center - dx) + f(center + dx);
            kronrod += WGK[j] * pair;
            if j % 2 == 1 {
                gauss += WG[j / 2] * pair;
            }
        }
        (kronrod * half, ((kronrod - gauss) * half).abs())
    }

    /// Integrates `f` over `[a, b]` to roughly `rel_tol` relative accuracy by
    /// repeatedly bisecting the subinterval with the largest error estimate.
    pub(crate) fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
        const MAX_INTERVALS: usize = 4000;
        if a == b {
            return 0.0;
        }
        let (whole, err) = kronrod(f, a, b);
        let mut parts = vec![(a, b, whole, err)];
        let mut total = whole;
        let mut total_err = err;
        while parts.len() < MAX_INTERVALS {
            let tol = (rel_tol * total.abs()).max(50.0 * f64::EPSILON * total.abs());
            if total_err <= tol {
                break;
            }
            let worst = (0..parts.len()).max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3)).unwrap();
            let (lo, hi, v, e) = parts.swap_remove(worst);
            let mid = 0.5 * (lo + hi);
            let (l, el) = kronrod(f, lo, mid);
            let (r, er) = kronrod(f, mid, hi);
            total += l + r - v;
            total_err += el + er - e;
            parts.push((lo, mid, l, el));
            parts.push((mid, hi, r, er));
        }
        // re-sum to shed the drift of the running updates
        parts.sort_by(|p, q| p.0.total_cmp(&q.0));
        parts.iter().map(|p| p.2).sum()
    }

    #[cfg(test)]
    mod tests {
        #[test]
        fn polynomial_is_exact() {
            let v = super::integrate(&|x: f64| x.powi(5) - 3.0 * x, 0.0, 2.0, 1e-14);
            assert!((v - (64.0 / 6.0 - 6.0)).abs() < 1e-13);
        }

        #[test]
        fn gaussian_mass() {
            let v = super::integrate(&|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-14);
            assert!((v - super::super::SQRT_PI).abs() < 1e-13);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn gamma_half_endpoints() {
        assert_eq!(lower_incomplete_gamma_half(0.0).unwrap(), 0.0);
        assert_eq!(lower_incomplete_gamma_half(700.0).unwrap(), SQRT_PI);
        assert_eq!(lower_incomplete_gamma_half(f64::INFINITY).unwrap(), SQRT_PI);
        assert!((lower_incomplete_gamma_half(1.0).unwrap() - 1.493_648_265_6).abs() < 1e-10);
    }

    #[test]
    fn gamma_half_rejects_bad_input() {
        assert!(lower_incomplete_gamma_half(-1e-9).is_err());
        assert!(lower_incomplete_gamma_half(f64::NAN).is_err());
        assert!(lower_incomplete_gamma_half(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn gamma_half_is_monotone_and_bounded() {
        let mut prev = 0.0;
        for k in 0..4000 {
            let z = 1e-6 * 1.005f64.powi(k);
            let g = lower_incomplete_gamma_half(z).unwrap();
            assert!(g >= prev && g <= SQRT_PI);
            prev = g;
        }
    }

    #[test]
    fn erf_values() {
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(-0.7), -erf(0.7));
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert_eq!(erf(f64::INFINITY), 1.0);
    }

    #[test]
    fn bessel_half_integer_closed_form() {
        assert_relative_eq!(bessel_k(0.5, 1.0).unwrap(), 0.461_068_504_4, max_relative = 1e-9);
        assert_relative_eq!(bessel_k(0.5, 2.0).unwrap(), 0.119_937_772_0, max_relative = 1e-9);
        for &x in &[0.01, 0.1, 0.5, 3.0, 10.0, 42.0, 100.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert_relative_eq!(bessel_k(0.5, x).unwrap(), exact, max_relative = 1e-10);
        }
        // K_{3/2}(x) = √(π/2x) e^{-x} (1 + 1/x)
        for &x in &[1e-5, 0.3, 7.0, 500.0] {
            let exact = (PI / (2.0 * x)).sqrt() * (-x).exp() * (1.0 + 1.0 / x);
            assert_relative_eq!(bessel_k(1.5, x).unwrap(), exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn bessel_order_one_and_recurrence() {
        assert_relative_eq!(bessel_k(1.0, 1.0).unwrap(), 0.601_907_230_197_234_6, max_relative = 1e-9);
        // K_{ν+1}(x) = K_{ν-1}(x) + (2ν/x) K_ν(x)
        for &(nu, x) in &[(2.3, 0.7), (7.0, 3.0), (15.5, 1e-3), (19.0, 900.0)] {
            let lhs = bessel_k(nu + 1.0, x).unwrap();
            let rhs = bessel_k(nu - 1.0, x).unwrap() + 2.0 * nu / x * bessel_k(nu, x).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
        }
    }

    #[test]
    fn bessel_domain() {
        assert!(bessel_k(0.0, 1.0).is_err());
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(-1.0, 1.0).is_err());
    }

    #[test]
    fn frechet_cdf_and_quantile() {
        let unit = FrechetLaw::new(1.0).unwrap();
        assert!((unit.cdf(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(FrechetLaw::new(2.0).unwrap().cdf(0.0), 0.0);
        assert_eq!(FrechetLaw::new(2.0).unwrap().cdf(-3.0), 0.0);
        assert!((FrechetLaw::new(5.0).unwrap().cdf(5.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((unit.quantile((-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        let three = FrechetLaw::new(3.0).unwrap();
        assert!((three.quantile((-3.0f64).exp()).unwrap() - 1.0).abs() < 1e-14);
        assert!((unit.quantile(0.5).unwrap() - std::f64::consts::LOG2_E).abs() < 1e-14);
        assert!(unit.quantile(0.0).is_err());
        assert!(unit.quantile(1.0).is_err());
        assert!(FrechetLaw::new(0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantile_inverts_cdf(scale in 0.01f64..100.0, ratio in 1e-4f64..500.0) {
                let x = scale / ratio;
                let law = FrechetLaw::new(scale).unwrap();
                let back = law.quantile(law.cdf(x)).unwrap();
                prop_assert!((back - x).abs() <= 1e-10 * x);
            }

            #[test]
            fn gamma_half_matches_erf_identity(z in 0.0f64..800.0) {
                let g = lower_incomplete_gamma_half(z).unwrap();
                prop_assert!((g - SQRT_PI * erf(z.sqrt())).abs() <= 1e-12);
            }
        }
    }
}
