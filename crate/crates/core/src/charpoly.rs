//! Roots of x² + 2δλ^σ x + λ and their regimes.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::numeric::two_product;

/// Relative width of the band in which the discriminant counts as zero.
pub const DOUBLE_ROOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DampingParams {
    pub sigma: f64,
    pub delta: f64,
}

impl DampingParams {
    pub fn new(sigma: f64, delta: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma", "must be finite and >= 0"));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(invalid("delta", "must be finite and > 0"));
        }
        Ok(Self { sigma, delta })
    }

    /// max(1/2, σ): width of the admissible phase-space gap.
    pub fn gamma(&self) -> f64 {
        self.sigma.max(0.5)
    }

    /// δλ^σ, half the friction coefficient of one mode.
    pub fn half_friction(&self, lambda: f64) -> f64 {
        self.delta * lambda.powf(self.sigma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    OscillatoryPair,
    DoubleRoot,
    RealPair,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::OscillatoryPair => "oscillatory",
            Regime::DoubleRoot => "double",
            Regime::RealPair => "real",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Roots of one mode. Real roots are stored as their negatives: the
/// characteristic roots are −x1, −x2, −r or −a ± ib.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CharRoots {
    Oscillatory { a: f64, b: f64 },
    Double { r: f64 },
    Real { x1: f64, x2: f64 },
}

impl CharRoots {
    pub fn regime(&self) -> Regime {
        match self {
            CharRoots::Oscillatory { .. } => Regime::OscillatoryPair,
            CharRoots::Double { .. } => Regime::DoubleRoot,
            CharRoots::Real { .. } => Regime::RealPair,
        }
    }

    /// Decay rate of the slowest component: x2, r or a.
    pub fn slow_rate(&self) -> f64 {
        match *self {
            CharRoots::Oscillatory { a, .. } => a,
            CharRoots::Double { r } => r,
            CharRoots::Real { x2, .. } => x2,
        }
    }

    /// Decay rate of the fastest component: x1, r or a.
    pub fn fast_rate(&self) -> f64 {
        match *self {
            CharRoots::Oscillatory { a, .. } => a,
            CharRoots::Double { r } => r,
            CharRoots::Real { x1, .. } => x1,
        }
    }

    /// The eigenvalue implied by the roots (product of the roots).
    pub fn lambda(&self) -> f64 {
        match *self {
            CharRoots::Oscillatory { a, b } => a * a + b * b,
            CharRoots::Double { r } => r * r,
            CharRoots::Real { x1, x2 } => x1 * x2,
        }
    }

    /// (first, second) as reported in the `roots` CSV: (x1, x2), (r, r) or (a, b).
    pub fn columns(&self) -> (f64, f64) {
        match *self {
            CharRoots::Oscillatory { a, b } => (a, b),
            CharRoots::Double { r } => (r, r),
            CharRoots::Real { x1, x2 } => (x1, x2),
        }
    }
}

/// δ²λ^{2σ} − λ.
pub fn discriminant(p: &DampingParams, lambda: f64) -> f64 {
    let f = p.half_friction(lambda);
    let (hi, lo) = two_product(f, f);
    (hi - lambda) + lo
}

pub fn classify(p: &DampingParams, lambda: f64) -> Regime {
    let d = discriminant(p, lambda);
    if d.abs() <= DOUBLE_ROOT_TOL * lambda.max(1.0) {
        Regime::DoubleRoot
    } else if d < 0.0 {
        Regime::OscillatoryPair
    } else {
        Regime::RealPair
    }
}

pub fn roots(p: &DampingParams, lambda: f64) -> CharRoots {
    let f = p.half_friction(lambda);
    let d = discriminant(p, lambda);
    match classify(p, lambda) {
        Regime::DoubleRoot => CharRoots::Double { r: lambda.sqrt() },
        Regime::OscillatoryPair => CharRoots::Oscillatory { a: f, b: (-d).sqrt() },
        Regime::RealPair => {
            let x1 = f + d.sqrt();
            // one Newton step on the exact residual lands on the nearest double
            let x1 = x1 - residual(p, lambda, x1) / (2.0 * (x1 - f));
            CharRoots::Real { x1, x2: lambda / x1 }
        }
    }
}

/// Exact residual p(−x) = x² − 2δλ^σ x + λ of a double `x`, evaluated with
/// error-free products so that rounding in the evaluation does not mask it.
pub fn residual(p: &DampingParams, lambda: f64, x: f64) -> f64 {
    let f = p.half_friction(lambda);
    let (a, a_lo) = two_product(x, x);
    let (b, b_lo) = two_product(2.0 * f, x);
    crate::numeric::compensated_sum([a, -b, lambda, a_lo, -b_lo])
}

/// Scale-aware residual: |p(−x)| / (x² + 2δλ^σ|x| + λ).
pub fn backward_error(p: &DampingParams, lambda: f64, x: f64) -> f64 {
    let f = p.half_friction(lambda);
    residual(p, lambda, x).abs() / (x * x + 2.0 * f * x.abs() + lambda)
}

/// Which limit family to evaluate in [`asymptotic_ratios`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioFamily {
    /// x1/λ^σ and λ^{1−σ}/x2.
    Overdamped,
    /// b/λ^{1/2}.
    Underdamped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticRatios {
    pub x1_over_lambda_sigma: Option<f64>,
    pub lambda_1ms_over_x2: Option<f64>,
    pub b_over_sqrt_lambda: Option<f64>,
}

pub fn asymptotic_ratios(p: &DampingParams, lambda: f64, family: RatioFamily) -> Result<AsymptoticRatios> {
    let r = roots(p, lambda);
    match (family, r) {
        (RatioFamily::Overdamped, CharRoots::Real { x1, x2 }) => Ok(AsymptoticRatios {
            x1_over_lambda_sigma: Some(x1 / lambda.powf(p.sigma)),
            lambda_1ms_over_x2: Some(lambda.powf(1.0 - p.sigma) / x2),
            b_over_sqrt_lambda: None,
        }),
        (RatioFamily::Overdamped, CharRoots::Double { r }) => Ok(AsymptoticRatios {
            x1_over_lambda_sigma: Some(r / lambda.powf(p.sigma)),
            lambda_1ms_over_x2: Some(lambda.powf(1.0 - p.sigma) / r),
            b_over_sqrt_lambda: None,
        }),
        (RatioFamily::Underdamped, CharRoots::Oscillatory { b, .. }) => Ok(AsymptoticRatios {
            x1_over_lambda_sigma: None,
            lambda_1ms_over_x2: None,
            b_over_sqrt_lambda: Some(b / lambda.sqrt()),
        }),
        (RatioFamily::Overdamped, other) => Err(Error::RegimeMismatch {
            expected: "real",
            found: other.regime(),
        }),
        (RatioFamily::Underdamped, other) => Err(Error::RegimeMismatch {
            expected: "oscillatory",
            found: other.regime(),
        }),
    }
}

/// Distinct real roots held as logarithms, for eigenvalues beyond the double range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRealRoots {
    pub ln_lambda: f64,
    pub ln_x1: f64,
    pub ln_x2: f64,
}

impl LogRealRoots {
    /// x2/x1.
    pub fn ratio(&self) -> f64 {
        (self.ln_x2 - self.ln_x1).exp()
    }

    /// ln(x1 − x2).
    pub fn ln_gap(&self) -> f64 {
        self.ln_x1 + (-self.ratio()).ln_1p()
    }

    /// Plain roots when both fit in a double.
    pub fn to_roots(&self) -> Option<CharRoots> {
        let x1 = self.ln_x1.exp();
        let x2 = self.ln_x2.exp();
        (x1.is_finite() && x2 > 0.0).then_some(CharRoots::Real { x1, x2 })
    }
}

/// Real roots from ln λ; `None` unless the mode is strictly overdamped.
pub fn log_real_roots(p: &DampingParams, ln_lambda: f64) -> Option<LogRealRoots> {
    // x1 = δλ^σ (1 + sqrt(1 − q)), q = λ^{1−2σ}/δ²
    let ln_f = p.delta.ln() + p.sigma * ln_lambda;
    let ln_q = (1.0 - 2.0 * p.sigma) * ln_lambda - 2.0 * p.delta.ln();
    if ln_q >= -DOUBLE_ROOT_TOL {
        return None;
    }
    let q = ln_q.exp();
    let ln_x1 = ln_f + (1.0 + (1.0 - q).sqrt()).ln();
    Some(LogRealRoots {
        ln_lambda,
        ln_x1,
        ln_x2: ln_lambda - ln_x1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(s: f64, d: f64) -> DampingParams {
        DampingParams::new(s, d).unwrap()
    }

    #[test]
    fn fast_root_is_the_best_double() {
        for (s, d, l) in [(1.5, 2.0, 1e3), (1.0, 0.5, 1e8), (2.0, 1.0, 1e4), (0.75, 1.0, 1e6)] {
            let p = pp(s, d);
            let CharRoots::Real { x1, .. } = roots(&p, l) else { panic!() };
            let r = residual(&p, l, x1).abs();
            for y in [x1.next_down(), x1.next_up()] {
                assert!(r <= residual(&p, l, y).abs(), "({s},{d},{l})");
            }
        }
        // only the nearest double reaches 1e-9·λ here
        let p = pp(1.5, 2.0);
        let CharRoots::Real { x1, x2 } = roots(&p, 1e3) else { panic!() };
        assert!(residual(&p, 1e3, x1).abs() <= 1e-9 * 1e3);
        assert!(residual(&p, 1e3, x2).abs() <= 1e-9 * 1e3);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&pp(0.5, 1.0), 9.0), Regime::DoubleRoot);
        assert_eq!(classify(&pp(0.25, 1.0), 100.0), Regime::OscillatoryPair);
        assert_eq!(classify(&pp(1.0, 1.0), 1.0), Regime::DoubleRoot);
    }

    #[test]
    fn roots_examples() {
        match roots(&pp(1.0, 1.0), 4.0) {
            CharRoots::Real { x1, x2 } => {
                assert!((x1 - (4.0 + 2.0 * 3f64.sqrt())).abs() < 1e-12);
                assert!((x2 - (4.0 - 2.0 * 3f64.sqrt())).abs() < 1e-12);
                assert!((x1 - 7.464102).abs() < 1e-6 && (x2 - 0.535898).abs() < 1e-6);
            }
            r => panic!("{r:?}"),
        }
        assert_eq!(roots(&pp(0.5, 1.0), 9.0), CharRoots::Double { r: 3.0 });
        match roots(&pp(0.0, 0.5), 1.0) {
            CharRoots::Oscillatory { a, b } => {
                assert_eq!(a, 0.5);
                assert!((b - 3f64.sqrt() / 2.0).abs() < 1e-15);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn ratio_examples() {
        let r = asymptotic_ratios(&pp(1.0, 1.0), 1e10, RatioFamily::Overdamped).unwrap();
        assert!((r.x1_over_lambda_sigma.unwrap() / 2.0 - 1.0).abs() < 1e-9);
        let r = asymptotic_ratios(&pp(0.25, 1.0), 1e10, RatioFamily::Underdamped).unwrap();
        assert!((r.b_over_sqrt_lambda.unwrap() - 1.0).abs() < 1e-4);
        for lambda in [2.0, 17.0, 1e6] {
            let r = asymptotic_ratios(&pp(0.5, 2.0), lambda, RatioFamily::Overdamped).unwrap();
            assert!((r.x1_over_lambda_sigma.unwrap() - (2.0 + 3f64.sqrt())).abs() < 1e-12);
        }
        let e = asymptotic_ratios(&pp(0.25, 1.0), 1e10, RatioFamily::Overdamped).unwrap_err();
        assert!(matches!(e, Error::RegimeMismatch { expected: "real", .. }));
    }

    #[test]
    fn product_identity_keeps_slow_root_accurate() {
        // naive f − sqrt(D) loses every digit here
        let p = pp(2.0, 1.0);
        let lambda = 1e8;
        if let CharRoots::Real { x1, x2 } = roots(&p, lambda) {
            let naive = p.half_friction(lambda) - discriminant(&p, lambda).sqrt();
            assert!((x2 * 2.0 * lambda - 1.0).abs() < 1e-12);
            assert!((naive * 2.0 * lambda - 1.0).abs() > 1e-3);
            assert_eq!(x1 * x2, lambda);
        } else {
            panic!();
        }
    }

    #[test]
    fn log_roots_match_direct() {
        let p = pp(2.0, 1.0);
        for lambda in [3.0, 1e3, 1e9] {
            let lr = log_real_roots(&p, f64::ln(lambda)).unwrap();
            if let CharRoots::Real { x1, x2 } = roots(&p, lambda) {
                assert!((lr.ln_x1 - x1.ln()).abs() < 1e-12);
                assert!((lr.ln_x2 - x2.ln()).abs() < 1e-12);
            }
        }
        assert!(log_real_roots(&p, 0.0).is_none());
    }
}
