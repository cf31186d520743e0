//! Small numerical kernels shared across modules.

use num_complex::Complex64;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

/// ln(e^a + e^b) without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(e^a - e^b) for a > b.
pub fn ln_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp_m1()).ln()
}

/// exp(x) flushed to an exact zero below e^{-745}.
pub fn exp_flush(x: f64) -> f64 {
    if x < -745.0 {
        0.0
    } else {
        x.exp()
    }
}

/// e^w - 1 for complex w, accurate near zero.
pub fn cexpm1(w: Complex64) -> Complex64 {
    if w.norm() < 0.5 {
        let mut term = w;
        let mut acc = w;
        for n in 2..30 {
            term *= w / n as f64;
            acc += term;
            if term.norm() <= 1e-18 * acc.norm() {
                break;
            }
        }
        acc
    } else {
        w.exp() - 1.0
    }
}

/// Scaled moments J_j(z) = ∫_0^1 s^j e^{-z s} ds for j = 0, 1, 2.
pub fn unit_moments(z: Complex64) -> [Complex64; 3] {
    if z.norm() < 1.0 {
        // Σ_n (-z)^n / (n! (j + n + 1))
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let mut pow = Complex64::new(1.0, 0.0);
        for n in 0..40 {
            for (j, o) in out.iter_mut().enumerate() {
                *o += pow / (j + n + 1) as f64;
            }
            pow *= -z / (n + 1) as f64;
            if pow.norm() < 1e-20 {
                break;
            }
        }
        out
    } else {
        let e = (-z).exp();
        let j0 = -cexpm1(-z) / z;
        let j1 = (j0 - e) / z;
        let j2 = (2.0 * j1 - e) / z;
        [j0, j1, j2]
    }
}

/// ∫_lo^hi (q0 + q1 (τ-lo) + q2 (τ-lo)^2) e^{-w τ} dτ.
pub fn poly_exp_integral(q: [Complex64; 3], w: Complex64, lo: f64, hi: f64) -> Complex64 {
    let len = hi - lo;
    if len <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let shift = w * lo;
    if shift.re > 745.0 {
        return Complex64::new(0.0, 0.0);
    }
    let m = unit_moments(w * len);
    let inner = q[0] * len * m[0] + q[1] * len * len * m[1] + q[2] * len * len * len * m[2];
    inner * (-shift).exp()
}

/// Ordinary least squares y = slope·x + intercept; returns (slope, intercept, r²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let syy = compensated_sum(y.iter().map(|v| (v - my) * (v - my)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        0.0
    };
    (slope, my - slope * mx, r2)
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Exact value of a·b as an unevaluated pair (hi, lo).
pub fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Logarithmically spaced grid with `n` points on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Uniform grid with `n` points on [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_degree_23() {
        let (x, w) = gauss_legendre_unit(12);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(23)).sum();
        assert!((v - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn moments_agree_across_branch_switch() {
        for &z in &[0.999, 1.001] {
            let m = unit_moments(Complex64::new(z, 0.3));
            let n = 200_000;
            let h = 1.0 / n as f64;
            for j in 0..3 {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let t = (i as f64 + 0.5) * h;
                    s += t.powi(j as i32) * (-Complex64::new(z, 0.3) * t).exp() * h;
                }
                assert!((s - m[j]).norm() < 1e-10, "j={j} z={z}");
            }
        }
    }

    #[test]
    fn ln_add_sub_roundtrip() {
        let a = 1000.0;
        let b = 999.0;
        let s = ln_add_exp(a, b);
        assert!((ln_sub_exp(s, b) - a).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (s, c, r2) = linear_fit(&x, &y);
        assert!((s - 3.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
