//! Exact homogeneous solutions of one mode and the amplification scans built on them.
//!
//! Every mode solution is kept as a short sum `Re Σ c·t^m·e^{−z t}` with
//! `m ∈ {0, 1}`. Derivatives of any order and weighted values
//! `λ^β·u^{(n)}(t)` are then evaluated term by term in the log domain, so
//! tiny exponentials times huge weights never overflow or produce NaN.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charpoly::{roots, CharRoots, DampingParams};
use crate::error::{invalid, Error, Result};
use crate::numeric::exp_flush;
use crate::spectrum::{SpectralVector, SpectrumModel};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModeIC {
    pub u0: f64,
    pub u1: f64,
}

impl ModeIC {
    pub fn new(u0: f64, u1: f64) -> Self {
        Self { u0, u1 }
    }
}

/// `coeff · t^power · e^{−rate·t}`, real part taken at the end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpTerm {
    pub coeff: Complex64,
    pub rate: Complex64,
    pub power: u32,
}

impl ExpTerm {
    /// ln|q| and arg q of the n-th derivative prefactor q(t), where the
    /// n-th derivative of the term is Re[q(t) e^{−rate t}].
    fn derivative_prefactor(&self, n: u32, t: f64) -> Option<(f64, f64)> {
        if self.coeff == Complex64::new(0.0, 0.0) {
            return None;
        }
        let mz = -self.rate;
        let (lnz, argz) = (mz.norm().ln(), mz.arg());
        let (mut lnq, mut arg) = (self.coeff.norm().ln(), self.coeff.arg());
        match self.power {
            0 => {
                if n > 0 {
                    if mz.norm() == 0.0 {
                        return None;
                    }
                    lnq += n as f64 * lnz;
                    arg += n as f64 * argz;
                }
            }
            _ => {
                // (−z)^{n−1} (−z t + n)
                let tail = mz * t + n as f64;
                if tail.norm() == 0.0 {
                    return None;
                }
                if n > 0 {
                    if mz.norm() == 0.0 {
                        return None;
                    }
                    lnq += (n - 1) as f64 * lnz;
                    arg += (n - 1) as f64 * argz;
                    lnq += tail.norm().ln();
                    arg += tail.arg();
                } else {
                    if t == 0.0 {
                        return None;
                    }
                    lnq += t.ln();
                }
            }
        }
        Some((lnq, arg))
    }

    /// e^{ln_weight} · (d/dt)^n of the term at t.
    pub fn weighted_derivative(&self, n: u32, t: f64, ln_weight: f64) -> f64 {
        match self.derivative_prefactor(n, t) {
            None => 0.0,
            Some((lnq, arg)) => {
                let ln_mag = lnq - self.rate.re * t + ln_weight;
                let phase = arg - self.rate.im * t;
                exp_flush(ln_mag) * phase.cos()
            }
        }
    }
}

/// A mode solution written as a sum of exponential terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeExpansion {
    pub terms: Vec<ExpTerm>,
}

impl ModeExpansion {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// e^{ln_weight} · u^{(n)}(t).
    pub fn weighted_derivative(&self, n: u32, t: f64, ln_weight: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.weighted_derivative(n, t, ln_weight))
            .sum()
    }

    pub fn derivative(&self, n: u32, t: f64) -> f64 {
        self.weighted_derivative(n, t, 0.0)
    }

    pub fn value(&self, t: f64) -> (f64, f64) {
        (self.derivative(0, t), self.derivative(1, t))
    }

    /// Expansion of the first time derivative.
    pub fn differentiate(&self) -> ModeExpansion {
        let mut terms = Vec::with_capacity(self.terms.len() + 1);
        for term in &self.terms {
            terms.push(ExpTerm {
                coeff: -term.rate * term.coeff,
                ..*term
            });
            if term.power == 1 {
                terms.push(ExpTerm {
                    power: 0,
                    ..*term
                });
            }
        }
        ModeExpansion { terms }
    }
}

/// Free solution of one mode as an exponential expansion.
pub fn homogeneous_expansion(r: &CharRoots, ic: ModeIC) -> ModeExpansion {
    let c = |re: f64| Complex64::new(re, 0.0);
    let ModeIC { u0, u1 } = ic;
    let terms = match *r {
        CharRoots::Real { x1, x2 } => {
            let gap = x1 - x2;
            vec![
                ExpTerm {
                    coeff: c(-(u0 * x2 + u1) / gap),
                    rate: c(x1),
                    power: 0,
                },
                ExpTerm {
                    coeff: c((u0 * x1 + u1) / gap),
                    rate: c(x2),
                    power: 0,
                },
            ]
        }
        CharRoots::Double { r } => vec![
            ExpTerm {
                coeff: c(u0),
                rate: c(r),
                power: 0,
            },
            ExpTerm {
                coeff: c(u1 + r * u0),
                rate: c(r),
                power: 1,
            },
        ],
        CharRoots::Oscillatory { a, b } => vec![ExpTerm {
            coeff: Complex64::new(u0, -(u1 + a * u0) / b),
            rate: Complex64::new(a, -b),
            power: 0,
        }],
    };
    ModeExpansion { terms }
}

fn check_time(t: f64) -> Result<()> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    Ok(())
}

/// (u(t), u'(t)) of the free mode.
pub fn homogeneous_mode(r: &CharRoots, ic: ModeIC, t: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    Ok(homogeneous_expansion(r, ic).value(t))
}

/// n-th time derivative of the free mode.
pub fn homogeneous_derivative(r: &CharRoots, ic: ModeIC, order: u32, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(homogeneous_expansion(r, ic).derivative(order, t))
}

/// Samples of (u, u') for one mode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModeTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub uprime: Vec<f64>,
}

impl ModeTrajectory {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            uprime: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, u: f64, up: f64) {
        self.times.push(t);
        self.u.push(u);
        self.uprime.push(up);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Trajectory of every mode on a common time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTrajectory {
    pub times: Vec<f64>,
    /// `modes[k]` holds mode k.
    pub modes: Vec<ModeTrajectory>,
}

impl SpectralTrajectory {
    /// U(t_i) as a spectral vector.
    pub fn position(&self, i: usize) -> SpectralVector {
        SpectralVector::new(self.modes.iter().map(|m| m.u[i]).collect())
    }

    /// U'(t_i) as a spectral vector.
    pub fn velocity(&self, i: usize) -> SpectralVector {
        SpectralVector::new(self.modes.iter().map(|m| m.uprime[i]).collect())
    }
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(invalid("t_grid", "must be nonempty"));
    }
    for &t in t_grid {
        check_time(t)?;
    }
    Ok(())
}

pub(crate) fn finite_lambda(m: &SpectrumModel) -> Result<()> {
    if m.eigenvalues().iter().any(|l| !l.is_finite()) {
        return Err(invalid("spectrum", "eigenvalues must fit in a double for time stepping"));
    }
    Ok(())
}

pub fn homogeneous_solve(
    m: &SpectrumModel,
    p: &DampingParams,
    u0: &SpectralVector,
    u1: &SpectralVector,
    t_grid: &[f64],
) -> Result<SpectralTrajectory> {
    u0.check(m)?;
    u1.check(m)?;
    check_grid(t_grid)?;
    finite_lambda(m)?;
    let modes = (0..m.len())
        .into_par_iter()
        .map(|k| {
            let exp = homogeneous_expansion(
                &roots(p, m.eigenvalue(k)),
                ModeIC::new(u0.coefficients[k], u1.coefficients[k]),
            );
            let mut tr = ModeTrajectory::with_capacity(t_grid.len());
            for &t in t_grid {
                let (u, up) = exp.value(t);
                tr.push(t, u, up);
            }
            tr
        })
        .collect();
    Ok(SpectralTrajectory {
        times: t_grid.to_vec(),
        modes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapScanConfig {
    pub alpha0: f64,
    pub alpha1: f64,
    pub t_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
}

impl GapScanConfig {
    pub fn gap(&self) -> f64 {
        self.alpha0 - self.alpha1
    }

    /// True when either index is negative (allowed here, flagged for reports).
    pub fn has_negative_index(&self) -> bool {
        self.alpha0 < 0.0 || self.alpha1 < 0.0
    }

    /// Whether 1 − γ ≤ α₀ − α₁ ≤ γ.
    pub fn admissible(&self, p: &DampingParams) -> bool {
        let g = p.gamma();
        let gap = self.gap();
        gap >= 1.0 - g - 1e-12 && gap <= g + 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapRow {
    pub lambda: f64,
    pub amplification: f64,
}

/// Per-λ amplification of the free evolution between D(A^α₀)×D(A^α₁) norms.
pub fn gap_scan(m: &SpectrumModel, p: &DampingParams, cfg: &GapScanConfig) -> Result<Vec<GapRow>> {
    check_grid(&cfg.t_grid)?;
    if cfg.lambda_grid.is_empty() {
        return Err(invalid("lambda_grid", "must be nonempty"));
    }
    for &l in &cfg.lambda_grid {
        if !m.eigenvalues().contains(&l) {
            return Err(invalid("lambda_grid", format!("{l} is not an eigenvalue of the model")));
        }
    }
    Ok(cfg
        .lambda_grid
        .par_iter()
        .map(|&lambda| GapRow {
            lambda,
            amplification: amplification(p, lambda, cfg.alpha0, cfg.alpha1, &cfg.t_grid),
        })
        .collect())
}

fn amplification(p: &DampingParams, lambda: f64, alpha0: f64, alpha1: f64, t_grid: &[f64]) -> f64 {
    let r = roots(p, lambda);
    let ln_l = lambda.ln();
    let mut best: f64 = 0.0;
    for (u0, u1) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
        let exp = homogeneous_expansion(&r, ModeIC::new(u0, u1));
        // normalise by the data norm in the log domain
        let w0 = alpha0 * ln_l;
        let w1 = alpha1 * ln_l;
        let data = u0 * w0.exp() + u1 * w1.exp();
        let ln_data = data.ln();
        for &t in t_grid {
            let a = exp.weighted_derivative(0, t, w0 - ln_data).abs();
            let b = exp.weighted_derivative(1, t, w1 - ln_data).abs();
            best = best.max(a + b);
        }
    }
    best
}

/// sup over the model's eigenvalues of λ^{weight}·|u^{(order)}(t)| where the
/// data run over the basis pair normalised in D(A^{α₀})×D(A^{α₁}).
/// `None` for an index skips that basis datum.
fn weighted_sup(
    m: &SpectrumModel,
    p: &DampingParams,
    alpha0: Option<f64>,
    alpha1: Option<f64>,
    order: u32,
    t: f64,
    weight: f64,
) -> Result<f64> {
    check_time(t)?;
    finite_lambda(m)?;
    let sup = (0..m.len())
        .into_par_iter()
        .map(|k| {
            let (lambda, ln_l) = (m.eigenvalue(k), m.ln_eigenvalue(k));
            let r = roots(p, lambda);
            let mut best: f64 = 0.0;
            if let Some(a0) = alpha0 {
                let exp = homogeneous_expansion(&r, ModeIC::new(1.0, 0.0));
                best = best.max(exp.weighted_derivative(order, t, (weight - a0) * ln_l).abs());
            }
            if let Some(a1) = alpha1 {
                let exp = homogeneous_expansion(&r, ModeIC::new(0.0, 1.0));
                best = best.max(exp.weighted_derivative(order, t, (weight - a1) * ln_l).abs());
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup)
}

/// sup over λ of λ^{α₁−(m−1)γ}·|u^{(m)}(t)| for the velocity datum that is
/// a unit vector of D(A^{α₁}).
pub fn derivative_gap_probe(
    m: &SpectrumModel,
    p: &DampingParams,
    alpha1: f64,
    order: u32,
    t: f64,
) -> Result<f64> {
    if order == 0 {
        return Err(invalid("order", "must be at least 1"));
    }
    let need = (order - 1) as f64 * p.gamma();
    if alpha1 < need - 1e-12 {
        return Err(Error::Precondition(format!(
            "derivative of order {order} needs alpha1 >= {need} (higher-order regularity up to t = 0)"
        )));
    }
    weighted_sup(m, p, None, Some(alpha1), order, t, alpha1 - need)
}

/// sup over λ and both data of λ^{α₀+m(σ−1)}·|u^{(m)}(t)|, data unit in
/// D(A^{α₀})×D(A^{α₁}). Meaningful for σ ≥ 1 and t > 0.
pub fn forward_regularity_probe(
    m: &SpectrumModel,
    p: &DampingParams,
    alpha0: f64,
    alpha1: f64,
    order: u32,
    t: f64,
) -> Result<f64> {
    if p.sigma < 1.0 {
        return Err(Error::Precondition("forward regularity gain needs sigma >= 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Precondition("forward regularity is a statement for t > 0".into()));
    }
    let weight = alpha0 + order as f64 * (p.sigma - 1.0);
    weighted_sup(m, p, Some(alpha0), Some(alpha1), order, t, weight)
}

/// sup over λ and both unit data in H×H of λ^{α}·|u(t)|.
pub fn smoothing_probe(m: &SpectrumModel, p: &DampingParams, alpha: f64, t: f64) -> Result<f64> {
    weighted_sup(m, p, Some(0.0), Some(0.0), 0, t, alpha)
}

/// One component of the overdamped solution: coefficient c(λ) in front of
/// an exponential with rate ~ λ^R, bounded by λ^{−Q}.
#[derive(Clone, Copy, Debug)]
pub struct ComponentRow {
    pub name: &'static str,
    /// Exponent Q of the coefficient bound sup λ^Q |c(λ)| < ∞.
    pub q: f64,
    /// Exponent R of the rate bound, rate ≤ C λ^R.
    pub r: f64,
    pub uses_fast_rate: bool,
    pub coefficient: fn(f64, f64) -> f64,
}

/// The four components v₁, v₂ (position data) and w₁, w₂ (velocity data).
pub fn overdamped_component_table(p: &DampingParams) -> [ComponentRow; 4] {
    let s = p.sigma;
    [
        ComponentRow {
            name: "v1",
            q: 2.0 * s - 1.0,
            r: s,
            uses_fast_rate: true,
            coefficient: |x1, x2| x2 / (x1 - x2),
        },
        ComponentRow {
            name: "v2",
            q: 0.0,
            r: 1.0 - s,
            uses_fast_rate: false,
            coefficient: |x1, x2| x1 / (x1 - x2),
        },
        ComponentRow {
            name: "w1",
            q: s,
            r: s,
            uses_fast_rate: true,
            coefficient: |x1, x2| 1.0 / (x1 - x2),
        },
        ComponentRow {
            name: "w2",
            q: s,
            r: 1.0 - s,
            uses_fast_rate: false,
            coefficient: |x1, x2| 1.0 / (x1 - x2),
        },
    ]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentBound {
    pub name: &'static str,
    /// sup over the real-root modes of λ^Q |c(λ)|.
    pub coefficient_sup: f64,
    /// sup over the real-root modes of rate/λ^R.
    pub rate_sup: f64,
}

/// Evaluates the component table along the real-root modes of `m`.
pub fn component_bounds(m: &SpectrumModel, p: &DampingParams) -> Result<Vec<ComponentBound>> {
    finite_lambda(m)?;
    let modes: Vec<(f64, f64, f64)> = m
        .eigenvalues()
        .iter()
        .filter_map(|&l| match roots(p, l) {
            CharRoots::Real { x1, x2 } => Some((l, x1, x2)),
            _ => None,
        })
        .collect();
    if modes.is_empty() {
        return Err(Error::Precondition("no overdamped modes in the model".into()));
    }
    Ok(overdamped_component_table(p)
        .iter()
        .map(|row| {
            let mut cs: f64 = 0.0;
            let mut rs: f64 = 0.0;
            for &(l, x1, x2) in &modes {
                cs = cs.max(l.powf(row.q) * (row.coefficient)(x1, x2).abs());
                let rate = if row.uses_fast_rate { x1 } else { x2 };
                rs = rs.max(rate / l.powf(row.r));
            }
            ComponentBound {
                name: row.name,
                coefficient_sup: cs,
                rate_sup: rs,
            }
        })
        .collect())
}
