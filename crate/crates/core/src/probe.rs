//! Regularity and boundedness diagnostics on truncated spectra.
//!
//! Membership in D(A^α) is read off weighted partial sums across truncation
//! levels; growth in time is classified by least-squares fits of norm
//! histories.

use rayon::prelude::*;

use crate::charpoly::DampingParams;
use crate::duhamel::{forced_solve, ForcingSpec};
use crate::error::{invalid, Error, Result};
use crate::numeric::{linear_fit, CompensatedSum};
use crate::propagator::SpectralTrajectory;
use crate::spectrum::{weighted_norm, SpectrumModel};

/// Thresholds used by [`membership_diagnosis`] and [`fit_growth`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeThresholds {
    /// Tail increment ratio at or below which a series counts as convergent.
    pub convergence_ratio: f64,
    pub min_levels: usize,
    pub min_r2: f64,
    pub min_exponent: f64,
    /// max/median of a norm history at or below which it counts as bounded.
    pub bounded_spread: f64,
}

impl Default for ProbeThresholds {
    fn default() -> Self {
        Self {
            convergence_ratio: 0.9,
            min_levels: 8,
            min_r2: 0.99,
            min_exponent: 0.05,
            bounded_spread: 1.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Membership {
    Converged,
    /// Slope of ln(increment) per truncation level.
    Diverging { rate: f64 },
    Inconclusive,
}

impl Membership {
    pub fn name(&self) -> &'static str {
        match self {
            Membership::Converged => "converged",
            Membership::Diverging { .. } => "diverging",
            Membership::Inconclusive => "inconclusive",
        }
    }
}

/// Truncation levels ending at `k`, spaced by a factor √2, ascending.
pub fn truncation_levels(k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut x = k as f64;
    while x >= 1.0 {
        let v = x.round() as usize;
        if out.last() != Some(&v) {
            out.push(v);
        }
        x /= std::f64::consts::SQRT_2;
    }
    if out.last() != Some(&1) && k >= 1 {
        out.push(1);
    }
    out.reverse();
    out.dedup();
    out
}

/// Σ_{k<K} λ_k^{2α} c_k² for every K in `levels`.
pub fn weighted_partial_sums(coeffs: &[f64], alpha: f64, m: &SpectrumModel, levels: &[usize]) -> Result<Vec<f64>> {
    if coeffs.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: coeffs.len(),
        });
    }
    if levels.iter().any(|&l| l > m.len()) {
        return Err(invalid("levels", "exceed the number of modes"));
    }
    Ok(levels
        .iter()
        .map(|&l| weighted_norm(&coeffs[..l], alpha, &m.eigenvalues()[..l], &m.ln_eigenvalues()[..l]).powi(2))
        .collect())
}

/// Classifies a sequence of partial sums taken at increasing truncation levels.
pub fn membership_diagnosis(partial_sums: &[f64], th: &ProbeThresholds) -> Result<Membership> {
    if partial_sums.len() < th.min_levels {
        return Err(invalid(
            "partial_sums",
            format!("need at least {} truncation levels", th.min_levels),
        ));
    }
    if partial_sums.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(invalid("partial_sums", "must be finite and nonnegative"));
    }
    let mut inc = vec![partial_sums[0]];
    inc.extend(partial_sums.windows(2).map(|w| (w[1] - w[0]).max(0.0)));
    let scale = partial_sums.last().copied().unwrap_or(0.0);
    if inc.iter().all(|d| *d <= 1e-300) {
        return Ok(Membership::Converged);
    }
    let n = inc.len();
    // increments below round-off of the total count as zero
    let floor = 1e-14 * scale;
    let tail = &inc[n - (n / 4).max(3)..];
    let converging = tail.windows(2).all(|w| {
        if w[0] <= floor {
            w[1] <= floor
        } else {
            w[1] <= th.convergence_ratio * w[0] || w[1] <= floor
        }
    });
    if converging {
        return Ok(Membership::Converged);
    }
    let quarter = &inc[n - (n / 4).max(2)..];
    let diverging = quarter.iter().all(|d| *d > floor) && quarter.windows(2).all(|w| w[1] >= w[0]);
    if diverging {
        let xs: Vec<f64> = (n / 2..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = inc[n / 2..].iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
        return Ok(Membership::Diverging {
            rate: linear_fit(&xs, &ys).0,
        });
    }
    Ok(Membership::Inconclusive)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GrowthFit {
    PowerLaw { exponent: f64, r2: f64 },
    Logarithmic { slope: f64, r2: f64 },
    Bounded { spread: f64 },
    Inconclusive { r2_power: f64, r2_log: f64 },
}

impl GrowthFit {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthFit::PowerLaw { .. } => "power_law",
            GrowthFit::Logarithmic { .. } => "logarithmic",
            GrowthFit::Bounded { .. } => "bounded",
            GrowthFit::Inconclusive { .. } => "inconclusive",
        }
    }

    /// Fitted exponent for power laws, NaN otherwise.
    pub fn exponent(&self) -> f64 {
        match self {
            GrowthFit::PowerLaw { exponent, .. } => *exponent,
            _ => f64::NAN,
        }
    }
}

/// Power law, then logarithmic, then bounded, in that order of precedence.
pub fn fit_growth(times: &[f64], norms: &[f64], th: &ProbeThresholds) -> Result<GrowthFit> {
    if times.len() != norms.len() || times.len() < 3 {
        return Err(invalid("norms", "need matching series of at least three samples"));
    }
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(0.0, f64::max);
    if !(lo > 0.0) || hi / lo < 1e3 * (1.0 - 1e-12) {
        return Err(invalid("times", "must be positive and span at least three decades"));
    }
    if norms.iter().any(|n| !(*n > 0.0) || !n.is_finite()) {
        return Err(invalid("norms", "must be positive and finite"));
    }
    let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ln: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    let (p, _, r2p) = linear_fit(&lt, &ln);
    if r2p >= th.min_r2 && p >= th.min_exponent {
        return Ok(GrowthFit::PowerLaw { exponent: p, r2: r2p });
    }
    let l1: Vec<f64> = times.iter().map(|t| t.ln_1p()).collect();
    let (s, _, r2l) = linear_fit(&l1, norms);
    if r2l >= th.min_r2 && s > 0.0 {
        return Ok(GrowthFit::Logarithmic { slope: s, r2: r2l });
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let spread = sorted[sorted.len() - 1] / median;
    if spread <= th.bounded_spread {
        return Ok(GrowthFit::Bounded { spread });
    }
    Ok(GrowthFit::Inconclusive {
        r2_power: r2p,
        r2_log: r2l,
    })
}

/// Running maximum.
pub fn running_sup(xs: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    xs.iter()
        .map(|&x| {
            m = m.max(x);
            m
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Position,
    Velocity,
}

impl Component {
    pub fn name(&self) -> &'static str {
        match self {
            Component::Position => "u",
            Component::Velocity => "uprime",
        }
    }
}

/// Norm histories and verdicts over an α-grid for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub component: Component,
    pub alpha_grid: Vec<f64>,
    pub times: Vec<f64>,
    /// `norms[i][j]`: time i, index j.
    pub norms: Vec<Vec<f64>>,
    /// Partial-sum verdict at the final time, per α.
    pub divergence_flags: Vec<Membership>,
    /// Fit of the running sup of the norm, per α.
    pub fitted_growth: Vec<GrowthFit>,
}

/// Builds a report from a trajectory.
pub fn probe_trajectory(
    tr: &SpectralTrajectory,
    m: &SpectrumModel,
    component: Component,
    alpha_grid: &[f64],
    th: &ProbeThresholds,
) -> Result<ProbeReport> {
    if tr.modes.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: tr.modes.len(),
        });
    }
    let pick = |i: usize| match component {
        Component::Position => tr.position(i).coefficients,
        Component::Velocity => tr.velocity(i).coefficients,
    };
    let norms: Vec<Vec<f64>> = (0..tr.times.len())
        .into_par_iter()
        .map(|i| {
            let c = pick(i);
            alpha_grid
                .iter()
                .map(|&a| weighted_norm(&c, a, m.eigenvalues(), m.ln_eigenvalues()))
                .collect()
        })
        .collect();
    let last = pick(tr.times.len() - 1);
    let levels = truncation_levels(m.len());
    let mut flags = Vec::with_capacity(alpha_grid.len());
    let mut fits = Vec::with_capacity(alpha_grid.len());
    for (j, &a) in alpha_grid.iter().enumerate() {
        flags.push(if levels.len() >= th.min_levels {
            membership_diagnosis(&weighted_partial_sums(&last, a, m, &levels)?, th)?
        } else {
            Membership::Inconclusive
        });
        let hist: Vec<f64> = norms.iter().map(|row| row[j]).collect();
        let sup = running_sup(&hist);
        let positive: Vec<(f64, f64)> = tr
            .times
            .iter()
            .copied()
            .zip(sup)
            .filter(|(t, n)| *t > 0.0 && *n > 0.0)
            .collect();
        let (ts, ns): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        fits.push(fit_growth(&ts, &ns, th).unwrap_or(GrowthFit::Inconclusive {
            r2_power: f64::NAN,
            r2_log: f64::NAN,
        }));
    }
    Ok(ProbeReport {
        component,
        alpha_grid: alpha_grid.to_vec(),
        times: tr.times.clone(),
        norms,
        divergence_flags: flags,
        fitted_growth: fits,
    })
}

/// Solves from rest under `forcing` and classifies the sup-in-time growth of
/// each component norm over the α-grid.
pub fn boundedness_scan(
    m: &SpectrumModel,
    p: &DampingParams,
    forcing: &ForcingSpec,
    alpha_grid: &[f64],
    times: &[f64],
    th: &ProbeThresholds,
) -> Result<(ProbeReport, ProbeReport)> {
    let tr = forced_solve(m, p, forcing, times)?;
    Ok((
        probe_trajectory(&tr, m, Component::Position, alpha_grid, th)?,
        probe_trajectory(&tr, m, Component::Velocity, alpha_grid, th)?,
    ))
}

/// Cumulative integral of samples on a nonuniform grid through local
/// quadratics; returns (integral at each node, estimate of the total error
/// from the gap to the trapezoid rule).
pub fn cumulative_integral(times: &[f64], values: &[f64]) -> (Vec<f64>, f64) {
    let n = times.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return (out, 0.0);
    }
    let mut acc = CompensatedSum::new();
    let mut err = 0.0;
    for i in 0..n - 1 {
        let h = times[i + 1] - times[i];
        let trap = 0.5 * h * (values[i] + values[i + 1]);
        let quad = if n < 3 || h == 0.0 {
            trap
        } else if i + 2 < n {
            let (h0, h1) = (h, times[i + 2] - times[i + 1]);
            if h1 == 0.0 {
                trap
            } else {
                h0 * (2.0 * h0 + 3.0 * h1) / (6.0 * (h0 + h1)) * values[i]
                    + h0 * (h0 + 3.0 * h1) / (6.0 * h1) * values[i + 1]
                    - h0.powi(3) / (6.0 * h1 * (h0 + h1)) * values[i + 2]
            }
        } else {
            let (h0, h1) = (times[i] - times[i - 1], h);
            if h0 == 0.0 {
                trap
            } else {
                h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1)) * values[i + 1]
                    + h1 * (h1 + 3.0 * h0) / (6.0 * h0) * values[i]
                    - h1.powi(3) / (6.0 * h0 * (h0 + h1)) * values[i - 1]
            }
        };
        // a quadratic through a kink can flip the sign of a one-signed integrand
        let (a, b) = (values[i], values[i + 1]);
        let quad = if (a >= 0.0 && b >= 0.0 && quad < 0.0) || (a <= 0.0 && b <= 0.0 && quad > 0.0) {
            trap
        } else {
            quad
        };
        err += (quad - trap).abs();
        acc.add(quad);
        out[i + 1] = acc.value();
    }
    (out, err)
}

/// Energy bookkeeping along a trajectory started from rest.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// |A^{σ/2}u'|² + |A^{(σ+1)/2}u|².
    pub energy: Vec<f64>,
    /// 3δ∫_0^t |A^σ u'|².
    pub dissipation_integral: Vec<f64>,
    /// (1/δ)∫_0^t |f|².
    pub source_integral: Vec<f64>,
    /// source − energy − dissipation at each time.
    pub margin: Vec<f64>,
    pub min_margin: f64,
    pub quadrature_error: f64,
}

pub fn energy_check(
    tr: &SpectralTrajectory,
    m: &SpectrumModel,
    f: &ForcingSpec,
    p: &DampingParams,
) -> Result<EnergyLedger> {
    if tr.modes.len() != m.len() || f.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: tr.modes.len().min(f.len()),
        });
    }
    let s = p.sigma;
    let (eig, ln_eig) = (m.eigenvalues(), m.ln_eigenvalues());
    let n = tr.times.len();
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let u = tr.position(i).coefficients;
            let v = tr.velocity(i).coefficients;
            let e = weighted_norm(&v, 0.5 * s, eig, ln_eig).powi(2) + weighted_norm(&u, 0.5 * (s + 1.0), eig, ln_eig).powi(2);
            let d = weighted_norm(&v, s, eig, ln_eig).powi(2);
            let fs = f.norm_at(tr.times[i]).powi(2);
            (e, d, fs)
        })
        .collect();
    let energy: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (dis, e1) = cumulative_integral(&tr.times, &rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let (src, e2) = cumulative_integral(&tr.times, &rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let dis: Vec<f64> = dis.iter().map(|x| 3.0 * p.delta * x).collect();
    let src: Vec<f64> = src.iter().map(|x| x / p.delta).collect();
    let margin: Vec<f64> = (0..n).map(|i| src[i] - energy[i] - dis[i]).collect();
    let min_margin = margin.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(EnergyLedger {
        times: tr.times.clone(),
        energy,
        dissipation_integral: dis,
        source_integral: src,
        margin,
        min_margin,
        quadrature_error: 3.0 * p.delta * e1 + e2 / p.delta,
    })
}

/// ∫_0^T ‖u'‖²_{D(A^σ)} and ∫_0^T ‖u‖²_{D(A^β)} for one truncation.
pub fn l2_integrals(tr: &SpectralTrajectory, m: &SpectrumModel, sigma: f64, beta: f64) -> (f64, f64) {
    let (eig, ln_eig) = (m.eigenvalues(), m.ln_eigenvalues());
    let n = tr.times.len();
    let vp: Vec<f64> = (0..n)
        .map(|i| weighted_norm(&tr.velocity(i).coefficients, sigma, eig, ln_eig).powi(2))
        .collect();
    let vu: Vec<f64> = (0..n)
        .map(|i| weighted_norm(&tr.position(i).coefficients, beta, eig, ln_eig).powi(2))
        .collect();
    (
        *cumulative_integral(&tr.times, &vp).0.last().unwrap(),
        *cumulative_integral(&tr.times, &vu).0.last().unwrap(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct L2Report {
    pub truncations: Vec<usize>,
    /// Index used for the position integral.
    pub beta: f64,
    pub velocity_integrals: Vec<f64>,
    pub position_integrals: Vec<f64>,
    /// Largest relative change between consecutive truncations.
    pub velocity_change: f64,
    pub position_change: f64,
    pub velocity_stable: bool,
    pub position_stable: bool,
}

/// Checks that the L² time integrals settle as the truncation grows.
/// `setup(K)` returns the model and forcing for K modes. The position
/// integral uses β = min(σ + 1/2, 1) unless `beta` overrides it; values of
/// β above 1 are only covered for σ ≤ 1.
pub fn l2_regularity_check<F>(
    p: &DampingParams,
    truncations: &[usize],
    times: &[f64],
    beta: Option<f64>,
    rel_tol: f64,
    setup: F,
) -> Result<L2Report>
where
    F: Fn(usize) -> Result<(SpectrumModel, ForcingSpec)>,
{
    let beta = beta.unwrap_or((p.sigma + 0.5).min(1.0));
    if p.sigma > 1.0 && beta > 1.0 {
        return Err(Error::Precondition(
            "position integral above D(A) is only available for sigma <= 1".into(),
        ));
    }
    if truncations.len() < 2 {
        return Err(invalid("truncations", "need at least two truncation levels"));
    }
    let mut vi = Vec::new();
    let mut pi = Vec::new();
    for &k in truncations {
        let (m, f) = setup(k)?;
        let tr = forced_solve(&m, p, &f, times)?;
        let (a, b) = l2_integrals(&tr, &m, p.sigma, beta);
        vi.push(a);
        pi.push(b);
    }
    let change = |xs: &[f64]| {
        xs.windows(2)
            .map(|w| (w[1] - w[0]).abs() / w[1].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };
    let (vc, pc) = (change(&vi), change(&pi));
    Ok(L2Report {
        truncations: truncations.to_vec(),
        beta,
        velocity_integrals: vi,
        position_integrals: pi,
        velocity_change: vc,
        position_change: pc,
        velocity_stable: vc <= rel_tol,
        position_stable: pc <= rel_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::geometric_spectrum;

    fn sums(terms: impl Fn(usize) -> f64, k: usize) -> Vec<f64> {
        let levels = truncation_levels(k);
        levels
            .iter()
            .map(|&l| (0..l).map(&terms).sum())
            .collect()
    }

    #[test]
    fn levels_are_sqrt2_spaced() {
        assert_eq!(truncation_levels(24), vec![1, 2, 3, 4, 6, 8, 12, 17, 24]);
        assert!(truncation_levels(48).len() >= 8);
    }

    #[test]
    fn membership_examples() {
        let th = ProbeThresholds::default();
        let geo = sums(|k| 0.5f64.powi(k as i32), 48);
        assert_eq!(membership_diagnosis(&geo, &th).unwrap(), Membership::Converged);
        let div = sums(|k| 2f64.powf(0.2 * k as f64) / ((k + 1) as f64).powi(2), 48);
        assert!(matches!(membership_diagnosis(&div, &th).unwrap(), Membership::Diverging { .. }));
        assert_eq!(membership_diagnosis(&[0.0; 9], &th).unwrap(), Membership::Converged);
        assert!(membership_diagnosis(&[1.0; 3], &th).is_err());
    }

    #[test]
    fn membership_fixture_suite() {
        // (terms, convergent?)
        let th = ProbeThresholds::default();
        let mut cases: Vec<(Box<dyn Fn(usize) -> f64>, bool)> = Vec::new();
        for q in [0.3f64, 0.5, 0.7, 0.75, 0.8, 0.85, 0.9] {
            cases.push((Box::new(move |k| q.powi(k as i32)), true));
        }
        for pw in [1.5, 2.0, 3.0, 4.0] {
            cases.push((Box::new(move |k| ((k + 1) as f64).powf(-pw)), true));
        }
        for q in [1.05f64, 1.1, 1.5, 2.0, 3.0] {
            cases.push((Box::new(move |k| q.powi(k as i32)), false));
        }
        for e in [0.1, 0.2, 0.3, 0.5, 1.0] {
            cases.push((Box::new(move |k| 2f64.powf(2.0 * e * k as f64) / ((k + 1) as f64).powi(2)), false));
        }
        for c in [0.5, 1.0, 2.0] {
            cases.push((Box::new(move |_| c), false));
        }
        for pw in [0.0, 0.5, 1.0] {
            cases.push((Box::new(move |k| ((k + 1) as f64).powf(pw)), false));
        }
        for q in [0.1f64, 0.2, 0.6] {
            cases.push((Box::new(move |k| 3.0 * q.powi(k as i32)), true));
        }
        assert_eq!(cases.len(), 30);
        for (i, (f, conv)) in cases.iter().enumerate() {
            let v = membership_diagnosis(&sums(f, 48), &th).unwrap();
            if *conv {
                assert_eq!(v, Membership::Converged, "case {i}");
            } else {
                assert!(matches!(v, Membership::Diverging { .. }), "case {i}: {v:?}");
            }
        }
    }

    #[test]
    fn growth_fits() {
        let th = ProbeThresholds::default();
        let t: Vec<f64> = (0..200).map(|i| 10f64.powf(4.0 * i as f64 / 199.0)).collect();
        for p in [0.25, 0.5, 1.0, 2.0] {
            let n: Vec<f64> = t.iter().map(|x| 3.0 * x.powf(p)).collect();
            match fit_growth(&t, &n, &th).unwrap() {
                GrowthFit::PowerLaw { exponent, .. } => assert!((exponent - p).abs() < 0.02),
                g => panic!("{g:?}"),
            }
        }
        let n: Vec<f64> = t.iter().map(|x| 1.0 + x.ln_1p()).collect();
        assert!(matches!(fit_growth(&t, &n, &th).unwrap(), GrowthFit::Logarithmic { .. }));
        let n: Vec<f64> = t.iter().map(|x| 2.0 - (-x).exp()).collect();
        assert!(matches!(fit_growth(&t, &n, &th).unwrap(), GrowthFit::Bounded { .. }));
        assert!(fit_growth(&t[..10], &n[..10], &th).is_err());
    }

    #[test]
    fn cumulative_integral_is_exact_for_quadratics() {
        let t: Vec<f64> = vec![0.0, 0.1, 0.15, 0.4, 1.0, 1.1, 2.0];
        let v: Vec<f64> = t.iter().map(|x| 1.0 + 2.0 * x - x * x).collect();
        let (c, _) = cumulative_integral(&t, &v);
        for (i, x) in t.iter().enumerate() {
            let exact = x + x * x - x * x * x / 3.0;
            assert!((c[i] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn cumulative_integral_keeps_sign_across_kinks() {
        let t = vec![0.0, 0.01, 0.02, 0.021, 0.5];
        let v = vec![0.0, 0.0, 0.0, 1.0, 1.0];
        let (c, _) = cumulative_integral(&t, &v);
        assert!(c.windows(2).all(|w| w[1] >= w[0]), "{c:?}");
    }

    #[test]
    fn zero_forcing_zero_energy() {
        let m = geometric_spectrum(4, 2.0, 1.0).unwrap();
        let p = DampingParams::new(1.0, 1.0).unwrap();
        let f = ForcingSpec::zero(4);
        let tr = forced_solve(&m, &p, &f, &[0.0, 0.5, 1.0]).unwrap();
        let led = energy_check(&tr, &m, &f, &p).unwrap();
        assert!(led.margin.iter().all(|x| *x == 0.0));
    }
}
