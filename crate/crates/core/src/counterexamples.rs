//! Forcing terms that break regularity or boundedness, with numeric
//! certificates.
//!
//! Single-time constructions act on one part of the spectrum; parts with
//! disjoint index sets are then summed. Because the parts are orthogonal the
//! solution restricted to a part is exactly the part's own solution, so each
//! certificate is checked on its own projection.

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charpoly::{log_real_roots, roots, CharRoots, DampingParams, LogRealRoots};
use crate::duhamel::{forced_response, forced_solve, ForcingSpec, ModeForcing, Piece};
use crate::error::{invalid, Error, Result};
use crate::numeric::{linear_fit, ln_add_exp, CompensatedSum};
use crate::probe::{membership_diagnosis, truncation_levels, weighted_partial_sums, Component, Membership, ProbeThresholds};
use crate::propagator::ModeIC;
use crate::spectrum::SpectrumModel;

/// (1/e)(1 − 1/e).
pub fn schedule_constant() -> f64 {
    (1.0 - 1.0 / E) / E
}

/// Square-summable amplitudes a_k = (η/c)/(k + 1) whose λ-weighted sums
/// diverge on a geometric spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct DivergentWeights {
    pub indices: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub budget: f64,
}

pub fn divergent_weights(eta: f64, k: usize) -> Result<DivergentWeights> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(invalid("eta", "must be positive"));
    }
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    let c = (0..k).map(|i| ((i + 1) as f64).powi(-2)).sum::<f64>().sqrt();
    Ok(DivergentWeights {
        indices: (0..k).collect(),
        amplitudes: (0..k).map(|i| eta / (c * (i + 1) as f64)).collect(),
        budget: eta,
    })
}

impl DivergentWeights {
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn square_sum(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    /// First index from which λ_k^{2ε}a_k² increases up to the end of the
    /// truncation, or `None` if the last step still decreases.
    pub fn eventual_increase_from(&self, eps: f64, ln_eig: &[f64]) -> Option<usize> {
        let n = self.len().min(ln_eig.len());
        let ln_term = |i: usize| 2.0 * eps * ln_eig[i] + 2.0 * self.amplitudes[i].ln();
        let mut start = None;
        for i in 0..n.saturating_sub(1) {
            if ln_term(i + 1) > ln_term(i) {
                start.get_or_insert(i);
            } else {
                start = None;
            }
        }
        start
    }
}

/// One certified membership verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateRow {
    pub target_time: f64,
    pub alpha: f64,
    pub component: Component,
    pub verdict: Membership,
    /// Weighted squared norm at the full truncation.
    pub value: f64,
}

/// Solves on one part of the spectrum and diagnoses membership at each
/// (time, component, α).
pub fn certify_membership(
    m: &SpectrumModel,
    p: &DampingParams,
    f: &ForcingSpec,
    part: &[usize],
    times: &[f64],
    checks: &[(Component, f64)],
    th: &ProbeThresholds,
) -> Result<Vec<CertificateRow>> {
    let sub = m.restrict(part)?;
    let fsub = ForcingSpec::new(part.iter().map(|&i| f.mode(i)).collect(), 1.0)?;
    let tr = forced_solve(&sub, p, &fsub, times)?;
    let levels = truncation_levels(sub.len());
    let mut rows = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        for &(c, a) in checks {
            let v = match c {
                Component::Position => tr.position(i).coefficients,
                Component::Velocity => tr.velocity(i).coefficients,
            };
            let sums = weighted_partial_sums(&v, a, &sub, &levels)?;
            rows.push(CertificateRow {
                target_time: t,
                alpha: a,
                component: c,
                verdict: membership_diagnosis(&sums, th)?,
                value: *sums.last().unwrap(),
            });
        }
    }
    Ok(rows)
}

/// Constant forcing Σ a_k e_k; for σ ≥ 1 the solution leaves D(A^{σ+ε}) at
/// every positive time while staying in D(A^σ).
pub fn statement3_constant_force(m: &SpectrumModel, p: &DampingParams, w: &DivergentWeights) -> Result<ForcingSpec> {
    if p.sigma < 1.0 {
        return Err(Error::Precondition("constant-force construction needs sigma >= 1".into()));
    }
    if w.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: w.len(),
        });
    }
    ForcingSpec::new(w.amplitudes.iter().map(|&a| ModeForcing::Constant(a)).collect(), 1.0)
}

/// Forcing a_k·cos(b_k(T − t) − π/4) on [0, horizon) for each mode of `part`,
/// zero elsewhere. Only for σ = 0.
pub fn statement1_resonant_force(
    m: &SpectrumModel,
    p: &DampingParams,
    part: &[usize],
    target: f64,
    eta: f64,
    horizon: f64,
) -> Result<Vec<(usize, ModeForcing)>> {
    if p.sigma != 0.0 {
        return Err(Error::Precondition("resonant construction needs sigma = 0".into()));
    }
    if !(target > 0.0) || horizon < target {
        return Err(invalid("target", "need 0 < target <= horizon"));
    }
    let w = divergent_weights(eta, part.len())?;
    part.iter()
        .zip(&w.amplitudes)
        .map(|(&k, &a)| match roots(p, m.eigenvalue(k)) {
            CharRoots::Oscillatory { b, .. } => Ok((
                k,
                ModeForcing::WindowedSinusoid {
                    amplitude: a,
                    omega: -b,
                    phase: b * target + FRAC_PI_4,
                    start: 0.0,
                    end: horizon,
                    ramp: 0.0,
                },
            )),
            r => Err(Error::RegimeMismatch {
                expected: "oscillatory",
                found: r.regime(),
            }),
        })
        .collect()
}

/// One part of an assembled forcing.
#[derive(Clone, Debug, PartialEq)]
pub struct PartForcing {
    pub target: f64,
    pub budget: f64,
    pub modes: Vec<(usize, ModeForcing)>,
}

impl PartForcing {
    pub fn indices(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.0).collect()
    }
}

/// Upper bound on sup_t |f(t)| for forcings given mode by mode: on every
/// elementary interval between breakpoints, √(Σ_k (Σ sup of active pieces)²).
pub fn sup_norm_bound(modes: &[ModeForcing], horizon: f64) -> f64 {
    let pieces: Vec<Vec<Piece>> = modes.iter().map(|m| m.pieces(horizon)).collect();
    let mut cuts: Vec<f64> = pieces
        .iter()
        .flatten()
        .flat_map(|p| [p.start, p.end])
        .filter(|t| t.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut best = 0.0f64;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let s: f64 = pieces
            .iter()
            .map(|ps| {
                ps.iter()
                    .filter(|p| p.start <= mid && mid < p.end)
                    .map(Piece::sup)
                    .sum::<f64>()
                    .powi(2)
            })
            .sum();
        best = best.max(s);
    }
    best.sqrt()
}

/// Largest sampled |f(t)| over [lo, hi] on `n` equispaced points.
pub fn sampled_sup(f: &ForcingSpec, lo: f64, hi: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| f.norm_at(lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64))
        .fold(0.0, f64::max)
}

/// Sums parts with pairwise disjoint mode sets into one forcing on K modes.
pub fn assemble_disjoint(k: usize, parts: &[PartForcing], horizon: f64) -> Result<ForcingSpec> {
    let mut modes = vec![ModeForcing::Zero; k];
    let mut used = vec![false; k];
    for (n, part) in parts.iter().enumerate() {
        if part.modes.is_empty() {
            return Err(Error::Construction(format!("part {n} has no modes")));
        }
        for (i, f) in &part.modes {
            if *i >= k {
                return Err(invalid("parts", format!("mode {i} outside the model")));
            }
            if used[*i] {
                return Err(Error::Construction(format!("mode {i} used by two parts")));
            }
            used[*i] = true;
            modes[*i] = f.clone();
        }
        let own: Vec<ModeForcing> = part.modes.iter().map(|m| m.1.clone()).collect();
        let bound = sup_norm_bound(&own, horizon);
        if bound > part.budget * (1.0 + 1e-12) {
            return Err(Error::Construction(format!(
                "part {n} has sup norm bound {bound:?} above its budget {:?}",
                part.budget
            )));
        }
    }
    ForcingSpec::new(modes, 1.0)
}

/// Parts for statement 1 with targets `targets`, budgets 2^{−n} and modes
/// interleaved across parts.
pub fn statement1_assembly(
    m: &SpectrumModel,
    p: &DampingParams,
    targets: &[f64],
    parts: &[Vec<usize>],
) -> Result<(ForcingSpec, Vec<PartForcing>)> {
    if targets.len() != parts.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            got: parts.len(),
        });
    }
    let horizon = targets.iter().copied().fold(0.0, f64::max);
    let built = targets
        .iter()
        .zip(parts)
        .enumerate()
        .map(|(n, (&t, idx))| {
            let budget = 0.5f64.powi(n as i32);
            Ok(PartForcing {
                target: t,
                budget,
                modes: statement1_resonant_force(m, p, idx, t, budget, horizon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((assemble_disjoint(m.len(), &built, horizon)?, built))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TripleKind {
    /// f ≡ 1, τ = 1/x2.
    Overdamped,
    /// f ≡ 1, τ = λ^{−1/2}.
    Critical,
    /// f = sin(b(τ − t) + ψ), τ = W/a.
    Oscillating { w: f64, psi: f64 },
}

/// (σ, σ0, σ1) with forcing families whose rescaled responses at τ_λ → 0
/// converge to c0 and c1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupTriple {
    pub params: DampingParams,
    pub sigma0: f64,
    pub sigma1: f64,
    pub kind: TripleKind,
    pub c0: f64,
    pub c1: f64,
}

/// The triple's forcing at one λ.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleInstance {
    pub lambda: f64,
    pub tau: f64,
    /// f(t) = sin(ωt + φ) on [0, τ].
    pub omega: f64,
    pub phase: f64,
    pub roots: CharRoots,
}

impl TripleInstance {
    pub fn forcing(&self) -> ModeForcing {
        ModeForcing::Pieces(vec![Piece::sinusoid(0.0, self.tau, 1.0, 0.0, self.omega, self.phase)])
    }
}

/// ∫_0^W e^{−x}(sin², cos², sin·cos)(kx) dx.
fn trig_moments(k: f64, w: f64) -> (f64, f64, f64) {
    let z = Complex64::new(-1.0, 2.0 * k);
    let i2 = if k == 0.0 {
        Complex64::new(-(-w).exp_m1(), 0.0)
    } else {
        ((z * w).exp() - 1.0) / z
    };
    let base = -(-w).exp_m1();
    (0.5 * (base - i2.re), 0.5 * (base + i2.re), 0.5 * i2.im)
}

/// The triple (σ, min(σ + 1/2, 1), σ) for σ ∈ (0, 1).
pub fn blowup_triple(p: &DampingParams) -> Result<BlowupTriple> {
    let (s, d) = (p.sigma, p.delta);
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Precondition("blow-up triples need sigma in (0, 1)".into()));
    }
    let inv_e = (-1.0f64).exp();
    let (kind, c0, c1) = if s > 0.5 {
        (TripleKind::Overdamped, 1.0 - inv_e, inv_e / (2.0 * d))
    } else if s == 0.5 && d > 1.0 {
        let q = (d * d - 1.0).sqrt();
        let dd = (d + q).powi(2);
        (
            TripleKind::Overdamped,
            1.0 + ((-dd).exp() - dd * inv_e) / (dd - 1.0),
            (inv_e - (-dd).exp()) / (2.0 * q),
        )
    } else if s == 0.5 && d == 1.0 {
        (TripleKind::Critical, 1.0 - 2.0 * inv_e, inv_e)
    } else if s < 0.5 {
        let (w, psi) = (1.0f64, FRAC_PI_4);
        let amp = (1.0 - (-w).exp()) / (2.0 * d);
        (TripleKind::Oscillating { w, psi }, amp * psi.cos(), amp * psi.sin())
    } else {
        // σ = 1/2, δ < 1: λ-independent values with ψ = π/2 and W small enough
        // that sin(kx)cos(kx) stays positive
        let q = (1.0 - d * d).sqrt();
        let k = q / d;
        let w = (FRAC_PI_2 / (2.0 * k)).min(1.0);
        let (_, c, mm) = trig_moments(k, w);
        let c0 = mm / (d * q);
        let c1 = c / d - mm / q;
        if !(c0 > 0.0 && c1 > 0.0) {
            return Err(Error::Construction(format!("no positive limits for delta = {d:?}")));
        }
        (TripleKind::Oscillating { w, psi: FRAC_PI_2 }, c0, c1)
    };
    Ok(BlowupTriple {
        params: *p,
        sigma0: (s + 0.5).min(1.0),
        sigma1: s,
        kind,
        c0,
        c1,
    })
}

impl BlowupTriple {
    pub fn instance(&self, lambda: f64) -> Result<TripleInstance> {
        let r = roots(&self.params, lambda);
        let mismatch = |expected| Error::RegimeMismatch {
            expected,
            found: r.regime(),
        };
        let (tau, omega, phase) = match (self.kind, r) {
            (TripleKind::Overdamped, CharRoots::Real { x2, .. }) => (1.0 / x2, 0.0, FRAC_PI_2),
            (TripleKind::Overdamped, _) => return Err(mismatch("real")),
            (TripleKind::Critical, CharRoots::Double { .. }) => (lambda.sqrt().recip(), 0.0, FRAC_PI_2),
            (TripleKind::Critical, _) => return Err(mismatch("double")),
            (TripleKind::Oscillating { w, psi }, CharRoots::Oscillatory { a, b }) => {
                let tau = w / a;
                (tau, -b, b * tau + psi)
            }
            (TripleKind::Oscillating { .. }, _) => return Err(mismatch("oscillatory")),
        };
        Ok(TripleInstance {
            lambda,
            tau,
            omega,
            phase,
            roots: r,
        })
    }

    /// (λ^{σ0}u(τ_λ), λ^{σ1}u'(τ_λ)) from rest.
    pub fn scaled_response(&self, lambda: f64) -> Result<(f64, f64)> {
        let inst = self.instance(lambda)?;
        let tr = forced_response(&inst.roots, &inst.forcing(), ModeIC::default(), &[inst.tau])?;
        Ok((lambda.powf(self.sigma0) * tr.u[0], lambda.powf(self.sigma1) * tr.uprime[0]))
    }

    /// max(|c0 − v0|/c0, |c1 − v1|/c1) at λ.
    pub fn relative_deviation(&self, lambda: f64) -> Result<f64> {
        let (v0, v1) = self.scaled_response(lambda)?;
        Ok(((v0 - self.c0) / self.c0).abs().max(((v1 - self.c1) / self.c1).abs()))
    }
}

/// A windowed copy of the triple forcing that ends just before `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowForce {
    pub lambda: f64,
    pub forcing: ModeForcing,
    /// Support is inside (lower, end).
    pub lower: f64,
    pub end: f64,
    pub cutoff: f64,
    /// λ^{σ0}|u(T)| and λ^{σ1}|u'(T)|.
    pub scaled: (f64, f64),
}

const MAX_HALVINGS: usize = 12;

/// The triple forcing shifted to end at `target`, with linear cutoff ramps of
/// width ε' at both ends; ε' is halved until both half-limit bounds hold.
pub fn window_shift_force(triple: &BlowupTriple, lower: f64, target: f64, lambda: f64) -> Result<WindowForce> {
    if !(lower >= 0.0 && target > lower) {
        return Err(invalid("target", "need 0 <= lower < target"));
    }
    let inst = triple.instance(lambda)?;
    let tau = inst.tau;
    if tau > target - lower {
        return Err(Error::Precondition(format!(
            "window length {tau:?} does not fit in ({lower:?}, {target:?})"
        )));
    }
    let dev = triple.relative_deviation(lambda)?;
    if dev > 0.25 {
        return Err(Error::Precondition(format!(
            "limits not reached at lambda = {lambda:?} (relative deviation {dev:?})"
        )));
    }
    let shift = target - tau;
    let base = Piece::sinusoid(0.0, tau, 1.0, 0.0, inst.omega, inst.phase).translate(shift);
    let mut eps = tau / 8.0;
    let mut last = (0.0, 0.0);
    for _ in 0..=MAX_HALVINGS {
        let (a, b) = (shift + eps, target - eps);
        let ramp = |start: f64, end: f64, up: bool| {
            let slope = 1.0 / (end - start);
            Piece {
                start,
                end,
                c0: if up { 0.0 } else { 1.0 },
                c1: if up { slope } else { -slope },
                ..base
            }
        };
        let pieces = vec![
            ramp(a, a + eps, true),
            Piece {
                start: a + eps,
                end: b - eps,
                c0: 1.0,
                c1: 0.0,
                ..base
            },
            ramp(b - eps, b, false),
        ];
        let f = ModeForcing::Pieces(pieces);
        let tr = forced_response(&inst.roots, &f, ModeIC::default(), &[target])?;
        let scaled = (
            lambda.powf(triple.sigma0) * tr.u[0].abs(),
            lambda.powf(triple.sigma1) * tr.uprime[0].abs(),
        );
        if scaled.0 >= 0.5 * triple.c0 && scaled.1 >= 0.5 * triple.c1 {
            return Ok(WindowForce {
                lambda,
                forcing: f,
                lower,
                end: b,
                cutoff: eps,
                scaled,
            });
        }
        last = scaled;
        eps *= 0.5;
    }
    Err(Error::Construction(format!(
        "cutoff search failed after {MAX_HALVINGS} halvings; achieved fractions {:?} and {:?} of the limits",
        last.0 / triple.c0,
        last.1 / triple.c1
    )))
}

/// One mode of a single-target statement-2 construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Statement2Mode {
    pub index: usize,
    pub weight: f64,
    pub window: WindowForce,
}

/// Loss of D(A^{σ0}) × D(A^{σ1}) regularity at `target`: disjoint windows
/// ω_n g_n on successive modes of `part`, ω_n = n^{−1/4}. Modes where the
/// window preconditions fail are skipped.
pub fn statement2_force(
    m: &SpectrumModel,
    triple: &BlowupTriple,
    part: &[usize],
    target: f64,
    eta: f64,
) -> Result<(Vec<(usize, ModeForcing)>, Vec<Statement2Mode>)> {
    let mut lower = 0.0;
    let mut out = Vec::new();
    for &k in part {
        let Ok(win) = window_shift_force(triple, lower, target, m.eigenvalue(k)) else {
            continue;
        };
        lower = win.end;
        let weight = ((out.len() + 1) as f64).powf(-0.25);
        out.push(Statement2Mode { index: k, weight, window: win });
    }
    if out.is_empty() {
        return Err(Error::Construction("no mode of the part admits a window".into()));
    }
    let modes = out
        .iter()
        .map(|s| {
            let f = match &s.window.forcing {
                ModeForcing::Pieces(ps) => ModeForcing::Pieces(
                    ps.iter()
                        .map(|p| Piece {
                            c0: p.c0 * eta * s.weight,
                            c1: p.c1 * eta * s.weight,
                            ..*p
                        })
                        .collect(),
                ),
                other => other.clone(),
            };
            (s.index, f)
        })
        .collect();
    Ok((modes, out))
}

/// One entry of an integral-bound schedule, times as logarithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub index: usize,
    pub ln_rate: f64,
    /// ln T_{n−1}; −∞ for the first entry.
    pub ln_start: f64,
    pub ln_end: f64,
    /// α ∫_{T_{n−1}}^{T_n} e^{−αx} dx.
    pub bound: f64,
}

impl ScheduleEntry {
    pub fn start(&self) -> f64 {
        self.ln_start.exp()
    }

    pub fn end(&self) -> f64 {
        self.ln_end.exp()
    }
}

/// Greedy schedule over rates given by logarithm: k_1 is the first index,
/// k_{n+1} the least later index with 1/α ≥ T_n, T_n = Σ_{j≤n} 1/α_{k_j}.
/// Stops after `n` entries.
pub fn log_schedule<I>(ln_rates: I, n: usize) -> Result<Vec<ScheduleEntry>>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let out = partial_schedule(ln_rates, n)?;
    if out.len() < n {
        return Err(Error::Construction(format!(
            "schedule incomplete: {} of {n} entries before the rates ran out",
            out.len()
        )));
    }
    Ok(out)
}

fn partial_schedule<I>(ln_rates: I, n: usize) -> Result<Vec<ScheduleEntry>>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    let mut out: Vec<ScheduleEntry> = Vec::with_capacity(n.min(1 << 24));
    if n == 0 {
        return Ok(out);
    }
    let mut ln_t = f64::NEG_INFINITY;
    for (index, ln_a) in ln_rates {
        if !ln_a.is_finite() {
            return Err(invalid("alphas", "must be positive and finite"));
        }
        if -ln_a < ln_t {
            continue;
        }
        let ln_end = ln_add_exp(ln_t, -ln_a);
        let x = (ln_a + ln_t).exp();
        let bound = (-x).exp() * (-(-1.0f64).exp_m1());
        out.push(ScheduleEntry {
            index,
            ln_rate: ln_a,
            ln_start: ln_t,
            ln_end,
            bound,
        });
        ln_t = ln_end;
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}

/// Schedule for plain rates; returns (k_n, T_n) pairs with the bounds.
pub fn unbounded_schedule(alphas: &[f64], n: usize) -> Result<Vec<ScheduleEntry>> {
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(invalid("alphas", "must be strictly positive"));
    }
    log_schedule(alphas.iter().map(|a| a.ln()).enumerate(), n)
}

/// Constant forcing with a_k = √(2k + 1)/K: as modes saturate one after
/// another, |Au(t)| grows like the number of saturated modes, i.e.
/// logarithmically in t on a geometric spectrum.
pub fn logarithmic_ladder(k: usize) -> Result<ForcingSpec> {
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    ForcingSpec::new(
        (0..k)
            .map(|i| ModeForcing::Constant(((2 * i + 1) as f64).sqrt() / k as f64))
            .collect(),
        1.0,
    )
}

/// λ_k = e^{ln_first + k·ln_ratio}, unbounded in k.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogGeometricSpectrum {
    pub ln_first: f64,
    pub ln_ratio: f64,
}

impl LogGeometricSpectrum {
    pub fn new(first: f64, ratio: f64) -> Result<Self> {
        if !(first > 0.0) || !(ratio > 1.0) {
            return Err(invalid("spectrum", "need first > 0 and ratio > 1"));
        }
        Ok(Self {
            ln_first: first.ln(),
            ln_ratio: ratio.ln(),
        })
    }

    pub fn ln_eigenvalue(&self, k: usize) -> f64 {
        self.ln_first + self.ln_ratio * k as f64
    }
}

/// Admissibility of a mode for the threshold construction: ν/(x1 − x2) ≤ 1,
/// x1 ≥ 1 and ν/((x1 − x2)x2) ≥ 1/2.
pub fn threshold_admissible(r: &LogRealRoots) -> bool {
    let c = r.ln_lambda - r.ln_gap();
    c <= 0.0 && r.ln_x1 >= 0.0 && c - r.ln_x2 >= -std::f64::consts::LN_2
}

/// 1 − (1 + h)e^{−h} = ∫_0^h s e^{−s} ds.
fn rise(h: f64) -> f64 {
    if h < 0.5 {
        let mut term = h * h / 2.0;
        let mut acc = term;
        for m in 3..30 {
            term *= -h * (m - 1) as f64 / (m * (m - 2)) as f64;
            acc += term;
        }
        acc
    } else if h > 740.0 {
        1.0
    } else {
        1.0 - (1.0 + h) * (-h).exp()
    }
}

/// (1/s)·∫ e^{−u}φ(u) du over [A, A + L] for the trapezoid φ with ramps of
/// width H, rescaled by `s` to avoid overflow: returns s·J.
fn trapezoid_exp_integral(a: f64, l: f64, h: f64, s: f64) -> f64 {
    if a > 745.0 || s == 0.0 {
        return 0.0;
    }
    let up = if h > 0.0 { s * rise(h) / h } else { 0.0 };
    let flat = if l - 2.0 * h > 0.0 {
        s * (-h).exp() * -(-(l - 2.0 * h)).exp_m1()
    } else {
        0.0
    };
    // ∫_{L−H}^{L} e^{−u}(L − u)/H du = (e^{−(L−H)}(H − 1) + e^{−L})/H
    let down = if h > 0.0 && l - h < 745.0 {
        let v = if h < 0.5 {
            // e^{−L}·Σ_{m≥2}(m − 1)h^m/m!
            let mut term = h * h / 2.0;
            let mut acc = term;
            for m in 3..30 {
                term *= h * (m - 1) as f64 / (m * (m - 2)) as f64;
                acc += term;
            }
            (-l).exp() * acc
        } else {
            (-(l - h)).exp() * (h - 1.0) + (-l).exp()
        };
        s * v / h
    } else {
        0.0
    };
    (-a).exp() * (up + flat + down)
}

/// λu(T) for a unit window on y = T − s ∈ [T_{n−1}, T_n] with x2(T_n − T_{n−1}) = 1
/// and ramps of width ρ/x2: (slow part, fast part), u = slow + fast.
fn window_response(r: &LogRealRoots, ln_start: f64, rho: f64) -> (f64, f64) {
    let ratio = r.ratio();
    let slow = trapezoid_exp_integral((r.ln_x2 + ln_start).exp(), 1.0, rho, 1.0) / (1.0 - ratio);
    let fast = if ratio == 0.0 {
        0.0
    } else {
        // x1 (T_n − T_{n−1}) = 1/ratio
        let s = ratio * ratio;
        let scaled = trapezoid_exp_integral((r.ln_x1 + ln_start).exp(), 1.0 / ratio, rho / ratio, s);
        -scaled / ratio / (1.0 - ratio)
    };
    (slow, fast)
}

/// Threshold construction on a block of a log-geometric spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdPart {
    pub target_m: f64,
    pub eta: f64,
    /// Number of windows N from η²(1/(4e²))(1 − 1/e)²N ≥ (2M + η)².
    pub windows: usize,
    pub first_index: usize,
    /// One past the last index inspected.
    pub next_index: usize,
    pub skipped: usize,
    /// ln T.
    pub ln_time: f64,
    /// |Au(T)|², |Av(T)| and |Aw(T)| for the ramped forcing.
    pub au_squared: f64,
    pub av: f64,
    pub aw: f64,
    pub min_schedule_bound: f64,
    pub ramp_fraction: f64,
}

impl ThresholdPart {
    pub fn certified(&self) -> bool {
        self.au_squared >= self.target_m
    }
}

/// Windows needed by the threshold construction.
pub fn threshold_windows(target_m: f64, eta: f64) -> usize {
    let c = schedule_constant() / 2.0;
    ((2.0 * target_m + eta).powi(2) / (eta * c).powi(2)).ceil() as usize
}

/// Reversed mode-switching forcing g(t) = η·ψ(T − t) on [0, T] over the modes
/// of `spec` from `first_index`, each window ramped over a fraction
/// `ramp_fraction` of its length, with |Au(T)|² computed per mode in closed
/// form. Modes failing [`threshold_admissible`] are skipped. Requires σ > 1.
pub fn statement4_force(
    p: &DampingParams,
    spec: &LogGeometricSpectrum,
    first_index: usize,
    target_m: f64,
    eta: f64,
    ramp_fraction: f64,
    max_modes: usize,
) -> Result<ThresholdPart> {
    if p.sigma <= 1.0 {
        return Err(Error::Precondition("threshold construction needs sigma > 1".into()));
    }
    if !(eta > 0.0) || !(target_m >= 0.0) {
        return Err(invalid("eta", "need eta > 0 and M >= 0"));
    }
    if !(ramp_fraction > 0.0 && ramp_fraction < 0.5) {
        return Err(invalid("ramp_fraction", "must lie in (0, 1/2)"));
    }
    let n = threshold_windows(target_m, eta);
    let mut skipped = 0usize;
    let mut last = first_index;
    let candidates = (first_index..first_index.saturating_add(max_modes)).filter_map(|k| {
        last = k + 1;
        match log_real_roots(p, spec.ln_eigenvalue(k)) {
            Some(r) if threshold_admissible(&r) => Some((k, r.ln_x2)),
            _ => {
                skipped += 1;
                None
            }
        }
    });
    let sched = partial_schedule(candidates, n)?;
    if sched.len() < n {
        let c = schedule_constant() / 2.0;
        return Err(Error::Capacity {
            modes: max_modes,
            max_m: 0.0f64.max(0.5 * (eta * c * (sched.len() as f64).sqrt() - eta)),
        });
    }
    let next_index = last;
    let ln_time = sched.last().unwrap().ln_end;
    let parts: Vec<(f64, f64)> = sched
        .par_iter()
        .map(|e| {
            let r = log_real_roots(p, spec.ln_eigenvalue(e.index)).unwrap();
            window_response(&r, e.ln_start, ramp_fraction)
        })
        .collect();
    let mut au = CompensatedSum::new();
    let mut av = CompensatedSum::new();
    let mut aw = CompensatedSum::new();
    for (w, v) in &parts {
        au.add((w + v).powi(2));
        av.add(v * v);
        aw.add(w * w);
    }
    let e2 = eta * eta;
    Ok(ThresholdPart {
        target_m,
        eta,
        windows: n,
        first_index,
        next_index,
        skipped,
        ln_time,
        au_squared: e2 * au.value(),
        av: eta * av.value().sqrt(),
        aw: eta * aw.value().sqrt(),
        min_schedule_bound: sched.iter().map(|e| e.bound).fold(f64::INFINITY, f64::min),
        ramp_fraction,
    })
}

/// Threshold parts n = 1..=n_max with M = n and η = 2^{−n} on consecutive
/// blocks of the spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSequence {
    pub parts: Vec<ThresholdPart>,
    /// Slope of |Au(t_n)|² against n.
    pub growth_slope: f64,
    /// Σ 2^{−n}, bounding sup |f|.
    pub forcing_bound: f64,
}

pub fn statement4_sequence(
    p: &DampingParams,
    spec: &LogGeometricSpectrum,
    n_max: usize,
    ramp_fraction: f64,
    max_modes: usize,
) -> Result<ThresholdSequence> {
    if n_max == 0 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    let mut parts: Vec<ThresholdPart> = Vec::with_capacity(n_max);
    let mut next = 0usize;
    for n in 1..=n_max {
        let part = statement4_force(p, spec, next, n as f64, 0.5f64.powi(n as i32), ramp_fraction, max_modes)?;
        if let Some(prev) = parts.last() {
            if !(part.ln_time > prev.ln_time) {
                return Err(Error::Construction(format!("target time of part {n} does not increase")));
            }
        }
        next = part.next_index;
        parts.push(part);
    }
    let xs: Vec<f64> = (1..=n_max).map(|n| n as f64).collect();
    let ys: Vec<f64> = parts.iter().map(|p| p.au_squared).collect();
    let growth_slope = if n_max >= 2 { linear_fit(&xs, &ys).0 } else { f64::NAN };
    Ok(ThresholdSequence {
        forcing_bound: (1..=n_max).map(|n| 0.5f64.powi(n as i32)).sum(),
        parts,
        growth_slope,
    })
}
