//! Forced mode responses: closed forms, an exact piecewise engine, Gauss
//! quadrature, and the bounded solution on the whole line for periodic forcing.
//!
//! Forcing is held as pieces `Re[(c0 + c1 (s − start))·carrier·e^{iωs}]`.
//! Kernels are sums `Re[κ (A + Bτ) e^{−zτ}]`. Products of real parts are split
//! with Re X·Re Y = ½Re(XY) + ½Re(X·Ȳ), so every piece integral reduces to a
//! quadratic times an exponential and is evaluated in closed form.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charpoly::{classify, roots, CharRoots, DampingParams, Regime};
use crate::error::{invalid, Error, Result};
use crate::numeric::{cexpm1, gauss_legendre_unit, linear_fit, poly_exp_integral};
use crate::propagator::{
    check_grid, finite_lambda, homogeneous_expansion, homogeneous_mode, ModeExpansion, ModeIC,
    ModeTrajectory, SpectralTrajectory,
};
use crate::spectrum::SpectrumModel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One smooth piece of a mode forcing on [start, end).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub c0: f64,
    pub c1: f64,
    pub omega: f64,
    pub carrier: Complex64,
}

impl Piece {
    /// (c0 + c1 (s − start))·sin(ωs + φ).
    pub fn sinusoid(start: f64, end: f64, c0: f64, c1: f64, omega: f64, phase: f64) -> Self {
        Self {
            start,
            end,
            c0,
            c1,
            omega,
            carrier: Complex64::from_polar(1.0, phase - FRAC_PI_2),
        }
    }

    pub fn constant(start: f64, end: f64, value: f64) -> Self {
        Self::linear(start, end, value, value)
    }

    /// Straight segment from `v0` at `start` to `v1` at `end`.
    pub fn linear(start: f64, end: f64, v0: f64, v1: f64) -> Self {
        let len = end - start;
        Self {
            start,
            end,
            c0: v0,
            c1: if len > 0.0 { (v1 - v0) / len } else { 0.0 },
            omega: 0.0,
            carrier: Complex64::new(1.0, 0.0),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s < self.start || s >= self.end {
            return 0.0;
        }
        self.raw(s)
    }

    fn raw(&self, s: f64) -> f64 {
        let env = self.c0 + self.c1 * (s - self.start);
        env * (self.carrier * Complex64::from_polar(1.0, self.omega * s)).re
    }

    /// Restriction to [a, b); `None` if empty.
    pub fn clip(&self, a: f64, b: f64) -> Option<Piece> {
        let lo = self.start.max(a);
        let hi = self.end.min(b);
        if hi <= lo {
            return None;
        }
        Some(Piece {
            start: lo,
            end: hi,
            c0: self.c0 + self.c1 * (lo - self.start),
            ..*self
        })
    }

    /// Same function moved right by `shift`.
    pub fn translate(&self, shift: f64) -> Piece {
        Piece {
            start: self.start + shift,
            end: self.end + shift,
            carrier: self.carrier * Complex64::from_polar(1.0, -self.omega * shift),
            ..*self
        }
    }

    /// sup |f| over the piece.
    pub fn sup(&self) -> f64 {
        let a = self.c0.abs();
        let b = (self.c0 + self.c1 * (self.end - self.start)).abs();
        a.max(b) * self.carrier.norm()
    }
}

/// Forcing of a single mode.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeForcing {
    Zero,
    /// Constant value on [0, ∞).
    Constant(f64),
    /// amplitude·sin(ωs + φ) on [start, end) with linear ramps of width `ramp`.
    WindowedSinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
        start: f64,
        end: f64,
        ramp: f64,
    },
    Pieces(Vec<Piece>),
    /// Piecewise linear through the samples, zero outside their span.
    Samples { times: Vec<f64>, values: Vec<f64> },
}

impl ModeForcing {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModeForcing::WindowedSinusoid {
                start, end, ramp, ..
            } => {
                if !(end >= start) || !(*ramp >= 0.0) || 2.0 * ramp > end - start {
                    return Err(invalid("window", "need start <= end and 2*ramp <= end - start"));
                }
            }
            ModeForcing::Pieces(ps) => {
                if ps.iter().any(|p| !(p.end >= p.start)) {
                    return Err(invalid("pieces", "each piece needs start <= end"));
                }
            }
            ModeForcing::Samples { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(invalid("samples", "need at least two (time, value) pairs"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("samples", "times must be strictly increasing"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Smooth pieces covering the support up to `horizon`.
    pub fn pieces(&self, horizon: f64) -> Vec<Piece> {
        match self {
            ModeForcing::Zero => Vec::new(),
            ModeForcing::Constant(c) => vec![Piece::constant(0.0, horizon.max(0.0), *c)],
            &ModeForcing::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                start,
                end,
                ramp,
            } => {
                if ramp == 0.0 {
                    return vec![Piece::sinusoid(start, end, amplitude, 0.0, omega, phase)];
                }
                let slope = amplitude / ramp;
                vec![
                    Piece::sinusoid(start, start + ramp, 0.0, slope, omega, phase),
                    Piece::sinusoid(start + ramp, end - ramp, amplitude, 0.0, omega, phase),
                    Piece::sinusoid(end - ramp, end, amplitude, -slope, omega, phase),
                ]
            }
            ModeForcing::Pieces(ps) => ps.clone(),
            ModeForcing::Samples { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| Piece::linear(t[0], t[1], v[0], v[1]))
                .collect(),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ModeForcing::Zero => 0.0,
            ModeForcing::Constant(c) => {
                if s >= 0.0 {
                    *c
                } else {
                    0.0
                }
            }
            ModeForcing::Samples { times, values } => {
                if s < times[0] || s > times[times.len() - 1] {
                    return 0.0;
                }
                let i = times.partition_point(|&t| t <= s).clamp(1, times.len() - 1);
                let w = (s - times[i - 1]) / (times[i] - times[i - 1]);
                values[i - 1] + w * (values[i] - values[i - 1])
            }
            ModeForcing::Pieces(ps) => ps.iter().map(|p| p.eval(s)).sum(),
            ModeForcing::WindowedSinusoid { .. } => self.pieces(0.0).iter().map(|p| p.eval(s)).sum(),
        }
    }

    /// Declared bound on |f|.
    pub fn sup_bound(&self) -> f64 {
        match self {
            ModeForcing::Zero => 0.0,
            ModeForcing::Constant(c) => c.abs(),
            ModeForcing::WindowedSinusoid { amplitude, .. } => amplitude.abs(),
            ModeForcing::Pieces(ps) => ps.iter().map(Piece::sup).fold(0.0, f64::max),
            ModeForcing::Samples { values, .. } => values.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    /// Times where the forcing may fail to be smooth.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .pieces(horizon)
            .iter()
            .flat_map(|p| [p.start, p.end])
            .filter(|t| t.is_finite())
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn scaled(&self, s: f64) -> ModeForcing {
        if s == 1.0 {
            return self.clone();
        }
        match self {
            ModeForcing::Zero => ModeForcing::Zero,
            ModeForcing::Constant(c) => ModeForcing::Constant(c * s),
            ModeForcing::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                start,
                end,
                ramp,
            } => ModeForcing::WindowedSinusoid {
                amplitude: amplitude * s,
                omega: *omega,
                phase: *phase,
                start: *start,
                end: *end,
                ramp: *ramp,
            },
            ModeForcing::Pieces(ps) => ModeForcing::Pieces(
                ps.iter()
                    .map(|p| Piece {
                        c0: p.c0 * s,
                        c1: p.c1 * s,
                        ..*p
                    })
                    .collect(),
            ),
            ModeForcing::Samples { times, values } => ModeForcing::Samples {
                times: times.clone(),
                values: values.iter().map(|v| v * s).collect(),
            },
        }
    }
}

/// One active interval of a mode-switching forcing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEntry {
    pub start: f64,
    pub end: f64,
    pub mode: usize,
    pub amplitude: f64,
}

/// Forcing of the whole model: per-mode forcings times a global scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSpec {
    pub modes: Vec<ModeForcing>,
    pub scale: f64,
}

impl ForcingSpec {
    pub fn new(modes: Vec<ModeForcing>, scale: f64) -> Result<Self> {
        for m in &modes {
            m.validate()?;
        }
        if !scale.is_finite() {
            return Err(invalid("scale", "must be finite"));
        }
        Ok(Self { modes, scale })
    }

    pub fn zero(k: usize) -> Self {
        Self {
            modes: vec![ModeForcing::Zero; k],
            scale: 1.0,
        }
    }

    /// One mode active at a time, switched on and off with linear ramps.
    pub fn mode_switch(k: usize, schedule: &[SwitchEntry], ramp: f64, scale: f64) -> Result<Self> {
        let mut pieces: Vec<Vec<Piece>> = vec![Vec::new(); k];
        for e in schedule {
            if e.mode >= k {
                return Err(invalid("schedule", format!("mode {} outside the model", e.mode)));
            }
            if !(e.end > e.start) || 2.0 * ramp > e.end - e.start {
                return Err(invalid("schedule", "intervals must be longer than two ramps"));
            }
            let (a, b, h) = (e.start, e.end, e.amplitude);
            let ps = &mut pieces[e.mode];
            if ramp > 0.0 {
                ps.push(Piece::linear(a, a + ramp, 0.0, h));
                ps.push(Piece::constant(a + ramp, b - ramp, h));
                ps.push(Piece::linear(b - ramp, b, h, 0.0));
            } else {
                ps.push(Piece::constant(a, b, h));
            }
        }
        Self::new(
            pieces
                .into_iter()
                .map(|p| if p.is_empty() { ModeForcing::Zero } else { ModeForcing::Pieces(p) })
                .collect(),
            scale,
        )
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Forcing of mode k with the global scale applied.
    pub fn mode(&self, k: usize) -> ModeForcing {
        self.modes[k].scaled(self.scale)
    }

    /// |f(s)| in H.
    pub fn norm_at(&self, s: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.eval(s).powi(2))
            .sum::<f64>()
            .sqrt()
            * self.scale.abs()
    }

    /// (Σ_k sup|f_k|²)^{1/2}, a bound on sup_t |f(t)|.
    pub fn sup_bound(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.sup_bound().powi(2))
            .sum::<f64>()
            .sqrt()
            * self.scale.abs()
    }
}

/// `Re[coeff·(a + bτ)·e^{−rate τ}]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelTerm {
    pub coeff: Complex64,
    pub rate: Complex64,
    pub a: Complex64,
    pub b: Complex64,
}

impl KernelTerm {
    pub fn eval(&self, tau: f64) -> f64 {
        (self.coeff * (self.a + self.b * tau) * (-self.rate * tau).exp()).re
    }
}

/// Kernel terms of an exponential expansion.
pub fn kernel_terms(e: &ModeExpansion) -> Vec<KernelTerm> {
    e.terms
        .iter()
        .map(|t| {
            let one = Complex64::new(1.0, 0.0);
            let (a, b) = if t.power == 0 { (one, ZERO) } else { (ZERO, one) };
            KernelTerm {
                coeff: t.coeff,
                rate: t.rate,
                a,
                b,
            }
        })
        .collect()
}

/// ∫ Re[k(t − s)]·f(s) ds over s in the piece (which must lie in (−∞, t]).
fn kernel_piece(k: &KernelTerm, p: &Piece, t: f64) -> f64 {
    let lo = t - p.end;
    let hi = t - p.start;
    if hi <= lo {
        return 0.0;
    }
    // f(t − τ) = Re[(α + βτ)·carrier·e^{iωt}·e^{−iωτ}]
    let alpha = p.c0 + p.c1 * (t - p.start);
    let beta = -p.c1;
    let phase = Complex64::from_polar(1.0, p.omega * t);
    let y = p.carrier * phase;
    let half = 0.5;
    let mut acc = ZERO;
    for (amp, rate) in [
        (k.coeff * y, k.rate + Complex64::new(0.0, p.omega)),
        (k.coeff * y.conj(), k.rate - Complex64::new(0.0, p.omega)),
    ] {
        // (a + bτ)(α + βτ) = p0 + p1 τ + p2 τ², rewritten around τ = lo
        let p0 = k.a * alpha;
        let p1 = k.a * beta + k.b * alpha;
        let p2 = k.b * beta;
        let q = [p0 + p1 * lo + p2 * lo * lo, p1 + 2.0 * p2 * lo, p2];
        acc += amp * poly_exp_integral(q, rate, lo, hi);
    }
    half * acc.re
}

fn convolve(terms: &[KernelTerm], pieces: &[Piece], t: f64) -> f64 {
    let mut s = 0.0;
    for p in pieces {
        for k in terms {
            s += kernel_piece(k, p, t);
        }
    }
    s
}

fn check_increasing(t_grid: &[f64]) -> Result<()> {
    check_grid(t_grid)?;
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("t_grid", "must be nondecreasing"));
    }
    Ok(())
}

/// Sorted pieces with a running maximum of their ends, for sweeping a time grid.
struct PieceSweep {
    pieces: Vec<Piece>,
    max_end: Vec<f64>,
    lo: usize,
}

impl PieceSweep {
    fn new(mut pieces: Vec<Piece>) -> Self {
        pieces.retain(|p| p.end > p.start);
        pieces.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut m = f64::NEG_INFINITY;
        let max_end = pieces
            .iter()
            .map(|p| {
                m = m.max(p.end);
                m
            })
            .collect();
        Self {
            pieces,
            max_end,
            lo: 0,
        }
    }

    /// Pieces clipped to [a, b); `a` must not decrease between calls.
    fn window(&mut self, a: f64, b: f64) -> Vec<Piece> {
        while self.lo < self.pieces.len() && self.max_end[self.lo] <= a {
            self.lo += 1;
        }
        let mut out = Vec::new();
        for p in &self.pieces[self.lo..] {
            if p.start >= b {
                break;
            }
            if let Some(c) = p.clip(a, b) {
                out.push(c);
            }
        }
        out
    }
}

/// Exact response of one mode to piecewise forcing, stepping along the grid
/// with the semigroup identity Y(t + h) = S(h)Y(t) + ∫_t^{t+h} G(t + h − s) f(s) ds.
pub fn forced_response(
    r: &CharRoots,
    f: &ModeForcing,
    ic: ModeIC,
    t_grid: &[f64],
) -> Result<ModeTrajectory> {
    f.validate()?;
    check_increasing(t_grid)?;
    let horizon = *t_grid.last().unwrap();
    let green = homogeneous_expansion(r, ModeIC::new(0.0, 1.0));
    let g = kernel_terms(&green);
    let gp = kernel_terms(&green.differentiate());
    let mut sweep = PieceSweep::new(f.pieces(horizon));
    let mut tr = ModeTrajectory::with_capacity(t_grid.len());
    let (mut t_prev, mut state) = (0.0, ic);
    for &t in t_grid {
        let (mut u, mut up) = homogeneous_mode(r, state, t - t_prev)?;
        let pieces = sweep.window(t_prev, t);
        u += convolve(&g, &pieces, t);
        up += convolve(&gp, &pieces, t);
        tr.push(t, u, up);
        state = ModeIC::new(u, up);
        t_prev = t;
    }
    Ok(tr)
}

/// Forced solve of every mode (parallel over modes).
pub fn forced_solve(
    m: &SpectrumModel,
    p: &DampingParams,
    f: &ForcingSpec,
    t_grid: &[f64],
) -> Result<SpectralTrajectory> {
    if f.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            got: f.len(),
        });
    }
    finite_lambda(m)?;
    check_increasing(t_grid)?;
    let modes = (0..m.len())
        .into_par_iter()
        .map(|k| forced_response(&roots(p, m.eigenvalue(k)), &f.mode(k), ModeIC::default(), t_grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralTrajectory {
        times: t_grid.to_vec(),
        modes,
    })
}

/// (e^{−x} − 1 + x)/x².
fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = 0.5;
        let mut acc = 0.5;
        for n in 3..12 {
            term *= -x / n as f64;
            acc += term;
        }
        acc
    } else {
        ((-x).exp_m1() + x) / (x * x)
    }
}

/// Response of one mode to f ≡ 1 from rest, evaluated without cancellation.
pub fn constant_forcing_mode(p: &DampingParams, lambda: f64, t: f64) -> Result<(f64, f64)> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::NegativeTime(t));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda", "must be positive"));
    }
    Ok(match roots(p, lambda) {
        CharRoots::Real { x1, x2 } => {
            let gap = x1 - x2;
            let u = t * t * (x1 * phi2(x1 * t) - x2 * phi2(x2 * t)) / gap;
            let up = -(-x2 * t).exp() * (-gap * t).exp_m1() / gap;
            (u, up)
        }
        CharRoots::Double { r } => {
            let x = r * t;
            let u = t * t * (1.0 - (1.0 + x) * phi2(x));
            (u, t * (-x).exp())
        }
        CharRoots::Oscillatory { a, b } => {
            // u = Re[(−i t/b)·(1 − e^{−zt})/(zt)], z = a − ib
            let w = Complex64::new(a, -b) * t;
            let phi1 = if t == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                -cexpm1(-w) / w
            };
            let u = (Complex64::new(0.0, -t / b) * phi1).re;
            let up = (-a * t).exp() * (b * t).sin() / b;
            (u, up)
        }
    })
}

/// (u(T), u'(T)) for the forcing cos(b(T − t) − π/4) on [0, T] tuned to the
/// mode's own frequency b.
pub fn resonant_mode_response(p: &DampingParams, lambda: f64, horizon: f64) -> Result<(f64, f64)> {
    let r = roots(p, lambda);
    let CharRoots::Oscillatory { b, .. } = r else {
        return Err(Error::RegimeMismatch {
            expected: "oscillatory",
            found: r.regime(),
        });
    };
    if horizon == 0.0 {
        return Ok((0.0, 0.0));
    }
    let f = resonant_forcing(b, horizon, 0.0, horizon, 1.0);
    let tr = forced_response(&r, &f, ModeIC::default(), &[horizon])?;
    Ok((tr.u[0], tr.uprime[0]))
}

/// amplitude·cos(b(target − s) − π/4) on [start, end).
pub fn resonant_forcing(b: f64, target: f64, start: f64, end: f64, amplitude: f64) -> ModeForcing {
    ModeForcing::WindowedSinusoid {
        amplitude,
        omega: -b,
        phase: b * target + std::f64::consts::FRAC_PI_4,
        start,
        end,
        ramp: 0.0,
    }
}

/// Gauss-Legendre Duhamel integration with per-panel error control.
pub fn duhamel_quadrature(
    r: &CharRoots,
    f: &ModeForcing,
    t_grid: &[f64],
    tol: f64,
) -> Result<ModeTrajectory> {
    f.validate()?;
    check_increasing(t_grid)?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let green = homogeneous_expansion(r, ModeIC::new(0.0, 1.0));
    let dgreen = green.differentiate();
    let (nodes, weights) = gauss_legendre_unit(12);
    let horizon = *t_grid.last().unwrap();
    let breaks = f.breakpoints(horizon);
    let fast = r.fast_rate().max(r.slow_rate());
    let freq = match *r {
        CharRoots::Oscillatory { b, .. } => b,
        _ => 0.0,
    };
    let quad = Quad {
        green: &green,
        dgreen: &dgreen,
        f,
        nodes: &nodes,
        weights: &weights,
    };
    let mut tr = ModeTrajectory::with_capacity(t_grid.len());
    let (mut t_prev, mut state) = (0.0, ModeIC::default());
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let (mut u, mut up) = homogeneous_mode(r, state, t - t_prev)?;
        let h = t - t_prev;
        if h > 0.0 {
            let panels = step_panels(t_prev, t, &breaks, fast, freq, f);
            let budget = tol / (panels.len() - 1) as f64;
            let mut step_err = 0.0;
            for w in panels.windows(2) {
                let (du, dup, err) = quad.adaptive(w[0], w[1], t, budget, 0);
                u += du;
                up += dup;
                step_err += err;
            }
            worst = worst.max(step_err);
        }
        tr.push(t, u, up);
        state = ModeIC::new(u, up);
        t_prev = t;
    }
    if worst > tol {
        return Err(Error::Accuracy {
            target: tol,
            achieved: worst,
        });
    }
    Ok(tr)
}

/// Panel edges on [a, b]: forcing breakpoints, a geometric grading toward b
/// that resolves e^{−x τ} for the fastest rate, and a cap on panel length
/// relative to the oscillation frequency.
fn step_panels(a: f64, b: f64, breaks: &[f64], fast: f64, freq: f64, f: &ModeForcing) -> Vec<f64> {
    let mut e = vec![a, b];
    e.extend(breaks.iter().copied().filter(|&s| s > a && s < b));
    if fast > 0.0 {
        let mut d = 0.25 / fast;
        while d < b - a {
            e.push(b - d);
            d *= 2.0;
        }
    }
    let omega = match f {
        ModeForcing::WindowedSinusoid { omega, .. } => omega.abs(),
        ModeForcing::Pieces(ps) => ps.iter().map(|p| p.omega.abs()).fold(0.0, f64::max),
        _ => 0.0,
    };
    let w = freq + omega;
    e.sort_by(f64::total_cmp);
    e.dedup();
    if w > 0.0 {
        let cap = 2.0 / w;
        let mut out = vec![e[0]];
        for pair in e.windows(2) {
            let n = ((pair[1] - pair[0]) / cap).ceil().max(1.0) as usize;
            for i in 1..=n {
                out.push(pair[0] + (pair[1] - pair[0]) * i as f64 / n as f64);
            }
        }
        return out;
    }
    e
}

struct Quad<'a> {
    green: &'a ModeExpansion,
    dgreen: &'a ModeExpansion,
    f: &'a ModeForcing,
    nodes: &'a [f64],
    weights: &'a [f64],
}

impl Quad<'_> {
    fn rule(&self, a: f64, b: f64, t: f64) -> (f64, f64) {
        let h = b - a;
        let (mut u, mut up) = (0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(self.weights) {
            let s = a + h * x;
            let fv = self.f.eval(s);
            if fv != 0.0 {
                u += w * self.green.derivative(0, t - s) * fv;
                up += w * self.dgreen.derivative(0, t - s) * fv;
            }
        }
        (u * h, up * h)
    }

    fn adaptive(&self, a: f64, b: f64, t: f64, tol: f64, depth: u32) -> (f64, f64, f64) {
        let (u1, p1) = self.rule(a, b, t);
        let m = 0.5 * (a + b);
        let (ul, pl) = self.rule(a, m, t);
        let (ur, pr) = self.rule(m, b, t);
        let (u2, p2) = (ul + ur, pl + pr);
        let err = (u2 - u1).abs().max((p2 - p1).abs());
        if err <= tol || depth >= 30 {
            return (u2, p2, err);
        }
        let (xa, ya, ea) = self.adaptive(a, m, t, 0.5 * tol, depth + 1);
        let (xb, yb, eb) = self.adaptive(m, b, t, 0.5 * tol, depth + 1);
        (xa + xb, ya + yb, ea + eb)
    }
}

/// Periodic forcing given by its pieces on one period [0, period).
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicForcing {
    pub period: f64,
    pub pieces: Vec<Piece>,
}

impl PeriodicForcing {
    pub fn new(period: f64, pieces: Vec<Piece>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(invalid("period", "must be positive and finite"));
        }
        if pieces.iter().any(|p| p.start < 0.0 || p.end > period * (1.0 + 1e-15)) {
            return Err(invalid("pieces", "must lie inside one period"));
        }
        Ok(Self { period, pieces })
    }

    /// Trapezoidal square wave: +h on the first half, −h on the second,
    /// with linear transitions of width `ramp`.
    pub fn smoothed_square_wave(period: f64, height: f64, ramp: f64) -> Result<Self> {
        let half = 0.5 * period;
        if !(ramp > 0.0) || ramp > half {
            return Err(invalid("ramp", "must lie in (0, period/2]"));
        }
        let r2 = 0.5 * ramp;
        Self::new(
            period,
            vec![
                Piece::linear(0.0, r2, 0.0, height),
                Piece::constant(r2, half - r2, height),
                Piece::linear(half - r2, half + r2, height, -height),
                Piece::constant(half + r2, period - r2, -height),
                Piece::linear(period - r2, period, -height, 0.0),
            ],
        )
    }

    pub fn eval(&self, s: f64) -> f64 {
        let x = s.rem_euclid(self.period);
        self.pieces.iter().map(|p| p.eval(x)).sum()
    }

    pub fn sup_bound(&self) -> f64 {
        self.pieces.iter().map(Piece::sup).fold(0.0, f64::max)
    }

    /// Pieces of the periodic extension restricted to [a, b).
    pub fn pieces_on(&self, a: f64, b: f64) -> Vec<Piece> {
        let k0 = (a / self.period).floor() as i64;
        let k1 = (b / self.period).ceil() as i64;
        let mut out = Vec::new();
        for k in k0..=k1 {
            for p in &self.pieces {
                if let Some(c) = p.translate(k as f64 * self.period).clip(a, b) {
                    out.push(c);
                }
            }
        }
        out
    }
}

/// Kernel of ∫_0^∞ G(τ) f(t − τ) dτ folded onto one period.
fn periodized(terms: &ModeExpansion, period: f64) -> Vec<KernelTerm> {
    terms
        .terms
        .iter()
        .map(|t| {
            let one_minus_q = -cexpm1(-t.rate * period);
            let q = Complex64::new(1.0, 0.0) - one_minus_q;
            let (a, b) = if t.power == 0 {
                (one_minus_q.inv(), ZERO)
            } else {
                (period * q / (one_minus_q * one_minus_q), one_minus_q.inv())
            };
            KernelTerm {
                coeff: t.coeff,
                rate: t.rate,
                a,
                b,
            }
        })
        .collect()
}

/// The unique solution bounded on the whole line, at time t.
pub fn line_bounded_mode(r: &CharRoots, f: &PeriodicForcing, t: f64) -> Result<(f64, f64)> {
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    let green = homogeneous_expansion(r, ModeIC::new(0.0, 1.0));
    let g = periodized(&green, f.period);
    let gp = periodized(&green.differentiate(), f.period);
    let pieces = f.pieces_on(t - f.period, t);
    Ok((convolve(&g, &pieces, t), convolve(&gp, &pieces, t)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttractionReport {
    pub expected_rate: f64,
    /// `None` when the difference never rises above round-off.
    pub fitted_rate: Option<f64>,
    pub relative_error: Option<f64>,
    /// Largest energy-norm gap to the bounded solution over the horizon.
    pub max_difference: f64,
    pub periods: usize,
}

/// Steps the solution from `ic` one period at a time and fits the decay
/// rate of its distance to the bounded solution.
pub fn asymptotic_attraction_check(
    r: &CharRoots,
    f: &PeriodicForcing,
    ic: ModeIC,
    horizon: f64,
) -> Result<AttractionReport> {
    let period = f.period;
    let n = (horizon / period).round() as usize;
    if n < 16 {
        return Err(Error::Precondition("horizon must cover at least 16 periods".into()));
    }
    let lambda = r.lambda();
    let s1 = homogeneous_mode(r, ModeIC::new(1.0, 0.0), period)?;
    let s2 = homogeneous_mode(r, ModeIC::new(0.0, 1.0), period)?;
    let one_period = forced_response(
        r,
        &ModeForcing::Pieces(f.pieces.clone()),
        ModeIC::default(),
        &[period],
    )?;
    let (ru, rup) = (one_period.u[0], one_period.uprime[0]);
    let (lu, lup) = line_bounded_mode(r, f, 0.0)?;
    let energy = |du: f64, dup: f64| (lambda * du * du + dup * dup).sqrt();
    let scale = energy(lu, lup).max(energy(ic.u0, ic.u1)).max(f64::MIN_POSITIVE);
    let first = n / 4;
    let stride = ((n - first) / 400).max(1);
    let (mut u, mut up) = (ic.u0, ic.u1);
    let mut max_diff = energy(u - lu, up - lup);
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for i in 1..=n {
        let nu = s1.0 * u + s2.0 * up + ru;
        let nup = s1.1 * u + s2.1 * up + rup;
        u = nu;
        up = nup;
        let d = energy(u - lu, up - lup);
        max_diff = max_diff.max(d);
        if i >= first && (i - first) % stride == 0 && d > 1e-11 * scale {
            ts.push(i as f64 * period);
            ls.push(d.ln());
        }
    }
    let expected = r.slow_rate();
    let fitted = (ts.len() >= 8).then(|| -linear_fit(&ts, &ls).0);
    Ok(AttractionReport {
        expected_rate: expected,
        fitted_rate: fitted,
        relative_error: fitted.map(|v| (v - expected).abs() / expected),
        max_difference: max_diff,
        periods: n,
    })
}

/// Shape of the bounded factor ψ(τ) in a kernel y·e^{−ητ}·ψ(τ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PsiKind {
    One,
    Cos(f64),
    Sin(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub y: f64,
    pub eta: f64,
    pub psi: PsiKind,
}

impl KernelParams {
    pub fn new(y: f64, eta: f64, psi: PsiKind) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(invalid("eta", "must be positive"));
        }
        Ok(Self { y, eta, psi })
    }

    fn terms(&self) -> Vec<KernelTerm> {
        let (coeff, w) = match self.psi {
            PsiKind::One => (Complex64::new(self.y, 0.0), 0.0),
            PsiKind::Cos(w) => (Complex64::new(self.y, 0.0), w),
            PsiKind::Sin(w) => (Complex64::new(0.0, -self.y), w),
        };
        vec![KernelTerm {
            coeff,
            rate: Complex64::new(self.eta, -w),
            a: Complex64::new(1.0, 0.0),
            b: ZERO,
        }]
    }
}

/// max over x ≥ 0 of e^{−x}·max(x^b, x^c).
pub fn kernel_constant(b: f64, c: f64) -> f64 {
    let peak = |p: f64| if p == 0.0 { 1.0 } else { (p * p.ln() - p).exp() };
    peak(b).max(peak(c))
}

/// ∫_0^t min(s^{−b}, s^{−c}) ds.
pub fn min_power_integral(b: f64, c: f64, t: f64) -> Result<f64> {
    let (lo, hi) = (b.min(c), b.max(c));
    if !(lo >= 0.0 && lo < 1.0) {
        return Err(invalid("b", "the smaller exponent must lie in [0, 1)"));
    }
    let head = t.min(1.0).powf(1.0 - lo) / (1.0 - lo);
    if t <= 1.0 {
        return Ok(head);
    }
    let tail = if (hi - 1.0).abs() < 1e-15 {
        t.ln()
    } else {
        (t.powf(1.0 - hi) - 1.0) / (1.0 - hi)
    };
    Ok(head + tail)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelBoundReport {
    /// |λ^α z(t)|.
    pub value: f64,
    /// K_{b,c}·M_{α,b,c}·‖f‖_∞·∫_0^t min(s^{−b}, s^{−c}) ds.
    pub bound: f64,
}

/// Evaluates both sides of the kernel convolution bound for one mode.
pub fn kernel_bound_check(
    kp: &KernelParams,
    lambda: f64,
    alpha: f64,
    b: f64,
    c: f64,
    f: &ModeForcing,
    t: f64,
) -> Result<KernelBoundReport> {
    f.validate()?;
    let weight = lambda.powf(alpha);
    let pieces: Vec<Piece> = f.pieces(t).iter().filter_map(|p| p.clip(0.0, t)).collect();
    let z = convolve(&kp.terms(), &pieces, t);
    let m_abc = weight * kp.y.abs() / kp.eta.powf(b).min(kp.eta.powf(c));
    let bound = kernel_constant(b, c) * m_abc * f.sup_bound() * min_power_integral(b, c, t)?;
    Ok(KernelBoundReport {
        value: (weight * z).abs(),
        bound,
    })
}

/// Regime check shared by forcing constructions.
pub fn require_regime(p: &DampingParams, lambda: f64, want: Regime) -> Result<()> {
    let got = classify(p, lambda);
    if got != want {
        return Err(Error::RegimeMismatch {
            expected: want.name(),
            found: got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(s: f64, d: f64) -> DampingParams {
        DampingParams::new(s, d).unwrap()
    }

    #[test]
    fn constant_forcing_limits() {
        assert_eq!(constant_forcing_mode(&pp(1.0, 1.0), 4.0, 0.0).unwrap(), (0.0, 0.0));
        let (u, _) = constant_forcing_mode(&pp(1.0, 1.0), 1e8, 2.0).unwrap();
        assert!((1e8 * u - (1.0 - (-1f64).exp())).abs() < 1e-3);
        let (u, _) = constant_forcing_mode(&pp(2.0, 1.0), 1e8, 2.0).unwrap();
        assert!((1e16 * u - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_forcing_matches_engine_in_every_regime() {
        for (s, l) in [(1.0, 4.0), (0.5, 9.0), (0.0, 2.0), (2.0, 1e3), (0.25, 1e4)] {
            let p = pp(s, 1.0);
            let grid = [1e-9, 0.01, 0.5, 3.0];
            let tr = forced_response(&roots(&p, l), &ModeForcing::Constant(1.0), ModeIC::default(), &grid)
                .unwrap();
            for (i, &t) in grid.iter().enumerate() {
                let (u, up) = constant_forcing_mode(&p, l, t).unwrap();
                assert!((u - tr.u[i]).abs() < 1e-12 * (1.0 + u.abs()), "{s} {l} {t}");
                assert!((up - tr.uprime[i]).abs() < 1e-11, "{s} {l} {t}");
            }
        }
    }

    #[test]
    fn resonance_limit() {
        let want = 2f64.sqrt() / 4.0 * (1.0 - (-1f64).exp());
        let (u, up) = resonant_mode_response(&pp(0.0, 1.0), 1e10, 1.0).unwrap();
        assert!((1e5 * u - want).abs() < 1e-3, "{}", 1e5 * u);
        assert!((up - want).abs() < 1e-3, "{up}");
        assert_eq!(resonant_mode_response(&pp(0.0, 1.0), 1e10, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for (s, l) in [(1.0, 4.0), (0.0, 30.0), (2.0, 1e4)] {
            let p = pp(s, 1.0);
            let grid: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
            let tr = duhamel_quadrature(&roots(&p, l), &ModeForcing::Constant(1.0), &grid, 1e-12).unwrap();
            for (i, &t) in grid.iter().enumerate() {
                let (u, up) = constant_forcing_mode(&p, l, t).unwrap();
                assert!((u - tr.u[i]).abs() < 1e-10 && (up - tr.uprime[i]).abs() < 1e-10, "{s} {l} {t}");
            }
        }
    }

    #[test]
    fn quadrature_matches_engine_for_windowed_sinusoid() {
        let f = ModeForcing::WindowedSinusoid {
            amplitude: 0.8,
            omega: 3.0,
            phase: 0.4,
            start: 0.3,
            end: 2.6,
            ramp: 0.2,
        };
        let p = pp(0.25, 1.0);
        let r = roots(&p, 20.0);
        let grid: Vec<f64> = (1..=30).map(|i| 0.1 * i as f64).collect();
        let a = forced_response(&r, &f, ModeIC::default(), &grid).unwrap();
        let b = duhamel_quadrature(&r, &f, &grid, 1e-12).unwrap();
        for i in 0..grid.len() {
            assert!((a.u[i] - b.u[i]).abs() < 1e-11 && (a.uprime[i] - b.uprime[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_solution_is_periodic_and_fixed() {
        let f = PeriodicForcing::smoothed_square_wave(1.0, 1.0, 0.1).unwrap();
        for (s, l) in [(2.0, 16.0), (1.0, 4.0), (0.0, 40.0), (0.5, 1.0)] {
            let r = roots(&pp(s, 1.0), l);
            for t in [0.13, 2.7] {
                let a = line_bounded_mode(&r, &f, t).unwrap();
                let b = line_bounded_mode(&r, &f, t + 1.0).unwrap();
                assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
            }
            // starting on the bounded solution stays on it
            let y0 = line_bounded_mode(&r, &f, 0.0).unwrap();
            let grid: Vec<f64> = (1..=10).map(|i| 0.37 * i as f64).collect();
            let pieces = f.pieces_on(0.0, 4.0);
            let tr = forced_response(&r, &ModeForcing::Pieces(pieces), ModeIC::new(y0.0, y0.1), &grid).unwrap();
            for (i, &t) in grid.iter().enumerate() {
                let y = line_bounded_mode(&r, &f, t).unwrap();
                assert!((tr.u[i] - y.0).abs() < 1e-12 && (tr.uprime[i] - y.1).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn constant_periodic_forcing_is_equilibrium() {
        let f = PeriodicForcing::new(0.7, vec![Piece::constant(0.0, 0.7, 3.0)]).unwrap();
        for (s, l) in [(2.0, 16.0), (0.0, 5.0), (0.5, 1.0)] {
            let (u, up) = line_bounded_mode(&roots(&pp(s, 1.0), l), &f, 1.234).unwrap();
            assert!((u - 3.0 / l).abs() < 1e-13 && up.abs() < 1e-12);
        }
    }

    #[test]
    fn attraction_rate_matches_slow_root() {
        let f = PeriodicForcing::smoothed_square_wave(1.0, 1.0, 0.1).unwrap();
        let r = roots(&pp(1.0, 1.0), 4.0);
        let rep = asymptotic_attraction_check(&r, &f, ModeIC::new(1.0, 0.0), 40.0).unwrap();
        assert!(rep.relative_error.unwrap() < 0.05, "{rep:?}");
        let y0 = line_bounded_mode(&r, &f, 0.0).unwrap();
        let rep = asymptotic_attraction_check(&r, &f, ModeIC::new(y0.0, y0.1), 40.0).unwrap();
        assert!(rep.max_difference < 1e-13 && rep.fitted_rate.is_none(), "{rep:?}");
    }

    #[test]
    fn kernel_bound_holds() {
        let f = ModeForcing::Constant(1.0);
        for (b, c) in [(0.0, 0.0), (0.0, 2.0), (0.5, 0.0), (0.5, 2.0)] {
            for eta in [0.01, 1.0, 100.0] {
                let kp = KernelParams::new(1.0, eta, PsiKind::One).unwrap();
                let rep = kernel_bound_check(&kp, 10.0, 0.0, b, c, &f, 3.0).unwrap();
                assert!(rep.value <= rep.bound * (1.0 + 1e-12), "{b} {c} {eta} {rep:?}");
            }
        }
        assert!((kernel_constant(0.5, 2.0) - 4.0 * (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn mode_switch_respects_amplitude() {
        let sched = [
            SwitchEntry {
                start: 0.0,
                end: 1.0,
                mode: 1,
                amplitude: 0.5,
            },
            SwitchEntry {
                start: 1.0,
                end: 3.0,
                mode: 0,
                amplitude: 0.5,
            },
        ];
        let f = ForcingSpec::mode_switch(2, &sched, 0.1, 1.0).unwrap();
        for i in 0..300 {
            assert!(f.norm_at(0.01 * i as f64) <= 0.5 + 1e-15);
        }
        assert_eq!(f.mode(1).eval(2.0), 0.0);
        assert!((f.mode(0).eval(2.0) - 0.5).abs() < 1e-15);
    }
}
