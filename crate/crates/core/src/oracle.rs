//! Independent reference solvers for one mode, used for cross-checks.
//!
//! The exponential integrator works on the companion matrix
//! `[[0, 1], [−λ, −2δλ^σ]]` and never touches the root formulas: the linear
//! part is propagated by a scaling-and-squaring Taylor exponential of an
//! augmented matrix that also carries an interpolating polynomial of the
//! forcing, so polynomial forcing is integrated exactly. Non-stiff modes can
//! also go through embedded Runge-Kutta pairs.

use ode_solvers::{Dop853, Dopri5, OutputType, System, Vector2};

use crate::charpoly::{roots, CharRoots, DampingParams};
use crate::duhamel::ModeForcing;
use crate::error::{invalid, Error, Result};
use crate::numeric::gauss_legendre_unit;
use crate::propagator::{ModeIC, ModeTrajectory};

/// Above this x1/x2 the oracle refuses to run.
pub const STIFFNESS_LIMIT: f64 = 1e8;
/// Above this x1/x2 `Auto` picks the exponential integrator.
pub const AUTO_EXPONENTIAL_RATIO: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMethod {
    /// Dormand-Prince 5(4).
    Embedded45,
    /// Dormand-Prince 8(5,3). Autonomous forcing only: the ode_solvers
    /// tableau places its twelfth stage at c = 0 instead of c = 1.
    Embedded78,
    Exponential,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: u32,
    pub method: OracleMethod,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-13,
            max_steps: 1_000_000,
            method: OracleMethod::Auto,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol >= 1e-13) || !(self.abs_tol >= 1e-13) {
            return Err(invalid("tolerances", "must be at least 1e-13"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRun {
    pub trajectory: ModeTrajectory,
    /// Accumulated local error estimate (exponential) or the change under a
    /// hundredfold tolerance reduction (Runge-Kutta).
    pub error_estimate: f64,
    pub steps: u64,
    pub method: OracleMethod,
}

/// Integrates u'' + 2δλ^σ u' + λu = f(t) from `ic` and samples at `t_grid`.
pub fn integrate_mode(
    p: &DampingParams,
    lambda: f64,
    f: &ModeForcing,
    ic: ModeIC,
    t_grid: &[f64],
    cfg: &OracleConfig,
) -> Result<OracleRun> {
    cfg.validate()?;
    f.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", "must be positive and finite"));
    }
    if t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("t_grid", "must be nonnegative and nondecreasing"));
    }
    let ratio = match roots(p, lambda) {
        CharRoots::Real { x1, x2 } => x1 / x2,
        _ => 1.0,
    };
    if ratio > STIFFNESS_LIMIT {
        return Err(Error::Oracle(format!(
            "stiffness ratio {ratio:e} exceeds {STIFFNESS_LIMIT:e}; only the exact propagator applies"
        )));
    }
    let autonomous = matches!(f, ModeForcing::Zero | ModeForcing::Constant(_));
    let method = match cfg.method {
        OracleMethod::Auto if ratio > AUTO_EXPONENTIAL_RATIO => OracleMethod::Exponential,
        OracleMethod::Auto if autonomous => OracleMethod::Embedded78,
        OracleMethod::Auto => OracleMethod::Embedded45,
        OracleMethod::Embedded78 if !autonomous => {
            return Err(Error::Oracle(
                "Embedded78 only handles time-independent forcing; use Embedded45 or Exponential".into(),
            ))
        }
        m => m,
    };
    let ode = ModeOde {
        friction: 2.0 * p.half_friction(lambda),
        lambda,
        f,
    };
    match method {
        OracleMethod::Exponential => exponential_run(&ode, ic, t_grid, cfg),
        _ => {
            let a = rk_run(&ode, ic, t_grid, cfg.rel_tol, cfg.abs_tol, cfg.max_steps, method)?;
            let b = rk_run(
                &ode,
                ic,
                t_grid,
                (cfg.rel_tol * 1e-2).max(1e-13),
                (cfg.abs_tol * 1e-2).max(1e-14),
                cfg.max_steps,
                method,
            )?;
            let est = a
                .0
                .u
                .iter()
                .zip(&b.0.u)
                .chain(a.0.uprime.iter().zip(&b.0.uprime))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            Ok(OracleRun {
                trajectory: b.0,
                error_estimate: est,
                steps: a.1 + b.1,
                method,
            })
        }
    }
}

#[derive(Clone, Copy)]
struct ModeOde<'a> {
    friction: f64,
    lambda: f64,
    f: &'a ModeForcing,
}

impl System<f64, Vector2<f64>> for ModeOde<'_> {
    fn system(&self, t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = self.f.eval(t) - self.friction * y[1] - self.lambda * y[0];
    }
}

/// Segment edges: grid times plus forcing breakpoints.
fn segments(f: &ModeForcing, t_grid: &[f64]) -> Vec<(f64, Option<usize>)> {
    let horizon = t_grid.last().copied().unwrap_or(0.0);
    let mut ev: Vec<(f64, Option<usize>)> = t_grid.iter().enumerate().map(|(i, &t)| (t, Some(i))).collect();
    ev.extend(
        f.breakpoints(horizon)
            .into_iter()
            .filter(|&b| b > 0.0 && b < horizon)
            .map(|b| (b, None)),
    );
    ev.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.is_some().cmp(&b.1.is_some())));
    ev
}

fn rk_run(
    ode: &ModeOde<'_>,
    ic: ModeIC,
    t_grid: &[f64],
    rtol: f64,
    atol: f64,
    max_steps: u32,
    method: OracleMethod,
) -> Result<(ModeTrajectory, u64)> {
    let mut tr = ModeTrajectory::with_capacity(t_grid.len());
    let mut y = Vector2::new(ic.u0, ic.u1);
    let mut t = 0.0;
    let mut steps = 0u64;
    for (target, slot) in segments(ode.f, t_grid) {
        if target > t {
            let h_max = target - t;
            let res = match method {
                OracleMethod::Embedded45 => {
                    let mut s = Dopri5::from_param(
                        *ode, t, target, h_max, y, rtol, atol, 0.9, 0.04, 0.2, 10.0, h_max, 0.0, max_steps,
                        u32::MAX, OutputType::Sparse,
                    );
                    s.integrate().map(|st| (st.accepted_steps, s.y_out().last().copied()))
                }
                _ => {
                    let mut s = Dop853::from_param(
                        *ode, t, target, h_max, y, rtol, atol, 0.9, 0.0, 0.333, 6.0, h_max, 0.0, max_steps,
                        u32::MAX, OutputType::Sparse,
                    );
                    s.integrate().map(|st| (st.accepted_steps, s.y_out().last().copied()))
                }
            };
            match res {
                Ok((n, Some(last))) => {
                    steps += n as u64;
                    y = last;
                }
                Ok((_, None)) => return Err(Error::Oracle("integrator produced no output".into())),
                Err(e) => return Err(Error::Oracle(e.to_string())),
            }
            t = target;
        }
        if slot.is_some() {
            tr.push(target, y[0], y[1]);
        }
    }
    Ok((tr, steps))
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
struct Mat {
    n: usize,
    a: Vec<f64>,
}

impl Mat {
    fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    fn mul(&self, o: &Mat) -> Mat {
        let n = self.n;
        let mut r = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i * n + k];
                if x != 0.0 {
                    for j in 0..n {
                        r.a[i * n + j] += x * o.a[k * n + j];
                    }
                }
            }
        }
        r
    }

    fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.a[i * self.n + j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.a[i * self.n + j] * v[j]).sum())
            .collect()
    }
}

/// e^A by scaling and squaring with a degree-18 Taylor polynomial.
fn expm(a: &Mat) -> Mat {
    let norm = a.norm1();
    let s = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let b = Mat {
        n: a.n,
        a: a.a.iter().map(|x| x * scale).collect(),
    };
    let mut out = Mat::identity(a.n);
    let mut term = Mat::identity(a.n);
    for k in 1..=18 {
        term = term.mul(&b);
        for x in term.a.iter_mut() {
            *x /= k as f64;
        }
        for (o, t) in out.a.iter_mut().zip(&term.a) {
            *o += t;
        }
    }
    for _ in 0..s {
        out = out.mul(&out);
    }
    out
}

const EXP_NODES: usize = 4;

/// Solves V c = v for the monomial coefficients through the given nodes.
fn interpolate(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut m: Vec<Vec<f64>> = nodes
        .iter()
        .zip(values)
        .map(|(x, v)| {
            let mut row: Vec<f64> = (0..n).map(|j| x.powi(j as i32)).collect();
            row.push(*v);
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    (0..n).map(|i| m[i][n] / m[i][i]).collect()
}

struct ExpStepper<'a> {
    ode: &'a ModeOde<'a>,
    nodes: Vec<f64>,
}

impl ExpStepper<'_> {
    /// One step of length h from (t, y); exact when f is a cubic on the step.
    fn step(&self, t: f64, y: [f64; 2], h: f64) -> [f64; 2] {
        let d = EXP_NODES;
        let n = 2 + d;
        let mut aug = Mat::zeros(n);
        aug.a[1] = h;
        aug.a[n] = -self.ode.lambda * h;
        aug.a[n + 1] = -self.ode.friction * h;
        // forcing enters the velocity row through the chain of τ-derivatives
        aug.a[n + 2] = h;
        for j in 2..n - 1 {
            aug.a[j * n + j + 1] = 1.0;
        }
        let vals: Vec<f64> = self
            .nodes
            .iter()
            .map(|x| self.ode.f.eval(t + h * x))
            .collect();
        let c = interpolate(&self.nodes, &vals);
        let mut z = vec![y[0], y[1]];
        let mut fact = 1.0;
        for (j, cj) in c.iter().enumerate() {
            if j > 0 {
                fact *= j as f64;
            }
            z.push(cj * fact);
        }
        let out = expm(&aug).apply(&z);
        [out[0], out[1]]
    }
}

fn exponential_run(ode: &ModeOde<'_>, ic: ModeIC, t_grid: &[f64], cfg: &OracleConfig) -> Result<OracleRun> {
    let (nodes, _) = gauss_legendre_unit(EXP_NODES);
    let stepper = ExpStepper { ode, nodes };
    let mut tr = ModeTrajectory::with_capacity(t_grid.len());
    let mut y = [ic.u0, ic.u1];
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut err_sum = 0.0;
    let mut h_next = f64::INFINITY;
    for (target, slot) in segments(ode.f, t_grid) {
        while t < target {
            let mut h = h_next.min(target - t);
            loop {
                steps += 1;
                if steps > cfg.max_steps as u64 {
                    return Err(Error::Oracle(format!("step limit {} exceeded at t = {t}", cfg.max_steps)));
                }
                let full = stepper.step(t, y, h);
                let half = stepper.step(t, y, 0.5 * h);
                let two = stepper.step(t + 0.5 * h, half, 0.5 * h);
                let err = (full[0] - two[0]).abs().max((full[1] - two[1]).abs());
                let scale = cfg.abs_tol + cfg.rel_tol * two[0].abs().max(two[1].abs());
                if err <= scale {
                    y = two;
                    t = if h == target - t { target } else { t + h };
                    err_sum += err;
                    h_next = if err < scale / 64.0 { 2.0 * h } else { h };
                    break;
                }
                h *= 0.5;
                if h < 1e-300 {
                    return Err(Error::Oracle(format!("step size underflow at t = {t}")));
                }
            }
        }
        if slot.is_some() {
            tr.push(target, y[0], y[1]);
        }
    }
    Ok(OracleRun {
        trajectory: tr,
        error_estimate: err_sum,
        steps,
        method: OracleMethod::Exponential,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForce {
    pub u: f64,
    pub uprime: f64,
    /// Richardson estimates of the remaining trapezoid error.
    pub u_error: f64,
    pub uprime_error: f64,
}

/// Convolution of the fundamental solution with uniformly sampled forcing
/// (sample i at time i·dt), evaluated at t by the trapezoid rule with one
/// Richardson extrapolation step.
pub fn convolve_bruteforce(r: &CharRoots, dt: f64, values: &[f64], t: f64) -> Result<BruteForce> {
    if !(dt > 0.0) || dt > 1e-4 {
        return Err(invalid("dt", "need at least 1e4 samples per unit time"));
    }
    let n_f = t / dt;
    let n = n_f.round() as usize;
    if (n_f - n as f64).abs() > 1e-6 * n_f.max(1.0) {
        return Err(invalid("t", "must be a multiple of the sample spacing"));
    }
    if n >= values.len() {
        return Err(invalid("values", "samples must cover [0, t]"));
    }
    let (freq, fast) = match *r {
        CharRoots::Oscillatory { a, b } => (b, a),
        CharRoots::Double { r } => (0.0, r),
        CharRoots::Real { x1, .. } => (0.0, x1),
    };
    if freq * dt > 0.1 || fast * dt > 0.1 {
        return Err(Error::Oracle(format!(
            "kernel under-resolved: rate·dt = {:.3e} exceeds 0.1",
            freq.max(fast) * dt
        )));
    }
    let (g, gp): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match *r {
        CharRoots::Real { x1, x2 } => (
            Box::new(move |s| ((-x2 * s).exp() - (-x1 * s).exp()) / (x1 - x2)),
            Box::new(move |s| (x1 * (-x1 * s).exp() - x2 * (-x2 * s).exp()) / (x1 - x2)),
        ),
        CharRoots::Double { r } => (
            Box::new(move |s| s * (-r * s).exp()),
            Box::new(move |s| (1.0 - r * s) * (-r * s).exp()),
        ),
        CharRoots::Oscillatory { a, b } => (
            Box::new(move |s| (-a * s).exp() * (b * s).sin() / b),
            Box::new(move |s| (-a * s).exp() * ((b * s).cos() - a / b * (b * s).sin())),
        ),
    };
    let trap = |stride: usize| -> (f64, f64) {
        let h = dt * stride as f64;
        let m = n / stride;
        let (mut su, mut sp) = (0.0, 0.0);
        for i in 0..=m {
            let s = (i * stride) as f64 * dt;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            let fv = values[i * stride];
            su += w * g(t - s) * fv;
            sp += w * gp(t - s) * fv;
        }
        (su * h, sp * h)
    };
    if n == 0 {
        return Ok(BruteForce {
            u: 0.0,
            uprime: 0.0,
            u_error: 0.0,
            uprime_error: 0.0,
        });
    }
    let (u1, p1) = trap(1);
    if n % 2 != 0 {
        return Err(invalid("t", "needs an even number of sample intervals for extrapolation"));
    }
    let (u2, p2) = trap(2);
    Ok(BruteForce {
        u: u1 + (u1 - u2) / 3.0,
        uprime: p1 + (p1 - p2) / 3.0,
        u_error: (u1 - u2).abs() / 3.0,
        uprime_error: (p1 - p2).abs() / 3.0,
    })
}
