//! Subcommand implementations. Each writes its CSVs into the output
//! directory, then a manifest with the hash of every file produced.

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dampwave::charpoly::{roots, DampingParams};
use dampwave::counterexamples::{
    blowup_triple, certify_membership, divergent_weights, statement1_assembly, statement2_force,
    statement3_constant_force, statement4_sequence, sup_norm_bound, CertificateRow, LogGeometricSpectrum,
};
use dampwave::duhamel::{forced_response, forced_solve, ForcingSpec, ModeForcing};
use dampwave::numeric::{linear_grid, log_grid};
use dampwave::oracle::{integrate_mode, OracleConfig, OracleMethod};
use dampwave::probe::{boundedness_scan, energy_check, Component, Membership};
use dampwave::propagator::{gap_scan, homogeneous_mode, homogeneous_solve, GapScanConfig, ModeIC, SpectralTrajectory};
use dampwave::spectrum::{geometric_spectrum, partition_interleave, weighted_norm};

use crate::config::{forcing_section_text, ExperimentConfig};
use crate::emit::{num, write_manifest, Table};
use crate::error::{invalid, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Roots,
    Simulate,
    GapScan,
    Diagram,
    /// Statement number 1..=4.
    Counterexample(u8),
    Verify,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Roots => "roots".into(),
            Command::Simulate => "simulate".into(),
            Command::GapScan => "gap-scan".into(),
            Command::Diagram => "diagram".into(),
            Command::Counterexample(s) => format!("counterexample --statement {s}"),
            Command::Verify => "verify".into(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    /// Produced files with their data-row counts (config files report 0).
    pub files: Vec<(PathBuf, usize)>,
    pub manifest: PathBuf,
    pub summary: Vec<String>,
    /// Set when a certificate or cross-check did not hold.
    pub failure: Option<String>,
}

impl RunOutcome {
    fn table(&mut self, t: Table, expected: usize) -> Result<()> {
        let (path, rows) = t.finish()?;
        if rows != expected {
            return Err(HarnessError::Certification(format!(
                "{} has {rows} rows, grid declares {expected}",
                path.display()
            )));
        }
        self.files.push((path, rows));
        Ok(())
    }

    fn fail(&mut self, msg: String) {
        if self.failure.is_none() {
            self.failure = Some(msg);
        }
    }
}

/// Runs `cmd` on `cfg`, writing into `out`. `seed` overrides `verify.seed`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<RunOutcome> {
    std::fs::create_dir_all(out)?;
    let mut o = RunOutcome::default();
    match cmd {
        Command::Roots => run_roots(cfg, out, &mut o)?,
        Command::Simulate => run_simulate(cfg, out, &mut o)?,
        Command::GapScan => run_gap_scan(cfg, out, &mut o)?,
        Command::Diagram => run_diagram(cfg, out, &mut o)?,
        Command::Counterexample(s) => run_counterexample(s, cfg, out, &mut o)?,
        Command::Verify => run_verify(cfg, out, seed.unwrap_or(cfg.verify.seed), &mut o)?,
    }
    let files: Vec<PathBuf> = o.files.iter().map(|f| f.0.clone()).collect();
    o.manifest = write_manifest(out, &files)?;
    Ok(o)
}

fn run_roots(cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    let p = cfg.params()?;
    let m = cfg.spectrum()?;
    let mut t = Table::create(out, "roots.csv", &["lambda", "regime", "x1", "x2"])?;
    for &l in m.eigenvalues() {
        let r = roots(&p, l);
        let (a, b) = r.columns();
        t.row([num(l), r.regime().name().to_string(), num(a), num(b)])?;
    }
    o.summary.push(format!("{} modes", m.len()));
    o.table(t, m.len())
}

fn trajectory(cfg: &ExperimentConfig) -> Result<(SpectralTrajectory, Option<ForcingSpec>)> {
    let p = cfg.params()?;
    let m = cfg.spectrum()?;
    let times = cfg.times();
    let (u0, u1) = cfg.initial_data(m.len());
    let mut tr = homogeneous_solve(&m, &p, &u0, &u1, &times)?;
    if !cfg.is_forced() {
        return Ok((tr, None));
    }
    let f = cfg.forcing_spec(m.len(), *times.last().unwrap())?;
    let forced = forced_solve(&m, &p, &f, &times)?;
    for (a, b) in tr.modes.iter_mut().zip(&forced.modes) {
        for i in 0..a.u.len() {
            a.u[i] += b.u[i];
            a.uprime[i] += b.uprime[i];
        }
    }
    Ok((tr, Some(f)))
}

fn run_simulate(cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    let m = cfg.spectrum()?;
    let (tr, f) = trajectory(cfg)?;
    let forced = f.is_some();
    let mut head = vec!["t", "k", "lambda", "u", "uprime"];
    if forced {
        head.push("forcing_norm");
    }
    let mut traj = Table::create(out, "trajectory.csv", &head)?;
    for (i, &t) in tr.times.iter().enumerate() {
        for (k, mode) in tr.modes.iter().enumerate() {
            let mut row = vec![num(t), k.to_string(), num(m.eigenvalue(k)), num(mode.u[i]), num(mode.uprime[i])];
            if let Some(f) = &f {
                row.push(num(f.mode(k).eval(t).abs()));
            }
            traj.row(row)?;
        }
    }
    o.table(traj, tr.times.len() * m.len())?;

    let alphas = &cfg.grid.alphas;
    let mut head = vec!["t", "alpha", "norm_u", "norm_uprime"];
    if forced {
        head.push("forcing_norm");
    }
    let mut norms = Table::create(out, "norms.csv", &head)?;
    for (i, &t) in tr.times.iter().enumerate() {
        let (u, v) = (tr.position(i).coefficients, tr.velocity(i).coefficients);
        for &a in alphas {
            let mut row = vec![
                num(t),
                num(a),
                num(weighted_norm(&u, a, m.eigenvalues(), m.ln_eigenvalues())),
                num(weighted_norm(&v, a, m.eigenvalues(), m.ln_eigenvalues())),
            ];
            if let Some(f) = &f {
                row.push(num(f.norm_at(t)));
            }
            norms.row(row)?;
        }
    }
    o.summary.push(format!(
        "{} modes x {} times, {}",
        m.len(),
        tr.times.len(),
        if forced { "forced" } else { "homogeneous" }
    ));
    o.table(norms, tr.times.len() * alphas.len())
}

fn run_gap_scan(cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    let p = cfg.params()?;
    let m = cfg.spectrum()?;
    let mut t_grid = cfg.times();
    if t_grid[0] > 0.0 {
        t_grid.insert(0, 0.0);
    }
    let g = GapScanConfig {
        alpha0: cfg.gap.alpha0,
        alpha1: cfg.gap.alpha1,
        t_grid,
        lambda_grid: m.eigenvalues().to_vec(),
    };
    let rows = gap_scan(&m, &p, &g)?;
    let mut t = Table::create(out, "gap_scan.csv", &["lambda", "amplification"])?;
    for r in &rows {
        t.row([num(r.lambda), num(r.amplification)])?;
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.amplification), b.max(r.amplification)));
    o.summary.push(format!("gap {}: amplification in [{lo:.4e}, {hi:.4e}]", g.gap()));
    o.table(t, m.len())
}

fn run_diagram(cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    let m = cfg.spectrum()?;
    let times = cfg.times();
    let th = cfg.thresholds();
    let f = cfg.forcing_spec(m.len(), *times.last().unwrap())?;
    let sigmas = if cfg.grid.sigmas.is_empty() {
        vec![cfg.damping.sigma]
    } else {
        cfg.grid.sigmas.clone()
    };
    let alphas = &cfg.grid.alphas;
    let mut t = Table::create(out, "diagram.csv", &["sigma", "alpha", "component", "verdict", "fit_exponent"])?;
    for &s in &sigmas {
        let p = DampingParams::new(s, cfg.damping.delta).map_err(|e| invalid("grid.sigmas", e.to_string()))?;
        let (ru, rv) = boundedness_scan(&m, &p, &f, alphas, &times, &th)?;
        for rep in [&ru, &rv] {
            for (j, &a) in alphas.iter().enumerate() {
                let fit = rep.fitted_growth[j];
                t.row([num(s), num(a), rep.component.name().to_string(), fit.name().to_string(), num(fit.exponent())])?;
            }
        }
    }
    o.summary.push(format!("{} sigma x {} alpha x 2 components", sigmas.len(), alphas.len()));
    o.table(t, sigmas.len() * alphas.len() * 2)
}

fn write_text(out: &Path, name: &str, text: &str, o: &mut RunOutcome) -> Result<()> {
    let path = out.join(name);
    std::fs::write(&path, text)?;
    o.files.push((path, 0));
    Ok(())
}

fn damping_header(cfg: &ExperimentConfig, k: usize) -> String {
    format!(
        "[damping]\nsigma = {}\ndelta = {}\n\n[spectrum]\nkind = {:?}\ncount = {k}\nbase = {}\nscale = {}\n\n",
        num(cfg.damping.sigma),
        num(cfg.damping.delta),
        cfg.spectrum.kind,
        num(cfg.spectrum.base),
        num(cfg.spectrum.scale)
    )
}

fn certificate_table(out: &Path, rows: &[CertificateRow], o: &mut RunOutcome) -> Result<()> {
    let mut t = Table::create(out, "certificate.csv", &["target_time", "alpha", "component", "verdict", "value"])?;
    for r in rows {
        t.row([
            num(r.target_time),
            num(r.alpha),
            r.component.name().to_string(),
            r.verdict.name().to_string(),
            num(r.value),
        ])?;
    }
    o.table(t, rows.len())
}

fn expect(rows: &[CertificateRow], diverging: impl Fn(&CertificateRow) -> bool, o: &mut RunOutcome) {
    for r in rows {
        let want = diverging(r);
        let ok = match r.verdict {
            Membership::Diverging { .. } => want,
            Membership::Converged => !want,
            Membership::Inconclusive => false,
        };
        if !ok {
            o.fail(format!(
                "t={} {} alpha={}: expected {}, got {}",
                r.target_time,
                r.component.name(),
                r.alpha,
                if want { "diverging" } else { "converged" },
                r.verdict.name()
            ));
        }
    }
}

fn run_counterexample(statement: u8, cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    let p = cfg.params()?;
    let th = cfg.thresholds();
    let c = &cfg.counterexample;
    const EPS: f64 = 0.1;
    match statement {
        1 => {
            let m = cfg.spectrum()?;
            let parts = partition_interleave(m.len(), c.targets.len())?;
            let horizon = c.targets.iter().copied().fold(0.0, f64::max);
            let (f, _) = statement1_assembly(&m, &p, &c.targets, &parts)?;
            let checks = [(Component::Position, 0.5 + EPS), (Component::Velocity, EPS)];
            let mut rows = Vec::new();
            for (part, &target) in parts.iter().zip(&c.targets) {
                rows.extend(certify_membership(&m, &p, &f, part, &[target], &checks, &th)?);
            }
            expect(&rows, |_| true, o);
            let text = damping_header(cfg, m.len()) + &forcing_section_text(&f, horizon);
            write_text(out, "forcing.toml", &text, o)?;
            o.summary.push(format!("{} parts, sup|f| <= {}", parts.len(), num(sup_norm_bound(&f.modes, horizon))));
            certificate_table(out, &rows, o)
        }
        2 => {
            let m = cfg.spectrum()?;
            let parts = partition_interleave(m.len(), c.targets.len())?;
            let horizon = c.targets.iter().copied().fold(0.0, f64::max);
            let triple = blowup_triple(&p)?;
            let mut modes = vec![ModeForcing::Zero; m.len()];
            let mut t = Table::create(
                out,
                "certificate.csv",
                &["target_time", "window", "lambda", "alpha", "component", "verdict", "value", "bound"],
            )?;
            let mut rows = 0;
            for (n, (part, &target)) in parts.iter().zip(&c.targets).enumerate() {
                let budget = c.eta * 0.5f64.powi(n as i32);
                let (forced, windows) = statement2_force(&m, &triple, part, target, budget)?;
                let mut lower_sum = 0.0;
                for ((k, fk), w) in forced.iter().zip(&windows) {
                    let lambda = m.eigenvalue(*k);
                    let tr = forced_response(&roots(&p, lambda), fk, ModeIC::default(), &[target])?;
                    let scale = budget * w.weight;
                    for (comp, alpha, got, limit) in [
                        (Component::Position, triple.sigma0, tr.u[0], triple.c0),
                        (Component::Velocity, triple.sigma1, tr.uprime[0], triple.c1),
                    ] {
                        let value = lambda.powf(alpha) * got.abs();
                        let bound = 0.5 * limit * scale;
                        let ok = value >= bound;
                        if !ok {
                            o.fail(format!("t={target} window {} {}: {value} below {bound}", w.index, comp.name()));
                        }
                        t.row([
                            num(target),
                            w.index.to_string(),
                            num(lambda),
                            num(alpha),
                            comp.name().to_string(),
                            if ok { "certified" } else { "failed" }.to_string(),
                            num(value),
                            num(bound),
                        ])?;
                        rows += 1;
                    }
                    lower_sum += (0.5 * triple.c0 * scale).powi(2);
                    modes[*k] = fk.clone();
                }
                o.summary.push(format!(
                    "t={target}: {} windows, squared lower bounds sum to {} (weights n^(-1/4), divergent series)",
                    windows.len(),
                    num(lower_sum)
                ));
            }
            o.table(t, rows)?;
            let f = ForcingSpec::new(modes, 1.0)?;
            let text = damping_header(cfg, m.len()) + &forcing_section_text(&f, horizon);
            write_text(out, "forcing.toml", &text, o)?;
            o.summary.push(format!("{} parts, sup|f| <= {}", parts.len(), num(sup_norm_bound(&f.modes, horizon))));
            Ok(())
        }
        3 => {
            let m = cfg.spectrum()?;
            let w = divergent_weights(c.eta, m.len())?;
            let f = statement3_constant_force(&m, &p, &w)?;
            let all: Vec<usize> = (0..m.len()).collect();
            let checks = [(Component::Position, p.sigma + EPS), (Component::Position, p.sigma)];
            let rows = certify_membership(&m, &p, &f, &all, &c.targets, &checks, &th)?;
            expect(&rows, |r| r.alpha > p.sigma, o);
            let horizon = c.targets.iter().copied().fold(0.0, f64::max);
            let text = damping_header(cfg, m.len()) + &forcing_section_text(&f, horizon);
            write_text(out, "forcing.toml", &text, o)?;
            o.summary.push(format!("constant forcing, |f| = {}", num(f.norm_at(0.0))));
            certificate_table(out, &rows, o)
        }
        4 => {
            let spec = LogGeometricSpectrum::new(c.first, c.ratio)?;
            let seq = statement4_sequence(&p, &spec, c.stages, c.ramp_fraction, c.max_modes)?;
            let mut t = Table::create(
                out,
                "certificate.csv",
                &["stage", "ln_target_time", "alpha", "component", "verdict", "value"],
            )?;
            let mut prev = f64::NEG_INFINITY;
            for (n, part) in seq.parts.iter().enumerate() {
                let ok = part.certified() && part.au_squared > prev;
                prev = part.au_squared;
                if !ok {
                    o.fail(format!("stage {}: |Au(t_n)|^2 = {} below {}", n + 1, part.au_squared, part.target_m));
                }
                t.row([
                    (n + 1).to_string(),
                    num(part.ln_time),
                    num(1.0),
                    Component::Position.name().to_string(),
                    if ok { "certified" } else { "failed" }.to_string(),
                    num(part.au_squared),
                ])?;
            }
            o.table(t, seq.parts.len())?;
            let text = format!(
                "{}[counterexample]\nstatement = 4\nstages = {}\nramp_fraction = {}\nmax_modes = {}\nfirst = {}\nratio = {}\n",
                damping_header(cfg, 0).split("[spectrum]").next().unwrap_or_default(),
                c.stages,
                num(c.ramp_fraction),
                c.max_modes,
                num(c.first),
                num(c.ratio)
            );
            write_text(out, "forcing.toml", &text, o)?;
            o.summary.push(format!(
                "{} stages, {} modes used, growth slope {:.3}, sup|f| <= {}",
                seq.parts.len(),
                seq.parts.last().map_or(0, |p| p.next_index),
                seq.growth_slope,
                num(seq.forcing_bound)
            ));
            Ok(())
        }
        s => Err(invalid("counterexample.statement", format!("must be 1, 2, 3 or 4, got {s}"))),
    }
}

const ORACLE_HOMOGENEOUS_TOL: f64 = 1e-8;
const ORACLE_FORCED_TOL: f64 = 1e-7;
const ENERGY_TOL: f64 = 1e-9;

fn run_verify(cfg: &ExperimentConfig, out: &Path, seed: u64, o: &mut RunOutcome) -> Result<()> {
    let mut t = Table::create(out, "verify.csv", &["check", "cases", "max_error", "tolerance", "status"])?;
    let mut checks = 0;
    let mut record = |t: &mut Table, o: &mut RunOutcome, name: &str, cases: usize, err: f64, tol: f64| -> Result<()> {
        let ok = err <= tol;
        if !ok {
            o.fail(format!("{name}: error {err:e} exceeds {tol:e}"));
        }
        o.summary.push(format!("{name:<20} {cases:>5} cases  max {err:.3e}  tol {tol:.0e}  {}", if ok { "ok" } else { "FAIL" }));
        checks += 1;
        t.row([name.to_string(), cases.to_string(), num(err), num(tol), if ok { "ok" } else { "fail" }.to_string()])
    };

    let grid = linear_grid(0.0, 10.0, 101);
    let exp = OracleConfig {
        method: OracleMethod::Exponential,
        ..OracleConfig::default()
    };
    let (mut worst, mut cases) = (0.0f64, 0);
    for s in [0.0, 0.25, 0.5, 1.0, 2.0] {
        for d in [0.5, 1.0, 2.0] {
            for l in [1.0, 10.0, 100.0] {
                let p = DampingParams::new(s, d)?;
                let r = roots(&p, l);
                for ic in [ModeIC::new(1.0, 0.0), ModeIC::new(0.0, 1.0)] {
                    let run = integrate_mode(&p, l, &ModeForcing::Zero, ic, &grid, &exp)?;
                    for (i, &tt) in grid.iter().enumerate() {
                        let (u, v) = homogeneous_mode(&r, ic, tt)?;
                        worst = worst
                            .max((u - run.trajectory.u[i]).abs())
                            .max((v - run.trajectory.uprime[i]).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    record(&mut t, o, "oracle_homogeneous", cases, worst, ORACLE_HOMOGENEOUS_TOL)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut cases) = (0.0f64, 0);
    let grid = linear_grid(0.0, 5.0, 51);
    for s in [0.0, 0.5, 1.0, 2.0] {
        for l in [0.5, 4.0, 30.0] {
            let p = DampingParams::new(s, 1.0)?;
            let f = random_sinusoid(&mut rng, 1.0, 5.0);
            let exact = dampwave::duhamel::forced_response(&roots(&p, l), &f, ModeIC::new(0.5, -0.5), &grid)?;
            let run = integrate_mode(&p, l, &f, ModeIC::new(0.5, -0.5), &grid, &OracleConfig::default())?;
            for i in 0..grid.len() {
                worst = worst
                    .max((exact.u[i] - run.trajectory.u[i]).abs())
                    .max((exact.uprime[i] - run.trajectory.uprime[i]).abs());
            }
            cases += 1;
        }
    }
    record(&mut t, o, "oracle_forced", cases, worst, ORACLE_FORCED_TOL)?;

    let k = cfg.verify.modes;
    let m = geometric_spectrum(k, 2.0, 1.0)?;
    let mut grid = vec![0.0];
    grid.extend(log_grid(1e-12, 1e-2, 400));
    grid.extend(linear_grid(1e-2, 4.0, 1200).into_iter().skip(1));
    let (mut worst, mut cases) = (0.0f64, 0);
    let norm = (0..k).map(|j| 0.5f64.powi(j as i32)).sum::<f64>().sqrt();
    for s in [0.25, 1.0, 2.0] {
        let p = DampingParams::new(s, 1.0)?;
        for _ in 0..cfg.verify.trials {
            let modes = (0..k)
                .map(|j| {
                    let mut f = random_sinusoid(&mut rng, 0.5f64.powf(j as f64 / 2.0) / norm, 4.0);
                    if let ModeForcing::WindowedSinusoid { start, ramp, .. } = &mut f {
                        *start = 0.0;
                        *ramp = 0.0;
                    }
                    f
                })
                .collect();
            let f = ForcingSpec::new(modes, 1.0)?;
            let tr = forced_solve(&m, &p, &f, &grid)?;
            let led = energy_check(&tr, &m, &f, &p)?;
            for (mg, src) in led.margin.iter().zip(&led.source_integral) {
                if *src > 0.0 {
                    worst = worst.max(-mg / src);
                }
            }
            cases += 1;
        }
    }
    record(&mut t, o, "energy_margin", cases, worst.max(0.0), ENERGY_TOL)?;
    o.table(t, checks)
}

fn random_sinusoid(rng: &mut ChaCha8Rng, scale: f64, horizon: f64) -> ModeForcing {
    let start = rng.random_range(0.0..0.3 * horizon);
    ModeForcing::WindowedSinusoid {
        amplitude: scale * rng.random_range(-1.0..1.0),
        omega: rng.random_range(0.0..12.0),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
        start,
        end: rng.random_range(0.6 * horizon..horizon),
        ramp: 0.05,
    }
}
