//! Experiment configuration: a flat, sectioned key-value file (the subset of
//! TOML described in `CONFIG.md`). Every section is optional except
//! `[damping]`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use dampwave::charpoly::DampingParams;
use dampwave::duhamel::{ForcingSpec, ModeForcing, PeriodicForcing, Piece};
use dampwave::numeric::{linear_grid, log_grid};
use dampwave::probe::ProbeThresholds;
use dampwave::spectrum::{geometric_spectrum, SpectralVector, SpectrumModel};

use crate::error::{invalid, HarnessError, Result};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub damping: DampingSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub forcing: ForcingSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub gap: GapSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    #[serde(default)]
    pub counterexample: CounterexampleSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DampingSection {
    pub sigma: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// `geometric`, `list` or `file`.
    pub kind: String,
    pub count: usize,
    pub base: f64,
    pub scale: f64,
    pub values: Vec<f64>,
    /// CSV with header `k,lambda`.
    pub path: Option<String>,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            kind: "geometric".into(),
            count: 16,
            base: 2.0,
            scale: 1.0,
            values: Vec::new(),
            path: None,
        }
    }
}

/// Mode k starts from (u0, u1)·decay^k.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub u0: f64,
    pub u1: f64,
    pub decay: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            u0: 0.0,
            u1: 0.0,
            decay: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSection {
    /// `zero`, `constant`, `sinusoid`, `square_wave` or `pieces`.
    pub kind: String,
    /// Mode k gets amplitude·decay^k.
    pub amplitude: f64,
    pub decay: f64,
    pub omega: f64,
    pub phase: f64,
    pub start: f64,
    /// Defaults to the last grid time.
    pub end: Option<f64>,
    pub ramp: f64,
    pub period: f64,
    pub piece_mode: Vec<usize>,
    pub piece_start: Vec<f64>,
    pub piece_end: Vec<f64>,
    pub piece_c0: Vec<f64>,
    pub piece_c1: Vec<f64>,
    pub piece_omega: Vec<f64>,
    pub piece_phase: Vec<f64>,
}

impl Default for ForcingSection {
    fn default() -> Self {
        Self {
            kind: "zero".into(),
            amplitude: 1.0,
            decay: 1.0,
            omega: 0.0,
            phase: std::f64::consts::FRAC_PI_2,
            start: 0.0,
            end: None,
            ramp: 0.0,
            period: 1.0,
            piece_mode: Vec::new(),
            piece_start: Vec::new(),
            piece_end: Vec::new(),
            piece_c0: Vec::new(),
            piece_c1: Vec::new(),
            piece_omega: Vec::new(),
            piece_phase: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// `linear`, `log` or `list`.
    pub t_spacing: String,
    pub t_start: f64,
    pub t_end: f64,
    pub t_count: usize,
    pub times: Vec<f64>,
    pub alphas: Vec<f64>,
    /// σ values for `diagram`.
    pub sigmas: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            t_spacing: "linear".into(),
            t_start: 0.0,
            t_end: 1.0,
            t_count: 11,
            times: Vec::new(),
            alphas: vec![0.0],
            sigmas: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GapSection {
    pub alpha0: f64,
    pub alpha1: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    pub convergence_ratio: f64,
    pub min_levels: usize,
    pub min_r2: f64,
    pub min_exponent: f64,
    pub bounded_spread: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        let d = ProbeThresholds::default();
        Self {
            convergence_ratio: d.convergence_ratio,
            min_levels: d.min_levels,
            min_r2: d.min_r2,
            min_exponent: d.min_exponent,
            bounded_spread: d.bounded_spread,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CounterexampleSection {
    pub statement: Option<u8>,
    /// Target times, one per part of the spectrum.
    pub targets: Vec<f64>,
    pub eta: f64,
    /// Threshold construction: number of stages, ramp fraction, mode cap,
    /// and the log-geometric spectrum λ_k = first·ratio^k it runs on.
    pub stages: usize,
    pub ramp_fraction: f64,
    pub max_modes: usize,
    pub first: f64,
    pub ratio: f64,
}

impl Default for CounterexampleSection {
    fn default() -> Self {
        Self {
            statement: None,
            targets: vec![0.5, 1.0],
            eta: 1.0,
            stages: 4,
            ramp_fraction: 1e-3,
            max_modes: 1 << 26,
            first: 2.0,
            ratio: 2.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Random forcings per σ in the energy check.
    pub trials: usize,
    pub modes: usize,
    pub seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            trials: 20,
            modes: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {x}")))
    }
}

fn finite(field: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite, got {x}")))
    }
}

fn unit_open(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in (0, 1), got {x}")))
    }
}

impl ExperimentConfig {
    /// Parses and validates config text; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        let s = &self.spectrum;
        match s.kind.as_str() {
            "geometric" => {
                if s.count == 0 {
                    return Err(invalid("spectrum.count", "must be at least 1"));
                }
                positive("spectrum.scale", s.scale)?;
                if !(s.base > 1.0) || !s.base.is_finite() {
                    return Err(invalid("spectrum.base", "must exceed 1"));
                }
            }
            "list" => {
                if s.values.is_empty() {
                    return Err(invalid("spectrum.values", "must be nonempty"));
                }
                for &v in &s.values {
                    positive("spectrum.values", v)?;
                }
            }
            "file" => {
                let Some(p) = &s.path else {
                    return Err(invalid("spectrum.path", "required when kind = \"file\""));
                };
                if !self.resolve(p).is_file() {
                    return Err(invalid("spectrum.path", format!("file {p} does not exist")));
                }
            }
            k => return Err(invalid("spectrum.kind", format!("unknown kind {k:?}; expected geometric, list or file"))),
        }
        finite("initial.u0", self.initial.u0)?;
        finite("initial.u1", self.initial.u1)?;
        positive("initial.decay", self.initial.decay)?;

        let g = &self.grid;
        match g.t_spacing.as_str() {
            "linear" | "log" => {
                if g.t_count < 2 {
                    return Err(invalid("grid.t_count", "must be at least 2"));
                }
                finite("grid.t_start", g.t_start)?;
                finite("grid.t_end", g.t_end)?;
                if !(g.t_start >= 0.0) || !(g.t_end > g.t_start) {
                    return Err(invalid("grid.t_end", "need 0 <= t_start < t_end"));
                }
                if g.t_spacing == "log" && !(g.t_start > 0.0) {
                    return Err(invalid("grid.t_start", "must be positive for log spacing"));
                }
            }
            "list" => {
                if g.times.is_empty() {
                    return Err(invalid("grid.times", "must be nonempty"));
                }
                if g.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || g.times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("grid.times", "must be finite, nonnegative and strictly increasing"));
                }
            }
            k => return Err(invalid("grid.t_spacing", format!("unknown spacing {k:?}; expected linear, log or list"))),
        }
        if g.alphas.is_empty() {
            return Err(invalid("grid.alphas", "must be nonempty"));
        }
        for &a in g.alphas.iter().chain(&g.sigmas) {
            finite("grid.alphas", a)?;
        }

        let f = &self.forcing;
        for (name, v) in [
            ("forcing.amplitude", f.amplitude),
            ("forcing.omega", f.omega),
            ("forcing.phase", f.phase),
            ("forcing.start", f.start),
        ] {
            finite(name, v)?;
        }
        positive("forcing.decay", f.decay)?;
        match f.kind.as_str() {
            "zero" | "constant" => {}
            "sinusoid" => {
                if f.start < 0.0 {
                    return Err(invalid("forcing.start", "must be nonnegative"));
                }
                if let Some(e) = f.end {
                    if !(e > f.start) {
                        return Err(invalid("forcing.end", "must exceed forcing.start"));
                    }
                }
                if !(f.ramp >= 0.0) {
                    return Err(invalid("forcing.ramp", "must be nonnegative"));
                }
            }
            "square_wave" => {
                positive("forcing.period", f.period)?;
                if !(f.ramp > 0.0) || f.ramp > 0.5 * f.period {
                    return Err(invalid("forcing.ramp", "must lie in (0, period/2]"));
                }
            }
            "pieces" => {
                let n = f.piece_mode.len();
                for (name, len) in [
                    ("forcing.piece_start", f.piece_start.len()),
                    ("forcing.piece_end", f.piece_end.len()),
                    ("forcing.piece_c0", f.piece_c0.len()),
                    ("forcing.piece_c1", f.piece_c1.len()),
                    ("forcing.piece_omega", f.piece_omega.len()),
                    ("forcing.piece_phase", f.piece_phase.len()),
                ] {
                    if len != n {
                        return Err(invalid(name, format!("has {len} entries, forcing.piece_mode has {n}")));
                    }
                }
                if f.piece_start.iter().zip(&f.piece_end).any(|(a, b)| !(*a >= 0.0) || !(b > a)) {
                    return Err(invalid("forcing.piece_end", "each piece needs 0 <= start < end"));
                }
                let k = self.mode_count()?;
                if let Some(&bad) = f.piece_mode.iter().find(|&&i| i >= k) {
                    return Err(invalid("forcing.piece_mode", format!("index {bad} outside the {k}-mode spectrum")));
                }
            }
            k => {
                return Err(invalid(
                    "forcing.kind",
                    format!("unknown kind {k:?}; expected zero, constant, sinusoid, square_wave or pieces"),
                ))
            }
        }

        finite("gap.alpha0", self.gap.alpha0)?;
        finite("gap.alpha1", self.gap.alpha1)?;

        let t = &self.thresholds;
        unit_open("thresholds.convergence_ratio", t.convergence_ratio)?;
        unit_open("thresholds.min_r2", t.min_r2)?;
        positive("thresholds.min_exponent", t.min_exponent)?;
        if !(t.bounded_spread > 1.0) {
            return Err(invalid("thresholds.bounded_spread", "must exceed 1"));
        }
        if t.min_levels < 3 {
            return Err(invalid("thresholds.min_levels", "must be at least 3"));
        }

        let c = &self.counterexample;
        if let Some(s) = c.statement {
            if !(1..=4).contains(&s) {
                return Err(invalid("counterexample.statement", "must be 1, 2, 3 or 4"));
            }
        }
        if c.targets.is_empty() {
            return Err(invalid("counterexample.targets", "must be nonempty"));
        }
        for &x in &c.targets {
            positive("counterexample.targets", x)?;
        }
        positive("counterexample.eta", c.eta)?;
        unit_open("counterexample.ramp_fraction", c.ramp_fraction)?;
        if c.stages == 0 {
            return Err(invalid("counterexample.stages", "must be at least 1"));
        }
        positive("counterexample.first", c.first)?;
        if !(c.ratio > 1.0) {
            return Err(invalid("counterexample.ratio", "must exceed 1"));
        }
        if self.verify.modes == 0 {
            return Err(invalid("verify.modes", "must be at least 1"));
        }
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir", "must be nonempty"));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn params(&self) -> Result<DampingParams> {
        DampingParams::new(self.damping.sigma, self.damping.delta).map_err(|e| match e {
            dampwave::Error::InvalidArgument { name, constraint } => invalid(&format!("damping.{name}"), constraint),
            e => invalid("damping", e.to_string()),
        })
    }

    fn mode_count(&self) -> Result<usize> {
        Ok(match self.spectrum.kind.as_str() {
            "geometric" => self.spectrum.count,
            "list" => self.spectrum.values.len(),
            _ => self.spectrum()?.len(),
        })
    }

    pub fn spectrum(&self) -> Result<SpectrumModel> {
        let s = &self.spectrum;
        let m = match s.kind.as_str() {
            "geometric" => geometric_spectrum(s.count, s.base, s.scale)?,
            "list" => SpectrumModel::new(s.values.clone())?,
            _ => {
                let path = self.resolve(s.path.as_deref().unwrap_or_default());
                let mut rd = csv::Reader::from_path(&path)?;
                let mut values = Vec::new();
                for (i, rec) in rd.records().enumerate() {
                    let rec = rec?;
                    let k: usize = rec.get(0).and_then(|x| x.trim().parse().ok()).ok_or_else(|| {
                        invalid("spectrum.path", format!("row {}: bad index column", i + 1))
                    })?;
                    let l: f64 = rec.get(1).and_then(|x| x.trim().parse().ok()).ok_or_else(|| {
                        invalid("spectrum.path", format!("row {}: bad lambda column", i + 1))
                    })?;
                    if k != i {
                        return Err(invalid("spectrum.path", format!("row {}: expected k = {i}, got {k}", i + 1)));
                    }
                    values.push(l);
                }
                SpectrumModel::new(values)?
            }
        };
        Ok(m)
    }

    pub fn times(&self) -> Vec<f64> {
        let g = &self.grid;
        match g.t_spacing.as_str() {
            "linear" => linear_grid(g.t_start, g.t_end, g.t_count),
            "log" => log_grid(g.t_start, g.t_end, g.t_count),
            _ => g.times.clone(),
        }
    }

    pub fn thresholds(&self) -> ProbeThresholds {
        let t = &self.thresholds;
        ProbeThresholds {
            convergence_ratio: t.convergence_ratio,
            min_levels: t.min_levels,
            min_r2: t.min_r2,
            min_exponent: t.min_exponent,
            bounded_spread: t.bounded_spread,
        }
    }

    pub fn initial_data(&self, k: usize) -> (SpectralVector, SpectralVector) {
        let i = &self.initial;
        let w: Vec<f64> = (0..k).map(|j| i.decay.powi(j as i32)).collect();
        (
            SpectralVector::new(w.iter().map(|x| i.u0 * x).collect()),
            SpectralVector::new(w.iter().map(|x| i.u1 * x).collect()),
        )
    }

    pub fn is_forced(&self) -> bool {
        self.forcing.kind != "zero"
    }

    /// Forcing over `k` modes up to `horizon`.
    pub fn forcing_spec(&self, k: usize, horizon: f64) -> Result<ForcingSpec> {
        let f = &self.forcing;
        let amp = |j: usize| f.amplitude * f.decay.powi(j as i32);
        let modes: Vec<ModeForcing> = match f.kind.as_str() {
            "zero" => vec![ModeForcing::Zero; k],
            "constant" => (0..k).map(|j| ModeForcing::Constant(amp(j))).collect(),
            "sinusoid" => {
                let end = f.end.unwrap_or(horizon);
                (0..k)
                    .map(|j| ModeForcing::WindowedSinusoid {
                        amplitude: amp(j),
                        omega: f.omega,
                        phase: f.phase,
                        start: f.start,
                        end,
                        ramp: f.ramp,
                    })
                    .collect()
            }
            "square_wave" => {
                let wave = PeriodicForcing::smoothed_square_wave(f.period, 1.0, f.ramp)?;
                let unit = wave.pieces_on(0.0, horizon);
                (0..k)
                    .map(|j| {
                        let a = amp(j);
                        ModeForcing::Pieces(
                            unit.iter()
                                .map(|p| Piece {
                                    c0: p.c0 * a,
                                    c1: p.c1 * a,
                                    ..*p
                                })
                                .collect(),
                        )
                    })
                    .collect()
            }
            _ => {
                let mut per: Vec<Vec<Piece>> = vec![Vec::new(); k];
                for i in 0..f.piece_mode.len() {
                    per[f.piece_mode[i]].push(Piece::sinusoid(
                        f.piece_start[i],
                        f.piece_end[i],
                        f.piece_c0[i],
                        f.piece_c1[i],
                        f.piece_omega[i],
                        f.piece_phase[i],
                    ));
                }
                per.into_iter()
                    .map(|ps| if ps.is_empty() { ModeForcing::Zero } else { ModeForcing::Pieces(ps) })
                    .collect()
            }
        };
        ForcingSpec::new(modes, 1.0).map_err(HarnessError::from)
    }
}

/// Flat `[forcing]` section of kind `pieces` reproducing `f` up to `horizon`.
pub fn forcing_section_text(f: &ForcingSpec, horizon: f64) -> String {
    let mut cols: [Vec<String>; 7] = Default::default();
    for k in 0..f.len() {
        for p in f.mode(k).pieces(horizon) {
            let scale = p.carrier.norm();
            if scale == 0.0 {
                continue;
            }
            let phase = p.carrier.arg() + std::f64::consts::FRAC_PI_2;
            let row = [
                k.to_string(),
                crate::emit::num(p.start),
                crate::emit::num(p.end),
                crate::emit::num(p.c0 * scale),
                crate::emit::num(p.c1 * scale),
                crate::emit::num(p.omega),
                crate::emit::num(phase),
            ];
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
    }
    let names = ["piece_mode", "piece_start", "piece_end", "piece_c0", "piece_c1", "piece_omega", "piece_phase"];
    let mut out = String::from("[forcing]\nkind = \"pieces\"\n");
    for (n, c) in names.iter().zip(&cols) {
        out.push_str(&format!("{n} = [{}]\n", c.join(", ")));
    }
    out
}
