//! Python module `dampwave`: damping parameters, characteristic roots,
//! spectral solves and the regularity probes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dampwave::charpoly::{self, CharRoots};
use dampwave::counterexamples;
use dampwave::duhamel::{self, ForcingSpec, ModeForcing};
use dampwave::oracle::{self, OracleConfig, OracleMethod};
use dampwave::probe::{self, ProbeThresholds};
use dampwave::propagator::{self, ModeIC, SpectralTrajectory};
use dampwave::spectrum::{self, SpectralVector, SpectrumModel};

fn err(e: dampwave::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "DampingParams", frozen)]
struct PyParams(charpoly::DampingParams);

#[pymethods]
impl PyParams {
    #[new]
    fn new(sigma: f64, delta: f64) -> PyResult<Self> {
        charpoly::DampingParams::new(sigma, delta).map(Self).map_err(err)
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta
    }

    fn discriminant(&self, lam: f64) -> f64 {
        charpoly::discriminant(&self.0, lam)
    }

    fn regime(&self, lam: f64) -> &'static str {
        charpoly::classify(&self.0, lam).name()
    }

    fn roots(&self, lam: f64) -> PyRoots {
        PyRoots(charpoly::roots(&self.0, lam))
    }

    /// |p(−x)| / (x² + 2δλ^σ x + λ) for a candidate decay rate x.
    fn backward_error(&self, lam: f64, x: f64) -> f64 {
        charpoly::backward_error(&self.0, lam, x)
    }

    fn __repr__(&self) -> String {
        format!("DampingParams(sigma={:?}, delta={:?})", self.0.sigma, self.0.delta)
    }
}

/// Characteristic roots; real roots are reported as positive decay rates.
#[pyclass(name = "Roots", frozen)]
struct PyRoots(CharRoots);

#[pymethods]
impl PyRoots {
    #[getter]
    fn regime(&self) -> &'static str {
        self.0.regime().name()
    }

    #[getter]
    fn slow_rate(&self) -> f64 {
        self.0.slow_rate()
    }

    #[getter]
    fn fast_rate(&self) -> f64 {
        self.0.fast_rate()
    }

    /// (x1, x2) for real pairs, (r, r) for a double root, (a, b) for −a ± ib.
    fn columns(&self) -> (f64, f64) {
        self.0.columns()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "Spectrum", frozen)]
struct PySpectrum(SpectrumModel);

#[pymethods]
impl PySpectrum {
    #[new]
    fn new(eigenvalues: Vec<f64>) -> PyResult<Self> {
        SpectrumModel::new(eigenvalues).map(Self).map_err(err)
    }

    /// scale·base^k for k = 0..count.
    #[staticmethod]
    #[pyo3(signature = (count, base = 2.0, scale = 1.0))]
    fn geometric(count: usize, base: f64, scale: f64) -> PyResult<Self> {
        spectrum::geometric_spectrum(count, base, scale).map(Self).map_err(err)
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    fn restrict(&self, indices: Vec<usize>) -> PyResult<Self> {
        self.0.restrict(&indices).map(Self).map_err(err)
    }

    /// |A^α v| for spectral coefficients v.
    fn norm(&self, coefficients: Vec<f64>, alpha: f64) -> PyResult<f64> {
        spectrum::sobolev_norm(&SpectralVector::new(coefficients), alpha, &self.0).map_err(err)
    }

    /// Membership of v in D(A^α) judged from √2-spaced partial sums.
    fn membership(&self, coefficients: Vec<f64>, alpha: f64) -> PyResult<&'static str> {
        let levels = probe::truncation_levels(self.0.len());
        let sums = probe::weighted_partial_sums(&coefficients, alpha, &self.0, &levels).map_err(err)?;
        probe::membership_diagnosis(&sums, &ProbeThresholds::default())
            .map(|m| m.name())
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Forcing", frozen)]
struct PyForcing(ForcingSpec);

#[pymethods]
impl PyForcing {
    #[staticmethod]
    fn zero(count: usize) -> Self {
        Self(ForcingSpec::zero(count))
    }

    /// f_k(t) = amplitudes[k] for all t ≥ 0.
    #[staticmethod]
    fn constant(amplitudes: Vec<f64>) -> PyResult<Self> {
        ForcingSpec::new(amplitudes.into_iter().map(ModeForcing::Constant).collect(), 1.0)
            .map(Self)
            .map_err(err)
    }

    /// f_k(t) = amplitudes[k]·sin(ωt + φ) on [start, end) with linear ramps.
    #[staticmethod]
    #[pyo3(signature = (amplitudes, omega, phase = 0.0, start = 0.0, end = f64::INFINITY, ramp = 0.0))]
    fn sinusoid(amplitudes: Vec<f64>, omega: f64, phase: f64, start: f64, end: f64, ramp: f64) -> PyResult<Self> {
        let modes = amplitudes
            .into_iter()
            .map(|amplitude| ModeForcing::WindowedSinusoid {
                amplitude,
                omega,
                phase,
                start,
                end,
                ramp,
            })
            .collect();
        ForcingSpec::new(modes, 1.0).map(Self).map_err(err)
    }

    fn norm_at(&self, t: f64) -> f64 {
        self.0.norm_at(t)
    }

    fn sup_bound(&self) -> f64 {
        self.0.sup_bound()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory(SpectralTrajectory);

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    /// Coefficients of u(t_i).
    fn position(&self, i: usize) -> PyResult<Vec<f64>> {
        self.check(i)?;
        Ok(self.0.position(i).coefficients)
    }

    /// Coefficients of u'(t_i).
    fn velocity(&self, i: usize) -> PyResult<Vec<f64>> {
        self.check(i)?;
        Ok(self.0.velocity(i).coefficients)
    }

    /// (u, u') samples of mode k.
    fn mode(&self, k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let m = self
            .0
            .modes
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("mode {k} out of range")))?;
        Ok((m.u.clone(), m.uprime.clone()))
    }

    fn __len__(&self) -> usize {
        self.0.times.len()
    }
}

impl PyTrajectory {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.0.times.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("time index {i} out of range")))
        }
    }
}

/// Exact spectral solution on `times`; u0, u1 default to zero.
#[pyfunction]
#[pyo3(signature = (spectrum, params, times, u0 = None, u1 = None, forcing = None))]
fn solve(
    spectrum: &PySpectrum,
    params: &PyParams,
    times: Vec<f64>,
    u0: Option<Vec<f64>>,
    u1: Option<Vec<f64>>,
    forcing: Option<&PyForcing>,
) -> PyResult<PyTrajectory> {
    let (m, p) = (&spectrum.0, &params.0);
    let zeros = || vec![0.0; m.len()];
    let u0 = SpectralVector::new(u0.unwrap_or_else(zeros));
    let u1 = SpectralVector::new(u1.unwrap_or_else(zeros));
    let mut tr = propagator::homogeneous_solve(m, p, &u0, &u1, &times).map_err(err)?;
    if let Some(f) = forcing {
        let forced = duhamel::forced_solve(m, p, &f.0, &times).map_err(err)?;
        for (h, g) in tr.modes.iter_mut().zip(&forced.modes) {
            for i in 0..h.len() {
                h.u[i] += g.u[i];
                h.uprime[i] += g.uprime[i];
            }
        }
    }
    Ok(PyTrajectory(tr))
}

/// Reference integration of one mode: returns (u, u', error estimate).
#[pyfunction]
#[pyo3(signature = (params, lam, u0, u1, times, method = "auto"))]
fn oracle_mode(
    params: &PyParams,
    lam: f64,
    u0: f64,
    u1: f64,
    times: Vec<f64>,
    method: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let method = match method {
        "auto" => OracleMethod::Auto,
        "rk45" => OracleMethod::Embedded45,
        "rk78" => OracleMethod::Embedded78,
        "exponential" => OracleMethod::Exponential,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    let cfg = OracleConfig {
        method,
        ..OracleConfig::default()
    };
    let run = oracle::integrate_mode(&params.0, lam, &ModeForcing::Zero, ModeIC::new(u0, u1), &times, &cfg)
        .map_err(err)?;
    Ok((run.trajectory.u, run.trajectory.uprime, run.error_estimate))
}

/// (name, exponent) of the growth law of a norm history; exponent is NaN
/// unless the fit is a power law.
#[pyfunction]
fn fit_growth(times: Vec<f64>, norms: Vec<f64>) -> PyResult<(&'static str, f64)> {
    let fit = probe::fit_growth(&times, &norms, &ProbeThresholds::default()).map_err(err)?;
    Ok((fit.name(), fit.exponent()))
}

/// (minimum margin, quadrature error) of the energy inequality along a trajectory.
#[pyfunction]
fn energy_margin(
    trajectory: &PyTrajectory,
    spectrum: &PySpectrum,
    forcing: &PyForcing,
    params: &PyParams,
) -> PyResult<(f64, f64)> {
    let led = probe::energy_check(&trajectory.0, &spectrum.0, &forcing.0, &params.0).map_err(err)?;
    Ok((led.min_margin, led.quadrature_error))
}

/// (σ0, σ1, c0, c1) of the window family losing D(A^σ0) × D(A^σ1).
#[pyfunction]
fn blowup_constants(params: &PyParams) -> PyResult<(f64, f64, f64, f64)> {
    let t = counterexamples::blowup_triple(&params.0).map_err(err)?;
    Ok((t.sigma0, t.sigma1, t.c0, t.c1))
}

#[pymodule]
#[pyo3(name = "dampwave")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyRoots>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyForcing>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_mode, m)?)?;
    m.add_function(wrap_pyfunction!(fit_growth, m)?)?;
    m.add_function(wrap_pyfunction!(energy_margin, m)?)?;
    m.add_function(wrap_pyfunction!(blowup_constants, m)?)?;
    Ok(())
}
