//! Finite diagonal model of a positive self-adjoint operator.
//!
//! Eigenvalues are stored both directly and as logarithms. Values beyond the
//! double range (as produced by very long geometric sweeps) keep an exact
//! logarithm and an infinite direct value; weighted norms then switch to
//! log-domain accumulation.

use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;

/// Above this eigenvalue, `λ^{2α}` is formed in the log domain.
pub const DIRECT_POWER_CAP: f64 = 1e15;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumModel {
    eigenvalues: Vec<f64>,
    ln_eigenvalues: Vec<f64>,
    coercivity_floor: f64,
}

impl SpectrumModel {
    /// Builds a model whose coercivity floor is the smallest eigenvalue.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        let floor = eigenvalues.first().copied().unwrap_or(0.0);
        Self::with_floor(eigenvalues, floor)
    }

    pub fn with_floor(eigenvalues: Vec<f64>, coercivity_floor: f64) -> Result<Self> {
        let ln: Vec<f64> = eigenvalues.iter().map(|l| l.ln()).collect();
        Self::build(eigenvalues, ln, coercivity_floor)
    }

    /// Builds a model from natural logarithms of the eigenvalues.
    pub fn from_ln(ln_eigenvalues: Vec<f64>) -> Result<Self> {
        let eig: Vec<f64> = ln_eigenvalues.iter().map(|l| l.exp()).collect();
        let floor = eig.first().copied().unwrap_or(0.0);
        Self::build(eig, ln_eigenvalues, floor)
    }

    fn build(eigenvalues: Vec<f64>, ln_eigenvalues: Vec<f64>, floor: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(invalid("eigenvalues", "at least one mode is required"));
        }
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(invalid("coercivity_floor", "must be positive and finite"));
        }
        for (k, l) in ln_eigenvalues.iter().enumerate() {
            if !l.is_finite() {
                return Err(invalid("eigenvalues", format!("mode {k} is not a positive finite value")));
            }
        }
        if ln_eigenvalues.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("eigenvalues", "must be strictly increasing"));
        }
        if eigenvalues[0] < floor * (1.0 - 1e-15) {
            return Err(invalid("coercivity_floor", "must not exceed the smallest eigenvalue"));
        }
        Ok(Self {
            eigenvalues,
            ln_eigenvalues,
            coercivity_floor: floor,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// λ_k; infinite when the value exceeds the double range.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn ln_eigenvalue(&self, k: usize) -> f64 {
        self.ln_eigenvalues[k]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ln_eigenvalues(&self) -> &[f64] {
        &self.ln_eigenvalues
    }

    pub fn coercivity_floor(&self) -> f64 {
        self.coercivity_floor
    }

    /// Restriction to the given (ascending) indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let eig = indices.iter().map(|&i| self.eigenvalues[i]).collect();
        let ln = indices.iter().map(|&i| self.ln_eigenvalues[i]).collect();
        Self::build(eig, ln, self.coercivity_floor)
    }

    /// `k,lambda` rows.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.eigenvalues.iter().copied().enumerate()
    }
}

/// Components of a vector against the eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVector {
    pub coefficients: Vec<f64>,
}

impl SpectralVector {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            coefficients: vec![0.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn check(&self, m: &SpectrumModel) -> Result<()> {
        if self.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// ‖v‖ in D(A^α): sqrt(Σ λ_k^{2α} v_k²), summed in ascending k.
pub fn sobolev_norm(v: &SpectralVector, alpha: f64, m: &SpectrumModel) -> Result<f64> {
    v.check(m)?;
    Ok(weighted_norm(&v.coefficients, alpha, m.eigenvalues(), m.ln_eigenvalues()))
}

/// Same as [`sobolev_norm`] on raw slices; no length check.
pub fn weighted_norm(coeffs: &[f64], alpha: f64, eig: &[f64], ln_eig: &[f64]) -> f64 {
    let direct = eig.iter().all(|&l| l <= DIRECT_POWER_CAP);
    if direct {
        let mut s = CompensatedSum::new();
        for (c, l) in coeffs.iter().zip(eig) {
            let w = l.powf(alpha) * c;
            s.add(w * w);
        }
        let v = s.value();
        if v.is_finite() {
            return v.sqrt();
        }
    }
    // log domain: ln(λ^{2α} c²) = 2α ln λ + 2 ln|c|
    let logs: Vec<f64> = coeffs
        .iter()
        .zip(ln_eig)
        .map(|(c, l)| {
            if *c == 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * (alpha * l + c.abs().ln())
            }
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut s = CompensatedSum::new();
    for l in &logs {
        s.add((l - top).exp());
    }
    (0.5 * (top + s.value().ln())).exp()
}

/// λ_k = scale·base^k for k < K.
pub fn geometric_spectrum(k: usize, base: f64, scale: f64) -> Result<SpectrumModel> {
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    if !(base > 1.0) {
        return Err(invalid("base", "must exceed 1"));
    }
    if !(scale > 0.0) {
        return Err(invalid("scale", "must be positive"));
    }
    let (ls, lb) = (scale.ln(), base.ln());
    let ln: Vec<f64> = (0..k).map(|i| ls + lb * i as f64).collect();
    let eig: Vec<f64> = (0..k as i32)
        .map(|i| {
            let v = scale * base.powi(i);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        })
        .collect();
    SpectrumModel::build(eig, ln, scale)
}

/// Splits indices 0..K into `n_parts` residue classes.
pub fn partition_interleave(k: usize, n_parts: usize) -> Result<Vec<Vec<usize>>> {
    if n_parts == 0 {
        return Err(invalid("n_parts", "must be at least 1"));
    }
    let mut parts = vec![Vec::new(); n_parts];
    for i in 0..k {
        parts[i % n_parts].push(i);
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vector_has_zero_norm() {
        let m = geometric_spectrum(5, 2.0, 1.0).unwrap();
        for a in [0.0, 0.5, 2.5] {
            assert_eq!(sobolev_norm(&SpectralVector::zeros(5), a, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_mode_norm() {
        let m = SpectrumModel::new(vec![1.0, 4.0]).unwrap();
        let v = SpectralVector::new(vec![1.0, 1.0]);
        assert!((sobolev_norm(&v, 0.5, &m).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identity_weight() {
        let m = SpectrumModel::new(vec![1.0]).unwrap();
        assert_eq!(sobolev_norm(&SpectralVector::new(vec![3.0]), 0.0, &m).unwrap(), 3.0);
    }

    #[test]
    fn length_mismatch_is_structural() {
        let m = SpectrumModel::new(vec![1.0, 2.0]).unwrap();
        let e = sobolev_norm(&SpectralVector::new(vec![1.0]), 0.0, &m).unwrap_err();
        assert!(matches!(e, Error::LengthMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(geometric_spectrum(3, 2.0, 1.0).unwrap().eigenvalues(), &[1.0, 2.0, 4.0]);
        assert_eq!(geometric_spectrum(1, 2.0, 5.0).unwrap().eigenvalues(), &[5.0]);
        let m = geometric_spectrum(64, 2.0, 1.0).unwrap();
        assert_eq!(m.eigenvalue(63), 2f64.powi(63));
        assert!(geometric_spectrum(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn huge_spectrum_keeps_logs() {
        let m = geometric_spectrum(2000, 2.0, 1.0).unwrap();
        assert!(m.eigenvalue(1999).is_infinite());
        assert!((m.ln_eigenvalue(1999) - 1999.0 * 2f64.ln()).abs() < 1e-9);
        let mut c = vec![0.0; 2000];
        c[1999] = 1.0;
        // λ^{α} with α tiny stays finite through the log path
        let n = sobolev_norm(&SpectralVector::new(c), 1e-3, &m).unwrap();
        assert!((n - (1999.0 * 2f64.ln() * 1e-3).exp()).abs() < 1e-12);
    }

    #[test]
    fn interleave_examples() {
        assert_eq!(partition_interleave(6, 2).unwrap(), vec![vec![0, 2, 4], vec![1, 3, 5]]);
        assert_eq!(partition_interleave(5, 5).unwrap().len(), 5);
        assert_eq!(
            partition_interleave(8, 3).unwrap(),
            vec![vec![0, 3, 6], vec![1, 4, 7], vec![2, 5]]
        );
    }

    #[test]
    fn rejects_unsorted() {
        assert!(SpectrumModel::new(vec![2.0, 1.0]).is_err());
        assert!(SpectrumModel::with_floor(vec![1.0, 2.0], 3.0).is_err());
    }
}
