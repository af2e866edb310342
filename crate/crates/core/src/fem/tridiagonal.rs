use crate::error::{Error, Result};

/// Banded matrix with one sub- and one super-diagonal.
///
/// `lower[i]` sits at `(i + 1, i)` and `upper[i]` at `(i, i + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalMatrix {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    symmetric: bool,
}

impl TridiagonalMatrix {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::domain("tridiagonal matrix needs at least one row"));
        }
        if lower.len() != n - 1 || upper.len() != n - 1 {
            return Err(Error::domain(format!(
                "off-diagonals must have length {}, got {} and {}",
                n - 1,
                lower.len(),
                upper.len()
            )));
        }
        let symmetric = lower == upper;
        Ok(Self {
            lower,
            diag,
            upper,
            symmetric,
        })
    }

    /// Symmetric matrix with constant stencil `[off, main, off]`.
    pub fn constant_symmetric(n: usize, main: f64, off: f64) -> Self {
        assert!(n > 0, "empty matrix");
        Self {
            lower: vec![off; n - 1],
            diag: vec![main; n],
            upper: vec![off; n - 1],
            symmetric: true,
        }
    }

    /// Symmetric matrix from its diagonal and off-diagonal.
    pub(crate) fn from_symmetric_parts(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len());
        Self {
            lower: off.clone(),
            diag,
            upper: off,
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match j as isize - i as isize {
            0 => self.diag[i],
            1 => self.upper[i],
            -1 => self.lower[j],
            _ => 0.0,
        }
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim(), other.dim());
        let zip = |p: &[f64], q: &[f64]| -> Vec<f64> {
            p.iter().zip(q).map(|(x, y)| a * x + b * y).collect()
        };
        Self {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
            symmetric: self.symmetric && other.symmetric,
        }
    }

    /// Solves `self * x = rhs` by the Thomas algorithm.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        let mut scratch = vec![0.0; self.dim()];
        self.solve_in_place(&mut x, &mut scratch)?;
        Ok(x)
    }

    /// Thomas solve overwriting `rhs` with the solution. `scratch` must have
    /// length `dim()`.
    pub fn solve_in_place(&self, rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        thomas(&self.lower, &self.diag, &self.upper, rhs, scratch)
    }
}

/// Thomas algorithm without pivoting. Fine for the diagonally dominant and
/// SPD systems assembled here.
pub(crate) fn thomas(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    if rhs.len() != n || scratch.len() != n {
        return Err(Error::domain(format!(
            "tridiagonal solve: system of size {n}, rhs of length {}",
            rhs.len()
        )));
    }
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::domain("tridiagonal solve: singular pivot in row 0"));
    }
    rhs[0] /= pivot;
    for i in 1..n {
        scratch[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i - 1] * scratch[i];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::domain(format!(
                "tridiagonal solve: singular pivot in row {i}"
            )));
        }
        rhs[i] = (rhs[i] - lower[i - 1] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i + 1] * rhs[i + 1];
    }
    Ok(())
}
