//! Spectral data of `A = -Δ` on (0, 1) with Dirichlet conditions, the
//! covariance `Q = A^{-s}`, and the generalized eigensystem of the discrete
//! pair (stiffness, mass).

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, mass_form, sine_hat_inner, FemFunction, UniformMesh};

/// `λ_k = (kπ)²`.
pub fn eigenvalue(k: i64) -> Result<f64> {
    if k < 1 {
        return Err(Error::domain(format!("eigenvalue index {k} must be >= 1")));
    }
    let kpi = k as f64 * PI;
    Ok(kpi * kpi)
}

#[inline]
pub(crate) fn lambda(k: usize) -> f64 {
    let kpi = k as f64 * PI;
    kpi * kpi
}

/// `e_k(x) = √2 sin(kπx)`.
pub fn eigenfunction(k: usize, x: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * x).sin()
}

/// The first `modes` eigenpairs of `A`. Coefficient vectors are indexed from
/// mode 1 (`coeffs[0]` multiplies `e_1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOperator {
    modes: usize,
}

impl SpectralOperator {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::domain("spectral operator needs at least one mode"));
        }
        Ok(Self { modes })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> {
        (1..=self.modes).map(lambda)
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() > self.modes {
            return Err(Error::domain(format!(
                "{} coefficients for an operator truncated at {} modes",
                coeffs.len(),
                self.modes
            )));
        }
        Ok(())
    }

    /// `S(t) = e^{-tA}` applied to modal coefficients.
    pub fn semigroup_apply(&self, t: f64, coeffs: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("semigroup time {t} must be >= 0")));
        }
        self.check_len(coeffs)?;
        Ok(coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * (-lambda(i + 1) * t).exp())
            .collect())
    }

    /// `A^α` applied to modal coefficients; any real `α`.
    pub fn power_apply(&self, alpha: f64, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs)?;
        Ok(coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * lambda(i + 1).powf(alpha))
            .collect())
    }
}

/// Free-function form of [`SpectralOperator::semigroup_apply`] with no mode cap.
pub fn exact_semigroup_apply(t: f64, modal_coeffs: &[f64]) -> Result<Vec<f64>> {
    SpectralOperator::new(modal_coeffs.len().max(1))?.semigroup_apply(t, modal_coeffs)
}

/// `Q = A^{-s}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceSpec {
    exponent: f64,
}

impl CovarianceSpec {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(Error::domain(format!(
                "covariance exponent {exponent} must be finite and >= 0"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `σ_k = λ_k^{-s/2}`.
    pub fn mode_std(&self, k: usize) -> f64 {
        lambda(k).powf(-self.exponent / 2.0)
    }

    /// Whether `‖A^{(γ-1)/2} Q^{1/2}‖_{L_2}` is finite in one dimension.
    pub fn admissible_for(&self, gamma: f64) -> bool {
        self.exponent > gamma - 0.5
    }

    /// Largest `γ ∈ [1, 2]` the covariance supports, capped at 2. For
    /// `s ∈ (1/2, 3/2]` this is the supremum `s + 1/2`, which is itself not
    /// admissible; the rates below it are.
    pub fn regularity_index(&self) -> f64 {
        (self.exponent + 0.5).clamp(1.0, 2.0)
    }
}

/// Ways to close the tail of `Σ_k λ_k^{p}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailStrategy {
    /// Midpoint of the integral-comparison bracket
    /// `∫_{K+1}^∞ f ≤ Σ_{k>K} f(k) ≤ ∫_K^∞ f`.
    Bracket,
    /// Euler-Maclaurin: `∫_K^∞ f - f(K)/2 - f'(K)/12`.
    EulerMaclaurin,
}

/// `‖A^{(γ-1)/2} Q^{1/2}‖²_{L_2} = Σ_k λ_k^{γ-1-s}`.
///
/// Partial sums run until the integral bracket on the tail is narrower than
/// `rel_tol` times the partial sum. Divergence is decided from the exponent.
pub fn hs_norm_sq(gamma: f64, spec: &CovarianceSpec, rel_tol: f64) -> Result<f64> {
    hs_norm_sq_with(gamma, spec, rel_tol, TailStrategy::Bracket)
}

pub fn hs_norm_sq_with(
    gamma: f64,
    spec: &CovarianceSpec,
    rel_tol: f64,
    strategy: TailStrategy,
) -> Result<f64> {
    if !(rel_tol > 0.0) {
        return Err(Error::domain(format!("rel_tol {rel_tol} must be > 0")));
    }
    if !(1.0..=2.0).contains(&gamma) {
        return Err(Error::domain(format!("gamma {gamma} outside [1, 2]")));
    }
    // f(x) = (xπ)^{2p} with p = γ - 1 - s, summable iff 2p < -1
    let p = gamma - 1.0 - spec.exponent();
    let q = 2.0 * p;
    if q >= -1.0 {
        return Err(Error::Divergent { exponent: q });
    }
    let scale = PI.powf(q);
    let f = |x: f64| scale * x.powf(q);
    let tail_integral = |x: f64| scale * x.powf(q + 1.0) / -(q + 1.0);

    let mut partial = 0.0;
    let mut k: u64 = 0;
    loop {
        k += 1;
        let kf = k as f64;
        partial += f(kf);
        // bracket width is ∫_K^{K+1} f ≤ f(K)
        if f(kf) <= rel_tol * partial {
            let tail = match strategy {
                TailStrategy::Bracket => {
                    0.5 * (tail_integral(kf) + tail_integral(kf + 1.0))
                }
                TailStrategy::EulerMaclaurin => {
                    let df = q * f(kf) / kf;
                    tail_integral(kf) - 0.5 * f(kf) - df / 12.0
                }
            };
            return Ok(partial + tail);
        }
        if k > 1 << 40 {
            return Err(Error::domain("hs_norm_sq: tolerance unreachable"));
        }
    }
}

/// Generalized eigensystem `S v = μ M v` on a uniform mesh, eigenvectors
/// M-orthonormal and eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct DiscreteEigensystem {
    mesh: UniformMesh,
    eigenvalues: Vec<f64>,
    // column j is v_j
    eigenvectors: DMatrix<f64>,
}

impl DiscreteEigensystem {
    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j).iter().copied().collect()
    }

    /// `S_h(t) = e^{-t A_h}` applied to nodal coefficients.
    pub fn semigroup_apply(&self, t: f64, coeffs: &[f64]) -> Result<Vec<f64>> {
        if t == 0.0 && coeffs.len() == self.mesh.interior_nodes() {
            return Ok(coeffs.to_vec());
        }
        self.spectral_apply(coeffs, |mu| {
            if !(t >= 0.0) {
                None
            } else {
                Some((-mu * t).exp())
            }
        })
        .ok_or_else(|| Error::domain(format!("semigroup time {t} must be >= 0")))?
    }

    /// `g(A_h)` for a scalar function of the eigenvalue.
    pub fn spectral_apply(
        &self,
        coeffs: &[f64],
        g: impl Fn(f64) -> Option<f64>,
    ) -> Option<Result<Vec<f64>>> {
        let n = self.mesh.interior_nodes();
        if coeffs.len() != n {
            return Some(Err(Error::domain(format!(
                "{} coefficients for a mesh with {n} interior nodes",
                coeffs.len()
            ))));
        }
        // modal amplitudes a_j = v_jᵀ M c
        let mc = assemble_mass(&self.mesh).mul_vec(coeffs);
        let mc = DVector::from_vec(mc);
        let mut amps = self.eigenvectors.tr_mul(&mc);
        for (a, mu) in amps.iter_mut().zip(&self.eigenvalues) {
            *a *= g(*mu)?;
        }
        let out = &self.eigenvectors * amps;
        Some(Ok(out.iter().copied().collect()))
    }
}

/// Full generalized eigendecomposition of (stiffness, mass).
///
/// The mass matrix has an exact bidiagonal Cholesky factor `L`; the symmetric
/// problem `L⁻¹ S L⁻ᵀ y = μ y` is solved densely and mapped back by `v = L⁻ᵀ y`.
pub fn discrete_eigendecomposition(mesh: &UniformMesh) -> DiscreteEigensystem {
    let n = mesh.interior_nodes();
    let mass = assemble_mass(mesh);
    let stiff = assemble_stiffness(mesh);

    let mut chol = DMatrix::<f64>::zeros(n, n);
    let mut prev_diag = 0.0;
    for i in 0..n {
        let mut d = mass.diag()[i];
        if i > 0 {
            let sub = mass.lower()[i - 1] / prev_diag;
            chol[(i, i - 1)] = sub;
            d -= sub * sub;
        }
        let d = d.sqrt();
        chol[(i, i)] = d;
        prev_diag = d;
    }

    let dense_s = DMatrix::from_fn(n, n, |i, j| stiff.get(i, j));
    let half = chol
        .solve_lower_triangular(&dense_s)
        .expect("mass Cholesky factor has positive diagonal");
    let sym = chol
        .solve_lower_triangular(&half.transpose())
        .expect("mass Cholesky factor has positive diagonal");
    let sym = (&sym + sym.transpose()) * 0.5;

    let eig = SymmetricEigen::new(sym);
    let vecs = chol
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .expect("mass Cholesky factor has positive diagonal");

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        // fix sign so the first nonzero entry is positive
        let col = vecs.column(src);
        let sign = col
            .iter()
            .find(|v| v.abs() > 1e-12)
            .map_or(1.0, |v| v.signum());
        eigenvectors.set_column(dst, &(col * sign));
    }
    DiscreteEigensystem {
        mesh: *mesh,
        eigenvalues,
        eigenvectors,
    }
}

/// Free-function form of [`DiscreteEigensystem::semigroup_apply`].
pub fn discrete_semigroup_apply(
    eig: &DiscreteEigensystem,
    t: f64,
    coeffs: &[f64],
) -> Result<Vec<f64>> {
    eig.semigroup_apply(t, coeffs)
}

/// Exact `L²` distance between `Σ_k a_k e_k` and a finite element function.
pub fn l2_distance_modal_to_fem(modal: &[f64], u: &FemFunction) -> f64 {
    let mesh = u.mesh();
    let series_sq: f64 = modal.iter().map(|a| a * a).sum();
    let fem_sq = mass_form(mesh, u.coeffs(), u.coeffs());
    let mut cross = 0.0;
    for (idx, a) in modal.iter().enumerate() {
        if *a == 0.0 {
            continue;
        }
        let inner: f64 = u
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| c * sine_hat_inner(idx + 1, i, mesh))
            .sum();
        cross += a * inner;
    }
    (series_sq - 2.0 * cross + fem_sq).max(0.0).sqrt()
}
