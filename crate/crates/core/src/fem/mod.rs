//! Piecewise-linear finite elements on a uniform mesh of (0, 1) with
//! homogeneous Dirichlet conditions. Boundary nodes are eliminated, so every
//! vector here has one entry per interior node.

mod nonlinear;
pub mod quadrature;
mod tridiagonal;

use std::f64::consts::{PI, SQRT_2};

pub use nonlinear::{nonlinear_jacobian, nonlinear_load, Reaction};
pub(crate) use nonlinear::load_and_jacobian_into;
pub use tridiagonal::TridiagonalMatrix;
pub(crate) use tridiagonal::thomas;

use crate::error::{Error, Result};
use quadrature::{GAUSS5_POINTS, GAUSS5_WEIGHTS};

/// Largest sine mode accepted by the closed-form projections. Beyond this
/// `k * pi * h` loses too many digits for `sin` to be trusted.
pub const MAX_MODE: usize = 1 << 24;

/// Uniform mesh with `N` interior nodes, spacing `h = 1/(N+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UniformMesh {
    interior: usize,
}

impl UniformMesh {
    pub fn new(interior: usize) -> Result<Self> {
        if interior == 0 {
            return Err(Error::domain("mesh needs at least one interior node"));
        }
        Ok(Self { interior })
    }

    /// Mesh with spacing `2^-exponent`.
    pub fn dyadic(exponent: u32) -> Result<Self> {
        if exponent == 0 || exponent > 30 {
            return Err(Error::domain(format!(
                "dyadic mesh exponent {exponent} outside [1, 30]"
            )));
        }
        Self::new((1usize << exponent) - 1)
    }

    pub fn interior_nodes(&self) -> usize {
        self.interior
    }

    pub fn elements(&self) -> usize {
        self.interior + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.elements() as f64
    }

    /// Coordinate of interior node `i` (0-based, so `x = (i + 1) h`).
    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.elements() as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.interior).map(|i| self.node(i))
    }

    /// True iff every node of `self` is a node of `fine`.
    pub fn is_nested_in(&self, fine: &UniformMesh) -> bool {
        fine.elements() % self.elements() == 0
    }
}

/// A member of `V_h`: nodal values at the interior nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct FemFunction {
    mesh: UniformMesh,
    coeffs: Vec<f64>,
}

impl FemFunction {
    pub fn new(mesh: UniformMesh, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.interior_nodes() {
            return Err(Error::domain(format!(
                "{} coefficients for a mesh with {} interior nodes",
                coeffs.len(),
                mesh.interior_nodes()
            )));
        }
        Ok(Self { mesh, coeffs })
    }

    pub fn zeros(mesh: UniformMesh) -> Self {
        Self {
            mesh,
            coeffs: vec![0.0; mesh.interior_nodes()],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: UniformMesh, f: impl Fn(f64) -> f64) -> Self {
        Self {
            mesh,
            coeffs: mesh.nodes().map(f).collect(),
        }
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value of the piecewise-linear function at `x in [0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.mesh.elements();
        let pos = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let cell = (pos.floor() as usize).min(n - 1);
        let t = pos - cell as f64;
        let left = self.node_value(cell);
        let right = self.node_value(cell + 1);
        left + t * (right - left)
    }

    /// Value at mesh vertex `v in 0..=N+1`, boundary vertices included.
    fn node_value(&self, vertex: usize) -> f64 {
        if vertex == 0 || vertex > self.mesh.interior_nodes() {
            0.0
        } else {
            self.coeffs[vertex - 1]
        }
    }

    pub fn l2_norm(&self) -> f64 {
        mass_form(&self.mesh, &self.coeffs, &self.coeffs).max(0.0).sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        stiffness_form(&self.mesh, &self.coeffs, &self.coeffs)
            .max(0.0)
            .sqrt()
    }

    /// `L²` inner product with another function on the same mesh.
    pub fn l2_inner(&self, other: &FemFunction) -> Result<f64> {
        if self.mesh != other.mesh {
            return Err(Error::domain("inner product of functions on different meshes"));
        }
        Ok(mass_form(&self.mesh, &self.coeffs, &other.coeffs))
    }

    /// `L²` distance to another function on the same mesh.
    pub fn l2_distance(&self, other: &FemFunction) -> Result<f64> {
        if self.mesh != other.mesh {
            return Err(Error::domain("distance between functions on different meshes"));
        }
        let diff: Vec<f64> = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(mass_form(&self.mesh, &diff, &diff).max(0.0).sqrt())
    }
}

/// `xᵀ M y` without assembling `M`.
pub fn mass_form(mesh: &UniformMesh, x: &[f64], y: &[f64]) -> f64 {
    let h = mesh.h();
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 4.0 * y[i];
        if i > 0 {
            row += y[i - 1];
        }
        if i + 1 < n {
            row += y[i + 1];
        }
        acc += x[i] * row;
    }
    acc * h / 6.0
}

/// `xᵀ S y` without assembling `S`.
pub fn stiffness_form(mesh: &UniformMesh, x: &[f64], y: &[f64]) -> f64 {
    let h = mesh.h();
    let n = x.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 2.0 * y[i];
        if i > 0 {
            row -= y[i - 1];
        }
        if i + 1 < n {
            row -= y[i + 1];
        }
        acc += x[i] * row;
    }
    acc / h
}

/// P1 Gram matrix `(h/6) [1, 4, 1]`.
pub fn assemble_mass(mesh: &UniformMesh) -> TridiagonalMatrix {
    let h = mesh.h();
    TridiagonalMatrix::constant_symmetric(mesh.interior_nodes(), 4.0 * h / 6.0, h / 6.0)
}

/// Dirichlet Laplacian stiffness `(1/h) [-1, 2, -1]`.
pub fn assemble_stiffness(mesh: &UniformMesh) -> TridiagonalMatrix {
    let h = mesh.h();
    TridiagonalMatrix::constant_symmetric(mesh.interior_nodes(), 2.0 / h, -1.0 / h)
}

/// `⟨e_k, φ_i⟩` for `e_k = √2 sin(kπx)` and the hat function at node `i`.
pub fn sine_hat_inner(k: usize, i: usize, mesh: &UniformMesh) -> f64 {
    let h = mesh.h();
    let kf = k as f64;
    let half = (kf * PI * h / 2.0).sin();
    SQRT_2 * 4.0 / (kf * kf * PI * PI * h) * half * half * (kf * PI * mesh.node(i)).sin()
}

/// Table of `⟨e_k, φ_i⟩` for `k = 1..=modes`, stored mode-major.
#[derive(Clone, Debug)]
pub struct SineLoadTable {
    mesh: UniformMesh,
    modes: usize,
    rows: Vec<f64>,
}

impl SineLoadTable {
    pub fn new(mesh: UniformMesh, modes: usize) -> Result<Self> {
        if modes == 0 || modes > MAX_MODE {
            return Err(Error::domain(format!(
                "mode count {modes} outside [1, {MAX_MODE}]"
            )));
        }
        let n = mesh.interior_nodes();
        let mut rows = Vec::with_capacity(modes * n);
        for k in 1..=modes {
            rows.extend((0..n).map(|i| sine_hat_inner(k, i, &mesh)));
        }
        Ok(Self { mesh, modes, rows })
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.mesh.interior_nodes();
        &self.rows[(k - 1) * n..k * n]
    }

    /// `out_i = Σ_k modal[k-1] ⟨e_k, φ_i⟩`. Modes past `modes()` are an error.
    pub fn load_into(&self, modal: &[f64], out: &mut [f64]) -> Result<()> {
        if modal.len() > self.modes {
            return Err(Error::domain(format!(
                "{} modal coefficients but table holds {} modes",
                modal.len(),
                self.modes
            )));
        }
        let n = self.mesh.interior_nodes();
        assert_eq!(out.len(), n);
        out.fill(0.0);
        for (k, &a) in modal.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &self.rows[k * n..(k + 1) * n];
            for (o, r) in out.iter_mut().zip(row) {
                *o += a * r;
            }
        }
        Ok(())
    }
}

/// Something `P_h` can be applied to.
pub enum ProjectionTarget<'a> {
    /// `Σ_k c[k-1] e_k` in the Dirichlet sine basis.
    Modal(&'a [f64]),
    /// Any function that can be evaluated on (0, 1).
    Pointwise(&'a dyn Fn(f64) -> f64),
}

/// Load vector `g_i = ⟨v, φ_i⟩`.
pub fn load_vector(target: &ProjectionTarget<'_>, mesh: &UniformMesh) -> Result<Vec<f64>> {
    let n = mesh.interior_nodes();
    match target {
        ProjectionTarget::Modal(c) => {
            if c.len() > MAX_MODE {
                return Err(Error::domain(format!(
                    "modal index {} exceeds {MAX_MODE}",
                    c.len()
                )));
            }
            let mut g = vec![0.0; n];
            for (idx, &a) in c.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += a * sine_hat_inner(idx + 1, i, mesh);
                }
            }
            Ok(g)
        }
        ProjectionTarget::Pointwise(f) => {
            let h = mesh.h();
            let mut g = vec![0.0; n];
            // element e spans vertices e and e+1
            for e in 0..mesh.elements() {
                let left = e as f64 * h;
                let (mut to_left, mut to_right) = (0.0, 0.0);
                for (xi, w) in GAUSS5_POINTS.iter().zip(&GAUSS5_WEIGHTS) {
                    let v = f(left + xi * h);
                    to_left += w * v * (1.0 - xi);
                    to_right += w * v * xi;
                }
                if e > 0 {
                    g[e - 1] += to_left * h;
                }
                if e < n {
                    g[e] += to_right * h;
                }
            }
            Ok(g)
        }
    }
}

/// `L²` projection `P_h v`: solves `M c = g`.
pub fn l2_project(target: &ProjectionTarget<'_>, mesh: &UniformMesh) -> Result<FemFunction> {
    let g = load_vector(target, mesh)?;
    let coeffs = assemble_mass(mesh).solve(&g)?;
    FemFunction::new(*mesh, coeffs)
}

/// Exact embedding of a coarse P1 function into a nested finer space.
pub fn prolong(u: &FemFunction, fine: &UniformMesh) -> Result<FemFunction> {
    let coarse = u.mesh();
    if !coarse.is_nested_in(fine) {
        return Err(Error::domain(format!(
            "mesh with {} elements is not nested in mesh with {} elements",
            coarse.elements(),
            fine.elements()
        )));
    }
    let ratio = fine.elements() / coarse.elements();
    let r = ratio as f64;
    let coeffs = (1..=fine.interior_nodes())
        .map(|v| {
            let cell = v / ratio;
            let offset = v % ratio;
            if offset == 0 {
                u.node_value(cell)
            } else {
                let t = offset as f64 / r;
                (1.0 - t) * u.node_value(cell) + t * u.node_value(cell + 1)
            }
        })
        .collect();
    FemFunction::new(*fine, coeffs)
}

#[cfg(test)]
mod tests {
    use super::quadrature::composite_gauss5;
    use super::*;
    use proptest::prelude::*;

    fn mesh(n: usize) -> UniformMesh {
        UniformMesh::new(n).unwrap()
    }

    #[test]
    fn mesh_basics() {
        assert!(UniformMesh::new(0).is_err());
        let m = UniformMesh::dyadic(2).unwrap();
        assert_eq!(m.interior_nodes(), 3);
        assert_eq!(m.h(), 0.25);
        let xs: Vec<f64> = m.nodes().collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
        assert!(mesh(1).is_nested_in(&mesh(3)));
        assert!(mesh(3).is_nested_in(&mesh(15)));
        assert!(!mesh(2).is_nested_in(&mesh(3)));
        assert!(mesh(7).is_nested_in(&mesh(7)));
    }

    #[test]
    fn mass_matrix_entries() {
        let m1 = assemble_mass(&mesh(1));
        assert!((m1.diag()[0] - 1.0 / 3.0).abs() < 1e-15);
        let m3 = assemble_mass(&mesh(3));
        assert!(m3.is_symmetric());
        for d in m3.diag() {
            assert!((d - 1.0 / 6.0).abs() < 1e-15);
        }
        for o in m3.upper() {
            assert!((o - 1.0 / 24.0).abs() < 1e-15);
        }
        // interior rows sum to h
        let m = mesh(9);
        let mm = assemble_mass(&m);
        let ones = vec![1.0; 9];
        let sums = mm.mul_vec(&ones);
        for s in &sums[1..8] {
            assert!((s - m.h()).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_matrix_entries() {
        let s1 = assemble_stiffness(&mesh(1));
        assert_eq!(s1.diag(), &[4.0]);
        let s3 = assemble_stiffness(&mesh(3));
        assert_eq!(s3.diag(), &[8.0, 8.0, 8.0]);
        assert_eq!(s3.upper(), &[-4.0, -4.0]);
        // plateau: gradient 1/h on the two boundary elements only
        let h: f64 = 0.25;
        let oracle = 2.0 * h * (1.0 / h).powi(2);
        assert!((s3.quad_form(&[1.0, 1.0, 1.0]) - oracle).abs() < 1e-12);
        assert!((oracle - 2.0 / h).abs() < 1e-12);
    }

    #[test]
    fn norms_of_single_hat() {
        let u = FemFunction::new(mesh(1), vec![1.0]).unwrap();
        assert!((u.l2_norm() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((u.h1_seminorm() - 2.0).abs() < 1e-15);
        let z = FemFunction::zeros(mesh(5));
        assert_eq!(z.l2_norm(), 0.0);
        assert_eq!(z.h1_seminorm(), 0.0);
    }

    #[test]
    fn mass_norm_matches_quadrature() {
        let m = mesh(11);
        let c: Vec<f64> = (0..11).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.7).collect();
        let u = FemFunction::new(m, c).unwrap();
        // one quadrature cell per element resolves the kinks exactly
        let q = composite_gauss5(|x| u.eval(x).powi(2), 0.0, 1.0, m.elements());
        assert!((u.l2_norm().powi(2) - q).abs() < 1e-12);
    }

    #[test]
    fn closed_form_sine_hat_matches_symbolic_integration() {
        // ∫ √2 sin(kπx) φ_i(x) dx by composite Gauss over the hat support,
        // split at the kink.
        for n in [1usize, 3, 6, 10] {
            let m = mesh(n);
            let h = m.h();
            for k in 1..=8 {
                for i in 0..n {
                    let xi = m.node(i);
                    let left = composite_gauss5(
                        |x| SQRT_2 * (k as f64 * PI * x).sin() * (x - (xi - h)) / h,
                        xi - h,
                        xi,
                        32,
                    );
                    let right = composite_gauss5(
                        |x| SQRT_2 * (k as f64 * PI * x).sin() * ((xi + h) - x) / h,
                        xi,
                        xi + h,
                        32,
                    );
                    let got = sine_hat_inner(k, i, &m);
                    assert!((got - (left + right)).abs() < 1e-13, "k={k} i={i} n={n}");
                }
            }
        }
    }

    #[test]
    fn project_sine_on_single_hat() {
        // ∫ sin(πx) φ_1 = 4/π², M = [1/3]
        let f = |x: f64| (PI * x).sin();
        let p = l2_project(&ProjectionTarget::Pointwise(&f), &mesh(1)).unwrap();
        // 5-point Gauss on a half-period cell
        assert!((p.coeffs()[0] - 12.0 / (PI * PI)).abs() < 1e-8);
        let modal = [1.0 / SQRT_2];
        let q = l2_project(&ProjectionTarget::Modal(&modal), &mesh(1)).unwrap();
        assert!((q.coeffs()[0] - 12.0 / (PI * PI)).abs() < 1e-14);
    }

    #[test]
    fn projection_error_is_second_order() {
        let f = |x: f64| (PI * x).sin();
        let mut errs = Vec::new();
        for n in [7usize, 15, 31] {
            let m = mesh(n);
            let p = l2_project(&ProjectionTarget::Pointwise(&f), &m).unwrap();
            let e2 = composite_gauss5(|x| (p.eval(x) - f(x)).powi(2), 0.0, 1.0, 4 * m.elements());
            errs.push((m.h(), e2.sqrt()));
        }
        for w in errs.windows(2) {
            let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
        }
    }

    #[test]
    fn projection_is_idempotent_and_orthogonal() {
        let m = mesh(13);
        let u = FemFunction::interpolate(m, |x| x * (1.0 - x) * (3.0 * x).cos());
        let f = |x: f64| u.eval(x);
        let p = l2_project(&ProjectionTarget::Pointwise(&f), &m).unwrap();
        for (a, b) in p.coeffs().iter().zip(u.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
        // ⟨P_h v, w_h⟩ = ⟨v, w_h⟩
        let v = |x: f64| (x * 5.0).exp() * x * (1.0 - x);
        let pv = l2_project(&ProjectionTarget::Pointwise(&v), &m).unwrap();
        let w = FemFunction::interpolate(m, |x| (2.0 * x).sin());
        let lhs = pv.l2_inner(&w).unwrap();
        let rhs = composite_gauss5(|x| v(x) * w.eval(x), 0.0, 1.0, 8 * m.elements());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn modal_projection_overflow() {
        let big = vec![0.0; MAX_MODE + 1];
        assert!(load_vector(&ProjectionTarget::Modal(&big), &mesh(3)).is_err());
        assert!(SineLoadTable::new(mesh(3), 0).is_err());
    }

    #[test]
    fn sine_table_matches_modal_load() {
        let m = mesh(9);
        let t = SineLoadTable::new(m, 12).unwrap();
        let modal: Vec<f64> = (0..12).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let mut out = vec![0.0; 9];
        t.load_into(&modal, &mut out).unwrap();
        let g = load_vector(&ProjectionTarget::Modal(&modal), &m).unwrap();
        for (a, b) in out.iter().zip(&g) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(t.load_into(&[0.0; 13], &mut out).is_err());
    }

    #[test]
    fn prolong_hat() {
        let u = FemFunction::new(mesh(1), vec![1.0]).unwrap();
        let p = prolong(&u, &mesh(3)).unwrap();
        assert_eq!(p.coeffs(), &[0.5, 1.0, 0.5]);
        let same = prolong(&u, &mesh(1)).unwrap();
        assert_eq!(same, u);
        assert!(prolong(&u, &mesh(4)).is_err());
    }

    proptest! {
        #[test]
        fn prolong_preserves_norm(c in proptest::collection::vec(-3.0f64..3.0, 7), level in 1u32..4) {
            let u = FemFunction::new(mesh(7), c).unwrap();
            let fine = mesh(8 * (1 << level) - 1);
            let p = prolong(&u, &fine).unwrap();
            prop_assert!((p.l2_norm() - u.l2_norm()).abs() < 1e-12);
            for x in [0.1, 0.33, 0.5, 0.77] {
                prop_assert!((p.eval(x) - u.eval(x)).abs() < 1e-12);
            }
        }

        #[test]
        fn forms_are_positive_and_norms_subadditive(
            a in proptest::collection::vec(-2.0f64..2.0, 9),
            b in proptest::collection::vec(-2.0f64..2.0, 9),
        ) {
            let m = mesh(9);
            if a.iter().any(|x| *x != 0.0) {
                prop_assert!(mass_form(&m, &a, &a) > 0.0);
                prop_assert!(stiffness_form(&m, &a, &a) > 0.0);
            }
            let u = FemFunction::new(m, a.clone()).unwrap();
            let v = FemFunction::new(m, b.clone()).unwrap();
            let s = FemFunction::new(m, a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap();
            prop_assert!(s.l2_norm() <= u.l2_norm() + v.l2_norm() + 1e-12);
            prop_assert!(s.h1_seminorm() <= u.h1_seminorm() + v.h1_seminorm() + 1e-12);
        }
    }
}
