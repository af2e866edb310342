use super::quadrature::{GAUSS3_POINTS, GAUSS3_WEIGHTS};
use super::{FemFunction, TridiagonalMatrix, UniformMesh};

/// Pointwise reaction term `f` in `F(u)(x) = f(u(x))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Reaction {
    /// `f(v) = v - v³`.
    #[default]
    AllenCahn,
    /// `f(v) = v`.
    Linear,
    /// `f ≡ 0`, the stochastic heat equation.
    Zero,
}

impl Reaction {
    #[inline]
    pub fn value(self, v: f64) -> f64 {
        match self {
            Reaction::AllenCahn => v - v * v * v,
            Reaction::Linear => v,
            Reaction::Zero => 0.0,
        }
    }

    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Reaction::AllenCahn => 1.0 - 3.0 * v * v,
            Reaction::Linear => 1.0,
            Reaction::Zero => 0.0,
        }
    }

    /// `b_i = ∫ f(u) φ_i`.
    pub fn load(self, u: &FemFunction) -> Vec<f64> {
        let n = u.mesh().interior_nodes();
        let mut load = vec![0.0; n];
        load_and_jacobian_into(self, u.mesh(), u.coeffs(), &mut load, None);
        load
    }

    /// `J_ij = ∫ f'(u) φ_i φ_j`.
    pub fn jacobian(self, u: &FemFunction) -> TridiagonalMatrix {
        let n = u.mesh().interior_nodes();
        let mut load = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        load_and_jacobian_into(self, u.mesh(), u.coeffs(), &mut load, Some((&mut diag, &mut off)));
        TridiagonalMatrix::from_symmetric_parts(diag, off)
    }
}

/// Allen-Cahn load vector `∫ (u - u³) φ_i`.
pub fn nonlinear_load(u: &FemFunction) -> Vec<f64> {
    Reaction::AllenCahn.load(u)
}

/// Allen-Cahn Jacobian `∫ (1 - 3u²) φ_i φ_j`.
pub fn nonlinear_jacobian(u: &FemFunction) -> TridiagonalMatrix {
    Reaction::AllenCahn.jacobian(u)
}

/// Element loop shared by the load and its Jacobian. 3-point Gauss per
/// element integrates both exactly for the cubic.
pub(crate) fn load_and_jacobian_into(
    reaction: Reaction,
    mesh: &UniformMesh,
    coeffs: &[f64],
    load: &mut [f64],
    mut jacobian: Option<(&mut [f64], &mut [f64])>,
) {
    let n = mesh.interior_nodes();
    let h = mesh.h();
    load.fill(0.0);
    if let Some((diag, off)) = jacobian.as_mut() {
        diag.fill(0.0);
        off.fill(0.0);
    }
    if reaction == Reaction::Zero {
        return;
    }
    for e in 0..=n {
        let left = if e > 0 { coeffs[e - 1] } else { 0.0 };
        let right = if e < n { coeffs[e] } else { 0.0 };
        let (mut bl, mut br) = (0.0, 0.0);
        let (mut jll, mut jlr, mut jrr) = (0.0, 0.0, 0.0);
        for (xi, w) in GAUSS3_POINTS.iter().zip(&GAUSS3_WEIGHTS) {
            let pl = 1.0 - xi;
            let pr = *xi;
            let v = left * pl + right * pr;
            let fv = w * reaction.value(v);
            bl += fv * pl;
            br += fv * pr;
            if jacobian.is_some() {
                let dv = w * reaction.derivative(v);
                jll += dv * pl * pl;
                jlr += dv * pl * pr;
                jrr += dv * pr * pr;
            }
        }
        if e > 0 {
            load[e - 1] += bl * h;
        }
        if e < n {
            load[e] += br * h;
        }
        if let Some((diag, off)) = jacobian.as_mut() {
            if e > 0 {
                diag[e - 1] += jll * h;
            }
            if e < n {
                diag[e] += jrr * h;
            }
            if e > 0 && e < n {
                off[e - 1] += jlr * h;
            }
        }
    }
}
