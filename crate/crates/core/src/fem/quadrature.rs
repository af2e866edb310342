//! Gauss-Legendre rules mapped to the reference interval [0, 1].

/// 3-point rule, exact through degree 5.
pub const GAUSS3_POINTS: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
pub const GAUSS3_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// 5-point rule, exact through degree 9.
pub const GAUSS5_POINTS: [f64; 5] = [
    0.5 - 0.453_089_922_969_332_3,
    0.5 - 0.269_234_655_052_841_6,
    0.5,
    0.5 + 0.269_234_655_052_841_6,
    0.5 + 0.453_089_922_969_332_3,
];
pub const GAUSS5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

/// Composite 5-point Gauss rule for `f` over `[a, b]` split into `pieces` cells.
pub fn composite_gauss5(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let width = (b - a) / pieces as f64;
    let mut total = 0.0;
    for cell in 0..pieces {
        let left = a + cell as f64 * width;
        let mut acc = 0.0;
        for (x, w) in GAUSS5_POINTS.iter().zip(&GAUSS5_WEIGHTS) {
            acc += w * f(left + x * width);
        }
        total += acc * width;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_rule(points: &[f64], weights: &[f64], deg: i32) -> f64 {
        points.iter().zip(weights).map(|(x, w)| w * x.powi(deg)).sum()
    }

    #[test]
    fn exact_on_monomials() {
        for deg in 0..=5 {
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((monomial_rule(&GAUSS3_POINTS, &GAUSS3_WEIGHTS, deg) - exact).abs() < 1e-15);
        }
        for deg in 0..=9 {
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((monomial_rule(&GAUSS5_POINTS, &GAUSS5_WEIGHTS, deg) - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn composite_integrates_sine() {
        let v = composite_gauss5(|x| (std::f64::consts::PI * x).sin(), 0.0, 1.0, 16);
        assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-14);
    }
}
