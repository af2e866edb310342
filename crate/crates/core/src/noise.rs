//! Karhunen-Loève sampling of the `Q`-Wiener increments
//!
//! `ΔW_m = Σ_k λ_k^{-s/2} Δβ_k(m) e_k`
//!
//! at the finest time step, block aggregation onto coarser time grids, and
//! projection of one step's increments onto a finite element mesh.
//!
//! Gaussian draws are stored as fixed-point integers (units of 2⁻³²) scaled
//! per mode on read. Block sums of integers are exact, so every aggregation
//! of one path carries the same per-mode total to the last bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::fem::{sine_hat_inner, SineLoadTable, UniformMesh};
use crate::spectral::CovarianceSpec;

const FIXED_POINT_SCALE: f64 = 4_294_967_296.0; // 2^32
const STEP_BITS: u32 = 40;

/// Reproducible substream for one Monte Carlo sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master: u64,
    pub sample: u64,
}

impl SeedSpec {
    pub fn new(master: u64, sample: u64) -> Self {
        Self { master, sample }
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.sample);
        rng
    }

    /// Positions the generator at the pair `(mode, step / 2)`. Each pair of
    /// steps consumes two `u64`, i.e. four 32-bit words.
    fn seek(rng: &mut ChaCha8Rng, mode: usize, pair: u64) {
        let counter = ((mode as u128 - 1) << STEP_BITS) | pair as u128;
        rng.set_word_pos(counter * 4);
    }

    /// Standard normal draw for `(mode, step)`, without generating its
    /// predecessors. `mode` starts at 1.
    pub fn standard_normal(&self, mode: usize, step: u64) -> f64 {
        let mut rng = self.rng();
        Self::seek(&mut rng, mode, step / 2);
        let (a, b) = box_muller(&mut rng);
        if step % 2 == 0 {
            a
        } else {
            b
        }
    }
}

fn unit_open(bits: u64) -> f64 {
    // (0, 1]
    ((bits >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

fn box_muller(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

fn quantize(z: f64) -> i64 {
    (z * FIXED_POINT_SCALE).round() as i64
}

/// `K × M` array of modal increments over a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementArray {
    modes: usize,
    steps: usize,
    tau: f64,
    // step-major: counts[m * modes + (k - 1)]
    counts: Vec<i64>,
    // value of one count for mode k
    unit: Vec<f64>,
}

impl IncrementArray {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `ΔW[k][m]` with `k` starting at 1.
    pub fn increment(&self, k: usize, m: usize) -> f64 {
        self.counts[m * self.modes + k - 1] as f64 * self.unit[k - 1]
    }

    /// All modal increments of step `m`.
    pub fn step_into(&self, m: usize, out: &mut [f64]) {
        let row = &self.counts[m * self.modes..(m + 1) * self.modes];
        for ((o, c), u) in out.iter_mut().zip(row).zip(&self.unit) {
            *o = *c as f64 * u;
        }
    }

    pub fn step(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.modes];
        self.step_into(m, &mut out);
        out
    }

    /// `Σ_m ΔW[k][m]`, identical for every aggregation of one path.
    pub fn mode_total(&self, k: usize) -> f64 {
        let total: i64 = (0..self.steps).map(|m| self.counts[m * self.modes + k - 1]).sum();
        total as f64 * self.unit[k - 1]
    }

    /// Sums consecutive blocks of `r` steps.
    pub fn aggregate(&self, r: usize) -> Result<IncrementArray> {
        if r == 0 || self.steps % r != 0 {
            return Err(Error::domain(format!(
                "aggregation factor {r} does not divide {} steps",
                self.steps
            )));
        }
        let coarse_steps = self.steps / r;
        let mut counts = vec![0i64; coarse_steps * self.modes];
        for (m, block) in counts.chunks_exact_mut(self.modes).enumerate() {
            for i in m * r..(m + 1) * r {
                let row = &self.counts[i * self.modes..(i + 1) * self.modes];
                for (b, c) in block.iter_mut().zip(row) {
                    *b += c;
                }
            }
        }
        Ok(IncrementArray {
            modes: self.modes,
            steps: coarse_steps,
            tau: self.tau * r as f64,
            counts,
            unit: self.unit.clone(),
        })
    }
}

/// One sample of the truncated `Q`-Wiener path at the finest step.
#[derive(Clone, Debug)]
pub struct NoisePath {
    covariance: CovarianceSpec,
    seed: Option<SeedSpec>,
    horizon: f64,
    fine: IncrementArray,
}

impl NoisePath {
    pub fn covariance(&self) -> &CovarianceSpec {
        &self.covariance
    }

    /// `None` for the zero path.
    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn modes(&self) -> usize {
        self.fine.modes
    }

    pub fn fine_steps(&self) -> usize {
        self.fine.steps
    }

    pub fn fine_tau(&self) -> f64 {
        self.fine.tau
    }

    pub fn increments(&self) -> &IncrementArray {
        &self.fine
    }

    /// Normalized draw `ΔW[k][m] / √(τ λ_k^{-s})`.
    pub fn standardized(&self, k: usize, m: usize) -> f64 {
        self.fine.counts[m * self.fine.modes + k - 1] as f64 / FIXED_POINT_SCALE
    }

    /// Path with every increment zero: deterministic dynamics.
    pub fn zeros(
        covariance: CovarianceSpec,
        modes: usize,
        steps: usize,
        horizon: f64,
    ) -> Result<Self> {
        let tau = check_grid(modes, steps, horizon)?;
        Ok(Self {
            covariance,
            seed: None,
            horizon,
            fine: IncrementArray {
                modes,
                steps,
                tau,
                counts: vec![0; modes * steps],
                unit: unit_scales(&covariance, modes, tau),
            },
        })
    }
}

fn check_grid(modes: usize, steps: usize, horizon: f64) -> Result<f64> {
    if modes == 0 {
        return Err(Error::domain("noise path needs at least one mode"));
    }
    if steps == 0 {
        return Err(Error::domain("noise path needs at least one step"));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::domain(format!("horizon {horizon} must be > 0")));
    }
    if (steps as u64) >= 1u64 << STEP_BITS {
        return Err(Error::domain(format!("{steps} steps exceed 2^{STEP_BITS}")));
    }
    Ok(horizon / steps as f64)
}

fn unit_scales(covariance: &CovarianceSpec, modes: usize, tau: f64) -> Vec<f64> {
    let root_tau = tau.sqrt();
    (1..=modes)
        .map(|k| covariance.mode_std(k) * root_tau / FIXED_POINT_SCALE)
        .collect()
}

/// Draws `ΔW[k][m] ~ N(0, τ λ_k^{-s})` independently for `k ≤ K`, `m < M`,
/// with `τ = T / M`.
pub fn sample_path(
    seed: SeedSpec,
    covariance: CovarianceSpec,
    modes: usize,
    steps: usize,
    horizon: f64,
) -> Result<NoisePath> {
    let tau = check_grid(modes, steps, horizon)?;
    let mut counts = vec![0i64; modes * steps];
    let mut rng = seed.rng();
    for k in 1..=modes {
        SeedSpec::seek(&mut rng, k, 0);
        let mut m = 0;
        while m < steps {
            let (a, b) = box_muller(&mut rng);
            counts[m * modes + k - 1] = quantize(a);
            if m + 1 < steps {
                counts[(m + 1) * modes + k - 1] = quantize(b);
            }
            m += 2;
        }
    }
    Ok(NoisePath {
        covariance,
        seed: Some(seed),
        horizon,
        fine: IncrementArray {
            modes,
            steps,
            tau,
            counts,
            unit: unit_scales(&covariance, modes, tau),
        },
    })
}

/// Free-function form of [`IncrementArray::aggregate`] on a path.
pub fn aggregate(path: &NoisePath, r: usize) -> Result<IncrementArray> {
    path.fine.aggregate(r)
}

/// Load vector `w_i = Σ_k ΔW_k ⟨e_k, φ_i⟩` of one step's increments.
pub fn project_increment(increments: &[f64], mesh: &UniformMesh) -> Vec<f64> {
    let n = mesh.interior_nodes();
    let mut w = vec![0.0; n];
    for (idx, dw) in increments.iter().enumerate() {
        if *dw == 0.0 {
            continue;
        }
        for (i, wi) in w.iter_mut().enumerate() {
            *wi += dw * sine_hat_inner(idx + 1, i, mesh);
        }
    }
    w
}

/// Projects increments with a precomputed table; same result as
/// [`project_increment`] up to rounding.
pub fn project_increment_with(
    table: &SineLoadTable,
    increments: &[f64],
    out: &mut [f64],
) -> Result<()> {
    table.load_into(increments, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(s: f64) -> CovarianceSpec {
        CovarianceSpec::new(s).unwrap()
    }

    #[test]
    fn same_seed_same_path() {
        let a = sample_path(SeedSpec::new(7, 3), spec(1.5005), 5, 33, 1.0).unwrap();
        let b = sample_path(SeedSpec::new(7, 3), spec(1.5005), 5, 33, 1.0).unwrap();
        assert_eq!(a.increments(), b.increments());
        let c = sample_path(SeedSpec::new(7, 4), spec(1.5005), 5, 33, 1.0).unwrap();
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn random_access_matches_bulk() {
        let seed = SeedSpec::new(99, 12);
        let p = sample_path(seed, spec(0.5005), 4, 11, 2.0).unwrap();
        for k in 1..=4 {
            for m in 0..11 {
                let z = seed.standard_normal(k, m as u64);
                assert!((z - p.standardized(k, m)).abs() <= 0.5 / FIXED_POINT_SCALE);
            }
        }
        // entries do not depend on the truncation chosen
        let q = sample_path(seed, spec(0.5005), 2, 7, 2.0).unwrap();
        for k in 1..=2 {
            for m in 0..7 {
                assert_eq!(p.standardized(k, m), q.standardized(k, m));
            }
        }
    }

    #[test]
    fn variances_scale_with_step_and_mode() {
        let p = sample_path(SeedSpec::new(1, 0), spec(1.0), 1, 4, 1e-6).unwrap();
        let tau = p.fine_tau();
        let z = p.standardized(1, 2);
        let expected = z * (tau / (PI * PI)).sqrt();
        assert!((p.increments().increment(1, 2) - expected).abs() < 1e-18);
        assert!(sample_path(SeedSpec::new(1, 0), spec(1.0), 0, 4, 1.0).is_err());
        assert!(sample_path(SeedSpec::new(1, 0), spec(1.0), 1, 0, 1.0).is_err());
        assert!(sample_path(SeedSpec::new(1, 0), spec(1.0), 1, 4, 0.0).is_err());
    }

    #[test]
    fn standardized_entries_have_unit_variance() {
        let p = sample_path(SeedSpec::new(2024, 0), spec(0.5005), 10, 1000, 1.0).unwrap();
        let n = 10_000.0;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for k in 1..=10 {
            for m in 0..1000 {
                let z = p.standardized(k, m);
                sum += z;
                sq += z * z;
            }
        }
        let mean = sum / n;
        let var = sq / n - mean * mean;
        // sd of the sample variance of N(0,1) is √(2/n)
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn neighbouring_modes_uncorrelated() {
        let steps = 100_000;
        let p = sample_path(SeedSpec::new(5, 1), spec(1.5005), 2, steps, 1.0).unwrap();
        let corr: f64 =
            (0..steps).map(|m| p.standardized(1, m) * p.standardized(2, m)).sum::<f64>() / steps as f64;
        assert!(corr.abs() < 5.0 / (steps as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn aggregation_rules() {
        let p = sample_path(SeedSpec::new(3, 9), spec(1.5005), 6, 64, 1.0).unwrap();
        let id = aggregate(&p, 1).unwrap();
        assert_eq!(&id, p.increments());
        let one = aggregate(&p, 64).unwrap();
        assert_eq!(one.steps(), 1);
        for k in 1..=6 {
            assert_eq!(one.increment(k, 0), p.increments().mode_total(k));
        }
        let two_two = aggregate(&p, 2).unwrap().aggregate(2).unwrap();
        assert_eq!(two_two, aggregate(&p, 4).unwrap());
        assert!(aggregate(&p, 3).is_err());
        assert!(aggregate(&p, 0).is_err());
        for r in [1, 2, 4, 8, 16, 32, 64] {
            let a = aggregate(&p, r).unwrap();
            assert!((a.tau() - r as f64 / 64.0).abs() < 1e-15);
            for k in 1..=6 {
                assert_eq!(a.mode_total(k).to_bits(), p.increments().mode_total(k).to_bits());
            }
        }
    }

    #[test]
    fn projection_examples() {
        let mesh = UniformMesh::new(9).unwrap();
        assert!(project_increment(&[0.0; 8], &mesh).iter().all(|w| *w == 0.0));
        let h = mesh.h();
        for k in 1..=8 {
            let mut unit = vec![0.0; 8];
            unit[k - 1] = 1.0;
            let w = project_increment(&unit, &mesh);
            for (i, wi) in w.iter().enumerate() {
                let kf = k as f64;
                let x = mesh.node(i);
                let expected = 2f64.sqrt() * 4.0 / (kf * kf * PI * PI * h)
                    * (kf * PI * h / 2.0).sin().powi(2)
                    * (kf * PI * x).sin();
                assert!((wi - expected).abs() < 1e-15);
            }
        }
        let a: Vec<f64> = (0..8).map(|k| (k as f64).cos()).collect();
        let b: Vec<f64> = (0..8).map(|k| (k as f64 * 0.3).sin()).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (pa, pb, pab) = (
            project_increment(&a, &mesh),
            project_increment(&b, &mesh),
            project_increment(&ab, &mesh),
        );
        for i in 0..9 {
            assert!((pab[i] - pa[i] - pb[i]).abs() < 1e-14);
        }
        let table = SineLoadTable::new(mesh, 8).unwrap();
        let mut out = vec![0.0; 9];
        project_increment_with(&table, &ab, &mut out).unwrap();
        for i in 0..9 {
            assert!((out[i] - pab[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_path() {
        let z = NoisePath::zeros(spec(1.5005), 3, 8, 1.0).unwrap();
        assert!(z.seed().is_none());
        assert_eq!(z.increments().mode_total(2), 0.0);
    }
}
