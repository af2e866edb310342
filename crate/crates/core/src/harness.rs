//! Monte Carlo strong-error studies with coupled noise paths, log-log rate
//! fits, and two deterministic-or-cheap probes: the semigroup error operator
//! `S(t) - S_h(t) P_h` and the Hölder regularity of the reference solution.
//!
//! Every sample draws one fine path and integrates the reference solution
//! once; each trial resolution reuses that path through exact aggregation
//! in time and exact projection in space. Samples may run on any number of
//! workers; per-sample results are reduced in sample order, so reports do
//! not depend on scheduling.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{l2_project, mass_form, prolong, FemFunction, ProjectionTarget, Reaction, UniformMesh};
use crate::noise::{sample_path, NoisePath, SeedSpec};
use crate::spectral::{discrete_eigendecomposition, l2_distance_modal_to_fem, lambda, CovarianceSpec};
use crate::stepper::{Integrator, SchemeConfig, TrajectoryState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Space,
    Time,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Space => "space",
            Axis::Time => "time",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitialCondition {
    /// `X_0 = sin(πx)`.
    #[default]
    SinePi,
    Zero,
}

impl InitialCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitialCondition::SinePi => "sin-pi",
            InitialCondition::Zero => "zero",
        }
    }

    /// `P_h X_0`.
    pub fn project(&self, mesh: &UniformMesh) -> Result<FemFunction> {
        match self {
            // sin(πx) = e_1 / √2
            InitialCondition::SinePi => {
                l2_project(&ProjectionTarget::Modal(&[std::f64::consts::FRAC_1_SQRT_2]), mesh)
            }
            InitialCondition::Zero => Ok(FemFunction::zeros(*mesh)),
        }
    }
}

/// One convergence study along one axis.
///
/// Resolutions are dyadic: exponent `i` means `h = 2^-i` or `τ = 2^-i`. In a
/// space study every trial runs at `τ_ref`; in a time study at `h_ref`.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub axis: Axis,
    pub covariance: CovarianceSpec,
    pub trial_exponents: Vec<u32>,
    pub h_ref_exponent: u32,
    pub tau_ref_exponent: u32,
    pub samples: u64,
    pub seed: u64,
    pub horizon: f64,
    pub initial: InitialCondition,
    /// Karhunen-Loève truncation; `None` means one mode per reference node.
    pub modes: Option<usize>,
    pub reaction: Reaction,
}

impl StudyConfig {
    pub fn reference_mesh(&self) -> Result<UniformMesh> {
        UniformMesh::dyadic(self.h_ref_exponent)
    }

    pub fn mode_count(&self) -> Result<usize> {
        match self.modes {
            Some(0) => Err(Error::domain("mode count must be >= 1")),
            Some(k) => Ok(k),
            None => Ok(self.reference_mesh()?.interior_nodes()),
        }
    }

    pub fn tau_ref(&self) -> f64 {
        dyadic(self.tau_ref_exponent)
    }

    /// Fine steps over the horizon.
    pub fn fine_steps(&self) -> Result<usize> {
        let steps = self.horizon / self.tau_ref();
        let rounded = steps.round();
        if !(rounded >= 1.0) || (steps - rounded).abs() > 1e-9 * rounded {
            return Err(Error::domain(format!(
                "horizon {} is not a multiple of tau_ref 2^-{}",
                self.horizon, self.tau_ref_exponent
            )));
        }
        Ok(rounded as usize)
    }

    /// Rate the theory predicts: `γ` in space, `γ/2` in time.
    pub fn expected_slope(&self) -> f64 {
        let gamma = self.covariance.regularity_index();
        match self.axis {
            Axis::Space => gamma,
            Axis::Time => gamma / 2.0,
        }
    }

    fn trial_mesh(&self, exponent: u32) -> Result<UniformMesh> {
        match self.axis {
            Axis::Space => UniformMesh::dyadic(exponent),
            Axis::Time => self.reference_mesh(),
        }
    }

    /// Aggregation factor of a trial relative to the fine path.
    fn trial_ratio(&self, exponent: u32) -> usize {
        match self.axis {
            Axis::Space => 1,
            Axis::Time => 1 << (self.tau_ref_exponent - exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::domain("sample count must be >= 1"));
        }
        if self.trial_exponents.is_empty() {
            return Err(Error::domain("no trial resolutions"));
        }
        let h_ref = self.reference_mesh()?;
        if self.tau_ref_exponent == 0 || self.tau_ref_exponent > 30 {
            return Err(Error::domain("tau_ref exponent outside [1, 30]"));
        }
        self.fine_steps()?;
        self.mode_count()?;
        for &e in &self.trial_exponents {
            match self.axis {
                Axis::Space => {
                    if !UniformMesh::dyadic(e)?.is_nested_in(&h_ref) || e > self.h_ref_exponent {
                        return Err(Error::domain(format!(
                            "trial h = 2^-{e} is not nested in h_ref = 2^-{}",
                            self.h_ref_exponent
                        )));
                    }
                }
                Axis::Time => {
                    if e == 0 || e > self.tau_ref_exponent {
                        return Err(Error::domain(format!(
                            "trial tau = 2^-{e} is not a multiple of tau_ref = 2^-{}",
                            self.tau_ref_exponent
                        )));
                    }
                    if self.fine_steps()? % self.trial_ratio(e) != 0 {
                        return Err(Error::domain(format!(
                            "trial tau = 2^-{e} does not divide the horizon"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn scheme(&self, tau: f64) -> Result<SchemeConfig> {
        Ok(SchemeConfig::new(tau)?.with_reaction(self.reaction))
    }
}

pub(crate) fn dyadic(exponent: u32) -> f64 {
    2f64.powi(-(exponent as i32))
}

/// Strong error at one trial resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    pub exponent: u32,
    /// `h` or `τ`.
    pub resolution: f64,
    /// `(E‖X_trial - X_ref‖²)^{1/2}` estimated by the sample mean.
    pub rms_error: f64,
    /// Standard error of `rms_error` by the delta method.
    pub std_err: f64,
    pub samples: u64,
}

/// Least-squares line through `(ln resolution, ln error)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual-based; zero when only two points are fitted.
    pub slope_std_err: f64,
}

impl RateFit {
    /// `slope ± 2 se`.
    pub fn slope_band(&self) -> (f64, f64) {
        (
            self.slope - 2.0 * self.slope_std_err,
            self.slope + 2.0 * self.slope_std_err,
        )
    }
}

/// Ordinary least squares on log-log data.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::domain(format!(
            "rate fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((r, e)) = points.iter().find(|(r, e)| !(*r > 0.0) || !(*e > 0.0)) {
        return Err(Error::domain(format!(
            "rate fit needs positive data, got ({r}, {e})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("rate fit needs distinct resolutions"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_err = if points.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        intercept,
        slope_std_err,
    })
}

/// Root-mean-square of per-sample errors with its delta-method standard error.
fn rms_with_std_err(squared: &[f64]) -> (f64, f64) {
    let n = squared.len() as f64;
    let mean = squared.iter().sum::<f64>() / n;
    let rms = mean.sqrt();
    if squared.len() < 2 || rms == 0.0 {
        return (rms, 0.0);
    }
    let var = squared.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    (rms, se_mean / (2.0 * rms))
}

/// Runs `f(i)` for `i in 0..count` on the current rayon pool and returns the
/// results in index order. `init` builds per-worker scratch state.
fn ordered_samples<S, T, I, F>(count: u64, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> Result<S> + Sync + Send,
    F: Fn(&mut S, u64) -> Result<T> + Sync + Send,
{
    (0..count)
        .into_par_iter()
        .map_init(
            &init,
            |state, i| match state {
                Ok(s) => f(s, i),
                Err(e) => Err(Error::domain(format!("worker setup failed: {e}"))),
            },
        )
        .collect()
}

struct StudyWorkspace {
    reference: Integrator,
    trials: Vec<(u32, usize, Integrator)>,
    x0_ref: FemFunction,
    x0_trials: Vec<FemFunction>,
}

/// Squared trial errors of every sample, indexed `[sample][trial]`.
fn sample_errors(cfg: &StudyConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let mesh_ref = cfg.reference_mesh()?;
    let modes = cfg.mode_count()?;
    let steps = cfg.fine_steps()?;

    let init = || -> Result<StudyWorkspace> {
        let reference = Integrator::new(mesh_ref, modes, cfg.scheme(cfg.tau_ref())?)?;
        let mut trials = Vec::new();
        let mut x0_trials = Vec::new();
        for &e in &cfg.trial_exponents {
            let mesh = cfg.trial_mesh(e)?;
            let r = cfg.trial_ratio(e);
            let integ = Integrator::new(mesh, modes, cfg.scheme(r as f64 * cfg.tau_ref())?)?;
            x0_trials.push(cfg.initial.project(&mesh)?);
            trials.push((e, r, integ));
        }
        Ok(StudyWorkspace {
            reference,
            trials,
            x0_ref: cfg.initial.project(&mesh_ref)?,
            x0_trials,
        })
    };

    ordered_samples(cfg.samples, init, |ws, i| {
        let path = sample_path(SeedSpec::new(cfg.seed, i), cfg.covariance, modes, steps, cfg.horizon)?;
        let reference = ws
            .reference
            .run(&ws.x0_ref, path.increments())
            .map_err(|e| Error::Sample {
                sample: i,
                exponent: match cfg.axis {
                    Axis::Space => cfg.h_ref_exponent,
                    Axis::Time => cfg.tau_ref_exponent,
                },
                source: Box::new(e),
            })?;
        let mut errs = Vec::with_capacity(ws.trials.len());
        for ((e, r, integ), x0) in ws.trials.iter_mut().zip(&ws.x0_trials) {
            let wrap = |err: Error| Error::Sample {
                sample: i,
                exponent: *e,
                source: Box::new(err),
            };
            let increments = path.increments().aggregate(*r).map_err(wrap)?;
            let end = integ.run(x0, &increments).map_err(wrap)?;
            let fine = prolong(&end.state, &mesh_ref).map_err(wrap)?;
            let diff: Vec<f64> = fine
                .coeffs()
                .iter()
                .zip(reference.state.coeffs())
                .map(|(a, b)| a - b)
                .collect();
            errs.push(mass_form(&mesh_ref, &diff, &diff).max(0.0));
        }
        Ok(errs)
    })
}

/// Per-resolution strong errors, rows sorted by ascending exponent (coarsest
/// first).
pub fn strong_error(cfg: &StudyConfig) -> Result<Vec<ErrorRow>> {
    let per_sample = sample_errors(cfg)?;
    let mut rows: Vec<ErrorRow> = cfg
        .trial_exponents
        .iter()
        .enumerate()
        .map(|(t, &e)| {
            let squared: Vec<f64> = per_sample.iter().map(|s| s[t]).collect();
            let (rms_error, std_err) = rms_with_std_err(&squared);
            ErrorRow {
                exponent: e,
                resolution: dyadic(e),
                rms_error,
                std_err,
                samples: cfg.samples,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.exponent);
    Ok(rows)
}

/// Result of one study.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: StudyConfig,
    pub rows: Vec<ErrorRow>,
    /// Fit over rows with nonzero error; `None` when fewer than two remain.
    pub fit: Option<RateFit>,
    pub wall_clock: Duration,
}

pub const CSV_HEADER: &str = "axis,s,resolution_exponent,ms_error,std_err,samples,slope,seed";

/// 17 significant digits.
pub(crate) fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

impl ExperimentReport {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn slope(&self) -> f64 {
        self.fit.map_or(f64::NAN, |f| f.slope)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.config.axis.as_str(),
                sci(self.config.covariance.exponent()),
                row.exponent,
                sci(row.rms_error),
                sci(row.std_err),
                row.samples,
                sci(self.slope()),
                self.config.seed
            )
            .expect("writing to a String");
        }
        out
    }
}

fn fit_rows(rows: &[ErrorRow]) -> Option<RateFit> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rms_error > 0.0)
        .map(|r| (r.resolution, r.rms_error))
        .collect();
    fit_rate(&points).ok()
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Runs a study on `workers` threads (0 picks the rayon default).
pub fn run_experiment(cfg: &StudyConfig, workers: usize) -> Result<ExperimentReport> {
    let start = Instant::now();
    let rows = with_workers(workers, || strong_error(cfg))?;
    let fit = fit_rows(&rows);
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        fit,
        wall_clock: start.elapsed(),
    })
}

/// Endpoints `X(T)` of the reference discretization for samples
/// `0..cfg.samples`, in sample order. Trial resolutions are ignored.
pub fn reference_endpoints(cfg: &StudyConfig, workers: usize) -> Result<Vec<TrajectoryState>> {
    if cfg.samples == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let mesh = cfg.reference_mesh()?;
    let modes = cfg.mode_count()?;
    let steps = cfg.fine_steps()?;
    let scheme = cfg.scheme(cfg.tau_ref())?;
    let x0 = cfg.initial.project(&mesh)?;
    with_workers(workers, || {
        ordered_samples(
            cfg.samples,
            || Integrator::new(mesh, modes, scheme),
            |integ, i| {
                let path = sample_path(SeedSpec::new(cfg.seed, i), cfg.covariance, modes, steps, cfg.horizon)?;
                integ.run(&x0, path.increments()).map_err(|e| Error::Sample {
                    sample: i,
                    exponent: cfg.tau_ref_exponent,
                    source: Box::new(e),
                })
            },
        )
    })
}

/// Deterministic error of the semigroup approximation at one mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorErrorPoint {
    pub mesh: UniformMesh,
    pub error: f64,
    /// `error / (h² t^{-(2-ν)/2} ‖x‖_ν)`.
    pub bound_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct OperatorErrorReport {
    pub t: f64,
    pub smoothness: f64,
    pub points: Vec<OperatorErrorPoint>,
    pub fit: Option<RateFit>,
}

/// `‖S(t)x - S_h(t) P_h x‖` over a list of meshes, evaluated exactly through
/// the continuous and discrete eigensystems.
pub fn operator_error_probe(
    meshes: &[UniformMesh],
    t: f64,
    source: &[f64],
    smoothness: f64,
) -> Result<OperatorErrorReport> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("probe time {t} must be >= 0")));
    }
    if source.is_empty() {
        return Err(Error::domain("probe source has no modes"));
    }
    let exact: Vec<f64> = source
        .iter()
        .enumerate()
        .map(|(i, c)| c * (-lambda(i + 1) * t).exp())
        .collect();
    let nu_norm = source
        .iter()
        .enumerate()
        .map(|(i, c)| lambda(i + 1).powf(smoothness) * c * c)
        .sum::<f64>()
        .sqrt();
    let mut points = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let projected = l2_project(&ProjectionTarget::Modal(source), mesh)?;
        let eig = discrete_eigendecomposition(mesh);
        let evolved = FemFunction::new(*mesh, eig.semigroup_apply(t, projected.coeffs())?)?;
        let error = l2_distance_modal_to_fem(&exact, &evolved);
        let h = mesh.h();
        let scale = h * h * t.powf(-(2.0 - smoothness) / 2.0) * nu_norm;
        points.push(OperatorErrorPoint {
            mesh: *mesh,
            error,
            bound_ratio: if scale > 0.0 && scale.is_finite() {
                error / scale
            } else {
                f64::NAN
            },
        });
    }
    points.sort_by(|a, b| b.mesh.h().total_cmp(&a.mesh.h()));
    let fit = fit_rate(&points.iter().map(|p| (p.mesh.h(), p.error)).collect::<Vec<_>>()).ok();
    Ok(OperatorErrorReport {
        t,
        smoothness,
        points,
        fit,
    })
}

/// Settings of a Hölder-regularity probe on the reference discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityConfig {
    pub covariance: CovarianceSpec,
    pub h_exponent: u32,
    pub tau_exponent: u32,
    pub samples: u64,
    pub seed: u64,
    pub horizon: f64,
    /// Gaps `T - u = 2^-j`.
    pub gap_exponents: Vec<u32>,
    pub noise: bool,
    pub initial: InitialCondition,
    pub modes: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RegularityReport {
    pub config: RegularityConfig,
    /// `(gap exponent, gap, rms increment, std err)`, coarsest gap first.
    pub rows: Vec<ErrorRow>,
    pub fit: Option<RateFit>,
    /// `min{1, γ}/2`.
    pub predicted: f64,
}

/// Estimates `(E‖X(T) - X(T - g)‖²)^{1/2}` over dyadic gaps `g` and fits
/// the exponent.
pub fn regularity_probe(cfg: &RegularityConfig, workers: usize) -> Result<RegularityReport> {
    let mesh = UniformMesh::dyadic(cfg.h_exponent)?;
    let modes = match cfg.modes {
        Some(0) => return Err(Error::domain("mode count must be >= 1")),
        Some(k) => k,
        None => mesh.interior_nodes(),
    };
    if cfg.samples == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let tau = dyadic(cfg.tau_exponent);
    let steps_f = cfg.horizon / tau;
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-9 * steps_f {
        return Err(Error::domain("horizon is not a multiple of the time step"));
    }
    let mut gaps = cfg.gap_exponents.clone();
    gaps.sort_unstable();
    gaps.dedup();
    if gaps.len() < 2 {
        return Err(Error::domain("regularity probe needs at least two gaps"));
    }
    let mut observe_at = Vec::with_capacity(gaps.len());
    for &j in &gaps {
        if j > cfg.tau_exponent {
            return Err(Error::domain(format!(
                "gap 2^-{j} is finer than the time step 2^-{}",
                cfg.tau_exponent
            )));
        }
        let gap_steps = 1usize << (cfg.tau_exponent - j);
        if gap_steps >= steps {
            return Err(Error::domain(format!(
                "gap 2^-{j} reaches the initial time"
            )));
        }
        observe_at.push(steps - gap_steps);
    }
    let scheme = SchemeConfig::new(tau)?;
    let x0 = cfg.initial.project(&mesh)?;
    let samples = if cfg.noise { cfg.samples } else { 1 };

    let per_sample = with_workers(workers, || {
        ordered_samples(
            samples,
            || Integrator::new(mesh, modes, scheme),
            |integ, i| {
                let path = if cfg.noise {
                    sample_path(SeedSpec::new(cfg.seed, i), cfg.covariance, modes, steps, cfg.horizon)?
                } else {
                    NoisePath::zeros(cfg.covariance, modes, steps, cfg.horizon)?
                };
                let mut snapshots = vec![Vec::new(); observe_at.len()];
                let end = integ.run_observed(&x0, path.increments(), |m, x| {
                    for (slot, &at) in snapshots.iter_mut().zip(&observe_at) {
                        if m == at {
                            *slot = x.to_vec();
                        }
                    }
                })?;
                Ok(snapshots
                    .iter()
                    .map(|snap| {
                        let d: Vec<f64> = end.state.coeffs().iter().zip(snap).map(|(a, b)| a - b).collect();
                        mass_form(&mesh, &d, &d).max(0.0)
                    })
                    .collect::<Vec<f64>>())
            },
        )
    })?;

    let rows: Vec<ErrorRow> = gaps
        .iter()
        .enumerate()
        .map(|(g, &j)| {
            let squared: Vec<f64> = per_sample.iter().map(|s| s[g]).collect();
            let (rms_error, std_err) = rms_with_std_err(&squared);
            ErrorRow {
                exponent: j,
                resolution: dyadic(j),
                rms_error,
                std_err,
                samples,
            }
        })
        .collect();
    let fit = fit_rows(&rows);
    Ok(RegularityReport {
        config: cfg.clone(),
        rows,
        fit,
        predicted: cfg.covariance.regularity_index().min(1.0) / 2.0,
    })
}
