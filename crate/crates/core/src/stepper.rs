//! Backward Euler in time with Newton on the implicit reaction term.
//!
//! One step solves, in weak form on `V_h`,
//!
//! ```text
//! M (x - x_prev) + τ S x = τ b(x) + w,
//! ```
//!
//! with `b` the reaction load and `w` the projected noise increment. This is
//! `x = S_{τ,h} (x_prev + τ P_h F(x) + P_h ΔW)`, `S_{τ,h} = (I + τ A_h)⁻¹`.

use crate::error::{Error, Result};
use crate::fem::{load_and_jacobian_into, thomas, FemFunction, Reaction, SineLoadTable, UniformMesh};
use crate::noise::{IncrementArray, NoisePath};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    tau: f64,
    pub newton_tol: f64,
    pub max_iterations: usize,
    pub tau_max: f64,
    pub reaction: Reaction,
}

impl SchemeConfig {
    pub const DEFAULT_TOL: f64 = 1e-12;
    pub const DEFAULT_MAX_ITERATIONS: usize = 50;
    pub const DEFAULT_TAU_MAX: f64 = 0.5;

    /// Allen-Cahn scheme with default Newton settings.
    pub fn new(tau: f64) -> Result<Self> {
        Self {
            tau,
            newton_tol: Self::DEFAULT_TOL,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            tau_max: Self::DEFAULT_TAU_MAX,
            reaction: Reaction::AllenCahn,
        }
        .validated()
    }

    pub fn with_reaction(mut self, reaction: Reaction) -> Self {
        self.reaction = reaction;
        self
    }

    /// Checks `0 < τ ≤ τ_max < 1`. The implicit map is strongly monotone
    /// only for `τ < 1` since `F` has one-sided Lipschitz constant 1.
    pub fn validated(self) -> Result<Self> {
        if !(self.tau_max > 0.0 && self.tau_max < 1.0) {
            return Err(Error::domain(format!(
                "tau_max {} must lie in (0, 1)",
                self.tau_max
            )));
        }
        if !(self.tau > 0.0 && self.tau <= self.tau_max) {
            return Err(Error::domain(format!(
                "step size {} outside (0, {}]",
                self.tau, self.tau_max
            )));
        }
        if !(self.newton_tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::domain("newton tolerance and iteration cap must be positive"));
        }
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Newton outcome for one accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonDiagnostics {
    pub iterations: usize,
    pub residual: f64,
}

/// State after integrating to the final step.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub step: usize,
    pub state: FemFunction,
    pub diagnostics: Vec<NewtonDiagnostics>,
}

impl TrajectoryState {
    pub fn max_newton_iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0)
    }
}

/// Reusable one-step solver for a fixed mesh and scheme.
#[derive(Clone, Debug)]
pub struct BackwardEuler {
    mesh: UniformMesh,
    cfg: SchemeConfig,
    // M + τS stencil
    op_diag: f64,
    op_off: f64,
    rhs: Vec<f64>,
    load: Vec<f64>,
    jac_diag: Vec<f64>,
    jac_off: Vec<f64>,
    residual: Vec<f64>,
    scratch: Vec<f64>,
}

impl BackwardEuler {
    pub fn new(mesh: UniformMesh, cfg: SchemeConfig) -> Result<Self> {
        let cfg = cfg.validated()?;
        let n = mesh.interior_nodes();
        let h = mesh.h();
        let tau = cfg.tau;
        Ok(Self {
            mesh,
            cfg,
            op_diag: 4.0 * h / 6.0 + tau * 2.0 / h,
            op_off: h / 6.0 - tau / h,
            rhs: vec![0.0; n],
            load: vec![0.0; n],
            jac_diag: vec![0.0; n],
            jac_off: vec![0.0; n.saturating_sub(1)],
            residual: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// Residual `(M + τS) x - τ b(x) - rhs` and the Jacobian of `b`.
    fn evaluate(&mut self, x: &[f64]) -> f64 {
        load_and_jacobian_into(
            self.cfg.reaction,
            &self.mesh,
            x,
            &mut self.load,
            Some((&mut self.jac_diag, &mut self.jac_off)),
        );
        let n = x.len();
        let tau = self.cfg.tau;
        let mut norm_sq = 0.0;
        for i in 0..n {
            let mut ax = self.op_diag * x[i];
            if i > 0 {
                ax += self.op_off * x[i - 1];
            }
            if i + 1 < n {
                ax += self.op_off * x[i + 1];
            }
            let r = ax - tau * self.load[i] - self.rhs[i];
            self.residual[i] = r;
            norm_sq += r * r;
        }
        norm_sq.sqrt()
    }

    /// Solves one step in place: `x` enters as `x_prev` and leaves as the
    /// new state. `w` is the step's noise load vector.
    pub fn step_in_place(&mut self, x: &mut [f64], w: &[f64], step: usize) -> Result<NewtonDiagnostics> {
        let n = self.mesh.interior_nodes();
        if x.len() != n || w.len() != n {
            return Err(Error::domain(format!(
                "step on mesh with {n} nodes got state {} and load {}",
                x.len(),
                w.len()
            )));
        }
        let h = self.mesh.h();
        let (md, mo) = (4.0 * h / 6.0, h / 6.0);
        for i in 0..n {
            let mut mx = md * x[i];
            if i > 0 {
                mx += mo * x[i - 1];
            }
            if i + 1 < n {
                mx += mo * x[i + 1];
            }
            self.rhs[i] = mx + w[i];
        }

        let tau = self.cfg.tau;
        let mut residual = self.evaluate(x);
        let mut iterations = 0;
        while residual > self.cfg.newton_tol {
            if iterations == self.cfg.max_iterations || !residual.is_finite() {
                return Err(Error::StepFailure {
                    step,
                    iterations,
                    residual,
                });
            }
            // (M + τS - τJ) δ = -R
            for d in self.jac_diag.iter_mut() {
                *d = self.op_diag - tau * *d;
            }
            for o in self.jac_off.iter_mut() {
                *o = self.op_off - tau * *o;
            }
            for r in self.residual.iter_mut() {
                *r = -*r;
            }
            thomas(
                &self.jac_off,
                &self.jac_diag,
                &self.jac_off,
                &mut self.residual,
                &mut self.scratch,
            )?;
            for (xi, d) in x.iter_mut().zip(&self.residual) {
                *xi += d;
            }
            iterations += 1;
            residual = self.evaluate(x);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure {
                step,
                iterations,
                residual,
            });
        }
        Ok(NewtonDiagnostics {
            iterations,
            residual,
        })
    }
}

/// One backward Euler step from `x_prev` with noise load `w`.
pub fn backward_euler_step(x_prev: &FemFunction, w: &[f64], cfg: &SchemeConfig) -> Result<FemFunction> {
    let mut solver = BackwardEuler::new(*x_prev.mesh(), *cfg)?;
    let mut x = x_prev.clone();
    solver.step_in_place(x.coeffs_mut(), w, 0)?;
    Ok(x)
}

/// Trajectory integrator holding the mesh-dependent noise projection table.
#[derive(Clone, Debug)]
pub struct Integrator {
    solver: BackwardEuler,
    table: SineLoadTable,
}

impl Integrator {
    pub fn new(mesh: UniformMesh, modes: usize, cfg: SchemeConfig) -> Result<Self> {
        Ok(Self {
            solver: BackwardEuler::new(mesh, cfg)?,
            table: SineLoadTable::new(mesh, modes)?,
        })
    }

    pub fn mesh(&self) -> &UniformMesh {
        self.solver.mesh()
    }

    pub fn config(&self) -> &SchemeConfig {
        self.solver.config()
    }

    /// Steps through every increment of `increments`, calling `observe` with
    /// the step count and state after each step.
    pub fn run_observed(
        &mut self,
        x0: &FemFunction,
        increments: &IncrementArray,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<TrajectoryState> {
        if x0.mesh() != self.solver.mesh() {
            return Err(Error::domain("initial state lives on a different mesh"));
        }
        if increments.modes() != self.table.modes() {
            return Err(Error::domain(format!(
                "increments carry {} modes, integrator built for {}",
                increments.modes(),
                self.table.modes()
            )));
        }
        let tau = self.solver.config().tau();
        if (increments.tau() - tau).abs() > 1e-12 * tau {
            return Err(Error::domain(format!(
                "increment step {} differs from scheme step {tau}",
                increments.tau()
            )));
        }
        let n = x0.mesh().interior_nodes();
        let mut x = x0.clone();
        let mut dw = vec![0.0; increments.modes()];
        let mut w = vec![0.0; n];
        let mut diagnostics = Vec::with_capacity(increments.steps());
        for m in 0..increments.steps() {
            increments.step_into(m, &mut dw);
            self.table.load_into(&dw, &mut w)?;
            let d = self.solver.step_in_place(x.coeffs_mut(), &w, m + 1)?;
            diagnostics.push(d);
            observe(m + 1, x.coeffs());
        }
        Ok(TrajectoryState {
            step: increments.steps(),
            state: x,
            diagnostics,
        })
    }

    pub fn run(&mut self, x0: &FemFunction, increments: &IncrementArray) -> Result<TrajectoryState> {
        self.run_observed(x0, increments, |_, _| {})
    }
}

/// Integrates to the path horizon with step `r τ_fine`.
pub fn integrate(
    x0: &FemFunction,
    path: &NoisePath,
    r: usize,
    cfg: &SchemeConfig,
) -> Result<TrajectoryState> {
    let increments = path.increments().aggregate(r)?;
    let expected = r as f64 * path.fine_tau();
    if (cfg.tau() - expected).abs() > 1e-12 * expected {
        return Err(Error::domain(format!(
            "scheme step {} is not {r} x fine step {}",
            cfg.tau(),
            path.fine_tau()
        )));
    }
    Integrator::new(*x0.mesh(), path.modes(), *cfg)?.run(x0, &increments)
}
