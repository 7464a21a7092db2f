//! Semi-implicit IMEX-BDF2 integration of the nudged system.
//!
//! Each step solves
//!
//! ```text
//! α M uⁿ + ν K uⁿ + C(w*) uⁿ + μ G uⁿ + β B uⁿ − Dᵀ pⁿ = F(tₙ) + β Eᵀ W I_H u(tₙ) + M h
//!                                                D uⁿ = 0,   mᵀ pⁿ = 0
//! ```
//!
//! with `α = 1/Δt`, `w* = u⁰`, `h = u⁰/Δt` on the first (implicit Euler)
//! step and `α = 3/(2Δt)`, `w* = 2uⁿ⁻¹ − uⁿ⁻²`, `h = (4uⁿ⁻¹ − uⁿ⁻²)/(2Δt)`
//! afterwards. Only the convection block changes between steps; it is
//! scattered straight into the bordered matrix, whose symbolic LU is
//! computed once. The nudging term enters through auxiliary coarse unknowns
//! (see [`LowRankCoupling`]). A numeric LU is reused across steps as the
//! preconditioner of GMRES and recomputed as soon as the iteration count
//! grows, so every step is solved to the same residual.

use crate::assembly::{
    assemble_load, element_convection, gather_local, OperatorSet, ReferenceTable,
};
use crate::error::{Error, Result};
use crate::fem::{build_dofmap, interpolate_p2, quadrature_rule, AffineMap, DofMap};
use crate::manufactured::{amplitude, amplitude_dt, velocity_profile, ForcingParts};
use crate::mesh::{build_coarse_grid, build_fine_mesh, CoarseGrid};
use crate::observe::{InterpolantKind, ObservationOperator};
use crate::solver::{finish_saddle, gmres, BorderedPattern, LowRankCoupling, LuFactorization, SymbolicAnalysis};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    Zero,
    ExactAtZero,
}

/// Which truth drives the forcing and the observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemData {
    /// The manufactured pair with its consistent forcing.
    Manufactured,
    /// `f = 0` and a zero truth.
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub nu: f64,
    pub beta: f64,
    pub mu: f64,
    pub n: usize,
    pub k: usize,
    /// Requested step; `None` selects `min(0.1 h, 0.01 T)`.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub interpolant: InterpolantKind,
    pub initial: InitialCondition,
    pub data: ProblemData,
    pub assembly_degree: usize,
    pub error_degree: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            beta: 1.0,
            mu: 0.0,
            n: 12,
            k: 3,
            dt: None,
            t_final: 4.0,
            interpolant: InterpolantKind::PiecewiseConstantAverage,
            initial: InitialCondition::Zero,
            data: ProblemData::Manufactured,
            assembly_degree: 5,
            error_degree: 8,
        }
    }
}

impl SimulationConfig {
    pub fn default_dt(n: usize, t_final: f64) -> f64 {
        (0.1 / n as f64).min(0.01 * t_final)
    }

    pub fn requested_dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| Self::default_dt(self.n, self.t_final))
    }

    /// Number of steps; the requested step is shortened so that the last
    /// step lands on `T`.
    pub fn num_steps(&self) -> usize {
        ((self.t_final / self.requested_dt()) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn time_step(&self) -> f64 {
        self.t_final / self.num_steps() as f64
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn coarse_width(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be nonnegative, got {}", self.mu));
        }
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if self.k == 0 || self.n % self.k != 0 {
            return bad(format!("k = {} must divide N = {}", self.k, self.n));
        }
        let dt = self.requested_dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return bad(format!("dt must be positive, got {dt}"));
        }
        if !(self.t_final >= dt) {
            return bad(format!("T = {} must be at least dt = {dt}", self.t_final));
        }
        if self.assembly_degree < 5 {
            return bad(format!(
                "assembly quadrature degree must be at least 5, got {}",
                self.assembly_degree
            ));
        }
        if self.error_degree < 8 {
            return bad(format!(
                "error quadrature degree must be at least 8, got {}",
                self.error_degree
            ));
        }
        quadrature_rule(self.assembly_degree)?;
        quadrature_rule(self.error_degree)?;
        Ok(())
    }
}

/// BDF2 history: `u_prev = uⁿ⁻¹`, `u_prev2 = uⁿ⁻²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub u_prev: Vec<f64>,
    pub u_prev2: Vec<f64>,
    pub p_prev: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// `‖u_h − u‖₀`.
    pub l2_error: f64,
    /// `‖I_H e_h‖₀ / ‖e_h‖₀`, zero when the error vanishes.
    pub obs_ratio: f64,
    /// `‖D u_h‖∞`.
    pub div_residual: f64,
    /// `|mᵀ p_h|`.
    pub mean_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_state: TimeState,
}

/// Error integration against the truth with cached profile values.
#[derive(Debug, Clone)]
struct ErrorEvaluator {
    phi: Vec<[f64; 6]>,
    /// per element and point: `w · det` and `U(x)`
    weights: Vec<f64>,
    profile: Vec<[f64; 2]>,
    npts: usize,
}

impl ErrorEvaluator {
    fn new(dofmap: &DofMap, degree: usize) -> Result<Self> {
        let rule = quadrature_rule(degree)?;
        let table = ReferenceTable::new(&rule);
        let npts = table.len();
        let mut weights = Vec::with_capacity(dofmap.num_elements() * npts);
        let mut profile = Vec::with_capacity(dofmap.num_elements() * npts);
        for e in 0..dofmap.num_elements() {
            let map = AffineMap::new(dofmap.element_coords(e));
            for q in 0..npts {
                let x = map.to_physical(table.points[q]);
                weights.push(table.weights[q] * map.det());
                profile.push(velocity_profile(x[0], x[1]));
            }
        }
        Ok(Self {
            phi: table.phi,
            weights,
            profile,
            npts,
        })
    }

    /// `‖u_h − s U‖₀`.
    fn error(&self, dofmap: &DofMap, u: &[f64], scale: f64) -> f64 {
        let nn = dofmap.num_nodes();
        let mut sum = 0.0;
        for e in 0..dofmap.num_elements() {
            let nodes = dofmap.element_nodes(e);
            let local = [nodes.map(|n| u[n]), nodes.map(|n| u[nn + n])];
            for q in 0..self.npts {
                let k = e * self.npts + q;
                let mut v = [0.0; 2];
                for a in 0..6 {
                    v[0] += local[0][a] * self.phi[q][a];
                    v[1] += local[1][a] * self.phi[q][a];
                }
                let d0 = v[0] - scale * self.profile[k][0];
                let d1 = v[1] - scale * self.profile[k][1];
                sum += self.weights[k] * (d0 * d0 + d1 * d1);
            }
        }
        sum.sqrt()
    }
}

/// Relative residual every step is solved to.
pub const STEP_RESIDUAL_TOL: f64 = 1e-10;
/// Krylov dimension before a step gives up on the cached factorization.
const MAX_KRYLOV: usize = 40;
/// Iterations above which the factorization is renewed on the next step.
const STALE_ITERATIONS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Euler,
    Bdf2,
}

/// Per-run solver statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub factorizations: usize,
    pub krylov_iterations: usize,
}

/// Load vectors of the four spatial forcing pieces.
#[derive(Debug, Clone)]
struct ForcingLoads {
    profile: Vec<f64>,
    laplacian: Vec<f64>,
    pressure_grad: Vec<f64>,
    advection: Vec<f64>,
}

/// Assembled, factor-ready discretisation of one configuration.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimulationConfig,
    dt: f64,
    steps: usize,
    dofmap: DofMap,
    grid: CoarseGrid,
    observation: ObservationOperator,
    ops: OperatorSet,
    pattern: BorderedPattern,
    symbolic: SymbolicAnalysis,
    base_euler: Vec<f64>,
    base_bdf2: Vec<f64>,
    table: ReferenceTable,
    maps: Vec<AffineMap>,
    grads: Vec<Vec<[[f64; 2]; 6]>>,
    /// bordered value positions of each element's 6x6 convection block
    /// (component-independent layout `[c][a][b]`); `usize::MAX` if eliminated
    conv_pos: Vec<[usize; 72]>,
    loads: ForcingLoads,
    /// `I_H U` and `β Eᵀ W I_H U`
    datum_profile: Vec<f64>,
    datum_rhs: Vec<f64>,
    errors: ErrorEvaluator,
    zero_pressure_rhs: Vec<f64>,
    factor: Option<(Stage, LuFactorization)>,
    renew: bool,
    /// last two bordered solutions, newest first, for the initial guess
    history: Vec<Vec<f64>>,
    stats: SolveStats,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_fine_mesh(config.n)?;
        let grid = build_coarse_grid(&mesh, config.k)?;
        let dofmap = build_dofmap(&mesh);
        let rule = quadrature_rule(config.assembly_degree)?;
        let observation = ObservationOperator::new(config.interpolant, &grid, &dofmap)?;
        let ops = OperatorSet::assemble(&dofmap, &rule, &observation)?;
        let dt = config.time_step();
        let steps = config.num_steps();

        let template = combine(&ops, 1.0, &config)?;
        let boundary = dofmap.boundary_velocity_dofs();
        let coupling = if config.beta > 0.0 {
            Some(nudging_coupling(&observation, config.beta)?)
        } else {
            None
        };
        let pattern = BorderedPattern::with_coupling(
            &template,
            &ops.divergence,
            &ops.pressure_mean,
            &boundary,
            coupling.as_ref(),
        );
        let symbolic = SymbolicAnalysis::new(pattern.matrix())?;
        let base_euler = pattern.values_with_velocity(&combine(&ops, 1.0 / dt, &config)?)?;
        let base_bdf2 = pattern.values_with_velocity(&combine(&ops, 1.5 / dt, &config)?)?;

        let table = ReferenceTable::new(&rule);
        let maps: Vec<AffineMap> = (0..dofmap.num_elements())
            .map(|e| AffineMap::new(dofmap.element_coords(e)))
            .collect();
        let grads = maps.iter().map(|m| table.physical_gradients(m)).collect();
        let nn = dofmap.num_nodes();
        let conv_pos = (0..dofmap.num_elements())
            .map(|e| {
                let nodes = dofmap.element_nodes(e);
                let mut pos = [usize::MAX; 72];
                for c in 0..2 {
                    for a in 0..6 {
                        for b in 0..6 {
                            if let Some(p) = pattern.velocity_position(c * nn + nodes[a], c * nn + nodes[b]) {
                                pos[c * 36 + a * 6 + b] = p;
                            }
                        }
                    }
                }
                pos
            })
            .collect();

        let load = |pick: fn(&ForcingParts) -> [f64; 2]| {
            assemble_load(&dofmap, &rule, |x, y, _| pick(&ForcingParts::at(x, y)), 0.0)
        };
        let loads = ForcingLoads {
            profile: load(|f| f.profile),
            laplacian: load(|f| f.laplacian),
            pressure_grad: load(|f| f.pressure_grad),
            advection: load(|f| f.advection),
        };
        let datum_profile = observation.observe_function(&dofmap, velocity_profile)?;
        let mut datum_rhs = observation.weighted_transpose(&datum_profile);
        datum_rhs.iter_mut().for_each(|v| *v *= config.beta);
        let errors = ErrorEvaluator::new(&dofmap, config.error_degree)?;
        let zero_pressure_rhs = vec![0.0; dofmap.num_pressure_dofs()];
        Ok(Self {
            config,
            dt,
            steps,
            dofmap,
            grid,
            observation,
            ops,
            pattern,
            symbolic,
            base_euler,
            base_bdf2,
            table,
            maps,
            grads,
            conv_pos,
            loads,
            datum_profile,
            datum_rhs,
            errors,
            zero_pressure_rhs,
            factor: None,
            renew: false,
            history: Vec::new(),
            stats: SolveStats::default(),
        })
    }

    pub fn solve_stats(&self) -> SolveStats {
        self.stats
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn grid(&self) -> &CoarseGrid {
        &self.grid
    }

    pub fn observation(&self) -> &ObservationOperator {
        &self.observation
    }

    pub fn operators(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_steps(&self) -> usize {
        self.steps
    }

    /// Amplitude of the truth at `t` (zero for homogeneous data).
    fn truth_scale(&self, t: f64) -> f64 {
        match self.config.data {
            ProblemData::Manufactured => amplitude(t),
            ProblemData::Homogeneous => 0.0,
        }
    }

    /// `(f(t), φ_i)`.
    pub fn load(&self, t: f64) -> Vec<f64> {
        let nv = self.dofmap.num_velocity_dofs();
        if self.config.data == ProblemData::Homogeneous {
            return vec![0.0; nv];
        }
        let (g, gt, nu) = (amplitude(t), amplitude_dt(t), self.config.nu);
        let l = &self.loads;
        (0..nv)
            .map(|i| {
                gt * l.profile[i] + g * (-nu * l.laplacian[i] + l.pressure_grad[i]) + g * g * l.advection[i]
            })
            .collect()
    }

    /// `β Eᵀ W I_H u(·, t)` with the exact datum.
    pub fn observation_rhs(&self, t: f64) -> Vec<f64> {
        let s = self.truth_scale(t);
        self.datum_rhs.iter().map(|v| s * v).collect()
    }

    pub fn initial_state(&self) -> TimeState {
        let nv = self.dofmap.num_velocity_dofs();
        let u0 = match self.config.initial {
            InitialCondition::Zero => vec![0.0; nv],
            InitialCondition::ExactAtZero => {
                let s = self.truth_scale(0.0);
                let mut u = interpolate_p2(&self.dofmap, |x, y| velocity_profile(x, y).map(|v| s * v));
                for b in self.dofmap.boundary_velocity_dofs() {
                    u[b] = 0.0;
                }
                u
            }
        };
        self.state_from(u0)
    }

    /// State at `t = 0` holding the given velocity.
    pub fn state_from(&self, u0: Vec<f64>) -> TimeState {
        TimeState {
            u_prev2: u0.clone(),
            u_prev: u0,
            p_prev: vec![0.0; self.dofmap.num_pressure_dofs()],
            t: 0.0,
            step: 0,
        }
    }

    /// Implicit Euler step from `u⁰` with convection `C(u⁰)`.
    pub fn first_step(&mut self, state: &TimeState) -> Result<(TimeState, StepDiagnostics)> {
        let t = state.t + self.dt;
        let hist: Vec<f64> = state.u_prev.iter().map(|v| v / self.dt).collect();
        self.advance(Stage::Euler, &state.u_prev.clone(), &hist, t, state)
    }

    /// BDF2 step with extrapolated convection `C(2uⁿ⁻¹ − uⁿ⁻²)`.
    pub fn bdf2_step(&mut self, state: &TimeState) -> Result<(TimeState, StepDiagnostics)> {
        let t = state.t + self.dt;
        let w: Vec<f64> = state
            .u_prev
            .iter()
            .zip(&state.u_prev2)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        let c = 0.5 / self.dt;
        let hist: Vec<f64> = state
            .u_prev
            .iter()
            .zip(&state.u_prev2)
            .map(|(a, b)| c * (4.0 * a - b))
            .collect();
        self.advance(Stage::Bdf2, &w, &hist, t, state)
    }

    /// Solves the bordered system by GMRES preconditioned with the cached
    /// factorization of the same stage, refactorizing when there is none,
    /// when the previous step flagged it as stale, or when GMRES stalls.
    fn solve_bordered(&mut self, stage: Stage, values: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tol = STEP_RESIDUAL_TOL * inf(b);
        let guess: Vec<f64> = match self.history.as_slice() {
            [a, c] => a.iter().zip(c).map(|(p, q)| 2.0 * p - q).collect(),
            [a] => a.clone(),
            _ => vec![0.0; b.len()],
        };
        let pattern = &self.pattern;
        let r0 = pattern.residual(values, &guess, b);
        let krylov = |lu: &LuFactorization| -> (Vec<f64>, usize, bool) {
            let (d, info) = gmres(|v| pattern.apply(values, v), |v| lu.apply_inverse(v), &r0, tol, MAX_KRYLOV);
            let x: Vec<f64> = guess.iter().zip(&d).map(|(p, q)| p + q).collect();
            let ok = info.converged && inf(&pattern.residual(values, &x, b)) <= tol;
            (x, info.iterations, ok)
        };
        let mut solved = None;
        if !self.renew {
            if let Some((s, lu)) = &self.factor {
                if *s == stage {
                    let (x, iterations, ok) = krylov(lu);
                    self.stats.krylov_iterations += iterations;
                    if ok {
                        self.renew = iterations > STALE_ITERATIONS;
                        solved = Some(x);
                    }
                }
            }
        }
        let x = match solved {
            Some(x) => x,
            None => {
                let lu = self.symbolic.factorize_values(values)?;
                // the fresh factors must pass their own residual check
                lu.solve(b)?;
                let (x, iterations, ok) = krylov(&lu);
                self.stats.factorizations += 1;
                self.stats.krylov_iterations += iterations;
                if !ok {
                    return Err(Error::Factorization(format!(
                        "step residual above {STEP_RESIDUAL_TOL:e} x |b| after {iterations} preconditioned iterations"
                    )));
                }
                self.factor = Some((stage, lu));
                self.renew = false;
                x
            }
        };
        self.history.insert(0, x.clone());
        self.history.truncate(2);
        Ok(x)
    }

    fn advance(
        &mut self,
        stage: Stage,
        w: &[f64],
        hist: &[f64],
        t: f64,
        state: &TimeState,
    ) -> Result<(TimeState, StepDiagnostics)> {
        let step = state.step + 1;
        let diverged = || Error::Diverged {
            step,
            t,
            last_good_t: state.t,
        };
        if w.iter().any(|v| !v.is_finite()) {
            return Err(diverged());
        }
        let mut values = match stage {
            Stage::Euler => self.base_euler.clone(),
            Stage::Bdf2 => self.base_bdf2.clone(),
        };
        for e in 0..self.dofmap.num_elements() {
            let ce = element_convection(&self.table, &self.maps[e], &self.grads[e], &gather_local(&self.dofmap, w, e));
            let pos = &self.conv_pos[e];
            for c in 0..2 {
                for a in 0..6 {
                    for b in 0..6 {
                        let p = pos[c * 36 + a * 6 + b];
                        if p != usize::MAX {
                            values[p] += ce[a][b];
                        }
                    }
                }
            }
        }
        let mut rhs = self.load(t);
        let obs = self.observation_rhs(t);
        let mh = self.ops.mass.mul_vec(hist);
        for i in 0..rhs.len() {
            rhs[i] += obs[i] + mh[i];
        }
        rhs.extend_from_slice(&self.zero_pressure_rhs);
        let b = self.pattern.rhs(&rhs);
        let x = self.solve_bordered(stage, &values, &b).map_err(|e| match e {
            Error::SingularMatrix { .. } => diverged(),
            other => other,
        })?;
        let sol = finish_saddle(&x, &self.ops.divergence, &self.ops.pressure_mean, &self.zero_pressure_rhs)?;
        let next = TimeState {
            u_prev2: state.u_prev.clone(),
            u_prev: sol.velocity,
            p_prev: sol.pressure,
            t,
            step,
        };
        let mut diag = self.diagnostics(&next.u_prev, t, step);
        diag.mean_residual = sol.mean_residual;
        Ok((next, diag))
    }

    /// Error, observed-error ratio and divergence of a velocity at time `t`.
    pub fn diagnostics(&self, u: &[f64], t: f64, step: usize) -> StepDiagnostics {
        let s = self.truth_scale(t);
        let l2_error = self.errors.error(&self.dofmap, u, s);
        let mut coarse = self.observation.extraction().mul_vec(u);
        for (c, d) in coarse.iter_mut().zip(&self.datum_profile) {
            *c -= s * d;
        }
        let observed = self.observation.coarse_inner(&coarse, &coarse).max(0.0).sqrt();
        let div = self.ops.divergence.mul_vec(u);
        StepDiagnostics {
            step,
            t,
            l2_error,
            obs_ratio: if l2_error > 0.0 { observed / l2_error } else { 0.0 },
            div_residual: div.iter().fold(0.0, |m, v| m.max(v.abs())),
            mean_residual: 0.0,
        }
    }

    /// Velocity L² error against the truth at `t`.
    pub fn l2_error(&self, u: &[f64], t: f64) -> f64 {
        self.errors.error(&self.dofmap, u, self.truth_scale(t))
    }

    /// Runs from the configured initial state to `T`, calling `observer`
    /// with every accepted state (including `t = 0`).
    pub fn run_with(&mut self, mut observer: impl FnMut(&TimeState, &StepDiagnostics)) -> Result<RunOutcome> {
        self.run_from(self.initial_state(), &mut observer)
    }

    pub fn run_from(
        &mut self,
        initial: TimeState,
        observer: &mut dyn FnMut(&TimeState, &StepDiagnostics),
    ) -> Result<RunOutcome> {
        let mut diagnostics = Vec::with_capacity(self.steps + 1);
        let d0 = self.diagnostics(&initial.u_prev, initial.t, initial.step);
        observer(&initial, &d0);
        diagnostics.push(d0);
        let mut state = initial;
        for n in 0..self.steps {
            let (next, mut diag) = if n == 0 { self.first_step(&state)? } else { self.bdf2_step(&state)? };
            // land exactly on multiples of dt
            let t = (n + 1) as f64 * self.dt;
            let next = TimeState { t, ..next };
            diag.t = t;
            if !diag.l2_error.is_finite() {
                return Err(Error::Diverged {
                    step: next.step,
                    t,
                    last_good_t: state.t,
                });
            }
            observer(&next, &diag);
            diagnostics.push(diag);
            state = next;
        }
        Ok(RunOutcome {
            diagnostics,
            final_state: state,
        })
    }

    pub fn run(&mut self) -> Result<RunOutcome> {
        self.run_with(|_, _| {})
    }
}

/// `α M + ν K + μ G`; every block is kept in the pattern even when its
/// coefficient is zero. The nudging block is carried by [`nudging_coupling`].
fn combine(ops: &OperatorSet, alpha: f64, config: &SimulationConfig) -> Result<SparseMatrix> {
    ops.mass
        .scaled(alpha)
        .add_scaled(config.nu, &ops.stiffness)?
        .add_scaled(config.mu, &ops.graddiv)
}

/// `β B = (β Eᵀ (W ⊗ I₂)) E` as a low-rank coupling.
pub fn nudging_coupling(observation: &ObservationOperator, beta: f64) -> Result<LowRankCoupling> {
    let nc = observation.num_coarse();
    let mut trip = Vec::new();
    for i in 0..nc {
        for (j, w) in observation.gram().row(i) {
            for c in 0..2 {
                trip.push((c * nc + i, c * nc + j, beta * w));
            }
        }
    }
    let w2 = SparseMatrix::from_triplets(2 * nc, 2 * nc, &trip);
    Ok(LowRankCoupling {
        left: observation.extraction().transpose().matmul(&w2)?,
        right: observation.extraction().clone(),
    })
}

/// Runs a configuration from its configured initial state.
pub fn run(config: SimulationConfig) -> Result<RunOutcome> {
    Simulation::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::eval_p2_field;

    fn config(n: usize, k: usize) -> SimulationConfig {
        SimulationConfig {
            n,
            k,
            ..Default::default()
        }
    }

    #[test]
    fn default_dt_and_step_count() {
        let c = SimulationConfig {
            n: 10,
            t_final: 4.0,
            ..Default::default()
        };
        assert_eq!(c.requested_dt(), 0.01);
        assert_eq!(c.num_steps(), 400);
        let c = SimulationConfig {
            dt: Some(0.3),
            t_final: 1.0,
            ..Default::default()
        };
        assert_eq!(c.num_steps(), 4);
        assert_eq!(c.time_step(), 0.25);
    }

    #[test]
    fn validation() {
        assert!(config(12, 3).validate().is_ok());
        assert!(config(8, 3).validate().is_err());
        for bad in [
            SimulationConfig { nu: 0.0, ..config(6, 3) },
            SimulationConfig { beta: -1.0, ..config(6, 3) },
            SimulationConfig { mu: -0.1, ..config(6, 3) },
            SimulationConfig { dt: Some(0.0), ..config(6, 3) },
            SimulationConfig { dt: Some(2.0), t_final: 1.0, ..config(6, 3) },
            SimulationConfig { assembly_degree: 4, ..config(6, 3) },
            SimulationConfig { error_degree: 6, ..config(6, 3) },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mut sim = Simulation::new(SimulationConfig {
            beta: 0.0,
            data: ProblemData::Homogeneous,
            dt: Some(0.1),
            t_final: 0.5,
            ..config(6, 3)
        })
        .unwrap();
        let out = sim.run().unwrap();
        assert!(out.final_state.u_prev.iter().all(|&v| v == 0.0));
        assert!(out.diagnostics.iter().all(|d| d.l2_error == 0.0));
    }

    #[test]
    fn observation_rhs_matches_brute_force() {
        for kind in [InterpolantKind::PiecewiseConstantAverage, InterpolantKind::CoarseLagrangeP1] {
            let sim = Simulation::new(SimulationConfig {
                beta: 0.7,
                interpolant: kind,
                ..config(6, 3)
            })
            .unwrap();
            let rhs = sim.observation_rhs(0.0);
            let d = sim.dofmap();
            let op = sim.observation();
            let exact = op.observe_function(d, |x, y| crate::manufactured::eval_u(x, y, 0.0)).unwrap();
            // β (I_H u, I_H φ_i) by quadrature of the reconstructed coarse functions
            let rule = quadrature_rule(8).unwrap();
            let mut unit = vec![0.0; d.num_velocity_dofs()];
            for i in 0..d.num_velocity_dofs() {
                unit[i] = 1.0;
                let ci = op.apply(&unit).unwrap();
                unit[i] = 0.0;
                let mut s = 0.0;
                for e in 0..d.num_elements() {
                    let map = AffineMap::new(d.element_coords(e));
                    for (b, w) in rule.points().iter().zip(rule.weights()) {
                        let x = map.to_physical(*b);
                        // interior point of the element avoids coarse-edge ties
                        let a = op.eval_coarse(&exact, x).unwrap();
                        let p = op.eval_coarse(&ci, x).unwrap();
                        s += w * map.det() * (a[0] * p[0] + a[1] * p[1]);
                    }
                }
                assert!((0.7 * s - rhs[i]).abs() < 1e-12, "{kind:?} dof {i}: {} vs {}", 0.7 * s, rhs[i]);
            }
            let zero = Simulation::new(SimulationConfig { beta: 0.0, interpolant: kind, ..config(6, 3) }).unwrap();
            assert!(zero.observation_rhs(1.3).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn constant_datum_equals_nudging_of_interpolant() {
        let sim = Simulation::new(SimulationConfig { beta: 2.0, ..config(6, 2) }).unwrap();
        let d = sim.dofmap();
        let op = sim.observation();
        let c = [0.3, -1.1];
        let datum = op.observe_function(d, |_, _| c).unwrap();
        let mut lhs = op.weighted_transpose(&datum);
        lhs.iter_mut().for_each(|v| *v *= 2.0);
        let rhs = sim.operators().nudging.mul_vec(&interpolate_p2(d, |_, _| c));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - 2.0 * b).abs() < 1e-13);
        }
    }

    #[test]
    fn viscous_step_dissipates() {
        let mut sim = Simulation::new(SimulationConfig {
            nu: 1e6,
            beta: 0.0,
            data: ProblemData::Homogeneous,
            dt: Some(0.01),
            t_final: 0.01,
            ..config(6, 3)
        })
        .unwrap();
        let d = sim.dofmap();
        let mut u0 = interpolate_p2(d, |x, y| {
            let s = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
            [s, 0.5 * s]
        });
        for b in d.boundary_velocity_dofs() {
            u0[b] = 0.0;
        }
        let s0 = sim.state_from(u0.clone());
        let (s1, _) = sim.first_step(&s0).unwrap();
        assert!(sim.l2_error(&s1.u_prev, 0.0) < sim.l2_error(&u0, 0.0));
    }

    #[test]
    fn error_evaluator_matches_pointwise_quadrature() {
        let sim = Simulation::new(SimulationConfig { initial: InitialCondition::ExactAtZero, ..config(4, 2) }).unwrap();
        let d = sim.dofmap();
        let u = interpolate_p2(d, |x, y| [x * y, x - y * y]);
        let t = 0.37;
        let rule = quadrature_rule(8).unwrap();
        let mut s = 0.0;
        for e in 0..d.num_elements() {
            let map = AffineMap::new(d.element_coords(e));
            for (b, w) in rule.points().iter().zip(rule.weights()) {
                let x = map.to_physical(*b);
                let uh = eval_p2_field(d, &u, e, *b);
                let ue = crate::manufactured::eval_u(x[0], x[1], t);
                s += w * map.det() * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            }
        }
        assert!((sim.l2_error(&u, t) - s.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn constraints_hold_every_step() {
        let mut sim = Simulation::new(SimulationConfig {
            nu: 1e-3,
            mu: 0.05,
            dt: Some(0.01),
            t_final: 1.0,
            ..config(6, 3)
        })
        .unwrap();
        let out = sim.run().unwrap();
        assert_eq!(out.diagnostics.len(), 101);
        for d in &out.diagnostics {
            assert!(d.div_residual <= 1e-9 && d.mean_residual <= 1e-10);
            assert!(d.obs_ratio <= 1.0 + 1e-12);
        }
        assert!((out.final_state.t - 1.0).abs() < 1e-15);
        let stats = sim.solve_stats();
        assert!(stats.factorizations >= 2 && stats.factorizations < 20, "{stats:?}");
    }

    #[test]
    fn reused_factorizations_match_fresh_ones() {
        let c = SimulationConfig { nu: 1e-2, mu: 0.05, beta: 10.0, dt: Some(0.02), t_final: 0.4, ..config(6, 3) };
        let mut reused = Simulation::new(c.clone()).unwrap();
        let mut fresh = Simulation::new(c).unwrap();
        let mut a = reused.initial_state();
        let mut b = a.clone();
        for n in 0..20 {
            a = if n == 0 { reused.first_step(&a) } else { reused.bdf2_step(&a) }.unwrap().0;
            fresh.factor = None;
            b = if n == 0 { fresh.first_step(&b) } else { fresh.bdf2_step(&b) }.unwrap().0;
        }
        assert!(reused.solve_stats().factorizations < fresh.solve_stats().factorizations);
        // both trajectories are solved to the same relative residual
        let scale = b.u_prev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = a.u_prev.iter().zip(&b.u_prev).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap <= 1e-8 * scale, "{gap:e} vs {scale:e}");
    }

    #[test]
    fn coupled_nudging_equals_assembled_gram() {
        let sim = Simulation::new(SimulationConfig { beta: 3.0, ..config(6, 3) }).unwrap();
        let c = nudging_coupling(sim.observation(), 3.0).unwrap();
        let product = c.left.matmul(&c.right).unwrap();
        let diff = product.add_scaled(-3.0, &sim.operators().nudging).unwrap();
        assert!(diff.max_abs() < 1e-14);
    }

    #[test]
    fn deterministic_runs() {
        let c = SimulationConfig { dt: Some(0.05), t_final: 0.5, ..config(6, 3) };
        let a = run(c.clone()).unwrap();
        let b = run(c).unwrap();
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn fast_load_matches_direct_assembly() {
        let sim = Simulation::new(SimulationConfig { nu: 0.3, ..config(4, 2) }).unwrap();
        let rule = quadrature_rule(5).unwrap();
        let t = 0.9;
        let direct = assemble_load(sim.dofmap(), &rule, |x, y, t| crate::manufactured::eval_f(x, y, t, 0.3), t);
        for (a, b) in sim.load(t).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
