//! Decay, convergence, Lagrange and time-step studies.
//!
//! Independent runs are spread over worker threads; results are collected
//! by configuration index, so the output does not depend on the worker
//! count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::harness::metrics::{asymptotic_max, fit_decay, fit_slope, DecayFit};
use crate::harness::series::{parse_row, ErrorSeries};
use crate::observe::InterpolantKind;
use crate::timeloop::{InitialCondition, Simulation, SimulationConfig};

/// β values of the default decay study.
pub const DEFAULT_BETAS: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 100.0];

/// Largest relative change of a reported error under `dt → dt/2`.
pub const GUARD_TOLERANCE: f64 = 0.05;

pub const CONVERGENCE_HEADER: &str = "h,n,max_window_error";

/// Step selection for the runs of a spatial study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    /// `min(0.1 h, 0.01 T)`.
    Default,
    Fixed(f64),
    /// `c · h`.
    MeshScaled(f64),
}

impl DtPolicy {
    pub fn dt(self, n: usize) -> Option<f64> {
        match self {
            Self::Default => None,
            Self::Fixed(dt) => Some(dt),
            Self::MeshScaled(c) => Some(c / n as f64),
        }
    }
}

/// Maps `f` over `items` on up to `available_parallelism` threads,
/// returning results in input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item is processed"))
        .collect()
}

/// One simulation, recorded as an error series.
pub fn run_series(config: &SimulationConfig) -> Result<ErrorSeries> {
    let outcome = Simulation::new(config.clone())?.run()?;
    ErrorSeries::from_diagnostics(config.clone(), &outcome.diagnostics)
}

/// Decay-study defaults: `ν = 10⁻⁶`, `μ = 0.05`, `N = 24`, `k = 3`, `T = 8`,
/// zero initial data.
pub fn decay_base() -> SimulationConfig {
    SimulationConfig {
        nu: 1e-6,
        mu: 0.05,
        n: 24,
        k: 3,
        t_final: 8.0,
        initial: InitialCondition::Zero,
        ..Default::default()
    }
}

/// Convergence-study defaults: `β = 1`, `k = 3`, `T = 4`, started from the
/// interpolated exact solution so that the window sees only the long-time
/// error.
pub fn convergence_base(nu: f64, mu: f64) -> SimulationConfig {
    SimulationConfig {
        nu,
        mu,
        beta: 1.0,
        k: 3,
        t_final: 4.0,
        initial: InitialCondition::ExactAtZero,
        ..Default::default()
    }
}

/// Lagrange-study defaults: `ν = 10⁻⁶`, `μ = 0.05`, `β = 1`, `T = 4`, coarse
/// Lagrange interpolation, zero initial data. The initial error must be
/// present: whether nudging removes it is what the study tests.
pub fn lagrange_base() -> SimulationConfig {
    SimulationConfig {
        interpolant: InterpolantKind::CoarseLagrangeP1,
        initial: InitialCondition::Zero,
        ..convergence_base(1e-6, 0.05)
    }
}

#[derive(Debug, Clone)]
pub struct DecayEntry {
    pub beta: f64,
    /// The series, or the error message of a failed run.
    pub outcome: std::result::Result<ErrorSeries, String>,
}

#[derive(Debug, Clone)]
pub struct DecayStudy {
    pub entries: Vec<DecayEntry>,
}

/// One run per β from `base`; a failed run is recorded and the rest continue.
pub fn run_decay_study(base: &SimulationConfig, betas: &[f64]) -> DecayStudy {
    let configs: Vec<SimulationConfig> = betas
        .iter()
        .map(|&beta| SimulationConfig { beta, ..base.clone() })
        .collect();
    let results = parallel_map(&configs, |c| run_series(c).map_err(|e| e.to_string()));
    DecayStudy {
        entries: betas
            .iter()
            .zip(results)
            .map(|(&beta, outcome)| DecayEntry { beta, outcome })
            .collect(),
    }
}

/// File stem of the decay series for `beta`.
pub fn decay_stem(beta: f64) -> String {
    format!("decay_beta_{beta}")
}

/// A pass/fail check with the measured values that decided it.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

impl DecayStudy {
    pub fn series(&self, beta: f64) -> Option<&ErrorSeries> {
        self.entries
            .iter()
            .find(|e| e.beta == beta)
            .and_then(|e| e.outcome.as_ref().ok())
    }

    pub fn fit(&self, beta: f64, window: f64) -> Option<Result<DecayFit>> {
        self.series(beta).map(|s| fit_decay(s, window))
    }

    /// Writes one series per successful β; failures go to `decay_failures.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        let mut failures = String::new();
        for e in &self.entries {
            match &e.outcome {
                Ok(s) => paths.push(s.write(dir, &decay_stem(e.beta))?),
                Err(msg) => writeln!(failures, "beta={}: {msg}", e.beta).expect("String write"),
            }
        }
        if !failures.is_empty() {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("decay_failures.txt"), failures)?;
        }
        Ok(paths)
    }

    /// No decay without nudging (`err(T) ≥ 0.5 err(0⁺)` at β = 0); decay to a
    /// plateau below `0.1 err(0⁺)` with a positive pre-plateau rate for
    /// β ≥ 1; plateaus of β = 10 and β = 100 within 50% of each other.
    pub fn gates(&self, window: f64) -> Vec<Gate> {
        let mut gates = Vec::new();
        for e in &self.entries {
            let name = format!("decay beta={}", e.beta);
            let s = match &e.outcome {
                Ok(s) => s,
                Err(msg) => {
                    gates.push(Gate::new(name, false, format!("run failed: {msg}")));
                    continue;
                }
            };
            let fit = match fit_decay(s, window) {
                Ok(f) => f,
                Err(err) => {
                    gates.push(Gate::new(name, false, err.to_string()));
                    continue;
                }
            };
            if e.beta == 0.0 {
                let ratio = fit.final_error / fit.initial_error;
                gates.push(Gate::new(
                    name,
                    ratio >= 0.5,
                    format!("err(T)/err(0+) = {ratio:.4} (need >= 0.5)"),
                ));
            } else if e.beta >= 1.0 {
                let ratio = fit.plateau_level / fit.initial_error;
                let rate = fit.rate.unwrap_or(f64::NAN);
                gates.push(Gate::new(
                    name,
                    ratio <= 0.1 && rate > 0.0,
                    format!("plateau/err(0+) = {ratio:.4e} (need <= 0.1), pre-plateau rate = {rate:.4} (need > 0)"),
                ));
            }
        }
        let plateau = |beta| self.fit(beta, window).and_then(|f| f.ok()).map(|f| f.plateau_level);
        if let (Some(a), Some(b)) = (plateau(10.0), plateau(100.0)) {
            let spread = a.max(b) / a.min(b) - 1.0;
            gates.push(Gate::new(
                "decay beta=10 vs beta=100",
                spread <= 0.5,
                format!("plateaus {a:.4e}, {b:.4e}: relative spread {spread:.3} (need <= 0.5)"),
            ));
        }
        gates
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub h: f64,
    pub n: usize,
    pub max_window_error: f64,
}

/// Window-maximum errors against `h` and their least-squares log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    pub slope: f64,
    /// `[T_w, T]`
    pub window: [f64; 2],
}

impl ConvergenceReport {
    pub fn new(points: Vec<ConvergencePoint>, window: [f64; 2]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "a convergence report needs at least 3 meshes, got {}",
                points.len()
            )));
        }
        if points.windows(2).any(|w| !(w[1].h < w[0].h)) {
            return Err(Error::InvalidInput("mesh widths must strictly decrease".into()));
        }
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.max_window_error)).collect();
        let slope = fit_slope(&pairs)?;
        Ok(Self { points, slope, window })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.max_window_error).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].max_window_error < w[0].max_window_error)
    }

    /// `h,n,max_window_error` rows and a `# slope=` footer.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CONVERGENCE_HEADER}\n");
        for p in &self.points {
            writeln!(out, "{:.16e},{},{:.16e}", p.h, p.n, p.max_window_error).expect("String write");
        }
        writeln!(out, "# slope={:.16e}", self.slope).expect("String write");
        out
    }

    /// Points and footer slope of a convergence CSV.
    pub fn parse_csv(text: &str) -> Result<(Vec<ConvergencePoint>, f64)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CONVERGENCE_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header '{CONVERGENCE_HEADER}', found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        let mut points = Vec::new();
        let mut slope = None;
        for line in lines {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("slope=") {
                    slope = Some(v.trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!("invalid slope footer '{line}'"))
                    })?);
                }
                continue;
            }
            let v = parse_row(line, 3).map_err(Error::Parse)?;
            if v[1] < 0.0 || v[1].fract() != 0.0 {
                return Err(Error::Parse(format!("invalid mesh size in '{line}'")));
            }
            points.push(ConvergencePoint {
                h: v[0],
                n: v[1] as usize,
                max_window_error: v[2],
            });
        }
        let slope = slope.ok_or_else(|| Error::Parse("missing '# slope=' footer".into()))?;
        Ok((points, slope))
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}

/// A spatial study: the report plus the underlying runs.
#[derive(Debug, Clone)]
pub struct SpatialStudy {
    pub report: ConvergenceReport,
    pub runs: Vec<ErrorSeries>,
}

/// Runs `configs` (ordered by increasing N) and reports their window maxima.
pub fn run_spatial_study(configs: &[SimulationConfig], window: f64) -> Result<SpatialStudy> {
    spatial_study_with(configs, None, window)
}

/// As [`run_spatial_study`], taking the run of the finest mesh as given when
/// `finest` holds a series of that configuration (steps compared by count,
/// since `dt/2` and `(c/2) h` may differ in the last bit).
fn spatial_study_with(configs: &[SimulationConfig], finest: Option<ErrorSeries>, window: f64) -> Result<SpatialStudy> {
    let last = configs
        .last()
        .ok_or_else(|| Error::InvalidInput("no configurations".into()))?;
    for c in configs {
        c.validate()?;
    }
    let same = |a: &SimulationConfig| {
        a.num_steps() == last.num_steps() && SimulationConfig { dt: None, ..a.clone() } == SimulationConfig { dt: None, ..last.clone() }
    };
    let finest = finest.filter(|s| same(&s.config));
    let pending = if finest.is_some() { &configs[..configs.len() - 1] } else { configs };
    let mut runs = parallel_map(pending, run_series)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    runs.extend(finest);
    let points = runs
        .iter()
        .map(|s| {
            Ok(ConvergencePoint {
                h: s.config.h(),
                n: s.config.n,
                max_window_error: asymptotic_max(s, window)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ConvergenceReport::new(points, [(1.0 - window) * last.t_final, last.t_final])?;
    Ok(SpatialStudy { report, runs })
}

/// `base` at each N, with the step chosen by `dt`.
pub fn convergence_configs(base: &SimulationConfig, ns: &[usize], dt: DtPolicy) -> Result<Vec<SimulationConfig>> {
    ns.iter()
        .map(|&n| {
            if n % base.k != 0 {
                return Err(Error::InvalidConfig(format!("k = {} must divide N = {n}", base.k)));
            }
            Ok(SimulationConfig {
                n,
                dt: dt.dt(n),
                ..base.clone()
            })
        })
        .collect()
}

pub fn run_convergence(base: &SimulationConfig, ns: &[usize], dt: DtPolicy, window: f64) -> Result<ConvergenceReport> {
    Ok(run_spatial_study(&convergence_configs(base, ns, dt)?, window)?.report)
}

/// Coarse-width law of a Lagrange-interpolant study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagrangeMode {
    /// `H = k h`.
    RatioFixed { k: usize },
    /// `H` fixed; `H N` must be an integer for every N.
    WidthFixed { width: f64 },
}

impl LagrangeMode {
    pub fn ratio(self, n: usize) -> Result<usize> {
        match self {
            Self::RatioFixed { k } => Ok(k),
            Self::WidthFixed { width } => {
                let k = (width * n as f64).round();
                if k < 1.0 || (k - width * n as f64).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "H = {width} is not a multiple of h = 1/{n}"
                    )));
                }
                Ok(k as usize)
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Self::RatioFixed { k } => format!("ratio{k}"),
            Self::WidthFixed { width } => format!("width{width}"),
        }
    }
}

pub fn lagrange_configs(
    base: &SimulationConfig,
    ns: &[usize],
    mode: LagrangeMode,
    dt: DtPolicy,
) -> Result<Vec<SimulationConfig>> {
    ns.iter()
        .map(|&n| {
            Ok(SimulationConfig {
                n,
                k: mode.ratio(n)?,
                interpolant: InterpolantKind::CoarseLagrangeP1,
                dt: dt.dt(n),
                ..base.clone()
            })
        })
        .collect()
}

pub fn run_lagrange_study(
    base: &SimulationConfig,
    ns: &[usize],
    mode: LagrangeMode,
    dt: DtPolicy,
    window: f64,
) -> Result<ConvergenceReport> {
    Ok(run_spatial_study(&lagrange_configs(base, ns, mode, dt)?, window)?.report)
}

/// Outcome of re-running a configuration with half the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardReport {
    pub n: usize,
    pub dt: f64,
    pub error: f64,
    pub error_half: f64,
    pub relative_change: f64,
    pub passed: bool,
}

/// Compares the window maximum of `config` with that of the same run at
/// `dt/2`. `known_error` skips the first run when it is already available.
pub fn dominance_guard(config: &SimulationConfig, window: f64, known_error: Option<f64>) -> Result<GuardReport> {
    Ok(guard_with_run(config, window, known_error)?.0)
}

/// The guard together with the `dt/2` run it made.
fn guard_with_run(
    config: &SimulationConfig,
    window: f64,
    known_error: Option<f64>,
) -> Result<(GuardReport, ErrorSeries)> {
    let dt = config.time_step();
    let error = match known_error {
        Some(e) => e,
        None => asymptotic_max(&run_series(config)?, window)?,
    };
    let half = SimulationConfig {
        dt: Some(0.5 * dt),
        ..config.clone()
    };
    let half_run = run_series(&half)?;
    let error_half = asymptotic_max(&half_run, window)?;
    let relative_change = (error - error_half).abs() / error_half;
    let report = GuardReport {
        n: config.n,
        dt,
        error,
        error_half,
        relative_change,
        passed: relative_change < GUARD_TOLERANCE,
    };
    Ok((report, half_run))
}

/// Guard of a spatial study, applied at its finest mesh.
pub fn guard_finest(study: &SpatialStudy, window: f64) -> Result<GuardReport> {
    let (run, point) = study
        .runs
        .last()
        .zip(study.report.points.last())
        .ok_or_else(|| Error::InvalidInput("empty study".into()))?;
    dominance_guard(&run.config, window, Some(point.max_window_error))
}

/// A spatial study whose step passed the dominance guard.
#[derive(Debug, Clone)]
pub struct GuardedStudy {
    pub study: SpatialStudy,
    pub guard: GuardReport,
    /// `Δt / h` of the reported study.
    pub dt_factor: f64,
    /// Guards of the rejected, coarser steps.
    pub rejected: Vec<GuardReport>,
}

/// Runs the study with `Δt = c h`, halving `c` until the guard at the finest
/// mesh passes or `max_halvings` is spent; the last study is returned either
/// way and `guard.passed` tells which.
pub fn run_guarded_study(
    configs: impl Fn(DtPolicy) -> Result<Vec<SimulationConfig>>,
    dt_factor: f64,
    max_halvings: usize,
    window: f64,
) -> Result<GuardedStudy> {
    let mut c = dt_factor;
    let mut rejected = Vec::new();
    let mut carried = None;
    loop {
        let study = spatial_study_with(&configs(DtPolicy::MeshScaled(c))?, carried.take(), window)?;
        let (run, point) = study
            .runs
            .last()
            .zip(study.report.points.last())
            .ok_or_else(|| Error::InvalidInput("empty study".into()))?;
        let (guard, half_run) = guard_with_run(&run.config, window, Some(point.max_window_error))?;
        if guard.passed || rejected.len() == max_halvings {
            return Ok(GuardedStudy {
                study,
                guard,
                dt_factor: c,
                rejected,
            });
        }
        rejected.push(guard);
        carried = Some(half_run);
        c *= 0.5;
    }
}

/// Self-convergence in time at fixed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStudy {
    /// `dt₀, dt₀/2, dt₀/4`
    pub dts: [f64; 3],
    /// `‖u^{dt₀}(T) − u^{dt₀/2}(T)‖₀`, `‖u^{dt₀/2}(T) − u^{dt₀/4}(T)‖₀`
    pub differences: [f64; 2],
    /// `log₂` of the ratio of the two differences.
    pub order: f64,
    /// `‖u^{dt}(T) − u(T)‖₀` for each step.
    pub errors: [f64; 3],
}

/// Runs `config` at `dt₀ = T / steps` and two halvings. Differences of the
/// final velocities cancel the spatial error, leaving the temporal one.
pub fn richardson_dt_study(config: &SimulationConfig, steps: usize) -> Result<TemporalStudy> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let dt0 = config.t_final / steps as f64;
    let dts = [dt0, dt0 / 2.0, dt0 / 4.0];
    let configs: Vec<SimulationConfig> = dts
        .iter()
        .map(|&dt| SimulationConfig {
            dt: Some(dt),
            ..config.clone()
        })
        .collect();
    let finals = parallel_map(&configs, |c| -> Result<(Vec<f64>, f64, crate::SparseMatrix)> {
        let mut sim = Simulation::new(c.clone())?;
        let out = sim.run()?;
        let u = out.final_state.u_prev;
        let err = sim.l2_error(&u, out.final_state.t);
        Ok((u, err, sim.operators().mass.clone()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mass = &finals[0].2;
    let diff = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        mass.bilinear(&d, &d).max(0.0).sqrt()
    };
    let differences = [diff(&finals[0].0, &finals[1].0), diff(&finals[1].0, &finals[2].0)];
    Ok(TemporalStudy {
        dts,
        differences,
        order: (differences[0] / differences[1]).log2(),
        errors: [finals[0].1, finals[1].1, finals[2].1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&items, |i| i * i), items.iter().map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn dt_policies() {
        assert_eq!(DtPolicy::Default.dt(10), None);
        assert_eq!(DtPolicy::Fixed(0.01).dt(10), Some(0.01));
        assert_eq!(DtPolicy::MeshScaled(0.4).dt(8), Some(0.05));
    }

    #[test]
    fn lagrange_modes() {
        let fixed = LagrangeMode::WidthFixed { width: 0.25 };
        assert_eq!(fixed.ratio(12).unwrap(), 3);
        assert_eq!(fixed.ratio(24).unwrap(), 6);
        assert_eq!(fixed.ratio(48).unwrap(), 12);
        assert!(fixed.ratio(10).is_err());
        assert_eq!(LagrangeMode::RatioFixed { k: 3 }.ratio(48).unwrap(), 3);
        let base = lagrange_base();
        assert_eq!(base.initial, InitialCondition::Zero);
        let c = lagrange_configs(&base, &[12, 24], fixed, DtPolicy::MeshScaled(0.4)).unwrap();
        assert_eq!((c[0].k, c[1].k), (3, 6));
        assert!(c.iter().all(|c| c.interpolant == InterpolantKind::CoarseLagrangeP1 && c.nu == 1e-6));
    }

    #[test]
    fn convergence_csv() {
        let points: Vec<ConvergencePoint> = [8usize, 16, 32]
            .iter()
            .map(|&n| ConvergencePoint {
                h: 1.0 / n as f64,
                n,
                max_window_error: (1.0 / n as f64).powi(3),
            })
            .collect();
        let r = ConvergenceReport::new(points.clone(), [3.0, 4.0]).unwrap();
        assert!((r.slope - 3.0).abs() < 1e-12);
        assert!(r.strictly_decreasing());
        let csv = r.to_csv();
        assert!(csv.starts_with("h,n,max_window_error\n"));
        assert!(csv.trim_end().lines().last().unwrap().starts_with("# slope="));
        let (back, slope) = ConvergenceReport::parse_csv(&csv).unwrap();
        assert_eq!(back, points);
        assert_eq!(slope, r.slope);
        assert!(ConvergenceReport::new(points[..2].to_vec(), [3.0, 4.0]).is_err());
        let mut unordered = points.clone();
        unordered.swap(0, 1);
        assert!(ConvergenceReport::new(unordered, [3.0, 4.0]).is_err());
        assert!(ConvergenceReport::parse_csv("h,n,max_window_error\n0.1,10,0.5\n").is_err());
    }

    #[test]
    fn convergence_configs_check_divisibility() {
        let base = convergence_base(1.0, 0.0);
        assert!(convergence_configs(&base, &[8, 16], DtPolicy::Default).is_err());
        let c = convergence_configs(&base, &[9, 18], DtPolicy::MeshScaled(0.4)).unwrap();
        assert_eq!(c[1].n, 18);
        assert!((c[1].dt.unwrap() - 0.4 / 18.0).abs() < 1e-16);
    }

    #[test]
    fn guarded_study_halves_until_the_guard_passes() {
        let base = SimulationConfig {
            t_final: 2.0,
            ..convergence_base(1.0, 0.0)
        };
        let make = |dt| convergence_configs(&base, &[3, 6, 9], dt);
        let g = run_guarded_study(make, 4.0, 3, 0.25).unwrap();
        assert_eq!(g.dt_factor, 4.0 * 0.5f64.powi(g.rejected.len() as i32));
        assert!(g.rejected.iter().all(|r| !r.passed));
        assert_eq!(g.guard.n, 9);
        assert!(g.guard.dt <= g.dt_factor / 9.0 + 1e-15);
        if g.rejected.len() < 3 {
            assert!(g.guard.passed);
        }
        assert!(!g.rejected.is_empty(), "a step of 4h does not resolve the time dependence");
        // the finest run of each retry is the dt/2 run of the rejected guard
        let finest = g.study.report.points.last().unwrap().max_window_error;
        assert_eq!(finest, g.rejected.last().unwrap().error_half);
    }

    #[test]
    fn decay_study_records_failures() {
        let base = SimulationConfig {
            n: 6,
            k: 3,
            t_final: 0.5,
            dt: Some(0.05),
            ..decay_base()
        };
        let study = run_decay_study(&base, &[0.0, -1.0, 1.0]);
        assert_eq!(study.entries.len(), 3);
        assert!(study.entries[0].outcome.is_ok());
        assert!(study.entries[1].outcome.is_err());
        assert!(study.entries[2].outcome.is_ok());
        let gates = study.gates(0.25);
        assert!(gates.iter().any(|g| g.name == "decay beta=-1" && !g.passed));
    }
}
