//! `cda`: runs nudged Navier–Stokes experiments and writes their CSV output.
//!
//! Settings are layered: built-in defaults of the subcommand, then a flat
//! `key=value` file given with `--config`, then command-line flags.
//! Exit status: 0 on success, 1 on a runtime or input error, 2 when a
//! requested gate fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cda_fem::harness::config::{apply_simulation, parse_list, KeyValues, SIMULATION_KEYS};
use cda_fem::harness::studies::{convergence_configs, decay_stem, guard_finest, lagrange_configs, GUARD_TOLERANCE};
use cda_fem::harness::{
    asymptotic_max, convergence_base, decay_base, fit_decay, lagrange_base, predict_gamma, run_decay_study,
    run_property_suite, run_series, run_spatial_study, DtPolicy, Gate, LagrangeMode, SpatialStudy, DEFAULT_BETAS,
    DEFAULT_WINDOW,
};
use cda_fem::timeloop::SimulationConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cda", version, about = "Nudged Navier-Stokes experiments (P2/P1, grad-div, IMEX-BDF2)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Property suite: skew symmetry, Gram consistency, projections, quadrature, constraints.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// One simulation; writes the error series.
    Run {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Error decay for several nudging parameters from zero initial data.
    Decay {
        /// Comma-separated β values.
        #[arg(long)]
        betas: Option<String>,
        /// Fail with status 2 unless the decay gates pass.
        #[arg(long)]
        gate: bool,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Spatial convergence with H = k h.
    Convergence {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Spatial convergence with the Lagrange interpolant.
    Lagrange {
        /// `ratio` keeps H = k h, `fixed` keeps H constant.
        #[arg(long)]
        mode: Option<String>,
        /// Coarse width H for `--mode fixed`.
        #[arg(long)]
        coarse_width: Option<f64>,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predicted decay rate γ = min(ν/(2 c_I² H²), β/2), optionally measured.
    Gamma {
        /// Interpolation constant c_I.
        #[arg(long)]
        c_i: Option<f64>,
        /// Also run a decay simulation and fit its rate.
        #[arg(long)]
        measure: bool,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Grad-div parameter μ.
    #[arg(long)]
    mu: Option<f64>,
    /// Fine mesh cells per side.
    #[arg(long)]
    n: Option<usize>,
    /// Coarse cell width in fine cells, H = k h.
    #[arg(long)]
    ratio_k: Option<usize>,
    /// Time step, or `auto` for min(0.1 h, 0.01 T).
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    t_final: Option<f64>,
    /// `pc` or `lagrange`.
    #[arg(long)]
    interpolant: Option<String>,
    /// `zero` or `exact`.
    #[arg(long)]
    initial: Option<String>,
}

#[derive(Args, Debug, Default)]
struct StudyArgs {
    /// Comma-separated mesh sizes N.
    #[arg(long)]
    ns: Option<String>,
    /// Δt = factor · h for every mesh; ignored when --dt is given.
    #[arg(long)]
    dt_factor: Option<f64>,
    /// Fraction of [0, T] at the end over which the error maximum is taken.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    slope_min: Option<f64>,
    #[arg(long)]
    slope_max: Option<f64>,
    /// Re-run the finest mesh at Δt/2 and require a change below 5%.
    #[arg(long)]
    guard: bool,
}

const STUDY_KEYS: [&str; 14] = [
    "measure",
    "seed",
    "out",
    "betas",
    "gate",
    "ns",
    "dt_factor",
    "window",
    "slope_min",
    "slope_max",
    "guard",
    "mode",
    "coarse_width",
    "c_i",
];

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Settings after layering the config file and flags.
struct Settings {
    kv: KeyValues,
}

impl Settings {
    fn load(config: Option<&Path>, flags: Vec<(&str, String)>) -> AnyResult<Self> {
        let mut text = match config {
            Some(path) => {
                let file = KeyValues::read(path)?;
                let known: Vec<&str> = SIMULATION_KEYS.iter().chain(STUDY_KEYS.iter()).copied().collect();
                file.check_known(&known)?;
                let overridden: Vec<&str> = flags.iter().map(|(k, _)| *k).collect();
                file.keys()
                    .filter(|k| !overridden.contains(k))
                    .map(|k| format!("{k}={}\n", file.get(k).unwrap_or_default()))
                    .collect::<String>()
            }
            None => String::new(),
        };
        for (k, v) in flags {
            text.push_str(&format!("{k}={v}\n"));
        }
        Ok(Self {
            kv: KeyValues::parse(&text)?,
        })
    }

    fn simulation(&self, mut base: SimulationConfig) -> AnyResult<SimulationConfig> {
        apply_simulation(&mut base, &self.kv)?;
        base.validate()?;
        Ok(base)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> AnyResult<Option<T>> {
        Ok(self.kv.get_parsed(key)?)
    }

    fn flag(&self, key: &str) -> AnyResult<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }

    fn out(&self) -> PathBuf {
        PathBuf::from(self.kv.get("out").unwrap_or("out"))
    }

    fn window(&self) -> AnyResult<f64> {
        let w = self.get("window")?.unwrap_or(DEFAULT_WINDOW);
        if !(w > 0.0 && w <= 1.0) {
            return Err(format!("window fraction {w} must lie in (0, 1]").into());
        }
        Ok(w)
    }
}

fn push<T: ToString>(flags: &mut Vec<(&'static str, String)>, key: &'static str, value: Option<T>) {
    if let Some(v) = value {
        flags.push((key, v.to_string()));
    }
}

fn common_flags(common: &CommonArgs) -> Vec<(&'static str, String)> {
    let mut f = Vec::new();
    push(&mut f, "out", common.out.as_ref().map(|p| p.display().to_string()));
    f
}

fn sim_flags(sim: &SimArgs, flags: &mut Vec<(&'static str, String)>) {
    push(flags, "nu", sim.nu);
    push(flags, "beta", sim.beta);
    push(flags, "mu", sim.mu);
    push(flags, "n", sim.n);
    push(flags, "ratio_k", sim.ratio_k);
    push(flags, "dt", sim.dt.clone());
    push(flags, "t_final", sim.t_final);
    push(flags, "interpolant", sim.interpolant.clone());
    push(flags, "initial", sim.initial.clone());
}

fn study_flags(study: &StudyArgs, flags: &mut Vec<(&'static str, String)>) {
    push(flags, "ns", study.ns.clone());
    push(flags, "dt_factor", study.dt_factor);
    push(flags, "window", study.window);
    push(flags, "slope_min", study.slope_min);
    push(flags, "slope_max", study.slope_max);
    if study.guard {
        flags.push(("guard", "true".into()));
    }
}

/// Outcome of a subcommand: whether every requested gate passed.
type Outcome = AnyResult<bool>;

fn report_gates(gates: &[Gate]) -> bool {
    for g in gates {
        println!("{}", g.line());
    }
    gates.iter().all(|g| g.passed)
}

fn verify(s: &Settings) -> Outcome {
    let seed = s.get("seed")?.unwrap_or(17);
    let checks = run_property_suite(seed)?;
    let gates: Vec<Gate> = checks.iter().map(|c| c.gate()).collect();
    Ok(report_gates(&gates))
}

fn run(s: &Settings) -> Outcome {
    let config = s.simulation(SimulationConfig::default())?;
    let series = run_series(&config)?;
    let path = series.write(&s.out(), "run")?;
    let last = series.samples.last().ok_or("empty series")?;
    println!("wrote {}", path.display());
    println!(
        "steps={} dt={:.4e} final_error={:.6e} window_max={:.6e} max_obs_ratio={:.3e} max_div_residual={:.3e}",
        series.samples.len(),
        config.time_step(),
        last.l2_error,
        asymptotic_max(&series, s.window()?)?,
        series.max_obs_ratio(),
        series.max_div_residual()
    );
    Ok(true)
}

fn decay(s: &Settings) -> Outcome {
    let base = s.simulation(decay_base())?;
    let betas = match s.kv.get("betas") {
        Some(text) => parse_list::<f64>(text)?,
        None => DEFAULT_BETAS.to_vec(),
    };
    if betas.is_empty() {
        return Err("no beta values given".into());
    }
    let window = s.window()?;
    let study = run_decay_study(&base, &betas);
    for path in study.write(&s.out())? {
        println!("wrote {}", path.display());
    }
    for e in &study.entries {
        match &e.outcome {
            Ok(series) => match fit_decay(series, window) {
                Ok(fit) => println!(
                    "beta={}: err(0+)={:.4e} err(T)={:.4e} plateau={:.4e} onset={} rate={}",
                    e.beta,
                    fit.initial_error,
                    fit.final_error,
                    fit.plateau_level,
                    fit.plateau_onset.map_or("n/a".into(), |t| format!("{t:.3}")),
                    fit.rate.map_or("n/a".into(), |r| format!("{r:.4}"))
                ),
                Err(err) => println!("beta={}: fit failed: {err}", e.beta),
            },
            Err(msg) => println!("beta={}: run failed: {msg}", e.beta),
        }
    }
    let failed = study.entries.iter().any(|e| e.outcome.is_err());
    if s.flag("gate")? {
        return Ok(report_gates(&study.gates(window)) && !failed);
    }
    if failed {
        return Err("one or more decay runs failed".into());
    }
    Ok(true)
}

fn mesh_list(s: &Settings) -> AnyResult<Vec<usize>> {
    Ok(match s.kv.get("ns") {
        Some(text) => parse_list(text)?,
        None => vec![12, 24, 48],
    })
}

fn dt_policy(s: &Settings, base: &SimulationConfig) -> AnyResult<DtPolicy> {
    Ok(match (base.dt, s.get::<f64>("dt_factor")?) {
        (Some(dt), _) => DtPolicy::Fixed(dt),
        (None, Some(c)) => DtPolicy::MeshScaled(c),
        (None, None) if s.kv.get("dt") == Some("auto") => DtPolicy::Default,
        (None, None) => DtPolicy::MeshScaled(0.4),
    })
}

fn finish_study(s: &Settings, study: &SpatialStudy, stem: &str, window: f64) -> Outcome {
    let path = study.report.write(&s.out(), stem)?;
    println!("wrote {}", path.display());
    for p in &study.report.points {
        println!("N={} h={:.5e} max_window_error={:.6e}", p.n, p.h, p.max_window_error);
    }
    println!("slope={:.4}", study.report.slope);
    let mut gates = Vec::new();
    let (lo, hi) = (s.get::<f64>("slope_min")?, s.get::<f64>("slope_max")?);
    if lo.is_some() || hi.is_some() {
        let lo = lo.unwrap_or(f64::NEG_INFINITY);
        let hi = hi.unwrap_or(f64::INFINITY);
        gates.push(Gate::new(
            "slope",
            (lo..=hi).contains(&study.report.slope),
            format!("{:.4} (need [{lo}, {hi}])", study.report.slope),
        ));
    }
    if s.flag("guard")? {
        let g = guard_finest(study, window)?;
        gates.push(Gate::new(
            "dt/2 guard",
            g.passed,
            format!(
                "N={} dt={:.4e}: {:.6e} -> {:.6e}, change {:.3}% (need < {}%)",
                g.n,
                g.dt,
                g.error,
                g.error_half,
                100.0 * g.relative_change,
                100.0 * GUARD_TOLERANCE
            ),
        ));
    }
    Ok(report_gates(&gates))
}

fn convergence(s: &Settings) -> Outcome {
    let base = s.simulation(convergence_base(1.0, 0.0))?;
    let window = s.window()?;
    let configs = convergence_configs(&base, &mesh_list(s)?, dt_policy(s, &base)?)?;
    let study = run_spatial_study(&configs, window)?;
    finish_study(s, &study, &format!("convergence_nu{}_mu{}", base.nu, base.mu), window)
}

fn lagrange(s: &Settings) -> Outcome {
    let base = s.simulation(lagrange_base())?;
    let mode = match s.kv.get("mode").unwrap_or("ratio") {
        "ratio" => LagrangeMode::RatioFixed { k: base.k },
        "fixed" => LagrangeMode::WidthFixed {
            width: s.get("coarse_width")?.unwrap_or(0.25),
        },
        other => return Err(format!("unknown mode '{other}' (ratio|fixed)").into()),
    };
    let window = s.window()?;
    let configs = lagrange_configs(&base, &mesh_list(s)?, mode, dt_policy(s, &base)?)?;
    let study = run_spatial_study(&configs, window)?;
    finish_study(s, &study, &format!("lagrange_{}", mode.name()), window)
}

fn gamma(s: &Settings) -> Outcome {
    let config = s.simulation(decay_base())?;
    let c_i = s.get("c_i")?.unwrap_or(1.0);
    let p = predict_gamma(config.nu, config.coarse_width(), config.beta, c_i)?;
    println!(
        "nu={} H={} beta={} c_I={}: gamma={:.6e} ({}), viscous branch {:.6e}, admissible={}",
        p.nu,
        p.h_coarse,
        p.beta,
        p.c_i,
        p.gamma,
        if p.nudging_limited() { "nudging-limited" } else { "viscous-limited" },
        p.viscous_branch(),
        p.admissible
    );
    if s.flag("measure")? {
        let series = run_series(&config)?;
        let path = series.write(&s.out(), &decay_stem(config.beta))?;
        println!("wrote {}", path.display());
        let fit = fit_decay(&series, s.window()?)?;
        match fit.rate {
            Some(rate) => println!("fitted rate={rate:.6e} ratio to gamma/2={:.3}", rate / (0.5 * p.gamma)),
            None => println!("fitted rate unavailable: too few samples before the plateau"),
        }
    }
    Ok(true)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Verify { seed, common } => {
            let mut f = common_flags(&common);
            push(&mut f, "seed", seed);
            verify(&Settings::load(common.config.as_deref(), f)?)
        }
        Command::Run { sim, common } => {
            let mut f = common_flags(&common);
            sim_flags(&sim, &mut f);
            run(&Settings::load(common.config.as_deref(), f)?)
        }
        Command::Decay { betas, gate, sim, common } => {
            let mut f = common_flags(&common);
            sim_flags(&sim, &mut f);
            push(&mut f, "betas", betas);
            if gate {
                f.push(("gate", "true".into()));
            }
            decay(&Settings::load(common.config.as_deref(), f)?)
        }
        Command::Convergence { study, sim, common } => {
            let mut f = common_flags(&common);
            sim_flags(&sim, &mut f);
            study_flags(&study, &mut f);
            convergence(&Settings::load(common.config.as_deref(), f)?)
        }
        Command::Lagrange {
            mode,
            coarse_width,
            study,
            sim,
            common,
        } => {
            let mut f = common_flags(&common);
            sim_flags(&sim, &mut f);
            study_flags(&study, &mut f);
            push(&mut f, "mode", mode);
            push(&mut f, "coarse_width", coarse_width);
            lagrange(&Settings::load(common.config.as_deref(), f)?)
        }
        Command::Gamma {
            c_i,
            measure,
            sim,
            common,
        } => {
            let mut f = common_flags(&common);
            sim_flags(&sim, &mut f);
            push(&mut f, "c_i", c_i);
            if measure {
                f.push(("measure", "true".into()));
            }
            gamma(&Settings::load(common.config.as_deref(), f)?)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
