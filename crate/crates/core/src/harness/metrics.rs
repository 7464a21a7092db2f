//! Error norms, log-log slope fits, window maxima and decay-rate estimates.

use crate::error::{Error, Result};
use crate::fem::{eval_p2_field, quadrature_rule, AffineMap, DofMap};
use crate::harness::series::ErrorSeries;

/// Fraction of `[0, T]` over which the asymptotic maximum is taken.
pub const DEFAULT_WINDOW: f64 = 0.25;

/// `‖u_h − u(·, t)‖₀` by elementwise quadrature of degree `degree ≥ 8`.
pub fn l2_error(
    velocity: &[f64],
    exact: impl Fn(f64, f64, f64) -> [f64; 2],
    t: f64,
    dofmap: &DofMap,
    degree: usize,
) -> Result<f64> {
    if degree < 8 {
        return Err(Error::InvalidInput(format!(
            "error quadrature needs degree >= 8, got {degree}"
        )));
    }
    if velocity.len() != dofmap.num_velocity_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dofmap.num_velocity_dofs(),
            found: velocity.len(),
        });
    }
    let rule = quadrature_rule(degree)?;
    let mut sum = 0.0;
    for e in 0..dofmap.num_elements() {
        let map = AffineMap::new(dofmap.element_coords(e));
        for (p, w) in rule.points().iter().zip(rule.weights()) {
            let x = map.to_physical(*p);
            let v = eval_p2_field(dofmap, velocity, e, *p);
            let u = exact(x[0], x[1], t);
            sum += w * map.det() * ((v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2));
        }
    }
    Ok(sum.sqrt())
}

/// Least-squares slope and intercept of `y` against `x`.
fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "slope fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(h, err) in points {
        if !(h > 0.0 && err > 0.0 && h.is_finite() && err.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "slope fit needs positive finite values, got (h = {h}, err = {err})"
            )));
        }
        logs.push((h.ln(), err.ln()));
    }
    Ok(linear_fit(&logs)?.0)
}

/// Rate `r` of the least-squares fit `err ≈ C e^{−r t}`.
pub fn fit_exponential_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "rate fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(t, err) in points {
        if !(err > 0.0 && err.is_finite() && t.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rate fit needs positive finite errors, got {err} at t = {t}"
            )));
        }
        logs.push((t, err.ln()));
    }
    Ok(-linear_fit(&logs)?.0)
}

/// Maximum error over `t ∈ [(1 − fraction) T, T]`, `T` the last sample time.
pub fn asymptotic_max(series: &ErrorSeries, fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "window fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let last = series
        .samples
        .last()
        .ok_or_else(|| Error::InvalidInput("empty error series".into()))?;
    let start = (1.0 - fraction) * last.t;
    let slack = 1e-12 * last.t.abs().max(1.0);
    series
        .samples
        .iter()
        .filter(|s| s.t >= start - slack)
        .map(|s| s.l2_error)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))))
        .ok_or_else(|| Error::InvalidInput("empty asymptotic window".into()))
}

/// Predicted decay rate `γ = min(ν / (2 c_I² H²), β / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPrediction {
    pub gamma: f64,
    pub nu: f64,
    pub h_coarse: f64,
    pub beta: f64,
    pub c_i: f64,
    /// `β c_I² H² ≤ ν`: the coarse-mesh smallness condition with the
    /// Lipschitz-type constant at its largest value `β/8` compatible with
    /// `β ≥ 8L`. Diagnostic only.
    pub admissible: bool,
}

impl DecayPrediction {
    /// Whether the nudging branch `β/2` attains the minimum.
    pub fn nudging_limited(&self) -> bool {
        self.beta / 2.0 <= self.viscous_branch()
    }

    pub fn viscous_branch(&self) -> f64 {
        self.nu / (2.0 * self.c_i * self.c_i * self.h_coarse * self.h_coarse)
    }
}

pub fn predict_gamma(nu: f64, h_coarse: f64, beta: f64, c_i: f64) -> Result<DecayPrediction> {
    for (name, v) in [("nu", nu), ("H", h_coarse), ("c_I", c_i)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput(format!("beta must be nonnegative, got {beta}")));
    }
    let viscous = nu / (2.0 * c_i * c_i * h_coarse * h_coarse);
    Ok(DecayPrediction {
        gamma: viscous.min(beta / 2.0),
        nu,
        h_coarse,
        beta,
        c_i,
        admissible: beta * c_i * c_i * h_coarse * h_coarse <= nu,
    })
}

/// Plateau and pre-plateau exponential fit of an error history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Error at the first step after `t = 0`.
    pub initial_error: f64,
    pub final_error: f64,
    /// Window maximum over the last `window` fraction of the run.
    pub plateau_level: f64,
    /// First time the error falls to within [`PLATEAU_FACTOR`] of the plateau.
    pub plateau_onset: Option<f64>,
    /// Fitted rate of the segment `(0, onset]`, if it holds three samples.
    pub rate: Option<f64>,
}

/// Errors within this factor of the plateau level count as having reached it.
pub const PLATEAU_FACTOR: f64 = 2.0;

pub fn fit_decay(series: &ErrorSeries, window: f64) -> Result<DecayFit> {
    let plateau_level = asymptotic_max(series, window)?;
    let after: Vec<(f64, f64)> = series
        .samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t, s.l2_error))
        .collect();
    let (&(_, initial_error), &(_, final_error)) = after
        .first()
        .zip(after.last())
        .ok_or_else(|| Error::InvalidInput("series has no samples after t = 0".into()))?;
    let plateau_onset = after
        .iter()
        .find(|&&(_, e)| e <= PLATEAU_FACTOR * plateau_level)
        .map(|&(t, _)| t);
    let rate = match plateau_onset {
        Some(onset) => {
            let segment: Vec<(f64, f64)> = after.iter().copied().filter(|&(t, _)| t <= onset).collect();
            if segment.len() >= 3 {
                Some(fit_exponential_rate(&segment)?)
            } else {
                None
            }
        }
        None => None,
    };
    Ok(DecayFit {
        initial_error,
        final_error,
        plateau_level,
        plateau_onset,
        rate,
    })
}
