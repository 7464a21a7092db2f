//! Error time series and their CSV form.
//!
//! Values are written with 17 significant digits, so parsing the emitted
//! text reproduces every sample bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::{simulation_from_text, simulation_to_text};
use crate::timeloop::{SimulationConfig, StepDiagnostics};

pub const SERIES_HEADER: &str = "t,l2_error,obs_ratio,div_residual";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub l2_error: f64,
    /// `‖I_H e_h‖₀ / ‖e_h‖₀`
    pub obs_ratio: f64,
    /// `‖D u_h‖_∞`
    pub div_residual: f64,
}

impl From<&StepDiagnostics> for Sample {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            t: d.t,
            l2_error: d.l2_error,
            obs_ratio: d.obs_ratio,
            div_residual: d.div_residual,
        }
    }
}

/// Per-step diagnostics of one run together with the configuration that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub config: SimulationConfig,
    pub samples: Vec<Sample>,
}

impl ErrorSeries {
    pub fn new(config: SimulationConfig, samples: Vec<Sample>) -> Result<Self> {
        let series = Self { config, samples };
        series.validate()?;
        Ok(series)
    }

    pub fn from_diagnostics(config: SimulationConfig, diagnostics: &[StepDiagnostics]) -> Result<Self> {
        Self::new(config, diagnostics.iter().map(Sample::from).collect())
    }

    /// Times strictly increasing, norms finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            let finite = [s.t, s.l2_error, s.obs_ratio, s.div_residual].iter().all(|v| v.is_finite());
            if !finite || s.l2_error < 0.0 || s.obs_ratio < 0.0 || s.div_residual < 0.0 {
                return Err(Error::InvalidInput(format!("invalid sample {i}: {s:?}")));
            }
            if i > 0 && !(s.t > self.samples[i - 1].t) {
                return Err(Error::InvalidInput(format!("sample times not increasing at {i}")));
            }
        }
        Ok(())
    }

    pub fn t_final(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Largest observed-error ratio over the run.
    pub fn max_obs_ratio(&self) -> f64 {
        self.samples.iter().map(|s| s.obs_ratio).fold(0.0, f64::max)
    }

    pub fn max_div_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.div_residual).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(80 * (self.samples.len() + 1));
        out.push_str(SERIES_HEADER);
        out.push('\n');
        for s in &self.samples {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.l2_error, s.obs_ratio, s.div_residual
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    /// Inverse of [`to_csv`](Self::to_csv) plus the configuration echo.
    pub fn from_csv(csv: &str, config_echo: &str) -> Result<Self> {
        Self::new(simulation_from_text(config_echo)?, parse_samples(csv)?)
    }

    pub fn config_echo(&self) -> String {
        simulation_to_text(&self.config)
    }

    /// Writes `<stem>.csv` and the `<stem>.config` echo into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.config")), self.config_echo())?;
        Ok(csv)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv")))?;
        let echo = std::fs::read_to_string(dir.join(format!("{stem}.config")))?;
        Self::from_csv(&csv, &echo)
    }
}

pub fn parse_samples(csv: &str) -> Result<Vec<Sample>> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == SERIES_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected header '{SERIES_HEADER}', found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let v = parse_row(line, 4).map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            Ok(Sample {
                t: v[0],
                l2_error: v[1],
                obs_ratio: v[2],
                div_residual: v[3],
            })
        })
        .collect()
}

/// Splits a row of `width` floating-point fields.
pub(crate) fn parse_row(line: &str, width: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("invalid number '{}'", s.trim())))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != width {
        return Err(format!("expected {width} fields, found {}", v.len()));
    }
    Ok(v)
}
