//! Flat `key=value` configuration files and the run-configuration echo.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::observe::InterpolantKind;
use crate::timeloop::{InitialCondition, ProblemData, SimulationConfig};

/// Keys understood by [`apply_simulation`].
pub const SIMULATION_KEYS: [&str; 12] = [
    "nu",
    "beta",
    "mu",
    "n",
    "ratio_k",
    "dt",
    "t_final",
    "interpolant",
    "initial",
    "data",
    "assembly_degree",
    "error_degree",
];

/// Parsed `key=value` lines. Blank lines and `#` comments are ignored;
/// dashes in keys are read as underscores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if key.is_empty() {
                return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rejects any key outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(Error::Parse(format!(
                "unknown key '{k}' (known: {})",
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Parse(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key).map(|v| parse_list(v).map_err(|e| Error::Parse(format!("'{key}': {e}")))).transpose()
    }
}

/// Parses a comma-separated list such as `0,0.1,1`.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::Parse(format!("invalid list entry '{s}'"))))
        .collect()
}

pub fn parse_initial(text: &str) -> Result<InitialCondition> {
    match text {
        "zero" => Ok(InitialCondition::Zero),
        "exact" => Ok(InitialCondition::ExactAtZero),
        other => Err(Error::Parse(format!("unknown initial condition '{other}' (zero|exact)"))),
    }
}

pub fn initial_name(initial: InitialCondition) -> &'static str {
    match initial {
        InitialCondition::Zero => "zero",
        InitialCondition::ExactAtZero => "exact",
    }
}

pub fn parse_data(text: &str) -> Result<ProblemData> {
    match text {
        "manufactured" => Ok(ProblemData::Manufactured),
        "homogeneous" => Ok(ProblemData::Homogeneous),
        other => Err(Error::Parse(format!(
            "unknown problem data '{other}' (manufactured|homogeneous)"
        ))),
    }
}

pub fn data_name(data: ProblemData) -> &'static str {
    match data {
        ProblemData::Manufactured => "manufactured",
        ProblemData::Homogeneous => "homogeneous",
    }
}

/// Overwrites the fields of `config` named in `kv`; other keys are ignored.
/// `dt=auto` restores the default step.
pub fn apply_simulation(config: &mut SimulationConfig, kv: &KeyValues) -> Result<()> {
    if let Some(v) = kv.get_parsed("nu")? {
        config.nu = v;
    }
    if let Some(v) = kv.get_parsed("beta")? {
        config.beta = v;
    }
    if let Some(v) = kv.get_parsed("mu")? {
        config.mu = v;
    }
    if let Some(v) = kv.get_parsed("n")? {
        config.n = v;
    }
    if let Some(v) = kv.get_parsed("ratio_k")? {
        config.k = v;
    }
    match kv.get("dt") {
        Some("auto") => config.dt = None,
        Some(_) => config.dt = kv.get_parsed("dt")?,
        None => {}
    }
    if let Some(v) = kv.get_parsed("t_final")? {
        config.t_final = v;
    }
    if let Some(v) = kv.get("interpolant") {
        config.interpolant = InterpolantKind::from_str(v)?;
    }
    if let Some(v) = kv.get("initial") {
        config.initial = parse_initial(v)?;
    }
    if let Some(v) = kv.get("data") {
        config.data = parse_data(v)?;
    }
    if let Some(v) = kv.get_parsed("assembly_degree")? {
        config.assembly_degree = v;
    }
    if let Some(v) = kv.get_parsed("error_degree")? {
        config.error_degree = v;
    }
    Ok(())
}

/// `key=value` text that [`apply_simulation`] reads back to an equal config.
pub fn simulation_to_text(config: &SimulationConfig) -> String {
    let dt = config.dt.map_or("auto".to_string(), |d| format!("{d:e}"));
    format!(
        "nu={:e}\nbeta={:e}\nmu={:e}\nn={}\nratio_k={}\ndt={dt}\nt_final={:e}\ninterpolant={}\ninitial={}\ndata={}\nassembly_degree={}\nerror_degree={}\n",
        config.nu,
        config.beta,
        config.mu,
        config.n,
        config.k,
        config.t_final,
        config.interpolant.short_name(),
        initial_name(config.initial),
        data_name(config.data),
        config.assembly_degree,
        config.error_degree,
    )
}

pub fn simulation_from_text(text: &str) -> Result<SimulationConfig> {
    let kv = KeyValues::parse(text)?;
    kv.check_known(&SIMULATION_KEYS)?;
    let mut config = SimulationConfig::default();
    apply_simulation(&mut config, &kv)?;
    Ok(config)
}
