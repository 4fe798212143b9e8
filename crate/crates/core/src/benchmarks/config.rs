use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gf::{Backend, DEFAULT_MC_SAMPLES};
use crate::models::RadarConstants;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    LinearExample,
    Radar,
    Sweep,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::LinearExample => "linear-example",
            Scenario::Radar => "radar",
            Scenario::Sweep => "sweep",
        })
    }
}

/// Filters compared by the benchmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// Gaussian filter that only knows the body.
    GfThin,
    /// Gaussian filter whose noise is a moment-matchable stand-in for the
    /// whole mixture.
    GfFat,
    /// Robust filter using the full body-plus-tail model.
    Rgf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 3] = [FilterKind::GfThin, FilterKind::GfFat, FilterKind::Rgf];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::GfThin => "gf-thin",
            FilterKind::GfFat => "gf-fat",
            FilterKind::Rgf => "rgf",
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown filter '{s}' (expected gf-thin, gf-fat or rgf)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    MonteCarlo,
    Unscented,
    ExactLinear,
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monte-carlo" => Ok(BackendKind::MonteCarlo),
            "unscented" => Ok(BackendKind::Unscented),
            "exact-linear" => Ok(BackendKind::ExactLinear),
            _ => Err(Error::Config(format!(
                "unknown backend '{s}' (expected monte-carlo, unscented or exact-linear)"
            ))),
        }
    }
}

/// Tail weight and Cauchy scale assumed by a robust filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPair {
    pub omega: f64,
    pub gamma: f64,
}

impl TailPair {
    pub const MATCHED: TailPair = TailPair { omega: 0.1, gamma: 10.0 };
    pub const UNDER: TailPair = TailPair { omega: 0.001, gamma: 1.0 };
    pub const OVER: TailPair = TailPair { omega: 0.5, gamma: 100.0 };

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "matched" => Ok(Self::MATCHED),
            "under" => Ok(Self::UNDER),
            "over" => Ok(Self::OVER),
            _ => Err(Error::Config(format!(
                "unknown pair '{name}' (expected matched, under or over)"
            ))),
        }
    }

    /// Column-safe filter label, e.g. `rgf-w0.1-g10`.
    pub fn label(&self) -> String {
        format!("rgf-w{}-g{}", self.omega, self.gamma)
    }
}

/// Fully resolved benchmark configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub filters: Vec<FilterKind>,
    pub seeds: Vec<u64>,
    /// Trajectory length for the scalar scenarios. The radar length follows
    /// from its constants.
    pub steps: usize,
    pub backend: BackendKind,
    pub samples: usize,
    /// Tail weight for the scalar scenarios and the radar RGF.
    pub omega: f64,
    /// Cauchy scale in the scalar scenarios; multiple of the nominal noise
    /// standard deviation for the radar RGF.
    pub gamma: f64,
    /// Robust filter variants compared by the sweep.
    pub pairs: Vec<TailPair>,
    pub radar: RadarConstants,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            filters: FilterKind::ALL.to_vec(),
            seeds: (0..100).collect(),
            steps: 50,
            backend: BackendKind::MonteCarlo,
            samples: DEFAULT_MC_SAMPLES,
            omega: TailPair::MATCHED.omega,
            gamma: TailPair::MATCHED.gamma,
            pairs: vec![TailPair::MATCHED, TailPair::UNDER, TailPair::OVER],
            radar: RadarConstants::default(),
        }
    }

    pub fn linear_example() -> Self {
        Self::new(Scenario::LinearExample)
    }

    pub fn sweep() -> Self {
        Self::new(Scenario::Sweep)
    }

    pub fn radar() -> Self {
        Self {
            seeds: (0..20).collect(),
            ..Self::new(Scenario::Radar)
        }
    }

    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::MonteCarlo => Backend::monte_carlo(self.samples),
            BackendKind::Unscented => Backend::unscented(),
            BackendKind::ExactLinear => Backend::exact_linear(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.scenario != Scenario::Sweep && self.filters.is_empty() {
            return Err(Error::Config("at least one filter is required".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.backend == BackendKind::MonteCarlo && self.samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        check_pair(TailPair { omega: self.omega, gamma: self.gamma })?;
        if self.scenario == Scenario::Sweep {
            if self.pairs.len() < 2 {
                return Err(Error::Config("a sweep needs at least two (omega, gamma) pairs".into()));
            }
            for p in &self.pairs {
                check_pair(*p)?;
            }
        }
        if self.scenario == Scenario::Radar {
            self.radar.validate()?;
        }
        Ok(())
    }
}

fn check_pair(p: TailPair) -> Result<()> {
    if !(0.0..=1.0).contains(&p.omega) {
        return Err(Error::Config(format!("omega {} outside [0, 1]", p.omega)));
    }
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(Error::Config(format!("gamma {} must be positive", p.gamma)));
    }
    Ok(())
}
