//! Benchmark experiments comparing the thin-tailed GF, a fat-tailed GF and the
//! robust filter on simulated data.
//!
//! Each seed is simulated once and every filter runs on the same
//! measurements. The simulation draws from stream 0 of a ChaCha8 generator
//! seeded with the seed; every filter starts from a fresh copy of stream 1.
//! Seeds run in parallel on the rayon pool and results are ordered by seed.

mod config;
mod metrics;
mod output;

pub use config::{BackendKind, ExperimentConfig, FilterKind, Scenario, TailPair};
pub use metrics::{compute_metrics, median_with_divergence, FilterMetrics};
pub use output::{write_csv, write_csv_file};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::GaussianDensity;
use crate::gf::{self, Backend, GaussianBelief, NoiseBranch};
use crate::models::{
    simulate_trajectory, FilterTrack, InitialState, LinearTransition, MeasurementMap,
    RadarMeasurement, RadarTransition, Tail, TailedSensorModel, TrajectoryLog, TransitionModel,
};
use crate::robust::rgf_update;
use crate::{Error, Result, Vector};

/// Radar estimates further than this from the truth (km) count as diverged.
pub const RADAR_DIVERGENCE_KM: f64 = 1e3;

/// How a filter conditions on a measurement.
#[derive(Clone, Debug)]
enum FilterModel {
    /// Plain GF with `y = h(x) + w`, `w` a Gaussian mixture.
    Gaussian {
        map: Arc<dyn MeasurementMap>,
        branches: Vec<NoiseBranch>,
    },
    Robust(TailedSensorModel),
}

#[derive(Clone, Debug)]
struct FilterSetup {
    name: String,
    model: FilterModel,
}

impl FilterSetup {
    fn gaussian(name: &str, map: Arc<dyn MeasurementMap>, branches: Vec<NoiseBranch>) -> Self {
        Self {
            name: name.to_string(),
            model: FilterModel::Gaussian {
                map,
                branches: branches.into_iter().filter(|b| b.weight > 0.0).collect(),
            },
        }
    }

    fn update(
        &self,
        belief: &GaussianBelief,
        y: &Vector,
        backend: &Backend,
        rng: &mut ChaCha8Rng,
    ) -> Result<GaussianBelief> {
        match &self.model {
            FilterModel::Gaussian { map, branches } => {
                gf::update_branches(belief, |x, _, w| map.nominal(x) + w, branches, y, backend, rng)
            }
            FilterModel::Robust(sensor) => rgf_update(belief, sensor, y, backend, rng),
        }
    }
}

/// Everything needed to simulate and filter one scenario.
#[derive(Debug)]
struct Setup {
    transition: Arc<dyn TransitionModel>,
    truth: TailedSensorModel,
    initial_state: InitialState,
    initial_belief: GaussianBelief,
    steps: usize,
    meas_every: usize,
    position_dims: Vec<usize>,
    /// Radar-style handling: failures truncate a track instead of aborting.
    divergence_km: Option<f64>,
    filters: Vec<FilterSetup>,
}

fn scalar_sensor(omega: f64, gamma: f64) -> Result<TailedSensorModel> {
    TailedSensorModel::scalar_cauchy(1.0, gamma, omega)
}

fn linear_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let truth = match cfg.scenario {
        Scenario::Sweep => scalar_sensor(TailPair::MATCHED.omega, TailPair::MATCHED.gamma)?,
        _ => scalar_sensor(cfg.omega, cfg.gamma)?,
    };
    let map = truth.map().clone();
    let body = GaussianDensity::scalar(0.0, 1.0)?;
    let filters = match cfg.scenario {
        Scenario::Sweep => cfg
            .pairs
            .iter()
            .map(|p| {
                Ok(FilterSetup {
                    name: p.label(),
                    model: FilterModel::Robust(scalar_sensor(p.omega, p.gamma)?),
                })
            })
            .collect::<Result<Vec<_>>>()?,
        _ => cfg
            .filters
            .iter()
            .map(|k| {
                Ok(match k {
                    FilterKind::GfThin => {
                        FilterSetup::gaussian(k.name(), map.clone(), NoiseBranch::single(body.clone()))
                    }
                    // Cauchy tails have no variance; a wide Gaussian of the
                    // same weight stands in for it.
                    FilterKind::GfFat => FilterSetup::gaussian(
                        k.name(),
                        map.clone(),
                        vec![
                            NoiseBranch::new(1.0 - cfg.omega, body.clone()),
                            NoiseBranch::new(cfg.omega, GaussianDensity::scalar(0.0, cfg.gamma * cfg.gamma)?),
                        ],
                    ),
                    FilterKind::Rgf => FilterSetup {
                        name: k.name().to_string(),
                        model: FilterModel::Robust(truth.clone()),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Setup {
        transition: Arc::new(LinearTransition::random_walk(1.0)),
        truth,
        initial_state: InitialState::Sample(GaussianDensity::scalar(0.0, 1.0)?),
        initial_belief: GaussianBelief::scalar(0.0, 1.0)?,
        steps: cfg.steps,
        meas_every: 1,
        position_dims: vec![0],
        divergence_km: None,
        filters,
    })
}

fn radar_setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let c = &cfg.radar;
    let map: Arc<dyn MeasurementMap> = Arc::new(RadarMeasurement {
        radar: c.radar_position(),
    });
    let truth = TailedSensorModel::new(
        map.clone(),
        c.nominal_noise(),
        Tail::Gaussian {
            noise: c.contaminating_noise(),
        },
        c.alpha,
    )?;
    let filters = cfg
        .filters
        .iter()
        .map(|k| {
            Ok(match k {
                FilterKind::GfThin => {
                    FilterSetup::gaussian(k.name(), map.clone(), NoiseBranch::single(c.nominal_noise()))
                }
                FilterKind::GfFat => {
                    FilterSetup::gaussian(k.name(), map.clone(), NoiseBranch::single(c.total_noise()))
                }
                FilterKind::Rgf => {
                    let scale = Vector::from_row_slice(&[
                        cfg.gamma * c.sigma_nom_r,
                        cfg.gamma * c.sigma_nom_theta_mrad,
                    ]);
                    let sensor = TailedSensorModel::new(
                        map.clone(),
                        c.nominal_noise(),
                        Tail::cauchy(scale)?,
                        cfg.omega,
                    )?;
                    FilterSetup {
                        name: k.name().to_string(),
                        model: FilterModel::Robust(sensor),
                    }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Setup {
        transition: Arc::new(RadarTransition { constants: c.clone() }),
        truth,
        initial_state: InitialState::Fixed(crate::models::RadarConstants::true_initial_state()),
        initial_belief: GaussianBelief::new(
            crate::models::RadarConstants::initial_belief_mean(),
            crate::models::RadarConstants::initial_belief_covariance(),
        )?,
        steps: c.steps(),
        meas_every: c.meas_every(),
        position_dims: vec![0, 1],
        divergence_km: Some(RADAR_DIVERGENCE_KM),
        filters,
    })
}

fn filter_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn run_filter(setup: &Setup, filter: &FilterSetup, log: &TrajectoryLog, seed: u64, backend: &Backend) -> Result<FilterTrack> {
    let mut rng = filter_rng(seed);
    let mut belief = setup.initial_belief.clone();
    let mut track = FilterTrack {
        name: filter.name.clone(),
        means: Vec::with_capacity(log.len()),
        covariances: Vec::with_capacity(log.len()),
        diverged_at: None,
        divergence_reason: None,
    };
    for (i, (truth, y)) in log.states.iter().zip(&log.measurements).enumerate() {
        let step = i + 1;
        let next = gf::predict(&belief, setup.transition.as_ref(), backend, &mut rng).and_then(|p| match y {
            Some(y) => filter.update(&p, y, backend, &mut rng),
            None => Ok(p),
        });
        let next = match (next, setup.divergence_km) {
            (Ok(b), Some(limit)) => {
                let e = setup
                    .position_dims
                    .iter()
                    .map(|&d| (b.mean()[d] - truth[d]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if e > limit {
                    Err(format!("position error {e:.1} km exceeds {limit} km"))
                } else {
                    Ok(b)
                }
            }
            (Ok(b), None) => Ok(b),
            (Err(e), Some(_)) => Err(e.to_string()),
            (Err(e), None) => {
                return Err(e.context(&format!("seed {seed}, filter {}, step {step}", filter.name)));
            }
        };
        match next {
            Ok(b) => {
                track.means.push(b.mean().clone());
                track.covariances.push(b.covariance().clone());
                belief = b;
            }
            Err(reason) => {
                track.diverged_at = Some(step);
                track.divergence_reason = Some(reason);
                break;
            }
        }
    }
    Ok(track)
}

fn run_seed(setup: &Setup, seed: u64, backend: &Backend) -> Result<TrajectoryLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = simulate_trajectory(
        setup.transition.as_ref(),
        &setup.truth,
        &setup.initial_state,
        setup.steps,
        setup.meas_every,
        &mut rng,
    )
    .map_err(|e| e.context(&format!("seed {seed}")))?;
    log.tracks = setup
        .filters
        .iter()
        .map(|f| run_filter(setup, f, &log, seed, backend))
        .collect::<Result<Vec<_>>>()?;
    Ok(log)
}

/// Metrics of every filter on one seed.
#[derive(Clone, Debug, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub tail_draws: usize,
    pub filters: Vec<FilterMetrics>,
}

/// Cross-seed summary of one filter. Diverged runs rank as +∞ in medians.
#[derive(Clone, Debug, Serialize)]
pub struct FilterSummary {
    pub filter: String,
    pub median_rmse: Option<f64>,
    pub median_position_error: Option<f64>,
    pub diverged_runs: usize,
    /// `median_rmse` relative to the reference filter (sweeps only).
    pub rmse_ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub scenario: Scenario,
    pub config: ExperimentConfig,
    pub reference_filter: Option<String>,
    pub summary: Vec<FilterSummary>,
    pub runs: Vec<SeedMetrics>,
}

impl MetricsReport {
    pub fn filter(&self, name: &str) -> Option<&FilterSummary> {
        self.summary.iter().find(|s| s.filter == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Simulated runs together with their metrics.
#[derive(Clone, Debug)]
pub struct BatchResult {
    /// `(seed, log)` ordered by seed.
    pub logs: Vec<(u64, TrajectoryLog)>,
    pub report: MetricsReport,
}

fn build_report(cfg: &ExperimentConfig, setup: &Setup, logs: &[(u64, TrajectoryLog)]) -> Result<MetricsReport> {
    let runs = logs
        .iter()
        .map(|(seed, log)| {
            Ok(SeedMetrics {
                seed: *seed,
                tail_draws: log.from_tail.iter().filter(|&&t| t).count(),
                filters: compute_metrics(log, &setup.position_dims)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary: Vec<FilterSummary> = setup
        .filters
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let per_run = |g: fn(&FilterMetrics) -> f64| -> Vec<Option<f64>> {
                runs.iter()
                    .map(|r| {
                        let m = &r.filters[i];
                        m.diverged_at.is_none().then(|| g(m))
                    })
                    .collect()
            };
            FilterSummary {
                filter: f.name.clone(),
                median_rmse: median_with_divergence(&per_run(|m| m.rmse_total)),
                median_position_error: median_with_divergence(&per_run(|m| m.mean_position_error)),
                diverged_runs: runs.iter().filter(|r| r.filters[i].diverged_at.is_some()).count(),
                rmse_ratio: None,
            }
        })
        .collect();
    let reference_filter = (cfg.scenario == Scenario::Sweep).then(|| {
        cfg.pairs
            .iter()
            .find(|p| **p == TailPair::MATCHED)
            .unwrap_or(&cfg.pairs[0])
            .label()
    });
    if let Some(reference) = &reference_filter {
        let base = summary
            .iter()
            .find(|s| &s.filter == reference)
            .and_then(|s| s.median_rmse);
        for s in &mut summary {
            s.rmse_ratio = match (s.median_rmse, base) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                (Some(a), Some(b)) if a == b => Some(1.0),
                _ => None,
            };
        }
    }
    Ok(MetricsReport {
        scenario: cfg.scenario,
        config: cfg.clone(),
        reference_filter,
        summary,
        runs,
    })
}

fn run_batch(cfg: &ExperimentConfig, setup: Setup) -> Result<BatchResult> {
    let backend = cfg.backend();
    let mut logs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&setup, seed, &backend).map(|log| (seed, log)))
        .collect::<Result<Vec<_>>>()?;
    logs.sort_by_key(|(seed, _)| *seed);
    let report = build_report(cfg, &setup, &logs)?;
    Ok(BatchResult { logs, report })
}

fn expect_scenario(cfg: &ExperimentConfig, scenario: Scenario) -> Result<()> {
    if cfg.scenario != scenario {
        return Err(Error::Config(format!(
            "expected a {scenario} configuration, got {}",
            cfg.scenario
        )));
    }
    cfg.validate()
}

/// Scalar random walk observed through a Gaussian body with a Cauchy tail.
pub fn run_linear_example(cfg: &ExperimentConfig) -> Result<BatchResult> {
    expect_scenario(cfg, Scenario::LinearExample)?;
    run_batch(cfg, linear_setup(cfg)?)
}

/// Robust filters with different assumed tails on the matched scalar data.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<BatchResult> {
    expect_scenario(cfg, Scenario::Sweep)?;
    run_batch(cfg, linear_setup(cfg)?)
}

/// Reentry tracking with glint-contaminated range/bearing measurements.
pub fn run_radar(cfg: &ExperimentConfig) -> Result<BatchResult> {
    expect_scenario(cfg, Scenario::Radar)?;
    run_batch(cfg, radar_setup(cfg)?)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BatchResult> {
    match cfg.scenario {
        Scenario::LinearExample => run_linear_example(cfg),
        Scenario::Sweep => run_sweep(cfg),
        Scenario::Radar => run_radar(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_linear(backend: BackendKind) -> ExperimentConfig {
        ExperimentConfig {
            seeds: (0..4).collect(),
            steps: 20,
            backend,
            samples: 200,
            ..ExperimentConfig::linear_example()
        }
    }

    #[test]
    fn omega_zero_filters_agree() {
        let cfg = ExperimentConfig {
            omega: 0.0,
            ..small_linear(BackendKind::MonteCarlo)
        };
        let out = run_linear_example(&cfg).unwrap();
        for (_, log) in &out.logs {
            assert!(log.from_tail.iter().all(|t| !t));
            let thin = &log.tracks[0];
            for other in &log.tracks[1..] {
                for (a, b) in thin.means.iter().zip(&other.means) {
                    assert!((a - b).amax() < 1e-8, "{}", other.name);
                }
            }
        }
    }

    #[test]
    fn filters_see_the_same_data() {
        let a = run_linear_example(&small_linear(BackendKind::Unscented)).unwrap();
        let cfg = ExperimentConfig {
            filters: vec![FilterKind::Rgf],
            ..small_linear(BackendKind::Unscented)
        };
        let b = run_linear_example(&cfg).unwrap();
        for ((_, la), (_, lb)) in a.logs.iter().zip(&b.logs) {
            assert_eq!(la.states, lb.states);
            assert_eq!(la.measurements, lb.measurements);
            assert_eq!(la.track("rgf").unwrap().means, lb.track("rgf").unwrap().means);
        }
    }

    #[test]
    fn seed_results_independent_of_batch() {
        let all = run_linear_example(&small_linear(BackendKind::MonteCarlo)).unwrap();
        let cfg = ExperimentConfig {
            seeds: vec![2],
            ..small_linear(BackendKind::MonteCarlo)
        };
        let one = run_linear_example(&cfg).unwrap();
        let (_, a) = &all.logs[2];
        let (_, b) = &one.logs[0];
        assert_eq!(a.states, b.states);
        for (ta, tb) in a.tracks.iter().zip(&b.tracks) {
            assert_eq!(ta.means, tb.means);
        }
    }

    #[test]
    fn sweep_identity_ratio() {
        let cfg = ExperimentConfig {
            pairs: vec![TailPair::MATCHED, TailPair::MATCHED],
            seeds: (0..3).collect(),
            steps: 10,
            samples: 100,
            ..ExperimentConfig::sweep()
        };
        let out = run_sweep(&cfg).unwrap();
        for s in &out.report.summary {
            assert_eq!(s.rmse_ratio, Some(1.0));
        }
    }

    #[test]
    fn sweep_omega_zero_is_thin_filter() {
        let cfg = ExperimentConfig {
            pairs: vec![TailPair { omega: 0.0, gamma: 10.0 }, TailPair::MATCHED],
            seeds: vec![5],
            steps: 15,
            samples: 200,
            ..ExperimentConfig::sweep()
        };
        let sweep = run_sweep(&cfg).unwrap();
        let thin_cfg = ExperimentConfig {
            filters: vec![FilterKind::GfThin],
            seeds: vec![5],
            steps: 15,
            samples: 200,
            ..ExperimentConfig::linear_example()
        };
        let thin = run_linear_example(&thin_cfg).unwrap();
        let (_, a) = &sweep.logs[0];
        let (_, b) = &thin.logs[0];
        assert_eq!(a.measurements, b.measurements);
        for (x, y) in a.tracks[0].means.iter().zip(&b.tracks[0].means) {
            assert!((x - y).amax() < 1e-8);
        }
    }

    #[test]
    fn config_errors() {
        let cfg = ExperimentConfig {
            seeds: vec![],
            ..ExperimentConfig::linear_example()
        };
        assert!(matches!(run_linear_example(&cfg), Err(Error::Config(_))));
        let cfg = ExperimentConfig {
            pairs: vec![TailPair::MATCHED],
            ..ExperimentConfig::sweep()
        };
        assert!(matches!(run_sweep(&cfg), Err(Error::Config(_))));
        assert!(matches!(
            run_radar(&ExperimentConfig::linear_example()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn exact_linear_rgf_is_reported() {
        let cfg = ExperimentConfig {
            seeds: vec![0],
            steps: 3,
            ..small_linear(BackendKind::ExactLinear)
        };
        match run_linear_example(&cfg) {
            Err(Error::BackendMisuse(m)) => assert!(m.contains("seed 0") && m.contains("rgf")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
