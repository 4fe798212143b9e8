use rand::Rng;

use super::{TailedSensorModel, TransitionModel};
use crate::distributions::GaussianDensity;
use crate::{Error, Matrix, Result, Vector};

/// How the true initial state is chosen.
#[derive(Clone, Debug)]
pub enum InitialState {
    Sample(GaussianDensity),
    Fixed(Vector),
}

/// Estimates produced by one filter over a trajectory.
#[derive(Clone, Debug, Default)]
pub struct FilterTrack {
    pub name: String,
    pub means: Vec<Vector>,
    pub covariances: Vec<Matrix>,
    /// First step index at which the filter diverged; later steps are absent.
    pub diverged_at: Option<usize>,
    pub divergence_reason: Option<String>,
}

/// Per-step record of a simulated run. Index `i` holds time step `t = i + 1`.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryLog {
    pub initial_state: Vector,
    pub states: Vec<Vector>,
    /// `None` on predict-only steps.
    pub measurements: Vec<Option<Vector>>,
    /// True where the measurement was drawn from the sensor tail.
    pub from_tail: Vec<bool>,
    pub tracks: Vec<FilterTrack>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn measurement_count(&self) -> usize {
        self.measurements.iter().filter(|m| m.is_some()).count()
    }

    pub fn track(&self, name: &str) -> Option<&FilterTrack> {
        self.tracks.iter().find(|t| t.name == name)
    }
}

/// Simulate `steps` transitions, measuring every `meas_every` steps.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    transition: &dyn TransitionModel,
    sensor: &TailedSensorModel,
    initial: &InitialState,
    steps: usize,
    meas_every: usize,
    rng: &mut R,
) -> Result<TrajectoryLog> {
    if steps == 0 || meas_every == 0 {
        return Err(Error::Argument("steps and meas_every must be at least 1".into()));
    }
    let x0 = match initial {
        InitialState::Sample(d) => d.sample(rng),
        InitialState::Fixed(x) => x.clone(),
    };
    Error::check_dim("initial state", transition.state_dim(), x0.len())?;
    Error::check_dim("sensor state", transition.state_dim(), sensor.state_dim())?;
    let noise = transition.noise();
    let mut log = TrajectoryLog {
        initial_state: x0.clone(),
        states: Vec::with_capacity(steps),
        measurements: Vec::with_capacity(steps),
        from_tail: Vec::with_capacity(steps),
        tracks: Vec::new(),
    };
    let mut x = x0;
    for t in 1..=steps {
        let v = noise.sample(rng);
        x = transition.apply(&x, &v);
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Simulation {
                step: t,
                reason: "state became non-finite".into(),
            });
        }
        let (y, tail) = if t % meas_every == 0 {
            let (y, tail) = sensor.sample(&x, rng);
            (Some(y), tail)
        } else {
            (None, false)
        };
        log.states.push(x.clone());
        log.measurements.push(y);
        log.from_tail.push(tail);
    }
    Ok(log)
}
