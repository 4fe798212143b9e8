//! State-space models: transitions, sensors with a Gaussian body and a fat
//! tail, the reentry radar problem, and ground-truth simulation.

mod radar;
mod sensor;
mod simulate;

pub use radar::{
    radar_measurement, radar_transition, RadarConstants, RadarMeasurement, RadarTransition,
};
pub use sensor::{
    LinearGaussianSensor, LinearMap, MeasurementMap, SensorBranch, Tail, TailedSensorModel,
};
pub use simulate::{simulate_trajectory, FilterTrack, InitialState, TrajectoryLog};

use std::fmt::Debug;

use crate::distributions::GaussianDensity;
use crate::{Error, Matrix, Result, Vector};

/// `x_t = g(x_{t-1}, v_t)` with `v_t ~ N(0, I)` mapped inside `g`.
pub trait TransitionModel: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn apply(&self, x: &Vector, v: &Vector) -> Vector;

    fn noise(&self) -> GaussianDensity {
        GaussianDensity::standard(self.noise_dim())
    }
}

/// `x' = F x + L v`.
#[derive(Clone, Debug)]
pub struct LinearTransition {
    matrix: Matrix,
    noise_gain: Matrix,
}

impl LinearTransition {
    pub fn new(matrix: Matrix, noise_gain: Matrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Argument("transition matrix must be square".into()));
        }
        Error::check_dim("transition noise gain", matrix.nrows(), noise_gain.nrows())?;
        Ok(Self { matrix, noise_gain })
    }

    /// `x' = x + sigma v` in one dimension.
    pub fn random_walk(sigma: f64) -> Self {
        Self {
            matrix: Matrix::identity(1, 1),
            noise_gain: Matrix::from_element(1, 1, sigma),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn noise_gain(&self) -> &Matrix {
        &self.noise_gain
    }

    /// Process noise covariance `L Lᵀ`.
    pub fn process_covariance(&self) -> Matrix {
        &self.noise_gain * self.noise_gain.transpose()
    }
}

impl TransitionModel for LinearTransition {
    fn state_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn noise_dim(&self) -> usize {
        self.noise_gain.ncols()
    }

    fn apply(&self, x: &Vector, v: &Vector) -> Vector {
        &self.matrix * x + &self.noise_gain * v
    }
}
