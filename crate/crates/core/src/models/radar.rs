//! Reentry vehicle tracked by a range/bearing radar.
//!
//! State: position `(x1, x2)` in km, velocity `(x3, x4)` in km/s and the
//! log ballistic-coefficient offset `x5`. Measurements: range in km and
//! bearing in mrad (unwrapped).

use serde::{Deserialize, Serialize};

use super::{MeasurementMap, TransitionModel};
use crate::distributions::GaussianDensity;
use crate::{Error, Matrix, Result, Vector};

/// Scenario constants. Missing JSON fields fall back to the nominal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConstants {
    /// integration step Δ (s)
    pub delta_s: f64,
    /// process noise σ_v (km/s²)
    pub sigma_v: f64,
    /// nominal ballistic coefficient β₀ (1/km)
    pub beta0: f64,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "Gm0")]
    pub gm0: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub sigma_nom_r: f64,
    pub sigma_con_r: f64,
    pub sigma_nom_theta_mrad: f64,
    pub sigma_con_theta_mrad: f64,
    /// contamination weight
    pub alpha: f64,
    /// Radar station position. Defaults to `(R0, 0)`.
    pub radar_x_km: Option<f64>,
    pub radar_y_km: Option<f64>,
    pub duration_s: f64,
}

impl Default for RadarConstants {
    fn default() -> Self {
        Self {
            delta_s: 0.05,
            sigma_v: 5e-3,
            beta0: 0.59,
            h0: 13.4,
            gm0: 3.986e5,
            r0: 6374.0,
            sigma_nom_r: 0.5,
            sigma_con_r: 15.8,
            sigma_nom_theta_mrad: 0.63,
            sigma_con_theta_mrad: 200.0,
            alpha: 0.15,
            radar_x_km: None,
            radar_y_km: None,
            duration_s: 100.0,
        }
    }
}

impl RadarConstants {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("radar config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta_s", self.delta_s),
            ("beta0", self.beta0),
            ("H0", self.h0),
            ("Gm0", self.gm0),
            ("R0", self.r0),
            ("sigma_nom_r", self.sigma_nom_r),
            ("sigma_con_r", self.sigma_con_r),
            ("sigma_nom_theta_mrad", self.sigma_nom_theta_mrad),
            ("sigma_con_theta_mrad", self.sigma_con_theta_mrad),
            ("duration_s", self.duration_s),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.sigma_v >= 0.0) {
            return Err(Error::Config("sigma_v must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn radar_position(&self) -> (f64, f64) {
        (self.radar_x_km.unwrap_or(self.r0), self.radar_y_km.unwrap_or(0.0))
    }

    /// Predictions per measurement (1 Hz measurements).
    pub fn meas_every(&self) -> usize {
        ((1.0 / self.delta_s).round() as usize).max(1)
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.delta_s).round() as usize
    }

    pub fn nominal_noise(&self) -> GaussianDensity {
        GaussianDensity::zero_mean_diagonal(&[
            self.sigma_nom_r.powi(2),
            self.sigma_nom_theta_mrad.powi(2),
        ])
        .expect("validated variances")
    }

    pub fn contaminating_noise(&self) -> GaussianDensity {
        GaussianDensity::zero_mean_diagonal(&[
            self.sigma_con_r.powi(2),
            self.sigma_con_theta_mrad.powi(2),
        ])
        .expect("validated variances")
    }

    /// `(1 - α) Σ_nom + α Σ_con`.
    pub fn total_noise(&self) -> GaussianDensity {
        let a = self.alpha;
        GaussianDensity::zero_mean_diagonal(&[
            (1.0 - a) * self.sigma_nom_r.powi(2) + a * self.sigma_con_r.powi(2),
            (1.0 - a) * self.sigma_nom_theta_mrad.powi(2)
                + a * self.sigma_con_theta_mrad.powi(2),
        ])
        .expect("validated variances")
    }

    /// True initial state.
    pub fn true_initial_state() -> Vector {
        Vector::from_row_slice(&[6500.4, 349.14, -1.8093, -6.7967, 0.6932])
    }

    /// Mean of the initial filter belief (nominal ballistic coefficient).
    pub fn initial_belief_mean() -> Vector {
        Vector::from_row_slice(&[6500.4, 349.14, -1.8093, -6.7967, 0.0])
    }

    pub fn initial_belief_covariance() -> Matrix {
        Matrix::from_diagonal(&Vector::from_row_slice(&[1e-6, 1e-6, 1e-6, 1e-6, 1.0]))
    }
}

fn dynamics(x: &Vector, v: &Vector, c: &RadarConstants) -> Vector {
    let d = c.delta_s;
    let radius = x[0].hypot(x[1]);
    let speed = x[2].hypot(x[3]);
    let beta = c.beta0 * x[4].exp();
    let drag = -beta * ((c.r0 - radius) / c.h0).exp() * speed;
    let gravity = -c.gm0 / radius.powi(3);
    let kick = d.sqrt() * c.sigma_v;
    Vector::from_row_slice(&[
        x[0] + d * x[2],
        x[1] + d * x[3],
        x[2] + d * (drag * x[2] + gravity * x[0]) + kick * v[0],
        x[3] + d * (drag * x[3] + gravity * x[1]) + kick * v[1],
        x[4],
    ])
}

/// One Euler step of the reentry dynamics.
pub fn radar_transition(x: &Vector, v: &Vector, constants: &RadarConstants) -> Result<Vector> {
    Error::check_dim("radar state", 5, x.len())?;
    Error::check_dim("radar process noise", 2, v.len())?;
    if x[0] == 0.0 && x[1] == 0.0 {
        return Err(Error::Domain("radar transition at the Earth's centre (R = 0)".into()));
    }
    Ok(dynamics(x, v, constants))
}

fn range_bearing(x: &Vector, radar: (f64, f64)) -> Vector {
    let dx = x[0] - radar.0;
    let dy = x[1] - radar.1;
    Vector::from_row_slice(&[dx.hypot(dy), 1e3 * (dy / dx).atan()])
}

/// Range (km) and bearing (mrad) with additive noise `w`.
pub fn radar_measurement(x: &Vector, radar: (f64, f64), w: &Vector) -> Result<Vector> {
    Error::check_dim("radar state", 5, x.len())?;
    Error::check_dim("radar measurement noise", 2, w.len())?;
    if x[0] == radar.0 && x[1] == radar.1 {
        return Err(Error::Domain("target coincides with the radar".into()));
    }
    Ok(range_bearing(x, radar) + w)
}

#[derive(Clone, Debug)]
pub struct RadarTransition {
    pub constants: RadarConstants,
}

impl TransitionModel for RadarTransition {
    fn state_dim(&self) -> usize {
        5
    }

    fn noise_dim(&self) -> usize {
        2
    }

    fn apply(&self, x: &Vector, v: &Vector) -> Vector {
        dynamics(x, v, &self.constants)
    }
}

#[derive(Clone, Debug)]
pub struct RadarMeasurement {
    pub radar: (f64, f64),
}

impl MeasurementMap for RadarMeasurement {
    fn state_dim(&self) -> usize {
        5
    }

    fn meas_dim(&self) -> usize {
        2
    }

    fn nominal(&self, x: &Vector) -> Vector {
        range_bearing(x, self.radar)
    }
}
