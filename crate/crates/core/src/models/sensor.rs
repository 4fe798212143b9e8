use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;

use crate::distributions::{CauchyDensity, GaussianDensity};
use crate::gf::NoiseBranch;
use crate::linalg::{check_covariance, std_normal_cdf};
use crate::{Error, Matrix, Result, Vector};

/// Noise-free measurement function `x -> h(x)`.
pub trait MeasurementMap: Send + Sync + Debug {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn nominal(&self, x: &Vector) -> Vector;

    /// `(A, a)` when the map is `A x + a`.
    fn as_linear(&self) -> Option<(&Matrix, &Vector)> {
        None
    }
}

/// `x -> A x + a`.
#[derive(Clone, Debug)]
pub struct LinearMap {
    matrix: Matrix,
    offset: Vector,
}

impl LinearMap {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        Error::check_dim("linear map offset", matrix.nrows(), offset.len())?;
        Ok(Self { matrix, offset })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Matrix::identity(dim, dim),
            offset: Vector::zeros(dim),
        }
    }
}

impl MeasurementMap for LinearMap {
    fn state_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn meas_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn nominal(&self, x: &Vector) -> Vector {
        &self.matrix * x + &self.offset
    }

    fn as_linear(&self) -> Option<(&Matrix, &Vector)> {
        Some((&self.matrix, &self.offset))
    }
}

/// Linear Gaussian body `b(y|x) = N(y | A x + a, P)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianSensor {
    pub matrix: Matrix,
    pub offset: Vector,
    pub noise_covariance: Matrix,
}

impl LinearGaussianSensor {
    pub fn new(matrix: Matrix, offset: Vector, noise_covariance: Matrix) -> Result<Self> {
        Error::check_dim("linear sensor offset", matrix.nrows(), offset.len())?;
        Error::check_dim("linear sensor noise", matrix.nrows(), noise_covariance.nrows())?;
        check_covariance(&noise_covariance, 1e-12, 1e-10, "sensor noise covariance")?;
        Ok(Self {
            matrix,
            offset,
            noise_covariance,
        })
    }

    pub fn map(&self) -> LinearMap {
        LinearMap {
            matrix: self.matrix.clone(),
            offset: self.offset.clone(),
        }
    }

    pub fn noise(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(Vector::zeros(self.offset.len()), self.noise_covariance.clone())
    }
}

/// Outlier density `t(y|x)`, driven by standard-normal noise when sampled.
#[derive(Clone, Debug)]
pub enum Tail {
    /// Independent Cauchy per dimension, located at the noise-free measurement.
    Cauchy { scale: Vector },
    /// Zero-mean Gaussian added to the noise-free measurement.
    Gaussian { noise: GaussianDensity },
    /// Uniform on a fixed box, independent of the state.
    Uniform { lower: Vector, upper: Vector },
}

impl Tail {
    pub fn cauchy(scale: Vector) -> Result<Self> {
        CauchyDensity::new(Vector::zeros(scale.len()), scale.clone())?;
        Ok(Tail::Cauchy { scale })
    }

    pub fn uniform(lower: Vector, upper: Vector) -> Result<Self> {
        Error::check_dim("uniform tail bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(u > l)) {
            return Err(Error::Argument("uniform tail needs upper > lower".into()));
        }
        Ok(Tail::Uniform { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            Tail::Cauchy { scale } => scale.len(),
            Tail::Gaussian { noise } => noise.dim(),
            Tail::Uniform { lower, .. } => lower.len(),
        }
    }

    /// `log t(y | x)` where `center = h(x)`.
    pub fn logpdf(&self, y: &Vector, center: &Vector) -> Result<f64> {
        Error::check_dim("tail logpdf", self.dim(), y.len())?;
        match self {
            Tail::Cauchy { scale } => {
                CauchyDensity::new(center.clone(), scale.clone())?.logpdf(y)
            }
            Tail::Gaussian { noise } => noise.logpdf(&(y - center)),
            Tail::Uniform { lower, upper } => {
                let inside = y
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(v, (l, u))| (l..=u).contains(&v));
                if inside {
                    Ok(-upper
                        .iter()
                        .zip(lower.iter())
                        .map(|(u, l)| (u - l).ln())
                        .sum::<f64>())
                } else {
                    Ok(f64::NEG_INFINITY)
                }
            }
        }
    }

    /// Density of the noise that [`Tail::map_noise`] consumes.
    pub fn driving_noise(&self) -> GaussianDensity {
        match self {
            Tail::Gaussian { noise } => noise.clone(),
            _ => GaussianDensity::standard(self.dim()),
        }
    }

    /// Transform a draw of the driving noise into a tail sample around `center`.
    pub fn map_noise(&self, center: &Vector, w: &Vector) -> Vector {
        match self {
            Tail::Cauchy { scale } => Vector::from_fn(center.len(), |i, _| {
                let u = std_normal_cdf(w[i]);
                center[i] + scale[i] * (PI * (u - 0.5)).tan()
            }),
            Tail::Gaussian { .. } => center + w,
            Tail::Uniform { lower, upper } => Vector::from_fn(lower.len(), |i, _| {
                lower[i] + (upper[i] - lower[i]) * std_normal_cdf(w[i])
            }),
        }
    }
}

/// Which mixture component produced a measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorBranch {
    Body,
    Tail,
}

/// `p(y|x) = (1 - ω) b(y|x) + ω t(y|x)` with an additive Gaussian body
/// `b(y|x) = N(y | h(x), R)`.
#[derive(Clone, Debug)]
pub struct TailedSensorModel {
    map: Arc<dyn MeasurementMap>,
    body_noise: GaussianDensity,
    tail: Tail,
    tail_weight: f64,
}

impl TailedSensorModel {
    pub fn new(
        map: Arc<dyn MeasurementMap>,
        body_noise: GaussianDensity,
        tail: Tail,
        tail_weight: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&tail_weight) {
            return Err(Error::Argument(format!(
                "tail weight {tail_weight} outside [0, 1]"
            )));
        }
        Error::check_dim("sensor body noise", map.meas_dim(), body_noise.dim())?;
        Error::check_dim("sensor tail", map.meas_dim(), tail.dim())?;
        Ok(Self {
            map,
            body_noise,
            tail,
            tail_weight,
        })
    }

    /// Linear Gaussian body with a tail.
    pub fn linear(body: &LinearGaussianSensor, tail: Tail, tail_weight: f64) -> Result<Self> {
        Self::new(Arc::new(body.map()), body.noise()?, tail, tail_weight)
    }

    /// Scalar sensor `(1 - ω) N(y|x, body_var) + ω C(y|x, gamma)`.
    pub fn scalar_cauchy(body_var: f64, gamma: f64, tail_weight: f64) -> Result<Self> {
        Self::new(
            Arc::new(LinearMap::identity(1)),
            GaussianDensity::scalar(0.0, body_var)?,
            Tail::cauchy(Vector::from_element(1, gamma))?,
            tail_weight,
        )
    }

    pub fn map(&self) -> &Arc<dyn MeasurementMap> {
        &self.map
    }

    pub fn state_dim(&self) -> usize {
        self.map.state_dim()
    }

    pub fn meas_dim(&self) -> usize {
        self.map.meas_dim()
    }

    pub fn body_noise(&self) -> &GaussianDensity {
        &self.body_noise
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn tail_weight(&self) -> f64 {
        self.tail_weight
    }

    /// The same model with the tail weight replaced.
    pub fn with_tail_weight(&self, tail_weight: f64) -> Result<Self> {
        Self::new(
            self.map.clone(),
            self.body_noise.clone(),
            self.tail.clone(),
            tail_weight,
        )
    }

    /// The body as a linear Gaussian sensor, if the map is affine.
    pub fn linear_body(&self) -> Option<LinearGaussianSensor> {
        self.map.as_linear().map(|(a, off)| LinearGaussianSensor {
            matrix: a.clone(),
            offset: off.clone(),
            noise_covariance: self.body_noise.covariance().clone(),
        })
    }

    /// `h^b(x, w) = h(x) + w`.
    pub fn body(&self, x: &Vector, w: &Vector) -> Vector {
        self.map.nominal(x) + w
    }

    pub fn tail_draw(&self, x: &Vector, w: &Vector) -> Vector {
        self.tail.map_noise(&self.map.nominal(x), w)
    }

    pub fn eval_branch(&self, x: &Vector, branch: SensorBranch, w: &Vector) -> Vector {
        match branch {
            SensorBranch::Body => self.body(x, w),
            SensorBranch::Tail => self.tail_draw(x, w),
        }
    }

    /// Mixture components with nonzero weight and their driving noise.
    pub fn branches(&self) -> Vec<(SensorBranch, NoiseBranch)> {
        let mut out = Vec::with_capacity(2);
        if self.tail_weight < 1.0 {
            out.push((
                SensorBranch::Body,
                NoiseBranch::new(1.0 - self.tail_weight, self.body_noise.clone()),
            ));
        }
        if self.tail_weight > 0.0 {
            out.push((
                SensorBranch::Tail,
                NoiseBranch::new(self.tail_weight, self.tail.driving_noise()),
            ));
        }
        out
    }

    pub fn body_logpdf(&self, y: &Vector, x: &Vector) -> Result<f64> {
        self.body_noise.logpdf(&(y - self.map.nominal(x)))
    }

    pub fn tail_logpdf(&self, y: &Vector, x: &Vector) -> Result<f64> {
        self.tail.logpdf(y, &self.map.nominal(x))
    }

    /// `log p(y|x)` of the full mixture.
    pub fn logpdf(&self, y: &Vector, x: &Vector) -> Result<f64> {
        let lb = if self.tail_weight < 1.0 {
            (1.0 - self.tail_weight).ln() + self.body_logpdf(y, x)?
        } else {
            f64::NEG_INFINITY
        };
        let lt = if self.tail_weight > 0.0 {
            self.tail_weight.ln() + self.tail_logpdf(y, x)?
        } else {
            f64::NEG_INFINITY
        };
        Ok(crate::linalg::log_sum_exp(lb, lt))
    }

    /// Draw `y ~ p(y|x)`; the flag is true for tail draws.
    pub fn sample<R: Rng + ?Sized>(&self, x: &Vector, rng: &mut R) -> (Vector, bool) {
        let from_tail = rng.random::<f64>() < self.tail_weight;
        let y = if from_tail {
            let w = self.tail.driving_noise().sample(rng);
            self.tail_draw(x, &w)
        } else {
            let w = self.body_noise.sample(rng);
            self.body(x, &w)
        };
        (y, from_tail)
    }
}
