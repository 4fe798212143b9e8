//! Densities and samplers used by sensor bodies, tails and the simulators.
//!
//! All densities are evaluated in log space. Samplers take the random source
//! explicitly so that every draw is reproducible from a seed.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Dyn};
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};

use crate::linalg::{check_covariance, psd_sqrt, relative_asymmetry, JitterPolicy};
use crate::{Error, Matrix, Result, Vector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Multivariate normal density `N(mean, covariance)`.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    mean: Vector,
    covariance: Matrix,
    // exact square root, used for sampling and sigma points
    sqrt_cov: Matrix,
    // jittered factor used for density evaluation
    factor: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianDensity {
    pub fn new(mean: Vector, covariance: Matrix) -> Result<Self> {
        Error::check_dim("gaussian covariance rows", mean.len(), covariance.nrows())?;
        Error::check_dim("gaussian covariance cols", mean.len(), covariance.ncols())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("gaussian mean must be finite".into()));
        }
        if relative_asymmetry(&covariance) > 1e-12 {
            return Err(Error::Argument("gaussian covariance is not symmetric".into()));
        }
        check_covariance(&covariance, 1e-12, 1e-10, "gaussian covariance")?;
        let sqrt_cov = psd_sqrt(&covariance)?;
        let factor = JitterPolicy::density().factor(&covariance)?;
        let log_det = 2.0 * factor.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            covariance,
            sqrt_cov,
            factor,
            log_det,
        })
    }

    /// `N(0, I)` of the given dimension.
    pub fn standard(dim: usize) -> Self {
        Self::new(Vector::zeros(dim), Matrix::identity(dim, dim))
            .expect("identity covariance is valid")
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Matrix::from_element(1, 1, variance))
    }

    /// Zero-mean density with a diagonal covariance.
    pub fn zero_mean_diagonal(variances: &[f64]) -> Result<Self> {
        let d = Vector::from_row_slice(variances);
        Self::new(Vector::zeros(d.len()), Matrix::from_diagonal(&d))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    /// A matrix `S` with `S Sᵀ = Σ`, exact also for singular `Σ`.
    pub fn sqrt_covariance(&self) -> &Matrix {
        &self.sqrt_cov
    }

    pub fn logpdf(&self, x: &Vector) -> Result<f64> {
        Error::check_dim("gaussian logpdf", self.dim(), x.len())?;
        let diff = x - &self.mean;
        let z = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det + z.norm_squared()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        &self.mean + &self.sqrt_cov * z
    }
}

/// Product of independent one-dimensional Cauchy densities.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyDensity {
    location: Vector,
    scale: Vector,
}

impl CauchyDensity {
    pub fn new(location: Vector, scale: Vector) -> Result<Self> {
        Error::check_dim("cauchy scale", location.len(), scale.len())?;
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Argument("cauchy scales must be positive and finite".into()));
        }
        Ok(Self { location, scale })
    }

    pub fn scalar(location: f64, scale: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, location), Vector::from_element(1, scale))
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &Vector {
        &self.location
    }

    pub fn scale(&self) -> &Vector {
        &self.scale
    }

    pub fn logpdf(&self, x: &Vector) -> Result<f64> {
        Error::check_dim("cauchy logpdf", self.dim(), x.len())?;
        Ok(x.iter()
            .zip(self.location.iter())
            .zip(self.scale.iter())
            .map(|((&xi, &mu), &gamma)| {
                let u = ((xi - mu) / gamma).abs();
                // ln(1 + u²) without overflowing u²
                let tail = if u > 1e100 {
                    2.0 * u.ln() + (u * u).recip().ln_1p()
                } else {
                    (u * u).ln_1p()
                };
                -(PI * gamma).ln() - tail
            })
            .sum())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let unit = Cauchy::new(0.0, 1.0).expect("unit cauchy");
        Vector::from_fn(self.dim(), |i, _| {
            self.location[i] + self.scale[i] * unit.sample(rng)
        })
    }
}

/// Two-component mixture `(1 - weight) a + weight b`.
#[derive(Clone, Debug)]
pub struct MixtureNoise {
    weight: f64,
    component_a: Density,
    component_b: Density,
}

impl MixtureNoise {
    pub fn new(weight: f64, component_a: Density, component_b: Density) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Argument(format!(
                "mixture weight {weight} outside [0, 1]"
            )));
        }
        Error::check_dim("mixture components", component_a.dim(), component_b.dim())?;
        Ok(Self {
            weight,
            component_a,
            component_b,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn component_a(&self) -> &Density {
        &self.component_a
    }

    pub fn component_b(&self) -> &Density {
        &self.component_b
    }

    pub fn dim(&self) -> usize {
        self.component_a.dim()
    }

    pub fn logpdf(&self, x: &Vector) -> Result<f64> {
        let la = if self.weight < 1.0 {
            (1.0 - self.weight).ln() + self.component_a.logpdf(x)?
        } else {
            f64::NEG_INFINITY
        };
        let lb = if self.weight > 0.0 {
            self.weight.ln() + self.component_b.logpdf(x)?
        } else {
            f64::NEG_INFINITY
        };
        Ok(crate::linalg::log_sum_exp(la, lb))
    }

    /// Draws a sample and reports whether it came from component `b`.
    pub fn sample_tagged<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vector, bool) {
        let from_b = rng.random::<f64>() < self.weight;
        let x = if from_b {
            self.component_b.sample(rng)
        } else {
            self.component_a.sample(rng)
        };
        (x, from_b)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.sample_tagged(rng).0
    }
}

/// Any of the supported densities.
#[derive(Clone, Debug)]
pub enum Density {
    Gaussian(GaussianDensity),
    Cauchy(CauchyDensity),
    Mixture(Box<MixtureNoise>),
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Gaussian(d) => d.dim(),
            Density::Cauchy(d) => d.dim(),
            Density::Mixture(d) => d.dim(),
        }
    }

    pub fn logpdf(&self, x: &Vector) -> Result<f64> {
        match self {
            Density::Gaussian(d) => d.logpdf(x),
            Density::Cauchy(d) => d.logpdf(x),
            Density::Mixture(d) => d.logpdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            Density::Gaussian(d) => d.sample(rng),
            Density::Cauchy(d) => d.sample(rng),
            Density::Mixture(d) => d.sample(rng),
        }
    }
}

impl From<GaussianDensity> for Density {
    fn from(d: GaussianDensity) -> Self {
        Density::Gaussian(d)
    }
}

impl From<CauchyDensity> for Density {
    fn from(d: CauchyDensity) -> Self {
        Density::Cauchy(d)
    }
}

impl From<MixtureNoise> for Density {
    fn from(d: MixtureNoise) -> Self {
        Density::Mixture(Box::new(d))
    }
}
