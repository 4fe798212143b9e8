//! Robust Gaussian filter: a plain Gaussian-filter update run on a nonlinear
//! feature of the measurement instead of the measurement itself.
//!
//! The feature `φ(y) = (c0, c0·y, c2)` holds the body and tail
//! responsibilities of `y` under the predicted belief. Only the body enters
//! the predicted measurement moments, so tails with infinite variance are
//! fine. Far outliers map to `(0, 0, 1)`, which carries no information about
//! the state, and the posterior falls back to the prior.

use rand::Rng;

use crate::distributions::GaussianDensity;
use crate::gf::{self, Backend, GaussianBelief, MomentTriple, NoiseBranch};
use crate::linalg::{log_sum_exp, JitterPolicy};
use crate::models::{LinearGaussianSensor, SensorBranch, Tail, TailedSensorModel, TransitionModel};
use crate::{Error, Matrix, Result, Vector};

/// Everything the feature needs, fixed for one update.
#[derive(Clone, Debug)]
pub struct FeatureContext {
    /// Predicted state mean.
    pub state_mean: Vector,
    /// Predicted body measurement density `N(μ_y^b, Σ_yy^b)`.
    pub body: GaussianDensity,
    pub tail: Tail,
    /// Noise-free measurement at the predicted mean; the tail is centred here.
    pub tail_center: Vector,
    pub weight: f64,
}

impl FeatureContext {
    pub fn new(
        state_mean: Vector,
        body: GaussianDensity,
        tail: Tail,
        tail_center: Vector,
        weight: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Argument(format!("tail weight {weight} outside [0, 1]")));
        }
        Error::check_dim("feature tail", body.dim(), tail.dim())?;
        Error::check_dim("feature tail centre", body.dim(), tail_center.len())?;
        Ok(Self {
            state_mean,
            body,
            tail,
            tail_center,
            weight,
        })
    }

    pub fn meas_dim(&self) -> usize {
        self.body.dim()
    }

    pub fn feature(&self, y: &Vector) -> Result<FeatureVector> {
        feature(y, self)
    }
}

/// `(c0, c1, c2)` with `c0 + c2 = 1` and `c1 = c0·y`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub c0: f64,
    pub c1: Vector,
    pub c2: f64,
}

impl FeatureVector {
    fn from_responsibility(y: &Vector, c0: f64, c2: f64) -> Self {
        Self {
            c0,
            c1: y * c0,
            c2,
        }
    }

    pub fn dim(&self) -> usize {
        self.c1.len() + 2
    }

    /// Stacked as `[c0, c1..., c2]`.
    pub fn as_vector(&self) -> Vector {
        let m = self.c1.len();
        Vector::from_fn(m + 2, |i, _| match i {
            0 => self.c0,
            i if i == m + 1 => self.c2,
            i => self.c1[i - 1],
        })
    }
}

fn check_measurement(y: &Vector) -> Result<()> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("measurement must be finite".into()));
    }
    Ok(())
}

// Features for ω ∈ {0, 1}, which need no densities.
fn degenerate_feature(y: &Vector, weight: f64) -> FeatureVector {
    if weight == 0.0 {
        FeatureVector::from_responsibility(y, 1.0, 0.0)
    } else {
        FeatureVector::from_responsibility(y, 0.0, 1.0)
    }
}

/// Responsibilities of body and tail for `y`, normalized in log space.
///
/// The smaller responsibility is exponentiated and the other one is its
/// complement, so `c0 + c2 == 1` holds exactly and an underflowing body gives
/// exactly `(0, 0, 1)`.
pub fn feature(y: &Vector, ctx: &FeatureContext) -> Result<FeatureVector> {
    Error::check_dim("feature measurement", ctx.meas_dim(), y.len())?;
    check_measurement(y)?;
    if ctx.weight == 0.0 || ctx.weight == 1.0 {
        return Ok(degenerate_feature(y, ctx.weight));
    }
    let lb = (1.0 - ctx.weight).ln() + ctx.body.logpdf(y)?;
    let lt = ctx.weight.ln() + ctx.tail.logpdf(y, &ctx.tail_center)?;
    let (c0, c2) = match (lb.is_finite(), lt.is_finite()) {
        (false, false) => {
            return Err(Error::Numerical(
                "measurement has zero density under both body and tail".into(),
            ))
        }
        (false, true) => (0.0, 1.0),
        (true, false) => (1.0, 0.0),
        (true, true) => {
            let lse = log_sum_exp(lb, lt);
            if lb >= lt {
                let c2 = (lt - lse).exp();
                (1.0 - c2, c2)
            } else {
                let c0 = (lb - lse).exp();
                (c0, 1.0 - c0)
            }
        }
    };
    Ok(FeatureVector::from_responsibility(y, c0, c2))
}

/// Predicted measurement moments of the body `h(x) + w`, `w ~ N(0, R)`.
pub fn predict_body_moments<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    sensor: &TailedSensorModel,
    backend: &Backend,
    rng: &mut R,
) -> Result<MomentTriple> {
    Error::check_dim("sensor state", sensor.state_dim(), belief.dim())?;
    gf::propagate_moments(
        belief,
        |x, w| sensor.body(x, w),
        sensor.body_noise(),
        backend,
        rng,
    )
}

/// Feature context for `sensor` at the predicted `belief`.
pub fn feature_context<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    sensor: &TailedSensorModel,
    backend: &Backend,
    rng: &mut R,
) -> Result<FeatureContext> {
    let moments = predict_body_moments(belief, sensor, backend, rng)?;
    FeatureContext::new(
        belief.mean().clone(),
        GaussianDensity::new(moments.mean, moments.covariance)?,
        sensor.tail().clone(),
        sensor.map().nominal(belief.mean()),
        sensor.tail_weight(),
    )
}

/// `(D, d)` such that `d + D y` is the linear-Gaussian posterior mean for the
/// body `N(y | A x + a, P)`.
///
/// Computed in gain form, `D = Σ Aᵀ (A Σ Aᵀ + P)⁻¹` and `d = μ - D (A μ + a)`,
/// which needs no inverse of `Σ`.
pub fn linear_gain(belief: &GaussianBelief, body: &LinearGaussianSensor) -> Result<(Matrix, Vector)> {
    Error::check_dim("linear body state", belief.dim(), body.matrix.ncols())?;
    let a = &body.matrix;
    let sigma = belief.covariance();
    let s = a * sigma * a.transpose() + &body.noise_covariance;
    let chol = JitterPolicy::none().factor(&s)?;
    let gain = chol.solve(&(a * sigma)).transpose();
    let d = belief.mean() - &gain * (a * belief.mean() + &body.offset);
    Ok((gain, d))
}

/// `c0 (d + D y) + c2 μ_x`: the approximate posterior mean under the full
/// fat-tailed sensor.
pub fn approx_posterior_mean(
    y: &Vector,
    ctx: &FeatureContext,
    gain: &Matrix,
    offset: &Vector,
) -> Result<Vector> {
    Error::check_dim("gain rows", ctx.state_mean.len(), gain.nrows())?;
    Error::check_dim("gain cols", ctx.meas_dim(), gain.ncols())?;
    let f = feature(y, ctx)?;
    Ok((offset + gain * y) * f.c0 + &ctx.state_mean * f.c2)
}

/// Gaussian-filter update with pseudo measurement `φ(y)` and pseudo sensor
/// `φ(h(x, w))`, where `w` follows the full body-plus-tail mixture.
pub fn rgf_update<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    sensor: &TailedSensorModel,
    y: &Vector,
    backend: &Backend,
    rng: &mut R,
) -> Result<GaussianBelief> {
    Error::check_dim("sensor state", sensor.state_dim(), belief.dim())?;
    Error::check_dim("measurement", sensor.meas_dim(), y.len())?;
    check_measurement(y)?;
    let weight = sensor.tail_weight();
    // ω ∈ {0, 1} fixes the responsibilities, so the body moments are skipped
    // and the random stream matches a plain filter update.
    let ctx = if weight > 0.0 && weight < 1.0 {
        Some(feature_context(belief, sensor, backend, rng)?)
    } else {
        None
    };
    let phi = |v: &Vector| -> Result<Vector> {
        match &ctx {
            Some(c) => feature(v, c).map(|f| f.as_vector()),
            None => {
                check_measurement(v)?;
                Ok(degenerate_feature(v, weight).as_vector())
            }
        }
    };
    let target = phi(y)?;
    let (kinds, branches): (Vec<SensorBranch>, Vec<NoiseBranch>) =
        sensor.branches().into_iter().unzip();
    let width = target.len();
    let pseudo = |x: &Vector, k: usize, w: &Vector| {
        phi(&sensor.eval_branch(x, kinds[k], w))
            .unwrap_or_else(|_| Vector::from_element(width, f64::NAN))
    };
    gf::update_branches(belief, pseudo, &branches, &target, backend, rng)
}

/// Prediction followed by [`rgf_update`] when a measurement is present.
pub fn rgf_step<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    transition: &dyn TransitionModel,
    sensor: &TailedSensorModel,
    y: Option<&Vector>,
    backend: &Backend,
    rng: &mut R,
) -> Result<GaussianBelief> {
    let predicted = gf::predict(belief, transition, backend, rng)?;
    match y {
        Some(y) => rgf_update(&predicted, sensor, y, backend, rng),
        None => Ok(predicted),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LinearTransition;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    // μ_x = 0, body N(0, 3), Cauchy tail with scale 10, ω = 0.1
    fn scalar_context(weight: f64) -> FeatureContext {
        FeatureContext::new(
            v1(0.0),
            GaussianDensity::scalar(0.0, 3.0).unwrap(),
            Tail::cauchy(v1(10.0)).unwrap(),
            v1(0.0),
            weight,
        )
        .unwrap()
    }

    fn sensor(weight: f64) -> TailedSensorModel {
        TailedSensorModel::scalar_cauchy(1.0, 10.0, weight).unwrap()
    }

    #[test]
    fn feature_matches_direct_formula() {
        // independent evaluation of b / (b + t)
        let ctx = scalar_context(0.1);
        let f = feature(&v1(0.0), &ctx).unwrap();
        assert_abs_diff_eq!(f.c0, 0.984_876_923_772_763_7, epsilon = 1e-14);
        assert_abs_diff_eq!(f.c2, 0.015_123_076_227_236_28, epsilon = 1e-14);
        let f = feature(&v1(2.5), &ctx).unwrap();
        assert_abs_diff_eq!(f.c0, 0.960_655_241_609_026_5, epsilon = 1e-14);
        assert_abs_diff_eq!(f.c1[0], 2.5 * f.c0, epsilon = 0.0);

        let b = 0.9 * (-0.0_f64).exp() / (2.0 * PI * 3.0).sqrt();
        let t = 0.1 / (10.0 * PI);
        assert_abs_diff_eq!(feature(&v1(0.0), &ctx).unwrap().c0, b / (b + t), epsilon = 1e-14);
    }

    #[test]
    fn degenerate_weights() {
        for y in [-1e6, -3.0, 0.0, 42.0] {
            let f = feature(&v1(y), &scalar_context(0.0)).unwrap();
            assert_eq!(f.as_vector(), Vector::from_row_slice(&[1.0, y, 0.0]));
            let f = feature(&v1(y), &scalar_context(1.0)).unwrap();
            assert_eq!(f.as_vector(), Vector::from_row_slice(&[0.0, 0.0, 1.0]));
        }
    }

    #[test]
    fn extreme_measurement_is_pure_tail() {
        let ctx = scalar_context(0.1);
        for y in [1e6, -1e6, 1e300] {
            let f = feature(&v1(y), &ctx).unwrap();
            assert_eq!(f.as_vector(), Vector::from_row_slice(&[0.0, 0.0, 1.0]));
        }
        assert!(matches!(feature(&v1(f64::INFINITY), &ctx), Err(Error::Argument(_))));
    }

    #[test]
    fn uniform_tail_outside_support() {
        let ctx = FeatureContext::new(
            v1(0.0),
            GaussianDensity::scalar(0.0, 3.0).unwrap(),
            Tail::uniform(v1(-50.0), v1(50.0)).unwrap(),
            v1(0.0),
            0.1,
        )
        .unwrap();
        let f = feature(&v1(60.0), &ctx).unwrap();
        assert_eq!((f.c0, f.c2), (1.0, 0.0));
        // finite y whose body density underflows too
        let far = feature(&v1(1e300), &ctx);
        assert!(matches!(far, Err(Error::Numerical(_))));
    }

    #[test]
    fn body_moments_closed_form() {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let m = predict_body_moments(&belief, &sensor(0.1), &Backend::exact_linear(), &mut rng()).unwrap();
        assert_abs_diff_eq!(m.mean[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.covariance[(0, 0)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_form_matches_precision_form() {
        let belief = GaussianBelief::new(
            Vector::from_row_slice(&[0.5, -1.0]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let body = LinearGaussianSensor::new(
            Matrix::from_row_slice(1, 2, &[1.0, 2.0]),
            v1(0.25),
            Matrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        let (gain, d) = linear_gain(&belief, &body).unwrap();
        let si = belief.covariance().clone().try_inverse().unwrap();
        let pi = body.noise_covariance.clone().try_inverse().unwrap();
        let a = &body.matrix;
        let prec = (&si + a.transpose() * &pi * a).try_inverse().unwrap();
        let gain_ref = &prec * a.transpose() * &pi;
        let d_ref = &prec * (&si * belief.mean() - a.transpose() * &pi * &body.offset);
        assert!((gain - gain_ref).amax() < 1e-12);
        assert!((d - d_ref).amax() < 1e-12);
    }

    fn example_context(weight: f64) -> (FeatureContext, Matrix, Vector) {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let s = sensor(weight);
        let ctx = feature_context(&belief, &s, &Backend::exact_linear(), &mut rng()).unwrap();
        let (gain, d) = linear_gain(&belief, &s.linear_body().unwrap()).unwrap();
        (ctx, gain, d)
    }

    #[test]
    fn approx_mean_limits() {
        let (ctx, gain, d) = example_context(0.0);
        let m = approx_posterior_mean(&v1(1.5), &ctx, &gain, &d).unwrap();
        assert_abs_diff_eq!(m[0], 1.0, epsilon = 1e-14);

        let (ctx, gain, d) = example_context(0.1);
        let m = approx_posterior_mean(&v1(20.0), &ctx, &gain, &d).unwrap();
        assert!(m[0].abs() < 0.05);
        let c0 = feature(&v1(1.0), &ctx).unwrap().c0;
        let m = approx_posterior_mean(&v1(1.0), &ctx, &gain, &d).unwrap();
        assert_abs_diff_eq!(m[0], 2.0 / 3.0 * c0, epsilon = 1e-14);
    }

    // Exact posterior mean by trapezoid quadrature over x ∈ [-12, 12]:
    // prior N(0, 2), likelihood (1 - ω) N(y | x, 1) + ω t(y).
    fn quadrature_mean(y: f64, weight: f64, tail_density: impl Fn(f64) -> f64) -> f64 {
        let n = 20_000;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let prior = (-x * x / 4.0).exp() / (4.0 * PI).sqrt();
            let body = (-(y - x) * (y - x) / 2.0).exp() / (2.0 * PI).sqrt();
            let lik = (1.0 - weight) * body + weight * tail_density(y);
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            num += w * x * prior * lik;
            den += w * prior * lik;
        }
        num / den
    }

    #[test]
    fn approx_mean_against_quadrature() {
        let (ctx, gain, d) = example_context(0.1);
        let cauchy = |y: f64| 1.0 / (PI * 10.0 * (1.0 + (y / 10.0).powi(2)));
        for i in 0..=120 {
            let y = -30.0 + 0.5 * i as f64;
            let exact = quadrature_mean(y, 0.1, cauchy);
            let approx = approx_posterior_mean(&v1(y), &ctx, &gain, &d).unwrap()[0];
            assert!((exact - approx).abs() < 0.05, "y={y}: {exact} vs {approx}");
        }
    }

    #[test]
    fn uniform_tail_is_exact() {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let s = TailedSensorModel::linear(
            &LinearGaussianSensor::new(Matrix::identity(1, 1), v1(0.0), Matrix::identity(1, 1)).unwrap(),
            Tail::uniform(v1(-40.0), v1(40.0)).unwrap(),
            0.1,
        )
        .unwrap();
        let ctx = feature_context(&belief, &s, &Backend::exact_linear(), &mut rng()).unwrap();
        let (gain, d) = linear_gain(&belief, &s.linear_body().unwrap()).unwrap();
        for y in [-30.0, -7.5, -2.0, 0.0, 0.5, 3.0, 6.0, 12.0, 35.0] {
            let exact = quadrature_mean(y, 0.1, |_| 1.0 / 80.0);
            let approx = approx_posterior_mean(&v1(y), &ctx, &gain, &d).unwrap()[0];
            assert!((exact - approx).abs() < 1e-6, "y={y}: {exact} vs {approx}");
        }
    }

    #[test]
    fn omega_zero_reduces_to_gf() {
        let belief = GaussianBelief::scalar(0.3, 2.0).unwrap();
        let s = sensor(0.0);
        for backend in [Backend::exact_linear(), Backend::unscented(), Backend::monte_carlo(1000)] {
            for y in [-4.0, 0.0, 1.0, 30.0] {
                let r = rgf_update(&belief, &s, &v1(y), &backend, &mut rng()).unwrap();
                let g = gf::update(&belief, |x, w| x + w, s.body_noise(), &v1(y), &backend, &mut rng()).unwrap();
                assert!((r.mean() - g.mean()).amax() < 1e-8, "{} y={y}", backend.name());
                assert!((r.covariance() - g.covariance()).amax() < 1e-8, "{} y={y}", backend.name());
            }
        }
    }

    #[test]
    fn omega_one_keeps_prior() {
        let belief = GaussianBelief::scalar(0.3, 2.0).unwrap();
        let r = rgf_update(&belief, &sensor(1.0), &v1(5.0), &Backend::unscented(), &mut rng()).unwrap();
        assert_eq!(r.mean()[0], 0.3);
        assert_abs_diff_eq!(r.covariance()[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_linear_rejects_nonlinear_feature() {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let r = rgf_update(&belief, &sensor(0.1), &v1(1.0), &Backend::exact_linear(), &mut rng());
        assert!(matches!(r, Err(Error::BackendMisuse(_))));
    }

    #[test]
    fn outlier_and_inlier_updates() {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let s = sensor(0.1);
        // 1000 samples leave a standard error of about 0.2 on the y = 30 mean
        for backend in [Backend::unscented(), Backend::monte_carlo(100_000)] {
            let out = rgf_update(&belief, &s, &v1(30.0), &backend, &mut rng()).unwrap();
            assert!(out.mean()[0].abs() < 0.1, "{}: {}", backend.name(), out.mean()[0]);
            let inl = rgf_update(&belief, &s, &v1(1.0), &backend, &mut rng()).unwrap();
            assert!(inl.mean()[0] > 0.3 && inl.mean()[0] < 0.9, "{}: {}", backend.name(), inl.mean()[0]);
            // the update never increases uncertainty, whatever y is
            assert!(out.covariance()[(0, 0)] <= 2.0 + 1e-12);
            assert_eq!(out.covariance(), inl.covariance());
        }
    }

    #[test]
    fn redescending_and_bounded() {
        let belief = GaussianBelief::scalar(0.0, 2.0).unwrap();
        let s = sensor(0.1);
        let b = Backend::unscented();
        let mean = |y: f64| rgf_update(&belief, &s, &v1(y), &b, &mut rng()).unwrap().mean()[0];
        let ys: Vec<f64> = (0..=90).map(|i| 10.0 + i as f64).collect();
        let means: Vec<f64> = ys.iter().map(|&y| mean(y)).collect();
        for i in 0..means.len() {
            for j in 0..=i {
                assert!(means[i].abs() <= means[j].abs() + 0.05);
            }
        }
        assert!(mean(100.0).abs() < 0.05);
        let bound = 2.0 * 2.0_f64.sqrt();
        for k in -60..=60 {
            let y = (k as f64).signum() * 10f64.powf((k as f64).abs() / 10.0);
            assert!(mean(y).abs() < bound, "y={y}");
        }
        assert!(mean(1e6).abs() < bound && mean(-1e6).abs() < bound);
    }

    #[test]
    fn symmetric_step() {
        let g = LinearTransition::random_walk(1.0);
        let belief = GaussianBelief::scalar(0.0, 1.0).unwrap();
        let post = rgf_step(&belief, &g, &sensor(0.1), Some(&v1(0.0)), &Backend::unscented(), &mut rng()).unwrap();
        assert_abs_diff_eq!(post.mean()[0], 0.0, epsilon = 1e-12);
        assert!(post.covariance()[(0, 0)] < 2.0);
        let pred = rgf_step(&belief, &g, &sensor(0.1), None, &Backend::unscented(), &mut rng()).unwrap();
        assert_abs_diff_eq!(pred.covariance()[(0, 0)], 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn feature_identities(
            mu in -50.0..50.0f64,
            var in 0.01..100.0f64,
            gamma in 0.1..100.0f64,
            center in -50.0..50.0f64,
            weight in 0.0..=1.0f64,
            y in prop_oneof![-1e3..1e3f64, -1e8..1e8f64],
        ) {
            let ctx = FeatureContext::new(
                v1(center),
                GaussianDensity::scalar(mu, var).unwrap(),
                Tail::cauchy(v1(gamma)).unwrap(),
                v1(center),
                weight,
            ).unwrap();
            let f = feature(&v1(y), &ctx).unwrap();
            prop_assert_eq!(f.c0 + f.c2, 1.0);
            prop_assert_eq!(f.c1[0], y * f.c0);
            prop_assert!((0.0..=1.0).contains(&f.c0));
            prop_assert!((0.0..=1.0).contains(&f.c2));
        }
    }
}
