//! Embedded invariant checks run by `rgf-bench selftest`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distributions::GaussianDensity;
use crate::gf::{self, Backend, GaussianBelief};
use crate::linalg::JitterPolicy;
use crate::models::{LinearGaussianSensor, Tail, TailedSensorModel};
use crate::robust::{approx_posterior_mean, feature, feature_context, linear_gain, rgf_update, FeatureContext};
use crate::{Matrix, Result, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Jitter policy handed to every backend in the checks.
#[derive(Clone, Debug, Default)]
pub struct SelftestOptions {
    pub jitter: JitterPolicy,
}

pub const CHECK_NAMES: [&str; 5] = [
    "feature-normalization",
    "kf-equivalence",
    "omega-zero-reduction",
    "redescending-mean",
    "optimal-mean-oracle",
];

pub fn run_selftest(opts: &SelftestOptions) -> Vec<CheckResult> {
    let checks: [(&'static str, &'static str, fn(&SelftestOptions) -> Result<(bool, String)>); 5] = [
        ("feature-normalization", "exact", feature_normalization),
        ("kf-equivalence", "1e-10 exact-linear, 1e-8 unscented (relative)", kf_equivalence),
        ("omega-zero-reduction", "1e-8", omega_zero_reduction),
        ("redescending-mean", "0.05", redescending_mean),
        ("optimal-mean-oracle", "0.05", optimal_mean_oracle),
    ];
    checks
        .into_iter()
        .map(|(name, tolerance, check)| {
            let (passed, detail) = match check(opts) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                tolerance,
                passed,
                detail,
            }
        })
        .collect()
}

fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn feature_normalization(_: &SelftestOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0usize;
    let draws = 2000;
    for _ in 0..draws {
        let ctx = FeatureContext::new(
            v1(rng.random_range(-20.0..20.0)),
            GaussianDensity::scalar(rng.random_range(-20.0..20.0), rng.random_range(0.01..50.0))?,
            Tail::cauchy(v1(rng.random_range(0.1..50.0)))?,
            v1(rng.random_range(-20.0..20.0)),
            rng.random_range(0.0..=1.0),
        )?;
        let y = rng.random_range(-1e4..1e4);
        let f = feature(&v1(y), &ctx)?;
        let ok = f.c0 + f.c2 == 1.0
            && f.c1[0] == y * f.c0
            && (0.0..=1.0).contains(&f.c0)
            && (0.0..=1.0).contains(&f.c2);
        worst += usize::from(!ok);
    }
    let extreme = feature(&v1(1e6), &FeatureContext::new(
        v1(0.0),
        GaussianDensity::scalar(0.0, 3.0)?,
        Tail::cauchy(v1(10.0))?,
        v1(0.0),
        0.1,
    )?)?;
    let extreme_ok = extreme.as_vector() == Vector::from_row_slice(&[0.0, 0.0, 1.0]);
    Ok((
        worst == 0 && extreme_ok,
        format!("{worst} of {draws} draws violated; y=1e6 -> {:?}", extreme.as_vector().as_slice()),
    ))
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let l = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &l * l.transpose() + Matrix::identity(n, n) * 0.1
}

// Textbook Kalman update in Joseph form.
fn kalman(m: &Vector, p: &Matrix, s: &LinearGaussianSensor, y: &Vector) -> Option<(Vector, Matrix)> {
    let h = &s.matrix;
    let innov = h * p * h.transpose() + &s.noise_covariance;
    let k = p * h.transpose() * innov.try_inverse()?;
    let mean = m + &k * (y - h * m - &s.offset);
    let i_kh = Matrix::identity(m.len(), m.len()) - &k * h;
    let cov = &i_kh * p * i_kh.transpose() + &k * &s.noise_covariance * k.transpose();
    Some((mean, cov))
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn kf_equivalence(opts: &SelftestOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_exact, mut worst_ut) = (0.0_f64, 0.0_f64);
    for trial in 0..50 {
        let n = 1 + trial % 4;
        let m = 1 + (trial / 4) % 3;
        let mean = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = random_spd(n, &mut rng);
        let sensor = LinearGaussianSensor::new(
            Matrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
            random_spd(m, &mut rng),
        )?;
        let y = Vector::from_fn(m, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let Some((km, kc)) = kalman(&mean, &cov, &sensor, &y) else {
            continue;
        };
        let belief = GaussianBelief::new(mean, cov)?;
        let noise = sensor.noise()?;
        let map = sensor.map();
        let f = |x: &Vector, w: &Vector| crate::models::MeasurementMap::nominal(&map, x) + w;
        for (backend, worst) in [
            (Backend::exact_linear(), &mut worst_exact),
            (Backend::unscented(), &mut worst_ut),
        ] {
            let backend = backend.with_jitter(opts.jitter.clone());
            let post = gf::update(&belief, f, &noise, &y, &backend, &mut rng)?;
            let e = rel_err(&Matrix::from_column_slice(km.len(), 1, post.mean().as_slice()), &Matrix::from_column_slice(km.len(), 1, km.as_slice()))
                .max(rel_err(post.covariance(), &kc));
            *worst = worst.max(e);
        }
    }
    Ok((
        worst_exact <= 1e-10 && worst_ut <= 1e-8,
        format!("worst relative error: exact-linear {worst_exact:.2e}, unscented {worst_ut:.2e}"),
    ))
}

fn omega_zero_reduction(opts: &SelftestOptions) -> Result<(bool, String)> {
    let backend = Backend::unscented().with_jitter(opts.jitter.clone());
    let sensor = TailedSensorModel::scalar_cauchy(1.0, 10.0, 0.0)?;
    let mut worst = 0.0_f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for y in [-50.0, -3.0, 0.0, 0.7, 12.0, 1e4] {
        let belief = GaussianBelief::scalar(0.4, 2.0)?;
        let r = rgf_update(&belief, &sensor, &v1(y), &backend, &mut rng)?;
        let g = gf::update(&belief, |x, w| x + w, sensor.body_noise(), &v1(y), &backend, &mut rng)?;
        worst = worst
            .max((r.mean() - g.mean()).amax())
            .max((r.covariance() - g.covariance()).amax());
    }
    Ok((worst <= 1e-8, format!("max deviation {worst:.2e}")))
}

fn redescending_mean(opts: &SelftestOptions) -> Result<(bool, String)> {
    let backend = Backend::unscented().with_jitter(opts.jitter.clone());
    let sensor = TailedSensorModel::scalar_cauchy(1.0, 10.0, 0.1)?;
    let belief = GaussianBelief::scalar(0.0, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut means = Vec::new();
    for y in (10..=100).step_by(5) {
        means.push(rgf_update(&belief, &sensor, &v1(y as f64), &backend, &mut rng)?.mean()[0].abs());
    }
    let mut violation = 0.0_f64;
    for i in 0..means.len() {
        for j in 0..i {
            violation = violation.max(means[i] - means[j]);
        }
    }
    let last = *means.last().expect("non-empty");
    Ok((
        violation <= 0.05 && last < 0.05,
        format!("largest increase {violation:.2e}, |mean(100)| = {last:.2e}"),
    ))
}

fn optimal_mean_oracle(opts: &SelftestOptions) -> Result<(bool, String)> {
    let backend = Backend::exact_linear().with_jitter(opts.jitter.clone());
    let sensor = TailedSensorModel::scalar_cauchy(1.0, 10.0, 0.1)?;
    let belief = GaussianBelief::scalar(0.0, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ctx = feature_context(&belief, &sensor, &backend, &mut rng)?;
    let body = sensor.linear_body().expect("linear body");
    let (gain, offset) = linear_gain(&belief, &body)?;
    let mut worst = 0.0_f64;
    for i in 0..=60 {
        let y = -30.0 + i as f64;
        let approx = approx_posterior_mean(&v1(y), &ctx, &gain, &offset)?[0];
        worst = worst.max((approx - exact_mean(y)).abs());
    }
    Ok((worst <= 0.05, format!("max deviation {worst:.3e} over y in [-30, 30]")))
}

// Posterior mean for prior N(0, 2) and likelihood 0.9 N(y|x,1) + 0.1 C(y|0,10),
// trapezoid rule on [-12, 12].
fn exact_mean(y: f64) -> f64 {
    let n = 10_000;
    let h = 24.0 / n as f64;
    let tail = 0.1 / (PI * 10.0 * (1.0 + (y / 10.0).powi(2)));
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let x = -12.0 + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let p = (-x * x / 4.0).exp() * (0.9 * (-(y - x).powi(2) / 2.0).exp() / (2.0 * PI).sqrt() + tail);
        num += w * x * p;
        den += w * p;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let results = run_selftest(&SelftestOptions::default());
        assert_eq!(results.iter().map(|r| r.name).collect::<Vec<_>>(), CHECK_NAMES);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn broken_jitter_fails_reduction() {
        let results = run_selftest(&SelftestOptions {
            jitter: JitterPolicy::none(),
        });
        let r = results.iter().find(|r| r.name == "omega-zero-reduction").unwrap();
        assert!(!r.passed);
    }
}
