//! Moment-matching Gaussian filter.
//!
//! Prediction and update both reduce to the moments `(μ_y, Σ_yy, Σ_xy)` of a
//! function `y = f(x, w)` with `x ~ N(μ_x, Σ_xx)` and `w` Gaussian. The noise
//! may be a weighted set of [`NoiseBranch`]es; the function receives the
//! branch index, which lets a single call cover mixture sensors such as a
//! body plus a tail. Noise is always an explicit argument of `f`, never
//! assumed additive.
//!
//! Three integration methods are provided:
//!
//! - exact-linear: closed form for affine `f`; the affine form is recovered by
//!   probing `f` and verified at extra points,
//! - unscented: scaled sigma points on the augmented `(x, w)` vector,
//! - Monte Carlo: joint samples with `N - 1` covariance estimates. Draws come
//!   in antithetic pairs `(x, w)`, `(2μ_x - x, 2μ_w - w)` sharing one mixture
//!   branch, and the state draws are whitened so their sample mean and
//!   covariance equal the belief exactly. Whitening keeps the joint `(x, y)`
//!   sample covariance PSD together with the belief covariance; pairing
//!   cancels odd-order sampling noise, which otherwise dominates the
//!   cross-covariance of saturating features when the tail weight is small.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::GaussianDensity;
use crate::linalg::{check_covariance, min_eigenvalue, psd_sqrt, symmetrize, JitterPolicy};
use crate::models::TransitionModel;
use crate::{Error, Matrix, Result, Vector};

/// `N(mean, covariance)` over the state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    mean: Vector,
    covariance: Matrix,
}

impl GaussianBelief {
    pub fn new(mean: Vector, covariance: Matrix) -> Result<Self> {
        Error::check_dim("belief covariance rows", mean.len(), covariance.nrows())?;
        Error::check_dim("belief covariance cols", mean.len(), covariance.ncols())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("belief mean is not finite".into()));
        }
        check_covariance(&covariance, 1e-10, 1e-10, "belief covariance")?;
        Ok(Self { mean, covariance })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Matrix::from_element(1, 1, variance))
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

    pub fn std_devs(&self) -> Vector {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    pub fn into_parts(self) -> (Vector, Matrix) {
        (self.mean, self.covariance)
    }
}

impl From<&GaussianBelief> for GaussianDensity {
    fn from(b: &GaussianBelief) -> Self {
        GaussianDensity::new(b.mean.clone(), b.covariance.clone())
            .expect("belief covariance is validated")
    }
}

/// Predicted output moments: mean, covariance and state/output cross-covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTriple {
    pub mean: Vector,
    pub covariance: Matrix,
    /// `Σ_xy`, state_dim × output_dim.
    pub cross: Matrix,
}

/// Scaled unscented transform parameters. `kappa = None` means `3 - n_aug`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnscentedParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Option<f64>,
}

impl Default for UnscentedParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    ExactLinear,
    Unscented(UnscentedParams),
    MonteCarlo { samples: usize },
}

/// Integration method plus the jitter policy used for innovation covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct Backend {
    pub method: Method,
    pub jitter: JitterPolicy,
}

pub const DEFAULT_MC_SAMPLES: usize = 1000;

impl Backend {
    pub fn exact_linear() -> Self {
        Self {
            method: Method::ExactLinear,
            jitter: JitterPolicy::default(),
        }
    }

    pub fn unscented() -> Self {
        Self {
            method: Method::Unscented(UnscentedParams::default()),
            jitter: JitterPolicy::default(),
        }
    }

    pub fn monte_carlo(samples: usize) -> Self {
        Self {
            method: Method::MonteCarlo { samples },
            jitter: JitterPolicy::default(),
        }
    }

    pub fn with_jitter(mut self, jitter: JitterPolicy) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.method {
            Method::ExactLinear => "exact-linear",
            Method::Unscented(_) => "unscented",
            Method::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

impl Default for Backend {
    fn default() -> Self {
        Self::monte_carlo(DEFAULT_MC_SAMPLES)
    }
}

/// One mixture component of the noise driving a propagated function.
#[derive(Clone, Debug)]
pub struct NoiseBranch {
    pub weight: f64,
    pub noise: GaussianDensity,
}

impl NoiseBranch {
    pub fn new(weight: f64, noise: GaussianDensity) -> Self {
        Self { weight, noise }
    }

    pub fn single(noise: GaussianDensity) -> Vec<Self> {
        vec![Self::new(1.0, noise)]
    }
}

fn normalized_weights(branches: &[NoiseBranch]) -> Result<Vec<f64>> {
    if branches.is_empty() {
        return Err(Error::Argument("at least one noise branch is required".into()));
    }
    if branches.iter().any(|b| !(b.weight >= 0.0 && b.weight.is_finite())) {
        return Err(Error::Argument("branch weights must be finite and non-negative".into()));
    }
    let total: f64 = branches.iter().map(|b| b.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Argument("branch weights sum to zero".into()));
    }
    Ok(branches.iter().map(|b| b.weight / total).collect())
}

/// Moments of `y = f(x, k, w)` with `x ~ belief`, branch `k` chosen with
/// probability `branches[k].weight` and `w ~ branches[k].noise`.
pub fn propagate_branches<F, R>(
    belief: &GaussianBelief,
    f: F,
    branches: &[NoiseBranch],
    backend: &Backend,
    rng: &mut R,
) -> Result<MomentTriple>
where
    F: Fn(&Vector, usize, &Vector) -> Vector,
    R: Rng + ?Sized,
{
    let weights = normalized_weights(branches)?;
    let parts = match &backend.method {
        Method::ExactLinear => branches
            .iter()
            .enumerate()
            .map(|(k, b)| exact_linear_branch(belief, &f, k, &b.noise))
            .collect::<Result<Vec<_>>>()?,
        Method::Unscented(params) => branches
            .iter()
            .enumerate()
            .map(|(k, b)| unscented_branch(belief, &f, k, &b.noise, params))
            .collect::<Result<Vec<_>>>()?,
        Method::MonteCarlo { samples } => {
            return monte_carlo(belief, &f, branches, &weights, *samples, rng);
        }
    };
    combine(&weights, parts)
}

/// Moments of `y = f(x, w)` with a single Gaussian noise.
pub fn propagate_moments<F, R>(
    belief: &GaussianBelief,
    f: F,
    noise: &GaussianDensity,
    backend: &Backend,
    rng: &mut R,
) -> Result<MomentTriple>
where
    F: Fn(&Vector, &Vector) -> Vector,
    R: Rng + ?Sized,
{
    propagate_branches(
        belief,
        |x, _, w| f(x, w),
        &NoiseBranch::single(noise.clone()),
        backend,
        rng,
    )
}

// Law of total moments over branches. Every branch shares the state mean, so
// the cross-covariance needs no between-branch correction.
fn combine(weights: &[f64], parts: Vec<MomentTriple>) -> Result<MomentTriple> {
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    let m = parts[0].mean.len();
    let n = parts[0].cross.nrows();
    let mut mean = Vector::zeros(m);
    for (w, p) in weights.iter().zip(&parts) {
        Error::check_dim("branch output", m, p.mean.len())?;
        mean += *w * &p.mean;
    }
    let mut covariance = Matrix::zeros(m, m);
    let mut cross = Matrix::zeros(n, m);
    for (w, p) in weights.iter().zip(&parts) {
        let d = &p.mean - &mean;
        covariance += *w * (&p.covariance + &d * d.transpose());
        cross += *w * &p.cross;
    }
    symmetrize(&mut covariance);
    Ok(MomentTriple {
        mean,
        covariance,
        cross,
    })
}

fn check_output(y: &Vector, expected: Option<usize>) -> Result<()> {
    if let Some(m) = expected {
        Error::check_dim("propagated output", m, y.len())?;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("propagated function returned a non-finite value".into()));
    }
    Ok(())
}

fn exact_linear_branch<F>(
    belief: &GaussianBelief,
    f: &F,
    k: usize,
    noise: &GaussianDensity,
) -> Result<MomentTriple>
where
    F: Fn(&Vector, usize, &Vector) -> Vector,
{
    let nx = belief.dim();
    let nw = noise.dim();
    let mx = belief.mean();
    let mw = noise.mean();
    let y0 = f(mx, k, mw);
    check_output(&y0, None)?;
    let m = y0.len();

    let mut a = Matrix::zeros(m, nx);
    for i in 0..nx {
        let mut x = mx.clone();
        x[i] += 1.0;
        let y = f(&x, k, mw);
        check_output(&y, Some(m))?;
        a.set_column(i, &(y - &y0));
    }
    let mut b = Matrix::zeros(m, nw);
    for j in 0..nw {
        let mut w = mw.clone();
        w[j] += 1.0;
        let y = f(mx, k, &w);
        check_output(&y, Some(m))?;
        b.set_column(j, &(y - &y0));
    }

    // verify affinity on mirrored and mixed probes
    let scale = 1.0 + y0.amax() + a.amax() + b.amax();
    let tol = 1e-8 * scale;
    let predict = |dx: &Vector, dw: &Vector| &y0 + &a * dx + &b * dw;
    let mut probes: Vec<(Vector, Vector)> = Vec::new();
    for i in 0..nx {
        let mut dx = Vector::zeros(nx);
        dx[i] = -1.0;
        probes.push((dx.clone(), Vector::zeros(nw)));
        dx[i] = 2.5;
        probes.push((dx, Vector::zeros(nw)));
    }
    for j in 0..nw {
        let mut dw = Vector::zeros(nw);
        dw[j] = -1.0;
        probes.push((Vector::zeros(nx), dw.clone()));
        dw[j] = 2.5;
        probes.push((Vector::zeros(nx), dw));
    }
    probes.push((
        Vector::from_fn(nx, |i, _| if i % 2 == 0 { 0.75 } else { -1.25 }),
        Vector::from_fn(nw, |j, _| if j % 2 == 0 { -0.5 } else { 1.5 }),
    ));
    for (dx, dw) in &probes {
        let y = f(&(mx + dx), k, &(mw + dw));
        check_output(&y, Some(m))?;
        if (y - predict(dx, dw)).amax() > tol {
            return Err(Error::BackendMisuse(
                "exact-linear backend requires an affine function".into(),
            ));
        }
    }

    let sigma = belief.covariance();
    let mut covariance = &a * sigma * a.transpose() + &b * noise.covariance() * b.transpose();
    symmetrize(&mut covariance);
    Ok(MomentTriple {
        mean: y0,
        covariance,
        cross: sigma * a.transpose(),
    })
}

fn unscented_branch<F>(
    belief: &GaussianBelief,
    f: &F,
    k: usize,
    noise: &GaussianDensity,
    params: &UnscentedParams,
) -> Result<MomentTriple>
where
    F: Fn(&Vector, usize, &Vector) -> Vector,
{
    let nx = belief.dim();
    let nw = noise.dim();
    let n = (nx + nw) as f64;
    let kappa = params.kappa.unwrap_or(3.0 - n);
    let alpha2 = params.alpha * params.alpha;
    let lambda = alpha2 * (n + kappa) - n;
    let c = n + lambda;
    if !(c > 0.0) {
        return Err(Error::Argument(format!(
            "unscented spread n + lambda = {c} must be positive"
        )));
    }
    let wm0 = lambda / c;
    let wc0 = wm0 + (1.0 - alpha2 + params.beta);
    let wi = 0.5 / c;
    let spread = c.sqrt();

    let sx = psd_sqrt(belief.covariance())?;
    let sw = noise.sqrt_covariance();
    let mx = belief.mean();
    let mw = noise.mean();

    // (x offset, w offset, mean weight, covariance weight)
    let mut points: Vec<(Vector, Vector, f64, f64)> = Vec::with_capacity(2 * (nx + nw) + 1);
    points.push((Vector::zeros(nx), Vector::zeros(nw), wm0, wc0));
    for j in 0..nx {
        let col = sx.column(j) * spread;
        points.push((col.clone_owned(), Vector::zeros(nw), wi, wi));
        points.push((-col, Vector::zeros(nw), wi, wi));
    }
    for j in 0..nw {
        let col = sw.column(j) * spread;
        points.push((Vector::zeros(nx), col.clone_owned(), wi, wi));
        points.push((Vector::zeros(nx), -col, wi, wi));
    }

    let mut outputs = Vec::with_capacity(points.len());
    for (dx, dw, _, _) in &points {
        let y = f(&(mx + dx), k, &(mw + dw));
        check_output(&y, outputs.first().map(|o: &Vector| o.len()))?;
        outputs.push(y);
    }
    let m = outputs[0].len();
    let mut mean = Vector::zeros(m);
    for ((_, _, wm, _), y) in points.iter().zip(&outputs) {
        mean += *wm * y;
    }
    let mut covariance = Matrix::zeros(m, m);
    let mut cross = Matrix::zeros(nx, m);
    for ((dx, _, _, wc), y) in points.iter().zip(&outputs) {
        let d = y - &mean;
        covariance.ger(*wc, &d, &d, 1.0);
        cross.ger(*wc, dx, &d, 1.0);
    }
    symmetrize(&mut covariance);
    Ok(MomentTriple {
        mean,
        covariance,
        cross,
    })
}

// `samples` standard-normal columns in antithetic pairs (column `i + half`
// is minus column `i`; an odd count leaves one unpaired column at the end),
// whitened so the sample covariance (divisor N - 1) is exactly the identity.
fn whitened_normals<R: Rng + ?Sized>(dim: usize, samples: usize, rng: &mut R) -> Result<Matrix> {
    let half = samples / 2;
    let base = Matrix::from_fn(dim, half + samples % 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut z = Matrix::zeros(dim, samples);
    for i in 0..half {
        z.set_column(i, &base.column(i));
        z.set_column(i + half, &(-base.column(i)));
    }
    if samples % 2 == 1 {
        z.set_column(samples - 1, &base.column(half));
        for mut row in z.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
    }
    let cov = &z * z.transpose() / (samples as f64 - 1.0);
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Numerical("degenerate Monte Carlo state draws".into()))?;
    chol.l()
        .solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical("whitening solve failed".into()))
}

fn pick_branch<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return idx;
        }
    }
    weights.len() - 1
}

fn monte_carlo<F, R>(
    belief: &GaussianBelief,
    f: &F,
    branches: &[NoiseBranch],
    weights: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<MomentTriple>
where
    F: Fn(&Vector, usize, &Vector) -> Vector,
    R: Rng + ?Sized,
{
    let nx = belief.dim();
    let nw = branches.iter().map(|b| b.noise.dim()).max().unwrap_or(0);
    if samples < 2 * (nx + nw) || samples < 2 {
        return Err(Error::Argument(format!(
            "monte-carlo needs at least {} samples, got {samples}",
            2 * (nx + nw)
        )));
    }
    let sx = psd_sqrt(belief.covariance())?;
    let z = whitened_normals(nx, samples, rng)?;
    let mut xs = &sx * z;
    for mut col in xs.column_iter_mut() {
        col += belief.mean();
    }

    // (branch, noise) per sample, mirrored like the state draws
    let half = samples / 2;
    let mut noise: Vec<(usize, Vector)> = Vec::with_capacity(samples);
    for _ in 0..half + samples % 2 {
        let k = pick_branch(weights, rng);
        noise.push((k, branches[k].noise.sample(rng)));
    }
    let odd = (samples % 2 == 1).then(|| noise.pop().expect("odd sample"));
    for i in 0..half {
        let (k, w) = &noise[i];
        let mirrored = branches[*k].noise.mean() * 2.0 - w;
        noise.push((*k, mirrored));
    }
    noise.extend(odd);

    let mut ys: Option<Matrix> = None;
    for (i, (k, w)) in noise.iter().enumerate() {
        let x = xs.column(i).clone_owned();
        let y = f(&x, *k, w);
        check_output(&y, ys.as_ref().map(|m| m.nrows()))?;
        ys.get_or_insert_with(|| Matrix::zeros(y.len(), samples))
            .set_column(i, &y);
    }
    let mut ys = ys.expect("samples >= 2");
    let m = ys.nrows();
    let mean = Vector::from_fn(m, |r, _| ys.row(r).mean());
    for mut col in ys.column_iter_mut() {
        col -= &mean;
    }
    for mut col in xs.column_iter_mut() {
        col -= belief.mean();
    }
    let denom = samples as f64 - 1.0;
    let mut covariance = &ys * ys.transpose() / denom;
    symmetrize(&mut covariance);
    let cross = &xs * ys.transpose() / denom;
    Ok(MomentTriple {
        mean,
        covariance,
        cross,
    })
}

// Symmetrize and make sure the covariance is PSD, adding jitter if needed.
fn finalize_covariance(mut cov: Matrix, jitter: &JitterPolicy, what: &str) -> Result<Matrix> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} covariance is not finite")));
    }
    symmetrize(&mut cov);
    let n = cov.nrows().max(1) as f64;
    let trace = cov.trace();
    let floor = -1e-10 * trace.abs().max(f64::MIN_POSITIVE);
    let min_eig = min_eigenvalue(&cov);
    if min_eig >= floor {
        return Ok(cov);
    }
    let scale = (trace / n).max(jitter.scale_floor);
    for step in &jitter.steps {
        let eps = step * scale;
        if min_eig + eps >= floor {
            for i in 0..cov.nrows() {
                cov[(i, i)] += eps;
            }
            return Ok(cov);
        }
    }
    Err(Error::Numerical(format!(
        "{what} covariance is not positive semidefinite (smallest eigenvalue {min_eig:e})"
    )))
}

/// Prediction step: moments of `g(x, v)` with `v ~ N(0, I)`.
pub fn predict<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    transition: &dyn TransitionModel,
    backend: &Backend,
    rng: &mut R,
) -> Result<GaussianBelief> {
    Error::check_dim("transition state", transition.state_dim(), belief.dim())?;
    let moments = propagate_moments(
        belief,
        |x, v| transition.apply(x, v),
        &transition.noise(),
        backend,
        rng,
    )?;
    Error::check_dim("transition output", belief.dim(), moments.mean.len())?;
    let covariance = finalize_covariance(moments.covariance, &backend.jitter, "predicted")?;
    Ok(GaussianBelief {
        mean: moments.mean,
        covariance,
    })
}

/// Conditioning step given the predicted output moments and an observation.
pub fn condition(
    belief: &GaussianBelief,
    moments: &MomentTriple,
    y: &Vector,
    jitter: &JitterPolicy,
) -> Result<GaussianBelief> {
    Error::check_dim("measurement", moments.mean.len(), y.len())?;
    Error::check_dim("cross-covariance", belief.dim(), moments.cross.nrows())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("measurement must be finite".into()));
    }
    let chol = jitter.factor(&moments.covariance)?;
    // gain = Σ_xy Σ_yy⁻¹
    let gain = chol.solve(&moments.cross.transpose()).transpose();
    let mean = belief.mean() + &gain * (y - &moments.mean);
    let covariance = belief.covariance() - &gain * moments.cross.transpose();
    let covariance = finalize_covariance(covariance, jitter, "posterior")?;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("posterior mean is not finite".into()));
    }
    Ok(GaussianBelief { mean, covariance })
}

/// Update step with a mixture-noise measurement function.
pub fn update_branches<F, R>(
    belief: &GaussianBelief,
    f: F,
    branches: &[NoiseBranch],
    y: &Vector,
    backend: &Backend,
    rng: &mut R,
) -> Result<GaussianBelief>
where
    F: Fn(&Vector, usize, &Vector) -> Vector,
    R: Rng + ?Sized,
{
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("measurement must be finite".into()));
    }
    let moments = propagate_branches(belief, f, branches, backend, rng)?;
    condition(belief, &moments, y, &backend.jitter)
}

/// Update step: posterior mean `μ_x + Σ_xy Σ_yy⁻¹ (y - μ_y)` and covariance
/// `Σ_xx - Σ_xy Σ_yy⁻¹ Σ_xyᵀ`.
pub fn update<F, R>(
    belief: &GaussianBelief,
    sensor_fn: F,
    sensor_noise: &GaussianDensity,
    y: &Vector,
    backend: &Backend,
    rng: &mut R,
) -> Result<GaussianBelief>
where
    F: Fn(&Vector, &Vector) -> Vector,
    R: Rng + ?Sized,
{
    update_branches(
        belief,
        |x, _, w| sensor_fn(x, w),
        &NoiseBranch::single(sensor_noise.clone()),
        y,
        backend,
        rng,
    )
}
