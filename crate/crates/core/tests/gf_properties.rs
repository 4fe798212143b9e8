use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgf_core::gf::{self, Backend, GaussianBelief};
use rgf_core::GaussianDensity;

type V = DVector<f64>;
type M = DMatrix<f64>;

fn spd(n: usize, entries: &[f64], floor: f64) -> M {
    let l = M::from_iterator(n, n, entries.iter().copied().take(n * n));
    &l * l.transpose() + M::identity(n, n) * floor
}

prop_compose! {
    fn linear_problem()(n in 1usize..4, m in 1usize..4, e in prop::collection::vec(-2.0..2.0f64, 48))
        -> (GaussianBelief, M, GaussianDensity, V, V)
    {
        let mean = V::from_iterator(n, e[0..n].iter().copied());
        let belief = GaussianBelief::new(mean, spd(n, &e[3..12], 0.1)).unwrap();
        let h = M::from_iterator(m, n, e[12..12 + m * n].iter().copied());
        let noise = GaussianDensity::new(V::zeros(m), spd(m, &e[21..30], 0.1)).unwrap();
        let y1 = V::from_iterator(m, e[30..30 + m].iter().map(|v| 5.0 * v));
        let y2 = V::from_iterator(m, e[33..33 + m].iter().map(|v| 5.0 * v));
        (belief, h, noise, y1, y2)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Conditioning on a linear sensor never increases uncertainty.
    #[test]
    fn posterior_below_prior((belief, h, noise, y, _) in linear_problem()) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for backend in [Backend::exact_linear(), Backend::unscented()] {
            let post = gf::update(&belief, |x, w| &h * x + w, &noise, &y, &backend, &mut rng).unwrap();
            let gap = belief.covariance() - post.covariance();
            let min_eig = gap.symmetric_eigenvalues().min();
            prop_assert!(min_eig > -1e-9 * belief.covariance().amax(), "{} min eigenvalue {min_eig}", backend.name());
        }
    }

    // The posterior mean is affine in y and the covariance does not depend on y.
    #[test]
    fn update_is_affine_in_measurement((belief, h, noise, y1, y2) in linear_problem()) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let backend = Backend::unscented();
        let mid = (&y1 + &y2) * 0.5;
        let run = |y: &V, rng: &mut ChaCha8Rng| gf::update(&belief, |x, w| &h * x + w, &noise, y, &backend, rng).unwrap();
        let (a, b, c) = (run(&y1, &mut rng), run(&y2, &mut rng), run(&mid, &mut rng));
        let scale = 1.0 + a.mean().amax().max(b.mean().amax());
        prop_assert!(((a.mean() + b.mean()) * 0.5 - c.mean()).amax() < 1e-9 * scale);
        prop_assert!((a.covariance() - b.covariance()).amax() < 1e-9 * belief.covariance().amax());
    }
}
