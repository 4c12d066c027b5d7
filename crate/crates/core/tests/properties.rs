use nalgebra::DMatrix;
use owbo::density::{kde_1d, GaussianMixture};
use owbo::kernel::RbfArd;
use owbo::optim::lhs;
use owbo::problem::Domain;
use owbo::rng::make_rng;
use owbo::stats::{mad, median, running_min};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unit_rescale_round_trips(
        bounds in prop::collection::vec((-50.0..50.0f64, 0.1..40.0f64), 1..6),
        fracs in prop::collection::vec(0.0..=1.0f64, 6),
    ) {
        let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let upper: Vec<f64> = bounds.iter().map(|b| b.0 + b.1).collect();
        let domain = Domain::new(lower, upper).unwrap();
        let u: Vec<f64> = fracs[..domain.dim()].to_vec();
        let x = domain.unrescale(&u);
        prop_assert!(domain.contains(&x));
        let back = domain.rescale_to_unit(&x).unwrap();
        for (a, b) in u.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn lhs_fills_every_stratum_once(n in 1usize..40, d in 1usize..6, seed in any::<u64>()) {
        let design = lhs(n, d, &mut make_rng(seed));
        prop_assert_eq!(design.len(), n);
        for j in 0..d {
            let mut seen = vec![false; n];
            for p in design.points() {
                prop_assert!((0.0..1.0).contains(&p[j]));
                let s = (p[j] * n as f64).floor() as usize;
                prop_assert!(!seen[s]);
                seen[s] = true;
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_and_bounded(
        s2 in 0.01..10.0f64,
        theta in prop::collection::vec(0.001..10.0f64, 3),
        x in point(3),
        y in point(3),
    ) {
        let k = RbfArd::new(s2, theta).unwrap();
        let kxy = k.eval(&x, &y).unwrap();
        prop_assert_eq!(kxy, k.eval(&y, &x).unwrap());
        prop_assert_eq!(k.eval(&x, &x).unwrap(), s2);
        prop_assert!((0.0..=s2).contains(&kxy));
    }

    #[test]
    fn running_min_is_a_nonincreasing_lower_envelope(xs in prop::collection::vec(-1e6..1e6f64, 1..60)) {
        let m = running_min(&xs);
        prop_assert!(m.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(m.iter().zip(&xs).all(|(a, b)| a <= b));
        prop_assert_eq!(*m.last().unwrap(), xs.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn median_and_mad_are_shift_equivariant(xs in prop::collection::vec(-1e3..1e3f64, 1..50), c in -1e3..1e3f64) {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let m = median(&xs);
        prop_assert!(lo <= m && m <= hi);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((median(&shifted) - (m + c)).abs() <= 1e-9);
        prop_assert!((mad(&shifted) - mad(&xs)).abs() <= 1e-9);
        prop_assert!(mad(&xs) >= 0.0);
    }

    #[test]
    fn mixture_is_nonnegative_and_scales_with_mass(
        w in prop::collection::vec(0.05..1.0f64, 1..4),
        spread in 0.05..2.0f64,
        mass in 0.01..100.0f64,
        x in point(2),
    ) {
        let k = w.len();
        let means: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64 * 0.5, -(i as f64)]).collect();
        let covs = vec![DMatrix::from_row_slice(2, 2, &[spread, 0.3 * spread, 0.3 * spread, spread]); k];
        let unit = GaussianMixture::new(w.clone(), means.clone(), covs.clone(), 1.0).unwrap();
        let scaled = GaussianMixture::new(w, means, covs, mass).unwrap();
        let a = unit.evaluate(&x);
        prop_assert!(a >= 0.0);
        prop_assert!((scaled.evaluate(&x) - mass * a).abs() <= 1e-10 * (1.0 + mass * a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kde_is_a_nonnegative_unit_mass_density(
        samples in prop::collection::vec(-5.0..5.0f64, 100..400),
    ) {
        prop_assume!(samples.iter().any(|s| (s - samples[0]).abs() > 1e-3));
        let kde = kde_1d(&samples).unwrap();
        prop_assert!(kde.density().iter().all(|p| *p >= 0.0));
        prop_assert!((kde.trapezoid_integral() - 1.0).abs() <= 1e-2);
    }
}
