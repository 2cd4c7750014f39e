use polygonal::dist::{to_piecewise_linear, PolygonalParams};
use polygonal::divergence::{hellinger_sq, kl_divergence, sup_distance, DensityFn};
use polygonal::quadrature::QuadratureConfig;
use polygonal::rng::{rng_from_seed, SimRng};
use polygonal::targets::Target;
use rand::Rng;

fn random_mixture(rng: &mut SimRng) -> PolygonalParams {
    let g = rng.random_range(1..=6);
    let w: Vec<f64> = (0..g).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = w.iter().sum();
    let modes = (0..g)
        .map(|_| match rng.random_range(0..5) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        })
        .collect();
    PolygonalParams::new(w.iter().map(|x| x / total).collect(), modes).unwrap()
}

fn pairs(seed: u64, count: usize) -> Vec<(PolygonalParams, PolygonalParams)> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| (random_mixture(&mut rng), random_mixture(&mut rng)))
        .collect()
}

fn grid_sup(f: &DensityFn, h: &DensityFn, points: usize) -> f64 {
    (0..=points)
        .map(|i| {
            let x = i as f64 / points as f64;
            (f.eval(x) - h.eval(x)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn kl_is_nonnegative_and_dominates_hellinger() {
    let cfg = QuadratureConfig::default();
    for (a, b) in pairs(1, 1000) {
        let (f, h) = (DensityFn::from_params(&a), DensityFn::from_params(&b));
        let kl = kl_divergence(&f, &h, &cfg).unwrap();
        assert!(kl >= -1e-10, "kl {kl} for {a:?} vs {b:?}");
        let h2 = hellinger_sq(&f, &h, &cfg).unwrap();
        assert!(h2 <= kl + 1e-10, "H² {h2} above KL {kl}");
    }
}

#[test]
fn hellinger_is_bounded_and_symmetric() {
    let cfg = QuadratureConfig::default();
    for (a, b) in pairs(2, 1000) {
        let (f, h) = (DensityFn::from_params(&a), DensityFn::from_params(&b));
        let fh = hellinger_sq(&f, &h, &cfg).unwrap();
        let hf = hellinger_sq(&h, &f, &cfg).unwrap();
        assert!((0.0..=2.0).contains(&fh));
        assert!((fh - hf).abs() < 1e-12);
        let root_sup = grid_sup(
            &DensityFn::new(move |x| a.density(x).sqrt(), vec![]),
            &DensityFn::new(move |x| b.density(x).sqrt(), vec![]),
            10_000,
        );
        assert!(fh <= 2.0 * root_sup + 1e-12);
    }
}

#[test]
fn divergences_vanish_on_identical_densities() {
    let cfg = QuadratureConfig::default();
    for (a, _) in pairs(3, 200) {
        let f = DensityFn::from_params(&a);
        assert!(kl_divergence(&f, &f, &cfg).unwrap().abs() <= 1e-10);
        assert!(hellinger_sq(&f, &f, &cfg).unwrap() <= 1e-10);
        assert_eq!(sup_distance(&f, &f), 0.0);
    }
}

#[test]
fn sup_is_exact_for_piecewise_linear_pairs() {
    for (a, b) in pairs(4, 200) {
        let (f, h) = (DensityFn::from_params(&a), DensityFn::from_params(&b));
        let mut knots = to_piecewise_linear(&a).knots().to_vec();
        knots.extend_from_slice(to_piecewise_linear(&b).knots());
        let at_knots = knots
            .iter()
            .map(|&x| (a.density(x) - b.density(x)).abs())
            .fold(0.0, f64::max);
        let sup = sup_distance(&f, &h);
        assert!(
            (sup - at_knots).abs() < 1e-12,
            "sup {sup} vs knots {at_knots}"
        );
    }
}

#[test]
fn sup_matches_a_fine_grid_for_smooth_targets() {
    let mixtures = pairs(5, 4);
    for target in [Target::Quad6, Target::Sine] {
        let h = target.density();
        for (a, _) in &mixtures {
            let f = DensityFn::from_params(a);
            let sup = sup_distance(&f, &h);
            // The maximum may sit on a kink of the mixture, so the reference
            // grid includes the knots.
            let kinks = to_piecewise_linear(a)
                .knots()
                .iter()
                .map(|&x| (a.density(x) - h.eval(x)).abs())
                .fold(0.0, f64::max);
            let fine = grid_sup(&f, &h, 1_000_000).max(kinks);
            assert!(sup >= fine - 1e-12, "{sup} below grid {fine}");
            assert!(sup - fine < 1e-9, "{sup} above grid {fine}");
        }
    }
}
