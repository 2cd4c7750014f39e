use polygonal::approx::{
    approx_error_bound, measured_sup_error, polygonal_from_concave, squared_polygonal,
};
use polygonal::divergence::{kl_divergence, sup_distance, DensityFn};
use polygonal::quadrature::QuadratureConfig;
use polygonal::targets::Target;

const TARGETS: [Target; 3] = [Target::Quad6, Target::Uniform, Target::Sine];

#[test]
fn squared_construction_obeys_the_root_sup_bound() {
    // min{1, K(h‖s)} ≤ 12·sup|√h − û|² with û the unit-norm interpolant of √h.
    let cfg = QuadratureConfig::default();
    for target in TARGETS {
        let h = target.concave();
        let root = {
            let (h, knots) = (h.clone(), h.breakpoints().to_vec());
            DensityFn::new(move |x| h.eval(x).max(0.0).sqrt(), knots)
        };
        for g in [2, 4, 8, 16] {
            let s = squared_polygonal(&h, g, &cfg).unwrap();
            let kl = kl_divergence(&target.density(), &s.density, &cfg).unwrap();
            let unit = DensityFn::from_piecewise_linear(s.unit.clone());
            let rhs = 12.0 * sup_distance(&root, &unit).powi(2);
            assert!(kl.min(1.0) <= rhs + 1e-8, "{target} g={g}: {kl} > {rhs}");
        }
    }
}

#[test]
fn interpolation_error_stays_within_the_curvature_bound() {
    for target in TARGETS {
        let h = target.concave();
        let sup_h2 = h.sup_second_derivative().unwrap();
        for g in [2, 3, 4, 8, 16, 32, 64] {
            let r = polygonal_from_concave(&h, g).unwrap();
            let err = measured_sup_error(&h, &r);
            let bound = approx_error_bound(sup_h2, g).unwrap();
            assert!(err <= bound + 1e-12, "{target} g={g}: {err} > {bound}");
        }
    }
}

#[test]
fn interpolation_error_is_tight_for_the_parabola() {
    let h = Target::Quad6.concave();
    for g in [2, 4, 8, 16, 32] {
        let err = measured_sup_error(&h, &polygonal_from_concave(&h, g).unwrap());
        assert!((err - 1.5 / (g * g) as f64).abs() < 1e-10);
    }
}

#[test]
fn squared_kl_shrinks_with_g() {
    let cfg = QuadratureConfig::default();
    for target in [Target::Quad6, Target::Sine] {
        let h = target.concave();
        let kls: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&g| {
                kl_divergence(
                    &target.density(),
                    &squared_polygonal(&h, g, &cfg).unwrap().density,
                    &cfg,
                )
                .unwrap()
            })
            .collect();
        assert!(kls.iter().all(|k| k.is_finite() && *k > 0.0), "{kls:?}");
        assert!(kls.windows(2).all(|w| w[1] < w[0]), "{target}: {kls:?}");
    }
    let flat = squared_polygonal(&Target::Uniform.concave(), 4, &cfg).unwrap();
    let kl = kl_divergence(&Target::Uniform.density(), &flat.density, &cfg).unwrap();
    assert!(kl.abs() < 1e-12);
}
