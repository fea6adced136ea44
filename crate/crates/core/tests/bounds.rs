use poisson_clt::bounds::{
    assemble_bounds, d2_bound, fit_c0, rate_prediction, resolve_q, zeta_closed_form, zeta_monte_carlo, ZetaBudget,
    ZetaMode, Zetas,
};
use poisson_clt::functional::{normalized_model, Gilbert, ReEvaluated};
use poisson_clt::geometry::{ConvexBody, McBudget};
use poisson_clt::gilbert::{second_difference, EdgeFunctionalSpec, IndexedGilbert};
use poisson_clt::linalg::Matrix;
use poisson_clt::model::{
    spectral, target_matrix_c, EpsilonRule, ModelSpec, VaryingDomainSpec, VaryingExponentSpec,
};
use poisson_clt::numerics::sample_variance;
use poisson_clt::process::{sample_poisson, PointConfiguration, REJECTION_CAP};
use poisson_clt::seed::{tags, SeedPath};
use poisson_clt::verify::rate_regression;
use proptest::prelude::*;

fn square() -> ConvexBody {
    ConvexBody::cube(2, 0.0, 1.0).unwrap()
}

fn exponents(alphas: Vec<f64>, rule: EpsilonRule) -> ModelSpec {
    ModelSpec::Exponents(VaryingExponentSpec {
        d: 2,
        window: square(),
        alphas,
        epsilon: rule,
    })
}

fn two_rectangles(rule: EpsilonRule) -> ModelSpec {
    ModelSpec::Domains(VaryingDomainSpec {
        d: 2,
        windows: vec![square(), ConvexBody::cuboid(vec![[0.5, 1.5], [0.0, 1.0]]).unwrap()],
        alpha: 1.0,
        epsilon: rule,
    })
}

/// A rule with `ε_t = eps` at intensity `t`.
fn rule_through(t: f64, eps: f64, b: f64) -> EpsilonRule {
    EpsilonRule::power(eps * t.powf(b), b)
}

#[test]
fn closed_form_terms_decrease_beyond_a_threshold() {
    let specs = [
        exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.5)),
        exponents(vec![0.0, 1.0], EpsilonRule::power(0.5f64.sqrt(), 0.5).with_correction(1.0, 1.0)),
        exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.9)),
        exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.25)),
        two_rectangles(EpsilonRule::power(1.0, 0.5)),
        two_rectangles(EpsilonRule::power(1.0, 0.75)),
    ];
    let b = McBudget::default();
    for spec in &specs {
        for p in [1.2, 1.5, 2.0] {
            let rows: Vec<_> = (4..=60)
                .map(|k| zeta_closed_form(spec, 2f64.powi(k), p, None, 1.0, &b).unwrap())
                .collect();
            let terms: [fn(&poisson_clt::bounds::ZetaBreakdown) -> f64; 4] =
                [|z| z.zeta1, |z| z.zeta2, |z| z.zeta3, |z| z.zeta4];
            for (n, g) in terms.iter().enumerate() {
                // Threshold: the last dyadic point at which the term still grows.
                let last_rise = rows.windows(2).rposition(|w| g(&w[1]) > g(&w[0])).map_or(rows[0].t, |i| rows[i + 1].t);
                assert!(
                    last_rise <= 2f64.powi(32),
                    "{spec:?} p={p}: ζ{} still increases at t = {last_rise}",
                    n + 1
                );
            }
            assert!(rows.last().unwrap().d3_bound < rows[0].d3_bound);
        }
    }
}

#[test]
fn p_two_thermodynamic_bound_decays_like_t_to_minus_half() {
    let spec = exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.5));
    let b = McBudget::default();
    let ts: Vec<f64> = (6..=16).map(|k| 2f64.powi(k)).collect();
    let ys: Vec<f64> = ts
        .iter()
        .map(|&t| zeta_closed_form(&spec, t, 2.0, None, 1.0, &b).unwrap().d3_bound)
        .collect();
    let fit = rate_regression(&ts, &ys).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-9, "{}", fit.slope);
    let pred = rate_prediction(&spec, 2.0).unwrap();
    assert_eq!(pred.exponent, -0.5);
}

#[test]
fn p_two_reduces_the_p_rows() {
    for spec in [
        exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.7)),
        two_rectangles(EpsilonRule::power(1.0, 0.7)),
    ] {
        let r = rate_prediction(&spec, 2.0).unwrap();
        // (t²ε_t^d)^{−1/2} = t^{−(2−bd)/2}
        assert!(r.terms.iter().any(|t| t.exponent == Some(-(2.0 - 1.4) / 2.0)), "{r:?}");
    }
}

proptest! {
    #[test]
    fn assembly_is_homogeneous(z in prop::array::uniform4(0.0..10.0f64), s in 0.01..100.0f64, k in -8i32..8) {
        let z = Zetas { zeta1: z[0], zeta2: z[1], zeta3: z[2], zeta4: z[3] };
        let c = spectral(&Matrix(vec![vec![2.0, 0.5], vec![0.5, 1.0]])).unwrap();
        let (d3, d2) = assemble_bounds(&z, &c);
        let (d3s, d2s) = assemble_bounds(&z.scaled(s), &c);
        prop_assert!((d3s - s * d3).abs() <= 1e-12 * s * d3.max(1e-300));
        prop_assert!((d2s.unwrap() - s * d2.as_ref().unwrap()).abs() <= 1e-12 * s * d2.as_ref().unwrap().max(1e-300));
        let pow2 = 2f64.powi(k);
        let (d3p, d2p) = assemble_bounds(&z.scaled(pow2), &c);
        prop_assert_eq!(d3p, pow2 * d3);
        prop_assert_eq!(d2p.unwrap(), pow2 * d2.unwrap());
    }

    #[test]
    fn identity_target_uses_constant_two(z in prop::array::uniform4(0.0..10.0f64)) {
        let z = Zetas { zeta1: z[0], zeta2: z[1], zeta3: z[2], zeta4: z[3] };
        let c = spectral(&Matrix::identity(3)).unwrap();
        let d2 = d2_bound(&z, &c).unwrap();
        prop_assert!((d2 - (z.zeta1 + z.zeta2 + z.zeta3 + 2.0 * z.zeta4)).abs() < 1e-12);
    }
}

#[test]
fn constant_functional_has_only_the_covariance_term() {
    let f = ReEvaluated::new(2, |_: &PointConfiguration| vec![3.0, -1.0]);
    let c = Matrix(vec![vec![1.0, -0.25], vec![-0.25, 2.0]]);
    let budget = ZetaBudget {
        replicas: 20,
        x_samples: 16,
        y_samples: 4,
        bootstrap: 10,
    };
    let z = zeta_monte_carlo(&f, &square(), 20.0, &c, 2.0, None, &budget, SeedPath::new(41, 0)).unwrap();
    assert_eq!((z.zeta2, z.zeta3, z.zeta4), (0.0, 0.0, 0.0));
    assert!((z.zeta1 - 3.5).abs() < 1e-15);
    let small = ZetaBudget { x_samples: 15, ..budget };
    assert!(zeta_monte_carlo(&f, &square(), 20.0, &c, 2.0, None, &small, SeedPath::new(41, 0)).is_err());
}

#[test]
fn scalar_path_matches_a_direct_implementation() {
    let (t, eps, alpha) = (60.0, 0.25, 1.0);
    let w = square();
    let spec = EdgeFunctionalSpec::new(alpha, eps, w.clone()).unwrap();
    let f = Gilbert::scalar(&spec).unwrap();
    let c = Matrix(vec![vec![40.0]]);
    let budget = ZetaBudget {
        replicas: 40,
        x_samples: 16,
        y_samples: 6,
        bootstrap: 0,
    };
    let seed = SeedPath::new(42, 0);
    let got = zeta_monte_carlo(&f, &w, t, &c, 2.0, Some(2.0), &budget, seed).unwrap();

    // Same sample points, evaluated with the scalar API only.
    let bb = w.bounding_box();
    let mut yr = seed.derive(tags::Y_SAMPLES).rng();
    let mut ys = Vec::new();
    let mut xs: Vec<Vec<Vec<f64>>> = Vec::new();
    for s in 0..budget.y_samples {
        ys.push(w.sample_uniform(&bb, &mut yr, REJECTION_CAP).unwrap());
        let mut xr = seed.derive(tags::X_SAMPLES).with_replica(s as u64).rng();
        xs.push((0..budget.x_samples).map(|_| w.sample_uniform(&bb, &mut xr, REJECTION_CAP).unwrap()).collect());
    }
    let configs: Vec<IndexedGilbert> = (0..budget.replicas)
        .map(|r| {
            let eta = sample_poisson(&w, t, seed.derive(tags::CONFIGURATIONS).with_replica(r as u64)).unwrap();
            IndexedGilbert::new(&eta, spec.clone()).unwrap()
        })
        .collect();
    let n = budget.replicas as f64;
    let lam = t * 1.0;
    let moment = |x: &[f64], r: f64| configs.iter().map(|g| g.add_one_cost(x).unwrap().powf(r)).sum::<f64>() / n;
    let (mut outer2, mut outer3, mut z4) = (0.0, 0.0, 0.0);
    for (y, xs_y) in ys.iter().zip(&xs) {
        let (mut in2, mut in3) = (0.0, 0.0);
        for x in xs_y {
            let dd = second_difference(&spec, x, y).abs();
            in2 += dd * dd;
            in3 += moment(x, 4.0).powf(0.25) * dd;
            z4 += moment(x, 3.0);
        }
        outer2 += (lam * in2 / xs_y.len() as f64).powi(2);
        outer3 += (lam * in3 / xs_y.len() as f64).powi(2);
    }
    let ny = ys.len() as f64;
    let zeta2 = (lam * outer2 / ny).sqrt();
    let zeta3 = 2.0 * (lam * outer3 / ny).sqrt();
    let zeta4 = lam * z4 / (ny * budget.x_samples as f64);
    let values: Vec<f64> = configs.iter().map(|g| g.value()).collect();
    let zeta1 = (40.0 - sample_variance(&values)).abs();
    for (a, b) in [(got.zeta1, zeta1), (got.zeta2, zeta2), (got.zeta3, zeta3), (got.zeta4, zeta4)] {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12), "{a} vs {b}");
    }
}

#[test]
fn monte_carlo_terms_are_dominated_by_the_closed_form() {
    let instances = [
        (exponents(vec![1.0], rule_through(50.0, 0.3, 0.5)), 50.0, 2.0),
        (exponents(vec![0.0, 1.0], rule_through(100.0, 0.3, 0.5)), 100.0, 1.5),
        (two_rectangles(rule_through(80.0, 0.25, 0.5)), 80.0, 2.0),
        (exponents(vec![-0.5, 1.0], rule_through(200.0, 0.2, 0.75)), 200.0, 1.5),
    ];
    let b = McBudget::default();
    for (k, (spec, t, p)) in instances.iter().enumerate() {
        let q = resolve_q(*p, None).unwrap();
        let fit = fit_c0(spec, *t, &[2.0 * p, q + 1.0], 300, 32, SeedPath::new(43, k as u64)).unwrap();
        let cf = zeta_closed_form(spec, *t, *p, None, fit.c0, &b).unwrap();
        let f = normalized_model(spec, *t, &b).unwrap();
        let c = target_matrix_c(spec, &b).unwrap().c;
        let budget = ZetaBudget {
            replicas: 300,
            x_samples: 32,
            y_samples: 32,
            bootstrap: 100,
        };
        let mc = zeta_monte_carlo(&f, &spec.sampling_domain(), *t, &c, *p, None, &budget, SeedPath::new(44, k as u64))
            .unwrap();
        let ZetaMode::MonteCarlo { std_errs, .. } = mc.mode else { unreachable!() };
        let pairs = [(mc.zeta1, cf.zeta1), (mc.zeta2, cf.zeta2), (mc.zeta3, cf.zeta3), (mc.zeta4, cf.zeta4)];
        for (n, ((m, c), se)) in pairs.iter().zip(std_errs).enumerate() {
            assert!(m <= &(c + 3.0 * se), "instance {k}, ζ{}: MC {m} ± {se} > closed form {c}", n + 1);
        }
    }
}
