use poisson_clt::functional::{Gilbert, PointCount, ReEvaluated};
use poisson_clt::geometry::{ConvexBody, McBudget};
use poisson_clt::gilbert::EdgeFunctionalSpec;
use poisson_clt::linalg::Matrix;
use poisson_clt::model::{CovarianceReport, EpsilonRule, ModelSpec, VaryingDomainSpec, VaryingExponentSpec};
use poisson_clt::numerics::mean_and_se;
use poisson_clt::process::PointConfiguration;
use poisson_clt::seed::SeedPath;
use poisson_clt::verify::{
    d3_panel_estimate, empirical_covariance, gaussian_sample, poincare_check, run_replicas, GaussianSide,
    PoincareBudget, TestFunctionPanel,
};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn square() -> ConvexBody {
    ConvexBody::cube(2, 0.0, 1.0).unwrap()
}

fn rule_through(t: f64, eps: f64) -> EpsilonRule {
    EpsilonRule::power(eps * t.sqrt(), 0.5)
}

fn domains(windows: Vec<ConvexBody>, rule: EpsilonRule) -> ModelSpec {
    ModelSpec::Domains(VaryingDomainSpec {
        d: 2,
        windows,
        alpha: 1.0,
        epsilon: rule,
    })
}

#[test]
fn replica_batches_are_reproducible() {
    let spec = ModelSpec::Exponents(VaryingExponentSpec {
        d: 2,
        window: square(),
        alphas: vec![0.0, 1.0],
        epsilon: EpsilonRule::power(1.0, 0.5),
    });
    let a = run_replicas(&spec, 80.0, 2, 7).unwrap();
    let b = run_replicas(&spec, 80.0, 2, 7).unwrap();
    assert_eq!(a, b);
    assert!(run_replicas(&spec, 0.0, 2, 7).unwrap_err().is_validation());
    assert!(run_replicas(&spec, 80.0, 1, 7).unwrap_err().is_validation());
}

#[test]
fn exact_centering_gives_mean_zero_columns() {
    let spec = ModelSpec::Exponents(VaryingExponentSpec {
        d: 2,
        window: square(),
        alphas: vec![-0.5, 1.0],
        epsilon: rule_through(150.0, 0.15),
    });
    let batch = run_replicas(&spec, 150.0, 1500, 8).unwrap();
    for k in 0..batch.m() {
        let col: Vec<f64> = batch.rows.iter().map(|r| r[k]).collect();
        let (m, se) = mean_and_se(&col);
        assert!(m.abs() <= 3.0 * se, "column {k}: {m} ± {se}");
    }
}

#[test]
fn disjoint_windows_are_uncorrelated() {
    let spec = domains(
        vec![
            ConvexBody::cuboid(vec![[0.0, 0.5], [0.0, 1.0]]).unwrap(),
            ConvexBody::cuboid(vec![[0.6, 1.0], [0.0, 1.0]]).unwrap(),
        ],
        rule_through(200.0, 0.08),
    );
    let batch = run_replicas(&spec, 200.0, 1500, 9).unwrap();
    let (c, se) = empirical_covariance(&batch.rows).unwrap();
    assert!(c.get(0, 1).abs() <= 3.0 * se.get(0, 1), "{} ± {}", c.get(0, 1), se.get(0, 1));
}

#[test]
fn overlapping_rectangles_covariance_lies_in_its_bracket() {
    // At ε = 0.2 the boundary correction on the 0.5 × 1 overlap is large,
    // so the finite-t covariance is compared with its certified bracket
    // rather than with the limit |W₁ ∩ W₂| = 0.5.
    let t = 200.0;
    let spec = domains(
        vec![square(), ConvexBody::cuboid(vec![[0.5, 1.5], [0.0, 1.0]]).unwrap()],
        rule_through(t, 0.2),
    );
    let batch = run_replicas(&spec, t, 2000, 10).unwrap();
    let (c, se) = empirical_covariance(&batch.rows).unwrap();
    let report = CovarianceReport::new(&spec, t, &McBudget::default()).unwrap();
    assert_eq!(report.target.c.get(0, 1), 0.5);
    for i in 0..2 {
        for j in 0..2 {
            let (lo, hi) = (report.normalized_lower.get(i, j), report.normalized_upper.get(i, j));
            let (v, s) = (c.get(i, j), 3.0 * se.get(i, j));
            assert!(v >= lo - s && v <= hi + s, "({i},{j}): {v} ± {s} vs [{lo}, {hi}]");
        }
    }
}

#[test]
fn standard_gaussian_marginals_pass_kolmogorov_smirnov() {
    let xs = gaussian_sample(&Matrix::identity(3), 4000, SeedPath::new(11, 0)).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = xs.len() as f64;
    // Asymptotic critical value at level 0.001.
    let crit = 1.949 / n.sqrt();
    for k in 0..3 {
        let mut col: Vec<f64> = xs.iter().map(|x| x[k]).collect();
        col.sort_by(f64::total_cmp);
        let d = col
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = normal.cdf(*v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < crit, "component {k}: D = {d}");
    }
}

#[test]
fn diagonal_gaussian_variances() {
    let xs = gaussian_sample(&Matrix::diag(&[4.0, 9.0]), 20_000, SeedPath::new(12, 0)).unwrap();
    let (c, se) = empirical_covariance(&xs).unwrap();
    assert!((c.get(0, 0) - 4.0).abs() <= 3.0 * se.get(0, 0));
    assert!((c.get(1, 1) - 9.0).abs() <= 3.0 * se.get(1, 1));
}

#[test]
fn panel_estimate_is_small_for_gaussian_input() {
    let c = Matrix(vec![vec![1.0, 0.3, 0.0], vec![0.3, 2.0, -0.4], vec![0.0, -0.4, 0.5]]);
    let panel = TestFunctionPanel::standard(3).unwrap();
    for (k, n) in [2000usize, 8000].into_iter().enumerate() {
        let xs = gaussian_sample(&c, n, SeedPath::new(13, k as u64)).unwrap();
        let est = d3_panel_estimate(&xs, &c, &panel, GaussianSide::ClosedForm).unwrap();
        assert!(est.lower_bound <= 3.0 * est.std_err, "n = {n}: {} ± {}", est.lower_bound, est.std_err);
    }
    let xs = gaussian_sample(&c, 2000, SeedPath::new(13, 5)).unwrap();
    let sampled = GaussianSide::Sampled {
        samples: 20_000,
        seed: SeedPath::new(14, 0),
    };
    let est = d3_panel_estimate(&xs, &c, &panel, sampled).unwrap();
    assert!(est.lower_bound <= 3.0 * est.std_err);
    let tiny = GaussianSide::Sampled {
        samples: 100,
        seed: SeedPath::new(14, 0),
    };
    assert!(d3_panel_estimate(&xs, &c, &panel, tiny).is_err());
}

fn row_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=4).prop_flat_map(|m| prop::collection::vec(prop::collection::vec(-3.0..3.0f64, m), 3..40))
}

proptest! {
    #[test]
    fn covariance_is_permutation_invariant(rows in row_strategy(), seed in any::<u64>()) {
        let mut shuffled = rows.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = poisson_clt::seed::splitmix64(s);
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let (a, ea) = empirical_covariance(&rows).unwrap();
        let (b, eb) = empirical_covariance(&shuffled).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(ea.max_abs_diff(&eb) <= 1e-12 * ea.max_abs().max(1.0));
    }

    #[test]
    fn covariance_is_sign_equivariant(rows in row_strategy(), signs in prop::collection::vec(any::<bool>(), 4)) {
        let m = rows[0].len();
        let s: Vec<f64> = signs[..m].iter().map(|&b| if b { -1.0 } else { 1.0 }).collect();
        let flipped: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&s).map(|(v, k)| v * k).collect()).collect();
        let (a, ea) = empirical_covariance(&rows).unwrap();
        let (b, eb) = empirical_covariance(&flipped).unwrap();
        for i in 0..m {
            for j in 0..m {
                prop_assert_eq!(b.get(i, j), s[i] * s[j] * a.get(i, j));
                prop_assert_eq!(eb.get(i, j), ea.get(i, j));
            }
        }
    }
}

#[test]
fn poincare_holds_for_the_functional_library() {
    let w = square();
    let budget = PoincareBudget {
        replicas: 1500,
        x_samples: 32,
    };
    let t = 60.0;
    let constant = ReEvaluated::new(1, |_: &PointConfiguration| vec![2.5]);
    let c = poincare_check(&constant, &w, t, 1.5, &budget, SeedPath::new(15, 0)).unwrap();
    assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    assert!(c.pass);

    let count = PointCount { window: w.clone() };
    let edges = Gilbert::edge_count(w.clone(), 0.15).unwrap();
    let lengths = Gilbert::scalar(&EdgeFunctionalSpec::new(1.0, 0.15, w.clone()).unwrap()).unwrap();
    let inverse = Gilbert::scalar(&EdgeFunctionalSpec::new(-0.5, 0.15, w.clone()).unwrap()).unwrap();
    for (k, p) in [1.2, 1.5, 2.0].into_iter().enumerate() {
        let seed = SeedPath::new(16, k as u64);
        let checks = [
            ("count", poincare_check(&count, &w, t, p, &budget, seed).unwrap()),
            ("edges", poincare_check(&edges, &w, t, p, &budget, seed).unwrap()),
            ("L^1", poincare_check(&lengths, &w, t, p, &budget, seed).unwrap()),
            ("L^-0.5", poincare_check(&inverse, &w, t, p, &budget, seed).unwrap()),
        ];
        for (name, c) in checks {
            assert!(c.pass, "{name} at p = {p}: {c:?}");
        }
    }
}

#[test]
fn poisson_count_attains_equality_at_p_two() {
    let w = square();
    let budget = PoincareBudget {
        replicas: 3000,
        x_samples: 8,
    };
    let c = poincare_check(&PointCount { window: w.clone() }, &w, 100.0, 2.0, &budget, SeedPath::new(17, 0)).unwrap();
    assert_eq!(c.rhs, 100.0);
    assert!((c.lhs - c.rhs).abs() <= 3.0 * c.pooled_std_err, "{c:?}");
}

#[test]
fn panel_estimate_does_not_grow_with_t() {
    let spec = domains(
        vec![square(), ConvexBody::cuboid(vec![[0.5, 1.5], [0.0, 1.0]]).unwrap()],
        EpsilonRule::power(1.0, 0.5),
    );
    let c = poisson_clt::model::target_matrix_c(&spec, &McBudget::default()).unwrap().c;
    let panel = TestFunctionPanel::standard(2).unwrap();
    let est: Vec<_> = [25.0, 100.0, 400.0]
        .into_iter()
        .map(|t| {
            let batch = run_replicas(&spec, t, 1500, 18).unwrap();
            d3_panel_estimate(&batch.rows, &c, &panel, GaussianSide::ClosedForm).unwrap()
        })
        .collect();
    for w in est.windows(2) {
        let band = 2.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
        assert!(w[1].lower_bound <= w[0].lower_bound + band, "{} → {}", w[0].lower_bound, w[1].lower_bound);
    }
}
