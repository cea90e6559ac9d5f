use gentwistor::gca::Mat4;
use gentwistor::riemann::{
    christoffel_symbols, connection_curvature_residual, curvature_operator, decompose,
    metric_by_name, orthonormal_frame, CurvatureBlocks, DomainBox, MetricSpec, Provenance,
    RiemannError, CATALOG, P4,
};
use proptest::prelude::*;

/// `φ = 0.3 sin x₁ + 0.2 x₂x₃ − 0.1 x₄²` and its derivatives.
fn phi(p: &P4) -> f64 {
    0.3 * p[0].sin() + 0.2 * p[1] * p[2] - 0.1 * p[3] * p[3]
}

fn grad_phi(p: &P4) -> P4 {
    P4::new(0.3 * p[0].cos(), 0.2 * p[2], 0.2 * p[1], -0.2 * p[3])
}

fn laplacian_phi(p: &P4) -> f64 {
    -0.3 * p[0].sin() - 0.2
}

fn conformal() -> MetricSpec {
    MetricSpec::new(
        "conformal",
        DomainBox::uniform(-1.0, 1.0),
        |p: &P4| Mat4::identity() * (2.0 * phi(p)).exp(),
        Provenance::BuiltIn,
    )
}

fn blocks(m: &MetricSpec, p: &P4) -> CurvatureBlocks {
    decompose(&curvature_operator(m, p).unwrap()).unwrap()
}

fn interior() -> impl Strategy<Value = P4> {
    prop::array::uniform4(-0.8..0.8f64).prop_map(P4::from)
}

fn samples(m: &MetricSpec) -> Vec<P4> {
    let ts = [
        P4::new(0.5, 0.5, 0.5, 0.5),
        P4::new(0.1, 0.9, 0.3, 0.7),
        P4::new(0.8, 0.2, 0.6, 0.4),
    ];
    ts.iter().map(|t| m.interior_point(t, 0.1)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conformal_christoffel_symbols(p in interior()) {
        let g = christoffel_symbols(&conformal(), &p).unwrap();
        let d = grad_phi(&p);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let want = delta(i, k) * d[j] + delta(j, k) * d[i] - delta(i, j) * d[k];
                    prop_assert!((g[k][i][j] - want).abs() < 1e-9, "Γ^{k}_{i}{j}");
                }
            }
        }
    }

    /// Conformally flat: `W± = 0` and `s = −6 e^{−2φ}(Δφ + |∇φ|²)`.
    #[test]
    fn conformal_curvature(p in interior()) {
        let b = blocks(&conformal(), &p);
        let s = -6.0 * (-2.0 * phi(&p)).exp() * (laplacian_phi(&p) + grad_phi(&p).norm_squared());
        prop_assert!((b.s - s).abs() < 1e-6, "s = {} vs {}", b.s, s);
        prop_assert!(b.w_plus_norm() < 1e-6);
        prop_assert!(b.w_minus_norm() < 1e-6);
    }

    #[test]
    fn round_sphere_everywhere(p in interior()) {
        let b = blocks(&metric_by_name("s4").unwrap(), &p);
        prop_assert!((b.s - 12.0).abs() < 1e-6);
        prop_assert!(b.w_plus_norm().max(b.w_minus_norm()).max(b.b_norm()) < 1e-6);
    }
}

#[test]
fn frames_are_orthonormal() {
    for name in CATALOG {
        let m = metric_by_name(name).unwrap();
        for p in samples(&m) {
            let f = orthonormal_frame(&m, &p).unwrap();
            let gram = f.e.transpose() * m.metric(&p) * f.e;
            assert!((gram - Mat4::identity()).amax() < 1e-12, "{name}");
            assert!((f.e * f.einv - Mat4::identity()).amax() < 1e-12, "{name}");
        }
    }
}

#[test]
fn operator_is_symmetric() {
    for name in CATALOG {
        let m = metric_by_name(name).unwrap();
        for p in samples(&m) {
            assert!(
                curvature_operator(&m, &p).unwrap().symmetry_residual() < 1e-7,
                "{name}"
            );
        }
    }
}

#[test]
fn connection_route_agrees() {
    for name in CATALOG {
        let m = metric_by_name(name).unwrap();
        for p in samples(&m) {
            let r = connection_curvature_residual(&m, &p).unwrap();
            assert!(r < 1e-7, "{name}: {r}");
        }
    }
}

#[test]
fn reversing_orientation_swaps_weyl_halves() {
    let m = metric_by_name("fubini-study").unwrap();
    let sw = m.swapped(0, 1);
    let p = P4::new(0.3, -0.2, 0.1, 0.4);
    let mut q = p;
    q.swap_rows(0, 1);
    let (a, b) = (blocks(&m, &p), blocks(&sw, &q));
    assert!(a.w_plus_norm() > 1.0);
    assert!((a.w_plus_norm() - b.w_minus_norm()).abs() < 1e-7);
    assert!((a.w_minus_norm() - b.w_plus_norm()).abs() < 1e-7);
    assert!((a.s - b.s).abs() < 1e-7);
    assert!((a.b_norm() - b.b_norm()).abs() < 1e-7);
}

#[test]
fn frame_rotation_preserves_block_norms() {
    let (c, s) = (0.6f64, 0.8f64);
    let mut r = Mat4::identity();
    r[(0, 0)] = c;
    r[(0, 2)] = -s;
    r[(2, 0)] = s;
    r[(2, 2)] = c;
    r[(1, 1)] = -1.0;
    r[(3, 3)] = -1.0;
    for name in ["fubini-study", "schwarzschild"] {
        let m = metric_by_name(name).unwrap();
        let rot = metric_by_name(name)
            .unwrap()
            .with_frame_rotation(r)
            .unwrap();
        let p = samples(&m)[1];
        let (a, b) = (blocks(&m, &p), blocks(&rot, &p));
        assert!((a.w_plus_norm() - b.w_plus_norm()).abs() < 1e-7, "{name}");
        assert!((a.w_minus_norm() - b.w_minus_norm()).abs() < 1e-7, "{name}");
        assert!((a.s - b.s).abs() < 1e-7, "{name}");
        assert!((a.b_norm() - b.b_norm()).abs() < 1e-7, "{name}");
    }
}

#[test]
fn step_halving_is_stable() {
    let m = metric_by_name("eguchi-hanson").unwrap();
    let p = samples(&m)[0];
    let a = blocks(&m, &p);
    let b = blocks(&m.clone().with_step(m.step() / 2.0), &p);
    assert!((a.w_plus_norm() - b.w_plus_norm()).abs() < 1e-6);
    assert!((a.s - b.s).abs() < 1e-6);
}

#[test]
fn catalog_curvature_types() {
    let at = |name: &str| {
        let m = metric_by_name(name).unwrap();
        samples(&m)
            .iter()
            .map(|p| blocks(&m, p))
            .collect::<Vec<_>>()
    };
    for b in at("flat-perturbed") {
        assert!(
            b.w_plus_norm()
                .max(b.w_minus_norm())
                .max(b.b_norm())
                .max(b.s.abs())
                < 1e-6
        );
    }
    for b in at("fubini-study") {
        assert!((b.s - 24.0).abs() < 1e-6);
        assert!(b.b_norm() < 1e-6 && b.w_minus_norm() < 1e-6 && b.w_plus_norm() > 1.0);
    }
    for b in at("eguchi-hanson") {
        assert!(b.b_norm() < 1e-6 && b.s.abs() < 1e-6);
        assert!(b.w_minus_norm() < 1e-6 && b.w_plus_norm() > 1e-2);
    }
    for b in at("schwarzschild") {
        assert!(b.b_norm() < 1e-6 && b.s.abs() < 1e-6);
        assert!(b.w_plus_norm() > 1e-2 && b.w_minus_norm() > 1e-2);
    }
}

#[test]
fn rejects_points_near_the_boundary() {
    let m = metric_by_name("s4").unwrap();
    let err = curvature_operator(&m, &P4::new(0.9999, 0.0, 0.0, 0.0)).unwrap_err();
    assert!(matches!(err, RiemannError::Domain(_)), "{err:?}");
}

#[test]
fn rejects_indefinite_metrics() {
    let m = MetricSpec::new(
        "lorentz",
        DomainBox::uniform(-1.0, 1.0),
        |_: &P4| Mat4::from_diagonal(&P4::new(-1.0, 1.0, 1.0, 1.0)),
        Provenance::BuiltIn,
    );
    let err = orthonormal_frame(&m, &P4::zeros()).unwrap_err();
    assert!(
        matches!(err, RiemannError::NotPositiveDefinite(_)),
        "{err:?}"
    );
}
