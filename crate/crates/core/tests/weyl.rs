use trispectra::coeffs::{CoefficientSpec, FnInput, MatrixKind, Regime};
use trispectra::linalg::{c, C64};
use trispectra::propagator::{Problem, SolverSettings};
use trispectra::spectra::{find_zeros, SpectraSettings};
use trispectra::weyl::*;

fn problem(tau1: &str, tau2: &str) -> Problem {
    let spec = CoefficientSpec {
        tau1: Some(FnInput::Expr(tau1.into())),
        tau2: Some(FnInput::Expr(tau2.into())),
        ..Default::default()
    };
    Problem::from_spec(&spec, Regime::W2m1W2m2, MatrixKind::Vladimirov, SolverSettings::default()).unwrap()
}

fn smooth() -> Problem {
    problem("2*sin(pi*x)", "5*x^2 - 3*x^3")
}

#[test]
fn shift_of_tau2_appears_only_in_m41_and_the_mapping_matrix() {
    let a = smooth();
    for cc in [c(1.0, 0.0), c(-2.5, 0.0), c(0.0, 3.0)] {
        let b = problem("2*sin(pi*x)", &format!("5*x^2 - 3*x^3 + ({} + {}*i)*x", cc.re, cc.im));
        for l in [c(3.0, 1.0), c(-200.0, 40.0), c(500.0, 30.0)] {
            let wa = weyl_matrix(&a, l).unwrap();
            let wb = weyl_matrix(&b, l).unwrap();
            assert!((wb.entry(4, 1) - wa.entry(4, 1) - cc).norm() < 1e-8, "{cc} {l}");
            for (j, k) in [(2, 1), (3, 1), (3, 2), (4, 2), (4, 3)] {
                assert!((wb.entry(j, k) - wa.entry(j, k)).norm() < 1e-8 * wa.scale(), "m{j}{k} {cc} {l}");
            }
            let p0 = mapping_at_zero(&wa, &wb);
            assert!(unit_lower_deviation(&p0, &[]) < 1e-8);
            assert!(strict_lower_max(&p0, &[(4, 1)]) < 1e-8);
            assert!((p0[(3, 0)] + cc).norm() < 1e-8);
            for s in spectral_mapping(&a, &b, l).unwrap() {
                let p = &s.p_matrix;
                assert!(unit_lower_deviation(p, &[]) < 1e-7, "x = {}", s.x);
                assert!(strict_lower_max(p, &[(3, 1), (4, 1), (4, 2)]) < 1e-7, "x = {}", s.x);
                assert!((p[(2, 0)] + cc * s.x).norm() < 1e-7, "P31 at x = {}", s.x);
                assert!((p[(3, 0)] + cc).norm() < 1e-7, "P41 at x = {}", s.x);
                assert!((p[(3, 1)] - cc * s.x).norm() < 1e-7, "P42 at x = {}", s.x);
            }
        }
    }
}

#[test]
fn weight_matrices_follow_the_pole_sets() {
    let a = smooth();
    let st = SpectraSettings { lower_bound: None, ..Default::default() };
    let z = find_zeros(&a, &[(1, 1), (2, 2), (3, 3)], 4, &st).unwrap();
    // Λ₃ coincides with Λ₁ for this problem
    for (x, y) in z[0].lambdas().iter().zip(z[2].lambdas()) {
        assert!((x - y).norm() < 1e-8 * x.norm());
    }
    let poles: Vec<C64> = z.iter().flat_map(|l| l.lambdas()).collect();
    for (k, nonzero) in [(0, vec![(1, 0), (3, 2)]), (1, vec![(2, 1)])] {
        for l0 in z[k].lambdas().into_iter().take(3) {
            let lx = laurent_at(&a, l0, default_radius(l0, &poles), &poles).unwrap();
            assert!(lx.converged);
            let pc = check_weight_pattern(&lx);
            assert!(pc.holds(1e-9), "{l0}: {pc:?}");
            for &(s, j) in &nonzero {
                assert!(lx.weight[(s, j)].norm() > 1e-6 * pc.on_max, "N{}{} at {l0}", s + 1, j + 1);
            }
        }
    }
}

#[test]
fn laurent_rejects_enclosed_poles() {
    let a = smooth();
    let st = SpectraSettings { lower_bound: None, ..Default::default() };
    let z = find_zeros(&a, &[(2, 2)], 2, &st).unwrap();
    let l = z[0].lambdas();
    let r = 1.5 * (l[1] - l[0]).norm();
    assert!(matches!(
        laurent_at(&a, l[0], r, &l),
        Err(trispectra::error::Error::PoleInsideContour { .. })
    ));
}
