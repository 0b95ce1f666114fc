use std::f64::consts::PI;

use trispectra::coeffs::{CoefficientSpec, FnInput, MatrixKind, Regime};
use trispectra::linalg::c;
use trispectra::propagator::{Problem, SolverSettings};
use trispectra::spectra::{find_zeros, three_spectra, SpectraSettings};

/// Roots of `g` on `(a, b)` by plain bisection.
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// First `n` positive roots of `cos β sinh β ∓ sin β cosh β`, one per interval `(kπ, kπ + π/2)`.
fn beam_roots(n: usize, plus: bool) -> Vec<f64> {
    let g = |b: f64| {
        if plus {
            b.tan() - b.tanh()
        } else {
            b.tan() + b.tanh()
        }
    };
    (1..=n)
        .map(|k| {
            let base = k as f64 * PI;
            if plus {
                bisect(g, base + 1e-9, base + PI / 2.0 - 1e-9)
            } else {
                bisect(g, base - PI / 2.0 + 1e-9, base - 1e-9)
            }
        })
        .collect()
}

fn smooth_spec() -> CoefficientSpec {
    CoefficientSpec {
        tau1: Some(FnInput::Expr("2*sin(pi*x)".into())),
        tau2: Some(FnInput::Expr("5*x^2 - 3*x^3".into())),
        ..Default::default()
    }
}

#[test]
fn beam_spectra_match_bisection() {
    let p = Problem::zero();
    let s = three_spectra(&p, 5, &SpectraSettings::default()).unwrap();
    let b12 = beam_roots(5, true);
    let b23 = beam_roots(5, false);
    assert!((b12[0] - 3.92660231).abs() < 1e-7);
    assert!((b23[0] - 2.36502037).abs() < 1e-7);
    for k in 0..5 {
        let want = b12[k].powi(4);
        let got = s.s12.zeros[k].lambda;
        assert!((got - c(want, 0.0)).norm() <= 1e-7 * want, "S12[{k}] {got} vs {want}");
        let want = b23[k].powi(4);
        let got = s.s23.zeros[k].lambda;
        assert!((got - c(want, 0.0)).norm() <= 1e-7 * want, "S23[{k}] {got} vs {want}");
        let want = ((k + 1) as f64 * PI).powi(4);
        let got = s.s13.zeros[k].lambda;
        assert!((got - c(want, 0.0)).norm() <= 1e-8 * want, "S13[{k}] {got} vs {want}");
    }
}

#[test]
fn smooth_spectra_converge_under_refinement() {
    let spectra = |steps| {
        let settings = SolverSettings { steps, ..Default::default() };
        let p = Problem::from_spec(&smooth_spec(), Regime::W2m1W2m2, MatrixKind::Vladimirov, settings).unwrap();
        three_spectra(&p, 8, &SpectraSettings::default()).unwrap()
    };
    let coarse = spectra(512);
    let fine = spectra(2048);
    for ((name, a), (_, b)) in coarse.named().into_iter().zip(fine.named()) {
        assert!(!a.partial && a.zeros.len() == 8, "{name}");
        for (x, y) in a.zeros.iter().zip(&b.zeros) {
            assert!(x.flag.is_none(), "{name} {:?}", x.flag);
            assert!(x.lambda.im.abs() <= 1e-9 * x.lambda.norm(), "{name} {}", x.lambda);
            assert!((x.lambda - y.lambda).norm() <= 1e-9 * (1.0 + y.lambda.norm()), "{name} {} vs {}", x.lambda, y.lambda);
        }
    }
}

#[test]
fn many_s13_zeros() {
    let s = find_zeros(&Problem::zero(), &[(3, 2)], 128, &SpectraSettings::default()).unwrap();
    assert_eq!(s[0].zeros.len(), 128);
    for (k, z) in s[0].zeros.iter().enumerate() {
        let want = ((k + 1) as f64 * PI).powi(4);
        assert!((z.lambda - want).norm() <= 1e-10 * want, "{k}: {}", z.lambda);
    }
}
