//! The Weyl–Yurko matrix `M(λ)`, its algebraic identities, Laurent data at
//! poles and the matrix of spectral mappings between two problems.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfun::{evaluate, evaluate_all, FormMatrices, Scaled};
use crate::coeffs::star_transform;
use crate::error::{Error, Result};
use crate::linalg::{bracket_j, c, j0, j1, max_abs, Mat4, C64, ONE, ZERO};
use crate::propagator::{solutions_c, solutions_s, Anchor, Problem, QuasiFrame};

/// `|Δ_kk|` relative to its wedge norm below which `λ` counts as a pole.
pub const POLE_GUARD: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct WeylSample {
    pub lambda: C64,
    /// Unit lower-triangular, `m_jk = −Δ_jk / Δ_kk`.
    pub m: Mat4,
    /// `Δ₁₁, Δ₂₂, Δ₃₃`.
    pub diag: [Scaled; 3],
    pub pole_rel: [f64; 3],
}

impl WeylSample {
    pub fn entry(&self, j: usize, k: usize) -> C64 {
        self.m[(j - 1, k - 1)]
    }

    /// Identity-check scale: products of two entries appear in `MᵀJ₀M`.
    pub fn scale(&self) -> f64 {
        max_abs(&self.m).max(1.0).powi(2)
    }
}

/// `M(λ)`, rejecting `λ` within the pole guard of any `Δ_kk`.
pub fn weyl_matrix(problem: &Problem, lambda: C64) -> Result<WeylSample> {
    let s = evaluate_all(problem, lambda)?;
    let mut m = Mat4::identity();
    let mut diag = [Scaled::one(); 3];
    let mut pole_rel = [1.0; 3];
    for k in 1..=3 {
        let rel = s.pole_rel(k).unwrap_or(0.0);
        if !(rel >= POLE_GUARD) {
            return Err(Error::NearPole { lambda, k, rel });
        }
        let dkk = s.get(k, k)?;
        diag[k - 1] = dkk;
        pole_rel[k - 1] = rel;
        for j in k + 1..=4 {
            m[(j - 1, k - 1)] = -s.get(j, k)?.ratio(&dkk);
        }
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFiniteState { lambda, x: 1.0 });
    }
    Ok(WeylSample {
        lambda,
        m,
        diag,
        pole_rel,
    })
}

/// Weyl solutions `Φ = C M` at every grid node.
pub fn weyl_solutions(problem: &Problem, lambda: C64) -> Result<QuasiFrame> {
    let w = weyl_matrix(problem, lambda)?;
    let cf = solutions_c(problem, lambda)?;
    let mut columns = Vec::with_capacity(cf.columns.len());
    for (i, &x) in cf.mesh.iter().enumerate() {
        let phi = cf.at(i) * w.m;
        if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteState { lambda, x });
        }
        columns.push(phi);
    }
    Ok(QuasiFrame {
        lambda,
        anchor: Anchor::Weyl,
        log_scale: vec![[0.0; 4]; columns.len()],
        mesh: cf.mesh,
        columns,
    })
}

/// `MᵀJ₀M − J₀`.
pub fn symplectic_residual(m: &Mat4) -> Mat4 {
    m.transpose() * j0() * m - j0()
}

/// Largest entry of [`symplectic_residual`].
pub fn check_symplectic(sample: &WeylSample) -> f64 {
    max_abs(&symplectic_residual(&sample.m))
}

/// `|m₄₃ − m₂₁|`
pub fn real1_deviation(m: &Mat4) -> f64 {
    (m[(3, 2)] - m[(1, 0)]).norm()
}

/// `|m₄₂ − m₃₂m₂₁ + m₃₁|`
pub fn real2_deviation(m: &Mat4) -> f64 {
    (m[(3, 1)] - m[(2, 1)] * m[(1, 0)] + m[(2, 0)]).norm()
}

/// Both sides of `U₂(S₁)U₃(S₂) − U₃(S₁)U₂(S₂) = U₁(S₁)U₄(S₂) − U₄(S₁)U₁(S₂)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Ident1 {
    pub lhs: C64,
    pub rhs: C64,
    /// Largest of the four products involved.
    pub scale: f64,
}

impl Ident1 {
    pub fn deviation(&self) -> f64 {
        (self.lhs - self.rhs).norm() / self.scale.max(1.0)
    }
}

pub fn ident1(problem: &Problem, lambda: C64) -> Result<Ident1> {
    let sf = solutions_s(problem, lambda)?;
    let u = problem.forms.u * sf.last();
    let us = |s: usize, k: usize| u[(s - 1, k - 1)];
    let terms = [
        us(2, 1) * us(3, 2),
        us(3, 1) * us(2, 2),
        us(1, 1) * us(4, 2),
        us(4, 1) * us(1, 2),
    ];
    Ok(Ident1 {
        lhs: terms[0] - terms[1],
        rhs: terms[2] - terms[3],
        scale: terms.iter().map(|t| t.norm()).fold(0.0, f64::max),
    })
}

/// Deviations of `U* = [J U⁻¹ J₀⁻¹]ᵀ` from `U` and `V* = [J V⁻¹ J₁⁻¹]ᵀ` from `V`.
pub fn forms_self_test(forms: &FormMatrices) -> Result<(f64, f64)> {
    let inv = |m: &Mat4| m.try_inverse().ok_or_else(|| Error::Config("singular boundary form matrix".into()));
    let j = bracket_j();
    let u_star = (j * inv(&forms.u)? * inv(&j0())?).transpose();
    let v_star = (j * inv(&forms.v)? * inv(&j1())?).transpose();
    Ok((max_abs(&(u_star - forms.u)), max_abs(&(v_star - forms.v))))
}

/// Largest `|F*(x) − F(x)|` over the problem's grid.
pub fn star_self_test(problem: &Problem) -> f64 {
    problem
        .grid()
        .iter()
        .map(|&x| {
            let f = problem.matrix.eval(x);
            max_abs(&(star_transform(&f) - f))
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct LaurentExpansion {
    pub lambda0: C64,
    pub radius: f64,
    pub m_minus1: Mat4,
    pub m_0: Mat4,
    /// `𝒩(λ₀) = M⟨0⟩⁻¹ M⟨−1⟩`
    pub weight: Mat4,
    /// Which of `Λ₁, Λ₂, Λ₃` contain `λ₀`.
    pub membership: [bool; 3],
    /// Relative change of the coefficients between 64 and 128 nodes.
    pub quadrature_change: f64,
    pub converged: bool,
}

/// Half the distance from `lambda0` to the nearest other pole.
pub fn default_radius(lambda0: C64, poles: &[C64]) -> f64 {
    let tol = 1e-10 * (1.0 + lambda0.norm());
    let d = poles
        .iter()
        .map(|p| (p - lambda0).norm())
        .filter(|&d| d > tol)
        .fold(f64::INFINITY, f64::min);
    if d.is_finite() {
        0.5 * d
    } else {
        0.25 * lambda0.norm().max(1.0).powf(0.75)
    }
}

fn trapezoid(samples: &[(C64, Mat4)], lambda0: C64) -> (Mat4, Mat4) {
    let k = samples.len() as f64;
    let mut m1 = Mat4::zeros();
    for (l, m) in samples {
        m1 += m * (l - lambda0);
    }
    m1 /= c(k, 0.0);
    let mut m0 = Mat4::zeros();
    for (l, m) in samples {
        m0 += m - m1 / (l - lambda0);
    }
    m0 /= c(k, 0.0);
    (m1, m0)
}

/// Membership of `λ₀` in `Λ_k`: `|Δ_kk(λ₀)|` is negligible against its size on a circle of radius `r`.
pub fn pole_membership(problem: &Problem, lambda0: C64, r: f64) -> Result<[bool; 3]> {
    let which = [(1, 1), (2, 2), (3, 3)];
    let at = evaluate(problem, lambda0, &which)?;
    let mut top = [f64::NEG_INFINITY; 3];
    for q in 0..8 {
        let p = lambda0 + C64::from_polar(r, (q as f64 + 0.5) * PI / 4.0);
        let s = evaluate(problem, p, &which)?;
        for k in 0..3 {
            top[k] = top[k].max(s.get(k + 1, k + 1)?.ln_abs());
        }
    }
    let mut out = [false; 3];
    for k in 0..3 {
        out[k] = at.get(k + 1, k + 1)?.ln_abs() - top[k] < (1e-6f64).ln();
    }
    Ok(out)
}

/// Laurent coefficients `M⟨−1⟩`, `M⟨0⟩` at the pole `λ₀` by trapezoidal
/// quadrature on a circle; `poles` lists the known poles for the enclosure check.
pub fn laurent_at(problem: &Problem, lambda0: C64, radius: f64, poles: &[C64]) -> Result<LaurentExpansion> {
    let same = 1e-10 * (1.0 + lambda0.norm());
    if let Some(other) = poles.iter().find(|p| {
        let d = (*p - lambda0).norm();
        d > same && d <= radius
    }) {
        return Err(Error::PoleInsideContour {
            center: lambda0,
            other: *other,
        });
    }
    let n = 128;
    let samples: Vec<(C64, Mat4)> = (0..n)
        .into_par_iter()
        .map(|q| {
            let l = lambda0 + C64::from_polar(radius, 2.0 * PI * q as f64 / n as f64);
            weyl_matrix(problem, l).map(|w| (l, w.m))
        })
        .collect::<Result<_>>()?;
    let coarse: Vec<(C64, Mat4)> = samples.iter().step_by(2).copied().collect();
    let (m1, m0) = trapezoid(&samples, lambda0);
    let (c1, c0) = trapezoid(&coarse, lambda0);
    let change = (max_abs(&(m1 - c1)) + max_abs(&(m0 - c0))) / (max_abs(&m1) + max_abs(&m0)).max(f64::MIN_POSITIVE);
    // M⟨0⟩ is unit lower-triangular up to quadrature error
    let weight = m0
        .solve_lower_triangular(&m1)
        .ok_or(Error::NonFiniteState { lambda: lambda0, x: 1.0 })?;
    Ok(LaurentExpansion {
        lambda0,
        radius,
        m_minus1: m1,
        m_0: m0,
        weight,
        membership: pole_membership(problem, lambda0, radius)?,
        quadrature_change: change,
        converged: change <= 1e-8,
    })
}

/// Entries of `𝒩(λ₀)` allowed to be nonzero: `(s, j)` with `s > j` and
/// `λ₀ ∈ Λ_k` for every `j ≤ k < s`.
pub fn weight_pattern(membership: [bool; 3]) -> [[bool; 4]; 4] {
    let mut p = [[false; 4]; 4];
    for s in 0..4 {
        for j in 0..s {
            p[s][j] = (j..s).all(|k| membership[k]);
        }
    }
    p
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PatternCheck {
    pub on_max: f64,
    pub off_max: f64,
}

impl PatternCheck {
    pub fn holds(&self, rel: f64) -> bool {
        self.on_max > 0.0 && self.off_max <= rel * self.on_max
    }
}

pub fn check_weight_pattern(l: &LaurentExpansion) -> PatternCheck {
    let p = weight_pattern(l.membership);
    let mut on_max = 0.0f64;
    let mut off_max = 0.0f64;
    for s in 0..4 {
        for j in 0..4 {
            let v = l.weight[(s, j)].norm();
            if p[s][j] {
                on_max = on_max.max(v);
            } else {
                off_max = off_max.max(v);
            }
        }
    }
    PatternCheck { on_max, off_max }
}

#[derive(Clone, Debug)]
pub struct MappingSample {
    pub x: f64,
    pub lambda: C64,
    pub p_matrix: Mat4,
}

/// `𝒫(x, λ) = Φ J₀⁻¹ Φ̃ᵀ J` at the grid nodes shared by both problems.
pub fn spectral_mapping(a: &Problem, b: &Problem, lambda: C64) -> Result<Vec<MappingSample>> {
    let fa = weyl_solutions(a, lambda)?;
    let fb = weyl_solutions(b, lambda)?;
    let j0_inv = j0().try_inverse().expect("J0 is a signed permutation");
    let j = bracket_j();
    let mut out = Vec::new();
    let mut ib = 0;
    for (ia, &x) in fa.mesh.iter().enumerate() {
        while ib < fb.mesh.len() && fb.mesh[ib] < x - 1e-12 {
            ib += 1;
        }
        if ib < fb.mesh.len() && (fb.mesh[ib] - x).abs() <= 1e-12 {
            out.push(MappingSample {
                x,
                lambda,
                p_matrix: fa.columns[ia] * j0_inv * fb.columns[ib].transpose() * j,
            });
        }
    }
    Ok(out)
}

/// `𝒫(0) = M J₀⁻¹ M̃ᵀ J`, from the Weyl matrices alone.
pub fn mapping_at_zero(a: &WeylSample, b: &WeylSample) -> Mat4 {
    let j0_inv = j0().try_inverse().expect("J0 is a signed permutation");
    a.m * j0_inv * b.m.transpose() * bracket_j()
}

/// Largest deviation of a matrix from unit lower-triangular form, ignoring `skip` (1-based).
pub fn unit_lower_deviation(m: &Mat4, skip: &[(usize, usize)]) -> f64 {
    let mut dev = 0.0f64;
    for r in 0..4 {
        for k in 0..4 {
            if skip.contains(&(r + 1, k + 1)) {
                continue;
            }
            let want = if r == k { ONE } else { ZERO };
            if r <= k {
                dev = dev.max((m[(r, k)] - want).norm());
            }
        }
    }
    dev
}

/// Largest strict-lower entry outside `skip` (1-based).
pub fn strict_lower_max(m: &Mat4, skip: &[(usize, usize)]) -> f64 {
    let mut v = 0.0f64;
    for r in 0..4 {
        for k in 0..r {
            if !skip.contains(&(r + 1, k + 1)) {
                v = v.max(m[(r, k)].norm());
            }
        }
    }
    v
}
