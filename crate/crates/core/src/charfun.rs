//! Boundary forms, the characteristic determinants `Δ_jk(λ)` and their
//! leading-order asymptotics.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, mat4_from_real, sort_with_sign, Mat4, C64, ONE, ZERO};
use crate::propagator::{propagate_wedges, Anchor, Problem, QuasiFrame, Wedge};

/// Coefficient matrices of the linear forms `U_s(y) = (U y⃗)(0)_s`, `V_s(y) = (V y⃗)(1)_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct FormMatrices {
    pub u: Mat4,
    pub v: Mat4,
    /// Orders `p_{k,0}` of `U_k`.
    pub p0: [i32; 4],
    /// Orders `p_{k,1}` of `V_k`.
    pub p1: [i32; 4],
}

impl FormMatrices {
    /// `U = I`; `V` picks `y⁽³⁾, y⁽¹⁾, y⁽²⁾, y⁽⁰⁾` at `x = 1`.
    pub fn standard() -> Self {
        FormMatrices {
            u: Mat4::identity(),
            v: mat4_from_real([
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
            ]),
            p0: [0, 1, 2, 3],
            p1: [3, 1, 2, 0],
        }
    }

    /// `V⁻¹`; `V` is a permutation so this is its transpose.
    pub fn v_inverse(&self) -> Mat4 {
        self.v.transpose()
    }
}

/// `mant · exp(log)` with `|mant| = 1` (or `mant = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub mant: C64,
    pub log: f64,
}

impl Scaled {
    pub fn new(mant: C64, log: f64) -> Self {
        let n = mant.norm();
        if n == 0.0 || !n.is_finite() {
            return Scaled { mant, log: if n == 0.0 { 0.0 } else { log } };
        }
        Scaled {
            mant: mant / n,
            log: log + n.ln(),
        }
    }

    pub fn from_c64(z: C64) -> Self {
        Scaled::new(z, 0.0)
    }

    pub fn one() -> Self {
        Scaled { mant: ONE, log: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.mant == ZERO
    }

    /// Plain value; overflows to infinity past the double range.
    pub fn value(&self) -> C64 {
        if self.is_zero() {
            ZERO
        } else {
            self.mant * self.log.exp()
        }
    }

    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.log
        }
    }

    pub fn abs(&self) -> f64 {
        self.ln_abs().exp()
    }

    pub fn arg(&self) -> f64 {
        self.mant.arg()
    }

    /// Complex logarithm (principal branch of the mantissa).
    pub fn ln(&self) -> C64 {
        c(self.log, self.mant.arg())
    }

    pub fn mul(&self, o: &Scaled) -> Scaled {
        Scaled::new(self.mant * o.mant, self.log + o.log)
    }

    pub fn div(&self, o: &Scaled) -> Scaled {
        Scaled::new(self.mant / o.mant, self.log - o.log)
    }

    pub fn neg(&self) -> Scaled {
        Scaled {
            mant: -self.mant,
            log: self.log,
        }
    }

    pub fn scale(&self, z: C64) -> Scaled {
        Scaled::new(self.mant * z, self.log)
    }

    /// `self / o` as a plain number.
    pub fn ratio(&self, o: &Scaled) -> C64 {
        self.div(o).value()
    }

    /// `Σ wᵢ aᵢ` evaluated relative to the largest term.
    pub fn combine(terms: &[(C64, Scaled)]) -> Scaled {
        let top = terms
            .iter()
            .filter(|(_, s)| !s.is_zero())
            .map(|(_, s)| s.log)
            .fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Scaled::new(ZERO, 0.0);
        }
        let mut acc = ZERO;
        for (w, s) in terms {
            if !s.is_zero() {
                acc += w * s.mant * (s.log - top).exp();
            }
        }
        Scaled::new(acc, top)
    }

    /// `m.mmmmmme±X` without passing through `f64` overflow.
    pub fn sci(&self, digits: usize) -> String {
        if self.is_zero() {
            return format!("{:.*e}", digits, 0.0);
        }
        let l10 = self.log / std::f64::consts::LN_10;
        let mut e = l10.floor();
        let mut m = 10f64.powf(l10 - e);
        let rounded: f64 = format!("{:.*}", digits, m).parse().unwrap_or(m);
        if rounded >= 10.0 {
            m /= 10.0;
            e += 1.0;
        }
        format!("{:.*}e{}", digits, m, e as i64)
    }
}

impl fmt::Display for Scaled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) * exp({})", self.mant, self.log)
    }
}

/// Entry `(s, r)` is `V_s(C_r)` for a C-frame read at `x = 1`.
pub fn apply_forms(problem: &Problem, frame: &QuasiFrame) -> Result<Mat4> {
    if frame.anchor != Anchor::C {
        return Err(Error::Index("forms are applied to a C-frame".into()));
    }
    if (frame.mesh.last().copied().unwrap_or(0.0) - 1.0).abs() > 1e-12 {
        return Err(Error::Index("the C-frame must reach x = 1".into()));
    }
    Ok(problem.forms.v * frame.last())
}

fn check_index(j: usize, k: usize) -> Result<()> {
    if !(1..=4).contains(&k) || !(k..=4).contains(&j) {
        return Err(Error::Index(format!("Delta_{j}{k} needs 1 <= k <= j <= 4")));
    }
    Ok(())
}

/// Zero-based columns of `Δ_jk`: `C_{k+1}, …, C_4` with `C_j` replaced in place by `C_k`.
pub fn delta_columns(j: usize, k: usize) -> Vec<usize> {
    (k..4).map(|col| if j > k && col == j - 1 { k - 1 } else { col }).collect()
}

/// All `Δ_jk` requested at one `λ`, from a single sweep.
#[derive(Clone, Debug)]
pub struct CharSample {
    pub lambda: C64,
    /// `values[j-1][k-1]` for `k ≤ j`; `Δ₄₄ = 1`.
    values: [[Option<Scaled>; 4]; 4],
    /// `|Δ_kk|` relative to the norm of the wedge it is read from.
    pole_rel: [Option<f64>; 4],
}

impl CharSample {
    pub fn get(&self, j: usize, k: usize) -> Result<Scaled> {
        check_index(j, k)?;
        self.values[j - 1][k - 1].ok_or_else(|| Error::Index(format!("Delta_{j}{k} was not evaluated")))
    }

    pub fn pole_rel(&self, k: usize) -> Option<f64> {
        self.pole_rel.get(k - 1).copied().flatten()
    }
}

/// Evaluates the listed `Δ_jk` (1-based pairs) at `λ`.
pub fn evaluate(problem: &Problem, lambda: C64, which: &[(usize, usize)]) -> Result<CharSample> {
    let mut wedges: Vec<Wedge> = Vec::new();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    let mut values = [[None; 4]; 4];
    let mut pole_rel = [None; 4];
    for &(j, k) in which {
        check_index(j, k)?;
        if k == 4 {
            values[3][3] = Some(Scaled::one());
            pole_rel[3] = Some(1.0);
            continue;
        }
        if slots.contains(&(j, k)) {
            continue;
        }
        let cols = delta_columns(j, k);
        wedges.push(Wedge::unit(&cols));
        slots.push((j, k));
    }
    if !wedges.is_empty() {
        propagate_wedges(problem, lambda, &mut wedges, false)?;
    }
    for (w, &(j, k)) in wedges.iter().zip(slots.iter()) {
        let rows: Vec<usize> = (k..4).collect();
        let (mant, log) = w.project(&problem.forms.v, &rows);
        values[j - 1][k - 1] = Some(Scaled::new(mant, log));
        if j == k {
            pole_rel[k - 1] = Some(mant.norm() / w.norm().max(f64::MIN_POSITIVE));
        }
    }
    Ok(CharSample {
        lambda,
        values,
        pole_rel,
    })
}

/// Every `Δ_jk`, `1 ≤ k ≤ j ≤ 4`.
pub fn evaluate_all(problem: &Problem, lambda: C64) -> Result<CharSample> {
    let mut which = Vec::with_capacity(10);
    for k in 1..=4 {
        for j in k..=4 {
            which.push((j, k));
        }
    }
    evaluate(problem, lambda, &which)
}

pub fn delta(j: usize, k: usize, lambda: C64, problem: &Problem) -> Result<Scaled> {
    evaluate(problem, lambda, &[(j, k)])?.get(j, k)
}

/// `Δ_jk(λ)` as a plain number.
pub fn delta_value(j: usize, k: usize, lambda: C64, problem: &Problem) -> Result<C64> {
    Ok(delta(j, k, lambda, problem)?.value())
}

/// `dΔ/dλ` by the four-point rule on a circle of radius `r` around `λ`.
pub fn derivative<F>(f: &F, lambda: C64, r: f64) -> Result<Scaled>
where
    F: Fn(C64) -> Result<Scaled>,
{
    let dirs = [ONE, c(0.0, 1.0), -ONE, c(0.0, -1.0)];
    let mut terms = Vec::with_capacity(4);
    for d in dirs {
        let v = f(lambda + d * r)?;
        // weight conj(d) / (4r)
        terms.push((d.conj() / (4.0 * r), v));
    }
    Ok(Scaled::combine(&terms))
}

/// Default stencil radius for `Δ'`: small against the zero spacing `~4|λ|^{3/4}`.
pub fn stencil_radius(lambda: C64) -> f64 {
    1e-3 * (4.0 * lambda.norm().powf(0.75)).max(1.0)
}

/// Ordering of the fourth roots of unity on a sector of the `ρ`-plane.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticModel {
    /// `Γ_k = {kπ/4 < arg ρ < (k+1)π/4}`, `k = 0..7`.
    pub sector: usize,
    /// `Re(ρω₁) < … < Re(ρω₄)`.
    pub omega: [C64; 4],
    /// `s_j = Σ_{k>j} ω_k`.
    pub s: [C64; 4],
    pub det_omega: C64,
    pub p0: [i32; 4],
    pub p1: [i32; 4],
}

fn perm_sign(p: &[usize]) -> f64 {
    sort_with_sign(p).1 as f64
}

fn det_small(m: &[Vec<C64>]) -> C64 {
    let n = m.len();
    match n {
        0 => ONE,
        1 => m[0][0],
        _ => {
            let mut acc = ZERO;
            for col in 0..n {
                let sub: Vec<Vec<C64>> = m[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|(k, _)| *k != col).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                acc += m[0][col] * det_small(&sub) * sign;
            }
            acc
        }
    }
}

impl AsymptoticModel {
    /// Model for the sector containing `ρ`; rays `arg ρ = kπ/4` are rejected.
    pub fn for_rho(rho: C64, forms: &FormMatrices) -> Result<Self> {
        let th = rho.arg().rem_euclid(2.0 * PI);
        let q = th / (PI / 4.0);
        if (q - q.round()).abs() < 1e-9 || rho.norm() == 0.0 {
            return Err(Error::SectorBoundary(rho));
        }
        let sector = (q.floor() as usize) % 8;
        let mut omega = [ONE, c(0.0, 1.0), -ONE, c(0.0, -1.0)];
        // order by Re(ρω) on the bisector, so the model depends on the sector only
        let mid = C64::from_polar(1.0, (sector as f64 + 0.5) * PI / 4.0);
        omega.sort_by(|a, b| (mid * a).re.partial_cmp(&(mid * b).re).expect("finite"));
        let mut s = [ZERO; 4];
        for j in 0..4 {
            s[j] = omega[j + 1..].iter().copied().sum();
        }
        let om: Vec<Vec<C64>> = (0..4).map(|r| (0..4).map(|k| omega[k].powi(r)).collect()).collect();
        Ok(AsymptoticModel {
            sector,
            omega,
            s,
            det_omega: det_small(&om),
            p0: forms.p0,
            p1: forms.p1,
        })
    }

    /// Whether the sector is the one whose constants are tabulated independently.
    pub fn validated(&self) -> bool {
        self.sector == 0
    }

    /// `a_ij = Σ_{k<j} p_{k,0} + Σ_{k>j} p_{k,1} + p_{i,0} − 6`.
    pub fn exponent(&self, i: usize, j: usize) -> i32 {
        let a: i32 = (1..j).map(|k| self.p0[k - 1]).sum();
        let b: i32 = (j + 1..=4).map(|k| self.p1[k - 1]).sum();
        a + b + self.p0[i - 1] - 6
    }

    /// The determinant formula as it stands, which orders the columns of the
    /// minor by sorted index.
    pub fn constant_sorted(&self, i: usize, j: usize) -> C64 {
        let mut forms: Vec<usize> = (1..j).collect();
        forms.push(i);
        let left: Vec<Vec<C64>> = forms
            .iter()
            .map(|&s| (0..j).map(|k| self.omega[k].powi(self.p0[s - 1])).collect())
            .collect();
        let right: Vec<Vec<C64>> = (j + 1..=4)
            .map(|s| (j..4).map(|k| self.omega[k].powi(self.p1[s - 1])).collect())
            .collect();
        det_small(&left) * det_small(&right) / self.det_omega
    }

    /// Sign relating [`Self::constant_sorted`] to `Δ_ij` built with in-place column replacement.
    pub fn orientation(&self, i: usize, j: usize) -> f64 {
        let mut head: Vec<usize> = (1..j).collect();
        head.push(i);
        let mut rest: Vec<usize> = (1..=4).filter(|k| !head.contains(k)).collect();
        rest.sort_unstable();
        let mut full = head;
        full.extend(rest);
        let cols = delta_columns(i, j);
        perm_sign(&full) * perm_sign(&cols)
    }

    /// Leading constant of `Δ_ij` as computed by [`delta`].
    pub fn constant(&self, i: usize, j: usize) -> C64 {
        self.constant_sorted(i, j) * self.orientation(i, j)
    }

    /// `c ρ^a e^{ρ s_j}` in scaled form.
    pub fn leading(&self, i: usize, j: usize, rho: C64, constant: C64) -> Scaled {
        let a = self.exponent(i, j) as f64;
        let lnz = constant.ln() + rho.ln() * a + rho * self.s[j - 1];
        Scaled::new(C64::from_polar(1.0, lnz.im), lnz.re)
    }
}

/// `c_ij ρ^{a_ij} e^{ρ s_j}` with the constant matching [`delta`]'s orientation.
pub fn asymptotic_model(i: usize, j: usize, rho: C64, model: &AsymptoticModel) -> Result<Scaled> {
    check_asym_index(i, j)?;
    let m = AsymptoticModel::for_rho(rho, &FormMatrices {
        p0: model.p0,
        p1: model.p1,
        ..FormMatrices::standard()
    })?;
    if m.sector != model.sector {
        return Err(Error::SectorBoundary(rho));
    }
    Ok(model.leading(i, j, rho, model.constant(i, j)))
}

fn check_asym_index(i: usize, j: usize) -> Result<()> {
    check_index(i, j)?;
    if j == 4 {
        return Err(Error::Index("Delta_44 = 1 has no exponential asymptotics".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub radius: f64,
    pub ratio: f64,
    pub deviation: f64,
}

/// `|Δ_ij(ρ⁴) / (c ρ^a e^{ρ s_j})|` along the ray `arg ρ = ray_angle`.
pub fn verify_asymptotics(problem: &Problem, i: usize, j: usize, ray_angle: f64, radii: &[f64]) -> Result<Vec<AsymptoticRow>> {
    check_asym_index(i, j)?;
    let model = AsymptoticModel::for_rho(C64::from_polar(1.0, ray_angle), &problem.forms)?;
    let mut out = Vec::with_capacity(radii.len());
    let mut last_valid = None;
    for &radius in radii {
        let rho = C64::from_polar(radius, ray_angle);
        let lambda = rho.powi(4);
        let d = match delta(i, j, lambda, problem) {
            Ok(d) => d,
            Err(Error::NonFiniteState { .. }) => return Err(Error::AsymptoticOverflow { last_valid }),
            Err(e) => return Err(e),
        };
        let m = model.leading(i, j, rho, model.constant(i, j));
        let ratio = d.div(&m).abs();
        if !ratio.is_finite() {
            return Err(Error::AsymptoticOverflow { last_valid });
        }
        last_valid = Some(radius);
        out.push(AsymptoticRow {
            radius,
            ratio,
            deviation: (ratio - 1.0).abs(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::r;
    use crate::propagator::solutions_c;

    const TOL: f64 = 1e-12;

    #[test]
    fn form_matrices() {
        let f = FormMatrices::standard();
        assert_eq!(f.u, Mat4::identity());
        assert_eq!(f.v * f.v, Mat4::identity());
        let mut a = f.p0;
        let mut b = f.p1;
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, [0, 1, 2, 3]);
        assert_eq!(b, [0, 1, 2, 3]);
    }

    #[test]
    fn forms_at_zero_lambda() {
        let p = Problem::zero();
        let fr = solutions_c(&p, ZERO).unwrap();
        let m = apply_forms(&p, &fr).unwrap();
        // rows V₁..V₄, columns C₁..C₄
        assert!((m[(2, 2)] - ONE).norm() < TOL);
        assert!((m[(3, 2)] - r(0.5)).norm() < TOL);
        assert!((m[(2, 3)] - ONE).norm() < TOL);
        assert!((m[(3, 3)] - r(1.0 / 6.0)).norm() < TOL);
        assert!((m[(3, 0)] - ONE).norm() < TOL);
        assert_eq!(m.row(1), (p.forms.v * fr.last()).row(1));
    }

    #[test]
    fn column_lists() {
        assert_eq!(delta_columns(2, 2), vec![2, 3]);
        assert_eq!(delta_columns(3, 2), vec![1, 3]);
        assert_eq!(delta_columns(4, 2), vec![2, 1]);
        assert_eq!(delta_columns(3, 1), vec![1, 0, 3]);
        assert_eq!(delta_columns(4, 3), vec![2]);
        assert!(delta_columns(4, 4).is_empty());
    }

    #[test]
    fn spot_values_at_zero() {
        let p = Problem::zero();
        let s = evaluate_all(&p, ZERO).unwrap();
        let v = |j, k| s.get(j, k).unwrap().value();
        assert!((v(2, 2) - r(-1.0 / 3.0)).norm() < TOL);
        assert!((v(3, 2) - r(-1.0)).norm() < TOL);
        assert!((v(1, 1) - r(1.0 / 6.0)).norm() < TOL);
        assert!((v(2, 1) - r(0.5)).norm() < TOL);
        assert!((v(3, 1) - r(-1.0)).norm() < TOL);
        assert!((v(4, 2) - r(1.0)).norm() < TOL);
        assert_eq!(v(4, 4), ONE);
        assert!(matches!(delta(1, 2, ZERO, &p), Err(Error::Index(_))));
        assert!(matches!(delta(5, 1, ZERO, &p), Err(Error::Index(_))));
    }

    #[test]
    fn closed_forms_for_zero_coefficients() {
        let p = Problem::zero();
        for lambda in [c(500.0, 0.0), c(-3000.0, 200.0), c(12.0, -40.0)] {
            let rho = lambda.sqrt().sqrt();
            let s = evaluate_all(&p, lambda).unwrap();
            let d32 = -rho.sinh() * rho.sin() / (rho * rho);
            let d22 = (rho.cos() * rho.sinh() - rho.cosh() * rho.sin()) / (rho.powi(3) * 2.0);
            let d42 = (rho.cosh() * rho.sin() + rho.cos() * rho.sinh()) / (rho * 2.0);
            let d33 = (rho.sinh() - rho.sin()) / (rho.powi(3) * 2.0);
            for (got, want) in [
                (s.get(3, 2).unwrap().value(), d32),
                (s.get(2, 2).unwrap().value(), d22),
                (s.get(4, 2).unwrap().value(), d42),
                (s.get(3, 3).unwrap().value(), d33),
            ] {
                assert!((got - want).norm() < 1e-11 * want.norm().max(1.0), "{lambda}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn tabulated_constants_on_first_sector() {
        let m = AsymptoticModel::for_rho(C64::from_polar(1.0, PI / 8.0), &FormMatrices::standard()).unwrap();
        assert_eq!(m.omega, [-ONE, c(0.0, 1.0), c(0.0, -1.0), ONE]);
        assert_eq!(m.s[1], c(1.0, -1.0));
        assert_eq!(m.s[3], ZERO);
        assert!((m.det_omega - c(0.0, -16.0)).norm() < 1e-12);
        assert_eq!((m.exponent(2, 2), m.exponent(3, 2), m.exponent(4, 2)), (-3, -2, -1));
        assert!((m.constant_sorted(2, 2) - c(0.125, -0.125)).norm() < 1e-15);
        assert!((m.constant_sorted(3, 2) - c(0.0, 0.25)).norm() < 1e-15);
        assert!((m.constant_sorted(4, 2) - c(-0.125, -0.125)).norm() < 1e-15);
        // in-place columns flip (3,2) and (4,2)
        assert_eq!(m.orientation(2, 2), 1.0);
        assert_eq!(m.orientation(3, 2), -1.0);
        assert_eq!(m.orientation(4, 2), -1.0);
    }

    #[test]
    fn sector_boundary_rejected() {
        let f = FormMatrices::standard();
        assert!(matches!(AsymptoticModel::for_rho(C64::from_polar(2.0, PI / 4.0), &f), Err(Error::SectorBoundary(_))));
        assert!(matches!(AsymptoticModel::for_rho(c(3.0, 0.0), &f), Err(Error::SectorBoundary(_))));
    }

    #[test]
    fn asymptotics_converge_for_zero_coefficients() {
        let p = Problem::zero();
        for (i, j) in [(2, 2), (3, 2), (4, 2), (2, 1), (3, 3)] {
            let rows = verify_asymptotics(&p, i, j, PI / 8.0, &[10.0, 20.0, 30.0]).unwrap();
            assert!(rows[2].deviation < 0.05, "({i},{j}): {rows:?}");
        }
        assert!(matches!(verify_asymptotics(&p, 4, 4, PI / 8.0, &[10.0]), Err(Error::Index(_))));
    }

    #[test]
    fn scaled_arithmetic() {
        let a = Scaled::new(c(3.0, 4.0), 700.0);
        let b = Scaled::new(c(0.0, 2.0), 710.0);
        let q = a.ratio(&b);
        let want = c(3.0, 4.0) / c(0.0, 2.0) * (-10.0f64).exp();
        assert!((q - want).norm() < 1e-12 * want.norm());
        assert_eq!(Scaled::new(ZERO, 5.0).value(), ZERO);
        assert_eq!(Scaled::from_c64(c(2.5, 0.0)).sci(3), "2.500e0");
        assert_eq!(Scaled::new(ONE, 1000.0 * std::f64::consts::LN_10).sci(2), "1.00e1000");
    }

    #[test]
    fn conjugate_symmetry_for_real_coefficients() {
        use crate::coeffs::{CoefficientSpec, FnInput, MatrixKind, Regime};
        use crate::propagator::SolverSettings;
        let spec = CoefficientSpec {
            tau1: Some(FnInput::expr("2*sin(pi*x)")),
            tau2: Some(FnInput::expr("5x^2 - 3x^3")),
            ..Default::default()
        };
        let p = Problem::from_spec(&spec, Regime::W2m1W2m2, MatrixKind::Vladimirov, SolverSettings::default()).unwrap();
        let lambda = c(150.0, 60.0);
        for (j, k) in [(2, 2), (3, 2), (4, 2)] {
            let a = delta_value(j, k, lambda, &p).unwrap();
            let b = delta_value(j, k, lambda.conj(), &p).unwrap();
            assert!((a - b.conj()).norm() < 1e-10 * a.norm());
        }
    }
}
