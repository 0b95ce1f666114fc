//! Integration of the first-order quasi-derivative system `Y' = (F(x) + λ E₄₁) Y`.
//!
//! Steps use the fourth-order Magnus scheme with two Gauss nodes. Coefficient
//! values at the Gauss nodes do not depend on `λ` and are cached per problem.
//! For every `λ` the step exponentials are computed on the balanced matrix
//! `D⁻¹ Ω D` with `D = diag(1, s, s², s³)`, `s = max(1, |λ|^{1/4})`.

use std::sync::Arc;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::charfun::FormMatrices;
use crate::coeffs::{build_coefficients, build_matrix, CoefficientModel, CoefficientSpec, MatrixKind, Regime, RegularizationMatrix};
use crate::error::{Error, Result};
use crate::linalg::{basis, bracket_j, sort_with_sign, Compound, Mat4, C64, ONE, ZERO};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const GAUSS_LO: f64 = 0.5 - SQRT3 / 6.0;
const GAUSS_HI: f64 = 0.5 + SQRT3 / 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Nodes of the coefficient mesh used for cumulative quadrature.
    pub mesh_nodes: usize,
    /// Uniform integration steps on `[0, 1]` before breakpoints are inserted.
    pub steps: usize,
    /// Upper bound for `|λ|^{1/4} h`; longer steps are subdivided.
    pub max_rho_step: f64,
    /// Above this `|λ|^{1/4}` raw frames are renormalized column by column.
    pub renorm_threshold: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            mesh_nodes: crate::coeffs::DEFAULT_MESH_NODES,
            steps: 512,
            max_rho_step: 1.0,
            renorm_threshold: 40.0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if self.mesh_nodes < 2 || self.steps < 1 {
            return Err(Error::Config("solver mesh_nodes must be >= 2 and steps >= 1".into()));
        }
        if !(self.max_rho_step > 0.0) || !(self.renorm_threshold > 0.0) {
            return Err(Error::Config("solver max_rho_step and renorm_threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Step {
    a: f64,
    b: f64,
    /// `(F(g₁) + F(g₂)) / 2`
    mean: Mat4,
    /// `[F(g₂), F(g₁)]`
    comm: Mat4,
    /// `F(g₁) - F(g₂)`
    diff: Mat4,
    constant: bool,
}

impl Step {
    fn new(f: &RegularizationMatrix, a: f64, b: f64) -> Self {
        let h = b - a;
        let constant = f.constant_on(a, b);
        if constant {
            let m = f.eval(0.5 * (a + b));
            return Step {
                a,
                b,
                mean: m,
                comm: Mat4::zeros(),
                diff: Mat4::zeros(),
                constant,
            };
        }
        let f1 = f.eval(a + GAUSS_LO * h);
        let f2 = f.eval(a + GAUSS_HI * h);
        Step {
            a,
            b,
            mean: (f1 + f2) * C64::new(0.5, 0.0),
            comm: f2 * f1 - f1 * f2,
            diff: f1 - f2,
            constant,
        }
    }

    fn h(&self) -> f64 {
        self.b - self.a
    }

    /// Magnus exponent `Ω` for this step at `λ`.
    fn omega(&self, lambda: C64) -> Mat4 {
        let h = self.h();
        let mut om = self.mean * C64::new(h, 0.0);
        om[(3, 0)] += lambda * h;
        if !self.constant {
            // [A₂, A₁] = [F₂, F₁] + λ [E, F₁ - F₂]
            let mut ec = self.comm;
            let g = &self.diff;
            for j in 0..4 {
                ec[(3, j)] += lambda * g[(0, j)];
            }
            for i in 0..4 {
                ec[(i, 0)] -= lambda * g[(i, 3)];
            }
            om += ec * C64::new(SQRT3 / 12.0 * h * h, 0.0);
        }
        om
    }

    /// `∂Ω/∂λ`.
    fn omega_lambda(&self) -> Mat4 {
        let h = self.h();
        let mut d = Mat4::zeros();
        d[(3, 0)] = C64::new(h, 0.0);
        if !self.constant {
            let k = SQRT3 / 12.0 * h * h;
            let g = &self.diff;
            for j in 0..4 {
                d[(3, j)] += g[(0, j)] * k;
            }
            for i in 0..4 {
                d[(i, 0)] -= g[(i, 3)] * k;
            }
        }
        d
    }
}

#[derive(Clone, Debug)]
struct Plan {
    fine: Vec<Step>,
    coarse: Vec<Step>,
}

impl Plan {
    fn build(f: &RegularizationMatrix, steps: usize) -> Self {
        let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        nodes.extend(f.kinks());
        nodes.extend(f.breakpoints().iter().copied());
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
        let fine: Vec<Step> = nodes.windows(2).map(|w| Step::new(f, w[0], w[1])).collect();

        let mut coarse: Vec<Step> = Vec::new();
        for s in &fine {
            if let Some(last) = coarse.last_mut() {
                if last.constant && s.constant && last.mean == s.mean {
                    last.b = s.b;
                    continue;
                }
            }
            coarse.push(s.clone());
        }
        Plan { fine, coarse }
    }

    fn nodes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.fine.iter().map(|s| s.a).collect();
        v.push(1.0);
        v
    }
}

/// An operator: coefficients, regularization matrix, boundary forms and the
/// cached integration plan.
#[derive(Clone, Debug)]
pub struct Problem {
    pub matrix: RegularizationMatrix,
    pub forms: FormMatrices,
    pub settings: SolverSettings,
    plan: Arc<Plan>,
}

impl Problem {
    pub fn new(matrix: RegularizationMatrix, settings: SolverSettings) -> Self {
        let plan = Arc::new(Plan::build(&matrix, settings.steps));
        Problem {
            matrix,
            forms: FormMatrices::standard(),
            settings,
            plan,
        }
    }

    pub fn from_spec(spec: &CoefficientSpec, regime: Regime, kind: MatrixKind, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let model = build_coefficients(spec, regime, settings.mesh_nodes)?;
        Ok(Self::new(build_matrix(Arc::new(model), kind)?, settings))
    }

    /// `τ₁ = τ₂ = 0`.
    pub fn zero() -> Self {
        let settings = SolverSettings::default();
        let model = CoefficientModel::zero(settings.mesh_nodes);
        let matrix = build_matrix(Arc::new(model), MatrixKind::Vladimirov).expect("vladimirov accepts every regime");
        Self::new(matrix, settings)
    }

    /// Integration grid: uniform nodes plus every breakpoint and kink.
    pub fn grid(&self) -> Vec<f64> {
        self.plan.nodes()
    }

    /// Number of matrix exponentials one forward sweep takes at `λ`.
    pub fn work_estimate(&self, lambda: C64) -> usize {
        let rho = lambda.norm().sqrt().sqrt();
        self.plan
            .coarse
            .iter()
            .map(|s| {
                let m = substeps(s.h(), rho, self.settings.max_rho_step);
                if s.constant {
                    1
                } else {
                    m
                }
            })
            .sum()
    }
}

/// `F(x) + λ E₄₁`.
pub fn system_matrix(f: &RegularizationMatrix, lambda: C64, x: f64) -> Mat4 {
    let mut a = f.eval(x);
    a[(3, 0)] += lambda;
    a
}

fn substeps(h: f64, rho: f64, max_rho_step: f64) -> usize {
    ((rho * h / max_rho_step).ceil() as usize).max(1)
}

/// Balancing factor `s = max(1, |λ|^{1/4})`.
fn balance(lambda: C64) -> f64 {
    lambda.norm().sqrt().sqrt().max(1.0)
}

fn balanced(m: &Mat4, s: f64) -> Mat4 {
    Mat4::from_fn(|i, j| m[(i, j)] * s.powi(j as i32 - i as i32))
}

fn unbalanced(m: &Mat4, s: f64) -> Mat4 {
    Mat4::from_fn(|i, j| m[(i, j)] * s.powi(i as i32 - j as i32))
}

/// Balanced one-step transfer matrices of a plan step, with repeat counts.
fn transfers(
    f: &RegularizationMatrix,
    step: &Step,
    lambda: C64,
    s: f64,
    max_rho_step: f64,
    backward: bool,
) -> Vec<(Mat4, usize)> {
    let m = substeps(step.h(), s, max_rho_step);
    let sign = if backward { -1.0 } else { 1.0 };
    let expo = |st: &Step| (balanced(&st.omega(lambda), s) * C64::new(sign, 0.0)).exp();
    if m == 1 {
        return vec![(expo(step), 1)];
    }
    if step.constant {
        let sub = Step {
            b: step.a + step.h() / m as f64,
            ..step.clone()
        };
        return vec![(expo(&sub), m)];
    }
    let h = step.h() / m as f64;
    let mut out: Vec<(Mat4, usize)> = (0..m)
        .map(|k| {
            let a = step.a + k as f64 * h;
            let b = if k + 1 == m { step.b } else { a + h };
            (expo(&Step::new(f, a, b)), 1)
        })
        .collect();
    if backward {
        out.reverse();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// `C(0) = I`
    C,
    /// `V S(1) = I`
    S,
    /// `Φ = C M`
    Weyl,
    Custom,
}

/// Solution frames at the nodes of an integration grid.
///
/// The true frame at node `i` is `columns[i]` with column `k` multiplied by
/// `exp(log_scale[i][k])`; the scales stay zero unless renormalization was needed.
#[derive(Clone, Debug)]
pub struct QuasiFrame {
    pub lambda: C64,
    pub anchor: Anchor,
    pub mesh: Vec<f64>,
    pub columns: Vec<Mat4>,
    pub log_scale: Vec<[f64; 4]>,
}

impl QuasiFrame {
    pub fn at(&self, i: usize) -> Mat4 {
        let mut m = self.columns[i];
        for k in 0..4 {
            let sc = self.log_scale[i][k];
            if sc != 0.0 {
                let f = sc.exp();
                for r in 0..4 {
                    m[(r, k)] *= f;
                }
            }
        }
        m
    }

    pub fn first(&self) -> Mat4 {
        self.at(0)
    }

    pub fn last(&self) -> Mat4 {
        self.at(self.columns.len() - 1)
    }

    /// Frame at the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> Mat4 {
        let i = self
            .mesh
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().partial_cmp(&(b.1 - x).abs()).expect("finite mesh"))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.at(i)
    }

    pub fn column(&self, i: usize, k: usize) -> [C64; 4] {
        let m = self.at(i);
        [m[(0, k)], m[(1, k)], m[(2, k)], m[(3, k)]]
    }
}

fn check_finite_mat(m: &Mat4, lambda: C64, x: f64) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { lambda, x })
    }
}

/// Integrates from `from` to `to` starting at `init`, recording the frame at
/// every grid node in between. `from` and `to` must be grid nodes.
pub fn propagate(problem: &Problem, lambda: C64, from: f64, to: f64, init: &Mat4) -> Result<QuasiFrame> {
    let plan = &problem.plan;
    let s = balance(lambda);
    let rho = lambda.norm().sqrt().sqrt();
    let renorm = rho > problem.settings.renorm_threshold;
    let backward = to < from;
    let (lo, hi) = if backward { (to, from) } else { (from, to) };
    let eps = 1e-12;
    let mut idx: Vec<usize> = plan
        .fine
        .iter()
        .enumerate()
        .filter(|(_, st)| st.a >= lo - eps && st.b <= hi + eps)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() && (hi - lo) > eps {
        return Err(Error::Index(format!("no integration steps between {lo} and {hi}")));
    }
    if backward {
        idx.reverse();
    }

    let mut y = balanced_frame(init, s);
    let mut scale = [0.0f64; 4];
    let mut mesh = vec![from];
    let mut columns = vec![*init];
    let mut log_scale = vec![scale];
    for &i in &idx {
        let st = &plan.fine[i];
        for (t, reps) in transfers(&problem.matrix, st, lambda, s, problem.settings.max_rho_step, backward) {
            for _ in 0..reps {
                y = t * y;
                if renorm {
                    for k in 0..4 {
                        let n = (0..4).map(|r| y[(r, k)].norm()).fold(0.0, f64::max);
                        if n > 0.0 && n.is_finite() {
                            for r in 0..4 {
                                y[(r, k)] /= n;
                            }
                            scale[k] += n.ln();
                        }
                    }
                }
            }
        }
        let x = if backward { st.a } else { st.b };
        let frame = unbalanced_frame(&y, s);
        check_finite_mat(&frame, lambda, x)?;
        mesh.push(x);
        columns.push(frame);
        log_scale.push(scale);
    }
    Ok(QuasiFrame {
        lambda,
        anchor: Anchor::Custom,
        mesh,
        columns,
        log_scale,
    })
}

// frames transform as Y = D Y_bal
fn balanced_frame(y: &Mat4, s: f64) -> Mat4 {
    Mat4::from_fn(|i, j| y[(i, j)] * s.powi(-(i as i32)))
}

fn unbalanced_frame(y: &Mat4, s: f64) -> Mat4 {
    Mat4::from_fn(|i, j| y[(i, j)] * s.powi(i as i32))
}

/// Frame with `C(0) = I`, so `U_s(C_k) = δ_{s,k}`.
pub fn solutions_c(problem: &Problem, lambda: C64) -> Result<QuasiFrame> {
    let mut f = propagate(problem, lambda, 0.0, 1.0, &Mat4::identity())?;
    f.anchor = Anchor::C;
    Ok(f)
}

/// Frame with `V_s(S_k) = δ_{s,k}` at `x = 1`; nodes run from 1 down to 0.
pub fn solutions_s(problem: &Problem, lambda: C64) -> Result<QuasiFrame> {
    let init = problem.forms.v_inverse();
    let mut f = propagate(problem, lambda, 1.0, 0.0, &init)?;
    f.anchor = Anchor::S;
    Ok(f)
}

/// `⟨z, y⟩ = z y⁽³⁾ − z⁽¹⁾ y⁽²⁾ + z⁽²⁾ y⁽¹⁾ − z⁽³⁾ y = zᵀ J y`.
pub fn lagrange_bracket(z: &[C64; 4], y: &[C64; 4]) -> C64 {
    z[0] * y[3] - z[1] * y[2] + z[2] * y[1] - z[3] * y[0]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BracketSample {
    pub value: C64,
    pub x: f64,
    pub lambda_y: C64,
    pub lambda_z: C64,
}

/// `⟨z_k, y_l⟩` along the common nodes of two frames computed on the same grid.
pub fn bracket_along(z: &QuasiFrame, kz: usize, y: &QuasiFrame, ky: usize) -> Vec<BracketSample> {
    z.mesh
        .iter()
        .enumerate()
        .zip(y.mesh.iter())
        .map(|((i, &x), _)| BracketSample {
            value: lagrange_bracket(&z.column(i, kz), &y.column(i, ky)),
            x,
            lambda_y: y.lambda,
            lambda_z: z.lambda,
        })
        .collect()
}

/// `zᵀ J y` for whole frames.
pub fn bracket_matrix(z: &Mat4, y: &Mat4) -> Mat4 {
    z.transpose() * bracket_j() * y
}

/// A decomposable k-vector `v₁ ∧ … ∧ v_k` in the [`basis`] ordering, scaled by `exp(log)`.
#[derive(Clone, Copy, Debug)]
pub struct Wedge {
    pub grade: usize,
    pub v: [C64; 6],
    pub log: f64,
}

impl Wedge {
    /// Wedge of the given columns (zero-based, in this order) of `m`.
    pub fn of_columns(m: &Mat4, cols: &[usize]) -> Self {
        let grade = cols.len();
        let mut v = [ZERO; 6];
        for (i, rows) in basis(grade).iter().enumerate() {
            v[i] = crate::linalg::minor(m, rows, cols);
        }
        Wedge { grade, v, log: 0.0 }
    }

    /// Wedge of columns of the identity.
    pub fn unit(cols: &[usize]) -> Self {
        let grade = cols.len();
        let (sorted, sign) = sort_with_sign(cols);
        let mut v = [ZERO; 6];
        if sign != 0 {
            let i = crate::linalg::basis_index(&sorted);
            v[i] = C64::new(sign as f64, 0.0);
        }
        Wedge { grade, v, log: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.v.iter().take(basis(self.grade).len()).fold(0.0, |a, z| a.max(z.norm()))
    }

    fn renormalize(&mut self) {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            let inv = 1.0 / n;
            for z in self.v.iter_mut() {
                *z *= inv;
            }
            self.log += n.ln();
        }
    }

    /// Multiplies component `I` by `s^{±ΣI}` (balancing similarity on the k-th power).
    fn rescale(&mut self, s: f64, forward: bool) {
        if s == 1.0 {
            return;
        }
        for (i, idx) in basis(self.grade).iter().enumerate() {
            let e: i32 = idx.iter().map(|&k| k as i32).sum();
            self.v[i] *= s.powi(if forward { e } else { -e });
        }
    }

    /// Minor `det[R(v₁..v_k)]` of the rows selected by `rows` of the linear map `r`.
    pub fn project(&self, r: &Mat4, rows: &[usize]) -> (C64, f64) {
        let mut acc = ZERO;
        for (i, idx) in basis(self.grade).iter().enumerate() {
            if self.v[i] != ZERO {
                acc += crate::linalg::minor(r, rows, idx) * self.v[i];
            }
        }
        (acc, self.log)
    }
}

/// Carries wedges over the whole interval (forward `0 → 1` or backward),
/// renormalizing after every step.
pub fn propagate_wedges(problem: &Problem, lambda: C64, wedges: &mut [Wedge], backward: bool) -> Result<()> {
    let s = balance(lambda);
    for w in wedges.iter_mut() {
        w.rescale(s, false);
    }
    let mut grades = [false; 4];
    for w in wedges.iter() {
        grades[w.grade] = true;
    }
    let steps: Box<dyn Iterator<Item = &Step>> = if backward {
        Box::new(problem.plan.coarse.iter().rev())
    } else {
        Box::new(problem.plan.coarse.iter())
    };
    for st in steps {
        for (t, reps) in transfers(&problem.matrix, st, lambda, s, problem.settings.max_rho_step, backward) {
            let compounds: Vec<Option<Compound>> = (0..4)
                .map(|g| if g > 0 && grades[g] { Some(Compound::of(&t, g)) } else { None })
                .collect();
            for _ in 0..reps {
                for w in wedges.iter_mut() {
                    let c = compounds[w.grade].as_ref().expect("compound for grade");
                    w.v = c.apply(&w.v);
                    w.renormalize();
                }
            }
        }
        for w in wedges.iter() {
            if !w.v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || !w.log.is_finite() {
                return Err(Error::NonFiniteState {
                    lambda,
                    x: if backward { st.a } else { st.b },
                });
            }
        }
    }
    for w in wedges.iter_mut() {
        w.rescale(s, true);
        w.renormalize();
    }
    Ok(())
}

/// Transfer matrix `C(1, λ)` (with `C(0) = I`) and its `λ`-derivative, from the
/// variational system `Z' = A Z + E₄₁ Y` carried alongside.
pub fn propagate_with_derivative(problem: &Problem, lambda: C64) -> Result<(Mat4, Mat4)> {
    type M8 = SMatrix<C64, 8, 8>;
    let s = balance(lambda);
    let mut y = M8::identity();
    for st in &problem.plan.fine {
        let m = substeps(st.h(), s, problem.settings.max_rho_step);
        let h = st.h() / m as f64;
        for k in 0..m {
            let sub = if m == 1 {
                st.clone()
            } else if st.constant {
                Step {
                    b: st.a + h,
                    ..st.clone()
                }
            } else {
                let a = st.a + k as f64 * h;
                Step::new(&problem.matrix, a, if k + 1 == m { st.b } else { a + h })
            };
            let om = balanced(&sub.omega(lambda), s);
            let dom = balanced(&sub.omega_lambda(), s);
            let mut big = M8::zeros();
            big.fixed_view_mut::<4, 4>(0, 0).copy_from(&om);
            big.fixed_view_mut::<4, 4>(4, 4).copy_from(&om);
            big.fixed_view_mut::<4, 4>(4, 0).copy_from(&dom);
            y = big.exp() * y;
        }
    }
    let t: Mat4 = y.fixed_view::<4, 4>(0, 0).into_owned();
    let dt: Mat4 = y.fixed_view::<4, 4>(4, 0).into_owned();
    let (t, dt) = (unbalanced(&t, s), unbalanced(&dt, s));
    check_finite_mat(&t, lambda, 1.0)?;
    check_finite_mat(&dt, lambda, 1.0)?;
    Ok((t, dt))
}

/// `det` of a frame, for Liouville checks.
pub fn frame_det(m: &Mat4) -> C64 {
    m.determinant()
}

#[allow(dead_code)]
fn identity_columns() -> Mat4 {
    Mat4::from_fn(|i, j| if i == j { ONE } else { ZERO })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoeffFn, FnInput};
    use crate::linalg::{c, max_abs, r};

    fn smooth() -> Problem {
        let spec = CoefficientSpec {
            tau1: Some(FnInput::expr("2*sin(pi*x)")),
            tau2: Some(FnInput::expr("5x^2 - 3x^3")),
            ..Default::default()
        };
        Problem::from_spec(&spec, Regime::W2m1W2m2, MatrixKind::Vladimirov, SolverSettings::default()).unwrap()
    }

    #[test]
    fn system_matrix_examples() {
        let p = Problem::zero();
        let a = system_matrix(&p.matrix, ONE, 0.3);
        assert_eq!(a[(3, 0)], ONE);
        assert_eq!(a[(0, 1)], ONE);
        assert_eq!(system_matrix(&p.matrix, ZERO, 0.3)[(3, 0)], ZERO);
        let model = CoefficientModel::from_antiderivatives(
            CoeffFn::expr("0.5").unwrap(),
            CoeffFn::expr("2").unwrap(),
            Regime::W2m1W2m2,
            11,
        )
        .unwrap();
        let f = build_matrix(Arc::new(model), MatrixKind::Vladimirov).unwrap();
        assert_eq!(system_matrix(&f, c(3.0, 1.0), 0.5)[(3, 0)], c(7.0, 1.0));
    }

    #[test]
    fn polynomial_frame_at_zero_lambda() {
        let p = Problem::zero();
        let fr = solutions_c(&p, ZERO).unwrap();
        for (i, &x) in fr.mesh.iter().enumerate() {
            let m = fr.at(i);
            let expect = Mat4::from_fn(|row, col| {
                if col >= row {
                    let k = (col - row) as i32;
                    r(x.powi(k) / (1..=k).product::<i32>().max(1) as f64)
                } else {
                    ZERO
                }
            });
            assert!(max_abs(&(m - expect)) < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn beam_closed_form_oracle() {
        // y'''' = β⁴ y with y, y', y'', y''' = e₁ at 0; y = (cosh + cos)/2
        let beta: f64 = 2.7;
        let lambda = r(beta.powi(4));
        let fr = solutions_c(&Problem::zero(), lambda).unwrap();
        let y1 = fr.last()[(0, 0)];
        let exact = 0.5 * (beta.cosh() + beta.cos());
        assert!((y1 - r(exact)).norm() < 1e-12 * exact);
        // fourth column: (sinh βx − sin βx)/(2β³)
        let exact4 = (beta.sinh() - beta.sin()) / (2.0 * beta.powi(3));
        assert!((fr.last()[(0, 3)] - r(exact4)).norm() < 1e-12);
    }

    #[test]
    fn s_frame_polynomial() {
        let p = Problem::zero();
        let fr = solutions_s(&p, ZERO).unwrap();
        let at1 = fr.first();
        // V S(1) = I
        assert!(max_abs(&(p.forms.v * at1 - Mat4::identity())) < 1e-15);
        // S₁ = (x-1)³/6 so U₂(S₁) = y'(0) = 1/2
        let at0 = fr.last();
        assert!((at0[(1, 0)] - r(0.5)).norm() < 1e-13);
        assert!((at0[(0, 0)] - r(-1.0 / 6.0)).norm() < 1e-13);
    }

    #[test]
    fn liouville_determinant_smooth() {
        let p = smooth();
        for lambda in [ZERO, c(37.0, -5.0), c(-400.0, 250.0)] {
            let fr = solutions_c(&p, lambda).unwrap();
            for i in 0..fr.columns.len() {
                let d = frame_det(&fr.at(i));
                assert!((d - ONE).norm() < 1e-8, "det {d} at node {i}");
            }
        }
    }

    #[test]
    fn bracket_polynomials() {
        let z = [ONE, ZERO, ZERO, ZERO];
        let x: f64 = 0.4;
        let y = [r(x.powi(3) / 6.0), r(x * x / 2.0), r(x), ONE];
        assert_eq!(lagrange_bracket(&z, &y), ONE);
    }

    #[test]
    fn bracket_is_constant_for_equal_lambda() {
        let p = smooth();
        let lambda = c(120.0, 30.0);
        let fr = solutions_c(&p, lambda).unwrap();
        let b = bracket_along(&fr, 0, &fr, 3);
        let b0 = b[0].value;
        let dev = b.iter().map(|s| (s.value - b0).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-9 * (1.0 + b0.norm()), "deviation {dev}");
    }

    #[test]
    fn bracket_derivative_matches_wronskian_rule() {
        let p = smooth();
        let (lam, mu) = (c(50.0, 10.0), c(-20.0, 5.0));
        let fy = solutions_c(&p, lam).unwrap();
        let fz = solutions_c(&p, mu).unwrap();
        let b = bracket_along(&fz, 1, &fy, 2);
        for i in (1..b.len() - 1).step_by(37) {
            let dx = b[i + 1].x - b[i - 1].x;
            let deriv = (b[i + 1].value - b[i - 1].value) / dx;
            let zy = fz.column(i, 1)[0] * fy.column(i, 2)[0];
            let expect = (lam - mu) * zy;
            assert!((deriv - expect).norm() < 1e-4 * (1.0 + expect.norm()), "x = {}", b[i].x);
        }
    }

    #[test]
    fn variational_matches_finite_difference() {
        let p = smooth();
        let lambda = c(80.0, 15.0);
        let (_, dt) = propagate_with_derivative(&p, lambda).unwrap();
        let hstep = 1e-4;
        let fp = solutions_c(&p, lambda + hstep).unwrap().last();
        let fm = solutions_c(&p, lambda - hstep).unwrap().last();
        let fd = (fp - fm) / C64::new(2.0 * hstep, 0.0);
        let scale = max_abs(&dt);
        assert!(max_abs(&(fd - dt)) < 1e-4 * scale);
    }

    #[test]
    fn wedges_match_frame_minors() {
        let p = smooth();
        let lambda = c(300.0, -40.0);
        let fr = solutions_c(&p, lambda).unwrap().last();
        for cols in [&[3usize][..], &[2, 3], &[1, 3], &[2, 1], &[1, 2, 3], &[1, 0, 3]] {
            let mut w = [Wedge::unit(cols)];
            propagate_wedges(&p, lambda, &mut w, false).unwrap();
            let direct = Wedge::of_columns(&fr, cols);
            let f = w[0].log.exp();
            for i in 0..basis(cols.len()).len() {
                let got = w[0].v[i] * f;
                assert!((got - direct.v[i]).norm() < 1e-9 * (1.0 + direct.norm()), "{cols:?} {i}");
            }
        }
    }

    #[test]
    fn step_tau1_is_a_breakpoint_of_the_grid() {
        let spec = CoefficientSpec {
            tau1: Some(FnInput::Piecewise {
                breakpoints: vec![1.0 / 3.0],
                pieces: vec!["0".into(), "1".into()],
            }),
            tau2: Some(FnInput::expr("0")),
            ..Default::default()
        };
        let p = Problem::from_spec(&spec, Regime::W2m1W2m2, MatrixKind::Vladimirov, SolverSettings::default()).unwrap();
        assert!(p.grid().iter().any(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        // two constant pieces merge into two coarse steps
        assert_eq!(p.plan.coarse.len(), 2);
        let fr = solutions_c(&p, c(10.0, 1.0)).unwrap();
        for i in 0..fr.columns.len() {
            assert!((frame_det(&fr.at(i)) - ONE).norm() < 1e-10);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn determinant_is_one(re in -2000.0f64..2000.0, im in -2000.0f64..2000.0) {
            let p = Problem::zero();
            let fr = solutions_c(&p, c(re, im)).unwrap();
            let d = frame_det(&fr.last());
            proptest::prop_assert!((d - ONE).norm() < 1e-8 * (1.0 + fr.last().norm().powi(2)));
        }

        #[test]
        fn forward_then_backward_is_identity(re in -300.0f64..300.0, im in -300.0f64..300.0) {
            let p = Problem::zero();
            let lam = c(re, im);
            let t = solutions_c(&p, lam).unwrap().last();
            let back = propagate(&p, lam, 1.0, 0.0, &t).unwrap().last();
            proptest::prop_assert!(max_abs(&(back - Mat4::identity())) < 1e-9);
        }
    }
}
