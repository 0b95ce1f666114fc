//! Coefficient pairs and the regularization matrices built from them.
//!
//! The differential expression `y'''' - (p y')' + q y` is handled through
//! antiderivatives: `tau1' = p`, `tau2'' = q` (and `sigma2' = q` for the
//! first-order form). Functions are either closed-form expressions, piecewise
//! expressions with jumps at breakpoints, or node samples.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::{Mat4, C64, ONE, ZERO};

/// Singularity class of `(p, q)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `p ∈ W₂⁻¹`, `q ∈ W₂⁻²`
    #[default]
    #[serde(rename = "W2m1_W2m2")]
    W2m1W2m2,
    /// `p, q ∈ W₂⁻¹`
    #[serde(rename = "W2m1_W2m1")]
    W2m1W2m1,
    /// `p, q ∈ L₁`
    #[serde(rename = "L1_L1")]
    L1L1,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixKind {
    #[default]
    #[serde(rename = "vladimirov")]
    Vladimirov,
    #[serde(rename = "sigma_form")]
    SigmaForm,
    #[serde(rename = "companion_L1")]
    CompanionL1,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::Vladimirov => "vladimirov",
            MatrixKind::SigmaForm => "sigma_form",
            MatrixKind::CompanionL1 => "companion_L1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vladimirov" => Ok(MatrixKind::Vladimirov),
            "sigma_form" => Ok(MatrixKind::SigmaForm),
            "companion_L1" | "companion_l1" => Ok(MatrixKind::CompanionL1),
            other => Err(Error::Config(format!("unknown matrix kind `{other}`"))),
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which one-sided limit to take at a jump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Node samples with piecewise-linear or cubic Hermite interpolation.
///
/// A node may appear twice in a row; the pair carries the left and right
/// limits of a jump.
#[derive(Clone, Debug)]
pub struct Samples {
    nodes: Vec<f64>,
    values: Vec<C64>,
    /// Per interval `(slope at left end, slope at right end)`, enabling Hermite interpolation.
    slopes: Option<Vec<(C64, C64)>>,
}

impl Samples {
    pub fn linear(nodes: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        Self::check(&nodes, &values)?;
        Ok(Samples {
            nodes,
            values,
            slopes: None,
        })
    }

    pub fn hermite(nodes: Vec<f64>, values: Vec<C64>, slopes: Vec<(C64, C64)>) -> Result<Self> {
        Self::check(&nodes, &values)?;
        if slopes.len() + 1 != nodes.len() {
            return Err(Error::InvalidCoefficients("one slope pair per interval is required".into()));
        }
        Ok(Samples {
            nodes,
            values,
            slopes: Some(slopes),
        })
    }

    fn check(nodes: &[f64], values: &[C64]) -> Result<()> {
        if nodes.len() < 2 || nodes.len() != values.len() {
            return Err(Error::InvalidCoefficients(
                "samples need at least two nodes and one value per node".into(),
            ));
        }
        if nodes.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidCoefficients("sample nodes must be non-decreasing".into()));
        }
        if nodes.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
            return Err(Error::InvalidCoefficients("a node may appear at most twice".into()));
        }
        if (nodes[0] - 0.0).abs() > 1e-14 || (nodes[nodes.len() - 1] - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidCoefficients("sample nodes must span [0, 1]".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Index `i` of the interval `[nodes[i], nodes[i+1]]` (of positive length) holding `x`.
    fn interval(&self, x: f64, side: Side) -> usize {
        let n = self.nodes.len();
        let idx = match side {
            // first node strictly greater than x
            Side::Right => self.nodes.partition_point(|&t| t <= x),
            // first node greater or equal to x
            Side::Left => self.nodes.partition_point(|&t| t < x),
        };
        let mut i = idx.saturating_sub(1).min(n - 2);
        // skip zero-length intervals created by duplicate nodes
        match side {
            Side::Right => {
                while i + 2 < n && self.nodes[i + 1] <= x && self.nodes[i] == self.nodes[i + 1] {
                    i += 1;
                }
                while i > 0 && self.nodes[i] == self.nodes[i + 1] {
                    i -= 1;
                }
            }
            Side::Left => {
                while i > 0 && self.nodes[i] == self.nodes[i + 1] {
                    i -= 1;
                }
            }
        }
        if self.nodes[i] == self.nodes[i + 1] && i + 2 < n {
            i += 1;
        }
        i
    }

    pub fn eval(&self, x: f64, side: Side) -> C64 {
        let i = self.interval(x, side);
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let h = b - a;
        let t = ((x - a) / h).clamp(0.0, 1.0);
        let (ya, yb) = (self.values[i], self.values[i + 1]);
        match &self.slopes {
            None => ya + (yb - ya) * t,
            Some(s) => {
                let (ma, mb) = s[i];
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                ya * h00 + ma * (h10 * h) + yb * h01 + mb * (h11 * h)
            }
        }
    }

    fn constant_on(&self, a: f64, b: f64) -> bool {
        let first = self.interval(a, Side::Right);
        let last = self.interval(b, Side::Left);
        (first..=last).all(|i| {
            let flat = match &self.slopes {
                None => true,
                Some(s) => self.nodes[i] == self.nodes[i + 1] || (s[i].0 == ZERO && s[i].1 == ZERO),
            };
            flat && (self.nodes[i] == self.nodes[i + 1] || self.values[i] == self.values[i + 1])
        }) && self.eval(a, Side::Right) == self.eval(b, Side::Left)
    }
}

/// A complex function on `[0, 1]`.
#[derive(Clone, Debug)]
pub enum CoeffFn {
    Expr(Expr),
    /// `pieces[k]` applies on `[breakpoints[k-1], breakpoints[k]]` (with 0 and 1 at the ends).
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<Expr>,
    },
    Samples(Samples),
}

impl CoeffFn {
    pub fn zero() -> Self {
        CoeffFn::Expr(Expr::constant(ZERO))
    }

    pub fn expr(source: &str) -> Result<Self> {
        Ok(CoeffFn::Expr(Expr::parse(source)?))
    }

    pub fn piecewise(breakpoints: Vec<f64>, pieces: &[&str]) -> Result<Self> {
        let pieces = pieces.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>()?;
        Self::piecewise_exprs(breakpoints, pieces)
    }

    pub fn piecewise_exprs(breakpoints: Vec<f64>, pieces: Vec<Expr>) -> Result<Self> {
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidCoefficients(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        for &b in &breakpoints {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::BreakpointOutOfRange(b));
            }
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCoefficients("breakpoints must be strictly increasing".into()));
        }
        Ok(CoeffFn::Piecewise { breakpoints, pieces })
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.eval_side(x, Side::Right)
    }

    pub fn eval_side(&self, x: f64, side: Side) -> C64 {
        match self {
            CoeffFn::Expr(e) => e.eval(x),
            CoeffFn::Piecewise { breakpoints, pieces } => {
                let k = match side {
                    Side::Right => breakpoints.partition_point(|&b| b <= x),
                    Side::Left => breakpoints.partition_point(|&b| b < x),
                };
                pieces[k].eval(x)
            }
            CoeffFn::Samples(s) => s.eval(x, side),
        }
    }

    /// Points in (0,1) where the function may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            CoeffFn::Expr(_) => Vec::new(),
            CoeffFn::Piecewise { breakpoints, .. } => breakpoints.clone(),
            CoeffFn::Samples(s) => s
                .nodes
                .windows(2)
                .filter(|w| w[0] == w[1])
                .map(|w| w[0])
                .collect(),
        }
    }

    /// Points where the function is not smooth: jumps, plus every node of
    /// linearly interpolated samples. Integration steps must not straddle them.
    pub fn nodes(&self) -> Vec<f64> {
        match self {
            CoeffFn::Samples(s) if s.slopes.is_none() => s.nodes.clone(),
            _ => self.breakpoints(),
        }
    }

    /// Whether the function is constant on `[a, b]`, which must not straddle a node.
    pub fn constant_on(&self, a: f64, b: f64) -> bool {
        match self {
            CoeffFn::Expr(e) => e.is_constant(),
            CoeffFn::Piecewise { breakpoints, pieces } => {
                let k = breakpoints.partition_point(|&t| t <= 0.5 * (a + b));
                pieces[k].is_constant()
            }
            CoeffFn::Samples(s) => s.constant_on(a, b),
        }
    }

    fn check_finite(&self, name: &str, mesh: &[f64]) -> Result<()> {
        for &x in mesh {
            for side in [Side::Left, Side::Right] {
                let v = self.eval_side(x, side);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(Error::NonFiniteSample { name: name.to_string(), x });
                }
            }
        }
        Ok(())
    }
}

/// Input description of one coefficient function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FnInput {
    Expr(String),
    Piecewise {
        breakpoints: Vec<f64>,
        pieces: Vec<String>,
    },
    /// Values on a uniform mesh of `samples.len()` nodes covering `[0, 1]`.
    Samples {
        samples: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples_im: Option<Vec<f64>>,
    },
}

impl FnInput {
    pub fn expr(s: &str) -> Self {
        FnInput::Expr(s.to_string())
    }

    pub fn to_fn(&self, name: &str) -> Result<CoeffFn> {
        match self {
            FnInput::Expr(s) => CoeffFn::expr(s),
            FnInput::Piecewise { breakpoints, pieces } => {
                let refs: Vec<&str> = pieces.iter().map(String::as_str).collect();
                CoeffFn::piecewise(breakpoints.clone(), &refs)
            }
            FnInput::Samples { samples, samples_im } => {
                let n = samples.len();
                if n < 2 {
                    return Err(Error::InvalidCoefficients(format!("`{name}` needs at least two samples")));
                }
                if let Some(im) = samples_im {
                    if im.len() != n {
                        return Err(Error::InvalidCoefficients(format!(
                            "`{name}`: samples_im has {} entries, samples has {n}",
                            im.len()
                        )));
                    }
                }
                let nodes = uniform_mesh(n);
                let mut values = Vec::with_capacity(n);
                for (k, &re) in samples.iter().enumerate() {
                    let im = samples_im.as_ref().map_or(0.0, |v| v[k]);
                    if !re.is_finite() || !im.is_finite() {
                        return Err(Error::NonFiniteSample {
                            name: name.to_string(),
                            x: nodes[k],
                        });
                    }
                    values.push(C64::new(re, im));
                }
                Ok(CoeffFn::Samples(Samples::linear(nodes, values)?))
            }
        }
    }
}

/// Integration constants for derived antiderivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AntiderivativeConstants {
    #[serde(default)]
    pub tau1_at_0: f64,
    #[serde(default)]
    pub tau2_at_0: f64,
    #[serde(default)]
    pub dtau2_at_0: f64,
}

/// What the caller supplies: one of `tau1`/`p`, and one of `tau2`/`sigma2`/`q`.
/// `p` and `q` may be given alongside the antiderivatives for the
/// first-order companion form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<FnInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<FnInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<FnInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<FnInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<FnInput>,
    #[serde(default, flatten)]
    pub constants: AntiderivativeConstants,
}

pub const DEFAULT_MESH_NODES: usize = 2001;

pub fn uniform_mesh(nodes: usize) -> Vec<f64> {
    let n = nodes.max(2) - 1;
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// The coefficient pair in antiderivative form.
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    pub regime: Regime,
    pub tau1: CoeffFn,
    /// Second antiderivative of `q`.
    pub tau2: CoeffFn,
    pub sigma2: Option<CoeffFn>,
    pub p: Option<CoeffFn>,
    pub q: Option<CoeffFn>,
    pub breakpoints: Vec<f64>,
    /// Sorted nodes covering `[0, 1]`, each breakpoint included once.
    pub mesh: Vec<f64>,
}

// 5-point Gauss–Legendre on [0, 1]
const GL5_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// `∫_a^b w(t) f(t) dt` with `f` evaluated strictly inside `(a, b)`.
fn gauss<F: Fn(f64) -> C64>(a: f64, b: f64, f: F) -> C64 {
    let h = b - a;
    let mut acc = ZERO;
    for k in 0..5 {
        acc += f(a + GL5_NODES[k] * h) * GL5_WEIGHTS[k];
    }
    acc * h
}

/// Cumulative antiderivative of `f` over `mesh`, starting from `at_0`.
///
/// Sampled integrands use the trapezoid rule, which is exact for their
/// piecewise-linear interpolant; closed forms use Gauss–Legendre per interval.
/// The result interpolates with Hermite cubics whose slopes are `f`.
fn antiderivative(f: &CoeffFn, mesh: &[f64], at_0: f64) -> Result<CoeffFn> {
    let mut values = Vec::with_capacity(mesh.len());
    let mut slopes = Vec::with_capacity(mesh.len() - 1);
    let mut acc = C64::new(at_0, 0.0);
    values.push(acc);
    for w in mesh.windows(2) {
        let (a, b) = (w[0], w[1]);
        let fa = f.eval_side(a, Side::Right);
        let fb = f.eval_side(b, Side::Left);
        let inc = match f {
            CoeffFn::Samples(_) => (fa + fb) * (0.5 * (b - a)),
            _ => gauss(a, b, |t| f.eval(t)),
        };
        acc += inc;
        values.push(acc);
        slopes.push((fa, fb));
    }
    Ok(CoeffFn::Samples(Samples::hermite(mesh.to_vec(), values, slopes)?))
}

/// Second antiderivative `τ(x) = τ(0) + x τ'(0) + ∫_0^x (x - t) q(t) dt` on `mesh`.
fn second_antiderivative(q: &CoeffFn, first: &CoeffFn, mesh: &[f64], at_0: f64) -> Result<CoeffFn> {
    let mut values = Vec::with_capacity(mesh.len());
    let mut slopes = Vec::with_capacity(mesh.len() - 1);
    let mut acc = C64::new(at_0, 0.0);
    values.push(acc);
    for w in mesh.windows(2) {
        let (a, b) = (w[0], w[1]);
        let sa = first.eval_side(a, Side::Right);
        let sb = first.eval_side(b, Side::Left);
        let kernel = match q {
            CoeffFn::Samples(_) => {
                // exact for the linear interpolant of q
                let qa = q.eval_side(a, Side::Right);
                let qb = q.eval_side(b, Side::Left);
                let h = b - a;
                (qa * (h * h / 3.0)) + (qb * (h * h / 6.0))
            }
            _ => gauss(a, b, |t| q.eval(t) * (b - t)),
        };
        acc += sa * (b - a) + kernel;
        values.push(acc);
        slopes.push((sa, sb));
    }
    Ok(CoeffFn::Samples(Samples::hermite(mesh.to_vec(), values, slopes)?))
}

fn merge_nodes(mut nodes: Vec<f64>) -> Vec<f64> {
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    let mut out: Vec<f64> = Vec::with_capacity(nodes.len());
    for x in nodes {
        match out.last() {
            Some(&last) if (x - last).abs() <= 1e-13 => {}
            _ => out.push(x),
        }
    }
    out
}

/// Builds the coefficient model from a spec.
///
/// Antiderivatives that are supplied directly are stored verbatim; missing
/// ones are integrated cumulatively on a uniform mesh of `mesh_nodes` nodes
/// refined by all breakpoints.
pub fn build_coefficients(spec: &CoefficientSpec, regime: Regime, mesh_nodes: usize) -> Result<CoefficientModel> {
    let named = |name: &str, input: &Option<FnInput>| -> Result<Option<CoeffFn>> {
        input.as_ref().map(|i| i.to_fn(name)).transpose()
    };
    let tau1_in = named("tau1", &spec.tau1)?;
    let p_in = named("p", &spec.p)?;
    let tau2_in = named("tau2", &spec.tau2)?;
    let sigma2_in = named("sigma2", &spec.sigma2)?;
    let q_in = named("q", &spec.q)?;

    if tau1_in.is_none() && p_in.is_none() {
        return Err(Error::InvalidCoefficients("one of `tau1` or `p` is required".into()));
    }
    if tau2_in.is_none() && sigma2_in.is_none() && q_in.is_none() {
        return Err(Error::InvalidCoefficients(
            "one of `tau2`, `sigma2` or `q` is required".into(),
        ));
    }

    let mut breakpoints: Vec<f64> = Vec::new();
    let mut nodes = uniform_mesh(mesh_nodes);
    for f in [&tau1_in, &p_in, &tau2_in, &sigma2_in, &q_in].into_iter().flatten() {
        for b in f.breakpoints() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::BreakpointOutOfRange(b));
            }
            breakpoints.push(b);
        }
        nodes.extend(f.nodes());
    }
    let breakpoints = merge_nodes(breakpoints);
    let mesh = merge_nodes(nodes);

    let c = spec.constants;
    let tau1 = match (&tau1_in, &p_in) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => antiderivative(p, &mesh, c.tau1_at_0)?,
        (None, None) => unreachable!(),
    };
    let sigma2 = match (&sigma2_in, &q_in) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(q)) if tau2_in.is_none() || matches!(regime, Regime::W2m1W2m1 | Regime::L1L1) => {
            Some(antiderivative(q, &mesh, c.dtau2_at_0)?)
        }
        _ => None,
    };
    let tau2 = match (&tau2_in, &sigma2_in, &q_in) {
        (Some(t), _, _) => t.clone(),
        (None, Some(s), _) => antiderivative(s, &mesh, c.tau2_at_0)?,
        (None, None, Some(q)) => {
            let first = sigma2.as_ref().expect("sigma2 derived from q");
            second_antiderivative(q, first, &mesh, c.tau2_at_0)?
        }
        (None, None, None) => unreachable!(),
    };

    let model = CoefficientModel {
        regime,
        tau1,
        tau2,
        sigma2,
        p: p_in,
        q: q_in,
        breakpoints,
        mesh,
    };
    model.check_finite()?;
    Ok(model)
}

impl CoefficientModel {
    /// Model with `tau1`, `tau2` given directly as closed forms.
    pub fn from_antiderivatives(tau1: CoeffFn, tau2: CoeffFn, regime: Regime, mesh_nodes: usize) -> Result<Self> {
        let mut breakpoints = tau1.breakpoints();
        breakpoints.extend(tau2.breakpoints());
        for &b in &breakpoints {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::BreakpointOutOfRange(b));
            }
        }
        let mut nodes = uniform_mesh(mesh_nodes);
        nodes.extend(tau1.nodes());
        nodes.extend(tau2.nodes());
        let model = CoefficientModel {
            regime,
            tau1,
            tau2,
            sigma2: None,
            p: None,
            q: None,
            breakpoints: merge_nodes(breakpoints),
            mesh: merge_nodes(nodes),
        };
        model.check_finite()?;
        Ok(model)
    }

    pub fn zero(mesh_nodes: usize) -> Self {
        CoefficientModel {
            regime: Regime::W2m1W2m2,
            tau1: CoeffFn::zero(),
            tau2: CoeffFn::zero(),
            sigma2: Some(CoeffFn::zero()),
            p: Some(CoeffFn::zero()),
            q: Some(CoeffFn::zero()),
            breakpoints: Vec::new(),
            mesh: uniform_mesh(mesh_nodes),
        }
    }

    fn check_finite(&self) -> Result<()> {
        self.tau1.check_finite("tau1", &self.mesh)?;
        self.tau2.check_finite("tau2", &self.mesh)?;
        if let Some(s) = &self.sigma2 {
            s.check_finite("sigma2", &self.mesh)?;
        }
        if let Some(p) = &self.p {
            p.check_finite("p", &self.mesh)?;
        }
        if let Some(q) = &self.q {
            q.check_finite("q", &self.mesh)?;
        }
        Ok(())
    }
}

/// The 4×4 associated matrix `F(x)` of a coefficient model.
#[derive(Clone, Debug)]
pub struct RegularizationMatrix {
    pub kind: MatrixKind,
    pub model: Arc<CoefficientModel>,
    starred: bool,
}

pub fn build_matrix(model: Arc<CoefficientModel>, kind: MatrixKind) -> Result<RegularizationMatrix> {
    let incompatible = |reason: &str| Error::IncompatibleKind {
        kind: kind.name().to_string(),
        reason: reason.to_string(),
    };
    match kind {
        MatrixKind::Vladimirov => {}
        MatrixKind::SigmaForm => {
            if model.regime == Regime::W2m1W2m2 {
                return Err(incompatible("requires q in W2^-1 (regime W2m1_W2m1 or L1_L1)"));
            }
            if model.sigma2.is_none() {
                return Err(incompatible("requires sigma2 (given directly or derived from q)"));
            }
        }
        MatrixKind::CompanionL1 => {
            if model.regime != Regime::L1L1 {
                return Err(incompatible("requires regime L1_L1"));
            }
            if model.p.is_none() || model.q.is_none() {
                return Err(incompatible("requires p and q to be supplied"));
            }
        }
    }
    Ok(RegularizationMatrix {
        kind,
        model,
        starred: false,
    })
}

/// `f*_{k,j} = (-1)^{k+j+1} f_{5-j,5-k}`.
pub fn star_matrix(f: &RegularizationMatrix) -> RegularizationMatrix {
    RegularizationMatrix {
        kind: f.kind,
        model: Arc::clone(&f.model),
        starred: !f.starred,
    }
}

pub fn star_transform(m: &Mat4) -> Mat4 {
    // zero-based: f*_{k,j} = (-1)^{k+j+1} f_{3-j,3-k}
    Mat4::from_fn(|k, j| {
        let v = m[(3 - j, 3 - k)];
        if (k + j + 1) % 2 == 0 {
            v
        } else {
            -v
        }
    })
}

impl RegularizationMatrix {
    pub fn is_starred(&self) -> bool {
        self.starred
    }

    pub fn eval(&self, x: f64) -> Mat4 {
        self.eval_side(x, Side::Right)
    }

    pub fn eval_side(&self, x: f64, side: Side) -> Mat4 {
        let m = self.raw(x, side);
        if self.starred {
            star_transform(&m)
        } else {
            m
        }
    }

    fn raw(&self, x: f64, side: Side) -> Mat4 {
        let mut f = Mat4::zeros();
        f[(0, 1)] = ONE;
        f[(1, 2)] = ONE;
        f[(2, 3)] = ONE;
        let m = &self.model;
        match self.kind {
            MatrixKind::Vladimirov => {
                let t1 = m.tau1.eval_side(x, side);
                let t2 = m.tau2.eval_side(x, side);
                f[(1, 0)] = -t2;
                f[(1, 1)] = t1;
                f[(2, 0)] = t1 * t2;
                f[(2, 1)] = -t1 * t1 + t2 * 2.0;
                f[(2, 2)] = -t1;
                f[(3, 0)] = t2 * t2;
                f[(3, 1)] = -t1 * t2;
                f[(3, 2)] = -t2;
            }
            MatrixKind::SigmaForm => {
                let t1 = m.tau1.eval_side(x, side);
                let s2 = m.sigma2.as_ref().map_or(ZERO, |s| s.eval_side(x, side));
                f[(1, 1)] = t1;
                f[(2, 0)] = -s2;
                f[(2, 1)] = -t1 * t1;
                f[(2, 2)] = -t1;
                f[(3, 1)] = s2;
            }
            MatrixKind::CompanionL1 => {
                let p = m.p.as_ref().map_or(ZERO, |p| p.eval_side(x, side));
                let q = m.q.as_ref().map_or(ZERO, |q| q.eval_side(x, side));
                f[(2, 1)] = p;
                f[(3, 0)] = -q;
            }
        }
        f
    }

    /// Coefficient functions entering this kind of matrix.
    fn used_fns(&self) -> Vec<&CoeffFn> {
        let m = &self.model;
        match self.kind {
            MatrixKind::Vladimirov => vec![&m.tau1, &m.tau2],
            MatrixKind::SigmaForm => {
                let mut v = vec![&m.tau1];
                v.extend(m.sigma2.as_ref());
                v
            }
            MatrixKind::CompanionL1 => m.p.iter().chain(m.q.iter()).collect(),
        }
    }

    /// Whether `F` is constant on `[a, b]` (an interval between consecutive mesh nodes).
    pub fn constant_on(&self, a: f64, b: f64) -> bool {
        self.used_fns().iter().all(|f| f.constant_on(a, b))
    }

    /// Interior points where some entry of `F` is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        let mut nodes: Vec<f64> = self.used_fns().iter().flat_map(|f| f.nodes()).collect();
        nodes.retain(|&x| x > 0.0 && x < 1.0);
        merge_nodes(nodes)
    }

    pub fn mesh(&self) -> &[f64] {
        &self.model.mesh
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.model.breakpoints
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs};

    fn vlad(t1: &str, t2: &str) -> RegularizationMatrix {
        let model = CoefficientModel::from_antiderivatives(
            CoeffFn::expr(t1).unwrap(),
            CoeffFn::expr(t2).unwrap(),
            Regime::W2m1W2m2,
            101,
        )
        .unwrap();
        build_matrix(Arc::new(model), MatrixKind::Vladimirov).unwrap()
    }

    #[test]
    fn zero_coefficients_give_zero_antiderivatives() {
        let spec = CoefficientSpec {
            p: Some(FnInput::expr("0")),
            q: Some(FnInput::expr("0")),
            ..Default::default()
        };
        let m = build_coefficients(&spec, Regime::L1L1, 201).unwrap();
        for &x in &m.mesh {
            assert_eq!(m.tau1.eval(x), ZERO);
            assert_eq!(m.tau2.eval(x), ZERO);
        }
    }

    #[test]
    fn unit_step_tau1_records_breakpoint() {
        let spec = CoefficientSpec {
            tau1: Some(FnInput::Piecewise {
                breakpoints: vec![0.5],
                pieces: vec!["0".into(), "1".into()],
            }),
            q: Some(FnInput::expr("0")),
            ..Default::default()
        };
        let m = build_coefficients(&spec, Regime::W2m1W2m2, 11).unwrap();
        assert_eq!(m.breakpoints, vec![0.5]);
        assert!(m.mesh.contains(&0.5));
        assert_eq!(m.tau1.eval_side(0.5, Side::Left), ZERO);
        assert_eq!(m.tau1.eval_side(0.5, Side::Right), ONE);
    }

    #[test]
    fn constant_p_integrates_to_identity() {
        let spec = CoefficientSpec {
            p: Some(FnInput::expr("1")),
            q: Some(FnInput::expr("0")),
            ..Default::default()
        };
        let m = build_coefficients(&spec, Regime::L1L1, 2001).unwrap();
        let err = m.mesh.iter().map(|&x| (m.tau1.eval(x) - c(x, 0.0)).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14, "max error {err}");
        // sampled p takes the trapezoid path
        let spec = CoefficientSpec {
            p: Some(FnInput::Samples {
                samples: vec![1.0; 11],
                samples_im: None,
            }),
            q: Some(FnInput::expr("0")),
            ..Default::default()
        };
        let m = build_coefficients(&spec, Regime::L1L1, 11).unwrap();
        let err = m.mesh.iter().map(|&x| (m.tau1.eval(x) - c(x, 0.0)).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn second_antiderivative_of_polynomial_q() {
        // q = 6x, tau2(0) = 1, tau2'(0) = 2  =>  tau2 = 1 + 2x + x^3
        let spec = CoefficientSpec {
            p: Some(FnInput::expr("0")),
            q: Some(FnInput::expr("6x")),
            constants: AntiderivativeConstants {
                tau1_at_0: 0.0,
                tau2_at_0: 1.0,
                dtau2_at_0: 2.0,
            },
            ..Default::default()
        };
        let m = build_coefficients(&spec, Regime::L1L1, 51).unwrap();
        for k in 0..=200 {
            let x = k as f64 / 200.0;
            let exact = 1.0 + 2.0 * x + x * x * x;
            assert!((m.tau2.eval(x) - c(exact, 0.0)).norm() < 1e-13, "x = {x}");
            let s = m.sigma2.as_ref().unwrap().eval(x);
            assert!((s - c(2.0 + 3.0 * x * x, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = CoefficientSpec {
            tau1: Some(FnInput::Piecewise {
                breakpoints: vec![1.5],
                pieces: vec!["0".into(), "1".into()],
            }),
            tau2: Some(FnInput::expr("0")),
            ..Default::default()
        };
        assert!(matches!(
            build_coefficients(&spec, Regime::W2m1W2m2, 11),
            Err(Error::BreakpointOutOfRange(_))
        ));
        let spec = CoefficientSpec {
            tau1: Some(FnInput::expr("1/(x - 0.5)")),
            tau2: Some(FnInput::expr("0")),
            ..Default::default()
        };
        match build_coefficients(&spec, Regime::W2m1W2m2, 11) {
            Err(Error::NonFiniteSample { name, x }) => {
                assert_eq!(name, "tau1");
                assert!((x - 0.5).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        let spec = CoefficientSpec {
            tau1: Some(FnInput::Samples {
                samples: vec![0.0, f64::NAN, 0.0],
                samples_im: None,
            }),
            tau2: Some(FnInput::expr("0")),
            ..Default::default()
        };
        assert!(matches!(
            build_coefficients(&spec, Regime::W2m1W2m2, 11),
            Err(Error::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn vladimirov_rows_for_constant_coefficients() {
        let (t1, t2) = (c(0.7, 0.1), c(-1.3, 0.4));
        let f = vlad("0.7 + 0.1i", "-1.3 + 0.4i").eval(0.3);
        let row = |k: usize| [f[(k, 0)], f[(k, 1)], f[(k, 2)], f[(k, 3)]];
        assert_eq!(row(0), [ZERO, ONE, ZERO, ZERO]);
        let close = |a: [C64; 4], b: [C64; 4]| a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < 1e-14);
        assert!(close(row(1), [-t2, t1, ONE, ZERO]));
        assert!(close(row(2), [t1 * t2, -t1 * t1 + t2 * 2.0, -t1, ONE]));
        assert!(close(row(3), [t2 * t2, -t1 * t2, -t2, ZERO]));
    }

    #[test]
    fn zero_coefficients_give_nilpotent_shift() {
        let f = vlad("0", "0").eval(0.5);
        let mut expected = Mat4::zeros();
        expected[(0, 1)] = ONE;
        expected[(1, 2)] = ONE;
        expected[(2, 3)] = ONE;
        assert_eq!(f, expected);
        assert_eq!(star_matrix(&vlad("0", "0")).eval(0.5), expected);
    }

    #[test]
    fn companion_rows() {
        let spec = CoefficientSpec {
            p: Some(FnInput::expr("2 + x")),
            q: Some(FnInput::expr("3x")),
            ..Default::default()
        };
        let model = Arc::new(build_coefficients(&spec, Regime::L1L1, 11).unwrap());
        let f = build_matrix(model, MatrixKind::CompanionL1).unwrap().eval(0.5);
        assert_eq!([f[(2, 0)], f[(2, 1)], f[(2, 2)], f[(2, 3)]], [ZERO, c(2.5, 0.0), ZERO, ONE]);
        assert_eq!([f[(3, 0)], f[(3, 1)], f[(3, 2)], f[(3, 3)]], [c(-1.5, 0.0), ZERO, ZERO, ZERO]);
    }

    #[test]
    fn kind_compatibility() {
        let spec = CoefficientSpec {
            tau1: Some(FnInput::expr("x")),
            tau2: Some(FnInput::expr("x^2")),
            ..Default::default()
        };
        let model = Arc::new(build_coefficients(&spec, Regime::W2m1W2m2, 11).unwrap());
        assert!(build_matrix(model.clone(), MatrixKind::Vladimirov).is_ok());
        assert!(matches!(
            build_matrix(model.clone(), MatrixKind::SigmaForm),
            Err(Error::IncompatibleKind { .. })
        ));
        assert!(matches!(
            build_matrix(model, MatrixKind::CompanionL1),
            Err(Error::IncompatibleKind { .. })
        ));
    }

    #[test]
    fn star_entry_by_index_substitution() {
        // f*_{21} = (-1)^4 f_{43} = -tau2 = f_{21}
        let f = vlad("sin(x)", "2 + x^2");
        let x = 0.37;
        let fs = star_matrix(&f).eval(x);
        let raw = f.eval(x);
        assert!((fs[(1, 0)] - raw[(3, 2)]).norm() < 1e-15);
        assert!((fs[(1, 0)] - raw[(1, 0)]).norm() < 1e-15);
    }

    #[test]
    fn vladimirov_is_self_starred_and_traceless() {
        let f = vlad("sin(3x) + i*x", "exp(x) - 2x^2");
        for &x in f.mesh() {
            let m = f.eval(x);
            assert!(max_abs(&(star_transform(&m) - m)) < 1e-14);
            assert!(m.trace().norm() < 1e-14);
        }
    }

    #[test]
    fn samples_handle_duplicate_nodes() {
        let s = Samples::linear(vec![0.0, 0.5, 0.5, 1.0], vec![ZERO, ONE, c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        assert_eq!(s.eval(0.25, Side::Right), c(0.5, 0.0));
        assert_eq!(s.eval(0.5, Side::Left), ONE);
        assert_eq!(s.eval(0.5, Side::Right), c(3.0, 0.0));
        assert_eq!(s.eval(0.75, Side::Right), c(3.5, 0.0));
        assert_eq!(s.eval(1.0, Side::Right), c(4.0, 0.0));
        assert_eq!(s.eval(0.0, Side::Right), ZERO);
    }

    proptest::proptest! {
        #[test]
        fn star_is_an_involution(entries in proptest::collection::vec(-5.0f64..5.0, 32)) {
            let m = Mat4::from_fn(|i, j| c(entries[4 * i + j], entries[16 + 4 * i + j]));
            let back = star_transform(&star_transform(&m));
            proptest::prop_assert!(max_abs(&(back - m)) == 0.0);
        }

        #[test]
        fn every_kind_is_traceless(a in -3.0f64..3.0, b in -3.0f64..3.0, x in 0.0f64..1.0) {
            let spec = CoefficientSpec {
                p: Some(FnInput::Expr(format!("{a} * cos(x)"))),
                q: Some(FnInput::Expr(format!("{b} + x"))),
                ..Default::default()
            };
            let model = Arc::new(build_coefficients(&spec, Regime::L1L1, 21).unwrap());
            for kind in [MatrixKind::Vladimirov, MatrixKind::SigmaForm, MatrixKind::CompanionL1] {
                let f = build_matrix(model.clone(), kind).unwrap();
                proptest::prop_assert!(f.eval(x).trace().norm() < 1e-12);
                proptest::prop_assert!(max_abs(&(star_transform(&star_transform(&f.eval(x))) - f.eval(x))) == 0.0);
            }
        }
    }
}
