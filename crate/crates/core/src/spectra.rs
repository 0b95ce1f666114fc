//! Zeros of the characteristic functions: argument-principle counting on
//! rectangles, secant refinement, the three spectra, class-𝒲 diagnostics and
//! Hadamard reconstruction.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfun::{derivative, evaluate, stencil_radius, AsymptoticModel, Scaled};
use crate::error::{Error, Result};
use crate::linalg::{c, C64, ONE, ZERO};
use crate::propagator::Problem;

/// Largest phase step accepted between neighbouring contour samples.
const MAX_PHASE_STEP: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraSettings {
    /// Eigenvalues per spectrum.
    pub count: usize,
    /// Window width in `t = |λ|^{1/4}`.
    pub window: f64,
    /// Offset of the first window edge, as a fraction of `window`.
    pub phase: f64,
    /// Minimal half-height of a window in the imaginary direction.
    pub band: f64,
    /// Half-height as a fraction of the window width.
    pub band_frac: f64,
    /// The negative front stops here; `None` searches symmetrically.
    /// Written as `-inf` in configuration files, which have no null.
    #[serde(with = "unbounded")]
    pub lower_bound: Option<f64>,
    pub max_windows: usize,
    /// Relative step size at which secant refinement stops.
    pub tol: f64,
    pub simplicity_threshold: f64,
    pub separation_threshold: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(f64::NEG_INFINITY))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.filter(|x| x.is_finite()))
    }
}

impl Default for SpectraSettings {
    fn default() -> Self {
        SpectraSettings {
            count: 8,
            window: 2.0,
            phase: 0.37,
            band: 1.0,
            band_frac: 0.5,
            lower_bound: Some(-5000.0),
            max_windows: 4000,
            tol: 1e-14,
            simplicity_threshold: 1e-6,
            separation_threshold: 1e-4,
        }
    }
}

impl SpectraSettings {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.window, self.band, self.tol, self.simplicity_threshold, self.separation_threshold];
        if pos.iter().any(|v| !(*v > 0.0)) || !(self.band_frac >= 0.0) || !(0.0..1.0).contains(&self.phase) {
            return Err(Error::Config("spectra tolerances, window and band must be positive".into()));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in the `λ`-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
}

impl Window {
    pub fn new(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Self {
        Window { re_lo, re_hi, im_lo, im_hi }
    }

    pub fn center(&self) -> C64 {
        c(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))
    }

    pub fn width(&self) -> f64 {
        self.re_hi - self.re_lo
    }

    pub fn height(&self) -> f64 {
        self.im_hi - self.im_lo
    }

    pub fn contains(&self, z: C64, slack: f64) -> bool {
        let sx = slack * self.width();
        let sy = slack * self.height();
        z.re >= self.re_lo - sx && z.re <= self.re_hi + sx && z.im >= self.im_lo - sy && z.im <= self.im_hi + sy
    }

    fn corners(&self) -> [C64; 4] {
        [
            c(self.re_lo, self.im_lo),
            c(self.re_hi, self.im_lo),
            c(self.re_hi, self.im_hi),
            c(self.re_lo, self.im_hi),
        ]
    }

    fn inflate(&self, frac: f64) -> Window {
        let dx = frac * self.width();
        let dy = frac * self.height();
        Window::new(self.re_lo - dx, self.re_hi + dx, self.im_lo - dy, self.im_hi + dy)
    }

    /// Cuts across the longer side at fraction `at`.
    fn split(&self, at: f64) -> (Window, Window) {
        if self.width() >= self.height() {
            let m = self.re_lo + at * self.width();
            (
                Window::new(self.re_lo, m, self.im_lo, self.im_hi),
                Window::new(m, self.re_hi, self.im_lo, self.im_hi),
            )
        } else {
            let m = self.im_lo + at * self.height();
            (
                Window::new(self.re_lo, self.re_hi, self.im_lo, m),
                Window::new(self.re_lo, self.re_hi, m, self.im_hi),
            )
        }
    }
}

fn wrap(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

fn check_values(v: &[Scaled], z: C64) -> Result<()> {
    for s in v {
        if s.is_zero() || !s.mant.re.is_finite() || !s.mant.im.is_finite() || !s.log.is_finite() {
            return Err(Error::ZeroOnContour(z));
        }
    }
    Ok(())
}

/// Total phase change of each component of `f` along the segment `a → b`.
fn track_edge<F>(f: &F, a: C64, b: C64, fa: &[Scaled], fb: &[Scaled], min_len: f64, total: &mut [f64]) -> Result<()>
where
    F: Fn(C64) -> Result<Vec<Scaled>> + ?Sized,
{
    let mut stack: Vec<(C64, C64, Vec<Scaled>, Vec<Scaled>)> = vec![(a, b, fa.to_vec(), fb.to_vec())];
    while let Some((a, b, fa, fb)) = stack.pop() {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        check_values(&fm, m)?;
        let mut ok = true;
        let mut steps = Vec::with_capacity(fa.len());
        for i in 0..fa.len() {
            let d1 = wrap(fm[i].arg() - fa[i].arg());
            let d2 = wrap(fb[i].arg() - fm[i].arg());
            let d = wrap(fb[i].arg() - fa[i].arg());
            if d1.abs() >= MAX_PHASE_STEP || d2.abs() >= MAX_PHASE_STEP || (d1 + d2 - d).abs() > 1e-9 {
                ok = false;
                break;
            }
            steps.push(d1 + d2);
        }
        if ok {
            for (t, s) in total.iter_mut().zip(steps) {
                *t += s;
            }
            continue;
        }
        if (b - a).norm() < min_len {
            return Err(Error::ZeroOnContour(m));
        }
        // push the second half first so halves are consumed in order a → b
        stack.push((m, b, fm.clone(), fb));
        stack.push((a, m, fa, fm));
    }
    Ok(())
}

/// Winding numbers of every component of `f` around `w` (no inflation).
pub fn winding_numbers<F>(f: &F, w: &Window) -> Result<Vec<i64>>
where
    F: Fn(C64) -> Result<Vec<Scaled>> + ?Sized,
{
    let corners = w.corners();
    let scale = corners.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let min_len = 1e-11 * scale;
    let pieces = 4;
    let mut pts = Vec::with_capacity(4 * pieces + 1);
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        for k in 0..pieces {
            pts.push(a + (b - a) * (k as f64 / pieces as f64));
        }
    }
    pts.push(corners[0]);
    let vals: Vec<Vec<Scaled>> = pts
        .iter()
        .map(|&z| {
            let v = f(z)?;
            check_values(&v, z)?;
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; vals[0].len()];
    for k in 0..pts.len() - 1 {
        track_edge(f, pts[k], pts[k + 1], &vals[k], &vals[k + 1], min_len, &mut total)?;
    }
    total
        .iter()
        .map(|&t| {
            let n = t / (2.0 * PI);
            if (n - n.round()).abs() > 0.05 {
                Err(Error::NonIntegerWinding(t))
            } else {
                Ok(n.round() as i64)
            }
        })
        .collect()
}

/// Number of zeros of `f` inside `window`; the window is inflated (up to
/// three times) when a zero sits on its boundary.
pub fn count_zeros<F>(f: &F, window: &Window) -> Result<i64>
where
    F: Fn(C64) -> Result<Scaled> + Sync,
{
    let g = |z: C64| -> Result<Vec<Scaled>> { Ok(vec![f(z)?]) };
    let mut w = *window;
    let mut last = None;
    for _ in 0..4 {
        match winding_numbers(&g, &w) {
            Ok(n) => return Ok(n[0]),
            Err(Error::ZeroOnContour(z)) => {
                last = Some(z);
                w = w.inflate(0.02);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::ZeroOnContour(last.unwrap_or(window.center())))
}

/// A refined zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub lambda: C64,
    /// `|Δ(λ)| / (|Δ'(λ)| (1 + |λ|))`, a relative location error estimate.
    pub residual: f64,
    /// `|Δ'(λ)|`
    pub dmag: Scaled,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

fn secant<F>(f: &F, w: &Window, tol: f64) -> Option<C64>
where
    F: Fn(C64) -> Result<Scaled>,
{
    let mut z0 = w.center();
    let mut z1 = z0 + c(0.02 * w.width(), 0.0);
    let mut f0 = f(z0).ok()?;
    if f0.is_zero() {
        return Some(z0);
    }
    let mut f1 = f(z1).ok()?;
    // smallest relative step seen, and the iterate it produced
    let mut best = (f64::INFINITY, z1);
    let settled = |best: (f64, C64)| (best.0 <= 1e-9).then_some(best.1);
    for _ in 0..80 {
        if f1.is_zero() {
            return Some(z1);
        }
        let q = f0.ratio(&f1);
        let denom = ONE - q;
        if denom.norm() == 0.0 || !q.re.is_finite() || !q.im.is_finite() {
            return settled(best);
        }
        let step = (z1 - z0) / denom;
        let z2 = z1 - step;
        if !w.contains(z2, 0.05) {
            return settled(best);
        }
        z0 = z1;
        f0 = f1;
        z1 = z2;
        f1 = f(z1).ok()?;
        let rel = step.norm() / (1.0 + z1.norm());
        if rel <= tol {
            return Some(z1);
        }
        if rel < best.0 {
            best = (rel, z1);
        }
    }
    // rounding noise in f can stall the iteration short of `tol`
    settled(best)
}

fn finish_zero<F>(f: &F, z: C64, flag: Option<String>) -> Result<Zero>
where
    F: Fn(C64) -> Result<Scaled>,
{
    let v = f(z)?;
    let d = derivative(f, z, stencil_radius(z))?;
    let residual = if d.is_zero() {
        f64::INFINITY
    } else {
        v.div(&d).abs() / (1.0 + z.norm())
    };
    Ok(Zero {
        lambda: z,
        residual,
        dmag: dmag_of(&d),
        flag,
    })
}

fn dmag_of(d: &Scaled) -> Scaled {
    Scaled {
        mant: if d.is_zero() { ZERO } else { ONE },
        log: d.log,
    }
}

/// Locates the `n` zeros of `f` inside `w` by secant iteration, splitting the
/// window (and recounting) when the iteration escapes.
fn locate<F>(f: &F, w: &Window, n: i64, tol: f64, depth: usize, out: &mut Vec<Zero>) -> Result<()>
where
    F: Fn(C64) -> Result<Scaled> + Sync,
{
    if n <= 0 {
        return Ok(());
    }
    if n == 1 {
        if let Some(z) = secant(f, w, tol) {
            if w.contains(z, 1e-9) {
                out.push(finish_zero(f, z, None)?);
                return Ok(());
            }
        }
    }
    let tiny = w.width().max(w.height()) < 1e-10 * (1.0 + w.center().norm());
    if depth >= 60 || tiny {
        let z = w.center();
        for _ in 0..n {
            out.push(finish_zero(f, z, Some(format!("unresolved cluster of {n} zeros")))?);
        }
        return Ok(());
    }
    // off-centre cuts, so symmetric windows are not cut along the real axis
    let mut halves = None;
    for at in [0.5618, 0.4382, 0.6459, 0.3541] {
        let (a, b) = w.split(at);
        let g = |z: C64| -> Result<Vec<Scaled>> { Ok(vec![f(z)?]) };
        match (winding_numbers(&g, &a), winding_numbers(&g, &b)) {
            (Ok(na), Ok(nb)) => {
                halves = Some((a, b, na[0], nb[0]));
                break;
            }
            (Err(Error::ZeroOnContour(_)), _) | (_, Err(Error::ZeroOnContour(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let Some((a, b, na, nb)) = halves else {
        return Err(Error::ZeroOnContour(w.center()));
    };
    let before = out.len();
    locate(f, &a, na, tol, depth + 1, out)?;
    locate(f, &b, nb, tol, depth + 1, out)?;
    if na + nb != n {
        let msg = format!("split counts {na}+{nb} disagree with {n}");
        for z in out[before..].iter_mut() {
            z.flag.get_or_insert(msg.clone());
        }
    }
    Ok(())
}

/// Refined zeros of `f` inside `w`, with the winding number it was checked against.
pub fn zeros_in_window<F>(f: &F, w: &Window, tol: f64) -> Result<(i64, Vec<Zero>)>
where
    F: Fn(C64) -> Result<Scaled> + Sync,
{
    let n = count_zeros(f, w)?;
    let mut out = Vec::new();
    locate(f, w, n, tol, 0, &mut out)?;
    Ok((n, out))
}

/// Zeros found for one function during a search.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ZeroList {
    pub zeros: Vec<Zero>,
    /// Fewer than the requested count were bracketed.
    pub partial: bool,
    /// Windows whose winding count disagreed with the refined zeros.
    pub inconsistent_windows: usize,
}

impl ZeroList {
    pub fn lambdas(&self) -> Vec<C64> {
        self.zeros.iter().map(|z| z.lambda).collect()
    }
}

struct Front {
    sign: f64,
    /// Inner edge in `t`.
    t: f64,
    active: bool,
}

/// First `n` zeros (by modulus) of each `Δ_jk` in `which`, found by marching
/// windows outward along the real axis in both directions.
pub fn find_zeros(problem: &Problem, which: &[(usize, usize)], n: usize, settings: &SpectraSettings) -> Result<Vec<ZeroList>> {
    settings.validate()?;
    let m = which.len();
    let mut lists: Vec<ZeroList> = vec![ZeroList::default(); m];
    if n == 0 || m == 0 {
        return Ok(lists);
    }
    let all = |z: C64| -> Result<Vec<Scaled>> {
        let s = evaluate(problem, z, which)?;
        which.iter().map(|&(j, k)| s.get(j, k)).collect()
    };
    let w = settings.window;
    let half_height = |lo: f64, hi: f64| settings.band.max(settings.band_frac * (hi - lo));

    let process = |win: &Window, lists: &mut Vec<ZeroList>, done: &[bool]| -> Result<()> {
        let counts = winding_numbers(&all, win)?;
        for (idx, &(j, k)) in which.iter().enumerate() {
            if done[idx] || counts[idx] == 0 {
                continue;
            }
            let single = |z: C64| -> Result<Scaled> { evaluate(problem, z, &[(j, k)])?.get(j, k) };
            let mut found = Vec::new();
            locate(&single, win, counts[idx], settings.tol, 0, &mut found)?;
            if found.len() as i64 != counts[idx] {
                lists[idx].inconsistent_windows += 1;
            }
            lists[idx].zeros.extend(found);
        }
        Ok(())
    };

    // central window around the origin, then two fronts
    let mut t0 = settings.phase * w;
    let mut done = vec![false; m];
    let mut windows = 0usize;
    {
        let mut h_scale = 1.0;
        let mut tries = 0;
        loop {
            let r = t0.powi(4);
            let hh = half_height(-r, r) * h_scale;
            let win = Window::new(-r, r, -hh, hh);
            match process(&win, &mut lists, &done) {
                Ok(()) => break,
                Err(Error::ZeroOnContour(z)) if tries < 3 => {
                    tries += 1;
                    if (z.im.abs() - hh).abs() < 1e-6 * hh {
                        h_scale *= 1.25;
                    } else {
                        t0 += 0.1 * w;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        windows += 1;
    }
    let lower = settings.lower_bound;
    let mut fronts = [
        Front {
            sign: 1.0,
            t: t0,
            active: true,
        },
        Front {
            sign: -1.0,
            t: t0,
            active: lower.is_none_or(|lb| lb < -t0.powi(4)),
        },
    ];

    loop {
        // a function is done once it has n zeros and no unexplored window can hold a smaller one
        let frontier = fronts
            .iter()
            .filter(|f| f.active)
            .map(|f| f.t.powi(4))
            .fold(f64::INFINITY, f64::min);
        for idx in 0..m {
            let zs = &lists[idx].zeros;
            if zs.len() >= n {
                let mut mods: Vec<f64> = zs.iter().map(|z| z.lambda.norm()).collect();
                mods.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                done[idx] = mods[n - 1] < frontier;
            }
        }
        if done.iter().all(|&d| d) || !fronts.iter().any(|f| f.active) {
            break;
        }
        if windows >= settings.max_windows {
            break;
        }
        let fi = if fronts[1].active && (!fronts[0].active || fronts[1].t < fronts[0].t) {
            1
        } else {
            0
        };
        let (sign, t_in) = (fronts[fi].sign, fronts[fi].t);
        let mut t_out = t_in + w;
        let mut h_scale = 1.0;
        let mut tries = 0;
        loop {
            let (a, b) = (t_in.powi(4), t_out.powi(4));
            let (lo, hi) = if sign > 0.0 { (a, b) } else { (-b, -a) };
            let hh = half_height(lo, hi) * h_scale;
            let win = Window::new(lo, hi, -hh, hh);
            match process(&win, &mut lists, &done) {
                Ok(()) => break,
                Err(Error::ZeroOnContour(z)) if tries < 3 => {
                    tries += 1;
                    if (z.im.abs() - hh).abs() < 1e-6 * hh {
                        h_scale *= 1.25;
                    } else {
                        t_out += 0.1 * w;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        windows += 1;
        fronts[fi].t = t_out;
        if sign < 0.0 {
            if let Some(lb) = lower {
                if -t_out.powi(4) <= lb {
                    fronts[fi].active = false;
                }
            }
        }
    }

    for list in lists.iter_mut() {
        list.zeros.sort_by(|a, b| a.lambda.norm().partial_cmp(&b.lambda.norm()).expect("finite"));
        if list.zeros.len() < n {
            list.partial = true;
        }
        list.zeros.truncate(n);
        list.zeros.sort_by(|a, b| {
            (a.lambda.re, a.lambda.im)
                .partial_cmp(&(b.lambda.re, b.lambda.im))
                .expect("finite")
        });
    }
    Ok(lists)
}

/// Zeros of `Δ₂₂`, `Δ₃₂`, `Δ₄₂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub s12: ZeroList,
    pub s13: ZeroList,
    pub s23: ZeroList,
}

impl SpectrumSet {
    pub fn named(&self) -> [(&'static str, &ZeroList); 3] {
        [("S12", &self.s12), ("S13", &self.s13), ("S23", &self.s23)]
    }
}

/// Characteristic function whose zeros form each spectrum.
pub const SPECTRUM_DELTAS: [(&str, (usize, usize)); 3] = [("S12", (2, 2)), ("S13", (3, 2)), ("S23", (4, 2))];

pub fn three_spectra(problem: &Problem, n: usize, settings: &SpectraSettings) -> Result<SpectrumSet> {
    let which: Vec<(usize, usize)> = SPECTRUM_DELTAS.iter().map(|(_, jk)| *jk).collect();
    let mut lists = find_zeros(problem, &which, n, settings)?;
    let s23 = lists.pop().expect("three lists");
    let s13 = lists.pop().expect("three lists");
    let s12 = lists.pop().expect("three lists");
    Ok(SpectrumSet { s12, s13, s23 })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassWReport {
    /// Zeros of `Δ₁₁`, `Δ₂₂`, `Δ₃₃`.
    pub zeros: [Vec<C64>; 3],
    /// Smallest `|Δ'| R / max_{|ζ-λ|=R} |Δ|` over the zeros of each `Δ_kk`.
    pub simplicity: [Option<f64>; 3],
    /// Smallest `|λ - μ| / (1 + |λ|)` between zeros of `Δ_kk` and `Δ_{k+1,k+1}`.
    pub separation: [Option<f64>; 2],
    pub in_class: bool,
    pub failure: Option<String>,
}

fn simplicity_margin(problem: &Problem, k: usize, z: C64) -> Result<f64> {
    let f = |l: C64| -> Result<Scaled> { evaluate(problem, l, &[(k, k)])?.get(k, k) };
    let d = derivative(&f, z, stencil_radius(z))?;
    let r = 0.25 * z.norm().max(1.0).powf(0.75);
    let mut top = f64::NEG_INFINITY;
    for q in 0..8 {
        let p = z + C64::from_polar(r, q as f64 * PI / 4.0);
        top = top.max(f(p)?.ln_abs());
    }
    Ok((d.ln_abs() + r.ln() - top).exp())
}

/// Simplicity of the zeros of `Δ_kk` (k = 1, 2, 3) and separation of consecutive ones.
pub fn class_w_check(problem: &Problem, n: usize, settings: &SpectraSettings) -> Result<ClassWReport> {
    let mut report = ClassWReport {
        zeros: Default::default(),
        simplicity: [None; 3],
        separation: [None; 2],
        in_class: true,
        failure: None,
    };
    if n == 0 {
        return Ok(report);
    }
    let sym = SpectraSettings {
        lower_bound: None,
        ..settings.clone()
    };
    let lists = find_zeros(problem, &[(1, 1), (2, 2), (3, 3)], n, &sym)?;
    for k in 0..3 {
        report.zeros[k] = lists[k].lambdas();
        let margins: Vec<f64> = report.zeros[k]
            .par_iter()
            .map(|&z| simplicity_margin(problem, k + 1, z))
            .collect::<Result<_>>()?;
        report.simplicity[k] = margins.iter().copied().reduce(f64::min);
        if lists[k].zeros.iter().any(|z| z.flag.is_some()) && report.failure.is_none() {
            report.in_class = false;
            report.failure = Some(format!("Delta_{0}{0} has an unresolved zero cluster", k + 1));
        }
    }
    for k in 0..2 {
        let mut best: Option<f64> = None;
        for a in &report.zeros[k] {
            for b in &report.zeros[k + 1] {
                let s = (a - b).norm() / (1.0 + a.norm());
                best = Some(best.map_or(s, |x| x.min(s)));
            }
        }
        report.separation[k] = best;
    }
    for k in 0..3 {
        if let Some(m) = report.simplicity[k] {
            if m < settings.simplicity_threshold && report.failure.is_none() {
                report.in_class = false;
                report.failure = Some(format!(
                    "simplicity: Delta_{0}{0} has a zero with margin {m:.3e} below {1:e}",
                    k + 1,
                    settings.simplicity_threshold
                ));
            }
        }
    }
    for k in 0..2 {
        if let Some(s) = report.separation[k] {
            if s < settings.separation_threshold && report.failure.is_none() {
                report.in_class = false;
                report.failure = Some(format!(
                    "separation: zeros of Delta_{0}{0} and Delta_{1}{1} are {s:.3e} apart (relative), below {2:e}",
                    k + 1,
                    k + 2,
                    settings.separation_threshold
                ));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HadamardSettings {
    /// Radii `|ρ|` on `arg ρ = π/8` (that is `arg λ = π/2`) used for the constant.
    pub radii: Vec<f64>,
    /// Relative spread over the last three radii above which the constant is flagged.
    pub spread_threshold: f64,
    /// Tail zeros are modelled up to `tail_factor · N`.
    pub tail_factor: usize,
}

impl Default for HadamardSettings {
    fn default() -> Self {
        HadamardSettings {
            radii: vec![16.0, 24.0, 32.0, 40.0],
            spread_threshold: 1e-3,
            tail_factor: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardReport {
    pub index: (usize, usize),
    pub n_zeros: usize,
    pub origin_multiplicity: usize,
    pub sigma: f64,
    pub constant: C64,
    pub constants: Vec<(f64, C64)>,
    pub spread: f64,
    pub converged: bool,
    pub probes: Vec<C64>,
    pub values: Vec<C64>,
}

struct Product {
    zeros: Vec<C64>,
    origin: usize,
    sigma: f64,
    tail: std::ops::Range<usize>,
    remainder: bool,
}

impl Product {
    fn new(zeros: &[C64], tail_factor: usize) -> Self {
        let scale = zeros.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let origin = zeros.iter().filter(|z| z.norm() <= 1e-12 * scale).count();
        let mut nz: Vec<C64> = zeros.iter().copied().filter(|z| z.norm() > 1e-12 * scale).collect();
        nz.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).expect("finite"));
        let n = nz.len();
        // fit σ in λ_l ≈ (π(l + σ))⁴ from the last few zeros
        let last = n.min(5);
        let sigma = if last == 0 {
            0.0
        } else {
            (n - last..n)
                .map(|i| nz[i].norm().powf(0.25) / PI - (i + 1 + origin) as f64)
                .sum::<f64>()
                / last as f64
        };
        let first_tail = n + origin + 1;
        Product {
            zeros: nz,
            origin,
            sigma,
            tail: first_tail..(tail_factor * (n + origin)).max(first_tail - 1) + 1,
            remainder: tail_factor > 0 && n > 0,
        }
    }

    /// `m ln λ + Σ ln(1 − λ/λ_l)` over computed and modelled zeros.
    fn ln(&self, lambda: C64) -> C64 {
        let mut acc = ZERO;
        if self.origin > 0 {
            acc += lambda.ln() * self.origin as f64;
        }
        for z in &self.zeros {
            acc += (ONE - lambda / z).ln();
        }
        for l in self.tail.clone() {
            let model = (PI * (l as f64 + self.sigma)).powi(4);
            acc += (ONE - lambda / model).ln();
        }
        // first-order remainder beyond the modelled tail
        let edge = self.tail.end as f64 - 0.5 + self.sigma;
        if self.remainder && edge > 0.0 {
            acc -= lambda / (3.0 * PI.powi(4) * edge.powi(3));
        }
        acc
    }
}

/// Rebuilds `Δ_mk` from its zeros as `C λ^m ∏ (1 − λ/λ_l)`, the constant fixed
/// by the leading asymptotics along `arg λ = π/2`.
pub fn hadamard_reconstruct(
    zeros: &[C64],
    index: (usize, usize),
    probes: &[C64],
    settings: &HadamardSettings,
) -> Result<HadamardReport> {
    let (i, j) = index;
    if !matches!(index, (2, 2) | (3, 2) | (4, 2)) {
        return Err(Error::Index(format!("Hadamard reconstruction covers Delta_22, Delta_32, Delta_42, not Delta_{i}{j}")));
    }
    let prod = Product::new(zeros, settings.tail_factor);
    let angle = PI / 8.0;
    let model = AsymptoticModel::for_rho(C64::from_polar(1.0, angle), &crate::charfun::FormMatrices::standard())?;
    let cst = model.constant(i, j);
    let mut constants = Vec::with_capacity(settings.radii.len());
    for &r in &settings.radii {
        let rho = C64::from_polar(r, angle);
        let lambda = c(0.0, r.powi(4));
        let lead = model.leading(i, j, rho, cst).ln();
        let lnc = lead - prod.ln(lambda);
        constants.push((r, lnc.exp()));
    }
    let constant = constants.last().map(|x| x.1).unwrap_or(ZERO);
    let k = constants.len();
    let spread = constants[k.saturating_sub(3)..]
        .iter()
        .map(|(_, v)| (v - constant).norm() / constant.norm().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    let converged = !zeros.is_empty() && k >= 3 && spread <= settings.spread_threshold;
    let values = probes.iter().map(|&p| constant * prod.ln(p).exp()).collect();
    Ok(HadamardReport {
        index,
        n_zeros: zeros.len(),
        origin_multiplicity: prod.origin,
        sigma: prod.sigma,
        constant,
        constants,
        spread,
        converged,
        probes: probes.to_vec(),
        values,
    })
}
