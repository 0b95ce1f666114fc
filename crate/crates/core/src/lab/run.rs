//! Experiment drivers behind the CLI verbs.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::record::{spectrum_distances, spectrum_records, verdict, RunRecord, SpectrumDistance, Verdict};
use crate::charfun::{delta_value, evaluate};
use crate::coeffs::{MatrixKind, Regime};
use crate::error::{Context, Error, Result};
use crate::linalg::{c, Mat4, C64};
use crate::propagator::{bracket_along, solutions_c, Problem};
use crate::spectra::{class_w_check, hadamard_reconstruct, three_spectra, ClassWReport, HadamardReport, SPECTRUM_DELTAS};
use crate::weyl::{
    check_symplectic, forms_self_test, ident1, real1_deviation, real2_deviation, star_self_test, symplectic_residual,
    weyl_matrix,
};

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Identifies the problem a report belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub hash: String,
    pub regime: Regime,
    pub kind: MatrixKind,
    /// Recorded for reference only.
    pub tau1_at_0: [f64; 2],
}

fn meta(cfg: &Config, problem: &Problem) -> RunMeta {
    RunMeta {
        hash: cfg.hash(),
        regime: cfg.problem.regime,
        kind: problem.matrix.kind,
        tau1_at_0: pair(problem.matrix.model.tau1.eval(0.0)),
    }
}

fn build(cfg: &Config) -> Result<Problem> {
    cfg.problem(None).context(|| format!("building problem {}", cfg.hash()))
}

/// The three spectra of a configured problem as records.
pub fn spectra_records(cfg: &Config, timing: bool) -> Result<Vec<RunRecord>> {
    let problem = build(cfg)?;
    spectra_records_of(cfg, &problem, timing)
}

fn spectra_records_of(cfg: &Config, problem: &Problem, timing: bool) -> Result<Vec<RunRecord>> {
    let t = Instant::now();
    let set = three_spectra(problem, cfg.spectra.count, &cfg.spectra)
        .context(|| format!("computing spectra for {}", cfg.hash()))?;
    let ms = if timing { t.elapsed().as_millis() as u64 } else { 0 };
    Ok(spectrum_records(&cfg.hash(), &set, ms))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectraSummary {
    pub meta: RunMeta,
    pub count: usize,
    /// Spectra with fewer than `count` eigenvalues found.
    pub partial: Vec<String>,
    /// Eigenvalues whose refinement did not resolve a single simple zero.
    pub flagged: Vec<String>,
    pub class_w: ClassWReport,
}

pub struct SpectraRun {
    pub records: Vec<RunRecord>,
    pub summary: SpectraSummary,
}

pub fn run_spectra(cfg: &Config, timing: bool) -> Result<SpectraRun> {
    let problem = build(cfg)?;
    let t = Instant::now();
    let set = three_spectra(&problem, cfg.spectra.count, &cfg.spectra)
        .context(|| format!("computing spectra for {}", cfg.hash()))?;
    let ms = if timing { t.elapsed().as_millis() as u64 } else { 0 };
    let records = spectrum_records(&cfg.hash(), &set, ms);
    let mut partial = Vec::new();
    let mut flagged = Vec::new();
    for (name, list) in set.named() {
        if list.partial {
            partial.push(name.to_string());
        }
        for (i, z) in list.zeros.iter().enumerate() {
            if let Some(f) = &z.flag {
                flagged.push(format!("{name}[{}]: {f}", i + 1));
            }
        }
    }
    let class_w = class_w_check(&problem, cfg.spectra.count, &cfg.spectra).context(|| "class W check".to_string())?;
    Ok(SpectraRun {
        records,
        summary: SpectraSummary {
            meta: meta(cfg, &problem),
            count: cfg.spectra.count,
            partial,
            flagged,
            class_w,
        },
    })
}

/// Seeded `λ` samples, uniform in the disk `|λ| ≤ radius`.
pub fn identity_lambdas(seed: u64, n: usize, radius: f64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let th = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            C64::from_polar(r, th)
        })
        .collect()
}

/// `(|MᵀJ₀M − J₀|, |m₄₃ − m₂₁|, |m₄₂ − m₃₂m₂₁ + m₃₁|)` for any matrix.
pub fn matrix_identity_deviations(m: &Mat4) -> (f64, f64, f64) {
    let res = symplectic_residual(m);
    let sym = res.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    (sym, real1_deviation(m), real2_deviation(m))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentitySample {
    pub lambda: [f64; 2],
    /// The drawn sample was too close to a pole and was moved.
    pub displaced: bool,
    /// Deviations relative to `scale = max(1, max|m_jk|)²`.
    pub symplectic: f64,
    pub real1: f64,
    pub real2: f64,
    pub scale: f64,
    pub ident1: f64,
    /// `⟨z,y⟩(1) − ⟨z,y⟩(0) − (λ − μ)∫zy`, relative, with `μ = λ̄ + 1`.
    pub wron: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IdentityMaxima {
    pub symplectic: f64,
    pub real1: f64,
    pub real2: f64,
    pub ident1: f64,
    pub wron: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub meta: RunMeta,
    pub tol: f64,
    /// Tolerance for the integrated bracket rule, limited by trapezoidal quadrature.
    pub wron_tol: f64,
    /// Deviations of `U*` from `U` and `V*` from `V`.
    pub forms_self_test: [f64; 2],
    /// Largest `|F* − F|` on the grid.
    pub star_self_test: f64,
    pub samples: Vec<IdentitySample>,
    pub max: IdentityMaxima,
    pub pass: bool,
}

fn wron_deviation(problem: &Problem, lambda: C64) -> Result<f64> {
    let mu = lambda.conj() + c(1.0, 0.0);
    let y = solutions_c(problem, lambda)?;
    let z = solutions_c(problem, mu)?;
    let mut worst = 0.0f64;
    for (kz, ky) in [(0, 3), (1, 2), (3, 3)] {
        let br = bracket_along(&z, kz, &y, ky);
        let mut integral = C64::new(0.0, 0.0);
        let mut top = 0.0f64;
        for i in 1..y.mesh.len() {
            let h = y.mesh[i] - y.mesh[i - 1];
            let f0 = z.column(i - 1, kz)[0] * y.column(i - 1, ky)[0];
            let f1 = z.column(i, kz)[0] * y.column(i, ky)[0];
            integral += (f0 + f1) * (0.5 * h);
            top = top.max(f0.norm());
        }
        let lhs = br.last().expect("nonempty").value - br[0].value;
        let rhs = (lambda - mu) * integral;
        let scale = (lambda - mu).norm() * top.max(1e-300) + br.iter().map(|b| b.value.norm()).fold(0.0, f64::max);
        worst = worst.max((lhs - rhs).norm() / scale.max(1.0));
    }
    Ok(worst)
}

fn identity_sample(problem: &Problem, drawn: C64, radius: f64) -> Result<IdentitySample> {
    let mut lambda = drawn;
    let mut displaced = false;
    let mut tries = 0;
    let w = loop {
        match weyl_matrix(problem, lambda) {
            Ok(w) => break w,
            Err(Error::NearPole { .. }) if tries < 8 => {
                tries += 1;
                displaced = true;
                lambda += C64::from_polar(1e-3 * radius.max(1.0), 1.0 + tries as f64);
            }
            Err(e) => return Err(e.context(format!("Weyl matrix at {drawn}"))),
        }
    };
    let scale = w.scale();
    let (_, r1, r2) = matrix_identity_deviations(&w.m);
    Ok(IdentitySample {
        lambda: pair(lambda),
        displaced,
        symplectic: check_symplectic(&w) / scale,
        real1: r1 / scale,
        real2: r2 / scale,
        scale,
        ident1: ident1(problem, lambda)?.deviation(),
        wron: wron_deviation(problem, lambda)?,
    })
}

/// Identity suite at `lambdas`, or at seeded samples from the config.
pub fn run_identities(cfg: &Config, lambdas: Option<&[C64]>) -> Result<IdentityReport> {
    let problem = build(cfg)?;
    let e = &cfg.experiment;
    let drawn = match lambdas {
        Some(l) => l.to_vec(),
        None => identity_lambdas(e.seed, e.samples, e.radius),
    };
    let samples: Vec<IdentitySample> = drawn
        .par_iter()
        .map(|&l| identity_sample(&problem, l, e.radius))
        .collect::<Result<_>>()?;
    let mut max = IdentityMaxima::default();
    for s in &samples {
        max.symplectic = max.symplectic.max(s.symplectic);
        max.real1 = max.real1.max(s.real1);
        max.real2 = max.real2.max(s.real2);
        max.ident1 = max.ident1.max(s.ident1);
        max.wron = max.wron.max(s.wron);
    }
    let (du, dv) = forms_self_test(&problem.forms)?;
    let star = star_self_test(&problem);
    let tol = e.identity_tol;
    let wron_tol = 1e-4;
    let pass = [max.symplectic, max.real1, max.real2, max.ident1].iter().all(|&d| d <= tol)
        && max.wron <= wron_tol
        && du <= 1e-14
        && dv <= 1e-14;
    Ok(IdentityReport {
        meta: meta(cfg, &problem),
        tol,
        wron_tol,
        forms_self_test: [du, dv],
        star_self_test: star,
        samples,
        max,
        pass,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub a: RunMeta,
    pub b: RunMeta,
    pub tol: f64,
    pub distances: Vec<SpectrumDistance>,
    pub verdict: Verdict,
}

/// Compares the three spectra of two problems; the verdict depends only on the records.
pub fn run_uniqueness_probe(a: &Config, b: &Config, timing: bool) -> Result<(Vec<RunRecord>, UniquenessReport)> {
    let pa = build(a)?;
    let pb = build(b)?;
    let (ra, rb) = rayon::join(|| spectra_records_of(a, &pa, timing), || spectra_records_of(b, &pb, timing));
    let (ra, rb) = (ra?, rb?);
    let tol = a.experiment.tol;
    let report = UniquenessReport {
        a: meta(a, &pa),
        b: meta(b, &pb),
        tol,
        distances: spectrum_distances(&ra, &rb),
        verdict: verdict(&ra, &rb, tol),
    };
    let mut records = ra;
    records.extend(rb);
    Ok((records, report))
}

/// Values of the boundary data that make the regularizations interchangeable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanishingConditions {
    pub tau1_at_0: [f64; 2],
    pub tau1_at_1: [f64; 2],
    pub tau2_at_0: [f64; 2],
    /// Names of the conditions that fail, such as `tau1(1) = 0`.
    pub violated: Vec<String>,
}

pub fn vanishing_conditions(problem: &Problem) -> VanishingConditions {
    let m = &problem.matrix.model;
    let t10 = m.tau1.eval(0.0);
    let t11 = m.tau1.eval(1.0);
    let t20 = m.tau2.eval(0.0);
    let mut violated = Vec::new();
    for (name, v) in [("tau1(0) = 0", t10), ("tau1(1) = 0", t11), ("tau2(0) = 0", t20)] {
        if v.norm() > 1e-12 {
            violated.push(name.to_string());
        }
    }
    VanishingConditions {
        tau1_at_0: pair(t10),
        tau1_at_1: pair(t11),
        tau2_at_0: pair(t20),
        violated,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KindComparison {
    pub a: MatrixKind,
    pub b: MatrixKind,
    pub distances: Vec<SpectrumDistance>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossRegReport {
    pub meta: RunMeta,
    pub tol: f64,
    pub conditions: VanishingConditions,
    pub comparisons: Vec<KindComparison>,
    /// Every pair of kinds produced the same spectra.
    pub agree: bool,
}

/// Spectra of one coefficient pair under several regularization matrices.
pub fn run_cross_regularization(cfg: &Config, kinds: &[MatrixKind]) -> Result<(Vec<RunRecord>, CrossRegReport)> {
    if kinds.len() < 2 {
        return Err(Error::Config("cross-regularization needs at least two kinds".into()));
    }
    let per_kind: Vec<(MatrixKind, Vec<RunRecord>)> = kinds
        .par_iter()
        .map(|&k| {
            let c = cfg.with_kind(k);
            spectra_records(&c, false)
                .context(|| format!("kind {}", k.name()))
                .map(|r| (k, r))
        })
        .collect::<Result<_>>()?;
    let base = build(cfg)?;
    let tol = cfg.experiment.tol;
    let mut comparisons = Vec::new();
    for i in 0..per_kind.len() {
        for j in i + 1..per_kind.len() {
            let (ka, ra) = &per_kind[i];
            let (kb, rb) = &per_kind[j];
            comparisons.push(KindComparison {
                a: *ka,
                b: *kb,
                distances: spectrum_distances(ra, rb),
                verdict: verdict(ra, rb, tol),
            });
        }
    }
    let agree = comparisons.iter().all(|c| matches!(c.verdict, Verdict::Indistinguishable { .. }));
    let report = CrossRegReport {
        meta: meta(cfg, &base),
        tol,
        conditions: vanishing_conditions(&base),
        comparisons,
        agree,
    };
    Ok((per_kind.into_iter().flat_map(|(_, r)| r).collect(), report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardProbe {
    pub lambda: [f64; 2],
    pub direct: [f64; 2],
    pub reconstructed: [f64; 2],
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardEntry {
    pub spectrum: String,
    pub report: HadamardReport,
    pub probes: Vec<HadamardProbe>,
    pub max_rel_error: f64,
    /// Fewer zeros than requested were found.
    pub partial: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HadamardRun {
    pub meta: RunMeta,
    pub n_zeros: usize,
    pub entries: Vec<HadamardEntry>,
}

/// Rebuilds `Δ₂₂, Δ₃₂, Δ₄₂` from `n_zeros` computed zeros and compares with direct evaluation.
pub fn run_hadamard(cfg: &Config, n_zeros: usize, probes: &[C64]) -> Result<HadamardRun> {
    let problem = build(cfg)?;
    let set = three_spectra(&problem, n_zeros, &cfg.spectra).context(|| "zeros for Hadamard reconstruction".to_string())?;
    let lists = [&set.s12, &set.s13, &set.s23];
    let mut entries = Vec::new();
    for ((name, (j, k)), list) in SPECTRUM_DELTAS.iter().zip(lists) {
        let zeros = list.lambdas();
        let report = hadamard_reconstruct(&zeros, (*j, *k), probes, &cfg.experiment.hadamard)?;
        let direct: Vec<C64> = probes
            .par_iter()
            .map(|&p| delta_value(*j, *k, p, &problem))
            .collect::<Result<_>>()?;
        let probes_out: Vec<HadamardProbe> = probes
            .iter()
            .zip(direct.iter())
            .zip(report.values.iter())
            .map(|((&p, &d), &r)| HadamardProbe {
                lambda: pair(p),
                direct: pair(d),
                reconstructed: pair(r),
                rel_error: (r - d).norm() / d.norm().max(f64::MIN_POSITIVE),
            })
            .collect();
        entries.push(HadamardEntry {
            spectrum: name.to_string(),
            max_rel_error: probes_out.iter().map(|p| p.rel_error).fold(0.0, f64::max),
            probes: probes_out,
            report,
            partial: list.partial,
        });
    }
    Ok(HadamardRun {
        meta: meta(cfg, &problem),
        n_zeros,
        entries,
    })
}

/// `M(λ)` at one grid point; entries are `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylRecord {
    pub hash: String,
    pub re: f64,
    pub im: f64,
    pub m21: [f64; 2],
    pub m31: [f64; 2],
    pub m32: [f64; 2],
    pub m41: [f64; 2],
    pub m42: [f64; 2],
    pub m43: [f64; 2],
    /// Set to `k` when `λ` is within the pole guard of `Δ_kk`; entries are then zero.
    pub near_pole: Option<usize>,
}

pub fn run_weyl_grid(cfg: &Config, points: &[C64]) -> Result<Vec<WeylRecord>> {
    let problem = build(cfg)?;
    let hash = cfg.hash();
    points
        .par_iter()
        .map(|&l| {
            let (m, near_pole) = match weyl_matrix(&problem, l) {
                Ok(w) => (w.m, None),
                Err(Error::NearPole { k, .. }) => (Mat4::zeros(), Some(k)),
                Err(e) => return Err(e.context(format!("Weyl matrix at {l}"))),
            };
            let e = |j: usize, k: usize| pair(m[(j - 1, k - 1)]);
            Ok(WeylRecord {
                hash: hash.clone(),
                re: l.re,
                im: l.im,
                m21: e(2, 1),
                m31: e(3, 1),
                m32: e(3, 2),
                m41: e(4, 1),
                m42: e(4, 2),
                m43: e(4, 3),
                near_pole,
            })
        })
        .collect()
}

/// `log₁₀|Δ₂₂|, log₁₀|Δ₃₂|, log₁₀|Δ₄₂|` at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub re: f64,
    pub im: f64,
    pub log10_abs: [f64; 3],
}

pub fn run_plotdata(cfg: &Config, points: &[C64]) -> Result<Vec<PlotRow>> {
    let problem = build(cfg)?;
    let which: Vec<(usize, usize)> = SPECTRUM_DELTAS.iter().map(|(_, jk)| *jk).collect();
    points
        .par_iter()
        .map(|&l| {
            let s = evaluate(&problem, l, &which)?;
            let mut out = [0.0; 3];
            for (o, &(j, k)) in out.iter_mut().zip(which.iter()) {
                *o = s.get(j, k)?.ln_abs() / std::f64::consts::LN_10;
            }
            Ok(PlotRow {
                re: l.re,
                im: l.im,
                log10_abs: out,
            })
        })
        .collect()
}

/// Tab-separated table with a header line.
pub fn write_plot_table<W: Write>(mut w: W, rows: &[PlotRow]) -> Result<()> {
    writeln!(w, "re\tim\tlog10_abs_delta22\tlog10_abs_delta32\tlog10_abs_delta42")?;
    for r in rows {
        writeln!(
            w,
            "{:.6e}\t{:.6e}\t{:.9e}\t{:.9e}\t{:.9e}",
            r.re, r.im, r.log10_abs[0], r.log10_abs[1], r.log10_abs[2]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_cfg() -> Config {
        Config::from_toml_str("[problem]\ntau1 = \"0\"\ntau2 = \"0\"\n[spectra]\ncount = 5\n").unwrap()
    }

    #[test]
    fn identity_matrix_is_exact() {
        assert_eq!(matrix_identity_deviations(&Mat4::identity()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn seeded_samples_repeat() {
        let a = identity_lambdas(7, 20, 500.0);
        assert_eq!(a, identity_lambdas(7, 20, 500.0));
        assert_ne!(a, identity_lambdas(8, 20, 500.0));
        assert!(a.iter().all(|z| z.norm() <= 500.0));
    }

    #[test]
    fn zero_config_spectra_records() {
        let cfg = zero_cfg();
        let recs = spectra_records(&cfg, false).unwrap();
        assert_eq!(recs.len(), 15);
        for r in recs.iter().filter(|r| r.spectrum == "S13") {
            let want = (r.index as f64 * std::f64::consts::PI).powi(4);
            assert!((r.re - want).abs() < 1e-9 * want);
            assert_eq!(r.ms, 0);
        }
        assert_eq!(recs, spectra_records(&cfg, false).unwrap());
    }

    #[test]
    fn zero_identities_pass() {
        let cfg = zero_cfg();
        let rep = run_identities(&cfg, None).unwrap();
        assert!(rep.pass, "{:?}", rep.max);
        assert_eq!(rep.samples.len(), 20);
    }

    #[test]
    fn plot_table_has_header() {
        let cfg = zero_cfg();
        let rows = run_plotdata(&cfg, &[c(-10.0, 1.0), c(5.0, 2.0)]).unwrap();
        let mut buf = Vec::new();
        write_plot_table(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("re\tim\t"));
    }
}
