//! Line records and the verdicts computed from them.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, C64};
use crate::spectra::{SpectrumSet, ZeroList};

/// One eigenvalue. Fields serialize in this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub hash: String,
    pub spectrum: String,
    /// 1-based position in the (Re, Im)-sorted spectrum.
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    /// `|Δ'(λ)|` in scientific notation; it can exceed the double range.
    pub dmag: String,
    /// Wall time of the spectrum's search; zero unless timing was requested.
    pub ms: u64,
}

impl RunRecord {
    pub fn lambda(&self) -> C64 {
        c(self.re, self.im)
    }
}

pub fn records_for(hash: &str, name: &str, list: &ZeroList, ms: u64) -> Vec<RunRecord> {
    list.zeros
        .iter()
        .enumerate()
        .map(|(i, z)| RunRecord {
            hash: hash.to_string(),
            spectrum: name.to_string(),
            index: i + 1,
            re: z.lambda.re,
            im: z.lambda.im,
            residual: z.residual,
            dmag: z.dmag.sci(6),
            ms,
        })
        .collect()
}

pub fn spectrum_records(hash: &str, set: &SpectrumSet, ms: u64) -> Vec<RunRecord> {
    set.named().iter().flat_map(|(name, list)| records_for(hash, name, list, ms)).collect()
}

pub fn write_records<W: Write>(mut w: W, records: &[RunRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord =
            serde_json::from_str(&line).map_err(|e| Error::Config(format!("record line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn by_spectrum<'a>(records: &'a [RunRecord], name: &str) -> Vec<&'a RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().filter(|r| r.spectrum == name).collect();
    v.sort_by_key(|r| r.index);
    v
}

/// Elementwise relative distances `|λ − μ| / (1 + |λ|)` for one spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDistance {
    pub spectrum: String,
    pub distances: Vec<f64>,
    /// The two record sets have different lengths for this spectrum.
    pub length_mismatch: bool,
}

impl SpectrumDistance {
    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// 1-based index of the first distance above `tol`.
    pub fn first_above(&self, tol: f64) -> Option<usize> {
        self.distances.iter().position(|&d| d > tol).map(|i| i + 1)
    }
}

pub fn spectrum_distances(a: &[RunRecord], b: &[RunRecord]) -> Vec<SpectrumDistance> {
    ["S12", "S13", "S23"]
        .iter()
        .map(|name| {
            let ra = by_spectrum(a, name);
            let rb = by_spectrum(b, name);
            SpectrumDistance {
                spectrum: name.to_string(),
                distances: ra
                    .iter()
                    .zip(rb.iter())
                    .map(|(x, y)| (x.lambda() - y.lambda()).norm() / (1.0 + x.lambda().norm()))
                    .collect(),
                length_mismatch: ra.len() != rb.len(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Indistinguishable { max_distance: f64 },
    Distinguished { spectrum: String, index: usize, distance: f64 },
}

/// First spectrum entry (in S12, S13, S23 order) that differs by more than `tol`.
pub fn verdict(a: &[RunRecord], b: &[RunRecord], tol: f64) -> Verdict {
    let d = spectrum_distances(a, b);
    for s in &d {
        if let Some(i) = s.first_above(tol) {
            return Verdict::Distinguished {
                spectrum: s.spectrum.clone(),
                index: i,
                distance: s.distances[i - 1],
            };
        }
    }
    Verdict::Indistinguishable {
        max_distance: d.iter().map(SpectrumDistance::max).fold(0.0, f64::max),
    }
}
