//! Result serialization.
//!
//! JSON artifacts are objects `{"provenance": …, "data": …}`. CSV artifacts
//! start with `#`-prefixed provenance lines followed by one header row.
//! Numbers carry 9 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ccgf::{GreenFunctionResult, SpectralFunction};
use crate::cluster::{AmplitudeKind, AmplitudeSet, Excitation};
use crate::error::{Error, Result};
use crate::fockspace::Determinant;
use crate::sesflow::{EffectiveHamiltonian, FlowRecord};

/// Format version of every artifact written by this module.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub version: String,
    pub format_version: u32,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            engine: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: FORMAT_VERSION,
            config_hash: config_hash.into(),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# engine={} version={} format={}\n# config_hash={}\n",
            self.engine, self.version, self.format_version, self.config_hash
        )
    }
}

/// `x` rounded to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    fmt9(x).parse().unwrap_or(x)
}

pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEntry {
    pub holes: Vec<usize>,
    pub particles: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeDump {
    pub kind: AmplitudeKind,
    pub reference: String,
    pub entries: Vec<AmplitudeEntry>,
}

impl AmplitudeDump {
    pub fn from_set(a: &AmplitudeSet) -> Self {
        Self {
            kind: a.kind,
            reference: a.reference.to_string(),
            entries: a
                .iter()
                .map(|(e, v)| AmplitudeEntry { holes: e.holes.clone(), particles: e.particles.clone(), value: sig9(v) })
                .collect(),
        }
    }

    pub fn to_set(&self) -> Result<AmplitudeSet> {
        let reference = Determinant::parse(&self.reference)?;
        let entries = self
            .entries
            .iter()
            .map(|e| Ok((Excitation::new(e.holes.clone(), e.particles.clone())?, e.value)))
            .collect::<Result<Vec<_>>>()?;
        AmplitudeSet::from_entries(self.kind, reference, entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeffDump {
    pub label: String,
    pub flavor: crate::sesflow::Flavor,
    pub basis: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
}

impl HeffDump {
    pub fn new(label: impl Into<String>, heff: &EffectiveHamiltonian) -> Self {
        let m = &heff.matrix;
        Self {
            label: label.into(),
            flavor: heff.flavor,
            basis: heff.basis.iter().map(|d| d.to_string()).collect(),
            matrix: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| sig9(m[(i, j)])).collect()).collect(),
        }
    }
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    provenance: &'a Provenance,
    data: &'a T,
}

pub fn to_json<T: Serialize>(prov: &Provenance, data: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Wrapped { provenance: prov, data })?)
}

/// Reads the `data` part of a wrapped artifact.
pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<(Provenance, T)> {
    #[derive(Deserialize)]
    struct Owned<T> {
        provenance: Provenance,
        data: T,
    }
    let o: Owned<T> = serde_json::from_str(text)?;
    Ok((o.provenance, o.data))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).map_err(Error::from)
}

/// One JSON object per line, with the provenance on the first line.
pub fn flow_jsonl(prov: &Provenance, trace: &[FlowRecord]) -> Result<String> {
    let mut out = serde_json::to_string(&serde_json::json!({ "provenance": prov }))?;
    out.push('\n');
    for r in trace {
        let rec = FlowRecord { energy: sig9(r.energy), residual: sig9(r.residual), ..r.clone() };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Columns: `omega`, `Re`/`Im` of every element of every method, then
/// `A` per probe of every method.
pub fn gf_csv(prov: &Provenance, methods: &[(&str, &GreenFunctionResult, &SpectralFunction)]) -> Result<String> {
    let Some((_, first, _)) = methods.first() else {
        return crate::error::domain("no Green's function to write");
    };
    let grid = &first.grid;
    if methods.iter().any(|(_, g, a)| g.grid.omegas != grid.omegas || a.omegas != grid.omegas) {
        return crate::error::domain("methods were evaluated on different grids");
    }
    let mut out = prov.csv_header();
    let mut header = vec!["omega".to_string()];
    for (name, g, _) in methods {
        for &k in &g.probes {
            for &l in &g.probes {
                header.push(format!("{name}_re_G_{k}_{l}"));
                header.push(format!("{name}_im_G_{k}_{l}"));
            }
        }
    }
    for (name, _, a) in methods {
        for &k in &a.probes {
            header.push(format!("{name}_A_{k}"));
        }
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, &w) in grid.omegas.iter().enumerate() {
        let mut row = vec![fmt9(w)];
        for (_, g, _) in methods {
            let total = g.total(i);
            for k in 0..g.probes.len() {
                for l in 0..g.probes.len() {
                    let z: Complex64 = total[(k, l)];
                    row.push(fmt9(z.re));
                    row.push(fmt9(z.im));
                }
            }
        }
        for (_, _, a) in methods {
            for v in &a.values {
                row.push(fmt9(v[i]));
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

/// JSON form of a Green's function with its block structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfDump {
    pub method: String,
    pub eta: f64,
    pub probes: Vec<usize>,
    /// `labels[i][j]` when a block layout is attached
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<Vec<String>>,
    pub omegas: Vec<f64>,
    /// `[ω][K][L] = [re, im]`
    pub ionization: Vec<Vec<Vec<[f64; 2]>>>,
    pub attachment: Vec<Vec<Vec<[f64; 2]>>>,
    pub spectral: Vec<Vec<f64>>,
}

impl GfDump {
    pub fn new(method: &str, g: &GreenFunctionResult, a: &SpectralFunction) -> Self {
        let n = g.probes.len();
        let mats = |ms: &Vec<nalgebra::DMatrix<Complex64>>| {
            ms.iter()
                .map(|m| (0..n).map(|k| (0..n).map(|l| [sig9(m[(k, l)].re), sig9(m[(k, l)].im)]).collect()).collect())
                .collect()
        };
        let labels = match &g.blocks {
            Some(b) => (0..n).map(|i| (0..n).map(|j| b.label(i, j)).collect()).collect(),
            None => Vec::new(),
        };
        Self {
            method: method.into(),
            eta: g.grid.eta,
            probes: g.probes.clone(),
            labels,
            omegas: g.grid.omegas.iter().map(|&w| sig9(w)).collect(),
            ionization: mats(&g.ionization),
            attachment: mats(&g.attachment),
            spectral: a.values.iter().map(|v| v.iter().map(|&x| sig9(x)).collect()).collect(),
        }
    }
}

/// Plain CSV table with provenance lines.
pub fn table_csv(prov: &Provenance, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = prov.csv_header();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(-3.757254299123), "-3.75725430e0");
        assert_eq!(sig9(0.1234567891234), 0.123456789);
        assert_eq!(sig9(0.0), 0.0);
    }

    #[test]
    fn amplitude_dump_round_trip() {
        let r = Determinant::parse("100110").unwrap();
        let a = AmplitudeSet::from_entries(
            AmplitudeKind::T,
            r,
            vec![(Excitation::single(0, 1), -0.628627), (Excitation::double(0, 4, 2, 5), -0.013884)],
        )
        .unwrap();
        let prov = Provenance::new("abc");
        let text = to_json(&prov, &AmplitudeDump::from_set(&a)).unwrap();
        let (p, dump): (Provenance, AmplitudeDump) = from_json(&text).unwrap();
        assert_eq!(p, prov);
        assert_eq!(dump.to_set().unwrap(), a);
        assert!(text.contains("\"holes\""));
    }

    #[test]
    fn table_has_provenance() {
        let t = table_csv(&Provenance::new("h"), &["a", "b"], &[vec!["1".into(), "2".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("# engine="));
        assert_eq!(lines[2], "a,b");
        assert_eq!(lines[3], "1,2");
    }
}
