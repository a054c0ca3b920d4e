//! On-disk formats: raw little-endian binary dumps with sibling JSON
//! manifests, run checkpoints, and CSV emission.
//!
//! A field dump is a headerless stream of little-endian f64 values in
//! row-major order (axis 0 slowest); complex data interleaves re, im. The
//! sibling `<stem>.json` manifest records dimension, point counts, lengths,
//! representation and units. Numeric CSV output carries 17 significant
//! digits so re-runs are byte-comparable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hartree::MixedState;
use crate::poisson::{Kappa, Kernel};
use crate::spectral::{ComplexField, RealField, Repr, SpectralGrid};
use crate::wigner::{WignerGrid, XiAxis};

pub const FORMAT_VERSION: u32 = 1;

/// Format a number with 17 significant digits (round-trips any f64).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldManifest {
    pub format_version: u32,
    pub d: usize,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
    /// "physical" | "fourier"
    pub representation: String,
    /// "f64" | "c128-interleaved"
    pub dtype: String,
    /// Axis 0 is slowest.
    pub axis_order: String,
    pub units: String,
}

fn write_bytes(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<f64>> {
    let raw = fs::read(path)?;
    if raw.len() % 8 != 0 {
        return Err(Error::Config(format!("binary dump {path:?} is not a multiple of 8 bytes")));
    }
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk")))
        .collect())
}

fn manifest_for(grid: &SpectralGrid, representation: &str, dtype: &str, units: &str) -> FieldManifest {
    FieldManifest {
        format_version: FORMAT_VERSION,
        d: grid.dim(),
        n: grid.axes().iter().map(|a| a.n).collect(),
        length: grid.axes().iter().map(|a| a.length).collect(),
        representation: representation.into(),
        dtype: dtype.into(),
        axis_order: "row-major; axis 0 slowest".into(),
        units: units.into(),
    }
}

fn write_manifest<T: Serialize>(stem: &Path, manifest: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

/// Write `<stem>.bin` and `<stem>.json` for a real field.
pub fn write_real_field(stem: &Path, field: &RealField, units: &str) -> Result<()> {
    write_bytes(&stem.with_extension("bin"), field.data().iter().copied())?;
    write_manifest(stem, &manifest_for(field.grid(), "physical", "f64", units))
}

pub fn read_real_field(stem: &Path) -> Result<RealField> {
    let manifest: FieldManifest =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let grid = SpectralGrid::new(
        &manifest.n.iter().zip(&manifest.length).map(|(&n, &l)| (n, l)).collect::<Vec<_>>(),
    )?;
    let data = read_bytes(&stem.with_extension("bin"))?;
    RealField::from_data(grid, data)
}

/// Write a complex field as interleaved re, im.
pub fn write_complex_field(stem: &Path, field: &ComplexField, units: &str) -> Result<()> {
    let repr = match field.repr() {
        Repr::Physical => "physical",
        Repr::Fourier => "fourier",
    };
    write_bytes(
        &stem.with_extension("bin"),
        field.data().iter().flat_map(|c| [c.re, c.im]),
    )?;
    write_manifest(stem, &manifest_for(field.grid(), repr, "c128-interleaved", units))
}

pub fn read_complex_field(stem: &Path) -> Result<ComplexField> {
    let manifest: FieldManifest =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let grid = SpectralGrid::new(
        &manifest.n.iter().zip(&manifest.length).map(|(&n, &l)| (n, l)).collect::<Vec<_>>(),
    )?;
    let raw = read_bytes(&stem.with_extension("bin"))?;
    if raw.len() != 2 * grid.len() {
        return Err(Error::Config("complex dump length mismatch".into()));
    }
    let data: Vec<Complex64> =
        raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let repr = match manifest.representation.as_str() {
        "physical" => Repr::Physical,
        "fourier" => Repr::Fourier,
        other => return Err(Error::Config(format!("unknown representation {other}"))),
    };
    ComplexField::from_data(grid, repr, data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerManifest {
    pub format_version: u32,
    pub d: usize,
    pub n_x: Vec<usize>,
    pub length: Vec<f64>,
    pub n_xi: Vec<usize>,
    pub xi_max: Vec<f64>,
    pub eps: f64,
    /// x axes first (slowest), then ξ axes.
    pub axis_order: String,
    pub dtype: String,
}

/// Dump a phase-space field: x axes then ξ axes, headerless f64.
pub fn write_wigner(stem: &Path, f: &WignerGrid) -> Result<()> {
    write_bytes(&stem.with_extension("bin"), f.data().iter().copied())?;
    let manifest = WignerManifest {
        format_version: FORMAT_VERSION,
        d: f.x_grid().dim(),
        n_x: f.x_grid().axes().iter().map(|a| a.n).collect(),
        length: f.x_grid().axes().iter().map(|a| a.length).collect(),
        n_xi: f.xi_axes().iter().map(|a| a.n).collect(),
        xi_max: f.xi_axes().iter().map(|a| a.xi_max).collect(),
        eps: f.eps,
        axis_order: "row-major; x axes then xi axes, axis 0 slowest".into(),
        dtype: "f64".into(),
    };
    write_manifest(stem, &manifest)
}

pub fn read_wigner(stem: &Path) -> Result<WignerGrid> {
    let manifest: WignerManifest =
        serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let grid = SpectralGrid::new(
        &manifest.n_x.iter().zip(&manifest.length).map(|(&n, &l)| (n, l)).collect::<Vec<_>>(),
    )?;
    let xi: Vec<XiAxis> = manifest
        .n_xi
        .iter()
        .zip(&manifest.xi_max)
        .map(|(&n, &m)| XiAxis { n, xi_max: m })
        .collect();
    let mut f = WignerGrid::zeros(grid, xi, manifest.eps)?;
    let data = read_bytes(&stem.with_extension("bin"))?;
    if data.len() != f.data().len() {
        return Err(Error::Config("wigner dump length mismatch".into()));
    }
    f.data_mut().copy_from_slice(&data);
    Ok(f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub eps: f64,
    pub time: f64,
    pub weights: Vec<f64>,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
    pub kappa: Kappa,
    pub kernel: Kernel,
    pub orbitals: Vec<String>,
}

/// Save a state as per-orbital binary dumps plus a manifest. Restart is
/// bit-stable: physical samples are written verbatim.
pub fn save_checkpoint(
    dir: &Path,
    state: &MixedState,
    kappa: Kappa,
    kernel: Kernel,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (j, orb) in state.orbitals().iter().enumerate() {
        let name = format!("orbital_{j:04}");
        write_complex_field(&dir.join(&name), orb, "dimensionless")?;
        names.push(name);
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        eps: state.eps,
        time: state.time,
        weights: state.weights().to_vec(),
        n: state.grid().axes().iter().map(|a| a.n).collect(),
        length: state.grid().axes().iter().map(|a| a.length).collect(),
        kappa,
        kernel,
        orbitals: names,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(MixedState, Kappa, Kernel)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let grid = SpectralGrid::new(
        &manifest.n.iter().zip(&manifest.length).map(|(&n, &l)| (n, l)).collect::<Vec<_>>(),
    )?;
    let mut orbitals = Vec::with_capacity(manifest.orbitals.len());
    for name in &manifest.orbitals {
        let field = read_complex_field(&dir.join(name))?;
        // rebind to the shared grid object
        let data = field.data().to_vec();
        orbitals.push(ComplexField::from_data(grid.clone(), field.repr(), data)?);
    }
    let mut state = MixedState::new(grid, manifest.eps, manifest.weights, orbitals)?;
    state.time = manifest.time;
    Ok((state, manifest.kappa, manifest.kernel))
}

/// Write a CSV file; every cell is already formatted.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Run-directory layout helper.
pub fn run_path(base: &Path, parts: &[&str]) -> PathBuf {
    let mut p = base.to_path_buf();
    for part in parts {
        p.push(part);
    }
    p
}
