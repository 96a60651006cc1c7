//! CSV and JSON artifacts.
//!
//! CSV files have one header line, comma separators and `%.17g` floats so
//! every binary64 value survives a write/read cycle unchanged. Vectors and
//! matrices carry the node coordinate as their first column `x`; matrix
//! columns are one per data point.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calibration::{GSpectrum, PosteriorMean};
use crate::error::{Error, Result};
use crate::mesh::Mesh1D;
use crate::models::DiscrepancyData;

/// C-style `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let digits = (16 - exp) as usize;
        strip_zeros(&format!("{x:.digits$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parsed CSV table: header names after `x`, the `x` column and the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub values: DMatrix<f64>,
}

pub fn write_table(path: &Path, x: &[f64], names: &[String], values: &DMatrix<f64>) -> Result<()> {
    if values.nrows() != x.len() {
        return Err(Error::dim(format!("rows of {}", path.display()), x.len(), values.nrows()));
    }
    if values.ncols() != names.len() {
        return Err(Error::dim(format!("columns of {}", path.display()), names.len(), values.ncols()));
    }
    let mut out = String::from("x");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, xi) in x.iter().enumerate() {
        out.push_str(&fmt_g17(*xi));
        for j in 0..values.ncols() {
            out.push(',');
            out.push_str(&fmt_g17(values[(i, j)]));
        }
        out.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_vector(path: &Path, x: &[f64], name: &str, v: &DVector<f64>) -> Result<()> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    write_table(path, x, &[name.to_string()], &m)
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    let bad = |reason: String| Error::Parse {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut cols = header.split(',').map(str::trim);
    if cols.next() != Some("x") {
        return Err(bad("first header column must be `x`".into()));
    }
    let names: Vec<String> = cols.map(String::from).collect();
    let mut x = Vec::new();
    let mut flat = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != names.len() + 1 {
            return Err(bad(format!(
                "line {}: expected {} fields, found {}",
                k + 2,
                names.len() + 1,
                fields.len()
            )));
        }
        let mut parsed = fields.iter().map(|f| {
            f.parse::<f64>()
                .map_err(|_| bad(format!("line {}: `{f}` is not a number", k + 2)))
        });
        x.push(parsed.next().expect("at least the x field")?);
        for v in parsed {
            flat.push(v?);
        }
    }
    let values = DMatrix::from_row_slice(x.len(), names.len(), &flat);
    Ok(Table { names, x, values })
}

pub fn read_vector(path: &Path, expected_len: usize) -> Result<DVector<f64>> {
    let t = read_table(path)?;
    if t.values.ncols() != 1 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            reason: format!("expected one data column, found {}", t.values.ncols()),
        });
    }
    if t.x.len() != expected_len {
        return Err(Error::dim(format!("rows of {}", path.display()), expected_len, t.x.len()));
    }
    Ok(t.values.column(0).into_owned())
}

fn indexed(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|l| format!("{prefix}_{l}")).collect()
}

/// Writes `Z.csv` and `Y.csv` into `dir`.
pub fn export_data(dir: &Path, data: &DiscrepancyData, mesh: &Mesh1D) -> Result<()> {
    write_table(&dir.join("Z.csv"), mesh.nodes(), &indexed("z", data.len()), data.controls())?;
    write_table(&dir.join("Y.csv"), mesh.nodes(), &indexed("y", data.len()), data.discrepancies())?;
    Ok(())
}

/// Reads a controls file and a discrepancy file for the given mesh.
pub fn ingest_data(z_path: &Path, y_path: &Path, mesh: &Mesh1D) -> Result<DiscrepancyData> {
    let z = read_table(z_path)?;
    let y = read_table(y_path)?;
    let n = mesh.n_nodes();
    if z.x.len() != n {
        return Err(Error::dim(format!("rows of {} (control dimension)", z_path.display()), n, z.x.len()));
    }
    if y.x.len() != n {
        return Err(Error::dim(format!("rows of {} (state dimension)", y_path.display()), n, y.x.len()));
    }
    if y.values.ncols() != z.values.ncols() {
        return Err(Error::dim(
            format!("data columns of {}", y_path.display()),
            z.values.ncols(),
            y.values.ncols(),
        ));
    }
    DiscrepancyData::new(z.values, y.values)
}

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorScalars {
    alpha: f64,
    zeta: f64,
    count: usize,
    a: Vec<f64>,
    /// `b[i][l]`.
    b: Vec<Vec<f64>>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    g: Vec<Vec<f64>>,
    /// Eigenvector `g_i` stored as `g_vectors[i]`.
    g_vectors: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(Error::Parse {
            path: "posterior scalars".into(),
            reason: format!("expected a {n}x{n} table"),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

/// Persists a posterior mean as CSV arrays plus `scalars.json`.
pub fn write_posterior(dir: &Path, pm: &PosteriorMean, mesh: &Mesh1D) -> Result<()> {
    fs::create_dir_all(dir)?;
    let x = mesh.nodes();
    let count = pm.len();
    write_table(&dir.join("u.csv"), x, &indexed("u", count), &pm.u)?;
    let mut names = Vec::new();
    let mut shifted = DMatrix::zeros(pm.state_dim(), count * count);
    for i in 0..count {
        for l in 0..count {
            names.push(format!("u_{}_{}", i + 1, l + 1));
            shifted.set_column(i * count + l, &pm.u_shifted[i].column(l));
        }
    }
    write_table(&dir.join("u_shifted.csv"), x, &names, &shifted)?;
    write_table(&dir.join("w.csv"), x, &indexed("w", count), &pm.spectrum.w)?;
    write_table(&dir.join("controls.csv"), x, &indexed("z", count), &pm.controls)?;
    write_vector(&dir.join("z_tilde.csv"), x, "z_tilde", &pm.z_tilde)?;
    let scalars = PosteriorScalars {
        alpha: pm.alpha,
        zeta: pm.zeta,
        count,
        a: pm.a.iter().copied().collect(),
        b: rows(&pm.b),
        s: pm.spectrum.s.iter().copied().collect(),
        lambda: pm.spectrum.eigenvalues.iter().copied().collect(),
        g: rows(&pm.spectrum.g),
        g_vectors: rows(&pm.spectrum.eigenvectors.transpose()),
    };
    fs::write(dir.join("scalars.json"), serde_json::to_string_pretty(&scalars)? + "\n")?;
    Ok(())
}

pub fn read_posterior(dir: &Path, mesh: &Mesh1D) -> Result<PosteriorMean> {
    let path = dir.join("scalars.json");
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    let sc: PosteriorScalars = serde_json::from_str(&text)?;
    let count = sc.count;
    let n = mesh.n_nodes();
    let load = |name: &str, cols: usize| -> Result<DMatrix<f64>> {
        let t = read_table(&dir.join(name))?;
        if t.x.len() != n {
            return Err(Error::dim(name.to_string(), n, t.x.len()));
        }
        if t.values.ncols() != cols {
            return Err(Error::dim(format!("columns of {name}"), cols, t.values.ncols()));
        }
        Ok(t.values)
    };
    let u = load("u.csv", count)?;
    let shifted = load("u_shifted.csv", count * count)?;
    let w = load("w.csv", count)?;
    let controls = load("controls.csv", count)?;
    let z_tilde = read_vector(&dir.join("z_tilde.csv"), n)?;
    let u_shifted = (0..count)
        .map(|i| shifted.columns(i * count, count).into_owned())
        .collect();
    let vec_of = |v: &[f64], what: &str| -> Result<DVector<f64>> {
        if v.len() != count {
            return Err(Error::dim(what.to_string(), count, v.len()));
        }
        Ok(DVector::from_column_slice(v))
    };
    let spectrum = GSpectrum {
        g: from_rows(&sc.g, count)?,
        eigenvalues: vec_of(&sc.lambda, "lambda")?,
        eigenvectors: from_rows(&sc.g_vectors, count)?.transpose(),
        w,
        s: vec_of(&sc.s, "s")?,
    };
    Ok(PosteriorMean {
        alpha: sc.alpha,
        zeta: sc.zeta,
        z_tilde,
        controls,
        spectrum,
        a: vec_of(&sc.a, "a")?,
        b: from_rows(&sc.b, count)?,
        u,
        u_shifted,
    })
}
