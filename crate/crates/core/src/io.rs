//! Complex matrix CSV files.
//!
//! Layout: a header line `# R,C`, then `R` lines each holding `2C`
//! comma-separated reals `re,im,re,im,...` (row-major). Values are written
//! with Rust's shortest round-trip float formatting.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::CMatrix;

pub fn format_complex_csv(m: &CMatrix) -> String {
    let mut out = String::with_capacity(m.len() * 40 + 16);
    let _ = writeln!(out, "# {},{}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let z = m[(i, j)];
            let _ = write!(out, "{},{}", z.re, z.im);
        }
        out.push('\n');
    }
    out
}

pub fn write_complex_csv<W: Write>(mut w: W, m: &CMatrix) -> Result<()> {
    w.write_all(format_complex_csv(m).as_bytes())?;
    Ok(())
}

pub fn save_complex_csv(path: &Path, m: &CMatrix) -> Result<()> {
    std::fs::write(path, format_complex_csv(m)).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn read_complex_csv<R: BufRead>(r: R) -> Result<CMatrix> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))??;
    let dims = header
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Format(format!("expected `# R,C` header, got `{header}`")))?;
    let mut parts = dims.split(',').map(|s| s.trim().parse::<usize>());
    let (rows, cols) = match (parts.next(), parts.next(), parts.next()) {
        (Some(Ok(r)), Some(Ok(c)), None) => (r, c),
        _ => return Err(Error::Format(format!("bad dimension header `{header}`"))),
    };
    let mut m = CMatrix::zeros(rows, cols);
    let mut row = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if row == rows {
            return Err(Error::Format(format!("more than {rows} data rows")));
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("row {}: {e}", row + 1)))?;
        if vals.len() != 2 * cols {
            return Err(Error::Format(format!(
                "row {} has {} values, expected {}",
                row + 1,
                vals.len(),
                2 * cols
            )));
        }
        for j in 0..cols {
            m[(row, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
        row += 1;
    }
    if row != rows {
        return Err(Error::Format(format!("expected {rows} data rows, found {row}")));
    }
    Ok(m)
}

pub fn load_complex_csv(path: &Path) -> Result<CMatrix> {
    let f = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_complex_csv(std::io::BufReader::new(f))
}
