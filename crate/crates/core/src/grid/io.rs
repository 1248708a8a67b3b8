//! GridFunction serialization.
//!
//! CSV: one header row `i0[,i1,i2],c0[,c1,c2],re,im` where `c*` are `x*` or
//! `k*` coordinates, then one row per grid point in storage order. Floats are
//! written with 17 significant digits.
//!
//! Binary: a single-line JSON header terminated by `\n`, followed by
//! `count` complex samples as interleaved little-endian `f64` pairs
//! `(re, im)` in storage order (axis 0 fastest).

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Grid, GridFunction, Space, MAX_DIM};
use crate::error::{Error, Result};

pub const BINARY_FORMAT: &str = "phasespace-gridfunction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_length: f64,
    pub space: Space,
    pub layout: String,
    pub dtype: String,
    pub count: usize,
}

impl BinaryHeader {
    pub fn for_function(f: &GridFunction) -> Self {
        let g = f.grid();
        BinaryHeader {
            format: BINARY_FORMAT.to_string(),
            version: 1,
            dim: g.dim(),
            points_per_axis: g.points_per_axis(),
            box_length: g.box_length(),
            space: f.space(),
            layout: "row-major, axis 0 fastest".to_string(),
            dtype: "complex128-le".to_string(),
            count: g.len(),
        }
    }
}

pub fn write_binary<W: Write>(f: &GridFunction, mut out: W) -> Result<()> {
    let header = BinaryHeader::for_function(f);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(16 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(input: R) -> Result<GridFunction> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: BinaryHeader = serde_json::from_str(line.trim_end())?;
    if header.format != BINARY_FORMAT || header.version != 1 {
        return Err(Error::Format(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.dtype != "complex128-le" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let grid = Grid::new(header.dim, header.points_per_axis, header.box_length)?;
    if header.count != grid.len() {
        return Err(Error::Format(format!(
            "header count {} does not match grid size {}",
            header.count,
            grid.len()
        )));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != 16 * header.count {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            16 * header.count
        )));
    }
    let values = payload
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    GridFunction::new(&grid, header.space, values)
}

fn coord_prefix(space: Space) -> char {
    match space {
        Space::Position => 'x',
        Space::Fourier => 'k',
    }
}

pub fn write_csv<W: Write>(f: &GridFunction, mut out: W) -> Result<()> {
    let g = f.grid();
    let dim = g.dim();
    let c = coord_prefix(f.space());
    let mut header: Vec<String> = (0..dim).map(|a| format!("i{a}")).collect();
    header.extend((0..dim).map(|a| format!("{c}{a}")));
    header.push("re".into());
    header.push("im".into());
    writeln!(out, "{}", header.join(","))?;
    let mut p = [0.0; MAX_DIM];
    for (flat, v) in f.values().iter().enumerate() {
        let idx = g.unravel(flat);
        g.point(f.space(), flat, &mut p);
        let mut row: Vec<String> = idx[..dim].iter().map(|i| i.to_string()).collect();
        row.extend(p[..dim].iter().map(|x| format!("{x:.16e}")));
        row.push(format!("{:.16e}", v.re));
        row.push(format!("{:.16e}", v.im));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a CSV written by [`write_csv`] back onto `grid`.
pub fn read_csv<R: Read>(grid: &Grid, input: R) -> Result<GridFunction> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty csv".into()))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim = grid.dim();
    if cols.len() != 2 * dim + 2 {
        return Err(Error::Format(format!(
            "expected {} columns for a {dim}-d grid, got {}",
            2 * dim + 2,
            cols.len()
        )));
    }
    let space = match cols[dim].chars().next() {
        Some('x') => Space::Position,
        Some('k') => Space::Fourier,
        _ => return Err(Error::Format(format!("unknown coordinate column {}", cols[dim]))),
    };
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut seen = vec![false; grid.len()];
    let parse = |s: &str, line_no: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("line {line_no}: {e}")))
    };
    for (line_no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Format(format!("line {}: wrong field count", line_no + 2)));
        }
        let mut idx = [0usize; MAX_DIM];
        for a in 0..dim {
            idx[a] = fields[a]
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", line_no + 2)))?;
            if idx[a] >= grid.points_per_axis() {
                return Err(Error::Format(format!("line {}: index out of range", line_no + 2)));
            }
        }
        let flat = grid.ravel(&idx[..dim]);
        values[flat] = Complex64::new(
            parse(fields[2 * dim], line_no + 2)?,
            parse(fields[2 * dim + 1], line_no + 2)?,
        );
        seen[flat] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Format(format!("missing grid point {missing}")));
    }
    GridFunction::new(grid, space, values)
}

/// Writes real columns sharing one axis as a plot-ready CSV.
pub fn write_real_columns<W: Write>(
    mut out: W,
    names: &[&str],
    columns: &[&[f64]],
) -> Result<()> {
    writeln!(out, "{}", names.join(","))?;
    let rows = columns.first().map_or(0, |c| c.len());
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| format!("{:.16e}", c[r])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridFunction {
        let g = Grid::new(2, 8, 3.0).unwrap();
        g.sample_complex(Space::Position, |x| Complex64::new(x[0].sin(), x[1] * 0.1 + 1e-300))
            .unwrap()
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back, f);
        let first_line = buf.split(|b| *b == b'\n').next().unwrap();
        let header: serde_json::Value = serde_json::from_slice(first_line).unwrap();
        assert_eq!(header["space"], "position");
        assert_eq!(header["count"], 64);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i0,i1,x0,x1,re,im\n"));
        let back = read_csv(f.grid(), &buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_binary(&buf[..]), Err(Error::Format(_))));
    }
}
