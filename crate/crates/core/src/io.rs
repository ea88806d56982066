//! Node-grid CSV files and portable graymaps.
//!
//! A grid CSV starts with one header line
//! `#n=<n>,L=<extent>,field=<name>,units=<units>` followed by `n` rows of `n`
//! comma-separated values; row `j` holds the nodes `(0..n, j)`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct GridCsv {
    pub n: usize,
    pub extent: f64,
    pub field: String,
    pub units: String,
    pub values: Vec<f64>,
}

pub fn format_grid_csv(
    grid: &GridSpec,
    field: &str,
    units: &str,
    values: &[f64],
) -> Result<String> {
    if values.len() != grid.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} nodes",
            values.len(),
            grid.num_nodes()
        )));
    }
    let n = grid.n();
    let mut s = String::new();
    writeln!(s, "#n={n},L={},field={field},units={units}", grid.extent()).unwrap();
    for row in values.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn write_grid_csv(
    path: &Path,
    grid: &GridSpec,
    field: &str,
    units: &str,
    values: &[f64],
) -> Result<()> {
    std::fs::write(path, format_grid_csv(grid, field, units, values)?)?;
    Ok(())
}

pub fn parse_grid_csv(text: &str) -> Result<GridCsv> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .and_then(|h| h.strip_prefix('#'))
        .ok_or_else(|| Error::Parse("missing `#n=...` header".into()))?;
    let mut n = None;
    let mut extent = None;
    let mut field = String::new();
    let mut units = String::new();
    for kv in header.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header entry `{kv}`")))?;
        match k.trim() {
            "n" => n = v.trim().parse::<usize>().ok(),
            "L" => extent = v.trim().parse::<f64>().ok(),
            "field" => field = v.trim().to_string(),
            "units" => units = v.trim().to_string(),
            _ => {}
        }
    }
    let n = n.ok_or_else(|| Error::Parse("header lacks n".into()))?;
    let extent = extent.ok_or_else(|| Error::Parse("header lacks L".into()))?;
    let mut values = Vec::with_capacity(n * n);
    for (j, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad value `{t}` in row {j}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse(format!(
                "row {j} has {} values, expected {n}",
                row.len()
            )));
        }
        values.extend(row);
    }
    if values.len() != n * n {
        return Err(Error::Parse(format!(
            "{} rows, expected {n}",
            values.len() / n.max(1)
        )));
    }
    Ok(GridCsv {
        n,
        extent,
        field,
        units,
        values,
    })
}

pub fn read_grid_csv(path: &Path) -> Result<GridCsv> {
    parse_grid_csv(&std::fs::read_to_string(path)?)
}

/// Binary 8-bit graymap, black at `lo` and white at `hi`; row `j = n-1` on
/// top so the image shows the domain upright.
pub fn encode_pgm(n: usize, values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let mut out = format!("P5\n{n} {n}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for j in (0..n).rev() {
        for i in 0..n {
            let v = values[i + n * j];
            let t = if v.is_finite() {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                1.0
            };
            out.push((t * 255.0).round() as u8);
        }
    }
    out
}

/// Graymap scaled to the finite range of `values`.
pub fn write_pgm(path: &Path, n: usize, values: &[f64]) -> Result<()> {
    let finite = values.iter().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = finite.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_pgm(n, values, lo, hi))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let g = GridSpec::new(3, 10.0).unwrap();
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300, 4.0, 5.0, 6.0, 7.0, 8.0, f64::MAX];
        let s = format_grid_csv(&g, "sigma_re", "cm^-1 kOhm^-1", &v).unwrap();
        assert!(s.starts_with("#n=3,L=10,field=sigma_re,units=cm^-1 kOhm^-1\n"));
        let back = parse_grid_csv(&s).unwrap();
        assert_eq!(back.values, v);
        assert_eq!((back.n, back.extent), (3, 10.0));
        assert_eq!(back.field, "sigma_re");
    }

    #[test]
    fn csv_errors() {
        assert!(parse_grid_csv("1,2\n").is_err());
        assert!(parse_grid_csv("#n=2,L=1\n1,2\n3\n").is_err());
        assert!(parse_grid_csv("#n=2,L=1\n1,2\n").is_err());
        assert!(format_grid_csv(&GridSpec::new(3, 1.0).unwrap(), "f", "u", &[1.0]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let p = encode_pgm(2, &[0.0, 1.0, 2.0, 3.0], 0.0, 3.0);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&p[..header.len()], header);
        assert_eq!(&p[header.len()..], &[170, 255, 0, 85]);
    }
}
