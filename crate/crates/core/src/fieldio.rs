//! Flat field files.
//!
//! Binary: two little-endian `u64` header words `d`, `n`, followed by the
//! row-major values as little-endian `f64`; vector fields store their `d`
//! components back to back. CSV: a `d,n` header line, then one line per grid
//! point holding one value (scalar) or `d` comma-separated values (vector).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Binary,
    Csv,
}

impl FieldFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FieldFormat::Csv,
            _ => FieldFormat::Binary,
        }
    }
}

pub fn encode_binary(grid: &TorusGrid, components: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * grid.len() * components.len());
    out.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    for c in components {
        for v in c.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<(TorusGrid, Vec<Vec<f64>>)> {
    if bytes.len() < 16 {
        return Err(Error::Format("binary field shorter than its header".into()));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let grid = TorusGrid::new(word(0) as usize, word(1) as usize)?;
    let body = &bytes[16..];
    if body.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of f64 values".into()));
    }
    let count = body.len() / 8;
    if count == 0 || count % grid.len() != 0 {
        return Err(Error::Format(format!(
            "{count} values do not fill whole components of {} points",
            grid.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((grid, values.chunks(grid.len()).map(<[f64]>::to_vec).collect()))
}

pub fn encode_csv(grid: &TorusGrid, components: &[&[f64]]) -> String {
    let mut out = format!("{},{}\n", grid.dim(), grid.n());
    for j in 0..grid.len() {
        let row: Vec<String> = components.iter().map(|c| format!("{:e}", c[j])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<(TorusGrid, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV field".into()))?;
    let head: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("line 1: bad header `{header}`: {e}")))?;
    if head.len() != 2 {
        return Err(Error::Format(format!("line 1: expected `d,n`, got `{header}`")));
    }
    let grid = TorusGrid::new(head[0], head[1])?;
    let mut comps: Vec<Vec<f64>> = Vec::new();
    let mut rows = 0;
    for (ln, line) in lines {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", ln + 1)))?;
        if comps.is_empty() {
            comps = vec![Vec::with_capacity(grid.len()); vals.len()];
        }
        if vals.len() != comps.len() {
            return Err(Error::Format(format!(
                "line {}: expected {} values, got {}",
                ln + 1,
                comps.len(),
                vals.len()
            )));
        }
        for (c, v) in comps.iter_mut().zip(vals) {
            c.push(v);
        }
        rows += 1;
    }
    if rows != grid.len() {
        return Err(Error::Format(format!("expected {} rows, got {rows}", grid.len())));
    }
    Ok((grid, comps))
}

fn read_any(path: &Path) -> Result<(TorusGrid, Vec<Vec<f64>>)> {
    match FieldFormat::from_path(path) {
        FieldFormat::Binary => decode_binary(&fs::read(path).map_err(|e| Error::io(path, e))?),
        FieldFormat::Csv => decode_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
    }
}

fn write_any(path: &Path, grid: &TorusGrid, components: &[&[f64]]) -> Result<()> {
    let bytes = match FieldFormat::from_path(path) {
        FieldFormat::Binary => encode_binary(grid, components),
        FieldFormat::Csv => encode_csv(grid, components).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_scalar(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    write_any(path.as_ref(), f.grid(), &[f.values()])
}

pub fn write_vector(path: impl AsRef<Path>, b: &VectorField) -> Result<()> {
    let comps: Vec<&[f64]> = b.components().iter().map(|c| c.values()).collect();
    write_any(path.as_ref(), b.grid(), &comps)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    let (grid, mut comps) = read_any(path.as_ref())?;
    if comps.len() != 1 {
        return Err(Error::Format(format!("expected a scalar field, found {} components", comps.len())));
    }
    ScalarField::new(grid, comps.pop().expect("one component"))
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<VectorField> {
    let (grid, comps) = read_any(path.as_ref())?;
    if comps.len() != grid.dim() {
        return Err(Error::Format(format!(
            "expected {} components, found {}",
            grid.dim(),
            comps.len()
        )));
    }
    VectorField::new(
        comps
            .into_iter()
            .map(|c| ScalarField::new(grid, c))
            .collect::<Result<Vec<_>>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_layout_is_exact() {
        let g = TorusGrid::new(1, 8).unwrap();
        let v: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let bytes = encode_binary(&g, &[&v]);
        assert_eq!(bytes.len(), 16 + 64);
        assert_eq!(&bytes[0..8], &1u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &8u64.to_le_bytes());
        assert_eq!(&bytes[16 + 8..16 + 16], &0.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_truncated_payloads() {
        let g = TorusGrid::new(1, 8).unwrap();
        let v = vec![1.0; 8];
        let bytes = encode_binary(&g, &[&v]);
        assert!(decode_binary(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_binary(&bytes[..10]).is_err());
        assert!(decode_csv("1,8\n1\n2\n").is_err());
        assert!(decode_csv("1,x\n").is_err());
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(2, 8).unwrap();
        let b = VectorField::new(vec![
            ScalarField::from_fn(g, |x| x[0] + 0.1).unwrap(),
            ScalarField::from_fn(g, |x| x[1] * x[0]).unwrap(),
        ])
        .unwrap();
        for name in ["b.bin", "b.csv"] {
            let p = dir.path().join(name);
            write_vector(&p, &b).unwrap();
            assert_eq!(read_vector(&p).unwrap(), b);
            assert!(read_scalar(&p).is_err());
        }
    }

    proptest! {
        #[test]
        fn scalar_round_trip(values in prop::collection::vec(-1e300f64..1e300, 64)) {
            let g = TorusGrid::new(2, 8).unwrap();
            let f = ScalarField::new(g, values).unwrap();
            let (g2, c) = decode_binary(&encode_binary(&g, &[f.values()])).unwrap();
            prop_assert_eq!(g2, g);
            prop_assert_eq!(&c[0][..], f.values());
            let (_, c) = decode_csv(&encode_csv(&g, &[f.values()])).unwrap();
            prop_assert_eq!(&c[0][..], f.values());
        }
    }
}
