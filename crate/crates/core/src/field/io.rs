//! Plain-text field files.
//!
//! Layout: a header line `# nx ny hx hy ox oy components`, then one line per
//! node in row-major order (x fastest) holding the comma-separated component
//! values. Values are written in shortest round-trip form, so reading back a
//! written field reproduces it bit for bit. The mask is not stored; fields read
//! from a file live on a rectangle grid.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Field, Grid};
use crate::error::{Error, Result};

pub fn write_field<F: Field, W: Write>(f: &F, mut w: W) -> Result<()> {
    let g = f.grid();
    let o = g.origin();
    writeln!(w, "# {} {} {} {} {} {} {}", g.nx(), g.ny(), g.hx(), g.hy(), o[0], o[1], F::COMPONENTS)?;
    let comps = f.components();
    let mut line = String::new();
    for k in 0..g.len() {
        line.clear();
        for (c, v) in comps.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&v[k].to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field<F: Field, R: BufRead>(r: R) -> Result<F> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty file".into()))??;
    let parts: Vec<&str> = header
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing header".into()))?
        .split_whitespace()
        .collect();
    if parts.len() != 7 {
        return Err(Error::Format(format!("header needs 7 entries, got {}", parts.len())));
    }
    let bad = |s: &str| Error::Format(format!("bad header entry '{s}'"));
    let nx: usize = parts[0].parse().map_err(|_| bad(parts[0]))?;
    let ny: usize = parts[1].parse().map_err(|_| bad(parts[1]))?;
    let mut nums = [0.0f64; 4];
    for (n, s) in nums.iter_mut().zip(&parts[2..6]) {
        *n = s.parse().map_err(|_| bad(s))?;
    }
    let ncomp: usize = parts[6].parse().map_err(|_| bad(parts[6]))?;
    if ncomp != F::COMPONENTS {
        return Err(Error::Format(format!("expected {} components, file has {ncomp}", F::COMPONENTS)));
    }
    let grid = Arc::new(Grid::rectangle(nx, ny, nums[0], nums[1], [nums[2], nums[3]])?);
    let mut comps = vec![Vec::with_capacity(grid.len()); ncomp];
    for k in 0..grid.len() {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("file ends after {k} of {} nodes", grid.len())))??;
        let mut n = 0;
        for s in line.split(',') {
            if n == ncomp {
                return Err(Error::Format(format!("too many values on node line {k}")));
            }
            comps[n].push(s.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad value '{s}'")))?);
            n += 1;
        }
        if n != ncomp {
            return Err(Error::Format(format!("node line {k} has {n} values, expected {ncomp}")));
        }
    }
    F::from_components(grid, comps)
}

pub fn save<F: Field>(f: &F, path: impl AsRef<Path>) -> Result<()> {
    write_field(f, BufWriter::new(File::create(path)?))
}

pub fn load<F: Field>(path: impl AsRef<Path>) -> Result<F> {
    read_field(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ScalarField, SymMatrixField};

    #[test]
    fn round_trip_is_bitwise() {
        let g = Arc::new(Grid::unit_square(9).unwrap());
        let f = SymMatrixField::from_fn(&g, |x, y| [(x * 7.1).sin(), 1e-300 * y, -x / 3.0]);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        let back: SymMatrixField = read_field(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_component_mismatch() {
        let g = Arc::new(Grid::unit_square(9).unwrap());
        let f = ScalarField::zeros(&g);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert!(read_field::<SymMatrixField, _>(&buf[..]).is_err());
    }

    #[test]
    fn rejects_truncated() {
        let text = "# 9 9 0.125 0.125 0 0 1\n0\n1\n";
        assert!(read_field::<ScalarField, _>(text.as_bytes()).is_err());
    }
}
