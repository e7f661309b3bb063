//! `CHEMOFIELD v1` ASCII field snapshots.
//!
//! ```text
//! CHEMOFIELD v1 dim=2 cells=4,4 lengths=1,1 t=0.5
//! 1.0000000000000000e0
//! ...
//! ```
//! One value per line, row-major, 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::io::write_atomic;

/// Formats a real with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn encode(field: &ScalarField, t: f64) -> String {
    let g = field.grid();
    let mut out = format!(
        "CHEMOFIELD v1 dim={} cells={} lengths={} t={}\n",
        g.dim(),
        join(g.cells()),
        join(g.lengths()),
        fmt17(t)
    );
    for &v in field.values() {
        writeln!(out, "{}", fmt17(v)).expect("string write");
    }
    out
}

pub fn decode(text: &str) -> Result<(ScalarField, f64)> {
    let bad = |msg: &str| Error::DataIntegrity(format!("CHEMOFIELD: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty input"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("CHEMOFIELD") || tokens.next() != Some("v1") {
        return Err(bad("missing `CHEMOFIELD v1` magic"));
    }
    let (mut dim, mut cells, mut lengths, mut t) = (None, None, None, None);
    for tok in tokens {
        let (key, value) = tok.split_once('=').ok_or_else(|| bad("malformed header token"))?;
        match key {
            "dim" => dim = value.parse::<usize>().ok(),
            "cells" => cells = value.split(',').map(|s| s.parse::<usize>().ok()).collect(),
            "lengths" => lengths = value.split(',').map(|s| s.parse::<f64>().ok()).collect(),
            "t" => t = value.parse::<f64>().ok(),
            _ => return Err(bad(&format!("unknown header key `{key}`"))),
        }
    }
    let (dim, cells, lengths, t): (usize, Vec<usize>, Vec<f64>, f64) = match (dim, cells, lengths, t) {
        (Some(d), Some(c), Some(l), Some(t)) => (d, c, l, t),
        _ => return Err(bad("incomplete header")),
    };
    if cells.len() != dim {
        return Err(bad("dim does not match cells"));
    }
    let grid = Arc::new(GridSpec::new(&cells, &lengths)?);
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad(&format!("bad value `{l}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((ScalarField::new(grid, values)?, t))
}

pub fn write_snapshot(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    write_atomic(path, encode(field, t).as_bytes())
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_format() {
        let g = Arc::new(GridSpec::new(&[2, 3], &[1.0, 0.5]).unwrap());
        let f = ScalarField::constant(g, 0.1);
        let text = encode(&f, 0.25);
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "CHEMOFIELD v1 dim=2 cells=2,3 lengths=1,0.5 t=2.5000000000000000e-1"
        );
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().nth(1).unwrap(), "1.0000000000000001e-1");
    }

    #[test]
    fn roundtrip_is_exact() {
        let g = Arc::new(GridSpec::new(&[3, 2, 2], &[1.0, 2.0, 3.0]).unwrap());
        let f = ScalarField::from_fn(g, |x| (x[0] * 7.1).sin() / 3.0 + x[1] * x[2]);
        let (back, t) = decode(&encode(&f, 1.0 / 3.0)).unwrap();
        assert_eq!(back, f);
        assert_eq!(t, 1.0 / 3.0);
    }

    #[test]
    fn rejects_wrong_count() {
        let text = "CHEMOFIELD v1 dim=1 cells=2 lengths=1 t=0\n1.0\n";
        assert!(decode(text).is_err());
        assert!(decode("garbage").is_err());
    }
}
