use std::io::{BufRead, Write};
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::data::io::{parse_value, LineReader};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// One scalar per mesh node, real or complex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<T> {
    values: Vec<T>,
}

pub type RealField = NodalField<f64>;
pub type ComplexField = NodalField<Complex64>;

impl<T: Copy> NodalField<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        NodalField { values }
    }

    pub fn constant(n: usize, value: T) -> Self {
        NodalField {
            values: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> NodalField<U> {
        NodalField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn check_len(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.n_nodes() {
            return Err(Error::IndexMismatch(format!(
                "field has {} values, mesh has {} nodes",
                self.values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(())
    }
}

impl<T> Index<usize> for NodalField<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T> IndexMut<usize> for NodalField<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.values[i]
    }
}

impl RealField {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self + a * x`
    pub fn axpy(&self, a: f64, x: &RealField) -> RealField {
        NodalField {
            values: self
                .values
                .iter()
                .zip(&x.values)
                .map(|(s, x)| s + a * x)
                .collect(),
        }
    }

    /// Field dump: one `x y value` line per node.
    pub fn write<W: Write>(&self, mesh: &Mesh, mut w: W) -> Result<()> {
        self.check_len(mesh)?;
        writeln!(w, "# tscm-field real v1")?;
        for (p, v) in mesh.nodes().iter().zip(&self.values) {
            writeln!(w, "{:e} {:e} {:e}", p[0], p[1], v)?;
        }
        Ok(())
    }

    /// Reads a field dump; node coordinates must match the mesh exactly.
    pub fn read<R: BufRead>(mesh: &Mesh, r: R) -> Result<Self> {
        let rows = read_rows(mesh, r, "# tscm-field real v1", 3)?;
        Ok(NodalField {
            values: rows.into_iter().map(|r| r[0]).collect(),
        })
    }
}

impl ComplexField {
    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|v| v.conj())
    }

    /// Field dump: one `x y re im` line per node.
    pub fn write<W: Write>(&self, mesh: &Mesh, mut w: W) -> Result<()> {
        self.check_len(mesh)?;
        writeln!(w, "# tscm-field complex v1")?;
        for (p, v) in mesh.nodes().iter().zip(&self.values) {
            writeln!(w, "{:e} {:e} {:e} {:e}", p[0], p[1], v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(mesh: &Mesh, r: R) -> Result<Self> {
        let rows = read_rows(mesh, r, "# tscm-field complex v1", 4)?;
        Ok(NodalField {
            values: rows
                .into_iter()
                .map(|r| Complex64::new(r[0], r[1]))
                .collect(),
        })
    }
}

fn read_rows<R: BufRead>(mesh: &Mesh, r: R, version: &str, cols: usize) -> Result<Vec<[f64; 2]>> {
    let mut lines = LineReader::new(r);
    lines.expect_version(version)?;
    let mut out = Vec::with_capacity(mesh.n_nodes());
    for p in mesh.nodes() {
        let (no, line) = lines.next_line()?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != cols {
            return Err(Error::parse(no, format!("expected {cols} columns")));
        }
        let x: f64 = parse_value(no, tok[0])?;
        let y: f64 = parse_value(no, tok[1])?;
        if x != p[0] || y != p[1] {
            return Err(Error::parse(no, "node coordinates do not match the mesh"));
        }
        let a: f64 = parse_value(no, tok[2])?;
        let b: f64 = if cols == 4 {
            parse_value(no, tok[3])?
        } else {
            0.0
        };
        out.push([a, b]);
    }
    if let Some((no, _)) = lines.next_opt()? {
        return Err(Error::parse(no, "more rows than mesh nodes"));
    }
    Ok(out)
}
