use num_complex::Complex64;

use crate::{Error, Result};

/// Values of a field at the boundary nodes in loop order, with the lengths
/// of the loop edges (edge `k` joins node `k` to node `k + 1`, cyclically).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    values: Vec<Complex64>,
    edge_lengths: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(values: Vec<Complex64>, edge_lengths: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            edge_lengths.len(),
            "one edge per boundary node"
        );
        BoundaryTrace {
            values,
            edge_lengths,
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.values.len();
        self.edge_lengths
            .iter()
            .enumerate()
            .map(move |(k, &l)| (k, (k + 1) % n, l))
    }

    /// Trapezoid weight of each boundary node: half the length of its two
    /// adjacent edges.
    pub fn node_weights(&self) -> Vec<f64> {
        let n = self.values.len();
        (0..n)
            .map(|k| 0.5 * (self.edge_lengths[k] + self.edge_lengths[(k + n - 1) % n]))
            .collect()
    }

    /// `int_Gamma u conj(v)` by the edge trapezoid rule.
    pub fn inner(&self, other: &BoundaryTrace) -> Complex64 {
        self.node_weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(&w, (u, v))| u * v.conj() * w)
            .sum()
    }

    /// `int_Gamma |u|^2` by the edge trapezoid rule.
    pub fn norm_sqr(&self) -> f64 {
        self.node_weights()
            .iter()
            .zip(&self.values)
            .map(|(&w, u)| w * u.norm_sqr())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `int_Gamma |u|^2` for the piecewise linear interpolant, exact.
    pub fn p1_norm_sqr(&self) -> f64 {
        let u = &self.values;
        self.edges()
            .map(|(i, j, l)| {
                l / 3.0 * (u[i].norm_sqr() + u[j].norm_sqr() + (u[i] * u[j].conj()).re)
            })
            .sum()
    }

    pub fn sub(&self, other: &BoundaryTrace) -> Result<BoundaryTrace> {
        if self.len() != other.len() {
            return Err(Error::IndexMismatch(format!(
                "trace lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(BoundaryTrace {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            edge_lengths: self.edge_lengths.clone(),
        })
    }

    pub fn scale(&self, s: f64) -> BoundaryTrace {
        BoundaryTrace {
            values: self.values.iter().map(|v| v * s).collect(),
            edge_lengths: self.edge_lengths.clone(),
        }
    }
}
