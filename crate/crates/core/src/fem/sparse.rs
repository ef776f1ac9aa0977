//! Symmetric sparse matrices and a skyline LDL^T factorization.
//!
//! The factorization works for real symmetric and complex-symmetric
//! (`A = A^T`, not Hermitian) matrices. No pivoting is done; it is used for
//! mass matrices (SPD) and for `K + i M` type systems with positive definite
//! imaginary part, whose leading minors never vanish. Rows are reordered by
//! reverse Cuthill-McKee to keep the envelope narrow.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::iter::Sum;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::NumAssign;

use crate::{Error, Result};

pub trait Scalar: Copy + Send + Sync + NumAssign + Sum + Debug + 'static {
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

const NONE: usize = usize::MAX;

/// Structurally symmetric CSR pattern plus the envelope layout used by
/// [`LdlFactor`].
#[derive(Debug)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// New index -> original index.
    perm: Vec<usize>,
    /// First stored column of each permuted row.
    first: Vec<usize>,
    /// Storage offset of `first[i]` in permuted row `i`.
    start: Vec<usize>,
    /// CSR position -> envelope slot, `NONE` for strictly upper entries.
    csr_to_sky: Vec<usize>,
    envelope: usize,
}

impl Pattern {
    /// Builds the pattern from an adjacency list; the diagonal is always
    /// included.
    pub fn from_adjacency(mut adj: Vec<Vec<usize>>) -> Self {
        let n = adj.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for (i, row) in adj.iter_mut().enumerate() {
            row.push(i);
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let perm = reverse_cuthill_mckee(n, &row_ptr, &cols);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in &cols[row_ptr[old]..row_ptr[old + 1]] {
                first[i] = first[i].min(inv[c]);
            }
        }
        let mut start = Vec::with_capacity(n);
        let mut envelope = 0;
        for i in 0..n {
            start.push(envelope);
            envelope += i - first[i] + 1;
        }
        let mut csr_to_sky = vec![NONE; cols.len()];
        for old in 0..n {
            let i = inv[old];
            for p in row_ptr[old]..row_ptr[old + 1] {
                let j = inv[cols[p]];
                if j <= i {
                    csr_to_sky[p] = start[i] + j - first[i];
                }
            }
        }
        Pattern {
            n,
            row_ptr,
            cols,
            perm,
            first,
            start,
            csr_to_sky,
            envelope,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Number of stored entries in the lower envelope.
    pub fn envelope(&self) -> usize {
        self.envelope
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// CSR position of entry `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .binary_search(&j)
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    fn diag_slot(&self, i: usize) -> usize {
        self.start[i] + i - self.first[i]
    }
}

fn reverse_cuthill_mckee(n: usize, row_ptr: &[usize], cols: &[usize]) -> Vec<usize> {
    let degree: Vec<usize> = (0..n).map(|i| row_ptr[i + 1] - row_ptr[i]).collect();
    let neighbors = |i: usize| {
        cols[row_ptr[i]..row_ptr[i + 1]]
            .iter()
            .copied()
            .filter(move |&j| j != i)
    };

    // BFS levels from `root` restricted to unvisited nodes; returns the last
    // level and the eccentricity.
    let bfs_levels = |root: usize, visited: &[bool]| -> (Vec<usize>, usize) {
        let mut level = vec![NONE; n];
        level[root] = 0;
        let mut frontier = vec![root];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &u in &frontier {
                for v in neighbors(u) {
                    if !visited[v] && level[v] == NONE {
                        level[v] = depth + 1;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                return (frontier, depth);
            }
            frontier = next;
            depth += 1;
        }
    };

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut root = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node");
        // Pseudo-peripheral root.
        let (mut last, mut ecc) = bfs_levels(root, &visited);
        for _ in 0..8 {
            let cand = *last
                .iter()
                .min_by_key(|&&i| (degree[i], i))
                .expect("non-empty level");
            let (l2, e2) = bfs_levels(cand, &visited);
            if e2 <= ecc {
                break;
            }
            root = cand;
            last = l2;
            ecc = e2;
        }
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = neighbors(u).filter(|&v| !visited[v]).collect();
            nb.sort_unstable_by_key(|&v| (degree[v], v));
            for v in nb {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Values over a shared [`Pattern`].
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pattern: Arc<Pattern>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn from_values(pattern: Arc<Pattern>, values: Vec<T>) -> Self {
        assert_eq!(values.len(), pattern.nnz());
        CsrMatrix { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern
            .position(i, j)
            .map_or(T::zero(), |p| self.values[p])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| p.row_range(i).map(|k| self.values[k] * x[p.cols[k]]).sum())
            .collect()
    }

    /// Replaces rows and columns of the flagged nodes by identity rows.
    pub fn eliminate(&mut self, fixed: &[bool]) {
        let p = Arc::clone(&self.pattern);
        for i in 0..p.n {
            for k in p.row_range(i) {
                let j = p.cols[k];
                if fixed[i] || fixed[j] {
                    self.values[k] = if i == j { T::one() } else { T::zero() };
                }
            }
        }
    }

    pub fn factor(&self) -> Result<LdlFactor<T>> {
        LdlFactor::new(self)
    }
}

/// `A = L D L^T` in envelope storage; `L` is unit lower triangular and the
/// diagonal slots hold `D`.
#[derive(Debug, Clone)]
pub struct LdlFactor<T> {
    pattern: Arc<Pattern>,
    data: Vec<T>,
}

impl<T: Scalar> LdlFactor<T> {
    pub fn new(matrix: &CsrMatrix<T>) -> Result<Self> {
        let p = Arc::clone(&matrix.pattern);
        let mut a = vec![T::zero(); p.envelope];
        for (k, &slot) in p.csr_to_sky.iter().enumerate() {
            if slot != NONE {
                a[slot] += matrix.values[k];
            }
        }
        let scale = (0..p.n)
            .map(|i| a[p.diag_slot(i)].modulus())
            .fold(0.0, f64::max);
        for i in 0..p.n {
            let (fi, si) = (p.first[i], p.start[i]);
            let (head, tail) = a.split_at_mut(si);
            let row_i = &mut tail[..=i - fi];
            for j in fi..i {
                let (fj, sj) = (p.first[j], p.start[j]);
                let k0 = fi.max(fj);
                if k0 < j {
                    let lj = &head[sj + k0 - fj..sj + j - fj];
                    let ui = &row_i[k0 - fi..j - fi];
                    let dot: T = ui.iter().zip(lj).map(|(&u, &l)| u * l).sum();
                    row_i[j - fi] -= dot;
                }
            }
            let mut d = row_i[i - fi];
            for j in fi..i {
                let u = row_i[j - fi];
                let l = u / head[p.diag_slot(j)];
                d -= u * l;
                row_i[j - fi] = l;
            }
            if !(d.modulus() > 1e-14 * scale) {
                return Err(Error::Solver {
                    reason: format!("zero pivot in LDL^T at row {}", p.perm[i]),
                    residual: f64::NAN,
                });
            }
            row_i[i - fi] = d;
        }
        Ok(LdlFactor {
            pattern: p,
            data: a,
        })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let p = &self.pattern;
        assert_eq!(b.len(), p.n);
        let mut y: Vec<T> = p.perm.iter().map(|&old| b[old]).collect();
        for i in 0..p.n {
            let (fi, si) = (p.first[i], p.start[i]);
            let row = &self.data[si..si + i - fi];
            let dot: T = row.iter().zip(&y[fi..i]).map(|(&l, &v)| l * v).sum();
            y[i] -= dot;
        }
        for i in 0..p.n {
            y[i] /= self.data[p.diag_slot(i)];
        }
        for i in (0..p.n).rev() {
            let (fi, si) = (p.first[i], p.start[i]);
            let yi = y[i];
            let row = &self.data[si..si + i - fi];
            for (v, &l) in y[fi..i].iter_mut().zip(row) {
                *v -= l * yi;
            }
        }
        let mut x = vec![T::zero(); p.n];
        for (new, &old) in p.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

pub(crate) fn norm2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}

/// Infinity norm (max absolute row sum).
pub(crate) fn norm_inf<T: Scalar>(m: &CsrMatrix<T>) -> f64 {
    let p = &m.pattern;
    (0..p.n)
        .map(|i| p.row_range(i).map(|k| m.values[k].modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A x = b` with the given factor and up to three steps of
/// iterative refinement.
///
/// The solve is accepted when `|b - A x| <= rtol |b|`. For nearly singular
/// systems, whose solutions are large, that bound can sit below the
/// rounding floor; the normwise backward error
/// `|b - A x| / (|A| |x| + |b|) <= rtol` is accepted instead.
pub fn solve_checked<T: Scalar>(
    matrix: &CsrMatrix<T>,
    factor: &LdlFactor<T>,
    b: &[T],
    rtol: f64,
) -> Result<Vec<T>> {
    let bnorm = norm2(b);
    let mut x = factor.solve(b);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let residual = |x: &[T]| -> Vec<T> {
        let ax = matrix.matvec(x);
        b.iter().zip(&ax).map(|(&b, &a)| b - a).collect()
    };
    let mut best = f64::INFINITY;
    for step in 0..4 {
        let r = residual(&x);
        let rnorm = norm2(&r);
        if !rnorm.is_finite() {
            break;
        }
        best = rnorm / bnorm;
        if best <= rtol {
            return Ok(x);
        }
        if step == 3 {
            let backward = rnorm / (norm_inf(matrix) * norm2(&x) + bnorm);
            if backward <= rtol {
                return Ok(x);
            }
            break;
        }
        let dx = factor.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Err(Error::Solver {
        reason: "residual above tolerance after refinement".into(),
        residual: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_pattern(m: usize) -> Arc<Pattern> {
        let idx = |i: usize, j: usize| i * m + j;
        let mut adj = vec![Vec::new(); m * m];
        for i in 0..m {
            for j in 0..m {
                if i + 1 < m {
                    adj[idx(i, j)].push(idx(i + 1, j));
                    adj[idx(i + 1, j)].push(idx(i, j));
                }
                if j + 1 < m {
                    adj[idx(i, j)].push(idx(i, j + 1));
                    adj[idx(i, j + 1)].push(idx(i, j));
                }
            }
        }
        Arc::new(Pattern::from_adjacency(adj))
    }

    fn random_sym<T: Scalar>(
        p: &Arc<Pattern>,
        gen: impl Fn(&mut ChaCha8Rng, bool) -> T,
    ) -> CsrMatrix<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = CsrMatrix::zeros(Arc::clone(p));
        for i in 0..p.n() {
            for j in p.row(i).to_vec() {
                if j < i {
                    let v = gen(&mut rng, false);
                    let a = p.position(i, j).unwrap();
                    let b = p.position(j, i).unwrap();
                    m.values_mut()[a] = v;
                    m.values_mut()[b] = v;
                } else if j == i {
                    let a = p.position(i, i).unwrap();
                    m.values_mut()[a] = gen(&mut rng, true);
                }
            }
        }
        m
    }

    #[test]
    fn real_spd_solve() {
        let p = grid_pattern(9);
        let m = random_sym(&p, |r, diag| {
            if diag {
                8.0 + r.random::<f64>()
            } else {
                -r.random::<f64>()
            }
        });
        let f = m.factor().unwrap();
        let x0: Vec<f64> = (0..p.n()).map(|i| (i as f64).sin()).collect();
        let b = m.matvec(&x0);
        let x = f.solve(&b);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_symmetric_solve() {
        let p = grid_pattern(7);
        let m = random_sym(&p, |r, diag| {
            if diag {
                Complex64::new(4.0 + r.random::<f64>(), 1.0 + r.random::<f64>())
            } else {
                Complex64::new(-r.random::<f64>(), 0.1 * r.random::<f64>())
            }
        });
        let f = m.factor().unwrap();
        let x0: Vec<Complex64> = (0..p.n())
            .map(|i| Complex64::new((i as f64).cos(), (i as f64 * 0.3).sin()))
            .collect();
        let b = m.matvec(&x0);
        let x = solve_checked(&m, &f, &b, 1e-12).unwrap();
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rcm_shrinks_envelope_of_scrambled_grid() {
        let p = grid_pattern(20);
        // Dense-envelope bound for a 400-node matrix is ~80k entries.
        assert!(p.envelope() < 400 * 25, "envelope {}", p.envelope());
    }

    #[test]
    fn singular_matrix_rejected() {
        let p = grid_pattern(3);
        let m = CsrMatrix::<f64>::zeros(p);
        assert!(matches!(m.factor(), Err(Error::Solver { .. })));
    }

    #[test]
    fn eliminated_rows_are_identity() {
        let p = grid_pattern(4);
        let mut m = random_sym(&p, |r, diag| if diag { 5.0 } else { -r.random::<f64>() });
        let mut fixed = vec![false; p.n()];
        fixed[0] = true;
        fixed[5] = true;
        m.eliminate(&fixed);
        let mut b = vec![1.0; p.n()];
        b[0] = 0.0;
        b[5] = 0.0;
        let x = m.factor().unwrap().solve(&b);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[5], 0.0);
    }
}
