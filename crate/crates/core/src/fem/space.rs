use std::sync::Arc;

use num_complex::Complex64;

use super::sparse::{solve_checked, CsrMatrix, LdlFactor, Pattern};
use super::{BoundaryTrace, ComplexField, RealField};
use crate::mesh::Mesh;
use crate::{Error, Result};

/// Relative residual required of every linear solve.
pub const SOLVE_RTOL: f64 = 1e-10;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Per-triangle data for P1 elements.
#[derive(Debug, Clone)]
struct Element {
    nodes: [usize; 3],
    area: f64,
    /// Gradients of the barycentric coordinates.
    grads: [[f64; 2]; 3],
    /// CSR positions of the local 3x3 block.
    pos: [[usize; 3]; 3],
}

/// P1 Lagrange space on a mesh, with the constant matrices precomputed.
///
/// `K` is the stiffness matrix and `M` the mass matrix, both exact; `B` is
/// the boundary mass matrix of the edge trapezoid rule.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Arc<Mesh>,
    pattern: Arc<Pattern>,
    elements: Vec<Element>,
    stiffness: CsrMatrix<f64>,
    mass: CsrMatrix<f64>,
    boundary_mass: CsrMatrix<f64>,
    boundary_nodes: Vec<usize>,
    mass_factor: LdlFactor<f64>,
    mass0: CsrMatrix<f64>,
    mass0_factor: LdlFactor<f64>,
    fixed: Vec<bool>,
}

/// The bilinear form `a K + b M` used by [`FemSpace::h1_projection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionForm {
    pub stiffness: f64,
    pub mass: f64,
}

impl ProjectionForm {
    pub const MASS: ProjectionForm = ProjectionForm {
        stiffness: 0.0,
        mass: 1.0,
    };
}

/// Complex-symmetric system `mu_inv K + i omega M_sigma` with a right-hand
/// side.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix<Complex64>,
    pub rhs: Vec<Complex64>,
    pub omega: f64,
}

/// A factored forward operator, reusable across right-hand sides and for
/// the conjugate (adjoint) system.
#[derive(Debug)]
pub struct SystemFactor {
    matrix: CsrMatrix<Complex64>,
    factor: LdlFactor<Complex64>,
}

impl SystemFactor {
    pub fn new(matrix: CsrMatrix<Complex64>) -> Result<Self> {
        let factor = matrix.factor()?;
        Ok(SystemFactor { matrix, factor })
    }

    pub fn matrix(&self) -> &CsrMatrix<Complex64> {
        &self.matrix
    }

    /// Solves `S x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Result<ComplexField> {
        let x = solve_checked(&self.matrix, &self.factor, b, SOLVE_RTOL)?;
        finite(ComplexField::from_vec(x))
    }

    /// Solves `conj(S) x = b` by conjugating into the forward system.
    pub fn solve_conj(&self, b: &[Complex64]) -> Result<ComplexField> {
        let bc: Vec<Complex64> = b.iter().map(|v| v.conj()).collect();
        let x = solve_checked(&self.matrix, &self.factor, &bc, SOLVE_RTOL)?;
        finite(ComplexField::from_vec(
            x.into_iter().map(|v| v.conj()).collect(),
        ))
    }
}

fn finite(f: ComplexField) -> Result<ComplexField> {
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Solver {
            reason: "non-finite solution".into(),
            residual: f64::NAN,
        })
    }
}

impl SparseSystem {
    pub fn n(&self) -> usize {
        self.rhs.len()
    }

    pub fn factor(&self) -> Result<SystemFactor> {
        SystemFactor::new(self.matrix.clone())
    }

    pub fn solve(&self) -> Result<ComplexField> {
        self.factor()?.solve(&self.rhs)
    }
}

/// `int lambda_k lambda_a lambda_b` over a triangle, divided by its area.
#[inline]
fn cubic_weight(k: usize, a: usize, b: usize) -> f64 {
    let d = |i: usize, j: usize| f64::from(u8::from(i == j));
    (1.0 + d(k, a) + d(k, b) + d(a, b) + 2.0 * d(k, a) * d(a, b)) / 60.0
}

impl FemSpace {
    pub fn new(mesh: impl Into<Arc<Mesh>>) -> Result<Self> {
        let mesh: Arc<Mesh> = mesh.into();
        let n = mesh.n_nodes();
        let mut adj = vec![Vec::new(); n];
        for t in mesh.triangles() {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        adj[t[a]].push(t[b]);
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_adjacency(adj));
        let nodes = mesh.nodes();
        let elements: Vec<Element> = mesh
            .triangles()
            .iter()
            .map(|&tri| {
                let [p0, p1, p2] = tri.map(|i| nodes[i]);
                let twice = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
                let grads = [
                    [(p1[1] - p2[1]) / twice, (p2[0] - p1[0]) / twice],
                    [(p2[1] - p0[1]) / twice, (p0[0] - p2[0]) / twice],
                    [(p0[1] - p1[1]) / twice, (p1[0] - p0[0]) / twice],
                ];
                let mut pos = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        pos[a][b] = pattern
                            .position(tri[a], tri[b])
                            .expect("element entry in pattern");
                    }
                }
                Element {
                    nodes: tri,
                    area: 0.5 * twice,
                    grads,
                    pos,
                }
            })
            .collect();

        let mut stiffness = CsrMatrix::zeros(Arc::clone(&pattern));
        let mut mass = CsrMatrix::zeros(Arc::clone(&pattern));
        for e in &elements {
            for a in 0..3 {
                for b in 0..3 {
                    let g = e.grads[a][0] * e.grads[b][0] + e.grads[a][1] * e.grads[b][1];
                    stiffness.values_mut()[e.pos[a][b]] += e.area * g;
                    let m = if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
                    mass.values_mut()[e.pos[a][b]] += e.area * m;
                }
            }
        }
        // Edge trapezoid rule: diagonal boundary mass.
        let mut boundary_mass = CsrMatrix::zeros(Arc::clone(&pattern));
        for edge in mesh.boundary_edges() {
            let len = mesh.edge_length(edge);
            for i in edge.nodes {
                let p = pattern.position(i, i).expect("diagonal in pattern");
                boundary_mass.values_mut()[p] += 0.5 * len;
            }
        }
        let fixed: Vec<bool> = (0..n).map(|i| mesh.is_boundary(i)).collect();
        let mut mass0 = mass.clone();
        mass0.eliminate(&fixed);
        let mass_factor = mass.factor()?;
        let mass0_factor = mass0.factor()?;
        Ok(FemSpace {
            boundary_nodes: mesh.boundary_nodes(),
            mesh,
            pattern,
            elements,
            stiffness,
            mass,
            boundary_mass,
            mass_factor,
            mass0,
            mass0_factor,
            fixed,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn mass(&self) -> &CsrMatrix<f64> {
        &self.mass
    }

    pub fn boundary_mass(&self) -> &CsrMatrix<f64> {
        &self.boundary_mass
    }

    fn check_sigma(&self, sigma: &RealField) -> Result<()> {
        sigma.check_len(&self.mesh)?;
        match sigma
            .values()
            .iter()
            .position(|&s| !(s > 0.0 && s.is_finite()))
        {
            Some(node) => Err(Error::NonPositiveSigma {
                node,
                value: sigma[node],
            }),
            None => Ok(()),
        }
    }

    /// Mass matrix weighted by the P1 interpolant of `sigma`, integrated
    /// exactly.
    pub fn weighted_mass(&self, sigma: &[f64]) -> CsrMatrix<f64> {
        let mut m = CsrMatrix::zeros(Arc::clone(&self.pattern));
        for e in &self.elements {
            let s = e.nodes.map(|i| sigma[i]);
            let sum = s[0] + s[1] + s[2];
            for a in 0..3 {
                for b in 0..3 {
                    let mut w = sum + s[a] + s[b];
                    if a == b {
                        w += sum + 2.0 * s[a];
                    }
                    m.values_mut()[e.pos[a][b]] += e.area * w / 60.0;
                }
            }
        }
        m
    }

    /// Assembles `mu_inv K + i omega M_sigma` with a zero right-hand side.
    pub fn assemble_system(
        &self,
        mu_inv: f64,
        omega: f64,
        sigma: &RealField,
    ) -> Result<SparseSystem> {
        if !(mu_inv > 0.0 && mu_inv.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu_inv must be positive, got {mu_inv}"
            )));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "omega must be positive, got {omega}"
            )));
        }
        self.check_sigma(sigma)?;
        let ms = self.weighted_mass(sigma.values());
        let values = self
            .stiffness
            .values()
            .iter()
            .zip(ms.values())
            .map(|(&k, &m)| Complex64::new(mu_inv * k, omega * m))
            .collect();
        Ok(SparseSystem {
            matrix: CsrMatrix::from_values(Arc::clone(&self.pattern), values),
            rhs: vec![Complex64::new(0.0, 0.0); self.n()],
            omega,
        })
    }

    /// Load vector of `<e, phi>_Gamma` for `e = amplitude` on one arc.
    pub fn neumann_rhs(&self, arc: usize, amplitude: f64) -> Result<Vec<f64>> {
        if arc >= self.mesh.n_arcs() {
            return Err(Error::UnknownArc {
                label: arc,
                n_arcs: self.mesh.n_arcs(),
            });
        }
        let mut f = vec![0.0; self.n()];
        for edge in self.mesh.boundary_edges().iter().filter(|e| e.arc == arc) {
            let half = 0.5 * amplitude * self.mesh.edge_length(edge);
            f[edge.nodes[0]] += half;
            f[edge.nodes[1]] += half;
        }
        Ok(f)
    }

    pub fn apply_neumann_rhs(
        &self,
        system: &mut SparseSystem,
        arc: usize,
        amplitude: f64,
    ) -> Result<()> {
        let f = self.neumann_rhs(arc, amplitude)?;
        for (r, v) in system.rhs.iter_mut().zip(f) {
            *r += v;
        }
        Ok(())
    }

    /// Adds `(f, phi)` for the P1 interpolant of `f`.
    pub fn add_volume_source(&self, system: &mut SparseSystem, f: impl Fn([f64; 2]) -> Complex64) {
        let fi: Vec<Complex64> = self.mesh.nodes().iter().map(|&p| f(p)).collect();
        let mf = mass_apply(&self.mass, &fi);
        for (r, v) in system.rhs.iter_mut().zip(mf) {
            *r += v;
        }
    }

    /// Adds `<g, phi>_Gamma` where `g(x, n)` is evaluated at edge endpoints
    /// with the outward unit normal of that edge, integrated exactly for the
    /// per-edge linear interpolant.
    pub fn add_boundary_flux(
        &self,
        system: &mut SparseSystem,
        g: impl Fn([f64; 2], [f64; 2]) -> Complex64,
    ) {
        let nodes = self.mesh.nodes();
        for edge in self.mesh.boundary_edges() {
            let [i, j] = edge.nodes;
            let (p, q) = (nodes[i], nodes[j]);
            let len = self.mesh.edge_length(edge);
            // Counterclockwise loop: outward normal is the tangent rotated clockwise.
            let n = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
            let (gi, gj) = (g(p, n), g(q, n));
            system.rhs[i] += (2.0 * gi + gj) * (len / 6.0);
            system.rhs[j] += (gi + 2.0 * gj) * (len / 6.0);
        }
    }

    /// Boundary trace of a nodal field in loop order.
    pub fn boundary_trace(&self, field: &ComplexField) -> BoundaryTrace {
        BoundaryTrace::new(
            self.boundary_nodes.iter().map(|&i| field[i]).collect(),
            self.mesh.boundary_edge_lengths(),
        )
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// `B r` for a trace, scattered to nodes.
    pub fn boundary_load(&self, trace: &BoundaryTrace) -> Vec<Complex64> {
        let mut full = vec![Complex64::new(0.0, 0.0); self.n()];
        for (&i, &v) in self.boundary_nodes.iter().zip(trace.values()) {
            full[i] = v;
        }
        mass_apply(&self.boundary_mass, &full)
    }

    /// Solves the adjoint problem `conj(S) Z = -B r` for the residual trace
    /// `r`, reusing the forward factor.
    pub fn solve_adjoint(
        &self,
        factor: &SystemFactor,
        residual: &BoundaryTrace,
    ) -> Result<ComplexField> {
        let mut b = self.boundary_load(residual);
        for v in &mut b {
            *v = -*v;
        }
        factor.solve_conj(&b)
    }

    /// Sesquilinear forward form `(mu_inv grad u, grad v) + (i omega sigma u, v)`.
    pub fn forward_form(
        &self,
        mu_inv: f64,
        omega: f64,
        sigma: &RealField,
        u: &[Complex64],
        v: &[Complex64],
    ) -> Complex64 {
        let ms = self.weighted_mass(sigma.values());
        let mut total = Complex64::new(0.0, 0.0);
        let p = &self.pattern;
        for i in 0..p.n() {
            for (pos, &j) in p.row_range(i).zip(p.row(i)) {
                let s = mu_inv * self.stiffness.values()[pos] + I * omega * ms.values()[pos];
                total += s * u[j] * v[i].conj();
            }
        }
        total
    }

    /// Nodal dual of `2 Re[i omega (h A, Z)]`: entry `k` is the derivative of
    /// that pairing with respect to the nodal value `h_k`.
    pub fn sensitivity_dual(&self, omega: f64, a: &[Complex64], z: &[Complex64], out: &mut [f64]) {
        for e in &self.elements {
            let av = e.nodes.map(|i| a[i]);
            let zv = e.nodes.map(|i| z[i].conj());
            let sa = av[0] + av[1] + av[2];
            let sz = zv[0] + zv[1] + zv[2];
            let saz = av[0] * zv[0] + av[1] * zv[1] + av[2] * zv[2];
            for k in 0..3 {
                let s = sa * sz + zv[k] * sa + av[k] * sz + saz + 2.0 * av[k] * zv[k];
                let v = I * omega * s * (e.area / 60.0);
                out[e.nodes[k]] += 2.0 * v.re;
            }
        }
    }

    /// Solves `(a K + b M) u = rhs`, with boundary rows replaced by `u = 0`
    /// when `zero_boundary` is set.
    pub fn h1_projection(
        &self,
        rhs: &[f64],
        zero_boundary: bool,
        form: ProjectionForm,
    ) -> Result<RealField> {
        if rhs.len() != self.n() {
            return Err(Error::IndexMismatch(format!(
                "projection rhs has {} entries, mesh has {} nodes",
                rhs.len(),
                self.n()
            )));
        }
        let mut b = rhs.to_vec();
        if zero_boundary {
            for (v, &f) in b.iter_mut().zip(&self.fixed) {
                if f {
                    *v = 0.0;
                }
            }
        }
        let x = if form == ProjectionForm::MASS {
            let (m, f) = if zero_boundary {
                (&self.mass0, &self.mass0_factor)
            } else {
                (&self.mass, &self.mass_factor)
            };
            solve_checked(m, f, &b, SOLVE_RTOL)?
        } else {
            let values = self
                .stiffness
                .values()
                .iter()
                .zip(self.mass.values())
                .map(|(&k, &m)| form.stiffness * k + form.mass * m)
                .collect();
            let mut a = CsrMatrix::from_values(Arc::clone(&self.pattern), values);
            if zero_boundary {
                a.eliminate(&self.fixed);
            }
            let f = a.factor()?;
            solve_checked(&a, &f, &b, SOLVE_RTOL)?
        };
        let mut x = RealField::from_vec(x);
        if zero_boundary {
            for (v, &f) in x.values_mut().iter_mut().zip(&self.fixed) {
                if f {
                    *v = 0.0;
                }
            }
        }
        Ok(x)
    }

    /// `M^{-1} g`: the L2 Riesz representer of a nodal dual vector.
    pub fn riesz(&self, dual: &[f64]) -> Result<RealField> {
        self.h1_projection(dual, false, ProjectionForm::MASS)
    }

    pub fn mass_apply(&self, v: &[f64]) -> Vec<f64> {
        self.mass.matvec(v)
    }

    /// `u^T M v`.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass.matvec(v).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.l2_inner(u, u).max(0.0).sqrt()
    }

    pub fn l2_norm_complex(&self, u: &[Complex64]) -> f64 {
        let re: Vec<f64> = u.iter().map(|v| v.re).collect();
        let im: Vec<f64> = u.iter().map(|v| v.im).collect();
        (self.l2_inner(&re, &re) + self.l2_inner(&im, &im))
            .max(0.0)
            .sqrt()
    }

    /// Gradient of a P1 field on each triangle.
    pub fn element_gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        self.elements
            .iter()
            .map(|e| {
                let mut g = [0.0; 2];
                for a in 0..3 {
                    g[0] += u[e.nodes[a]] * e.grads[a][0];
                    g[1] += u[e.nodes[a]] * e.grads[a][1];
                }
                g
            })
            .collect()
    }

    /// Triangle areas, in mesh order.
    pub fn element_areas(&self) -> Vec<f64> {
        self.elements.iter().map(|e| e.area).collect()
    }

    /// Adds `sum_t c_t (grad u, grad phi_k)_t` to `out` given per-triangle
    /// coefficients.
    pub fn weighted_stiffness_apply(&self, coeff: &[f64], u: &[f64], out: &mut [f64]) {
        for (e, &c) in self.elements.iter().zip(coeff) {
            let mut g = [0.0; 2];
            for a in 0..3 {
                g[0] += u[e.nodes[a]] * e.grads[a][0];
                g[1] += u[e.nodes[a]] * e.grads[a][1];
            }
            for k in 0..3 {
                out[e.nodes[k]] += c * e.area * (g[0] * e.grads[k][0] + g[1] * e.grads[k][1]);
            }
        }
    }

    /// Element stiffness matrix of triangle `t`.
    pub fn element_stiffness(&self, t: usize) -> [[f64; 3]; 3] {
        let e = &self.elements[t];
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] = e.area * (e.grads[a][0] * e.grads[b][0] + e.grads[a][1] * e.grads[b][1]);
            }
        }
        k
    }

    /// Exact `int sigma lambda_a lambda_b` weights of triangle `t` for the
    /// node `k` of the P1 sigma basis.
    pub fn element_cubic_weight(&self, t: usize, k: usize, a: usize, b: usize) -> f64 {
        self.elements[t].area * cubic_weight(k, a, b)
    }
}

fn mass_apply(m: &CsrMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let p = m.pattern();
    (0..p.n())
        .map(|i| {
            p.row_range(i)
                .zip(p.row(i))
                .map(|(k, &j)| x[j] * m.values()[k])
                .sum()
        })
        .collect()
}
