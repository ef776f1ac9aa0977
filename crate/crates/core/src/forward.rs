//! Impedance map, multi-frequency fidelity and its adjoint-based gradient.
//!
//! The state `A` for frequency `omega` and coil `e` solves
//! `(mu_inv grad A, grad v) + (i omega sigma A, v) = <e, v>_Gamma`; the
//! measured quantity is its boundary trace. With `S` the complex-symmetric
//! system matrix and `B` the boundary mass, the fidelity is
//! `sum |A|_Gamma - m|^2_B` and the adjoint `Z` solves `conj(S) Z = -B r`.
//! The derivative of the fidelity in direction `h` is then
//! `2 Re[i omega (h A, Z)]` summed over all pairs.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::io::{parse_value, LineReader};
use crate::fem::{BoundaryTrace, ComplexField, FemSpace, RealField, SystemFactor};
use crate::mesh::{indicator_field, Mesh, PhantomSpec};
use crate::{Error, Result};

/// Frequencies and coils probed by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationPlan {
    omegas: Vec<f64>,
    coils: Vec<usize>,
    amplitudes: Vec<f64>,
}

/// `2 pi 2^(15 + i)` for `i = 0..n`.
pub fn standard_omegas(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 2.0 * PI * 2f64.powi(15 + i as i32))
        .collect()
}

impl ExcitationPlan {
    pub fn new(omegas: Vec<f64>, coils: Vec<usize>, amplitudes: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() || coils.is_empty() {
            return Err(Error::InvalidArgument(
                "plan needs at least one frequency and one coil".into(),
            ));
        }
        if let Some(w) = omegas.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "frequencies must be positive, got {w}"
            )));
        }
        for (i, w) in omegas.iter().enumerate() {
            if omegas[..i].contains(w) {
                return Err(Error::InvalidArgument(format!("duplicate frequency {w}")));
            }
        }
        if amplitudes.len() != coils.len() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for {} coils",
                amplitudes.len(),
                coils.len()
            )));
        }
        for (i, c) in coils.iter().enumerate() {
            if coils[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate coil {c}")));
            }
        }
        Ok(ExcitationPlan {
            omegas,
            coils,
            amplitudes,
        })
    }

    /// `n_omega` frequencies `2 pi 2^(15+i)`, coils `0..n_coils`, unit
    /// amplitudes.
    pub fn standard(n_omega: usize, n_coils: usize) -> Result<Self> {
        ExcitationPlan::new(
            standard_omegas(n_omega),
            (0..n_coils).collect(),
            vec![1.0; n_coils],
        )
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn coils(&self) -> &[usize] {
        &self.coils
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn n_pairs(&self) -> usize {
        self.omegas.len() * self.coils.len()
    }

    /// `(omega index, coil index)` in the fixed reduction order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nc = self.coils.len();
        (0..self.n_pairs()).map(move |p| (p / nc, p % nc))
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Result<Self> {
        self.amplitudes = amplitudes;
        ExcitationPlan::new(self.omegas, self.coils, self.amplitudes)
    }
}

/// Boundary data indexed by `(omega, coil)`, stored row-major in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub omegas: Vec<f64>,
    pub coils: Vec<usize>,
    pub traces: Vec<BoundaryTrace>,
    pub rho: f64,
    pub seed: u64,
}

impl MeasurementSet {
    pub fn get(&self, iw: usize, ic: usize) -> &BoundaryTrace {
        &self.traces[iw * self.coils.len() + ic]
    }

    pub fn n_boundary(&self) -> usize {
        self.traces.first().map_or(0, BoundaryTrace::len)
    }

    pub fn check_plan(&self, plan: &ExcitationPlan) -> Result<()> {
        if self.omegas != plan.omegas() || self.coils != plan.coils() {
            return Err(Error::IndexMismatch(format!(
                "measurements cover {} frequencies x {} coils, plan has {} x {}",
                self.omegas.len(),
                self.coils.len(),
                plan.omegas().len(),
                plan.coils().len()
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# tscm-measurements v1")?;
        writeln!(
            w,
            "omegas {} coils {} nodes {} seed {} rho {}",
            self.omegas.len(),
            self.coils.len(),
            self.n_boundary(),
            self.seed,
            self.rho
        )?;
        let join = |v: Vec<String>| v.join(" ");
        writeln!(
            w,
            "omega_values {}",
            join(self.omegas.iter().map(|x| x.to_string()).collect())
        )?;
        writeln!(
            w,
            "coil_labels {}",
            join(self.coils.iter().map(|x| x.to_string()).collect())
        )?;
        for t in &self.traces {
            for v in t.values() {
                writeln!(w, "{} {}", v.re, v.im)?;
            }
        }
        Ok(())
    }

    /// Reads a measurement file recorded on `mesh`'s boundary.
    pub fn read<R: BufRead>(mesh: &Mesh, r: R) -> Result<Self> {
        let mut lr = LineReader::new(r);
        lr.expect_version("# tscm-measurements v1")?;
        let (no, header) = lr.next_line()?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        let keys = ["omegas", "coils", "nodes", "seed", "rho"];
        if tok.len() != 10 || (0..5).any(|k| tok[2 * k] != keys[k]) {
            return Err(Error::parse(
                no,
                "expected 'omegas K coils C nodes B seed S rho R'",
            ));
        }
        let k: usize = parse_value(no, tok[1])?;
        let c: usize = parse_value(no, tok[3])?;
        let b: usize = parse_value(no, tok[5])?;
        let seed: u64 = parse_value(no, tok[7])?;
        let rho: f64 = parse_value(no, tok[9])?;
        if b != mesh.n_boundary() {
            return Err(Error::IndexMismatch(format!(
                "file has {b} boundary nodes, mesh has {}",
                mesh.n_boundary()
            )));
        }
        let labeled = |lr: &mut LineReader<R>, key: &str, n: usize| -> Result<Vec<String>> {
            let (no, line) = lr.next_line()?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::parse(no, format!("expected '{key}'")));
            }
            let v: Vec<String> = it.map(str::to_string).collect();
            if v.len() != n {
                return Err(Error::parse(
                    no,
                    format!("expected {n} values after '{key}'"),
                ));
            }
            Ok(v)
        };
        let (wno, omegas) = (lr.line() + 1, labeled(&mut lr, "omega_values", k)?);
        let omegas = omegas
            .iter()
            .map(|s| parse_value(wno, s))
            .collect::<Result<Vec<f64>>>()?;
        let (cno, coils) = (lr.line() + 1, labeled(&mut lr, "coil_labels", c)?);
        let coils = coils
            .iter()
            .map(|s| parse_value(cno, s))
            .collect::<Result<Vec<usize>>>()?;
        let lengths = mesh.boundary_edge_lengths();
        let mut traces = Vec::with_capacity(k * c);
        for _ in 0..k * c {
            let mut values = Vec::with_capacity(b);
            for _ in 0..b {
                let [re, im] = lr.parse_fixed::<f64, 2>()?;
                values.push(Complex64::new(re, im));
            }
            traces.push(BoundaryTrace::new(values, lengths.clone()));
        }
        if let Some((no, _)) = lr.next_opt()? {
            return Err(Error::parse(no, "unexpected trailing data"));
        }
        Ok(MeasurementSet {
            omegas,
            coils,
            traces,
            rho,
            seed,
        })
    }
}

/// Physical constants of the eddy-current model on a fixed FEM space.
///
/// Frequencies of the plan are multiplied by `omega_scale` before entering
/// the system matrix, which lets a nondimensional model reuse the
/// physical frequency ladder.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub space: Arc<FemSpace>,
    pub mu_inv: f64,
    pub omega_scale: f64,
    pub plan: ExcitationPlan,
}

/// States and traces for every `(omega, coil)` pair of a plan.
#[derive(Debug)]
pub struct ForwardSolution {
    pub factors: Vec<SystemFactor>,
    pub fields: Vec<ComplexField>,
    pub traces: Vec<BoundaryTrace>,
}

/// Value and nodal dual of the fidelity gradient in `sigma`.
#[derive(Debug, Clone)]
pub struct FidelityGradient {
    pub value: f64,
    /// Entry `k` is `dF/dsigma_k` for the P1 nodal value `sigma_k`.
    pub dual: Vec<f64>,
    pub adjoints: Vec<ComplexField>,
}

impl ForwardModel {
    pub fn new(
        space: Arc<FemSpace>,
        mu_inv: f64,
        omega_scale: f64,
        plan: ExcitationPlan,
    ) -> Result<Self> {
        if !(mu_inv > 0.0 && mu_inv.is_finite()) || !(omega_scale > 0.0 && omega_scale.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "mu_inv and omega_scale must be positive, got {mu_inv} and {omega_scale}"
            )));
        }
        if let Some(&c) = plan.coils().iter().find(|&&c| c >= space.mesh().n_arcs()) {
            return Err(Error::UnknownArc {
                label: c,
                n_arcs: space.mesh().n_arcs(),
            });
        }
        Ok(ForwardModel {
            space,
            mu_inv,
            omega_scale,
            plan,
        })
    }

    pub fn effective_omega(&self, iw: usize) -> f64 {
        self.plan.omegas()[iw] * self.omega_scale
    }

    fn pair_error(&self, p: usize, e: Error) -> Error {
        let nc = self.plan.coils().len();
        Error::Forward {
            omega: self.plan.omegas()[p / nc],
            coil: self.plan.coils()[p % nc],
            source: Box::new(e),
        }
    }

    /// Solves every `(omega, coil)` problem; one factorization per frequency.
    pub fn impedance_map(&self, sigma: &RealField) -> Result<ForwardSolution> {
        let space = &self.space;
        let nw = self.plan.omegas().len();
        let factors = (0..nw)
            .into_par_iter()
            .map(|iw| {
                space
                    .assemble_system(self.mu_inv, self.effective_omega(iw), sigma)
                    .and_then(|s| s.factor())
                    .map_err(|e| match e {
                        Error::NonPositiveSigma { .. } | Error::IndexMismatch(_) => e,
                        e => self.pair_error(iw * self.plan.coils().len(), e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let rhs = self
            .plan
            .coils()
            .iter()
            .zip(self.plan.amplitudes())
            .map(|(&c, &a)| {
                space.neumann_rhs(c, a).map(|f| {
                    f.into_iter()
                        .map(|v| Complex64::new(v, 0.0))
                        .collect::<Vec<_>>()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let nc = self.plan.coils().len();
        let fields = (0..self.plan.n_pairs())
            .into_par_iter()
            .map(|p| {
                factors[p / nc]
                    .solve(&rhs[p % nc])
                    .map_err(|e| self.pair_error(p, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let traces = fields.iter().map(|a| space.boundary_trace(a)).collect();
        Ok(ForwardSolution {
            factors,
            fields,
            traces,
        })
    }

    pub fn traces(&self, sigma: &RealField) -> Result<Vec<BoundaryTrace>> {
        Ok(self.impedance_map(sigma)?.traces)
    }

    pub fn fidelity_of(&self, sigma: &RealField, data: &MeasurementSet) -> Result<f64> {
        data.check_plan(&self.plan)?;
        fidelity(&self.traces(sigma)?, data)
    }

    /// Fidelity, its adjoint states and the nodal dual of its gradient.
    pub fn fidelity_gradient(
        &self,
        sol: &ForwardSolution,
        data: &MeasurementSet,
    ) -> Result<FidelityGradient> {
        data.check_plan(&self.plan)?;
        let value = fidelity(&sol.traces, data)?;
        let nc = self.plan.coils().len();
        let space = &self.space;
        let per_pair = (0..self.plan.n_pairs())
            .into_par_iter()
            .map(|p| {
                let r = sol.traces[p].sub(&data.traces[p])?;
                let z = space
                    .solve_adjoint(&sol.factors[p / nc], &r)
                    .map_err(|e| self.pair_error(p, e))?;
                let mut dual = vec![0.0; space.n()];
                space.sensitivity_dual(
                    self.effective_omega(p / nc),
                    sol.fields[p].values(),
                    z.values(),
                    &mut dual,
                );
                Ok((z, dual))
            })
            .collect::<Result<Vec<_>>>()?;
        // Sequential reduction in plan order keeps results independent of
        // the worker count.
        let mut dual = vec![0.0; space.n()];
        let mut adjoints = Vec::with_capacity(per_pair.len());
        for (z, d) in per_pair {
            for (acc, v) in dual.iter_mut().zip(d) {
                *acc += v;
            }
            adjoints.push(z);
        }
        Ok(FidelityGradient {
            value,
            dual,
            adjoints,
        })
    }

    /// L2 representer of the fidelity gradient, `M^{-1} dual`.
    pub fn grad_fidelity_sigma(
        &self,
        sigma: &RealField,
        data: &MeasurementSet,
    ) -> Result<(f64, RealField)> {
        let sol = self.impedance_map(sigma)?;
        let g = self.fidelity_gradient(&sol, data)?;
        Ok((g.value, self.space.riesz(&g.dual)?))
    }

    /// Noise-free traces for the phantom's exact conductivity.
    pub fn clean_measurements(&self, phantom: &PhantomSpec) -> Result<MeasurementSet> {
        let sigma = indicator_field(self.space.mesh(), phantom);
        Ok(MeasurementSet {
            omegas: self.plan.omegas().to_vec(),
            coils: self.plan.coils().to_vec(),
            traces: self.traces(&sigma)?,
            rho: 0.0,
            seed: 0,
        })
    }
}

/// `sum over pairs of int_Gamma |trace - m|^2`.
pub fn fidelity(traces: &[BoundaryTrace], data: &MeasurementSet) -> Result<f64> {
    if traces.len() != data.traces.len() {
        return Err(Error::IndexMismatch(format!(
            "{} traces against {} measurements",
            traces.len(),
            data.traces.len()
        )));
    }
    traces
        .iter()
        .zip(&data.traces)
        .map(|(t, m)| t.sub(m).map(|r| r.norm_sqr()))
        .sum()
}

/// Adds complex Gaussian noise of relative level `rho` to every trace.
///
/// Each nodal value receives `s (g_re + i g_im)` with standard normal `g`
/// and `s = rho |clean| / sqrt(2 |Gamma|)`, so the expected squared noise
/// norm under the trapezoid rule is `rho^2 |clean|^2`.
pub fn add_noise(clean: &MeasurementSet, rho: f64, seed: u64) -> Result<MeasurementSet> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be >= 0, got {rho}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = clean.clone();
    out.rho = rho;
    out.seed = seed;
    if rho == 0.0 {
        return Ok(out);
    }
    for t in &mut out.traces {
        let perimeter: f64 = t.edge_lengths().iter().sum();
        let s = rho * t.norm() / (2.0 * perimeter).sqrt();
        for v in t.values_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(re, im) * s;
        }
    }
    Ok(out)
}

fn boundary_angles(mesh: &Mesh) -> Vec<f64> {
    let nodes = mesh.nodes();
    let bn = mesh.boundary_nodes();
    let start = nodes[bn[0]][1].atan2(nodes[bn[0]][0]);
    let mut prev = start;
    let mut acc = 0.0;
    bn.iter()
        .map(|&i| {
            let a = nodes[i][1].atan2(nodes[i][0]);
            let mut d = a - prev;
            while d < -PI {
                d += 2.0 * PI;
            }
            while d > PI {
                d -= 2.0 * PI;
            }
            acc += d;
            prev = a;
            start + acc
        })
        .collect()
}

/// Interpolates traces recorded on one disk mesh's boundary to another's,
/// linearly in the polar angle.
pub fn resample_traces(data: &MeasurementSet, from: &Mesh, to: &Mesh) -> MeasurementSet {
    let src = boundary_angles(from);
    let n = src.len();
    let theta0 = src[0];
    let dst: Vec<f64> = to
        .boundary_nodes()
        .iter()
        .map(|&i| {
            let p = to.nodes()[i];
            (p[1].atan2(p[0]) - theta0).rem_euclid(2.0 * PI) + theta0
        })
        .collect();
    let lengths = to.boundary_edge_lengths();
    let traces = data
        .traces
        .iter()
        .map(|t| {
            let v = t.values();
            let values = dst
                .iter()
                .map(|&th| {
                    let k = src.partition_point(|&a| a <= th).max(1) - 1;
                    let (a0, a1) = (
                        src[k],
                        if k + 1 < n {
                            src[k + 1]
                        } else {
                            theta0 + 2.0 * PI
                        },
                    );
                    let w = ((th - a0) / (a1 - a0)).clamp(0.0, 1.0);
                    v[k] * (1.0 - w) + v[(k + 1) % n] * w
                })
                .collect();
            BoundaryTrace::new(values, lengths.clone())
        })
        .collect();
    MeasurementSet {
        traces,
        ..data.clone()
    }
}

/// Synthetic data: solve on `model`'s mesh for the exact phantom, resample
/// to `target` if it is a different mesh, then add noise.
pub fn make_synthetic_measurements(
    model: &ForwardModel,
    phantom: &PhantomSpec,
    target: &Mesh,
    rho: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    let clean = model.clean_measurements(phantom)?;
    let clean = if model.space.mesh() == target {
        clean
    } else {
        resample_traces(&clean, model.space.mesh(), target)
    };
    add_noise(&clean, rho, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{DiskMeshBuilder, Primitive};

    fn model(h: f64, n_arcs: usize, plan: ExcitationPlan) -> ForwardModel {
        let mesh = DiskMeshBuilder::new(1.0, h, n_arcs)
            .symmetric(true)
            .build()
            .unwrap();
        ForwardModel::new(Arc::new(FemSpace::new(mesh).unwrap()), 1.0, 1.0, plan).unwrap()
    }

    #[test]
    fn standard_frequencies() {
        let p = ExcitationPlan::standard(4, 28).unwrap();
        let f: Vec<f64> = p.omegas().iter().map(|w| w / (2.0 * PI)).collect();
        assert_eq!(f, vec![32768.0, 65536.0, 131072.0, 262144.0]);
        assert!(p.amplitudes().iter().all(|&a| a == 1.0));
        assert!(ExcitationPlan::new(vec![1.0, 1.0], vec![0], vec![1.0]).is_err());
        assert!(ExcitationPlan::new(vec![-1.0], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn rotated_coils_give_shifted_traces() {
        let n_arcs = 8;
        let plan =
            ExcitationPlan::new(vec![0.3], (0..n_arcs).collect(), vec![1.0; n_arcs]).unwrap();
        let m = model(0.2, n_arcs, plan);
        let sigma = RealField::constant(m.space.n(), 2.0);
        let traces = m.traces(&sigma).unwrap();
        let nb = traces[0].len();
        let shift = nb / n_arcs;
        for k in 1..n_arcs {
            for i in 0..nb {
                let a = traces[k].values()[(i + k * shift) % nb];
                let b = traces[0].values()[i];
                assert!(
                    (a - b).norm() < 1e-10 * b.norm().max(1e-3),
                    "coil {k} node {i}"
                );
            }
        }
    }

    #[test]
    fn doubling_amplitude_doubles_state() {
        let plan = ExcitationPlan::new(vec![0.5], vec![1], vec![1.0]).unwrap();
        let m1 = model(0.25, 4, plan.clone());
        let m2 = ForwardModel {
            plan: plan.with_amplitudes(vec![2.0]).unwrap(),
            ..m1.clone()
        };
        let sigma = RealField::constant(m1.space.n(), 1.0);
        let a = m1.impedance_map(&sigma).unwrap().fields;
        let b = m2.impedance_map(&sigma).unwrap().fields;
        for (x, y) in a[0].values().iter().zip(b[0].values()) {
            assert!((2.0 * x - y).norm() < 1e-12 * y.norm().max(1e-6));
        }
    }

    #[test]
    fn fidelity_zero_on_own_traces_and_constant_offset() {
        let plan = ExcitationPlan::new(vec![0.5], vec![0], vec![1.0]).unwrap();
        let m = model(0.2, 4, plan);
        let sigma = RealField::constant(m.space.n(), 1.0);
        let traces = m.traces(&sigma).unwrap();
        let mut data = MeasurementSet {
            omegas: vec![0.5],
            coils: vec![0],
            traces: traces.clone(),
            rho: 0.0,
            seed: 0,
        };
        assert_eq!(fidelity(&traces, &data).unwrap(), 0.0);
        let c = Complex64::new(0.3, 0.4);
        for v in data.traces[0].values_mut() {
            *v -= c;
        }
        let f = fidelity(&traces, &data).unwrap();
        assert!((f - 0.25 * m.space.mesh().perimeter()).abs() < 1e-12);
        assert!(fidelity(&traces[..0], &data).is_err());
    }

    #[test]
    fn measurement_file_round_trip() {
        let plan = ExcitationPlan::new(vec![0.5, 1.5], vec![0, 2], vec![1.0, 1.0]).unwrap();
        let m = model(0.3, 4, plan);
        let phantom = PhantomSpec::new(
            vec![Primitive::Disk {
                center: [0.2, 0.1],
                radius: 0.3,
            }],
            20.0,
            2.0,
        );
        let data = make_synthetic_measurements(&m, &phantom, m.space.mesh(), 0.05, 9).unwrap();
        let mut buf = Vec::new();
        data.write(&mut buf).unwrap();
        let back = MeasurementSet::read(m.space.mesh(), &buf[..]).unwrap();
        assert_eq!(back, data);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(buf, again);
        let cut = &buf[..buf.len() / 2];
        match MeasurementSet::read(m.space.mesh(), cut) {
            Err(Error::Parse { line, .. }) => assert!(line > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn resampling_identity_and_smooth_function() {
        let coarse = DiskMeshBuilder::new(1.0, 0.2, 4).build().unwrap();
        let fine = DiskMeshBuilder::new(1.0, 0.1, 4).build().unwrap();
        let trace_of = |mesh: &Mesh| {
            let v = mesh
                .boundary_nodes()
                .iter()
                .map(|&i| {
                    let p = mesh.nodes()[i];
                    let t = p[1].atan2(p[0]);
                    Complex64::new(t.cos(), (2.0 * t).sin())
                })
                .collect();
            BoundaryTrace::new(v, mesh.boundary_edge_lengths())
        };
        let data = MeasurementSet {
            omegas: vec![1.0],
            coils: vec![0],
            traces: vec![trace_of(&fine)],
            rho: 0.0,
            seed: 0,
        };
        let same = resample_traces(&data, &fine, &fine);
        for (a, b) in same.traces[0].values().iter().zip(data.traces[0].values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let r = resample_traces(&data, &fine, &coarse);
        let exact = trace_of(&coarse);
        let err = r.traces[0].sub(&exact).unwrap().norm() / exact.norm();
        assert!(err < 0.02, "relative resampling error {err}");
    }
}
