//! Numerical self-checks: finite-difference gradient tests, a manufactured
//! solution, algebraic symmetries and regularizer bounds.
//!
//! Each check reports a measured value against a tolerance. The suite also
//! runs a negative control (a sign-flipped gradient must fail the
//! finite-difference test) so that a vacuous oracle shows up as a failure.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{FemSpace, RealField};
use crate::forward::{make_synthetic_measurements, ExcitationPlan, ForwardModel, MeasurementSet};
use crate::mesh::{build_disk_mesh, indicator_field, PhantomSpec, Primitive};
use crate::reg::{
    objective_and_gradients, reg_value, reg_w, smoothed_tv, surrogate_reg_value, ContinuationState,
    RegParams,
};
use crate::{Complex64, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance bound, e.g. `< 1e-4`.
    pub bound: String,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {}: {:.3e} (required {})",
            self.name, self.value, self.bound
        )
    }
}

fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: format!("< {tolerance:e}"),
        passed: value < tolerance,
    }
}

fn at_least(name: impl Into<String>, value: f64, lo: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: format!(">= {lo:e}"),
        passed: value >= lo,
    }
}

fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Check {
    Check {
        name: name.into(),
        value,
        bound: format!("in [{lo}, {hi}]"),
        passed: (lo..=hi).contains(&value),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.checks {
            writeln!(w, "{c}")?;
        }
        let bad = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(w, "{} checks, {bad} failed", self.checks.len())?;
        Ok(())
    }
}

/// Small inverse problem used by the gradient checks.
pub struct GradientFixture {
    pub model: ForwardModel,
    pub data: MeasurementSet,
    pub params: RegParams,
}

impl GradientFixture {
    pub fn new() -> Result<Self> {
        let mesh = build_disk_mesh(1.0, 0.15, 8)?;
        let h = mesh.h();
        let space = Arc::new(FemSpace::new(mesh)?);
        let plan = ExcitationPlan::new(vec![1.0, 2.0], vec![0, 3, 5], vec![1.0; 3])?;
        let model = ForwardModel::new(space, 1.0, 1.0, plan)?;
        let phantom = PhantomSpec::new(
            vec![Primitive::Disk {
                center: [0.3, -0.2],
                radius: 0.35,
            }],
            20.0,
            2.0,
        );
        let data = make_synthetic_measurements(&model, &phantom, model.space.mesh(), 0.01, 4)?;
        let params = RegParams::with_mesh_size(1e-3, 1e-3, 20.0, 2.0, h);
        Ok(GradientFixture {
            model,
            data,
            params,
        })
    }

    /// A state whose zero level set lies inside the domain.
    pub fn state(&self, lambda: f64) -> Result<ContinuationState> {
        let nodes = self.model.space.mesh().nodes();
        let phi = RealField::from_vec(
            nodes
                .iter()
                .map(|p| 0.4 - (p[0] + 0.1).hypot(p[1] - 0.2))
                .collect(),
        );
        let sl2 = RealField::from_vec(nodes.iter().map(|p| 3.0 + p[0] - 0.5 * p[1]).collect());
        ContinuationState::new(phi, sl2, lambda, &self.params)
    }

    fn surrogate_total(&self, st: &ContinuationState) -> Result<f64> {
        Ok(self.model.fidelity_of(st.sigma(), &self.data)?
            + surrogate_reg_value(&self.model.space, st, &self.params))
    }

    /// Random direction vanishing on the boundary.
    fn interior_direction(&self, rng: &mut ChaCha8Rng) -> RealField {
        let mesh = self.model.space.mesh();
        RealField::from_vec(
            (0..mesh.n_nodes())
                .map(|i| {
                    if mesh.is_boundary(i) {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect(),
        )
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Largest relative mismatch between the adjoint fidelity derivative
/// (scaled by `sign`) and central differences over five directions.
pub fn fidelity_gradient_error(fx: &GradientFixture, sign: f64) -> Result<f64> {
    let space = &fx.model.space;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma = RealField::from_vec(
        space
            .mesh()
            .nodes()
            .iter()
            .map(|p| 5.0 + 3.0 * p[0] * p[1])
            .collect(),
    );
    let sol = fx.model.impedance_map(&sigma)?;
    let g = fx.model.fidelity_gradient(&sol, &fx.data)?;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let h = RealField::from_vec(
            (0..space.n())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        );
        let t = 1e-4 * space.l2_norm(sigma.values()) / space.l2_norm(h.values());
        let fp = fx.model.fidelity_of(&sigma.axpy(t, &h), &fx.data)?;
        let fm = fx.model.fidelity_of(&sigma.axpy(-t, &h), &fx.data)?;
        let fd = (fp - fm) / (2.0 * t);
        let ad: f64 = sign
            * g.dual
                .iter()
                .zip(h.values())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        worst = worst.max(rel(ad, fd));
    }
    Ok(worst)
}

/// Largest relative mismatch of the `(phi, sigma_l2)` gradients at
/// `lambda` against central differences of the surrogate objective.
pub fn total_gradient_error(fx: &GradientFixture, lambda: f64) -> Result<f64> {
    let space = &fx.model.space;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let st = fx.state(lambda)?;
    let (_, g) = objective_and_gradients(&fx.model, &st, &fx.params, &fx.data)?;
    let zero = RealField::constant(space.n(), 0.0);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let h = fx.interior_direction(&mut rng);
        if lambda > 0.0 {
            let t = 1e-5 * space.l2_norm(st.phi().values()) / space.l2_norm(h.values());
            let fp = fx.surrogate_total(&st.stepped(-t, &h, &zero, &fx.params))?;
            let fm = fx.surrogate_total(&st.stepped(t, &h, &zero, &fx.params))?;
            worst = worst.max(rel(
                space.l2_inner(g.phi.values(), h.values()),
                (fp - fm) / (2.0 * t),
            ));
        }
        if lambda < 1.0 {
            let t = 1e-4 * space.l2_norm(st.sigma_l2().values()) / space.l2_norm(h.values());
            let fp = fx.surrogate_total(&st.stepped(-t, &zero, &h, &fx.params))?;
            let fm = fx.surrogate_total(&st.stepped(t, &zero, &h, &fx.params))?;
            worst = worst.max(rel(
                space.l2_inner(g.sigma_l2.values(), h.values()),
                (fp - fm) / (2.0 * t),
            ));
        }
    }
    Ok(worst)
}

/// L2 errors of the P1 solution for `A = x^2 + i y^2` with `sigma = 1 + x^2`
/// on a sequence of meshes.
pub fn manufactured_errors(hs: &[f64]) -> Result<Vec<f64>> {
    let exact = |p: [f64; 2]| Complex64::new(p[0] * p[0], p[1] * p[1]);
    let sigma = |p: [f64; 2]| 1.0 + p[0] * p[0];
    let i = Complex64::i();
    hs.iter()
        .map(|&h| {
            let space = FemSpace::new(build_disk_mesh(1.0, h, 4)?)?;
            let s = RealField::from_vec(space.mesh().nodes().iter().map(|&p| sigma(p)).collect());
            let mut sys = space.assemble_system(1.0, 1.0, &s)?;
            space.add_volume_source(&mut sys, |p| {
                Complex64::new(-2.0, -2.0) + i * sigma(p) * exact(p)
            });
            space.add_boundary_flux(&mut sys, |p, n| {
                Complex64::new(2.0 * p[0] * n[0], 2.0 * p[1] * n[1])
            });
            let u = sys.solve()?;
            let diff: Vec<Complex64> = u
                .values()
                .iter()
                .zip(space.mesh().nodes())
                .map(|(v, &p)| v - exact(p))
                .collect();
            Ok(space.l2_norm_complex(&diff))
        })
        .collect()
}

/// Largest `|S_ij - S_ji|` of an assembled system, relative to its largest
/// entry.
pub fn system_asymmetry() -> Result<f64> {
    let space = FemSpace::new(build_disk_mesh(1.0, 0.2, 6)?)?;
    let sigma = RealField::from_vec(
        space
            .mesh()
            .nodes()
            .iter()
            .map(|p| 2.0 + p[0] - p[1] * p[1])
            .collect(),
    );
    let sys = space.assemble_system(0.7, 3.0, &sigma)?;
    let m = &sys.matrix;
    let scale = m.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..m.n() {
        for &j in m.pattern().row(i) {
            worst = worst.max((m.get(i, j) - m.get(j, i)).norm());
        }
    }
    Ok(worst / scale)
}

/// Relative residual of `conj(S) z = b` solved through the factor of `S`,
/// as the adjoint problem is.
pub fn adjoint_consistency() -> Result<f64> {
    let space = FemSpace::new(build_disk_mesh(1.0, 0.2, 6)?)?;
    let sigma = RealField::constant(space.n(), 4.0);
    let sys = space.assemble_system(1.0, 2.0, &sigma)?;
    let factor = sys.factor()?;
    let b: Vec<Complex64> = (0..space.n())
        .map(|k| Complex64::new((k as f64).sin(), (0.5 * k as f64).cos()))
        .collect();
    let z = factor.solve_conj(&b)?;
    // Residual of conj(S) z = b, computed with conj(S z_bar).
    let zc: Vec<Complex64> = z.values().iter().map(|v| v.conj()).collect();
    let r: Vec<Complex64> = sys
        .matrix
        .matvec(&zc)
        .iter()
        .zip(&b)
        .map(|(a, b)| a.conj() - b)
        .collect();
    let num = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let den = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Worst relative violation of `R_W(w) >= |w|^2_W` over `n` random fields.
pub fn coercivity_violation(n: usize) -> Result<f64> {
    let space = FemSpace::new(build_disk_mesh(1.0, 0.2, 6)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let w: Vec<f64> = (0..space.n())
            .map(|_| rng.random_range(-10.0..10.0))
            .collect();
        let norm2 = space.l2_norm(&w).powi(2);
        worst = worst.max((norm2 - reg_w(&space, &w)) / norm2);
    }
    Ok(worst)
}

/// Smoothed TV of a sharp disk of radius 0.5 over `jump * perimeter`, at
/// `eps = h^2`, plus the value of the full `lambda = 1` regularizer.
pub fn sharp_disk_tv(target_h: f64) -> Result<(f64, f64)> {
    let mesh = build_disk_mesh(1.0, target_h, 4)?;
    let eps = mesh.h().powi(2);
    let disk = PhantomSpec::new(
        vec![Primitive::Disk {
            center: [0.05, -0.1],
            radius: 0.5,
        }],
        20.0,
        2.0,
    );
    let s = indicator_field(&mesh, &disk);
    let space = FemSpace::new(mesh)?;
    let ratio = smoothed_tv(&space, s.values(), eps) / (18.0 * PI);
    let params = RegParams::with_mesh_size(1.0, 1.0, 20.0, 2.0, space.mesh().h());
    let phi = crate::mesh::signed_distance_field(space.mesh(), &disk);
    let st = ContinuationState::new(phi, RealField::constant(space.n(), 1.0), 1.0, &params)?;
    Ok((ratio, reg_value(&space, &st, &params)))
}

/// Runs every check. Never fails on a numerical mismatch; only on I/O or
/// solver errors.
pub fn run_all() -> Result<Report> {
    let mut checks = Vec::new();
    let fx = GradientFixture::new()?;
    checks.push(below(
        "fidelity gradient vs central differences (max rel err)",
        fidelity_gradient_error(&fx, 1.0)?,
        1e-4,
    ));
    for lambda in [0.0, 0.5, 1.0] {
        checks.push(below(
            format!("objective gradient vs central differences at lambda {lambda} (max rel err)"),
            total_gradient_error(&fx, lambda)?,
            1e-3,
        ));
    }
    checks.push(at_least(
        "negative control: sign-flipped gradient is rejected (max rel err)",
        fidelity_gradient_error(&fx, -1.0)?,
        1e-4,
    ));
    let e = manufactured_errors(&[0.2, 0.1, 0.05])?;
    for (k, w) in e.windows(2).enumerate() {
        checks.push(within(
            format!("manufactured solution L2 error ratio, refinement {}", k + 1),
            w[0] / w[1],
            3.5,
            4.5,
        ));
    }
    checks.push(below(
        "complex symmetry of the system matrix",
        system_asymmetry()?,
        1e-14,
    ));
    checks.push(below(
        "adjoint solve residual",
        adjoint_consistency()?,
        1e-10,
    ));
    checks.push(below(
        "R_W coercivity violation over 100 fields",
        coercivity_violation(100)?,
        1e-12,
    ));
    let (ratio, r) = sharp_disk_tv(0.025)?;
    checks.push(below(
        "sharp disk smoothed TV / (jump * perimeter) - 1",
        (ratio - 1.0).abs(),
        0.1,
    ));
    checks.push(at_least("smoothed BV regularizer value", r, 0.0));
    Ok(Report { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_control_is_detected() {
        let fx = GradientFixture::new().unwrap();
        assert!(fidelity_gradient_error(&fx, 1.0).unwrap() < 1e-4);
        assert!(fidelity_gradient_error(&fx, -1.0).unwrap() > 1.0);
    }

    #[test]
    fn report_lines() {
        let r = Report {
            checks: vec![below("a", 1e-6, 1e-4), within("b", 5.0, 3.5, 4.5)],
        };
        let mut out = Vec::new();
        r.write(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with(
            "PASS a: 1.000e-6 (required < 1e-4)\nFAIL b: 5.000e0 (required in [3.5, 4.5])"
        ));
        assert!(s.ends_with("2 checks, 1 failed\n"));
        assert!(!r.passed());
    }
}
