//! Level-set parametrization, the continuation regularizer and the gradient
//! compositions with respect to `phi` and `sigma_l2`.
//!
//! The conductivity is `sigma = lambda sigma_pc(phi) + (1 - lambda) sigma_l2`
//! with `sigma_pc = sigma1 H(phi) + sigma2 (1 - H(phi))` and the smoothed
//! Heaviside `H(x) = atan(x / eps) / pi + 1/2`. The regularizer is
//!
//! `lambda alpha [int sqrt(sigma_pc^2 + eps) + J(sigma_pc)] + (1 - lambda) beta |sigma_l2|^2`
//!
//! with `J(s) = int sqrt(|grad s|^2 + eps)`. Its `sigma_pc` gradient is taken
//! from the surrogate `1/2 |sigma_pc|^2 + J(sigma_pc)`, projected onto fields
//! vanishing on the boundary.

use std::f64::consts::PI;

use crate::fem::{FemSpace, ProjectionForm, RealField};
use crate::forward::{ForwardModel, ForwardSolution, MeasurementSet};
use crate::{Error, Result};

/// Regularization weights and smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub alpha: f64,
    pub beta: f64,
    pub eps_heaviside: f64,
    pub eps_tv: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Project the `sigma_pc` gradient onto fields vanishing on the
    /// boundary.
    pub zero_boundary: bool,
}

impl RegParams {
    /// Default weights with both smoothing parameters set to `h^2`.
    pub fn with_mesh_size(alpha: f64, beta: f64, sigma1: f64, sigma2: f64, h: f64) -> Self {
        RegParams {
            alpha,
            beta,
            eps_heaviside: h * h,
            eps_tv: h * h,
            sigma1,
            sigma2,
            zero_boundary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(
                "alpha and beta must be non-negative".into(),
            ));
        }
        if !(self.eps_heaviside > 0.0 && self.eps_tv > 0.0) {
            return Err(Error::InvalidArgument(
                "smoothing parameters must be positive".into(),
            ));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument(
                "sigma1 and sigma2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn heaviside_eps(phi: f64, eps: f64) -> f64 {
    (phi / eps).atan() / PI + 0.5
}

pub fn delta_eps(phi: f64, eps: f64) -> f64 {
    eps / (PI * (phi * phi + eps * eps))
}

pub fn sigma_pc(phi: &RealField, p: &RegParams) -> RealField {
    phi.map(|x| {
        let h = heaviside_eps(x, p.eps_heaviside);
        p.sigma1 * h + p.sigma2 * (1.0 - h)
    })
}

/// The continuation iterate `(phi, sigma_l2, lambda)` and the derived
/// conductivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationState {
    phi: RealField,
    sigma_l2: RealField,
    lambda: f64,
    sigma_pc: RealField,
    sigma: RealField,
}

impl ContinuationState {
    pub fn new(phi: RealField, sigma_l2: RealField, lambda: f64, p: &RegParams) -> Result<Self> {
        if phi.len() != sigma_l2.len() {
            return Err(Error::IndexMismatch(
                "phi and sigma_l2 differ in length".into(),
            ));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        let spc = sigma_pc(&phi, p);
        let sigma = combine(&spc, &sigma_l2, lambda);
        Ok(ContinuationState {
            phi,
            sigma_l2,
            lambda,
            sigma_pc: spc,
            sigma,
        })
    }

    pub fn phi(&self) -> &RealField {
        &self.phi
    }

    pub fn sigma_l2(&self) -> &RealField {
        &self.sigma_l2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_pc(&self) -> &RealField {
        &self.sigma_pc
    }

    pub fn sigma(&self) -> &RealField {
        &self.sigma
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        self.lambda = lambda;
        self.sigma = combine(&self.sigma_pc, &self.sigma_l2, lambda);
        Ok(())
    }

    /// `(phi - s d_phi, sigma_l2 - s d_l2)` at the same `lambda`.
    pub fn stepped(
        &self,
        s: f64,
        d_phi: &RealField,
        d_l2: &RealField,
        p: &RegParams,
    ) -> ContinuationState {
        self.stepped_projected(s, d_phi, d_l2, p, (f64::NEG_INFINITY, f64::INFINITY))
    }

    /// Like [`stepped`](Self::stepped), with `sigma_l2` clamped to
    /// `bounds = (lo, hi)`.
    pub fn stepped_projected(
        &self,
        s: f64,
        d_phi: &RealField,
        d_l2: &RealField,
        p: &RegParams,
        bounds: (f64, f64),
    ) -> ContinuationState {
        let phi = self.phi.axpy(-s, d_phi);
        let sigma_l2 = self
            .sigma_l2
            .axpy(-s, d_l2)
            .map(|v| v.clamp(bounds.0, bounds.1));
        let spc = sigma_pc(&phi, p);
        let sigma = combine(&spc, &sigma_l2, self.lambda);
        ContinuationState {
            phi,
            sigma_l2,
            lambda: self.lambda,
            sigma_pc: spc,
            sigma,
        }
    }
}

fn combine(spc: &RealField, sl2: &RealField, lambda: f64) -> RealField {
    RealField::from_vec(
        spc.values()
            .iter()
            .zip(sl2.values())
            .map(|(&a, &b)| lambda * a + (1.0 - lambda) * b)
            .collect(),
    )
}

/// `int sqrt(|grad s|^2 + eps)` for the P1 field `s`.
pub fn smoothed_tv(space: &FemSpace, s: &[f64], eps: f64) -> f64 {
    space
        .element_gradients(s)
        .iter()
        .zip(space.element_areas())
        .map(|(g, a)| a * (g[0] * g[0] + g[1] * g[1] + eps).sqrt())
        .sum()
}

/// `int sqrt(s^2 + eps)` by the edge-midpoint rule on the P1 interpolant.
pub fn smoothed_l1(space: &FemSpace, s: &[f64], eps: f64) -> f64 {
    space
        .mesh()
        .triangles()
        .iter()
        .zip(space.element_areas())
        .map(|(t, a)| {
            let f = |i: usize, j: usize| {
                let m = 0.5 * (s[t[i]] + s[t[j]]);
                (m * m + eps).sqrt()
            };
            a / 3.0 * (f(0, 1) + f(1, 2) + f(2, 0))
        })
        .sum()
}

/// Dual of `J` at `s`: entry `k` is `dJ/ds_k`.
pub fn smoothed_tv_dual(space: &FemSpace, s: &[f64], eps: f64) -> Vec<f64> {
    let coeff: Vec<f64> = space
        .element_gradients(s)
        .iter()
        .map(|g| 1.0 / (g[0] * g[0] + g[1] * g[1] + eps).sqrt())
        .collect();
    let mut out = vec![0.0; space.n()];
    space.weighted_stiffness_apply(&coeff, s, &mut out);
    out
}

/// `R_W(w) = |w|^2_{L2}`.
pub fn reg_w(space: &FemSpace, w: &[f64]) -> f64 {
    space.l2_inner(w, w)
}

/// Regularizer value as defined above.
pub fn reg_value(space: &FemSpace, state: &ContinuationState, p: &RegParams) -> f64 {
    let lam = state.lambda();
    let mut r = 0.0;
    if lam > 0.0 && p.alpha > 0.0 {
        let s = state.sigma_pc().values();
        r += lam * p.alpha * (smoothed_l1(space, s, p.eps_tv) + smoothed_tv(space, s, p.eps_tv));
    }
    if lam < 1.0 && p.beta > 0.0 {
        r += (1.0 - lam) * p.beta * reg_w(space, state.sigma_l2().values());
    }
    r
}

/// Regularizer with `int sqrt(sigma_pc^2 + eps)` replaced by
/// `1/2 |sigma_pc|^2`, the functional whose gradient drives the iteration.
pub fn surrogate_reg_value(space: &FemSpace, state: &ContinuationState, p: &RegParams) -> f64 {
    let lam = state.lambda();
    let s = state.sigma_pc().values();
    let mut r = lam * p.alpha * (0.5 * space.l2_inner(s, s) + smoothed_tv(space, s, p.eps_tv));
    r += (1.0 - lam) * p.beta * reg_w(space, state.sigma_l2().values());
    r
}

/// Dual of the `sigma_pc` gradient of the surrogate, including `lambda alpha`.
fn reg_sigma_pc_dual(space: &FemSpace, state: &ContinuationState, p: &RegParams) -> Vec<f64> {
    let lam = state.lambda();
    if lam == 0.0 || p.alpha == 0.0 {
        return vec![0.0; space.n()];
    }
    let s = state.sigma_pc().values();
    let tv = smoothed_tv_dual(space, s, p.eps_tv);
    let m = space.mass_apply(s);
    tv.iter()
        .zip(m)
        .map(|(a, b)| lam * p.alpha * (a + b))
        .collect()
}

fn project(space: &FemSpace, dual: &[f64], zero_boundary: bool) -> Result<RealField> {
    space.h1_projection(dual, zero_boundary, ProjectionForm::MASS)
}

/// Representer of the regularizer gradient in `sigma_pc`.
pub fn grad_reg_sigma_pc(
    space: &FemSpace,
    state: &ContinuationState,
    p: &RegParams,
) -> Result<RealField> {
    project(space, &reg_sigma_pc_dual(space, state, p), p.zero_boundary)
}

/// `phi`-gradient from the fidelity dual in `sigma` and the regularizer dual
/// in `sigma_pc`, both pulled back through `sigma_pc'(phi)`.
pub fn grad_phi_total(
    space: &FemSpace,
    state: &ContinuationState,
    p: &RegParams,
    fid_dual: &[f64],
) -> Result<RealField> {
    let lam = state.lambda();
    let jump = p.sigma1 - p.sigma2;
    let d: Vec<f64> = state
        .phi()
        .values()
        .iter()
        .map(|&x| jump * delta_eps(x, p.eps_heaviside))
        .collect();
    let fid: Vec<f64> = fid_dual.iter().zip(&d).map(|(g, d)| lam * d * g).collect();
    let reg: Vec<f64> = reg_sigma_pc_dual(space, state, p)
        .iter()
        .zip(&d)
        .map(|(g, d)| d * g)
        .collect();
    let mut g = project(space, &fid, p.zero_boundary)?;
    let r = project(space, &reg, p.zero_boundary)?;
    for (a, b) in g.values_mut().iter_mut().zip(r.values()) {
        *a += b;
    }
    Ok(g)
}

/// `(1 - lambda) grad_sigma F + 2 (1 - lambda) beta sigma_l2`.
pub fn grad_sigma_l2_total(
    state: &ContinuationState,
    p: &RegParams,
    grad_fid_sigma: &RealField,
) -> RealField {
    let lam = state.lambda();
    RealField::from_vec(
        grad_fid_sigma
            .values()
            .iter()
            .zip(state.sigma_l2().values())
            .map(|(g, w)| (1.0 - lam) * g + 2.0 * (1.0 - lam) * p.beta * w)
            .collect(),
    )
}

/// Objective value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub total: f64,
    pub fidelity: f64,
    pub reg: f64,
}

pub fn objective(
    model: &ForwardModel,
    state: &ContinuationState,
    p: &RegParams,
    data: &MeasurementSet,
) -> Result<Objective> {
    let fidelity = model.fidelity_of(state.sigma(), data)?;
    let reg = reg_value(&model.space, state, p);
    Ok(Objective {
        total: fidelity + reg,
        fidelity,
        reg,
    })
}

/// Gradients of the objective at a state.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub phi: RealField,
    pub sigma_l2: RealField,
    /// L2 representer of the fidelity gradient in `sigma`.
    pub fid_sigma: RealField,
    /// Nodal dual of the fidelity gradient in `sigma`.
    pub fid_dual: Vec<f64>,
}

impl Gradients {
    /// `|grad_sigma_l2 T|^2 + |grad_phi T|^2` in the L2 norm.
    pub fn norm2(&self, space: &FemSpace) -> (f64, f64) {
        (
            space.l2_inner(self.sigma_l2.values(), self.sigma_l2.values()),
            space.l2_inner(self.phi.values(), self.phi.values()),
        )
    }
}

/// Objective at a state, keeping the forward solution for a later gradient.
pub fn evaluate(
    model: &ForwardModel,
    state: &ContinuationState,
    p: &RegParams,
    data: &MeasurementSet,
) -> Result<(Objective, ForwardSolution)> {
    data.check_plan(&model.plan)?;
    let sol = model.impedance_map(state.sigma())?;
    let fidelity = crate::forward::fidelity(&sol.traces, data)?;
    let reg = reg_value(&model.space, state, p);
    Ok((
        Objective {
            total: fidelity + reg,
            fidelity,
            reg,
        },
        sol,
    ))
}

/// Gradients at a state whose forward solution is already known.
pub fn gradients(
    model: &ForwardModel,
    state: &ContinuationState,
    p: &RegParams,
    data: &MeasurementSet,
    sol: &ForwardSolution,
) -> Result<Gradients> {
    let fg = model.fidelity_gradient(sol, data)?;
    let space = &model.space;
    let fid_sigma = project(space, &fg.dual, p.zero_boundary)?;
    let phi = grad_phi_total(space, state, p, &fg.dual)?;
    let sigma_l2 = grad_sigma_l2_total(state, p, &fid_sigma);
    Ok(Gradients {
        phi,
        sigma_l2,
        fid_sigma,
        fid_dual: fg.dual,
    })
}

/// Objective and all gradients in one forward/adjoint sweep.
pub fn objective_and_gradients(
    model: &ForwardModel,
    state: &ContinuationState,
    p: &RegParams,
    data: &MeasurementSet,
) -> Result<(Objective, Gradients)> {
    let (obj, sol) = evaluate(model, state, p, data)?;
    let g = gradients(model, state, p, data, &sol)?;
    Ok((obj, g))
}
