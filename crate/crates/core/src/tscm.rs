//! The continuation optimizer and the plain level-set baseline.
//!
//! The outer loop walks `lambda` from 0 to 1 in steps of `delta_lambda`. Each
//! stage runs steepest descent on `(phi, sigma_l2)` with a doubling/halving
//! step rule until the squared gradient norm drops below `tau1^2` or the
//! step falls below `tau2`.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::io::{parse_array, LineReader};
use crate::fem::{FemSpace, RealField};
use crate::forward::{ForwardModel, ForwardSolution, MeasurementSet};
use crate::mesh::{signed_distance_field, PhantomSpec};
use crate::reg::{evaluate, gradients, ContinuationState, Gradients, Objective, RegParams};
use crate::{Error, Result};

/// Parameters of the continuation loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TscmConfig {
    pub delta_lambda: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Initial level set is `-delta1`.
    pub delta1: f64,
    /// Initial relaxed conductivity is `delta2`.
    pub delta2: f64,
    pub s_init: f64,
    pub max_inner_iters: usize,
    pub k_max_halvings: usize,
    /// Lower bound for `sigma_l2`; trial steps are clamped to it.
    pub sigma_min: f64,
    /// Upper bound for `sigma_l2`, normally the strong phase `sigma1`.
    pub sigma_max: f64,
    /// Record wall-clock seconds in the run log (breaks bit-reproducibility).
    pub record_time: bool,
}

impl Default for TscmConfig {
    fn default() -> Self {
        TscmConfig {
            delta_lambda: 0.1,
            tau1: 1e-5,
            tau2: 1e-6,
            delta1: 1.0,
            delta2: 0.01,
            s_init: 2.0,
            max_inner_iters: 500,
            k_max_halvings: 40,
            sigma_min: 0.01,
            sigma_max: 20.0,
            record_time: false,
        }
    }
}

impl TscmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.delta_lambda > 0.0 && self.delta_lambda <= 1.0) {
            return bad("delta_lambda must lie in (0, 1]");
        }
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return bad("tau1 and tau2 must be positive");
        }
        if !(self.delta1 > 0.0 && self.delta2 > 0.0) {
            return bad("delta1 and delta2 must be positive");
        }
        if !(self.s_init > 0.0) {
            return bad("s_init must be positive");
        }
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min) {
            return bad("need 0 < sigma_min < sigma_max");
        }
        Ok(())
    }

    /// `0, dl, 2 dl, ...` followed by exactly 1.
    pub fn lambda_schedule(&self) -> Vec<f64> {
        let steps = (1.0 / self.delta_lambda - 1e-9).ceil() as usize;
        let mut out: Vec<f64> = (0..steps).map(|k| k as f64 * self.delta_lambda).collect();
        out.push(1.0);
        out
    }
}

/// Why an inner loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Squared gradient norm below `tau1^2`.
    Converged,
    /// Step halved below `tau2`: no descent along the gradient.
    StepBelowTau2,
    /// Halving cap reached before descent or `tau2`.
    HalvingCap,
    /// Iteration cap reached.
    IterationCap,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::StepBelowTau2 => "step_below_tau2",
            StopReason::HalvingCap => "halving_cap",
            StopReason::IterationCap => "iteration_cap",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            StopReason::Converged,
            StopReason::StepBelowTau2,
            StopReason::HalvingCap,
            StopReason::IterationCap,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
    }

    /// True if the stage ended on a safety cap rather than a stopping rule.
    pub fn incomplete(self) -> bool {
        matches!(self, StopReason::HalvingCap | StopReason::IterationCap)
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated iterate. `step` is the step accepted from it, 0 for the
/// last iterate of a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub n: usize,
    pub lambda: f64,
    pub fidelity: f64,
    pub reg: f64,
    pub total: f64,
    pub gnorm2_sl2: f64,
    pub gnorm2_phi: f64,
    pub step: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub lambda: f64,
    pub iters: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub iterations: Vec<IterRecord>,
    pub stages: Vec<StageRecord>,
    pub final_error: Option<f64>,
}

const ITER_HEADER: &str = "n,lambda,fidelity,reg,total,gnorm2_sl2,gnorm2_phi,step,seconds";
const STAGE_HEADER: &str = "lambda,iters,stop";

impl RunLog {
    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iters).sum()
    }

    pub fn write_iterations<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{ITER_HEADER}")?;
        for r in &self.iterations {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.lambda,
                r.fidelity,
                r.reg,
                r.total,
                r.gnorm2_sl2,
                r.gnorm2_phi,
                r.step,
                r.seconds
            )?;
        }
        Ok(())
    }

    pub fn write_stages<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{STAGE_HEADER}")?;
        for s in &self.stages {
            writeln!(w, "{},{},{}", s.lambda, s.iters, s.stop)?;
        }
        Ok(())
    }

    pub fn read_iterations<R: BufRead>(r: R) -> Result<Vec<IterRecord>> {
        let mut lr = LineReader::new(r);
        lr.expect_version(ITER_HEADER)?;
        let mut out = Vec::new();
        while let Some((no, line)) = lr.next_opt()? {
            let v: [f64; 9] = parse_array(no, &line.replace(',', " "))?;
            if v[0] < 0.0 || v[0].fract() != 0.0 {
                return Err(Error::parse(
                    no,
                    "iteration index must be a non-negative integer",
                ));
            }
            out.push(IterRecord {
                n: v[0] as usize,
                lambda: v[1],
                fidelity: v[2],
                reg: v[3],
                total: v[4],
                gnorm2_sl2: v[5],
                gnorm2_phi: v[6],
                step: v[7],
                seconds: v[8],
            });
        }
        Ok(out)
    }

    pub fn read_stages<R: BufRead>(r: R) -> Result<Vec<StageRecord>> {
        let mut lr = LineReader::new(r);
        lr.expect_version(STAGE_HEADER)?;
        let mut out = Vec::new();
        while let Some((no, line)) = lr.next_opt()? {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(Error::parse(no, "expected 'lambda,iters,stop'"));
            }
            out.push(StageRecord {
                lambda: crate::data::io::parse_value(no, f[0])?,
                iters: crate::data::io::parse_value(no, f[1])?,
                stop: StopReason::parse(f[2])
                    .ok_or_else(|| Error::parse(no, format!("unknown stop reason `{}`", f[2])))?,
            });
        }
        Ok(out)
    }
}

/// `phi = -delta1`, `sigma_l2 = delta2`, `lambda = 0`.
pub fn initialize(n_nodes: usize, cfg: &TscmConfig, p: &RegParams) -> Result<ContinuationState> {
    ContinuationState::new(
        RealField::constant(n_nodes, -cfg.delta1),
        RealField::constant(n_nodes, cfg.delta2),
        0.0,
        p,
    )
}

/// Result of one line search.
#[derive(Debug)]
pub enum StepOutcome {
    Accepted {
        step: f64,
        state: ContinuationState,
        objective: Objective,
        solution: ForwardSolution,
    },
    Rejected(StopReason),
}

/// Tries `s_trial, s_trial / 2, ...` until the objective strictly decreases.
///
/// `objective` evaluates a candidate; `None` marks an infeasible one.
pub fn backtrack<S, F>(
    s_trial: f64,
    current: f64,
    tau2: f64,
    k_max: usize,
    mut objective: F,
) -> Result<std::result::Result<(f64, S, f64), StopReason>>
where
    F: FnMut(f64) -> Result<Option<(S, f64)>>,
{
    let mut s = s_trial;
    for _ in 0..=k_max {
        if s <= tau2 {
            return Ok(Err(StopReason::StepBelowTau2));
        }
        if let Some((state, value)) = objective(s)? {
            if value < current {
                return Ok(Ok((s, state, value)));
            }
        }
        s *= 0.5;
    }
    Ok(Err(StopReason::HalvingCap))
}

/// Optimizer state machine; the state and log stay readable after an error.
pub struct Optimizer<'a> {
    pub model: &'a ForwardModel,
    pub params: RegParams,
    pub data: &'a MeasurementSet,
    pub config: TscmConfig,
    pub state: ContinuationState,
    pub log: RunLog,
    clock: Instant,
}

impl<'a> Optimizer<'a> {
    pub fn new(
        model: &'a ForwardModel,
        params: RegParams,
        data: &'a MeasurementSet,
        config: TscmConfig,
        state: ContinuationState,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        data.check_plan(&model.plan)?;
        state.phi().check_len(model.space.mesh())?;
        Ok(Optimizer {
            model,
            params,
            data,
            config,
            state,
            log: RunLog::default(),
            clock: Instant::now(),
        })
    }

    fn space(&self) -> &FemSpace {
        &self.model.space
    }

    fn trial(
        &self,
        s: f64,
        g: &Gradients,
    ) -> Result<Option<(ContinuationState, Objective, ForwardSolution)>> {
        let cand = self.state.stepped_projected(
            s,
            &g.phi,
            &g.sigma_l2,
            &self.params,
            (self.config.sigma_min, self.config.sigma_max),
        );
        if !(cand.sigma().min() >= self.config.sigma_min) || !cand.sigma().is_finite() {
            return Ok(None);
        }
        let (obj, sol) = evaluate(self.model, &cand, &self.params, self.data)?;
        Ok(obj.total.is_finite().then_some((cand, obj, sol)))
    }

    /// Steepest descent at the current `lambda`.
    pub fn inner_descent(&mut self) -> Result<StageRecord> {
        let lambda = self.state.lambda();
        let cfg = self.config;
        let (mut obj, mut sol) = evaluate(self.model, &self.state, &self.params, self.data)?;
        let mut s_prev = cfg.s_init;
        let mut accepted_before = false;
        let mut iters = 0;
        let stop = loop {
            let g = gradients(self.model, &self.state, &self.params, self.data, &sol)?;
            let (gs, gp) = g.norm2(self.space());
            let mut rec = IterRecord {
                n: self.log.iterations.len(),
                lambda,
                fidelity: obj.fidelity,
                reg: obj.reg,
                total: obj.total,
                gnorm2_sl2: gs,
                gnorm2_phi: gp,
                step: 0.0,
                seconds: 0.0,
            };
            let finish = |rec: &mut IterRecord, log: &mut RunLog, clock: &Instant| {
                if cfg.record_time {
                    rec.seconds = clock.elapsed().as_secs_f64();
                }
                log.iterations.push(*rec);
            };
            if gs + gp <= cfg.tau1 * cfg.tau1 {
                finish(&mut rec, &mut self.log, &self.clock);
                break StopReason::Converged;
            }
            if iters >= cfg.max_inner_iters {
                finish(&mut rec, &mut self.log, &self.clock);
                break StopReason::IterationCap;
            }
            let s_trial = if accepted_before {
                2.0 * s_prev
            } else {
                s_prev
            };
            let outcome = backtrack(s_trial, obj.total, cfg.tau2, cfg.k_max_halvings, |s| {
                Ok(self.trial(s, &g)?.map(|(st, o, so)| ((st, o, so), o.total)))
            })?;
            match outcome {
                Ok((s, (st, o, so), _)) => {
                    rec.step = s;
                    finish(&mut rec, &mut self.log, &self.clock);
                    self.state = st;
                    obj = o;
                    sol = so;
                    s_prev = s;
                    accepted_before = true;
                    iters += 1;
                }
                Err(reason) => {
                    finish(&mut rec, &mut self.log, &self.clock);
                    break reason;
                }
            }
        };
        let stage = StageRecord {
            lambda,
            iters,
            stop,
        };
        self.log.stages.push(stage);
        Ok(stage)
    }

    /// Full continuation from the current state's `lambda` schedule.
    pub fn run(&mut self) -> Result<()> {
        for lambda in self.config.lambda_schedule() {
            self.state.set_lambda(lambda)?;
            self.inner_descent()?;
        }
        Ok(())
    }

    /// Only the `lambda = 1` stage.
    pub fn run_level_set(&mut self) -> Result<()> {
        self.state.set_lambda(1.0)?;
        self.inner_descent()?;
        Ok(())
    }
}

/// Runs the continuation method from the standard initial guess.
pub fn run_tscm(
    model: &ForwardModel,
    params: RegParams,
    data: &MeasurementSet,
    config: TscmConfig,
) -> Result<(ContinuationState, RunLog)> {
    let init = initialize(model.space.n(), &config, &params)?;
    let mut opt = Optimizer::new(model, params, data, config, init)?;
    opt.run()?;
    Ok((opt.state, opt.log))
}

/// Plain level-set descent at `lambda = 1` from the signed distance of an
/// initial shape.
pub fn run_lsm_baseline(
    model: &ForwardModel,
    params: RegParams,
    data: &MeasurementSet,
    config: TscmConfig,
    initial: &PhantomSpec,
) -> Result<(ContinuationState, RunLog)> {
    let n = model.space.n();
    let phi = signed_distance_field(model.space.mesh(), initial);
    let init = ContinuationState::new(phi, RealField::constant(n, config.delta2), 1.0, &params)?;
    let mut opt = Optimizer::new(model, params, data, config, init)?;
    opt.run_level_set()?;
    Ok((opt.state, opt.log))
}

/// `|result - exact|_{L2} / |exact|_{L2}`.
pub fn relative_error(space: &FemSpace, result: &RealField, exact: &RealField) -> Result<f64> {
    result.check_len(space.mesh())?;
    exact.check_len(space.mesh())?;
    let den = space.l2_norm(exact.values());
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let diff: Vec<f64> = result
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(space.l2_norm(&diff) / den)
}
