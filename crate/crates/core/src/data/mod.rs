//! Experiment presets, file persistence and the glue that turns a preset
//! into a ready-to-run inverse problem.

pub(crate) mod io;

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fem::{FemSpace, RealField};
use crate::forward::{make_synthetic_measurements, ExcitationPlan, ForwardModel, MeasurementSet};
use crate::mesh::{indicator_field, DiskMeshBuilder, Mesh, PhantomSpec, Primitive};
use crate::reg::{ContinuationState, RegParams};
use crate::tscm::{relative_error, run_lsm_baseline, run_tscm, RunLog, TscmConfig};
use crate::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = ["exp1-3disks", "exp2-torus", "lsm-baseline", "dlambda-study"];

/// Relative noise levels of the noise-ladder experiments.
pub const NOISE_LADDER: [f64; 4] = [0.01, 0.05, 0.10, 0.20];

/// Vacuum permeability in SI units.
pub const MU0: f64 = 4e-7 * PI;

const PRESET_VERSION: &str = "# tscm-preset v1";

/// How the eddy-current coefficient `omega * sigma * mu` is scaled.
///
/// The state is always expressed in units of `mu * e * L`, so the stiffness
/// coefficient is 1 and only the frequency term carries the physics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// `mu = mu0`, SI frequencies and conductivities on a unit-metre domain.
    Physical,
    /// `omega_0 * max(sigma) * mu = kappa`.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub sigma1: f64,
    pub sigma2: f64,
    pub inclusions: Vec<Primitive>,
    /// Starting shape of the plain level-set baseline.
    pub initial_guess: Vec<Primitive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub n_omega: usize,
    pub n_coils: usize,
    pub amplitude: f64,
    pub units: Units,
    /// Only read for [`Units::Scaled`].
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegSection {
    pub alpha: f64,
    pub beta: f64,
    pub zero_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub radius: f64,
    pub target_h: f64,
    /// Synthetic data are computed on a mesh `data_refinement` times finer.
    pub data_refinement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub rho: f64,
    pub ladder: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    /// Values of `N(lambda) = 1 / delta_lambda` for the continuation study.
    pub lambda_counts: Vec<usize>,
    /// Noise seeds aggregated by sweeps.
    pub seeds: Vec<u64>,
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub phantom: PhantomSection,
    pub plan: PlanSection,
    pub reg: RegSection,
    pub tscm: TscmConfig,
    pub mesh: MeshSection,
    pub noise: NoiseSection,
    pub study: StudySection,
}

fn disk(x: f64, y: f64, r: f64) -> Primitive {
    Primitive::Disk {
        center: [x, y],
        radius: r,
    }
}

/// Looks up a named preset.
pub fn preset(name: &str) -> Result<ExperimentPreset> {
    // Two larger blobs above the centre and a small one below it.
    let three_disks = vec![
        disk(-0.4, 0.3, 0.25),
        disk(0.4, 0.3, 0.22),
        disk(0.05, -0.45, 0.15),
    ];
    // A disk touching a ring.
    let torus = vec![
        disk(-0.45, 0.0, 0.25),
        Primitive::Annulus {
            center: [0.25, 0.0],
            inner: 0.2,
            outer: 0.45,
        },
    ];
    let (inclusions, n_omega, lambda_counts) = match name {
        "exp1-3disks" | "lsm-baseline" => (three_disks, 1, vec![10]),
        "exp2-torus" => (torus, 4, vec![10]),
        "dlambda-study" => (three_disks, 2, vec![1, 2, 4, 8, 16]),
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    Ok(ExperimentPreset {
        name: name.into(),
        phantom: PhantomSection {
            sigma1: 20.0,
            sigma2: 2.0,
            inclusions,
            initial_guess: vec![disk(0.0, 0.0, 0.3)],
        },
        plan: PlanSection {
            n_omega,
            n_coils: 28,
            amplitude: 1.0,
            units: Units::Physical,
            kappa: 0.1,
        },
        reg: RegSection {
            alpha: 1e-5,
            beta: 1e-5,
            zero_boundary: true,
        },
        tscm: TscmConfig::default(),
        mesh: MeshSection {
            radius: 1.0,
            target_h: 0.05,
            data_refinement: 2.0,
        },
        noise: NoiseSection {
            rho: 0.01,
            ladder: NOISE_LADDER.to_vec(),
            seed: 1,
        },
        study: StudySection {
            lambda_counts,
            seeds: vec![1, 2, 3],
        },
    })
}

impl ExperimentPreset {
    pub fn phantom_spec(&self) -> PhantomSpec {
        PhantomSpec::new(
            self.phantom.inclusions.clone(),
            self.phantom.sigma1,
            self.phantom.sigma2,
        )
    }

    pub fn initial_guess(&self) -> PhantomSpec {
        PhantomSpec::new(
            self.phantom.initial_guess.clone(),
            self.phantom.sigma1,
            self.phantom.sigma2,
        )
    }

    pub fn excitation_plan(&self) -> Result<ExcitationPlan> {
        let plan = ExcitationPlan::standard(self.plan.n_omega, self.plan.n_coils)?;
        plan.with_amplitudes(vec![self.plan.amplitude; self.plan.n_coils])
    }

    /// Factor applied to the angular frequency in the discrete system.
    pub fn omega_scale(&self) -> f64 {
        match self.plan.units {
            Units::Physical => MU0,
            Units::Scaled => {
                let omega0 = crate::forward::standard_omegas(1)[0];
                self.plan.kappa / (omega0 * self.phantom.sigma1.max(self.phantom.sigma2))
            }
        }
    }

    /// Sets `delta_lambda = 1 / n`.
    pub fn with_lambda_count(mut self, n: usize) -> Self {
        self.tscm.delta_lambda = 1.0 / n.max(1) as f64;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.tscm.validate()?;
        self.phantom_spec()
            .validate(self.mesh.radius, self.tscm.sigma_min)?;
        self.initial_guess()
            .validate(self.mesh.radius, self.tscm.sigma_min)?;
        if !(self.mesh.radius > 0.0 && self.mesh.target_h > 0.0 && self.mesh.data_refinement >= 1.0)
        {
            return bad("mesh needs radius > 0, target_h > 0 and data_refinement >= 1".into());
        }
        if self.plan.n_omega == 0 || self.plan.n_coils == 0 || !(self.plan.amplitude > 0.0) {
            return bad(
                "plan needs at least one frequency, one coil and a positive amplitude".into(),
            );
        }
        if self.plan.units == Units::Scaled && !(self.plan.kappa > 0.0) {
            return bad("kappa must be positive".into());
        }
        if !(self.reg.alpha >= 0.0 && self.reg.beta >= 0.0) {
            return bad("alpha and beta must be non-negative".into());
        }
        if let Some(r) = self
            .noise
            .ladder
            .iter()
            .chain([&self.noise.rho])
            .find(|r| !(**r >= 0.0))
        {
            return bad(format!("noise level {r} must be non-negative"));
        }
        if self.study.lambda_counts.contains(&0) {
            return bad("lambda counts must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(format!("{PRESET_VERSION}\n{body}"))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        if first.trim() != PRESET_VERSION {
            return Err(Error::Version {
                expected: PRESET_VERSION.into(),
                found: first.into(),
            });
        }
        let p: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, |w| Ok(w.write_all(self.to_toml()?.as_bytes())?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Applies `section.key=value`, where `value` is a TOML literal. Bare
    /// words are taken as strings, so `plan.units=scaled` works.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let bad = |m: String| Error::InvalidArgument(format!("override `{kv}`: {m}"));
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().into()));
        let mut table = toml::Table::try_from(&*self).map_err(|e| bad(e.to_string()))?;
        let mut slot = &mut table;
        for (i, part) in path.iter().enumerate() {
            let entry = slot
                .get_mut(*part)
                .ok_or_else(|| bad(format!("unknown key `{part}`")))?;
            if i + 1 == path.len() {
                *entry = value;
                break;
            }
            slot = entry
                .as_table_mut()
                .ok_or_else(|| bad(format!("`{part}` is not a section")))?;
        }
        let updated: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| {
        text[..s.start.min(text.len())].matches('\n').count() + 1
    });
    Error::parse(line, e.message())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_file<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    f(BufReader::new(File::open(path)?))
}

/// A preset turned into meshes, a forward model and regularization
/// parameters.
pub struct Experiment {
    pub preset: ExperimentPreset,
    pub model: ForwardModel,
    pub params: RegParams,
    /// Exact conductivity interpolated on the inversion mesh.
    pub exact: RealField,
}

/// Final state and log of one optimizer run, with its `e(sigma)`.
#[derive(Debug)]
pub struct RunResult {
    pub state: ContinuationState,
    pub log: RunLog,
    pub error: f64,
}

impl Experiment {
    pub fn new(preset: ExperimentPreset) -> Result<Self> {
        preset.validate()?;
        let mesh = DiskMeshBuilder::new(
            preset.mesh.radius,
            preset.mesh.target_h,
            preset.plan.n_coils,
        )
        .build()?;
        let exact = indicator_field(&mesh, &preset.phantom_spec());
        let params = RegParams::with_mesh_size(
            preset.reg.alpha,
            preset.reg.beta,
            preset.phantom.sigma1,
            preset.phantom.sigma2,
            mesh.h(),
        );
        let params = RegParams {
            zero_boundary: preset.reg.zero_boundary,
            ..params
        };
        params.validate()?;
        let space = Arc::new(FemSpace::new(mesh)?);
        let model = ForwardModel::new(space, 1.0, preset.omega_scale(), preset.excitation_plan()?)?;
        Ok(Experiment {
            preset,
            model,
            params,
            exact,
        })
    }

    pub fn space(&self) -> &FemSpace {
        &self.model.space
    }

    pub fn mesh(&self) -> &Mesh {
        self.model.space.mesh()
    }

    /// Noisy data for the preset phantom, computed on the finer data mesh
    /// and resampled to the inversion mesh.
    pub fn synthesize(&self, rho: f64, seed: u64) -> Result<MeasurementSet> {
        let phantom = self.preset.phantom_spec();
        let m = &self.preset.mesh;
        if m.data_refinement == 1.0 {
            return make_synthetic_measurements(&self.model, &phantom, self.mesh(), rho, seed);
        }
        let fine = DiskMeshBuilder::new(
            m.radius,
            m.target_h / m.data_refinement,
            self.preset.plan.n_coils,
        )
        .build()?;
        let fine_model = ForwardModel::new(
            Arc::new(FemSpace::new(fine)?),
            self.model.mu_inv,
            self.model.omega_scale,
            self.model.plan.clone(),
        )?;
        make_synthetic_measurements(&fine_model, &phantom, self.mesh(), rho, seed)
    }

    pub fn run_tscm(&self, data: &MeasurementSet) -> Result<RunResult> {
        let (state, log) = run_tscm(&self.model, self.params, data, self.preset.tscm)?;
        self.finish(state, log)
    }

    /// Plain level-set descent from the preset's initial guess.
    pub fn run_lsm(&self, data: &MeasurementSet) -> Result<RunResult> {
        let (state, log) = run_lsm_baseline(
            &self.model,
            self.params,
            data,
            self.preset.tscm,
            &self.preset.initial_guess(),
        )?;
        self.finish(state, log)
    }

    fn finish(&self, state: ContinuationState, mut log: RunLog) -> Result<RunResult> {
        let error = relative_error(self.space(), state.sigma(), &self.exact)?;
        log.final_error = Some(error);
        Ok(RunResult { state, log, error })
    }
}

/// Parameter swept by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// `N(lambda)` over `study.lambda_counts`, at `noise.rho`.
    Lambda,
    /// Noise level over `noise.ladder`.
    Noise,
}

impl Study {
    pub fn column(self) -> &'static str {
        match self {
            Study::Lambda => "n_lambda",
            Study::Noise => "rho",
        }
    }
}

/// One TSCM run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub key: f64,
    pub seed: u64,
    pub iterations: usize,
    pub lambda0_iterations: usize,
    pub error: f64,
}

/// Runs TSCM for every study value and every seed in `study.seeds`. Rows
/// come back ordered by value, then seed, whatever the thread count.
pub fn run_sweep(preset: &ExperimentPreset, study: Study) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    let keys: Vec<f64> = match study {
        Study::Lambda => preset
            .study
            .lambda_counts
            .iter()
            .map(|&n| n as f64)
            .collect(),
        Study::Noise => preset.noise.ladder.clone(),
    };
    let exp = Experiment::new(preset.clone())?;
    let jobs: Vec<(f64, u64)> = keys
        .iter()
        .flat_map(|&k| preset.study.seeds.iter().map(move |&s| (k, s)))
        .collect();
    jobs.par_iter()
        .map(|&(key, seed)| {
            let (rho, tscm) = match study {
                Study::Lambda => (
                    preset.noise.rho,
                    TscmConfig {
                        delta_lambda: 1.0 / key,
                        ..preset.tscm
                    },
                ),
                Study::Noise => (key, preset.tscm),
            };
            let data = exp.synthesize(rho, seed)?;
            let (state, log) = run_tscm(&exp.model, exp.params, &data, tscm)?;
            Ok(SweepRow {
                key,
                seed,
                iterations: log.total_iterations(),
                lambda0_iterations: log.stages.first().map_or(0, |s| s.iters),
                error: relative_error(exp.space(), state.sigma(), &exp.exact)?,
            })
        })
        .collect()
}

/// Median of a non-empty sample (mean of the two middle values for even
/// sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-value medians `(key, iterations, error)` in first-seen key order.
pub fn sweep_medians(rows: &[SweepRow]) -> Vec<(f64, f64, f64)> {
    let mut keys: Vec<f64> = Vec::new();
    for r in rows {
        if !keys.contains(&r.key) {
            keys.push(r.key);
        }
    }
    keys.into_iter()
        .map(|k| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.key == k).collect();
            let it: Vec<f64> = sel.iter().map(|r| r.iterations as f64).collect();
            let er: Vec<f64> = sel.iter().map(|r| r.error).collect();
            (k, median(&it), median(&er))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_constants_are_pinned() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!((p.phantom.sigma1, p.phantom.sigma2), (20.0, 2.0));
            assert_eq!(p.plan.n_coils, 28);
            assert_eq!(p.plan.amplitude, 1.0);
            assert_eq!((p.reg.alpha, p.reg.beta), (1e-5, 1e-5));
            let t = p.tscm;
            assert_eq!(
                (t.tau1, t.tau2, t.delta1, t.delta2),
                (1e-5, 1e-6, 1.0, 0.01)
            );
            assert_eq!((t.delta_lambda, t.s_init), (0.1, 2.0));
            assert_eq!(p.noise.ladder, vec![0.01, 0.05, 0.10, 0.20]);
        }
        let p = preset("exp1-3disks").unwrap();
        assert_eq!(p.plan.n_omega, 1);
        p.phantom_spec().validate(1.0, 0.01).unwrap();
        let mut p4 = p.clone();
        p4.plan.n_omega = 4;
        let w = p4.excitation_plan().unwrap();
        let expect: Vec<f64> = (15..19).map(|k| 2.0 * PI * 2f64.powi(k)).collect();
        assert_eq!(w.omegas(), &expect[..]);
        let d = preset("dlambda-study").unwrap();
        assert_eq!(d.plan.n_omega, 2);
        assert_eq!(d.study.lambda_counts, vec![1, 2, 4, 8, 16]);
        assert_eq!(d.noise.rho, 0.01);
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn physical_units_give_the_quoted_frequency_ratio() {
        let p = preset("exp1-3disks").unwrap();
        // omega_0 * sigma_max * mu_0 = 2 pi 2^15 * 20 * 4 pi 1e-7.
        let ratio = 2.0 * PI * 32768.0 * 20.0 * p.omega_scale();
        assert!((ratio - 5.174).abs() < 1e-3, "{ratio}");
        let mut s = p;
        s.plan.units = Units::Scaled;
        let ratio = 2.0 * PI * 32768.0 * 20.0 * s.omega_scale();
        assert!((ratio - 0.1).abs() < 1e-12);
    }

    #[test]
    fn presets_round_trip_bit_identically() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            let text = p.to_toml().unwrap();
            let q = ExperimentPreset::from_toml(&text).unwrap();
            assert_eq!(p, q);
            assert_eq!(q.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn loading_rejects_bad_files() {
        let text = preset("exp2-torus").unwrap().to_toml().unwrap();
        assert!(matches!(
            ExperimentPreset::from_toml(&text.replacen("v1", "v9", 1)),
            Err(Error::Version { .. })
        ));
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            ExperimentPreset::from_toml(cut),
            Err(Error::Parse { .. })
        ));
        let bad = text.replace("alpha = ", "alhpa = ");
        match ExperimentPreset::from_toml(&bad) {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides() {
        let mut p = preset("exp1-3disks").unwrap();
        p.apply_override("plan.n_omega=4").unwrap();
        p.apply_override("mesh.target_h = 0.1").unwrap();
        p.apply_override("plan.units=scaled").unwrap();
        p.apply_override("tscm.record_time=true").unwrap();
        assert_eq!(p.plan.n_omega, 4);
        assert_eq!(p.mesh.target_h, 0.1);
        assert_eq!(p.plan.units, Units::Scaled);
        assert!(p.tscm.record_time);
        assert!(p.apply_override("plan.n_omegas=4").is_err());
        assert!(p.apply_override("plan.n_omega=-1").is_err());
        assert!(p.apply_override("tscm.delta_lambda=0").is_err());
        assert!(p.apply_override("nonsense").is_err());
        assert_eq!(p.plan.n_omega, 4);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        let row = |key, error| SweepRow {
            key,
            seed: 0,
            iterations: 10,
            lambda0_iterations: 5,
            error,
        };
        let m = sweep_medians(&[row(2.0, 0.5), row(1.0, 0.1), row(2.0, 0.7), row(2.0, 0.6)]);
        assert_eq!(m, vec![(2.0, 10.0, 0.6), (1.0, 10.0, 0.1)]);
    }

    #[test]
    fn experiment_wiring() {
        let mut p = preset("exp1-3disks").unwrap();
        p.mesh.target_h = 0.2;
        p.plan.n_coils = 6;
        let e = Experiment::new(p).unwrap();
        assert_eq!(e.mesh().n_arcs(), 6);
        assert_eq!(e.params.eps_heaviside, e.mesh().h().powi(2));
        let d = e.synthesize(0.0, 3).unwrap();
        assert_eq!(d.traces.len(), 6);
        assert_eq!(d.n_boundary(), e.mesh().n_boundary());
        // Data from the finer mesh do not coincide with the inversion mesh's
        // own prediction, but are close to it.
        let f = e.model.fidelity_of(&e.exact, &d).unwrap();
        let m2: f64 = d.traces.iter().map(|t| t.norm_sqr()).sum();
        assert!(f > 0.0 && f < 1e-2 * m2, "{f} vs {m2}");
    }
}
