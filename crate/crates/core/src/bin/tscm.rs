use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tscm::data::{
    self, preset, run_sweep, sweep_medians, Experiment, ExperimentPreset, RunResult, Study,
};
use tscm::forward::MeasurementSet;
use tscm::tscm::RunLog;
use tscm::{verify, Error};

/// Topology-to-shape continuation for 2D magnetic induction tomography.
#[derive(Parser)]
#[command(name = "tscm", version)]
struct Cli {
    /// Worker threads for the forward/adjoint batches.
    #[arg(long, global = true, env = "TSCM_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize measurement files for the clean data and every noise level.
    GenData(Common),
    /// Run the continuation method.
    Run(RunArgs),
    /// Run the plain level-set method from the preset's initial guess.
    Baseline(RunArgs),
    /// Run the numerical self-checks.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter study and write per-run and median CSVs.
    Sweep {
        #[arg(long, value_enum)]
        study: StudyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Also write a gnuplot script for the convergence history.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    Lambda,
    Noise,
}

#[derive(Args)]
struct Common {
    /// Named preset (exp1-3disks, exp2-torus, lsm-baseline, dlambda-study).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Preset file, e.g. the manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; must not exist yet.
    #[arg(long)]
    out: PathBuf,
    /// Noise seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any preset key, e.g. `--set plan.n_omega=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Record wall-clock time in the iteration log.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Measurement file; synthesized from the preset if omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

enum Failure {
    Verification,
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_solver_failure() {
            Failure::Solver(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenData(c) => gen_data(&c),
        Command::Run(a) => run(&a, false),
        Command::Baseline(a) => run(&a, true),
        Command::Verify { out } => run_verify(&out),
        Command::Sweep { study, common } => sweep(study, &common),
        Command::Report { run, gnuplot } => report(&run, gnuplot.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("solver failure: {m}");
            ExitCode::from(3)
        }
    }
}

fn resolve(c: &Common) -> Result<ExperimentPreset, Failure> {
    let mut p = match (&c.preset, &c.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => ExperimentPreset::load(path)?,
        _ => {
            return Err(Failure::Config(
                "give exactly one of --preset or --config".into(),
            ))
        }
    };
    for o in &c.overrides {
        p.apply_override(o)?;
    }
    if let Some(seed) = c.seed {
        p.noise.seed = seed;
    }
    if c.timing {
        p.tscm.record_time = true;
    }
    Ok(p)
}

/// Output directory built under a temporary name and renamed on success.
struct OutDir {
    tmp: PathBuf,
    dest: PathBuf,
}

impl OutDir {
    fn create(dest: &Path) -> Result<Self, Failure> {
        if dest.exists() {
            return Err(Failure::Config(format!(
                "{} already exists",
                dest.display()
            )));
        }
        let name = dest
            .file_name()
            .ok_or_else(|| Failure::Config(format!("bad output path {}", dest.display())))?;
        let tmp = dest.with_file_name(format!(
            ".{}.partial-{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        fs::create_dir_all(&tmp)?;
        Ok(OutDir {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<(), Failure> {
        Ok(fs::write(self.path(name), body)?)
    }

    fn commit(self) -> Outcome {
        fs::rename(&self.tmp, &self.dest)?;
        Ok(())
    }
}

fn write_manifest(out: &OutDir, p: &ExperimentPreset) -> Outcome {
    p.save(&out.path("manifest.toml"))?;
    Ok(())
}

fn save_measurements(path: &Path, m: &MeasurementSet) -> Outcome {
    data::write_file(path, |w| m.write(w))?;
    Ok(())
}

fn gen_data(c: &Common) -> Outcome {
    let p = resolve(c)?;
    let exp = Experiment::new(p.clone())?;
    let out = OutDir::create(&c.out)?;
    write_manifest(&out, &p)?;
    data::write_file(&out.path("mesh.txt"), |w| exp.mesh().write(w))?;
    save_measurements(&out.path("clean.meas"), &exp.synthesize(0.0, p.noise.seed)?)?;
    for rho in &p.noise.ladder {
        let m = exp.synthesize(*rho, p.noise.seed)?;
        save_measurements(&out.path(&format!("rho-{rho}.meas")), &m)?;
    }
    println!(
        "wrote {} noise levels to {}",
        p.noise.ladder.len(),
        c.out.display()
    );
    out.commit()
}

fn write_run(out: &OutDir, exp: &Experiment, r: &RunResult, method: &str) -> Outcome {
    let mesh = exp.mesh();
    data::write_file(&out.path("iterations.csv"), |w| r.log.write_iterations(w))?;
    data::write_file(&out.path("stages.csv"), |w| r.log.write_stages(w))?;
    data::write_file(&out.path("sigma.field"), |w| r.state.sigma().write(mesh, w))?;
    data::write_file(&out.path("phi.field"), |w| r.state.phi().write(mesh, w))?;
    data::write_file(&out.path("sigma_l2.field"), |w| {
        r.state.sigma_l2().write(mesh, w)
    })?;
    data::write_file(&out.path("exact.field"), |w| exp.exact.write(mesh, w))?;
    out.text("summary.txt", &summary(method, &exp.preset.name, &r.log))?;
    Ok(())
}

fn summary(method: &str, name: &str, log: &RunLog) -> String {
    let mut s = format!("method = {method}\npreset = {name}\n");
    if let Some(e) = log.final_error {
        s += &format!("final_error = {e}\n");
    }
    s += &format!("total_iterations = {}\n", log.total_iterations());
    for st in &log.stages {
        let flag = if st.stop.incomplete() {
            " (stage incomplete)"
        } else {
            ""
        };
        s += &format!(
            "stage lambda={} iters={} stop={}{flag}\n",
            st.lambda, st.iters, st.stop
        );
    }
    s
}

fn run(a: &RunArgs, baseline: bool) -> Outcome {
    let p = resolve(&a.common)?;
    let exp = Experiment::new(p.clone())?;
    let out = OutDir::create(&a.common.out)?;
    write_manifest(&out, &p)?;
    let meas = match &a.data {
        Some(path) => data::read_file(path, |r| MeasurementSet::read(exp.mesh(), r))?,
        None => exp.synthesize(p.noise.rho, p.noise.seed)?,
    };
    save_measurements(&out.path("data.meas"), &meas)?;
    let (method, r) = if baseline {
        ("lsm", exp.run_lsm(&meas)?)
    } else {
        ("tscm", exp.run_tscm(&meas)?)
    };
    write_run(&out, &exp, &r, method)?;
    print!("{}", summary(method, &p.name, &r.log));
    out.commit()
}

fn run_verify(dest: &Path) -> Outcome {
    let out = OutDir::create(dest)?;
    let report = verify::run_all()?;
    let mut text = Vec::new();
    report.write(&mut text)?;
    out.text("report.txt", &String::from_utf8_lossy(&text))?;
    std::io::stdout().write_all(&text)?;
    out.commit()?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn sweep(study: StudyArg, c: &Common) -> Outcome {
    let p = resolve(c)?;
    let study = match study {
        StudyArg::Lambda => Study::Lambda,
        StudyArg::Noise => Study::Noise,
    };
    let out = OutDir::create(&c.out)?;
    write_manifest(&out, &p)?;
    let rows = run_sweep(&p, study)?;
    let col = study.column();
    let mut runs = format!("{col},seed,iterations,lambda0_iterations,error\n");
    for r in &rows {
        runs += &format!(
            "{},{},{},{},{}\n",
            r.key, r.seed, r.iterations, r.lambda0_iterations, r.error
        );
    }
    out.text("runs.csv", &runs)?;
    let mut med = format!("{col},median_iterations,median_error\n");
    for (k, it, e) in sweep_medians(&rows) {
        med += &format!("{k},{it},{e}\n");
    }
    out.text("medians.csv", &med)?;
    print!("{med}");
    out.commit()
}

fn report(dir: &Path, gnuplot: Option<&Path>) -> Outcome {
    let stages = data::read_file(&dir.join("stages.csv"), RunLog::read_stages)?;
    let iterations = data::read_file(&dir.join("iterations.csv"), RunLog::read_iterations)?;
    let total: usize = stages.iter().map(|s| s.iters).sum();
    println!("{} stages, {total} iterations", stages.len());
    for s in &stages {
        let share = if total > 0 {
            100.0 * s.iters as f64 / total as f64
        } else {
            0.0
        };
        println!(
            "  lambda {:<6} {:>5} iters ({share:5.1}%)  {}",
            s.lambda, s.iters, s.stop
        );
    }
    if let Some(last) = iterations.last() {
        println!(
            "final objective {:e} (fidelity {:e}, regularizer {:e})",
            last.total, last.fidelity, last.reg
        );
    }
    if let Ok(text) = fs::read_to_string(dir.join("summary.txt")) {
        if let Some(line) = text.lines().find(|l| l.starts_with("final_error")) {
            println!("{line}");
        }
    }
    if let Some(path) = gnuplot {
        let csv = dir.join("iterations.csv");
        let script = format!(
            "set datafile separator ','\n\
             set key autotitle columnhead\n\
             set logscale y\n\
             set xlabel 'iteration n'\n\
             plot '{0}' using 1:5 with lines title 'objective', \\\n     '{0}' using 1:3 with lines title 'fidelity'\n",
            csv.display()
        );
        fs::write(path, script)?;
    }
    Ok(())
}
