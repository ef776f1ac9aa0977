use std::sync::Arc;

use tscm::data::{preset, Experiment};
use tscm::fem::{FemSpace, RealField};
use tscm::forward::{add_noise, ExcitationPlan, ForwardModel, MeasurementSet};
use tscm::mesh::{indicator_field, DiskMeshBuilder, PhantomSpec, Primitive};
use tscm::reg::{sigma_pc, ContinuationState, RegParams};
use tscm::Complex64;

fn model() -> ForwardModel {
    let mesh = DiskMeshBuilder::new(1.0, 0.1, 14).build().unwrap();
    let plan = ExcitationPlan::standard(2, 14).unwrap();
    ForwardModel::new(Arc::new(FemSpace::new(mesh).unwrap()), 1.0, 0.05, plan).unwrap()
}

fn phantom() -> PhantomSpec {
    PhantomSpec::new(
        vec![Primitive::Disk {
            center: [0.2, -0.1],
            radius: 0.35,
        }],
        20.0,
        2.0,
    )
}

/// `|noisy - clean| / |clean|` over all traces, in the boundary norm.
fn empirical_rho(noisy: &MeasurementSet, clean: &MeasurementSet) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (n, c) in noisy.traces.iter().zip(&clean.traces) {
        num += n.sub(c).unwrap().norm_sqr();
        den += c.norm_sqr();
    }
    (num / den).sqrt()
}

#[test]
fn noise_level_matches_request() {
    let clean = model().clean_measurements(&phantom()).unwrap();
    for rho in [0.01, 0.05, 0.1, 0.2] {
        for seed in 0..5 {
            let noisy = add_noise(&clean, rho, seed).unwrap();
            let ratio = empirical_rho(&noisy, &clean) / rho;
            assert!(
                (0.8..1.2).contains(&ratio),
                "rho {rho} seed {seed}: ratio {ratio}"
            );
        }
    }
}

#[test]
fn saved_measurements_keep_their_noise_level() {
    let m = model();
    let clean = m.clean_measurements(&phantom()).unwrap();
    let noisy = add_noise(&clean, 0.05, 7).unwrap();
    let mut buf = Vec::new();
    noisy.write(&mut buf).unwrap();
    let back = MeasurementSet::read(m.space.mesh(), buf.as_slice()).unwrap();
    assert_eq!(back.seed, 7);
    assert_eq!(back.rho, 0.05);
    let ratio = empirical_rho(&back, &clean) / 0.05;
    assert!((0.8..1.2).contains(&ratio), "{ratio}");
    // Same seed, same noise.
    assert_eq!(add_noise(&clean, 0.05, 7).unwrap().traces, noisy.traces);
}

#[test]
fn fidelity_gradient_vanishes_at_the_truth() {
    let m = model();
    let exact = indicator_field(m.space.mesh(), &phantom());
    let data = m.clean_measurements(&phantom()).unwrap();
    let (f, g) = m.grad_fidelity_sigma(&exact, &data).unwrap();
    assert!(f < 1e-28, "{f}");
    assert!(g.values().iter().all(|v| v.abs() < 1e-12));

    let off = exact.map(|s| s * 1.1);
    let (f, g) = m.grad_fidelity_sigma(&off, &data).unwrap();
    assert!(f > 0.0);
    assert!(g.values().iter().any(|v| v.abs() > 1e-12));
}

#[test]
fn conjugate_solve_is_the_conjugated_solve() {
    let m = model();
    let sigma = indicator_field(m.space.mesh(), &phantom());
    let sys = m.space.assemble_system(1.0, 0.7, &sigma).unwrap();
    let f = sys.factor().unwrap();
    let b: Vec<Complex64> = (0..m.space.n())
        .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
        .collect();
    let b_conj: Vec<Complex64> = b.iter().map(|z| z.conj()).collect();
    let x = f.solve_conj(&b).unwrap();
    let y = f.solve(&b_conj).unwrap();
    for (a, c) in x.values().iter().zip(y.values()) {
        assert!((a - c.conj()).norm() < 1e-12 * (1.0 + a.norm()));
    }
    // The system is complex symmetric, not Hermitian.
    let s = f.matrix();
    let (i, j) = (s.pattern().row(5)[0], 5);
    assert_eq!(s.get(i, j), s.get(j, i));
}

#[test]
fn lambda_endpoints_select_one_representation() {
    let m = model();
    let n = m.space.n();
    let p = RegParams::with_mesh_size(1e-4, 1e-4, 20.0, 2.0, m.space.mesh().h());
    let phi = RealField::from_vec(
        m.space
            .mesh()
            .nodes()
            .iter()
            .map(|q| 0.3 - q[0].hypot(q[1]))
            .collect(),
    );
    let l2 = RealField::from_vec((0..n).map(|i| 1.0 + (i % 7) as f64).collect());
    let one = ContinuationState::new(phi.clone(), l2.clone(), 1.0, &p).unwrap();
    assert_eq!(one.sigma(), &sigma_pc(&phi, &p));
    let zero = ContinuationState::new(phi.clone(), l2.clone(), 0.0, &p).unwrap();
    assert_eq!(zero.sigma(), &l2);
    let half = ContinuationState::new(phi, l2.clone(), 0.5, &p).unwrap();
    for i in 0..n {
        let mid = 0.5 * (one.sigma()[i] + l2[i]);
        assert!((half.sigma()[i] - mid).abs() < 1e-12);
    }
}

fn tiny_experiment() -> Experiment {
    let mut p = preset("exp1-3disks").unwrap();
    for kv in [
        "mesh.target_h=0.15",
        "mesh.data_refinement=1.5",
        "plan.n_coils=8",
        "tscm.delta_lambda=0.25",
        "tscm.max_inner_iters=15",
    ] {
        p.apply_override(kv).unwrap();
    }
    Experiment::new(p).unwrap()
}

#[test]
fn accepted_steps_strictly_decrease_the_objective() {
    let exp = tiny_experiment();
    let data = exp.synthesize(0.01, 2).unwrap();
    for r in [exp.run_tscm(&data).unwrap(), exp.run_lsm(&data).unwrap()] {
        let its = &r.log.iterations;
        let mut accepted = 0;
        for w in its.windows(2) {
            if w[0].step > 0.0 {
                assert_eq!(w[0].lambda, w[1].lambda);
                assert!(w[1].total < w[0].total, "{:?} -> {:?}", w[0], w[1]);
                accepted += 1;
            }
        }
        assert_eq!(accepted, r.log.total_iterations());
        assert!(accepted > 0);
    }
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let exp = tiny_experiment();
    let data = exp.synthesize(0.01, 5).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| exp.run_tscm(&data).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.log, b.log);
    assert_eq!(a.state.sigma(), b.state.sigma());
}
