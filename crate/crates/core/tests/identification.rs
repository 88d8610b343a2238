mod common;

use nalgebra::DVector;
use vi_ident::forward::SolverOptions;
use vi_ident::identification::{
    continuation_identify, identify, synthesize_observation, IdentificationConfig, ReducedObjective, StopReason,
};
use vi_ident::linalg::bilinear;
use vi_ident::{Error, KernelSpec};

use common::*;

fn config(alpha: f64, beta: f64) -> IdentificationConfig {
    IdentificationConfig {
        alpha,
        beta,
        eps_schedule: vec![1e-2],
        max_iters: 400,
        stop_tol: 1e-9,
        ..IdentificationConfig::default()
    }
}

#[test]
fn stronger_regularization_shrinks_the_estimate() {
    // the Tikhonov term trades misfit for norm: as alpha grows, the optimal
    // regularization norm cannot grow and the misfit cannot shrink
    let p = benchmark_1d(16);
    let solver = SolverOptions::default();
    let e_true = p.constant_ellipticity(1.5).unwrap();
    let f_true = p.constant_friction(0.25).unwrap();
    let obs = synthesize_observation(&p, &e_true, &f_true, 0.02, 7, &solver).unwrap();
    let e0 = p.constant_ellipticity(1.0).unwrap();
    let f0 = p.constant_friction(0.1).unwrap();
    let mut norms = Vec::new();
    let mut misfits = Vec::new();
    for alpha in [1e-6, 1e-4, 1e-2] {
        let r = identify(&config(alpha, alpha), &p, &obs, &e0, &f0, &KernelSpec::Sqrt, 1e-2, &solver).unwrap();
        norms.push(r.e_hat.reg_norm_squared() + r.f_hat.reg_norm_squared());
        misfits.push(r.misfit);
    }
    assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-8)), "{norms:?}");
    assert!(misfits.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-8)), "{misfits:?}");
}

#[test]
fn iterates_stay_feasible_and_objective_decreases() {
    let p = square_2d(4);
    let solver = SolverOptions::default();
    let e_true = p.constant_ellipticity(1.0).unwrap();
    let f_true = p.constant_friction(0.2).unwrap();
    let obs = synthesize_observation(&p, &e_true, &f_true, 0.0, 0, &solver).unwrap();
    // start at the box corners so the projection is active
    let e0 = p.constant_ellipticity(2.0).unwrap();
    let f0 = p.constant_friction(1.0).unwrap();
    let mut cfg = config(1e-6, 1e-6);
    cfg.max_iters = 60;
    let r = identify(&cfg, &p, &obs, &e0, &f0, &KernelSpec::Sigmoid, 1e-2, &solver).unwrap();
    let (eb, fb) = (p.e_bounds(), p.f_bounds());
    assert!(r.e_hat.values().iter().all(|v| eb.contains(*v)));
    assert!(r.f_hat.values().iter().all(|v| fb.contains(*v)));
    assert!(r.objective_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.objective() < r.objective_history[0]);
    assert_eq!(r.objective_history.len(), r.iterations + 1);
    assert_eq!(r.stationarity_history.len(), r.iterations + 1);
    assert_eq!(r.eps_used, 1e-2);
}

#[test]
fn fixed_ellipticity_recovers_friction() {
    let p = benchmark_1d(32);
    let solver = SolverOptions::default();
    let e = p.constant_ellipticity(1.0).unwrap();
    let obs = synthesize_observation(&p, &e, &p.constant_friction(0.25).unwrap(), 0.0, 0, &solver).unwrap();
    let mut cfg = config(0.0, 0.0);
    cfg.eps_schedule = vec![1e-6];
    cfg.free_e = false;
    let r = identify(&cfg, &p, &obs, &e, &p.constant_friction(0.1).unwrap(), &KernelSpec::Sqrt, 1e-6, &solver).unwrap();
    assert_eq!(r.stop_reason, StopReason::Stationary);
    assert_eq!(r.e_hat.values(), e.values());
    // the smoothing shifts the slip by O(eps)
    assert!((r.f_hat.values()[0] - 0.25).abs() <= 1e-4, "{}", r.f_hat.values()[0]);
}

#[test]
fn invalid_configs_are_rejected() {
    let p = benchmark_1d(8);
    let solver = SolverOptions::default();
    let e = p.constant_ellipticity(1.0).unwrap();
    let f = p.constant_friction(0.1).unwrap();
    let obs = DVector::zeros(p.mesh().num_nodes());
    let bad = [
        IdentificationConfig {
            eps_schedule: vec![],
            ..config(0.0, 0.0)
        },
        IdentificationConfig {
            eps_schedule: vec![1e-2, 1e-1],
            ..config(0.0, 0.0)
        },
        IdentificationConfig {
            free_e: false,
            free_f: false,
            ..config(0.0, 0.0)
        },
        config(-1.0, 0.0),
    ];
    for cfg in bad {
        let err = continuation_identify(&cfg, &p, &obs, &e, &f, &KernelSpec::Sigmoid, &solver).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }
    assert!(ReducedObjective::new(
        &p,
        &KernelSpec::Sigmoid,
        solver,
        &DVector::zeros(3),
        1e-2,
        0.0,
        0.0,
        Default::default()
    )
    .is_err());
}

#[test]
fn noise_is_bounded_and_seeded() {
    let p = square_2d(6);
    let solver = SolverOptions::default();
    let e = p.constant_ellipticity(1.0).unwrap();
    let f = p.constant_friction(0.2).unwrap();
    let clean = synthesize_observation(&p, &e, &f, 0.0, 1, &solver).unwrap();
    let a = synthesize_observation(&p, &e, &f, 0.05, 1, &solver).unwrap();
    let b = synthesize_observation(&p, &e, &f, 0.05, 1, &solver).unwrap();
    let c = synthesize_observation(&p, &e, &f, 0.05, 2, &solver).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!((&a - &clean).amax() <= 0.05 * clean.amax());
    for d in p.mesh().dirichlet_nodes() {
        assert_eq!(a[d], 0.0);
    }
    assert!(synthesize_observation(&p, &e, &f, -0.1, 1, &solver).is_err());
}

#[test]
fn single_level_continuation_equals_identify() {
    let p = benchmark_1d(16);
    let solver = SolverOptions::default();
    let obs = synthesize_observation(
        &p,
        &p.constant_ellipticity(1.2).unwrap(),
        &p.constant_friction(0.3).unwrap(),
        0.0,
        0,
        &solver,
    )
    .unwrap();
    let e0 = p.constant_ellipticity(1.0).unwrap();
    let f0 = p.constant_friction(0.1).unwrap();
    let mut cfg = config(1e-6, 1e-6);
    cfg.max_iters = 50;
    let report = continuation_identify(&cfg, &p, &obs, &e0, &f0, &KernelSpec::Sigmoid, &solver).unwrap();
    let direct = identify(&cfg, &p, &obs, &e0, &f0, &KernelSpec::Sigmoid, 1e-2, &solver).unwrap();
    assert_eq!(report.results.len(), 1);
    assert_eq!(report.distance_to_final, vec![0.0]);
    assert!(report.successive_distances.is_empty());
    assert_eq!(report.results[0].e_hat.values(), direct.e_hat.values());
    assert_eq!(report.results[0].objective_history, direct.objective_history);
}

#[test]
fn objective_matches_its_definition() {
    let p = benchmark_1d(16);
    let solver = SolverOptions::default();
    let obs = DVector::from_fn(p.mesh().num_nodes(), |i, _| if i == 0 { 0.0 } else { 0.1 });
    let (alpha, beta) = (0.3, 0.7);
    let obj = ReducedObjective::new(&p, &KernelSpec::Sqrt, solver, &obs, 1e-2, alpha, beta, Default::default()).unwrap();
    let e = p.constant_ellipticity(1.1).unwrap();
    let f = p.constant_friction(0.4).unwrap();
    let ev = obj.evaluate(&e, &f, None).unwrap();
    let expected = p.misfit(&ev.state.u, &obs, Default::default())
        + 0.5 * alpha * bilinear(e.gram(), e.values(), e.values())
        + 0.5 * beta * bilinear(f.gram(), f.values(), f.values());
    assert_eq!(ev.objective, expected);
    assert_eq!(obj.value(&e, &f).unwrap(), expected);
    assert_eq!(obj.eps(), 1e-2);
}
