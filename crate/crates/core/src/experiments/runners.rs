use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::report::{Check, Report};
use super::table::Table;
use crate::discretization::{Bounds, MisfitNorm, ParameterField, Problem};
use crate::error::Result;
use crate::forward::{ForwardState, SolutionMap, SolverOptions};
use crate::identification::{
    continuation_identify, identify, synthesize_observation, IdentificationResult, ReducedObjective, StopReason,
};
use crate::kernels::{KernelSpec, Smoothing};
use crate::row;
use crate::sensitivity::Linearization;

fn state_table(problem: &Problem, columns: &[(&str, &DVector<f64>)]) -> Table {
    let mut header = vec!["node", "x", "y"];
    header.extend(columns.iter().map(|(n, _)| *n));
    let mut t = Table::new(header);
    for (i, p) in problem.mesh().nodes().iter().enumerate() {
        let mut r = vec![i.into(), p[0].into(), p[1].into()];
        r.extend(columns.iter().map(|(_, v)| v[i].into()));
        t.push(r);
    }
    t
}

fn parameter_table(e: &ParameterField, f: &ParameterField) -> Table {
    let mut t = Table::new(["field", "index", "value"]);
    for (i, v) in e.values().iter().enumerate() {
        t.push(row!["e", i, v]);
    }
    for (i, v) in f.values().iter().enumerate() {
        t.push(row!["f", i, v]);
    }
    t
}

/// Single forward solve at `[problem]` parameters and `forward.eps`.
pub fn run_forward(config: &ExperimentConfig) -> Result<Report> {
    let problem = config.build_problem()?;
    let (e, f) = config.parameters(&problem)?;
    let map = SolutionMap::new(&problem, &config.kernel, config.solver);
    let eps = config.forward.eps;
    let state = map.solve(&e, &f, eps)?;
    let mut diag = Table::new(["eps", "iterations", "residual_norm", "v_norm"]);
    diag.push(row![eps, state.iterations, state.residual_norm, problem.v_norm(&state.u)]);
    let mut report = Report::new("solve-forward");
    report.check(Check::at_most("residual", state.residual_norm, config.solver.tol));
    report.table("state.csv", state_table(&problem, &[("u", &state.u)]));
    report.table("diagnostics.csv", diag);
    report.table("parameters.csv", parameter_table(&e, &f));
    report.summary = json!({
        "iterations": state.iterations,
        "residual_norm": state.residual_norm,
        "eps": eps,
        "solver": if eps == 0.0 { "active_set" } else { "newton" },
    });
    Ok(report)
}

/// Least-squares slope of `ys` against `xs`; `None` for fewer than 2 points.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Error below the solver's resolution; carries no rate information.
    Roundoff,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub kernel: KernelSpec,
    pub eps: f64,
    pub error: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub kernel: KernelSpec,
    pub slope: Option<f64>,
    pub rows_used: usize,
    /// Errors non-increasing as eps decreases along the list.
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub oracle_v_norm: f64,
    pub rows: Vec<RateRow>,
    pub fits: Vec<RateFit>,
}

/// `|u_eps - u|_V` for each kernel and eps against the unregularized solution.
pub fn rate_study(
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    kernels: &[KernelSpec],
    eps_list: &[f64],
    solver: &SolverOptions,
) -> Result<RateStudy> {
    let oracle = SolutionMap::new(problem, &KernelSpec::Sqrt, *solver).solve(e, f, 0.0)?;
    let oracle_v_norm = problem.v_norm(&oracle.u);
    let floor = 1e2 * solver.tol * oracle_v_norm.max(1.0);
    let per_kernel: Vec<(Vec<RateRow>, RateFit)> = kernels
        .par_iter()
        .map(|&kernel| {
            let map = SolutionMap::new(problem, &kernel, *solver);
            let rows: Vec<RateRow> = eps_list
                .iter()
                .map(|&eps| match map.solve(e, f, eps) {
                    Ok(s) => {
                        let error = problem.v_norm(&(&s.u - &oracle.u));
                        let status = if error <= floor { RowStatus::Roundoff } else { RowStatus::Ok };
                        RateRow {
                            kernel,
                            eps,
                            error: Some(error),
                            status,
                        }
                    }
                    Err(_) => RateRow {
                        kernel,
                        eps,
                        error: None,
                        status: RowStatus::Failed,
                    },
                })
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.status == RowStatus::Ok)
                .map(|r| (r.eps.ln(), r.error.unwrap_or(f64::NAN).ln()))
                .unzip();
            let errors: Vec<f64> = rows.iter().filter_map(|r| r.error).collect();
            let fit = RateFit {
                kernel,
                slope: least_squares_slope(&xs, &ys),
                rows_used: xs.len(),
                monotone: errors.windows(2).all(|w| w[1] <= w[0] + floor),
            };
            (rows, fit)
        })
        .collect();
    let (rows, fits): (Vec<_>, Vec<_>) = per_kernel.into_iter().unzip();
    Ok(RateStudy {
        oracle_v_norm,
        rows: rows.into_iter().flatten().collect(),
        fits,
    })
}

pub fn run_rate_study(config: &ExperimentConfig) -> Result<Report> {
    let problem = config.build_problem()?;
    let (e, f) = config.parameters(&problem)?;
    let rs = &config.rate_study;
    let study = rate_study(&problem, &e, &f, &rs.kernels, &rs.eps, &config.solver)?;
    let mut report = Report::new("rate-study");
    let mut rows = Table::new(["kernel", "eps", "error", "status"]);
    for r in &study.rows {
        let err = r.error.map(|v| v.to_string()).unwrap_or_default();
        let status = serde_json::to_value(r.status)?;
        rows.push(row![r.kernel, r.eps, err, status.as_str().unwrap_or_default()]);
    }
    let mut fits = Table::new(["kernel", "slope", "rows_used", "monotone"]);
    for fit in &study.fits {
        let slope = fit.slope.map(|v| v.to_string()).unwrap_or_default();
        fits.push(row![fit.kernel, slope, fit.rows_used, fit.monotone]);
        if let Some(slope) = fit.slope {
            report.check(Check::at_least(format!("slope[{}]", fit.kernel), slope, rs.min_slope));
        }
        report.check(Check::flag(format!("monotone[{}]", fit.kernel), fit.monotone).qualitative());
    }
    let failed = study.rows.iter().filter(|r| r.status == RowStatus::Failed).count();
    report.check(Check::flag("all rows solved", failed == 0).qualitative());
    report.table("errors.csv", rows);
    report.table("slopes.csv", fits);
    report.summary = serde_json::to_value(&study)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelBound {
    pub max_ratio_plus: f64,
    pub max_ratio_modulus: f64,
}

/// Largest `|P - p| / (k eps)` and `|M - m| / (2 k eps)` over the grid
/// `eps_list x ts`.
pub fn kernel_bounds(kernel: &dyn Smoothing, eps_list: &[f64], ts: &[f64]) -> Result<KernelBound> {
    let k = kernel.absolute_mean();
    let mut b = KernelBound {
        max_ratio_plus: 0.0,
        max_ratio_modulus: 0.0,
    };
    for &eps in eps_list {
        for &t in ts {
            let p = kernel.plus(eps, t)?.value;
            let m = kernel.modulus(eps, t)?.value;
            b.max_ratio_plus = b.max_ratio_plus.max((p - t.max(0.0)).abs() / (k * eps));
            b.max_ratio_modulus = b.max_ratio_modulus.max((m - t.abs()).abs() / (2.0 * k * eps));
        }
    }
    Ok(b)
}

pub fn run_kernel_bound_check(config: &ExperimentConfig) -> Result<Report> {
    let kc = &config.kernel_check;
    let step = (kc.t_max - kc.t_min) / (kc.samples - 1) as f64;
    let base: Vec<f64> = (0..kc.samples).map(|i| kc.t_min + step * i as f64).collect();
    let mut report = Report::new("kernel-check");
    let mut table = Table::new(["kernel", "k", "max_ratio_plus", "max_ratio_modulus"]);
    let mut summary = serde_json::Map::new();
    for &kernel in &kc.kernels {
        // include 0 and the kernel's breakpoints, where the ratios peak
        let mut ts = base.clone();
        ts.push(0.0);
        for &eps in &kc.eps {
            ts.extend(kernel.breakpoints(eps));
        }
        let b = kernel_bounds(&kernel, &kc.eps, &ts)?;
        let limit = 1.0 + kc.slack;
        report.check(Check::at_most(format!("plus[{kernel}]"), b.max_ratio_plus, limit));
        report.check(Check::at_most(format!("modulus[{kernel}]"), b.max_ratio_modulus, limit));
        table.push(row![kernel, kernel.absolute_mean(), b.max_ratio_plus, b.max_ratio_modulus]);
        summary.insert(kernel.to_string(), serde_json::to_value(b)?);
    }
    report.table("bounds.csv", table);
    report.summary = serde_json::Value::Object(summary);
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientRow {
    pub direction: usize,
    pub point: usize,
    pub eps: f64,
    /// `<grad Phi, d>` from the adjoint.
    pub adjoint: f64,
    /// Central difference of `Phi` along `d`.
    pub finite_difference: f64,
    pub relative_error: f64,
    /// `|du - du_fd|_V / |du_fd|_V` for the forward sensitivity.
    pub state_relative_error: f64,
}

fn random_in(rng: &mut ChaCha8Rng, b: Bounds, margin: f64, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(b.lower + margin..=b.upper - margin))
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Settings of a derivative check; see [`gradient_check`].
#[derive(Debug, Clone)]
pub struct GradientCheckPlan {
    pub eps: Vec<f64>,
    pub points: usize,
    pub directions: usize,
    pub step: f64,
    pub alpha: f64,
    pub beta: f64,
    pub margin: f64,
    pub misfit: MisfitNorm,
    pub seed: u64,
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Compares adjoint directional derivatives of the regularized objective
/// and forward sensitivities with central differences at random admissible
/// points and random joint directions.
pub fn gradient_check(
    problem: &Problem,
    observation: &DVector<f64>,
    kernel: &dyn Smoothing,
    solver: &SolverOptions,
    plan: &GradientCheckPlan,
) -> Result<Vec<GradientRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (ne, nf) = (problem.num_elements(), problem.num_friction());
    let mut cases = Vec::new();
    for point in 0..plan.points {
        let e = problem.ellipticity(random_in(&mut rng, problem.e_bounds(), plan.margin, ne))?;
        let f = problem.friction(random_in(&mut rng, problem.f_bounds(), plan.margin, nf))?;
        let dirs: Vec<_> = (0..plan.directions)
            .map(|_| (random_direction(&mut rng, ne), random_direction(&mut rng, nf)))
            .collect();
        for &eps in &plan.eps {
            cases.push((point, eps, e.clone(), f.clone(), dirs.clone()));
        }
    }
    let h = plan.step;
    let per_case: Vec<Result<Vec<GradientRow>>> = cases
        .into_par_iter()
        .enumerate()
        .map(|(case, (point, eps, e, f, dirs))| {
            let obj = ReducedObjective::new(problem, kernel, *solver, observation, eps, plan.alpha, plan.beta, plan.misfit)?;
            let at = obj.evaluate(&e, &f, None)?;
            let lin = Linearization::new(problem, &at.state, &e, &f, kernel, eps)?;
            let (p, _) = lin.adjoint(observation, plan.misfit)?;
            let g = lin.reduced_gradients(&p, &e, &f, plan.alpha, plan.beta)?;
            let mut rows = Vec::with_capacity(dirs.len());
            for (k, (de, df)) in dirs.iter().enumerate() {
                let shifted = |s: f64| -> Result<_> {
                    let e_s = e.with_values(e.values() + s * de)?;
                    let f_s = f.with_values(f.values() + s * df)?;
                    obj.evaluate(&e_s, &f_s, Some(&at.state.u))
                };
                let plus = shifted(h)?;
                let minus = shifted(-h)?;
                let adjoint = g.grad_e.dot(de) + g.grad_f.dot(df);
                let fd = (plus.objective - minus.objective) / (2.0 * h);
                let du = lin.sensitivity_joint(de, df)?.delta_u;
                let du_fd = (&plus.state.u - &minus.state.u) / (2.0 * h);
                let fd_norm = problem.v_norm(&du_fd);
                let diff = problem.v_norm(&(&du - &du_fd));
                rows.push(GradientRow {
                    direction: case * dirs.len() + k,
                    point,
                    eps,
                    adjoint,
                    finite_difference: fd,
                    relative_error: relative(adjoint, fd),
                    state_relative_error: if fd_norm == 0.0 { diff } else { diff / fd_norm },
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_case {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn run_gradient_check(config: &ExperimentConfig) -> Result<Report> {
    let problem = config.build_problem()?;
    let (e, f) = config.parameters(&problem)?;
    let observation = synthesize_observation(&problem, &e, &f, 0.0, config.seed, &config.solver)?;
    let gc = &config.gradient_check;
    let plan = GradientCheckPlan {
        eps: gc.eps.clone(),
        points: gc.points,
        directions: gc.directions,
        step: gc.step,
        alpha: gc.alpha,
        beta: gc.beta,
        margin: gc.margin,
        misfit: config.identify.misfit,
        seed: config.seed,
    };
    let rows = gradient_check(&problem, &observation, &config.kernel, &config.solver, &plan)?;
    let mut table = Table::new([
        "direction",
        "point",
        "eps",
        "adjoint",
        "finite_difference",
        "relative_error",
        "state_relative_error",
    ]);
    for r in &rows {
        table.push(row![
            r.direction,
            r.point,
            r.eps,
            r.adjoint,
            r.finite_difference,
            r.relative_error,
            r.state_relative_error
        ]);
    }
    let max_obj = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let max_state = rows.iter().map(|r| r.state_relative_error).fold(0.0, f64::max);
    let mut report = Report::new("check-gradient");
    report.check(Check::at_most("objective derivative", max_obj, gc.tolerance));
    report.check(Check::at_most("state sensitivity", max_state, gc.tolerance));
    report.table("gradient_check.csv", table);
    report.summary = json!({
        "rows": rows.len(),
        "max_relative_error": max_obj,
        "max_state_relative_error": max_state,
    });
    Ok(report)
}

fn iteration_table(result: &IdentificationResult) -> Table {
    let mut t = Table::new(["iter", "objective", "stationarity_e", "stationarity_f"]);
    for (i, (j, s)) in result
        .objective_history
        .iter()
        .zip(&result.stationarity_history)
        .enumerate()
    {
        t.push(row![i, j, s.0, s.1]);
    }
    t
}

fn identification_checks(report: &mut Report, label: &str, result: &IdentificationResult, stop_tol: f64) {
    let (se, sf) = result.stationarity();
    report.check(Check::at_most(format!("stationarity{label}"), se.max(sf), stop_tol));
    let monotone = result.objective_history.windows(2).all(|w| w[1] <= w[0]);
    report.check(Check::flag(format!("monotone objective{label}"), monotone));
}

fn final_state_table(problem: &Problem, state: &ForwardState, observation: &DVector<f64>) -> Table {
    state_table(problem, &[("u", &state.u), ("observation", observation)])
}

/// Twin experiment: observation from `[problem]` parameters, identification
/// from `[start]` at the last eps of the schedule.
pub fn run_identify(config: &ExperimentConfig) -> Result<Report> {
    let problem = config.build_problem()?;
    let (e_true, f_true) = config.parameters(&problem)?;
    let ic = &config.identify;
    let observation = synthesize_observation(&problem, &e_true, &f_true, ic.noise_level, config.seed, &config.solver)?;
    let (e0, f0) = config.start(&problem)?;
    let eps = *ic.eps_schedule.last().expect("validated non-empty");
    let result = identify(ic, &problem, &observation, &e0, &f0, &config.kernel, eps, &config.solver)?;
    let mut report = Report::new("identify");
    identification_checks(&mut report, "", &result, ic.stop_tol);
    report.table("iterations.csv", iteration_table(&result));
    report.table("parameters.csv", parameter_table(&result.e_hat, &result.f_hat));
    report.table("state.csv", final_state_table(&problem, &result.final_state, &observation));
    let f_error = (result.f_hat.values() - f_true.values()).amax();
    report.summary = json!({
        "eps": eps,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "objective": result.objective(),
        "misfit": result.misfit,
        "stationarity": result.stationarity(),
        "max_friction_error": f_error,
    });
    Ok(report)
}

pub fn run_continuation(config: &ExperimentConfig) -> Result<Report> {
    let problem = config.build_problem()?;
    let (e_true, f_true) = config.parameters(&problem)?;
    let ic = &config.identify;
    let observation = synthesize_observation(&problem, &e_true, &f_true, ic.noise_level, config.seed, &config.solver)?;
    let (e0, f0) = config.start(&problem)?;
    let cont = continuation_identify(ic, &problem, &observation, &e0, &f0, &config.kernel, &config.solver)?;
    let mut report = Report::new("continuation");
    let mut levels = Table::new([
        "level",
        "eps",
        "iterations",
        "stop_reason",
        "objective",
        "misfit",
        "stationarity_e",
        "stationarity_f",
        "distance_to_final",
        "successive_distance",
    ]);
    for (i, r) in cont.results.iter().enumerate() {
        let (se, sf) = r.stationarity();
        let succ = if i == 0 {
            String::new()
        } else {
            cont.successive_distances[i - 1].to_string()
        };
        let reason = serde_json::to_value(r.stop_reason)?;
        levels.push(row![
            i,
            r.eps_used,
            r.iterations,
            reason.as_str().unwrap_or_default(),
            r.objective(),
            r.misfit,
            se,
            sf,
            cont.distance_to_final[i],
            succ
        ]);
        identification_checks(&mut report, &format!("[eps={}]", r.eps_used), r, ic.stop_tol);
        let iters = iteration_table(r);
        report.table(format!("iterations_level{i}.csv"), iters);
    }
    report.check(Check::flag("successive distances decreasing", cont.successive_decreasing()).qualitative());
    let last = cont.results.last().expect("validated non-empty");
    report.table("levels.csv", levels);
    report.table("parameters.csv", parameter_table(&last.e_hat, &last.f_hat));
    report.summary = json!({
        "successive_distances": cont.successive_distances,
        "distance_to_final": cont.distance_to_final,
        "successive_decreasing": cont.successive_decreasing(),
        "stop_reasons": cont.results.iter().map(|r| r.stop_reason).collect::<Vec<StopReason>>(),
    });
    Ok(report)
}
