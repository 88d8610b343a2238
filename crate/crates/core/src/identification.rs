//! Regularized output-least-squares identification of `(e, f)`.
//!
//! Minimizes
//!
//! ```text
//! Phi(e, f) = 1/2 |S_eps(e, f) - obs|^2 + alpha/2 |e|_E^2 + beta/2 |f|_F^2
//! ```
//!
//! over the parameter boxes by projected gradient with Armijo backtracking,
//! taking the gradient from the adjoint state.

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{MisfitNorm, ParameterField, Problem};
use crate::error::{Error, Result};
use crate::forward::{solve_vi_oracle, ForwardState, SolutionMap, SolverOptions};
use crate::kernels::Smoothing;
use crate::linalg::bilinear;
use crate::sensitivity::{Linearization, OptimalityBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoRule {
    /// Trial step of the first iteration (and the fallback when the
    /// Barzilai-Borwein estimate is unusable).
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
    /// Start each line search from the Barzilai-Borwein step length.
    pub barzilai_borwein: bool,
}

impl Default for ArmijoRule {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_backtracks: 50,
            barzilai_borwein: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Strictly decreasing positive smoothing parameters.
    pub eps_schedule: Vec<f64>,
    pub max_iters: usize,
    pub step_rule: ArmijoRule,
    /// Both projected-gradient norms must fall below this.
    pub stop_tol: f64,
    pub noise_level: f64,
    pub misfit: MisfitNorm,
    pub free_e: bool,
    pub free_f: bool,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-8,
            beta: 1e-8,
            eps_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4],
            max_iters: 500,
            step_rule: ArmijoRule::default(),
            stop_tol: 1e-8,
            noise_level: 0.0,
            misfit: MisfitNorm::L2,
            free_e: true,
            free_f: true,
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and nonnegative, got {v}")))
            }
        };
        nonneg("identify.alpha", self.alpha)?;
        nonneg("identify.beta", self.beta)?;
        nonneg("identify.stop_tol", self.stop_tol)?;
        nonneg("identify.noise_level", self.noise_level)?;
        if self.eps_schedule.is_empty() {
            return Err(Error::config("identify.eps_schedule", "must not be empty"));
        }
        if self.eps_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::config("identify.eps_schedule", "entries must be positive"));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("identify.eps_schedule", "must be strictly decreasing"));
        }
        let r = &self.step_rule;
        if !(r.initial_step.is_finite() && r.initial_step > 0.0) {
            return Err(Error::config("identify.step_rule.initial_step", "must be positive"));
        }
        for (name, v) in [
            ("identify.step_rule.backtrack", r.backtrack),
            ("identify.step_rule.sufficient_decrease", r.sufficient_decrease),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if !self.free_e && !self.free_f {
            return Err(Error::config("identify", "at least one of free_e, free_f must be set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    MaxIterations,
    /// No step length satisfied the Armijo condition; the iterate is
    /// stationary to working precision.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub e_hat: ParameterField,
    pub f_hat: ParameterField,
    pub objective_history: Vec<f64>,
    /// `(stationarity_e, stationarity_f)` per iterate.
    pub stationarity_history: Vec<(f64, f64)>,
    pub final_state: ForwardState,
    pub eps_used: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Misfit part of the final objective.
    pub misfit: f64,
}

impl IdentificationResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history is never empty")
    }

    pub fn stationarity(&self) -> (f64, f64) {
        *self.stationarity_history.last().expect("history is never empty")
    }
}

/// Objective, state and optimality data at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub e: ParameterField,
    pub f: ParameterField,
    pub state: ForwardState,
    pub misfit: f64,
    pub objective: f64,
}

/// The reduced regularized objective `Phi` as a function of `(e, f)`.
pub struct ReducedObjective<'a> {
    map: SolutionMap<'a>,
    observation: &'a DVector<f64>,
    eps: f64,
    alpha: f64,
    beta: f64,
    misfit: MisfitNorm,
}

impl<'a> ReducedObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: &'a Problem,
        kernel: &'a dyn Smoothing,
        solver: SolverOptions,
        observation: &'a DVector<f64>,
        eps: f64,
        alpha: f64,
        beta: f64,
        misfit: MisfitNorm,
    ) -> Result<Self> {
        problem.check_nodal(observation, "observation")?;
        Ok(Self {
            map: SolutionMap::new(problem, kernel, solver),
            observation,
            eps,
            alpha,
            beta,
            misfit,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn evaluate(&self, e: &ParameterField, f: &ParameterField, warm: Option<&DVector<f64>>) -> Result<Evaluation> {
        let state = self.map.solve_from(e, f, self.eps, warm)?;
        let misfit = self.map.problem().misfit(&state.u, self.observation, self.misfit);
        let objective = misfit
            + 0.5 * self.alpha * bilinear(e.gram(), e.values(), e.values())
            + 0.5 * self.beta * bilinear(f.gram(), f.values(), f.values());
        Ok(Evaluation {
            e: e.clone(),
            f: f.clone(),
            state,
            misfit,
            objective,
        })
    }

    pub fn value(&self, e: &ParameterField, f: &ParameterField) -> Result<f64> {
        Ok(self.evaluate(e, f, None)?.objective)
    }

    /// Adjoint-based gradient at an evaluated point.
    pub fn gradient(&self, at: &Evaluation) -> Result<OptimalityBundle> {
        let lin = Linearization::new(self.map.problem(), &at.state, &at.e, &at.f, self.map.kernel(), self.eps)?;
        let (p, _) = lin.adjoint(self.observation, self.misfit)?;
        lin.reduced_gradients(&p, &at.e, &at.f, self.alpha, self.beta)
    }
}

fn masked(g: &DVector<f64>, free: bool) -> DVector<f64> {
    if free {
        g.clone()
    } else {
        DVector::zeros(g.len())
    }
}

fn stationarity(field: &ParameterField, grad: &DVector<f64>) -> f64 {
    let x = field.values();
    (x - field.project(&(x - grad))).norm()
}

/// Masked `(grad_e, grad_f)` with their stationarity measures.
type MaskedGradient = (DVector<f64>, DVector<f64>, (f64, f64));

/// Projected-gradient identification at a fixed smoothing parameter.
#[allow(clippy::too_many_arguments)]
pub fn identify(
    config: &IdentificationConfig,
    problem: &Problem,
    observation: &DVector<f64>,
    e0: &ParameterField,
    f0: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    solver: &SolverOptions,
) -> Result<IdentificationResult> {
    config.validate()?;
    let objective = ReducedObjective::new(problem, kernel, *solver, observation, eps, config.alpha, config.beta, config.misfit)?;
    let wrap = |iteration: usize, e: &ParameterField, f: &ParameterField| {
        let e = e.values().as_slice().to_vec();
        let f = f.values().as_slice().to_vec();
        move |source: Error| Error::Identification {
            iteration,
            e,
            f,
            source: Box::new(source),
        }
    };

    let mut current = objective.evaluate(e0, f0, None).map_err(wrap(0, e0, f0))?;
    let grad_at = |ev: &Evaluation, it: usize| -> Result<MaskedGradient> {
        let b = objective.gradient(ev).map_err(wrap(it, &ev.e, &ev.f))?;
        let ge = masked(&b.grad_e, config.free_e);
        let gf = masked(&b.grad_f, config.free_f);
        let st = (stationarity(&ev.e, &ge), stationarity(&ev.f, &gf));
        Ok((ge, gf, st))
    };
    let (mut ge, mut gf, mut st) = grad_at(&current, 0)?;
    let mut objective_history = vec![current.objective];
    let mut stationarity_history = vec![st];
    let rule = &config.step_rule;
    let mut trial_step = rule.initial_step;
    let mut iterations = 0;
    let stop_reason;

    loop {
        if st.0 <= config.stop_tol && st.1 <= config.stop_tol {
            stop_reason = StopReason::Stationary;
            break;
        }
        if iterations >= config.max_iters {
            stop_reason = StopReason::MaxIterations;
            break;
        }
        let e_vals = current.e.values().clone();
        let f_vals = current.f.values().clone();
        let mut step = trial_step;
        let mut accepted = None;
        for _ in 0..=rule.max_backtracks {
            let e_new = current.e.project(&(&e_vals - step * &ge));
            let f_new = current.f.project(&(&f_vals - step * &gf));
            let de = &e_new - &e_vals;
            let df = &f_new - &f_vals;
            let predicted = ge.dot(&de) + gf.dot(&df);
            if de.amax() == 0.0 && df.amax() == 0.0 {
                break;
            }
            let e_field = current.e.with_values(e_new).map_err(wrap(iterations, &current.e, &current.f))?;
            let f_field = current.f.with_values(f_new).map_err(wrap(iterations, &current.e, &current.f))?;
            let trial = objective
                .evaluate(&e_field, &f_field, Some(&current.state.u))
                .map_err(wrap(iterations + 1, &e_field, &f_field))?;
            if trial.objective <= current.objective + rule.sufficient_decrease * predicted {
                accepted = Some((trial, de, df));
                break;
            }
            step *= rule.backtrack;
        }
        let Some((next, de, df)) = accepted else {
            stop_reason = StopReason::LineSearchStalled;
            break;
        };
        iterations += 1;
        let (ge_new, gf_new, st_new) = grad_at(&next, iterations)?;
        trial_step = rule.initial_step;
        if rule.barzilai_borwein {
            let ss = de.norm_squared() + df.norm_squared();
            let sy = de.dot(&(&ge_new - &ge)) + df.dot(&(&gf_new - &gf));
            if sy > 0.0 && ss > 0.0 {
                trial_step = (ss / sy).clamp(1e-12, 1e12);
            }
        }
        current = next;
        ge = ge_new;
        gf = gf_new;
        st = st_new;
        objective_history.push(current.objective);
        stationarity_history.push(st);
    }

    Ok(IdentificationResult {
        misfit: current.misfit,
        e_hat: current.e,
        f_hat: current.f,
        objective_history,
        stationarity_history,
        final_state: current.state,
        eps_used: eps,
        iterations,
        stop_reason,
    })
}

/// Identification over a decreasing smoothing schedule, warm-started.
#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub results: Vec<IdentificationResult>,
    /// Parameter distance of each level's optimum to the last level's.
    pub distance_to_final: Vec<f64>,
    /// Distance between optima of consecutive levels.
    pub successive_distances: Vec<f64>,
}

impl ContinuationReport {
    pub fn successive_decreasing(&self) -> bool {
        self.successive_distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// `sqrt(|e1 - e2|_E^2 + |f1 - f2|_F^2)`.
pub fn parameter_distance(a: &IdentificationResult, b: &IdentificationResult) -> f64 {
    let de = a.e_hat.values() - b.e_hat.values();
    let df = a.f_hat.values() - b.f_hat.values();
    (bilinear(a.e_hat.gram(), &de, &de) + bilinear(a.f_hat.gram(), &df, &df))
        .max(0.0)
        .sqrt()
}

#[allow(clippy::too_many_arguments)]
pub fn continuation_identify(
    config: &IdentificationConfig,
    problem: &Problem,
    observation: &DVector<f64>,
    e0: &ParameterField,
    f0: &ParameterField,
    kernel: &dyn Smoothing,
    solver: &SolverOptions,
) -> Result<ContinuationReport> {
    config.validate()?;
    let mut results: Vec<IdentificationResult> = Vec::with_capacity(config.eps_schedule.len());
    for &eps in &config.eps_schedule {
        let (e_start, f_start) = match results.last() {
            Some(prev) => (prev.e_hat.clone(), prev.f_hat.clone()),
            None => (e0.clone(), f0.clone()),
        };
        results.push(identify(config, problem, observation, &e_start, &f_start, kernel, eps, solver)?);
    }
    let last = results.last().expect("schedule is non-empty");
    let distance_to_final = results.iter().map(|r| parameter_distance(r, last)).collect();
    let successive_distances = results
        .windows(2)
        .map(|w| parameter_distance(&w[0], &w[1]))
        .collect();
    Ok(ContinuationReport {
        results,
        distance_to_final,
        successive_distances,
    })
}

/// `S(e_true, f_true)` from the unregularized solver plus uniform noise of
/// amplitude `noise_level * |u|_inf` on the free nodes.
pub fn synthesize_observation(
    problem: &Problem,
    e_true: &ParameterField,
    f_true: &ParameterField,
    noise_level: f64,
    seed: u64,
    solver: &SolverOptions,
) -> Result<DVector<f64>> {
    if !(noise_level.is_finite() && noise_level >= 0.0) {
        return Err(Error::Domain(format!("noise level must be nonnegative, got {noise_level}")));
    }
    let op = problem.operator(e_true)?;
    let state = solve_vi_oracle(&op, problem.mesh(), f_true, solver)?;
    let mut obs = state.u;
    if noise_level > 0.0 {
        let amplitude = noise_level * obs.amax();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in 0..problem.num_dofs() {
            let node = problem.dofs().node(d);
            obs[node] += amplitude * rng.random_range(-1.0..=1.0);
        }
    }
    Ok(obs)
}
