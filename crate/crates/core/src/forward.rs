//! Forward solvers for the friction problem.
//!
//! The unregularized problem is the minimization of the convex energy
//!
//! ```text
//! E(u) = 1/2 u^T K u - l^T u + sum_i c_i |u_i|,      c_i = w_i f_i,
//! ```
//!
//! solved by a primal-dual active-set iteration over the three subdifferential
//! cases of each friction node. The regularized problem replaces `|.|` by the
//! smoothed modulus `M_eps` and is solved by damped Newton on the variational
//! equation `K u + gamma^*(f M'_eps(gamma u)) = l`.

use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiscreteOperator, DofMap, FieldKind, Mesh, ParameterField, Problem};
use crate::error::{Error, Result};
use crate::kernels::{check_eps, Smoothing};
use crate::linalg::{diagonal_positions, spmv, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Euclidean norm of the (natural) residual accepted as converged.
    pub tol: f64,
    pub newton_max_iter: usize,
    /// Active-set cap; `None` means `2 |D| + 10`.
    pub active_set_max_iter: Option<usize>,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            newton_max_iter: 100,
            active_set_max_iter: None,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// A converged discrete solution `u` (or `u_eps`).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    /// Nodal values, zero on Dirichlet nodes.
    pub u: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Zero for the unregularized solution.
    pub eps: f64,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
}

/// Friction data restricted to the free nodes.
#[derive(Debug, Clone)]
pub(crate) struct FrictionTerm {
    pub dofs: Vec<usize>,
    pub weights: Vec<f64>,
    /// `w_i f_i`
    pub c: Vec<f64>,
}

impl FrictionTerm {
    pub fn new(mesh: &Mesh, dofs: &DofMap, f: &ParameterField) -> Result<Self> {
        if f.kind() != FieldKind::Friction {
            return Err(Error::Domain("expected a friction field".into()));
        }
        let nodes = mesh.friction_nodes();
        if f.len() != nodes.len() {
            return Err(Error::Domain(format!(
                "friction field has {} values for {} friction nodes",
                f.len(),
                nodes.len()
            )));
        }
        if let Some(v) = f.values().iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("negative friction coefficient {v}")));
        }
        let mut term = FrictionTerm {
            dofs: Vec::with_capacity(nodes.len()),
            weights: Vec::with_capacity(nodes.len()),
            c: Vec::with_capacity(nodes.len()),
        };
        for (d, fi) in nodes.iter().zip(f.values().iter()) {
            let dof = dofs
                .dof(d.node)
                .ok_or_else(|| Error::Domain("friction node carries a Dirichlet condition".into()))?;
            term.dofs.push(dof);
            term.weights.push(d.weight);
            term.c.push(d.weight * fi);
        }
        Ok(term)
    }

    fn nonsmooth(&self, x: &DVector<f64>) -> f64 {
        self.dofs.iter().zip(&self.c).map(|(&d, c)| c * x[d].abs()).sum()
    }

    fn smoothed(&self, x: &DVector<f64>, kernel: &dyn Smoothing, eps: f64) -> f64 {
        self.dofs
            .iter()
            .zip(&self.c)
            .map(|(&d, c)| c * kernel.modulus_unchecked(eps, x[d]).value)
            .sum()
    }
}

fn quadratic_energy(k: &CscMatrix<f64>, l: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&spmv(k, x)) - l.dot(x)
}

fn check_system(op: &DiscreteOperator, dofs: &DofMap) -> Result<()> {
    if op.matrix.nrows() != dofs.len() || op.matrix.ncols() != dofs.len() || op.load.len() != dofs.len() {
        return Err(Error::Domain(format!(
            "operator of size {}x{} does not match {} free nodes",
            op.matrix.nrows(),
            op.matrix.ncols(),
            dofs.len()
        )));
    }
    Ok(())
}

fn shrink(z: f64, c: f64) -> f64 {
    z.signum() * (z.abs() - c).max(0.0)
}

/// Euclidean norm of the natural residual of the nonsmooth problem, scaled by
/// the diagonal of `K` so that it carries the units of `K u - l`.
fn natural_residual(k: &CscMatrix<f64>, diag: &[f64], load: &DVector<f64>, fr: &FrictionTerm, x: &DVector<f64>) -> f64 {
    let mut r = spmv(k, x) - load;
    for (&d, &c) in fr.dofs.iter().zip(&fr.c) {
        let s = diag[d];
        r[d] = s * x[d] - shrink(s * x[d] - r[d], c);
    }
    r.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeCase {
    Positive,
    Negative,
    Stick,
}

/// Minimizer over `[0, 1]` of the convex piecewise quadratic
/// `tau -> E(x + tau d)`.
fn exact_line_search(a: f64, b: f64, fr: &FrictionTerm, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    // phi'(tau) = a tau + b + sum c_i d_i sign(x_i + tau d_i)
    let mut kinks: Vec<(f64, usize)> = fr
        .dofs
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| {
            if d[k] == 0.0 || fr.c[i] == 0.0 {
                return None;
            }
            let t = -x[k] / d[k];
            (t > 0.0 && t < 1.0).then_some((t, i))
        })
        .collect();
    kinks.sort_by(|p, q| p.0.total_cmp(&q.0));
    let slope_at = |tau: f64| -> f64 {
        // right derivative
        let mut s = a * tau + b;
        for (i, &k) in fr.dofs.iter().enumerate() {
            let v = x[k] + tau * d[k];
            let sg = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                d[k].signum()
            };
            s += fr.c[i] * d[k] * sg;
        }
        s
    };
    let mut lo = 0.0;
    let mut breaks: Vec<f64> = kinks.iter().map(|k| k.0).collect();
    breaks.push(1.0);
    for &hi in &breaks {
        let mid = 0.5 * (lo + hi);
        // derivative is affine on (lo, hi); slope a, offset from mid
        let g_mid = slope_at(mid);
        let g_lo = g_mid - a * (mid - lo);
        let g_hi = g_mid + a * (hi - mid);
        if g_lo >= 0.0 {
            return lo;
        }
        if g_hi >= 0.0 && a > 0.0 {
            return (lo - g_lo / a).clamp(lo, hi);
        }
        lo = hi;
    }
    1.0
}

/// Solves the unregularized problem by a primal-dual active-set method with an
/// exact line search on the energy.
pub fn solve_vi_oracle(op: &DiscreteOperator, mesh: &Mesh, f: &ParameterField, options: &SolverOptions) -> Result<ForwardState> {
    let dofs = DofMap::new(mesh);
    check_system(op, &dofs)?;
    let fr = FrictionTerm::new(mesh, &dofs, f)?;
    let k = &op.matrix;
    let l = &op.load;
    let diag_pos = diagonal_positions(k)?;
    let diag: Vec<f64> = diag_pos.iter().map(|&p| k.values()[p]).collect();

    let mut x = SpdFactor::new(k)?.solve(l);
    let energy = |x: &DVector<f64>| quadratic_energy(k, l, x) + fr.nonsmooth(x);
    let mut res = natural_residual(k, &diag, l, &fr, &x);
    let mut residual_history = vec![res];
    let mut energy_history = vec![energy(&x)];
    let cap = options
        .active_set_max_iter
        .unwrap_or(2 * fr.dofs.len() + 10);
    let mut iterations = 0;
    let mut cases: Vec<Option<NodeCase>> = vec![None; fr.dofs.len()];

    while res > options.tol {
        if iterations >= cap {
            return Err(Error::Solver {
                solver: "active-set",
                iterations,
                residual: res,
                message: "iteration cap reached".into(),
            });
        }
        iterations += 1;
        let g = spmv(k, &x) - l;
        let mut rhs = l.clone();
        let mut stick = vec![false; dofs.len()];
        for (i, &d) in fr.dofs.iter().enumerate() {
            let z = diag[d] * x[d] - g[d];
            let case = if z > fr.c[i] {
                NodeCase::Positive
            } else if z < -fr.c[i] {
                NodeCase::Negative
            } else {
                NodeCase::Stick
            };
            match case {
                NodeCase::Positive => rhs[d] -= fr.c[i],
                NodeCase::Negative => rhs[d] += fr.c[i],
                NodeCase::Stick => {
                    stick[d] = true;
                    rhs[d] = 0.0;
                }
            }
            cases[i] = Some(case);
        }
        // eliminate stuck nodes: identity rows and columns
        let mut reduced = k.clone();
        {
            let offsets = reduced.col_offsets().to_vec();
            let rows = reduced.row_indices().to_vec();
            let vals = reduced.values_mut();
            for j in 0..dofs.len() {
                for p in offsets[j]..offsets[j + 1] {
                    let i = rows[p];
                    if stick[i] || stick[j] {
                        vals[p] = if i == j { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        let candidate = SpdFactor::new(&reduced)?.solve(&rhs);
        let e_old = *energy_history.last().unwrap();
        let e_new = energy(&candidate);
        if e_new <= e_old {
            x = candidate;
        } else {
            let d = &candidate - &x;
            let kd = spmv(k, &d);
            let tau = exact_line_search(d.dot(&kd), d.dot(&g), &fr, &x, &d);
            x += tau * d;
            // land exactly on kinks the search stopped at
            for &dof in &fr.dofs {
                if x[dof].abs() <= 1e-15 * (1.0 + x.amax()) {
                    x[dof] = 0.0;
                }
            }
        }
        res = natural_residual(k, &diag, l, &fr, &x);
        residual_history.push(res);
        energy_history.push(energy(&x));
    }

    Ok(ForwardState {
        u: dofs.to_nodal(&x),
        residual_norm: res,
        iterations,
        eps: 0.0,
        residual_history,
        energy_history,
    })
}

/// Jacobian `K + gamma^* diag(f M''_eps(gamma u)) gamma` on the free nodes.
pub(crate) fn regularized_jacobian(
    k: &CscMatrix<f64>,
    diag_pos: &[usize],
    fr: &FrictionTerm,
    kernel: &dyn Smoothing,
    eps: f64,
    x: &DVector<f64>,
) -> CscMatrix<f64> {
    let mut jac = k.clone();
    let vals = jac.values_mut();
    for (&d, &c) in fr.dofs.iter().zip(&fr.c) {
        vals[diag_pos[d]] += c * kernel.modulus_unchecked(eps, x[d]).second_derivative;
    }
    jac
}

pub(crate) fn regularized_residual(
    k: &CscMatrix<f64>,
    load: &DVector<f64>,
    fr: &FrictionTerm,
    kernel: &dyn Smoothing,
    eps: f64,
    x: &DVector<f64>,
) -> DVector<f64> {
    let mut r = spmv(k, x) - load;
    for (&d, &c) in fr.dofs.iter().zip(&fr.c) {
        r[d] += c * kernel.modulus_unchecked(eps, x[d]).first_derivative;
    }
    r
}

/// Solves `K u + gamma^*(f M'_eps(gamma u)) = l` by Newton's method with
/// Armijo backtracking on `1/2 |R|^2`. Starts from `initial` (nodal) when
/// given, otherwise from the frictionless solution.
pub fn solve_regularized(
    op: &DiscreteOperator,
    mesh: &Mesh,
    f: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    options: &SolverOptions,
    initial: Option<&DVector<f64>>,
) -> Result<ForwardState> {
    check_eps(eps)?;
    let dofs = DofMap::new(mesh);
    check_system(op, &dofs)?;
    let fr = FrictionTerm::new(mesh, &dofs, f)?;
    let k = &op.matrix;
    let l = &op.load;
    let diag_pos = diagonal_positions(k)?;

    let mut x = match initial {
        Some(u0) => {
            if u0.len() != mesh.num_nodes() {
                return Err(Error::Domain("initial guess has the wrong length".into()));
            }
            dofs.to_dofs(u0)
        }
        None => SpdFactor::new(k)?.solve(l),
    };
    let energy = |x: &DVector<f64>| quadratic_energy(k, l, x) + fr.smoothed(x, kernel, eps);
    let mut r = regularized_residual(k, l, &fr, kernel, eps, &x);
    let mut res = r.norm();
    let mut residual_history = vec![res];
    let mut energy_history = vec![energy(&x)];
    let mut iterations = 0;

    while res > options.tol {
        if iterations >= options.newton_max_iter {
            return Err(Error::Solver {
                solver: "newton",
                iterations,
                residual: res,
                message: "iteration cap reached".into(),
            });
        }
        iterations += 1;
        let jac = regularized_jacobian(k, &diag_pos, &fr, kernel, eps, &x);
        let step = -SpdFactor::new(&jac)?.solve(&r);
        let merit = 0.5 * res * res;
        let mut tau = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let trial = &x + tau * &step;
            let rt = regularized_residual(k, l, &fr, kernel, eps, &trial);
            let mt = 0.5 * rt.norm_squared();
            if mt <= (1.0 - 2.0 * options.armijo_c * tau) * merit {
                accepted = Some((trial, rt));
                break;
            }
            tau *= options.backtrack;
        }
        let Some((trial, rt)) = accepted else {
            return Err(Error::Solver {
                solver: "newton",
                iterations,
                residual: res,
                message: "line search failed".into(),
            });
        };
        x = trial;
        r = rt;
        res = r.norm();
        residual_history.push(res);
        energy_history.push(energy(&x));
    }

    Ok(ForwardState {
        u: dofs.to_nodal(&x),
        residual_norm: res,
        iterations,
        eps,
        residual_history,
        energy_history,
    })
}

/// Evaluates the solution maps `S(e, f)` (`eps = 0`) and `S_eps(e, f)`,
/// caching the most recently assembled operator.
pub struct SolutionMap<'a> {
    problem: &'a Problem,
    kernel: &'a dyn Smoothing,
    options: SolverOptions,
    cache: Mutex<Option<(DVector<f64>, Arc<DiscreteOperator>)>>,
}

impl<'a> SolutionMap<'a> {
    pub fn new(problem: &'a Problem, kernel: &'a dyn Smoothing, options: SolverOptions) -> Self {
        Self {
            problem,
            kernel,
            options,
            cache: Mutex::new(None),
        }
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn kernel(&self) -> &'a dyn Smoothing {
        self.kernel
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// `T(e)` and `l`, reusing the cached assembly when `e` is unchanged.
    pub fn operator(&self, e: &ParameterField) -> Result<Arc<DiscreteOperator>> {
        let mut cache = self.cache.lock().expect("operator cache poisoned");
        if let Some((key, op)) = cache.as_ref() {
            if key == e.values() {
                return Ok(Arc::clone(op));
            }
        }
        let op = Arc::new(self.problem.operator(e)?);
        *cache = Some((e.values().clone(), Arc::clone(&op)));
        Ok(op)
    }

    pub fn solve(&self, e: &ParameterField, f: &ParameterField, eps: f64) -> Result<ForwardState> {
        self.solve_from(e, f, eps, None)
    }

    pub fn solve_from(
        &self,
        e: &ParameterField,
        f: &ParameterField,
        eps: f64,
        initial: Option<&DVector<f64>>,
    ) -> Result<ForwardState> {
        let op = self.operator(e)?;
        let mesh = self.problem.mesh();
        if eps == 0.0 {
            solve_vi_oracle(&op, mesh, f, &self.options)
        } else {
            solve_regularized(&op, mesh, f, self.kernel, eps, &self.options, initial)
        }
    }
}

/// One-shot `S(e, f)` / `S_eps(e, f)` without caching.
pub fn solution_map(
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    eps: f64,
    kernel: &dyn Smoothing,
    options: &SolverOptions,
) -> Result<ForwardState> {
    SolutionMap::new(problem, kernel, *options).solve(e, f, eps)
}
