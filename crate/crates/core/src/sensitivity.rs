//! Derivatives of the regularized solution map.
//!
//! All linear systems share the Jacobian
//! `A = T(e) + gamma^* diag(f M''_eps(gamma u_eps)) gamma` at a converged
//! regularized state; [`Linearization`] factorizes it once.
//!
//! * ellipticity direction `de`: `A du = -T(de) u_eps`
//! * friction direction `df`:    `A du = -gamma^*(df M'_eps(gamma u_eps))`
//! * adjoint:                    `A p = W (obs - u_eps)`, with `W` the misfit Gram
//!
//! Reduced gradients of `J_eps + alpha/2 |e|^2 + beta/2 |f|^2`:
//! `grad_e[K] = alpha (G_e e)[K] + t(1_K; u_eps, p)` and
//! `grad_f[i] = beta (G_f f)[i] + w_i M'_eps(u_i) p_i`.

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;

use crate::discretization::{FieldKind, MisfitNorm, ParameterField, Problem};
use crate::error::{Error, Result};
use crate::forward::{regularized_jacobian, FrictionTerm, ForwardState};
use crate::kernels::{check_eps, Smoothing};
use crate::linalg::{diagonal_positions, spmv, SpdFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    Ellipticity,
    Friction,
    Joint,
}

/// Directional derivative of `S_eps` in one parameter direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub direction_kind: DirectionKind,
    /// Nodal derivative, zero on Dirichlet nodes.
    pub delta_u: DVector<f64>,
    /// Euclidean residual of the defining linear system.
    pub residual: f64,
}

/// Adjoint state, reduced gradients and projected-gradient stationarity.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityBundle {
    pub adjoint_p: DVector<f64>,
    pub grad_e: DVector<f64>,
    pub grad_f: DVector<f64>,
    pub stationarity_e: f64,
    pub stationarity_f: f64,
}

/// `|x - P(x - g)|` for the box of `field`.
pub fn projected_gradient_norm(field: &ParameterField, grad: &DVector<f64>) -> f64 {
    let x = field.values();
    (x - field.project(&(x - grad))).norm()
}

/// Factorized Jacobian of the regularized equation at a converged state.
pub struct Linearization<'a> {
    problem: &'a Problem,
    u: DVector<f64>,
    friction: FrictionTerm,
    first: Vec<f64>,
    jacobian: CscMatrix<f64>,
    factor: SpdFactor,
}

impl<'a> Linearization<'a> {
    pub fn new(
        problem: &'a Problem,
        state: &ForwardState,
        e: &ParameterField,
        f: &ParameterField,
        kernel: &dyn Smoothing,
        eps: f64,
    ) -> Result<Self> {
        check_eps(eps)?;
        if state.eps != eps {
            return Err(Error::Domain(format!(
                "state was computed with eps = {}, linearizing at eps = {eps}",
                state.eps
            )));
        }
        problem.check_nodal(&state.u, "state")?;
        if e.kind() != FieldKind::Ellipticity {
            return Err(Error::Domain("expected an ellipticity field".into()));
        }
        let op = problem.operator(e)?;
        let friction = FrictionTerm::new(problem.mesh(), problem.dofs(), f)?;
        let x = problem.to_dofs(&state.u);
        let diag = diagonal_positions(&op.matrix)?;
        let jacobian = regularized_jacobian(&op.matrix, &diag, &friction, kernel, eps, &x);
        let factor = SpdFactor::new(&jacobian)?;
        let first = friction
            .dofs
            .iter()
            .map(|&d| kernel.modulus_unchecked(eps, x[d]).first_derivative)
            .collect();
        Ok(Self {
            problem,
            u: state.u.clone(),
            friction,
            first,
            jacobian,
            factor,
        })
    }

    pub fn jacobian(&self) -> &CscMatrix<f64> {
        &self.jacobian
    }

    /// `M'_eps(u_i)` at the friction nodes.
    pub fn modulus_slopes(&self) -> &[f64] {
        &self.first
    }

    fn solve_dofs(&self, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
        let x = self.factor.solve(rhs);
        let residual = (spmv(&self.jacobian, &x) - rhs).norm();
        (x, residual)
    }

    /// Right-hand side `-T(de) u_eps` on the free nodes.
    pub fn rhs_ellipticity(&self, de: &DVector<f64>) -> Result<DVector<f64>> {
        if de.len() != self.problem.num_elements() {
            return Err(Error::Domain(format!(
                "ellipticity direction needs {} values, got {}",
                self.problem.num_elements(),
                de.len()
            )));
        }
        Ok(-self.problem.apply_direction(de, &self.u))
    }

    /// Right-hand side `-gamma^*(df M'_eps(gamma u_eps))` on the free nodes.
    pub fn rhs_friction(&self, df: &DVector<f64>) -> Result<DVector<f64>> {
        if df.len() != self.friction.dofs.len() {
            return Err(Error::Domain(format!(
                "friction direction needs {} values, got {}",
                self.friction.dofs.len(),
                df.len()
            )));
        }
        let mut rhs = DVector::zeros(self.problem.num_dofs());
        for (i, &d) in self.friction.dofs.iter().enumerate() {
            rhs[d] = -self.friction.weights[i] * df[i] * self.first[i];
        }
        Ok(rhs)
    }

    pub fn sensitivity_e(&self, de: &DVector<f64>) -> Result<Sensitivity> {
        let (x, residual) = self.solve_dofs(&self.rhs_ellipticity(de)?);
        Ok(Sensitivity {
            direction_kind: DirectionKind::Ellipticity,
            delta_u: self.problem.to_nodal(&x),
            residual,
        })
    }

    pub fn sensitivity_f(&self, df: &DVector<f64>) -> Result<Sensitivity> {
        let (x, residual) = self.solve_dofs(&self.rhs_friction(df)?);
        Ok(Sensitivity {
            direction_kind: DirectionKind::Friction,
            delta_u: self.problem.to_nodal(&x),
            residual,
        })
    }

    /// Derivative along `(de, df)` jointly: one solve with the summed
    /// right-hand sides.
    pub fn sensitivity_joint(&self, de: &DVector<f64>, df: &DVector<f64>) -> Result<Sensitivity> {
        let rhs = self.rhs_ellipticity(de)? + self.rhs_friction(df)?;
        let (x, residual) = self.solve_dofs(&rhs);
        Ok(Sensitivity {
            direction_kind: DirectionKind::Joint,
            delta_u: self.problem.to_nodal(&x),
            residual,
        })
    }

    /// Adjoint state `p` (nodal) for the misfit against `observation`.
    pub fn adjoint(&self, observation: &DVector<f64>, norm: MisfitNorm) -> Result<(DVector<f64>, f64)> {
        self.problem.check_nodal(observation, "observation")?;
        let rhs = self.problem.misfit_residual(&self.u, observation, norm);
        let (x, residual) = self.solve_dofs(&rhs);
        Ok((self.problem.to_nodal(&x), residual))
    }

    pub fn reduced_gradients(
        &self,
        adjoint_p: &DVector<f64>,
        e: &ParameterField,
        f: &ParameterField,
        alpha: f64,
        beta: f64,
    ) -> Result<OptimalityBundle> {
        self.problem.check_nodal(adjoint_p, "adjoint")?;
        let mut grad_e = self.problem.element_pairings(&self.u, adjoint_p);
        if alpha != 0.0 {
            grad_e += alpha * spmv(e.gram(), e.values());
        }
        let mut grad_f = DVector::from_iterator(
            self.friction.dofs.len(),
            self.friction.dofs.iter().enumerate().map(|(i, &d)| {
                let node = self.problem.dofs().node(d);
                self.friction.weights[i] * self.first[i] * adjoint_p[node]
            }),
        );
        if beta != 0.0 {
            grad_f += beta * spmv(f.gram(), f.values());
        }
        Ok(OptimalityBundle {
            adjoint_p: adjoint_p.clone(),
            stationarity_e: projected_gradient_norm(e, &grad_e),
            stationarity_f: projected_gradient_norm(f, &grad_f),
            grad_e,
            grad_f,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn sensitivity_e(
    state: &ForwardState,
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    delta_e: &DVector<f64>,
) -> Result<Sensitivity> {
    Linearization::new(problem, state, e, f, kernel, eps)?.sensitivity_e(delta_e)
}

#[allow(clippy::too_many_arguments)]
pub fn sensitivity_f(
    state: &ForwardState,
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    delta_f: &DVector<f64>,
) -> Result<Sensitivity> {
    Linearization::new(problem, state, e, f, kernel, eps)?.sensitivity_f(delta_f)
}

#[allow(clippy::too_many_arguments)]
pub fn adjoint_solve(
    state: &ForwardState,
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    observation: &DVector<f64>,
    misfit_norm: MisfitNorm,
) -> Result<DVector<f64>> {
    Ok(Linearization::new(problem, state, e, f, kernel, eps)?
        .adjoint(observation, misfit_norm)?
        .0)
}

#[allow(clippy::too_many_arguments)]
pub fn reduced_gradients(
    state: &ForwardState,
    adjoint_p: &DVector<f64>,
    problem: &Problem,
    e: &ParameterField,
    f: &ParameterField,
    kernel: &dyn Smoothing,
    eps: f64,
    alpha: f64,
    beta: f64,
) -> Result<OptimalityBundle> {
    Linearization::new(problem, state, e, f, kernel, eps)?.reduced_gradients(adjoint_p, e, f, alpha, beta)
}
