use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use super::field::{ellipticity_gram, friction_gram, Bounds, FieldKind, ParameterField};
use super::mesh::Mesh;
use super::operator::{
    assemble_load, assemble_operator, assemble_weighted, form_matrices, local_matrices, DiscreteOperator,
    DofMap, Form, LocalMatrix, Source,
};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, spmv};

/// Norm used in the output-least-squares misfit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisfitNorm {
    /// Mass-weighted L2 norm.
    #[default]
    L2,
    /// Discrete H1 norm (stiffness plus mass).
    V,
}

/// A fully discretized forward problem: mesh, form, datum, bounds and the
/// derived matrices that do not depend on the parameters.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Mesh,
    form: Form,
    source: Source,
    dofs: DofMap,
    local: Vec<LocalMatrix>,
    load: DVector<f64>,
    mass: CscMatrix<f64>,
    h1: CscMatrix<f64>,
    e_gram: Arc<CscMatrix<f64>>,
    f_gram: Arc<CscMatrix<f64>>,
    e_bounds: Bounds,
    f_bounds: Bounds,
}

impl Problem {
    pub fn new(mesh: Mesh, form: Form, source: Source, e_bounds: Bounds, f_bounds: Bounds) -> Result<Self> {
        if e_bounds.lower <= 0.0 {
            return Err(Error::config(
                "ellipticity bounds",
                format!("lower bound must be positive, got {}", e_bounds.lower),
            ));
        }
        if f_bounds.lower < 0.0 {
            return Err(Error::config(
                "friction bounds",
                format!("lower bound must be nonnegative, got {}", f_bounds.lower),
            ));
        }
        let dofs = DofMap::new(&mesh);
        let local = form_matrices(&mesh, form);
        let load = assemble_load(&mesh, &dofs, &source);
        let ones = vec![1.0; mesh.num_elements()];
        let (stiff, mass): (Vec<_>, Vec<_>) =
            mesh.elements().iter().map(|el| local_matrices(&mesh, el)).unzip();
        let mass_m = assemble_weighted(&mesh, &dofs, &mass, &ones);
        let h1 = &assemble_weighted(&mesh, &dofs, &stiff, &ones) + &mass_m;
        if mesh.friction_nodes().iter().any(|d| dofs.dof(d.node).is_none()) {
            return Err(Error::Internal("friction node is constrained".into()));
        }
        let e_gram = Arc::new(ellipticity_gram(&mesh));
        let f_gram = Arc::new(friction_gram(&mesh));
        Ok(Self {
            mesh,
            form,
            source,
            dofs,
            local,
            load,
            mass: mass_m,
            h1,
            e_gram,
            f_gram,
            e_bounds,
            f_bounds,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    pub fn num_friction(&self) -> usize {
        self.mesh.friction_nodes().len()
    }

    pub fn e_bounds(&self) -> Bounds {
        self.e_bounds
    }

    pub fn f_bounds(&self) -> Bounds {
        self.f_bounds
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn mass(&self) -> &CscMatrix<f64> {
        &self.mass
    }

    /// Gram matrix of the discrete V norm on the free nodes.
    pub fn v_gram(&self) -> &CscMatrix<f64> {
        &self.h1
    }

    pub fn misfit_gram(&self, norm: MisfitNorm) -> &CscMatrix<f64> {
        match norm {
            MisfitNorm::L2 => &self.mass,
            MisfitNorm::V => &self.h1,
        }
    }

    pub fn ellipticity(&self, values: DVector<f64>) -> Result<ParameterField> {
        ParameterField::new(
            FieldKind::Ellipticity,
            values,
            self.e_bounds,
            Arc::clone(&self.e_gram),
        )
    }

    pub fn friction(&self, values: DVector<f64>) -> Result<ParameterField> {
        ParameterField::new(FieldKind::Friction, values, self.f_bounds, Arc::clone(&self.f_gram))
    }

    pub fn constant_ellipticity(&self, value: f64) -> Result<ParameterField> {
        self.ellipticity(DVector::from_element(self.num_elements(), value))
    }

    pub fn constant_friction(&self, value: f64) -> Result<ParameterField> {
        self.friction(DVector::from_element(self.num_friction(), value))
    }

    pub fn operator(&self, e: &ParameterField) -> Result<DiscreteOperator> {
        assemble_operator(&self.mesh, e, self.form, &self.source)
    }

    pub fn to_nodal(&self, x: &DVector<f64>) -> DVector<f64> {
        self.dofs.to_nodal(x)
    }

    pub fn to_dofs(&self, u: &DVector<f64>) -> DVector<f64> {
        self.dofs.to_dofs(u)
    }

    pub(crate) fn check_nodal(&self, u: &DVector<f64>, what: &str) -> Result<()> {
        if u.len() != self.mesh.num_nodes() {
            return Err(Error::Domain(format!(
                "{what} must have {} nodal values, got {}",
                self.mesh.num_nodes(),
                u.len()
            )));
        }
        Ok(())
    }

    /// `T(de) u` on the free nodes, for nodal `u`.
    pub fn apply_direction(&self, de: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dofs.len());
        for ((el, a), &c) in self.mesh.elements().iter().zip(&self.local).zip(de.iter()) {
            if c == 0.0 {
                continue;
            }
            let ids = el.nodes();
            for (i, &ni) in ids.iter().enumerate() {
                let Some(di) = self.dofs.dof(ni) else { continue };
                let mut s = 0.0;
                for (j, &nj) in ids.iter().enumerate() {
                    s += a.get(i, j) * u[nj];
                }
                out[di] += c * s;
            }
        }
        out
    }

    /// `t(1_K; u, p)` for every element `K`, for nodal `u`, `p`.
    pub fn element_pairings(&self, u: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.num_elements(),
            self.mesh.elements().iter().zip(&self.local).map(|(el, a)| {
                let ids = el.nodes();
                let mut uk = [0.0; 3];
                let mut pk = [0.0; 3];
                for (k, &n) in ids.iter().enumerate() {
                    uk[k] = u[n];
                    pk[k] = p[n];
                }
                a.bilinear(&uk[..ids.len()], &pk[..ids.len()])
            }),
        )
    }

    /// Discrete V norm of a nodal vector.
    pub fn v_norm(&self, u: &DVector<f64>) -> f64 {
        let x = self.to_dofs(u);
        bilinear(&self.h1, &x, &x).max(0.0).sqrt()
    }

    /// `0.5 |u - obs|^2` in the chosen misfit norm (nodal inputs).
    pub fn misfit(&self, u: &DVector<f64>, observation: &DVector<f64>, norm: MisfitNorm) -> f64 {
        let r = self.to_dofs(&(u - observation));
        0.5 * bilinear(self.misfit_gram(norm), &r, &r)
    }

    /// Riesz representative `W (obs - u)` on the free nodes.
    pub fn misfit_residual(&self, u: &DVector<f64>, observation: &DVector<f64>, norm: MisfitNorm) -> DVector<f64> {
        spmv(self.misfit_gram(norm), &self.to_dofs(&(observation - u)))
    }
}
