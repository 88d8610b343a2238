use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use super::field::{FieldKind, ParameterField};
use super::mesh::{Element, Mesh};
use crate::error::{Error, Result};
use crate::linalg::csc_from_triplets;

/// Bilinear part of `t(e; u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `∫ e ∇u·∇v`
    #[default]
    GradGrad,
    /// `∫ e (∇u·∇v + u v)`
    GradGradPlusMass,
}

/// Right-hand side datum `g(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Constant { value: f64 },
    /// `c0 + cx x + cy y`
    Affine { c0: f64, cx: f64, cy: f64 },
}

impl Default for Source {
    fn default() -> Self {
        Source::Constant { value: 1.0 }
    }
}

impl Source {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match *self {
            Source::Constant { value } => value,
            Source::Affine { c0, cx, cy } => c0 + cx * p[0] + cy * p[1],
        }
    }
}

/// Numbering of the free (non-Dirichlet) nodes.
#[derive(Debug, Clone)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut node_to_dof = vec![None; mesh.num_nodes()];
        let mut dof_to_node = Vec::new();
        for (i, slot) in node_to_dof.iter_mut().enumerate() {
            if !mesh.is_dirichlet(i) {
                *slot = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        Self {
            node_to_dof,
            dof_to_node,
        }
    }

    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    /// Nodal vector with zeros on Dirichlet nodes.
    pub fn to_nodal(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.node_to_dof.len());
        for (d, &n) in self.dof_to_node.iter().enumerate() {
            u[n] = x[d];
        }
        u
    }

    /// Restriction of a nodal vector to the free nodes.
    pub fn to_dofs(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.dof_to_node.iter().map(|&n| u[n]))
    }
}

/// Local matrix of one element: `a[i][j]` couples local nodes `i`, `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalMatrix {
    Segment([[f64; 2]; 2]),
    Triangle([[f64; 3]; 3]),
}

impl LocalMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            LocalMatrix::Segment(a) => a[i][j],
            LocalMatrix::Triangle(a) => a[i][j],
        }
    }

    /// `x^T A y` on local coefficient slices.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                s += xi * self.get(i, j) * yj;
            }
        }
        s
    }
}

/// Element matrices of `t(1_K; ., .)` for a given form, plus the plain P1
/// stiffness and mass (used for norms).
pub fn local_matrices(mesh: &Mesh, element: &Element) -> (LocalMatrix, LocalMatrix) {
    match *element {
        Element::Segment([a, b]) => {
            let h = mesh.nodes()[b][0] - mesh.nodes()[a][0];
            let k = 1.0 / h;
            let stiff = LocalMatrix::Segment([[k, -k], [-k, k]]);
            let mass = LocalMatrix::Segment([[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]);
            (stiff, mass)
        }
        Element::Triangle(ids) => {
            let p = ids.map(|i| mesh.nodes()[i]);
            let area = mesh.measure(element);
            // gradients of barycentric coordinates times 2*area
            let g = [
                [p[1][1] - p[2][1], p[2][0] - p[1][0]],
                [p[2][1] - p[0][1], p[0][0] - p[2][0]],
                [p[0][1] - p[1][1], p[1][0] - p[0][0]],
            ];
            let mut stiff = [[0.0; 3]; 3];
            let mut mass = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    stiff[i][j] = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) / (4.0 * area);
                    mass[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                }
            }
            (LocalMatrix::Triangle(stiff), LocalMatrix::Triangle(mass))
        }
    }
}

fn combine(form: Form, stiff: LocalMatrix, mass: LocalMatrix) -> LocalMatrix {
    match (form, stiff, mass) {
        (Form::GradGrad, s, _) => s,
        (Form::GradGradPlusMass, LocalMatrix::Segment(s), LocalMatrix::Segment(m)) => {
            let mut a = s;
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] += m[i][j];
                }
            }
            LocalMatrix::Segment(a)
        }
        (Form::GradGradPlusMass, LocalMatrix::Triangle(s), LocalMatrix::Triangle(m)) => {
            let mut a = s;
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += m[i][j];
                }
            }
            LocalMatrix::Triangle(a)
        }
        _ => unreachable!("stiffness and mass come from the same element"),
    }
}

/// The operator-level view of `t(1_K; ., .)` for each element `K`.
pub fn form_matrices(mesh: &Mesh, form: Form) -> Vec<LocalMatrix> {
    mesh.elements()
        .iter()
        .map(|el| {
            let (s, m) = local_matrices(mesh, el);
            combine(form, s, m)
        })
        .collect()
}

/// `T(e)` on the free nodes together with the load vector `l`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub matrix: CscMatrix<f64>,
    pub load: DVector<f64>,
}

/// Sums `coeff[k] * local[k]` over elements into a free-node matrix.
pub fn assemble_weighted(
    mesh: &Mesh,
    dofs: &DofMap,
    local: &[LocalMatrix],
    coeff: &[f64],
) -> CscMatrix<f64> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_elements());
    for ((el, a), &c) in mesh.elements().iter().zip(local).zip(coeff) {
        let ids = el.nodes();
        for (i, &ni) in ids.iter().enumerate() {
            let Some(di) = dofs.dof(ni) else { continue };
            for (j, &nj) in ids.iter().enumerate() {
                let Some(dj) = dofs.dof(nj) else { continue };
                triplets.push((di, dj, c * a.get(i, j)));
            }
        }
    }
    csc_from_triplets(dofs.len(), dofs.len(), &triplets)
}

/// Matrix part of `T(e)` for an arbitrary (not necessarily admissible)
/// coefficient vector. Linear in `e`.
pub fn operator_matrix(mesh: &Mesh, form: Form, e: &[f64]) -> Result<CscMatrix<f64>> {
    if e.len() != mesh.num_elements() {
        return Err(Error::Domain(format!(
            "expected {} element coefficients, got {}",
            mesh.num_elements(),
            e.len()
        )));
    }
    let dofs = DofMap::new(mesh);
    Ok(assemble_weighted(mesh, &dofs, &form_matrices(mesh, form), e))
}

/// One-point quadrature load on the free nodes.
pub fn assemble_load(mesh: &Mesh, dofs: &DofMap, g: &Source) -> DVector<f64> {
    let mut load = DVector::zeros(dofs.len());
    for el in mesh.elements() {
        let ids = el.nodes();
        let share = g.eval(mesh.centroid(el)) * mesh.measure(el) / ids.len() as f64;
        for &n in ids {
            if let Some(d) = dofs.dof(n) {
                load[d] += share;
            }
        }
    }
    load
}

/// Assembles `T(e)` with elementwise coefficient `e` and the load from `g`,
/// with Dirichlet rows and columns eliminated.
pub fn assemble_operator(
    mesh: &Mesh,
    e: &ParameterField,
    form: Form,
    g: &Source,
) -> Result<DiscreteOperator> {
    if e.kind() != FieldKind::Ellipticity {
        return Err(Error::Domain("operator needs an ellipticity field".into()));
    }
    let b = e.bounds();
    if b.lower <= 0.0 {
        return Err(Error::Domain(format!(
            "ellipticity lower bound must be positive, got {}",
            b.lower
        )));
    }
    if let Some(v) = e.values().iter().find(|v| !b.contains(**v)) {
        return Err(Error::Domain(format!("ellipticity value {v} outside bounds")));
    }
    let dofs = DofMap::new(mesh);
    let matrix = assemble_weighted(
        mesh,
        &dofs,
        &form_matrices(mesh, form),
        e.values().as_slice(),
    );
    Ok(DiscreteOperator {
        matrix,
        load: assemble_load(mesh, &dofs, g),
    })
}

/// Restriction of a nodal vector to the friction nodes.
pub fn trace_apply(mesh: &Mesh, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != mesh.num_nodes() {
        return Err(Error::Domain(format!(
            "trace expects {} nodal values, got {}",
            mesh.num_nodes(),
            v.len()
        )));
    }
    Ok(DVector::from_iterator(
        mesh.friction_nodes().len(),
        mesh.friction_nodes().iter().map(|d| v[d.node]),
    ))
}

/// Adjoint of [`trace_apply`] with respect to the weighted inner product on
/// the friction set: scatters `w_i mu_i` to the friction nodes.
pub fn trace_adjoint(mesh: &Mesh, mu: &DVector<f64>) -> Result<DVector<f64>> {
    let nf = mesh.friction_nodes().len();
    if mu.len() != nf {
        return Err(Error::Domain(format!(
            "trace adjoint expects {nf} values, got {}",
            mu.len()
        )));
    }
    let mut v = DVector::zeros(mesh.num_nodes());
    for (d, m) in mesh.friction_nodes().iter().zip(mu.iter()) {
        v[d.node] = d.weight * m;
    }
    Ok(v)
}

/// `(a, b)_D = sum_i w_i a_i b_i`.
pub fn friction_inner(mesh: &Mesh, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    mesh.friction_nodes()
        .iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(d, (x, y))| d.weight * x * y)
        .sum()
}
