use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use super::mesh::{Element, Mesh};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, csc_from_triplets, SpdFactor};

/// Box `[lower, upper]` defining an admissible parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Domain(format!(
                "bounds must be finite with lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Which carrier a parameter lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// One value per element of the domain.
    Ellipticity,
    /// One value per friction node.
    Friction,
}

/// A coefficient vector inside a box, with the Gram matrix of its
/// regularization inner product.
#[derive(Debug, Clone)]
pub struct ParameterField {
    kind: FieldKind,
    values: DVector<f64>,
    bounds: Bounds,
    gram: Arc<CscMatrix<f64>>,
}

impl ParameterField {
    pub fn new(
        kind: FieldKind,
        values: DVector<f64>,
        bounds: Bounds,
        gram: Arc<CscMatrix<f64>>,
    ) -> Result<Self> {
        if gram.nrows() != values.len() || gram.ncols() != values.len() {
            return Err(Error::Domain(format!(
                "{kind:?} field has {} values but a {}x{} Gram matrix",
                values.len(),
                gram.nrows(),
                gram.ncols()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !bounds.contains(**v))
        {
            return Err(Error::Domain(format!(
                "{kind:?} coefficient {i} = {v} outside [{}, {}]",
                bounds.lower, bounds.upper
            )));
        }
        Ok(Self {
            kind,
            values,
            bounds,
            gram,
        })
    }

    /// Same carrier, bounds and Gram matrix with new values.
    pub fn with_values(&self, values: DVector<f64>) -> Result<Self> {
        Self::new(self.kind, values, self.bounds, Arc::clone(&self.gram))
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn gram(&self) -> &CscMatrix<f64> {
        &self.gram
    }

    pub fn gram_arc(&self) -> Arc<CscMatrix<f64>> {
        Arc::clone(&self.gram)
    }

    /// Componentwise projection onto the box.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.bounds.clamp(v))
    }

    /// Squared regularization norm of the current values.
    pub fn reg_norm_squared(&self) -> f64 {
        bilinear(&self.gram, &self.values, &self.values)
    }

    /// Succeeds iff the Gram matrix admits a Cholesky factorization.
    pub fn check_gram_spd(&self) -> Result<()> {
        SpdFactor::new(&self.gram).map(|_| ())
    }
}

/// `a^T G b` with the field's regularization Gram matrix `G`.
pub fn reg_inner(field: &ParameterField, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let n = field.len();
    if a.len() != n || b.len() != n {
        return Err(Error::Domain(format!(
            "reg_inner expects vectors of length {n}, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(bilinear(&field.gram, a, b))
}

/// Discrete H1 Gram matrix for elementwise-constant coefficients:
/// the diagonal mass matrix plus a two-point gradient penalty
/// `sum (|facet| / dist) (a_i - a_j)(b_i - b_j)` across interior facets.
pub fn ellipticity_gram(mesh: &Mesh) -> CscMatrix<f64> {
    let ne = mesh.num_elements();
    let mut triplets = Vec::with_capacity(5 * ne);
    for (k, el) in mesh.elements().iter().enumerate() {
        triplets.push((k, k, mesh.measure(el)));
    }
    let mut add_link = |a: usize, b: usize, w: f64| {
        triplets.push((a, a, w));
        triplets.push((b, b, w));
        triplets.push((a, b, -w));
        triplets.push((b, a, -w));
    };
    let dist = |a: usize, b: usize| {
        let ca = mesh.centroid(&mesh.elements()[a]);
        let cb = mesh.centroid(&mesh.elements()[b]);
        ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt()
    };
    match mesh.dimension() {
        1 => {
            for k in 1..ne {
                add_link(k - 1, k, 1.0 / dist(k - 1, k));
            }
        }
        _ => {
            let mut facets: HashMap<(usize, usize), usize> = HashMap::new();
            let mut pairs = Vec::new();
            for (k, el) in mesh.elements().iter().enumerate() {
                if let Element::Triangle(t) = el {
                    for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                        let key = (a.min(b), a.max(b));
                        if let Some(other) = facets.insert(key, k) {
                            pairs.push((other, k, key));
                        }
                    }
                }
            }
            pairs.sort_unstable();
            for (a, b, (p, q)) in pairs {
                let (pp, pq) = (mesh.nodes()[p], mesh.nodes()[q]);
                let len = ((pp[0] - pq[0]).powi(2) + (pp[1] - pq[1]).powi(2)).sqrt();
                add_link(a, b, len / dist(a, b));
            }
        }
    }
    csc_from_triplets(ne, ne, &triplets)
}

/// Gram matrix for friction coefficients: 1 for a single friction point,
/// otherwise the P1 mass plus stiffness along the friction edge restricted to
/// the friction nodes.
pub fn friction_gram(mesh: &Mesh) -> CscMatrix<f64> {
    let nf = mesh.friction_nodes().len();
    if mesh.friction_edge().len() < 2 {
        let triplets: Vec<_> = (0..nf).map(|i| (i, i, 1.0)).collect();
        return csc_from_triplets(nf, nf, &triplets);
    }
    let local: HashMap<usize, usize> = mesh
        .friction_nodes()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.node, i))
        .collect();
    let mut triplets = Vec::new();
    for seg in mesh.friction_edge().windows(2) {
        let (pa, pb) = (mesh.nodes()[seg[0]], mesh.nodes()[seg[1]]);
        let h = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let m = [[h / 3.0 + 1.0 / h, h / 6.0 - 1.0 / h], [h / 6.0 - 1.0 / h, h / 3.0 + 1.0 / h]];
        for (a, &na) in seg.iter().enumerate() {
            for (b, &nb) in seg.iter().enumerate() {
                if let (Some(&i), Some(&j)) = (local.get(&na), local.get(&nb)) {
                    triplets.push((i, j, m[a][b]));
                }
            }
        }
    }
    csc_from_triplets(nf, nf, &triplets)
}
