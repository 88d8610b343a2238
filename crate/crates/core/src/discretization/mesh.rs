use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured mesh descriptions accepted by [`build_mesh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    /// `[left, right]` split into `elements` segments. Dirichlet at the left
    /// end, point friction at the right end.
    Interval { left: f64, right: f64, elements: usize },
    /// Unit square, `n x n` cells each cut into two triangles. Friction on the
    /// bottom edge, Dirichlet on the remaining boundary.
    UnitSquare { n: usize },
}

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    Segment([usize; 2]),
    Triangle([usize; 3]),
}

impl Element {
    pub fn nodes(&self) -> &[usize] {
        match self {
            Element::Segment(n) => n,
            Element::Triangle(n) => n,
        }
    }
}

/// A node of the friction set `D` with its quadrature weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionNode {
    pub node: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dimension: usize,
    nodes: Vec<Point>,
    elements: Vec<Element>,
    dirichlet: Vec<bool>,
    friction: Vec<FrictionNode>,
    /// Ordered nodes of the whole friction edge including its end points (2D only).
    friction_edge: Vec<usize>,
}

pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh> {
    match *spec {
        MeshSpec::Interval {
            left,
            right,
            elements,
        } => interval(left, right, elements),
        MeshSpec::UnitSquare { n } => unit_square(n),
    }
}

fn interval(left: f64, right: f64, n: usize) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::config("problem.mesh.elements", "need at least one element"));
    }
    if !(left.is_finite() && right.is_finite() && left < right) {
        return Err(Error::config(
            "problem.mesh",
            format!("interval endpoints must satisfy left < right, got [{left}, {right}]"),
        ));
    }
    let h = (right - left) / n as f64;
    let nodes = (0..=n)
        .map(|i| {
            let x = if i == n { right } else { left + i as f64 * h };
            [x, 0.0]
        })
        .collect();
    let elements = (0..n).map(|i| Element::Segment([i, i + 1])).collect();
    let mut dirichlet = vec![false; n + 1];
    dirichlet[0] = true;
    let mesh = Mesh {
        dimension: 1,
        nodes,
        elements,
        dirichlet,
        friction: vec![FrictionNode { node: n, weight: 1.0 }],
        friction_edge: Vec::new(),
    };
    mesh.validate()?;
    Ok(mesh)
}

fn unit_square(n: usize) -> Result<Mesh> {
    if n < 1 {
        return Err(Error::config("problem.mesh.n", "need at least one cell per side"));
    }
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i, j + 1);
            let d = idx(i + 1, j + 1);
            elements.push(Element::Triangle([a, b, d]));
            elements.push(Element::Triangle([a, d, c]));
        }
    }
    let mut dirichlet = vec![false; nodes.len()];
    for j in 0..=n {
        for i in 0..=n {
            let on_bottom_interior = j == 0 && i > 0 && i < n;
            let on_boundary = i == 0 || i == n || j == 0 || j == n;
            dirichlet[idx(i, j)] = on_boundary && !on_bottom_interior;
        }
    }
    // friction edge corners belong to the Dirichlet part
    let friction = (1..n)
        .map(|i| FrictionNode {
            node: idx(i, 0),
            weight: h,
        })
        .collect();
    let friction_edge = (0..=n).map(|i| idx(i, 0)).collect();
    let mesh = Mesh {
        dimension: 2,
        nodes,
        elements,
        dirichlet,
        friction,
        friction_edge,
    };
    mesh.validate()?;
    Ok(mesh)
}

impl Mesh {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.dirichlet[i]).collect()
    }

    pub fn friction_nodes(&self) -> &[FrictionNode] {
        &self.friction
    }

    pub fn friction_edge(&self) -> &[usize] {
        &self.friction_edge
    }

    /// Length (1D) or area (2D) of an element.
    pub fn measure(&self, element: &Element) -> f64 {
        match *element {
            Element::Segment([a, b]) => self.nodes[b][0] - self.nodes[a][0],
            Element::Triangle([a, b, c]) => {
                let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
                0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
            }
        }
    }

    pub fn centroid(&self, element: &Element) -> Point {
        let ids = element.nodes();
        let k = ids.len() as f64;
        let mut c = [0.0, 0.0];
        for &i in ids {
            c[0] += self.nodes[i][0] / k;
            c[1] += self.nodes[i][1] / k;
        }
        c
    }

    /// Total measure of the friction set.
    pub fn friction_measure(&self) -> f64 {
        self.friction.iter().map(|d| d.weight).sum()
    }

    fn validate(&self) -> Result<()> {
        for (k, el) in self.elements.iter().enumerate() {
            if el.nodes().iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::Internal(format!("element {k} has an invalid node index")));
            }
            if self.measure(el) <= 0.0 {
                return Err(Error::Internal(format!("element {k} has non-positive measure")));
            }
        }
        if self.friction.iter().any(|d| self.dirichlet[d.node]) {
            return Err(Error::Internal("friction and Dirichlet nodes overlap".into()));
        }
        Ok(())
    }
}

/// Writes `node,x,y,dirichlet,friction_weight` rows.
pub fn mesh_rows(mesh: &Mesh) -> Vec<Vec<String>> {
    let mut weight = vec![0.0; mesh.num_nodes()];
    for d in mesh.friction_nodes() {
        weight[d.node] = d.weight;
    }
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                u8::from(mesh.is_dirichlet(i)).to_string(),
                weight[i].to_string(),
            ]
        })
        .collect()
}
