//! P1 finite elements on structured 1D and 2D meshes.

pub mod field;
pub mod mesh;
pub mod operator;
pub mod problem;

pub use field::{ellipticity_gram, friction_gram, reg_inner, Bounds, FieldKind, ParameterField};
pub use mesh::{build_mesh, Element, FrictionNode, Mesh, MeshSpec};
pub use operator::{
    assemble_operator, friction_inner, operator_matrix, trace_adjoint, trace_apply, DiscreteOperator, DofMap,
    Form, Source,
};
pub use problem::{MisfitNorm, Problem};
