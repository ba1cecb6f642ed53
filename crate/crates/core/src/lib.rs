//! Numerical laboratory for adapted norms, synchronization and bi-contact
//! structures of three-dimensional Anosov flows on two algebraic models.

pub mod calculus;
pub mod contact;
pub mod convexity;
pub mod error;
pub mod expansion;
pub mod fields;
pub mod flow;
pub mod jet;
pub mod model;
pub mod sampling;
pub mod sync;
pub mod tables;

pub use error::{LabError, Result};
pub use fields::{Form, Form2, OneForm, Scalar, ScalarField, TwoForm, Vector, VectorField};
pub use flow::{FlowSpec, Role, Speed};
pub use jet::Jet;
pub use model::{Model, ModelPoint};
