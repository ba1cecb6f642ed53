//! Model 3-manifolds: the suspension of the cat map and the frame model of
//! the geodesic flow on a hyperbolic surface.
//!
//! Points live in chart coordinates. On the suspension the chart is the
//! lifted cover `R^2 x R` and the normalized fundamental domain is
//! `[0,1)^2 x [0,1)`, with the gluing `(p, 1) ~ (A p, 0)`. The frame model
//! carries no positional data: every field shipped for it is constant in the
//! left-invariant frame `(X, E, F)`, so points are placeholders.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Which model manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cat,
    Sl2,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::Cat => write!(f, "cat"),
            Model::Sl2 => write!(f, "sl2"),
        }
    }
}

impl std::str::FromStr for Model {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Model> {
        match s {
            "cat" => Ok(Model::Cat),
            "sl2" => Ok(Model::Sl2),
            other => Err(LabError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// A point of a model manifold, in normalized chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub model: Model,
    pub coords: [f64; 3],
}

impl ModelPoint {
    pub fn new(model: Model, coords: [f64; 3]) -> ModelPoint {
        ModelPoint { model, coords }
    }

    pub fn vec(&self) -> Vector3<f64> {
        Vector3::from(self.coords)
    }
}

/// The hyperbolic matrix `[[2,1],[1,1]]`.
pub fn cat_matrix() -> Matrix2<f64> {
    Matrix2::new(2.0, 1.0, 1.0, 1.0)
}

pub fn cat_matrix_inv() -> Matrix2<f64> {
    Matrix2::new(1.0, -1.0, -1.0, 2.0)
}

/// Leading eigenvalue `(3 + sqrt 5) / 2`.
pub fn cat_lambda() -> f64 {
    (3.0 + 5f64.sqrt()) / 2.0
}

pub fn cat_log_lambda() -> f64 {
    cat_lambda().ln()
}

/// Unstable eigenvector, `A e_u = lambda e_u`.
pub fn cat_e_u() -> Vector3<f64> {
    Vector3::new(1.0, (5f64.sqrt() - 1.0) / 2.0, 0.0)
}

/// Stable eigenvector, `A e_s = e_s / lambda`.
pub fn cat_e_s() -> Vector3<f64> {
    Vector3::new(1.0, -(5f64.sqrt() + 1.0) / 2.0, 0.0)
}

/// Frame data of one of the models: the generator, the two strong
/// directions and the dual coframe `(omega_0, omega_s, omega_u)`.
#[derive(Clone, Copy, Debug)]
pub struct FrameData {
    pub x: Vector3<f64>,
    pub e_s: Vector3<f64>,
    pub e_u: Vector3<f64>,
    /// Rows are the covectors dual to `(x, e_s, e_u)`.
    pub coframe: Matrix3<f64>,
}

impl FrameData {
    pub fn omega_x(&self) -> Vector3<f64> {
        self.coframe.row(0).transpose()
    }
    pub fn omega_s(&self) -> Vector3<f64> {
        self.coframe.row(1).transpose()
    }
    pub fn omega_u(&self) -> Vector3<f64> {
        self.coframe.row(2).transpose()
    }
}

impl Model {
    /// Bracket structure constants: `c[i][j][k]` is the `E_k` component of
    /// `[E_i, E_j]` for the working frame.
    pub fn structure_constants(&self) -> [[[f64; 3]; 3]; 3] {
        let mut c = [[[0.0; 3]; 3]; 3];
        if let Model::Sl2 = self {
            // frame (X, E, F): [X,E] = E, [X,F] = -F, [E,F] = 2X
            c[0][1][1] = 1.0;
            c[1][0][1] = -1.0;
            c[0][2][2] = -1.0;
            c[2][0][2] = 1.0;
            c[1][2][0] = 2.0;
            c[2][1][0] = -2.0;
        }
        c
    }

    /// Whether frame derivatives are coordinate partials. On the frame model
    /// all fields are frame-constant and derivatives vanish.
    pub fn has_coordinates(&self) -> bool {
        matches!(self, Model::Cat)
    }

    /// Frame data. Both models are homogeneous, so it does not depend on the point.
    pub fn frame_data(&self) -> FrameData {
        let (x, e_s, e_u) = match self {
            Model::Cat => (Vector3::new(0.0, 0.0, 1.0), cat_e_s(), cat_e_u()),
            Model::Sl2 => (Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)),
        };
        let m = Matrix3::from_columns(&[x, e_s, e_u]);
        let coframe = m.try_inverse().expect("frame is a basis");
        FrameData { x, e_s, e_u, coframe }
    }

    pub fn frame_at(&self, _p: &ModelPoint) -> FrameData {
        self.frame_data()
    }

    /// Deck reduction of a lifted point into the fundamental domain.
    pub fn normalize(&self, lifted: [f64; 3]) -> ModelPoint {
        match self {
            Model::Cat => {
                let (p, _) = normalize_cat(lifted);
                ModelPoint::new(Model::Cat, p)
            }
            Model::Sl2 => ModelPoint::new(Model::Sl2, lifted),
        }
    }

    /// Normalize a lifted point and carry a tangent vector along the deck map.
    pub fn transport(&self, lifted: [f64; 3], v: Vector3<f64>) -> (ModelPoint, Vector3<f64>) {
        match self {
            Model::Cat => {
                let (p, n) = normalize_cat(lifted);
                (ModelPoint::new(Model::Cat, p), deck_vector(n, v))
            }
            Model::Sl2 => (ModelPoint::new(Model::Sl2, lifted), v),
        }
    }

    /// Volume orientation of the chart or frame: the sign of `det(X, e_s, e_u)`.
    pub fn orientation(&self) -> f64 {
        let f = self.frame_data();
        Matrix3::from_columns(&[f.x, f.e_s, f.e_u]).determinant().signum()
    }
}

/// Integer part of the lifted height, and the normalized point.
pub fn normalize_cat(lifted: [f64; 3]) -> ([f64; 3], i64) {
    let z = lifted[2];
    let n = z.floor();
    let mut zr = z - n;
    if zr >= 1.0 {
        zr = 0.0;
    }
    let n = n as i64;
    let xy = deck_point(n, Vector2::new(lifted[0], lifted[1]));
    ([wrap_unit(xy.x), wrap_unit(xy.y), zr], n)
}

fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `A^n p` modulo the integer lattice, reducing at each step.
fn deck_point(n: i64, p: Vector2<f64>) -> Vector2<f64> {
    let m = if n >= 0 { cat_matrix() } else { cat_matrix_inv() };
    let mut q = Vector2::new(wrap_unit(p.x), wrap_unit(p.y));
    for _ in 0..n.unsigned_abs() {
        q = m * q;
        q = Vector2::new(wrap_unit(q.x), wrap_unit(q.y));
    }
    q
}

/// `A^n` on the horizontal block of a tangent vector.
pub fn deck_vector(n: i64, v: Vector3<f64>) -> Vector3<f64> {
    let m = if n >= 0 { cat_matrix() } else { cat_matrix_inv() };
    let mut xy = Vector2::new(v.x, v.y);
    for _ in 0..n.unsigned_abs() {
        xy = m * xy;
    }
    Vector3::new(xy.x, xy.y, v.z)
}

/// Sign and orientation conventions used throughout the crate, checked once
/// at startup by [`verify_conventions`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Conventions {
    /// `det(X, e_s, e_u) > 0` on both models.
    pub frame_orientation: f64,
    /// Contact forms are positive when `alpha ^ d alpha` is a positive multiple
    /// of the frame volume.
    pub positive_contact: f64,
    /// The bi-contact pair is `(alpha_u - alpha_s, L_X alpha_+)`.
    pub alpha_plus_sign_u: f64,
    pub alpha_plus_sign_s: f64,
}

pub const CONVENTIONS: Conventions =
    Conventions { frame_orientation: 1.0, positive_contact: 1.0, alpha_plus_sign_u: 1.0, alpha_plus_sign_s: -1.0 };

/// Check the orientation conventions against the model data.
pub fn verify_conventions() -> Result<()> {
    for m in [Model::Cat, Model::Sl2] {
        if m.orientation() != CONVENTIONS.frame_orientation {
            return Err(LabError::Convention(format!("{m}: frame (X, e_s, e_u) is negatively oriented")));
        }
        let f = m.frame_data();
        let dual = f.coframe * Matrix3::from_columns(&[f.x, f.e_s, f.e_u]);
        if (dual - Matrix3::identity()).abs().max() > 1e-12 {
            return Err(LabError::Convention(format!("{m}: coframe is not dual to the frame")));
        }
    }
    // A e_u = lambda e_u and A e_s = e_s / lambda
    let a = cat_matrix();
    let l = cat_lambda();
    let eu = cat_e_u();
    let es = cat_e_s();
    let au = a * Vector2::new(eu.x, eu.y);
    let as_ = a * Vector2::new(es.x, es.y);
    if (au - l * Vector2::new(eu.x, eu.y)).norm() > 1e-12 || (as_ - Vector2::new(es.x, es.y) / l).norm() > 1e-12 {
        return Err(LabError::Convention("cat eigenvectors".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gluing_examples() {
        let p = Model::Cat.normalize([0.5, 0.5, 1.2]);
        assert!((p.coords[0] - 0.5).abs() < 1e-12);
        assert!(p.coords[1].abs() < 1e-12);
        assert!((p.coords[2] - 0.2).abs() < 1e-12);
        let q = Model::Cat.normalize([0.0, 0.0, -0.3]);
        assert_eq!(q.coords[0], 0.0);
        assert_eq!(q.coords[1], 0.0);
        assert!((q.coords[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn conventions_hold() {
        verify_conventions().unwrap();
        assert_eq!(Model::Cat.orientation(), 1.0);
        assert_eq!(Model::Sl2.orientation(), 1.0);
    }

    #[test]
    fn cat_det_is_sqrt5() {
        let f = Model::Cat.frame_data();
        let d = Matrix3::from_columns(&[f.x, f.e_s, f.e_u]).determinant();
        assert!((d - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn transport_applies_matrix_power() {
        let v = Vector3::new(1.0, 0.0, 0.3);
        let (_, w) = Model::Cat.transport([0.1, 0.2, 2.5], v);
        // A^2 = [[5,3],[3,2]]
        assert_eq!(w, Vector3::new(5.0, 3.0, 0.3));
        let (_, w) = Model::Cat.transport([0.1, 0.2, -0.5], v);
        assert_eq!(w, Vector3::new(1.0, -1.0, 0.3));
    }

    #[test]
    fn sl2_brackets_antisymmetric() {
        let c = Model::Sl2.structure_constants();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(c[i][j][k], -c[j][i][k]);
                }
            }
        }
    }
}
