//! Exterior calculus in the working frame of a model.
//!
//! With frame `E_i` and brackets `[E_i, E_j] = c^k_ij E_k`,
//! `d alpha(E_i, E_j) = E_i(a_j) - E_j(a_i) - c^k_ij a_k`. On the suspension
//! the frame is the coordinate frame, so `E_i` acts as the partial derivative;
//! on the frame model every field is frame-constant.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{eval_lifted, Form, Form2, OneForm, TwoForm, Vector, VectorField, TwoJ, J3};
use crate::jet::{self, Jet};
use crate::model::{Model, ModelPoint};

#[derive(Clone, Copy, Debug)]
pub struct Calculus {
    pub model: Model,
    c: [[[f64; 3]; 3]; 3],
}

impl Calculus {
    pub fn new(model: Model) -> Calculus {
        Calculus { model, c: model.structure_constants() }
    }

    pub fn structure(&self) -> &[[[f64; 3]; 3]; 3] {
        &self.c
    }

    /// Frame derivatives `E_i f`.
    pub fn grad(&self, f: &Jet) -> J3 {
        [f.partial(0), f.partial(1), f.partial(2)]
    }

    /// Directional derivative `V(f)`.
    pub fn deriv(&self, v: &J3, f: &Jet) -> Jet {
        let g = self.grad(f);
        jet::dot(v, &g)
    }

    /// Exterior derivative of a one-form.
    pub fn d(&self, a: &J3) -> TwoJ {
        let da: [J3; 3] = [self.grad(&a[0]), self.grad(&a[1]), self.grad(&a[2])];
        let ord = Jet::min_order(a).saturating_sub(1);
        let mut w = [[Jet::zero(ord); 3]; 3];
        for i in 0..3 {
            for j in (i + 1)..3 {
                // E_i(a_j) - E_j(a_i)
                let mut v = da[j][i] - da[i][j];
                for k in 0..3 {
                    let c = self.c[i][j][k];
                    if c != 0.0 {
                        v = v - a[k].with_order(ord) * c;
                    }
                }
                w[i][j] = v;
                w[j][i] = -v;
            }
        }
        w
    }

    /// Exterior derivative of a two-form, as the density on `(E_0, E_1, E_2)`.
    pub fn d2(&self, w: &TwoJ) -> Jet {
        let c = &self.c;
        let mut out = self.grad(&w[1][2])[0] - self.grad(&w[0][2])[1] + self.grad(&w[0][1])[2];
        let ord = out.order;
        // w([E_i, E_j], E_k)
        let wb = |i: usize, j: usize, k: usize| -> Jet {
            let mut acc = Jet::zero(ord);
            for m in 0..3 {
                if c[i][j][m] != 0.0 {
                    acc = acc + w[m][k].with_order(ord) * c[i][j][m];
                }
            }
            acc
        };
        out = out - wb(0, 1, 2) + wb(0, 2, 1) - wb(1, 2, 0);
        out
    }

    pub fn bracket(&self, v: &J3, w: &J3) -> J3 {
        let gv: [J3; 3] = [self.grad(&v[0]), self.grad(&v[1]), self.grad(&v[2])];
        let gw: [J3; 3] = [self.grad(&w[0]), self.grad(&w[1]), self.grad(&w[2])];
        let mut out = [Jet::zero(0); 3];
        for k in 0..3 {
            let mut acc = jet::dot(v, &gw[k]) - jet::dot(w, &gv[k]);
            let ord = acc.order;
            for i in 0..3 {
                for j in 0..3 {
                    let c = self.c[i][j][k];
                    if c != 0.0 {
                        acc = acc + (v[i] * w[j]).with_order(ord) * c;
                    }
                }
            }
            out[k] = acc;
        }
        out
    }

    /// Cartan formula `L_V alpha = i_V d alpha + d(alpha(V))`.
    pub fn lie(&self, v: &J3, a: &J3) -> J3 {
        let da = self.d(a);
        let av = jet::dot(a, v);
        let dav = self.grad(&av);
        let mut out = [Jet::zero(0); 3];
        for j in 0..3 {
            out[j] = interior_component(v, &da, j) + dav[j];
        }
        out
    }

    /// `L_V f = V(f)` for scalars.
    pub fn lie_scalar(&self, v: &J3, f: &Jet) -> Jet {
        self.deriv(v, f)
    }
}

fn interior_component(v: &J3, w: &TwoJ, j: usize) -> Jet {
    v[0] * w[0][j] + v[1] * w[1][j] + v[2] * w[2][j]
}

/// `i_V w`.
pub fn interior2(v: &J3, w: &TwoJ) -> J3 {
    [interior_component(v, w, 0), interior_component(v, w, 1), interior_component(v, w, 2)]
}

/// `w(u, v)`.
pub fn pair2(w: &TwoJ, u: &J3, v: &J3) -> Jet {
    let mut acc = Jet::zero(jet::MAX_ORDER);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                acc = acc + u[i] * v[j] * w[i][j];
            }
        }
    }
    acc
}

/// `a ^ b` as an antisymmetric matrix.
pub fn wedge11(a: &J3, b: &J3) -> TwoJ {
    let mut w = [[Jet::zero(jet::MAX_ORDER); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                w[i][j] = a[i] * b[j] - a[j] * b[i];
            }
        }
    }
    w
}

/// `(a ^ w)(E_0, E_1, E_2)`.
pub fn wedge12(a: &J3, w: &TwoJ) -> Jet {
    a[0] * w[1][2] - a[1] * w[0][2] + a[2] * w[0][1]
}

/// Density of `a ^ b ^ c`, i.e. the determinant of their components.
pub fn wedge111(a: &J3, b: &J3, c: &J3) -> Jet {
    wedge12(a, &wedge11(b, c))
}

/// `det(u, v, w)` of three vectors.
pub fn det3(u: &J3, v: &J3, w: &J3) -> Jet {
    wedge111(u, v, w)
}

/// The kernel direction `(w_12, w_20, w_01)` of an antisymmetric matrix.
pub fn kernel_vector(w: &TwoJ) -> J3 {
    [w[1][2], w[2][0], w[0][1]]
}

/// Frobenius norm of the upper triangle.
pub fn norm2(w: &TwoJ) -> f64 {
    (w[0][1].v.powi(2) + w[0][2].v.powi(2) + w[1][2].v.powi(2)).sqrt()
}

pub fn norm1(a: &J3) -> f64 {
    (a[0].v.powi(2) + a[1].v.powi(2) + a[2].v.powi(2)).sqrt()
}

// ---------- field-level operations ----------

/// `d alpha` as a field.
pub struct ExteriorD {
    pub calc: Calculus,
    pub alpha: Form,
}

impl TwoForm for ExteriorD {
    fn jet(&self, q: &J3) -> TwoJ {
        eval_lifted(q, 1, |s| self.calc.d(&self.alpha.jet(s)))
    }
}

pub fn exterior_d(model: Model, alpha: Form) -> Form2 {
    Arc::new(ExteriorD { calc: Calculus::new(model), alpha })
}

/// `L_X alpha` through the Cartan formula.
pub struct LieDerivative {
    pub calc: Calculus,
    pub x: Vector,
    pub alpha: Form,
}

impl OneForm for LieDerivative {
    fn jet(&self, q: &J3) -> J3 {
        eval_lifted(q, 1, |s| self.calc.lie(&self.x.jet(s), &self.alpha.jet(s)))
    }
}

pub fn lie_derivative(model: Model, x: Vector, alpha: Form) -> Form {
    Arc::new(LieDerivative { calc: Calculus::new(model), x, alpha })
}

pub struct Bracket {
    pub calc: Calculus,
    pub v: Vector,
    pub w: Vector,
}

impl VectorField for Bracket {
    fn jet(&self, q: &J3) -> J3 {
        eval_lifted(q, 1, |s| self.calc.bracket(&self.v.jet(s), &self.w.jet(s)))
    }
}

pub fn bracket(model: Model, v: Vector, w: Vector) -> Vector {
    Arc::new(Bracket { calc: Calculus::new(model), v, w })
}

/// Reeb field of a contact form from the kernel of `d alpha`.
pub struct ReebField {
    pub calc: Calculus,
    pub alpha: Form,
}

/// Reeb field from the jets of `alpha` at one point, via the kernel vector.
pub fn reeb_jet(calc: &Calculus, a: &J3) -> J3 {
    let da = calc.d(a);
    let u = kernel_vector(&da);
    let dens = wedge12(&a.map(|j| j.with_order(da[0][1].order)), &da);
    let inv = dens.recip();
    jet::scale3(&u, inv)
}

impl VectorField for ReebField {
    fn jet(&self, q: &J3) -> J3 {
        eval_lifted(q, 1, |s| reeb_jet(&self.calc, &self.alpha.jet(s)))
    }
}

pub fn reeb_field(model: Model, alpha: Form) -> Vector {
    Arc::new(ReebField { calc: Calculus::new(model), alpha })
}

/// Reeb vector at a point from a linear solve of `i_R d alpha = 0`,
/// `alpha(R) = 1`, with residual checks.
pub fn reeb_solve(model: Model, alpha: &dyn OneForm, p: [f64; 3]) -> Result<Vector3<f64>> {
    let calc = Calculus::new(model);
    let s = Jet::seed(p, 1);
    let a = alpha.jet(&s);
    let da = calc.d(&a);
    let w = Matrix3::from_fn(|i, j| da[i][j].v);
    let av = Vector3::new(a[0].v, a[1].v, a[2].v);
    // rows: (d alpha)^T R = 0 (3 equations, rank 2) and alpha . R = 1
    let mut m = nalgebra::Matrix4x3::<f64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = w[(j, i)];
        }
        m[(3, i)] = av[i];
    }
    let rhs = nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0);
    let svd = m.svd(true, true);
    let r = svd.solve(&rhs, 1e-14).map_err(|e| LabError::Degenerate(format!("reeb solve: {e}")))?;
    let scale = w.abs().max().max(1e-300);
    let res_kernel = (w.transpose() * r).amax() / (scale * r.norm().max(1e-300));
    let res_norm = (av.dot(&r) - 1.0).abs();
    if !(res_kernel <= 1e-9 && res_norm <= 1e-10) {
        return Err(LabError::Degenerate(format!(
            "reeb residuals too large at {p:?}: kernel {res_kernel:.3e}, normalization {res_norm:.3e}"
        )));
    }
    Ok(r)
}

/// `L_X alpha` through the flow pullback `d/dt (X^t)^* alpha` at `t = 0`,
/// by central differences of the flow of `x`.
pub fn lie_pullback(model: Model, x: &dyn VectorField, alpha: &dyn OneForm, p: [f64; 3], h: f64) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut e = Vector3::zeros();
        e[j] = 1.0;
        let pair = |t: f64| -> Result<f64> {
            let (q, w) = push_field(model, x, p, e, t)?;
            let a = alpha.value(q);
            Ok(a[0] * w[0] + a[1] * w[1] + a[2] * w[2])
        };
        let d1 = (pair(h)? - pair(-h)?) / (2.0 * h);
        let d2 = (pair(h / 2.0)? - pair(-h / 2.0)?) / h;
        *slot = (4.0 * d2 - d1) / 3.0;
    }
    Ok(out)
}

/// Flow a point and a tangent vector along a general vector field for a
/// short time. On the frame model the field must be frame-constant, and the
/// pushforward is `exp(-t ad_V)`.
pub fn push_field(model: Model, x: &dyn VectorField, p: [f64; 3], v: Vector3<f64>, t: f64) -> Result<([f64; 3], Vector3<f64>)> {
    match model {
        Model::Sl2 => {
            let xv = Vector3::from(x.value(p));
            let c = model.structure_constants();
            // ad_V w = [V, w]
            let ad = Matrix3::from_fn(|k, j| (0..3).map(|i| xv[i] * c[i][j][k]).sum::<f64>());
            let m = (ad * (-t)).exp();
            Ok((p, m * v))
        }
        Model::Cat => {
            let steps = 8;
            let dt = t / steps as f64;
            let rhs = |y: &[f64; 6]| -> [f64; 6] {
                let q = Jet::seed([y[0], y[1], y[2]], 1);
                let xj = x.jet(&q);
                let mut d = [0.0; 6];
                for k in 0..3 {
                    d[k] = xj[k].v;
                    d[3 + k] = (0..3).map(|i| xj[k].g[i] * y[3 + i]).sum();
                }
                d
            };
            let mut y = [p[0], p[1], p[2], v.x, v.y, v.z];
            for _ in 0..steps {
                y = crate::flow::rk4_step(&rhs, &y, dt);
            }
            if y.iter().any(|c| !c.is_finite()) {
                return Err(LabError::NonFinite("field flow".into()));
            }
            Ok(([y[0], y[1], y[2]], Vector3::new(y[3], y[4], y[5])))
        }
    }
}

/// Sign of a contact form over a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ContactSign {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContactReport {
    pub sign: ContactSign,
    /// Smallest `|alpha ^ d alpha|` density seen.
    pub margin: f64,
    pub min_density: f64,
    pub max_density: f64,
}

/// Density of `alpha ^ d alpha` at a point.
pub fn contact_density(model: Model, alpha: &dyn OneForm, p: [f64; 3]) -> f64 {
    let calc = Calculus::new(model);
    let a = alpha.jet(&Jet::seed(p, 1));
    let da = calc.d(&a);
    wedge12(&a, &da).v
}

pub fn contact_sign(model: Model, alpha: &dyn OneForm, sample: &[ModelPoint], tol: f64) -> Result<ContactReport> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut margin = f64::INFINITY;
    for p in sample {
        let d = contact_density(model, alpha, p.coords) * model.orientation();
        if !d.is_finite() {
            return Err(LabError::NonFinite(format!("contact density at {:?}", p.coords)));
        }
        if d.abs() <= tol {
            return Err(LabError::Degenerate(format!("alpha ^ d alpha vanishes at {:?} ({d:.3e})", p.coords)));
        }
        lo = lo.min(d);
        hi = hi.max(d);
        margin = margin.min(d.abs());
    }
    if sample.is_empty() {
        return Err(LabError::Degenerate("empty sample".into()));
    }
    let sign = if lo > 0.0 {
        ContactSign::Positive
    } else if hi < 0.0 {
        ContactSign::Negative
    } else {
        return Err(LabError::Inconsistent(format!("contact sign changes over the sample ({lo:.3e} .. {hi:.3e})")));
    };
    Ok(ContactReport { sign, margin, min_density: lo, max_density: hi })
}

/// Sign of `det(v1, v2, v3)` against the model orientation.
pub fn orientation_sign(model: Model, v1: Vector3<f64>, v2: Vector3<f64>, v3: Vector3<f64>) -> Result<i8> {
    let d = Matrix3::from_columns(&[v1, v2, v3]).determinant() * model.orientation();
    let scale = v1.norm() * v2.norm() * v3.norm();
    if !(d.abs() > 1e-12 * scale.max(1e-300)) {
        return Err(LabError::Degenerate(format!("nearly dependent vectors (det {d:.3e})")));
    }
    Ok(if d > 0.0 { 1 } else { -1 })
}
