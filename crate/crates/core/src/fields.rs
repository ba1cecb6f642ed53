//! Scalar fields, vector fields and differential forms on the models.
//!
//! Fields are evaluated on jets of position: a field receives a triple of
//! jets describing a (possibly composed) point and returns the jets of its
//! components in the working frame. Feeding identity seeds yields plain
//! Taylor data; feeding a composed map yields the pullback automatically.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::jet::{self, Jet};

pub type J3 = [Jet; 3];
/// Antisymmetric component matrix of a 2-form.
pub type TwoJ = [[Jet; 3]; 3];

pub trait ScalarField: Send + Sync {
    fn jet(&self, q: &J3) -> Jet;
    fn value(&self, p: [f64; 3]) -> f64 {
        self.jet(&Jet::seed(p, 0)).v
    }
}

pub trait OneForm: Send + Sync {
    fn jet(&self, q: &J3) -> J3;
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        jet::values(&self.jet(&Jet::seed(p, 0)))
    }
}

pub trait VectorField: Send + Sync {
    fn jet(&self, q: &J3) -> J3;
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        jet::values(&self.jet(&Jet::seed(p, 0)))
    }
}

pub trait TwoForm: Send + Sync {
    fn jet(&self, q: &J3) -> TwoJ;
    fn value(&self, p: [f64; 3]) -> [[f64; 3]; 3] {
        let w = self.jet(&Jet::seed(p, 0));
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = w[i][j].v;
            }
        }
        out
    }
}

pub type Scalar = Arc<dyn ScalarField>;
pub type Form = Arc<dyn OneForm>;
pub type Vector = Arc<dyn VectorField>;
pub type Form2 = Arc<dyn TwoForm>;

/// Things that can be pulled back along a jet map.
pub trait Composable: Sized {
    fn compose_with(&self, q: &J3) -> Self;
}

impl Composable for Jet {
    fn compose_with(&self, q: &J3) -> Jet {
        self.compose(q)
    }
}

impl Composable for J3 {
    fn compose_with(&self, q: &J3) -> J3 {
        [self[0].compose(q), self[1].compose(q), self[2].compose(q)]
    }
}

impl Composable for TwoJ {
    fn compose_with(&self, q: &J3) -> TwoJ {
        let mut out = *self;
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = self[i][j].compose(q);
            }
        }
        out
    }
}

/// Evaluate `f` on fresh seeds with `extra` more orders than `q` carries and
/// pull the result back along `q`. Used by operations that differentiate.
pub fn eval_lifted<T: Composable>(q: &J3, extra: u8, f: impl Fn(&J3) -> T) -> T {
    let order = (Jet::min_order(q) + extra).min(jet::MAX_ORDER);
    let seeds = Jet::seed(Jet::point(q), order);
    let out = f(&seeds);
    if Jet::is_identity_seed(q) {
        out
    } else {
        out.compose_with(q)
    }
}

// ---------- scalar primitives ----------

pub struct ConstScalar(pub f64);

impl ScalarField for ConstScalar {
    fn jet(&self, _q: &J3) -> Jet {
        Jet::constant(self.0)
    }
    fn value(&self, _p: [f64; 3]) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sin,
    Cos,
}

/// `amp * shape(2 pi k z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub amp: f64,
    pub k: f64,
    pub shape: Shape,
}

/// A finite sum of harmonics in the height coordinate. Periodic with period 1
/// for integer `k`, hence a function on the suspension.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub terms: Vec<Harmonic>,
}

impl Profile {
    pub fn zero() -> Profile {
        Profile { terms: vec![] }
    }

    pub fn single(amp: f64, shape: Shape) -> Profile {
        Profile { terms: vec![Harmonic { amp, k: 1.0, shape }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|h| h.amp == 0.0)
    }

    /// Value and the first three derivatives in `z`.
    pub fn derivs(&self, z: f64) -> [f64; 4] {
        let mut d = [0.0; 4];
        for h in &self.terms {
            let w = TAU * h.k;
            let (s, c) = (w * z).sin_cos();
            let base = match h.shape {
                Shape::Sin => [s, w * c, -w * w * s, -w * w * w * c],
                Shape::Cos => [c, -w * s, -w * w * c, w * w * w * s],
            };
            for i in 0..4 {
                d[i] += h.amp * base[i];
            }
        }
        d
    }

    fn height_jet(&self, z: &Jet) -> Jet {
        let d = self.derivs(z.v);
        z.apply(d[0], d[1], d[2], d[3])
    }
}

impl ScalarField for Profile {
    fn jet(&self, q: &J3) -> Jet {
        if self.is_zero() {
            return Jet::constant(0.0);
        }
        self.height_jet(&q[2])
    }
    fn value(&self, p: [f64; 3]) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.derivs(p[2])[0]
    }
}

/// `exp(rate * z + h(z))`.
#[derive(Clone, Debug)]
pub struct ExpProfile {
    pub rate: f64,
    pub h: Profile,
}

impl ScalarField for ExpProfile {
    fn jet(&self, q: &J3) -> Jet {
        let z = &q[2];
        let d = self.h.derivs(z.v);
        z.apply(self.rate * z.v + d[0], self.rate + d[1], d[2], d[3]).exp()
    }
    fn value(&self, p: [f64; 3]) -> f64 {
        (self.rate * p[2] + self.h.derivs(p[2])[0]).exp()
    }
}

/// Scalar field given as a jet closure.
pub struct FnScalar<F>(pub F);

impl<F: Fn(&J3) -> Jet + Send + Sync> ScalarField for FnScalar<F> {
    fn jet(&self, q: &J3) -> Jet {
        (self.0)(q)
    }
}

pub fn scalar_fn<F: Fn(&J3) -> Jet + Send + Sync + 'static>(f: F) -> Scalar {
    Arc::new(FnScalar(f))
}

// ---------- finite-difference fields ----------

/// Second-order Taylor data of `f` at `p` by central differences.
pub fn fd_scalar_jet(f: &dyn Fn([f64; 3]) -> f64, p: [f64; 3], h: f64, richardson: bool) -> Jet {
    let shift = |d: [f64; 3]| [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
    let unit = |i: usize, s: f64| {
        let mut d = [0.0; 3];
        d[i] = s;
        d
    };
    let f0 = f(p);
    let mut out = Jet::constant(f0);
    out.order = 2;
    for i in 0..3 {
        let d1 = |hh: f64| (f(shift(unit(i, hh))) - f(shift(unit(i, -hh)))) / (2.0 * hh);
        out.g[i] = if richardson { (4.0 * d1(h / 2.0) - d1(h)) / 3.0 } else { d1(h) };
    }
    // second differences need a coarser step
    let h2 = (h * 10.0).max(1e-4);
    for i in 0..3 {
        for j in i..3 {
            let v = if i == j {
                (f(shift(unit(i, h2))) - 2.0 * f0 + f(shift(unit(i, -h2)))) / (h2 * h2)
            } else {
                let pp = shift(add(unit(i, h2), unit(j, h2)));
                let pm = shift(add(unit(i, h2), unit(j, -h2)));
                let mp = shift(add(unit(i, -h2), unit(j, h2)));
                let mm = shift(add(unit(i, -h2), unit(j, -h2)));
                (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h2 * h2)
            };
            out.h[hidx(i, j)] = v;
        }
    }
    out
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn hidx(i: usize, j: usize) -> usize {
    const H: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
    H[i][j]
}

/// Scalar field known only through point values; jets come from central
/// differences and are limited to second order.
pub struct FdScalar {
    pub f: Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>,
    pub h: f64,
    pub richardson: bool,
}

impl FdScalar {
    pub fn new(f: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static) -> FdScalar {
        FdScalar { f: Arc::new(f), h: 1e-5, richardson: false }
    }
}

impl ScalarField for FdScalar {
    fn jet(&self, q: &J3) -> Jet {
        let p = Jet::point(q);
        if Jet::min_order(q) == 0 {
            return Jet::zero(0) + (self.f)(p);
        }
        let local = fd_scalar_jet(&*self.f, p, self.h, self.richardson);
        if Jet::is_identity_seed(q) {
            local.with_order(Jet::min_order(q))
        } else {
            local.compose(q)
        }
    }
    fn value(&self, p: [f64; 3]) -> f64 {
        (self.f)(p)
    }
}

/// One-form known only through point values of its frame components.
pub struct FdForm {
    pub f: Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>,
    pub h: f64,
    pub richardson: bool,
}

impl FdForm {
    pub fn new(f: impl Fn([f64; 3]) -> [f64; 3] + Send + Sync + 'static) -> FdForm {
        FdForm { f: Arc::new(f), h: 1e-5, richardson: false }
    }

    /// Wrap an existing form so that only its point values are used.
    pub fn of(form: Form) -> FdForm {
        FdForm::new(move |p| form.value(p))
    }
}

impl OneForm for FdForm {
    fn jet(&self, q: &J3) -> J3 {
        let p = Jet::point(q);
        let ord = Jet::min_order(q);
        let mut out = [Jet::zero(0); 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let fk = |x: [f64; 3]| (self.f)(x)[k];
            *slot = if ord == 0 {
                Jet::zero(0) + fk(p)
            } else {
                let local = fd_scalar_jet(&fk, p, self.h, self.richardson);
                if Jet::is_identity_seed(q) {
                    local.with_order(ord)
                } else {
                    local.compose(q)
                }
            };
        }
        out
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        (self.f)(p)
    }
}

// ---------- forms ----------

/// Frame-constant one-form.
pub struct ConstForm(pub [f64; 3]);

impl OneForm for ConstForm {
    fn jet(&self, _q: &J3) -> J3 {
        jet::constant3(self.0)
    }
    fn value(&self, _p: [f64; 3]) -> [f64; 3] {
        self.0
    }
}

/// `coeff * covector` with a constant covector.
pub struct CoframeForm {
    pub coeff: Scalar,
    pub covector: [f64; 3],
}

impl OneForm for CoframeForm {
    fn jet(&self, q: &J3) -> J3 {
        let c = self.coeff.jet(q);
        [c * self.covector[0], c * self.covector[1], c * self.covector[2]].map(|j| fix_zero(j, c.order))
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let c = self.coeff.value(p);
        [c * self.covector[0], c * self.covector[1], c * self.covector[2]]
    }
}

// scaling by an exact 0.0 constant produces an exact zero that should keep full order
fn fix_zero(j: Jet, _order: u8) -> Jet {
    if j.is_zero() {
        Jet::zero(jet::MAX_ORDER)
    } else {
        j
    }
}

/// `exp(log_factor) * base`.
pub struct ConformalForm {
    pub log_factor: Scalar,
    pub base: Form,
}

impl OneForm for ConformalForm {
    fn jet(&self, q: &J3) -> J3 {
        let e = self.log_factor.jet(q).exp();
        jet::scale3(&self.base.jet(q), e)
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let e = self.log_factor.value(p).exp();
        self.base.value(p).map(|x| x * e)
    }
}

/// `factor * base`.
pub struct ScaledForm {
    pub factor: Scalar,
    pub base: Form,
}

impl OneForm for ScaledForm {
    fn jet(&self, q: &J3) -> J3 {
        jet::scale3(&self.base.jet(q), self.factor.jet(q))
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let f = self.factor.value(p);
        self.base.value(p).map(|x| x * f)
    }
}

/// Linear combination of forms with constant coefficients.
pub struct FormCombo {
    pub terms: Vec<(f64, Form)>,
}

impl OneForm for FormCombo {
    fn jet(&self, q: &J3) -> J3 {
        let mut acc: Option<J3> = None;
        for (c, f) in &self.terms {
            let t = f.jet(q).map(|j| if *c == 1.0 { j } else { j * *c });
            acc = Some(match acc {
                None => t,
                Some(a) => jet::add3(&a, &t),
            });
        }
        acc.unwrap_or([Jet::constant(0.0); 3])
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for (c, f) in &self.terms {
            let v = f.value(p);
            for i in 0..3 {
                acc[i] += c * v[i];
            }
        }
        acc
    }
}

pub fn form_diff(a: Form, b: Form) -> Form {
    Arc::new(FormCombo { terms: vec![(1.0, a), (-1.0, b)] })
}

/// One-form given as a jet closure.
pub struct FnForm<F>(pub F);

impl<F: Fn(&J3) -> J3 + Send + Sync> OneForm for FnForm<F> {
    fn jet(&self, q: &J3) -> J3 {
        (self.0)(q)
    }
}

pub fn form_fn<F: Fn(&J3) -> J3 + Send + Sync + 'static>(f: F) -> Form {
    Arc::new(FnForm(f))
}

// ---------- vector fields ----------

pub struct ConstVector(pub [f64; 3]);

impl VectorField for ConstVector {
    fn jet(&self, _q: &J3) -> J3 {
        jet::constant3(self.0)
    }
    fn value(&self, _p: [f64; 3]) -> [f64; 3] {
        self.0
    }
}

/// `factor * base`.
pub struct ScaledVector {
    pub factor: Scalar,
    pub base: [f64; 3],
}

impl VectorField for ScaledVector {
    fn jet(&self, q: &J3) -> J3 {
        let f = self.factor.jet(q);
        [f * self.base[0], f * self.base[1], f * self.base[2]].map(|j| fix_zero(j, f.order))
    }
    fn value(&self, p: [f64; 3]) -> [f64; 3] {
        let f = self.factor.value(p);
        self.base.map(|x| x * f)
    }
}

pub struct FnVector<F>(pub F);

impl<F: Fn(&J3) -> J3 + Send + Sync> VectorField for FnVector<F> {
    fn jet(&self, q: &J3) -> J3 {
        (self.0)(q)
    }
}

pub fn vector_fn<F: Fn(&J3) -> J3 + Send + Sync + 'static>(f: F) -> Vector {
    Arc::new(FnVector(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_derivatives_match_jets() {
        let h = Profile { terms: vec![Harmonic { amp: 0.3, k: 2.0, shape: Shape::Sin }, Harmonic { amp: -0.1, k: 1.0, shape: Shape::Cos }] };
        let q = Jet::seed([0.1, 0.2, 0.37], 3);
        let j = h.jet(&q);
        let z = q[2];
        let direct = (z * (2.0 * TAU)).sin() * 0.3 - (z * TAU).cos() * 0.1;
        assert!((j.v - direct.v).abs() < 1e-15);
        assert!((j.third(2, 2, 2) - direct.third(2, 2, 2)).abs() < 1e-10);
    }

    #[test]
    fn fd_jet_agrees_with_analytic() {
        let f = |p: [f64; 3]| (p[0] * p[1]).sin() + p[2].exp();
        let p = [0.3, 0.7, -0.2];
        let q = Jet::seed(p, 2);
        let exact = (q[0] * q[1]).sin() + q[2].exp();
        let fd = fd_scalar_jet(&f, p, 1e-5, true);
        for i in 0..3 {
            assert!((fd.g[i] - exact.g[i]).abs() < 1e-9);
        }
        for i in 0..6 {
            assert!((fd.h[i] - exact.h[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_profile_value_path_matches_jet() {
        let f = ExpProfile { rate: 0.9, h: Profile::single(0.05, Shape::Sin) };
        let p = [0.0, 0.0, 0.81];
        assert!((f.value(p) - f.jet(&Jet::seed(p, 2)).v).abs() < 1e-15);
    }

    #[test]
    fn coframe_zero_component_keeps_order() {
        let f = CoframeForm { coeff: Arc::new(ExpProfile { rate: 1.0, h: Profile::zero() }), covector: [1.0, 0.0, 0.0] };
        let j = f.jet(&Jet::seed([0.0, 0.0, 0.5], 2));
        assert_eq!(j[2].order, jet::MAX_ORDER);
        assert!(j[2].is_zero());
    }
}
