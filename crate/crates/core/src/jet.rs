//! Truncated multivariate Taylor jets in three variables.
//!
//! A [`Jet`] carries a value and its partial derivatives up to third order
//! with respect to three coordinates. The `order` field records how many of
//! those derivative levels are meaningful; entries above it are kept at zero.
//! Differentiation lowers the order by one, binary operations keep the lower
//! order, except that an operand which is identically zero up to its own order
//! annihilates the product to that order.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Highest derivative order tracked.
pub const MAX_ORDER: u8 = 3;

const H_IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

const fn t_index(i: usize, j: usize, k: usize) -> usize {
    // sort the triple
    let (mut a, mut b, mut c) = (i, j, k);
    if a > b {
        let t = a;
        a = b;
        b = t;
    }
    if b > c {
        let t = b;
        b = c;
        c = t;
    }
    if a > b {
        let t = a;
        a = b;
        b = t;
    }
    // enumeration of a <= b <= c over {0,1,2}
    match (a, b, c) {
        (0, 0, 0) => 0,
        (0, 0, 1) => 1,
        (0, 0, 2) => 2,
        (0, 1, 1) => 3,
        (0, 1, 2) => 4,
        (0, 2, 2) => 5,
        (1, 1, 1) => 6,
        (1, 1, 2) => 7,
        (1, 2, 2) => 8,
        _ => 9,
    }
}

const fn build_t_idx() -> [[[usize; 3]; 3]; 3] {
    let mut out = [[[0usize; 3]; 3]; 3];
    let mut i = 0;
    while i < 3 {
        let mut j = 0;
        while j < 3 {
            let mut k = 0;
            while k < 3 {
                out[i][j][k] = t_index(i, j, k);
                k += 1;
            }
            j += 1;
        }
        i += 1;
    }
    out
}

const T_IDX: [[[usize; 3]; 3]; 3] = build_t_idx();

/// Representative (i, j) for each stored second-order slot.
const H_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
/// Representative (i, j, k) for each stored third-order slot.
const T_TRIPLES: [(usize, usize, usize); 10] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 0, 2),
    (0, 1, 1),
    (0, 1, 2),
    (0, 2, 2),
    (1, 1, 1),
    (1, 1, 2),
    (1, 2, 2),
    (2, 2, 2),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub order: u8,
    pub v: f64,
    pub g: [f64; 3],
    pub h: [f64; 6],
    pub t: [f64; 10],
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl Jet {
    /// A constant, exact to every order.
    pub fn constant(v: f64) -> Jet {
        Jet { order: MAX_ORDER, v, g: [0.0; 3], h: [0.0; 6], t: [0.0; 10] }
    }

    /// Exact zero known to `order`.
    pub fn zero(order: u8) -> Jet {
        let mut z = Jet::constant(0.0);
        z.order = order;
        z
    }

    /// The seed for coordinate `axis` at value `v`.
    pub fn variable(v: f64, axis: usize, order: u8) -> Jet {
        let mut j = Jet::constant(v);
        j.order = order.min(MAX_ORDER);
        if j.order >= 1 {
            j.g[axis] = 1.0;
        }
        j
    }

    /// Identity seeds at `p`, truncated at `order`.
    pub fn seed(p: [f64; 3], order: u8) -> [Jet; 3] {
        [Jet::variable(p[0], 0, order), Jet::variable(p[1], 1, order), Jet::variable(p[2], 2, order)]
    }

    pub fn with_order(mut self, order: u8) -> Jet {
        self.truncate(order.min(self.order));
        self
    }

    fn truncate(&mut self, order: u8) {
        self.order = order;
        if order < 3 {
            self.t = [0.0; 10];
        }
        if order < 2 {
            self.h = [0.0; 6];
        }
        if order < 1 {
            self.g = [0.0; 3];
        }
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[H_IDX[i][j]]
    }

    #[inline]
    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        self.t[T_IDX[i][j][k]]
    }

    /// True when every tracked coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.v == 0.0
            && self.g.iter().all(|x| *x == 0.0)
            && self.h.iter().all(|x| *x == 0.0)
            && self.t.iter().all(|x| *x == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.g.iter().all(|x| x.is_finite())
            && self.h.iter().all(|x| x.is_finite())
            && self.t.iter().all(|x| x.is_finite())
    }

    /// Partial derivative along coordinate `axis`.
    pub fn partial(&self, axis: usize) -> Jet {
        if self.order == 0 {
            // nothing known about the derivative
            let mut z = Jet::constant(f64::NAN);
            z.order = 0;
            return z;
        }
        let mut out = Jet::constant(self.g[axis]);
        out.order = self.order - 1;
        if out.order >= 1 {
            for b in 0..3 {
                out.g[b] = self.hess(axis, b);
            }
        }
        if out.order >= 2 {
            for (s, &(b, c)) in H_PAIRS.iter().enumerate() {
                out.h[s] = self.third(axis, b, c);
            }
        }
        out.truncate(out.order);
        out
    }

    /// Composition with a univariate function given its derivatives at `self.v`.
    pub fn apply(&self, f0: f64, f1: f64, f2: f64, f3: f64) -> Jet {
        let a = self;
        let mut out = Jet::constant(f0);
        out.order = a.order;
        if a.order >= 1 {
            for i in 0..3 {
                out.g[i] = f1 * a.g[i];
            }
        }
        if a.order >= 2 {
            for (s, &(i, j)) in H_PAIRS.iter().enumerate() {
                out.h[s] = f1 * a.h[s] + f2 * a.g[i] * a.g[j];
            }
        }
        if a.order >= 3 {
            for (s, &(i, j, k)) in T_TRIPLES.iter().enumerate() {
                out.t[s] = f1 * a.t[s]
                    + f2 * (a.hess(i, j) * a.g[k] + a.hess(i, k) * a.g[j] + a.hess(j, k) * a.g[i])
                    + f3 * a.g[i] * a.g[j] * a.g[k];
            }
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        self.apply(e, e, e, e)
    }

    pub fn ln(&self) -> Jet {
        let x = self.v;
        self.apply(x.ln(), 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.apply(s, c, -s, -c)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.apply(c, -s, -c, s)
    }

    pub fn sqrt(&self) -> Jet {
        let r = self.v.sqrt();
        self.apply(r, 0.5 / r, -0.25 / (r * self.v), 0.375 / (r * self.v * self.v))
    }

    pub fn powf(&self, p: f64) -> Jet {
        let x = self.v;
        self.apply(
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        )
    }

    pub fn recip(&self) -> Jet {
        let x = self.v;
        let r = 1.0 / x;
        self.apply(r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r)
    }

    pub fn abs(&self) -> Jet {
        if self.v < 0.0 {
            -*self
        } else {
            *self
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut out = *self;
        out.v *= c;
        out.g.iter_mut().for_each(|x| *x *= c);
        out.h.iter_mut().for_each(|x| *x *= c);
        out.t.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// Multivariate composition: `self` is the Taylor data of a function at the
    /// point `q.v`, and `q` the inner map.
    pub fn compose(&self, q: &[Jet; 3]) -> Jet {
        let f = self;
        let order = f.order.min(q[0].order).min(q[1].order).min(q[2].order);
        let mut out = Jet::constant(f.v);
        out.order = order;
        if order >= 1 {
            for i in 0..3 {
                out.g[i] = (0..3).map(|a| f.g[a] * q[a].g[i]).sum();
            }
        }
        if order >= 2 {
            for (s, &(i, j)) in H_PAIRS.iter().enumerate() {
                let mut acc = 0.0;
                for a in 0..3 {
                    acc += f.g[a] * q[a].h[s];
                    for b in 0..3 {
                        acc += f.hess(a, b) * q[a].g[i] * q[b].g[j];
                    }
                }
                out.h[s] = acc;
            }
        }
        if order >= 3 {
            for (s, &(i, j, k)) in T_TRIPLES.iter().enumerate() {
                let mut acc = 0.0;
                for a in 0..3 {
                    acc += f.g[a] * q[a].t[s];
                    for b in 0..3 {
                        let fab = f.hess(a, b);
                        if fab != 0.0 {
                            acc += fab
                                * (q[a].hess(i, j) * q[b].g[k]
                                    + q[a].hess(i, k) * q[b].g[j]
                                    + q[a].hess(j, k) * q[b].g[i]);
                        }
                        for c in 0..3 {
                            let fabc = f.third(a, b, c);
                            if fabc != 0.0 {
                                acc += fabc * q[a].g[i] * q[b].g[j] * q[c].g[k];
                            }
                        }
                    }
                }
                out.t[s] = acc;
            }
        }
        out
    }

    /// True when `q` is exactly the identity seed at its value.
    pub fn is_identity_seed(q: &[Jet; 3]) -> bool {
        for (a, qa) in q.iter().enumerate() {
            for i in 0..3 {
                let want = if i == a && qa.order >= 1 { 1.0 } else { 0.0 };
                if qa.g[i] != want {
                    return false;
                }
            }
            if qa.h.iter().any(|x| *x != 0.0) || qa.t.iter().any(|x| *x != 0.0) {
                return false;
            }
        }
        true
    }

    /// Point value of a seed triple.
    pub fn point(q: &[Jet; 3]) -> [f64; 3] {
        [q[0].v, q[1].v, q[2].v]
    }

    /// Lowest order across a triple.
    pub fn min_order(q: &[Jet; 3]) -> u8 {
        q[0].order.min(q[1].order).min(q[2].order)
    }
}

fn merged_order(a: &Jet, b: &Jet) -> u8 {
    a.order.min(b.order)
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, b: Jet) -> Jet {
        let mut out = self;
        out.v += b.v;
        for i in 0..3 {
            out.g[i] += b.g[i];
        }
        for i in 0..6 {
            out.h[i] += b.h[i];
        }
        for i in 0..10 {
            out.t[i] += b.t[i];
        }
        let ord = merged_order(&self, &b);
        out.truncate(ord);
        out
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, b: Jet) {
        *self = *self + b;
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, b: Jet) -> Jet {
        self + (-b)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, b: Jet) -> Jet {
        let a = self;
        let order = match (a.is_zero(), b.is_zero()) {
            (true, true) => return Jet::zero(a.order.max(b.order)),
            (true, false) => return Jet::zero(a.order),
            (false, true) => return Jet::zero(b.order),
            (false, false) => merged_order(&a, &b),
        };
        let mut out = Jet::constant(a.v * b.v);
        out.order = order;
        if order >= 1 {
            for i in 0..3 {
                out.g[i] = a.g[i] * b.v + a.v * b.g[i];
            }
        }
        if order >= 2 {
            for (s, &(i, j)) in H_PAIRS.iter().enumerate() {
                out.h[s] = a.h[s] * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.h[s];
            }
        }
        if order >= 3 {
            for (s, &(i, j, k)) in T_TRIPLES.iter().enumerate() {
                out.t[s] = a.t[s] * b.v
                    + a.hess(i, j) * b.g[k]
                    + a.hess(i, k) * b.g[j]
                    + a.hess(j, k) * b.g[i]
                    + a.g[i] * b.hess(j, k)
                    + a.g[j] * b.hess(i, k)
                    + a.g[k] * b.hess(i, j)
                    + a.v * b.t[s];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, b: Jet) -> Jet {
        if self.is_zero() {
            return Jet::zero(self.order);
        }
        self * b.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        self.scale(1.0 / c)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Jet {
        Jet::constant(v)
    }
}

/// Dot product of two jet triples.
pub fn dot(a: &[Jet; 3], b: &[Jet; 3]) -> Jet {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Values of a jet triple.
pub fn values(a: &[Jet; 3]) -> [f64; 3] {
    [a[0].v, a[1].v, a[2].v]
}

pub fn constant3(v: [f64; 3]) -> [Jet; 3] {
    [Jet::constant(v[0]), Jet::constant(v[1]), Jet::constant(v[2])]
}

pub fn scale3(a: &[Jet; 3], s: Jet) -> [Jet; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cross3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn product_matches_known_polynomial() {
        // f = x^2 y z at (1, 2, 3)
        let q = Jet::seed([1.0, 2.0, 3.0], 3);
        let f = q[0] * q[0] * q[1] * q[2];
        assert_eq!(f.v, 6.0);
        assert_eq!(f.g, [12.0, 3.0, 2.0]);
        assert_eq!(f.hess(0, 0), 12.0);
        assert_eq!(f.hess(0, 1), 6.0);
        assert_eq!(f.hess(1, 2), 1.0);
        assert_eq!(f.third(0, 0, 1), 6.0);
        assert_eq!(f.third(0, 1, 2), 2.0);
        assert_eq!(f.third(0, 0, 0), 0.0);
    }

    #[test]
    fn transcendental_derivatives() {
        let q = Jet::seed([0.3, 0.0, 0.0], 3);
        let e = (q[0] * 2.0).exp();
        let ex = (0.6f64).exp();
        assert!(close(e.third(0, 0, 0), 8.0 * ex, 1e-14));
        let l = (q[0] + 1.0).ln();
        assert!(close(l.third(0, 0, 0), 2.0 / 1.3f64.powi(3), 1e-14));
        let s = q[0].sin();
        assert!(close(s.hess(0, 0), -(0.3f64).sin(), 1e-14));
        let r = q[0].sqrt();
        assert!(close(r.third(0, 0, 0), 0.375 * 0.3f64.powf(-2.5), 1e-13));
    }

    #[test]
    fn partial_lowers_order() {
        let q = Jet::seed([0.5, 0.2, -0.1], 3);
        let f = q[0].sin() * q[1].exp() * q[2];
        let fx = f.partial(0);
        assert_eq!(fx.order, 2);
        assert!(close(fx.v, 0.5f64.cos() * 0.2f64.exp() * -0.1, 1e-14));
        let fxy = fx.partial(1);
        assert!(close(fxy.v, f.hess(0, 1), 1e-14));
        assert_eq!(fxy.partial(2).partial(0).order, 0);
    }

    #[test]
    fn zero_operand_keeps_its_order() {
        let q = Jet::seed([0.5, 0.2, -0.1], 1);
        let mut z = Jet::constant(0.0);
        z.order = 3;
        let p = z * q[0];
        assert_eq!(p.order, 3);
        assert!(p.is_zero());
        assert_eq!((q[0] * q[1]).order, 1);
    }

    #[test]
    fn compose_matches_direct_chain() {
        // F(u, v, w) = u * exp(v) + w^2 ; inner q = (x y, sin z, x + z)
        let p = [0.4, -0.7, 1.1];
        let s = Jet::seed(p, 3);
        let inner = [s[0] * s[1], s[2].sin(), s[0] + s[2]];
        let direct = inner[0] * inner[1].exp() + inner[2] * inner[2];
        let y = values(&inner);
        let ys = Jet::seed(y, 3);
        let outer = ys[0] * ys[1].exp() + ys[2] * ys[2];
        let composed = outer.compose(&inner);
        assert!(close(composed.v, direct.v, 1e-14));
        for i in 0..3 {
            assert!(close(composed.g[i], direct.g[i], 1e-13));
        }
        for i in 0..6 {
            assert!(close(composed.h[i], direct.h[i], 1e-13));
        }
        for i in 0..10 {
            assert!(close(composed.t[i], direct.t[i], 1e-12));
        }
    }
}
