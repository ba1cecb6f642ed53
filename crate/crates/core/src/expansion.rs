//! Norm forms on the invariant line bundles and their expansion rates.
//!
//! A norm form for the unstable bundle is a one-form whose kernel is the
//! weak-stable plane; its value on an unstable vector defines a norm on that
//! line. Its expansion rate `r` is defined by `L_X alpha = r alpha`.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::Serialize;

use crate::calculus::{lie_pullback, Calculus};
use crate::error::{LabError, Result};
use crate::fields::{eval_lifted, scalar_fn, CoframeForm, ConformalForm, ConstForm, ExpProfile, Form, Profile, Scalar, ScalarField, J3};
use crate::flow::{orbit_integral, FlowSpec, Role, Speed};
use crate::jet::{self, Jet};
use crate::model::{cat_log_lambda, Model, ModelPoint};

/// A one-form normalizing one invariant line bundle.
#[derive(Clone)]
pub struct NormForm {
    pub model: Model,
    pub role: Role,
    pub form: Form,
}

impl std::fmt::Debug for NormForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NormForm({}, {:?})", self.model, self.role)
    }
}

impl NormForm {
    pub fn new(model: Model, role: Role, form: Form) -> NormForm {
        NormForm { model, role, form }
    }

    /// Multiply by `exp(h)`.
    pub fn conformal(&self, h: Scalar) -> NormForm {
        NormForm::new(self.model, self.role, Arc::new(ConformalForm { log_factor: h, base: self.form.clone() }))
    }

    /// Frame vector spanning the bundle this form normalizes.
    pub fn direction(&self) -> Vector3<f64> {
        let f = self.model.frame_data();
        match self.role {
            Role::Unstable => f.e_u,
            Role::Stable => f.e_s,
        }
    }

    fn other_direction(&self) -> Vector3<f64> {
        let f = self.model.frame_data();
        match self.role {
            Role::Unstable => f.e_s,
            Role::Stable => f.e_u,
        }
    }

    /// `alpha(e)` for the frame vector of the bundle, at a point.
    pub fn on_direction(&self, p: [f64; 3]) -> f64 {
        let a = self.form.value(p);
        let e = self.direction();
        a[0] * e.x + a[1] * e.y + a[2] * e.z
    }

    /// Check that the form kills the flow direction and the other strong
    /// bundle and does not vanish on its own bundle.
    pub fn validate(&self, sample: &[ModelPoint]) -> Result<()> {
        let f = self.model.frame_data();
        for p in sample {
            let a = Vector3::from(self.form.value(p.coords));
            let own = a.dot(&self.direction());
            let scale = a.norm();
            if !(own.abs() > 1e-12 * scale.max(1e-300)) || !own.is_finite() {
                return Err(LabError::Precondition(format!("norm form vanishes on its bundle at {:?}", p.coords)));
            }
            if a.dot(&f.x).abs() > 1e-9 * scale || a.dot(&self.other_direction()).abs() > 1e-9 * scale {
                return Err(LabError::Precondition(format!(
                    "norm form for the {:?} bundle does not annihilate the weak complementary plane at {:?}",
                    self.role, p.coords
                )));
            }
        }
        Ok(())
    }
}

/// A cat-model norm form `exp(h(z)) lambda^(+-z) omega`.
pub fn cat_norm(role: Role, h: Profile) -> NormForm {
    let f = Model::Cat.frame_data();
    let (rate, cov) = match role {
        Role::Unstable => (cat_log_lambda(), f.omega_u()),
        Role::Stable => (-cat_log_lambda(), f.omega_s()),
    };
    NormForm::new(
        Model::Cat,
        role,
        Arc::new(CoframeForm { coeff: Arc::new(ExpProfile { rate, h }), covector: [cov.x, cov.y, cov.z] }),
    )
}

/// The frame-model norm form `exp(c) alpha_F` or `exp(c) alpha_E`.
pub fn sl2_norm(role: Role, c: f64) -> NormForm {
    let k = c.exp();
    let cov = match role {
        Role::Unstable => [0.0, 0.0, k],
        Role::Stable => [0.0, k, 0.0],
    };
    NormForm::new(Model::Sl2, role, Arc::new(ConstForm(cov)))
}

/// Expansion rate of a norm form under a flow.
#[derive(Clone)]
pub struct ExpansionRate {
    pub nf: NormForm,
    pub spec: FlowSpec,
    calc: Calculus,
    dir: [Jet; 3],
}

impl ExpansionRate {
    pub fn new(nf: NormForm, spec: FlowSpec) -> ExpansionRate {
        let d = nf.direction();
        let calc = Calculus::new(nf.model);
        ExpansionRate { nf, spec, calc, dir: jet::constant3([d.x, d.y, d.z]) }
    }

    /// Rate jets on fresh seeds.
    fn local(&self, s: &J3) -> Jet {
        let a = self.nf.form.jet(s);
        let x = self.spec.vector_jet(s);
        let l = self.calc.lie(&x, &a);
        jet::dot(&l, &self.dir) / jet::dot(&a, &self.dir).with_order(l[0].order)
    }

    /// `r` and `X r` at a point.
    pub fn eval(&self, p: [f64; 3]) -> (f64, f64) {
        let s = Jet::seed(p, 1);
        let r = self.jet(&s);
        let x = self.spec.vector_jet(&s);
        (r.v, self.calc.deriv(&x, &r).v)
    }

    /// Rate through the flow-pullback Lie derivative instead of Cartan's formula.
    pub fn eval_pullback(&self, p: [f64; 3]) -> Result<f64> {
        let x = self.spec.vector_field();
        let l = lie_pullback(self.nf.model, &*x, &*self.nf.form, p, 1e-3)?;
        let e = self.nf.direction();
        let num = l[0] * e.x + l[1] * e.y + l[2] * e.z;
        Ok(num / self.nf.on_direction(p))
    }
}

impl ScalarField for ExpansionRate {
    fn jet(&self, q: &J3) -> Jet {
        eval_lifted(q, 1, |s| self.local(s))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GrowthCheck {
    pub growth: f64,
    pub integrated: f64,
    pub rel_err: f64,
}

/// Compare `|alpha(X^t_* e)| / |alpha(e)|` with `exp(int_0^t r)`.
pub fn integrated_expansion_check(rate: &ExpansionRate, p: &ModelPoint, t: f64) -> Result<GrowthCheck> {
    let e = rate.nf.direction();
    let (q, w) = rate.spec.pushforward_lifted(p.coords, e, t)?;
    let a1 = Vector3::from(rate.nf.form.value(q)).dot(&w);
    let a0 = rate.nf.on_direction(p.coords);
    let growth = (a1 / a0).abs();
    let f = |m: &ModelPoint| Ok(rate.eval(m.coords).0);
    let integral = orbit_integral(&f, &rate.spec, p, t, 2e-3)?;
    let integrated = integral.exp();
    let rel_err = (growth - integrated).abs() / integrated;
    Ok(GrowthCheck { growth, integrated, rel_err })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AdaptedVerdict {
    pub holds: bool,
    /// Smallest `sign * r` over the sample; positive when adapted.
    pub margin: f64,
}

/// Whether the norm is adapted: `r > 0` (unstable) or `r < 0` (stable) on the sample.
pub fn is_adapted(rate: &ExpansionRate, sample: &[ModelPoint], tol: f64) -> AdaptedVerdict {
    let sign = rate.nf.role.sign();
    let margin = sample.iter().map(|p| sign * rate.eval(p.coords).0).fold(f64::INFINITY, f64::min);
    AdaptedVerdict { holds: margin > tol, margin }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StrongVerdict {
    pub holds: bool,
    /// Smallest `r^2 + X r`; the criterion used.
    pub margin: f64,
    /// Smallest `r^2 + X |r|`, the literal variant; equal for unstable norms.
    pub literal_margin: f64,
    pub adapted: bool,
}

/// Whether the norm is strongly adapted: adapted and `r^2 + X r > 0`.
pub fn is_strongly_adapted_norm(rate: &ExpansionRate, sample: &[ModelPoint], tol: f64) -> StrongVerdict {
    let sign = rate.nf.role.sign();
    let mut m = f64::INFINITY;
    let mut lit = f64::INFINITY;
    let mut adapted = true;
    for p in sample {
        let (r, xr) = rate.eval(p.coords);
        adapted &= sign * r > tol;
        m = m.min(r * r + xr);
        lit = lit.min(r * r + r.signum() * xr);
    }
    StrongVerdict { holds: adapted && m > tol, margin: m, literal_margin: lit, adapted }
}

/// Reparametrize the flow so that the stable rate of `alpha_s` becomes `-1`.
pub fn reparametrize_unit_stable(alpha_s: &NormForm, spec: &FlowSpec, sample: &[ModelPoint]) -> Result<FlowSpec> {
    if alpha_s.role != Role::Stable {
        return Err(LabError::Precondition("unit stable reparametrization needs a stable norm form".into()));
    }
    let rate = ExpansionRate::new(alpha_s.clone(), spec.clone());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in sample {
        let r = rate.eval(p.coords).0;
        if !(r < 0.0) {
            return Err(LabError::Precondition(format!("stable rate is not negative at {:?} ({r:.3e})", p.coords)));
        }
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if sample.is_empty() {
        return Err(LabError::Degenerate("empty sample".into()));
    }
    // a constant rate with a constant speed keeps the closed-form flow
    if let (Some(c), true) = (spec.constant_speed(), (hi - lo).abs() <= 1e-13 * lo.abs()) {
        if is_frame_constant(&rate, sample) {
            return Ok(FlowSpec::constant(spec.model, c / (-lo)));
        }
    }
    let old = spec.speed_field();
    let f = scalar_fn(move |q: &J3| old.jet(q) / (-rate.jet(q)));
    Ok(FlowSpec { model: spec.model, speed: Speed::Field(f) })
}

fn is_frame_constant(rate: &ExpansionRate, sample: &[ModelPoint]) -> bool {
    sample.iter().all(|p| {
        let r = rate.jet(&Jet::seed(p.coords, 1));
        r.g.iter().all(|g| g.abs() <= 1e-13)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Shape;
    use crate::sampling::sample_points;

    #[test]
    fn cat_base_rates() {
        let spec = FlowSpec::new(Model::Cat);
        let u = ExpansionRate::new(cat_norm(Role::Unstable, Profile::zero()), spec.clone());
        let s = ExpansionRate::new(cat_norm(Role::Stable, Profile::zero()), spec);
        let (r, xr) = u.eval([0.1, 0.2, 0.3]);
        assert!((r - cat_log_lambda()).abs() < 1e-15 && xr.abs() < 1e-15);
        assert!((s.eval([0.4, 0.9, 0.35]).0 + cat_log_lambda()).abs() < 1e-15);
    }

    #[test]
    fn perturbed_rate_oracle() {
        let d = 0.05;
        let nf = cat_norm(Role::Unstable, Profile::single(d, Shape::Sin));
        let rate = ExpansionRate::new(nf, FlowSpec::new(Model::Cat));
        for z in [0.0, 0.13, 0.5, 0.77] {
            let w = std::f64::consts::TAU;
            let (r, xr) = rate.eval([0.3, 0.3, z]);
            assert!((r - (cat_log_lambda() + w * d * (w * z).cos())).abs() < 1e-13);
            assert!((xr + w * w * d * (w * z).sin()).abs() < 1e-12);
            let pb = rate.eval_pullback([0.3, 0.3, z]).unwrap();
            assert!((pb - r).abs() < 1e-8);
        }
    }

    #[test]
    fn sl2_rates_are_unit() {
        let spec = FlowSpec::new(Model::Sl2);
        let u = ExpansionRate::new(sl2_norm(Role::Unstable, 0.3), spec.clone());
        let s = ExpansionRate::new(sl2_norm(Role::Stable, -0.2), spec);
        assert!((u.eval([0.0; 3]).0 - 1.0).abs() < 1e-15);
        assert!((s.eval([0.0; 3]).0 + 1.0).abs() < 1e-15);
    }

    #[test]
    fn growth_matches_integrated_rate() {
        let nf = cat_norm(Role::Unstable, Profile::single(0.05, Shape::Sin));
        let rate = ExpansionRate::new(nf, FlowSpec::new(Model::Cat));
        let p = ModelPoint::new(Model::Cat, [0.3, 0.1, 0.45]);
        for t in [-20.0, -3.3, 1.7, 20.0] {
            let g = integrated_expansion_check(&rate, &p, t).unwrap();
            assert!(g.rel_err < 1e-8, "t = {t}: {g:?}");
        }
    }

    #[test]
    fn strong_adaptation_threshold() {
        let sample = sample_points(Model::Cat, 300, 3);
        let spec = FlowSpec::new(Model::Cat);
        let weak = ExpansionRate::new(cat_norm(Role::Unstable, Profile::single(0.05, Shape::Sin)), spec.clone());
        let v = is_strongly_adapted_norm(&weak, &sample, 1e-9);
        assert!(v.adapted && !v.holds);
        let strong = ExpansionRate::new(cat_norm(Role::Unstable, Profile::single(0.01, Shape::Sin)), spec);
        assert!(is_strongly_adapted_norm(&strong, &sample, 1e-9).holds);
    }

    #[test]
    fn unit_stable_reparametrization() {
        let sample = sample_points(Model::Cat, 20, 5);
        let spec = FlowSpec::new(Model::Cat);
        let s = cat_norm(Role::Stable, Profile::zero());
        let re = reparametrize_unit_stable(&s, &spec, &sample).unwrap();
        assert!((re.constant_speed().unwrap() - 1.0 / cat_log_lambda()).abs() < 1e-15);
        let sp = cat_norm(Role::Stable, Profile::single(0.05, Shape::Cos));
        let re = reparametrize_unit_stable(&sp, &spec, &sample).unwrap();
        let r = ExpansionRate::new(sp, re);
        for p in &sample {
            assert!((r.eval(p.coords).0 + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_wrong_kernel() {
        let bad = NormForm::new(Model::Cat, Role::Unstable, Arc::new(ConstForm([0.0, 0.0, 1.0])));
        let sample = sample_points(Model::Cat, 3, 1);
        assert!(bad.validate(&sample).is_err());
        assert!(cat_norm(Role::Stable, Profile::zero()).validate(&sample).is_ok());
    }
}
