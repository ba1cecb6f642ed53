//! Convex combinations of norms and of contact forms with a common kernel.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{norm1, reeb_jet, Calculus};
use crate::contact::{assemble, strad_predicates, Assembly, Consensus, ContactTolerances};
use crate::error::{LabError, Result};
use crate::expansion::{is_adapted, is_strongly_adapted_norm, ExpansionRate, NormForm};
use crate::fields::{FormCombo, OneForm, Scalar, ScaledForm, J3};
use crate::flow::FlowSpec;
use crate::jet::{self, Jet};
use crate::model::ModelPoint;

/// Default blend parameters: 11 uniform points of `[0, 1]`.
pub fn tau_grid(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// A norm form `alpha_u` and a positive factor `h`, blended as
/// `((1 - tau) + tau h) alpha_u`.
#[derive(Clone)]
pub struct BlendSpec {
    pub base: NormForm,
    pub h: Scalar,
    pub spec: FlowSpec,
}

impl BlendSpec {
    pub fn new(base: NormForm, h: Scalar, spec: FlowSpec, sample: &[ModelPoint]) -> Result<BlendSpec> {
        for p in sample {
            let v = h.value(p.coords);
            if !(v > 0.0) {
                return Err(LabError::Precondition(format!("blend factor must be positive, got {v:.3e} at {:?}", p.coords)));
            }
        }
        Ok(BlendSpec { base, h, spec })
    }

    pub fn endpoint(&self) -> NormForm {
        NormForm::new(self.base.model, self.base.role, Arc::new(ScaledForm { factor: self.h.clone(), base: self.base.form.clone() }))
    }

    pub fn blend(&self, tau: f64) -> NormForm {
        blend_forms(&self.base, &self.endpoint(), tau)
    }

    /// `r`, `X r`, `h`, `X ln h` and `X X ln h` at a point.
    fn pieces(&self, p: [f64; 3]) -> [f64; 5] {
        let calc = Calculus::new(self.base.model);
        let (r, xr) = ExpansionRate::new(self.base.clone(), self.spec.clone()).eval(p);
        let s = Jet::seed(p, 2);
        let h = self.h.jet(&s);
        let x = self.spec.vector_jet(&s);
        let xl = calc.deriv(&x, &h.ln());
        let xxl = calc.deriv(&x, &xl);
        [r, xr, h.v, xl.v, xxl.v]
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(LabError::Precondition(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// `(1 - tau) a + tau b`.
pub fn blend_forms(a: &NormForm, b: &NormForm, tau: f64) -> NormForm {
    let mut terms = Vec::new();
    if tau < 1.0 {
        terms.push((1.0 - tau, a.form.clone()));
    }
    if tau > 0.0 {
        terms.push((tau, b.form.clone()));
    }
    NormForm::new(a.model, a.role, Arc::new(FormCombo { terms }))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlendRateRow {
    pub index: usize,
    pub tau: f64,
    pub formula: f64,
    pub direct: f64,
}

/// The blended rate from the endpoint rates, next to the rate of the blended form.
pub fn blend_rate(bs: &BlendSpec, tau: f64, sample: &[ModelPoint]) -> Result<Vec<BlendRateRow>> {
    check_tau(tau)?;
    let direct = ExpansionRate::new(bs.blend(tau), bs.spec.clone());
    Ok(sample
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let [r, _, h, xl, _] = bs.pieces(p.coords);
            let rbar = r + xl;
            let formula = ((1.0 - tau) * r + tau * h * rbar) / ((1.0 - tau) + tau * h);
            BlendRateRow { index, tau, formula, direct: direct.eval(p.coords).0 }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlendIdentityRow {
    pub index: usize,
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub weights: [f64; 2],
    pub rel_err: f64,
}

/// `r_tau^2 + X r_tau` against the weighted average of the endpoint values.
pub fn blend_identity(bs: &BlendSpec, tau: f64, sample: &[ModelPoint]) -> Result<Vec<BlendIdentityRow>> {
    check_tau(tau)?;
    let direct = ExpansionRate::new(bs.blend(tau), bs.spec.clone());
    Ok(sample
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let [r, xr, h, xl, xxl] = bs.pieces(p.coords);
            let rbar = r + xl;
            let xrbar = xr + xxl;
            let (rt, xrt) = direct.eval(p.coords);
            let lhs = rt * rt + xrt;
            let d = (1.0 - tau) + tau * h;
            let w0 = ((1.0 - tau).powi(2) + tau * (1.0 - tau) * h) / (d * d);
            let w1 = (tau * tau * h * h + tau * (1.0 - tau) * h) / (d * d);
            let rhs = w0 * (r * r + xr) + w1 * (rbar * rbar + xrbar);
            let rel_err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
            BlendIdentityRow { index, tau, lhs, rhs, weights: [w0, w1], rel_err }
        })
        .collect())
}

/// Which property [`convexity_probe`] tests along the blend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Level {
    Adapted,
    Strong,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvexityRow {
    pub tau: f64,
    pub holds: bool,
    pub margin: f64,
}

/// The property at every `tau` of the straight blend between two norms on the same bundle.
pub fn convexity_probe(a: &NormForm, b: &NormForm, spec: &FlowSpec, level: Level, taus: &[f64], sample: &[ModelPoint], tol: f64) -> Result<Vec<ConvexityRow>> {
    if a.role != b.role || a.model != b.model {
        return Err(LabError::Precondition("blended norms must live on the same bundle".into()));
    }
    let eval = |nf: &NormForm| -> (bool, f64) {
        let rate = ExpansionRate::new(nf.clone(), spec.clone());
        match level {
            Level::Adapted => {
                let v = is_adapted(&rate, sample, tol);
                (v.holds, v.margin)
            }
            Level::Strong => {
                let v = is_strongly_adapted_norm(&rate, sample, tol);
                (v.holds, v.margin)
            }
        }
    };
    for (name, nf) in [("first", a), ("second", b)] {
        let (ok, m) = eval(nf);
        if !ok {
            return Err(LabError::Precondition(format!("{name} endpoint fails the {level:?} test (margin {m:.3e})")));
        }
    }
    taus.par_iter()
        .map(|&tau| {
            check_tau(tau)?;
            let (holds, margin) = eval(&blend_forms(a, b, tau));
            Ok(ConvexityRow { tau, holds, margin })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WRow {
    pub tau: f64,
    /// Smallest `r^2 + X r + r` along the blend.
    pub margin: f64,
    pub inequality: Option<bool>,
    pub strad: Consensus,
    pub agree: bool,
}

/// Blends of two unstable norms `alpha_u` with `alpha_u - alpha_s` strongly adapted,
/// for a flow with unit stable rate.
pub fn w_alpha_s_probe(
    alpha_s: &NormForm,
    a: &NormForm,
    b: &NormForm,
    spec: &FlowSpec,
    taus: &[f64],
    sample: &[ModelPoint],
    tol: &ContactTolerances,
) -> Result<Vec<WRow>> {
    let rs = ExpansionRate::new(alpha_s.clone(), spec.clone());
    for p in sample {
        let (r, xr) = rs.eval(p.coords);
        if (r + 1.0).abs() > 1e-8 || xr.abs() > 1e-7 {
            return Err(LabError::Precondition(format!("stable rate is not -1 at {:?} ({r:.6e})", p.coords)));
        }
    }
    for (name, nf) in [("first", a), ("second", b)] {
        let asm = assemble(name, nf.clone(), alpha_s.clone(), spec.clone(), sample, tol)?;
        let rep = strad_predicates(&asm, sample, tol);
        if rep.consensus != Consensus::AllTrue {
            return Err(LabError::Precondition(format!("{name} endpoint is not strongly adapted ({:?})", rep.consensus)));
        }
    }
    taus.iter()
        .map(|&tau| {
            check_tau(tau)?;
            let nf = blend_forms(a, b, tau);
            let rate = ExpansionRate::new(nf.clone(), spec.clone());
            let margin = sample
                .par_iter()
                .map(|p| {
                    let (r, xr) = rate.eval(p.coords);
                    r * r + xr + r
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let inequality = if margin.abs() < tol.margin { None } else { Some(margin > 0.0) };
            let asm = assemble(&format!("blend {tau}"), nf, alpha_s.clone(), spec.clone(), sample, tol)?;
            let strad = strad_predicates(&asm, sample, tol).consensus;
            let agree = match (inequality, strad) {
                (None, _) => true,
                (Some(true), Consensus::AllTrue) => true,
                (Some(false), Consensus::AllFalse | Consensus::Mixed) => true,
                _ => false,
            };
            Ok(WRow { tau, margin, inequality, strad, agree })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogConvexityRow {
    pub tau: f64,
    /// Smallest normalized `d alpha_tau (X, [R_tau, X])`.
    pub margin: f64,
    pub holds: bool,
    /// Largest deviation of `d alpha_+(X, [X, e^{tau g} R_tau])` from its chord.
    pub affinity: f64,
    /// Largest deviation from `d alpha_tau(X, [X, R_tau]) = Phi(tau) + tau^2 (X g)^2`.
    pub identity: f64,
}

/// `Q(tau) = d alpha_tau (X, [X, R_tau])` and `Phi(tau) = d alpha_+(X, [X, e^{tau g} R_tau])`.
fn log_convexity_terms(asm: &Assembly, g: &Scalar, tau: f64, p: [f64; 3]) -> (f64, f64, f64, f64) {
    let calc = Calculus::new(asm.model());
    let s = Jet::seed(p, 2);
    let a: J3 = asm.alpha_plus.jet(&s);
    let gj = g.jet(&s);
    let e = (gj * tau).exp();
    let at = jet::scale3(&a, e);
    let x = asm.spec.vector_jet(&s);
    let rt = reeb_jet(&calc, &at);
    let da = calc.d(&a);
    let dat = calc.d(&at);
    let x0 = x.map(|j| j.with_order(0));
    let q = crate::calculus::pair2(&dat, &x0, &calc.bracket(&x, &rt)).v;
    let srt = jet::scale3(&rt, e.with_order(1));
    let phi = crate::calculus::pair2(&da, &x0, &calc.bracket(&x, &srt)).v;
    let xg = calc.deriv(&x, &gj).v;
    let scale = norm1(&x) * norm1(&rt) * crate::calculus::norm2(&dat) * norm1(&x).max(1.0);
    (q, phi, xg, scale)
}

/// Convexity of `tau -> e^{tau g} alpha_+` for strong adaptation.
pub fn log_convexity_probe(asm: &Assembly, g: Scalar, taus: &[f64], sample: &[ModelPoint], tol: &ContactTolerances) -> Result<Vec<LogConvexityRow>> {
    let other = assemble(
        "rescaled",
        asm.alpha_u.conformal(g.clone()),
        asm.alpha_s.conformal(g.clone()),
        asm.spec.clone(),
        sample,
        tol,
    )?;
    for (name, a) in [("first", asm), ("second", &other)] {
        let rep = strad_predicates(a, sample, tol);
        if rep.consensus != Consensus::AllTrue {
            return Err(LabError::Precondition(format!("{name} endpoint is not strongly adapted ({:?})", rep.consensus)));
        }
    }
    let ends: Vec<(f64, f64)> = sample
        .par_iter()
        .map(|p| (log_convexity_terms(asm, &g, 0.0, p.coords).1, log_convexity_terms(asm, &g, 1.0, p.coords).1))
        .collect();
    taus.iter()
        .map(|&tau| {
            check_tau(tau)?;
            let rows: Vec<(f64, f64, f64)> = sample
                .par_iter()
                .zip(ends.par_iter())
                .map(|(p, &(phi0, phi1))| {
                    let (q, phi, xg, scale) = log_convexity_terms(asm, &g, tau, p.coords);
                    let chord = (1.0 - tau) * phi0 + tau * phi1;
                    let aff = (phi - chord).abs() / phi0.abs().max(phi1.abs()).max(1.0);
                    let ident = (q - phi - tau * tau * xg * xg).abs() / q.abs().max(1.0);
                    (-q / scale.max(1e-300), aff, ident)
                })
                .collect();
            let margin = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            let affinity = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            let identity = rows.iter().map(|r| r.2).fold(0.0, f64::max);
            Ok(LogConvexityRow { tau, margin, holds: margin > tol.margin, affinity, identity })
        })
        .collect()
}

/// Ratio `e^g` between two forms with the same kernel, or an error if the kernels differ.
pub fn log_ratio(a: &dyn OneForm, b: &dyn OneForm, sample: &[ModelPoint]) -> Result<Vec<f64>> {
    sample
        .iter()
        .map(|p| {
            let va = a.value(p.coords);
            let vb = b.value(p.coords);
            let na = (va[0] * va[0] + va[1] * va[1] + va[2] * va[2]).sqrt();
            let k = (0..3).map(|i| va[i] * vb[i]).sum::<f64>() / (na * na);
            let res = (0..3).map(|i| (vb[i] - k * va[i]).powi(2)).sum::<f64>().sqrt();
            if !(k > 0.0) || res > 1e-9 * na * k.abs() {
                return Err(LabError::Inconsistent(format!("forms differ by more than a positive factor at {:?}", p.coords)));
            }
            Ok(k.ln())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::assemble;
    use crate::expansion::{cat_norm, sl2_norm};
    use crate::fields::{ConstScalar, ExpProfile, Profile, Shape};
    use crate::flow::Role;
    use crate::model::Model;
    use crate::sampling::sample_points;

    fn h01() -> Scalar {
        Arc::new(ExpProfile { rate: 0.0, h: Profile::single(0.1, Shape::Sin) })
    }

    #[test]
    fn blend_rate_and_identity() {
        let sample = sample_points(Model::Cat, 50, 3);
        let bs = BlendSpec::new(cat_norm(Role::Unstable, Profile::single(0.02, Shape::Cos)), h01(), FlowSpec::new(Model::Cat), &sample).unwrap();
        for tau in tau_grid(11) {
            for row in blend_rate(&bs, tau, &sample).unwrap() {
                assert!((row.formula - row.direct).abs() < 1e-7 * row.direct.abs().max(1.0), "{row:?}");
            }
            for row in blend_identity(&bs, tau, &sample).unwrap() {
                assert!(row.rel_err < 1e-6, "{row:?}");
                assert!(row.weights[0] >= 0.0 && row.weights[1] >= 0.0);
            }
        }
    }

    #[test]
    fn strong_blends_of_strong_endpoints() {
        let sample = sample_points(Model::Cat, 60, 4);
        let a = cat_norm(Role::Unstable, Profile::single(0.01, Shape::Sin));
        let b = cat_norm(Role::Unstable, Profile::single(-0.01, Shape::Sin));
        let rows = convexity_probe(&a, &b, &FlowSpec::new(Model::Cat), Level::Strong, &tau_grid(11), &sample, 1e-9).unwrap();
        assert!(rows.iter().all(|r| r.holds));
        let a = cat_norm(Role::Unstable, Profile::single(0.05, Shape::Sin));
        let b = cat_norm(Role::Unstable, Profile::single(-0.05, Shape::Cos));
        assert!(convexity_probe(&a, &b, &FlowSpec::new(Model::Cat), Level::Strong, &[0.5], &sample, 1e-9).is_err());
        let rows = convexity_probe(&a, &b, &FlowSpec::new(Model::Cat), Level::Adapted, &tau_grid(11), &sample, 1e-9).unwrap();
        assert!(rows.iter().all(|r| r.holds));
    }

    #[test]
    fn log_convexity_on_both_models() {
        let tol = ContactTolerances::default();
        let sample = sample_points(Model::Sl2, 2, 1);
        let asm = assemble("sl2", sl2_norm(Role::Unstable, 0.0), sl2_norm(Role::Stable, 0.0), FlowSpec::new(Model::Sl2), &sample, &tol).unwrap();
        let rows = log_convexity_probe(&asm, Arc::new(ConstScalar(0.7)), &tau_grid(5), &sample, &tol).unwrap();
        assert!(rows.iter().all(|r| r.holds && r.affinity < 1e-12 && r.identity < 1e-12), "{rows:?}");

        let sample = sample_points(Model::Cat, 40, 2);
        let asm = assemble("cat", cat_norm(Role::Unstable, Profile::zero()), cat_norm(Role::Stable, Profile::zero()), FlowSpec::new(Model::Cat), &sample, &tol).unwrap();
        let g: Scalar = Arc::new(Profile::single(0.01, Shape::Sin));
        let rows = log_convexity_probe(&asm, g, &tau_grid(11), &sample, &tol).unwrap();
        assert!(rows.iter().all(|r| r.holds && r.affinity < 1e-5 && r.identity < 1e-8), "{rows:?}");
    }

    #[test]
    fn ratio_needs_equal_kernels() {
        let sample = sample_points(Model::Cat, 5, 2);
        let a = cat_norm(Role::Unstable, Profile::zero()).form;
        let b = cat_norm(Role::Unstable, Profile::single(0.3, Shape::Sin)).form;
        let g = log_ratio(&*a, &*b, &sample).unwrap();
        assert!((g[0] - 0.3 * (2.0 * std::f64::consts::PI * sample[0].coords[2]).sin()).abs() < 1e-12);
        let c = cat_norm(Role::Stable, Profile::zero()).form;
        assert!(log_ratio(&*a, &*c, &sample).is_err());
    }

    #[test]
    fn w_blend_of_two_windows() {
        let tol = ContactTolerances::default();
        let sample = sample_points(Model::Cat, 30, 8);
        let au = cat_norm(Role::Unstable, Profile::single(0.05, Shape::Sin));
        let als = cat_norm(Role::Stable, Profile::zero());
        let spec = FlowSpec::new(Model::Cat);
        let (_, a, re) = crate::sync::pipeline(au.clone(), als.clone(), &spec, crate::sync::SyncParams::window(4.0), &sample).unwrap();
        let (_, b, _) = crate::sync::pipeline(au, als.clone(), &spec, crate::sync::SyncParams::window(8.0), &sample).unwrap();
        let rows = w_alpha_s_probe(&als, &a, &b, &re, &tau_grid(5), &sample, &tol).unwrap();
        assert!(rows.iter().all(|r| r.inequality == Some(true) && r.strad == Consensus::AllTrue && r.agree), "{rows:?}");
        let rows = w_alpha_s_probe(&als, &a, &a, &re, &[0.0, 1.0], &sample, &tol).unwrap();
        assert!(rows.iter().all(|r| r.agree));
    }
}
