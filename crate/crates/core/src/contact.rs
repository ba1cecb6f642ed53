//! Contact forms built from pairs of norm forms, the strong-adaptation
//! predicates, and the probes around them.
//!
//! For a pair `(alpha_u, alpha_s)` the contact form is `alpha_+ = alpha_u - alpha_s`,
//! with `L_X alpha_+ = r_u alpha_u - r_s alpha_s`. All predicates are evaluated
//! pointwise from the jets of the two components at a sample point.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{self, det3, norm1, norm2, pair2, reeb_jet, wedge11, wedge12, Calculus};
use crate::error::{LabError, Result};
use crate::expansion::{ExpansionRate, NormForm};
use crate::fields::{eval_lifted, form_diff, Form, OneForm, Scalar, TwoJ, J3};
use crate::flow::{FlowSpec, Role};
use crate::jet::{self, Jet};
use crate::model::{Model, ModelPoint};
use crate::sync::{SyncParams, Synchronizer};

/// Tolerances used by the contact checks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContactTolerances {
    pub contact: f64,
    pub margin: f64,
    pub reebquad: f64,
}

impl Default for ContactTolerances {
    fn default() -> Self {
        ContactTolerances { contact: 1e-9, margin: 1e-6, reebquad: 1e-7 }
    }
}

/// A contact form `alpha_u - alpha_s` together with its flow.
#[derive(Clone)]
pub struct Assembly {
    pub label: String,
    pub alpha_u: NormForm,
    pub alpha_s: NormForm,
    pub spec: FlowSpec,
    pub alpha_plus: Form,
}

impl std::fmt::Debug for Assembly {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Assembly({})", self.label)
    }
}

impl Assembly {
    pub fn model(&self) -> Model {
        self.spec.model
    }

    /// Replace both components by `exp(k) alpha`.
    pub fn rescaled(&self, k: f64) -> Assembly {
        let c = Arc::new(crate::fields::ConstScalar(k));
        let u = self.alpha_u.conformal(c.clone());
        let s = self.alpha_s.conformal(c);
        unchecked(format!("{} x e^{k}", self.label), u, s, self.spec.clone())
    }
}

fn unchecked(label: String, alpha_u: NormForm, alpha_s: NormForm, spec: FlowSpec) -> Assembly {
    let alpha_plus = form_diff(alpha_u.form.clone(), alpha_s.form.clone());
    Assembly { label, alpha_u, alpha_s, spec, alpha_plus }
}

/// Pointwise data of an assembly.
#[derive(Clone, Copy, Debug)]
pub struct Local {
    pub a_u: J3,
    pub a_s: J3,
    pub a: J3,
    pub x: J3,
    pub da: TwoJ,
    pub lie: J3,
    pub dlie: TwoJ,
    pub reeb: J3,
    pub r_u: Jet,
    pub r_s: Jet,
    pub xr_u: f64,
    pub xr_s: f64,
    pub xr_bracket: J3,
}

/// Evaluate the jets an assembly needs at one point.
pub fn local(asm: &Assembly, p: [f64; 3]) -> Local {
    let calc = Calculus::new(asm.model());
    let s = Jet::seed(p, 2);
    let a_u = asm.alpha_u.form.jet(&s);
    let a_s = asm.alpha_s.form.jet(&s);
    let a = jet::sub3(&a_u, &a_s);
    let x = asm.spec.vector_jet(&s);
    let da = calc.d(&a);
    let lie = calc.lie(&x, &a);
    let dlie = calc.d(&lie);
    let reeb = reeb_jet(&calc, &a);
    let fd = asm.spec.model.frame_data();
    let eu = jet::constant3([fd.e_u.x, fd.e_u.y, fd.e_u.z]);
    let es = jet::constant3([fd.e_s.x, fd.e_s.y, fd.e_s.z]);
    let rate = |form: &J3, e: &J3| {
        let l = calc.lie(&x, form);
        jet::dot(&l, e) / jet::dot(form, e)
    };
    let r_u = rate(&a_u, &eu);
    let r_s = rate(&a_s, &es);
    let xr_u = calc.deriv(&x, &r_u).v;
    let xr_s = calc.deriv(&x, &r_s).v;
    let xr_bracket = calc.bracket(&x, &reeb);
    Local { a_u, a_s, a, x, da, lie, dlie, reeb, r_u, r_s, xr_u, xr_s, xr_bracket }
}

/// Build and validate an assembly.
pub fn assemble(label: &str, alpha_u: NormForm, alpha_s: NormForm, spec: FlowSpec, sample: &[ModelPoint], tol: &ContactTolerances) -> Result<Assembly> {
    if alpha_u.role != Role::Unstable || alpha_s.role != Role::Stable {
        return Err(LabError::Convention("assembly takes (unstable, stable) norm forms".into()));
    }
    if alpha_u.model != spec.model || alpha_s.model != spec.model {
        return Err(LabError::Config("norm forms and flow live on different models".into()));
    }
    alpha_u.validate(sample).map_err(|e| LabError::Convention(format!("alpha_u: {e}")))?;
    alpha_s.validate(sample).map_err(|e| LabError::Convention(format!("alpha_s: {e}")))?;
    let asm = unchecked(label.to_string(), alpha_u, alpha_s, spec);
    let fd = asm.model().frame_data();
    let bad: Vec<String> = sample
        .par_iter()
        .filter_map(|p| {
            let c = p.coords;
            let su = asm.alpha_u.on_direction(c);
            let ss = asm.alpha_s.on_direction(c);
            if !(su * ss > 0.0) {
                return Some(format!("alpha_s ^ alpha_u is negatively oriented at {c:?}"));
            }
            let l = local(&asm, c);
            let xv = Vector3::from(jet::values(&l.x));
            let av = Vector3::from(jet::values(&l.a));
            if av.dot(&xv).abs() > 1e-9 * av.norm() * xv.norm() {
                return Some(format!("alpha_+(X) does not vanish at {c:?}"));
            }
            let dens = wedge12(&l.a, &l.da).v;
            let scale = norm1(&l.a) * norm2(&l.da);
            if !(dens > tol.contact * scale) {
                return Some(format!("alpha_+ is not a positive contact form at {c:?} (density {dens:.3e})"));
            }
            // i_X (alpha_+ ^ d alpha_+) = (r_u - r_s) alpha_s ^ alpha_u on (e_s, e_u)
            let lhs = dens * Matrix3::from_columns(&[xv, fd.e_s, fd.e_u]).determinant();
            let rhs = (l.r_u.v - l.r_s.v) * ss * su;
            if (lhs - rhs).abs() > 1e-6 * rhs.abs().max(1.0) {
                return Some(format!("contact identity fails at {c:?}: {lhs:.6e} vs {rhs:.6e}"));
            }
            None
        })
        .collect();
    if let Some(msg) = bad.into_iter().next() {
        return Err(if msg.contains("oriented") { LabError::Convention(msg) } else { LabError::Degenerate(msg) });
    }
    Ok(asm)
}

/// Orientation-normalized `det(u, v, w)`.
fn ndet(u: &J3, v: &J3, w: &J3) -> f64 {
    det3(u, v, w).v / (norm1(u) * norm1(v) * norm1(w)).max(1e-300)
}

fn neg(v: &J3) -> J3 {
    v.map(|j| -j)
}

/// Margins of the eight equivalent conditions at one point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampleVerdict {
    pub index: usize,
    pub point: [f64; 3],
    pub margins: [f64; 8],
    pub truth: [Option<bool>; 8],
    /// The three Reeb-field conditions.
    pub reeb: [Option<bool>; 3],
    pub reeb_margins: [f64; 3],
    /// `+1`/`-1` agreement of the two orientation triples.
    pub orientation_agree: bool,
    pub reebquad: f64,
    pub adapted: bool,
    pub r_u: f64,
    pub r_s: f64,
}

impl SampleVerdict {
    pub fn indeterminate(&self) -> bool {
        self.truth.iter().any(|t| t.is_none()) || self.reeb.iter().any(|t| t.is_none())
    }

    /// The shared verdict of all eleven booleans, if they agree.
    pub fn unanimous(&self) -> Option<bool> {
        if self.indeterminate() {
            return None;
        }
        let first = self.truth[0]?;
        let all = self.truth.iter().chain(self.reeb.iter()).all(|t| *t == Some(first));
        if all {
            Some(first)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Consensus {
    AllTrue,
    AllFalse,
    /// Unanimous at every sample, but true on part of the sample and false elsewhere.
    Mixed,
    /// Some sample has disagreeing booleans.
    Disagreement,
    Empty,
}

#[derive(Clone, Debug, Serialize)]
pub struct StradReport {
    pub label: String,
    pub consensus: Consensus,
    pub n_samples: usize,
    pub n_true: usize,
    pub n_false: usize,
    pub n_indeterminate: usize,
    pub n_disagree: usize,
    pub n_not_adapted: usize,
    pub n_orientation_mismatch: usize,
    pub min_margins: [f64; 8],
    pub max_reebquad: f64,
    pub samples: Vec<SampleVerdict>,
}

impl StradReport {
    pub fn indeterminate_fraction(&self) -> f64 {
        self.n_indeterminate as f64 / self.n_samples.max(1) as f64
    }

    pub fn is_true(&self) -> bool {
        self.consensus == Consensus::AllTrue
    }
}

/// Evaluate the eight conditions and the three characterization conditions at one point.
pub fn sample_verdict(asm: &Assembly, index: usize, p: [f64; 3], tol: &ContactTolerances) -> SampleVerdict {
    let calc = Calculus::new(asm.model());
    let l = local(asm, p);
    let r = &l.reeb;
    let x = &l.x;
    // (1) span(X, R) negative contact, through a form annihilating it
    let b1 = jet::cross3(x, r);
    let db1 = calc.d(&b1);
    let m1 = -wedge12(&b1, &db1).v / (norm1(&b1) * norm2(&db1)).max(1e-300);
    // (2) together with alpha_+ positive contact
    let m_plus = wedge12(&l.a, &l.da).v / (norm1(&l.a) * norm2(&l.da)).max(1e-300);
    let m2 = m1.min(m_plus);
    // (3) L_X alpha_+ negative contact
    let m3 = -wedge12(&l.lie, &l.dlie).v / (norm1(&l.lie) * norm2(&l.dlie)).max(1e-300);
    // (4) rates of the norms r_u alpha_u and -r_s alpha_s, via their Lie derivatives
    let fd = asm.model().frame_data();
    let eu = jet::constant3([fd.e_u.x, fd.e_u.y, fd.e_u.z]);
    let es = jet::constant3([fd.e_s.x, fd.e_s.y, fd.e_s.z]);
    let scale_r = l.r_u.v.abs() + l.r_s.v.abs();
    let pu = jet::scale3(&l.a_u, l.r_u);
    let ps = jet::scale3(&l.a_s, -l.r_s);
    let rate_pu = jet::dot(&calc.lie(x, &pu), &eu).v / jet::dot(&pu, &eu).v;
    let rate_ps = jet::dot(&calc.lie(x, &ps), &es).v / jet::dot(&ps, &es).v;
    let m4 = (rate_pu - rate_ps) / scale_r;
    // (5) (X, [R, X]) co-oriented in ker alpha_+: d(L_X alpha_+)(R, X) < 0
    let x0 = x.map(|j| j.with_order(0));
    let r0 = r.map(|j| j.with_order(0));
    let m5 = -pair2(&l.dlie, &r0, &x0).v / (norm2(&l.dlie) * norm1(r) * norm1(x)).max(1e-300);
    // (6) (R, [X, R], X) oriented
    let xr = &l.xr_bracket;
    let rx = neg(xr);
    let m6 = ndet(&r0, xr, &x0);
    // (7) L_X alpha_+([R, X]) > 0
    let m7 = jet::dot(&l.lie.map(|j| j.with_order(0)), &rx).v / (norm1(&l.lie) * norm1(&rx)).max(1e-300);
    // (8) r_u + X ln r_u > r_s + X ln(-r_s)
    let m8 = ((l.r_u.v + l.xr_u / l.r_u.v) - (l.r_s.v + l.xr_s / l.r_s.v)) / scale_r;
    let margins = [m1, m2, m3, m4, m5, m6, m7, m8];
    let decide = |m: f64| if m.abs() < tol.margin || !m.is_finite() { None } else { Some(m > 0.0) };
    let truth = margins.map(decide);

    // residual L_X alpha_+ (R) = 0
    let reebquad = jet::dot(&l.lie, &r.map(|j| j.with_order(1))).v.abs() / (norm1(&l.lie) * norm1(r)).max(1e-300);
    // characterization conditions
    let ta2 = m3;
    let ta3 = if reebquad <= tol.reebquad { m1 } else { -reebquad };
    let ta4 = ndet(&x0, &rx, &r0);
    let reeb_margins = [ta2, ta3, ta4];
    let reeb = reeb_margins.map(decide);
    let orientation_agree = m6.signum() == ta4.signum();
    SampleVerdict {
        index,
        point: p,
        margins,
        truth,
        reeb,
        reeb_margins,
        orientation_agree,
        reebquad,
        adapted: l.r_u.v > 0.0 && l.r_s.v < 0.0,
        r_u: l.r_u.v,
        r_s: l.r_s.v,
    }
}

/// Evaluate the predicates over a sample.
pub fn strad_predicates(asm: &Assembly, sample: &[ModelPoint], tol: &ContactTolerances) -> StradReport {
    let samples: Vec<SampleVerdict> =
        sample.par_iter().enumerate().map(|(i, p)| sample_verdict(asm, i, p.coords, tol)).collect();
    summarize(&asm.label, samples)
}

pub fn summarize(label: &str, samples: Vec<SampleVerdict>) -> StradReport {
    let mut n_true = 0;
    let mut n_false = 0;
    let mut n_ind = 0;
    let mut n_dis = 0;
    let mut n_na = 0;
    let mut n_or = 0;
    let mut min_margins = [f64::INFINITY; 8];
    let mut max_rq: f64 = 0.0;
    for s in &samples {
        for k in 0..8 {
            min_margins[k] = min_margins[k].min(s.margins[k]);
        }
        max_rq = max_rq.max(s.reebquad);
        if !s.adapted {
            n_na += 1;
        }
        if !s.orientation_agree {
            n_or += 1;
        }
        if s.indeterminate() {
            n_ind += 1;
            continue;
        }
        match s.unanimous() {
            Some(true) => n_true += 1,
            Some(false) => n_false += 1,
            None => n_dis += 1,
        }
    }
    let consensus = if samples.is_empty() || n_true + n_false + n_dis == 0 {
        Consensus::Empty
    } else if n_dis > 0 {
        Consensus::Disagreement
    } else if n_false == 0 {
        Consensus::AllTrue
    } else if n_true == 0 {
        Consensus::AllFalse
    } else {
        Consensus::Mixed
    };
    StradReport {
        label: label.to_string(),
        consensus,
        n_samples: samples.len(),
        n_true,
        n_false,
        n_indeterminate: n_ind,
        n_disagree: n_dis,
        n_not_adapted: n_na,
        n_orientation_mismatch: n_or,
        min_margins,
        max_reebquad: max_rq,
        samples,
    }
}

/// Largest normalized `|L_X alpha_+ (R)|` over the sample.
pub fn reeb_quadrant_check(asm: &Assembly, sample: &[ModelPoint]) -> f64 {
    sample
        .par_iter()
        .map(|p| {
            let l = local(asm, p.coords);
            jet::dot(&l.lie, &l.reeb.map(|j| j.with_order(1))).v.abs() / (norm1(&l.lie) * norm1(&l.reeb)).max(1e-300)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// The three Reeb-field conditions, aggregated over a sample.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReebReport {
    pub conditions: [Option<bool>; 3],
    pub min_margins: [f64; 3],
    pub agrees_with_strad: bool,
}

pub fn reeb_conditions(report: &StradReport) -> ReebReport {
    let mut conds: [Option<bool>; 3] = [None; 3];
    let mut min_margins = [f64::INFINITY; 3];
    let mut agree = true;
    for k in 0..3 {
        let det: Vec<bool> = report.samples.iter().filter_map(|s| s.reeb[k]).collect();
        conds[k] = if det.is_empty() {
            None
        } else if det.iter().all(|b| *b) {
            Some(true)
        } else if det.iter().all(|b| !*b) {
            Some(false)
        } else {
            None
        };
        for s in &report.samples {
            min_margins[k] = min_margins[k].min(s.reeb_margins[k]);
        }
    }
    for s in &report.samples {
        if s.indeterminate() {
            continue;
        }
        if s.reeb.iter().any(|t| *t != s.truth[0]) {
            agree = false;
        }
    }
    ReebReport { conditions: conds, min_margins, agrees_with_strad: agree }
}

/// Synchronize `alpha_u` after reparametrizing to unit stable rate, and
/// assemble the result with `alpha_s`.
pub fn construct_strongly_adapted(
    alpha_u: NormForm,
    alpha_s: NormForm,
    spec: &FlowSpec,
    params: SyncParams,
    sample: &[ModelPoint],
    tol: &ContactTolerances,
) -> Result<(Assembly, Arc<Synchronizer>, StradReport)> {
    let (sync, synced, re) = crate::sync::pipeline(alpha_u, alpha_s.clone(), spec, params, sample)?;
    let asm = assemble(&format!("synchronized T={}", params.t), synced.clone(), alpha_s, re.clone(), sample, tol)?;
    let rate = ExpansionRate::new(synced, re);
    let mut worst = f64::INFINITY;
    let mut at = [0.0; 3];
    let vals: Vec<(f64, [f64; 3])> = sample
        .par_iter()
        .map(|p| {
            let (r, xr) = rate.eval(p.coords);
            (1.0 + r + xr / r, p.coords)
        })
        .collect();
    for (m, c) in vals {
        if !(m > worst) {
            worst = m;
            at = c;
        }
    }
    if !(worst > tol.margin) {
        return Err(LabError::Precondition(format!(
            "window T = {} is too short: 1 + r_T + X ln r_T = {worst:.3e} at {at:?}; try a larger T",
            params.t
        )));
    }
    let report = strad_predicates(&asm, sample, tol);
    Ok((asm, sync, report))
}

/// Normalization of the flow used by [`bi_adapted_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BiAdaptedMode {
    /// `alpha_- = L_X alpha_+` with the assembly's own flow.
    Direct,
    /// Rescale the flow so that `L_X alpha_+ ^ alpha_+` equals `i_X` of the
    /// invariant volume.
    VolumeNormalized,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BiAdaptedResult {
    pub residual_plus: f64,
    pub residual_minus: f64,
}

/// `alpha_+(R_-)` and `alpha_-(R_+)`, normalized, maximized over the sample.
pub fn bi_adapted_check(asm: &Assembly, sample: &[ModelPoint], mode: BiAdaptedMode, tol: &ContactTolerances) -> Result<BiAdaptedResult> {
    let model = asm.model();
    let calc = Calculus::new(model);
    let x0 = asm.spec.x0();
    let vals: Vec<Result<(f64, f64)>> = sample
        .par_iter()
        .map(|p| {
            let minus = |s: &J3| -> J3 {
                let a = jet::sub3(&asm.alpha_u.form.jet(s), &asm.alpha_s.form.jet(s));
                let x = asm.spec.vector_jet(s);
                let lie = calc.lie(&x, &a);
                match mode {
                    BiAdaptedMode::Direct => lie,
                    BiAdaptedMode::VolumeNormalized => {
                        // h = (L ^ alpha_+)(e_s, e_u) / (i_{X_0} vol)(e_s, e_u)
                        let w = wedge11(&lie, &a.map(|j| j.with_order(lie[0].order)));
                        let fd = model.frame_data();
                        let es = jet::constant3([fd.e_s.x, fd.e_s.y, fd.e_s.z]);
                        let eu = jet::constant3([fd.e_u.x, fd.e_u.y, fd.e_u.z]);
                        let num = pair2(&w, &es, &eu);
                        let den = det3(&jet::constant3(x0), &es, &eu).v;
                        let h = num / den;
                        jet::scale3(&lie, h.recip())
                    }
                }
            };
            let s = Jet::seed(p.coords, 1);
            let am = eval_lifted(&s, 1, minus);
            let dam = calc.d(&am);
            let dens = wedge12(&am.map(|j| j.with_order(0)), &dam).v;
            if !(-dens > tol.contact * norm1(&am) * norm2(&dam)) {
                return Err(LabError::Precondition(format!("alpha_- is not a negative contact form at {:?}", p.coords)));
            }
            let rm = calculus::kernel_vector(&dam).map(|j| j / dens);
            let ap = asm.alpha_plus.jet(&Jet::seed(p.coords, 1));
            let rp = reeb_jet(&calc, &ap);
            let res_p = jet::dot(&ap.map(|j| j.with_order(0)), &rm).v.abs() / (norm1(&ap) * norm1(&rm));
            let am0 = am.map(|j| j.with_order(0));
            let res_m = jet::dot(&am0, &rp.map(|j| j.with_order(0))).v.abs() / (norm1(&am) * norm1(&rp));
            Ok((res_p, res_m))
        })
        .collect();
    let mut out = BiAdaptedResult { residual_plus: 0.0, residual_minus: 0.0 };
    for v in vals {
        let (p, m) = v?;
        out.residual_plus = out.residual_plus.max(p);
        out.residual_minus = out.residual_minus.max(m);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LiouvilleResult {
    pub min_density: f64,
    pub at_s: f64,
    pub at_index: usize,
}

/// Density of `d lambda ^ d lambda` for `lambda = (1-s) L_X alpha_+ + (1+s) alpha_+`
/// on `[-1,1] x M`, against `ds ^ vol`.
pub fn liouville_density(l: &Local, s: f64) -> f64 {
    let beta = l.lie;
    let a = l.a.map(|j| j.with_order(0));
    let diff = jet::sub3(&a, &beta.map(|j| j.with_order(0)));
    let mut w = [[Jet::zero(0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            w[i][j] = l.dlie[i][j] * (1.0 - s) + l.da[i][j].with_order(0) * (1.0 + s);
        }
    }
    2.0 * wedge12(&diff, &w).v
}

pub fn liouville_check(asm: &Assembly, s_grid: &[f64], sample: &[ModelPoint]) -> LiouvilleResult {
    let per: Vec<(f64, f64, usize)> = sample
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let l = local(asm, p.coords);
            let mut best = (f64::INFINITY, 0.0, i);
            for &s in s_grid {
                let d = liouville_density(&l, s) * asm.model().orientation();
                if d < best.0 {
                    best = (d, s, i);
                }
            }
            best
        })
        .collect();
    let best = per.into_iter().fold((f64::INFINITY, 0.0, 0), |a, b| if b.0 < a.0 { b } else { a });
    LiouvilleResult { min_density: best.0, at_s: best.1, at_index: best.2 }
}

/// The pullback of a norm form by the map `p -> X^{g(p)}(p)`.
pub struct PulledBack {
    pub model: Model,
    pub c: f64,
    pub g: Scalar,
    pub base: Form,
    pub x0: [f64; 3],
}

impl OneForm for PulledBack {
    fn jet(&self, q: &J3) -> J3 {
        match self.model {
            Model::Cat => eval_lifted(q, 1, |s| {
                // Phi(s) = s + c g(s) X_0 in the lift
                let g = self.g.jet(s);
                let phi: J3 = [0, 1, 2].map(|k| if self.x0[k] == 0.0 { s[k] } else { s[k] + g * (self.c * self.x0[k]) });
                let a = self.base.jet(&phi);
                // (Phi^* a)_j = sum_i a_i(Phi) d_j Phi^i
                [0, 1, 2].map(|j| {
                    let mut acc = Jet::zero(jet::MAX_ORDER);
                    for i in 0..3 {
                        acc = acc + a[i] * phi[i].partial(j);
                    }
                    acc
                })
            }),
            Model::Sl2 => {
                let t = self.g.value(Jet::point(q)) * self.c;
                let a = self.base.jet(q);
                // covector composed with exp(-t ad_X) on the frame
                let m = crate::flow::sl2_pushforward_matrix(1.0, t);
                [0, 1, 2].map(|j| {
                    let mut acc = Jet::zero(jet::MAX_ORDER);
                    for i in 0..3 {
                        if m[(i, j)] != 0.0 {
                            acc = acc + a[i] * m[(i, j)];
                        }
                    }
                    acc
                })
            }
        }
    }
}

/// Pull the assembly back along the time-`g` map and re-run the predicates.
pub fn pullback_probe(asm: &Assembly, g: Scalar, g_bound: f64, sample: &[ModelPoint], tol: &ContactTolerances) -> Result<(Assembly, StradReport)> {
    let c = asm.spec.constant_speed().ok_or_else(|| LabError::Unsupported("pullback probe needs a constant-speed flow".into()))?;
    let model = asm.model();
    for p in sample {
        let gv = g.value(p.coords);
        if !(gv.abs() <= g_bound) {
            return Err(LabError::Precondition(format!("|g| exceeds {g_bound} at {:?}", p.coords)));
        }
        let j = g.jet(&Jet::seed(p.coords, 1));
        let jac = 1.0 + c * (0..3).map(|k| asm.spec.x0()[k] * j.g[k]).sum::<f64>();
        if !(jac > 0.0) {
            return Err(LabError::Precondition(format!(
                "the time-g map is not a diffeomorphism: 1 + X g = {jac:.3e} at {:?}",
                p.coords
            )));
        }
        if model == Model::Sl2 {
            let j = g.jet(&Jet::seed(p.coords, 1));
            if j.g.iter().any(|d| *d != 0.0) {
                return Err(LabError::Unsupported("pullback probe on the frame model needs constant g".into()));
            }
        }
    }
    let pb = |nf: &NormForm| -> NormForm {
        NormForm::new(
            model,
            nf.role,
            Arc::new(PulledBack { model, c, g: g.clone(), base: nf.form.clone(), x0: asm.spec.x0() }),
        )
    };
    let out = assemble(&format!("{} pulled back", asm.label), pb(&asm.alpha_u), pb(&asm.alpha_s), asm.spec.clone(), sample, tol)?;
    let rep = strad_predicates(&out, sample, tol);
    Ok((out, rep))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RigidityResult {
    /// Largest normalized `|L_X alpha_+ (R_bar)|`.
    pub max_residual: f64,
    /// Largest deviation between `R_bar` and the Reeb field of `e^h alpha_+`.
    pub reeb_mismatch: f64,
}

/// Compare `span(X, R)` with `span(X, R_bar)` for `R_bar = e^-h R + X_h`.
pub fn rigidity_probe(asm: &Assembly, h: Scalar, sample: &[ModelPoint]) -> Result<RigidityResult> {
    let model = asm.model();
    let calc = Calculus::new(model);
    let vals: Vec<Result<(f64, f64)>> = sample
        .par_iter()
        .map(|p| {
            let l = local(asm, p.coords);
            let s = Jet::seed(p.coords, 1);
            let hj = h.jet(&s);
            let dh = calc.grad(&hj).map(|j| j.v);
            let eh = (-hj.v).exp();
            let x = Vector3::from(jet::values(&l.x));
            let a = Vector3::from(jet::values(&l.a));
            let w = x.cross(&a);
            let da = |u: &Vector3<f64>, v: &Vector3<f64>| -> f64 {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        acc += l.da[i][j].v * u[i] * v[j];
                    }
                }
                acc
            };
            // i_{X_h} d alpha_+ = e^-h dh on the basis (X, w) of ker alpha_+
            let m = Matrix2::new(da(&x, &x), da(&w, &x), da(&x, &w), da(&w, &w));
            let dhv = Vector3::from(dh);
            let rhs = Vector2::new(eh * dhv.dot(&x), eh * dhv.dot(&w));
            let coef = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| LabError::Degenerate(format!("Moser system is singular at {:?}", p.coords)))?;
            let xh = x * coef.x + w * coef.y;
            let r = Vector3::from(jet::values(&l.reeb));
            let rbar = r * eh + xh;
            let lie = Vector3::from(jet::values(&l.lie));
            let res = lie.dot(&rbar).abs() / (lie.norm() * rbar.norm());
            // the Reeb field of e^h alpha_+
            let scaled = crate::fields::ConformalForm { log_factor: h.clone(), base: asm.alpha_plus.clone() };
            let rs = calculus::reeb_solve(model, &scaled, p.coords)?;
            let mis = (rs - rbar).norm() / rs.norm();
            Ok((res, mis))
        })
        .collect();
    let mut out = RigidityResult { max_residual: 0.0, reeb_mismatch: 0.0 };
    for v in vals {
        let (a, b) = v?;
        out.max_residual = out.max_residual.max(a);
        out.reeb_mismatch = out.reeb_mismatch.max(b);
    }
    Ok(out)
}
